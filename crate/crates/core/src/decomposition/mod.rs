//! Split of the measured deviation `χ − χ_nom` into contouring (`δc`), link
//! (`δl`), motion (`δm`), thermal (`δtd`) and dynamic (`δd`) contributions.
//!
//! The reference (low-feed) session is processed first: it yields the
//! identified link errors and the motion polynomials, which every other
//! session then reuses.

mod export;
mod polynomial;

pub use export::{
    read_artifacts, write_artifacts, ContributionKind, DecompositionSummary, StoredDecomposition, SUMMARY_FILE,
};
pub use polynomial::{
    fit_motion_polynomials, motion_contribution, normalized_time, MotionPolynomialModel, DEFAULT_DEGREE,
};

use nalgebra::Vector3;

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result, StageExt};
use crate::kinematics::{
    self, identify_link_errors, JointPose, LinkErrorVector, LinkIdentification, MachineGeometry,
};
use crate::signal_io::{self, DelayMethod, SensorCalibration, SignalSet};

/// Processing options shared by every session of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionConfig {
    pub degree: usize,
    /// Huber reweighting of the motion fit.
    pub robust_motion_fit: bool,
    pub max_condition: f64,
    /// Half-width of the delay search (s).
    pub delay_window: f64,
    pub delay_method: DelayMethod,
    pub analysis_rate: f64,
    /// Restrict the analysis to the span over which the controller moves.
    pub trim_to_motion: bool,
    pub calibration: SensorCalibration,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            degree: DEFAULT_DEGREE,
            robust_motion_fit: false,
            max_condition: kinematics::DEFAULT_MAX_CONDITION,
            delay_window: 0.05,
            delay_method: DelayMethod::SquaredDifference,
            analysis_rate: signal_io::DEFAULT_ANALYSIS_RATE_HZ,
            trim_to_motion: true,
            calibration: SensorCalibration::default(),
        }
    }
}

/// Raw streams of one test.
#[derive(Debug, Clone)]
pub struct SessionSignals {
    pub id: String,
    /// Programmed feed rate (mm/min).
    pub feed_rate: f64,
    pub controller: SignalSet,
    pub encoder: SignalSet,
    pub sensor: SignalSet,
}

/// The three deviation matrices of a test on a common, synchronised clock.
#[derive(Debug, Clone)]
pub struct PreparedSession {
    pub id: String,
    pub feed_rate: f64,
    /// Estimated recording delay of encoder and sensor streams (s).
    pub delay: f64,
    pub sample_rate: f64,
    pub start_time: f64,
    pub encoder_poses: Vec<JointPose>,
    pub chi: DeviationMatrix,
    pub chi_nom: DeviationMatrix,
    pub chi_enc: DeviationMatrix,
}

impl PreparedSession {
    pub fn len(&self) -> usize {
        self.chi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }
}

/// Products of the reference session reused by every other session.
#[derive(Debug, Clone)]
pub struct ReferenceArtifacts {
    pub dq: LinkErrorVector,
    pub model: MotionPolynomialModel,
    pub identification: LinkIdentification,
    pub reference_id: String,
}

/// The five contribution matrices of one test.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub id: String,
    pub feed_rate: f64,
    pub delay: f64,
    pub sample_rate: f64,
    pub start_time: f64,
    pub is_reference: bool,
    pub chi: DeviationMatrix,
    pub chi_nom: DeviationMatrix,
    pub chi_enc: DeviationMatrix,
    pub contouring: DeviationMatrix,
    pub link: DeviationMatrix,
    pub motion: DeviationMatrix,
    pub thermal: DeviationMatrix,
    pub dynamic: DeviationMatrix,
    pub dq: LinkErrorVector,
    pub model: MotionPolynomialModel,
    /// `td` (mm).
    pub thermal_offset: Vector3<f64>,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.chi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    /// Contributions in the order δc, δl, δm, δtd, δd.
    pub fn contributions(&self) -> [&DeviationMatrix; 5] {
        [&self.contouring, &self.link, &self.motion, &self.thermal, &self.dynamic]
    }

    /// `δqs = δl + δm + δtd`.
    pub fn quasi_static(&self) -> DeviationMatrix {
        &(&self.link + &self.motion) + &self.thermal
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.start_time + k as f64 / self.sample_rate)
            .collect()
    }

    /// Largest entry of `δc + δl + δm + δtd + δd − (χ − χ_nom)` (mm).
    pub fn reconstruction_error(&self) -> f64 {
        let total = &self.chi - &self.chi_nom;
        let sum = self
            .contributions()
            .iter()
            .skip(1)
            .fold(self.contouring.clone(), |acc, m| &acc + m);
        sum.max_abs_diff(&total)
    }
}

/// `χ − χ_nom`.
pub fn total_error(chi: &DeviationMatrix, chi_nom: &DeviationMatrix) -> Result<DeviationMatrix> {
    chi.checked_sub(chi_nom)
}

/// `δc = χ_enc − χ_nom`.
pub fn contouring_errors(chi_enc: &DeviationMatrix, chi_nom: &DeviationMatrix) -> Result<DeviationMatrix> {
    chi_enc.checked_sub(chi_nom)
}

/// `δl`: row `k` is `J(pose_k)·dq`.
pub fn link_contribution(
    poses: &[JointPose],
    dq: &LinkErrorVector,
    geom: &MachineGeometry,
) -> Result<DeviationMatrix> {
    dq.validate()?;
    let v = dq.as_vector();
    poses
        .iter()
        .map(|p| kinematics::link_jacobian(p, geom).map(|j| j * v))
        .collect::<Result<Vec<_>>>()
        .and_then(DeviationMatrix::from_rows)
}

/// `td` as the column means of `χ − χ_enc − δl − δm`, and `δtd` repeating it.
pub fn thermal_offset(
    chi: &DeviationMatrix,
    chi_enc: &DeviationMatrix,
    link: &DeviationMatrix,
    motion: &DeviationMatrix,
) -> Result<(Vector3<f64>, DeviationMatrix)> {
    let rest = chi.checked_sub(chi_enc)?.checked_sub(link)?.checked_sub(motion)?;
    let td = rest.mean();
    Ok((td, DeviationMatrix::repeat(td, rest.nrows())))
}

/// `δd = χ − χ_enc − δl − δm − δtd`.
pub fn dynamic_errors(
    chi: &DeviationMatrix,
    chi_enc: &DeviationMatrix,
    link: &DeviationMatrix,
    motion: &DeviationMatrix,
    thermal: &DeviationMatrix,
) -> Result<DeviationMatrix> {
    chi.checked_sub(chi_enc)?
        .checked_sub(link)?
        .checked_sub(motion)?
        .checked_sub(thermal)
}

/// Resamples, synchronises and trims the three streams of a test and builds
/// `χ`, `χ_nom` and `χ_enc`.
pub fn prepare_session(
    signals: &SessionSignals,
    geom: &MachineGeometry,
    config: &DecompositionConfig,
) -> Result<PreparedSession> {
    let rate = config.analysis_rate;
    let controller = signal_io::resample(&signals.controller, rate).stage("resample")?;
    let encoder = signal_io::resample(&signals.encoder, rate).stage("resample")?;
    let sensor = signal_io::resample(&signals.sensor, rate).stage("resample")?;

    let delay = signal_io::estimate_delay(&controller, &encoder, config.delay_window, config.delay_method)
        .stage("delay")?;
    let aligned = signal_io::align(&controller, &[&encoder, &sensor], delay).stage("align")?;
    let (controller, encoder, sensor) = (&aligned.reference, &aligned.targets[0], &aligned.targets[1]);

    let trimmed;
    let (controller, encoder, sensor) = match config.trim_to_motion.then(|| signal_io::motion_extent(controller)).flatten() {
        Some(range) => {
            trimmed = signal_io::trim(&[controller, encoder, sensor], range).stage("trim")?;
            (&trimmed[0], &trimmed[1], &trimmed[2])
        }
        None => (controller, encoder, sensor),
    };

    let chi_nom = signal_io::build_nominal_deviation(controller, geom).stage("nominal")?;
    let chi_enc = signal_io::build_encoder_deviation(encoder, geom).stage("encoder")?;
    let encoder_poses = encoder.joint_poses().stage("encoder")?;
    let chi = signal_io::project_sensor_readings(sensor, &config.calibration).stage("sensor")?;

    Ok(PreparedSession {
        id: signals.id.clone(),
        feed_rate: signals.feed_rate,
        delay: aligned.shift as f64 / rate,
        sample_rate: rate,
        start_time: controller.start_time(),
        encoder_poses,
        chi,
        chi_nom,
        chi_enc,
    })
}

/// Processes the reference session: identifies `dq` on `χ − χ_enc`, fits the
/// motion polynomials with `td` forced to zero, and leaves the remainder as
/// `δd`.
pub fn decompose_reference(
    session: &PreparedSession,
    geom: &MachineGeometry,
    config: &DecompositionConfig,
) -> Result<(Decomposition, ReferenceArtifacts)> {
    let n = session.len();
    let min = 2 * (config.degree + 1);
    if n < min {
        return Err(Error::invalid(format!(
            "reference session `{}` has {n} samples, at least {min} are needed for degree {}",
            session.id, config.degree
        )))
        .stage("motion");
    }

    let contouring = contouring_errors(&session.chi_enc, &session.chi_nom).stage("contouring")?;
    let residual = session.chi.checked_sub(&session.chi_enc).stage("link")?;
    let identification =
        identify_link_errors(&session.encoder_poses, &residual, geom, config.max_condition).stage("link")?;
    let dq = identification.dq;
    let link = link_contribution(&session.encoder_poses, &dq, geom).stage("link")?;

    let remaining = residual.checked_sub(&link).stage("motion")?;
    let model = fit_motion_polynomials(&remaining, config.degree, config.robust_motion_fit).stage("motion")?;
    let motion = motion_contribution(&model, n).stage("motion")?;

    let thermal = DeviationMatrix::zeros(n);
    let dynamic = dynamic_errors(&session.chi, &session.chi_enc, &link, &motion, &thermal).stage("dynamic")?;

    let artifacts = ReferenceArtifacts {
        dq,
        model: model.clone(),
        identification,
        reference_id: session.id.clone(),
    };
    let decomposition = assemble(session, true, contouring, link, motion, thermal, dynamic, dq, model, Vector3::zeros());
    Ok((decomposition, artifacts))
}

/// Processes any session with the reference products.
pub fn decompose_session(
    session: &PreparedSession,
    reference: &ReferenceArtifacts,
    geom: &MachineGeometry,
) -> Result<Decomposition> {
    let n = session.len();
    let contouring = contouring_errors(&session.chi_enc, &session.chi_nom).stage("contouring")?;
    let link = link_contribution(&session.encoder_poses, &reference.dq, geom).stage("link")?;
    let motion = motion_contribution(&reference.model, n).stage("motion")?;
    let (td, thermal) = thermal_offset(&session.chi, &session.chi_enc, &link, &motion).stage("thermal")?;
    let dynamic = dynamic_errors(&session.chi, &session.chi_enc, &link, &motion, &thermal).stage("dynamic")?;
    Ok(assemble(
        session,
        false,
        contouring,
        link,
        motion,
        thermal,
        dynamic,
        reference.dq,
        reference.model.clone(),
        td,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    session: &PreparedSession,
    is_reference: bool,
    contouring: DeviationMatrix,
    link: DeviationMatrix,
    motion: DeviationMatrix,
    thermal: DeviationMatrix,
    dynamic: DeviationMatrix,
    dq: LinkErrorVector,
    model: MotionPolynomialModel,
    thermal_offset: Vector3<f64>,
) -> Decomposition {
    Decomposition {
        id: session.id.clone(),
        feed_rate: session.feed_rate,
        delay: session.delay,
        sample_rate: session.sample_rate,
        start_time: session.start_time,
        is_reference,
        chi: session.chi.clone(),
        chi_nom: session.chi_nom.clone(),
        chi_enc: session.chi_enc.clone(),
        contouring,
        link,
        motion,
        thermal,
        dynamic,
        dq,
        model,
        thermal_offset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contouring_hand_case() {
        let enc = DeviationMatrix::from_arrays(&[[1.0, 2.0, 3.0]]).unwrap();
        let nom = DeviationMatrix::from_arrays(&[[0.0, 2.0, 1.0]]).unwrap();
        let dc = contouring_errors(&enc, &nom).unwrap();
        assert_eq!(dc.row(0), Vector3::new(1.0, 0.0, 2.0));
    }

    #[test]
    fn thermal_recovers_constant() {
        let n = 50;
        let enc = DeviationMatrix::zeros(n);
        let td = Vector3::new(1.0e-3, -2.0e-3, 0.5e-3);
        let base: DeviationMatrix = (0..n)
            .map(|k| Vector3::new((k as f64).sin(), 0.0, 0.0) * 1e-3)
            .collect();
        let base = &base - &DeviationMatrix::repeat(base.mean(), n);
        let chi = &base + &DeviationMatrix::repeat(td, n);
        let (got, rep) = thermal_offset(&chi, &enc, &DeviationMatrix::zeros(n), &base).unwrap();
        assert!((got - td).amax() < 1e-15);
        assert_eq!(rep.nrows(), n);
    }

    #[test]
    fn dynamic_zero_when_modelled_exactly() {
        let n = 5;
        let link = DeviationMatrix::repeat(Vector3::new(1.0, 0.0, 0.0), n);
        let motion = DeviationMatrix::repeat(Vector3::new(0.0, 2.0, 0.0), n);
        let thermal = DeviationMatrix::repeat(Vector3::new(0.0, 0.0, 3.0), n);
        let chi = &(&link + &motion) + &thermal;
        let d = dynamic_errors(&chi, &DeviationMatrix::zeros(n), &link, &motion, &thermal).unwrap();
        assert!(d.rows().iter().all(|r| *r == Vector3::zeros()));
    }

    #[test]
    fn zero_dq_gives_zero_link() {
        let g = MachineGeometry::default();
        let poses = vec![JointPose::from_degrees(1.0, 2.0, 3.0, 30.0, 60.0).unwrap(); 3];
        let dl = link_contribution(&poses, &LinkErrorVector::zero(), &g).unwrap();
        assert!(dl.rows().iter().all(|r| *r == Vector3::zeros()));
    }
}
