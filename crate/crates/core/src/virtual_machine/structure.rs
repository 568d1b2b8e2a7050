use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::kinematics::{self, JointPose, LinkErrorVector, MachineGeometry};
use crate::metrics;
use crate::signal_io::{ChannelUnit, SignalSet};
use crate::{MM_PER_UM, UM_PER_MM};

/// Shortest admissible motion-error period (mm for linear axes, degrees for
/// rotary axes).
pub const MIN_PERIOD_LINEAR: f64 = 50.0;
pub const MIN_PERIOD_ROTARY: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
    A,
    C,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_rotary(self) -> bool {
        matches!(self, Axis::A | Axis::C)
    }

    /// Axis position in mm or degrees.
    fn position(self, pose: &JointPose) -> f64 {
        let v = pose.as_array()[self.index()];
        if self.is_rotary() {
            v.to_degrees()
        } else {
            v
        }
    }
}

/// `amplitude·sin(2π·q/period + phase)` along `direction`, `q` the position
/// of `axis` (mm or degrees).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionErrorTerm {
    pub axis: Axis,
    /// Machine-frame direction of the deviation; normalised on use.
    pub direction: [f64; 3],
    pub amplitude_um: f64,
    pub period: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

/// Error sources of the simulated machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StructureParams {
    /// True link errors, angles in µrad and `y_C` in µm.
    pub link_errors_urad_um: [f64; 8],
    pub motion_errors: Vec<MotionErrorTerm>,
    /// Constant offset of this session from the reference thermal state (µm).
    pub thermal_drift_um: [f64; 3],
    /// Compliance per axis (µm per m/s²; for A and C per 1000 °/s²): the TCP
    /// deflects by `−c·a` in the machine frame under axis acceleration `a`.
    pub compliance_um_per_m_s2: [[f64; 3]; 5],
    pub noise_sigma_um: f64,
    /// Moving-average window applied before differentiating encoder
    /// positions (s).
    pub acceleration_window_s: f64,
}

impl Default for StructureParams {
    /// The null machine: no error source, no noise.
    fn default() -> Self {
        Self {
            link_errors_urad_um: [0.0; 8],
            motion_errors: Vec::new(),
            thermal_drift_um: [0.0; 3],
            compliance_um_per_m_s2: [[0.0; 3]; 5],
            noise_sigma_um: 0.0,
            acceleration_window_s: metrics::DEFAULT_SMOOTHING_WINDOW,
        }
    }
}

impl StructureParams {
    /// A machine with error magnitudes of the order reported for a
    /// mid-size five-axis centre.
    pub fn typical() -> Self {
        let term = |axis, direction, amplitude_um, period, phase_deg| MotionErrorTerm {
            axis,
            direction,
            amplitude_um,
            period,
            phase_deg,
        };
        Self {
            link_errors_urad_um: [90.0, -60.0, 75.0, 120.0, -105.0, 60.0, -90.0, 45.0],
            motion_errors: vec![
                term(Axis::X, [0.0, 1.0, 0.3], 1.5, 120.0, 20.0),
                term(Axis::Y, [1.0, 0.0, 0.5], 1.5, 150.0, -40.0),
                term(Axis::Z, [0.2, 0.4, 1.0], 1.5, 100.0, 70.0),
                term(Axis::A, [0.0, 0.6, 1.0], 2.0, 90.0, 10.0),
                term(Axis::C, [1.0, 0.7, 0.0], 2.0, 120.0, -60.0),
            ],
            thermal_drift_um: [0.0; 3],
            compliance_um_per_m_s2: [
                [0.75, 0.0, 0.3],
                [0.0, 0.9, 0.375],
                [0.225, 0.0, 1.05],
                [0.0, 0.45, 0.525],
                [0.375, 0.3, 0.0],
            ],
            noise_sigma_um: 0.4,
            acceleration_window_s: metrics::DEFAULT_SMOOTHING_WINDOW,
        }
    }

    pub fn link_errors(&self) -> LinkErrorVector {
        let mut v = self.link_errors_urad_um.map(|x| x * 1e-6);
        v[7] = self.link_errors_urad_um[7] * MM_PER_UM;
        LinkErrorVector(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.link_errors().validate()?;
        if !(self.noise_sigma_um.is_finite() && self.noise_sigma_um >= 0.0) {
            return Err(Error::invalid("noise σ must be non-negative"));
        }
        if !(self.acceleration_window_s.is_finite() && self.acceleration_window_s >= 0.0) {
            return Err(Error::invalid("acceleration window must be non-negative"));
        }
        let finite = self
            .thermal_drift_um
            .iter()
            .chain(self.compliance_um_per_m_s2.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("structure parameters".into()));
        }
        for (k, t) in self.motion_errors.iter().enumerate() {
            let min = if t.axis.is_rotary() { MIN_PERIOD_ROTARY } else { MIN_PERIOD_LINEAR };
            if !(t.amplitude_um.is_finite() && t.amplitude_um >= 0.0) {
                return Err(Error::invalid(format!("motion term {k}: amplitude must be non-negative")));
            }
            if !(t.period.is_finite() && t.period >= min) {
                return Err(Error::invalid(format!(
                    "motion term {k}: period {} below the minimum of {min}",
                    t.period
                )));
            }
            if !(Vector3::from(t.direction).norm() > 0.0) || !t.phase_deg.is_finite() {
                return Err(Error::invalid(format!("motion term {k}: direction must be non-zero")));
            }
        }
        Ok(())
    }

    /// Motion error at `pose` (mm).
    pub fn motion_error(&self, pose: &JointPose) -> Vector3<f64> {
        self.motion_errors.iter().fold(Vector3::zeros(), |acc, t| {
            let q = t.axis.position(pose);
            let arg = 2.0 * std::f64::consts::PI * q / t.period + t.phase_deg.to_radians();
            acc + Vector3::from(t.direction).normalize() * (t.amplitude_um * arg.sin() * MM_PER_UM)
        })
    }
}

/// Per-sample error sources of a synthesised measurement (mm).
#[derive(Debug, Clone)]
pub struct SynthesisComponents {
    /// `dkt` at the encoder poses.
    pub encoder_nominal: DeviationMatrix,
    /// Exact-chain link effect `dkt_with_errors − dkt`.
    pub link: DeviationMatrix,
    pub motion: DeviationMatrix,
    pub thermal: DeviationMatrix,
    pub dynamic: DeviationMatrix,
    pub noise: DeviationMatrix,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    /// Sensor channels in µm, identity calibration.
    pub sensor: SignalSet,
    pub components: SynthesisComponents,
}

/// Sensor readings for the encoder trajectory: full `τ` of the erroneous
/// machine plus motion errors, drift, compliance deflection and Gaussian
/// noise drawn from a ChaCha stream seeded by `seed`.
pub fn synthesize_measurement(
    encoders: &SignalSet,
    structure: &StructureParams,
    geom: &MachineGeometry,
    seed: u64,
) -> Result<Synthesis> {
    structure.validate()?;
    geom.validate()?;
    let poses = encoders.joint_poses()?;
    let n = poses.len();
    let dq = structure.link_errors();

    let mut nominal = Vec::with_capacity(n);
    let mut link = Vec::with_capacity(n);
    for p in &poses {
        let base = kinematics::dkt(p, geom)?;
        nominal.push(base);
        link.push(kinematics::dkt_with_errors(p, geom, &dq)? - base);
    }
    let motion: Vec<Vector3<f64>> = poses.iter().map(|p| structure.motion_error(p)).collect();
    let drift = Vector3::from(structure.thermal_drift_um) * MM_PER_UM;

    let mut dynamic = vec![Vector3::zeros(); n];
    if structure.compliance_um_per_m_s2.iter().flatten().any(|g| *g != 0.0) && n >= 5 {
        let acc = metrics::axis_accelerations(encoders, structure.acceleration_window_s)?;
        for (axis, (series, gain)) in acc.iter().zip(&structure.compliance_um_per_m_s2).enumerate() {
            let gain = Vector3::from(*gain) * MM_PER_UM;
            // mm/s² → m/s²; rad/s² → 1000 °/s².
            let scale = if axis >= 3 { 1e-3 * 180.0 / std::f64::consts::PI } else { 1e-3 };
            for (d, a) in dynamic.iter_mut().zip(series) {
                *d -= gain * (a * scale);
            }
        }
    }

    let mut noise = vec![Vector3::zeros(); n];
    if structure.noise_sigma_um > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, structure.noise_sigma_um * MM_PER_UM)
            .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
        for r in noise.iter_mut() {
            *r = Vector3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }

    let mut readings: [Vec<f64>; 3] = Default::default();
    for k in 0..n {
        let tau = nominal[k] + link[k] + motion[k] + drift + dynamic[k] + noise[k];
        for (i, ch) in readings.iter_mut().enumerate() {
            ch.push(tau[i] * UM_PER_MM);
        }
    }
    let sensor = SignalSet::sensors(encoders.sample_rate(), encoders.start_time(), ChannelUnit::Micrometre, readings)?;
    Ok(Synthesis {
        sensor,
        components: SynthesisComponents {
            encoder_nominal: DeviationMatrix::from_rows(nominal)?,
            link: DeviationMatrix::from_rows(link)?,
            motion: DeviationMatrix::from_rows(motion)?,
            thermal: DeviationMatrix::repeat(drift, n),
            dynamic: DeviationMatrix::from_rows(dynamic)?,
            noise: DeviationMatrix::from_rows(noise)?,
        },
    })
}
