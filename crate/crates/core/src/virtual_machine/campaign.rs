use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::planner::plan_trajectory;
use super::program::{default_path, AxisLimits, PathPoint, TrajectoryProgram};
use super::servo::{SecondOrder, ServoParams};
use super::structure::{synthesize_measurement, StructureParams};
use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result, StageExt};
use crate::kinematics::{self, GeometryFile, LinkErrorVector, MachineGeometry};
use crate::signal_io::{self, Channel, SignalSet};
use crate::{MM_PER_UM, UM_PER_MM};

/// The six programmed feeds of the standard campaign (mm/min), a geometric
/// series of ratio 1.8.
pub const DEFAULT_FEEDS: [f64; 6] = [1000.0, 1800.0, 3240.0, 5832.0, 10498.0, 18896.0];

/// Drift added per session index in the standard campaign (µm).
pub const DEFAULT_DRIFT_STEP_UM: [f64; 3] = [0.3, -0.2, 0.25];

/// Campaign description as read from JSON. Every field has a default; the
/// default campaign is the six-feed test of a typical machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub feeds_mm_min: Vec<f64>,
    /// Index into `feeds_mm_min` of the thermal reference session.
    pub reference_index: usize,
    pub nc_cycle_s: f64,
    pub sample_rate_hz: f64,
    /// Lag of the encoder and sensor recordings behind the controller.
    pub recording_delay_s: f64,
    pub geometry: Option<GeometryFile>,
    /// Joint-space polyline (X, Y, Z mm; A, C degrees). The built-in path is
    /// used when absent.
    pub path: Option<Vec<PathPoint>>,
    pub limits: AxisLimits,
    pub servo: ServoParams,
    /// `thermal_drift_um` is replaced per session by `thermal_drift_um`
    /// below.
    pub structure: StructureParams,
    /// Per-session drift (µm); missing entries are zero. When absent,
    /// session `k` drifts by `k` times [`DEFAULT_DRIFT_STEP_UM`].
    pub thermal_drift_um: Option<Vec<[f64; 3]>>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            feeds_mm_min: DEFAULT_FEEDS.to_vec(),
            reference_index: 0,
            nc_cycle_s: 0.003,
            sample_rate_hz: signal_io::DEFAULT_ANALYSIS_RATE_HZ,
            recording_delay_s: 0.018,
            geometry: None,
            path: None,
            limits: AxisLimits::default(),
            servo: ServoParams {
                second_order: Some(SecondOrder {
                    natural_frequency_hz: [90.0, 80.0, 100.0, 70.0, 75.0],
                    damping: [0.9, 1.0, 0.85, 0.95, 1.0],
                }),
                feedforward: 1.0,
                ..ServoParams::default()
            },
            structure: StructureParams::typical(),
            thermal_drift_um: None,
        }
    }
}

impl CampaignConfig {
    /// A machine without any error source: ideal servo, no structure
    /// errors, no noise.
    pub fn null(feeds: &[f64]) -> Self {
        Self {
            feeds_mm_min: feeds.to_vec(),
            servo: ServoParams::ideal(),
            structure: StructureParams::default(),
            thermal_drift_um: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feeds_mm_min.is_empty() {
            return Err(Error::invalid("a campaign needs at least one feed rate"));
        }
        if self.feeds_mm_min.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::invalid("feed rates must be positive"));
        }
        if self.reference_index >= self.feeds_mm_min.len() {
            return Err(Error::invalid(format!(
                "reference index {} outside {} feeds",
                self.reference_index,
                self.feeds_mm_min.len()
            )));
        }
        let drift = self.thermal_drift_um.as_deref().unwrap_or_default();
        if drift.len() > self.feeds_mm_min.len() {
            return Err(Error::invalid("more drift entries than feeds"));
        }
        if drift.iter().flatten().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("thermal drift".into()));
        }
        if !(self.nc_cycle_s.is_finite() && self.nc_cycle_s > 0.0) {
            return Err(Error::invalid("NC cycle must be positive"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz * self.nc_cycle_s >= 1.0) {
            return Err(Error::invalid("sample rate must be at least the NC rate"));
        }
        if !(self.recording_delay_s.is_finite() && self.recording_delay_s >= 0.0) {
            return Err(Error::invalid("recording delay must be non-negative"));
        }
        self.geometry()?;
        self.servo.validate()?;
        self.structure.validate()?;
        if let Some(p) = &self.path {
            TrajectoryProgram::from_points(p, self.feeds_mm_min[0], &self.limits)?;
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<MachineGeometry> {
        match &self.geometry {
            Some(g) => g.clone().try_into(),
            None => Ok(MachineGeometry::default()),
        }
    }

    pub fn session_id(&self, index: usize) -> String {
        format!("F{:05.0}", self.feeds_mm_min[index])
    }

    pub fn drift_um(&self, index: usize) -> [f64; 3] {
        match &self.thermal_drift_um {
            Some(v) => v.get(index).copied().unwrap_or([0.0; 3]),
            None => DEFAULT_DRIFT_STEP_UM.map(|d| d * index as f64),
        }
    }

    fn delay_samples(&self) -> usize {
        (self.recording_delay_s * self.sample_rate_hz).round() as usize
    }

    fn session_seed(&self, index: usize) -> u64 {
        // splitmix64 finaliser so neighbouring indices get unrelated streams
        let mut z = self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn program(&self, feed: f64, geom: &MachineGeometry) -> Result<TrajectoryProgram> {
        let points = match &self.path {
            Some(p) => p.clone(),
            None => default_path(geom)?,
        };
        TrajectoryProgram::from_points(&points, feed, &self.limits)
    }
}

/// Injected contributions on the controller clock resampled to the
/// recording rate, all in mm. Rows are indexed by controller time.
///
/// Link and motion terms are stated in the identifiable gauge: the part of
/// the motion errors that a link-error fit over the reference session
/// absorbs is moved into the link term, so that `link + motion` equals the
/// physical sum exactly. Thermal drift is stated relative to the reference
/// session, whose drift is carried by the motion term.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub session: String,
    pub feed_rate: f64,
    pub sample_rate: f64,
    pub recording_delay: f64,
    pub dq_physical: LinkErrorVector,
    pub dq_identifiable: LinkErrorVector,
    pub thermal_offset: Vector3<f64>,
    pub chi_nom: DeviationMatrix,
    pub contouring: DeviationMatrix,
    pub link: DeviationMatrix,
    pub motion: DeviationMatrix,
    pub thermal: DeviationMatrix,
    /// Compliance deflection only.
    pub dynamic: DeviationMatrix,
    pub noise: DeviationMatrix,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.chi_nom.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.chi_nom.is_empty()
    }

    /// What the decomposition should report as `δd`: deflection plus the
    /// measurement noise it cannot separate from it.
    pub fn dynamic_with_noise(&self) -> DeviationMatrix {
        &self.dynamic + &self.noise
    }

    /// Contributions in `δc, δl, δm, δtd, δd` order, `δd` including noise.
    pub fn contributions(&self) -> [DeviationMatrix; 5] {
        [
            self.contouring.clone(),
            self.link.clone(),
            self.motion.clone(),
            self.thermal.clone(),
            self.dynamic_with_noise(),
        ]
    }

    /// The `n` rows starting at `start_time` on the controller clock.
    pub fn window(&self, start_time: f64, n: usize) -> Result<GroundTruth> {
        let k0 = (start_time * self.sample_rate).round();
        if k0 < 0.0 || k0 as usize + n > self.len() {
            return Err(Error::invalid(format!(
                "ground-truth window at {start_time} s with {n} rows exceeds {} rows",
                self.len()
            )));
        }
        let r = k0 as usize..k0 as usize + n;
        Ok(GroundTruth {
            chi_nom: self.chi_nom.slice(r.clone()),
            contouring: self.contouring.slice(r.clone()),
            link: self.link.slice(r.clone()),
            motion: self.motion.slice(r.clone()),
            thermal: self.thermal.slice(r.clone()),
            dynamic: self.dynamic.slice(r.clone()),
            noise: self.noise.slice(r),
            session: self.session.clone(),
            ..*self
        })
    }
}

/// One simulated test: the three recorded streams and the truth.
#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub id: String,
    pub feed_rate: f64,
    /// At the NC cycle.
    pub controller: SignalSet,
    pub encoder: SignalSet,
    pub sensor: SignalSet,
    pub truth: GroundTruth,
}

impl SimulatedSession {
    pub fn signals(&self) -> crate::decomposition::SessionSignals {
        crate::decomposition::SessionSignals {
            id: self.id.clone(),
            feed_rate: self.feed_rate,
            controller: self.controller.clone(),
            encoder: self.encoder.clone(),
            sensor: self.sensor.clone(),
        }
    }
}

struct Kinematic {
    controller: SignalSet,
    controller_fine: SignalSet,
    encoder: SignalSet,
}

fn run_axes(config: &CampaignConfig, index: usize, geom: &MachineGeometry) -> Result<Kinematic> {
    let prog = config.program(config.feeds_mm_min[index], geom).stage("plan")?;
    let controller = plan_trajectory(&prog, config.nc_cycle_s).stage("plan")?;
    let controller_fine = signal_io::resample(&controller, config.sample_rate_hz).stage("resample")?;
    let encoder = super::servo::servo_response(&controller_fine, &config.servo).stage("servo")?;
    Ok(Kinematic {
        controller,
        controller_fine,
        encoder,
    })
}

/// Rows of the controller clock that the decomposition analyses for a
/// session recorded with `delay` samples of lag.
fn analysis_window(controller_fine: &SignalSet, delay: usize) -> std::ops::Range<usize> {
    let n = controller_fine.len().saturating_sub(delay);
    let visible = controller_fine.slice(0..n);
    signal_io::motion_extent(&visible).unwrap_or(0..n)
}

/// Least-squares coefficients of the motion errors of the reference
/// session on the link Jacobian columns over its analysis window. A path
/// that cannot separate the link parameters has no identifiable gauge; the
/// physical split is kept as the truth.
fn identifiable_gauge(config: &CampaignConfig, geom: &MachineGeometry) -> Result<LinkErrorVector> {
    let structure = &config.structure;
    if structure.motion_errors.iter().all(|t| t.amplitude_um == 0.0) {
        return Ok(LinkErrorVector::zero());
    }
    let reference = run_axes(config, config.reference_index, geom)?;
    let window = analysis_window(&reference.controller_fine, config.delay_samples());
    let poses = reference.encoder.slice(window).joint_poses()?;
    let mut a = DMatrix::zeros(3 * poses.len(), 8);
    let mut b = DVector::zeros(3 * poses.len());
    for (k, p) in poses.iter().enumerate() {
        let j = kinematics::link_jacobian(p, geom)?;
        let m = structure.motion_error(p);
        for i in 0..3 {
            for c in 0..8 {
                a[(3 * k + i, c)] = j[(i, c)];
            }
            b[3 * k + i] = m[i];
        }
    }
    match crate::lsq::solve(&a, &b, f64::INFINITY) {
        Ok(sol) => Ok(LinkErrorVector(std::array::from_fn(|c| sol.x[c]))),
        Err(Error::RankDeficient { .. }) => Ok(LinkErrorVector::zero()),
        Err(e) => Err(Error::invalid(format!("gauge projection: {e}"))).stage("truth"),
    }
}

/// Simulates session `index` of the campaign. Sessions are independent and
/// may be produced in any order.
pub fn simulate_session(config: &CampaignConfig, index: usize) -> Result<SimulatedSession> {
    config.validate()?;
    let geom = config.geometry()?;
    let feed = config.feeds_mm_min[index];
    let id = config.session_id(index);

    let axes = run_axes(config, index, &geom)?;
    let mut structure = config.structure.clone();
    structure.thermal_drift_um = config.drift_um(index);
    let synth = synthesize_measurement(&axes.encoder, &structure, &geom, config.session_seed(index)).stage("synthesize")?;

    let gauge = identifiable_gauge(config, &geom)?;
    let dq_physical = structure.link_errors();
    let dq_identifiable = LinkErrorVector(std::array::from_fn(|c| dq_physical.0[c] + gauge.0[c]));

    let poses = axes.encoder.joint_poses()?;
    let mut gauge_shift = Vec::with_capacity(poses.len());
    for p in &poses {
        gauge_shift.push(kinematics::link_jacobian(p, &geom)? * gauge.as_vector());
    }
    let gauge_shift = DeviationMatrix::from_rows(gauge_shift)?;
    let ref_drift = Vector3::from(config.drift_um(config.reference_index)) * MM_PER_UM;
    let thermal_offset = Vector3::from(structure.thermal_drift_um) * MM_PER_UM - ref_drift;
    let n = poses.len();

    let chi_nom = signal_io::build_nominal_deviation(&axes.controller_fine, &geom)?;
    let c = &synth.components;
    let truth = GroundTruth {
        session: id.clone(),
        feed_rate: feed,
        sample_rate: config.sample_rate_hz,
        recording_delay: config.delay_samples() as f64 / config.sample_rate_hz,
        dq_physical,
        dq_identifiable,
        thermal_offset,
        contouring: &c.encoder_nominal - &chi_nom,
        chi_nom,
        link: &c.link + &gauge_shift,
        motion: &(&c.motion - &gauge_shift) + &DeviationMatrix::repeat(ref_drift, n),
        thermal: DeviationMatrix::repeat(thermal_offset, n),
        dynamic: c.dynamic.clone(),
        noise: c.noise.clone(),
    };

    let delay = config.delay_samples();
    Ok(SimulatedSession {
        id,
        feed_rate: feed,
        controller: axes.controller,
        encoder: delayed(&axes.encoder, delay),
        sensor: delayed(&synth.sensor, delay),
        truth,
    })
}

/// `out[k] = x[k − delay]`, holding the first sample before the start.
fn delayed(set: &SignalSet, delay: usize) -> SignalSet {
    let channels = set
        .channels()
        .iter()
        .map(|ch| {
            let n = ch.data.len();
            let first = ch.data.first().copied().unwrap_or(0.0);
            let data = (0..n).map(|k| if k < delay { first } else { ch.data[k - delay] }).collect();
            Channel::new(ch.name.clone(), ch.unit, data)
        })
        .collect();
    SignalSet::new(set.sample_rate(), set.start_time(), channels).expect("same shape as a valid set")
}

/// File names inside a session directory.
pub const CONTROLLER_FILE: &str = "controller.csv";
pub const ENCODER_FILE: &str = "encoder.csv";
pub const SENSOR_FILE: &str = "sensor.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";
pub const TRUTH_SAMPLES_FILE: &str = "ground_truth.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSummary {
    pub session: String,
    pub feed_rate_mm_min: f64,
    pub sample_rate_hz: f64,
    pub recording_delay_s: f64,
    pub seed: u64,
    pub parameter_names: Vec<String>,
    pub parameter_units: Vec<String>,
    /// Link errors built into the machine (µrad, µm).
    pub link_errors_physical: [f64; 8],
    /// Link errors a fit over the reference session converges to (µrad, µm).
    pub link_errors_identifiable: [f64; 8],
    pub thermal_offset_um: [f64; 3],
    pub noise_sigma_um: f64,
    pub samples: usize,
    pub samples_file: String,
}

/// Writes the session's three streams and its truth into `dir`.
pub fn write_session(dir: impl AsRef<Path>, session: &SimulatedSession, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    signal_io::write_signals(dir.join(CONTROLLER_FILE), &session.controller)?;
    signal_io::write_signals(dir.join(ENCODER_FILE), &session.encoder)?;
    signal_io::write_signals(dir.join(SENSOR_FILE), &session.sensor)?;

    let t = &session.truth;
    let summary = TruthSummary {
        session: session.id.clone(),
        feed_rate_mm_min: session.feed_rate,
        sample_rate_hz: t.sample_rate,
        recording_delay_s: t.recording_delay,
        seed,
        parameter_names: LinkErrorVector::NAMES.iter().map(|s| s.to_string()).collect(),
        parameter_units: (0..8).map(|j| if j == 7 { "um" } else { "urad" }.to_string()).collect(),
        link_errors_physical: t.dq_physical.to_micro(),
        link_errors_identifiable: t.dq_identifiable.to_micro(),
        thermal_offset_um: (t.thermal_offset * UM_PER_MM).into(),
        noise_sigma_um: 0.0,
        samples: t.len(),
        samples_file: TRUTH_SAMPLES_FILE.to_string(),
    };
    let summary = TruthSummary {
        noise_sigma_um: sample_sigma(&t.noise),
        ..summary
    };
    let path = dir.join(TRUTH_FILE);
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_truth_samples(&dir.join(TRUTH_SAMPLES_FILE), t)
}

fn sample_sigma(noise: &DeviationMatrix) -> f64 {
    if noise.is_empty() {
        return 0.0;
    }
    let ss: f64 = noise.rows().iter().map(|r| r.norm_squared()).sum();
    (ss / (3 * noise.nrows()) as f64).sqrt() * UM_PER_MM
}

fn write_truth_samples(path: &Path, t: &GroundTruth) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let blocks: [(&str, &DeviationMatrix); 7] = [
        ("nom", &t.chi_nom),
        ("dc", &t.contouring),
        ("dl", &t.link),
        ("dm", &t.motion),
        ("dtd", &t.thermal),
        ("dd", &t.dynamic),
        ("noise", &t.noise),
    ];
    let mut header = String::from("t_s");
    for (name, _) in &blocks {
        for axis in ["x", "y", "z"] {
            let _ = write!(header, ",{name}_{axis}_um");
        }
    }
    writeln!(out, "{header}").map_err(io)?;
    let mut line = String::new();
    for k in 0..t.len() {
        line.clear();
        let _ = write!(line, "{:.16e}", k as f64 / t.sample_rate);
        for (_, m) in &blocks {
            let r = m.row(k) * UM_PER_MM;
            let _ = write!(line, ",{:.16e},{:.16e},{:.16e}", r.x, r.y, r.z);
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Outcome of one feed of [`run_campaign`].
#[derive(Debug)]
pub struct CampaignEntry {
    pub index: usize,
    pub id: String,
    pub feed_rate: f64,
    pub result: Result<WrittenSession>,
}

#[derive(Debug, Clone)]
pub struct WrittenSession {
    pub dir: PathBuf,
    /// Recorded samples per stream at the sensor rate.
    pub samples: usize,
    pub duration_s: f64,
}

/// Simulates every feed of the campaign into `out/sessions/<id>/`. A failing
/// feed is reported in its entry and the remaining feeds still run.
pub fn run_campaign(config: &CampaignConfig, out: impl AsRef<Path>) -> Result<Vec<CampaignEntry>> {
    config.validate()?;
    let out = out.as_ref();
    Ok((0..config.feeds_mm_min.len())
        .map(|index| simulate_and_write(config, index, out))
        .collect())
}

/// Simulates and writes one feed of the campaign.
pub fn simulate_and_write(config: &CampaignConfig, index: usize, out: &Path) -> CampaignEntry {
    let id = config.session_id(index);
    let dir = out.join("sessions").join(&id);
    let result = simulate_session(config, index).and_then(|s| {
        write_session(&dir, &s, config.seed)?;
        Ok(WrittenSession {
            dir,
            samples: s.encoder.len(),
            duration_s: s.encoder.duration(),
        })
    });
    CampaignEntry {
        index,
        id,
        feed_rate: config.feeds_mm_min[index],
        result,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config() -> CampaignConfig {
        CampaignConfig {
            feeds_mm_min: vec![6000.0],
            path: Some(vec![[0.0, 0.0, 0.0, 0.0, 0.0], [20.0, 10.0, 0.0, 5.0, 10.0]]),
            ..CampaignConfig::null(&[6000.0])
        }
    }

    #[test]
    fn defaults_validate() {
        CampaignConfig::default().validate().unwrap();
        let json = serde_json::to_string(&CampaignConfig::default()).unwrap();
        assert_eq!(CampaignConfig::from_json_str(&json).unwrap(), CampaignConfig::default());
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(CampaignConfig::from_json_str(r#"{"feeds": [1000]}"#).is_err());
    }

    #[test]
    fn recording_delay_applied() {
        let c = CampaignConfig {
            recording_delay_s: 0.005,
            ..short_config()
        };
        let s = simulate_session(&c, 0).unwrap();
        let fine = signal_io::resample(&s.controller, 10_000.0).unwrap();
        let x = &fine.channel("X").unwrap().data;
        let e = &s.encoder.channel("X").unwrap().data;
        assert_eq!(&e[50..], &x[..x.len() - 50]);
    }

    #[test]
    fn session_ids() {
        let c = CampaignConfig::default();
        assert_eq!(c.session_id(0), "F01000");
        assert_eq!(c.session_id(5), "F18896");
    }

    #[test]
    fn truth_sums_to_sensor_minus_noise() {
        let c = CampaignConfig {
            structure: StructureParams::typical(),
            thermal_drift_um: Some(vec![[0.5, 0.0, -0.5]]),
            ..short_config()
        };
        let s = simulate_session(&c, 0).unwrap();
        let t = &s.truth;
        let sensor = signal_io::project_sensor_readings(&s.sensor, &Default::default()).unwrap();
        for k in 0..t.len() {
            let sum = t.chi_nom.row(k)
                + t.contouring.row(k)
                + t.link.row(k)
                + t.motion.row(k)
                + t.thermal.row(k)
                + t.dynamic.row(k)
                + t.noise.row(k);
            if k + 180 < sensor.nrows() {
                assert!((sum - sensor.row(k + 180)).norm() < 1e-12, "{k}");
            }
        }
    }
}
