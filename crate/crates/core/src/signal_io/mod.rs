//! Recorded channels: loading, resampling, synchronisation, and conversion
//! into the deviation matrices `χ`, `χ_nom` and `χ_enc`.

mod csv_io;
mod resample;
mod sensor;
mod sync;

pub use csv_io::{load_signals, write_signals, CsvSchema};
pub use resample::resample;
pub use sensor::{project_sensor_readings, SensorCalibration};
pub use sync::{align, estimate_delay, motion_extent, trim, AlignedSignals, DelayMethod};

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::kinematics::{self, JointPose, MachineGeometry};

/// Names of the five joint channels, in `JointPose` order.
pub const JOINT_CHANNELS: [&str; 5] = ["X", "Y", "Z", "A", "C"];
/// Names of the three capacitive sensor channels.
pub const SENSOR_CHANNELS: [&str; 3] = ["s1", "s2", "s3"];

/// Rate at which all streams are compared.
pub const DEFAULT_ANALYSIS_RATE_HZ: f64 = 10_000.0;

/// Physical unit of a channel as stored in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelUnit {
    Millimetre,
    /// Stored in radians, written to disk in degrees.
    Radian,
    Micrometre,
    Volt,
}

impl ChannelUnit {
    /// Column-name suffix used on disk.
    pub fn file_suffix(self) -> &'static str {
        match self {
            ChannelUnit::Millimetre => "mm",
            ChannelUnit::Radian => "deg",
            ChannelUnit::Micrometre => "um",
            ChannelUnit::Volt => "V",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub unit: ChannelUnit,
    pub data: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: ChannelUnit, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit,
            data,
        }
    }
}

/// Uniformly sampled multichannel time series on a common clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSet {
    sample_rate: f64,
    start_time: f64,
    channels: Vec<Channel>,
}

impl SignalSet {
    pub fn new(sample_rate: f64, start_time: f64, channels: Vec<Channel>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !start_time.is_finite() {
            return Err(Error::NonFinite("start time".into()));
        }
        if let Some(first) = channels.first() {
            let n = first.data.len();
            for ch in &channels {
                if ch.data.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "channel `{}` has {} samples, `{}` has {n}",
                        ch.name,
                        ch.data.len(),
                        first.name
                    )));
                }
                if let Some(k) = ch.data.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("channel `{}` sample {k}", ch.name)));
                }
            }
        }
        for (i, ch) in channels.iter().enumerate() {
            if channels[..i].iter().any(|c| c.name == ch.name) {
                return Err(Error::invalid(format!("duplicate channel `{}`", ch.name)));
            }
        }
        Ok(Self {
            sample_rate,
            start_time,
            channels,
        })
    }

    /// Five joint channels from per-axis series (A and C in radians).
    pub fn joints(sample_rate: f64, start_time: f64, axes: [Vec<f64>; 5]) -> Result<Self> {
        let channels = JOINT_CHANNELS
            .iter()
            .zip(axes)
            .enumerate()
            .map(|(i, (name, data))| {
                let unit = if i < 3 { ChannelUnit::Millimetre } else { ChannelUnit::Radian };
                Channel::new(*name, unit, data)
            })
            .collect();
        Self::new(sample_rate, start_time, channels)
    }

    /// Joint channels from a pose sequence.
    pub fn from_poses(sample_rate: f64, start_time: f64, poses: &[JointPose]) -> Result<Self> {
        let mut axes: [Vec<f64>; 5] = Default::default();
        for pose in poses {
            for (axis, v) in axes.iter_mut().zip(pose.as_array()) {
                axis.push(v);
            }
        }
        Self::joints(sample_rate, start_time, axes)
    }

    /// Three sensor channels.
    pub fn sensors(
        sample_rate: f64,
        start_time: f64,
        unit: ChannelUnit,
        readings: [Vec<f64>; 3],
    ) -> Result<Self> {
        let channels = SENSOR_CHANNELS
            .iter()
            .zip(readings)
            .map(|(name, data)| Channel::new(*name, unit, data))
            .collect();
        Self::new(sample_rate, start_time, channels)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.data.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Time span between the first and last samples.
    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 / self.sample_rate
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Channel> {
        self.channel(name)
            .ok_or_else(|| Error::invalid(format!("signal set has no `{name}` channel")))
    }

    /// Joint poses of every sample; needs the five joint channels.
    pub fn joint_poses(&self) -> Result<Vec<JointPose>> {
        let axes = JOINT_CHANNELS
            .iter()
            .map(|name| self.require(name).map(|c| &c.data))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..self.len())
            .map(|k| JointPose::from_array([axes[0][k], axes[1][k], axes[2][k], axes[3][k], axes[4][k]]))
            .collect())
    }

    /// Rows `range` with the start time advanced accordingly.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            sample_rate: self.sample_rate,
            start_time: self.time(range.start),
            channels: self
                .channels
                .iter()
                .map(|c| Channel::new(c.name.clone(), c.unit, c.data[range.clone()].to_vec()))
                .collect(),
        }
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }
}

/// `χ_nom`: row `k` is the nominal `τ` at the controller pose `k`.
pub fn build_nominal_deviation(joints: &SignalSet, geom: &MachineGeometry) -> Result<DeviationMatrix> {
    geom.validate()?;
    joint_deviation(joints, geom)
}

/// `χ_enc`: the same construction applied to encoder readings.
pub fn build_encoder_deviation(joints: &SignalSet, geom: &MachineGeometry) -> Result<DeviationMatrix> {
    geom.validate()?;
    joint_deviation(joints, geom)
}

fn joint_deviation(joints: &SignalSet, geom: &MachineGeometry) -> Result<DeviationMatrix> {
    let poses = joints.joint_poses()?;
    let rows = poses
        .iter()
        .map(|p| kinematics::dkt(p, geom))
        .collect::<Result<Vec<_>>>()?;
    DeviationMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ragged_channels_rejected() {
        let err = SignalSet::new(
            10.0,
            0.0,
            vec![
                Channel::new("X", ChannelUnit::Millimetre, vec![0.0; 3]),
                Channel::new("Y", ChannelUnit::Millimetre, vec![0.0; 2]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn nan_rejected() {
        let err = SignalSet::new(
            10.0,
            0.0,
            vec![Channel::new("X", ChannelUnit::Millimetre, vec![0.0, f64::NAN])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn constant_pose_gives_identical_rows() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(1.0, 2.0, 3.0, 10.0, 20.0).unwrap();
        let set = SignalSet::from_poses(100.0, 0.0, &vec![pose; 7]).unwrap();
        let chi = build_nominal_deviation(&set, &g).unwrap();
        assert_eq!(chi.nrows(), 7);
        assert!(chi.rows().iter().all(|r| *r == chi.row(0)));
    }

    #[test]
    fn single_sample_matches_dkt() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(-4.0, 12.0, 30.0, -15.0, 95.0).unwrap();
        let set = SignalSet::from_poses(100.0, 0.0, &[pose]).unwrap();
        let chi = build_encoder_deviation(&set, &g).unwrap();
        assert_eq!(chi.row(0), kinematics::dkt(&pose, &g).unwrap());
    }

    #[test]
    fn missing_joint_channel_is_an_error() {
        let set = SignalSet::new(
            10.0,
            0.0,
            vec![Channel::new("X", ChannelUnit::Millimetre, vec![0.0; 4])],
        )
        .unwrap();
        assert!(build_nominal_deviation(&set, &MachineGeometry::default()).is_err());
    }
}
