use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{ChannelUnit, SignalSet, SENSOR_CHANNELS};
use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::MM_PER_UM;

const UNIT_TOLERANCE: f64 = 1e-9;
const MAX_DIRECTION_CONDITION: f64 = 1e3;

/// Orientation and affine gain of the three capacitive sensors.
///
/// Sensor `i` reads `dᵢ · τ` (µm), where `dᵢ` is its unit measuring
/// direction in the machine frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorCalibration {
    pub directions: [[f64; 3]; 3],
    /// µm per volt, applied to volt channels only.
    pub gains_um_per_v: [f64; 3],
    /// µm, added after the gain on volt channels.
    pub offsets_um: [f64; 3],
    /// Constant setup offset subtracted from the projected deviation (µm).
    #[serde(default)]
    pub setup_offset_um: [f64; 3],
}

impl Default for SensorCalibration {
    /// Sensors along the machine axes, unit gain, no offsets.
    fn default() -> Self {
        Self {
            directions: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            gains_um_per_v: [1.0; 3],
            offsets_um: [0.0; 3],
            setup_offset_um: [0.0; 3],
        }
    }
}

impl SensorCalibration {
    pub fn direction_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_rows(&self.directions.map(|d| Vector3::from(d).transpose()))
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .directions
            .iter()
            .flatten()
            .chain(&self.gains_um_per_v)
            .chain(&self.offsets_um)
            .chain(&self.setup_offset_um);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensor calibration".into()));
        }
        for (i, d) in self.directions.iter().enumerate() {
            let norm = Vector3::from(*d).norm();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::invalid(format!(
                    "sensor direction {} has norm {norm}, expected 1",
                    i + 1
                )));
            }
        }
        let sv = self.direction_matrix().singular_values();
        let condition = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
        if !(condition < MAX_DIRECTION_CONDITION) {
            return Err(Error::IllConditioned {
                what: "sensor direction matrix",
                condition,
                threshold: MAX_DIRECTION_CONDITION,
            });
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cal: Self = serde_json::from_str(s)?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `χ`: converts sensor readings to `τ` deviations (mm) in the machine frame.
pub fn project_sensor_readings(raw: &SignalSet, cal: &SensorCalibration) -> Result<DeviationMatrix> {
    cal.validate()?;
    let channels = SENSOR_CHANNELS
        .iter()
        .map(|name| raw.require(name))
        .collect::<Result<Vec<_>>>()?;
    for ch in &channels {
        if !matches!(ch.unit, ChannelUnit::Micrometre | ChannelUnit::Volt) {
            return Err(Error::invalid(format!(
                "sensor channel `{}` must be in µm or V",
                ch.name
            )));
        }
    }
    let inverse = cal
        .direction_matrix()
        .try_inverse()
        .ok_or_else(|| Error::invalid("sensor direction matrix is singular"))?;
    let setup = Vector3::from(cal.setup_offset_um);

    let rows = (0..raw.len())
        .map(|k| {
            let mut s = Vector3::zeros();
            for (i, ch) in channels.iter().enumerate() {
                s[i] = match ch.unit {
                    ChannelUnit::Volt => ch.data[k] * cal.gains_um_per_v[i] + cal.offsets_um[i],
                    _ => ch.data[k],
                };
            }
            (inverse * s - setup) * MM_PER_UM
        })
        .collect();
    DeviationMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn readings(unit: ChannelUnit, rows: &[[f64; 3]]) -> SignalSet {
        let cols = [0, 1, 2].map(|i| rows.iter().map(|r| r[i]).collect());
        SignalSet::sensors(10_000.0, 0.0, unit, cols).unwrap()
    }

    #[test]
    fn zero_readings_give_zero_rows() {
        let chi = project_sensor_readings(&readings(ChannelUnit::Micrometre, &[[0.0; 3]; 4]), &SensorCalibration::default()).unwrap();
        assert!(chi.rows().iter().all(|r| *r == Vector3::zeros()));
    }

    #[test]
    fn identity_calibration_passes_through() {
        let chi = project_sensor_readings(&readings(ChannelUnit::Micrometre, &[[1.5, -2.0, 7.0]]), &SensorCalibration::default()).unwrap();
        assert_eq!(chi.row(0), Vector3::new(1.5e-3, -2.0e-3, 7.0e-3));
    }

    #[test]
    fn rotated_triad_is_inverted() {
        let rot = Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let m = rot.matrix();
        let cal = SensorCalibration {
            directions: [0, 1, 2].map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]),
            ..Default::default()
        };
        let tau_um = Vector3::new(3.0, -1.0, 2.0);
        let s = m * tau_um;
        let chi = project_sensor_readings(&readings(ChannelUnit::Micrometre, &[[s.x, s.y, s.z]]), &cal).unwrap();
        assert!((chi.row(0) - tau_um * 1e-3).amax() < 1e-15);
    }

    #[test]
    fn volts_use_gain_and_offset() {
        let cal = SensorCalibration {
            gains_um_per_v: [2.0, 4.0, 8.0],
            offsets_um: [1.0, 0.0, -1.0],
            setup_offset_um: [0.5, 0.0, 0.0],
            ..Default::default()
        };
        let chi = project_sensor_readings(&readings(ChannelUnit::Volt, &[[1.0, 1.0, 1.0]]), &cal).unwrap();
        assert!((chi.row(0) - Vector3::new(2.5e-3, 4e-3, 7e-3)).amax() < 1e-15);
    }

    #[test]
    fn near_coplanar_directions_rejected() {
        let s = (1.0f64 - 1e-8).sqrt();
        let cal = SensorCalibration {
            directions: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [s, 0.0, 1e-4]],
            ..Default::default()
        };
        assert!(matches!(cal.validate(), Err(Error::IllConditioned { .. })));
    }
}
