//! Share tables, per-direction maxima and RMS values, axis accelerations and
//! the feed-rate power law `δ_rms = κ·F^N`.

mod plot;
mod report;

pub use plot::power_law_svg;
pub use report::{CampaignReport, ContouringDynamicRow, DynamicRmsRow, PerSource, QuasiStaticMaxima, ShareRow};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::signal_io::SignalSet;
use crate::UM_PER_MM;

/// Rows whose summed norm falls below this (mm) are left out of the shares.
pub const SHARE_DENOMINATOR_FLOOR: f64 = 1e-12;
/// Allowed deviation of a share row sum from 100 %.
pub const SHARE_SUM_TOLERANCE: f64 = 0.1;
/// Default acceleration smoothing window (s).
pub const DEFAULT_SMOOTHING_WINDOW: f64 = 0.005;

/// Per-session statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub session: String,
    pub feed_rate_mm_min: f64,
    /// Mean share of each source in the summed norm (%).
    pub shares_percent: PerSource<f64>,
    /// Largest absolute value per direction (µm).
    pub max_um: PerSource<[f64; 3]>,
    /// RMS per direction (µm).
    pub rms_um: PerSource<[f64; 3]>,
}

impl MetricsReport {
    /// Statistics of the five contributions δc, δl, δm, δtd, δd.
    pub fn compute(session: &str, feed_rate: f64, contributions: [&DeviationMatrix; 5]) -> Result<Self> {
        let shares = mean_norm_percentages(contributions)?;
        let max = contributions
            .iter()
            .map(|m| max_errors(m).map(<[f64; 3]>::from))
            .collect::<Result<Vec<_>>>()?;
        let rms = contributions
            .iter()
            .map(|m| rms_errors(m).map(<[f64; 3]>::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            session: session.to_string(),
            feed_rate_mm_min: feed_rate,
            shares_percent: PerSource::from_array(shares),
            max_um: PerSource::from_slice(&max),
            rms_um: PerSource::from_slice(&rms),
        })
    }
}

/// `δ_k,%` for the five sources in the order δc, δl, δm, δtd, δd. The
/// denominator at each point is the sum of the five row norms.
pub fn mean_norm_percentages(contributions: [&DeviationMatrix; 5]) -> Result<[f64; 5]> {
    let n = contributions[0].nrows();
    for m in &contributions[1..] {
        contributions[0].ensure_same_shape(m)?;
    }
    let mut sums = [0.0; 5];
    let mut used = 0usize;
    for i in 0..n {
        let norms = contributions.map(|m| m.row(i).norm());
        let total: f64 = norms.iter().sum();
        if total < SHARE_DENOMINATOR_FLOOR {
            continue;
        }
        used += 1;
        for (s, v) in sums.iter_mut().zip(norms) {
            *s += v / total;
        }
    }
    if used == 0 {
        return Err(Error::invalid("every point has a zero total error; shares are undefined"));
    }
    Ok(sums.map(|s| 100.0 * s / used as f64))
}

/// Per-column maximum absolute value (µm).
pub fn max_errors(m: &DeviationMatrix) -> Result<Vector3<f64>> {
    if m.is_empty() {
        return Err(Error::invalid("maximum of an empty matrix"));
    }
    Ok(m.rows().iter().fold(Vector3::zeros(), |acc: Vector3<f64>, r| acc.sup(&r.abs())) * UM_PER_MM)
}

/// Per-column root mean square (µm).
pub fn rms_errors(m: &DeviationMatrix) -> Result<Vector3<f64>> {
    if m.is_empty() {
        return Err(Error::invalid("RMS of an empty matrix"));
    }
    Ok(m.rms_diff(&DeviationMatrix::zeros(m.nrows())) * UM_PER_MM)
}

/// `rms = κ·F^N` for one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawTerm {
    /// µm·(mm/min)^−N
    pub kappa: f64,
    pub exponent: f64,
    /// Coefficient of determination in log-log space.
    pub r_squared: f64,
}

impl PowerLawTerm {
    pub fn evaluate(&self, feed: f64) -> f64 {
        self.kappa * feed.powf(self.exponent)
    }
}

/// Per-direction power laws; a direction is `None` when it was dropped for
/// having a zero RMS value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub x: Option<PowerLawTerm>,
    pub y: Option<PowerLawTerm>,
    pub z: Option<PowerLawTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PowerLawFit {
    pub fn directions(&self) -> [Option<PowerLawTerm>; 3] {
        [self.x, self.y, self.z]
    }
}

/// Ordinary least squares of `ln(rms)` on `ln(F)`.
pub fn fit_power_law_1d(feeds: &[f64], rms: &[f64]) -> Result<PowerLawTerm> {
    if feeds.len() != rms.len() {
        return Err(Error::ShapeMismatch(format!("{} feeds vs {} values", feeds.len(), rms.len())));
    }
    if let Some(f) = feeds.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::invalid(format!("feed rates must be positive, got {f}")));
    }
    if let Some(v) = rms.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("RMS values must be positive for a log fit, got {v}")));
    }
    let lx: Vec<f64> = feeds.iter().map(|f| f.ln()).collect();
    let ly: Vec<f64> = rms.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if lx.len() < 2 || sxx <= 1e-24 {
        return Err(Error::invalid("power-law fit needs at least two distinct feed rates"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(PowerLawTerm {
        kappa: intercept.exp(),
        exponent: slope,
        r_squared,
    })
}

/// Per-direction power laws over a campaign. Directions with a zero RMS
/// value are dropped with a warning.
pub fn fit_power_law(feeds: &[f64], rms: &[[f64; 3]]) -> Result<PowerLawFit> {
    if feeds.len() != rms.len() {
        return Err(Error::ShapeMismatch(format!("{} feeds vs {} RMS rows", feeds.len(), rms.len())));
    }
    let mut terms = [None; 3];
    let mut warnings = Vec::new();
    for (j, term) in terms.iter_mut().enumerate() {
        let column: Vec<f64> = rms.iter().map(|r| r[j]).collect();
        if column.contains(&0.0) {
            let msg = format!("direction {} has a zero RMS value and is left out of the power-law fit", ["x", "y", "z"][j]);
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        *term = Some(fit_power_law_1d(feeds, &column)?);
    }
    Ok(PowerLawFit {
        x: terms[0],
        y: terms[1],
        z: terms[2],
        warnings,
    })
}

/// Second derivative of every channel of `joints` (channel units per s²),
/// after a centred moving average of `window` seconds.
pub fn axis_accelerations(joints: &SignalSet, window: f64) -> Result<Vec<Vec<f64>>> {
    let n = joints.len();
    if n < 5 {
        return Err(Error::invalid(format!("acceleration needs at least 5 samples, got {n}")));
    }
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::invalid(format!("smoothing window must be non-negative, got {window}")));
    }
    let rate = joints.sample_rate();
    let half = ((window * rate).round() as usize) / 2;
    Ok(joints
        .channels()
        .iter()
        .map(|c| second_difference(&moving_average(&c.data, half), rate))
        .collect())
}

/// Centred moving average of half-width `half`, shrinking symmetrically at
/// the ends.
pub(crate) fn moving_average(data: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return data.to_vec();
    }
    let n = data.len();
    (0..n)
        .map(|k| {
            let h = half.min(k).min(n - 1 - k);
            data[k - h..=k + h].iter().sum::<f64>() / (2 * h + 1) as f64
        })
        .collect()
}

fn second_difference(data: &[f64], rate: f64) -> Vec<f64> {
    let n = data.len();
    let r2 = rate * rate;
    let mut out = vec![0.0; n];
    for k in 1..n - 1 {
        out[k] = (data[k + 1] - 2.0 * data[k] + data[k - 1]) * r2;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{Channel, ChannelUnit};

    #[test]
    fn max_hand_case() {
        let m = DeviationMatrix::from_arrays(&[[1.0, -3.0, 2.0], [-4.0, 1.0, 0.0]]).unwrap();
        assert_eq!(max_errors(&m).unwrap(), Vector3::new(4.0, 3.0, 2.0) * 1e3);
    }

    #[test]
    fn rms_hand_case() {
        let m = DeviationMatrix::from_arrays(&[[3e-3, 0.0, 0.0], [-4e-3, 0.0, 0.0]]).unwrap();
        assert!((rms_errors(&m).unwrap().x - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_matrix_rejected() {
        assert!(max_errors(&DeviationMatrix::zeros(0)).is_err());
        assert!(rms_errors(&DeviationMatrix::zeros(0)).is_err());
    }

    #[test]
    fn single_source_share() {
        let z = DeviationMatrix::zeros(4);
        let l = DeviationMatrix::repeat(Vector3::new(0.0, 1e-3, 0.0), 4);
        assert_eq!(mean_norm_percentages([&z, &l, &z, &z, &z]).unwrap(), [0.0, 100.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_zero_shares_rejected() {
        let z = DeviationMatrix::zeros(4);
        assert!(mean_norm_percentages([&z, &z, &z, &z, &z]).is_err());
    }

    #[test]
    fn constant_rms_gives_flat_law() {
        let fit = fit_power_law_1d(&[1000.0, 2000.0, 4000.0], &[0.3, 0.3, 0.3]).unwrap();
        assert!(fit.exponent.abs() < 1e-12);
        assert!((fit.kappa - 0.3).abs() < 1e-12);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn identical_feeds_rejected() {
        assert!(fit_power_law_1d(&[1000.0, 1000.0], &[0.3, 0.4]).is_err());
        assert!(fit_power_law_1d(&[1000.0, 2000.0], &[0.3, -0.4]).is_err());
    }

    #[test]
    fn zero_direction_dropped() {
        let fit = fit_power_law(&[1000.0, 2000.0], &[[1.0, 0.0, 1.0], [2.0, 0.0, 2.0]]).unwrap();
        assert!(fit.y.is_none());
        assert_eq!(fit.warnings.len(), 1);
        assert!((fit.x.unwrap().exponent - 1.0).abs() < 1e-12);
    }

    fn series(rate: f64, f: impl Fn(f64) -> f64, n: usize) -> SignalSet {
        let data = (0..n).map(|k| f(k as f64 / rate)).collect();
        SignalSet::new(rate, 0.0, vec![Channel::new("X", ChannelUnit::Millimetre, data)]).unwrap()
    }

    #[test]
    fn quadratic_has_constant_acceleration() {
        let s = series(1000.0, |t| 0.5 * 3.0 * t * t, 200);
        let acc = axis_accelerations(&s, 0.005).unwrap();
        for a in &acc[0][10..190] {
            assert!((a - 3.0).abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn constant_has_zero_acceleration() {
        let s = series(1000.0, |_| 7.0, 50);
        assert!(axis_accelerations(&s, 0.005).unwrap()[0].iter().all(|a| *a == 0.0));
    }
}
