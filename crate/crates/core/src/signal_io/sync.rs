use super::{ChannelUnit, SignalSet};
use crate::error::{Error, Result};

/// How the recording delay between two streams is measured.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DelayMethod {
    /// Minimise the summed mean squared difference of the range-normalised
    /// positions of every channel shared by both sets.
    #[default]
    SquaredDifference,
    /// Maximise the summed normalised cross-correlation of the sample
    /// increments of every channel shared by both sets.
    CrossCorrelation,
    /// Compare the first instant at which any linear channel moves faster
    /// than `threshold_mm` per sample.
    Tag { threshold_mm: f64 },
}

impl DelayMethod {
    /// Onset threshold of 0.5 µm per sample.
    pub const DEFAULT_TAG: DelayMethod = DelayMethod::Tag { threshold_mm: 0.5e-3 };
}

/// Delay (s) by which `target` lags `reference`, searched over
/// `±window` seconds at one-sample resolution.
pub fn estimate_delay(
    reference: &SignalSet,
    target: &SignalSet,
    window: f64,
    method: DelayMethod,
) -> Result<f64> {
    let rate = common_rate(reference, target)?;
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::invalid(format!("search window must be non-negative, got {window}")));
    }
    let max_lag = (window * rate).round() as usize;
    let overlap = reference.len().min(target.len());
    if overlap <= max_lag + 2 {
        return Err(Error::invalid(format!(
            "overlap of {overlap} samples does not exceed the {max_lag}-sample search window"
        )));
    }

    let lag = match method {
        DelayMethod::SquaredDifference => squared_difference_lag(reference, target, max_lag)?,
        DelayMethod::CrossCorrelation => cross_correlation_lag(reference, target, max_lag)?,
        DelayMethod::Tag { threshold_mm } => {
            let r = onset(reference, threshold_mm)?;
            let t = onset(target, threshold_mm)?;
            let lag = t as i64 - r as i64;
            if lag.unsigned_abs() as usize > max_lag {
                return Err(Error::invalid(format!(
                    "tag onset offset of {lag} samples lies outside the search window"
                )));
            }
            lag
        }
    };
    Ok(lag as f64 / rate)
}

fn common_rate(a: &SignalSet, b: &SignalSet) -> Result<f64> {
    let (ra, rb) = (a.sample_rate(), b.sample_rate());
    if (ra - rb).abs() > 1e-9 * ra {
        return Err(Error::invalid(format!(
            "signal sets must share a sample rate ({ra} Hz vs {rb} Hz)"
        )));
    }
    Ok(ra)
}

/// Mean-removed, max-normalised first differences, or `None` for a flat channel.
fn increments(data: &[f64]) -> Option<Vec<f64>> {
    let mut d: Vec<f64> = data.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = d.iter().sum::<f64>() / d.len().max(1) as f64;
    d.iter_mut().for_each(|v| *v -= mean);
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    d.iter_mut().for_each(|v| *v /= scale);
    Some(d)
}

/// Shared non-flat channels as `(reference, target)` pairs after `prepare`.
fn shared_pairs(
    reference: &SignalSet,
    target: &SignalSet,
    prepare: impl Fn(&[f64], &[f64]) -> Option<(Vec<f64>, Vec<f64>)>,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut pairs = Vec::new();
    let mut shared = Vec::new();
    for ch in reference.channels() {
        let Some(other) = target.channel(&ch.name) else { continue };
        shared.push(ch.name.as_str());
        if let Some(p) = prepare(&ch.data, &other.data) {
            pairs.push(p);
        }
    }
    if shared.is_empty() {
        return Err(Error::invalid("reference and target share no channel"));
    }
    if pairs.is_empty() {
        return Err(Error::FlatSignal(format!(
            "every shared channel ({}) is flat",
            shared.join(", ")
        )));
    }
    Ok(pairs)
}

/// Both channels scaled by the range of the reference, or `None` when either
/// is flat.
fn range_normalised(a: &[f64], b: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let range = |d: &[f64]| {
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let (lo, scale) = range(a);
    if !(scale > 0.0) || !(range(b).1 > 0.0) {
        return None;
    }
    let norm = |d: &[f64]| d.iter().map(|v| (v - lo) / scale).collect();
    Some((norm(a), norm(b)))
}

fn squared_difference_lag(reference: &SignalSet, target: &SignalSet, max_lag: usize) -> Result<i64> {
    let pairs = shared_pairs(reference, target, range_normalised)?;
    let cost = |lag: i64, stride: usize| -> f64 { pairs.iter().map(|(a, b)| msd(a, b, lag, stride)).sum() };
    let better = |c: f64, lag: i64, best: (f64, i64)| c < best.0 || (c == best.0 && lag.abs() < best.1.abs());

    // Coarse scan on a decimated grid, then every lag around its minimum.
    let max_lag = max_lag as i64;
    let step = (max_lag / 50).max(1);
    let mut best = (f64::INFINITY, 0i64);
    let mut lag = -(max_lag / step) * step;
    while lag <= max_lag {
        let c = cost(lag, step as usize);
        if better(c, lag, best) {
            best = (c, lag);
        }
        lag += step;
    }
    let centre = best.1;
    best = (f64::INFINITY, 0);
    for lag in (centre - step).max(-max_lag)..=(centre + step).min(max_lag) {
        let c = cost(lag, 1);
        if better(c, lag, best) {
            best = (c, lag);
        }
    }
    Ok(best.1)
}

/// Mean squared difference of `a[k]` and `b[k + lag]` over their overlap,
/// visiting every `stride`-th sample.
fn msd(a: &[f64], b: &[f64], lag: i64, stride: usize) -> f64 {
    let start = (-lag).max(0) as usize;
    let end = (a.len() as i64).min(b.len() as i64 - lag).max(start as i64) as usize;
    let off = (start as i64 + lag) as usize;
    let (mut sum, mut count) = (0.0, 0usize);
    for k in (start..end).step_by(stride) {
        let d = b[k - start + off] - a[k];
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        f64::INFINITY
    } else {
        sum / count as f64
    }
}

fn cross_correlation_lag(reference: &SignalSet, target: &SignalSet, max_lag: usize) -> Result<i64> {
    let pairs = shared_pairs(reference, target, |a, b| Some((increments(a)?, increments(b)?)))?;

    let max_lag = max_lag as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for lag in -max_lag..=max_lag {
        let score: f64 = pairs.iter().map(|(a, b)| ncc(a, b, lag)).sum();
        // Ties resolve towards the smallest |lag|.
        if score > best.0 || (score == best.0 && lag.abs() < best.1.abs()) {
            best = (score, lag);
        }
    }
    Ok(best.1)
}

/// Normalised correlation of `a[k]` with `b[k + lag]` over their overlap.
fn ncc(a: &[f64], b: &[f64], lag: i64) -> f64 {
    let start = (-lag).max(0) as usize;
    let end = (a.len() as i64).min(b.len() as i64 - lag).max(start as i64) as usize;
    let n = (end - start) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let off = (start as i64 + lag) as usize;
    let a = &a[start..end];
    let b = &b[off..off + a.len()];
    let (mut sa, mut sb, mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// First sample at which a linear channel moves by more than the threshold.
fn onset(set: &SignalSet, threshold_mm: f64) -> Result<usize> {
    set.channels()
        .iter()
        .filter(|c| matches!(c.unit, ChannelUnit::Millimetre | ChannelUnit::Micrometre))
        .filter_map(|c| {
            let threshold = if c.unit == ChannelUnit::Micrometre { threshold_mm * 1e3 } else { threshold_mm };
            c.data.windows(2).position(|w| (w[1] - w[0]).abs() > threshold)
        })
        .min()
        .ok_or_else(|| Error::FlatSignal("no motion onset above the tag threshold".into()))
}

/// Reference and targets cut to a common, simultaneous window.
#[derive(Debug, Clone)]
pub struct AlignedSignals {
    pub reference: SignalSet,
    pub targets: Vec<SignalSet>,
    /// Integer delay applied, in samples.
    pub shift: i64,
}

/// Brings `targets` backward by `delay` seconds (rounded to whole samples)
/// and truncates every set to the common overlap. All returned sets carry
/// the reference clock.
pub fn align(reference: &SignalSet, targets: &[&SignalSet], delay: f64) -> Result<AlignedSignals> {
    for t in targets {
        common_rate(reference, t)?;
    }
    let rate = reference.sample_rate();
    let shift = (delay * rate).round() as i64;
    let (ref_skip, tgt_skip) = if shift >= 0 { (0, shift as usize) } else { ((-shift) as usize, 0) };
    let available = targets
        .iter()
        .map(|t| t.len().saturating_sub(tgt_skip))
        .chain(std::iter::once(reference.len().saturating_sub(ref_skip)))
        .min()
        .unwrap_or(0);
    if available == 0 {
        return Err(Error::invalid(format!(
            "delay of {shift} samples leaves no overlap between the streams"
        )));
    }
    let reference = reference.slice(ref_skip..ref_skip + available);
    let start = reference.start_time();
    let targets = targets
        .iter()
        .map(|t| t.slice(tgt_skip..tgt_skip + available).with_start_time(start))
        .collect();
    Ok(AlignedSignals {
        reference,
        targets,
        shift,
    })
}

/// Index range from the first to the last sample at which any channel of
/// `set` changes.
pub fn motion_extent(set: &SignalSet) -> Option<std::ops::Range<usize>> {
    let moving = |k: usize| set.channels().iter().any(|c| c.data[k + 1] != c.data[k]);
    let steps = set.len().saturating_sub(1);
    let first = (0..steps).find(|&k| moving(k))?;
    let last = (0..steps).rev().find(|&k| moving(k))?;
    Some(first..last + 2)
}

/// Cuts every set to `range`.
pub fn trim(sets: &[&SignalSet], range: std::ops::Range<usize>) -> Result<Vec<SignalSet>> {
    sets.iter()
        .map(|s| {
            if range.end > s.len() || range.start >= range.end {
                Err(Error::invalid(format!(
                    "trim range {range:?} outside a {}-sample set",
                    s.len()
                )))
            } else {
                Ok(s.slice(range.clone()))
            }
        })
        .collect()
}
