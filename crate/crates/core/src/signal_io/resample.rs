use super::{Channel, SignalSet};
use crate::error::{Error, Result};

/// Tolerance (in source samples) under which a target instant is taken to
/// coincide with a source sample.
const SNAP: f64 = 1e-9;

/// Channel-wise linear interpolation onto a uniform clock at `target_rate`
/// that starts at the same instant. The last target sample is the last one
/// not beyond the source duration; when the durations are commensurate the
/// final source sample is reproduced exactly.
pub fn resample(set: &SignalSet, target_rate: f64) -> Result<SignalSet> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_rate}")));
    }
    let source_rate = set.sample_rate();
    if target_rate < source_rate * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "downsampling from {source_rate} Hz to {target_rate} Hz is not supported"
        )));
    }
    if target_rate == source_rate || set.len() < 2 {
        return SignalSet::new(target_rate, set.start_time(), set.channels().to_vec());
    }

    let n_src = set.len();
    let ratio = source_rate / target_rate;
    let last = (n_src - 1) as f64;
    let n_dst = ((last / ratio) + SNAP).floor() as usize + 1;

    // Source position and weight for every target sample.
    let stencil: Vec<(usize, f64)> = (0..n_dst)
        .map(|j| {
            let pos = j as f64 * ratio;
            let nearest = pos.round();
            if (pos - nearest).abs() <= SNAP {
                ((nearest as usize).min(n_src - 1), 0.0)
            } else {
                let i = (pos.floor() as usize).min(n_src - 2);
                (i, pos - i as f64)
            }
        })
        .collect();

    let channels = set
        .channels()
        .iter()
        .map(|ch| {
            let data = stencil
                .iter()
                .map(|&(i, w)| {
                    if w == 0.0 {
                        ch.data[i]
                    } else {
                        ch.data[i] + w * (ch.data[i + 1] - ch.data[i])
                    }
                })
                .collect();
            Channel::new(ch.name.clone(), ch.unit, data)
        })
        .collect();
    SignalSet::new(target_rate, set.start_time(), channels)
}
