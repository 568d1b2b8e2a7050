use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{Channel, SignalSet};

/// Per-axis position loops, in `JointPose` axis order.
///
/// First order: `y′ = Kv·(u − y) + ff·u′`.
/// Second order: `y″ = ωn²·(u − y) + 2ζωn·(ff·u′ − y′)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServoParams {
    /// Velocity constant (1/s), used by the first-order loop.
    #[serde(default = "default_kv")]
    pub kv: [f64; 5],
    #[serde(default)]
    pub second_order: Option<SecondOrder>,
    /// Velocity feed-forward gain, 0 to 1.
    #[serde(default)]
    pub feedforward: f64,
    /// Perfect tracking: the encoders reproduce the input exactly.
    #[serde(default)]
    pub ideal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondOrder {
    /// Natural frequency (Hz).
    pub natural_frequency_hz: [f64; 5],
    pub damping: [f64; 5],
}

fn default_kv() -> [f64; 5] {
    [40.0; 5]
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            kv: default_kv(),
            second_order: None,
            feedforward: 0.0,
            ideal: false,
        }
    }
}

impl ServoParams {
    /// First-order loops with one `Kv` on every axis and no feed-forward.
    pub fn first_order(kv: f64) -> Self {
        Self {
            kv: [kv; 5],
            second_order: None,
            feedforward: 0.0,
            ideal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kv.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::invalid("servo Kv must be positive"));
        }
        if !(0.0..=1.0).contains(&self.feedforward) {
            return Err(Error::invalid("servo feed-forward must lie in [0, 1]"));
        }
        if let Some(so) = &self.second_order {
            if so.natural_frequency_hz.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(Error::invalid("servo natural frequency must be positive"));
            }
            if so.damping.iter().any(|z| !(*z > 0.0 && *z <= 2.0)) {
                return Err(Error::invalid("servo damping must lie in (0, 2]"));
            }
        }
        Ok(())
    }

    pub fn ideal() -> Self {
        Self {
            ideal: true,
            ..Self::default()
        }
    }
}

/// Encoder positions produced by the position loops driven by `inputs`.
/// The input is taken piecewise linear between samples and the loops are
/// integrated with one RK4 step per sample, starting at rest on the first
/// input value.
pub fn servo_response(inputs: &SignalSet, servo: &ServoParams) -> Result<SignalSet> {
    servo.validate()?;
    if inputs.channels().len() != 5 {
        return Err(Error::invalid(format!(
            "servo response needs the five joint channels, got {}",
            inputs.channels().len()
        )));
    }
    if servo.ideal {
        return Ok(inputs.clone());
    }
    let h = 1.0 / inputs.sample_rate();
    let ff = servo.feedforward;
    let channels = inputs
        .channels()
        .iter()
        .enumerate()
        .map(|(axis, ch)| {
            let data = match &servo.second_order {
                None => first_order(&ch.data, servo.kv[axis], ff, h),
                Some(so) => {
                    let wn = 2.0 * std::f64::consts::PI * so.natural_frequency_hz[axis];
                    second_order(&ch.data, wn, so.damping[axis], ff, h)
                }
            };
            Channel::new(ch.name.clone(), ch.unit, data)
        })
        .collect();
    SignalSet::new(inputs.sample_rate(), inputs.start_time(), channels)
}

fn first_order(u: &[f64], kv: f64, ff: f64, h: f64) -> Vec<f64> {
    let Some(&y0) = u.first() else { return Vec::new() };
    let mut y = y0;
    let mut out = Vec::with_capacity(u.len());
    out.push(y);
    for w in u.windows(2) {
        let slope = (w[1] - w[0]) / h;
        let f = |t: f64, y: f64| kv * (w[0] + slope * t - y) + ff * slope;
        let k1 = f(0.0, y);
        let k2 = f(h / 2.0, y + h / 2.0 * k1);
        let k3 = f(h / 2.0, y + h / 2.0 * k2);
        let k4 = f(h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(y);
    }
    out
}

fn second_order(u: &[f64], wn: f64, zeta: f64, ff: f64, h: f64) -> Vec<f64> {
    let Some(&y0) = u.first() else { return Vec::new() };
    let (mut y, mut v) = (y0, 0.0);
    let mut out = Vec::with_capacity(u.len());
    out.push(y);
    let (w2, c) = (wn * wn, 2.0 * zeta * wn);
    for w in u.windows(2) {
        let slope = (w[1] - w[0]) / h;
        let f = |t: f64, y: f64, v: f64| (v, w2 * (w[0] + slope * t - y) + c * (ff * slope - v));
        let (a1, b1) = f(0.0, y, v);
        let (a2, b2) = f(h / 2.0, y + h / 2.0 * a1, v + h / 2.0 * b1);
        let (a3, b3) = f(h / 2.0, y + h / 2.0 * a2, v + h / 2.0 * b2);
        let (a4, b4) = f(h, y + h * a3, v + h * b3);
        y += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        out.push(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::ChannelUnit;

    fn joints(rate: f64, x: Vec<f64>) -> SignalSet {
        let n = x.len();
        SignalSet::joints(rate, 0.0, [x, vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]]).unwrap()
    }

    #[test]
    fn constant_input_is_held() {
        let out = servo_response(&joints(1000.0, vec![5.0; 100]), &ServoParams::first_order(30.0)).unwrap();
        assert!(out.channel("X").unwrap().data.iter().all(|v| *v == 5.0));
    }

    #[test]
    fn ramp_following_error_is_v_over_kv() {
        let (rate, kv, v) = (10_000.0, 25.0, 50.0);
        let n = (rate * 5.0 / kv) as usize + 10;
        let u: Vec<f64> = (0..n).map(|k| v * k as f64 / rate).collect();
        let out = servo_response(&joints(rate, u.clone()), &ServoParams::first_order(kv)).unwrap();
        let e = u[n - 1] - out.channel("X").unwrap().data[n - 1];
        assert!((e - v / kv).abs() < 0.01 * v / kv, "{e}");
        assert_eq!(out.channel("X").unwrap().unit, ChannelUnit::Millimetre);
    }

    #[test]
    fn second_order_feedforward_tracks_ramp() {
        let rate = 10_000.0;
        let u: Vec<f64> = (0..20_000).map(|k| 30.0 * k as f64 / rate).collect();
        let servo = ServoParams {
            second_order: Some(SecondOrder {
                natural_frequency_hz: [60.0; 5],
                damping: [0.9; 5],
            }),
            feedforward: 1.0,
            ..Default::default()
        };
        let out = servo_response(&joints(rate, u.clone()), &servo).unwrap();
        let e = u[19_999] - out.channel("X").unwrap().data[19_999];
        assert!(e.abs() < 1e-9, "{e}");
    }
}
