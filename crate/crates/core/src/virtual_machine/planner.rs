//! Interpolator: corner blending of the joint-space polyline and a
//! piecewise-constant-acceleration feed profile along it.
//!
//! At an interior waypoint with unit directions `d1` (in) and `d2` (out),
//! the direction is blended over `[S − ℓ, S + ℓ]` of the polyline arc length
//! as `d1 + (d2 − d1)·h(u)`, `h` the quintic smoothstep. The blended path
//! rejoins the polyline at `S ± ℓ` and deviates from it by at most
//! `0.15625·ℓ·|d2ᵢ − d1ᵢ|` on axis `i`, which sets `ℓ` from the corner
//! tolerance.

use super::program::{PathPoint, TrajectoryProgram};
use crate::error::{Error, Result};
use crate::signal_io::{Channel, ChannelUnit, SignalSet, JOINT_CHANNELS};

/// Peak blend deviation per unit of `ℓ·|Δd|`.
const BLEND_DEVIATION: f64 = 0.15625;
/// Peak of `h′`.
const SMOOTHSTEP_SLOPE: f64 = 1.875;
/// Share of the acceleration limit given to each of the normal and
/// tangential parts inside a blend.
const BLEND_ACCEL_SHARE: f64 = 0.5;

fn smoothstep(u: f64) -> f64 {
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

fn smoothstep_integral(u: f64) -> f64 {
    let u2 = u * u;
    u2 * u2 * (2.5 + u * (-3.0 + u))
}

fn sub(a: &PathPoint, b: &PathPoint) -> PathPoint {
    std::array::from_fn(|i| a[i] - b[i])
}

fn norm(a: &PathPoint) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// The blended geometric path, parameterised by polyline arc length.
#[derive(Debug, Clone)]
pub struct BlendedPath {
    points: Vec<PathPoint>,
    /// Arc length at each point.
    stations: Vec<f64>,
    /// Unit direction of each segment.
    directions: Vec<PathPoint>,
    /// Blend half-length at each point (zero at the ends).
    blends: Vec<f64>,
}

impl BlendedPath {
    pub fn new(points: &[PathPoint], tolerance: f64) -> Result<Self> {
        let mut pts: Vec<PathPoint> = points.to_vec();
        pts.dedup();
        if pts.is_empty() {
            return Err(Error::invalid("empty path"));
        }
        let mut stations = vec![0.0];
        let mut directions = Vec::new();
        for w in pts.windows(2) {
            let d = sub(&w[1], &w[0]);
            let len = norm(&d);
            stations.push(stations.last().unwrap() + len);
            directions.push(d.map(|v| v / len));
        }
        let mut blends = vec![0.0; pts.len()];
        for i in 1..pts.len().saturating_sub(1) {
            let (d1, d2) = (&directions[i - 1], &directions[i]);
            let jump = sub(d2, d1).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if jump < 1e-12 {
                continue;
            }
            let room = 0.5 * (stations[i] - stations[i - 1]).min(stations[i + 1] - stations[i]);
            blends[i] = (tolerance / (BLEND_DEVIATION * jump)).min(room);
        }
        Ok(Self {
            points: pts,
            stations,
            directions,
            blends,
        })
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    pub fn points(&self) -> &[PathPoint] {
        &self.points
    }

    fn segment_at(&self, s: f64) -> usize {
        let k = self.stations.partition_point(|&st| st <= s);
        k.saturating_sub(1).min(self.directions.len().saturating_sub(1))
    }

    /// Waypoint whose blend zone contains `s`, with the blend coordinate `u`.
    fn blend_at(&self, s: f64) -> Option<(usize, f64)> {
        if self.directions.is_empty() {
            return None;
        }
        let k = self.segment_at(s);
        [k, k + 1].into_iter().find_map(|i| {
            let l = *self.blends.get(i)?;
            let st = self.stations[i];
            (l > 0.0 && s > st - l && s < st + l).then(|| (i, (s - (st - l)) / (2.0 * l)))
        })
    }

    /// Point of the programmed polyline at arc length `s`.
    pub fn polyline_position(&self, s: f64) -> PathPoint {
        if self.directions.is_empty() {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        let k = self.segment_at(s);
        let d = &self.directions[k];
        let p = &self.points[k];
        let ds = s - self.stations[k];
        std::array::from_fn(|i| p[i] + ds * d[i])
    }

    /// Point of the blended path at parameter `s`.
    pub fn position(&self, s: f64) -> PathPoint {
        if self.directions.is_empty() {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.length());
        match self.blend_at(s) {
            Some((i, u)) => {
                let l = self.blends[i];
                let (d1, d2, w) = (&self.directions[i - 1], &self.directions[i], &self.points[i]);
                let h = smoothstep_integral(u);
                std::array::from_fn(|j| w[j] - l * d1[j] + 2.0 * l * (u * d1[j] + (d2[j] - d1[j]) * h))
            }
            None => self.polyline_position(s),
        }
    }

    /// Tangent `dp/ds` of the blended path.
    pub fn direction(&self, s: f64) -> PathPoint {
        if self.directions.is_empty() {
            return [0.0; 5];
        }
        match self.blend_at(s) {
            Some((i, u)) => {
                let (d1, d2) = (&self.directions[i - 1], &self.directions[i]);
                let h = smoothstep(u);
                std::array::from_fn(|j| d1[j] + (d2[j] - d1[j]) * h)
            }
            None => self.directions[self.segment_at(s.clamp(0.0, self.length()))],
        }
    }

    /// Zones of constant speed cap and acceleration: straight runs and
    /// blends, in path order.
    fn zones(&self, feed: f64, vmax: &[f64; 5], amax: &[f64; 5]) -> Vec<Zone> {
        let mut zones = Vec::new();
        let axis_cap = |d: &PathPoint, limits: &[f64; 5]| {
            (0..5)
                .filter(|&i| d[i].abs() > 1e-15)
                .map(|i| limits[i] / d[i].abs())
                .fold(f64::INFINITY, f64::min)
        };
        for k in 0..self.directions.len() {
            let d = &self.directions[k];
            let start = self.stations[k] + self.blends[k];
            let end = self.stations[k + 1] - self.blends[k + 1];
            if end - start > 0.0 {
                zones.push(Zone {
                    length: end - start,
                    cap: feed.min(axis_cap(d, vmax)),
                    accel: axis_cap(d, amax),
                });
            }
            let i = k + 1;
            let l = self.blends.get(i).copied().unwrap_or(0.0);
            if l > 0.0 && i < self.directions.len() {
                let (d1, d2) = (&self.directions[i - 1], &self.directions[i]);
                let envelope: PathPoint = std::array::from_fn(|j| d1[j].abs().max(d2[j].abs()));
                let curvature_cap = (0..5)
                    .filter(|&j| (d2[j] - d1[j]).abs() > 1e-15)
                    .map(|j| {
                        let kappa = (d2[j] - d1[j]).abs() * SMOOTHSTEP_SLOPE / (2.0 * l);
                        (BLEND_ACCEL_SHARE * amax[j] / kappa).sqrt()
                    })
                    .fold(f64::INFINITY, f64::min);
                zones.push(Zone {
                    length: 2.0 * l,
                    cap: feed.min(axis_cap(&envelope, vmax)).min(curvature_cap),
                    accel: BLEND_ACCEL_SHARE * axis_cap(&envelope, amax),
                });
            }
        }
        zones
    }
}

#[derive(Debug, Clone, Copy)]
struct Zone {
    length: f64,
    cap: f64,
    accel: f64,
}

/// Exact accelerate–cruise–decelerate motion across one zone.
#[derive(Debug, Clone, Copy)]
struct ZoneMotion {
    s0: f64,
    t0: f64,
    v0: f64,
    peak: f64,
    accel: f64,
    d_acc: f64,
    d_cruise: f64,
    t_acc: f64,
    t_cruise: f64,
    t_dec: f64,
    length: f64,
}

impl ZoneMotion {
    fn duration(&self) -> f64 {
        self.t_acc + self.t_cruise + self.t_dec
    }

    /// Distance and speed `tau` seconds into the zone.
    fn state(&self, tau: f64) -> (f64, f64) {
        let a = self.accel;
        if tau <= self.t_acc {
            (self.v0 * tau + 0.5 * a * tau * tau, self.v0 + a * tau)
        } else if tau <= self.t_acc + self.t_cruise {
            (self.d_acc + self.peak * (tau - self.t_acc), self.peak)
        } else {
            let t = (tau - self.t_acc - self.t_cruise).min(self.t_dec);
            let s = self.d_acc + self.d_cruise + self.peak * t - 0.5 * a * t * t;
            (s.min(self.length), self.peak - a * t)
        }
    }
}

/// Feed profile and geometry of a planned program.
#[derive(Debug, Clone)]
pub struct PlannedTrajectory {
    pub path: BlendedPath,
    motions: Vec<ZoneMotion>,
    lead_in: f64,
    lead_out: f64,
    motion_time: f64,
}

impl PlannedTrajectory {
    /// Total time including both dwells.
    pub fn duration(&self) -> f64 {
        self.lead_in + self.motion_time + self.lead_out
    }

    pub fn motion_time(&self) -> f64 {
        self.motion_time
    }

    /// Path parameter and path speed (units/s) at time `t`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let tau = t - self.lead_in;
        if tau <= 0.0 || self.motions.is_empty() {
            return (0.0, 0.0);
        }
        if tau >= self.motion_time {
            return (self.path.length(), 0.0);
        }
        let k = self.motions.partition_point(|m| m.t0 <= tau).saturating_sub(1);
        let m = &self.motions[k];
        let (ds, v) = m.state(tau - m.t0);
        (m.s0 + ds, v)
    }

    pub fn position_at(&self, t: f64) -> PathPoint {
        self.path.position(self.state_at(t).0)
    }

    /// Highest path speed reached (units/s).
    pub fn peak_speed(&self) -> f64 {
        self.motions.iter().fold(0.0, |m, z| m.max(z.peak))
    }
}

/// Builds the blended path and its feed profile.
pub fn plan_profile(prog: &TrajectoryProgram) -> Result<PlannedTrajectory> {
    prog.validate()?;
    let path = BlendedPath::new(&prog.waypoints(), prog.corner_tolerance)?;
    let feed = prog.feed / 60.0;
    let vmax = prog.velocity_limits.map(|v| v / 60.0);
    let zones = path.zones(feed, &vmax, &prog.acceleration_limits);
    if let Some(z) = zones.iter().find(|z| !(z.cap > 0.0 && z.accel > 0.0 && z.cap.is_finite() && z.accel.is_finite())) {
        return Err(Error::invalid(format!(
            "infeasible feed profile: speed cap {} and acceleration {} on a zone of length {}",
            z.cap, z.accel, z.length
        )));
    }

    // Node speeds: forward then backward pass.
    let n = zones.len();
    let mut v = vec![0.0; n + 1];
    for k in 1..n {
        v[k] = zones[k - 1].cap.min(zones[k].cap);
    }
    for k in 0..n {
        let reach = (v[k] * v[k] + 2.0 * zones[k].accel * zones[k].length).sqrt();
        v[k + 1] = v[k + 1].min(reach);
    }
    for k in (0..n).rev() {
        let reach = (v[k + 1] * v[k + 1] + 2.0 * zones[k].accel * zones[k].length).sqrt();
        v[k] = v[k].min(reach);
    }

    let mut motions = Vec::with_capacity(n);
    let (mut s0, mut t0) = (0.0, 0.0);
    for (k, z) in zones.iter().enumerate() {
        let (v0, v1, a) = (v[k], v[k + 1], z.accel);
        let peak = z.cap.min(((v0 * v0 + v1 * v1) / 2.0 + a * z.length).sqrt()).max(v0).max(v1);
        let d_acc = ((peak * peak - v0 * v0) / (2.0 * a)).max(0.0);
        let d_dec = ((peak * peak - v1 * v1) / (2.0 * a)).max(0.0);
        let d_cruise = (z.length - d_acc - d_dec).max(0.0);
        let m = ZoneMotion {
            s0,
            t0,
            v0,
            peak,
            accel: a,
            d_acc,
            d_cruise,
            t_acc: (peak - v0) / a,
            t_cruise: if peak > 0.0 { d_cruise / peak } else { 0.0 },
            t_dec: (peak - v1) / a,
            length: z.length,
        };
        s0 += z.length;
        t0 += m.duration();
        motions.push(m);
    }

    Ok(PlannedTrajectory {
        path,
        motions,
        lead_in: prog.dwell[0],
        lead_out: prog.dwell[1],
        motion_time: t0,
    })
}

/// Controller setpoints sampled every `nc_cycle` seconds from `t = 0`.
pub fn plan_trajectory(prog: &TrajectoryProgram, nc_cycle: f64) -> Result<SignalSet> {
    if !(nc_cycle.is_finite() && nc_cycle > 0.0) {
        return Err(Error::invalid(format!("NC cycle must be positive, got {nc_cycle}")));
    }
    let plan = plan_profile(prog)?;
    sample_plan(&plan, nc_cycle)
}

pub(crate) fn sample_plan(plan: &PlannedTrajectory, nc_cycle: f64) -> Result<SignalSet> {
    let count = (plan.duration() / nc_cycle).ceil() as usize + 1;
    let mut axes: [Vec<f64>; 5] = Default::default();
    for k in 0..count {
        let p = plan.position_at(k as f64 * nc_cycle);
        for (i, axis) in axes.iter_mut().enumerate() {
            axis.push(if i >= 3 { p[i].to_radians() } else { p[i] });
        }
    }
    let channels = JOINT_CHANNELS
        .iter()
        .zip(axes)
        .enumerate()
        .map(|(i, (name, data))| {
            let unit = if i < 3 { ChannelUnit::Millimetre } else { ChannelUnit::Radian };
            Channel::new(*name, unit, data)
        })
        .collect();
    SignalSet::new(1.0 / nc_cycle, 0.0, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::virtual_machine::program::{AxisLimits, TrajectoryProgram};

    fn limits() -> AxisLimits {
        AxisLimits {
            tag: [0.0; 5],
            ..Default::default()
        }
    }

    #[test]
    fn blend_rejoins_polyline() {
        let pts = [[0.0; 5], [10.0, 0.0, 0.0, 0.0, 0.0], [10.0, 10.0, 0.0, 0.0, 0.0]];
        let path = BlendedPath::new(&pts, 0.01).unwrap();
        let l = path.blends[1];
        assert!(l > 0.0);
        for s in [10.0 - l, 10.0 + l] {
            let (p, q) = (path.position(s), path.polyline_position(s));
            assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        let mid = path.position(10.0);
        let dev = BLEND_DEVIATION * l;
        assert!((mid[0] - (10.0 - dev)).abs() < 1e-12 && (mid[1] - dev).abs() < 1e-12, "{mid:?}");
    }

    #[test]
    fn single_axis_trapezoid() {
        let prog = TrajectoryProgram::from_points(&[[0.0; 5], [100.0, 0.0, 0.0, 0.0, 0.0]], 6000.0, &limits()).unwrap();
        let plan = plan_profile(&prog).unwrap();
        let (v, a) = (100.0, 10_000.0);
        assert!((plan.peak_speed() - v).abs() < 1e-12);
        let expected = 100.0 / v + v / a;
        assert!((plan.motion_time() - expected).abs() < 1e-12);
    }

    #[test]
    fn velocity_limit_caps_speed() {
        let mut l = limits();
        l.velocity[0] = 3000.0;
        let prog = TrajectoryProgram::from_points(&[[0.0; 5], [100.0, 0.0, 0.0, 0.0, 0.0]], 6000.0, &l).unwrap();
        assert!((plan_profile(&prog).unwrap().peak_speed() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_program_is_tag_only() {
        let l = AxisLimits::default();
        let mut prog = TrajectoryProgram::from_points(&[[0.0; 5], [1.0, 0.0, 0.0, 0.0, 0.0]], 1000.0, &l).unwrap();
        prog.segments[0].end = [0.0; 5];
        let set = plan_trajectory(&prog, 0.003).unwrap();
        let x = &set.channel("X").unwrap().data;
        assert_eq!(x[0], 0.0);
        assert_eq!(*x.last().unwrap(), 0.0);
        let reach = x.iter().cloned().fold(0.0, f64::max);
        // sampled at the NC cycle, so the 1.99 blend apex is missed by a few µm
        assert!(reach > 1.98 && reach <= 1.99 + 1e-12, "{reach}");
        assert!(set.channel("Y").unwrap().data.iter().all(|v| *v == 0.0));
    }
}
