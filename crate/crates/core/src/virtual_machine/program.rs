use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::MachineGeometry;

/// A point of the joint-space path: X, Y, Z (mm), A, C (degrees).
pub type PathPoint = [f64; 5];

/// Axis names in path order.
pub const AXES: [&str; 5] = ["X", "Y", "Z", "A", "C"];

/// Default axial corner tolerance (mm, or degrees for rotary axes).
pub const DEFAULT_CORNER_TOLERANCE: f64 = 0.010;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: PathPoint,
    pub end: PathPoint,
}

/// Joint-space linear segments run at a programmed feed.
///
/// Path length is measured over all five axes with one degree counting as
/// one millimetre, and the feed applies to that combined length. Velocity
/// limits are in units/min, acceleration limits in units/s².
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryProgram {
    pub segments: Vec<Segment>,
    /// Programmed feed rate (mm/min).
    pub feed: f64,
    pub corner_tolerance: f64,
    pub velocity_limits: [f64; 5],
    pub acceleration_limits: [f64; 5],
    /// Excursion of the synchronisation tag move, run out and back from the
    /// first point before the program.
    pub tag: PathPoint,
    /// Standstill before and after the motion (s).
    pub dwell: [f64; 2],
}

impl TrajectoryProgram {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("a program needs at least one segment"));
        }
        let finite = self
            .segments
            .iter()
            .flat_map(|s| s.start.iter().chain(&s.end))
            .chain(&self.tag)
            .chain(&self.velocity_limits)
            .chain(&self.acceleration_limits)
            .chain(&self.dwell)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("trajectory program".into()));
        }
        for (k, pair) in self.segments.windows(2).enumerate() {
            if pair[0].end != pair[1].start {
                return Err(Error::invalid(format!(
                    "segment {} ends at {:?} but segment {} starts at {:?}",
                    k,
                    pair[0].end,
                    k + 1,
                    pair[1].start
                )));
            }
        }
        if !(self.feed.is_finite() && self.feed > 0.0) {
            return Err(Error::invalid(format!("feed rate must be positive, got {}", self.feed)));
        }
        if !(self.corner_tolerance > 0.0) {
            return Err(Error::invalid("corner tolerance must be positive"));
        }
        if self.velocity_limits.iter().chain(&self.acceleration_limits).any(|v| *v <= 0.0) {
            return Err(Error::invalid("axis velocity and acceleration limits must be positive"));
        }
        if self.dwell.iter().any(|d| *d < 0.0) {
            return Err(Error::invalid("dwell times must be non-negative"));
        }
        Ok(())
    }

    /// The full point sequence including the tag move, with repeated points
    /// removed.
    pub fn waypoints(&self) -> Vec<PathPoint> {
        let first = self.segments[0].start;
        let tag_end: PathPoint = std::array::from_fn(|i| first[i] + self.tag[i]);
        let mut pts = vec![first, tag_end, first];
        pts.extend(self.segments.iter().map(|s| s.end));
        pts.dedup();
        pts
    }

    /// Programme from a polyline of points.
    pub fn from_points(points: &[PathPoint], feed: f64, limits: &AxisLimits) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a polyline needs at least two points"));
        }
        let prog = Self {
            segments: points
                .windows(2)
                .map(|w| Segment {
                    start: w[0],
                    end: w[1],
                })
                .collect(),
            feed,
            corner_tolerance: limits.corner_tolerance,
            velocity_limits: limits.velocity,
            acceleration_limits: limits.acceleration,
            tag: limits.tag,
            dwell: limits.dwell,
        };
        prog.validate()?;
        Ok(prog)
    }
}

/// Feed-independent settings of a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AxisLimits {
    pub corner_tolerance: f64,
    /// units/min
    pub velocity: [f64; 5],
    /// units/s²
    pub acceleration: [f64; 5],
    pub tag: PathPoint,
    pub dwell: [f64; 2],
}

impl Default for AxisLimits {
    fn default() -> Self {
        Self {
            corner_tolerance: DEFAULT_CORNER_TOLERANCE,
            velocity: [40_000.0; 5],
            acceleration: [10_000.0; 5],
            tag: [2.0, 0.0, 0.0, 0.0, 0.0],
            dwell: [0.05, 0.15],
        }
    }
}

/// Rotary waypoints `(A, C)` in degrees of the built-in test path: a
/// 17-segment loop with a near-square corner that drives all five axes.
pub const DEFAULT_ROTARY_WAYPOINTS: [(f64, f64); 18] = [
    (0.0, 0.0),
    (0.0, 10.0),
    (0.0, 20.0),
    (3.0, 26.0),
    (6.0, 30.0),
    (10.0, 30.0),
    (14.0, 30.0),
    (18.0, 30.0),
    (18.0, 20.0),
    (18.0, 10.0),
    (15.0, 5.0),
    (12.0, 0.0),
    (9.0, -5.0),
    (6.0, -10.0),
    (2.0, -14.0),
    (-2.0, -10.0),
    (-4.0, -4.0),
    (-4.0, 4.0),
];

/// The built-in path for `geom`: at each waypoint the linear axes place the
/// tool centre point on the master ball.
pub fn default_path(geom: &MachineGeometry) -> Result<Vec<PathPoint>> {
    DEFAULT_ROTARY_WAYPOINTS
        .iter()
        .map(|&(a, c)| {
            let p = geom.linear_axes_for(a.to_radians(), c.to_radians())?;
            Ok([p.x, p.y, p.z, a, c])
        })
        .collect()
}
