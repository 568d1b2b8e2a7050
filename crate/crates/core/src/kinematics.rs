//! Direct kinematics of a WCAYFXZT five-axis machine, the link-error
//! Jacobian, and least-squares identification of the eight link errors.
//!
//! The machine is modelled as two branches hanging off the bed frame F:
//!
//! * tool branch `F → X → Z → T`: the X slide translates along x, the Z
//!   slide along z, and the virtual tool centre point `P_t` sits
//!   `tool_length` below the spindle nose;
//! * table branch `F → Y → A → C → W`: the Y slide translates along y, the A
//!   table swivels about a line tilted by `a_tilt` from x towards z, the C
//!   table turns about its own z axis, and the master ball centre `P_w` sits
//!   at `ball_offset` in the C frame.
//!
//! `τ = P_t − P_w` is expressed in F.
//!
//! # Link-error conventions
//!
//! The eight link errors are inserted as exact rotations and offsets:
//!
//! | index | name | effect |
//! |---|---|---|
//! | 0 | `δγ_Y` | Y stage frame rotated about z of F (pivot at F origin) |
//! | 1 | `δα_Z` | Z stage frame rotated about x relative to the X stage |
//! | 2 | `δβ_Z` | Z stage frame rotated about y relative to the X stage |
//! | 3 | `δβ_A` | A axis line tilted about y (pivot on the line) |
//! | 4 | `δγ_A` | A axis line tilted about z |
//! | 5 | `δα_C` | C axis line tilted about x of the A stage |
//! | 6 | `δβ_C` | C axis line tilted about y of the A stage |
//! | 7 | `δy_C` | C stage offset from the A stage along y of the A stage |
//!
//! A tilted axis line `E·u` gives the joint rotation `E·R(u, θ)·Eᵀ`, so tilts
//! have no effect at a zero joint angle. Positive angles follow the
//! right-hand rule. Signs may differ from other published conventions.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Rotation3, SMatrix, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::lsq;

/// Kinematic structure string supported by [`MachineGeometry`].
pub const STRUCTURE: &str = "WCAYFXZT";

/// Default condition-number threshold for link-error identification.
pub const DEFAULT_MAX_CONDITION: f64 = 1e8;

/// Nominal geometry of a WCAYFXZT machine. Lengths in mm, angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineGeometry {
    /// Tilt of the A rotation axis from x towards z.
    pub a_tilt: f64,
    /// F origin to X stage origin (at X = 0).
    pub x_offset: Vector3<f64>,
    /// X stage origin to Z stage origin (at Z = 0).
    pub z_offset: Vector3<f64>,
    /// Z stage origin to spindle nose.
    pub spindle_offset: Vector3<f64>,
    /// Spindle nose to `P_t`, along −z.
    pub tool_length: f64,
    /// F origin to Y stage origin (at Y = 0).
    pub y_offset: Vector3<f64>,
    /// Y stage origin to the pivot point on the A axis line.
    pub a_offset: Vector3<f64>,
    /// A pivot to the pivot point on the C axis line (A stage frame).
    pub c_offset: Vector3<f64>,
    /// C pivot to the master ball centre `P_w` (C frame).
    pub ball_offset: Vector3<f64>,
}

impl Default for MachineGeometry {
    /// A compact trunnion-style layout with a 45° swivel axis.
    fn default() -> Self {
        Self {
            a_tilt: 45f64.to_radians(),
            x_offset: Vector3::zeros(),
            z_offset: Vector3::new(0.0, 0.0, 300.0),
            spindle_offset: Vector3::zeros(),
            tool_length: 150.0,
            y_offset: Vector3::zeros(),
            a_offset: Vector3::zeros(),
            c_offset: Vector3::new(0.0, 0.0, 120.0),
            ball_offset: Vector3::new(40.0, 0.0, 90.0),
        }
    }
}

impl MachineGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_tilt > 0.0 && self.a_tilt < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "A-axis tilt must lie strictly between 0° and 90°, got {}°",
                self.a_tilt.to_degrees()
            )));
        }
        if !self.tool_length.is_finite() || self.tool_length < 0.0 {
            return Err(Error::invalid(format!(
                "tool length must be finite and non-negative, got {}",
                self.tool_length
            )));
        }
        let offsets = [
            ("x_offset", &self.x_offset),
            ("z_offset", &self.z_offset),
            ("spindle_offset", &self.spindle_offset),
            ("y_offset", &self.y_offset),
            ("a_offset", &self.a_offset),
            ("c_offset", &self.c_offset),
            ("ball_offset", &self.ball_offset),
        ];
        for (name, v) in offsets {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("geometry {name}")));
            }
        }
        Ok(())
    }

    /// Unit direction of the A rotation axis in the Y stage frame.
    pub fn a_axis(&self) -> Unit<Vector3<f64>> {
        Unit::new_unchecked(Vector3::new(self.a_tilt.cos(), 0.0, self.a_tilt.sin()))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GeometryFile::from(self))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Solves the three linear axes so that the nominal `τ` vanishes at the
    /// given rotary angles, i.e. the tool centre point sits on the ball.
    pub fn linear_axes_for(&self, a: f64, c: f64) -> Result<JointPose> {
        let base = JointPose::new(0.0, 0.0, 0.0, a, c)?;
        let tau = dkt(&base, self)?;
        // τ is affine in X, Y, Z with unit slopes +x, −y, +z.
        JointPose::new(-tau.x, tau.y, -tau.z, a, c)
    }
}

/// On-disk form of [`MachineGeometry`]; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub structure: String,
    pub a_tilt_deg: f64,
    pub x_offset_mm: [f64; 3],
    pub z_offset_mm: [f64; 3],
    pub spindle_offset_mm: [f64; 3],
    pub tool_length_mm: f64,
    pub y_offset_mm: [f64; 3],
    pub a_offset_mm: [f64; 3],
    pub c_offset_mm: [f64; 3],
    pub ball_offset_mm: [f64; 3],
}

impl From<&MachineGeometry> for GeometryFile {
    fn from(g: &MachineGeometry) -> Self {
        Self {
            structure: STRUCTURE.to_string(),
            a_tilt_deg: g.a_tilt.to_degrees(),
            x_offset_mm: g.x_offset.into(),
            z_offset_mm: g.z_offset.into(),
            spindle_offset_mm: g.spindle_offset.into(),
            tool_length_mm: g.tool_length,
            y_offset_mm: g.y_offset.into(),
            a_offset_mm: g.a_offset.into(),
            c_offset_mm: g.c_offset.into(),
            ball_offset_mm: g.ball_offset.into(),
        }
    }
}

impl TryFrom<GeometryFile> for MachineGeometry {
    type Error = Error;

    fn try_from(f: GeometryFile) -> Result<Self> {
        if f.structure != STRUCTURE {
            return Err(Error::invalid(format!(
                "unsupported kinematic structure `{}` (expected {STRUCTURE})",
                f.structure
            )));
        }
        let g = MachineGeometry {
            a_tilt: f.a_tilt_deg.to_radians(),
            x_offset: f.x_offset_mm.into(),
            z_offset: f.z_offset_mm.into(),
            spindle_offset: f.spindle_offset_mm.into(),
            tool_length: f.tool_length_mm,
            y_offset: f.y_offset_mm.into(),
            a_offset: f.a_offset_mm.into(),
            c_offset: f.c_offset_mm.into(),
            ball_offset: f.ball_offset_mm.into(),
        };
        g.validate()?;
        Ok(g)
    }
}

/// Joint values: X, Y, Z in mm, A and C in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub a: f64,
    pub c: f64,
}

impl JointPose {
    pub fn new(x: f64, y: f64, z: f64, a: f64, c: f64) -> Result<Self> {
        let pose = Self { x, y, z, a, c };
        pose.validate()?;
        Ok(pose)
    }

    /// Same as [`JointPose::new`] with A and C given in degrees.
    pub fn from_degrees(x: f64, y: f64, z: f64, a_deg: f64, c_deg: f64) -> Result<Self> {
        Self::new(x, y, z, a_deg.to_radians(), c_deg.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("joint pose {self:?}")))
        }
    }

    /// `[X, Y, Z, A, C]`.
    pub fn as_array(&self) -> [f64; 5] {
        [self.x, self.y, self.z, self.a, self.c]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            a: v[3],
            c: v[4],
        }
    }
}

/// The eight link errors `δq_l`, ordered
/// `(δγ_Y, δα_Z, δβ_Z, δβ_A, δγ_A, δα_C, δβ_C, δy_C)`.
/// Angles in radians, `δy_C` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinkErrorVector(pub [f64; 8]);

impl LinkErrorVector {
    pub const NAMES: [&'static str; 8] = [
        "gamma_Y", "alpha_Z", "beta_Z", "beta_A", "gamma_A", "alpha_C", "beta_C", "y_C",
    ];
    /// Internal units of each parameter.
    pub const UNITS: [&'static str; 8] = ["rad", "rad", "rad", "rad", "rad", "rad", "rad", "mm"];

    pub fn zero() -> Self {
        Self([0.0; 8])
    }

    pub fn new(values: [f64; 8]) -> Result<Self> {
        let v = Self(values);
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("link error vector".into()))
        }
    }

    /// Unit vector along parameter `j` scaled by `h`.
    pub fn basis(j: usize, h: f64) -> Self {
        let mut v = [0.0; 8];
        v[j] = h;
        Self(v)
    }

    pub fn as_vector(&self) -> SMatrix<f64, 8, 1> {
        SMatrix::from(self.0)
    }

    pub fn gamma_y(&self) -> f64 {
        self.0[0]
    }
    pub fn alpha_z(&self) -> f64 {
        self.0[1]
    }
    pub fn beta_z(&self) -> f64 {
        self.0[2]
    }
    pub fn beta_a(&self) -> f64 {
        self.0[3]
    }
    pub fn gamma_a(&self) -> f64 {
        self.0[4]
    }
    pub fn alpha_c(&self) -> f64 {
        self.0[5]
    }
    pub fn beta_c(&self) -> f64 {
        self.0[6]
    }
    pub fn y_c(&self) -> f64 {
        self.0[7]
    }

    /// Values in report units: µrad for angles, µm for `δy_C`.
    pub fn to_micro(&self) -> [f64; 8] {
        let mut out = self.0.map(|v| v * 1e6);
        out[7] = self.0[7] * 1e3;
        out
    }
}

impl fmt::Display for LinkErrorVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let micro = self.to_micro();
        for (j, name) in Self::NAMES.iter().enumerate() {
            let unit = if j == 7 { "um" } else { "urad" };
            if j > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{name} = {:.3} {unit}", micro[j])?;
        }
        Ok(())
    }
}

/// 3×8 sensitivity of `τ` to the link errors at one pose.
pub type LinkJacobian = SMatrix<f64, 3, 8>;

fn rot_x(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), angle)
}

fn rot_y(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), angle)
}

fn rot_z(angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle)
}

/// Intermediate quantities of the nominal chain shared by [`dkt`] and
/// [`link_jacobian`].
struct NominalChain {
    /// Z stage origin to `P_t`, before the X–Z frame rotation.
    tool_arm: Vector3<f64>,
    p_t: Vector3<f64>,
    p_w: Vector3<f64>,
    rot_a: Rotation3<f64>,
    rot_c: Rotation3<f64>,
    /// A pivot to `P_w` in the unrotated A stage frame.
    a_arm: Vector3<f64>,
}

fn nominal_chain(pose: &JointPose, geom: &MachineGeometry) -> NominalChain {
    let tool_arm = geom.z_offset + Vector3::z() * pose.z + geom.spindle_offset
        - Vector3::z() * geom.tool_length;
    let p_t = geom.x_offset + Vector3::x() * pose.x + tool_arm;

    let rot_c = rot_z(pose.c);
    let rot_a = Rotation3::from_axis_angle(&geom.a_axis(), pose.a);
    let a_arm = geom.c_offset + rot_c * geom.ball_offset;
    let p_w = geom.y_offset + Vector3::y() * pose.y + geom.a_offset + rot_a * a_arm;

    NominalChain {
        tool_arm,
        p_t,
        p_w,
        rot_a,
        rot_c,
        a_arm,
    }
}

fn check_inputs(pose: &JointPose, geom: &MachineGeometry) -> Result<()> {
    pose.validate()?;
    geom.validate()
}

/// Nominal direct kinematic transform: `τ_nom = P_t − P_w` in the bed frame.
pub fn dkt(pose: &JointPose, geom: &MachineGeometry) -> Result<Vector3<f64>> {
    check_inputs(pose, geom)?;
    Ok(dkt_unchecked(pose, geom))
}

pub(crate) fn dkt_unchecked(pose: &JointPose, geom: &MachineGeometry) -> Vector3<f64> {
    let chain = nominal_chain(pose, geom);
    chain.p_t - chain.p_w
}

/// Direct kinematics with the eight link errors inserted as exact rotations
/// and offsets (see the module documentation for conventions).
pub fn dkt_with_errors(
    pose: &JointPose,
    geom: &MachineGeometry,
    dq: &LinkErrorVector,
) -> Result<Vector3<f64>> {
    check_inputs(pose, geom)?;
    dq.validate()?;
    Ok(dkt_with_errors_unchecked(pose, geom, dq))
}

pub(crate) fn dkt_with_errors_unchecked(
    pose: &JointPose,
    geom: &MachineGeometry,
    dq: &LinkErrorVector,
) -> Vector3<f64> {
    // Tool branch.
    let tool_arm = geom.z_offset + Vector3::z() * pose.z + geom.spindle_offset
        - Vector3::z() * geom.tool_length;
    let z_frame = rot_x(dq.alpha_z()) * rot_y(dq.beta_z());
    let p_t = geom.x_offset + Vector3::x() * pose.x + z_frame * tool_arm;

    // Table branch.
    let c_tilt = rot_x(dq.alpha_c()) * rot_y(dq.beta_c());
    let rot_c = c_tilt * rot_z(pose.c) * c_tilt.inverse();
    let a_tilt = rot_y(dq.beta_a()) * rot_z(dq.gamma_a());
    let rot_a = a_tilt * Rotation3::from_axis_angle(&geom.a_axis(), pose.a) * a_tilt.inverse();
    let a_arm = geom.c_offset + Vector3::y() * dq.y_c() + rot_c * geom.ball_offset;
    let p_w = rot_z(dq.gamma_y())
        * (geom.y_offset + Vector3::y() * pose.y + geom.a_offset + rot_a * a_arm);

    p_t - p_w
}

/// Analytic first-order sensitivity of `τ` to `δq_l` at `dq = 0`.
pub fn link_jacobian(pose: &JointPose, geom: &MachineGeometry) -> Result<LinkJacobian> {
    check_inputs(pose, geom)?;
    Ok(link_jacobian_unchecked(pose, geom))
}

pub(crate) fn link_jacobian_unchecked(pose: &JointPose, geom: &MachineGeometry) -> LinkJacobian {
    let ch = nominal_chain(pose, geom);
    let (ex, ey, ez) = (Vector3::x(), Vector3::y(), Vector3::z());

    // Derivative of E·R·Eᵀ applied to w, for E = exp([g]×·ε) at ε = 0.
    let tilt = |g: &Vector3<f64>, r: &Rotation3<f64>, w: &Vector3<f64>| {
        g.cross(&(r * w)) - r * g.cross(w)
    };

    let ball = geom.ball_offset;
    let cols = [
        -ez.cross(&ch.p_w),
        ex.cross(&ch.tool_arm),
        ey.cross(&ch.tool_arm),
        -tilt(&ey, &ch.rot_a, &ch.a_arm),
        -tilt(&ez, &ch.rot_a, &ch.a_arm),
        -(ch.rot_a * tilt(&ex, &ch.rot_c, &ball)),
        -(ch.rot_a * tilt(&ey, &ch.rot_c, &ball)),
        -(ch.rot_a * ey),
    ];
    LinkJacobian::from_columns(&cols)
}

/// Outcome of [`identify_link_errors`].
#[derive(Debug, Clone)]
pub struct LinkIdentification {
    pub dq: LinkErrorVector,
    /// Per-point residuals `deviations − J·dq`.
    pub residual: DeviationMatrix,
    /// Condition number of the column-equilibrated stacked Jacobian.
    pub condition_number: f64,
    /// Least-squares standard errors of each parameter, from the residual
    /// variance.
    pub standard_errors: [f64; 8],
    /// RMS of the residuals over all components (mm).
    pub residual_rms: f64,
}

/// Stacks the link Jacobians over all poses and solves the `(3n)×8`
/// ordinary least-squares problem against the flattened deviations.
pub fn identify_link_errors(
    poses: &[JointPose],
    deviations: &DeviationMatrix,
    geom: &MachineGeometry,
    max_condition: f64,
) -> Result<LinkIdentification> {
    geom.validate()?;
    if poses.len() != deviations.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} poses vs {} deviation rows",
            poses.len(),
            deviations.nrows()
        )));
    }
    if poses.len() < 8 {
        return Err(Error::invalid(format!(
            "link-error identification needs at least 8 poses, got {}",
            poses.len()
        )));
    }
    for pose in poses {
        pose.validate()?;
    }

    let n = poses.len();
    let mut a = DMatrix::zeros(3 * n, 8);
    let mut b = DVector::zeros(3 * n);
    for (k, (pose, dev)) in poses.iter().zip(deviations.rows()).enumerate() {
        let j = link_jacobian_unchecked(pose, geom);
        a.view_mut((3 * k, 0), (3, 8)).copy_from(&j);
        b.rows_mut(3 * k, 3).copy_from(dev);
    }

    let sol = lsq::solve(&a, &b, max_condition)?;
    let mut values = [0.0; 8];
    values.copy_from_slice(sol.x.as_slice());
    let dq = LinkErrorVector(values);

    let dof = (3 * n).saturating_sub(8).max(1) as f64;
    let sigma2 = sol.residual_sum_squares / dof;
    let mut standard_errors = [0.0; 8];
    for (j, se) in standard_errors.iter_mut().enumerate() {
        *se = (sigma2 * sol.normal_inverse[(j, j)]).sqrt();
    }

    let residual: DeviationMatrix = poses
        .iter()
        .zip(deviations.rows())
        .map(|(pose, dev)| dev - link_jacobian_unchecked(pose, geom) * dq.as_vector())
        .collect();

    Ok(LinkIdentification {
        dq,
        residual,
        condition_number: sol.condition,
        standard_errors,
        residual_rms: (sol.residual_sum_squares / (3 * n) as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn bare_geometry() -> MachineGeometry {
        MachineGeometry {
            a_tilt: 45f64.to_radians(),
            x_offset: Vector3::zeros(),
            z_offset: Vector3::zeros(),
            spindle_offset: Vector3::zeros(),
            tool_length: 0.0,
            y_offset: Vector3::zeros(),
            a_offset: Vector3::zeros(),
            c_offset: Vector3::zeros(),
            ball_offset: Vector3::zeros(),
        }
    }

    #[test]
    fn identity_pose_gives_static_branch_offset() {
        let g = MachineGeometry::default();
        let tau = dkt(&JointPose::default(), &g).unwrap();
        let p_t = g.x_offset + g.z_offset + g.spindle_offset - Vector3::z() * g.tool_length;
        let p_w = g.y_offset + g.a_offset + g.c_offset + g.ball_offset;
        assert!((tau - (p_t - p_w)).norm() < 1e-12);
    }

    #[test]
    fn x_is_prismatic_along_x() {
        let g = MachineGeometry::default();
        let base = JointPose::from_degrees(5.0, -3.0, 20.0, 12.0, 40.0).unwrap();
        let moved = JointPose { x: base.x + 10.0, ..base };
        let d = dkt(&moved, &g).unwrap() - dkt(&base, &g).unwrap();
        assert!((d - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn c_rotation_hand_evaluated() {
        let g = MachineGeometry {
            ball_offset: Vector3::new(10.0, 0.0, 0.0),
            ..bare_geometry()
        };
        let pose = JointPose::new(0.0, 0.0, 0.0, 0.0, FRAC_PI_2).unwrap();
        // P_t = 0, P_w = Rz(90°)·(10, 0, 0) = (0, 10, 0).
        let tau = dkt(&pose, &g).unwrap();
        assert!((tau - Vector3::new(0.0, -10.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let g = MachineGeometry::default();
        let bad = JointPose {
            a: f64::NAN,
            ..JointPose::default()
        };
        assert!(dkt(&bad, &g).is_err());
        let dq = LinkErrorVector([0.0, f64::INFINITY, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(dkt_with_errors(&JointPose::default(), &g, &dq).is_err());
    }

    #[test]
    fn geometry_invariants_enforced() {
        let mut g = MachineGeometry {
            a_tilt: FRAC_PI_2,
            ..MachineGeometry::default()
        };
        assert!(g.validate().is_err());
        g.a_tilt = 0.3;
        g.tool_length = -1.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn zero_perturbation_matches_nominal() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(12.0, -40.0, 7.0, 33.0, -120.0).unwrap();
        let a = dkt(&pose, &g).unwrap();
        let b = dkt_with_errors(&pose, &g, &LinkErrorVector::zero()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn y_c_offset_shifts_along_y_at_a_zero() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(3.0, 8.0, -5.0, 0.0, 71.0).unwrap();
        let dq = LinkErrorVector::basis(7, 0.1);
        let d = dkt_with_errors(&pose, &g, &dq).unwrap() - dkt(&pose, &g).unwrap();
        // P_w moves by +0.1 along y of the A stage frame, which is F's y at A = 0.
        assert!((d - Vector3::new(0.0, -0.1, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn squareness_xy_first_order_magnitude() {
        let g = bare_geometry();
        let pose = JointPose::new(0.0, 200.0, 0.0, 0.0, 0.0).unwrap();
        let dq = LinkErrorVector::basis(0, 100e-6);
        let d = dkt_with_errors(&pose, &g, &dq).unwrap() - dkt(&pose, &g).unwrap();
        // Exact: 200·(sin δ, 1 − cos δ); first order 200·δ = 0.02 mm.
        assert!((d.norm() - 0.02).abs() < 1e-9);
        let exact = 200.0 * ((100e-6f64).sin().powi(2) + (1.0 - (100e-6f64).cos()).powi(2)).sqrt();
        assert!((d.norm() - exact).abs() < 1e-12);
    }

    #[test]
    fn dkt_periodic_in_rotary_axes() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(1.0, 2.0, 3.0, 25.0, 140.0).unwrap();
        let base = dkt(&pose, &g).unwrap();
        let a_wrapped = JointPose { a: pose.a + 2.0 * PI, ..pose };
        let c_wrapped = JointPose { c: pose.c + 2.0 * PI, ..pose };
        assert!((dkt(&a_wrapped, &g).unwrap() - base).norm() < 1e-12);
        assert!((dkt(&c_wrapped, &g).unwrap() - base).norm() < 1e-12);
    }

    #[test]
    fn jacobian_has_eight_columns_and_unit_offset_column() {
        let g = MachineGeometry::default();
        let pose = JointPose::from_degrees(0.0, 10.0, 0.0, 30.0, 50.0).unwrap();
        let j = link_jacobian(&pose, &g).unwrap();
        assert_eq!(j.ncols(), 8);
        assert!((j.column(7).norm() - 1.0).abs() < 1e-12);
        assert_eq!(j * LinkErrorVector::zero().as_vector(), Vector3::zeros());
    }

    #[test]
    fn linear_axes_place_tool_on_ball() {
        let g = MachineGeometry::default();
        let pose = g.linear_axes_for(0.4, -1.1).unwrap();
        assert!(dkt(&pose, &g).unwrap().norm() < 1e-12);
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = MachineGeometry::default();
        let back = MachineGeometry::from_json_str(&g.to_json_string().unwrap()).unwrap();
        assert!((back.a_tilt - g.a_tilt).abs() < 1e-15);
        assert_eq!(back.ball_offset, g.ball_offset);
    }

    #[test]
    fn geometry_json_rejects_other_structures() {
        let mut file = GeometryFile::from(&MachineGeometry::default());
        file.structure = "WCBXFZYT".into();
        let text = serde_json::to_string(&file).unwrap();
        assert!(MachineGeometry::from_json_str(&text).is_err());
    }

    #[test]
    fn identification_needs_eight_rows() {
        let g = MachineGeometry::default();
        let poses = vec![JointPose::default(); 3];
        let dev = DeviationMatrix::zeros(3);
        assert!(identify_link_errors(&poses, &dev, &g, DEFAULT_MAX_CONDITION).is_err());
    }
}
