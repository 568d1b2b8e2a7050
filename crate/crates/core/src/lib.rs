//! Decomposition of the volumetric error of a five-axis machine tool into
//! contouring, quasi-static geometric and dynamic geometric contributions.
//!
//! The crate is organised around the processing chain:
//!
//! * [`kinematics`]: nominal and perturbed direct kinematics of a WCAYFXZT
//!   machine, the link-error Jacobian and link-error identification.
//! * [`signal_io`]: CSV ingestion, resampling, synchronisation and the
//!   construction of the deviation matrices.
//! * [`decomposition`]: the contouring / link / motion / thermal / dynamic
//!   split of a recorded test.
//! * [`metrics`]: share tables, maxima, RMS values and the feed-rate power law.
//! * [`virtual_machine`]: a ground-truth machine simulator producing
//!   synthetic campaigns in the same file formats.
//! * [`manifest`]: the file layout of a campaign.
//!
//! All internal lengths are millimetres and all internal angles radians.
//! Reports convert to micrometres.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod deviation;
pub mod error;
pub mod kinematics;
mod lsq;
pub mod manifest;
pub mod metrics;
pub mod signal_io;
pub mod virtual_machine;

pub use decomposition::{Decomposition, MotionPolynomialModel, ReferenceArtifacts};
pub use deviation::DeviationMatrix;
pub use error::{Error, Result};
pub use kinematics::{JointPose, LinkErrorVector, LinkJacobian, MachineGeometry};
pub use manifest::CampaignManifest;
pub use metrics::{MetricsReport, PowerLawFit};
pub use signal_io::{SensorCalibration, SignalSet};

/// Millimetres per micrometre.
pub const MM_PER_UM: f64 = 1e-3;
/// Micrometres per millimetre.
pub const UM_PER_MM: f64 = 1e3;
