use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::Decomposition;
use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::kinematics::LinkErrorVector;
use crate::UM_PER_MM;

pub const SUMMARY_FILE: &str = "summary.json";

/// One of the five contributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionKind {
    Contouring,
    Link,
    Motion,
    Thermal,
    Dynamic,
}

impl ContributionKind {
    pub const ALL: [ContributionKind; 5] = [
        ContributionKind::Contouring,
        ContributionKind::Link,
        ContributionKind::Motion,
        ContributionKind::Thermal,
        ContributionKind::Dynamic,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            ContributionKind::Contouring => "contouring.csv",
            ContributionKind::Link => "link.csv",
            ContributionKind::Motion => "motion.csv",
            ContributionKind::Thermal => "thermal.csv",
            ContributionKind::Dynamic => "dynamic.csv",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ContributionKind::Contouring => "dc",
            ContributionKind::Link => "dl",
            ContributionKind::Motion => "dm",
            ContributionKind::Thermal => "dtd",
            ContributionKind::Dynamic => "dd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkErrorEntry {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModelSummary {
    pub degree: usize,
    /// Shifted Legendre coefficients over `t_n ∈ [0, 1]`, per direction (mm).
    pub legendre_mm: [Vec<f64>; 3],
    /// Power-series coefficients in `t_n`, lowest order first (mm).
    pub monomial_mm: [Vec<f64>; 3],
}

/// JSON companion of the contribution CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub session: String,
    pub feed_rate_mm_min: f64,
    pub delay_s: f64,
    pub sample_rate_hz: f64,
    pub samples: usize,
    pub reference: bool,
    pub link_errors: Vec<LinkErrorEntry>,
    pub thermal_offset_um: [f64; 3],
    pub motion_model: MotionModelSummary,
    pub reconstruction_max_abs_mm: f64,
}

impl DecompositionSummary {
    pub fn from_decomposition(d: &Decomposition) -> Self {
        let link_errors = LinkErrorVector::NAMES
            .iter()
            .zip(LinkErrorVector::UNITS)
            .zip(d.dq.0)
            .map(|((name, unit), value)| LinkErrorEntry {
                name: name.to_string(),
                value,
                unit: unit.to_string(),
            })
            .collect();
        Self {
            session: d.id.clone(),
            feed_rate_mm_min: d.feed_rate,
            delay_s: d.delay,
            sample_rate_hz: d.sample_rate,
            samples: d.len(),
            reference: d.is_reference,
            link_errors,
            thermal_offset_um: (d.thermal_offset * UM_PER_MM).into(),
            motion_model: MotionModelSummary {
                degree: d.model.degree(),
                legendre_mm: d.model.legendre().clone(),
                monomial_mm: d.model.monomial(),
            },
            reconstruction_max_abs_mm: d.reconstruction_error(),
        }
    }
}

/// Writes one CSV per contribution (`t_s,dx_um,dy_um,dz_um`) and
/// `summary.json` into `dir`.
pub fn write_artifacts(dir: impl AsRef<Path>, d: &Decomposition) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let times = d.times();
    for (kind, m) in ContributionKind::ALL.iter().zip(d.contributions()) {
        write_contribution(&dir.join(kind.file_name()), &times, m)?;
    }
    let summary = DecompositionSummary::from_decomposition(d);
    let path = dir.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn write_contribution(path: &Path, times: &[f64], m: &DeviationMatrix) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "t_s,dx_um,dy_um,dz_um").map_err(io)?;
    for (t, r) in times.iter().zip(m.rows()) {
        let r = r * UM_PER_MM;
        writeln!(out, "{t:.16e},{:.16e},{:.16e},{:.16e}", r.x, r.y, r.z).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// A decomposition read back from disk.
#[derive(Debug, Clone)]
pub struct StoredDecomposition {
    pub summary: DecompositionSummary,
    /// δc, δl, δm, δtd, δd (mm).
    pub contributions: [DeviationMatrix; 5],
}

pub fn read_artifacts(dir: impl AsRef<Path>) -> Result<StoredDecomposition> {
    let dir = dir.as_ref();
    let path = dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: DecompositionSummary = serde_json::from_str(&text)?;
    let mut contributions: [DeviationMatrix; 5] = Default::default();
    for (kind, slot) in ContributionKind::ALL.iter().zip(contributions.iter_mut()) {
        *slot = read_contribution(&dir.join(kind.file_name()))?;
        if slot.nrows() != summary.samples {
            return Err(Error::ShapeMismatch(format!(
                "{}: {} rows, summary declares {}",
                dir.join(kind.file_name()).display(),
                slot.nrows(),
                summary.samples
            )));
        }
    }
    Ok(StoredDecomposition {
        summary,
        contributions,
    })
}

fn read_contribution(path: &Path) -> Result<DeviationMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(std::io::BufReader::new(file));
    let headers = reader.headers()?.clone();
    let cols = ["dx_um", "dy_um", "dz_um"].map(|c| {
        headers.iter().position(|h| h == c).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: c.into(),
        })
    });
    let [ix, iy, iz] = cols;
    let idx = [ix?, iy?, iz?];
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut v = Vector3::zeros();
        for (j, &c) in idx.iter().enumerate() {
            let field = record.get(c).unwrap_or("");
            v[j] = field.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                column: headers[c].to_string(),
                message: format!("cannot parse `{field}` as a number"),
            })? / UM_PER_MM;
        }
        rows.push(v);
    }
    DeviationMatrix::from_rows(rows)
}
