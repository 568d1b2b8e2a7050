//! n×3 matrices of Cartesian deviations expressed in the machine frame.

use std::ops::{Add, Index, Sub};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// An n×3 matrix of Cartesian deviations (mm), columns x, y, z of the
/// machine frame. Every deviation quantity of the decomposition (measured,
/// nominal, encoder, and the five contributions) shares this shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviationMatrix {
    rows: Vec<Vector3<f64>>,
}

impl DeviationMatrix {
    pub fn from_rows(rows: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(k) = rows.iter().position(|r| !r.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("deviation matrix row {k}")));
        }
        Ok(Self { rows })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            rows: vec![Vector3::zeros(); n],
        }
    }

    /// `n` copies of the same row.
    pub fn repeat(row: Vector3<f64>, n: usize) -> Self {
        Self { rows: vec![row; n] }
    }

    pub fn from_arrays(rows: &[[f64; 3]]) -> Result<Self> {
        Self::from_rows(rows.iter().map(|r| Vector3::from(*r)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vector3<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vector3<f64>> {
        self.rows
    }

    pub fn row(&self, k: usize) -> Vector3<f64> {
        self.rows[k]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        self.column(j).collect()
    }

    /// Column means.
    pub fn mean(&self) -> Vector3<f64> {
        if self.rows.is_empty() {
            return Vector3::zeros();
        }
        let sum = self.rows.iter().fold(Vector3::zeros(), |acc, r| acc + r);
        sum / self.rows.len() as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r * factor).collect(),
        }
    }

    /// Sub-range of rows.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: self.rows[range].to_vec(),
        }
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            rows: self.rows.iter().zip(&other.rows).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            rows: self.rows.iter().zip(&other.rows).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.nrows() != other.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows vs {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        Ok(())
    }

    /// Largest absolute entry difference against `other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max)
    }

    /// Per-column RMS of the difference against `other`.
    pub fn rms_diff(&self, other: &Self) -> Vector3<f64> {
        let n = self.nrows().max(1) as f64;
        let ss = self
            .rows
            .iter()
            .zip(&other.rows)
            .fold(Vector3::zeros(), |acc: Vector3<f64>, (a, b)| {
                let d = a - b;
                acc + d.component_mul(&d)
            });
        (ss / n).map(f64::sqrt)
    }
}

impl Index<usize> for DeviationMatrix {
    type Output = Vector3<f64>;

    fn index(&self, k: usize) -> &Vector3<f64> {
        &self.rows[k]
    }
}

impl FromIterator<Vector3<f64>> for DeviationMatrix {
    fn from_iter<I: IntoIterator<Item = Vector3<f64>>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().collect(),
        }
    }
}

/// Panics on a row-count mismatch; use [`DeviationMatrix::checked_sub`] for
/// fallible code paths.
impl Sub for &DeviationMatrix {
    type Output = DeviationMatrix;

    fn sub(self, rhs: &DeviationMatrix) -> DeviationMatrix {
        self.checked_sub(rhs).expect("deviation matrices differ in shape")
    }
}

impl Add for &DeviationMatrix {
    type Output = DeviationMatrix;

    fn add(self, rhs: &DeviationMatrix) -> DeviationMatrix {
        self.checked_add(rhs).expect("deviation matrices differ in shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_rows() {
        let err = DeviationMatrix::from_arrays(&[[0.0, f64::NAN, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = DeviationMatrix::zeros(3);
        let b = DeviationMatrix::zeros(2);
        assert!(matches!(a.checked_sub(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mean_and_rms_diff() {
        let a = DeviationMatrix::from_arrays(&[[1.0, 2.0, 3.0], [3.0, 2.0, 1.0]]).unwrap();
        assert_eq!(a.mean(), Vector3::new(2.0, 2.0, 2.0));
        let z = DeviationMatrix::zeros(2);
        let rms = a.rms_diff(&z);
        assert!((rms.x - 5f64.sqrt()).abs() < 1e-15);
    }
}
