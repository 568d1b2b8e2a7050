//! Dense linear least squares through a column-equilibrated QR followed by
//! an SVD of the triangular factor. The singular values of the
//! equilibrated system give the condition number used to reject
//! rank-deficient problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct LsqSolution {
    pub x: DVector<f64>,
    /// Condition number of the column-equilibrated design matrix.
    pub condition: f64,
    /// `(AᵀA)⁻¹` in the original (unscaled) parameter units.
    pub normal_inverse: DMatrix<f64>,
    pub residual_sum_squares: f64,
}

/// Solves `min ‖A x − b‖₂`.
///
/// Returns [`Error::RankDeficient`] when the equilibrated condition number
/// exceeds `max_condition` (a zero column counts as infinite).
pub(crate) fn solve(a: &DMatrix<f64>, b: &DVector<f64>, max_condition: f64) -> Result<LsqSolution> {
    let (m, n) = a.shape();
    if m != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "design matrix has {m} rows, right-hand side {}",
            b.len()
        )));
    }
    if m < n {
        return Err(Error::invalid(format!(
            "underdetermined system: {m} equations for {n} unknowns"
        )));
    }

    let scales: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    if scales.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficient {
            condition: f64::INFINITY,
            threshold: max_condition,
        });
    }
    let mut scaled = a.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*s);
    }

    let qr = scaled.qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    let svd = r.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= max_condition) {
        return Err(Error::RankDeficient {
            condition,
            threshold: max_condition,
        });
    }

    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let inv_sigma = DMatrix::from_diagonal(&sv.map(|s| 1.0 / s));
    let x_scaled = v_t.transpose() * &inv_sigma * u.transpose() * &qtb;
    let x = DVector::from_iterator(n, x_scaled.iter().zip(&scales).map(|(x, s)| x / s));

    let v = v_t.transpose();
    let inv_sigma2 = DMatrix::from_diagonal(&sv.map(|s| 1.0 / (s * s)));
    let mut normal_inverse = &v * inv_sigma2 * v.transpose();
    for i in 0..n {
        for j in 0..n {
            normal_inverse[(i, j)] /= scales[i] * scales[j];
        }
    }

    let residual = b - a * &x;
    Ok(LsqSolution {
        x,
        condition,
        normal_inverse,
        residual_sum_squares: residual.norm_squared(),
    })
}
