use nalgebra::{DMatrix, DVector, Vector3};

use crate::deviation::DeviationMatrix;
use crate::error::{Error, Result};
use crate::lsq;

/// Default polynomial degree of the motion-error model.
pub const DEFAULT_DEGREE: usize = 20;

/// Condition threshold for the Legendre design matrix. On a uniform grid
/// the shifted Legendre basis stays far below this for any sane degree.
const MAX_BASIS_CONDITION: f64 = 1e8;

/// Huber tuning constant, in robust standard deviations.
const HUBER_K: f64 = 1.345;
const IRLS_ITERATIONS: usize = 20;

/// Three polynomials `P_x`, `P_y`, `P_z` of the normalised time `t_n ∈ [0, 1]`.
///
/// Coefficients are stored in the shifted Legendre basis
/// `P̃_k(t) = P_k(2t − 1)` (mm); [`MotionPolynomialModel::monomial`] gives the
/// equivalent power-series coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPolynomialModel {
    degree: usize,
    legendre: [Vec<f64>; 3],
}

impl MotionPolynomialModel {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            legendre: [vec![0.0; degree + 1], vec![0.0; degree + 1], vec![0.0; degree + 1]],
        }
    }

    pub fn from_legendre(legendre: [Vec<f64>; 3]) -> Result<Self> {
        let len = legendre[0].len();
        if len == 0 || legendre.iter().any(|c| c.len() != len) {
            return Err(Error::invalid("motion polynomials must share a non-negative degree"));
        }
        if legendre.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("motion polynomial coefficients".into()));
        }
        Ok(Self {
            degree: len - 1,
            legendre,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Shifted Legendre coefficients of `P_x`, `P_y`, `P_z` (mm).
    pub fn legendre(&self) -> &[Vec<f64>; 3] {
        &self.legendre
    }

    /// Power-series coefficients in `t_n`, lowest order first (mm).
    pub fn monomial(&self) -> [Vec<f64>; 3] {
        let basis = shifted_legendre_monomials(self.degree);
        self.legendre.clone().map(|c| {
            let mut out = vec![0.0; self.degree + 1];
            for (k, ck) in c.iter().enumerate() {
                for (j, b) in basis[k].iter().enumerate() {
                    out[j] += ck * b;
                }
            }
            out
        })
    }

    /// `(P_x(t), P_y(t), P_z(t))` in mm.
    pub fn evaluate(&self, t: f64) -> Vector3<f64> {
        let mut basis = vec![0.0; self.degree + 1];
        legendre_row(t, &mut basis);
        Vector3::from_fn(|i, _| dot(&self.legendre[i], &basis))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fills `out[k] = P̃_k(t)` by the three-term recurrence.
fn legendre_row(t: f64, out: &mut [f64]) {
    let x = 2.0 * t - 1.0;
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 2..out.len() {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
}

/// Power-series coefficients of each `P̃_k`, `k = 0..=degree`.
fn shifted_legendre_monomials(degree: usize) -> Vec<Vec<f64>> {
    // P̃_n(t) = (−1)^n Σ_k C(n, k) C(n + k, k) (−t)^k
    (0..=degree)
        .map(|n| {
            let mut row = vec![0.0; degree + 1];
            for (k, slot) in row.iter_mut().enumerate().take(n + 1) {
                let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
                *slot = sign * binomial(n, k) * binomial(n + k, k);
            }
            row
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Uniform grid `t_k = k / (n − 1)` over `[0, 1]`.
pub fn normalized_time(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| k as f64 / (n - 1) as f64).collect(),
    }
}

fn design_matrix(n: usize, degree: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, degree + 1);
    let mut row = vec![0.0; degree + 1];
    for (k, t) in normalized_time(n).into_iter().enumerate() {
        legendre_row(t, &mut row);
        for (j, v) in row.iter().enumerate() {
            a[(k, j)] = *v;
        }
    }
    a
}

/// Least-squares fit of the three columns of `residual` against `t_n`.
/// With `robust`, Huber-weighted iterative reweighting downweights
/// localised spikes.
pub fn fit_motion_polynomials(
    residual: &DeviationMatrix,
    degree: usize,
    robust: bool,
) -> Result<MotionPolynomialModel> {
    let n = residual.nrows();
    if degree + 1 >= n {
        return Err(Error::invalid(format!(
            "degree {degree} needs more than {} samples, got {n}",
            degree + 1
        )));
    }
    let a = design_matrix(n, degree);
    let mut legendre: [Vec<f64>; 3] = Default::default();
    for (j, coeffs) in legendre.iter_mut().enumerate() {
        let b = DVector::from_iterator(n, residual.column(j));
        let x = if robust {
            huber_fit(&a, &b)?
        } else {
            lsq::solve(&a, &b, MAX_BASIS_CONDITION)
                .map_err(ill_conditioned)?
                .x
        };
        *coeffs = x.iter().copied().collect();
    }
    MotionPolynomialModel::from_legendre(legendre)
}

fn ill_conditioned(e: Error) -> Error {
    match e {
        Error::RankDeficient { condition, threshold } => Error::IllConditioned {
            what: "motion polynomial basis",
            condition,
            threshold,
        },
        other => other,
    }
}

fn huber_fit(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = lsq::solve(a, b, MAX_BASIS_CONDITION).map_err(ill_conditioned)?.x;
    for _ in 0..IRLS_ITERATIONS {
        let r = b - a * &x;
        let mut abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let mad = abs[abs.len() / 2] / 0.6745;
        if mad == 0.0 {
            break;
        }
        let cut = HUBER_K * mad;
        let w: Vec<f64> = r
            .iter()
            .map(|v| if v.abs() <= cut { 1.0 } else { (cut / v.abs()).sqrt() })
            .collect();
        let mut aw = a.clone();
        for (i, wi) in w.iter().enumerate() {
            aw.row_mut(i).scale_mut(*wi);
        }
        let bw = DVector::from_iterator(b.len(), b.iter().zip(&w).map(|(v, wi)| v * wi));
        let next = lsq::solve(&aw, &bw, MAX_BASIS_CONDITION).map_err(ill_conditioned)?.x;
        let step = (&next - &x).amax();
        x = next;
        if step <= 1e-12 * x.amax().max(1e-300) {
            break;
        }
    }
    Ok(x)
}

/// `δm`: the model evaluated on the `n`-point uniform grid over `[0, 1]`.
pub fn motion_contribution(model: &MotionPolynomialModel, n: usize) -> Result<DeviationMatrix> {
    if n < 2 {
        return Err(Error::invalid(format!("motion contribution needs n ≥ 2, got {n}")));
    }
    DeviationMatrix::from_rows(normalized_time(n).into_iter().map(|t| model.evaluate(t)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_basis_matches_recurrence() {
        let basis = shifted_legendre_monomials(8);
        let mut row = vec![0.0; 9];
        for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
            legendre_row(t, &mut row);
            for k in 0..=8 {
                let direct: f64 = basis[k].iter().enumerate().map(|(j, c)| c * t.powi(j as i32)).sum();
                assert!((direct - row[k]).abs() < 1e-9, "k={k} t={t}");
            }
        }
    }

    #[test]
    fn zero_residual_zero_model() {
        let m = fit_motion_polynomials(&DeviationMatrix::zeros(100), 20, false).unwrap();
        assert!(m.legendre().iter().flatten().all(|c| *c == 0.0));
    }

    #[test]
    fn degree_too_high_rejected() {
        assert!(fit_motion_polynomials(&DeviationMatrix::zeros(21), 20, false).is_err());
    }

    #[test]
    fn grid_endpoints() {
        let m = MotionPolynomialModel::from_legendre([vec![1.0, 2.0], vec![0.0, 1.0], vec![3.0, 0.0]]).unwrap();
        let d = motion_contribution(&m, 11).unwrap();
        assert_eq!(d.row(0), m.evaluate(0.0));
        assert_eq!(d.row(10), m.evaluate(1.0));
        assert_eq!(d.row(0), Vector3::new(-1.0, -1.0, 3.0));
    }

    #[test]
    fn robust_fit_ignores_spike() {
        let n = 2001;
        let mut rows: Vec<Vector3<f64>> = normalized_time(n)
            .into_iter()
            .map(|t| Vector3::repeat(1e-3 * (3.0 * t).sin()))
            .collect();
        for r in &mut rows[1000..1010] {
            *r += Vector3::repeat(0.05);
        }
        let dev = DeviationMatrix::from_rows(rows).unwrap();
        let plain = fit_motion_polynomials(&dev, 10, false).unwrap();
        let robust = fit_motion_polynomials(&dev, 10, true).unwrap();
        let truth = 1e-3 * (1.5f64).sin();
        let e_plain = (plain.evaluate(0.5).x - truth).abs();
        let e_robust = (robust.evaluate(0.5).x - truth).abs();
        assert!(e_robust < e_plain / 5.0, "{e_robust} vs {e_plain}");
    }
}
