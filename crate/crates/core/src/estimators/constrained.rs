//! Norm-constrained target fits and the fixed-design ridge smoother.

use crate::error::{invalid, Result};
use crate::linops::{self, DenseMatrix, Vector};
use crate::taskgen::relu;

const BISECTION_ITERS: usize = 200;

/// min_{‖w‖ ≤ r} (1/2n)‖A w − y‖². `r = ∞` gives minimum-norm least squares.
pub fn constrained_least_squares(a: &DenseMatrix, y: &Vector, r: f64) -> Result<Vector> {
    if r.is_nan() || r < 0.0 {
        return invalid(format!("norm budget must be >= 0, got {r}"));
    }
    if a.nrows() != y.len() {
        return invalid(format!("feature rows {} do not match {} labels", a.nrows(), y.len()));
    }
    let p = a.ncols();
    if r == 0.0 || p == 0 {
        return Ok(Vector::zeros(p));
    }
    let (u, s, vt) = linops::thin_svd(a);
    let rank = linops::numerical_rank(&s, a.nrows(), a.ncols());
    let uty: Vec<f64> = (0..rank).map(|i| u.column(i).dot(y)).collect();
    let solve = |mu: f64| -> Vector {
        let mut w = Vector::zeros(p);
        for i in 0..rank {
            let coef = s[i] * uty[i] / (s[i] * s[i] + mu);
            w += vt.row(i).transpose() * coef;
        }
        w
    };
    let w0 = solve(0.0);
    if w0.norm() <= r {
        return Ok(w0);
    }
    let aty_norm = (0..rank).map(|i| (s[i] * uty[i]).powi(2)).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (0.0, aty_norm / r);
    let mut w = solve(hi);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let wm = solve(mid);
        let nm = wm.norm();
        if (nm - r).abs() <= 1e-10 * r {
            return Ok(wm);
        }
        if nm > r {
            lo = mid;
        } else {
            hi = mid;
            w = wm;
        }
    }
    Ok(w)
}

pub fn fit_target_constrained(b_hat: &DenseMatrix, x: &DenseMatrix, y: &Vector, r: f64) -> Result<Vector> {
    if x.ncols() != b_hat.nrows() {
        return invalid("target design and representation disagree on d");
    }
    constrained_least_squares(&(x * b_hat), y, r)
}

/// Output-layer retraining on ReLU features (X B̂)₊.
pub fn fit_relu_target(b_hat: &DenseMatrix, x: &DenseMatrix, y: &Vector, r: f64) -> Result<Vector> {
    if x.ncols() != b_hat.nrows() {
        return invalid("target design and hidden layer disagree on d");
    }
    constrained_least_squares(&relu(&(x * b_hat)), y, r)
}

/// Norm-constrained least squares directly in the ambient space.
pub fn baseline_target_ridge(x: &DenseMatrix, y: &Vector, norm_budget: f64) -> Result<Vector> {
    constrained_least_squares(x, y, norm_budget)
}

/// S = (1/n) XB ((1/n) BᵀXᵀXB + λI)⁻¹ BᵀXᵀ.
pub fn fixed_design_smoother(x: &DenseMatrix, b: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if !(lambda > 0.0) {
        return invalid(format!("smoother needs lambda > 0, got {lambda}"));
    }
    let n = x.nrows() as f64;
    let a = x * b;
    let (u, s, _) = linops::thin_svd(&a);
    let shrink = s.map(|v| v * v / (v * v + n * lambda));
    Ok(&u * DenseMatrix::from_diagonal(&shrink) * u.transpose())
}

/// The same smoother in the commuted form (1/n) XB Bᵀ Xᵀ ((1/n) XB BᵀXᵀ + λI)⁻¹.
pub fn smoother_right_form(x: &DenseMatrix, b: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if !(lambda > 0.0) {
        return invalid(format!("smoother needs lambda > 0, got {lambda}"));
    }
    let n = x.nrows() as f64;
    let a = x * b;
    let k = &a * a.transpose() / n;
    let mut reg = k.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += lambda;
    }
    let chol = reg.cholesky().ok_or(crate::Error::Singular { condition: f64::INFINITY })?;
    // K (K + λI)⁻¹ = ((K + λI)⁻¹ K)ᵀ since both are symmetric
    Ok(chol.solve(&k).transpose())
}
