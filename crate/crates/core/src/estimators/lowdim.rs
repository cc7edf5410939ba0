//! Low-dimensional linear representation by alternating minimization.

use crate::error::{Error, Result};
use crate::linops::{self, DenseMatrix, Vector};
use crate::rng::{gaussian_matrix, stream};
use crate::taskgen::TaskBundle;

use super::{FitOptions, FitResult};

/// (1/2 n1 T) Σ_t ‖y_t − X_t B w_t‖².
pub fn lowdim_objective(bundle: &TaskBundle, b: &DenseMatrix, w: &DenseMatrix) -> f64 {
    let scale = 2.0 * bundle.n1() as f64 * bundle.t() as f64;
    let mut acc = 0.0;
    for t in 0..bundle.t() {
        let r = &bundle.y[t] - &bundle.x[t] * (b * w.column(t));
        acc += r.norm_squared();
    }
    acc / scale
}

fn heads_step(bundle: &TaskBundle, b: &DenseMatrix) -> DenseMatrix {
    let k = b.ncols();
    let mut w = DenseMatrix::zeros(k, bundle.t());
    for t in 0..bundle.t() {
        let a = &bundle.x[t] * b;
        w.set_column(t, &linops::lstsq_min_norm(&a, &bundle.y[t]));
    }
    w
}

/// Solves Σ_t (w_t w_tᵀ ⊗ G_t) vec(B) = Σ_t vec(X_tᵀ y_t w_tᵀ).
fn representation_step(grams: &[DenseMatrix], xty: &[Vector], w: &DenseMatrix) -> DenseMatrix {
    let d = grams[0].nrows();
    let k = w.nrows();
    let mut lhs = DenseMatrix::zeros(k * d, k * d);
    let mut rhs = Vector::zeros(k * d);
    for t in 0..grams.len() {
        let wt = w.column(t);
        for a in 0..k {
            for b in 0..k {
                let c = wt[a] * wt[b];
                if c != 0.0 {
                    let mut blk = lhs.view_mut((a * d, b * d), (d, d));
                    blk += &grams[t] * c;
                }
            }
            let mut seg = rhs.rows_mut(a * d, d);
            seg += &xty[t] * wt[a];
        }
    }
    let sol = match linops::symmetrize(&lhs).cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => linops::lstsq_min_norm(&lhs, &rhs),
    };
    DenseMatrix::from_column_slice(d, k, sol.as_slice())
}

/// Re-orthonormalize B = QR and fold R into W, leaving BW unchanged.
fn normalize_pair(b: &DenseMatrix, w: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let qr = b.clone().qr();
    let q = qr.q();
    let r = qr.r();
    (q, r * w)
}

fn spectral_init(bundle: &TaskBundle, k: usize) -> Result<DenseMatrix> {
    let n1 = bundle.n1() as f64;
    let d = bundle.d();
    let mut scale = 0.0;
    for x in &bundle.x {
        let diag_sum: f64 = x.column_iter().map(|c| c.norm_squared()).sum();
        scale += diag_sum / (n1 * d as f64);
    }
    let lambda_init = (1e-3 * scale / bundle.t() as f64).max(f64::MIN_POSITIVE);
    let mut est = DenseMatrix::zeros(d, bundle.t());
    for t in 0..bundle.t() {
        est.set_column(t, &linops::ridge_solve(&bundle.x[t], &bundle.y[t], lambda_init)?);
    }
    let (u, _, _) = linops::thin_svd(&est);
    if u.ncols() >= k {
        return Ok(u.columns(0, k).into_owned());
    }
    // fewer tasks than k: pad with the leading directions orthogonal to the estimates
    let mut full = DenseMatrix::zeros(d, k);
    full.view_mut((0, 0), (d, u.ncols())).copy_from(&u);
    let pc = DenseMatrix::identity(d, d) - &u * u.transpose();
    let (v, _, _) = linops::thin_svd(&pc);
    full.view_mut((0, u.ncols()), (d, k - u.ncols())).copy_from(&v.columns(0, k - u.ncols()));
    Ok(full)
}

struct Run {
    b: DenseMatrix,
    w: DenseMatrix,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn alternate(bundle: &TaskBundle, b0: DenseMatrix, grams: &[DenseMatrix], xty: &[Vector], opts: &FitOptions) -> Run {
    let mut b = linops::orthonormalize(&b0);
    let mut w = heads_step(bundle, &b);
    let mut trace = vec![lowdim_objective(bundle, &b, &w)];
    let floor = 1e-30 * bundle.y.iter().map(|y| y.norm_squared()).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let prev = *trace.last().unwrap();
        let b_new = representation_step(grams, xty, &w);
        let (q, _) = normalize_pair(&b_new, &w);
        let w_new = heads_step(bundle, &q);
        let cur = lowdim_objective(bundle, &q, &w_new);
        if cur > prev {
            // numerical noise at the optimum; keep the previous iterate
            converged = true;
            break;
        }
        b = q;
        w = w_new;
        trace.push(cur);
        if cur <= floor || (prev - cur) <= opts.tol * prev {
            converged = true;
            break;
        }
    }
    Run { b, w, trace, converged, iterations }
}

fn representation_gradient(bundle: &TaskBundle, b: &DenseMatrix, w: &DenseMatrix) -> DenseMatrix {
    let scale = bundle.n1() as f64 * bundle.t() as f64;
    let mut g = DenseMatrix::zeros(b.nrows(), b.ncols());
    for t in 0..bundle.t() {
        let wt = w.column(t);
        let r = &bundle.x[t] * (b * wt) - &bundle.y[t];
        g += bundle.x[t].tr_mul(&r) * wt.transpose();
    }
    g / scale
}

/// Minimizes (1/2 n1 T) Σ_t ‖y_t − X_t B w_t‖² over d×k B and k×T W.
pub fn fit_lowdim_mtl(bundle: &TaskBundle, k: usize, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let d = bundle.d();
    if k == 0 || k > d {
        return Err(Error::InfeasibleFit(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    if bundle.n1() < k {
        return Err(Error::InfeasibleFit(format!("n1 = {} is smaller than k = {k}", bundle.n1())));
    }
    let grams: Vec<DenseMatrix> = bundle.x.iter().map(|x| x.tr_mul(x)).collect();
    let xty: Vec<Vector> = bundle.x.iter().zip(&bundle.y).map(|(x, y)| x.tr_mul(y)).collect();

    let mut best = alternate(bundle, spectral_init(bundle, k)?, &grams, &xty, opts);
    for restart in 1..opts.restarts.max(1) {
        let mut rng = stream(opts.seed, "lowdim-restart", restart as u64);
        let run = alternate(bundle, gaussian_matrix(&mut rng, d, k), &grams, &xty, opts);
        if run.trace.last() < best.trace.last() {
            best = run;
        }
    }
    let grad_residual = representation_gradient(bundle, &best.b, &best.w).norm();
    Ok(FitResult {
        b_hat: best.b,
        w_hat: best.w,
        objective_trace: best.trace,
        grad_residual,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Minimum-norm least squares of y on X·B̂.
pub fn fit_target_linear(b_hat: &DenseMatrix, x: &DenseMatrix, y: &Vector) -> Result<Vector> {
    if x.nrows() == 0 || x.nrows() != y.len() || x.ncols() != b_hat.nrows() {
        return crate::error::invalid("fit_target_linear: dimension mismatch");
    }
    Ok(linops::lstsq_min_norm(&(x * b_hat), y))
}
