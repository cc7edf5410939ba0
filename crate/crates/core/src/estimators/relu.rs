//! Two-layer ReLU networks with weight decay.
//!
//! The hidden layer is d0×width with one neuron per column; heads are width×T.
//! Training is full-batch gradient descent with an Armijo backtracking line
//! search, using a Barzilai-Borwein trial step.

use crate::error::{Error, Result};
use crate::linops::{DenseMatrix, Vector};
use crate::rng::{gaussian_matrix, stream};
use crate::taskgen::{relu, TaskBundle};

use super::{FitOptions, FitResult};

const ARMIJO_C: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-6;

/// x ↦ wᵀ(Bᵀx)₊ evaluated on the rows of `x`.
pub fn nn_predict(b: &DenseMatrix, w: &Vector, x: &DenseMatrix) -> Vector {
    relu(&(x * b)) * w
}

/// (1/2 n T) Σ_t ‖y_t − (X_t B)₊ w_t‖² + (λ/2)(‖B‖² + ‖W‖²).
pub fn relu_objective(xs: &[DenseMatrix], ys: &[Vector], b: &DenseMatrix, w: &DenseMatrix, lambda: f64) -> f64 {
    let t = xs.len() as f64;
    let mut acc = 0.0;
    for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
        let r = nn_predict(b, &w.column(i).into_owned(), x) - y;
        acc += r.norm_squared() / (2.0 * x.nrows() as f64 * t);
    }
    acc + 0.5 * lambda * (b.norm_squared() + w.norm_squared())
}

/// Gradient of [`relu_objective`] with respect to (B, W); the ReLU derivative at 0 is 0.
pub fn relu_gradient(
    xs: &[DenseMatrix],
    ys: &[Vector],
    b: &DenseMatrix,
    w: &DenseMatrix,
    lambda: f64,
) -> (DenseMatrix, DenseMatrix) {
    let t = xs.len() as f64;
    let mut gb = b * lambda;
    let mut gw = w * lambda;
    for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
        let scale = 1.0 / (x.nrows() as f64 * t);
        let h = x * b;
        let a = relu(&h);
        let wt = w.column(i);
        let r = &a * wt - y;
        gw.set_column(i, &(gw.column(i) + a.tr_mul(&r) * scale));
        let mut back = &r * wt.transpose();
        back.zip_apply(&h, |g, pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
        gb += x.tr_mul(&back) * scale;
    }
    (gb, gw)
}

fn init_net(d0: usize, width: usize, tasks: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = stream(seed, "relu-init", 0);
    let mut b = gaussian_matrix(&mut rng, d0, width) / (d0 as f64).sqrt();
    for mut col in b.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let w = gaussian_matrix(&mut rng, width, tasks) / (width as f64).sqrt();
    (b, w)
}

/// Trains on arbitrary per-task samples; shared by the multi-task fit and the
/// scratch baseline.
pub fn train_relu(
    xs: &[DenseMatrix],
    ys: &[Vector],
    width: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    if width == 0 {
        return crate::error::invalid("width must be >= 1");
    }
    if xs.is_empty() || xs.len() != ys.len() {
        return crate::error::invalid("need at least one task with matching labels");
    }
    if !(lambda >= 0.0) {
        return crate::error::invalid("lambda must be >= 0");
    }
    opts.validate()?;
    let d0 = xs[0].ncols();
    let (mut b, mut w) = init_net(d0, width, xs.len(), opts.seed);
    let mut f = relu_objective(xs, ys, &b, &w, lambda);
    let mut trace = vec![f];
    let (mut gb, mut gw) = relu_gradient(xs, ys, &b, &w, lambda);
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let gnorm2 = gb.norm_squared() + gw.norm_squared();
        if gnorm2.sqrt() <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut eta = step;
        let (nb, nw, nf) = loop {
            let nb = &b - &gb * eta;
            let nw = &w - &gw * eta;
            let nf = relu_objective(xs, ys, &nb, &nw, lambda);
            if nf <= f - ARMIJO_C * eta * gnorm2 {
                break (nb, nw, nf);
            }
            eta *= 0.5;
            if eta < 1e-30 {
                break (b.clone(), w.clone(), f);
            }
        };
        if nf == f && eta < 1e-30 {
            break;
        }
        let (ngb, ngw) = relu_gradient(xs, ys, &nb, &nw, lambda);
        // Barzilai-Borwein trial step for the next line search
        let sb = &nb - &b;
        let sw = &nw - &w;
        let yb = &ngb - &gb;
        let yw = &ngw - &gw;
        let sy = sb.dot(&yb) + sw.dot(&yw);
        let ss = sb.norm_squared() + sw.norm_squared();
        step = if sy > 0.0 { (ss / sy).min(1e6) } else { 2.0 * eta };
        let prev = f;
        b = nb;
        w = nw;
        f = nf;
        gb = ngb;
        gw = ngw;
        trace.push(f);
        if prev - f <= opts.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = (gb.norm_squared() + gw.norm_squared()).sqrt() <= GRAD_TOL;
            break;
        }
    }
    let grad_residual = (gb.norm_squared() + gw.norm_squared()).sqrt();
    Ok(FitResult { b_hat: b, w_hat: w, objective_trace: trace, grad_residual, converged, iterations })
}

pub fn fit_relu_mtl(bundle: &TaskBundle, width: usize, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    train_relu(&bundle.x, &bundle.y, width, lambda, opts)
}

/// Scratch network trained on the target sample alone.
pub fn baseline_target_nn(
    x: &DenseMatrix,
    y: &Vector,
    width: usize,
    lambda: f64,
    opts: &FitOptions,
) -> Result<FitResult> {
    train_relu(std::slice::from_ref(x), std::slice::from_ref(y), width, lambda, opts)
}

/// Per-neuron positive rescaling that balances ‖b_j‖ = ‖w_j‖ without changing
/// the network function.
pub fn rebalance_net(b: &DenseMatrix, w: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if b.ncols() != w.nrows() {
        return crate::error::invalid("hidden width and head rows disagree");
    }
    let mut b2 = b.clone();
    let mut w2 = w.clone();
    for j in 0..b.ncols() {
        let nb = b.column(j).norm();
        let nw = w.row(j).norm();
        if nb == 0.0 {
            if nw != 0.0 {
                return Err(Error::DegenerateNeuron(j));
            }
            continue;
        }
        if nw == 0.0 {
            // a neuron with no head contributes nothing; drop its input weights
            b2.column_mut(j).fill(0.0);
            continue;
        }
        let s = (nw / nb).sqrt();
        b2.column_mut(j).scale_mut(s);
        w2.row_mut(j).scale_mut(1.0 / s);
    }
    Ok((b2, w2))
}
