//! Monte-Carlo Gaussian widths.

use rayon::prelude::*;

use crate::linops::{self, DenseMatrix, Vector};
use crate::rng::{gaussian_matrix, gaussian_vector, stream};

use super::mean_se;

/// Mean of `sup_oracle(z)` over `mc_draws` standard Gaussian z in R^dim, with its
/// standard error.
pub fn gaussian_width_mc<F>(sup_oracle: F, dim: usize, mc_draws: usize, seed: u64) -> (f64, f64)
where
    F: Fn(&Vector) -> f64 + Sync,
{
    if mc_draws == 0 {
        return (0.0, 0.0);
    }
    let vals: Vec<f64> = (0..mc_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "width-draw", i as u64);
            sup_oracle(&gaussian_vector(&mut rng, dim))
        })
        .collect();
    mean_se(&vals)
}

/// Σ_t ‖P_{X_t V} z_t‖² and its gradient with respect to V.
fn value_and_grad(xs: &[DenseMatrix], zs: &[Vector], v: &DenseMatrix) -> (f64, DenseMatrix) {
    let mut val = 0.0;
    let mut grad = DenseMatrix::zeros(v.nrows(), v.ncols());
    for (x, z) in xs.iter().zip(zs) {
        let a = x * v;
        let c = linops::lstsq_min_norm(&a, z);
        let fitted = &a * &c;
        val += fitted.norm_squared();
        let resid = z - fitted;
        grad += x.tr_mul(&(resid * c.transpose())) * 2.0;
    }
    (val, grad)
}

const ASCENT_STEPS: usize = 60;

fn ascend(xs: &[DenseMatrix], zs: &[Vector], v0: DenseMatrix) -> f64 {
    let mut v = linops::orthonormalize(&v0);
    let (mut f, mut g) = value_and_grad(xs, zs, &v);
    let mut eta = 1.0 / xs.iter().map(|x| linops::spectral_norm(x).powi(2)).fold(f64::MIN_POSITIVE, f64::max);
    for _ in 0..ASCENT_STEPS {
        let mut improved = false;
        for _ in 0..30 {
            let cand = linops::orthonormalize(&(&v + &g * eta));
            let (fc, gc) = value_and_grad(xs, zs, &cand);
            if fc > f {
                v = cand;
                f = fc;
                g = gc;
                eta *= 1.5;
                improved = true;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f
}

/// Lower estimate of the Gaussian width of the linear-class set: for each
/// Gaussian z, sup over V with 2k orthonormal columns of √(Σ_t ‖P_{X_tV} z_t‖²),
/// found by projected gradient ascent with QR retraction and random restarts.
///
/// Restart `r` of draw `i` always starts from the same point, so raising
/// `restarts` can only raise each per-draw value.
pub fn linear_class_width(xs: &[DenseMatrix], k: usize, mc_draws: usize, restarts: usize, seed: u64) -> (f64, f64) {
    if k == 0 || xs.is_empty() || mc_draws == 0 {
        return (0.0, 0.0);
    }
    let d = xs[0].ncols();
    let m = (2 * k).min(d);
    let vals: Vec<f64> = (0..mc_draws)
        .into_par_iter()
        .map(|i| {
            let mut zr = stream(seed, "class-width-z", i as u64);
            let zs: Vec<Vector> = xs.iter().map(|x| gaussian_vector(&mut zr, x.nrows())).collect();
            let tag = format!("class-width-init-{i}");
            (0..restarts.max(1))
                .map(|r| {
                    let mut ir = stream(seed, &tag, r as u64);
                    ascend(xs, &zs, gaussian_matrix(&mut ir, d, m))
                })
                .fold(0.0, f64::max)
                .sqrt()
        })
        .collect();
    mean_se(&vals)
}
