//! Nuclear-norm regularized multi-task regression.
//!
//! Minimizes (1/2n1) Σ_t ‖y_t − X_t θ_t‖² + λ‖Θ‖_* by monotone accelerated
//! proximal gradient, then splits Θ̂ into a balanced pair (B̂, Ŵ).

use crate::error::{invalid, Result};
use crate::linops::{self, DenseMatrix, Vector};
use crate::taskgen::TaskBundle;

use super::{FitOptions, FitResult, StepRule};

/// X*(M) = [X_1ᵀm_1, ..., X_Tᵀm_T], the adjoint of the per-task design operator.
pub fn source_operator_adjoint(bundle: &TaskBundle, m: &[Vector]) -> DenseMatrix {
    let cols: Vec<Vector> = bundle.x.iter().zip(m).map(|(x, v)| x.tr_mul(v)).collect();
    DenseMatrix::from_columns(&cols)
}

/// (2/n1)‖X*(Z)‖₂ from the stored noise.
pub fn oracle_lambda(bundle: &TaskBundle) -> f64 {
    2.0 / bundle.n1() as f64 * linops::spectral_norm(&source_operator_adjoint(bundle, &bundle.z))
}

/// 2σ √log(T+n1) (√(T‖Σ‖₂) + √Tr Σ) / √n1.
pub fn default_lambda(sigma: f64, t: usize, n1: usize, sigma_op_norm: f64, sigma_trace: f64) -> f64 {
    let (tf, nf) = (t as f64, n1 as f64);
    2.0 * sigma * (tf + nf).ln().sqrt() * ((tf * sigma_op_norm).sqrt() + sigma_trace.sqrt()) / nf.sqrt()
}

struct Problem {
    grams: Vec<DenseMatrix>,
    xty: Vec<Vector>,
    yty: f64,
}

impl Problem {
    fn new(bundle: &TaskBundle) -> Self {
        let n1 = bundle.n1() as f64;
        Self {
            grams: bundle.x.iter().map(|x| x.tr_mul(x) / n1).collect(),
            xty: bundle.x.iter().zip(&bundle.y).map(|(x, y)| x.tr_mul(y) / n1).collect(),
            yty: bundle.y.iter().map(|y| y.norm_squared()).sum::<f64>() / n1,
        }
    }

    fn smooth(&self, theta: &DenseMatrix) -> f64 {
        // (1/2n1)‖y − Xθ‖² = ½θᵀGθ − θᵀh + ½yᵀy/n1, evaluated per column
        let mut acc = 0.5 * self.yty;
        for (t, (g, h)) in self.grams.iter().zip(&self.xty).enumerate() {
            let th = theta.column(t);
            acc += 0.5 * th.dot(&(g * th)) - th.dot(h);
        }
        acc.max(0.0)
    }

    fn grad(&self, theta: &DenseMatrix) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(theta.nrows(), theta.ncols());
        for (t, (gr, h)) in self.grams.iter().zip(&self.xty).enumerate() {
            g.set_column(t, &(gr * theta.column(t) - h));
        }
        g
    }

    fn lipschitz(&self) -> f64 {
        self.grams.iter().map(linops::max_eigenvalue).fold(0.0, f64::max)
    }
}

/// Full objective (1/2n1)‖Y − X(Θ)‖²_F + λ‖Θ‖_*, evaluated directly from the data.
pub fn nuclear_objective(bundle: &TaskBundle, theta: &DenseMatrix, lambda: f64) -> f64 {
    let n1 = bundle.n1() as f64;
    let data: f64 = (0..bundle.t())
        .map(|t| (&bundle.y[t] - &bundle.x[t] * theta.column(t)).norm_squared())
        .sum();
    data / (2.0 * n1) + lambda * linops::nuclear_norm(theta)
}

/// dist(0, ∇f(Θ) + λ∂‖Θ‖_*) in Frobenius norm.
///
/// With Θ = U S Vᵀ the subdifferential is UVᵀ + {W : UᵀW = 0, WV = 0, ‖W‖₂ ≤ 1};
/// the free block can cancel the gradient on the joint complement up to λ.
pub fn subgradient_residual(grad: &DenseMatrix, theta: &DenseMatrix, lambda: f64) -> f64 {
    let (u, s, vt) = linops::thin_svd(theta);
    let r = linops::numerical_rank(&s, theta.nrows(), theta.ncols());
    let u = u.columns(0, r).into_owned();
    let v = vt.rows(0, r).transpose();
    let pu = &u * u.transpose();
    let pv = &v * v.transpose();
    let iu = DenseMatrix::identity(theta.nrows(), theta.nrows()) - &pu;
    let iv = DenseMatrix::identity(theta.ncols(), theta.ncols()) - &pv;
    let tangent = &pu * grad * &pv + &u * v.transpose() * lambda;
    let mixed = (&pu * grad * &iv).norm_squared() + (&iu * grad * &pv).norm_squared();
    let free = linops::svt(&(&iu * grad * &iv), lambda);
    (tangent.norm_squared() + mixed + free.norm_squared()).sqrt()
}

pub fn fit_nuclear_mtl(bundle: &TaskBundle, lambda: f64, opts: &FitOptions) -> Result<FitResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return invalid(format!("nuclear-norm fit needs lambda > 0, got {lambda}"));
    }
    opts.validate()?;
    let (d, t) = (bundle.d(), bundle.t());
    let p = Problem::new(bundle);
    let l_fixed = p.lipschitz().max(f64::MIN_POSITIVE);
    let mut l = match opts.step_rule {
        StepRule::FixedLipschitz => l_fixed,
        StepRule::Backtracking => l_fixed / 16.0,
    };
    let objective = |th: &DenseMatrix| p.smooth(th) + lambda * linops::nuclear_norm(th);

    let mut x = DenseMatrix::zeros(d, t);
    let mut x_prev = x.clone();
    let mut fx = objective(&x);
    let mut trace = vec![fx];
    let mut mom = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let mom_next = 0.5 * (1.0 + (1.0 + 4.0 * mom * mom).sqrt());
        let yk = if it == 1 { x.clone() } else { &x + (&x - &x_prev) * ((mom - 1.0) / mom_next) };
        let gy = p.grad(&yk);
        let fy = p.smooth(&yk);
        let z = loop {
            let z = linops::svt(&(&yk - &gy / l), lambda / l);
            if opts.step_rule == StepRule::FixedLipschitz || l >= l_fixed {
                break z;
            }
            let dz = &z - &yk;
            if p.smooth(&z) <= fy + gy.dot(&dz) + 0.5 * l * dz.norm_squared() {
                break z;
            }
            l = (2.0 * l).min(l_fixed);
        };
        let fz = objective(&z);
        // prox-gradient optimality certificate at z
        let certificate = (p.grad(&z) - &gy + (&yk - &z) * l).norm();
        x_prev = x.clone();
        if fz <= fx {
            x = z;
            fx = fz;
        } else {
            if mom == 1.0 {
                // a plain proximal step failed to descend: fixed point up to rounding
                trace.push(fx);
                converged = true;
                break;
            }
            // reject and restart momentum
            mom = 1.0;
            x_prev = x.clone();
            trace.push(fx);
            continue;
        }
        mom = mom_next;
        trace.push(fx);
        if certificate <= opts.tol {
            converged = true;
            break;
        }
    }
    let grad_residual = subgradient_residual(&p.grad(&x), &x, lambda);
    let (b_hat, w_hat) = linops::factor_split(&x);
    Ok(FitResult { b_hat, w_hat, objective_trace: trace, grad_residual, converged, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate, EnsembleSpec, Track};

    fn opts() -> FitOptions {
        FitOptions { max_iter: 20_000, tol: 1e-9, ..Default::default() }
    }

    #[test]
    fn zero_is_optimal_for_large_lambda() {
        let spec = EnsembleSpec::new(Track::Highdim, 12, 2, 6, 40, 5).with_seed(1);
        let (_, b) = generate(&spec).unwrap();
        let lam = linops::spectral_norm(&source_operator_adjoint(&b, &b.y)) / 40.0 * 1.0001;
        let fit = fit_nuclear_mtl(&b, lam, &opts()).unwrap();
        let theta = &fit.b_hat * &fit.w_hat;
        assert_eq!(theta.amax(), 0.0);
        assert!(fit.grad_residual <= 1e-12);
    }

    #[test]
    fn tiny_lambda_approaches_ols() {
        let spec = EnsembleSpec::new(Track::Highdim, 8, 2, 5, 30, 5).with_seed(2);
        let (_, b) = generate(&spec).unwrap();
        let fit = fit_nuclear_mtl(&b, 1e-8, &FitOptions { max_iter: 50_000, tol: 1e-11, ..Default::default() }).unwrap();
        let theta = &fit.b_hat * &fit.w_hat;
        let ols: f64 = (0..5)
            .map(|t| (&b.y[t] - &b.x[t] * linops::lstsq_min_norm(&b.x[t], &b.y[t])).norm_squared())
            .sum::<f64>()
            / 60.0;
        let data = nuclear_objective(&b, &theta, 0.0);
        assert!((data - ols).abs() <= 1e-6, "gap {}", data - ols);
    }

    #[test]
    fn trace_is_monotone_and_certificate_small() {
        let spec = EnsembleSpec::new(Track::Highdim, 30, 2, 10, 100, 5).with_seed(3);
        let (_, b) = generate(&spec).unwrap();
        let lam = oracle_lambda(&b);
        for rule in [StepRule::FixedLipschitz, StepRule::Backtracking] {
            let fit = fit_nuclear_mtl(&b, lam, &FitOptions { step_rule: rule, ..opts() }).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            assert!(fit.converged);
            assert!(fit.grad_residual <= 1e-6, "residual {}", fit.grad_residual);
        }
    }

    #[test]
    fn guarantee_under_oracle_lambda() {
        let spec = EnsembleSpec::new(Track::Highdim, 30, 2, 10, 100, 5).with_seed(8);
        let (gt, b) = generate(&spec).unwrap();
        let lam = oracle_lambda(&b);
        let fit = fit_nuclear_mtl(&b, lam, &opts()).unwrap();
        let theta = &fit.b_hat * &fit.w_hat;
        let pred: f64 = (0..10).map(|t| (&b.x[t] * (theta.column(t) - gt.theta_star.column(t))).norm_squared()).sum();
        let lhs = pred / 100.0 + lam * linops::nuclear_norm(&theta);
        assert!(lhs <= 3.0 * lam * gt.nuclear_r * (1.0 + 1e-6));
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let spec = EnsembleSpec::new(Track::Highdim, 6, 2, 4, 10, 5);
        let (_, b) = generate(&spec).unwrap();
        assert!(fit_nuclear_mtl(&b, 0.0, &opts()).is_err());
    }

    #[test]
    fn default_lambda_formula() {
        let v = default_lambda(1.0, 10, 90, 1.0, 30.0);
        let expected = 2.0 * 100f64.ln().sqrt() * (10f64.sqrt() + 30f64.sqrt()) / 90f64.sqrt();
        assert!((v - expected).abs() <= 1e-14);
        assert_eq!(default_lambda(0.0, 10, 90, 1.0, 30.0), 0.0);
    }
}
