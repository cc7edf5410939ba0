//! Excess-risk evaluation and representation-quality metrics.

mod width;

pub use width::{gaussian_width_mc, linear_class_width};

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::estimators::{self, FitOptions};
use crate::linops::{self, DenseMatrix, Vector};
use crate::rng::stream;
use crate::taskgen::{self, relu, whitened_inputs, EnsembleSpec, GroundTruth, Track};

/// Default Monte-Carlo sample size for network population risk.
pub const NN_RISK_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub er_mean: f64,
    pub er_se: f64,
    pub n_draws: usize,
    pub rep_term: f64,
    pub noise_term: f64,
    pub subspace_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepCovariance {
    /// Joint second-moment matrix of (φ(x), φ'(x)).
    pub sigma_blocks: DenseMatrix,
    /// Σ(φ',φ') − Σ(φ',φ) Σ(φ,φ)† Σ(φ,φ').
    pub divergence: DenseMatrix,
}

/// A feature map x ↦ Bᵀx or x ↦ (Bᵀx)₊.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    Linear(DenseMatrix),
    Relu(DenseMatrix),
}

impl FeatureMap {
    pub fn features(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            FeatureMap::Linear(b) => x * b,
            FeatureMap::Relu(b) => relu(&(x * b)),
        }
    }
    fn dim(&self) -> usize {
        match self {
            FeatureMap::Linear(b) | FeatureMap::Relu(b) => b.ncols(),
        }
    }
}

/// How the target task is fit on top of (or without) a learned representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    /// Minimum-norm least squares on X·B̂.
    Linear { b_hat: DenseMatrix },
    /// Norm-constrained least squares on X·B̂.
    Constrained { b_hat: DenseMatrix, r: f64 },
    /// Norm-constrained least squares in the ambient space.
    RidgeBaseline { budget: f64 },
    /// Output-layer retraining on (X·B̂)₊.
    Relu { b_hat: DenseMatrix, r: f64 },
    /// A fresh network trained on the target sample only.
    ScratchNn { width: usize, lambda: f64, opts: FitOptions },
}

/// Distribution of the target weight.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetPrior {
    /// The track's natural prior (sphere, Gaussian mixing of source tasks, ...).
    Natural,
    /// Every draw uses this weight.
    PointMass(Vector),
}

/// ½ ΔᵀΣΔ with Δ = B̂ŵ − B*w*.
pub fn excess_risk_linear(
    b_hat: &DenseMatrix,
    w_hat: &Vector,
    b_star: &DenseMatrix,
    w_star: &Vector,
    sigma: &DenseMatrix,
) -> Result<f64> {
    if b_hat.ncols() != w_hat.len() || b_star.ncols() != w_star.len() || b_hat.nrows() != b_star.nrows() {
        return invalid("excess_risk_linear: dimension mismatch");
    }
    if sigma.nrows() != b_hat.nrows() || !sigma.is_square() {
        return invalid("excess_risk_linear: covariance has the wrong shape");
    }
    let delta = b_hat * w_hat - b_star * w_star;
    Ok(excess_risk_theta(&delta, sigma))
}

fn excess_risk_theta(delta: &Vector, sigma: &DenseMatrix) -> f64 {
    (0.5 * delta.dot(&(sigma * delta))).max(0.0)
}

/// ‖P⊥_{Σ^{1/2}B̂} Σ^{1/2}B*‖_F / √k.
pub fn subspace_distance(b_hat: &DenseMatrix, b_star: &DenseMatrix, sigma: &DenseMatrix) -> Result<f64> {
    if b_hat.nrows() != b_star.nrows() || sigma.nrows() != b_hat.nrows() {
        return invalid("subspace_distance: dimension mismatch");
    }
    let k = b_star.ncols();
    if k == 0 {
        return Ok(0.0);
    }
    let root = linops::sqrt_psd(sigma);
    let pc = linops::complement_projector(&(&root * b_hat))?;
    Ok((pc * &root * b_star).norm() / (k as f64).sqrt())
}

/// Empirical Λ and divergence D of two feature maps on the rows of `x`.
pub fn rep_covariance(phi: &FeatureMap, phi_prime: &FeatureMap, x: &DenseMatrix) -> Result<RepCovariance> {
    if x.nrows() == 0 {
        return invalid("rep_covariance needs a nonempty sample");
    }
    let n = x.nrows() as f64;
    let fa = phi.features(x);
    let fb = phi_prime.features(x);
    let (ka, kb) = (phi.dim(), phi_prime.dim());
    let mut joint = DenseMatrix::zeros(x.nrows(), ka + kb);
    joint.view_mut((0, 0), (x.nrows(), ka)).copy_from(&fa);
    joint.view_mut((0, ka), (x.nrows(), kb)).copy_from(&fb);
    let sigma_blocks = linops::symmetrize(&(joint.tr_mul(&joint) / n));
    let saa = sigma_blocks.view((0, 0), (ka, ka)).into_owned();
    let sba = sigma_blocks.view((ka, 0), (kb, ka)).into_owned();
    let sbb = sigma_blocks.view((ka, ka), (kb, kb)).into_owned();
    let divergence = linops::symmetrize(&(sbb - &sba * linops::pinv(&saa) * sba.transpose()));
    Ok(RepCovariance { sigma_blocks, divergence })
}

/// Fixed per-call target sample: the target design and noise are drawn once,
/// the target weight varies per draw.
struct TargetSample {
    x: DenseMatrix,
    z: Vector,
}

fn target_sample(spec: &EnsembleSpec, gt: &GroundTruth, seed: u64) -> TargetSample {
    let mut s = spec.clone();
    s.master_seed = seed;
    let zero = match spec.track {
        Track::Lowdim => Vector::zeros(gt.b_star.ncols()),
        Track::Highdim => Vector::zeros(spec.d),
        Track::Relu => Vector::zeros(gt.nn_teacher.as_ref().map_or(0, |nn| nn.hidden.ncols())),
    };
    let (x, _, z) = taskgen::sample_target_data(&s, gt, &zero, spec.n2, 1);
    TargetSample { x, z }
}

/// Population-risk evaluator for network predictors over a fixed MC sample.
struct NnRisk {
    x: DenseMatrix,
    teacher_features: DenseMatrix,
}

impl NnRisk {
    fn new(spec: &EnsembleSpec, gt: &GroundTruth, seed: u64, samples: usize) -> Self {
        let mut rng = stream(seed, "risk-mc", 0);
        let xbar = whitened_inputs(&mut rng, spec.input_dist, samples, spec.d);
        let x = xbar * gt.sigma_root(spec.t);
        let hidden = &gt.nn_teacher.as_ref().expect("relu track carries a teacher").hidden;
        let teacher_features = relu(&(&x * hidden));
        Self { x, teacher_features }
    }

    fn risk(&self, hidden: &DenseMatrix, head: &Vector, alpha: &Vector) -> f64 {
        let diff = relu(&(&self.x * hidden)) * head - &self.teacher_features * alpha;
        0.5 * diff.norm_squared() / self.x.nrows() as f64
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 || v.iter().all(|x| *x == v[0]) {
        return (if v.is_empty() { mean } else { v[0] }, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// E_ν[ER] of a target pipeline by Monte Carlo over the target weight.
pub fn expected_excess_risk(
    pipeline: &Pipeline,
    spec: &EnsembleSpec,
    gt: &GroundTruth,
    prior: &TargetPrior,
    nu_draws: usize,
    seed: u64,
) -> Result<RiskReport> {
    if nu_draws == 0 {
        return invalid("nu_draws must be >= 1");
    }
    let sample = target_sample(spec, gt, seed);
    let sigma = gt.target_sigma();
    let nn = (spec.track == Track::Relu).then(|| NnRisk::new(spec, gt, seed, NN_RISK_SAMPLES));
    let draw = |i: usize| -> Result<f64> {
        let weight = match prior {
            TargetPrior::PointMass(w) => w.clone(),
            TargetPrior::Natural => {
                let mut rng = stream(seed, "nu-draw", i as u64);
                taskgen::draw_target_weight(gt, spec.track, &mut rng)
            }
        };
        let y = gt.target_signal(spec.track, &sample.x, &weight) + &sample.z;
        match pipeline {
            Pipeline::Linear { b_hat } => {
                let w = estimators::fit_target_linear(b_hat, &sample.x, &y)?;
                Ok(excess_risk_theta(&(b_hat * w - gt.target_theta(spec.track, &weight)), sigma))
            }
            Pipeline::Constrained { b_hat, r } => {
                let w = estimators::fit_target_constrained(b_hat, &sample.x, &y, *r)?;
                Ok(excess_risk_theta(&(b_hat * w - gt.target_theta(spec.track, &weight)), sigma))
            }
            Pipeline::RidgeBaseline { budget } => match spec.track {
                Track::Relu => {
                    let w = estimators::baseline_target_ridge(&sample.x, &y, *budget)?;
                    let nn = nn.as_ref().unwrap();
                    let diff = &nn.x * w - &nn.teacher_features * &weight;
                    Ok(0.5 * diff.norm_squared() / nn.x.nrows() as f64)
                }
                _ => {
                    let w = estimators::baseline_target_ridge(&sample.x, &y, *budget)?;
                    Ok(excess_risk_theta(&(w - gt.target_theta(spec.track, &weight)), sigma))
                }
            },
            Pipeline::Relu { .. } | Pipeline::ScratchNn { .. } if nn.is_none() => {
                invalid("network pipelines need a relu-track ground truth")
            }
            Pipeline::Relu { b_hat, r } => {
                let w = estimators::fit_relu_target(b_hat, &sample.x, &y, *r)?;
                Ok(nn.as_ref().unwrap().risk(b_hat, &w, &weight))
            }
            Pipeline::ScratchNn { width, lambda, opts } => {
                let fit = estimators::baseline_target_nn(&sample.x, &y, *width, *lambda, opts)?;
                Ok(nn.as_ref().unwrap().risk(&fit.b_hat, &fit.w_hat.column(0).into_owned(), &weight))
            }
        }
    };
    let values = if matches!(pipeline, Pipeline::ScratchNn { .. }) {
        (0..nu_draws).into_par_iter().map(draw).collect::<Result<Vec<_>>>()?
    } else {
        (0..nu_draws).map(draw).collect::<Result<Vec<_>>>()?
    };
    let (er_mean, er_se) = mean_se(&values);
    let (rep_term, subspace_dist) = decomposition(pipeline, spec, gt, &sample.x)?;
    Ok(RiskReport {
        er_mean,
        er_se,
        n_draws: nu_draws,
        rep_term,
        noise_term: (er_mean - rep_term).max(0.0),
        subspace_dist,
    })
}

/// Representation term (1/n2)‖P⊥_{F̂} F*‖² weighted by the prior's second moment,
/// and the subspace distance of the representation.
fn decomposition(pipeline: &Pipeline, spec: &EnsembleSpec, gt: &GroundTruth, x: &DenseMatrix) -> Result<(f64, f64)> {
    let n2 = x.nrows() as f64;
    let sigma = gt.target_sigma();
    let linear_rep = |b_hat: &DenseMatrix| -> Result<(f64, f64)> {
        let (star, moment) = match spec.track {
            Track::Lowdim => (gt.b_star.clone(), 1.0 / gt.b_star.ncols() as f64),
            _ => (gt.theta_star.clone(), 1.0 / spec.t as f64),
        };
        let pc = linops::complement_projector(&(x * b_hat))?;
        let rep = (pc * x * &star).norm_squared() / n2 * moment;
        let dist = subspace_distance(b_hat, &linops::range_basis(&gt.theta_star), sigma)?;
        Ok((rep, dist))
    };
    match pipeline {
        Pipeline::Linear { b_hat } | Pipeline::Constrained { b_hat, .. } => linear_rep(b_hat),
        Pipeline::RidgeBaseline { .. } => Ok((0.0, 0.0)),
        Pipeline::Relu { b_hat, .. } => {
            let nn = gt.nn_teacher.as_ref().expect("relu track carries a teacher");
            let pc = linops::complement_projector(&relu(&(x * b_hat)))?;
            let star = relu(&(x * &nn.hidden)) * &nn.head;
            let rep = (pc * star).norm_squared() / n2 / spec.t as f64;
            let dist = subspace_distance(b_hat, &nn.hidden, sigma)?;
            Ok((rep, dist))
        }
        Pipeline::ScratchNn { .. } => Ok((0.0, 0.0)),
    }
}
