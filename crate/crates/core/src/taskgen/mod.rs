//! Synthetic multi-task ensembles.
//!
//! A [`GroundTruth`] holds the teacher parameters and the population
//! covariances; a [`TaskBundle`] holds one realization of the source and target
//! samples. All randomness comes from [`crate::rng::stream`] keyed by the spec's
//! master seed, so a `(spec, seed)` pair always produces the same bytes.

mod io;

pub use io::{read_bundle, write_bundle, BUNDLE_MAGIC};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linops::{self, DenseMatrix, Vector};
use crate::rng::{gaussian_matrix, gaussian_vector, stream};

const DIVERSITY_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceFamily {
    Identity,
    DiagonalDecay,
    RandomPsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDist {
    Gaussian,
    ScaledRademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Track {
    Lowdim,
    Highdim,
    Relu,
}

impl std::str::FromStr for CovarianceFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "diagonal-decay" => Ok(Self::DiagonalDecay),
            "random-psd" => Ok(Self::RandomPsd),
            _ => invalid(format!("unknown covariance family `{s}`")),
        }
    }
}

impl std::str::FromStr for InputDist {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "scaled-rademacher" => Ok(Self::ScaledRademacher),
            _ => invalid(format!("unknown input distribution `{s}`")),
        }
    }
}

impl std::str::FromStr for Track {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lowdim" => Ok(Self::Lowdim),
            "highdim" => Ok(Self::Highdim),
            "relu" => Ok(Self::Relu),
            _ => invalid(format!("unknown track `{s}`")),
        }
    }
}

impl std::fmt::Display for Track {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Track::Lowdim => "lowdim",
            Track::Highdim => "highdim",
            Track::Relu => "relu",
        })
    }
}

/// Every generative knob of an ensemble.
///
/// On the relu track `d` is the teacher input dimension and `k` the teacher
/// hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub n1: usize,
    pub n2: usize,
    pub sigma: f64,
    pub c: f64,
    pub covariance_family: CovarianceFamily,
    pub input_dist: InputDist,
    pub master_seed: u64,
    pub track: Track,
}

impl EnsembleSpec {
    /// Gaussian inputs, identity covariance, σ = 1, c = 1, seed 0.
    pub fn new(track: Track, d: usize, k: usize, t: usize, n1: usize, n2: usize) -> Self {
        Self {
            d,
            k,
            t,
            n1,
            n2,
            sigma: 1.0,
            c: 1.0,
            covariance_family: CovarianceFamily::Identity,
            input_dist: InputDist::Gaussian,
            master_seed: 0,
            track,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.k == 0 || self.t == 0 {
            return invalid("d, k and T must be at least 1");
        }
        if self.n1 == 0 || self.n2 == 0 {
            return invalid("n1 and n2 must be at least 1");
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return invalid(format!("c must lie in (0, 1], got {}", self.c));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return invalid(format!("sigma must be finite and >= 0, got {}", self.sigma));
        }
        if self.track != Track::Relu && self.k > self.d {
            return invalid(format!("k = {} exceeds d = {}", self.k, self.d));
        }
        if self.track == Track::Lowdim && 2 * self.k > self.d.min(self.t) {
            return invalid(format!(
                "lowdim track needs 2k <= min(d, T); got k = {}, d = {}, T = {}",
                self.k, self.d, self.t
            ));
        }
        Ok(())
    }
}

/// Two-layer ReLU teacher: `x ↦ head_tᵀ (hiddenᵀ x)₊`.
#[derive(Debug, Clone, PartialEq)]
pub struct NnTeacher {
    /// d0 × width, unit-norm columns (one per neuron).
    pub hidden: DenseMatrix,
    /// width × T.
    pub head: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub b_star: DenseMatrix,
    pub w_star: DenseMatrix,
    pub theta_star: DenseMatrix,
    /// ‖Θ*‖_*.
    pub nuclear_r: f64,
    pub nn_teacher: Option<NnTeacher>,
    /// Σ_1..Σ_T followed by the target covariance Σ_{T+1}.
    pub sigmas: Vec<DenseMatrix>,
    sigma_roots: Vec<Option<DenseMatrix>>,
}

impl GroundTruth {
    pub fn target_sigma(&self) -> &DenseMatrix {
        self.sigmas.last().expect("at least one covariance")
    }

    /// Σ^{1/2} for covariance index `i` (`T` is the target).
    pub fn sigma_root(&self, i: usize) -> DenseMatrix {
        match &self.sigma_roots[i] {
            Some(r) => r.clone(),
            None => DenseMatrix::identity(self.sigmas[i].nrows(), self.sigmas[i].ncols()),
        }
    }

    /// max_t λ_max(Σ_t) / min_t λ_min(Σ_t) over all T+1 covariances.
    pub fn kappa(&self) -> f64 {
        let hi = self.sigmas.iter().map(linops::max_eigenvalue).fold(f64::NEG_INFINITY, f64::max);
        let lo = self.sigmas.iter().map(linops::min_eigenvalue).fold(f64::INFINITY, f64::min);
        hi / lo
    }

    /// Noise-free response of source task `t`.
    pub fn signal(&self, track: Track, x: &DenseMatrix, t: usize) -> Vector {
        match track {
            Track::Lowdim => (x * &self.b_star) * self.w_star.column(t),
            Track::Highdim => x * self.theta_star.column(t),
            Track::Relu => {
                let nn = self.nn_teacher.as_ref().expect("relu track carries a teacher");
                relu(&(x * &nn.hidden)) * nn.head.column(t)
            }
        }
    }

    /// Noise-free response of a target task with realized weight `weight`.
    pub fn target_signal(&self, track: Track, x: &DenseMatrix, weight: &Vector) -> Vector {
        match track {
            Track::Lowdim => (x * &self.b_star) * weight,
            Track::Highdim => x * weight,
            Track::Relu => {
                let nn = self.nn_teacher.as_ref().expect("relu track carries a teacher");
                relu(&(x * &nn.hidden)) * weight
            }
        }
    }

    /// Population parameter θ of a linear target weight.
    pub fn target_theta(&self, track: Track, weight: &Vector) -> Vector {
        match track {
            Track::Lowdim => &self.b_star * weight,
            _ => weight.clone(),
        }
    }
}

pub fn relu(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// One realization of source and target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBundle {
    pub k: usize,
    pub x: Vec<DenseMatrix>,
    pub y: Vec<Vector>,
    pub x_target: DenseMatrix,
    pub y_target: Vector,
    /// Realized noise for each source task.
    pub z: Vec<Vector>,
    pub z_target: Vector,
    pub target_weight: Vector,
}

impl TaskBundle {
    pub fn d(&self) -> usize {
        self.x_target.ncols()
    }
    pub fn t(&self) -> usize {
        self.x.len()
    }
    pub fn n1(&self) -> usize {
        self.x.first().map_or(0, |m| m.nrows())
    }
    pub fn n2(&self) -> usize {
        self.x_target.nrows()
    }

    /// Stacked source labels as the n1 × T matrix Y.
    pub fn y_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_columns(&self.y)
    }

    /// Stacked source noise as the n1 × T matrix Z.
    pub fn z_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_columns(&self.z)
    }
}

fn rotation(rng: &mut impl Rng, d: usize) -> DenseMatrix {
    linops::orthonormalize(&gaussian_matrix(rng, d, d))
}

/// Population covariances Σ_1..Σ_T, Σ_{T+1}.
pub fn make_covariances(spec: &EnsembleSpec) -> Result<Vec<DenseMatrix>> {
    spec.validate()?;
    let d = spec.d;
    let t = spec.t;
    let shared = spec.track != Track::Lowdim;
    let decay = Vector::from_fn(d, |j, _| 1.0 / (j + 1) as f64);
    let mut rng = stream(spec.master_seed, "covariance", 0);
    let target = match spec.covariance_family {
        CovarianceFamily::Identity => DenseMatrix::identity(d, d),
        CovarianceFamily::DiagonalDecay => DenseMatrix::from_diagonal(&decay),
        CovarianceFamily::RandomPsd => {
            let q = rotation(&mut rng, d);
            linops::symmetrize(&(&q * DenseMatrix::from_diagonal(&decay) * q.transpose()))
        }
    };
    let mut out = Vec::with_capacity(t + 1);
    for i in 0..t {
        let sigma_t = if shared || spec.covariance_family == CovarianceFamily::Identity {
            target.clone()
        } else {
            let mut rng = stream(spec.master_seed, "covariance-task", i as u64);
            let u = Vector::from_fn(d, |j, _| rng.random_range(0.0..2.0) * (1.0 - spec.c) * decay[j]);
            let extra = match spec.covariance_family {
                CovarianceFamily::DiagonalDecay => DenseMatrix::from_diagonal(&u),
                _ => {
                    let q = rotation(&mut rng, d);
                    linops::symmetrize(&(&q * DenseMatrix::from_diagonal(&u) * q.transpose()))
                }
            };
            &target * spec.c + extra
        };
        out.push(sigma_t);
    }
    out.push(target);
    Ok(out)
}

fn draw_heads(spec: &EnsembleSpec) -> Result<DenseMatrix> {
    let (k, t) = (spec.k, spec.t);
    let threshold = t as f64 / (4.0 * k as f64);
    for attempt in 0..DIVERSITY_RETRIES {
        let mut rng = stream(spec.master_seed, "w_star", attempt as u64);
        let mut w = gaussian_matrix(&mut rng, k, t);
        for mut col in w.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let s = linops::singular_values(&w);
        let smin = if s.len() < k { 0.0 } else { s[k - 1] };
        if smin * smin >= threshold {
            return Ok(w);
        }
    }
    Err(Error::Generation(format!(
        "no head matrix with sigma_k^2 >= T/(4k) after {DIVERSITY_RETRIES} draws (k = {k}, T = {t})"
    )))
}

pub fn sample_ground_truth(spec: &EnsembleSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let sigmas = make_covariances(spec)?;
    let d = spec.d;
    let k_rep = spec.k.min(d);
    let b_star = linops::orthonormalize(&gaussian_matrix(&mut stream(spec.master_seed, "b_star", 0), d, k_rep));
    let w_full = draw_heads(spec)?;
    let w_star = w_full.rows(0, k_rep).into_owned();
    let theta_star = &b_star * &w_star;
    let nuclear_r = linops::nuclear_norm(&theta_star);
    let nn_teacher = if spec.track == Track::Relu {
        let mut rng = stream(spec.master_seed, "teacher", 0);
        let width = spec.k;
        let mut hidden = gaussian_matrix(&mut rng, d, width);
        for mut col in hidden.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let scale = (1.0 / width as f64).sqrt();
        let head = gaussian_matrix(&mut rng, width, spec.t) * scale;
        Some(NnTeacher { hidden, head })
    } else {
        None
    };
    let sigma_roots = sigmas
        .iter()
        .map(|s| if *s == DenseMatrix::identity(d, d) { None } else { Some(linops::sqrt_psd(s)) })
        .collect();
    Ok(GroundTruth { b_star, w_star, theta_star, nuclear_r, nn_teacher, sigmas, sigma_roots })
}

/// Whitened inputs, n × d.
pub fn whitened_inputs(rng: &mut impl Rng, dist: InputDist, n: usize, d: usize) -> DenseMatrix {
    match dist {
        InputDist::Gaussian => gaussian_matrix(rng, n, d),
        InputDist::ScaledRademacher => {
            let mut m = DenseMatrix::zeros(n, d);
            for i in 0..n {
                for j in 0..d {
                    m[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            m
        }
    }
}

fn draw_design(spec: &EnsembleSpec, gt: &GroundTruth, cov_index: usize, tag: &str, index: u64, n: usize) -> DenseMatrix {
    let mut rng = stream(spec.master_seed, tag, index);
    let xbar = whitened_inputs(&mut rng, spec.input_dist, n, spec.d);
    match &gt.sigma_roots[cov_index] {
        Some(root) => xbar * root,
        None => xbar,
    }
}

fn draw_noise(spec: &EnsembleSpec, tag: &str, index: u64, n: usize) -> Vector {
    let mut rng = stream(spec.master_seed, tag, index);
    gaussian_vector(&mut rng, n) * spec.sigma
}

/// Labels `signal + noise`, with the stored noise recomputed as `y - signal` so
/// that subtracting the signal again reproduces it bit for bit.
fn label(signal: Vector, noise: Vector) -> (Vector, Vector) {
    let y = &signal + noise;
    let z = &y - &signal;
    (y, z)
}

pub fn sample_tasks(spec: &EnsembleSpec, gt: &GroundTruth) -> Result<TaskBundle> {
    spec.validate()?;
    if gt.sigmas.len() != spec.t + 1 || gt.theta_star.nrows() != spec.d || gt.theta_star.ncols() != spec.t {
        return invalid("ground truth does not match the spec");
    }
    let mut x = Vec::with_capacity(spec.t);
    let mut y = Vec::with_capacity(spec.t);
    let mut z = Vec::with_capacity(spec.t);
    for t in 0..spec.t {
        let xt = draw_design(spec, gt, t, "source-x", t as u64, spec.n1);
        let (yt, zt) = label(gt.signal(spec.track, &xt, t), draw_noise(spec, "source-noise", t as u64, spec.n1));
        x.push(xt);
        y.push(yt);
        z.push(zt);
    }
    let target_weight = sample_target_weight(gt, spec.track, spec.master_seed)?;
    let (x_target, y_target, z_target) = sample_target_data(spec, gt, &target_weight, spec.n2, 0);
    Ok(TaskBundle { k: spec.k, x, y, x_target, y_target, z, z_target, target_weight })
}

/// Fresh target design, labels and noise for a given target weight.
pub fn sample_target_data(
    spec: &EnsembleSpec,
    gt: &GroundTruth,
    weight: &Vector,
    n: usize,
    index: u64,
) -> (DenseMatrix, Vector, Vector) {
    let xt = draw_design(spec, gt, spec.t, "target-x", index, n);
    let (yt, zt) = label(gt.target_signal(spec.track, &xt, weight), draw_noise(spec, "target-noise", index, n));
    (xt, yt, zt)
}

/// Draw a target weight from the natural prior of the track.
pub fn sample_target_weight(gt: &GroundTruth, track: Track, seed: u64) -> Result<Vector> {
    let mut rng = stream(seed, "target-weight", 0);
    Ok(draw_target_weight(gt, track, &mut rng))
}

pub(crate) fn draw_target_weight(gt: &GroundTruth, track: Track, rng: &mut impl Rng) -> Vector {
    match track {
        Track::Lowdim => {
            let k = gt.b_star.ncols();
            loop {
                let g = gaussian_vector(rng, k);
                let n = g.norm();
                if n > 0.0 {
                    break g / n;
                }
            }
        }
        Track::Highdim => {
            let t = gt.theta_star.ncols();
            let g = gaussian_vector(rng, t);
            &gt.theta_star * g / (t as f64).sqrt()
        }
        Track::Relu => {
            let nn = gt.nn_teacher.as_ref().expect("relu track carries a teacher");
            let t = nn.head.ncols();
            let g = Vector::from_fn(t, |_, _| rng.sample(StandardNormal));
            &nn.head * g / (t as f64).sqrt()
        }
    }
}

/// Convenience: ground truth and bundle in one call.
pub fn generate(spec: &EnsembleSpec) -> Result<(GroundTruth, TaskBundle)> {
    let gt = sample_ground_truth(spec)?;
    let bundle = sample_tasks(spec, &gt)?;
    Ok((gt, bundle))
}
