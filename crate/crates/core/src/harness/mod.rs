//! Parameter sweeps, CSV output, scaling-slope fits and the command line.

pub mod cli;
mod config;

pub use config::{load_config, parse_config, SweepConfig};

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::estimators::{self, FitOptions};
use crate::linops::{self, DenseMatrix};
use crate::risk::{self, Pipeline, RiskReport, TargetPrior};
use crate::taskgen::{self, EnsembleSpec, GroundTruth, TaskBundle};

/// Header comment of every CSV; bump when the column set changes.
pub const SCHEMA_LINE: &str = "# schema=1";

pub const CSV_COLUMNS: [&str; 20] = [
    "sweep_id",
    "axis",
    "axis_value",
    "seed",
    "method",
    "d",
    "k",
    "T",
    "n1",
    "n2",
    "sigma",
    "c",
    "er_mean",
    "er_se",
    "rep_term",
    "noise_term",
    "subspace_dist",
    "kappa",
    "runtime_ms",
    "error_flag",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Lowdim,
    Nuclear,
    Relu,
    BaselineRidge,
    BaselineNnScratch,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Lowdim, Method::Nuclear, Method::Relu, Method::BaselineRidge, Method::BaselineNnScratch];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lowdim => "lowdim",
            Method::Nuclear => "nuclear",
            Method::Relu => "relu",
            Method::BaselineRidge => "baseline-ridge",
            Method::BaselineNnScratch => "baseline-nn-scratch",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// Swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    D,
    K,
    T,
    N1,
    N2,
    Sigma,
    C,
}

impl Axis {
    pub fn is_integer(self) -> bool {
        !matches!(self, Axis::Sigma | Axis::C)
    }

    pub fn apply(self, spec: &mut EnsembleSpec, v: f64) {
        match self {
            Axis::D => spec.d = v as usize,
            Axis::K => spec.k = v as usize,
            Axis::T => spec.t = v as usize,
            Axis::N1 => spec.n1 = v as usize,
            Axis::N2 => spec.n2 = v as usize,
            Axis::Sigma => spec.sigma = v,
            Axis::C => spec.c = v,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::D => "d",
            Axis::K => "k",
            Axis::T => "T",
            Axis::N1 => "n1",
            Axis::N2 => "n2",
            Axis::Sigma => "sigma",
            Axis::C => "c",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "d" => Axis::D,
            "k" => Axis::K,
            "t" | "T" => Axis::T,
            "n1" => Axis::N1,
            "n2" => Axis::N2,
            "sigma" => Axis::Sigma,
            "c" => Axis::C,
            _ => return invalid(format!("unknown axis `{s}`")),
        })
    }
}

/// Regularization level of the nuclear-norm fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    /// (2/n1)‖X*(Z)‖₂ from the stored noise.
    Oracle,
    /// The closed-form default from σ, T, n1 and Σ.
    Default,
    Fixed(f64),
}

impl FromStr for LambdaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(LambdaRule::Oracle),
            "default" => Ok(LambdaRule::Default),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaRule::Fixed(v)),
                _ => invalid(format!("nuclear_lambda must be oracle, default or a positive number, got `{s}`")),
            },
        }
    }
}

/// Solver knobs shared by every method of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub max_iter: usize,
    pub restarts: usize,
    pub nuclear_lambda: LambdaRule,
    pub relu_width: usize,
    pub relu_lambda: f64,
    /// Norm budget of the target fit; infinite means unconstrained.
    pub target_budget: f64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            restarts: 1,
            nuclear_lambda: LambdaRule::Oracle,
            relu_width: 16,
            relu_lambda: 1e-3,
            target_budget: f64::INFINITY,
        }
    }
}

impl MethodSettings {
    fn fit_options(&self, seed: u64) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            restarts: self.restarts,
            r: self.target_budget,
            width: self.relu_width,
            lambda: self.relu_lambda,
            seed,
            ..Default::default()
        }
    }
}

fn nuclear_lambda(rule: LambdaRule, spec: &EnsembleSpec, gt: &GroundTruth, bundle: &TaskBundle) -> f64 {
    match rule {
        LambdaRule::Oracle => estimators::oracle_lambda(bundle),
        LambdaRule::Default => {
            let src = &gt.sigmas[..spec.t];
            let op = src.iter().map(linops::max_eigenvalue).fold(0.0, f64::max);
            let tr = src.iter().map(|s| s.trace()).fold(0.0, f64::max);
            estimators::default_lambda(spec.sigma, spec.t, spec.n1, op, tr)
        }
        LambdaRule::Fixed(v) => v,
    }
}

/// Columns of B̂ carrying a nonzero singular direction.
fn drop_null_columns(b: &DenseMatrix) -> DenseMatrix {
    let norms: Vec<f64> = b.column_iter().map(|c| c.norm()).collect();
    let top = norms.iter().cloned().fold(0.0, f64::max);
    let cut = linops::rank_cutoff(b.nrows(), b.ncols(), top).max(f64::MIN_POSITIVE);
    let keep: Vec<_> = b.column_iter().zip(&norms).filter(|(_, n)| **n > cut).map(|(c, _)| c.into_owned()).collect();
    if keep.is_empty() {
        DenseMatrix::zeros(b.nrows(), 0)
    } else {
        DenseMatrix::from_columns(&keep)
    }
}

/// Learns the source representation with `method` (if it has one) and
/// returns the target pipeline on top of it.
pub fn build_pipeline(
    method: Method,
    spec: &EnsembleSpec,
    gt: &GroundTruth,
    bundle: &TaskBundle,
    settings: &MethodSettings,
) -> Result<Pipeline> {
    let opts = settings.fit_options(spec.master_seed);
    let linear = |b_hat: DenseMatrix| {
        if settings.target_budget.is_finite() {
            Pipeline::Constrained { b_hat, r: settings.target_budget }
        } else {
            Pipeline::Linear { b_hat }
        }
    };
    Ok(match method {
        Method::Lowdim => linear(estimators::fit_lowdim_mtl(bundle, spec.k, &opts)?.b_hat),
        Method::Nuclear => {
            let lambda = nuclear_lambda(settings.nuclear_lambda, spec, gt, bundle);
            let nuc_opts = FitOptions { max_iter: settings.max_iter.max(2000), tol: 1e-9, ..opts };
            linear(drop_null_columns(&estimators::fit_nuclear_mtl(bundle, lambda, &nuc_opts)?.b_hat))
        }
        Method::Relu => {
            let fit = estimators::fit_relu_mtl(bundle, settings.relu_width, settings.relu_lambda, &opts)?;
            Pipeline::Relu { b_hat: fit.b_hat, r: settings.target_budget }
        }
        Method::BaselineRidge => Pipeline::RidgeBaseline { budget: settings.target_budget },
        Method::BaselineNnScratch => {
            Pipeline::ScratchNn { width: settings.relu_width, lambda: settings.relu_lambda, opts }
        }
    })
}

/// Generates the ensemble of `spec`, runs `method` and evaluates its expected
/// excess risk over `nu_draws` target weights.
pub fn evaluate_method(
    method: Method,
    spec: &EnsembleSpec,
    settings: &MethodSettings,
    nu_draws: usize,
) -> Result<(GroundTruth, RiskReport)> {
    let (gt, bundle) = taskgen::generate(spec)?;
    let pipeline = build_pipeline(method, spec, &gt, &bundle, settings)?;
    let report = risk::expected_excess_risk(&pipeline, spec, &gt, &TargetPrior::Natural, nu_draws, spec.master_seed)?;
    Ok((gt, report))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep_id: String,
    pub axis: String,
    pub axis_value: f64,
    pub seed: u64,
    pub method: String,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub n1: usize,
    pub n2: usize,
    pub sigma: f64,
    pub c: f64,
    pub er_mean: f64,
    pub er_se: f64,
    pub rep_term: f64,
    pub noise_term: f64,
    pub subspace_dist: f64,
    pub kappa: f64,
    pub runtime_ms: f64,
    pub error_flag: bool,
}

impl ResultRow {
    /// Numeric column by CSV name.
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "axis_value" => self.axis_value,
            "seed" => self.seed as f64,
            "d" => self.d as f64,
            "k" => self.k as f64,
            "T" => self.t as f64,
            "n1" => self.n1 as f64,
            "n2" => self.n2 as f64,
            "sigma" => self.sigma,
            "c" => self.c,
            "er_mean" => self.er_mean,
            "er_se" => self.er_se,
            "rep_term" => self.rep_term,
            "noise_term" => self.noise_term,
            "subspace_dist" => self.subspace_dist,
            "kappa" => self.kappa,
            "runtime_ms" => self.runtime_ms,
            _ => return None,
        })
    }
}

fn cell(cfg: &SweepConfig, value: f64, seed_index: usize, method: Method) -> ResultRow {
    let mut spec = cfg.base_spec.clone();
    cfg.axis.apply(&mut spec, value);
    spec.master_seed = cfg.base_spec.master_seed.wrapping_add(seed_index as u64);
    let start = Instant::now();
    let outcome = evaluate_method(method, &spec, &cfg.settings, cfg.nu_draws);
    let runtime_ms = if cfg.record_runtime { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    let (kappa, report, error_flag) = match outcome {
        Ok((gt, r)) => (gt.kappa(), r, false),
        Err(_) => (
            f64::NAN,
            RiskReport {
                er_mean: f64::NAN,
                er_se: f64::NAN,
                n_draws: 0,
                rep_term: f64::NAN,
                noise_term: f64::NAN,
                subspace_dist: f64::NAN,
            },
            true,
        ),
    };
    ResultRow {
        sweep_id: cfg.sweep_id.clone(),
        axis: cfg.axis.to_string(),
        axis_value: value,
        seed: spec.master_seed,
        method: method.name().to_string(),
        d: spec.d,
        k: spec.k,
        t: spec.t,
        n1: spec.n1,
        n2: spec.n2,
        sigma: spec.sigma,
        c: spec.c,
        er_mean: report.er_mean,
        er_se: report.er_se,
        rep_term: report.rep_term,
        noise_term: report.noise_term,
        subspace_dist: report.subspace_dist,
        kappa,
        runtime_ms,
        error_flag,
    }
}

/// Thread cap from `REPLEARN_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("REPLEARN_THREADS").ok()?.trim().parse().ok().filter(|n: &usize| *n > 0)
}

/// Runs every (axis value, seed, method) cell. Rows come back sorted by
/// (axis value, seed, method) whatever the execution order; failing cells
/// produce flagged rows.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for (vi, &v) in cfg.values.iter().enumerate() {
        for s in 0..cfg.seeds_per_point {
            for &m in &cfg.methods {
                cells.push((vi, v, s, m));
            }
        }
    }
    let run = || -> Vec<((usize, usize, Method), ResultRow)> {
        cells.par_iter().map(|&(vi, v, s, m)| ((vi, s, m), cell(cfg, v, s, m))).collect()
    };
    let mut rows = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_float(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad float `{s}`: {e}")))
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.sweep_id.clone(),
            r.axis.clone(),
            float(r.axis_value),
            r.seed.to_string(),
            r.method.clone(),
            r.d.to_string(),
            r.k.to_string(),
            r.t.to_string(),
            r.n1.to_string(),
            r.n2.to_string(),
            float(r.sigma),
            float(r.c),
            float(r.er_mean),
            float(r.er_se),
            float(r.rep_term),
            float(r.noise_term),
            float(r.subspace_dist),
            float(r.kappa),
            float(r.runtime_ms),
            u8::from(r.error_flag).to_string(),
        ])
        .map_err(to_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(format!("{SCHEMA_LINE}\n{}", String::from_utf8(body).expect("csv output is utf-8")))
}

pub fn write_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let text = rows_to_csv(rows)?;
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SCHEMA_LINE) {
        return invalid(format!("missing `{SCHEMA_LINE}` header line"));
    }
    let mut rd = csv::ReaderBuilder::new().from_reader(text.split_once('\n').map_or("", |(_, b)| b).as_bytes());
    let to_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    let header = rd.headers().map_err(to_err)?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return invalid("unexpected CSV columns");
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::InvalidInput(format!("bad integer `{s}`: {e}")));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let r = rec.map_err(to_err)?;
        rows.push(ResultRow {
            sweep_id: r[0].to_string(),
            axis: r[1].to_string(),
            axis_value: parse_float(&r[2])?,
            seed: r[3].parse().map_err(|e| Error::InvalidInput(format!("bad seed `{}`: {e}", &r[3])))?,
            method: r[4].to_string(),
            d: int(&r[5])?,
            k: int(&r[6])?,
            t: int(&r[7])?,
            n1: int(&r[8])?,
            n2: int(&r[9])?,
            sigma: parse_float(&r[10])?,
            c: parse_float(&r[11])?,
            er_mean: parse_float(&r[12])?,
            er_se: parse_float(&r[13])?,
            rep_term: parse_float(&r[14])?,
            noise_term: parse_float(&r[15])?,
            subspace_dist: parse_float(&r[16])?,
            kappa: parse_float(&r[17])?,
            runtime_ms: parse_float(&r[18])?,
            error_flag: &r[19] == "1",
        });
    }
    Ok(rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_csv(&text)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
}

impl fmt::Display for SlopeFit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slope={:.6} intercept={:.6} stderr={:.6} r_squared={:.6}",
            self.slope, self.intercept, self.stderr, self.r_squared
        )
    }
}

/// Median of `y` at each distinct `x`, for rows without the error flag.
pub fn median_by(rows: &[ResultRow], x_field: &str, y_field: &str) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::new();
    for r in rows.iter().filter(|r| !r.error_flag) {
        let x = r.field(x_field).ok_or_else(|| Error::InvalidInput(format!("unknown field `{x_field}`")))?;
        let y = r.field(y_field).ok_or_else(|| Error::InvalidInput(format!("unknown field `{y_field}`")))?;
        pairs.push((x, y));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let j = i + pairs[i..].iter().take_while(|p| p.0 == pairs[i].0).count();
        let ys: Vec<f64> = pairs[i..j].iter().map(|p| p.1).collect();
        let m = ys.len() / 2;
        let med = if ys.len() % 2 == 1 { ys[m] } else { 0.5 * (ys[m - 1] + ys[m]) };
        out.push((pairs[i].0, med));
        i = j;
    }
    Ok(out)
}

/// OLS of log median-y on log x.
pub fn fit_scaling_slope(rows: &[ResultRow], x_field: &str, y_field: &str) -> Result<SlopeFit> {
    slope_from_points(&median_by(rows, x_field, y_field)?)
}

/// OLS of log y on log x over already-aggregated points.
pub fn slope_from_points(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return invalid(format!("need at least 3 distinct x values, got {}", points.len()));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return invalid(format!("log-log fit needs positive values, got ({x}, {y})"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (ssr.max(0.0) / (m - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    Ok(SlopeFit { slope, intercept, stderr, r_squared })
}

#[cfg(test)]
mod tests;
