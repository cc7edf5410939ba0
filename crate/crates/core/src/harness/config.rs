//! Sweep configuration files.
//!
//! Three sections, `[spec]`, `[sweep]` and `[methods]`, of `key = value` lines.
//! `#` starts a comment. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::taskgen::{EnsembleSpec, Track};

use super::{Axis, LambdaRule, Method, MethodSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base_spec: EnsembleSpec,
    pub sweep_id: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub seeds_per_point: usize,
    pub methods: Vec<Method>,
    pub nu_draws: usize,
    /// Relative paths are resolved against the `--out` directory.
    pub output_path: PathBuf,
    /// Fill `runtime_ms`; off by default so that reruns stay byte-identical.
    pub record_runtime: bool,
    pub settings: MethodSettings,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return cfg_err("sweep values must be nonempty");
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return cfg_err("sweep values must be strictly increasing");
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return cfg_err("sweep values must be finite");
        }
        if self.axis.is_integer() && self.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return cfg_err(format!("axis {} takes nonnegative integers", self.axis));
        }
        if self.seeds_per_point == 0 {
            return cfg_err("seeds_per_point must be >= 1");
        }
        if self.nu_draws == 0 {
            return cfg_err("nu_draws must be >= 1");
        }
        if self.methods.is_empty() {
            return cfg_err("enable at least one method");
        }
        Ok(())
    }
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

type Section = BTreeMap<String, (usize, String)>;

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "spec" | "sweep" | "methods") {
                return cfg_err(format!("line {lineno}: unknown section [{name}]"));
            }
            if sections.contains_key(name) {
                return cfg_err(format!("line {lineno}: section [{name}] appears twice"));
            }
            sections.insert(name.to_string(), Section::new());
            current = Some(name.to_string());
            continue;
        }
        let Some(sec) = &current else {
            return cfg_err(format!("line {lineno}: key outside of any section"));
        };
        let Some((key, value)) = line.split_once('=') else {
            return cfg_err(format!("line {lineno}: expected `key = value`"));
        };
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key.is_empty() {
            return cfg_err(format!("line {lineno}: empty key"));
        }
        let entries = sections.get_mut(sec).expect("section registered");
        if entries.insert(key.clone(), (lineno, value)).is_some() {
            return cfg_err(format!("line {lineno}: duplicate key `{key}` in [{sec}]"));
        }
    }
    Ok(sections)
}

struct Reader<'a> {
    name: &'static str,
    entries: &'a Section,
    allowed: &'static [&'static str],
}

impl Reader<'_> {
    fn check_keys(&self) -> Result<()> {
        for (key, (lineno, _)) in self.entries {
            if !self.allowed.contains(&key.as_str()) {
                return cfg_err(format!("line {lineno}: unknown key `{key}` in [{}]", self.name));
            }
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((lineno, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {lineno}: bad value for `{key}`: {e}"))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}` in [{}]", self.name)))
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((_, v)) if v == "true" => Ok(Some(true)),
            Some((_, v)) if v == "false" => Ok(Some(false)),
            Some((lineno, v)) => cfg_err(format!("line {lineno}: `{key}` must be true or false, got `{v}`")),
        }
    }

    fn sequence(&self, key: &str) -> Result<Vec<f64>> {
        let (lineno, v) = self
            .entries
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}` in [{}]", self.name)))?;
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {lineno}: bad entry `{}` in `{key}`: {e}", s.trim())))
            })
            .collect()
    }
}

const SPEC_KEYS: &[&str] = &["track", "d", "k", "t", "n1", "n2", "sigma", "c", "covariance", "input", "master_seed"];
const SWEEP_KEYS: &[&str] = &["id", "axis", "values", "seeds_per_point", "nu_draws", "output", "record_runtime"];
const METHOD_KEYS: &[&str] = &[
    "lowdim",
    "nuclear",
    "relu",
    "baseline-ridge",
    "baseline-nn-scratch",
    "max_iter",
    "restarts",
    "nuclear_lambda",
    "relu_width",
    "relu_lambda",
    "target_budget",
];

pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let sections = split_sections(text)?;
    let empty = Section::new();
    let section = |name: &'static str, allowed| Reader { name, entries: sections.get(name).unwrap_or(&empty), allowed };
    for name in ["spec", "sweep", "methods"] {
        if !sections.contains_key(name) {
            return cfg_err(format!("missing section [{name}]"));
        }
    }

    let spec = section("spec", SPEC_KEYS);
    spec.check_keys()?;
    let track: Track = spec.get("track")?.unwrap_or(Track::Lowdim);
    let mut base = EnsembleSpec::new(
        track,
        spec.require("d")?,
        spec.require("k")?,
        spec.require("t")?,
        spec.require("n1")?,
        spec.require("n2")?,
    );
    if let Some(v) = spec.get("sigma")? {
        base.sigma = v;
    }
    if let Some(v) = spec.get("c")? {
        base.c = v;
    }
    if let Some(v) = spec.get("covariance")? {
        base.covariance_family = v;
    }
    if let Some(v) = spec.get("input")? {
        base.input_dist = v;
    }
    if let Some(v) = spec.get("master_seed")? {
        base.master_seed = v;
    }

    let sweep = section("sweep", SWEEP_KEYS);
    sweep.check_keys()?;
    let axis: Axis = sweep.require("axis")?;
    let sweep_id: String = sweep.get("id")?.unwrap_or_else(|| axis.to_string());
    let output_path = sweep.get::<String>("output")?.unwrap_or_else(|| format!("{sweep_id}.csv"));

    let m = section("methods", METHOD_KEYS);
    m.check_keys()?;
    let mut methods = Vec::new();
    for method in Method::ALL {
        if m.boolean(method.name())?.unwrap_or(false) {
            methods.push(method);
        }
    }
    let mut settings = MethodSettings::default();
    if let Some(v) = m.get("max_iter")? {
        settings.max_iter = v;
    }
    if let Some(v) = m.get("restarts")? {
        settings.restarts = v;
    }
    if let Some(v) = m.get::<LambdaRule>("nuclear_lambda")? {
        settings.nuclear_lambda = v;
    }
    if let Some(v) = m.get("relu_width")? {
        settings.relu_width = v;
    }
    if let Some(v) = m.get("relu_lambda")? {
        settings.relu_lambda = v;
    }
    if let Some(v) = m.get("target_budget")? {
        settings.target_budget = v;
    }

    let cfg = SweepConfig {
        base_spec: base,
        sweep_id,
        axis,
        values: sweep.sequence("values")?,
        seeds_per_point: sweep.require("seeds_per_point")?,
        methods,
        nu_draws: sweep.get("nu_draws")?.unwrap_or(1),
        output_path: PathBuf::from(output_path),
        record_runtime: sweep.boolean("record_runtime")?.unwrap_or(false),
        settings,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}
