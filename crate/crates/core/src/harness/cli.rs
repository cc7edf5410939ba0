//! `replearn` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::lemmalab;
use crate::taskgen::{self, CovarianceFamily, EnsembleSpec, InputDist, Track};

use super::{
    evaluate_method, load_config, median_by, read_csv, run_sweep, slope_from_points, write_csv, LambdaRule, Method,
    MethodSettings,
};

#[derive(Debug, Parser)]
#[command(name = "replearn", version, about = "Few-shot representation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample an ensemble and write its task bundle.
    Gen {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one method on one ensemble and print its risk report.
    Fit {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value = "lowdim")]
        method: Method,
        #[arg(long, default_value_t = 20)]
        nu_draws: usize,
        /// oracle, default or a positive number.
        #[arg(long, default_value = "oracle")]
        nuclear_lambda: LambdaRule,
        #[arg(long, default_value_t = f64::INFINITY)]
        budget: f64,
    },
    /// Run a parameter sweep and write its CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a lemma-check suite.
    Lemmas {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Summarize sweep CSVs with scaling-slope fits.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
struct SpecArgs {
    #[arg(long, default_value = "lowdim")]
    track: Track,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long = "t", alias = "T")]
    t: usize,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value = "identity")]
    covariance: CovarianceFamily,
    #[arg(long, default_value = "gaussian")]
    input: InputDist,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SpecArgs {
    fn spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            d: self.d,
            k: self.k,
            t: self.t,
            n1: self.n1,
            n2: self.n2,
            sigma: self.sigma,
            c: self.c,
            covariance_family: self.covariance,
            input_dist: self.input,
            master_seed: self.seed,
            track: self.track,
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code: 0 on success, 1 on invalid input, 2 when a lemma check fails.
pub fn cli_dispatch(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_dispatch_to(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn cli_dispatch_to(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{}", e.render());
            return 0;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))
}

fn run(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Gen { spec, out: path } => {
            let (_, bundle) = taskgen::generate(&spec.spec())?;
            taskgen::write_bundle(&path, &bundle)?;
            emit(out, format!("wrote bundle to {}", path.display()))?;
        }
        Command::Fit { spec, method, nu_draws, nuclear_lambda, budget } => {
            let settings = MethodSettings { nuclear_lambda, target_budget: budget, ..Default::default() };
            let (gt, r) = evaluate_method(method, &spec.spec(), &settings, nu_draws)?;
            emit(
                out,
                format!(
                    "method={method} er_mean={:.6e} er_se={:.6e} n_draws={} rep_term={:.6e} noise_term={:.6e} subspace_dist={:.6e} kappa={:.6e}",
                    r.er_mean, r.er_se, r.n_draws, r.rep_term, r.noise_term, r.subspace_dist, gt.kappa()
                ),
            )?;
        }
        Command::Sweep { config, out: dir } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let rows = run_sweep(&cfg)?;
            let path = dir.join(&cfg.output_path);
            write_csv(&path, &rows)?;
            let errors = rows.iter().filter(|r| r.error_flag).count();
            emit(out, format!("wrote {} rows ({errors} flagged) to {}", rows.len(), path.display()))?;
        }
        Command::Lemmas { suite, seed, trials } => {
            let outcomes = lemmalab::run_suite(&suite, trials, seed)?;
            for o in &outcomes {
                emit(out, o)?;
            }
            if outcomes.iter().any(|o| !o.passed()) {
                return Ok(2);
            }
        }
        Command::Report { input } => report(&input, out)?,
    }
    Ok(0)
}

fn report(dir: &Path, out: &mut dyn Write) -> Result<()> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("no CSV files in {}", dir.display())));
    }
    for path in files {
        let rows = read_csv(&path)?;
        let flagged = rows.iter().filter(|r| r.error_flag).count();
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        emit(out, format!("file={name} rows={} flagged={flagged}", rows.len()))?;
        let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        methods.sort();
        methods.dedup();
        for m in methods {
            let sub: Vec<_> = rows.iter().filter(|r| r.method == m).cloned().collect();
            let axis = sub.first().map_or("", |r| r.axis.as_str());
            for y in ["er_mean", "rep_term"] {
                let fit = median_by(&sub, "axis_value", y).and_then(|p| slope_from_points(&p));
                match fit {
                    Ok(f) => emit(out, format!("  method={m} x={axis} y={y} {f}"))?,
                    Err(e) => emit(out, format!("  method={m} x={axis} y={y} slope=- reason=\"{e}\""))?,
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_cli(args: &[&str]) -> (i32, String, String) {
        let argv: Vec<String> = std::iter::once("replearn").chain(args.iter().copied()).map(String::from).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = cli_dispatch_to(&argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const SMALL: &str = "
[spec]
d = 8
k = 2
t = 4
n1 = 20
n2 = 10
master_seed = 11
[sweep]
id = small
axis = n1
values = 20, 40, 80
seeds_per_point = 2
nu_draws = 2
[methods]
lowdim = true
baseline-ridge = true
";

    #[test]
    fn lemmas_move_x_passes() {
        let (code, out, _) = run_cli(&["lemmas", "--suite", "move_x", "--trials", "200", "--seed", "7"]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 1);
        assert!(out.contains("pass_fraction=1") && out.contains("status=PASS"), "{out}");
    }

    #[test]
    fn missing_config_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.conf");
        let (code, _, err) =
            run_cli(&["sweep", "--config", missing.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("nope.conf"), "{err}");
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(run_cli(&["lemmas", "--suite", "move_x", "--bogus"]).0, 1);
        assert_eq!(run_cli(&["lemmas", "--suite", "no_such_suite"]).0, 1);
        assert_eq!(run_cli(&["fit", "--d", "8", "--k", "9", "--t", "4", "--n1", "20", "--n2", "5"]).0, 1);
        assert_eq!(run_cli(&["--help"]).0, 0);
    }

    #[test]
    fn gen_then_fit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let spec = ["--d", "8", "--k", "2", "--T", "4", "--n1", "20", "--n2", "10", "--seed", "3"];
        let (code, _, err) = run_cli(&[&["gen", "--out", path.to_str().unwrap()][..], &spec].concat());
        assert_eq!(code, 0, "{err}");
        let bundle = taskgen::read_bundle(&path).unwrap();
        assert_eq!((bundle.d(), bundle.t(), bundle.n1()), (8, 4, 20));
        let (code, out, err) = run_cli(&[&["fit", "--method", "lowdim", "--nu-draws", "2"][..], &spec].concat());
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("method=lowdim er_mean="), "{out}");
    }

    #[test]
    fn sweep_then_report() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("small.conf");
        std::fs::write(&conf, SMALL).unwrap();
        let out_dir = dir.path().join("out");
        let (code, out, err) =
            run_cli(&["sweep", "--config", conf.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("wrote 12 rows (0 flagged)"), "{out}");
        let (code, out, err) = run_cli(&["report", "--in", out_dir.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("file=small.csv rows=12 flagged=0"), "{out}");
        assert_eq!(out.lines().filter(|l| l.contains("slope=")).count(), 4, "{out}");
        let (code, _, err) = run_cli(&["report", "--in", dir.path().to_str().unwrap()]);
        assert_eq!(code, 1);
        assert!(err.contains("no CSV files"), "{err}");
    }
}
