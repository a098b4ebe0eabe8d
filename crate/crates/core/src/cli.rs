//! Command-line front end.
//!
//! Configs are JSON with unknown keys rejected. Every output embeds the fully
//! resolved config and master seed: experiment CSVs start with a
//! `# hisparse-config: {...}` line, JSON outputs carry `config`/`params` and
//! `seed` fields. An experiment CSV is itself a valid `--config`, and
//! replaying it reproduces the file byte for byte.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 otherwise with a single
//! `error[category]: message` line on stderr.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{self, IncoherenceOptions};
use crate::model::{BlockVector, HiSupport, Scalar, ScalarField, SparsityPattern};
use crate::operators::{LeastSquaresOptions, OperatorDescriptor};
use crate::projection::project_hi_sparse;
use crate::rng::{derive_seed, seeded};
use crate::simulation::{run_sweep, write_csv, SweepConfig};
use crate::solver::{hihtp, SolverConfig, StepRule, TerminationReason};
use crate::{DenseMatrix, Error};

pub const SEED_ENV: &str = "HISPARSE_SEED";
pub const CONFIG_PREFIX: &str = "# hisparse-config: ";

#[derive(Debug, Parser)]
#[command(name = "hisparse", version, about = "Hierarchically sparse recovery and grouped random access simulation")]
struct Cli {
    /// More progress output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Recover one hierarchically sparse signal with HiHTP.
    Recover {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a grouped random access sweep and write one CSV row per trial.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Maximum worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Restricted isometry constant of a stored matrix: exact unless
    /// `--trials` asks for a Monte-Carlo lower bound.
    Rip {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        sparsity: usize,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum number of submatrices to enumerate.
        #[arg(long, default_value_t = analysis::DEFAULT_ENUMERATION_CAP)]
        cap: u128,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Pairwise incoherence of two stored block operators.
    Incoherence {
        #[arg(long)]
        matrix_a: PathBuf,
        #[arg(long)]
        matrix_b: PathBuf,
        #[arg(long)]
        sparsity: usize,
        /// Maximum number of support pairs to enumerate.
        #[arg(long, default_value_t = analysis::DEFAULT_INCOHERENCE_CAP)]
        cap: u128,
        /// Random support pairs used past the cap.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Best (s, σ)-sparse approximation of a block vector.
    Project {
        /// Block vector JSON file.
        #[arg(long)]
        input: PathBuf,
        /// Pattern JSON, inline or as a file path.
        #[arg(long)]
        pattern: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Failure of one invocation, rendered as `error[category]: message`.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: io::Error) -> Self {
        CliError::new("io", format!("{}: {err}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let category = match e {
            Error::DimensionMismatch(_) => "dimension",
            Error::InvalidPattern(_) => "pattern",
            Error::InvalidArgument(_) => "argument",
            Error::CapExceeded { .. } => "cap",
            Error::Divergence { .. } => "divergence",
        };
        CliError::new(category, e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // keep it on one line whatever the message contains
        write!(f, "error[{}]: {}", self.category, self.message.replace('\n', " "))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            1
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Recover { config, output, seed } => recover(&config, &output, seed),
        Command::Experiment {
            config,
            output,
            jobs,
            seed,
        } => experiment(&config, &output, jobs, seed, verbose),
        Command::Rip {
            matrix,
            sparsity,
            trials,
            seed,
            cap,
            output,
        } => {
            let b = read_matrix(&matrix)?;
            let seed = resolve_seed(seed, None)?;
            let estimate = match trials {
                None => analysis::exact_rip(&b, sparsity, cap)?,
                Some(t) => analysis::monte_carlo_rip(&b, sparsity, t, &mut seeded(seed))?,
            };
            let record = json!({
                "kind": estimate.kind,
                "value": estimate.value,
                "trials": estimate.trials,
                "params": {
                    "matrix": matrix,
                    "rows": b.rows(),
                    "cols": b.cols(),
                    "field": b.field(),
                    "sparsity": sparsity,
                    "cap": cap.to_string(),
                },
                "seed": seed,
            });
            emit_json(output.as_deref(), &record)
        }
        Command::Incoherence {
            matrix_a,
            matrix_b,
            sparsity,
            cap,
            trials,
            seed,
            output,
        } => {
            let a = read_matrix(&matrix_a)?;
            let b = read_matrix(&matrix_b)?;
            let seed = resolve_seed(seed, None)?;
            let opts = IncoherenceOptions {
                cap,
                fallback_trials: trials,
                fallback_seed: seed,
            };
            let estimate = analysis::pairwise_incoherence(&a, &b, sparsity, &opts)?;
            let record = json!({
                "kind": estimate.kind,
                "value": estimate.value,
                "trials": estimate.trials,
                "params": {
                    "matrix_a": matrix_a,
                    "matrix_b": matrix_b,
                    "rows": a.rows(),
                    "cols": [a.cols(), b.cols()],
                    "sparsity": sparsity,
                    "cap": cap.to_string(),
                },
                "seed": seed,
            });
            emit_json(output.as_deref(), &record)
        }
        Command::Project { input, pattern, output } => {
            let x: BlockVector = parse_json(&read_text(&input)?, &input.display().to_string())?;
            let pattern: SparsityPattern = if pattern.trim_start().starts_with('{') {
                parse_json(&pattern, "--pattern")?
            } else {
                let path = PathBuf::from(&pattern);
                parse_json(&read_text(&path)?, &pattern)?
            };
            let (projection, support) = project_hi_sparse(&x, &pattern)?;
            let record = json!({
                "pattern": pattern,
                "projection": projection,
                "support": support,
                "error": x.as_flat().iter().zip(projection.as_flat()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt(),
            });
            emit_json(output.as_deref(), &record)
        }
    }
}

/// `--seed`, then the config's seed, then `HISPARSE_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::new("argument", format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_matrix(path: &Path) -> CliResult<DenseMatrix> {
    read_text(path)?
        .parse::<DenseMatrix>()
        .map_err(|e| CliError::new("matrix", format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> CliResult<T> {
    if text.trim().is_empty() {
        return Err(CliError::new("config", format!("{origin}: empty document")));
    }
    serde_json::from_str(text).map_err(|e| CliError::new("config", format!("{origin}: {e}")))
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn emit_json(output: Option<&Path>, value: &serde_json::Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    match output {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

/// Reads an experiment config from a JSON file or from the header line of
/// an experiment CSV.
pub fn parse_experiment_config(path: &Path) -> CliResult<SweepConfig> {
    let text = read_text(path)?;
    match text.strip_prefix(CONFIG_PREFIX) {
        Some(rest) => parse_json(rest.lines().next().unwrap_or(""), &path.display().to_string()),
        None => parse_json(&text, &path.display().to_string()),
    }
}

/// Runs a sweep and renders the CSV, header line included.
pub fn render_experiment(sweep: &SweepConfig, jobs: Option<usize>) -> CliResult<(Vec<u8>, usize)> {
    let outcome = run_sweep(sweep, jobs)?;
    for f in &outcome.failures {
        eprintln!(
            "warning: cell {} trial {} (seed {}) failed: {}",
            f.grid_id, f.trial, f.seed, f.message
        );
    }
    let mut out = Vec::new();
    let echo = serde_json::to_string(sweep).expect("configs always serialize");
    writeln!(out, "{CONFIG_PREFIX}{echo}").expect("writing to memory");
    write_csv(&mut out, &outcome.records)?;
    Ok((out, outcome.failures.len()))
}

fn experiment(config: &Path, output: &Path, jobs: Option<usize>, seed: Option<u64>, verbose: u8) -> CliResult<()> {
    let mut sweep = parse_experiment_config(config)?;
    sweep.seed = Some(resolve_seed(seed, sweep.seed)?);
    sweep.validate()?;
    let start = Instant::now();
    let cells = sweep.cells().len();
    if verbose > 0 {
        eprintln!("running {cells} cells × {} trials", sweep.trials);
    }
    let (csv, failures) = render_experiment(&sweep, jobs)?;
    write_atomic(output, &csv)?;
    if verbose > 0 {
        eprintln!("wrote {} in {:.1?}", output.display(), start.elapsed());
    }
    if failures > 0 {
        return Err(CliError::new(
            "trial",
            format!("{failures} of {} trials failed; see warnings", cells * sweep.trials),
        ));
    }
    Ok(())
}

/// Where the ground-truth signal of a `recover` run comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// A random unit-norm `(s, σ)`-sparse vector drawn from the master seed.
    Random {
        #[serde(default = "default_signal_field")]
        field: ScalarField,
    },
    Given {
        vector: BlockVector,
    },
}

fn default_signal_field() -> ScalarField {
    ScalarField::Real
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec::Random {
            field: default_signal_field(),
        }
    }
}

fn default_tolerance() -> f64 {
    SolverConfig::DEFAULT_TOLERANCE
}

fn default_max_iterations() -> usize {
    SolverConfig::DEFAULT_MAX_ITERATIONS
}

/// The `recover` config. The operator is rebuilt from its descriptor (and
/// the descriptor's own seed); the master seed drives the signal and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub operator: OperatorDescriptor,
    pub pattern: SparsityPattern,
    #[serde(default)]
    pub signal: SignalSpec,
    #[serde(default)]
    pub step: StepRule,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub least_squares: LeastSquaresOptions,
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoverReport {
    pub config: RecoverConfig,
    pub seed: u64,
    pub truth: BlockVector,
    pub estimate: BlockVector,
    pub support: HiSupport,
    pub support_recovered: bool,
    pub relative_error: f64,
    pub relative_residual: f64,
    pub iterations: usize,
    pub termination: TerminationReason,
    pub residual_history: Vec<f64>,
}

/// Runs one `recover` config with a resolved master seed.
pub fn run_recover(mut cfg: RecoverConfig, seed: u64) -> CliResult<RecoverReport> {
    cfg.seed = Some(seed);
    let h = cfg.operator.build()?;
    let truth = match &cfg.signal {
        SignalSpec::Random { field } => {
            analysis::random_hi_sparse_unit(&cfg.pattern, *field, &mut seeded(derive_seed(seed, 0, 0)))
        }
        SignalSpec::Given { vector } => vector.clone(),
    };
    let mut y = h.apply(&truth)?;
    if let Some(snr_db) = cfg.noise_snr_db {
        let mut rng = seeded(derive_seed(seed, 0, 1));
        let power = y.norm().powi(2) / y.len() as f64;
        let sd = (0.5 * power / 10f64.powf(snr_db / 10.0)).sqrt();
        for v in y.as_mut_slice() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Scalar::new(sd * re, sd * im);
        }
    }
    let solver = SolverConfig {
        pattern: cfg.pattern.clone(),
        step: cfg.step,
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
        least_squares: cfg.least_squares.clone(),
    };
    let result = hihtp(&h, &y, &solver)?;
    let truth_support = crate::model::support_of(&truth);
    Ok(RecoverReport {
        support_recovered: result.support == truth_support,
        relative_error: result.estimate.relative_error_to(&truth),
        relative_residual: result.relative_residual(),
        iterations: result.iterations,
        termination: result.termination,
        residual_history: result.residual_history,
        support: result.support,
        estimate: result.estimate,
        truth,
        config: cfg,
        seed,
    })
}

fn recover(config: &Path, output: &Path, seed: Option<u64>) -> CliResult<()> {
    let cfg: RecoverConfig = parse_json(&read_text(config)?, &config.display().to_string())?;
    let seed = resolve_seed(seed, cfg.seed)?;
    let report = run_recover(cfg, seed)?;
    let value = serde_json::to_value(&report).expect("reports always serialize");
    emit_json(Some(output), &value)
}
