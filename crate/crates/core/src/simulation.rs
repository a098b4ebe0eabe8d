//! Grouped random access: users split into `N` groups pick one of `n` pilot
//! resources each, group contributions are measured by subsampled DFT
//! blocks and mixed over `M` slots, and the base station detects active
//! users with HiHTP.
//!
//! A user is detected when it is the only one in its group on its resource
//! and its `(group, resource)` pair is in the recovered support. Colliding
//! users are never counted, even when the summed entry is recovered.
//!
//! The baseline pools all users on a single set of `n` resources measured by
//! the full DFT, which is invertible, so exactly the non-colliding users are
//! detected.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{BlockVector, Scalar, ScalarField, SparsityPattern};
use crate::operators::{
    gaussian_mixing, subsampled_dft, DftOptions, HierarchicalOperator, LeastSquaresOptions, Variance, VarianceRule,
};
use crate::rng::{derive_seed, seeded};
use crate::solver::{hihtp, SolverConfig, StepRule};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Exactly `σ` users in every group.
    FixedPerGroup,
    /// `σ·N` users, each assigned to a uniformly random group.
    UniformRandomGroups,
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assignment::FixedPerGroup => "fixed_per_group",
            Assignment::UniformRandomGroups => "uniform_random_groups",
        })
    }
}

/// Solver parameters used by the harness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub step: StepRule,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub least_squares: LeastSquaresOptions,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            step: StepRule::AdaptiveLineSearch,
            tolerance: SolverConfig::DEFAULT_TOLERANCE,
            max_iterations: SolverConfig::DEFAULT_MAX_ITERATIONS,
            least_squares: LeastSquaresOptions::default(),
        }
    }
}

impl SolverSettings {
    pub fn config(&self, pattern: SparsityPattern) -> SolverConfig {
        SolverConfig {
            pattern,
            step: self.step,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            least_squares: self.least_squares.clone(),
        }
    }
}

/// One cell of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessConfig {
    /// `n`, resources per group.
    pub n_resources: usize,
    /// `m`, DFT rows kept per block.
    pub rows: usize,
    /// `M`
    pub slots: usize,
    /// `N`
    pub groups: usize,
    /// `σ`
    pub users_per_group: usize,
    pub trials: usize,
    pub assignment: Assignment,
    pub seed: u64,
    pub mixing_variance: Variance,
    pub dft: DftOptions,
    pub solver: SolverSettings,
    /// Additive complex Gaussian noise at this SNR; noiseless when absent.
    pub noise_snr_db: Option<f64>,
}

impl AccessConfig {
    /// The published setup: `n = 512`, `m = 256`, `M = 16`, 25 trials, mixing
    /// variance `1/sqrt(N)`.
    pub fn reference(groups: usize, users_per_group: usize) -> Self {
        AccessConfig {
            n_resources: 512,
            rows: 256,
            slots: 16,
            groups,
            users_per_group,
            trials: 25,
            assignment: Assignment::FixedPerGroup,
            seed: 0,
            mixing_variance: Variance::Rule(VarianceRule::InverseSqrtBlocks),
            dft: DftOptions::default(),
            solver: SolverSettings::default(),
            noise_snr_db: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_resources == 0 || self.rows == 0 || self.slots == 0 || self.groups == 0 {
            return bad("n, m, M and N must be positive".into());
        }
        if self.rows > self.n_resources {
            return bad(format!("m = {} exceeds n = {}", self.rows, self.n_resources));
        }
        if self.users_per_group == 0 || self.users_per_group > self.n_resources {
            return bad(format!(
                "sigma = {} must lie in 1..={}",
                self.users_per_group, self.n_resources
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        Ok(())
    }

    pub fn total_users(&self) -> usize {
        self.groups * self.users_per_group
    }

    /// Pattern handed to the solver: every group active, `σ` per group,
    /// whatever the actual group sizes are.
    pub fn pattern(&self) -> Result<SparsityPattern> {
        SparsityPattern::uniform(self.groups, self.groups, self.users_per_group, self.n_resources)
    }
}

/// Resource choices per group; `groups[i]` lists the resource picked by each
/// user of group `i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserChoices {
    pub groups: Vec<Vec<usize>>,
}

impl UserChoices {
    pub fn total_users(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }
}

pub fn draw_user_choices<R: Rng + ?Sized>(cfg: &AccessConfig, rng: &mut R) -> UserChoices {
    let n = cfg.n_resources;
    let groups = match cfg.assignment {
        Assignment::FixedPerGroup => (0..cfg.groups)
            .map(|_| (0..cfg.users_per_group).map(|_| rng.random_range(0..n)).collect())
            .collect(),
        Assignment::UniformRandomGroups => {
            let mut groups = vec![Vec::new(); cfg.groups];
            for _ in 0..cfg.total_users() {
                let g = rng.random_range(0..cfg.groups);
                groups[g].push(rng.random_range(0..n));
            }
            groups
        }
    };
    UserChoices { groups }
}

/// Occupancy counts of one pool of `n` resources.
fn occupancy<'a>(choices: impl IntoIterator<Item = &'a usize>, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for &r in choices {
        counts[r] += 1;
    }
    counts
}

/// Users that are alone on their resource within one pool.
pub fn singleton_users(choices: &[usize], n: usize) -> usize {
    occupancy(choices, n).iter().filter(|&&c| c == 1).count()
}

/// Block `i`, entry `r` = number of group-`i` users on resource `r`.
pub fn build_signal(choices: &UserChoices, n: usize) -> BlockVector {
    let blocks = choices
        .groups
        .iter()
        .map(|g| occupancy(g, n).into_iter().map(f64::from).collect())
        .collect();
    BlockVector::from_real_blocks(blocks)
}

/// Users detected by the ungrouped full-DFT baseline: all users share one
/// pool of `n` resources and exactly the non-colliding ones are served.
pub fn baseline_detect(choices: &UserChoices, n: usize) -> usize {
    occupancy(choices.groups.iter().flatten(), n)
        .iter()
        .filter(|&&c| c == 1)
        .count()
}

/// Expected number of non-colliding users when `k` users pick uniformly
/// among `n` resources: `k (1 − 1/n)^{k−1}`.
pub fn analytic_baseline(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    k as f64 * (1.0 - 1.0 / n as f64).powi(k as i32 - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialId {
    pub grid_id: usize,
    pub trial: usize,
    pub seed: u64,
}

/// One Monte-Carlo outcome. Serializes to one CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub grid_id: usize,
    #[serde(rename = "N")]
    pub groups: usize,
    pub n: usize,
    pub sigma: usize,
    #[serde(rename = "M")]
    pub slots: usize,
    pub m: usize,
    pub assignment: Assignment,
    pub trial: usize,
    pub seed: u64,
    pub total_users: usize,
    #[serde(rename = "collided")]
    pub collided_users: usize,
    #[serde(rename = "detected")]
    pub detected_users: usize,
    pub baseline_detected: usize,
    pub analytic_baseline: f64,
    pub iterations: usize,
}

pub const CSV_HEADER: &str = "grid_id,N,n,sigma,M,m,assignment,trial,seed,total_users,collided,detected,baseline_detected,analytic_baseline,iterations";

/// The grouped operator of one trial: Gaussian mixing first, then the `N`
/// independent subsampled DFT blocks.
pub fn draw_grouped_operator<R: Rng + ?Sized>(cfg: &AccessConfig, rng: &mut R) -> Result<HierarchicalOperator> {
    let variance = cfg.mixing_variance.resolve(cfg.slots, cfg.groups, cfg.rows);
    let mixing = gaussian_mixing(cfg.slots, cfg.groups, variance, ScalarField::Complex, rng)?;
    let blocks = (0..cfg.groups)
        .map(|_| subsampled_dft(cfg.rows, cfg.n_resources, &cfg.dft, rng))
        .collect::<Result<Vec<_>>>()?;
    HierarchicalOperator::new(mixing, blocks)
}

/// Runs one detection trial on already drawn user choices. The operator and
/// any noise are drawn from `rng`.
pub fn grouped_detect<R: Rng + ?Sized>(
    cfg: &AccessConfig,
    choices: &UserChoices,
    id: TrialId,
    rng: &mut R,
) -> Result<TrialRecord> {
    let n = cfg.n_resources;
    if choices.groups.len() != cfg.groups {
        return Err(Error::DimensionMismatch(format!(
            "{} groups of choices for N = {}",
            choices.groups.len(),
            cfg.groups
        )));
    }
    let h = draw_grouped_operator(cfg, rng)?;
    let x = build_signal(choices, n);
    let mut y = h.apply(&x)?;
    if let Some(snr_db) = cfg.noise_snr_db {
        let power = y.norm().powi(2) / y.len() as f64;
        let sd = (0.5 * power / 10f64.powf(snr_db / 10.0)).sqrt();
        for v in y.as_mut_slice() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Scalar::new(sd * re, sd * im);
        }
    }
    let result = hihtp(&h, &y, &cfg.solver.config(cfg.pattern()?))?;

    let mut detected = 0;
    let mut singletons = 0;
    for (i, group) in choices.groups.iter().enumerate() {
        let counts = occupancy(group, n);
        for &r in group {
            if counts[r] == 1 {
                singletons += 1;
                if result.support.contains(i, r) {
                    detected += 1;
                }
            }
        }
    }
    let total = choices.total_users();
    Ok(TrialRecord {
        grid_id: id.grid_id,
        groups: cfg.groups,
        n,
        sigma: cfg.users_per_group,
        slots: cfg.slots,
        m: cfg.rows,
        assignment: cfg.assignment,
        trial: id.trial,
        seed: id.seed,
        total_users: total,
        collided_users: total - singletons,
        detected_users: detected,
        baseline_detected: baseline_detect(choices, n),
        analytic_baseline: analytic_baseline(cfg.total_users(), n),
        iterations: result.iterations,
    })
}

/// Trial `trial` of cell `grid_id`, fully determined by `master_seed`.
pub fn run_trial(cfg: &AccessConfig, grid_id: usize, trial: usize, master_seed: u64) -> Result<TrialRecord> {
    let seed = derive_seed(master_seed, grid_id as u64, trial as u64);
    let mut rng = seeded(seed);
    let choices = draw_user_choices(cfg, &mut rng);
    grouped_detect(cfg, &choices, TrialId { grid_id, trial, seed }, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

fn default_trials() -> usize {
    25
}

fn default_assignment() -> OneOrMany<Assignment> {
    OneOrMany::Many(vec![Assignment::FixedPerGroup])
}

fn default_mixing_variance() -> Variance {
    Variance::Rule(VarianceRule::InverseSqrtBlocks)
}

/// A Cartesian sweep over assignments × `N` × `σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "M")]
    pub slots: usize,
    #[serde(rename = "N")]
    pub groups: Vec<usize>,
    pub sigma: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_assignment")]
    pub assignment: OneOrMany<Assignment>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_mixing_variance")]
    pub mixing_variance: Variance,
    #[serde(default)]
    pub dft: DftOptions,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

impl SweepConfig {
    /// The published grid: `N ∈ {8, 16, 24, 32}`, `σ ∈ {16, 24, 32, 36}`.
    pub fn reference() -> Self {
        SweepConfig {
            n: 512,
            m: 256,
            slots: 16,
            groups: vec![8, 16, 24, 32],
            sigma: vec![16, 24, 32, 36],
            trials: 25,
            assignment: default_assignment(),
            seed: Some(0),
            mixing_variance: default_mixing_variance(),
            dft: DftOptions::default(),
            solver: SolverSettings::default(),
            noise_snr_db: None,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Grid cells in `grid_id` order.
    pub fn cells(&self) -> Vec<AccessConfig> {
        let mut cells = Vec::new();
        for assignment in self.assignment.to_vec() {
            for &groups in &self.groups {
                for &sigma in &self.sigma {
                    cells.push(AccessConfig {
                        n_resources: self.n,
                        rows: self.m,
                        slots: self.slots,
                        groups,
                        users_per_group: sigma,
                        trials: self.trials,
                        assignment,
                        seed: self.master_seed(),
                        mixing_variance: self.mixing_variance,
                        dft: self.dft,
                        solver: self.solver.clone(),
                        noise_snr_db: self.noise_snr_db,
                    });
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() || self.sigma.is_empty() || self.assignment.to_vec().is_empty() {
            return Err(Error::InvalidArgument(
                "N, sigma and assignment must each list at least one value".into(),
            ));
        }
        self.cells().iter().try_for_each(AccessConfig::validate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub grid_id: usize,
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SweepOutcome {
    /// Sorted by `(grid_id, trial)`.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

/// Runs every trial of every cell. `jobs` caps the worker count (all cores
/// when `None`); the output does not depend on it.
pub fn run_sweep(sweep: &SweepConfig, jobs: Option<usize>) -> Result<SweepOutcome> {
    sweep.validate()?;
    let cells = sweep.cells();
    let master = sweep.master_seed();
    let tasks: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(g, c)| (0..c.trials).map(move |t| (g, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<std::result::Result<TrialRecord, TrialFailure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(g, t)| {
                run_trial(&cells[g], g, t, master).map_err(|e| TrialFailure {
                    grid_id: g,
                    trial: t,
                    seed: derive_seed(master, g as u64, t as u64),
                    message: e.to_string(),
                })
            })
            .collect()
    });
    let mut outcome = SweepOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.failures.push(f),
        }
    }
    outcome.records.sort_by_key(|r| (r.grid_id, r.trial));
    outcome.failures.sort_by_key(|f| (f.grid_id, f.trial));
    Ok(outcome)
}

/// Writes the header row and one row per record.
pub fn write_csv<W: Write>(writer: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let io = |e: csv::Error| Error::InvalidArgument(format!("CSV output failed: {e}"));
    w.write_record(CSV_HEADER.split(',')).map_err(io)?;
    for r in records {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("CSV output failed: {e}")))?;
    Ok(())
}

/// Per-cell means over trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub grid_id: usize,
    pub groups: usize,
    pub sigma: usize,
    pub assignment: Assignment,
    pub trials: usize,
    pub mean_detected: f64,
    pub stderr_detected: f64,
    pub mean_baseline: f64,
    pub analytic_baseline: f64,
    pub mean_total: f64,
}

pub fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let g = records[start].grid_id;
        let end = start + records[start..].iter().take_while(|r| r.grid_id == g).count();
        let cell = &records[start..end];
        let k = cell.len() as f64;
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| cell.iter().map(f).sum::<f64>() / k;
        let mean_detected = mean(&|r| r.detected_users as f64);
        let var = if cell.len() > 1 {
            cell.iter()
                .map(|r| (r.detected_users as f64 - mean_detected).powi(2))
                .sum::<f64>()
                / (k - 1.0)
        } else {
            0.0
        };
        out.push(CellSummary {
            grid_id: g,
            groups: cell[0].groups,
            sigma: cell[0].sigma,
            assignment: cell[0].assignment,
            trials: cell.len(),
            mean_detected,
            stderr_detected: (var / k).sqrt(),
            mean_baseline: mean(&|r| r.baseline_detected as f64),
            analytic_baseline: cell[0].analytic_baseline,
            mean_total: mean(&|r| r.total_users as f64),
        });
        start = end;
    }
    out
}
