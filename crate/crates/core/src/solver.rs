//! Hierarchical hard thresholding pursuit (HiHTP).
//!
//! Starting from `x⁰ = 0`, `Ω⁰ = ∅`, each iteration
//!
//! 1. takes a gradient step `x̂ = x + τ H^*(y − Hx)`,
//! 2. computes the support `Ω` of the best `(s, σ)`-sparse approximation of
//!    `x̂`,
//! 3. refits `x = argmin ‖y − Hz‖` over `z` supported on `Ω`,
//!
//! and stops when the support repeats or the relative residual drops to the
//! tolerance.

use serde::{Deserialize, Serialize};

use crate::model::{BlockVector, HiSupport, MeasurementVector, Scalar, SparsityPattern};
use crate::operators::{HierarchicalOperator, LeastSquaresOptions};
use crate::projection::project_hi_sparse;
use crate::{linalg, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Constant { tau: f64 },
    /// Exact line search along the gradient restricted to the current
    /// support (the full gradient while the support is empty):
    /// `τ = ‖d‖² / ‖H d‖²`.
    AdaptiveLineSearch,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Constant { tau: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub pattern: SparsityPattern,
    pub step: StepRule,
    /// Relative residual `‖y − Hx‖ / ‖y‖` at which to stop.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub least_squares: LeastSquaresOptions,
}

impl SolverConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 100;
    pub const DEFAULT_TOLERANCE: f64 = 1e-6;

    pub fn new(pattern: SparsityPattern) -> Self {
        SolverConfig {
            pattern,
            step: StepRule::default(),
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            least_squares: LeastSquaresOptions::default(),
        }
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if let StepRule::Constant { tau } = self.step {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    SupportStable,
    ResidualTolerance,
    MaxIterations,
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step: f64,
    pub support_size: usize,
    /// Relative residual of the thresholded gradient iterate.
    pub thresholded_residual: f64,
    /// Relative residual after the least-squares refit.
    pub refit_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub estimate: BlockVector,
    pub support: HiSupport,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub residual_history: Vec<f64>,
    pub termination: TerminationReason,
    pub trace: Vec<IterationRecord>,
}

impl SolverResult {
    pub fn relative_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(0.0)
    }
}

/// Runs HiHTP on `y ≈ H x`.
pub fn hihtp(h: &HierarchicalOperator, y: &MeasurementVector, cfg: &SolverConfig) -> Result<SolverResult> {
    cfg.validate()?;
    if cfg.pattern.block_dims() != h.block_dims() {
        return Err(Error::DimensionMismatch(format!(
            "pattern block dimensions {:?} differ from the operator's {:?}",
            cfg.pattern.block_dims(),
            h.block_dims()
        )));
    }
    if y.slots() != h.slots() || y.rows() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "measurements are {}×{}, operator expects {}×{}",
            y.slots(),
            y.rows(),
            h.slots(),
            h.rows()
        )));
    }
    let field = h.field().join(crate::model::ScalarField::of_values(y.as_slice()));
    let y_norm = y.norm();
    if y_norm == 0.0 {
        return Ok(SolverResult {
            estimate: BlockVector::zeros(h.block_dims(), field),
            support: HiSupport::empty(),
            iterations: 1,
            residual_history: vec![0.0],
            termination: TerminationReason::ResidualTolerance,
            trace: vec![IterationRecord {
                step: 0.0,
                support_size: 0,
                thresholded_residual: 0.0,
                refit_residual: 0.0,
            }],
        });
    }

    let mut x = BlockVector::zeros(h.block_dims(), field);
    let mut support = HiSupport::empty();
    let mut residual = y.clone();
    let mut history = Vec::new();
    let mut trace = Vec::new();

    for t in 1..=cfg.max_iterations {
        let gradient = h.adjoint_apply(&residual)?;
        let tau = match cfg.step {
            StepRule::Constant { tau } => tau,
            StepRule::AdaptiveLineSearch => line_search_step(h, &gradient, &support)?,
        };
        let mut proposal = x.clone();
        linalg::axpy(Scalar::new(tau, 0.0), gradient.as_flat(), proposal.as_flat_mut());
        if !proposal.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                last_finite: Box::new(x),
            });
        }

        let (thresholded, next_support) = project_hi_sparse(&proposal, &cfg.pattern)?;
        let thresholded_residual = y.minus(&h.apply(&thresholded)?).norm() / y_norm;
        let fit = h.restricted_least_squares_with(y, &next_support, Some(&thresholded), &cfg.least_squares)?;
        let mut next = fit.solution;
        if next.field() != field {
            next.set_field(field);
        }
        if !next.is_finite() {
            return Err(Error::Divergence {
                iteration: t,
                last_finite: Box::new(x),
            });
        }
        residual = y.minus(&h.apply(&next)?);
        let rel = residual.norm() / y_norm;
        history.push(rel);
        trace.push(IterationRecord {
            step: tau,
            support_size: next_support.len(),
            thresholded_residual,
            refit_residual: rel,
        });

        let stable = next_support == support;
        x = next;
        support = next_support;
        let reason = if rel <= cfg.tolerance {
            Some(TerminationReason::ResidualTolerance)
        } else if stable {
            Some(TerminationReason::SupportStable)
        } else {
            None
        };
        if let Some(termination) = reason {
            return Ok(SolverResult {
                estimate: x,
                support,
                iterations: t,
                residual_history: history,
                termination,
                trace,
            });
        }
    }

    Ok(SolverResult {
        estimate: x,
        support,
        iterations: cfg.max_iterations,
        residual_history: history,
        termination: TerminationReason::MaxIterations,
        trace,
    })
}

fn line_search_step(h: &HierarchicalOperator, gradient: &BlockVector, support: &HiSupport) -> Result<f64> {
    let restricted = gradient.restricted_to(support);
    let direction = if support.is_empty() || restricted.norm() == 0.0 {
        gradient
    } else {
        &restricted
    };
    let num = direction.norm().powi(2);
    let den = h.apply(direction)?.norm().powi(2);
    Ok(if num > 0.0 && den > 0.0 { num / den } else { 1.0 })
}

/// The recovered hierarchical support, for detection-only callers.
pub fn detect_support(result: &SolverResult) -> HiSupport {
    result.support.clone()
}
