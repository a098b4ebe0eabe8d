//! Restricted isometry constants and block-operator incoherence.
//!
//! For a matrix `B`, `δ_σ(B)` is the smallest `δ` with
//! `(1−δ)‖x‖² ≤ ‖Bx‖² ≤ (1+δ)‖x‖²` for every σ-sparse `x`; the hierarchical
//! constant `δ_{s,σ}(H)` restricts `x` to `(s, σ)`-sparse vectors. Exact
//! values come from enumerating every maximal support, which is only
//! feasible for small instances and is guarded by explicit caps. Randomized
//! estimates are lower bounds.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, Combinations};
use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::model::{BlockVector, Scalar, ScalarField, SparsityPattern};
use crate::operators::{BlockOperator, HierarchicalOperator, MixingMatrix, DEFAULT_DENSE_CAP};
use crate::{Error, Result};

/// Default cap on the number of supports an exact computation may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Default cap on support pairs for exact pairwise incoherence.
pub const DEFAULT_INCOHERENCE_CAP: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    ExactEnumeration,
    MonteCarloLowerBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    /// Number of random trials; 0 for exact enumeration.
    pub trials: usize,
}

impl RipEstimate {
    fn exact(value: f64) -> Self {
        RipEstimate {
            value,
            kind: EstimateKind::ExactEnumeration,
            trials: 0,
        }
    }
}

/// Distortion `max(λ_max − 1, 1 − λ_min)` of a Gram matrix.
fn distortion(gram: &DMatrix<Scalar>) -> f64 {
    let (lo, hi) = linalg::hermitian_extremes(gram);
    (hi - 1.0).max(1.0 - lo).max(0.0)
}

/// Exact `δ_σ(B)` by enumerating all σ-column submatrices.
pub fn exact_rip(b: &DenseMatrix, sigma: usize, cap: u128) -> Result<RipEstimate> {
    if sigma == 0 || sigma > b.cols() {
        return Err(Error::InvalidArgument(format!(
            "sparsity {sigma} must lie in 1..={}",
            b.cols()
        )));
    }
    let count = binomial(b.cols(), sigma);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "column subsets for exact RIP",
            required: count,
            cap,
        });
    }
    let gram = b.gram();
    let delta = Combinations::new(b.cols(), sigma)
        .map(|cols| distortion(&principal_submatrix(&gram, &cols)))
        .fold(0.0, f64::max);
    Ok(RipEstimate::exact(delta))
}

fn principal_submatrix(gram: &DMatrix<Scalar>, idx: &[usize]) -> DMatrix<Scalar> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| gram[(idx[r], idx[c])])
}

/// Number of maximal `(s, σ)` supports: `Σ_{|S|=s} Π_{i∈S} C(n_i, σ_i)`.
pub fn count_hierarchical_supports(pattern: &SparsityPattern) -> u128 {
    let per_block: Vec<u128> = pattern
        .sigma()
        .iter()
        .zip(pattern.block_dims())
        .map(|(&sig, &dim)| binomial(dim, sig))
        .collect();
    // elementary symmetric polynomial e_s of the per-block counts
    let mut e = vec![0u128; pattern.s() + 1];
    e[0] = 1;
    for c in per_block {
        for k in (1..e.len()).rev() {
            e[k] = e[k].saturating_add(e[k - 1].saturating_mul(c));
        }
    }
    e[pattern.s()]
}

/// Exact `δ_{s,σ}(H)` over every maximal admissible support.
pub fn exact_hi_rip(h: &HierarchicalOperator, pattern: &SparsityPattern, cap: u128) -> Result<RipEstimate> {
    if pattern.block_dims() != h.block_dims() {
        return Err(Error::DimensionMismatch(format!(
            "pattern block dimensions {:?} differ from the operator's {:?}",
            pattern.block_dims(),
            h.block_dims()
        )));
    }
    let count = count_hierarchical_supports(pattern);
    if count > cap {
        return Err(Error::CapExceeded {
            what: "hierarchical supports for exact HiRIP",
            required: count,
            cap,
        });
    }
    let gram = h.dense_matrix(DEFAULT_DENSE_CAP)?.gram();
    let offsets: Vec<usize> = pattern
        .block_dims()
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();

    let subsets: Vec<Vec<Vec<usize>>> = (0..pattern.n_blocks())
        .map(|i| Combinations::new(pattern.block_dims()[i], pattern.sigma()[i]).collect())
        .collect();
    let mut delta = 0.0f64;
    let mut flat = Vec::new();
    for blocks in Combinations::new(pattern.n_blocks(), pattern.s()) {
        // odometer over one subset per selected block
        let mut digits = vec![0usize; blocks.len()];
        loop {
            flat.clear();
            for (&i, &d) in blocks.iter().zip(&digits) {
                flat.extend(subsets[i][d].iter().map(|&k| offsets[i] + k));
            }
            delta = delta.max(distortion(&principal_submatrix(&gram, &flat)));
            let mut level = blocks.len();
            while level > 0 {
                level -= 1;
                digits[level] += 1;
                if digits[level] < subsets[blocks[level]].len() {
                    break;
                }
                digits[level] = 0;
            }
            if digits.iter().all(|&d| d == 0) {
                break;
            }
        }
    }
    Ok(RipEstimate::exact(delta))
}

/// Right-hand side of the composition bound
/// `δ_{s,σ}(H) ≤ δ_s(A) + sup_i δ_{σ_i}(B_i) + δ_s(A) · sup_i δ_{σ_i}(B_i)`.
pub fn composition_bound(delta_mixing: f64, delta_blocks: &[f64]) -> f64 {
    let sup = delta_blocks.iter().copied().fold(0.0, f64::max);
    delta_mixing + sup + delta_mixing * sup
}

/// Both sides of the composition bound, computed by exact enumeration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionCheck {
    pub hierarchical: f64,
    pub mixing: f64,
    pub blocks: Vec<f64>,
    pub bound: f64,
}

impl CompositionCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.hierarchical <= self.bound + slack
    }
}

pub fn check_composition_bound(
    h: &HierarchicalOperator,
    pattern: &SparsityPattern,
    cap: u128,
) -> Result<CompositionCheck> {
    let hierarchical = exact_hi_rip(h, pattern, cap)?.value;
    let mixing = exact_rip(h.mixing().matrix(), pattern.s(), cap)?.value;
    let blocks = h
        .blocks()
        .iter()
        .zip(pattern.sigma())
        .map(|(b, &sig)| exact_rip(b.matrix(), sig, cap).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    let bound = composition_bound(mixing, &blocks);
    Ok(CompositionCheck {
        hierarchical,
        mixing,
        blocks,
        bound,
    })
}

/// Random unit-norm `(s, σ)`-sparse vector on a uniformly drawn maximal
/// support, with spherical coefficients over `field`.
pub fn random_hi_sparse_unit<R: Rng + ?Sized>(
    pattern: &SparsityPattern,
    field: ScalarField,
    rng: &mut R,
) -> BlockVector {
    let mut x = BlockVector::zeros(pattern.block_dims(), field);
    let mut blocks = index::sample(rng, pattern.n_blocks(), pattern.s()).into_vec();
    blocks.sort_unstable();
    for i in blocks {
        let mut ks = index::sample(rng, pattern.block_dims()[i], pattern.sigma()[i]).into_vec();
        ks.sort_unstable();
        for k in ks {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = match field {
                ScalarField::Real => 0.0,
                ScalarField::Complex => rng.sample(StandardNormal),
            };
            x.set(i, k, Scalar::new(re, im));
        }
    }
    let norm = x.norm();
    if norm > 0.0 {
        x.as_flat_mut().iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// Lower bound on `δ_{s,σ}(H)`: the running maximum of `|‖Hx‖² − 1|` over
/// random unit `(s, σ)`-sparse `x`.
pub fn monte_carlo_hi_rip<R: Rng + ?Sized>(
    h: &HierarchicalOperator,
    pattern: &SparsityPattern,
    trials: usize,
    rng: &mut R,
) -> Result<RipEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    if pattern.block_dims() != h.block_dims() {
        return Err(Error::DimensionMismatch(format!(
            "pattern block dimensions {:?} differ from the operator's {:?}",
            pattern.block_dims(),
            h.block_dims()
        )));
    }
    let field = h.field();
    let mut value = 0.0f64;
    for _ in 0..trials {
        let x = random_hi_sparse_unit(pattern, field, rng);
        let energy = h.apply(&x)?.norm().powi(2);
        value = value.max((energy - 1.0).abs());
    }
    Ok(RipEstimate {
        value,
        kind: EstimateKind::MonteCarloLowerBound,
        trials,
    })
}

/// The trivial hierarchy `N = 1`, `A = [1]`, `B_1 = b`.
pub fn single_block_operator(b: &DenseMatrix) -> Result<HierarchicalOperator> {
    HierarchicalOperator::new(
        MixingMatrix::new(DenseMatrix::identity(1))?,
        vec![BlockOperator::new(b.clone())?],
    )
}

/// Lower bound on `δ_σ(B)` through the trivial hierarchy.
pub fn monte_carlo_rip<R: Rng + ?Sized>(
    b: &DenseMatrix,
    sigma: usize,
    trials: usize,
    rng: &mut R,
) -> Result<RipEstimate> {
    let h = single_block_operator(b)?;
    let pattern = SparsityPattern::new(1, vec![sigma], vec![b.cols()])?;
    monte_carlo_hi_rip(&h, &pattern, trials, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceOptions {
    /// Support pairs an exact computation may visit.
    pub cap: u128,
    /// Random support pairs evaluated when the cap is exceeded.
    pub fallback_trials: usize,
    pub fallback_seed: u64,
}

impl Default for IncoherenceOptions {
    fn default() -> Self {
        IncoherenceOptions {
            cap: DEFAULT_INCOHERENCE_CAP,
            fallback_trials: 100_000,
            fallback_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncoherenceEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub trials: usize,
}

/// `sup |⟨B_i v, B_j w⟩|` over unit σ-sparse `v`, `w`, i.e. the largest
/// spectral norm of a `σ × σ` submatrix of `B_i^* B_j`.
///
/// Exact when the `C(n_i, σ)·C(n_j, σ)` support pairs fit under the cap,
/// otherwise a lower bound from random support pairs.
pub fn pairwise_incoherence(
    b_i: &DenseMatrix,
    b_j: &DenseMatrix,
    sigma: usize,
    options: &IncoherenceOptions,
) -> Result<IncoherenceEstimate> {
    if b_i.rows() != b_j.rows() {
        return Err(Error::DimensionMismatch(format!(
            "block operators have {} and {} rows",
            b_i.rows(),
            b_j.rows()
        )));
    }
    if sigma == 0 {
        return Err(Error::InvalidArgument("sparsity must be at least 1".into()));
    }
    let (si, sj) = (sigma.min(b_i.cols()), sigma.min(b_j.cols()));
    let cross = b_i.cross_gram(b_j);
    let pairs = binomial(b_i.cols(), si).saturating_mul(binomial(b_j.cols(), sj));

    if pairs <= options.cap {
        let value = if si == 1 && sj == 1 {
            cross.iter().map(|v| v.norm()).fold(0.0, f64::max)
        } else if si == 2 && sj == 2 {
            max_norm_2x2(&cross)
        } else {
            let rows: Vec<Vec<usize>> = Combinations::new(b_i.cols(), si).collect();
            let cols: Vec<Vec<usize>> = Combinations::new(b_j.cols(), sj).collect();
            let mut best = 0.0f64;
            for s in &rows {
                for t in &cols {
                    best = best.max(linalg::spectral_norm(&submatrix(&cross, s, t)));
                }
            }
            best
        };
        return Ok(IncoherenceEstimate {
            value,
            kind: EstimateKind::ExactEnumeration,
            trials: 0,
        });
    }

    let mut rng = crate::rng::seeded(options.fallback_seed);
    let mut best = 0.0f64;
    for _ in 0..options.fallback_trials.max(1) {
        let s = index::sample(&mut rng, b_i.cols(), si).into_vec();
        let t = index::sample(&mut rng, b_j.cols(), sj).into_vec();
        best = best.max(linalg::spectral_norm(&submatrix(&cross, &s, &t)));
    }
    Ok(IncoherenceEstimate {
        value: best,
        kind: EstimateKind::MonteCarloLowerBound,
        trials: options.fallback_trials.max(1),
    })
}

fn submatrix(m: &DMatrix<Scalar>, rows: &[usize], cols: &[usize]) -> DMatrix<Scalar> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Largest spectral norm over all 2×2 submatrices, in closed form.
fn max_norm_2x2(cross: &DMatrix<Scalar>) -> f64 {
    let (n_rows, n_cols) = cross.shape();
    let mut best_sq = 0.0f64;
    for c1 in 0..n_cols {
        for c2 in c1 + 1..n_cols {
            for r1 in 0..n_rows {
                let (p11, p12) = (cross[(r1, c1)], cross[(r1, c2)]);
                for r2 in r1 + 1..n_rows {
                    let (p21, p22) = (cross[(r2, c1)], cross[(r2, c2)]);
                    // Gram of the 2×2 block's columns
                    let a = p11.norm_sqr() + p21.norm_sqr();
                    let d = p12.norm_sqr() + p22.norm_sqr();
                    let b = p11.conj() * p12 + p21.conj() * p22;
                    best_sq = best_sq.max(linalg::eig2(a, d, b).1);
                }
            }
        }
    }
    best_sq.max(0.0).sqrt()
}
