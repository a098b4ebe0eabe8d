//! Hierarchical measurement operators `H(x) = Σ_i a_i ⊗ (B_i x_i)`, their
//! adjoints, least squares restricted to a hierarchical support, and the
//! random ensembles used to build them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::matrix::DenseMatrix;
use crate::model::{is_zero, BlockVector, HiSupport, MeasurementVector, Scalar, ScalarField};
use crate::{Error, Result};

/// Default cap on the number of entries of a materialized dense operator.
pub const DEFAULT_DENSE_CAP: usize = 1 << 24;

/// The `M × N` matrix whose columns `a_i` mix the block measurements over
/// `M` slots.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix(DenseMatrix);

impl MixingMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        check_matrix(&matrix, "mixing matrix")?;
        Ok(MixingMatrix(matrix))
    }

    pub fn slots(&self) -> usize {
        self.0.rows()
    }

    pub fn n_blocks(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// An `m × n_i` block operator `B_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockOperator(DenseMatrix);

impl BlockOperator {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        check_matrix(&matrix, "block operator")?;
        Ok(BlockOperator(matrix))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

fn check_matrix(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::InvalidArgument(format!("{what} must be non-empty")));
    }
    if !m.is_finite() {
        return Err(Error::InvalidArgument(format!("{what} has non-finite entries")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalOperator {
    mixing: MixingMatrix,
    blocks: Vec<BlockOperator>,
    block_dims: Vec<usize>,
}

impl HierarchicalOperator {
    pub fn new(mixing: MixingMatrix, blocks: Vec<BlockOperator>) -> Result<Self> {
        if mixing.n_blocks() != blocks.len() {
            return Err(Error::DimensionMismatch(format!(
                "mixing matrix has {} columns but {} block operators were given",
                mixing.n_blocks(),
                blocks.len()
            )));
        }
        let m = blocks[0].rows();
        if let Some(i) = blocks.iter().position(|b| b.rows() != m) {
            return Err(Error::DimensionMismatch(format!(
                "block operator {i} has {} rows, block 0 has {m}",
                blocks[i].rows()
            )));
        }
        let block_dims = blocks.iter().map(BlockOperator::cols).collect();
        Ok(HierarchicalOperator {
            mixing,
            blocks,
            block_dims,
        })
    }

    /// `A ⊗ B`: every block operator equal to `block`.
    pub fn kronecker(mixing: MixingMatrix, block: BlockOperator) -> Self {
        let blocks = vec![block; mixing.n_blocks()];
        HierarchicalOperator::new(mixing, blocks).expect("uniform blocks are consistent")
    }

    /// `A = I_N`, `B_i = I_n`.
    pub fn identity(n_blocks: usize, n: usize) -> Self {
        let mixing = MixingMatrix(DenseMatrix::identity(n_blocks));
        HierarchicalOperator::kronecker(mixing, BlockOperator(DenseMatrix::identity(n)))
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn blocks(&self) -> &[BlockOperator] {
        &self.blocks
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `M`
    pub fn slots(&self) -> usize {
        self.mixing.slots()
    }

    /// `m`
    pub fn rows(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn measurement_len(&self) -> usize {
        self.slots() * self.rows()
    }

    pub fn field(&self) -> ScalarField {
        self.blocks
            .iter()
            .fold(self.mixing.0.field(), |f, b| f.join(b.0.field()))
    }

    fn a(&self, j: usize, i: usize) -> Scalar {
        self.mixing.0.get(j, i)
    }

    /// `y_j = Σ_i A[j,i] · B_i x_i`. Zero blocks and zero entries are skipped,
    /// so sparse inputs are cheap.
    pub fn apply(&self, x: &BlockVector) -> Result<MeasurementVector> {
        x.check_dims(&self.block_dims)?;
        let (slots, m) = (self.slots(), self.rows());
        let mut y = MeasurementVector::zeros(slots, m);
        let out = y.as_mut_slice();
        let mut z = vec![Scalar::new(0.0, 0.0); m];
        for (i, block) in self.blocks.iter().enumerate() {
            let xi = x.block(i);
            if xi.iter().all(is_zero) {
                continue;
            }
            z.iter_mut().for_each(|v| *v = Scalar::new(0.0, 0.0));
            for (k, v) in xi.iter().enumerate() {
                if !is_zero(v) {
                    linalg::axpy(*v, block.0.column(k), &mut z);
                }
            }
            for j in 0..slots {
                linalg::axpy(self.a(j, i), &z, &mut out[j * m..(j + 1) * m]);
            }
        }
        Ok(y)
    }

    /// `(H^* y)_i = B_i^* Σ_j conj(A[j,i]) y_j`.
    pub fn adjoint_apply(&self, y: &MeasurementVector) -> Result<BlockVector> {
        self.check_measurements(y)?;
        let m = self.rows();
        let mut out = BlockVector::zeros(&self.block_dims, self.field());
        let mut w = vec![Scalar::new(0.0, 0.0); m];
        for (i, block) in self.blocks.iter().enumerate() {
            self.mix_adjoint(i, y.as_slice(), &mut w);
            let xi = out.block_mut(i);
            for (k, v) in xi.iter_mut().enumerate() {
                *v = linalg::dot(block.0.column(k), &w);
            }
        }
        Ok(out)
    }

    /// `w = Σ_j conj(A[j,i]) y_j`.
    fn mix_adjoint(&self, i: usize, y: &[Scalar], w: &mut [Scalar]) {
        let m = self.rows();
        w.iter_mut().for_each(|v| *v = Scalar::new(0.0, 0.0));
        for j in 0..self.slots() {
            linalg::axpy(self.a(j, i).conj(), &y[j * m..(j + 1) * m], w);
        }
    }

    fn check_measurements(&self, y: &MeasurementVector) -> Result<()> {
        if y.slots() != self.slots() || y.rows() != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "measurements are {}×{}, operator expects {}×{}",
                y.slots(),
                y.rows(),
                self.slots(),
                self.rows()
            )));
        }
        Ok(())
    }

    /// The column of `H` for entry `k` of block `i`: `a_i ⊗ (B_i e_k)`.
    pub fn column(&self, i: usize, k: usize) -> Vec<Scalar> {
        let b = self.blocks[i].0.column(k);
        let mut out = Vec::with_capacity(self.measurement_len());
        for j in 0..self.slots() {
            let a = self.a(j, i);
            out.extend(b.iter().map(|v| a * v));
        }
        out
    }

    /// The `(M·m) × Σ n_i` matrix of `H`, refusing to build more than `cap`
    /// entries.
    pub fn dense_matrix(&self, cap: usize) -> Result<DenseMatrix> {
        let rows = self.measurement_len();
        let cols: usize = self.block_dims.iter().sum();
        let required = rows as u128 * cols as u128;
        if required > cap as u128 {
            return Err(Error::CapExceeded {
                what: "dense operator entries",
                required,
                cap: cap as u128,
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for (i, &dim) in self.block_dims.iter().enumerate() {
            for k in 0..dim {
                data.extend(self.column(i, k));
            }
        }
        Ok(DenseMatrix::from_col_major(rows, cols, data, self.field()))
    }

    /// `argmin ½‖y − Hx‖²` over `x` supported on `support`, with default
    /// options and a zero starting point.
    pub fn restricted_least_squares(
        &self,
        y: &MeasurementVector,
        support: &HiSupport,
    ) -> Result<LeastSquaresFit> {
        self.restricted_least_squares_with(y, support, None, &LeastSquaresOptions::default())
    }

    /// Restricted least squares. `start` is only used by the iterative
    /// method; its residual is never exceeded by the returned solution.
    pub fn restricted_least_squares_with(
        &self,
        y: &MeasurementVector,
        support: &HiSupport,
        start: Option<&BlockVector>,
        options: &LeastSquaresOptions,
    ) -> Result<LeastSquaresFit> {
        self.check_measurements(y)?;
        for &(i, k) in support.entries() {
            if i >= self.n_blocks() || k >= self.block_dims[i] {
                return Err(Error::DimensionMismatch(format!(
                    "support entry ({i},{k}) lies outside block dimensions {:?}",
                    self.block_dims
                )));
            }
        }
        if support.len() > self.measurement_len() {
            return Err(Error::InvalidArgument(format!(
                "support of size {} exceeds the {} available measurements",
                support.len(),
                self.measurement_len()
            )));
        }
        let field = self.field();
        if support.is_empty() {
            return Ok(LeastSquaresFit {
                solution: BlockVector::zeros(&self.block_dims, field),
                rank_deficient: false,
                method: SolveMethod::Direct,
                iterations: 0,
                converged: true,
            });
        }
        let rows = self.measurement_len() as u128;
        let k = support.len() as u128;
        let direct = match options.method {
            LeastSquaresMethod::Direct => true,
            LeastSquaresMethod::Iterative => false,
            LeastSquaresMethod::Auto => rows * k * k <= options.direct_limit as u128,
        };
        let mut fit = if direct {
            self.solve_direct(y, support)
        } else {
            self.solve_cgls(y, support, start, options)
        };
        if field.join(y_field(y)) == ScalarField::Real {
            // real data and operator: imaginary parts are round-off
            fit.solution.as_flat_mut().iter_mut().for_each(|v| v.im = 0.0);
            fit.solution.set_field(ScalarField::Real);
        }
        Ok(fit)
    }

    fn solve_direct(&self, y: &MeasurementVector, support: &HiSupport) -> LeastSquaresFit {
        let entries = support.entries();
        let cols = DMatrix::from_fn(self.measurement_len(), entries.len(), |r, c| {
            let (i, k) = entries[c];
            let (j, row) = (r / self.rows(), r % self.rows());
            self.a(j, i) * self.blocks[i].0.get(row, k)
        });
        let rhs = DVector::from_column_slice(y.as_slice());
        let (z, rank_deficient) = linalg::dense_least_squares(cols, &rhs);
        let mut solution = BlockVector::zeros(&self.block_dims, ScalarField::Complex);
        for (c, &(i, k)) in entries.iter().enumerate() {
            { let f = solution.flat_index(i, k); solution.as_flat_mut()[f] = z[c]; }
        }
        LeastSquaresFit {
            solution,
            rank_deficient,
            method: SolveMethod::Direct,
            iterations: 0,
            converged: true,
        }
    }

    /// CGLS on the restricted columns, matrix-free.
    fn solve_cgls(
        &self,
        y: &MeasurementVector,
        support: &HiSupport,
        start: Option<&BlockVector>,
        options: &LeastSquaresOptions,
    ) -> LeastSquaresFit {
        let cols = RestrictedColumns::new(self, support);
        let mut x: Vec<Scalar> = match start {
            Some(s) if s.conforms_to(&self.block_dims) => {
                support.entries().iter().map(|&(i, k)| s.get(i, k)).collect()
            }
            _ => vec![Scalar::new(0.0, 0.0); support.len()],
        };
        let mut r: Vec<Scalar> = y.as_slice().to_vec();
        if x.iter().any(|v| !is_zero(v)) {
            let hx = cols.apply(&x);
            r.iter_mut().zip(&hx).for_each(|(ri, hi)| *ri -= hi);
        }
        let reference = linalg::norm(&cols.adjoint(y.as_slice())).max(f64::MIN_POSITIVE);
        let mut s = cols.adjoint(&r);
        let mut p = s.clone();
        let mut gamma = linalg::norm_sqr(&s);
        let max_iter = options.max_iterations.max(1);
        let mut iterations = 0;
        let mut converged = gamma.sqrt() <= options.tolerance * reference;
        while !converged && iterations < max_iter {
            let q = cols.apply(&p);
            let qq = linalg::norm_sqr(&q);
            if qq == 0.0 || !qq.is_finite() {
                break;
            }
            let alpha = Scalar::new(gamma / qq, 0.0);
            linalg::axpy(alpha, &p, &mut x);
            linalg::axpy(-alpha, &q, &mut r);
            s = cols.adjoint(&r);
            let gamma_next = linalg::norm_sqr(&s);
            iterations += 1;
            converged = gamma_next.sqrt() <= options.tolerance * reference;
            let beta = Scalar::new(gamma_next / gamma, 0.0);
            for (pi, si) in p.iter_mut().zip(&s) {
                *pi = si + beta * *pi;
            }
            gamma = gamma_next;
        }
        let mut solution = BlockVector::zeros(&self.block_dims, ScalarField::Complex);
        for (c, &(i, k)) in support.entries().iter().enumerate() {
            { let f = solution.flat_index(i, k); solution.as_flat_mut()[f] = x[c]; }
        }
        LeastSquaresFit {
            solution,
            // CGLS cannot certify rank; an unconverged run is the warning sign.
            rank_deficient: false,
            method: SolveMethod::Iterative,
            iterations,
            converged,
        }
    }
}

fn y_field(y: &MeasurementVector) -> ScalarField {
    ScalarField::of_values(y.as_slice())
}

/// The columns of `H` selected by a support, applied without materializing
/// them.
struct RestrictedColumns<'a> {
    op: &'a HierarchicalOperator,
    /// (block, [(position in coefficient vector, inner index)])
    groups: Vec<(usize, Vec<(usize, usize)>)>,
}

impl<'a> RestrictedColumns<'a> {
    fn new(op: &'a HierarchicalOperator, support: &HiSupport) -> Self {
        let mut groups: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
        for (pos, &(i, k)) in support.entries().iter().enumerate() {
            match groups.last_mut() {
                Some((b, list)) if *b == i => list.push((pos, k)),
                _ => groups.push((i, vec![(pos, k)])),
            }
        }
        RestrictedColumns { op, groups }
    }

    fn apply(&self, coeffs: &[Scalar]) -> Vec<Scalar> {
        let (slots, m) = (self.op.slots(), self.op.rows());
        let mut out = vec![Scalar::new(0.0, 0.0); slots * m];
        let mut z = vec![Scalar::new(0.0, 0.0); m];
        for (i, list) in &self.groups {
            z.iter_mut().for_each(|v| *v = Scalar::new(0.0, 0.0));
            for &(pos, k) in list {
                linalg::axpy(coeffs[pos], self.op.blocks[*i].0.column(k), &mut z);
            }
            for j in 0..slots {
                linalg::axpy(self.op.a(j, *i), &z, &mut out[j * m..(j + 1) * m]);
            }
        }
        out
    }

    fn adjoint(&self, r: &[Scalar]) -> Vec<Scalar> {
        let n: usize = self.groups.iter().map(|(_, l)| l.len()).sum();
        let mut out = vec![Scalar::new(0.0, 0.0); n];
        let mut w = vec![Scalar::new(0.0, 0.0); self.op.rows()];
        for (i, list) in &self.groups {
            self.op.mix_adjoint(*i, r, &mut w);
            for &(pos, k) in list {
                out[pos] = linalg::dot(self.op.blocks[*i].0.column(k), &w);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeastSquaresMethod {
    /// Direct below [`LeastSquaresOptions::direct_limit`], iterative above.
    Auto,
    /// Householder QR on the materialized restricted columns (SVD fallback
    /// for rank-deficient column sets).
    Direct,
    /// Matrix-free CGLS.
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Direct,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeastSquaresOptions {
    pub method: LeastSquaresMethod,
    /// `Auto` goes direct while `rows · |Ω|²` stays below this.
    pub direct_limit: usize,
    pub max_iterations: usize,
    /// Relative normal-equation residual at which CGLS stops.
    pub tolerance: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        LeastSquaresOptions {
            method: LeastSquaresMethod::Auto,
            direct_limit: 1 << 25,
            max_iterations: 400,
            tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeastSquaresFit {
    /// Zero off the support.
    pub solution: BlockVector,
    /// The restricted columns were numerically rank deficient; `solution` is
    /// the minimum-norm minimizer.
    pub rank_deficient: bool,
    pub method: SolveMethod,
    /// CGLS iterations (0 for the direct method).
    pub iterations: usize,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Random ensembles

fn gaussian_entry<R: Rng + ?Sized>(rng: &mut R, variance: f64, field: ScalarField) -> Scalar {
    match field {
        ScalarField::Real => {
            let g: f64 = rng.sample(StandardNormal);
            Scalar::new(variance.sqrt() * g, 0.0)
        }
        ScalarField::Complex => {
            let sd = (0.5 * variance).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Scalar::new(sd * re, sd * im)
        }
    }
}

/// I.i.d. Gaussian matrix with entry variance `variance` (complex entries
/// split it evenly between real and imaginary parts). Entries are drawn in
/// column-major order.
pub fn gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    field: ScalarField,
    rng: &mut R,
) -> Result<DenseMatrix> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "variance must be positive and finite, got {variance}"
        )));
    }
    let data = (0..rows * cols)
        .map(|_| gaussian_entry(rng, variance, field))
        .collect();
    Ok(DenseMatrix::from_col_major(rows, cols, data, field))
}

pub fn gaussian_mixing<R: Rng + ?Sized>(
    slots: usize,
    n_blocks: usize,
    variance: f64,
    field: ScalarField,
    rng: &mut R,
) -> Result<MixingMatrix> {
    MixingMatrix::new(gaussian_matrix(slots, n_blocks, variance, field, rng)?)
}

/// Gaussian block operator with entry variance `1/m`, so that columns have
/// unit expected norm.
pub fn gaussian_block<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    field: ScalarField,
    rng: &mut R,
) -> Result<BlockOperator> {
    BlockOperator::new(gaussian_matrix(m, n, 1.0 / m as f64, field, rng)?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSampling {
    /// `m` independent uniform row indices.
    #[default]
    WithReplacement,
    /// `m` distinct rows.
    WithoutReplacement,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSigns {
    /// Uniform on `{−1, +1}`.
    #[default]
    Rademacher,
    /// Uniform on the complex unit circle.
    Phase,
    /// All `+1`.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DftOptions {
    pub sampling: RowSampling,
    pub signs: RowSigns,
}

/// Rows of the `n`-point DFT `exp(−2πi·ab/n)`, each multiplied by a random
/// sign and scaled by `m^{-1/2}`. Columns have unit norm and the full,
/// unsigned, without-replacement operator (`m = n`) is unitary.
///
/// Row indices are drawn first, then the signs.
pub fn subsampled_dft<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    options: &DftOptions,
    rng: &mut R,
) -> Result<BlockOperator> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "subsampled DFT needs 1 ≤ m ≤ n, got m = {m}, n = {n}"
        )));
    }
    let rows: Vec<usize> = match options.sampling {
        RowSampling::WithReplacement => (0..m).map(|_| rng.random_range(0..n)).collect(),
        RowSampling::WithoutReplacement => index::sample(rng, n, m).into_vec(),
    };
    let scale = 1.0 / (m as f64).sqrt();
    let signs: Vec<Scalar> = (0..m)
        .map(|_| match options.signs {
            RowSigns::Rademacher => {
                if rng.random::<bool>() {
                    Scalar::new(scale, 0.0)
                } else {
                    Scalar::new(-scale, 0.0)
                }
            }
            RowSigns::Phase => Scalar::from_polar(scale, 2.0 * PI * rng.random::<f64>()),
            RowSigns::None => Scalar::new(scale, 0.0),
        })
        .collect();
    let twiddles: Vec<Scalar> = (0..n)
        .map(|t| Scalar::from_polar(1.0, -2.0 * PI * t as f64 / n as f64))
        .collect();
    let mut data = Vec::with_capacity(m * n);
    for b in 0..n {
        for (r, &a) in rows.iter().enumerate() {
            let t = ((a as u64 * b as u64) % n as u64) as usize;
            data.push(signs[r] * twiddles[t]);
        }
    }
    BlockOperator::new(DenseMatrix::from_col_major(m, n, data, ScalarField::Complex))
}

// ---------------------------------------------------------------------------
// Replayable descriptors

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRule {
    /// `1 / M`
    InverseSlots,
    /// `1 / sqrt(N)`
    InverseSqrtBlocks,
    /// `1 / m`
    InverseRows,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Variance {
    Value(f64),
    Rule(VarianceRule),
}

impl Variance {
    pub fn resolve(&self, slots: usize, n_blocks: usize, rows: usize) -> f64 {
        match *self {
            Variance::Value(v) => v,
            Variance::Rule(VarianceRule::InverseSlots) => 1.0 / slots as f64,
            Variance::Rule(VarianceRule::InverseSqrtBlocks) => 1.0 / (n_blocks as f64).sqrt(),
            Variance::Rule(VarianceRule::InverseRows) => 1.0 / rows as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ensemble", rename_all = "snake_case", deny_unknown_fields)]
pub enum MixingEnsemble {
    Gaussian { variance: Variance },
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ensemble", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockEnsemble {
    Gaussian { variance: Variance },
    SubsampledDft {
        #[serde(default)]
        sampling: RowSampling,
        #[serde(default)]
        signs: RowSigns,
    },
    Identity,
}

/// Everything needed to rebuild a random operator bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDescriptor {
    /// `M`
    pub slots: usize,
    /// `m`
    pub rows: usize,
    pub block_dims: Vec<usize>,
    pub field: ScalarField,
    pub mixing: MixingEnsemble,
    pub blocks: BlockEnsemble,
    pub seed: u64,
}

impl OperatorDescriptor {
    /// Draws the mixing matrix first, then the blocks in order, from one
    /// generator seeded with `self.seed`.
    pub fn build(&self) -> Result<HierarchicalOperator> {
        let mut rng = crate::rng::seeded(self.seed);
        self.build_with(&mut rng)
    }

    pub fn build_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HierarchicalOperator> {
        let n_blocks = self.block_dims.len();
        if n_blocks == 0 || self.slots == 0 || self.rows == 0 {
            return Err(Error::InvalidArgument(
                "operator needs at least one block, slot and row".into(),
            ));
        }
        let mixing = match &self.mixing {
            MixingEnsemble::Gaussian { variance } => {
                let v = variance.resolve(self.slots, n_blocks, self.rows);
                gaussian_mixing(self.slots, n_blocks, v, self.field, rng)?
            }
            MixingEnsemble::Identity => {
                if self.slots != n_blocks {
                    return Err(Error::InvalidArgument(
                        "identity mixing needs as many slots as blocks".into(),
                    ));
                }
                MixingMatrix(DenseMatrix::identity(n_blocks))
            }
        };
        let mut blocks = Vec::with_capacity(n_blocks);
        for &n in &self.block_dims {
            let block = match &self.blocks {
                BlockEnsemble::Gaussian { variance } => {
                    let v = variance.resolve(self.slots, n_blocks, self.rows);
                    BlockOperator::new(gaussian_matrix(self.rows, n, v, self.field, rng)?)?
                }
                BlockEnsemble::SubsampledDft { sampling, signs } => {
                    let opts = DftOptions {
                        sampling: *sampling,
                        signs: *signs,
                    };
                    subsampled_dft(self.rows, n, &opts, rng)?
                }
                BlockEnsemble::Identity => {
                    if self.rows != n {
                        return Err(Error::InvalidArgument(
                            "identity blocks need m = n_i".into(),
                        ));
                    }
                    BlockOperator(DenseMatrix::identity(n))
                }
            };
            blocks.push(block);
        }
        HierarchicalOperator::new(mixing, blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::support_of;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn r(v: f64) -> Scalar {
        Scalar::new(v, 0.0)
    }

    fn random_operator(seed: u64, dims: &[usize], slots: usize, m: usize, field: ScalarField) -> HierarchicalOperator {
        let mut rng = seeded(seed);
        let mixing = gaussian_mixing(slots, dims.len(), 1.0, field, &mut rng).unwrap();
        let blocks = dims
            .iter()
            .map(|&n| gaussian_block(m, n, field, &mut rng).unwrap())
            .collect();
        HierarchicalOperator::new(mixing, blocks).unwrap()
    }

    fn random_vector(seed: u64, dims: &[usize], field: ScalarField) -> BlockVector {
        let mut rng = seeded(seed);
        let blocks = dims
            .iter()
            .map(|&n| (0..n).map(|_| gaussian_entry(&mut rng, 1.0, field)).collect())
            .collect();
        BlockVector::from_blocks(blocks)
    }

    /// Dense oracle assembled from per-block Kronecker products
    /// `a_i ⊗ B_i`, independent of `dense_matrix`.
    fn kron_oracle(h: &HierarchicalOperator) -> DenseMatrix {
        let parts: Vec<DenseMatrix> = h
            .blocks()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let a_i = DenseMatrix::from_fn(h.slots(), 1, |j, _| h.mixing().matrix().get(j, i));
                a_i.kron(b.matrix())
            })
            .collect();
        let rows = h.measurement_len();
        let cols: usize = parts.iter().map(DenseMatrix::cols).sum();
        let mut offset = Vec::new();
        let mut acc = 0;
        for p in &parts {
            offset.push(acc);
            acc += p.cols();
        }
        DenseMatrix::from_fn(rows, cols, |rr, c| {
            let b = offset.iter().rposition(|&o| o <= c).unwrap();
            parts[b].get(rr, c - offset[b])
        })
    }

    #[test]
    fn apply_zero_is_zero() {
        let h = random_operator(1, &[3, 2], 2, 2, ScalarField::Complex);
        let y = h.apply(&BlockVector::zeros(&[3, 2], ScalarField::Real)).unwrap();
        assert!(y.as_slice().iter().all(is_zero));
    }

    #[test]
    fn apply_hand_example() {
        let a = MixingMatrix::new(DenseMatrix::from_real_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        let one = || BlockOperator::new(DenseMatrix::identity(1)).unwrap();
        let h = HierarchicalOperator::new(a, vec![one(), one()]).unwrap();
        let x = BlockVector::from_real_blocks(vec![vec![3.0], vec![5.0]]);
        assert_eq!(h.apply(&x).unwrap().as_slice(), &[r(13.0)]);
    }

    #[test]
    fn apply_matches_dense_oracle() {
        for seed in 0..5 {
            let dims = [3, 1, 4];
            let h = random_operator(seed, &dims, 3, 2, ScalarField::Complex);
            let x = random_vector(100 + seed, &dims, ScalarField::Complex);
            let oracle = kron_oracle(&h).mul_vec(x.as_flat());
            let y = h.apply(&x).unwrap();
            let err = linalg::norm(&y.as_slice().iter().zip(&oracle).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err <= 1e-12 * linalg::norm(&oracle));
        }
    }

    #[test]
    fn dense_matrix_of_uniform_blocks_is_kronecker() {
        let mut rng = seeded(9);
        let a = gaussian_mixing(3, 4, 1.0, ScalarField::Complex, &mut rng).unwrap();
        let b = gaussian_block(2, 5, ScalarField::Complex, &mut rng).unwrap();
        let textbook = a.matrix().kron(b.matrix());
        let h = HierarchicalOperator::kronecker(a, b);
        let dense = h.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        for rr in 0..dense.rows() {
            for c in 0..dense.cols() {
                assert!((dense.get(rr, c) - textbook.get(rr, c)).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn dense_matrix_identity_and_single_row() {
        let h = HierarchicalOperator::identity(2, 3);
        let d = h.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        // (j,k) row ordering coincides with (i,k) column ordering here
        assert_eq!(d, DenseMatrix::identity(6));

        let a = MixingMatrix::new(DenseMatrix::from_real_rows(&[vec![2.0, -1.0]]).unwrap()).unwrap();
        let b0 = BlockOperator::new(DenseMatrix::from_real_rows(&[vec![1.0, 3.0]]).unwrap()).unwrap();
        let b1 = BlockOperator::new(DenseMatrix::from_real_rows(&[vec![4.0]]).unwrap()).unwrap();
        let h = HierarchicalOperator::new(a, vec![b0, b1]).unwrap();
        let d = h.dense_matrix(DEFAULT_DENSE_CAP).unwrap();
        let row: Vec<f64> = (0..3).map(|c| d.get(0, c).re).collect();
        assert_eq!(row, vec![2.0, 6.0, -4.0]);
    }

    #[test]
    fn dense_matrix_cap() {
        let h = HierarchicalOperator::identity(4, 4);
        assert!(matches!(h.dense_matrix(100), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn constructor_checks() {
        let mut rng = seeded(0);
        let a = gaussian_mixing(2, 2, 1.0, ScalarField::Real, &mut rng).unwrap();
        let b3 = gaussian_block(3, 2, ScalarField::Real, &mut rng).unwrap();
        let b2 = gaussian_block(2, 2, ScalarField::Real, &mut rng).unwrap();
        assert!(HierarchicalOperator::new(a.clone(), vec![b3.clone()]).is_err());
        assert!(HierarchicalOperator::new(a, vec![b3, b2]).is_err());
        let nan = DenseMatrix::from_real_rows(&[vec![f64::NAN]]).unwrap();
        assert!(BlockOperator::new(nan).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let h = random_operator(3, &[2, 3], 2, 3, ScalarField::Complex);
        let zero = h.adjoint_apply(&MeasurementVector::zeros(2, 3)).unwrap();
        assert!(zero.as_flat().iter().all(is_zero));

        // single block with A = [[1]]: plain transpose
        let b = DenseMatrix::from_real_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let h = HierarchicalOperator::new(
            MixingMatrix::new(DenseMatrix::identity(1)).unwrap(),
            vec![BlockOperator::new(b).unwrap()],
        )
        .unwrap();
        let y = MeasurementVector::new(1, 2, vec![r(1.0), r(-1.0)]).unwrap();
        let back: Vec<f64> = h.adjoint_apply(&y).unwrap().as_flat().iter().map(|v| v.re).collect();
        assert_eq!(back, vec![-3.0, -3.0, -3.0]);
        assert!(h.adjoint_apply(&MeasurementVector::zeros(2, 2)).is_err());
    }

    #[test]
    fn adjoint_matches_dense_conjugate_transpose() {
        let dims = [2, 4, 3];
        let h = random_operator(21, &dims, 2, 3, ScalarField::Complex);
        let mut rng = seeded(22);
        let y: Vec<Scalar> = (0..6).map(|_| gaussian_entry(&mut rng, 1.0, ScalarField::Complex)).collect();
        let oracle = kron_oracle(&h).adjoint_mul_vec(&y);
        let got = h.adjoint_apply(&MeasurementVector::new(2, 3, y).unwrap()).unwrap();
        for (a, b) in got.as_flat().iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn restricted_least_squares_recovers_consistent_data() {
        let dims = [6, 6, 6, 6];
        let h = random_operator(5, &dims, 4, 5, ScalarField::Complex);
        let mut x0 = BlockVector::zeros(&dims, ScalarField::Complex);
        x0.set(0, 1, Scalar::new(1.0, -0.5));
        x0.set(0, 4, Scalar::new(-2.0, 0.0));
        x0.set(2, 3, Scalar::new(0.3, 0.7));
        let y = h.apply(&x0).unwrap();
        let support = support_of(&x0);
        for method in [LeastSquaresMethod::Direct, LeastSquaresMethod::Iterative] {
            let opts = LeastSquaresOptions { method, ..Default::default() };
            let fit = h.restricted_least_squares_with(&y, &support, None, &opts).unwrap();
            assert!(!fit.rank_deficient);
            assert!(fit.solution.relative_error_to(&x0) < 1e-10, "{method:?}");
            assert_eq!(support_of(&fit.solution), support);
        }
    }

    #[test]
    fn restricted_least_squares_empty_and_identity() {
        let h = HierarchicalOperator::identity(2, 3);
        let y = MeasurementVector::new(2, 3, (1..=6).map(|v| r(v as f64)).collect()).unwrap();
        let fit = h.restricted_least_squares(&y, &HiSupport::empty()).unwrap();
        assert!(fit.solution.as_flat().iter().all(is_zero));

        let support = HiSupport::new(vec![(0, 2), (1, 0)]);
        let fit = h.restricted_least_squares(&y, &support).unwrap();
        let want = [0.0, 0.0, 3.0, 4.0, 0.0, 0.0];
        for (got, want) in fit.solution.as_flat().iter().zip(want) {
            assert!((got - r(want)).norm() < 1e-14);
        }
    }

    #[test]
    fn restricted_least_squares_rank_deficient_is_flagged() {
        // duplicated block operators under a rank-one mixing matrix
        let a = MixingMatrix::new(DenseMatrix::from_real_rows(&[vec![1.0, 1.0]]).unwrap()).unwrap();
        let b = BlockOperator::new(DenseMatrix::identity(2)).unwrap();
        let h = HierarchicalOperator::kronecker(a, b);
        let y = MeasurementVector::new(1, 2, vec![r(2.0), r(0.0)]).unwrap();
        let support = HiSupport::new(vec![(0, 0), (1, 0)]);
        let fit = h.restricted_least_squares(&y, &support).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.solution.get(0, 0).re - 1.0).abs() < 1e-12);
        assert!((fit.solution.get(1, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_least_squares_rejects_bad_supports() {
        let h = HierarchicalOperator::identity(1, 2);
        let y = MeasurementVector::zeros(1, 2);
        assert!(h.restricted_least_squares(&y, &HiSupport::new(vec![(0, 2)])).is_err());
        assert!(h.restricted_least_squares(&y, &HiSupport::new(vec![(1, 0)])).is_err());
    }

    #[test]
    fn gaussian_mixing_variance_and_determinism() {
        let mut rng = seeded(11);
        // 1/sqrt(16) = 0.25, 10^5 complex draws
        let a = gaussian_mixing(400, 250, 0.25, ScalarField::Complex, &mut rng).unwrap();
        let n = (a.slots() * a.n_blocks()) as f64;
        let var: f64 = (0..a.n_blocks())
            .flat_map(|c| a.matrix().column(c).iter().map(|v| v.norm_sqr()))
            .sum::<f64>()
            / n;
        assert!((var - 0.25).abs() < 0.05 * 0.25, "{var}");
        let re_var: f64 = (0..a.n_blocks())
            .flat_map(|c| a.matrix().column(c).iter().map(|v| v.re * v.re))
            .sum::<f64>()
            / n;
        assert!((re_var - 0.125).abs() < 0.05 * 0.125);

        let real = gaussian_matrix(400, 250, 2.0, ScalarField::Real, &mut rng).unwrap();
        let rv: f64 = (0..250).flat_map(|c| real.column(c).iter().map(|v| v.re * v.re)).sum::<f64>() / n;
        assert!((rv - 2.0).abs() < 0.1);

        let b1 = gaussian_mixing(3, 4, 1.0, ScalarField::Complex, &mut seeded(5)).unwrap();
        let b2 = gaussian_mixing(3, 4, 1.0, ScalarField::Complex, &mut seeded(5)).unwrap();
        assert_eq!(b1, b2);
        assert!(gaussian_mixing(3, 4, 0.0, ScalarField::Real, &mut rng).is_err());
    }

    #[test]
    fn gaussian_block_column_norms() {
        let mut rng = seeded(12);
        let mut total = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let b = gaussian_block(8, 1, ScalarField::Real, &mut rng).unwrap();
            total += linalg::norm_sqr(b.matrix().column(0));
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        let b1 = gaussian_block(4, 6, ScalarField::Complex, &mut seeded(3)).unwrap();
        let b2 = gaussian_block(4, 6, ScalarField::Complex, &mut seeded(3)).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn full_unsigned_dft_is_unitary() {
        let opts = DftOptions {
            sampling: RowSampling::WithoutReplacement,
            signs: RowSigns::None,
        };
        let b = subsampled_dft(16, 16, &opts, &mut seeded(1)).unwrap();
        let x: Vec<Scalar> = (0..16).map(|k| Scalar::new(k as f64, 1.0 - k as f64 * 0.3)).collect();
        let bx = b.matrix().mul_vec(&x);
        assert!((linalg::norm(&bx) - linalg::norm(&x)).abs() < 1e-12 * linalg::norm(&x));
        let gram = b.matrix().gram();
        for i in 0..16 {
            for j in 0..16 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - r(expect)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dft_rows_and_columns_are_normalized() {
        for signs in [RowSigns::Rademacher, RowSigns::Phase] {
            let opts = DftOptions { sampling: RowSampling::WithReplacement, signs };
            let (m, n) = (8, 32);
            let b = subsampled_dft(m, n, &opts, &mut seeded(4)).unwrap();
            for row in 0..m {
                let norm_sq: f64 = (0..n).map(|c| b.matrix().get(row, c).norm_sqr()).sum();
                assert!((norm_sq - n as f64 / m as f64).abs() < 1e-12);
            }
            // every entry has modulus m^{-1/2}, so columns have unit norm exactly
            for c in 0..n {
                assert!((linalg::norm_sqr(b.matrix().column(c)) - 1.0).abs() < 1e-12);
            }
        }
        assert!(subsampled_dft(5, 4, &DftOptions::default(), &mut seeded(0)).is_err());
    }

    #[test]
    fn dft_sampling_modes() {
        let opts = DftOptions { sampling: RowSampling::WithoutReplacement, signs: RowSigns::None };
        let b = subsampled_dft(8, 8, &opts, &mut seeded(2)).unwrap();
        // distinct rows: second column entries exp(-2πi a/8) pairwise different
        let col: Vec<Scalar> = b.matrix().column(1).to_vec();
        for i in 0..8 {
            for j in i + 1..8 {
                assert!((col[i] - col[j]).norm() > 1e-9);
            }
        }
        let b1 = subsampled_dft(4, 8, &DftOptions::default(), &mut seeded(6)).unwrap();
        let b2 = subsampled_dft(4, 8, &DftOptions::default(), &mut seeded(6)).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn descriptor_build_is_replayable() {
        let json = r#"{
            "slots": 3, "rows": 4, "block_dims": [8, 8], "field": "complex",
            "mixing": {"ensemble": "gaussian", "variance": "inverse_sqrt_blocks"},
            "blocks": {"ensemble": "subsampled_dft", "sampling": "without_replacement"},
            "seed": 17
        }"#;
        let d: OperatorDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(d.build().unwrap(), d.build().unwrap());
        let back: OperatorDescriptor = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        let bad = json.replace("\"seed\": 17", "\"seed\": 17, \"extra\": 1");
        assert!(serde_json::from_str::<OperatorDescriptor>(&bad).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn adjoint_identity(seed in any::<u64>(), dims in prop::collection::vec(1usize..5, 1..4),
                            slots in 1usize..4, m in 1usize..4, complex in any::<bool>()) {
            let field = if complex { ScalarField::Complex } else { ScalarField::Real };
            let h = random_operator(seed, &dims, slots, m, field);
            let x = random_vector(seed ^ 1, &dims, field);
            let mut rng = seeded(seed ^ 2);
            let y: Vec<Scalar> = (0..slots * m).map(|_| gaussian_entry(&mut rng, 1.0, field)).collect();
            let y = MeasurementVector::new(slots, m, y).unwrap();
            let hx = h.apply(&x).unwrap();
            let lhs = linalg::dot(y.as_slice(), hx.as_slice());
            let rhs = linalg::dot(h.adjoint_apply(&y).unwrap().as_flat(), x.as_flat());
            prop_assert!((lhs - rhs).norm() <= 1e-10 * hx.norm() * y.norm() + 1e-300);
        }

        #[test]
        fn linearity(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let dims = [3, 2, 4];
            let h = random_operator(seed, &dims, 2, 3, ScalarField::Complex);
            let x = random_vector(seed ^ 5, &dims, ScalarField::Complex);
            let z = random_vector(seed ^ 6, &dims, ScalarField::Complex);
            let combo: Vec<Scalar> = x.as_flat().iter().zip(z.as_flat()).map(|(a, b)| a * alpha + b * beta).collect();
            let combo = BlockVector::from_flat(&dims, combo, ScalarField::Complex).unwrap();
            let lhs = h.apply(&combo).unwrap();
            let (hx, hz) = (h.apply(&x).unwrap(), h.apply(&z).unwrap());
            let scale = hx.norm() + hz.norm();
            for ((l, a), b) in lhs.as_slice().iter().zip(hx.as_slice()).zip(hz.as_slice()) {
                prop_assert!((l - (a * alpha + b * beta)).norm() <= 1e-12 * scale);
            }
        }

        #[test]
        fn least_squares_residual_is_orthogonal(seed in any::<u64>(), iterative in any::<bool>()) {
            let dims = [5, 5, 5];
            let h = random_operator(seed, &dims, 3, 4, ScalarField::Complex);
            let mut rng = seeded(seed ^ 9);
            let y: Vec<Scalar> = (0..12).map(|_| gaussian_entry(&mut rng, 1.0, ScalarField::Complex)).collect();
            let y = MeasurementVector::new(3, 4, y).unwrap();
            let support = HiSupport::new(vec![(0, 0), (0, 3), (2, 1), (2, 4)]);
            let method = if iterative { LeastSquaresMethod::Iterative } else { LeastSquaresMethod::Direct };
            let opts = LeastSquaresOptions { method, ..Default::default() };
            let fit = h.restricted_least_squares_with(&y, &support, None, &opts).unwrap();
            let resid = y.minus(&h.apply(&fit.solution).unwrap());
            let grad = h.adjoint_apply(&resid).unwrap();
            let on_support: f64 = support.entries().iter().map(|&(i, k)| grad.get(i, k).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(on_support <= 1e-8 * y.norm());
            let off_support_zero = fit.solution.as_flat().iter().enumerate().all(|(idx, v)| {
                support.entries().iter().any(|&(i, k)| fit.solution.flat_index(i, k) == idx) || is_zero(v)
            });
            prop_assert!(off_support_zero);
        }
    }
}
