//! Core domain types: sparsity patterns, block vectors, hierarchical supports
//! and measurement vectors.
//!
//! All indices are 0-based. Zero detection is exact (`== 0`); callers that
//! need a tolerance must threshold first.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Scalar type of every vector and matrix in the crate. Real data is stored
/// with a zero imaginary part and tagged [`ScalarField::Real`].
pub type Scalar = Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarField {
    Real,
    Complex,
}

impl ScalarField {
    /// The smallest field containing both.
    pub fn join(self, other: ScalarField) -> ScalarField {
        if self == ScalarField::Complex || other == ScalarField::Complex {
            ScalarField::Complex
        } else {
            ScalarField::Real
        }
    }

    pub(crate) fn of_values(values: &[Scalar]) -> ScalarField {
        if values.iter().all(|v| v.im == 0.0) {
            ScalarField::Real
        } else {
            ScalarField::Complex
        }
    }
}

/// The two-level sparsity hierarchy `(s, σ)` together with the ambient
/// block dimensions `n_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPattern", deny_unknown_fields)]
pub struct SparsityPattern {
    s: usize,
    sigma: Vec<usize>,
    block_dims: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPattern {
    s: usize,
    sigma: Vec<usize>,
    block_dims: Vec<usize>,
}

impl TryFrom<RawPattern> for SparsityPattern {
    type Error = Error;

    fn try_from(raw: RawPattern) -> Result<Self> {
        SparsityPattern::new(raw.s, raw.sigma, raw.block_dims)
    }
}

impl SparsityPattern {
    pub fn new(s: usize, sigma: Vec<usize>, block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidPattern("at least one block is required".into()));
        }
        if sigma.len() != block_dims.len() {
            return Err(Error::InvalidPattern(format!(
                "{} block sparsities given for {} blocks",
                sigma.len(),
                block_dims.len()
            )));
        }
        if s == 0 || s > block_dims.len() {
            return Err(Error::InvalidPattern(format!(
                "block sparsity s = {s} must lie in 1..={}",
                block_dims.len()
            )));
        }
        for (i, (&sig, &dim)) in sigma.iter().zip(&block_dims).enumerate() {
            if sig == 0 || sig > dim {
                return Err(Error::InvalidPattern(format!(
                    "block {i}: sparsity {sig} must lie in 1..={dim}"
                )));
            }
        }
        Ok(SparsityPattern { s, sigma, block_dims })
    }

    /// `n_blocks` blocks of dimension `n`, each allowed `sigma` non-zeros.
    pub fn uniform(n_blocks: usize, s: usize, sigma: usize, n: usize) -> Result<Self> {
        SparsityPattern::new(s, vec![sigma; n_blocks], vec![n; n_blocks])
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn sigma(&self) -> &[usize] {
        &self.sigma
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn n_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn max_sigma(&self) -> usize {
        self.sigma.iter().copied().max().unwrap_or(0)
    }

    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }
}

/// A signal `x = (x_1, ..., x_N)`, stored flat with block offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    data: Vec<Scalar>,
    offsets: Vec<usize>,
    field: ScalarField,
}

impl BlockVector {
    pub fn zeros(block_dims: &[usize], field: ScalarField) -> Self {
        let offsets = offsets_of(block_dims);
        let total = *offsets.last().unwrap();
        BlockVector {
            data: vec![Scalar::new(0.0, 0.0); total],
            offsets,
            field,
        }
    }

    /// Builds a vector from flat data. A `Real` tag requires every imaginary
    /// part to be zero.
    pub fn from_flat(block_dims: &[usize], data: Vec<Scalar>, field: ScalarField) -> Result<Self> {
        let offsets = offsets_of(block_dims);
        if *offsets.last().unwrap() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for block dimensions summing to {}",
                data.len(),
                offsets.last().unwrap()
            )));
        }
        if field == ScalarField::Real && data.iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidArgument(
                "real-tagged vector has a non-zero imaginary part".into(),
            ));
        }
        Ok(BlockVector { data, offsets, field })
    }

    pub fn from_blocks(blocks: Vec<Vec<Scalar>>) -> Self {
        let dims: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let data: Vec<Scalar> = blocks.into_iter().flatten().collect();
        let field = ScalarField::of_values(&data);
        BlockVector {
            data,
            offsets: offsets_of(&dims),
            field,
        }
    }

    pub fn from_real_blocks(blocks: Vec<Vec<f64>>) -> Self {
        let dims: Vec<usize> = blocks.iter().map(Vec::len).collect();
        let data = blocks
            .into_iter()
            .flatten()
            .map(|v| Scalar::new(v, 0.0))
            .collect();
        BlockVector {
            data,
            offsets: offsets_of(&dims),
            field: ScalarField::Real,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn block(&self, i: usize) -> &[Scalar] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [Scalar] {
        &mut self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[Scalar]> + '_ {
        self.offsets.windows(2).map(move |w| &self.data[w[0]..w[1]])
    }

    /// Flat offset of entry `k` of block `i`.
    pub fn flat_index(&self, i: usize, k: usize) -> usize {
        self.offsets[i] + k
    }

    pub fn get(&self, i: usize, k: usize) -> Scalar {
        self.data[self.offsets[i] + k]
    }

    pub fn set(&mut self, i: usize, k: usize, value: Scalar) {
        if value.im != 0.0 {
            self.field = ScalarField::Complex;
        }
        self.data[self.offsets[i] + k] = value;
    }

    pub fn as_flat(&self) -> &[Scalar] {
        &self.data
    }

    pub(crate) fn as_flat_mut(&mut self) -> &mut [Scalar] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<Scalar> {
        self.data
    }

    pub fn total_dim(&self) -> usize {
        self.data.len()
    }

    pub fn field(&self) -> ScalarField {
        self.field
    }

    pub(crate) fn set_field(&mut self, field: ScalarField) {
        self.field = field;
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn conforms_to(&self, block_dims: &[usize]) -> bool {
        self.n_blocks() == block_dims.len()
            && self
                .offsets
                .windows(2)
                .zip(block_dims)
                .all(|(w, &d)| w[1] - w[0] == d)
    }

    pub(crate) fn check_dims(&self, block_dims: &[usize]) -> Result<()> {
        if self.conforms_to(block_dims) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "vector has block dimensions {:?}, expected {:?}",
                self.block_dims(),
                block_dims
            )))
        }
    }

    /// Multiplies every entry by `alpha`.
    pub fn scaled(&self, alpha: Scalar) -> BlockVector {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= alpha;
        }
        out.field = self.field.join(if alpha.im == 0.0 {
            ScalarField::Real
        } else {
            ScalarField::Complex
        });
        out
    }

    /// Copy of `self` with every entry outside `support` set to zero.
    pub fn restricted_to(&self, support: &HiSupport) -> BlockVector {
        let mut out = BlockVector {
            data: vec![Scalar::new(0.0, 0.0); self.data.len()],
            offsets: self.offsets.clone(),
            field: self.field,
        };
        for &(i, k) in support.entries() {
            let idx = self.offsets[i] + k;
            out.data[idx] = self.data[idx];
        }
        out
    }

    /// `‖self − other‖ / ‖other‖`, or the absolute distance when `other` is zero.
    pub fn relative_error_to(&self, other: &BlockVector) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let reference = other.norm();
        if reference == 0.0 {
            diff
        } else {
            diff / reference
        }
    }
}

fn offsets_of(block_dims: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(block_dims.len() + 1);
    let mut acc = 0;
    offsets.push(0);
    for &d in block_dims {
        acc += d;
        offsets.push(acc);
    }
    offsets
}

/// One serialized entry: a bare number for real data, `[re, im]` for complex.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonEntry {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonBlockVector {
    field: ScalarField,
    block_dims: Vec<usize>,
    data: Vec<JsonEntry>,
}

impl Serialize for BlockVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let data = self
            .data
            .iter()
            .map(|v| match self.field {
                ScalarField::Real => JsonEntry::Real(v.re),
                ScalarField::Complex => JsonEntry::Complex([v.re, v.im]),
            })
            .collect();
        JsonBlockVector {
            field: self.field,
            block_dims: self.block_dims(),
            data,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlockVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = JsonBlockVector::deserialize(deserializer)?;
        let data = raw
            .data
            .into_iter()
            .map(|e| match e {
                JsonEntry::Real(re) => Scalar::new(re, 0.0),
                JsonEntry::Complex([re, im]) => Scalar::new(re, im),
            })
            .collect();
        BlockVector::from_flat(&raw.block_dims, data, raw.field).map_err(serde::de::Error::custom)
    }
}

/// A set of `(block, inner index)` pairs, kept sorted and deduplicated so
/// that equality is set equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct HiSupport {
    entries: Vec<(usize, usize)>,
}

impl From<Vec<(usize, usize)>> for HiSupport {
    fn from(entries: Vec<(usize, usize)>) -> Self {
        HiSupport::new(entries)
    }
}

impl From<HiSupport> for Vec<(usize, usize)> {
    fn from(s: HiSupport) -> Self {
        s.entries
    }
}

impl FromIterator<(usize, usize)> for HiSupport {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        HiSupport::new(iter.into_iter().collect())
    }
}

impl HiSupport {
    pub fn new(mut entries: Vec<(usize, usize)>) -> Self {
        entries.sort_unstable();
        entries.dedup();
        HiSupport { entries }
    }

    pub fn empty() -> Self {
        HiSupport::default()
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, block: usize, inner: usize) -> bool {
        self.entries.binary_search(&(block, inner)).is_ok()
    }

    /// Inner indices grouped by block, blocks in increasing order.
    pub fn by_block(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &(i, k) in &self.entries {
            map.entry(i).or_default().push(k);
        }
        map
    }

    pub fn active_blocks(&self) -> Vec<usize> {
        let mut blocks: Vec<usize> = self.entries.iter().map(|&(i, _)| i).collect();
        blocks.dedup();
        blocks
    }

    /// Whether every vector supported here is `(s, σ)`-sparse for `pattern`,
    /// with all indices inside the pattern's block dimensions.
    pub fn is_admissible(&self, pattern: &SparsityPattern) -> bool {
        let groups = self.by_block();
        groups.len() <= pattern.s()
            && groups.iter().all(|(&i, ks)| {
                i < pattern.n_blocks()
                    && ks.len() <= pattern.sigma()[i]
                    && ks.iter().all(|&k| k < pattern.block_dims()[i])
            })
    }
}

impl fmt::Display for HiSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, (i, k)) in self.entries.iter().enumerate() {
            if n > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({i},{k})")?;
        }
        write!(f, "}}")
    }
}

/// `y ∈ K^M ⊗ K^m`, stored flat with slot `j`, row `k` at `j·m + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    data: Vec<Scalar>,
    slots: usize,
    rows: usize,
}

impl MeasurementVector {
    pub fn new(slots: usize, rows: usize, data: Vec<Scalar>) -> Result<Self> {
        if data.len() != slots * rows {
            return Err(Error::DimensionMismatch(format!(
                "measurement vector of length {} for {slots} slots of {rows} rows",
                data.len()
            )));
        }
        Ok(MeasurementVector { data, slots, rows })
    }

    pub fn zeros(slots: usize, rows: usize) -> Self {
        MeasurementVector {
            data: vec![Scalar::new(0.0, 0.0); slots * rows],
            slots,
            rows,
        }
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slot(&self, j: usize) -> &[Scalar] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[Scalar] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Scalar] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Scalar> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.data)
    }

    /// `self − other`, entrywise.
    pub fn minus(&self, other: &MeasurementVector) -> MeasurementVector {
        MeasurementVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            slots: self.slots,
            rows: self.rows,
        }
    }
}

/// Whether `x` is `(s, σ)`-sparse for `pattern`.
pub fn is_hi_sparse(x: &BlockVector, pattern: &SparsityPattern) -> Result<bool> {
    x.check_dims(pattern.block_dims())?;
    let mut nonzero_blocks = 0;
    for (i, block) in x.blocks().enumerate() {
        let nnz = block.iter().filter(|v| !is_zero(v)).count();
        if nnz > 0 {
            nonzero_blocks += 1;
            if nnz > pattern.sigma()[i] {
                return Ok(false);
            }
        }
    }
    Ok(nonzero_blocks <= pattern.s())
}

/// Exact support `{(i, k) : x_i[k] ≠ 0}`.
pub fn support_of(x: &BlockVector) -> HiSupport {
    let mut entries = Vec::new();
    for (i, block) in x.blocks().enumerate() {
        for (k, v) in block.iter().enumerate() {
            if !is_zero(v) {
                entries.push((i, k));
            }
        }
    }
    HiSupport { entries }
}

#[inline]
pub(crate) fn is_zero(v: &Scalar) -> bool {
    v.re == 0.0 && v.im == 0.0
}
