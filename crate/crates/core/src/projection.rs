//! Best `(s, σ)`-sparse approximation.
//!
//! Each block is hard-thresholded to its `σ_i` largest-modulus entries, then
//! the `s` blocks whose *thresholded* energy is largest are kept. Both stages
//! are exact for the ℓ2 objective. Ties resolve to the lower index.

use std::cmp::Ordering;

use crate::model::{is_zero, BlockVector, HiSupport, Scalar, ScalarField, SparsityPattern};
use crate::{Error, Result};

/// Keeps the `sigma` entries of largest modulus. Returns the thresholded
/// vector and the kept indices in increasing order.
pub fn block_threshold(v: &[Scalar], sigma: usize) -> Result<(Vec<Scalar>, Vec<usize>)> {
    if sigma == 0 || sigma > v.len() {
        return Err(Error::InvalidArgument(format!(
            "block sparsity {sigma} must lie in 1..={}",
            v.len()
        )));
    }
    let kept = largest_indices(v, sigma);
    let mut out = vec![Scalar::new(0.0, 0.0); v.len()];
    for &k in &kept {
        out[k] = v[k];
    }
    Ok((out, kept))
}

/// Indices of the `count` largest-modulus entries, by partial selection.
fn largest_indices(v: &[Scalar], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    if count < v.len() {
        // total order: larger modulus first, then smaller index
        let cmp = |a: &usize, b: &usize| -> Ordering {
            v[*b].norm_sqr()
                .total_cmp(&v[*a].norm_sqr())
                .then(a.cmp(b))
        };
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable();
    idx
}

/// Best `(s, σ)`-sparse approximation of `x` and its support.
///
/// The support lists the non-zero entries of the returned vector only.
pub fn project_hi_sparse(
    x: &BlockVector,
    pattern: &SparsityPattern,
) -> Result<(BlockVector, HiSupport)> {
    x.check_dims(pattern.block_dims())?;
    let n_blocks = pattern.n_blocks();
    let mut kept_per_block = Vec::with_capacity(n_blocks);
    let mut energy = Vec::with_capacity(n_blocks);
    for (i, block) in x.blocks().enumerate() {
        let kept = largest_indices(block, pattern.sigma()[i]);
        energy.push(kept.iter().map(|&k| block[k].norm_sqr()).sum::<f64>());
        kept_per_block.push(kept);
    }

    let mut order: Vec<usize> = (0..n_blocks).collect();
    let s = pattern.s();
    if s < n_blocks {
        order.select_nth_unstable_by(s - 1, |a, b| {
            energy[*b].total_cmp(&energy[*a]).then(a.cmp(b))
        });
        order.truncate(s);
    }
    order.sort_unstable();

    let mut out = BlockVector::zeros(pattern.block_dims(), x.field());
    let mut entries = Vec::new();
    for &i in &order {
        for &k in &kept_per_block[i] {
            let v = x.get(i, k);
            if !is_zero(&v) {
                out.as_flat_mut()[x.flat_index(i, k)] = v;
                entries.push((i, k));
            }
        }
    }
    if x.field() == ScalarField::Real {
        out.set_field(ScalarField::Real);
    }
    Ok((out, HiSupport::new(entries)))
}
