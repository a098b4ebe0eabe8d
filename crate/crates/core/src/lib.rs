//! Recovery of hierarchically sparse signals from hierarchical measurement
//! operators.
//!
//! A hierarchical measurement operator maps a block vector
//! `x = (x_1, ..., x_N)` to `sum_i a_i ⊗ (B_i x_i)`, where `a_i` are the
//! columns of an `M × N` mixing matrix and `B_i` are `m × n_i` block
//! operators. A signal is `(s, σ)`-sparse when at most `s` blocks are
//! non-zero and block `i` carries at most `σ_i` non-zero entries.
//!
//! The crate provides:
//!
//! * [`model`]: sparsity patterns, block vectors, hierarchical supports.
//! * [`operators`]: the operator itself, its adjoint, restricted least
//!   squares, and the random ensembles (Gaussian, subsampled DFT).
//! * [`projection`]: the exact best `(s, σ)`-sparse approximation.
//! * [`solver`]: hierarchical hard thresholding pursuit (HiHTP).
//! * [`analysis`]: exact and Monte-Carlo (Hi)RIP constants and pairwise
//!   incoherence of block operators.
//! * [`simulation`]: the grouped random access user-detection harness.
//! * [`cli`]: the command-line front end used by the `hisparse` binary.
//!
//! ```
//! use hisparse::model::{BlockVector, SparsityPattern};
//! use hisparse::projection::project_hi_sparse;
//!
//! let x = BlockVector::from_real_blocks(vec![vec![3.0, 0.0, 1.0], vec![0.0, 2.0, 0.0]]);
//! let pattern = SparsityPattern::new(1, vec![2, 1], vec![3, 3]).unwrap();
//! let (best, support) = project_hi_sparse(&x, &pattern).unwrap();
//! assert_eq!(support.len(), 2);
//! assert_eq!(best.block(1), &[0.0.into(), 0.0.into(), 0.0.into()]);
//! ```

pub mod analysis;
pub mod cli;
mod combinatorics;
mod error;
mod linalg;
pub mod matrix;
pub mod model;
pub mod operators;
pub mod projection;
pub mod rng;
pub mod simulation;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use model::{BlockVector, HiSupport, MeasurementVector, Scalar, ScalarField, SparsityPattern};
pub use operators::HierarchicalOperator;
