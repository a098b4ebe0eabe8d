//! Best (s, σ)-sparse approximation of a small block vector.
//!
//!     cargo run --example projection

use hisparse::model::{BlockVector, SparsityPattern};
use hisparse::projection::{block_threshold, project_hi_sparse};

fn main() -> hisparse::Result<()> {
    let x = BlockVector::from_real_blocks(vec![
        vec![1.0, 1.0, 1.0],
        vec![1.5, 0.0, 0.0],
        vec![0.2, -3.0, 0.1],
    ]);
    // two blocks, one entry each
    let pattern = SparsityPattern::new(2, vec![1, 1, 1], vec![3, 3, 3])?;

    for (i, block) in x.blocks().enumerate() {
        let (_, kept) = block_threshold(block, 1)?;
        println!("block {i}: keeps {kept:?}");
    }
    let (best, support) = project_hi_sparse(&x, &pattern)?;
    // block 0 has the larger full norm, block 1 the larger thresholded one
    println!("support {support}");
    println!("projection {}", serde_json::to_string(&best).unwrap());
    println!("error {:.4}", x.as_flat().iter().zip(best.as_flat()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt());
    Ok(())
}
