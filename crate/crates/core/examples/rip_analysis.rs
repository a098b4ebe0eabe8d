//! Exact RIP and HiRIP constants of a small Gaussian operator against the
//! composition bound, plus a Monte-Carlo lower bound.
//!
//!     cargo run --release --example rip_analysis

use hisparse::analysis::{check_composition_bound, monte_carlo_hi_rip, DEFAULT_ENUMERATION_CAP};
use hisparse::model::{ScalarField, SparsityPattern};
use hisparse::operators::{gaussian_block, gaussian_mixing};
use hisparse::rng::seeded;
use hisparse::HierarchicalOperator;

fn main() -> hisparse::Result<()> {
    let (slots, n_blocks, m, n) = (3, 4, 3, 4);
    let pattern = SparsityPattern::uniform(n_blocks, 2, 1, n)?;
    for seed in 0..5 {
        let mut rng = seeded(seed);
        let a = gaussian_mixing(slots, n_blocks, 1.0 / slots as f64, ScalarField::Real, &mut rng)?;
        let blocks = (0..n_blocks)
            .map(|_| gaussian_block(m, n, ScalarField::Real, &mut rng))
            .collect::<hisparse::Result<Vec<_>>>()?;
        let h = HierarchicalOperator::new(a, blocks)?;
        let check = check_composition_bound(&h, &pattern, DEFAULT_ENUMERATION_CAP)?;
        let sampled = monte_carlo_hi_rip(&h, &pattern, 2000, &mut rng)?;
        println!(
            "seed {seed}: δ(H) = {:.3} (sampled ≥ {:.3}), δ(A) = {:.3}, sup δ(B_i) = {:.3}, bound {:.3}",
            check.hierarchical,
            sampled.value,
            check.mixing,
            check.blocks.iter().copied().fold(0.0, f64::max),
            check.bound
        );
    }
    Ok(())
}
