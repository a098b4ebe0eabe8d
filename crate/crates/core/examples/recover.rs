//! HiHTP on a Gaussian hierarchical operator.
//!
//!     cargo run --release --example recover -- [trials]

use hisparse::analysis::random_hi_sparse_unit;
use hisparse::model::{support_of, ScalarField, SparsityPattern};
use hisparse::operators::{gaussian_block, gaussian_mixing};
use hisparse::rng::{derive_seed, seeded};
use hisparse::solver::{hihtp, SolverConfig, StepRule};
use hisparse::HierarchicalOperator;

fn main() -> hisparse::Result<()> {
    let trials: u64 = std::env::args().nth(1).map_or(20, |a| a.parse().expect("trial count"));
    let (n_blocks, n, slots, m) = (32, 64, 20, 24);
    let pattern = SparsityPattern::uniform(n_blocks, 4, 4, n)?;

    for field in [ScalarField::Real, ScalarField::Complex] {
        for step in [StepRule::Constant { tau: 1.0 }, StepRule::AdaptiveLineSearch] {
            let cfg = SolverConfig::new(pattern.clone()).with_step(step).with_tolerance(1e-8);
            let (mut exact, mut supports, mut iterations) = (0, 0, 0);
            for t in 0..trials {
                let mut rng = seeded(derive_seed(42, 0, t));
                let a = gaussian_mixing(slots, n_blocks, 1.0 / slots as f64, field, &mut rng)?;
                let blocks = (0..n_blocks)
                    .map(|_| gaussian_block(m, n, field, &mut rng))
                    .collect::<hisparse::Result<Vec<_>>>()?;
                let h = HierarchicalOperator::new(a, blocks)?;
                let x0 = random_hi_sparse_unit(&pattern, field, &mut rng);
                let res = hihtp(&h, &h.apply(&x0)?, &cfg)?;
                iterations += res.iterations;
                exact += usize::from(res.estimate.relative_error_to(&x0) <= 1e-6);
                supports += usize::from(res.support == support_of(&x0));
            }
            println!(
                "{field:?}, {step:?}: {exact}/{trials} exact, {supports}/{trials} supports, {:.1} iterations on average",
                iterations as f64 / trials as f64
            );
        }
    }
    Ok(())
}
