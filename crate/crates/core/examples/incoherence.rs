//! Pairwise incoherence of independent subsampled DFT blocks shrinks as
//! more rows are kept.
//!
//!     cargo run --release --example incoherence

use hisparse::analysis::{pairwise_incoherence, IncoherenceOptions};
use hisparse::operators::{subsampled_dft, DftOptions};
use hisparse::rng::seeded;

fn main() -> hisparse::Result<()> {
    let (n, sigma, pairs) = (64, 2, 10);
    let opts = IncoherenceOptions::default();
    let mut rng = seeded(3);
    for m in [8, 16, 32, 64] {
        let mut values = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let a = subsampled_dft(m, n, &DftOptions::default(), &mut rng)?;
            let b = subsampled_dft(m, n, &DftOptions::default(), &mut rng)?;
            values.push(pairwise_incoherence(a.matrix(), b.matrix(), sigma, &opts)?.value);
        }
        values.sort_by(f64::total_cmp);
        println!("m = {m:2}: min {:.3}, median {:.3}, max {:.3}", values[0], values[pairs / 2], values[pairs - 1]);
    }
    Ok(())
}
