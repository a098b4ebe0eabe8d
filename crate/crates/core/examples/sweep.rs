//! A reduced grouped random access sweep written as CSV to stdout.
//!
//!     cargo run --release --example sweep > sweep.csv

use hisparse::simulation::{run_sweep, summarize, write_csv, SweepConfig};

fn main() -> hisparse::Result<()> {
    let sweep = SweepConfig {
        groups: vec![8, 16],
        sigma: vec![16, 32],
        trials: 3,
        ..SweepConfig::reference()
    };
    let outcome = run_sweep(&sweep, None)?;
    write_csv(std::io::stdout().lock(), &outcome.records)?;
    for c in summarize(&outcome.records) {
        eprintln!(
            "N = {:2}, σ = {}: detected {:.1}, baseline {:.1} (analytic {:.1})",
            c.groups, c.sigma, c.mean_detected, c.mean_baseline, c.analytic_baseline
        );
    }
    Ok(())
}
