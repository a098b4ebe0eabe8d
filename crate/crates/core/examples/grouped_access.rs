//! One cell of the grouped random access experiment, compared with the
//! ungrouped baseline.
//!
//!     cargo run --release --example grouped_access -- [N] [sigma] [trials]

use std::time::Instant;

use hisparse::simulation::{run_trial, summarize, AccessConfig};

fn main() -> hisparse::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let groups = args.first().copied().unwrap_or(16);
    let sigma = args.get(1).copied().unwrap_or(24);
    let trials = args.get(2).copied().unwrap_or(5);
    let cfg = AccessConfig { trials, ..AccessConfig::reference(groups, sigma) };
    cfg.validate()?;

    let start = Instant::now();
    let mut records = Vec::new();
    for t in 0..trials {
        let rec = run_trial(&cfg, 0, t, cfg.seed)?;
        println!(
            "trial {t}: {} users, {} collided, {} detected (baseline {}), {} iterations",
            rec.total_users, rec.collided_users, rec.detected_users, rec.baseline_detected, rec.iterations
        );
        records.push(rec);
    }
    let s = &summarize(&records)[0];
    println!(
        "N = {groups}, sigma = {sigma}: mean detected {:.2} ± {:.2}, pooled baseline {:.2}, analytic {:.2} ({:.1?})",
        s.mean_detected,
        s.stderr_detected,
        s.mean_baseline,
        s.analytic_baseline,
        start.elapsed()
    );
    Ok(())
}
