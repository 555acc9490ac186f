//! Runs a desk-scale synthetic market, writes its files, reloads them and
//! checks how well the estimated substitution rates rank the true flows.
//!
//! cargo run --example simulate_market -- [seed] [out_dir]

use std::time::Instant;

use substrace::dataset::Dataset;
use substrace::mechanisms::{compute_window_scores, AttributeSelection};
use substrace::simulator::{evaluate_recovery, simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(42);
    let out = args.next().map(std::path::PathBuf::from);
    let started = Instant::now();

    let config = SimConfig::desk_scale(seed);
    let run = simulate(&config)?;
    let tmp;
    let dir = match &out {
        Some(d) => d.as_path(),
        None => {
            tmp = std::env::temp_dir().join(format!("substrace-sim-{seed}"));
            tmp.as_path()
        }
    };
    run.write_to(dir)?;
    let dataset = Dataset::load(dir)?;
    let span = dataset.span().ok_or("empty run")?;
    let analysis = compute_window_scores(&dataset, &span, &AttributeSelection::all())?;
    let report = evaluate_recovery(&run.ground_truth, &analysis.pi)?;

    println!("files in {}", dir.display());
    println!(
        "{} transfers, {} migration records, {} migrants",
        run.transfers.len(),
        run.ground_truth.migrations.len(),
        run.ground_truth.migrations.iter().map(|r| r.migrants as u64).sum::<u64>()
    );
    println!("pooled spearman over {} pairs: {:.4}", report.pairs, report.pooled.value);
    for s in &report.per_source {
        match &s.rho {
            Some(r) => println!("  {}  {:.4}", s.project, r.value),
            None => println!("  {}  n/a", s.project),
        }
    }
    println!("elapsed {:.2?}", started.elapsed());
    Ok(())
}
