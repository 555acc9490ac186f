//! Computes the four mechanism scores for every alive project in a window.
//!
//! cargo run --example mechanisms_window -- [data_dir] [start:end] [attr,attr,...]

use substrace::dataset::Dataset;
use substrace::mechanisms::{compute_window_scores, AttributeSelection};
use substrace::model::TimeWindow;
use substrace::simulator::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dataset = match args.next() {
        Some(dir) => Dataset::load(dir)?,
        None => {
            let dir = std::env::temp_dir().join("substrace-mechanisms");
            simulate(&SimConfig::generated(8, 400, 60, 7))?.write_to(&dir)?;
            Dataset::load(dir)?
        }
    };
    let window: TimeWindow = match args.next() {
        Some(w) => w.parse()?,
        None => dataset.span().ok_or("empty dataset")?,
    };
    let selection = match args.next() {
        Some(list) => AttributeSelection::parse_list(&list)?,
        None => AttributeSelection::all(),
    };

    let analysis = compute_window_scores(&dataset, &window, &selection)?;
    println!("window {window}: {} alive, {} inactive", analysis.alive.len(), analysis.inactive.len());
    println!("{:<44} {:>9} {:>9} {:>9} {:>9}", "project", "recency", "pa", "propens.", "impact");
    for s in &analysis.scores {
        println!(
            "{:<44} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            s.project.to_string(),
            s.recency,
            s.global_pa,
            s.propensity,
            s.impact
        );
    }
    let total: f64 = analysis.scores.iter().map(|s| s.impact_raw).sum();
    println!("sum of raw impacts {total:.3e}");
    Ok(())
}
