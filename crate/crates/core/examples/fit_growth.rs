//! Fits the three growth models to each project's cumulative holder curve.
//!
//! cargo run --example fit_growth -- [data_dir]

use substrace::dataset::Dataset;
use substrace::growthfit::{fit, holder_curve, GrowthModel};
use substrace::simulator::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = match std::env::args().nth(1) {
        Some(dir) => Dataset::load(dir)?,
        None => {
            let dir = std::env::temp_dir().join("substrace-fit");
            simulate(&SimConfig::generated(5, 400, 90, 3))?.write_to(&dir)?;
            Dataset::load(dir)?
        }
    };
    let until = dataset.span().ok_or("empty dataset")?.end;

    for project in dataset.projects() {
        let curve = match holder_curve(&dataset, &project.id, until) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}: {e}", project.id);
                continue;
            }
        };
        println!("{} ({} points)", project.name, curve.values.len());
        for model in GrowthModel::ALL {
            match fit(&curve, model, None, 0) {
                Ok(f) => {
                    let params: Vec<String> = model
                        .param_names()
                        .iter()
                        .zip(&f.params)
                        .map(|(n, v)| format!("{n}={v:.5}"))
                        .collect();
                    println!("  {:<9} R²={:.4}  {}", model.to_string(), f.r_squared, params.join(" "));
                }
                Err(e) => println!("  {:<9} {e}", model.to_string()),
            }
        }
    }
    Ok(())
}
