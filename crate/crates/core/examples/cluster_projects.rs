//! Clusters window attribute vectors with K-means and with a diagonal GMM and
//! reports how much the two partitions agree.
//!
//! cargo run --example cluster_projects -- [k] [seed]

use substrace::clustering::{adjusted_rand_index, cluster, ClusterMethod, ClusterParams};
use substrace::dataset::Dataset;
use substrace::mechanisms::{compute_window_scores, AttributeSelection};
use substrace::simulator::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let dir = std::env::temp_dir().join("substrace-cluster");
    simulate(&SimConfig::generated(12, 600, 60, 5))?.write_to(&dir)?;
    let dataset = Dataset::load(&dir)?;
    let span = dataset.span().ok_or("empty dataset")?;
    let analysis = compute_window_scores(&dataset, &span, &AttributeSelection::all())?;
    let params = ClusterParams {
        k,
        seed,
        ..ClusterParams::default()
    };

    let mut labelings = Vec::new();
    for method in [ClusterMethod::KMeans, ClusterMethod::Gmm] {
        let result = cluster(method, &analysis.attributes, &params)?;
        println!(
            "{method}: {} iterations, converged {}, final objective {:.4}",
            result.iterations_run,
            result.converged,
            result.trace.last().copied().unwrap_or(f64::NAN)
        );
        for g in &result.group_order {
            let members: Vec<String> = result
                .assignments
                .iter()
                .filter(|(_, &a)| a == *g)
                .map(|(p, _)| p.to_string())
                .collect();
            println!("  group {g}: {}", members.join(" "));
        }
        labelings.push(analysis.attributes.iter().map(|v| result.group_of(&v.project).unwrap()).collect::<Vec<_>>());
    }
    println!("ARI(kmeans, gmm) = {:.4}", adjusted_rand_index(&labelings[0], &labelings[1])?);
    Ok(())
}
