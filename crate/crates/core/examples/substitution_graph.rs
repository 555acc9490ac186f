//! Builds the substitution flow graph for a window and prints it as JSON.
//!
//! cargo run --example substitution_graph -- [edge_threshold] > graph.json

use substrace::clustering::{cluster, ClusterMethod, ClusterParams};
use substrace::dataset::Dataset;
use substrace::flowgraph::{build_graph, ego_network};
use substrace::mechanisms::{compute_window_scores, AttributeSelection};
use substrace::simulator::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let threshold: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.0);
    let dir = std::env::temp_dir().join("substrace-graph");
    simulate(&SimConfig::generated(10, 500, 60, 9))?.write_to(&dir)?;
    let dataset = Dataset::load(&dir)?;
    let span = dataset.span().ok_or("empty dataset")?;

    let analysis = compute_window_scores(&dataset, &span, &AttributeSelection::all())?;
    let params = ClusterParams {
        k: 3,
        ..ClusterParams::default()
    };
    let clusters = cluster(ClusterMethod::KMeans, &analysis.attributes, &params)?;
    let graph = build_graph(&analysis, &clusters, threshold, 1.0)?;

    let top = &graph.ring[0];
    let ego = ego_network(&graph, top)?;
    eprintln!(
        "{} nodes, {} edges; largest project {top} touches {} edges",
        graph.nodes.len(),
        graph.edges.len(),
        ego.edges.len()
    );
    println!("{}", serde_json::to_string_pretty(&graph)?);
    Ok(())
}
