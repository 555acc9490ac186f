//! Simulates a small market, loads it as a snapshot and either answers one
//! analysis request in process or serves the API.
//!
//! cargo run -p substrace-server --example serve_simulated            # one request
//! cargo run -p substrace-server --example serve_simulated -- serve   # listen on :8080

use std::sync::Arc;

use substrace::simulator::{simulate, SimConfig};
use substrace_server::http::serve;
use substrace_server::{AnalysisRequest, AppState, Snapshot};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("substrace-serve");
    simulate(&SimConfig::generated(10, 600, 60, 21))?.write_to(&dir)?;
    let snapshot = Snapshot::load(&dir)?;

    if std::env::args().nth(1).as_deref() == Some("serve") {
        let state = Arc::new(AppState::new(Some(snapshot), Some(dir)));
        let runtime = tokio::runtime::Runtime::new()?;
        runtime.block_on(serve(state, "127.0.0.1", 8080))?;
        return Ok(());
    }

    let request = AnalysisRequest {
        k: 3,
        ..AnalysisRequest::default()
    };
    let body = snapshot.analysis_body(&request.validate()?)?;
    let value: serde_json::Value = serde_json::from_slice(&body)?;
    println!("{} bytes", body.len());
    println!("window {}", value["window"]);
    println!("alive {}", value["alive"].as_array().map_or(0, Vec::len));
    println!("group sizes {}", value["clusters"]["group_sizes"]);
    println!("edges {}", value["graph"]["edges"].as_array().map_or(0, Vec::len));
    Ok(())
}
