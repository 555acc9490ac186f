//! Parses a transfers CSV, replays balances and prints daily role sets with
//! their fractions. Without an argument a small synthetic log is used.
//!
//! cargo run --example ingest_roles -- [transfers.csv] [start:end]

use std::fs::File;

use substrace::ingest::{parse_transfers, replay_roles, role_fractions};
use substrace::model::TimeWindow;
use substrace::simulator::{simulate, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let events = match args.next() {
        Some(path) => parse_transfers(File::open(path)?)?,
        None => simulate(&SimConfig::generated(3, 80, 20, 1))?.transfers,
    };
    let first = events.iter().map(|e| e.date()).min().ok_or("no transfers")?;
    let last = events.iter().map(|e| e.date()).max().ok_or("no transfers")?;
    let window: TimeWindow = match args.next() {
        Some(w) => w.parse()?,
        None => TimeWindow::new(first, last)?,
    };

    let out = replay_roles(&events, &window);
    println!("{} events, {} records, {} anomalies", events.len(), out.records.len(), out.anomalies.len());
    println!("project,date,buyers,sellers,holders,b,s,h");
    for r in &out.records {
        let (b, s, h) = match role_fractions(r) {
            Ok(f) => (format!("{:.3}", f.b), format!("{:.3}", f.s), format!("{:.3}", f.h)),
            Err(_) => Default::default(),
        };
        println!(
            "{},{},{},{},{},{b},{s},{h}",
            r.project,
            r.date,
            r.buyers.len(),
            r.sellers.len(),
            r.holders.len()
        );
    }
    for a in &out.anomalies {
        eprintln!("anomaly: {a:?}");
    }
    Ok(())
}
