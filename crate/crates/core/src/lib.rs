pub mod clustering;
pub mod dataset;
pub mod flowgraph;
pub mod growthfit;
pub mod ingest;
pub mod mechanisms;
pub mod model;
pub mod simulator;
pub mod stats;
