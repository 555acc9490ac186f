//! HTTP JSON API and command-line front end over the `substrace` library.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod http;
pub mod snapshot;

pub use analysis::{AnalysisRequest, AnalysisResponse, PairDetailResponse, ProjectsResponse};
pub use error::{ApiError, ErrorBody};
pub use http::{router, AppState};
pub use snapshot::{Manifest, ResponseCache, Snapshot, SnapshotStore};
