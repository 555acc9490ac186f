//! File-based ingest: the four CSV datasets, balance replay into daily
//! buyer/seller/holder roles, and social popularity.

mod csv_io;
mod replay;
mod social;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProjectId, WalletAddress};

pub use csv_io::{
    parse_daily_stats, parse_projects, parse_social, parse_transfers, write_daily_stats,
    write_projects, write_social, write_transfers, DAILY_STATS_HEADER, PROJECTS_HEADER,
    SOCIAL_HEADER, TRANSFERS_HEADER,
};
pub use replay::{
    replay_roles, role_fractions, DailyRoleRecord, HoldSpan, ProjectRoles, ReplayAnomaly,
    ReplayOutput, RoleFractions, RoleIndex, WalletId, WalletInterner,
};
pub use social::{popularity, PopularityWeights};

pub use crate::stats::{pearson_correlation, Correlation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: schema error: {message}")]
    SchemaError { line: u64, message: String },
    #[error("line {line}: bad value: {message}")]
    ValueError { line: u64, message: String },
    #[error("line {line}: duplicate record for {project} on {date}")]
    DuplicateRecord {
        line: u64,
        project: ProjectId,
        date: NaiveDate,
    },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("unknown project {0}")]
    UnknownProject(ProjectId),
    #[error("duplicate project {0}")]
    DuplicateProject(ProjectId),
    #[error("project {project} launches on {launch} after its first transfer on {first_transfer}")]
    LaunchAfterFirstTransfer {
        project: ProjectId,
        launch: NaiveDate,
        first_transfer: NaiveDate,
    },
    #[error("negative weight for {0}")]
    InvalidWeight(&'static str),
    #[error("no buyers, sellers or holders on this day")]
    EmptyDay,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One on-chain token movement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub project: ProjectId,
    pub timestamp: DateTime<Utc>,
    pub from: WalletAddress,
    pub to: WalletAddress,
    pub token_id: u64,
}

impl TransferEvent {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    pub fn is_mint(&self) -> bool {
        self.from.is_zero()
    }

    pub fn is_burn(&self) -> bool {
        self.to.is_zero()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProjectStats {
    pub project: ProjectId,
    pub date: NaiveDate,
    /// ETH
    pub floor_price: f64,
    /// ETH
    pub sales_volume: f64,
    pub whale_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialDayRecord {
    pub project: ProjectId,
    pub date: NaiveDate,
    pub retweets: u64,
    pub replies: u64,
    pub likes: u64,
    pub quotes: u64,
    /// Precomputed polarity in `[-1, 1]`.
    pub sentiment: f64,
}
