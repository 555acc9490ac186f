//! An ingested dataset: the four tables plus the replayed role index.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;

use crate::ingest::{
    self, popularity, DailyProjectStats, IngestError, PopularityWeights, RoleIndex,
    SocialDayRecord, TransferEvent,
};
use crate::model::{Project, ProjectId, TimeWindow};

pub const TRANSFERS_FILE: &str = "transfers.csv";
pub const PROJECTS_FILE: &str = "projects.csv";
pub const DAILY_STATS_FILE: &str = "daily_stats.csv";
pub const SOCIAL_FILE: &str = "social.csv";

#[derive(Debug, Clone)]
pub struct Dataset {
    projects: Vec<Project>,
    project_pos: HashMap<ProjectId, usize>,
    transfers: Vec<TransferEvent>,
    daily_stats: Vec<DailyProjectStats>,
    social: Vec<SocialDayRecord>,
    stats_at: HashMap<(ProjectId, NaiveDate), usize>,
    social_at: HashMap<(ProjectId, NaiveDate), usize>,
    weights: PopularityWeights,
    popularity_peak: f64,
    roles: RoleIndex,
    span: Option<TimeWindow>,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

impl Dataset {
    /// Loads a dataset directory. `projects.csv` and `transfers.csv` are
    /// required; `daily_stats.csv` and `social.csv` are read when present.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref();
        let projects = ingest::parse_projects(open(&dir.join(PROJECTS_FILE))?)?;
        let transfers = ingest::parse_transfers(open(&dir.join(TRANSFERS_FILE))?)?;
        let stats_path = dir.join(DAILY_STATS_FILE);
        let daily_stats = if stats_path.exists() {
            ingest::parse_daily_stats(open(&stats_path)?)?
        } else {
            Vec::new()
        };
        let social_path = dir.join(SOCIAL_FILE);
        let social = if social_path.exists() {
            ingest::parse_social(open(&social_path)?)?
        } else {
            Vec::new()
        };
        Self::from_parts(projects, transfers, daily_stats, social)
    }

    pub fn from_parts(
        projects: Vec<Project>,
        transfers: Vec<TransferEvent>,
        daily_stats: Vec<DailyProjectStats>,
        social: Vec<SocialDayRecord>,
    ) -> Result<Self, IngestError> {
        Self::with_weights(projects, transfers, daily_stats, social, PopularityWeights::default())
    }

    pub fn with_weights(
        mut projects: Vec<Project>,
        mut transfers: Vec<TransferEvent>,
        daily_stats: Vec<DailyProjectStats>,
        social: Vec<SocialDayRecord>,
        weights: PopularityWeights,
    ) -> Result<Self, IngestError> {
        weights.validate()?;
        projects.sort_by(|a, b| a.id.cmp(&b.id));
        let mut project_pos = HashMap::new();
        for (i, p) in projects.iter().enumerate() {
            if project_pos.insert(p.id.clone(), i).is_some() {
                return Err(IngestError::DuplicateProject(p.id.clone()));
            }
        }
        let known = |id: &ProjectId| {
            if project_pos.contains_key(id) {
                Ok(())
            } else {
                Err(IngestError::UnknownProject(id.clone()))
            }
        };

        transfers.sort_by_key(|e| e.timestamp);
        let mut first_transfer: HashMap<&ProjectId, NaiveDate> = HashMap::new();
        for e in &transfers {
            known(&e.project)?;
            first_transfer.entry(&e.project).or_insert(e.date());
        }
        for p in &projects {
            if let Some(&first) = first_transfer.get(&p.id) {
                if p.launch_date > first {
                    return Err(IngestError::LaunchAfterFirstTransfer {
                        project: p.id.clone(),
                        launch: p.launch_date,
                        first_transfer: first,
                    });
                }
            }
        }

        let mut stats_at = HashMap::new();
        for (i, s) in daily_stats.iter().enumerate() {
            known(&s.project)?;
            stats_at.insert((s.project.clone(), s.date), i);
        }
        let mut social_at = HashMap::new();
        let mut popularity_peak: f64 = 0.0;
        for (i, r) in social.iter().enumerate() {
            known(&r.project)?;
            social_at.insert((r.project.clone(), r.date), i);
            popularity_peak = popularity_peak.max(popularity(r, &weights)?);
        }

        let roles = RoleIndex::build(&transfers, projects.iter().map(|p| &p.id));

        let span = projects.iter().map(|p| p.launch_date).min().map(|start| {
            let end = [
                transfers.last().map(|e| e.date()),
                daily_stats.iter().map(|s| s.date).max(),
                social.iter().map(|r| r.date).max(),
                projects.iter().map(|p| p.launch_date).max(),
            ]
            .into_iter()
            .flatten()
            .max()
            .unwrap_or(start);
            TimeWindow { start, end }
        });

        Ok(Self {
            projects,
            project_pos,
            transfers,
            daily_stats,
            social,
            stats_at,
            social_at,
            weights,
            popularity_peak,
            roles,
            span,
        })
    }

    /// Projects sorted by id.
    pub fn projects(&self) -> &[Project] {
        &self.projects
    }

    pub fn project(&self, id: &ProjectId) -> Option<&Project> {
        self.project_pos.get(id).map(|&i| &self.projects[i])
    }

    pub fn transfers(&self) -> &[TransferEvent] {
        &self.transfers
    }

    pub fn daily_stats(&self) -> &[DailyProjectStats] {
        &self.daily_stats
    }

    pub fn social(&self) -> &[SocialDayRecord] {
        &self.social
    }

    pub fn roles(&self) -> &RoleIndex {
        &self.roles
    }

    /// First launch date through the last dated record.
    pub fn span(&self) -> Option<TimeWindow> {
        self.span
    }

    pub fn stats_on(&self, project: &ProjectId, day: NaiveDate) -> Option<&DailyProjectStats> {
        self.stats_at
            .get(&(project.clone(), day))
            .map(|&i| &self.daily_stats[i])
    }

    pub fn social_on(&self, project: &ProjectId, day: NaiveDate) -> Option<&SocialDayRecord> {
        self.social_at
            .get(&(project.clone(), day))
            .map(|&i| &self.social[i])
    }

    /// Weighted engagement sum; 0 on days without a social record.
    pub fn popularity_on(&self, project: &ProjectId, day: NaiveDate) -> f64 {
        self.social_on(project, day)
            .map(|r| popularity(r, &self.weights).expect("weights validated on load"))
            .unwrap_or(0.0)
    }

    /// Popularity rescaled by the dataset-wide peak. Popularity has a natural
    /// zero, so the lower bound is pinned at 0. An all-zero dataset maps to 0.5.
    pub fn normalized_popularity_on(&self, project: &ProjectId, day: NaiveDate) -> f64 {
        if self.popularity_peak > 0.0 {
            self.popularity_on(project, day) / self.popularity_peak
        } else {
            0.5
        }
    }

    pub fn weights(&self) -> &PopularityWeights {
        &self.weights
    }
}
