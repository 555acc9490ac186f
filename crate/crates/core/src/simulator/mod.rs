//! Synthetic substitutive markets. Wallets migrate between projects with
//! probability `scale·λ_ij·(N_j/n_wallets)/age_j`; the run emits the ingest
//! files plus the realized migrations.

mod config;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DAILY_STATS_FILE, PROJECTS_FILE, SOCIAL_FILE, TRANSFERS_FILE};
use crate::ingest::{
    write_daily_stats, write_projects, write_social, write_transfers, DailyProjectStats, IngestError,
    SocialDayRecord, TransferEvent,
};
use crate::mechanisms::PairMatrix;
use crate::model::{Project, ProjectId, WalletAddress};
use crate::stats::{spearman_correlation, Correlation};

pub use config::{PopularityProcess, SimConfig};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const CONFIG_ECHO_FILE: &str = "sim_config.txt";
const GROUND_TRUTH_HEADER: [&str; 4] = ["day", "source", "target", "migrants"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("migration probabilities can reach {bound}, above 1")]
    ScaleTooLarge { bound: f64 },
    #[error("need at least 3 project pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("project {0} is not part of the simulation")]
    UnknownProject(ProjectId),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub day: NaiveDate,
    pub source: ProjectId,
    pub target: ProjectId,
    pub migrants: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimGroundTruth {
    pub projects: Vec<ProjectId>,
    /// Non-zero daily migrant counts, by day then source then target.
    pub migrations: Vec<MigrationRecord>,
    /// End-of-day distinct holders, `holders[day][project]`.
    pub holders: Vec<Vec<u32>>,
    pub config: SimConfig,
}

impl SimGroundTruth {
    pub fn day(&self, offset: usize) -> NaiveDate {
        self.config.start_date + Days::new(offset as u64)
    }

    /// Total migrants per ordered pair over the whole run.
    pub fn cumulative(&self) -> PairMatrix {
        let mut m = PairMatrix::zeros(self.projects.clone());
        for r in &self.migrations {
            let (i, j) = (
                m.index_of(&r.source).expect("known source"),
                m.index_of(&r.target).expect("known target"),
            );
            m.set(i, j, m.get(i, j) + r.migrants as f64);
        }
        m
    }

    pub fn holder_count(&self, project: &ProjectId, day: NaiveDate) -> Option<u32> {
        let p = self.projects.iter().position(|x| x == project)?;
        let offset = (day - self.config.start_date).num_days();
        if offset < 0 {
            return None;
        }
        self.holders.get(offset as usize).map(|row| row[p])
    }
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub projects: Vec<Project>,
    pub transfers: Vec<TransferEvent>,
    pub daily_stats: Vec<DailyProjectStats>,
    pub social: Vec<SocialDayRecord>,
    pub ground_truth: SimGroundTruth,
}

impl SimOutput {
    pub fn dataset(&self) -> Result<Dataset, SimError> {
        Ok(Dataset::from_parts(
            self.projects.clone(),
            self.transfers.clone(),
            self.daily_stats.clone(),
            self.social.clone(),
        )?)
    }

    /// Writes the four ingest files, the ground truth and the config echo.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), SimError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let create = |name: &str| -> Result<BufWriter<File>, SimError> {
            let path = dir.join(name);
            File::create(&path).map(BufWriter::new).map_err(|e| io_err(&path, e))
        };
        write_projects(&self.projects, create(PROJECTS_FILE)?)?;
        write_transfers(&self.transfers, create(TRANSFERS_FILE)?)?;
        write_daily_stats(&self.daily_stats, create(DAILY_STATS_FILE)?)?;
        write_social(&self.social, create(SOCIAL_FILE)?)?;
        write_ground_truth(&self.ground_truth.migrations, create(GROUND_TRUTH_FILE)?)?;
        let path = dir.join(CONFIG_ECHO_FILE);
        let mut echo = create(CONFIG_ECHO_FILE)?;
        echo.write_all(self.ground_truth.config.to_text().as_bytes())
            .and_then(|_| echo.flush())
            .map_err(|e| io_err(&path, e))
    }
}

pub fn write_ground_truth<W: Write>(records: &[MigrationRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| SimError::Ingest(IngestError::Csv(e.to_string()));
    w.write_record(GROUND_TRUTH_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.day.to_string(),
            r.source.to_string(),
            r.target.to_string(),
            r.migrants.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| SimError::Ingest(IngestError::Csv(e.to_string())))
}

pub fn parse_ground_truth<R: Read>(input: R) -> Result<Vec<MigrationRecord>, SimError> {
    let mut reader = csv::Reader::from_reader(input);
    let bad = |line: u64, message: String| SimError::Ingest(IngestError::ValueError { line, message });
    let header = reader
        .headers()
        .map_err(|e| SimError::Ingest(IngestError::Csv(e.to_string())))?
        .clone();
    if header.iter().map(str::trim).ne(GROUND_TRUTH_HEADER) {
        return Err(SimError::Ingest(IngestError::SchemaError {
            line: 1,
            message: format!("expected header {}", GROUND_TRUTH_HEADER.join(",")),
        }));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| SimError::Ingest(IngestError::Csv(e.to_string())))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let day = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d").map_err(|e| bad(line, e.to_string()))?;
        let source = ProjectId::new(&row[1]).map_err(|e| bad(line, e.to_string()))?;
        let target = ProjectId::new(&row[2]).map_err(|e| bad(line, e.to_string()))?;
        let migrants = row[3].trim().parse().map_err(|_| bad(line, format!("bad count {:?}", &row[3])))?;
        out.push(MigrationRecord {
            day,
            source,
            target,
            migrants,
        });
    }
    Ok(out)
}

pub fn project_id(index: usize) -> ProjectId {
    ProjectId::new(&format!("0x{:040x}", 0xc011_0000_usize + index)).expect("hex id")
}

fn wallet_address(index: usize) -> WalletAddress {
    WalletAddress::new(&format!("0x{:040x}", 0x1_0000_0000_usize + index)).expect("hex address")
}

/// Holds tokens sold by wallets leaving a project, and hands them to arrivals.
fn escrow_address(project: usize) -> WalletAddress {
    WalletAddress::new(&format!("0x{:040x}", 0xe5c0_0000_0000_usize + project)).expect("hex address")
}

struct Clock {
    day: DateTime<Utc>,
    tick: i64,
}

impl Clock {
    fn next(&mut self) -> DateTime<Utc> {
        self.tick += 1;
        self.day + chrono::Duration::seconds(self.tick)
    }
}

/// Runs the market forward. Deterministic for a fixed config.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let n = config.n_projects;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ids: Vec<ProjectId> = (0..n).map(project_id).collect();
    let wallets: Vec<WalletAddress> = (0..config.n_wallets).map(wallet_address).collect();
    let escrows: Vec<WalletAddress> = (0..n).map(escrow_address).collect();
    let launch_day = |p: usize| config.start_date + Days::new(config.launch_offsets[p] as u64);

    let projects: Vec<Project> = (0..n)
        .map(|p| Project {
            id: ids[p].clone(),
            name: format!("Synthetic {p}"),
            twitter_hashtag: format!("#SYN{p}"),
            launch_date: launch_day(p),
        })
        .collect();

    // wallet -> (project, token) it currently holds
    let mut holding: Vec<Option<(usize, u64)>> = vec![None; config.n_wallets];
    let mut migrated = vec![false; config.n_wallets];
    let mut escrow_stock: Vec<Vec<u64>> = vec![Vec::new(); n];
    let mut next_token = vec![1u64; n];
    let mut members = vec![0u32; n];

    let mut transfers = Vec::new();
    let mut migrations = Vec::new();
    let mut holders = Vec::with_capacity(config.n_days);
    let mut daily_stats = Vec::new();
    let mut social = Vec::new();
    let noise = Normal::new(0.0, config.popularity_noise.max(f64::MIN_POSITIVE)).expect("finite sd");
    let sentiment_noise = Normal::new(0.0, 0.2).expect("finite sd");

    for offset in 0..config.n_days {
        let date = config.start_date + Days::new(offset as u64);
        let mut clock = Clock {
            day: date.and_hms_opt(0, 0, 0).expect("midnight").and_utc(),
            tick: 0,
        };
        let mut traded = vec![0u32; n];
        let mut arrivals = vec![0u32; n];

        for p in (0..n).filter(|&p| config.launch_offsets[p] == offset) {
            for w in (p..config.n_wallets).step_by(n) {
                let token = next_token[p];
                next_token[p] += 1;
                transfers.push(TransferEvent {
                    project: ids[p].clone(),
                    timestamp: clock.next(),
                    from: WalletAddress::zero(),
                    to: wallets[w].clone(),
                    token_id: token,
                });
                holding[w] = Some((p, token));
                members[p] += 1;
                traded[p] += 1;
            }
        }

        let launched: Vec<bool> = (0..n).map(|p| config.launch_offsets[p] <= offset).collect();
        let attraction: Vec<f64> = (0..n)
            .map(|j| {
                if !launched[j] {
                    return 0.0;
                }
                let age = (offset - config.launch_offsets[j]).max(1) as f64;
                members[j] as f64 / config.n_wallets as f64 / age
            })
            .collect();

        let mut today: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for w in 0..config.n_wallets {
            let Some((i, token)) = holding[w] else { continue };
            if migrated[w] && !config.allow_remigration {
                continue;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut target = None;
            for j in (0..n).filter(|&j| j != i) {
                acc += config.migration_scale * config.lambda(i, j) * attraction[j];
                if u < acc {
                    target = Some(j);
                    break;
                }
            }
            let Some(j) = target else { continue };

            transfers.push(TransferEvent {
                project: ids[i].clone(),
                timestamp: clock.next(),
                from: wallets[w].clone(),
                to: escrows[i].clone(),
                token_id: token,
            });
            escrow_stock[i].push(token);
            let (from, new_token) = match escrow_stock[j].pop() {
                Some(t) => (escrows[j].clone(), t),
                None => {
                    let t = next_token[j];
                    next_token[j] += 1;
                    (WalletAddress::zero(), t)
                }
            };
            transfers.push(TransferEvent {
                project: ids[j].clone(),
                timestamp: clock.next(),
                from,
                to: wallets[w].clone(),
                token_id: new_token,
            });
            holding[w] = Some((j, new_token));
            migrated[w] = true;
            members[i] -= 1;
            members[j] += 1;
            traded[i] += 1;
            traded[j] += 1;
            arrivals[j] += 1;
            *today.entry((i, j)).or_default() += 1;
        }
        for ((i, j), count) in today {
            migrations.push(MigrationRecord {
                day: date,
                source: ids[i].clone(),
                target: ids[j].clone(),
                migrants: count,
            });
        }

        holders.push(
            (0..n)
                .map(|p| members[p] + u32::from(!escrow_stock[p].is_empty()))
                .collect::<Vec<u32>>(),
        );

        for p in (0..n).filter(|&p| launched[p]) {
            let age = (offset - config.launch_offsets[p]) as f64;
            let level = config.popularity[p].level(age) * noise.sample(&mut rng).exp();
            let engagement = |share: f64| (level * share).round().max(0.0) as u64;
            social.push(SocialDayRecord {
                project: ids[p].clone(),
                date,
                retweets: engagement(0.25),
                replies: engagement(0.1),
                likes: engagement(0.6),
                quotes: engagement(0.05),
                sentiment: (0.2f64 + sentiment_noise.sample(&mut rng)).clamp(-1.0, 1.0),
            });
            let floor = 0.05 + 2.0 * members[p] as f64 / config.n_wallets as f64;
            daily_stats.push(DailyProjectStats {
                project: ids[p].clone(),
                date,
                floor_price: (floor * 1e4).round() / 1e4,
                sales_volume: (traded[p] as f64 * floor * 1e4).round() / 1e4,
                whale_count: u64::from(arrivals[p] / 10),
            });
        }
    }

    Ok(SimOutput {
        projects,
        transfers,
        daily_stats,
        social,
        ground_truth: SimGroundTruth {
            projects: ids,
            migrations,
            holders,
            config: config.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecovery {
    pub project: ProjectId,
    /// `None` when the source has fewer than two destinations.
    pub rho: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub pooled: Correlation,
    pub per_source: Vec<SourceRecovery>,
    pub pairs: usize,
}

/// Spearman correlation between realized migrant totals and an estimated
/// substitution-rate matrix over its off-diagonal pairs.
pub fn evaluate_recovery(truth: &SimGroundTruth, estimated: &PairMatrix) -> Result<RecoveryReport, SimError> {
    let totals = truth.cumulative();
    let idx = estimated
        .projects()
        .iter()
        .map(|p| totals.index_of(p).ok_or_else(|| SimError::UnknownProject(p.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let n = idx.len();
    let pairs = n * n.saturating_sub(1);
    if pairs < 3 {
        return Err(SimError::InsufficientPairs(pairs));
    }
    let mut t_all = Vec::with_capacity(pairs);
    let mut e_all = Vec::with_capacity(pairs);
    let mut per_source = Vec::with_capacity(n);
    for a in 0..n {
        let mut t_row = Vec::new();
        let mut e_row = Vec::new();
        for b in (0..n).filter(|&b| b != a) {
            t_row.push(totals.get(idx[a], idx[b]));
            e_row.push(estimated.get(a, b));
        }
        per_source.push(SourceRecovery {
            project: estimated.projects()[a].clone(),
            rho: spearman_correlation(&t_row, &e_row).ok(),
        });
        t_all.extend(t_row);
        e_all.extend(e_row);
    }
    let pooled = spearman_correlation(&t_all, &e_all).map_err(|_| SimError::InsufficientPairs(pairs))?;
    Ok(RecoveryReport {
        pooled,
        per_source,
        pairs,
    })
}

#[cfg(test)]
mod tests;
