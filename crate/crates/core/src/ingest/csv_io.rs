use std::collections::HashSet;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};

use super::{DailyProjectStats, IngestError, SocialDayRecord, TransferEvent};
use crate::model::{Project, ProjectId, WalletAddress};

pub const TRANSFERS_HEADER: [&str; 5] = ["contract", "timestamp", "from", "to", "token_id"];
pub const PROJECTS_HEADER: [&str; 4] = ["contract", "name", "hashtag", "launch_date"];
pub const DAILY_STATS_HEADER: [&str; 5] =
    ["contract", "date", "floor_price", "sales_volume", "whale_count"];
pub const SOCIAL_HEADER: [&str; 7] =
    ["contract", "date", "retweets", "replies", "likes", "quotes", "sentiment"];

fn csv_err(e: csv::Error) -> IngestError {
    IngestError::Csv(e.to_string())
}

/// A row with its fields already reordered to match the required header.
struct Row {
    line: u64,
    fields: Vec<String>,
}

impl Row {
    fn get(&self, idx: usize) -> &str {
        &self.fields[idx]
    }

    fn value_err(&self, message: impl Into<String>) -> IngestError {
        IngestError::ValueError {
            line: self.line,
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, idx: usize, what: &str) -> Result<T, IngestError> {
        self.get(idx)
            .trim()
            .parse()
            .map_err(|_| self.value_err(format!("cannot parse {what} from {:?}", self.get(idx))))
    }

    fn project(&self, idx: usize) -> Result<ProjectId, IngestError> {
        ProjectId::new(self.get(idx)).map_err(|e| self.value_err(e.to_string()))
    }

    fn wallet(&self, idx: usize) -> Result<WalletAddress, IngestError> {
        WalletAddress::new(self.get(idx)).map_err(|e| self.value_err(e.to_string()))
    }

    fn date(&self, idx: usize) -> Result<NaiveDate, IngestError> {
        NaiveDate::parse_from_str(self.get(idx).trim(), "%Y-%m-%d")
            .map_err(|_| self.value_err(format!("cannot parse date from {:?}", self.get(idx))))
    }

    fn non_negative(&self, idx: usize, what: &str) -> Result<f64, IngestError> {
        let v: f64 = self.parse(idx, what)?;
        if !v.is_finite() || v < 0.0 {
            return Err(self.value_err(format!("{what} must be a non-negative number, got {v}")));
        }
        Ok(v)
    }
}

fn read_rows<R: Read>(input: R, required: &[&str]) -> Result<Vec<Row>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.is_empty() {
        return Err(IngestError::SchemaError {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let mut positions = Vec::with_capacity(required.len());
    for name in required {
        let pos = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::SchemaError {
                line: 1,
                message: format!("missing column {name:?}"),
            })?;
        positions.push(pos);
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        let mut fields = Vec::with_capacity(required.len());
        for (name, &pos) in required.iter().zip(&positions) {
            let field = record.get(pos).ok_or_else(|| IngestError::SchemaError {
                line,
                message: format!("missing column {name:?}"),
            })?;
            fields.push(field.to_string());
        }
        rows.push(Row { line, fields });
    }
    Ok(rows)
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    chrono::NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|naive| naive.and_utc())
}

/// Parses `transfers.csv`. Events come back sorted by timestamp, stable on ties.
pub fn parse_transfers<R: Read>(input: R) -> Result<Vec<TransferEvent>, IngestError> {
    let rows = read_rows(input, &TRANSFERS_HEADER)?;
    let mut events = Vec::with_capacity(rows.len());
    for row in rows {
        let timestamp = parse_timestamp(row.get(1))
            .ok_or_else(|| row.value_err(format!("cannot parse timestamp {:?}", row.get(1))))?;
        let from = row.wallet(2)?;
        let to = row.wallet(3)?;
        if from == to {
            return Err(row.value_err("from and to are the same wallet"));
        }
        events.push(TransferEvent {
            project: row.project(0)?,
            timestamp,
            from,
            to,
            token_id: row.parse(4, "token_id")?,
        });
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

pub fn parse_projects<R: Read>(input: R) -> Result<Vec<Project>, IngestError> {
    let rows = read_rows(input, &PROJECTS_HEADER)?;
    let mut seen = HashSet::new();
    let mut projects = Vec::with_capacity(rows.len());
    for row in rows {
        let id = row.project(0)?;
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateProject(id));
        }
        projects.push(Project {
            id,
            name: row.get(1).to_string(),
            twitter_hashtag: row.get(2).to_string(),
            launch_date: row.date(3)?,
        });
    }
    Ok(projects)
}

pub fn parse_daily_stats<R: Read>(input: R) -> Result<Vec<DailyProjectStats>, IngestError> {
    let rows = read_rows(input, &DAILY_STATS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let project = row.project(0)?;
        let date = row.date(1)?;
        if !seen.insert((project.clone(), date)) {
            return Err(IngestError::DuplicateRecord {
                line: row.line,
                project,
                date,
            });
        }
        out.push(DailyProjectStats {
            project,
            date,
            floor_price: row.non_negative(2, "floor_price")?,
            sales_volume: row.non_negative(3, "sales_volume")?,
            whale_count: row.parse(4, "whale_count")?,
        });
    }
    Ok(out)
}

pub fn parse_social<R: Read>(input: R) -> Result<Vec<SocialDayRecord>, IngestError> {
    let rows = read_rows(input, &SOCIAL_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let project = row.project(0)?;
        let date = row.date(1)?;
        if !seen.insert((project.clone(), date)) {
            return Err(IngestError::DuplicateRecord {
                line: row.line,
                project,
                date,
            });
        }
        let sentiment: f64 = row.parse(6, "sentiment")?;
        if !(-1.0..=1.0).contains(&sentiment) {
            return Err(row.value_err(format!("sentiment {sentiment} outside [-1, 1]")));
        }
        out.push(SocialDayRecord {
            project,
            date,
            retweets: row.parse(2, "retweets")?,
            replies: row.parse(3, "replies")?,
            likes: row.parse(4, "likes")?,
            quotes: row.parse(5, "quotes")?,
            sentiment,
        });
    }
    Ok(out)
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

pub fn write_transfers<W: Write>(events: &[TransferEvent], out: W) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(TRANSFERS_HEADER).map_err(csv_err)?;
    for e in events {
        w.write_record([
            e.project.as_str(),
            &e.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            e.from.as_str(),
            e.to.as_str(),
            &e.token_id.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))
}

pub fn write_projects<W: Write>(projects: &[Project], out: W) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(PROJECTS_HEADER).map_err(csv_err)?;
    for p in projects {
        w.write_record([
            p.id.as_str(),
            &p.name,
            &p.twitter_hashtag,
            &p.launch_date.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))
}

pub fn write_daily_stats<W: Write>(stats: &[DailyProjectStats], out: W) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(DAILY_STATS_HEADER).map_err(csv_err)?;
    for s in stats {
        w.write_record([
            s.project.as_str(),
            &s.date.to_string(),
            &s.floor_price.to_string(),
            &s.sales_volume.to_string(),
            &s.whale_count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))
}

pub fn write_social<W: Write>(records: &[SocialDayRecord], out: W) -> Result<(), IngestError> {
    let mut w = writer(out);
    w.write_record(SOCIAL_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.project.as_str(),
            &r.date.to_string(),
            &r.retweets.to_string(),
            &r.replies.to_string(),
            &r.likes.to_string(),
            &r.quotes.to_string(),
            &r.sentiment.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))
}
