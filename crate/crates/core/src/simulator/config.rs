//! Simulation settings and their `key = value` text form.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Daily popularity: `base·exp(−decay·age)·(1 + amplitude·max(0, sin(2π·age/period)))`,
/// times log-normal noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularityProcess {
    pub base: f64,
    pub decay: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl PopularityProcess {
    pub fn level(&self, age: f64) -> f64 {
        let boost = (2.0 * std::f64::consts::PI * age / self.period).sin().max(0.0);
        self.base * (-self.decay * age).exp() * (1.0 + self.amplitude * boost)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_projects: usize,
    pub n_wallets: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    /// Launch day of each project, counted from `start_date`.
    pub launch_offsets: Vec<usize>,
    /// Row-major, symmetric, zero diagonal.
    pub true_lambda: Vec<f64>,
    pub popularity: Vec<PopularityProcess>,
    /// Standard deviation of the log popularity noise.
    pub popularity_noise: f64,
    pub migration_scale: f64,
    /// When false, each wallet migrates at most once.
    pub allow_remigration: bool,
    pub seed: u64,
}

impl SimConfig {
    /// A random market of the given size: staggered launches, about half of
    /// the project pairs substitutable, and the largest scale the
    /// probability bound allows, times 0.9.
    pub fn generated(n_projects: usize, n_wallets: usize, n_days: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0f1);
        let n = n_projects;
        let latest = (n_days / 2).max(1);
        let mut launch_offsets: Vec<usize> = (0..n)
            .map(|i| if i == 0 { 0 } else { rng.random_range(0..latest) })
            .collect();
        launch_offsets.sort_unstable();
        let mut true_lambda = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random_bool(0.5) {
                    let v = (rng.random_range(0.2..1.0) * 1000.0f64).round() / 1000.0;
                    true_lambda[i * n + j] = v;
                    true_lambda[j * n + i] = v;
                }
            }
        }
        let round = |x: f64, digits: i32| (x * 10f64.powi(digits)).round() / 10f64.powi(digits);
        let popularity = (0..n)
            .map(|_| PopularityProcess {
                base: round(rng.random_range(200.0..2000.0), 1),
                decay: round(rng.random_range(0.005..0.03), 4),
                amplitude: round(rng.random_range(0.0..1.5), 3),
                period: round(rng.random_range(7.0..30.0), 1),
            })
            .collect();
        let max_row = max_row_sum(&true_lambda, n);
        let migration_scale = if max_row > 0.0 { round(0.9 / max_row, 6) } else { 1.0 };
        Self {
            n_projects,
            n_wallets,
            n_days,
            start_date: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            launch_offsets,
            true_lambda,
            popularity,
            popularity_noise: 0.1,
            migration_scale,
            allow_remigration: false,
            seed,
        }
    }

    /// 10 projects, 2000 wallets, 120 days.
    pub fn desk_scale(seed: u64) -> Self {
        Self::generated(10, 2000, 120, seed)
    }

    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        self.true_lambda[i * self.n_projects + j]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let n = self.n_projects;
        let invalid = |m: String| Err(SimError::InvalidConfig(m));
        if n == 0 || self.n_wallets == 0 || self.n_days == 0 {
            return invalid("n_projects, n_wallets and n_days must be at least 1".into());
        }
        if self.launch_offsets.len() != n {
            return invalid(format!("{} launch offsets for {n} projects", self.launch_offsets.len()));
        }
        if let Some(&late) = self.launch_offsets.iter().find(|&&d| d >= self.n_days) {
            return invalid(format!("launch offset {late} is past the last day"));
        }
        if self.true_lambda.len() != n * n {
            return invalid(format!("true_lambda has {} entries, expected {}", self.true_lambda.len(), n * n));
        }
        for i in 0..n {
            if self.lambda(i, i) != 0.0 {
                return invalid(format!("true_lambda diagonal at {i} is not zero"));
            }
            for j in 0..n {
                let v = self.lambda(i, j);
                if !(0.0..=1.0).contains(&v) {
                    return invalid(format!("true_lambda[{i}][{j}] = {v} outside [0, 1]"));
                }
                if v != self.lambda(j, i) {
                    return invalid(format!("true_lambda is not symmetric at ({i}, {j})"));
                }
            }
        }
        if self.popularity.len() != n {
            return invalid(format!("{} popularity processes for {n} projects", self.popularity.len()));
        }
        for (i, p) in self.popularity.iter().enumerate() {
            let ok = p.base >= 0.0 && p.decay >= 0.0 && p.amplitude >= 0.0 && p.period > 0.0;
            if !ok || !(p.base + p.decay + p.amplitude + p.period).is_finite() {
                return invalid(format!("popularity process {i} is invalid"));
            }
        }
        if !(self.popularity_noise >= 0.0 && self.popularity_noise.is_finite()) {
            return invalid("popularity_noise must be non-negative".into());
        }
        if !(self.migration_scale > 0.0 && self.migration_scale.is_finite()) {
            return invalid("migration_scale must be positive".into());
        }
        // Holder share and 1/age are both at most 1, so this bounds every
        // wallet-day's total migration probability.
        let bound = self.migration_scale * max_row_sum(&self.true_lambda, n);
        if bound > 1.0 {
            return Err(SimError::ScaleTooLarge { bound });
        }
        Ok(())
    }

    /// The `key = value` text form read back by [`SimConfig::parse`].
    pub fn to_text(&self) -> String {
        let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("writing to a string");
        };
        line("n_projects", self.n_projects.to_string());
        line("n_wallets", self.n_wallets.to_string());
        line("n_days", self.n_days.to_string());
        line("start_date", self.start_date.to_string());
        line("seed", self.seed.to_string());
        line("migration_scale", self.migration_scale.to_string());
        line("allow_remigration", self.allow_remigration.to_string());
        line("launch_offsets", join(&mut self.launch_offsets.iter().map(|d| d.to_string())));
        let rows: Vec<String> = self
            .true_lambda
            .chunks(self.n_projects.max(1))
            .map(|r| join(&mut r.iter().map(|v| v.to_string())))
            .collect();
        line("true_lambda", rows.join(";"));
        line("popularity_base", join(&mut self.popularity.iter().map(|p| p.base.to_string())));
        line("popularity_decay", join(&mut self.popularity.iter().map(|p| p.decay.to_string())));
        line("popularity_amplitude", join(&mut self.popularity.iter().map(|p| p.amplitude.to_string())));
        line("popularity_period", join(&mut self.popularity.iter().map(|p| p.period.to_string())));
        line("popularity_noise", self.popularity_noise.to_string());
        out
    }

    /// Reads `key = value` lines; `#` starts a comment. `n_projects`,
    /// `n_wallets`, `n_days` and `seed` are required, every other key
    /// overrides the matching field of [`SimConfig::generated`].
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(SimError::InvalidConfig(format!("line {}: expected key = value", idx + 1)));
            };
            let key = k.trim().to_string();
            if pairs.iter().any(|(existing, _, _): &(String, String, usize)| *existing == key) {
                return Err(SimError::InvalidConfig(format!("line {}: duplicate key {key}", idx + 1)));
            }
            pairs.push((key, v.trim().to_string(), idx + 1));
        }
        let find = |key: &str| pairs.iter().find(|(k, _, _)| k == key);
        let required = |key: &str| -> Result<&(String, String, usize), SimError> {
            find(key).ok_or_else(|| SimError::InvalidConfig(format!("missing {key}")))
        };
        let n_projects: usize = scalar(required("n_projects")?)?;
        let n_wallets: usize = scalar(required("n_wallets")?)?;
        let n_days: usize = scalar(required("n_days")?)?;
        let seed: u64 = scalar(required("seed")?)?;
        let mut cfg = Self::generated(n_projects, n_wallets, n_days, seed);

        for entry in &pairs {
            let (key, value, _) = entry;
            match key.as_str() {
                "n_projects" | "n_wallets" | "n_days" | "seed" => {}
                "start_date" => {
                    cfg.start_date = NaiveDate::parse_from_str(value, "%Y-%m-%d")
                        .map_err(|_| bad_value(entry))?;
                }
                "migration_scale" => cfg.migration_scale = scalar(entry)?,
                "allow_remigration" => cfg.allow_remigration = scalar(entry)?,
                "popularity_noise" => cfg.popularity_noise = scalar(entry)?,
                "launch_offsets" => cfg.launch_offsets = list(entry)?,
                "true_lambda" => {
                    let mut values = Vec::new();
                    for row in value.split(';') {
                        values.extend(list::<f64>(&(key.clone(), row.to_string(), entry.2))?);
                    }
                    cfg.true_lambda = values;
                }
                "popularity_base" | "popularity_decay" | "popularity_amplitude" | "popularity_period" => {
                    let xs: Vec<f64> = list(entry)?;
                    if xs.len() != cfg.popularity.len() {
                        return Err(SimError::InvalidConfig(format!(
                            "line {}: {key} needs {} values",
                            entry.2,
                            cfg.popularity.len()
                        )));
                    }
                    for (p, x) in cfg.popularity.iter_mut().zip(xs) {
                        match key.as_str() {
                            "popularity_base" => p.base = x,
                            "popularity_decay" => p.decay = x,
                            "popularity_amplitude" => p.amplitude = x,
                            _ => p.period = x,
                        }
                    }
                }
                other => {
                    return Err(SimError::InvalidConfig(format!("line {}: unknown key {other}", entry.2)));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bad_value(entry: &(String, String, usize)) -> SimError {
    SimError::InvalidConfig(format!("line {}: bad value {:?} for {}", entry.2, entry.1, entry.0))
}

fn scalar<T: std::str::FromStr>(entry: &(String, String, usize)) -> Result<T, SimError> {
    entry.1.parse().map_err(|_| bad_value(entry))
}

fn list<T: std::str::FromStr>(entry: &(String, String, usize)) -> Result<Vec<T>, SimError> {
    entry
        .1
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad_value(entry)))
        .collect()
}

pub(crate) fn max_row_sum(lambda: &[f64], n: usize) -> f64 {
    lambda
        .chunks(n.max(1))
        .map(|r| r.iter().sum::<f64>())
        .fold(0.0, f64::max)
}
