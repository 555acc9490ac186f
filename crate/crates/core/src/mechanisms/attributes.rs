//! Window-scoped project attributes used for propensity and clustering.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::MechanismError;
use crate::dataset::Dataset;
use crate::model::{minmax_normalize, ProjectId, TimeWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    FloorPriceMean,
    SalesVolumeMean,
    HolderCountMean,
    SellerCountMean,
    BuyerCountMean,
    WhaleCountMean,
    TransferCountMean,
    PopularityMean,
    SentimentMean,
    DaysSinceLaunch,
    HolderGrowthRate,
    SalesVolatility,
}

impl Attribute {
    pub const ALL: [Attribute; 12] = [
        Attribute::FloorPriceMean,
        Attribute::SalesVolumeMean,
        Attribute::HolderCountMean,
        Attribute::SellerCountMean,
        Attribute::BuyerCountMean,
        Attribute::WhaleCountMean,
        Attribute::TransferCountMean,
        Attribute::PopularityMean,
        Attribute::SentimentMean,
        Attribute::DaysSinceLaunch,
        Attribute::HolderGrowthRate,
        Attribute::SalesVolatility,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::FloorPriceMean => "floor_price_mean",
            Attribute::SalesVolumeMean => "sales_volume_mean",
            Attribute::HolderCountMean => "holder_count_mean",
            Attribute::SellerCountMean => "seller_count_mean",
            Attribute::BuyerCountMean => "buyer_count_mean",
            Attribute::WhaleCountMean => "whale_count_mean",
            Attribute::TransferCountMean => "transfer_count_mean",
            Attribute::PopularityMean => "popularity_mean",
            Attribute::SentimentMean => "sentiment_mean",
            Attribute::DaysSinceLaunch => "days_since_launch",
            Attribute::HolderGrowthRate => "holder_growth_rate",
            Attribute::SalesVolatility => "sales_volatility",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = MechanismError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| MechanismError::UnknownAttribute(s.to_string()))
    }
}

/// A non-empty, duplicate-free, ordered attribute selection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSelection(Vec<Attribute>);

impl AttributeSelection {
    pub fn new(attrs: Vec<Attribute>) -> Result<Self, MechanismError> {
        if attrs.is_empty() {
            return Err(MechanismError::NoAttributes);
        }
        let mut out: Vec<Attribute> = Vec::with_capacity(attrs.len());
        for a in attrs {
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(Self(out))
    }

    pub fn all() -> Self {
        Self(Attribute::ALL.to_vec())
    }

    /// Parses a comma-separated list of attribute names.
    pub fn parse_list(list: &str) -> Result<Self, MechanismError> {
        let attrs = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(attrs)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.0
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|a| a.name().to_string()).collect()
    }
}

impl Default for AttributeSelection {
    fn default() -> Self {
        Self::all()
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSelection {
    type Error = MechanismError;
    fn try_from(value: Vec<Attribute>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AttributeSelection> for Vec<Attribute> {
    fn from(value: AttributeSelection) -> Self {
        value.0
    }
}

/// Normalized attribute values of one project, aligned with `attribute_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub project: ProjectId,
    pub values: Vec<f64>,
    pub attribute_names: Vec<String>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Days since launch at the window end, at least 1.
pub(crate) fn days_since_launch(launch: NaiveDate, window: &TimeWindow) -> f64 {
    ((window.end - launch).num_days() as f64).max(1.0)
}

/// Raw attribute value over the days of `window` on or after the launch.
fn raw_attribute(dataset: &Dataset, project: &ProjectId, window: &TimeWindow, attr: Attribute) -> f64 {
    let launch = dataset
        .project(project)
        .map(|p| p.launch_date)
        .unwrap_or(window.start);
    let Some(active) = window.intersect(&TimeWindow {
        start: launch,
        end: window.end,
    }) else {
        return 0.0;
    };
    let roles = dataset.roles().project(project);
    let days: Vec<NaiveDate> = active.iter_days().collect();
    let per_day = |f: &dyn Fn(NaiveDate) -> f64| -> Vec<f64> { days.iter().map(|&d| f(d)).collect() };
    let present = |f: &dyn Fn(NaiveDate) -> Option<f64>| -> Vec<f64> { days.iter().filter_map(|&d| f(d)).collect() };
    let sales = || per_day(&|d| dataset.stats_on(project, d).map(|s| s.sales_volume).unwrap_or(0.0));

    match attr {
        Attribute::FloorPriceMean => mean(&present(&|d| dataset.stats_on(project, d).map(|s| s.floor_price))),
        Attribute::SalesVolumeMean => mean(&sales()),
        Attribute::WhaleCountMean => {
            mean(&present(&|d| dataset.stats_on(project, d).map(|s| s.whale_count as f64)))
        }
        Attribute::HolderCountMean => {
            mean(&per_day(&|d| roles.map(|r| r.holder_count(d) as f64).unwrap_or(0.0)))
        }
        Attribute::SellerCountMean => {
            mean(&per_day(&|d| roles.map(|r| r.sellers_on(d).len() as f64).unwrap_or(0.0)))
        }
        Attribute::BuyerCountMean => {
            mean(&per_day(&|d| roles.map(|r| r.buyers_on(d).len() as f64).unwrap_or(0.0)))
        }
        Attribute::TransferCountMean => {
            mean(&per_day(&|d| roles.map(|r| r.transfers_on(d) as f64).unwrap_or(0.0)))
        }
        Attribute::PopularityMean => mean(&per_day(&|d| dataset.popularity_on(project, d))),
        Attribute::SentimentMean => mean(&present(&|d| dataset.social_on(project, d).map(|s| s.sentiment))),
        Attribute::DaysSinceLaunch => days_since_launch(launch, window),
        Attribute::HolderGrowthRate => {
            let Some(r) = roles else { return 0.0 };
            let before = active.start.pred_opt().map(|d| r.holder_count(d)).unwrap_or(0) as f64;
            let after = r.holder_count(active.end) as f64;
            (after - before) / before.max(1.0)
        }
        Attribute::SalesVolatility => {
            let s = sales();
            let m = mean(&s);
            (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64).sqrt()
        }
    }
}

/// Attribute vectors for `projects`, each attribute min-max normalized across
/// the given project set.
pub fn window_attributes(
    dataset: &Dataset,
    projects: &[ProjectId],
    window: &TimeWindow,
    selection: &AttributeSelection,
) -> Result<Vec<AttributeVector>, MechanismError> {
    let names = selection.names();
    let mut columns = Vec::with_capacity(selection.attributes().len());
    for &attr in selection.attributes() {
        let raw: Vec<f64> = projects
            .iter()
            .map(|p| raw_attribute(dataset, p, window, attr))
            .collect();
        columns.push(minmax_normalize(&raw)?.values);
    }
    Ok(projects
        .iter()
        .enumerate()
        .map(|(i, p)| AttributeVector {
            project: p.clone(),
            values: columns.iter().map(|c| c[i]).collect(),
            attribute_names: names.clone(),
        })
        .collect())
}
