use serde::{Deserialize, Serialize};

use super::{IngestError, SocialDayRecord};

/// Weights of the daily engagement counts in the popularity sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopularityWeights {
    pub retweets: f64,
    pub replies: f64,
    pub likes: f64,
    pub quotes: f64,
}

impl Default for PopularityWeights {
    fn default() -> Self {
        Self {
            retweets: 1.0,
            replies: 1.0,
            likes: 1.0,
            quotes: 1.0,
        }
    }
}

impl PopularityWeights {
    pub fn validate(&self) -> Result<(), IngestError> {
        for (name, w) in [
            ("retweets", self.retweets),
            ("replies", self.replies),
            ("likes", self.likes),
            ("quotes", self.quotes),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(IngestError::InvalidWeight(name));
            }
        }
        Ok(())
    }
}

/// Weighted sum of a day's retweets, replies, likes and quotes.
pub fn popularity(record: &SocialDayRecord, weights: &PopularityWeights) -> Result<f64, IngestError> {
    weights.validate()?;
    Ok(weights.retweets * record.retweets as f64
        + weights.replies * record.replies as f64
        + weights.likes * record.likes as f64
        + weights.quotes * record.quotes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProjectId;
    use chrono::NaiveDate;

    fn rec(rt: u64, rp: u64, lk: u64, qt: u64) -> SocialDayRecord {
        SocialDayRecord {
            project: ProjectId::new("0xp").unwrap(),
            date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            retweets: rt,
            replies: rp,
            likes: lk,
            quotes: qt,
            sentiment: 0.0,
        }
    }

    #[test]
    fn examples() {
        let unit = PopularityWeights::default();
        assert_eq!(popularity(&rec(2, 1, 3, 0), &unit).unwrap(), 6.0);
        assert_eq!(popularity(&rec(0, 0, 0, 0), &unit).unwrap(), 0.0);
        let w = PopularityWeights {
            retweets: 2.0,
            replies: 1.0,
            likes: 0.1,
            quotes: 3.0,
        };
        assert!((popularity(&rec(10, 5, 100, 2), &w).unwrap() - 41.0).abs() < 1e-12);
    }

    #[test]
    fn negative_weight_rejected() {
        let w = PopularityWeights {
            likes: -1.0,
            ..Default::default()
        };
        assert_eq!(popularity(&rec(1, 1, 1, 1), &w), Err(IngestError::InvalidWeight("likes")));
    }
}
