//! Candidate selection relative to the seed documents, and the mapping of
//! publication dates onto the scaled optimization timeline.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, WeightedDocument};
use crate::error::{Error, Result};
use crate::topics::{kl_divergence, TopicDistribution};

pub const DEFAULT_DATE_MAX: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateFilterConfig {
    /// Largest admissible `KL(T_d || T_seed)`; `f64::INFINITY` disables the
    /// topical criterion.
    pub alpha: f64,
    /// Documents must be published strictly after this date. `None` means no
    /// lower bound.
    pub t_min: Option<NaiveDate>,
    pub date_max: f64,
}

impl Default for CandidateFilterConfig {
    fn default() -> Self {
        CandidateFilterConfig {
            alpha: f64::INFINITY,
            t_min: None,
            date_max: DEFAULT_DATE_MAX,
        }
    }
}

impl CandidateFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.date_max > 0.0 && self.date_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "date_max must be positive, got {}",
                self.date_max
            )));
        }
        Ok(())
    }
}

/// `t_min` expressed as a look-back window ending at the newest seed.
pub fn t_min_from_lookback(
    corpus: &Corpus,
    seeds: &[String],
    lookback_days: u64,
) -> Result<NaiveDate> {
    let newest = newest_seed_date(corpus, seeds)?;
    Ok(newest - chrono::Days::new(lookback_days))
}

fn newest_seed_date(corpus: &Corpus, seeds: &[String]) -> Result<NaiveDate> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "at least one seed id is required".into(),
        ));
    }
    seeds
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .map(|d| d.timestamp)
                .ok_or_else(|| Error::UnknownDocument(id.clone()))
        })
        .try_fold(NaiveDate::MIN, |acc, t| t.map(|t| acc.max(t)))
}

/// Documents eligible for story fitting, in date order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub documents: Vec<WeightedDocument>,
    pub scaled_times: Vec<f64>,
    pub seed_indices: Vec<usize>,
    pub date_max: f64,
}

impl CandidateSet {
    /// Builds a candidate set directly from documents, sorting them by
    /// `(timestamp, id)` and scaling their dates.
    pub fn from_documents(
        mut documents: Vec<WeightedDocument>,
        seed_ids: &[String],
        date_max: f64,
    ) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCandidateSet);
        }
        documents.sort_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        let dates: Vec<NaiveDate> = documents.iter().map(|d| d.timestamp).collect();
        let scaled_times = normalize_dates(&dates, date_max);
        let seed_indices = seed_ids
            .iter()
            .map(|id| {
                documents
                    .iter()
                    .position(|d| &d.doc_id == id)
                    .ok_or_else(|| Error::UnknownDocument(id.clone()))
            })
            .collect::<Result<BTreeSet<usize>>>()?
            .into_iter()
            .collect();
        Ok(CandidateSet {
            documents,
            scaled_times,
            seed_indices,
            date_max,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn seed_ids(&self) -> Vec<String> {
        self.seed_indices
            .iter()
            .map(|&i| self.documents[i].doc_id.clone())
            .collect()
    }
}

/// Keeps document `d` iff `t_min < t_d < max(t_seed)` and
/// `KL(T_d || T_s) <= alpha` for every seed `s`. Seeds are always kept.
///
/// `topics` is aligned with `corpus.documents()`; `None` skips the topical
/// criterion.
pub fn filter_candidates(
    corpus: &Corpus,
    topics: Option<&[TopicDistribution]>,
    seeds: &[String],
    config: &CandidateFilterConfig,
) -> Result<CandidateSet> {
    config.validate()?;
    let newest = newest_seed_date(corpus, seeds)?;
    let seed_positions: BTreeSet<usize> = seeds
        .iter()
        .map(|id| corpus.position(id).expect("checked above"))
        .collect();
    if let Some(topics) = topics {
        if topics.len() != corpus.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                actual: topics.len(),
            });
        }
    }

    let mut kept = Vec::new();
    for (i, doc) in corpus.documents().iter().enumerate() {
        if seed_positions.contains(&i) {
            kept.push(doc.clone());
            continue;
        }
        let after_min = config.t_min.is_none_or(|t_min| t_min < doc.timestamp);
        if !(after_min && doc.timestamp < newest) {
            continue;
        }
        let topical = match topics {
            None => true,
            Some(_) if config.alpha == f64::INFINITY => true,
            Some(topics) => {
                let mut ok = true;
                for &s in &seed_positions {
                    if kl_divergence(&topics[i], &topics[s])? > config.alpha {
                        ok = false;
                        break;
                    }
                }
                ok
            }
        };
        if topical {
            kept.push(doc.clone());
        }
    }
    if kept.len() == seed_positions.len() {
        log::warn!("candidate set contains only the seed documents");
    }
    if kept.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    CandidateSet::from_documents(kept, seeds, config.date_max)
}

/// Affine map of dates onto `[0, date_max]`: earliest → 0, latest →
/// `date_max`. All-equal dates map to 0.
pub fn normalize_dates(dates: &[NaiveDate], date_max: f64) -> Vec<f64> {
    let Some(min) = dates.iter().min() else {
        return Vec::new();
    };
    let max = dates.iter().max().expect("non-empty");
    let span = (*max - *min).num_days() as f64;
    dates
        .iter()
        .map(|d| {
            if span == 0.0 {
                0.0
            } else {
                (*d - *min).num_days() as f64 / span * date_max
            }
        })
        .collect()
}
