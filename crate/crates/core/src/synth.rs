//! Synthetic story corpora with planted event boundaries.
//!
//! Each cluster covers a day range and draws its core entities from its own
//! vocabulary; a small background vocabulary is shared by all clusters.
//! Documents are spaced evenly inside their cluster's range, so the earliest
//! document sits on day 0 of the first cluster and the latest on the last day
//! of the final cluster.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentRecord, EntityMention, EntityType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Inclusive day offsets `(first, last)` per cluster, in order.
    pub time_ranges: Vec<(u32, u32)>,
    pub docs_per_cluster: usize,
    /// Core entities available to each cluster.
    pub vocab_size: usize,
    pub entities_per_doc: usize,
    pub background_vocab: usize,
    pub background_per_doc: usize,
    /// Core entities each document borrows from the previous cluster.
    pub carryover_per_doc: usize,
    pub start_date: NaiveDate,
    pub rng_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            time_ranges: vec![(0, 30), (35, 65), (70, 100)],
            docs_per_cluster: 20,
            vocab_size: 12,
            entities_per_doc: 4,
            background_vocab: 6,
            background_per_doc: 1,
            carryover_per_doc: 0,
            start_date: NaiveDate::from_ymd_opt(2016, 1, 1).expect("valid date"),
            rng_seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.time_ranges.is_empty() || self.docs_per_cluster == 0 {
            return Err(Error::InvalidConfig(
                "need at least one cluster with documents".into(),
            ));
        }
        if self.time_ranges.iter().any(|(a, b)| a > b) {
            return Err(Error::InvalidConfig("time range start after end".into()));
        }
        if self.time_ranges.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(Error::InvalidConfig(
                "time ranges must be increasing and disjoint".into(),
            ));
        }
        if self.entities_per_doc == 0 || self.entities_per_doc > self.vocab_size {
            return Err(Error::InvalidConfig(
                "entities_per_doc must be in 1..=vocab_size".into(),
            ));
        }
        if self.background_per_doc > self.background_vocab {
            return Err(Error::InvalidConfig(
                "background_per_doc exceeds background_vocab".into(),
            ));
        }
        if self.carryover_per_doc > self.vocab_size {
            return Err(Error::InvalidConfig(
                "carryover_per_doc exceeds vocab_size".into(),
            ));
        }
        Ok(())
    }

    fn first_day(&self) -> u32 {
        self.time_ranges[0].0
    }

    fn last_day(&self) -> u32 {
        self.time_ranges.last().expect("validated").1
    }

    /// Gap midpoints mapped onto `[0, date_max]`.
    pub fn planted_boundaries(&self, date_max: f64) -> Vec<f64> {
        let span = (self.last_day() - self.first_day()) as f64;
        self.time_ranges
            .windows(2)
            .map(|w| {
                let mid = (w[0].1 + w[1].0) as f64 / 2.0 - self.first_day() as f64;
                if span == 0.0 {
                    0.0
                } else {
                    mid / span * date_max
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub boundaries: Vec<f64>,
    pub date_max: f64,
    /// `(doc id, cluster index)` for every generated document.
    pub clusters: Vec<(String, usize)>,
    /// The newest document, a natural seed.
    pub seed_id: String,
}

pub fn core_entity(cluster: usize, j: usize) -> String {
    format!("C{cluster}-E{j:02}")
}

const TYPES: [EntityType; 3] = [
    EntityType::Person,
    EntityType::Organization,
    EntityType::Location,
];

pub fn generate_synthetic_corpus(
    spec: &SynthSpec,
    date_max: f64,
) -> Result<(Vec<Document>, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut docs = Vec::new();
    let mut clusters = Vec::new();

    for (c, &(lo, hi)) in spec.time_ranges.iter().enumerate() {
        for i in 0..spec.docs_per_cluster {
            let day = if spec.docs_per_cluster == 1 {
                lo
            } else {
                lo + ((hi - lo) as f64 * i as f64 / (spec.docs_per_cluster - 1) as f64).round()
                    as u32
            };
            let mut entities: Vec<EntityMention> =
                sample(&mut rng, spec.vocab_size, spec.entities_per_doc)
                    .into_iter()
                    .map(|j| EntityMention {
                        name: core_entity(c, j),
                        entity_type: TYPES[j % TYPES.len()],
                        count: rng.random_range(1..=3),
                    })
                    .collect();
            if c > 0 && spec.carryover_per_doc > 0 {
                for j in sample(&mut rng, spec.vocab_size, spec.carryover_per_doc) {
                    entities.push(EntityMention {
                        name: core_entity(c - 1, j),
                        entity_type: TYPES[j % TYPES.len()],
                        count: 1,
                    });
                }
            }
            if spec.background_per_doc > 0 {
                for j in sample(&mut rng, spec.background_vocab, spec.background_per_doc) {
                    entities.push(EntityMention {
                        name: format!("BG-{j:02}"),
                        entity_type: EntityType::Other,
                        count: 1,
                    });
                }
            }
            let id = format!("c{c}-{i:03}");
            clusters.push((id.clone(), c));
            docs.push(Document {
                title: format!("Synthetic event {c}, report {i}"),
                id,
                timestamp: spec.start_date + chrono::Days::new(day as u64),
                raw_text: None,
                entities,
                topics: None,
            });
        }
    }

    let seed_id = docs
        .iter()
        .max_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)))
        .expect("non-empty")
        .id
        .clone();
    Ok((
        docs,
        GroundTruth {
            boundaries: spec.planted_boundaries(date_max),
            date_max,
            clusters,
            seed_id,
        },
    ))
}

/// Writes `<path>` (JSONL corpus) and `<path>.truth.json` (ground truth).
pub fn write_synthetic_corpus(spec: &SynthSpec, date_max: f64, path: &Path) -> Result<GroundTruth> {
    let (docs, truth) = generate_synthetic_corpus(spec, date_max)?;
    let mut out = String::new();
    for doc in &docs {
        out.push_str(&serde_json::to_string(&DocumentRecord::from(doc))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let truth_path = truth_path(path);
    fs::write(&truth_path, serde_json::to_string_pretty(&truth)?)
        .map_err(|e| Error::io(&truth_path, e))?;
    Ok(truth)
}

pub fn truth_path(corpus_path: &Path) -> std::path::PathBuf {
    let mut name = corpus_path.file_name().unwrap_or_default().to_os_string();
    name.push(".truth.json");
    corpus_path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;
    use crate::objective::soergel;

    #[test]
    fn three_by_twenty() {
        let (docs, truth) = generate_synthetic_corpus(&SynthSpec::default(), 100.0).unwrap();
        assert_eq!(docs.len(), 60);
        assert_eq!(truth.boundaries, [32.5, 67.5]);
        assert_eq!(truth.seed_id, "c2-019");
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        write_synthetic_corpus(&SynthSpec::default(), 100.0, &a).unwrap();
        write_synthetic_corpus(&SynthSpec::default(), 100.0, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 60);
        assert!(truth_path(&a).exists());
    }

    #[test]
    fn clusters_are_separated() {
        let (docs, truth) = generate_synthetic_corpus(&SynthSpec::default(), 100.0).unwrap();
        let corpus = Corpus::from_documents(docs).unwrap();
        let cluster_of = |id: &str| truth.clusters.iter().find(|(d, _)| d == id).unwrap().1;
        let (mut within, mut nw, mut across, mut na) = (0.0, 0, 0.0, 0);
        let d = corpus.documents();
        for i in 0..d.len() {
            for j in i + 1..d.len() {
                let dist = soergel(&d[i].weights, &d[j].weights);
                if cluster_of(&d[i].doc_id) == cluster_of(&d[j].doc_id) {
                    within += dist;
                    nw += 1;
                } else {
                    across += dist;
                    na += 1;
                }
            }
        }
        assert!(across / na as f64 > within / nw as f64);
    }

    #[test]
    fn rejects_overlapping_ranges() {
        let spec = SynthSpec {
            time_ranges: vec![(0, 40), (35, 60)],
            ..Default::default()
        };
        assert!(generate_synthetic_corpus(&spec, 100.0).is_err());
    }
}
