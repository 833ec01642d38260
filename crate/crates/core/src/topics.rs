//! Per-document topic distributions and the KL divergence used to compare them.
//!
//! Distributions are either ingested with the corpus or produced by a small
//! collapsed Gibbs sampler for LDA that treats entity mentions as tokens.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Floor applied to every component before taking logarithms.
pub const KL_EPSILON: f64 = 1e-10;

const SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopicDistribution {
    probabilities: Vec<f64>,
}

impl TopicDistribution {
    /// Validates non-negativity and unit sum (within 1e-6).
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidConfig("empty topic distribution".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(
                "topic probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "topic probabilities sum to {sum}, not 1"
            )));
        }
        Ok(TopicDistribution { probabilities })
    }

    pub fn uniform(k: usize) -> Self {
        TopicDistribution {
            probabilities: vec![1.0 / k as f64; k],
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn argmax(&self) -> usize {
        self.probabilities
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}

fn floored(p: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = p.iter().map(|&x| x.max(KL_EPSILON)).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

/// `KL(p || q)` in nats, after flooring both arguments at [`KL_EPSILON`] and
/// renormalizing.
pub fn kl_divergence(p: &TopicDistribution, q: &TopicDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    let p = floored(&p.probabilities);
    let q = floored(&q.probabilities);
    let kl: f64 = p.iter().zip(&q).map(|(&a, &b)| a * (a / b).ln()).sum();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub num_topics: usize,
    pub iterations: usize,
    pub rng_seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_topics: 10,
            iterations: 200,
            rng_seed: 0,
        }
    }
}

/// Collapsed Gibbs sampling for LDA with symmetric priors
/// `alpha = 50 / K` and `beta = 0.01`.
///
/// Every entity mention counts as one token (a mention with count 3 yields
/// three tokens). The returned distributions are the smoothed topic counts of
/// the final sweep: `(n_dk + alpha) / (n_d + K alpha)`.
pub fn fit_reference_lda(corpus: &Corpus, config: &LdaConfig) -> Result<Vec<TopicDistribution>> {
    let k = config.num_topics;
    if k < 2 {
        return Err(Error::InvalidConfig("LDA needs at least 2 topics".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = corpus.vocabulary();
    let v = vocab.len();
    if k > v {
        return Err(Error::TooManyTopics {
            topics: k,
            vocabulary: v,
        });
    }
    let alpha = 50.0 / k as f64;
    let beta = 0.01;
    let v_beta = v as f64 * beta;

    let tokens: Vec<Vec<usize>> = corpus
        .raw_documents()
        .iter()
        .map(|doc| {
            doc.entity_counts()
                .into_iter()
                .flat_map(|(name, count)| {
                    let idx = vocab.index_of(&name).expect("vocabulary built from corpus");
                    std::iter::repeat_n(idx, count as usize)
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut doc_topic = vec![vec![0u32; k]; tokens.len()];
    let mut topic_word = vec![vec![0u32; v]; k];
    let mut topic_total = vec![0u32; k];
    let mut assignment: Vec<Vec<usize>> = Vec::with_capacity(tokens.len());

    for (d, doc) in tokens.iter().enumerate() {
        let mut z_doc = Vec::with_capacity(doc.len());
        for &w in doc {
            let z = rng.random_range(0..k);
            doc_topic[d][z] += 1;
            topic_word[z][w] += 1;
            topic_total[z] += 1;
            z_doc.push(z);
        }
        assignment.push(z_doc);
    }

    let mut weights = vec![0.0; k];
    for _ in 0..config.iterations {
        for (d, doc) in tokens.iter().enumerate() {
            for (pos, &w) in doc.iter().enumerate() {
                let old = assignment[d][pos];
                doc_topic[d][old] -= 1;
                topic_word[old][w] -= 1;
                topic_total[old] -= 1;

                let mut total = 0.0;
                for (t, weight) in weights.iter_mut().enumerate() {
                    *weight = (doc_topic[d][t] as f64 + alpha) * (topic_word[t][w] as f64 + beta)
                        / (topic_total[t] as f64 + v_beta);
                    total += *weight;
                }
                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, &weight) in weights.iter().enumerate() {
                    if u < weight {
                        new = t;
                        break;
                    }
                    u -= weight;
                }

                assignment[d][pos] = new;
                doc_topic[d][new] += 1;
                topic_word[new][w] += 1;
                topic_total[new] += 1;
            }
        }
    }

    Ok(tokens
        .iter()
        .enumerate()
        .map(|(d, doc)| {
            if doc.is_empty() {
                log::warn!(
                    "document {} has no entities; assigning a uniform topic distribution",
                    corpus.documents()[d].doc_id
                );
                return TopicDistribution::uniform(k);
            }
            let denom = doc.len() as f64 + k as f64 * alpha;
            TopicDistribution {
                probabilities: doc_topic[d]
                    .iter()
                    .map(|&c| (c as f64 + alpha) / denom)
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, EntityMention, EntityType};
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::Rng;

    fn dist(p: &[f64]) -> TopicDistribution {
        TopicDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn kl_identity_is_zero() {
        assert_eq!(
            kl_divergence(&dist(&[0.5, 0.5]), &dist(&[0.5, 0.5])).unwrap(),
            0.0
        );
    }

    #[test]
    fn kl_point_mass_against_uniform() {
        let kl = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-8, "{kl}");
    }

    #[test]
    fn kl_dimension_mismatch() {
        let err = kl_divergence(&dist(&[1.0]), &dist(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn distribution_validation() {
        assert!(TopicDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(TopicDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(TopicDistribution::new(vec![]).is_err());
    }

    fn simplex(k: usize) -> impl Strategy<Value = TopicDistribution> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", |raw| {
            let s: f64 = raw.iter().sum();
            (s > 1e-9).then(|| TopicDistribution {
                probabilities: raw.iter().map(|x| x / s).collect(),
            })
        })
    }

    proptest! {
        #[test]
        fn kl_non_negative_and_zero_on_self(p in simplex(5), q in simplex(5)) {
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        }
    }

    fn doc(id: usize, entities: &[(String, u32)]) -> Document {
        Document {
            id: format!("d{id:03}"),
            timestamp: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Days::new(id as u64),
            title: String::new(),
            raw_text: None,
            entities: entities
                .iter()
                .map(|(n, c)| EntityMention {
                    name: n.clone(),
                    entity_type: EntityType::Other,
                    count: *c,
                })
                .collect(),
            topics: None,
        }
    }

    /// Two planted clusters with disjoint vocabularies; cluster = id parity.
    fn two_cluster_corpus() -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let docs = (0..40)
            .map(|i| {
                let cluster = i % 2;
                let ents: Vec<(String, u32)> = (0..6)
                    .map(|_| {
                        let w = rng.random_range(0..8);
                        (format!("c{cluster}_e{w}"), rng.random_range(1..4))
                    })
                    .collect();
                doc(i, &ents)
            })
            .collect();
        Corpus::from_documents(docs).unwrap()
    }

    #[test]
    fn lda_normalized_and_deterministic() {
        let corpus = two_cluster_corpus();
        let cfg = LdaConfig {
            num_topics: 3,
            iterations: 30,
            rng_seed: 5,
        };
        let a = fit_reference_lda(&corpus, &cfg).unwrap();
        let b = fit_reference_lda(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        for t in &a {
            let s: f64 = t.probabilities().iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lda_recovers_planted_clusters() {
        let corpus = two_cluster_corpus();
        let cfg = LdaConfig {
            num_topics: 2,
            iterations: 200,
            rng_seed: 1,
        };
        let topics = fit_reference_lda(&corpus, &cfg).unwrap();
        let planted: Vec<usize> = corpus
            .documents()
            .iter()
            .map(|d| d.doc_id[1..].parse::<usize>().unwrap() % 2)
            .collect();
        let agree = topics
            .iter()
            .zip(&planted)
            .filter(|(t, &c)| t.argmax() == c)
            .count();
        // Topic labels are arbitrary; accept either labelling.
        let best = agree.max(planted.len() - agree);
        assert!(
            best * 10 >= planted.len() * 9,
            "agreement {best}/{}",
            planted.len()
        );
    }

    #[test]
    fn lda_rejects_too_many_topics() {
        let corpus =
            Corpus::from_documents(vec![doc(0, &[("a".into(), 1)]), doc(1, &[("b".into(), 1)])])
                .unwrap();
        let cfg = LdaConfig {
            num_topics: 3,
            iterations: 1,
            rng_seed: 0,
        };
        assert!(matches!(
            fit_reference_lda(&corpus, &cfg),
            Err(Error::TooManyTopics { .. })
        ));
    }

    #[test]
    fn lda_empty_document_is_uniform() {
        let corpus = Corpus::from_documents(vec![
            doc(0, &[("a".into(), 1), ("b".into(), 2)]),
            doc(1, &[]),
        ])
        .unwrap();
        let cfg = LdaConfig {
            num_topics: 2,
            iterations: 5,
            rng_seed: 0,
        };
        let topics = fit_reference_lda(&corpus, &cfg).unwrap();
        assert_eq!(topics[1], TopicDistribution::uniform(2));
    }
}
