//! Quantitative story evaluation: dispersion of document chains, baseline
//! chain builders, turning-point significance and restart repeatability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, WeightedDocument};
use crate::error::{Error, Result};
use crate::objective::soergel;
use crate::optimizer::Story;

/// Documents ordered oldest to newest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chain {
    pub doc_ids: Vec<String>,
    /// Set when a builder ran out of eligible documents before reaching the
    /// requested length.
    #[serde(default)]
    pub truncated: bool,
}

impl Chain {
    pub fn new(doc_ids: Vec<String>) -> Self {
        Chain {
            doc_ids,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub num_samples: usize,
    pub tolerance: f64,
}

impl SignificanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 1 {
            return Err(Error::InvalidConfig("num_samples must be >= 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityConfig {
    pub distance_threshold: f64,
    pub min_matches: usize,
}

impl RepeatabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_threshold >= 0.0) {
            return Err(Error::InvalidConfig(
                "distance_threshold must be >= 0".into(),
            ));
        }
        if self.min_matches < 1 {
            return Err(Error::InvalidConfig("min_matches must be >= 1".into()));
        }
        Ok(())
    }
}

fn lookup<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a WeightedDocument> {
    corpus
        .get(id)
        .ok_or_else(|| Error::UnknownDocument(id.to_string()))
}

/// Dispersion coefficient of a chain at distance threshold `theta`.
///
/// Every non-adjacent pair `(i, j)` closer than `theta` adds `1/(n+i-j)`;
/// the sum is at most `n-2`, so the result lies in `[0, 1]` and 1 means no
/// long-range redundancy.
pub fn dispersion_coefficient(chain: &Chain, corpus: &Corpus, theta: f64) -> Result<f64> {
    let n = chain.len();
    if n < 3 {
        return Err(Error::ChainTooShort(n));
    }
    let docs = chain
        .doc_ids
        .iter()
        .map(|id| lookup(corpus, id))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    for i in 0..n - 2 {
        for j in i + 2..n {
            if soergel(&docs[i].weights, &docs[j].weights) < theta {
                sum += 1.0 / (n + i - j) as f64;
            }
        }
    }
    Ok(1.0 - sum / (n - 2) as f64)
}

/// Mean dispersion over `chains` at each threshold.
pub fn mean_dispersion(chains: &[Chain], corpus: &Corpus, thetas: &[f64]) -> Result<Vec<f64>> {
    if chains.is_empty() {
        return Err(Error::InvalidConfig("no chains to evaluate".into()));
    }
    thetas
        .iter()
        .map(|&theta| {
            let total = chains
                .iter()
                .map(|c| dispersion_coefficient(c, corpus, theta))
                .sum::<Result<f64>>()?;
            Ok(total / chains.len() as f64)
        })
        .collect()
}

/// Walks backwards from the seed, each step taking the Soergel-nearest
/// unused document strictly older than the current head (ties by id).
pub fn similarity_chain_baseline(corpus: &Corpus, seed_id: &str, length: usize) -> Result<Chain> {
    if length < 1 {
        return Err(Error::InvalidConfig("chain length must be >= 1".into()));
    }
    let mut head = lookup(corpus, seed_id)?;
    let mut picked = vec![head.doc_id.clone()];
    while picked.len() < length {
        let next = corpus
            .documents()
            .iter()
            .filter(|d| d.timestamp < head.timestamp)
            .map(|d| (soergel(&head.weights, &d.weights), d))
            .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.doc_id.cmp(&b.doc_id)));
        match next {
            Some((_, d)) => {
                picked.push(d.doc_id.clone());
                head = d;
            }
            None => break,
        }
    }
    let truncated = picked.len() < length;
    if truncated {
        log::warn!(
            "similarity chain from {seed_id} stopped at {} of {length} documents",
            picked.len()
        );
    }
    picked.reverse();
    Ok(Chain {
        doc_ids: picked,
        truncated,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| (c, squared_distance(point, centroid)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("at least one centroid")
}

/// Dense entity features plus a time column standardized to unit variance.
fn kmeans_features(docs: &[&WeightedDocument], vocab_len: usize) -> Vec<Vec<f64>> {
    let days: Vec<f64> = docs
        .iter()
        .map(|d| (d.timestamp - docs[0].timestamp).num_days() as f64)
        .collect();
    let mean = days.iter().sum::<f64>() / days.len() as f64;
    let var = days.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / days.len() as f64;
    let sd = var.sqrt();
    docs.iter()
        .zip(&days)
        .map(|(d, &t)| {
            let mut row = vec![0.0; vocab_len + 1];
            for (e, w) in d.weights.iter() {
                row[e] = w;
            }
            row[vocab_len] = if sd > 0.0 { (t - mean) / sd } else { 0.0 };
            row
        })
        .collect()
}

const KMEANS_MAX_ITERATIONS: usize = 100;

/// Lloyd's algorithm with k-means++ seeding; returns the cluster of every
/// point and the final centroids.
fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
    }

    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut reseeded = vec![false; k];
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignment;
        assignment = next;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut repaired = false;
        for c in 0..k {
            if counts[c] == 0 {
                if reseeded[c] {
                    return Err(Error::EmptyCluster);
                }
                reseeded[c] = true;
                repaired = true;
                // The point worst served by its current centroid.
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, squared_distance(p, &centroids[assignment[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty")
                    .0;
                centroids[c] = points[far].clone();
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed && !repaired {
            break;
        }
    }
    Ok((assignment, centroids))
}

/// k-means over the documents older than the seed; the document nearest each
/// centroid represents its cluster, and the representatives (ordered by date)
/// are followed by the seed.
pub fn kmeans_chain_baseline(
    corpus: &Corpus,
    seed_id: &str,
    k: usize,
    rng_seed: u64,
) -> Result<Chain> {
    if k < 2 {
        return Err(Error::InvalidConfig("k must be >= 2".into()));
    }
    let seed = lookup(corpus, seed_id)?;
    let docs: Vec<&WeightedDocument> = corpus
        .documents()
        .iter()
        .filter(|d| d.timestamp < seed.timestamp)
        .collect();
    if docs.len() < k {
        return Err(Error::InvalidConfig(format!(
            "k-means needs at least {k} documents older than the seed, found {}",
            docs.len()
        )));
    }
    let points = kmeans_features(&docs, corpus.vocabulary().len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (assignment, centroids) = kmeans(&points, k, &mut rng)?;

    let mut reps: Vec<&WeightedDocument> = (0..k)
        .map(|c| {
            (0..points.len())
                .filter(|&i| assignment[i] == c)
                .min_by(|&a, &b| {
                    squared_distance(&points[a], &centroids[c])
                        .total_cmp(&squared_distance(&points[b], &centroids[c]))
                        .then_with(|| docs[a].doc_id.cmp(&docs[b].doc_id))
                })
                .map(|i| docs[i])
                .ok_or(Error::EmptyCluster)
        })
        .collect::<Result<_>>()?;
    reps.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let mut doc_ids: Vec<String> = reps.iter().map(|d| d.doc_id.clone()).collect();
    doc_ids.push(seed.doc_id.clone());
    Ok(Chain::new(doc_ids))
}

/// The top-ranked document of each segment plus the seeds, ordered by date.
pub fn story_chain(story: &Story, corpus: &Corpus) -> Result<Chain> {
    let mut docs = Vec::new();
    for id in story
        .segments
        .iter()
        .filter_map(|s| s.docs.first().map(|d| d.id.as_str()))
        .chain(story.seed_ids.iter().map(String::as_str))
    {
        let doc = lookup(corpus, id)?;
        if !docs.iter().any(|d: &&WeightedDocument| d.doc_id == id) {
            docs.push(doc);
        }
    }
    docs.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    Ok(Chain::new(
        docs.into_iter().map(|d| d.doc_id.clone()).collect(),
    ))
}

/// Fraction of samples whose every coordinate lies within `tolerance` of
/// the observed turning points.
pub fn significance_from_samples(
    turning_points: &[f64],
    samples: &[Vec<f64>],
    tolerance: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no samples".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        if s.len() != turning_points.len() {
            return Err(Error::DimensionMismatch {
                expected: turning_points.len(),
                actual: s.len(),
            });
        }
        if s.iter()
            .zip(turning_points)
            .all(|(a, b)| (a - b).abs() <= tolerance)
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Monte-Carlo p-value: the chance that sorted uniform points on
/// `[0, date_max]` land within tolerance of `turning_points`.
pub fn significance_p_value(
    turning_points: &[f64],
    date_max: f64,
    config: &SignificanceConfig,
    rng_seed: u64,
) -> Result<f64> {
    config.validate()?;
    if !(date_max > 0.0) {
        return Err(Error::InvalidConfig("date_max must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sample = vec![0.0; turning_points.len()];
    let mut hits = 0usize;
    for _ in 0..config.num_samples {
        for x in sample.iter_mut() {
            *x = rng.random_range(0.0..=date_max);
        }
        sample.sort_by(f64::total_cmp);
        if sample
            .iter()
            .zip(turning_points)
            .all(|(a, b)| (a - b).abs() <= config.tolerance)
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / config.num_samples as f64)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Number of connected components when vectors agreeing (closer than the
/// threshold) in at least `min_matches` positions are linked.
pub fn repeatability_buckets(vectors: &[Vec<f64>], config: &RepeatabilityConfig) -> Result<usize> {
    config.validate()?;
    let Some(first) = vectors.first() else {
        return Err(Error::InvalidConfig("no vectors to bucket".into()));
    };
    if let Some(bad) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            actual: bad.len(),
        });
    }
    let mut parent: Vec<usize> = (0..vectors.len()).collect();
    let mut components = vectors.len();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let matches = vectors[i]
                .iter()
                .zip(&vectors[j])
                .filter(|(a, b)| (*a - *b).abs() < config.distance_threshold)
                .count();
            if matches >= config.min_matches {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                    components -= 1;
                }
            }
        }
    }
    Ok(components)
}

/// Parses `start:end:step` into an inclusive grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("grid must look like start:end:step, got {spec:?}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
