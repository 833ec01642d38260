//! Configuration-driven end-to-end run and the artifact formats shared with
//! the command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::{
    filter_candidates, t_min_from_lookback, CandidateFilterConfig, CandidateSet,
};
use crate::corpus::{parse_corpus, Corpus, CorpusFormat};
use crate::error::{Error, Result};
use crate::evaluation::{
    dispersion_coefficient, kmeans_chain_baseline, parse_grid, repeatability_buckets,
    significance_p_value, similarity_chain_baseline, story_chain, Chain, RepeatabilityConfig,
    SignificanceConfig,
};
use crate::objective::{ObjectiveContext, SegmentationConfig};
use crate::optimizer::{extract_story, fit_story, OptimizerConfig, Story, StoryResult};
use crate::prediction::{
    build_pair_table, fit_term_models, predict_future_weights, top_entities, training_documents,
    PredictedEntity, TermModels,
};
use crate::topics::{fit_reference_lda, LdaConfig, TopicDistribution};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum TopicSource {
    /// No topic distributions; only the temporal filter applies.
    #[default]
    None,
    /// The `topics` field of each corpus record.
    Ingested,
    /// A JSON object mapping document id to distribution.
    File { path: PathBuf },
    /// Fit the built-in LDA sampler.
    Lda(LdaConfig),
}

/// Topic distributions aligned with `corpus.documents()`.
pub fn resolve_topics(
    source: &TopicSource,
    corpus: &Corpus,
) -> Result<Option<Vec<TopicDistribution>>> {
    match source {
        TopicSource::None => Ok(None),
        TopicSource::Ingested => {
            let raw = corpus
                .ingested_topics()
                .ok_or_else(|| Error::InvalidConfig("corpus records carry no topics".into()))?;
            raw.into_iter()
                .map(TopicDistribution::new)
                .collect::<Result<_>>()
                .map(Some)
        }
        TopicSource::File { path } => read_topics_file(path, corpus).map(Some),
        TopicSource::Lda(cfg) => fit_reference_lda(corpus, cfg).map(Some),
    }
}

pub fn read_topics_file(path: &Path, corpus: &Corpus) -> Result<Vec<TopicDistribution>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)?;
    corpus
        .documents()
        .iter()
        .map(|d| {
            let p = map.remove(&d.doc_id).ok_or_else(|| {
                Error::InvalidConfig(format!("topics file has no entry for {}", d.doc_id))
            })?;
            TopicDistribution::new(p)
        })
        .collect()
}

pub fn write_topics_file(path: &Path, corpus: &Corpus, topics: &[TopicDistribution]) -> Result<()> {
    let map: BTreeMap<&str, &[f64]> = corpus
        .documents()
        .iter()
        .zip(topics)
        .map(|(d, t)| (d.doc_id.as_str(), t.probabilities()))
        .collect();
    write_json(path, &map)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateSettings {
    /// Maximum KL divergence to every seed; absent disables the topical test.
    pub alpha: Option<f64>,
    pub t_min: Option<NaiveDate>,
    /// Alternative to `t_min`: days before the newest seed.
    pub lookback_days: Option<u64>,
}

impl CandidateSettings {
    pub fn filter_config(
        &self,
        corpus: &Corpus,
        seeds: &[String],
        date_max: f64,
    ) -> Result<CandidateFilterConfig> {
        let t_min = match (self.t_min, self.lookback_days) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "set t_min or lookback_days, not both".into(),
                ));
            }
            (Some(t), None) => Some(t),
            (None, Some(days)) => Some(t_min_from_lookback(corpus, seeds, days)?),
            (None, None) => None,
        };
        let cfg = CandidateFilterConfig {
            alpha: self.alpha.unwrap_or(f64::INFINITY),
            t_min,
            date_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub id: String,
    pub date: NaiveDate,
    pub scaled_time: f64,
}

/// On-disk form of a candidate set; entity weights are recovered from the
/// corpus on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatesArtifact {
    pub date_max: f64,
    pub seed_ids: Vec<String>,
    pub documents: Vec<CandidateEntry>,
}

impl CandidatesArtifact {
    pub fn from_set(set: &CandidateSet) -> Self {
        CandidatesArtifact {
            date_max: set.date_max,
            seed_ids: set.seed_ids(),
            documents: set
                .documents
                .iter()
                .zip(&set.scaled_times)
                .map(|(d, &t)| CandidateEntry {
                    id: d.doc_id.clone(),
                    date: d.timestamp,
                    scaled_time: t,
                })
                .collect(),
        }
    }

    pub fn to_set(&self, corpus: &Corpus) -> Result<CandidateSet> {
        let docs = self
            .documents
            .iter()
            .map(|c| {
                corpus
                    .get(&c.id)
                    .cloned()
                    .ok_or_else(|| Error::UnknownDocument(c.id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        CandidateSet::from_documents(docs, &self.seed_ids, self.date_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    pub enabled: bool,
    /// `start:end:step` thresholds for the dispersion sweep.
    pub theta_grid: String,
    pub kmeans_rng_seed: u64,
    pub significance_samples: usize,
    pub significance_tolerances: Vec<f64>,
    pub significance_rng_seed: u64,
    /// `start:end:step` distance thresholds for the repeatability sweep.
    pub repeatability_thresholds: String,
    /// Defaults to the number of interior turning points.
    pub repeatability_min_matches: Option<usize>,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            enabled: true,
            theta_grid: "0:1:0.05".into(),
            kmeans_rng_seed: 0,
            significance_samples: 10_000,
            significance_tolerances: vec![1.0, 2.0, 5.0, 10.0, 15.0, 20.0],
            significance_rng_seed: 0,
            repeatability_thresholds: "0:100:1".into(),
            repeatability_min_matches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionSettings {
    pub enabled: bool,
    pub gap_days: f64,
    pub top: usize,
}

impl Default for PredictionSettings {
    fn default() -> Self {
        PredictionSettings {
            enabled: true,
            gap_days: 7.0,
            top: 20,
        }
    }
}

fn default_top_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus_path: PathBuf,
    #[serde(default)]
    pub topics: TopicSource,
    pub seed_ids: Vec<String>,
    #[serde(default)]
    pub candidates: CandidateSettings,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default)]
    pub prediction: PredictionSettings,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken relative to the config
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.corpus_path);
        rebase(&mut cfg.output_dir);
        if let TopicSource::File { path } = &mut cfg.topics {
            rebase(path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.corpus_path.is_file() {
            return Err(Error::InvalidConfig(format!(
                "corpus file {} does not exist",
                self.corpus_path.display()
            )));
        }
        if let TopicSource::File { path } = &self.topics {
            if !path.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "topics file {} does not exist",
                    path.display()
                )));
            }
        }
        if self.seed_ids.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one seed id is required".into(),
            ));
        }
        if let Some(alpha) = self.candidates.alpha {
            if alpha.is_nan() || alpha < 0.0 {
                return Err(Error::InvalidConfig("alpha must be >= 0".into()));
            }
        }
        if self.candidates.t_min.is_some() && self.candidates.lookback_days.is_some() {
            return Err(Error::InvalidConfig(
                "set t_min or lookback_days, not both".into(),
            ));
        }
        self.segmentation.validate()?;
        self.optimizer.validate()?;
        if self.top_k < 1 {
            return Err(Error::InvalidConfig("top_k must be >= 1".into()));
        }
        if self.evaluation.enabled {
            parse_grid(&self.evaluation.theta_grid)?;
            parse_grid(&self.evaluation.repeatability_thresholds)?;
            for &tolerance in &self.evaluation.significance_tolerances {
                SignificanceConfig {
                    num_samples: self.evaluation.significance_samples,
                    tolerance,
                }
                .validate()?;
            }
            if self.evaluation.repeatability_min_matches == Some(0) {
                return Err(Error::InvalidConfig(
                    "repeatability_min_matches must be >= 1".into(),
                ));
            }
        }
        if self.prediction.enabled && !(self.prediction.gap_days > 0.0) {
            return Err(Error::InvalidConfig(
                "prediction gap_days must be positive".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Chains produced by one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodChains {
    pub method: String,
    pub chains: Vec<Chain>,
}

/// The story's own chain plus both baselines from every seed, each baseline
/// matched to the story chain's length.
pub fn build_chains(
    story: &Story,
    corpus: &Corpus,
    kmeans_rng_seed: u64,
) -> Result<Vec<MethodChains>> {
    let diffusion = story_chain(story, corpus)?;
    let length = diffusion.len();
    let mut similarity = Vec::new();
    let mut kmeans = Vec::new();
    for seed in &story.seed_ids {
        similarity.push(similarity_chain_baseline(corpus, seed, length)?);
        let k = length.saturating_sub(1).max(2);
        match kmeans_chain_baseline(corpus, seed, k, kmeans_rng_seed) {
            Ok(chain) => kmeans.push(chain),
            Err(e) => log::warn!("k-means baseline for seed {seed} skipped: {e}"),
        }
    }
    Ok(vec![
        MethodChains {
            method: "diffusion".into(),
            chains: vec![diffusion],
        },
        MethodChains {
            method: "similarity".into(),
            chains: similarity,
        },
        MethodChains {
            method: "kmeans".into(),
            chains: kmeans,
        },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub theta: f64,
    pub mean_psi: f64,
    pub method: String,
}

/// Mean dispersion per method and threshold; chains shorter than three
/// documents are skipped.
pub fn dispersion_table(
    sets: &[MethodChains],
    corpus: &Corpus,
    thetas: &[f64],
) -> Result<Vec<DispersionRow>> {
    let mut rows = Vec::new();
    for set in sets {
        let usable: Vec<&Chain> = set.chains.iter().filter(|c| c.len() >= 3).collect();
        if usable.len() < set.chains.len() {
            log::warn!(
                "{}: {} chain(s) shorter than 3 documents skipped",
                set.method,
                set.chains.len() - usable.len()
            );
        }
        if usable.is_empty() {
            continue;
        }
        for &theta in thetas {
            let mut total = 0.0;
            for chain in &usable {
                total += dispersion_coefficient(chain, corpus, theta)?;
            }
            rows.push(DispersionRow {
                theta,
                mean_psi: total / usable.len() as f64,
                method: set.method.clone(),
            });
        }
    }
    Ok(rows)
}

pub fn dispersion_csv(rows: &[DispersionRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    finish_csv(w)
}

/// Two-column sweep with the given header.
pub fn sweep_csv(header: [&str; 2], rows: &[(f64, f64)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("CSV buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn significance_sweep(
    turning_points: &[f64],
    date_max: f64,
    num_samples: usize,
    tolerances: &[f64],
    rng_seed: u64,
) -> Result<Vec<(f64, f64)>> {
    tolerances
        .iter()
        .map(|&tolerance| {
            let cfg = SignificanceConfig {
                num_samples,
                tolerance,
            };
            Ok((
                tolerance,
                significance_p_value(turning_points, date_max, &cfg, rng_seed)?,
            ))
        })
        .collect()
}

pub fn repeatability_sweep(
    vectors: &[Vec<f64>],
    thresholds: &[f64],
    min_matches: usize,
) -> Result<Vec<(f64, f64)>> {
    thresholds
        .iter()
        .map(|&distance_threshold| {
            let cfg = RepeatabilityConfig {
                distance_threshold,
                min_matches,
            };
            Ok((
                distance_threshold,
                repeatability_buckets(vectors, &cfg)? as f64,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub entities: Vec<PredictedEntity>,
    pub gap_days: f64,
    pub seed_id: String,
    /// Set when nothing could be predicted for the seed.
    pub no_overlap: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Trains on all segments but the last and predicts entity weights for the
/// newest seed `gap_days` ahead.
pub fn predict_from_story(
    story: &Story,
    corpus: &Corpus,
    gap_days: f64,
    top: usize,
) -> Result<PredictionReport> {
    let seed = story
        .seed_ids
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .ok_or_else(|| Error::UnknownDocument(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .max_by(|a, b| {
            a.timestamp
                .cmp(&b.timestamp)
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        })
        .ok_or_else(|| Error::InvalidConfig("story has no seeds".into()))?;
    let train = training_documents(story, corpus)?;
    let table = build_pair_table(&train);
    let (models, note) = if table.is_empty() {
        (
            TermModels::default(),
            Some("training segments contain no time-ordered document pairs".to_string()),
        )
    } else {
        (fit_term_models(&table)?, None)
    };
    let prediction = predict_future_weights(seed, gap_days, &models)?;
    let note = note.or_else(|| {
        prediction
            .no_overlap
            .then(|| "no entity of the seed document appears in the training set".to_string())
    });
    Ok(PredictionReport {
        entities: top_entities(&prediction, corpus.vocabulary(), top),
        gap_days,
        seed_id: seed.doc_id.clone(),
        no_overlap: prediction.no_overlap,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub version: String,
    pub config: RunConfig,
    pub artifacts: Vec<String>,
    pub candidates: usize,
    pub restarts_completed: usize,
    pub best_restart: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub story: Story,
    pub result: StoryResult,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(Error),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json(&self.dir.join(name), value)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn mark_partial(&self) {
        for name in &self.written {
            let from = self.dir.join(name);
            let to = self.dir.join(format!("{name}.partial"));
            if let Err(e) = fs::rename(&from, &to) {
                log::warn!("could not rename {}: {e}", from.display());
            }
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, PipelineError> {
    r.map_err(|source| PipelineError::Stage {
        stage: name,
        source,
    })
}

/// Runs every stage and writes its artifacts to `config.output_dir`.
///
/// An invalid config writes nothing. A failing stage leaves what was written
/// so far renamed with a `.partial` suffix.
pub fn run_pipeline(config: &RunConfig) -> std::result::Result<RunSummary, PipelineError> {
    config.validate().map_err(PipelineError::Config)?;
    let hash = config.hash().map_err(PipelineError::Config)?;
    fs::create_dir_all(&config.output_dir)
        .map_err(|e| PipelineError::Config(Error::io(&config.output_dir, e)))?;
    let mut out = Artifacts {
        dir: config.output_dir.clone(),
        written: Vec::new(),
    };
    let result = run_stages(config, &hash, &mut out);
    if result.is_err() {
        out.mark_partial();
    }
    result
}

fn run_stages(
    config: &RunConfig,
    hash: &str,
    out: &mut Artifacts,
) -> std::result::Result<RunSummary, PipelineError> {
    let seg = &config.segmentation;
    let corpus = stage(
        "ingest",
        parse_corpus(&config.corpus_path, CorpusFormat::Jsonl),
    )?;
    let topics = stage("topics", resolve_topics(&config.topics, &corpus))?;
    if let (Some(t), TopicSource::Lda(_)) = (&topics, &config.topics) {
        stage(
            "topics",
            write_topics_file(&out.dir.join("topics.json"), &corpus, t),
        )?;
        out.written.push("topics.json".into());
    }

    let candidates = stage(
        "candidates",
        config
            .candidates
            .filter_config(&corpus, &config.seed_ids, seg.date_max)
            .and_then(|f| filter_candidates(&corpus, topics.as_deref(), &config.seed_ids, &f)),
    )?;
    stage(
        "candidates",
        out.json(
            "candidates.json",
            &CandidatesArtifact::from_set(&candidates),
        ),
    )?;

    let result = stage("fit", fit_story(&candidates, seg, &config.optimizer))?;
    let story = stage(
        "fit",
        extract_story(&result, &candidates, seg, config.top_k),
    )?;
    stage("fit", out.json("story.json", &story))?;
    let terms = stage(
        "fit",
        ObjectiveContext::new(&candidates, seg)
            .and_then(|ctx| ctx.breakdown(&result.best_solution)),
    )?;
    stage("fit", out.json("terms.json", &terms))?;

    if config.evaluation.enabled {
        stage("evaluate", evaluate(config, &corpus, &story, &result, out))?;
    }
    if config.prediction.enabled {
        let report = stage(
            "predict",
            predict_from_story(
                &story,
                &corpus,
                config.prediction.gap_days,
                config.prediction.top,
            ),
        )?;
        stage("predict", out.json("prediction.json", &report))?;
    }

    let mut artifacts = out.written.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        config_sha256: hash.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        artifacts: artifacts.clone(),
        candidates: candidates.len(),
        restarts_completed: result.all_restart_solutions.len(),
        best_restart: result.best_restart,
    };
    stage("manifest", out.json("manifest.json", &manifest))?;
    Ok(RunSummary {
        output_dir: config.output_dir.clone(),
        artifacts,
        story,
        result,
    })
}

fn evaluate(
    config: &RunConfig,
    corpus: &Corpus,
    story: &Story,
    result: &StoryResult,
    out: &mut Artifacts,
) -> Result<()> {
    let ev = &config.evaluation;
    let chains = build_chains(story, corpus, ev.kmeans_rng_seed)?;
    out.json("chains.json", &chains)?;
    let thetas = parse_grid(&ev.theta_grid)?;
    out.text(
        "dispersion.csv",
        &dispersion_csv(&dispersion_table(&chains, corpus, &thetas)?)?,
    )?;

    let interior = &story.turning_points[1..story.turning_points.len() - 1];
    let significance = if interior.is_empty() {
        Vec::new()
    } else {
        significance_sweep(
            interior,
            config.segmentation.date_max,
            ev.significance_samples,
            &ev.significance_tolerances,
            ev.significance_rng_seed,
        )?
    };
    out.text(
        "significance.csv",
        &sweep_csv(["beta", "p_value"], &significance)?,
    )?;

    let vectors = result.turning_point_vectors();
    let repeatability = if interior.is_empty() {
        Vec::new()
    } else {
        let min_matches = ev.repeatability_min_matches.unwrap_or(interior.len());
        repeatability_sweep(
            &vectors,
            &parse_grid(&ev.repeatability_thresholds)?,
            min_matches,
        )?
    };
    out.text(
        "repeatability.csv",
        &sweep_csv(["zeta", "buckets"], &repeatability)?,
    )?;
    Ok(())
}
