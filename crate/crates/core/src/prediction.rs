//! Future entity weights from per-entity linear models trained on
//! time-ordered document pairs.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntityVocabulary, WeightedDocument};
use crate::error::{Error, Result};
use crate::optimizer::Story;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub past_entity: usize,
    pub future_entity: usize,
    pub past_weight: f64,
    pub future_weight: f64,
    /// Days between the two documents, always positive.
    pub date_gap: f64,
}

/// `future_weight ≈ intercept + weight_coefficient·past_weight + gap_coefficient·gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermModel {
    pub future_entity: usize,
    /// `(intercept, weight_coefficient, gap_coefficient)`.
    pub coefficients: [f64; 3],
    pub training_rows: usize,
    pub past_entities: BTreeSet<usize>,
}

impl TermModel {
    pub fn predict(&self, past_weight: f64, date_gap: f64) -> f64 {
        let [b0, b1, b2] = self.coefficients;
        b0 + b1 * past_weight + b2 * date_gap
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TermModels {
    pub models: BTreeMap<usize, TermModel>,
    /// Future entities with fewer than two training rows.
    pub skipped: Vec<usize>,
}

/// One row for every entity pair across every strictly time-ordered pair
/// of documents.
pub fn build_pair_table(docs: &[&WeightedDocument]) -> Vec<PairRow> {
    let mut rows = Vec::new();
    for past in docs {
        for future in docs {
            if past.timestamp >= future.timestamp {
                continue;
            }
            let gap = (future.timestamp - past.timestamp).num_days() as f64;
            for (pe, pw) in past.weights.iter() {
                for (fe, fw) in future.weights.iter() {
                    rows.push(PairRow {
                        past_entity: pe,
                        future_entity: fe,
                        past_weight: pw,
                        future_weight: fw,
                        date_gap: gap,
                    });
                }
            }
        }
    }
    rows
}

/// Least squares with the minimum-norm solution on rank-deficient designs.
pub fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let eps = largest * f64::EPSILON * design.nrows().max(design.ncols()) as f64;
    svd.solve(target, eps)
        .map_err(|e| Error::InvalidConfig(format!("least squares failed: {e}")))
}

pub fn fit_term_models(table: &[PairRow]) -> Result<TermModels> {
    if table.is_empty() {
        return Err(Error::InvalidConfig("pair table is empty".into()));
    }
    let mut by_entity: BTreeMap<usize, Vec<&PairRow>> = BTreeMap::new();
    for row in table {
        by_entity.entry(row.future_entity).or_default().push(row);
    }
    let mut out = TermModels::default();
    for (entity, rows) in by_entity {
        if rows.len() < 2 {
            out.skipped.push(entity);
            continue;
        }
        let design = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
            0 => 1.0,
            1 => rows[i].past_weight,
            _ => rows[i].date_gap,
        });
        let target = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.future_weight));
        let beta = least_squares(&design, &target)?;
        out.models.insert(
            entity,
            TermModel {
                future_entity: entity,
                coefficients: [beta[0], beta[1], beta[2]],
                training_rows: rows.len(),
                past_entities: rows.iter().map(|r| r.past_entity).collect(),
            },
        );
    }
    if !out.skipped.is_empty() {
        log::info!(
            "skipped {} entities with fewer than 2 training rows",
            out.skipped.len()
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub weights: BTreeMap<usize, f64>,
    /// Set when the seed shares no entity with any model's training rows.
    pub no_overlap: bool,
}

/// Averages each model over the seed entities it was trained on; results are
/// clamped to `[0, 1]`.
pub fn predict_future_weights(
    seed: &WeightedDocument,
    date_gap: f64,
    models: &TermModels,
) -> Result<Prediction> {
    if !(date_gap > 0.0) {
        return Err(Error::InvalidConfig("date gap must be positive".into()));
    }
    let mut weights = BTreeMap::new();
    for (&entity, model) in &models.models {
        let inputs: Vec<f64> = seed
            .weights
            .iter()
            .filter(|(e, _)| model.past_entities.contains(e))
            .map(|(_, w)| model.predict(w, date_gap))
            .collect();
        if !inputs.is_empty() {
            let mean = inputs.iter().sum::<f64>() / inputs.len() as f64;
            weights.insert(entity, mean.clamp(0.0, 1.0));
        }
    }
    let no_overlap = weights.is_empty();
    if no_overlap {
        log::warn!(
            "no entity of seed {} appears in the training table",
            seed.doc_id
        );
    }
    Ok(Prediction {
        weights,
        no_overlap,
    })
}

/// Ranked documents of every segment but the last, the training split.
pub fn training_documents<'a>(
    story: &Story,
    corpus: &'a Corpus,
) -> Result<Vec<&'a WeightedDocument>> {
    let n = story.segments.len().saturating_sub(1);
    story.segments[..n]
        .iter()
        .flat_map(|s| &s.docs)
        .map(|d| {
            corpus
                .get(&d.id)
                .ok_or_else(|| Error::UnknownDocument(d.id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedEntity {
    pub name: String,
    pub predicted_weight: f64,
}

/// Highest predicted weights first, ties by name.
pub fn top_entities(
    prediction: &Prediction,
    vocabulary: &EntityVocabulary,
    top: usize,
) -> Vec<PredictedEntity> {
    let mut out: Vec<PredictedEntity> = prediction
        .weights
        .iter()
        .map(|(&e, &w)| PredictedEntity {
            name: vocabulary.name(e).unwrap_or("?").to_string(),
            predicted_weight: w,
        })
        .collect();
    out.sort_by(|a, b| {
        b.predicted_weight
            .total_cmp(&a.predicted_weight)
            .then_with(|| a.name.cmp(&b.name))
    });
    out.truncate(top);
    out
}
