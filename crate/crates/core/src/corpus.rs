//! Document corpus: JSONL ingestion, entity vocabulary and tf-idf weighting.
//!
//! Every document is reduced to a sparse vector of entity weights. Weights
//! are raw counts scaled by `ln(|D| / df)` and then divided by the L2 norm of
//! the document vector, so entities that occur in every document vanish.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Person,
    Organization,
    Location,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub count: u32,
}

/// A dated news article together with the entities mentioned in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub timestamp: NaiveDate,
    pub title: String,
    pub raw_text: Option<String>,
    pub entities: Vec<EntityMention>,
    /// Precomputed topic distribution, when the record carried one.
    pub topics: Option<Vec<f64>>,
}

/// On-disk JSONL shape of a [`Document`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub date: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<EntityMention>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topics: Option<Vec<f64>>,
}

impl From<&Document> for DocumentRecord {
    fn from(doc: &Document) -> Self {
        DocumentRecord {
            id: doc.id.clone(),
            date: doc.timestamp.format("%Y-%m-%d").to_string(),
            title: doc.title.clone(),
            text: doc.raw_text.clone(),
            entities: Some(doc.entities.clone()),
            topics: doc.topics.clone(),
        }
    }
}

impl Document {
    fn from_record(record: DocumentRecord, line: usize) -> Result<Self> {
        let timestamp =
            NaiveDate::parse_from_str(&record.date, "%Y-%m-%d").map_err(|e| Error::Parse {
                line,
                message: format!("invalid date \"{}\": {e}", record.date),
            })?;
        let entities = match (record.entities, &record.text) {
            (Some(entities), _) => entities,
            (None, Some(text)) => fallback_extract_entities(text),
            (None, None) => Vec::new(),
        };
        if let Some(bad) = entities.iter().find(|e| e.count == 0) {
            return Err(Error::Parse {
                line,
                message: format!("entity \"{}\" has count 0", bad.name),
            });
        }
        Ok(Document {
            id: record.id,
            timestamp,
            title: record.title,
            raw_text: record.text,
            entities,
            topics: record.topics,
        })
    }

    /// Entity counts merged by name. Repeated mentions of one name are summed.
    pub fn entity_counts(&self) -> Vec<(String, u32)> {
        let mut merged: BTreeMap<&str, u32> = BTreeMap::new();
        for e in &self.entities {
            *merged.entry(e.name.as_str()).or_default() += e.count;
        }
        merged
            .into_iter()
            .map(|(name, count)| (name.to_string(), count))
            .collect()
    }
}

/// Sparse non-negative vector over entity indices, sorted by index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary `(index, value)` pairs. Zero values are
    /// dropped and duplicate indices are summed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut map: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *map.entry(i).or_default() += v;
        }
        SparseVector {
            entries: map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub index: usize,
    pub document_frequency: usize,
}

/// Entity names with dense indices (assigned in name order) and document
/// frequencies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityVocabulary {
    entries: BTreeMap<String, VocabEntry>,
    names: Vec<String>,
    num_documents: usize,
}

impl EntityVocabulary {
    /// Counts document frequencies over per-document entity lists.
    pub fn from_counts(raw_counts: &[Vec<(String, u32)>]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in raw_counts {
            let distinct: HashSet<&str> = doc.iter().map(|(n, _)| n.as_str()).collect();
            for name in distinct {
                *df.entry(name.to_string()).or_default() += 1;
            }
        }
        let names: Vec<String> = df.keys().cloned().collect();
        let entries = df
            .into_iter()
            .enumerate()
            .map(|(index, (name, document_frequency))| {
                (
                    name,
                    VocabEntry {
                        index,
                        document_frequency,
                    },
                )
            })
            .collect();
        EntityVocabulary {
            entries,
            names,
            num_documents: raw_counts.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn num_documents(&self) -> usize {
        self.num_documents
    }

    pub fn get(&self, name: &str) -> Option<VocabEntry> {
        self.entries.get(name).copied()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get(name).map(|e| e.index)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn idf(&self, name: &str) -> Option<f64> {
        self.get(name)
            .map(|e| idf(self.num_documents, e.document_frequency))
    }
}

/// `ln(num_documents / document_frequency)`.
pub fn idf(num_documents: usize, document_frequency: usize) -> f64 {
    (num_documents as f64 / document_frequency as f64).ln()
}

/// Raw-count tf times natural-log idf, cosine normalized.
///
/// Entities whose idf is zero are dropped, so a document whose entities all
/// occur in every document ends up with an empty vector.
pub fn compute_tf_idf(
    raw_counts: &[Vec<(String, u32)>],
    vocabulary: &EntityVocabulary,
) -> Result<Vec<SparseVector>> {
    raw_counts
        .iter()
        .enumerate()
        .map(|(doc_index, counts)| {
            if counts.is_empty() {
                log::warn!("document #{doc_index} has no entities; its weight vector is empty");
            }
            let mut pairs = Vec::with_capacity(counts.len());
            for (name, count) in counts {
                let entry = vocabulary
                    .get(name)
                    .ok_or_else(|| Error::UnknownEntity(name.clone()))?;
                let w = *count as f64 * idf(vocabulary.num_documents, entry.document_frequency);
                if w > 0.0 {
                    pairs.push((entry.index, w));
                }
            }
            let raw = SparseVector::from_pairs(pairs);
            let norm = raw.norm();
            if norm == 0.0 {
                return Ok(SparseVector::default());
            }
            Ok(SparseVector::from_pairs(
                raw.iter().map(|(i, w)| (i, w / norm)),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDocument {
    pub doc_id: String,
    pub timestamp: NaiveDate,
    pub weights: SparseVector,
}

/// Documents sorted by `(timestamp, id)` with their tf-idf vectors.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<WeightedDocument>,
    raw: Vec<Document>,
    vocabulary: EntityVocabulary,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(mut raw: Vec<Document>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for doc in &raw {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        raw.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));

        let counts: Vec<Vec<(String, u32)>> = raw.iter().map(Document::entity_counts).collect();
        let vocabulary = EntityVocabulary::from_counts(&counts);
        let vectors = compute_tf_idf(&counts, &vocabulary)?;
        let documents: Vec<WeightedDocument> = raw
            .iter()
            .zip(vectors)
            .map(|(doc, weights)| WeightedDocument {
                doc_id: doc.id.clone(),
                timestamp: doc.timestamp,
                weights,
            })
            .collect();
        let by_id = documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        Ok(Corpus {
            documents,
            raw,
            vocabulary,
            by_id,
        })
    }

    pub fn documents(&self) -> &[WeightedDocument] {
        &self.documents
    }

    /// Source records, aligned with [`Corpus::documents`].
    pub fn raw_documents(&self) -> &[Document] {
        &self.raw
    }

    pub fn vocabulary(&self) -> &EntityVocabulary {
        &self.vocabulary
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&WeightedDocument> {
        self.position(id).map(|i| &self.documents[i])
    }

    /// Per-document topic vectors if every record carried one.
    pub fn ingested_topics(&self) -> Option<Vec<Vec<f64>>> {
        self.raw.iter().map(|d| d.topics.clone()).collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for doc in &self.raw {
            out.push_str(&serde_json::to_string(&DocumentRecord::from(doc))?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
}

pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(&text),
    }
}

/// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Corpus> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocumentRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let doc = Document::from_record(record, line_no)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    Corpus::from_documents(docs)
}

const STOPWORDS: &[&str] = &[
    "A", "An", "And", "But", "For", "He", "Her", "His", "I", "If", "In", "It", "Its", "Mr", "Mrs",
    "Ms", "Of", "On", "She", "The", "They", "This", "That", "We", "When", "Which", "Who", "You",
];

/// Capitalized-run entity extraction used when a record has text but no
/// entities.
///
/// Maximal runs of capitalized tokens become entities of type `other`. A run
/// that consists of nothing but the first token of a sentence is skipped,
/// since its capital letter comes from position, and stopwords never start a
/// run.
pub fn fallback_extract_entities(text: &str) -> Vec<EntityMention> {
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut run: Vec<&str> = Vec::new();
    let mut run_starts_sentence = false;
    let mut sentence_start = true;

    let mut flush = |run: &mut Vec<&str>, starts_sentence: bool| {
        if !run.is_empty() && !(starts_sentence && run.len() == 1) {
            let name = run.join(" ");
            if !counts.contains_key(&name) {
                order.push(name.clone());
            }
            *counts.entry(name).or_default() += 1;
        }
        run.clear();
    };

    for raw_token in text.split_whitespace() {
        let ends_sentence = raw_token.ends_with(['.', '!', '?']);
        let token = raw_token.trim_matches(|c: char| !c.is_alphanumeric());
        let capitalized = token.chars().next().is_some_and(char::is_uppercase);
        let is_stop = STOPWORDS.contains(&token);

        if capitalized && !(run.is_empty() && is_stop) {
            if run.is_empty() {
                run_starts_sentence = sentence_start;
            }
            run.push(token);
        } else {
            flush(&mut run, run_starts_sentence);
        }
        // Punctuation inside a run (e.g. "Paris, France") splits it.
        if raw_token.ends_with([',', ';', ':']) || ends_sentence {
            flush(&mut run, run_starts_sentence);
        }
        sentence_start = ends_sentence;
    }
    flush(&mut run, run_starts_sentence);

    order
        .into_iter()
        .map(|name| {
            let count = counts[&name];
            EntityMention {
                name,
                entity_type: EntityType::Other,
                count,
            }
        })
        .collect()
}
