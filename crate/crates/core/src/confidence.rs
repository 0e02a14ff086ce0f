//! Human and model confidence, per sample.
//!
//! Human confidence is read off the rater votes: the vector `h` is the vote
//! distribution and the scalar is its population standard deviation across
//! the `N` classes (high when raters agree). Model confidence comes from a
//! baseline classifier trained beforehand: the vector `m` is its softmax
//! output and the scalar is the probability it gives the modal label.
//!
//! Tables persist as a sidecar file: a header `{"kind": .., "num_classes": N}`
//! followed by one `{"id": .., "vector": [..], "scalar": ..}` line per sample.

use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedSample, Dataset};
use crate::error::{Error, Result};
use crate::prob::{check_simplex, ProbVector, SIMPLEX_TOLERANCE};
use crate::trainer::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceKind {
    Model,
    Human,
}

impl ConfidenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceKind::Model => "model",
            ConfidenceKind::Human => "human",
        }
    }
}

impl fmt::Display for ConfidenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Population standard deviation of the entries of `dist`.
///
/// Zero for the uniform distribution, `sqrt(N - 1) / N` for a one-hot one.
pub fn human_confidence_scalar(dist: &ProbVector) -> f64 {
    let n = dist.len() as f64;
    let mean = dist.iter().sum::<f64>() / n;
    (dist.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n).sqrt()
}

pub fn human_confidence_vector(sample: &AnnotatedSample) -> ProbVector {
    sample.annotation_distribution()
}

/// Upper end of the human-confidence scalar for `N` classes.
pub fn max_human_confidence(num_classes: usize) -> f64 {
    let n = num_classes as f64;
    (n - 1.0).sqrt() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEntry {
    pub vector: ProbVector,
    pub scalar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    kind: ConfidenceKind,
    num_classes: usize,
    entries: IndexMap<String, ConfidenceEntry>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ConfidenceKind,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    vector: Vec<f64>,
    scalar: f64,
}

impl ConfidenceTable {
    pub fn new(kind: ConfidenceKind, num_classes: usize) -> Self {
        ConfidenceTable { kind, num_classes, entries: IndexMap::new() }
    }

    /// Human confidence for every sample, straight from the votes.
    pub fn human(dataset: &Dataset) -> Self {
        let mut table = Self::new(ConfidenceKind::Human, dataset.num_classes());
        for sample in dataset.samples() {
            let vector = human_confidence_vector(sample);
            let scalar = human_confidence_scalar(&vector);
            table.entries.insert(sample.id.clone(), ConfidenceEntry { vector, scalar });
        }
        table
    }

    /// Inserts an entry after checking its length, simplex membership and scalar range.
    pub fn insert(&mut self, id: impl Into<String>, entry: ConfidenceEntry) -> Result<()> {
        let id = id.into();
        self.validate_entry(&id, &entry)?;
        self.entries.insert(id, entry);
        Ok(())
    }

    fn validate_entry(&self, id: &str, entry: &ConfidenceEntry) -> Result<()> {
        let bad = |reason: String| Error::InvalidSample { id: id.to_string(), reason };
        if entry.vector.len() != self.num_classes {
            return Err(bad(format!("vector has {} entries, expected {}", entry.vector.len(), self.num_classes)));
        }
        check_simplex(entry.vector.as_slice(), SIMPLEX_TOLERANCE).map_err(|e| bad(e.to_string()))?;
        let upper = match self.kind {
            ConfidenceKind::Model => 1.0,
            ConfidenceKind::Human => max_human_confidence(self.num_classes) + 1e-12,
        };
        if !(entry.scalar >= 0.0 && entry.scalar <= upper) {
            return Err(bad(format!("{} confidence {} outside [0, {upper}]", self.kind, entry.scalar)));
        }
        Ok(())
    }

    pub fn kind(&self) -> ConfidenceKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ConfidenceEntry> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ConfidenceEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Looks up every sample of `dataset` in order.
    ///
    /// Fails on the first sample without an entry, or when the table has
    /// entries for ids outside the dataset.
    pub fn join<'a>(&'a self, dataset: &Dataset) -> Result<Vec<&'a ConfidenceEntry>> {
        if self.num_classes != dataset.num_classes() {
            return Err(Error::LengthMismatch { expected: dataset.num_classes(), actual: self.num_classes });
        }
        let joined = dataset
            .samples()
            .iter()
            .map(|s| self.entries.get(&s.id).ok_or_else(|| Error::MissingConfidence { id: s.id.clone() }))
            .collect::<Result<Vec<_>>>()?;
        if self.entries.len() != dataset.len() {
            let ids: std::collections::HashSet<&str> = dataset.samples().iter().map(|s| s.id.as_str()).collect();
            if let Some(extra) = self.entries.keys().find(|k| !ids.contains(k.as_str())) {
                return Err(Error::UnexpectedConfidence { id: extra.clone() });
            }
        }
        Ok(joined)
    }

    /// Like [`join`](Self::join) but tolerates entries for ids outside the dataset,
    /// so a table computed on a full dataset serves any of its splits.
    pub fn join_subset<'a>(&'a self, dataset: &Dataset) -> Result<Vec<&'a ConfidenceEntry>> {
        if self.num_classes != dataset.num_classes() {
            return Err(Error::LengthMismatch { expected: dataset.num_classes(), actual: self.num_classes });
        }
        dataset
            .samples()
            .iter()
            .map(|s| self.entries.get(&s.id).ok_or_else(|| Error::MissingConfidence { id: s.id.clone() }))
            .collect()
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header { kind: self.kind, num_classes: self.num_classes };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for (id, entry) in &self.entries {
            let record = Record { id: id.clone(), vector: entry.vector.as_slice().to_vec(), scalar: entry.scalar };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub(crate) fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (idx, header) = lines.next().ok_or_else(|| Error::EmptyFile { path: path.into() })?;
        let header: Header = serde_json::from_str(header).map_err(|e| Error::parse(path, idx + 1, e))?;
        let mut table = Self::new(header.kind, header.num_classes);
        for (idx, line) in lines {
            let record: Record = serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e))?;
            let entry = ConfidenceEntry { vector: ProbVector::from_raw(record.vector), scalar: record.scalar };
            if table.entries.contains_key(&record.id) {
                return Err(Error::parse(path, idx + 1, format!("duplicate id `{}`", record.id)));
            }
            table.insert(record.id, entry).map_err(|e| Error::parse(path, idx + 1, e))?;
        }
        Ok(table)
    }
}

/// Runs `model` over `dataset`: the vector is the softmax output, the scalar
/// its entry at the sample's modal label.
pub fn precompute_model_confidence(model: &ModelParams, dataset: &Dataset) -> Result<ConfidenceTable> {
    if model.input_dim() != dataset.feature_dim() {
        return Err(Error::LengthMismatch { expected: dataset.feature_dim(), actual: model.input_dim() });
    }
    if model.num_classes() != dataset.num_classes() {
        return Err(Error::LengthMismatch { expected: dataset.num_classes(), actual: model.num_classes() });
    }
    let mut table = ConfidenceTable::new(ConfidenceKind::Model, dataset.num_classes());
    for sample in dataset.samples() {
        let vector = model.forward(&sample.features)?;
        let scalar = vector[sample.modal_label()];
        table.entries.insert(sample.id.clone(), ConfidenceEntry { vector, scalar });
    }
    Ok(table)
}
