//! Multi-rater annotated datasets: ingestion, synthetic generation, splitting.
//!
//! A dataset file is line-delimited JSON. The first line is a header
//! `{"num_classes": N, "feature_dim": d}`, every following line one sample
//! `{"id": "...", "features": [...], "annotation_counts": [...]}`.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ProbVector;

/// One sample with its feature vector and the raw rater votes per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSample {
    pub id: String,
    pub features: Vec<f64>,
    pub annotation_counts: Vec<u64>,
}

impl AnnotatedSample {
    pub fn total_annotations(&self) -> u64 {
        self.annotation_counts.iter().sum()
    }

    /// Relative vote frequency per class.
    pub fn annotation_distribution(&self) -> ProbVector {
        let total = self.total_annotations() as f64;
        ProbVector::from_raw(self.annotation_counts.iter().map(|&c| c as f64 / total).collect())
    }

    /// Class with the most votes; the lowest index wins ties.
    pub fn modal_label(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.annotation_counts.iter().enumerate().skip(1) {
            if c > self.annotation_counts[best] {
                best = i;
            }
        }
        best
    }

    fn validate(&self, num_classes: usize, feature_dim: usize) -> Result<()> {
        if self.annotation_counts.len() != num_classes {
            return Err(Error::InvalidSample {
                id: self.id.clone(),
                reason: format!(
                    "{} annotation counts, dataset has {num_classes} classes",
                    self.annotation_counts.len()
                ),
            });
        }
        if self.features.len() != feature_dim {
            return Err(Error::InvalidSample {
                id: self.id.clone(),
                reason: format!("{} features, dataset declares {feature_dim}", self.features.len()),
            });
        }
        if self.features.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidSample { id: self.id.clone(), reason: "non-finite feature".into() });
        }
        if self.total_annotations() == 0 {
            return Err(Error::NoAnnotations { id: self.id.clone() });
        }
        Ok(())
    }
}

/// Free-function form of [`AnnotatedSample::annotation_distribution`].
pub fn annotation_distribution(sample: &AnnotatedSample) -> ProbVector {
    sample.annotation_distribution()
}

/// Free-function form of [`AnnotatedSample::modal_label`].
pub fn modal_label(sample: &AnnotatedSample) -> usize {
    sample.modal_label()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    num_classes: usize,
    feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<AnnotatedSample>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(num_classes: usize, feature_dim: usize, samples: Vec<AnnotatedSample>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes", "must be positive"));
        }
        if feature_dim == 0 {
            return Err(Error::invalid("feature_dim", "must be positive"));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for sample in &samples {
            sample.validate(num_classes, feature_dim)?;
            if !seen.insert(sample.id.as_str()) {
                return Err(Error::InvalidSample { id: sample.id.clone(), reason: "duplicate id".into() });
            }
        }
        Ok(Dataset { samples, num_classes, feature_dim })
    }

    pub fn samples(&self) -> &[AnnotatedSample] {
        &self.samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn modal_labels(&self) -> Vec<usize> {
        self.samples.iter().map(AnnotatedSample::modal_label).collect()
    }

    /// Serializes to the line-delimited record format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Header { num_classes: self.num_classes, feature_dim: self.feature_dim };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for sample in &self.samples {
            out.push_str(&serde_json::to_string(sample).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writer
            .write_all(self.to_jsonl().as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads a dataset file, keeping samples in file order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub(crate) fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (header_idx, header_line) = lines.next().ok_or_else(|| Error::EmptyFile { path: path.into() })?;
    let header: Header =
        serde_json::from_str(header_line).map_err(|e| Error::parse(path, header_idx + 1, e))?;
    let mut samples = Vec::new();
    for (idx, line) in lines {
        let sample: AnnotatedSample =
            serde_json::from_str(line).map_err(|e| Error::parse(path, idx + 1, e))?;
        samples.push(sample);
    }
    Dataset::new(header.num_classes, header.feature_dim, samples)
}

/// Parameters of the Gaussian-cluster generator with simulated raters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    pub rater_count: u64,
    /// Probability that a rater votes for some class other than the true one.
    pub noise: f64,
    pub seed: u64,
    /// Standard deviation of each centroid coordinate around the origin.
    pub centroid_spread: f64,
    /// Standard deviation of samples around their centroid.
    pub cluster_std: f64,
}

impl SyntheticConfig {
    pub fn new(
        num_classes: usize,
        samples_per_class: usize,
        feature_dim: usize,
        rater_count: u64,
        noise: f64,
        seed: u64,
    ) -> Self {
        SyntheticConfig {
            num_classes,
            samples_per_class,
            feature_dim,
            rater_count,
            noise,
            seed,
            centroid_spread: 1.0,
            cluster_std: 1.0,
        }
    }
}

/// Draws a labelled cluster dataset.
///
/// Centroids come from an isotropic normal around the origin. Each sample is
/// its centroid plus isotropic noise, and each of the `rater_count` raters
/// votes the true class with probability `1 - noise`. A confused rater picks
/// one of the other classes with weight inversely proportional to the
/// distance between the sample and that class's centroid.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::invalid("noise", format!("{} is outside [0, 1]", cfg.noise)));
    }
    if cfg.num_classes < 2 {
        return Err(Error::invalid("num_classes", "need at least 2 classes"));
    }
    if cfg.rater_count < 1 {
        return Err(Error::invalid("rater_count", "need at least 1 rater"));
    }
    if cfg.feature_dim == 0 {
        return Err(Error::invalid("feature_dim", "must be positive"));
    }
    let spread = Normal::new(0.0, cfg.centroid_spread).map_err(|e| Error::invalid("centroid_spread", e))?;
    let jitter = Normal::new(0.0, cfg.cluster_std).map_err(|e| Error::invalid("cluster_std", e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let centroids: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| (0..cfg.feature_dim).map(|_| spread.sample(&mut rng)).collect())
        .collect();

    let width = (cfg.num_classes * cfg.samples_per_class).max(1).to_string().len();
    let mut samples = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    for class in 0..cfg.num_classes {
        for _ in 0..cfg.samples_per_class {
            let features: Vec<f64> = centroids[class].iter().map(|c| c + jitter.sample(&mut rng)).collect();
            let confusion: Vec<f64> = centroids
                .iter()
                .map(|c| 1.0 / (euclidean(&features, c) + 1e-6))
                .collect();
            let confuse = WeightedIndex::new(&confusion).expect("positive confusion weights");
            let mut counts = vec![0u64; cfg.num_classes];
            for _ in 0..cfg.rater_count {
                let vote = if rng.random::<f64>() < cfg.noise { confuse.sample(&mut rng) } else { class };
                counts[vote] += 1;
            }
            let id = format!("s{:0width$}", samples.len(), width = width);
            samples.push(AnnotatedSample { id, features, annotation_counts: counts });
        }
    }
    Dataset::new(cfg.num_classes, cfg.feature_dim, samples)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Test-part size for `n` samples: `floor((1 - train_fraction) * n)`, at least 1.
pub fn test_size(n: usize, train_fraction: f64) -> usize {
    // guard against (1 - 0.8) * 10 = 1.9999999999999996
    let raw = ((1.0 - train_fraction) * n as f64 + 1e-9).floor() as usize;
    raw.max(1)
}

/// Shuffles by `seed` and partitions into (train, test).
///
/// Both parts keep the original relative order of their samples.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction", format!("{train_fraction} is outside (0, 1)")));
    }
    let n = dataset.len();
    let n_test = test_size(n, train_fraction);
    if n_test >= n {
        return Err(Error::invalid(
            "train_fraction",
            format!("{train_fraction} leaves no training samples out of {n}"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, test_idx) = order.split_at(n - n_test);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        let samples = idx.into_iter().map(|i| dataset.samples[i].clone()).collect();
        Dataset { samples, num_classes: dataset.num_classes, feature_dim: dataset.feature_dim }
    };
    Ok((pick(train_idx), pick(test_idx)))
}
