//! The training loop: per-epoch target construction, curriculum gating,
//! mini-batch SGD with momentum and a step learning-rate schedule.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceKind, ConfidenceTable};
use crate::curriculum::CurriculumSchedule;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::prob::ProbVector;
use crate::smoothing::{hc_smooth, mc_smooth, one_hot, uniform_smooth, SmoothingConfig};

use super::model::{init_model, loss_and_gradient, sgd_step, BatchItem, ModelParams, Velocity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// One-hot targets.
    Ce,
    /// Uniform label smoothing.
    Ls,
    /// Smoothing weighted by model confidence.
    Mcls,
    /// Smoothing weighted by human confidence.
    Hcls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Iid,
    /// Curriculum ranked by model confidence.
    Mccl,
    /// Curriculum ranked by human confidence.
    Hccl,
}

impl Strategy {
    pub fn criterion(self) -> Option<ConfidenceKind> {
        match self {
            Strategy::Iid => None,
            Strategy::Mccl => Some(ConfidenceKind::Model),
            Strategy::Hccl => Some(ConfidenceKind::Human),
        }
    }
}

impl LossKind {
    pub fn confidence(self) -> Option<ConfidenceKind> {
        match self {
            LossKind::Ce | LossKind::Ls => None,
            LossKind::Mcls => Some(ConfidenceKind::Model),
            LossKind::Hcls => Some(ConfidenceKind::Human),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Fraction of samples admitted at epoch 0.
    pub easy_ratio: f64,
    /// Epoch from which every sample is admitted.
    pub end_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    /// Hidden layer widths; empty means multinomial logistic regression.
    pub hidden_dims: Vec<usize>,
    pub loss: LossKind,
    pub strategy: Strategy,
    pub smoothing: SmoothingConfig,
    pub curriculum: Option<CurriculumConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            lr_decay_factor: 0.1,
            lr_decay_every: 10,
            hidden_dims: vec![16],
            loss: LossKind::Ce,
            strategy: Strategy::Iid,
            smoothing: SmoothingConfig::default(),
            curriculum: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be finite and positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", format!("{} is outside [0, 1)", self.momentum)));
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return Err(Error::invalid("lr_decay_factor", "must be finite and positive"));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::invalid("lr_decay_every", "must be positive"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden_dims", "widths must be positive"));
        }
        self.smoothing.validate()?;
        if self.strategy != Strategy::Iid && self.curriculum.is_none() {
            return Err(Error::MissingInput(format!(
                "curriculum settings (easy ratio and ending epoch) for strategy {:?}",
                self.strategy
            )));
        }
        Ok(())
    }

    pub fn dims(&self, dataset: &Dataset) -> Vec<usize> {
        let mut dims = vec![dataset.feature_dim()];
        dims.extend(&self.hidden_dims);
        dims.push(dataset.num_classes());
        dims
    }
}

/// `learning_rate * lr_decay_factor ^ floor(epoch / lr_decay_every)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let drops = epoch / cfg.lr_decay_every.max(1);
    cfg.learning_rate * cfg.lr_decay_factor.powi(drops as i32)
}

/// Tables the chosen loss and strategy draw on.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfidenceTables<'a> {
    pub model: Option<&'a ConfidenceTable>,
    pub human: Option<&'a ConfidenceTable>,
}

impl<'a> ConfidenceTables<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    fn get(&self, kind: ConfidenceKind) -> Result<&'a ConfidenceTable> {
        let table = match kind {
            ConfidenceKind::Model => self.model,
            ConfidenceKind::Human => self.human,
        }
        .ok_or_else(|| Error::MissingInput(format!("{kind} confidence table")))?;
        if table.kind() != kind {
            return Err(Error::WrongTableKind { expected: kind.as_str(), actual: table.kind().as_str() });
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub mu: f64,
    pub included_fraction: f64,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e)))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainHistory { records })
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    splitmix64(seed ^ splitmix64(epoch as u64 + 1))
}

fn init_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0xA5A5_A5A5_A5A5_A5A5)
}

/// Resumable training state. [`train`] drives it for `cfg.epochs` epochs.
#[derive(Debug, Clone)]
pub struct Trainer<'d> {
    dataset: &'d Dataset,
    cfg: TrainConfig,
    labels: Vec<usize>,
    onehots: Vec<ProbVector>,
    loss_confidence: Option<Vec<ProbVector>>,
    scores: Option<Vec<f64>>,
    schedule: Option<CurriculumSchedule>,
    model: ModelParams,
    velocity: Velocity,
    epoch: usize,
    history: TrainHistory,
}

impl<'d> Trainer<'d> {
    pub fn new(dataset: &'d Dataset, cfg: TrainConfig, tables: ConfidenceTables<'_>) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::invalid("dataset", "no samples to train on"));
        }
        let labels = dataset.modal_labels();
        let onehots = labels
            .iter()
            .map(|&l| one_hot(l, dataset.num_classes()))
            .collect::<Result<Vec<_>>>()?;

        let loss_confidence = match cfg.loss.confidence() {
            Some(kind) => {
                let joined = tables.get(kind)?.join_subset(dataset)?;
                Some(joined.into_iter().map(|e| e.vector.clone()).collect())
            }
            None => None,
        };
        let (scores, schedule) = match cfg.strategy.criterion() {
            Some(kind) => {
                let scores: Vec<f64> = tables.get(kind)?.join_subset(dataset)?.iter().map(|e| e.scalar).collect();
                let cl = cfg.curriculum.expect("validated above");
                let schedule = CurriculumSchedule::from_scores(&scores, cl.easy_ratio, cl.end_epoch, kind)?;
                (Some(scores), Some(schedule))
            }
            None => (None, None),
        };

        let model = init_model(&cfg.dims(dataset), init_seed(cfg.seed))?;
        let velocity = Velocity::zeros_like(&model);
        Ok(Trainer {
            dataset,
            cfg,
            labels,
            onehots,
            loss_confidence,
            scores,
            schedule,
            model,
            velocity,
            epoch: 0,
            history: TrainHistory::default(),
        })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> Option<&CurriculumSchedule> {
        self.schedule.as_ref()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Drops curriculum gating; later epochs run exactly as iid training would.
    pub fn disable_curriculum(&mut self) {
        self.cfg.strategy = Strategy::Iid;
        self.scores = None;
        self.schedule = None;
    }

    pub fn into_parts(self) -> (ModelParams, TrainHistory) {
        (self.model, self.history)
    }

    fn mu(&self) -> f64 {
        self.schedule.as_ref().map_or(0.0, CurriculumSchedule::mu)
    }

    fn target(&self, i: usize) -> Result<ProbVector> {
        let p = &self.onehots[i];
        let s = &self.cfg.smoothing;
        match self.cfg.loss {
            LossKind::Ce => Ok(p.clone()),
            LossKind::Ls => uniform_smooth(p, s.alpha),
            LossKind::Mcls => mc_smooth(p, &self.conf_vector(i), s),
            LossKind::Hcls => hc_smooth(p, &self.conf_vector(i), s),
        }
    }

    fn conf_vector(&self, i: usize) -> ProbVector {
        self.loss_confidence.as_ref().expect("table joined in new")[i].clone()
    }

    /// Runs one epoch and returns its record.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.epoch;
        let lr = lr_at(epoch, &self.cfg);
        let mu = self.mu();
        let included: Vec<bool> = match &self.scores {
            Some(scores) => scores.iter().map(|&s| s >= mu).collect(),
            None => vec![true; self.dataset.len()],
        };
        let included_fraction = included.iter().filter(|&&b| b).count() as f64 / included.len() as f64;

        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(self.cfg.seed, epoch)));

        let targets = (0..self.dataset.len()).map(|i| self.target(i)).collect::<Result<Vec<_>>>()?;
        let samples = self.dataset.samples();
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            if !chunk.iter().any(|&i| included[i]) {
                continue;
            }
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&i| BatchItem {
                    features: &samples[i].features,
                    target: targets[i].as_slice(),
                    included: included[i],
                })
                .collect();
            let outcome = loss_and_gradient(&self.model, &batch)?;
            if !outcome.loss_sum.is_finite() || outcome.gradients.0.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericalAbort { epoch, reason: format!("batch loss {}", outcome.loss_sum) });
            }
            loss_sum += outcome.loss_sum;
            loss_count += outcome.included;
            sgd_step(&mut self.model, &outcome.gradients, &mut self.velocity, lr, self.cfg.momentum)?;
            if !self.model.is_finite() {
                return Err(Error::NumericalAbort { epoch, reason: "non-finite parameters after update".into() });
            }
        }
        let loss = if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 };

        if let Some(schedule) = &mut self.schedule {
            schedule.advance();
        }
        let correct = samples
            .iter()
            .zip(&self.labels)
            .map(|(s, &label)| Ok((self.model.forward(&s.features)?.argmax() == label) as usize))
            .sum::<Result<usize>>()?;
        let record = EpochRecord {
            epoch,
            lr,
            mu,
            included_fraction,
            loss,
            train_acc: correct as f64 / samples.len() as f64,
        };
        self.history.records.push(record);
        self.epoch += 1;
        Ok(record)
    }
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(
    dataset: &Dataset,
    cfg: &TrainConfig,
    tables: ConfidenceTables<'_>,
) -> Result<(ModelParams, TrainHistory)> {
    let mut trainer = Trainer::new(dataset, cfg.clone(), tables)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_parts())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probs: ProbVector,
    pub predicted: usize,
}

/// Model output for every sample, in dataset order.
pub fn predict_all(model: &ModelParams, dataset: &Dataset) -> Result<Vec<Prediction>> {
    if model.input_dim() != dataset.feature_dim() {
        return Err(Error::LengthMismatch { expected: dataset.feature_dim(), actual: model.input_dim() });
    }
    if model.num_classes() != dataset.num_classes() {
        return Err(Error::LengthMismatch { expected: dataset.num_classes(), actual: model.num_classes() });
    }
    dataset
        .samples()
        .iter()
        .map(|s| {
            let probs = model.forward(&s.features)?;
            Ok(Prediction { id: s.id.clone(), predicted: probs.argmax(), probs })
        })
        .collect()
}
