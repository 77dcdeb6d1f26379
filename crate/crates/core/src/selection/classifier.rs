//! Two-layer feed-forward classifier over standardized subclass features.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{select_closest, CandidateSet, SelectionError, SelectionOutcome, Strategy};
use crate::pool::HeuristicPool;
use crate::problems::{feature_vector, standardize, FeatureVector, ProblemInstance, FEATURE_DIM};

pub const CLASSIFIER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label `{0}` is not a pool heuristic")]
    UnknownLabel(String),
    #[error("instance subclass {0} has no pool entry")]
    NotInPool(String),
    #[error("expected {expected} features, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model file is invalid: {0}")]
    Format(String),
    #[error("model schema version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub hidden: usize,
    /// Output column to heuristic id.
    pub ids: Vec<String>,
    /// `input x hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x classes`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 32, learning_rate: 0.1, seed: 0, hidden: 128 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// Mean cross-entropy over the whole training set after each epoch.
    pub losses: Vec<f64>,
}

struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

fn softmax_with_logs(logits: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let log_sum = sum.ln();
    let log_probs: Vec<f64> = logits.iter().map(|z| z - max - log_sum).collect();
    (log_probs.iter().map(|l| l.exp()).collect(), log_probs)
}

impl ClassifierModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(ids: Vec<String>, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = ids.len();
        let mut glorot = |fan_in: usize, fan_out: usize| -> Vec<f64> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect()
        };
        let w1 = glorot(FEATURE_DIM, hidden);
        let w2 = glorot(hidden, c);
        Self { hidden, ids, w1, b1: vec![0.0; hidden], w2, b2: vec![0.0; c] }
    }

    pub fn zeros(ids: Vec<String>, hidden: usize) -> Self {
        let c = ids.len();
        Self { hidden, ids, w1: vec![0.0; FEATURE_DIM * hidden], b1: vec![0.0; hidden], w2: vec![0.0; hidden * c], b2: vec![0.0; c] }
    }

    pub fn classes(&self) -> usize {
        self.ids.len()
    }

    /// All parameters in the order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut rest = p;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let h = self.hidden;
        let c = self.classes();
        let mut z1 = self.b1.clone();
        for (i, xi) in x.iter().enumerate() {
            for (j, z) in z1.iter_mut().enumerate() {
                *z += xi * self.w1[i * h + j];
            }
        }
        let a1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
        let mut z2 = self.b2.clone();
        for (j, aj) in a1.iter().enumerate() {
            if *aj != 0.0 {
                for (k, z) in z2.iter_mut().enumerate() {
                    *z += aj * self.w2[j * c + k];
                }
            }
        }
        let (probs, log_probs) = softmax_with_logs(&z2);
        Activations { z1, a1, probs, log_probs }
    }

    pub fn column_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    fn check(&self) -> Result<(), ClassifierError> {
        let (h, c) = (self.hidden, self.classes());
        if c == 0 || h == 0 {
            return Err(ClassifierError::Format("model needs at least one class and one hidden unit".into()));
        }
        if self.w1.len() != FEATURE_DIM * h || self.b1.len() != h || self.w2.len() != h * c || self.b2.len() != c {
            return Err(ClassifierError::Format("weight shapes do not match the declared sizes".into()));
        }
        if self.params().iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::Format("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Class probabilities for one standardized feature vector.
pub fn classifier_forward(model: &ClassifierModel, features: &[f64]) -> Result<Vec<f64>, ClassifierError> {
    if features.len() != FEATURE_DIM {
        return Err(ClassifierError::Dimension { expected: FEATURE_DIM, actual: features.len() });
    }
    Ok(model.activations(features).probs)
}

/// Mean cross-entropy over `batch` (pairs of features and column index) and
/// its gradient with respect to [`ClassifierModel::params`].
pub fn loss_and_gradient(model: &ClassifierModel, batch: &[([f64; FEATURE_DIM], usize)]) -> (f64, Vec<f64>) {
    let h = model.hidden;
    let c = model.classes();
    let scale = 1.0 / batch.len() as f64;
    let mut gw1 = vec![0.0; model.w1.len()];
    let mut gb1 = vec![0.0; h];
    let mut gw2 = vec![0.0; model.w2.len()];
    let mut gb2 = vec![0.0; c];
    let mut loss = 0.0;
    for (x, y) in batch {
        let act = model.activations(x);
        loss -= act.log_probs[*y] * scale;
        let dz2: Vec<f64> =
            act.probs.iter().enumerate().map(|(k, p)| (p - if k == *y { 1.0 } else { 0.0 }) * scale).collect();
        for (k, d) in dz2.iter().enumerate() {
            gb2[k] += d;
        }
        for j in 0..h {
            let row = &model.w2[j * c..(j + 1) * c];
            if act.a1[j] != 0.0 {
                for (k, d) in dz2.iter().enumerate() {
                    gw2[j * c + k] += act.a1[j] * d;
                }
            }
            if act.z1[j] <= 0.0 {
                continue;
            }
            let dz1: f64 = row.iter().zip(&dz2).map(|(w, d)| w * d).sum();
            gb1[j] += dz1;
            for (i, xi) in x.iter().enumerate() {
                gw1[i * h + j] += xi * dz1;
            }
        }
    }
    (loss, [gw1, gb1, gw2, gb2].concat())
}

fn encode(
    dataset: &[(FeatureVector, String)],
    ids: &[String],
) -> Result<Vec<([f64; FEATURE_DIM], usize)>, ClassifierError> {
    dataset
        .iter()
        .map(|(x, label)| {
            let col = ids.iter().position(|i| i == label).ok_or_else(|| ClassifierError::UnknownLabel(label.clone()))?;
            Ok((x.0, col))
        })
        .collect()
}

/// Mini-batch gradient descent on softmax cross-entropy. `ids` is the label
/// universe (the pool's heuristic ids); it is sorted to fix column order.
pub fn train_classifier(
    dataset: &[(FeatureVector, String)],
    ids: &[String],
    config: &TrainConfig,
) -> Result<TrainOutcome, ClassifierError> {
    if dataset.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    if config.batch_size == 0 || config.hidden == 0 || !(config.learning_rate > 0.0) {
        return Err(ClassifierError::Config("batch size, hidden size and learning rate must be positive".into()));
    }
    let mut ids = ids.to_vec();
    ids.sort();
    ids.dedup();
    let data = encode(dataset, &ids)?;
    let mut model = ClassifierModel::init(ids, config.hidden, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut params = model.params();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data[i]).collect();
            let (_, grad) = loss_and_gradient(&model, &batch);
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
            model.set_params(&params);
        }
        losses.push(loss_and_gradient(&model, &data).0);
    }
    Ok(TrainOutcome { model, losses })
}

/// Training pairs: each instance's standardized declared features, labelled
/// with the pool heuristic assigned to its subclass.
pub fn build_dataset(
    pool: &HeuristicPool,
    instances: &[ProblemInstance],
) -> Result<Vec<(FeatureVector, String)>, ClassifierError> {
    let stats = pool.stats().ok_or(ClassifierError::EmptyDataset)?;
    instances
        .iter()
        .map(|inst| {
            let key = inst.key();
            let entry = pool.lookup(&key).ok_or_else(|| ClassifierError::NotInPool(key.label()))?;
            Ok((standardize(&feature_vector(&key), stats), entry.program.id.clone()))
        })
        .collect()
}

/// Highest-probability candidate id (ties by candidate order). Candidates
/// unknown to the model are skipped; if none is known the closest
/// candidate is returned with the fallback flag.
pub fn select_classifier(
    model: &ClassifierModel,
    candidates: &CandidateSet,
    features: &FeatureVector,
) -> Result<SelectionOutcome, SelectionError> {
    if candidates.is_empty() {
        return Err(SelectionError::NoCandidates);
    }
    let probs = model.activations(&features.0).probs;
    let mut best: Option<(usize, f64)> = None;
    for (index, c) in candidates.entries.iter().enumerate() {
        let Some(col) = model.column_of(&c.heuristic_id) else { continue };
        if best.is_none_or(|(_, p)| probs[col] > p) {
            best = Some((index, probs[col]));
        }
    }
    match best {
        Some((index, _)) => {
            let c = &candidates.entries[index];
            Ok(SelectionOutcome {
                heuristic_id: c.heuristic_id.clone(),
                chosen_key: c.key,
                strategy: Strategy::Classifier,
                queries_used: 0,
                fallback: false,
                candidates: candidates.clone(),
            })
        }
        None => {
            let mut out = select_closest(candidates)?;
            out.strategy = Strategy::Classifier;
            out.fallback = true;
            Ok(out)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Layer {
    weights: Tensor,
    bias: Tensor,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    input_dim: usize,
    hidden: usize,
    ids: Vec<String>,
    layer1: Layer,
    layer2: Layer,
}

impl ClassifierModel {
    pub fn to_json(&self) -> String {
        let c = self.classes();
        let t = |shape: Vec<usize>, data: &[f64]| Tensor { shape, data: data.to_vec() };
        let file = ModelFile {
            schema_version: CLASSIFIER_SCHEMA_VERSION,
            input_dim: FEATURE_DIM,
            hidden: self.hidden,
            ids: self.ids.clone(),
            layer1: Layer { weights: t(vec![FEATURE_DIM, self.hidden], &self.w1), bias: t(vec![self.hidden], &self.b1) },
            layer2: Layer { weights: t(vec![self.hidden, c], &self.w2), bias: t(vec![c], &self.b2) },
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifierError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ClassifierError::Format(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ClassifierError::Format("missing schema_version".into()))?;
        if found != CLASSIFIER_SCHEMA_VERSION as u64 {
            return Err(ClassifierError::Version { found, expected: CLASSIFIER_SCHEMA_VERSION });
        }
        let f: ModelFile = serde_json::from_value(value).map_err(|e| ClassifierError::Format(e.to_string()))?;
        if f.input_dim != FEATURE_DIM {
            return Err(ClassifierError::Dimension { expected: FEATURE_DIM, actual: f.input_dim });
        }
        let c = f.ids.len();
        let shapes_ok = f.layer1.weights.shape == [FEATURE_DIM, f.hidden]
            && f.layer1.bias.shape == [f.hidden]
            && f.layer2.weights.shape == [f.hidden, c]
            && f.layer2.bias.shape == [c];
        if !shapes_ok {
            return Err(ClassifierError::Format("tensor shapes do not match hidden size and id table".into()));
        }
        let model = Self {
            hidden: f.hidden,
            ids: f.ids,
            w1: f.layer1.weights.data,
            b1: f.layer1.bias.data,
            w2: f.layer2.weights.data,
            b2: f.layer2.bias.data,
        };
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        fs::write(path, self.to_json()).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text =
            fs::read_to_string(path).map_err(|source| ClassifierError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}
