use log::debug;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::metrics::{majority_vote_accuracy, predict, roc_auc, Confusion, RocPoint};
use crate::error::{Error, Result};
use crate::models::build_model;
use crate::nn::{checkpoint, Graph, Precision, Real, Tensor};
use crate::seed::{derive_seed, rng_from_seed};
use crate::trajectory::{ChannelStats, Dataset, Familiarity};
use crate::windowing::{build_scenario, build_test_windows, split_participants, LabeledWindow, ScenarioData, SplitSpec, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub window_accuracy: f64,
    /// Majority vote over each test trial's windows (supplementary).
    pub trial_accuracy: f64,
    pub roc_points: Vec<RocPoint>,
    pub auc: f64,
    pub confusion: Confusion,
    /// Window-weighted mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub train_windows: usize,
    pub test_windows: usize,
}

/// A trained model at either precision.
#[derive(Clone, Debug)]
pub enum AnyGraph {
    F64(Graph<f64>),
    F32(Graph<f32>),
}

impl AnyGraph {
    pub fn precision(&self) -> Precision {
        match self {
            AnyGraph::F64(_) => Precision::F64,
            AnyGraph::F32(_) => Precision::F32,
        }
    }

    /// Class-1 probabilities for `windows`, in order.
    pub fn scores(&self, windows: &[LabeledWindow], batch: usize) -> Result<Vec<f64>> {
        match self {
            AnyGraph::F64(g) => scores(g, windows, batch),
            AnyGraph::F32(g) => scores(g, windows, batch),
        }
    }

    pub fn to_bytes(&self, meta: &serde_json::Value) -> Result<Vec<u8>> {
        match self {
            AnyGraph::F64(g) => checkpoint::to_bytes(g, meta),
            AnyGraph::F32(g) => checkpoint::to_bytes(g, meta),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        Ok(match checkpoint::peek_precision(bytes)? {
            Precision::F64 => {
                let (g, m) = checkpoint::from_bytes(bytes)?;
                (AnyGraph::F64(g), m)
            }
            Precision::F32 => {
                let (g, m) = checkpoint::from_bytes(bytes)?;
                (AnyGraph::F32(g), m)
            }
        })
    }

    pub fn param_count(&self) -> usize {
        match self {
            AnyGraph::F64(g) => g.param_count(),
            AnyGraph::F32(g) => g.param_count(),
        }
    }
}

/// Stacks windows into a `[n, 3, L]` tensor.
pub fn stack_windows<T: Real>(windows: &[&LabeledWindow]) -> Result<Tensor<T>> {
    let len = windows.first().map_or(0, |w| w.len);
    let mut data = Vec::with_capacity(windows.len() * CHANNELS * len);
    for w in windows {
        if w.len != len {
            return Err(Error::ShapeMismatch(format!("window lengths {} and {len} in one batch", w.len)));
        }
        data.extend(w.data.iter().map(|&v| T::from_f64_lossy(v)));
    }
    Tensor::from_vec(vec![windows.len(), CHANNELS, len], data)
}

fn scores<T: Real>(g: &Graph<T>, windows: &[LabeledWindow], batch: usize) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = windows
        .par_chunks(batch.max(1))
        .map(|chunk| {
            let refs: Vec<&LabeledWindow> = chunk.iter().collect();
            let p = g.infer(&stack_windows(&refs)?)?;
            Ok(p.data().chunks_exact(2).map(|r| r[1].as_f64()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Seeded mini-batch training; returns the per-epoch loss curve.
fn train<T: Real>(g: &mut Graph<T>, windows: &[LabeledWindow], cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    let labels: Vec<usize> = windows.iter().map(|w| w.label.index()).collect();
    let mut opt = g.new_optimizer(cfg.adam);
    let mut rng = rng_from_seed(derive_seed(cfg.cell_seed(), &["shuffle"]));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledWindow> = idx.iter().map(|&i| &windows[i]).collect();
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let x = stack_windows(&batch)?;
            total += g.train_step(&x, &y, &cfg.loss, &mut opt)? * idx.len() as f64;
        }
        let mean = total / windows.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteOutput(format!("training loss at epoch {}", epoch + 1)));
        }
        debug!("{} {} {} L={} epoch {} loss {mean:.6}", cfg.scenario, cfg.pin, cfg.model, cfg.window_len, epoch + 1);
        curve.push(mean);
    }
    Ok(curve)
}

/// Replaces labels with a seeded permutation of a class-balanced label
/// vector (chance-level control).
fn shuffle_labels(windows: &mut [LabeledWindow], seed: u64) {
    let n = windows.len();
    let mut labels: Vec<Familiarity> = (0..n).map(|i| if i < n / 2 { Familiarity::Novice } else { Familiarity::Experienced }).collect();
    labels.shuffle(&mut rng_from_seed(seed));
    for (w, l) in windows.iter_mut().zip(labels) {
        w.label = l;
    }
}

/// Train/test windows of a cell, with the label control applied.
pub fn cell_data(dataset: &Dataset, cfg: &ScenarioConfig) -> Result<(SplitSpec, ScenarioData)> {
    cfg.validate()?;
    let split = split_participants(&dataset.participants, cfg.split_fraction, cfg.split_seed())?;
    let mut data = build_scenario(dataset, cfg.scenario, cfg.pin, cfg.window_len, &split, cfg.scenario_options())?;
    if cfg.label_shuffle {
        shuffle_labels(&mut data.train, derive_seed(cfg.cell_seed(), &["label_shuffle", "train"]));
        shuffle_labels(&mut data.test, derive_seed(cfg.cell_seed(), &["label_shuffle", "test"]));
    }
    Ok((split, data))
}

/// Metrics of a model on a test window set.
pub fn evaluate(model: &AnyGraph, test: &[LabeledWindow], cfg: &ScenarioConfig, loss_curve: Vec<f64>, train_windows: usize) -> Result<EvalResult> {
    let scores = model.scores(test, cfg.eval_batch_size)?;
    let truth: Vec<usize> = test.iter().map(|w| w.label.index()).collect();
    let predicted: Vec<usize> = scores.iter().map(|&s| predict(s)).collect();
    let confusion = Confusion::from_predictions(&truth, &predicted);
    let (roc_points, auc) = roc_auc(&scores, &truth)?;
    // the trial's truth is the label of its first window
    let mut trial_truth = std::collections::HashMap::new();
    for w in test {
        trial_truth.entry(&w.origin.trial).or_insert(w.label.index());
    }
    let trial_accuracy = majority_vote_accuracy(test.iter().zip(&scores).map(|(w, &s)| (&w.origin.trial, s, trial_truth[&w.origin.trial])));
    Ok(EvalResult {
        window_accuracy: confusion.accuracy(),
        trial_accuracy,
        roc_points,
        auc,
        confusion,
        loss_curve,
        train_windows,
        test_windows: test.len(),
    })
}

/// A trained cell with everything needed to persist and re-evaluate it.
#[derive(Clone, Debug)]
pub struct TrainedCell {
    pub model: AnyGraph,
    pub result: EvalResult,
    pub split: SplitSpec,
    pub stats: ChannelStats,
}

impl TrainedCell {
    /// Checkpoint metadata: the resolved configuration, split and statistics.
    pub fn checkpoint_meta(&self, cfg: &ScenarioConfig) -> serde_json::Value {
        serde_json::json!({
            "config": cfg,
            "split": self.split,
            "stats": self.stats,
            "loss_curve": self.result.loss_curve,
            "train_windows": self.result.train_windows,
        })
    }
}

/// Metadata stored next to a checkpoint's weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ScenarioConfig,
    pub split: SplitSpec,
    pub stats: ChannelStats,
    #[serde(default)]
    pub loss_curve: Vec<f64>,
    #[serde(default)]
    pub train_windows: usize,
}

/// Re-evaluates a saved cell on `dataset` using the stored split and
/// statistics; on the training dataset this reproduces the train-time result.
pub fn evaluate_checkpoint(dataset: &Dataset, bytes: &[u8], eval_batch_size: Option<usize>) -> Result<(CheckpointMeta, EvalResult)> {
    let (model, meta) = AnyGraph::from_bytes(bytes)?;
    let mut meta: CheckpointMeta = serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    if let Some(b) = eval_batch_size {
        meta.config.eval_batch_size = b;
    }
    let cfg = &meta.config;
    cfg.validate()?;
    let (mut test, _) = build_test_windows(dataset, cfg.scenario, cfg.pin, cfg.window_len, &meta.split, cfg.scenario_options(), &meta.stats)?;
    if cfg.label_shuffle {
        shuffle_labels(&mut test, derive_seed(cfg.cell_seed(), &["label_shuffle", "test"]));
    }
    let result = evaluate(&model, &test, cfg, meta.loss_curve.clone(), meta.train_windows)?;
    Ok((meta, result))
}

/// Builds the cell's windows, trains for `cfg.epochs` and evaluates.
pub fn train_cell(dataset: &Dataset, cfg: &ScenarioConfig) -> Result<TrainedCell> {
    let (split, data) = cell_data(dataset, cfg)?;
    let spec = build_model(cfg.model, cfg.window_len, &cfg.models)?;
    let mut rng = rng_from_seed(derive_seed(cfg.cell_seed(), &["init"]));
    let (model, curve) = match cfg.precision {
        Precision::F64 => {
            let mut g = spec.build::<f64, _>(&mut rng)?;
            let curve = train(&mut g, &data.train, cfg)?;
            (AnyGraph::F64(g), curve)
        }
        Precision::F32 => {
            let mut g = spec.build::<f32, _>(&mut rng)?;
            let curve = train(&mut g, &data.train, cfg)?;
            (AnyGraph::F32(g), curve)
        }
    };
    let result = evaluate(&model, &data.test, cfg, curve, data.train.len())?;
    Ok(TrainedCell { model, result, split, stats: data.stats })
}

/// Trains and evaluates one cell; deterministic in `(dataset, cfg)`.
pub fn run_cell(dataset: &Dataset, cfg: &ScenarioConfig) -> Result<EvalResult> {
    train_cell(dataset, cfg).map(|c| c.result)
}
