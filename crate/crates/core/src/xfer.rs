//! Pretraining, head re-training, fine-tuning and top-1 evaluation.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataspec::Dataset;
use crate::error::{Error, Result};
use crate::nnkernel::{cross_entropy, Adam, AdamConfig, ModelCheckpoint, ModelSpec, Network, Provenance};
use crate::seed;

const EVAL_CHUNK: usize = 256;

/// Classifier inputs with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSet {
    pub name: String,
    pub class_names: Vec<String>,
    pub x: Array2<f32>,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(name: impl Into<String>, class_names: Vec<String>, x: Array2<f32>, labels: Vec<usize>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_names.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            class_names,
            x,
            labels,
        })
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let x = Array2::from_shape_vec((ds.len(), ds.row_len()), ds.samples().to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(ds.name.clone(), ds.class_names.clone(), x, ds.labels())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn select(&self, name: impl Into<String>, idx: &[usize]) -> Self {
        Self {
            name: name.into(),
            class_names: self.class_names.clone(),
            x: self.x.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainMode {
    #[serde(rename = "PRETRAIN")]
    Pretrain,
    #[serde(rename = "HEAD")]
    HeadRetrain,
    #[serde(rename = "FINETUNE")]
    FineTune,
}

impl TrainMode {
    pub fn default_lr(self) -> f64 {
        match self {
            TrainMode::Pretrain | TrainMode::HeadRetrain => 1e-3,
            TrainMode::FineTune => 1e-4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Pretrain => "PRETRAIN",
            TrainMode::HeadRetrain => "HEAD",
            TrainMode::FineTune => "FINETUNE",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PRETRAIN" => Ok(TrainMode::Pretrain),
            "HEAD" | "HEAD_RETRAIN" => Ok(TrainMode::HeadRetrain),
            "FT" | "FINETUNE" | "FINE_TUNE" => Ok(TrainMode::FineTune),
            _ => Err(Error::InvalidParameter(format!("unknown training mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub mode: TrainMode,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Fresh seeded head before training. Defaults to true for head
    /// re-training and false for fine-tuning.
    pub reinit_head: bool,
}

impl TrainRecipe {
    pub fn new(mode: TrainMode, seed: u64) -> Self {
        Self {
            mode,
            lr: mode.default_lr(),
            epochs: 100,
            batch: 64,
            seed,
            reinit_head: mode == TrainMode::HeadRetrain,
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    fn validate(&self, want: TrainMode) -> Result<()> {
        if self.mode != want {
            return Err(Error::InvalidParameter(format!(
                "recipe mode {:?} used for {:?}",
                self.mode, want
            )));
        }
        if self.batch == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter("batch and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Loss curves of one training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose weights were kept; 0 means the starting weights.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Replaces measured validation losses, used to exercise checkpoint selection.
pub type ValLossHook<'a> = &'a dyn Fn(usize, f64) -> f64;

fn check_sets(net: &Network<f32>, class_names: Option<&[String]>, sets: [&LabeledSet; 2]) -> Result<()> {
    for set in sets {
        if set.is_empty() {
            return Err(Error::Empty(format!("dataset `{}` has no examples", set.name)));
        }
        if set.x.ncols() != net.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "dataset `{}` has {} features per example, model expects {}",
                set.name,
                set.x.ncols(),
                net.input_len()
            )));
        }
        if set.num_classes() != net.num_classes() {
            return Err(Error::ClassMismatch(format!(
                "dataset `{}` has {} classes, model has {}",
                set.name,
                set.num_classes(),
                net.num_classes()
            )));
        }
        if let Some(names) = class_names {
            if names != set.class_names.as_slice() {
                return Err(Error::ClassMismatch(format!(
                    "dataset `{}` classes {:?} differ from model classes {:?}",
                    set.name, set.class_names, names
                )));
            }
        }
    }
    Ok(())
}

fn eval_chunked(net: &Network<f32>, x: ArrayView2<f32>, from: usize, to: usize) -> Result<Array2<f32>> {
    let width = net.shapes()[to].len();
    let mut out = Array2::zeros((x.nrows(), width));
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let a = net.eval_range(x.slice(s![start..end, ..]), from, to)?;
        out.slice_mut(s![start..end, ..]).assign(&a);
    }
    Ok(out)
}

fn mean_loss(net: &Network<f32>, x: ArrayView2<f32>, from: usize, labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let z = net.eval_range(x.slice(s![start..end, ..]), from, net.num_layers())?;
        total += cross_entropy(z.view(), &labels[start..end])?.0 * (end - start) as f64;
    }
    Ok(total / x.nrows() as f64)
}

/// Fixed-epoch Adam training that keeps the weights with the lowest
/// validation loss. Activations of the frozen deterministic prefix are
/// computed once.
pub fn train_network(
    mut net: Network<f32>,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
    hook: Option<ValLossHook>,
) -> Result<(Network<f32>, TrainReport)> {
    check_sets(&net, None, [train, val])?;
    let prefix = net.frozen_prefix_len();
    let val_from = net.first_trainable().unwrap_or(net.num_layers());
    let train_x = eval_chunked(&net, train.x.view(), 0, prefix)?;
    let val_x = eval_chunked(&net, val.x.view(), 0, val_from)?;

    let mut report = TrainReport {
        best_val_loss: f64::INFINITY,
        ..TrainReport::default()
    };
    if recipe.epochs == 0 {
        report.best_val_loss = mean_loss(&net, val_x.view(), val_from, &val.labels)?;
    }
    let mut best = net.clone();
    let mut opt = Adam::new(AdamConfig::with_lr(recipe.lr));
    let mut rng = seed::rng(recipe.seed, &[0x7472_6169_6e]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=recipe.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(recipe.batch) {
            let xb = train_x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let (out, cache) = net.forward_train_from(xb.view(), prefix, &mut rng)?;
            let (loss, d) = cross_entropy(out.view(), &yb)?;
            let grads = net.backward(&cache, d.view())?;
            opt.step(&mut net, &grads)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        report.train_loss.push(epoch_loss / train.len() as f64);
        let mut vl = mean_loss(&net, val_x.view(), val_from, &val.labels)?;
        if let Some(h) = hook {
            vl = h(epoch, vl);
        }
        report.val_loss.push(vl);
        log::debug!("epoch {epoch}: train {:.4} val {vl:.4}", report.train_loss[epoch - 1]);
        if vl < report.best_val_loss {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best = net.clone();
        }
    }
    Ok((best, report))
}

fn finish(net: &Network<f32>, class_names: Vec<String>, train: &LabeledSet, report: &TrainReport, seed: u64) -> ModelCheckpoint {
    ModelCheckpoint::from_network(
        net,
        class_names,
        Provenance {
            dataset: train.name.clone(),
            epoch: report.best_epoch,
            val_loss: report.best_val_loss,
            seed,
        },
    )
}

/// Trains every parameter from a seeded initialisation.
pub fn pretrain(spec: &ModelSpec, train: &LabeledSet, val: &LabeledSet, recipe: &TrainRecipe) -> Result<ModelCheckpoint> {
    Ok(pretrain_with_report(spec, train, val, recipe, None)?.0)
}

pub fn pretrain_with_report(
    spec: &ModelSpec,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
    hook: Option<ValLossHook>,
) -> Result<(ModelCheckpoint, TrainReport)> {
    recipe.validate(TrainMode::Pretrain)?;
    if train.class_names != val.class_names {
        return Err(Error::ClassMismatch("train and validation class lists differ".into()));
    }
    let net = Network::<f32>::new(spec.clone(), seed::derive(recipe.seed, &[0x696e_6974]))?;
    let (best, report) = train_network(net, train, val, recipe, hook)?;
    Ok((finish(&best, train.class_names.clone(), train, &report, recipe.seed), report))
}

fn transfer(
    source: &ModelCheckpoint,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
    hook: Option<ValLossHook>,
) -> Result<(ModelCheckpoint, TrainReport)> {
    let mut net = source.to_network::<f32>()?;
    check_sets(&net, Some(&source.class_names), [train, val])?;
    match recipe.mode {
        TrainMode::HeadRetrain => net.freeze_all_but_head(),
        _ => net.unfreeze_all(),
    }
    if recipe.reinit_head {
        let head = net.head_index();
        net.reinit_layer(head, seed::derive(recipe.seed, &[0x6865_6164]))?;
    }
    let (best, report) = train_network(net, train, val, recipe, hook)?;
    Ok((finish(&best, source.class_names.clone(), train, &report, recipe.seed), report))
}

/// Trains only the final linear layer on the target domain.
pub fn head_retrain(
    source: &ModelCheckpoint,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
) -> Result<ModelCheckpoint> {
    Ok(head_retrain_with_report(source, train, val, recipe, None)?.0)
}

pub fn head_retrain_with_report(
    source: &ModelCheckpoint,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
    hook: Option<ValLossHook>,
) -> Result<(ModelCheckpoint, TrainReport)> {
    recipe.validate(TrainMode::HeadRetrain)?;
    transfer(source, train, val, recipe, hook)
}

/// Continues training every layer from the source weights.
pub fn fine_tune(
    source: &ModelCheckpoint,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
) -> Result<ModelCheckpoint> {
    Ok(fine_tune_with_report(source, train, val, recipe, None)?.0)
}

pub fn fine_tune_with_report(
    source: &ModelCheckpoint,
    train: &LabeledSet,
    val: &LabeledSet,
    recipe: &TrainRecipe,
    hook: Option<ValLossHook>,
) -> Result<(ModelCheckpoint, TrainReport)> {
    recipe.validate(TrainMode::FineTune)?;
    transfer(source, train, val, recipe, hook)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f32>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn predict(ckpt: &ModelCheckpoint, x: ArrayView2<f32>) -> Result<Vec<usize>> {
    let net = ckpt.to_network::<f32>()?;
    let logits = eval_chunked(&net, x, 0, net.num_layers())?;
    Ok(logits.rows().into_iter().map(argmax).collect())
}

/// Fraction of examples whose highest logit is the true label.
pub fn evaluate_top1(ckpt: &ModelCheckpoint, test: &LabeledSet) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty(format!("test set `{}` is empty", test.name)));
    }
    if test.num_classes() != ckpt.num_classes() {
        return Err(Error::ClassMismatch(format!(
            "test set has {} classes, model has {}",
            test.num_classes(),
            ckpt.num_classes()
        )));
    }
    let pred = predict(ckpt, test.x.view())?;
    let hits = pred.iter().zip(&test.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / test.len() as f64)
}
