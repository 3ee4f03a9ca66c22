//! Training and evaluation loops.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use dvit_nn::{cross_entropy, zero_grads, AdamW, AdamWConfig, Ctx};
use dvit_tensor::{no_grad, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::augment::resolve;
use crate::data::image::{decode_and_normalize, NormalizationSpec};
use crate::data::manifest::{Manifest, Split};
use crate::error::{CoreError, Result};
use crate::metrics::MetricsReport;
use crate::model::{Dvit, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Validate every this many epochs; the final epoch is always validated.
    pub eval_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub normalization: NormalizationSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            weight_decay: 0.05,
            seed: 0,
            eval_every: 1,
            checkpoint_dir: None,
            model: ModelConfig::default(),
            normalization: NormalizationSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(CoreError::Config("epochs, batch_size and eval_every must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(CoreError::Config(format!("lr {} / weight_decay {} out of range", self.lr, self.weight_decay)));
        }
        if self.normalization.size != self.model.input_size {
            return Err(CoreError::Config(format!(
                "normalization size {} differs from model input_size {}",
                self.normalization.size, self.model.input_size
            )));
        }
        self.model.validate()
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW::new(AdamWConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamWConfig::default() })
    }
}

/// Labelled images, each `3×S×S`.
pub trait Dataset: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn label(&self, i: usize) -> usize;
    fn image(&self, i: usize) -> Result<Tensor>;
    fn classes(&self) -> &[String];
}

#[derive(Debug, Clone)]
pub struct InMemoryDataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub classes: Vec<String>,
}

impl Dataset for InMemoryDataset {
    fn len(&self) -> usize {
        self.images.len()
    }
    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
    fn image(&self, i: usize) -> Result<Tensor> {
        Ok(self.images[i].clone())
    }
    fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// One split of a manifest, decoded on demand.
#[derive(Debug)]
pub struct ManifestDataset {
    items: Vec<(PathBuf, usize)>,
    classes: Vec<String>,
    spec: NormalizationSpec,
    cache: Option<Mutex<Vec<Option<Tensor>>>>,
}

impl ManifestDataset {
    pub fn new(manifest: &Manifest, split: Split, root: &Path, spec: &NormalizationSpec) -> Result<Self> {
        let items: Vec<(PathBuf, usize)> = manifest.split(split).map(|e| (resolve(root, &e.path), e.class_id)).collect();
        if items.is_empty() {
            return Err(CoreError::EmptySplit(split.to_string()));
        }
        Ok(ManifestDataset { items, classes: manifest.classes.clone(), spec: spec.clone(), cache: None })
    }

    /// Keeps decoded tensors in memory after first use.
    pub fn cached(mut self) -> Self {
        self.cache = Some(Mutex::new(vec![None; self.items.len()]));
        self
    }
}

impl Dataset for ManifestDataset {
    fn len(&self) -> usize {
        self.items.len()
    }
    fn label(&self, i: usize) -> usize {
        self.items[i].1
    }
    fn image(&self, i: usize) -> Result<Tensor> {
        if let Some(c) = &self.cache {
            if let Some(t) = &c.lock().unwrap()[i] {
                return Ok(t.clone());
            }
        }
        let path = &self.items[i].0;
        let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        let t = decode_and_normalize(&bytes, &path.display().to_string(), &self.spec)?;
        if let Some(c) = &self.cache {
            c.lock().unwrap()[i] = Some(t.clone());
        }
        Ok(t)
    }
    fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// Stacks the images at `indices` into an `N×3×S×S` batch.
pub fn make_batch(ds: &dyn Dataset, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::new();
    let mut shape = None;
    for &i in indices {
        let t = ds.image(i)?;
        match &shape {
            None => shape = Some(t.shape().to_vec()),
            Some(s) if s.as_slice() != t.shape() => {
                return Err(CoreError::Config(format!("image {i} has shape {:?}, expected {s:?}", t.shape())));
            }
            _ => {}
        }
        data.extend_from_slice(t.data());
    }
    let mut s = vec![indices.len()];
    s.extend(shape.unwrap_or_default());
    let labels = indices.iter().map(|&i| ds.label(i)).collect();
    Ok((Tensor::new(data, &s)?, labels))
}

/// Anything producing `N×K` logits from an image batch.
pub trait Classifier {
    fn logits(&self, batch: &Tensor) -> Result<Tensor>;
}

impl Classifier for Dvit {
    fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward(batch, &mut Ctx::eval())
    }
}

pub fn predict(model: &dyn Classifier, ds: &dyn Dataset, batch_size: usize) -> Result<Vec<usize>> {
    let _g = no_grad();
    let mut out = Vec::with_capacity(ds.len());
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = make_batch(ds, chunk)?;
        out.extend(model.logits(&x)?.argmax_last());
    }
    Ok(out)
}

/// Eval-mode predictions on `ds` summarized as a metrics report.
pub fn evaluate(model: &dyn Classifier, ds: &dyn Dataset, batch_size: usize) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(CoreError::EmptySplit("evaluation".into()));
    }
    let pred = predict(model, ds, batch_size)?;
    let truth: Vec<usize> = (0..ds.len()).map(|i| ds.label(i)).collect();
    MetricsReport::from_predictions(&truth, &pred, ds.classes())
}

fn derive_seed(parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Sample order for one epoch, from a seed derived from `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(&[seed, epoch as u64])));
    order
}

/// Splits `order` into batches, folding a trailing single sample into the
/// previous batch so batch norm always sees at least two.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub batch_losses: Vec<f64>,
    /// Accuracy of the training-mode predictions made while fitting.
    pub train_accuracy: f64,
    pub valid: Option<MetricsReport>,
    pub seconds: f64,
    /// Hex digest of the seed driving this epoch's shuffle and dropout.
    pub rng_digest: String,
    pub best: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub epochs: Vec<EpochRecord>,
}

impl RunLog {
    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut epochs = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| CoreError::io("run log", e))?;
            if !line.trim().is_empty() {
                epochs.push(serde_json::from_str(&line)?);
            }
        }
        Ok(RunLog { epochs })
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

/// Progress of a run that may be resumed.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub optimizer: AdamW,
    /// Epochs already completed.
    pub epoch: usize,
    pub best: Option<(f64, usize)>,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig) -> Self {
        TrainState { optimizer: cfg.optimizer(), epoch: 0, best: None }
    }
}

/// Restores model and state from `dir/last.ckpt`.
pub fn resume(dir: &Path, cfg: &TrainConfig) -> Result<(Dvit, TrainState)> {
    let ck = load_checkpoint(&dir.join(LAST_CHECKPOINT), Some(&cfg.model))?;
    if ck.seed != cfg.seed {
        return Err(CoreError::ConfigMismatch(format!("checkpoint seed {} differs from {}", ck.seed, cfg.seed)));
    }
    let mut optimizer = cfg.optimizer();
    ck.restore_optimizer(&mut optimizer)?;
    let best = match (ck.extra("best_macc"), ck.extra("best_epoch")) {
        (Some(m), Some(e)) => Some((
            m.parse().map_err(|_| CoreError::Checkpoint("bad best_macc".into()))?,
            e.parse().map_err(|_| CoreError::Checkpoint("bad best_epoch".into()))?,
        )),
        _ => None,
    };
    Ok((ck.model, TrainState { optimizer, epoch: ck.epoch, best }))
}

fn save_with_state(path: &Path, model: &Dvit, epoch: usize, cfg: &TrainConfig, state: &TrainState) -> Result<()> {
    let best = state.best.map(|(m, e)| (format!("{m:?}"), e.to_string()));
    let mut extra: Vec<(&str, &str)> = Vec::new();
    if let Some((m, e)) = &best {
        extra.push(("best_macc", m));
        extra.push(("best_epoch", e));
    }
    save_checkpoint(path, model, epoch, cfg.seed, Some(&state.optimizer), &extra)
}

/// Trains until `cfg.epochs` epochs are complete, continuing from `state`.
///
/// `on_epoch` sees each record as soon as it is logged.
pub fn fit(
    model: &mut Dvit,
    state: &mut TrainState,
    train: &dyn Dataset,
    valid: Option<&dyn Dataset>,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<RunLog> {
    cfg.validate()?;
    if model.cfg != cfg.model {
        return Err(CoreError::ConfigMismatch("model config differs from training config".into()));
    }
    if train.is_empty() {
        return Err(CoreError::EmptySplit("train".into()));
    }
    if let Some(v) = valid {
        if v.is_empty() {
            return Err(CoreError::EmptySplit("valid".into()));
        }
    }
    let nc = cfg.model.num_classes;
    let mut present = vec![false; nc];
    for i in 0..train.len() {
        let l = train.label(i);
        if l >= nc {
            return Err(CoreError::Label { label: l, classes: nc });
        }
        present[l] = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        let name = train.classes().get(c).cloned().unwrap_or_else(|| c.to_string());
        return Err(CoreError::EmptyClass(name));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    let mut log = RunLog::default();
    for epoch in state.epoch + 1..=cfg.epochs {
        let start = Instant::now();
        let epoch_seed = derive_seed(&[cfg.seed, epoch as u64]);
        let order = epoch_order(train.len(), cfg.seed, epoch);
        let mut batch_losses = Vec::new();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches(&order, cfg.batch_size).iter().enumerate() {
            let (x, labels) = make_batch(train, idx)?;
            let mut ctx = Ctx::train(derive_seed(&[epoch_seed, b as u64]));
            let logits = model.forward(&x, &mut ctx)?;
            let loss = cross_entropy(&logits, &labels)?;
            let value = loss.item();
            if !value.is_finite() {
                zero_grads(model);
                return Err(CoreError::NonFiniteLoss { epoch, batch: b, value });
            }
            loss.backward()?;
            state.optimizer.step(model)?;
            zero_grads(model);
            correct += logits.argmax_last().iter().zip(&labels).filter(|(p, t)| p == t).count();
            loss_sum += value * labels.len() as f64;
            batch_losses.push(value);
        }
        let validate = epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
        let report = match valid {
            Some(v) if validate => Some(evaluate(model, v, cfg.batch_size)?),
            _ => None,
        };
        let mut is_best = false;
        if let Some(r) = &report {
            if state.best.is_none_or(|(m, _)| r.mean_accuracy >= m) {
                state.best = Some((r.mean_accuracy, epoch));
                is_best = true;
            }
        }
        state.epoch = epoch;
        if let Some(dir) = &cfg.checkpoint_dir {
            if is_best {
                save_with_state(&dir.join(BEST_CHECKPOINT), model, epoch, cfg, state)?;
            }
            save_with_state(&dir.join(LAST_CHECKPOINT), model, epoch, cfg, state)?;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            batch_losses,
            train_accuracy: correct as f64 / train.len() as f64,
            valid: report,
            seconds: start.elapsed().as_secs_f64(),
            rng_digest: format!("{epoch_seed:016x}"),
            best: is_best,
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}

/// Builds a model from `cfg.model` and trains it from scratch.
pub fn train(train: &dyn Dataset, valid: Option<&dyn Dataset>, cfg: &TrainConfig) -> Result<(Dvit, RunLog)> {
    cfg.validate()?;
    let mut model = Dvit::new(&cfg.model, cfg.seed)?;
    let mut state = TrainState::fresh(cfg);
    let log = fit(&mut model, &mut state, train, valid, cfg, &mut |_| {})?;
    Ok((model, log))
}
