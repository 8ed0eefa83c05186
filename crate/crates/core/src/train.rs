//! Joint training loop with scheduled sampling, Adam and best-on-dev selection.

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::corpus::{Document, EventSchema};
use crate::decoder::{total_loss, LossWeights};
use crate::encoder::SamplingSchedule;
use crate::error::{Result, SeaError};
use crate::eval::{evaluate, MetricsReport};
use crate::model::{ModelConfig, SeaModel};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

/// How the learning rate evolves over the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear decay from `lr` at the first step to zero after the last.
    Linear,
}

impl LrSchedule {
    /// Learning rate for optimizer step `step` (0-based) of `total`.
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Linear => base * (1.0 - step as f64 / total.max(1) as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub sampling: SamplingSchedule,
    pub model: ModelConfig,
    /// Evaluate on the dev set every this many epochs (0 disables).
    pub eval_every: usize,
    /// Stop once dev F1 reaches this value.
    pub stop_at_dev_f1: Option<f64>,
    /// Rescale each batch gradient to at most this L2 norm.
    pub clip_norm: Option<f64>,
    /// Track the first operation producing a non-finite value.
    pub check_finite: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            lr: 1e-3,
            lr_schedule: LrSchedule::Constant,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss_weights: LossWeights::default(),
            sampling: SamplingSchedule::default(),
            model: ModelConfig::default(),
            eval_every: 1,
            stop_at_dev_f1: None,
            clip_norm: Some(5.0),
            check_finite: false,
        }
    }
}

impl TrainConfig {
    /// Batch 64 and learning rate 5e-5.
    pub fn paper_mode(mut self) -> Self {
        self.batch_size = 64;
        self.lr = 5e-5;
        self
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.loss_weights;
        if [w.entity, w.detection, w.argument].iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(SeaError::Config("loss weights must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(SeaError::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(SeaError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.sampling.p_max) {
            return Err(SeaError::Config(format!("sampling p_max {} outside [0, 1]", self.sampling.p_max)));
        }
        self.model.validate()
    }
}

/// Mean per-document sub-losses of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_er: f64,
    pub l_ed: f64,
    pub l_ae: f64,
    pub dev_f1: Option<f64>,
    pub skipped_slots: usize,
}

pub struct TrainOutcome {
    /// The best model on the dev set, or the last one without dev evaluation.
    pub model: SeaModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_dev: Option<MetricsReport>,
    /// Mean weighted loss of the first batch.
    pub first_step_loss: Option<f64>,
}

/// Trains a fresh model on `train_docs`. `on_epoch` sees each log line as
/// soon as the epoch ends.
pub fn train(
    train_docs: &[Document],
    dev_docs: Option<&[Document]>,
    schema: &EventSchema,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = SeaModel::for_corpus(cfg.model.clone(), schema.clone(), train_docs, cfg.seed)?;
    let prepared: Vec<_> = train_docs.iter().map(|d| model.prepare(d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ea_7a11);
    let mut adam = AdamState::new(&model.store, cfg.adam());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>, MetricsReport)> = None;
    let mut first_step_loss = None;
    let total_steps = cfg.epochs * prepared.len().div_ceil(cfg.batch_size);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 3];
        let mut skipped = 0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grad();
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                let source = cfg.sampling.draw(epoch, &mut rng);
                let tape_seed: u64 = rng.gen();
                let mut tape = Tape::train(&model.store, tape_seed).with_finite_check(cfg.check_finite);
                let parts = model.losses(&mut tape, &prepared[k], source)?;
                let total = total_loss(&mut tape, parts.entity, parts.detection, parts.argument, &cfg.loss_weights)?;
                let value = tape.value(total).item()?;
                if !value.is_finite() {
                    let origin = tape.first_non_finite().map_or_else(
                        || "enable check_finite to locate the producing operation".to_string(),
                        |op| format!("first produced by `{op}`"),
                    );
                    return Err(SeaError::NonFiniteLoss(format!(
                        "epoch {epoch}, document {}: {origin}",
                        prepared[k].doc.doc_id
                    )));
                }
                let scaled = tape.scale(total, scale)?;
                let grads = tape.backward(scaled)?;
                for (s, v) in sums.iter_mut().zip([parts.entity, parts.detection, parts.argument]) {
                    *s += tape.value(v).item()?;
                }
                drop(tape);
                model.store.accumulate(&grads);
                skipped += parts.skipped_slots;
                batch_loss += value * scale;
            }
            first_step_loss.get_or_insert(batch_loss);
            if let Some(max) = cfg.clip_norm {
                let norm = model.store.grad_norm();
                if norm > max {
                    model.store.scale_grads(max / norm);
                }
            }
            adam.config.lr = cfg.lr_schedule.rate(cfg.lr, step, total_steps);
            adam.step(&mut model.store)?;
            step += 1;
        }

        let n = prepared.len().max(1) as f64;
        let mut entry = EpochLog {
            epoch,
            l_er: sums[0] / n,
            l_ed: sums[1] / n,
            l_ae: sums[2] / n,
            dev_f1: None,
            skipped_slots: skipped,
        };
        let mut stop = false;
        if let Some(dev) = dev_docs {
            if cfg.eval_every > 0 && ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
                let report = evaluate(&model, dev)?;
                entry.dev_f1 = Some(report.f1);
                if best.as_ref().is_none_or(|b| report.f1 > b.0) {
                    let snapshot = model.store.iter().map(|(_, p)| p.value.clone()).collect();
                    best = Some((report.f1, epoch, snapshot, report.clone()));
                }
                stop = cfg.stop_at_dev_f1.is_some_and(|t| report.f1 >= t);
            }
        }
        info!(
            "epoch {epoch}: l_er {:.4} l_ed {:.4} l_ae {:.4} dev_f1 {}",
            entry.l_er,
            entry.l_ed,
            entry.l_ae,
            entry.dev_f1.map_or("-".into(), |f| format!("{f:.4}"))
        );
        on_epoch(&entry);
        log.push(entry);
        if stop {
            break;
        }
    }

    let (best_epoch, best_dev) = match best {
        Some((_, epoch, snapshot, report)) => {
            for (p, v) in model.store.iter_mut().zip(snapshot) {
                p.value = v;
            }
            (Some(epoch), Some(report))
        }
        None => (None, None),
    };
    Ok(TrainOutcome { model, log, best_epoch, best_dev, first_step_loss })
}
