//! The contrastive training loop.

use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{build_batch, AugmentConfig, NegativeKinds};
use crate::corpus::{Corpus, Trial};
use crate::encoder::{Model, Vocab};
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeMap;

use super::adamw::{adamw_step, AdamWConfig, AdamWState};
use super::loss::InfoNceVariant;
use super::objective::{batch_loss_and_grads, BatchLoss, Objective};

/// Switches for the three sources of supervision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub attr_negatives: bool,
    pub ctx_negatives: bool,
    pub local_loss: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            attr_negatives: true,
            ctx_negatives: true,
            local_loss: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// 2e-5 suits large encoders; small ones usually want ~1e-3.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub infonce_variant: InfoNceVariant,
    pub ablation: Ablation,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 50,
            weight_decay: 1e-4,
            epochs: 10,
            seed: 0,
            temperature: 1.0,
            infonce_variant: InfoNceVariant::Standard,
            ablation: Ablation::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective {
            temperature: self.temperature,
            variant: self.infonce_variant,
            hard_negatives: self.ablation.attr_negatives || self.ablation.ctx_negatives,
            local_loss: self.ablation.local_loss,
        }
    }

    fn negative_kinds(&self) -> NegativeKinds {
        match (self.ablation.attr_negatives, self.ablation.ctx_negatives) {
            (false, false) => NegativeKinds::default(),
            (attr, ctx) => NegativeKinds { attr, ctx },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_g: f64,
    pub loss_l: f64,
    pub loss: f64,
}

impl LossRecord {
    fn new(step: usize, l: BatchLoss) -> Self {
        Self {
            step,
            loss_g: l.loss_g,
            loss_l: l.loss_l,
            loss: l.loss,
        }
    }
}

pub fn history_to_csv(history: &[LossRecord]) -> String {
    let mut s = String::from("step,loss_g,loss_l,loss\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.step, r.loss_g, r.loss_l, r.loss));
    }
    s
}

pub fn write_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(history_to_csv(history).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Trains `model` in place and returns the loss history.
///
/// `on_epoch` runs after every completed epoch (e.g. to write a checkpoint).
/// If the loss turns non-finite, `model` is reset to its state at the last
/// epoch boundary and [`Error::Diverged`] is returned.
pub fn train(
    corpus: &Corpus,
    map: &KnowledgeMap,
    model: &mut Model,
    vocab: &Vocab,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opt = AdamWConfig::new(cfg.learning_rate, cfg.weight_decay);
    let objective = cfg.objective();
    let kinds = cfg.negative_kinds();
    let mut state = AdamWState::new(model);
    let mut last_good = model.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..corpus.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let step = history.len();
            let trials: Vec<Trial> = chunk.iter().map(|&i| corpus.trials()[i].clone()).collect();
            let batch = build_batch(&trials, corpus, map, &cfg.augment, kinds, &mut rng)?;
            if batch.globals.is_empty() && batch.locals.is_empty() {
                warn!("step {step}: no usable samples in batch");
                continue;
            }
            let (loss, grads) = match batch_loss_and_grads(model, vocab, &batch, &objective) {
                Ok(r) => r,
                Err(Error::NonFinite(what)) => {
                    warn!("step {step}: non-finite {what}");
                    *model = last_good;
                    return Err(Error::Diverged { step });
                }
                Err(e) => return Err(e),
            };
            if let Err(e) = adamw_step(model, &grads, &mut state, &opt) {
                warn!("step {step}: {e}");
                *model = last_good;
                return Err(Error::Diverged { step });
            }
            history.push(LossRecord::new(step, loss));
        }
        if let Some(name) = crate::encoder::Params::first_non_finite(model) {
            warn!("non-finite parameter {name} after epoch {epoch}");
            *model = last_good;
            return Err(Error::Diverged { step: history.len() });
        }
        if let Some(r) = history.last() {
            info!("epoch {epoch}: loss {:.4} (global {:.4}, local {:.4})", r.loss, r.loss_g, r.loss_l);
        }
        last_good = model.clone();
        on_epoch(epoch, model)?;
    }
    Ok(history)
}
