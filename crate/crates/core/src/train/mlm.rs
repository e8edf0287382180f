//! Masked-token pretraining with an output layer tied to the token embedding.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::vocab::MASK;
use crate::encoder::{EncoderParams, Params, Vocab};
use crate::error::{Error, Result};
use crate::linalg::{gemm, log_sum_exp, Tensor};

use super::adamw::{adamw_step, AdamWConfig, AdamWState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlmConfig {
    pub mask_prob: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Stop after this many optimizer steps regardless of epochs.
    pub max_steps: Option<usize>,
}

impl Default for MlmConfig {
    fn default() -> Self {
        Self {
            mask_prob: 0.15,
            epochs: 5,
            batch_size: 100,
            learning_rate: 5e-5,
            weight_decay: 0.0,
            seed: 0,
            max_steps: None,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(Error::invalid("mask_prob must be in (0, 1)"));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 {
            return Err(Error::invalid("batch_size and learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Output bias; the weight matrix is the encoder's token embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmHead {
    pub bias: Tensor,
}

impl MlmHead {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            bias: Tensor::zeros(1, vocab_size),
        }
    }
}

impl Params for MlmHead {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("mlm.bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("mlm.bias".into(), &mut self.bias)]
    }
}

#[derive(Debug, Clone)]
pub struct MlmOutput {
    pub loss: f64,
    pub n_masked: usize,
    pub n_correct: usize,
    pub grads_enc: EncoderParams,
    pub grads_head: MlmHead,
}

/// A masked copy of one text: ids with MASK substituted, plus (position, original).
pub fn mask_ids<R: Rng + ?Sized>(ids: &[u32], mask_prob: f64, rng: &mut R) -> (Vec<u32>, Vec<(usize, u32)>) {
    let mut out = ids.to_vec();
    let mut targets = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if !Vocab::is_special(id) && rng.random_bool(mask_prob) {
            out[i] = MASK;
            targets.push((i, id));
        }
    }
    (out, targets)
}

fn logits(enc: &EncoderParams, head: &MlmHead, h: &[f64]) -> Vec<f64> {
    let v = enc.config.vocab_size;
    let mut z = head.bias.data.clone();
    gemm(h, false, &enc.tok_emb.data, true, &mut z, 1, enc.config.dim, v, true);
    z
}

fn argmax(z: &[f64]) -> usize {
    z.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Mean cross-entropy over masked positions with exact gradients.
/// Returns `None` (after a warning) if nothing was masked.
pub fn mlm_step<R: Rng + ?Sized>(
    texts: &[&str],
    enc: &EncoderParams,
    head: &MlmHead,
    vocab: &Vocab,
    cfg: &MlmConfig,
    rng: &mut R,
) -> Result<Option<MlmOutput>> {
    if texts.is_empty() {
        return Err(Error::invalid("empty MLM batch"));
    }
    let masked: Vec<(Vec<u32>, Vec<(usize, u32)>)> = texts
        .iter()
        .map(|t| mask_ids(&vocab.encode(t, enc.config.max_len), cfg.mask_prob, rng))
        .filter(|(_, targets)| !targets.is_empty())
        .collect();
    let n_masked: usize = masked.iter().map(|(_, t)| t.len()).sum();
    if n_masked == 0 {
        warn!("MLM batch of {} texts has no masked tokens; skipped", texts.len());
        return Ok(None);
    }
    let d = enc.config.dim;
    let v = enc.config.vocab_size;
    let scale = 1.0 / n_masked as f64;
    let mut out = MlmOutput {
        loss: 0.0,
        n_masked,
        n_correct: 0,
        grads_enc: enc.zeros_like(),
        grads_head: MlmHead::new(v),
    };
    for (ids, targets) in &masked {
        let cache = enc.forward(ids);
        let mut d_states = vec![0.0; ids.len() * d];
        for &(pos, target) in targets {
            let h = &cache.states[pos * d..(pos + 1) * d];
            let mut z = logits(enc, head, h);
            if argmax(&z) == target as usize {
                out.n_correct += 1;
            }
            let lse = log_sum_exp(&z);
            out.loss += (lse - z[target as usize]) * scale;
            for x in z.iter_mut() {
                *x = (*x - lse).exp() * scale;
            }
            z[target as usize] -= scale;
            crate::linalg::axpy(1.0, &z, &mut out.grads_head.bias.data);
            // dE += dz^T h ; dh = dz E
            gemm(&z, true, h, false, &mut out.grads_enc.tok_emb.data, v, 1, d, true);
            gemm(&z, false, &enc.tok_emb.data, false, &mut d_states[pos * d..(pos + 1) * d], 1, v, d, false);
        }
        enc.backward(&cache, &d_states, &mut out.grads_enc);
    }
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("MLM loss".into()));
    }
    Ok(Some(out))
}

/// Top-1 accuracy on one fresh random masking of `texts`: (correct, masked).
pub fn mlm_accuracy<R: Rng + ?Sized>(
    texts: &[&str],
    enc: &EncoderParams,
    head: &MlmHead,
    vocab: &Vocab,
    mask_prob: f64,
    rng: &mut R,
) -> (usize, usize) {
    let d = enc.config.dim;
    let (mut correct, mut total) = (0, 0);
    for t in texts {
        let (ids, targets) = mask_ids(&vocab.encode(t, enc.config.max_len), mask_prob, rng);
        if targets.is_empty() {
            continue;
        }
        let cache = enc.forward(&ids);
        for (pos, target) in targets {
            let z = logits(enc, head, &cache.states[pos * d..(pos + 1) * d]);
            correct += usize::from(argmax(&z) == target as usize);
            total += 1;
        }
    }
    (correct, total)
}

/// Runs MLM pretraining; returns the per-step loss history.
pub fn pretrain_mlm(
    texts: &[&str],
    enc: &mut EncoderParams,
    head: &mut MlmHead,
    vocab: &Vocab,
    cfg: &MlmConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let opt = AdamWConfig::new(cfg.learning_rate, cfg.weight_decay);
    let mut enc_state = AdamWState::new(enc);
    let mut head_state = AdamWState::new(head);
    let mut order: Vec<usize> = (0..texts.len()).collect();
    let mut history = Vec::new();
    let limit = cfg.max_steps.unwrap_or(usize::MAX);
    'outer: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if history.len() >= limit {
                break 'outer;
            }
            let batch: Vec<&str> = chunk.iter().map(|&i| texts[i]).collect();
            let Some(step) = mlm_step(&batch, enc, head, vocab, cfg, &mut rng)? else {
                continue;
            };
            adamw_step(enc, &step.grads_enc, &mut enc_state, &opt)?;
            adamw_step(head, &step.grads_head, &mut head_state, &opt)?;
            history.push(step.loss);
        }
        log::info!("mlm epoch {epoch}: last loss {:?}", history.last());
    }
    Ok(history)
}
