//! Forward/backward of the joint contrastive objective over one batch.

use std::collections::HashMap;

use crate::augment::ContrastiveBatch;
use crate::corpus::Trial;
use crate::encoder::{mean_of, AggCache, EncoderParams, Model, SeqCache, Vocab};
use crate::error::{Error, Result};
use crate::linalg::axpy;

use super::loss::{loss_global, loss_joint, loss_local, GlobalVectors, InfoNceVariant, LocalVectors};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub temperature: f64,
    pub variant: InfoNceVariant,
    /// Include each anchor's hard negative; otherwise in-batch negatives only.
    pub hard_negatives: bool,
    pub local_loss: bool,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            variant: InfoNceVariant::Standard,
            hard_negatives: true,
            local_loss: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    pub loss_g: f64,
    pub loss_l: f64,
    pub loss: f64,
}

/// Encodes each distinct text once and accumulates its output gradient.
struct TextBank<'a> {
    enc: &'a EncoderParams,
    vocab: &'a Vocab,
    index: HashMap<&'a str, usize>,
    caches: Vec<Option<SeqCache>>,
    vectors: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl<'a> TextBank<'a> {
    fn new(enc: &'a EncoderParams, vocab: &'a Vocab) -> Self {
        Self {
            enc,
            vocab,
            index: HashMap::new(),
            caches: Vec::new(),
            vectors: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Returns `None` for texts without tokens.
    fn get(&mut self, text: &'a str) -> Result<Option<usize>> {
        if let Some(&i) = self.index.get(text) {
            return Ok(self.caches[i].as_ref().map(|_| i));
        }
        let d = self.enc.config.dim;
        let ids = self.vocab.encode(text, self.enc.config.max_len);
        let i = self.caches.len();
        self.index.insert(text, i);
        if ids.is_empty() {
            self.caches.push(None);
            self.vectors.push(vec![0.0; d]);
            self.grads.push(Vec::new());
            return Ok(None);
        }
        if ids.iter().any(|&id| id as usize >= self.enc.config.vocab_size) {
            return Err(Error::invalid("token id outside the encoder vocabulary"));
        }
        let cache = self.enc.forward(&ids);
        let v = crate::encoder::mean_pool(&cache.states, d);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        self.caches.push(Some(cache));
        self.vectors.push(v);
        self.grads.push(vec![0.0; d]);
        Ok(Some(i))
    }

    fn backward(&self, grads: &mut EncoderParams) {
        let d = self.enc.config.dim;
        for (cache, g) in self.caches.iter().zip(&self.grads) {
            let Some(cache) = cache else { continue };
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let n = cache.ids.len();
            let mut d_states = vec![0.0; n * d];
            for row in d_states.chunks_mut(d) {
                axpy(1.0 / n as f64, g, row);
            }
            self.enc.backward(cache, &d_states, grads);
        }
    }
}

struct TrialNode {
    locals: Vec<usize>,
    ctx: Option<usize>,
    cache: AggCache,
    global: Vec<f64>,
}

fn forward_trial<'a>(trial: &'a Trial, model: &Model, bank: &mut TextBank<'a>) -> Result<TrialNode> {
    let mut locals = Vec::new();
    for attr in trial.present_attributes() {
        if let Some(i) = bank.get(trial.attribute(attr))? {
            locals.push(i);
        }
    }
    if locals.is_empty() {
        return Err(Error::invalid(format!("trial {:?} has no encodable attribute", trial.id)));
    }
    let ctx = bank.get(&trial.context)?;
    let refs: Vec<&[f64]> = locals.iter().map(|&i| bank.vectors[i].as_slice()).collect();
    let q = match ctx {
        Some(c) => bank.vectors[c].clone(),
        None => mean_of(&refs),
    };
    let (global, cache) = model.agg.forward(&q, &refs)?;
    Ok(TrialNode {
        locals,
        ctx,
        cache,
        global,
    })
}

fn backward_trial(node: &TrialNode, d_global: &[f64], model: &Model, grads: &mut Model, bank: &mut TextBank) {
    let (dq, dlocals) = model.agg.backward(&node.cache, d_global, &mut grads.agg);
    for (&i, g) in node.locals.iter().zip(&dlocals) {
        axpy(1.0, g, &mut bank.grads[i]);
    }
    match node.ctx {
        Some(c) => axpy(1.0, &dq, &mut bank.grads[c]),
        None => {
            let m = node.locals.len() as f64;
            for &i in &node.locals {
                axpy(1.0 / m, &dq, &mut bank.grads[i]);
            }
        }
    }
}

/// Joint loss of a batch and its exact gradient w.r.t. every model parameter.
pub fn batch_loss_and_grads(
    model: &Model,
    vocab: &Vocab,
    batch: &ContrastiveBatch,
    obj: &Objective,
) -> Result<(BatchLoss, Model)> {
    let mut bank = TextBank::new(&model.enc, vocab);
    let mut grads = model.zeros_like();

    let mut nodes = Vec::with_capacity(batch.globals.len());
    for s in &batch.globals {
        let a = forward_trial(&s.anchor, model, &mut bank)?;
        let p = forward_trial(&s.positive, model, &mut bank)?;
        let n = if obj.hard_negatives {
            Some(forward_trial(&s.hard_negative, model, &mut bank)?)
        } else {
            None
        };
        nodes.push((a, p, n));
    }

    let mut local_ids = Vec::new();
    if obj.local_loss {
        'samples: for s in &batch.locals {
            let mut ids = Vec::with_capacity(2 + s.negative_texts.len());
            for t in std::iter::once(&s.anchor_text)
                .chain(std::iter::once(&s.positive_text))
                .chain(&s.negative_texts)
            {
                match bank.get(t)? {
                    Some(i) => ids.push(i),
                    None => continue 'samples,
                }
            }
            local_ids.push(ids);
        }
    }

    let mut out = BatchLoss::default();
    if !nodes.is_empty() {
        let vecs: Vec<GlobalVectors> = nodes
            .iter()
            .map(|(a, p, n)| GlobalVectors {
                anchor: a.global.clone(),
                positive: p.global.clone(),
                hard_negative: n.as_ref().map(|n| n.global.clone()),
            })
            .collect();
        let g = loss_global(&vecs, obj.temperature, obj.variant)?;
        out.loss_g = g.loss;
        for (k, (a, p, n)) in nodes.iter().enumerate() {
            backward_trial(a, &g.d_anchor[k], model, &mut grads, &mut bank);
            backward_trial(p, &g.d_positive[k], model, &mut grads, &mut bank);
            if let (Some(n), Some(dn)) = (n, &g.d_hard_negative[k]) {
                backward_trial(n, dn, model, &mut grads, &mut bank);
            }
        }
    }
    if !local_ids.is_empty() {
        let vecs: Vec<LocalVectors> = local_ids
            .iter()
            .map(|ids| LocalVectors {
                anchor: bank.vectors[ids[0]].clone(),
                positive: bank.vectors[ids[1]].clone(),
                negatives: ids[2..].iter().map(|&i| bank.vectors[i].clone()).collect(),
            })
            .collect();
        let l = loss_local(&vecs, obj.temperature)?;
        out.loss_l = l.loss;
        for (k, ids) in local_ids.iter().enumerate() {
            axpy(1.0, &l.d_anchor[k], &mut bank.grads[ids[0]]);
            axpy(1.0, &l.d_positive[k], &mut bank.grads[ids[1]]);
            for (j, &i) in ids[2..].iter().enumerate() {
                axpy(1.0, &l.d_negatives[k][j], &mut bank.grads[i]);
            }
        }
    }
    out.loss = loss_joint(out.loss_g, out.loss_l);
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    bank.backward(&mut grads.enc);
    Ok((out, grads))
}

/// Loss only; used by finite-difference checks.
pub fn batch_loss(model: &Model, vocab: &Vocab, batch: &ContrastiveBatch, obj: &Objective) -> Result<BatchLoss> {
    batch_loss_and_grads(model, vocab, batch, obj).map(|(l, _)| l)
}

/// Encodes `trials` to global vectors, applies `loss` to them, and
/// backpropagates its vector gradients into every model parameter.
pub fn globals_with_grads(
    model: &Model,
    vocab: &Vocab,
    trials: &[Trial],
    loss: impl FnOnce(&[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>,
) -> Result<(f64, Model)> {
    let mut bank = TextBank::new(&model.enc, vocab);
    let mut grads = model.zeros_like();
    let nodes = trials
        .iter()
        .map(|t| forward_trial(t, model, &mut bank))
        .collect::<Result<Vec<_>>>()?;
    let globals: Vec<Vec<f64>> = nodes.iter().map(|n| n.global.clone()).collect();
    let (value, d_globals) = loss(&globals)?;
    for (node, d) in nodes.iter().zip(&d_globals) {
        backward_trial(node, d, model, &mut grads, &mut bank);
    }
    bank.backward(&mut grads.enc);
    Ok((value, grads))
}
