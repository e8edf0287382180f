//! Completion/termination prediction from global trial embeddings.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{status_label, Corpus, StatusLabel};
use crate::encoder::{Model, Params, Vocab};
use crate::error::{Error, Result};
use crate::linalg::{dot, Tensor};
use crate::train::{adamw_step, globals_with_grads, AdamWConfig, AdamWState};

/// Single logistic unit over a global embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub w: Tensor,
    pub b: Tensor,
}

impl ClassifierHead {
    pub fn new(dim: usize) -> Self {
        Self {
            w: Tensor::zeros(1, dim),
            b: Tensor::zeros(1, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.cols
    }

    pub fn logit(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(dot(&self.w.data, v) + self.b.data[0])
    }

    pub fn to_extras(&self, extras: &mut BTreeMap<String, Tensor>) {
        extras.insert("outcome.w".into(), self.w.clone());
        extras.insert("outcome.b".into(), self.b.clone());
    }

    pub fn from_extras(extras: &BTreeMap<String, Tensor>) -> Option<Self> {
        let w = extras.get("outcome.w")?.clone();
        let b = extras.get("outcome.b")?.clone();
        (w.rows == 1 && b.data.len() == 1).then_some(Self { w, b })
    }
}

impl Params for ClassifierHead {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("outcome.w".into(), &self.w), ("outcome.b".into(), &self.b)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("outcome.w".into(), &mut self.w), ("outcome.b".into(), &mut self.b)]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Returns (probability of completion, predicted label).
pub fn classify(head: &ClassifierHead, v: &[f64], threshold: f64) -> Result<(f64, u8)> {
    let p = sigmoid(head.logit(v)?);
    Ok((p, u8::from(p >= threshold)))
}

/// Labelled trials: completion = 1, termination = 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutcomeDataset {
    pub items: Vec<(String, u8)>,
}

impl OutcomeDataset {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let items = corpus
            .trials()
            .iter()
            .filter_map(|t| match status_label(t) {
                StatusLabel::Completion => Some((t.id.clone(), 1)),
                StatusLabel::Termination => Some((t.id.clone(), 0)),
                StatusLabel::Unlabeled => None,
            })
            .collect();
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|(_, l)| *l).collect()
    }

    fn both_classes(&self) -> bool {
        let pos = self.items.iter().filter(|(_, l)| *l == 1).count();
        pos > 0 && pos < self.items.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Loss weight on the positive (completion) class.
    pub pos_weight: Option<f64>,
    /// Also update encoder and aggregation parameters.
    pub fine_tune: bool,
    /// Learning rate for encoder parameters when fine-tuning.
    pub encoder_learning_rate: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 0.0,
            epochs: 200,
            batch_size: 64,
            patience: 20,
            pos_weight: None,
            fine_tune: false,
            encoder_learning_rate: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

/// Weighted binary cross-entropy on a logit, with d loss / d logit.
fn bce(logit: f64, label: u8, pos_weight: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    // log(1+e^-z) and log(1+e^z), computed stably.
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    if label == 1 {
        (pos_weight * softplus(-logit), pos_weight * (p - 1.0))
    } else {
        (softplus(logit), p)
    }
}

fn lookup<'a>(embeddings: &'a BTreeMap<String, Vec<f64>>, id: &str) -> Result<&'a [f64]> {
    embeddings
        .get(id)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::UnknownId(id.to_string()))
}

fn mean_loss(head: &ClassifierHead, embeddings: &BTreeMap<String, Vec<f64>>, data: &OutcomeDataset, pw: f64) -> Result<f64> {
    let mut total = 0.0;
    for (id, l) in &data.items {
        total += bce(head.logit(lookup(embeddings, id)?)?, *l, pw).0;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Trains a head on frozen embeddings. With a validation set, the head with
/// the lowest validation loss is returned and training stops early.
pub fn train_head(
    embeddings: &BTreeMap<String, Vec<f64>>,
    train: &OutcomeDataset,
    valid: Option<&OutcomeDataset>,
    cfg: &HeadConfig,
) -> Result<(ClassifierHead, Vec<HeadEpoch>)> {
    if !train.both_classes() {
        return Err(Error::invalid("training set needs both completion and termination trials"));
    }
    for (id, _) in train.items.iter().chain(valid.map_or(&[][..], |v| &v.items)) {
        lookup(embeddings, id)?;
    }
    let dim = lookup(embeddings, &train.items[0].0)?.len();
    let pw = cfg.pos_weight.unwrap_or(1.0);
    let mut head = ClassifierHead::new(dim);
    let opt = AdamWConfig::new(cfg.learning_rate, cfg.weight_decay);
    let mut state = AdamWState::new(&head);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, head.clone());
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut grads = ClassifierHead::new(dim);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (id, l) = &train.items[i];
                let v = lookup(embeddings, id)?;
                let (_, dz) = bce(head.logit(v)?, *l, pw);
                crate::linalg::axpy(dz * scale, v, &mut grads.w.data);
                grads.b.data[0] += dz * scale;
            }
            adamw_step(&mut head, &grads, &mut state, &opt)?;
        }
        let train_loss = mean_loss(&head, embeddings, train, pw)?;
        let valid_loss = valid.map(|v| mean_loss(&head, embeddings, v, pw)).transpose()?;
        history.push(HeadEpoch {
            epoch,
            train_loss,
            valid_loss,
        });
        if let Some(vl) = valid_loss {
            if vl < best.0 {
                best = (vl, head.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    if valid.is_some() && best.0.is_finite() {
        head = best.1;
    }
    Ok((head, history))
}

/// Trains head and model jointly, starting from `head`.
pub fn fine_tune(
    model: &mut Model,
    head: &mut ClassifierHead,
    vocab: &Vocab,
    corpus: &Corpus,
    train: &OutcomeDataset,
    cfg: &HeadConfig,
) -> Result<Vec<HeadEpoch>> {
    if !train.both_classes() {
        return Err(Error::invalid("training set needs both completion and termination trials"));
    }
    let trials = train
        .items
        .iter()
        .map(|(id, _)| corpus.get(id).cloned().ok_or_else(|| Error::UnknownId(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let pw = cfg.pos_weight.unwrap_or(1.0);
    let head_opt = AdamWConfig::new(cfg.learning_rate, cfg.weight_decay);
    let enc_opt = AdamWConfig::new(cfg.encoder_learning_rate, cfg.weight_decay);
    let mut head_state = AdamWState::new(head);
    let mut model_state = AdamWState::new(model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..trials.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|&i| trials[i].clone()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train.items[i].1).collect();
            let mut hg = ClassifierHead::new(head.dim());
            let scale = 1.0 / chunk.len() as f64;
            let h = &*head;
            let (loss, mg) = globals_with_grads(model, vocab, &batch, |globals| {
                let mut loss = 0.0;
                let mut dv = Vec::with_capacity(globals.len());
                for (v, &l) in globals.iter().zip(&labels) {
                    let (li, dz) = bce(h.logit(v)?, l, pw);
                    loss += li;
                    crate::linalg::axpy(dz * scale, v, &mut hg.w.data);
                    hg.b.data[0] += dz * scale;
                    dv.push(h.w.data.iter().map(|w| w * dz * scale).collect());
                }
                Ok((loss, dv))
            })?;
            total += loss;
            adamw_step(head, &hg, &mut head_state, &head_opt)?;
            adamw_step(model, &mg, &mut model_state, &enc_opt)?;
        }
        history.push(HeadEpoch {
            epoch,
            train_loss: total / trials.len() as f64,
            valid_loss: None,
        });
    }
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMetrics {
    pub acc: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub n: usize,
}

pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| u8::from(**s >= threshold) == **l)
        .count();
    correct as f64 / scores.len().max(1) as f64
}

/// Mann-Whitney statistic with tied scores counted one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their average.
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

/// Average precision: Σ (R_t − R_{t−1}) · P_t over distinct score thresholds.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 || n_pos == labels.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        tp += idx[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        seen += j - i + 1;
        let recall = tp as f64 / n_pos as f64;
        ap += (recall - prev_recall) * tp as f64 / seen as f64;
        prev_recall = recall;
        i = j + 1;
    }
    Some(ap)
}

pub fn metrics(scores: &[f64], labels: &[u8]) -> Result<OutcomeMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::invalid("no scores"));
    }
    let roc = roc_auc(scores, labels);
    if roc.is_none() {
        log::warn!("only one class present; ROC-AUC and PR-AUC are undefined");
    }
    Ok(OutcomeMetrics {
        acc: accuracy(scores, labels, 0.5),
        roc_auc: roc,
        pr_auc: average_precision(scores, labels),
        n: scores.len(),
    })
}

/// Rows of `id,probability,label`.
pub fn predictions_to_csv(rows: &[(String, f64, u8)]) -> String {
    let mut s = String::from("id,probability,label\n");
    for (id, p, l) in rows {
        s.push_str(&format!("{id},{p},{l}\n"));
    }
    s
}

pub fn write_predictions(path: &Path, rows: &[(String, f64, u8)]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(predictions_to_csv(rows).as_bytes())
        .map_err(|e| Error::io(path, e))
}
