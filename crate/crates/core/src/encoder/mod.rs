//! Text and trial encoding.
//!
//! Each non-empty key attribute is encoded on its own into a local vector;
//! the context is encoded the same way and used as the attention query over
//! the locals. The attention output is the trial's global vector.

mod aggregate;
pub mod checkpoint;
mod transformer;
pub mod vocab;

use std::collections::BTreeMap;

use rand::Rng;

pub use aggregate::{AggCache, AttentionParams};
pub use transformer::{mean_pool, EncoderConfig, EncoderParams, Params, SeqCache};
pub use vocab::{fit_vocab, Vocab};

use crate::corpus::{Attribute, Trial};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Tensor};

/// Encoder backbone plus the aggregation attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub enc: EncoderParams,
    pub agg: AttentionParams,
}

impl Model {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, agg_heads: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if agg_heads == 0 || config.dim % agg_heads != 0 {
            return Err(Error::invalid(format!(
                "aggregation heads {agg_heads} must divide dim {}",
                config.dim
            )));
        }
        let enc = EncoderParams::init(config, rng);
        let agg = AttentionParams::init(config.dim, agg_heads, rng);
        Ok(Self { enc, agg })
    }

    pub fn dim(&self) -> usize {
        self.enc.config.dim
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            enc: self.enc.zeros_like(),
            agg: self.agg.zeros_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(name) => Err(Error::NonFinite(name)),
            None => Ok(()),
        }
    }
}

impl Params for Model {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .enc
            .tensors()
            .into_iter()
            .map(|(n, t)| (format!("enc.{n}"), t))
            .collect();
        out.extend(self.agg.tensors().into_iter().map(|(n, t)| (format!("agg.{n}"), t)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = self
            .enc
            .tensors_mut()
            .into_iter()
            .map(|(n, t)| (format!("enc.{n}"), t))
            .collect();
        out.extend(
            self.agg
                .tensors_mut()
                .into_iter()
                .map(|(n, t)| (format!("agg.{n}"), t)),
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    /// The text had no tokens; `vector` is all zeros.
    pub empty: bool,
}

pub fn encode_text(text: &str, enc: &EncoderParams, vocab: &Vocab) -> Result<TextEmbedding> {
    let ids = vocab.encode(text, enc.config.max_len);
    if ids.is_empty() {
        return Ok(TextEmbedding {
            vector: vec![0.0; enc.config.dim],
            empty: true,
        });
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= enc.config.vocab_size) {
        return Err(Error::invalid(format!(
            "token id {bad} outside the encoder vocabulary ({})",
            enc.config.vocab_size
        )));
    }
    let cache = enc.forward(&ids);
    let vector = mean_pool(&cache.states, enc.config.dim);
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder parameters".into()));
    }
    Ok(TextEmbedding {
        vector,
        empty: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub locals: BTreeMap<Attribute, Vec<f64>>,
    pub context: Vec<f64>,
    pub context_empty: bool,
    pub global: Vec<f64>,
}

/// A partial trial used as a search query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Query {
    pub attrs: BTreeMap<Attribute, String>,
    pub context: Option<String>,
}

impl Query {
    pub fn from_trial(trial: &Trial) -> Self {
        Self {
            attrs: trial
                .present_attributes()
                .into_iter()
                .map(|a| (a, trial.attribute(a).to_string()))
                .collect(),
            context: Some(trial.context.clone()),
        }
    }

    pub fn with(mut self, attr: Attribute, text: impl Into<String>) -> Self {
        self.attrs.insert(attr, text.into());
        self
    }
}

/// Mean of the locals, used as the attention query when context is missing.
pub fn mean_of(vectors: &[&[f64]]) -> Vec<f64> {
    let d = vectors[0].len();
    let mut out = vec![0.0; d];
    for v in vectors {
        crate::linalg::axpy(1.0, v, &mut out);
    }
    out.iter_mut().for_each(|x| *x /= vectors.len() as f64);
    out
}

fn encode_parts(query: &Query, model: &Model, vocab: &Vocab) -> Result<EmbeddingBundle> {
    let mut locals = BTreeMap::new();
    for (attr, text) in &query.attrs {
        let e = encode_text(text, &model.enc, vocab)?;
        if !e.empty {
            locals.insert(*attr, e.vector);
        }
    }
    if locals.is_empty() {
        return Err(Error::invalid("no non-empty key attribute to encode"));
    }
    let ctx = encode_text(query.context.as_deref().unwrap_or(""), &model.enc, vocab)?;
    let refs: Vec<&[f64]> = locals.values().map(Vec::as_slice).collect();
    let q = if ctx.empty { mean_of(&refs) } else { ctx.vector.clone() };
    let (global, _) = model.agg.forward(&q, &refs)?;
    Ok(EmbeddingBundle {
        locals,
        context: ctx.vector,
        context_empty: ctx.empty,
        global,
    })
}

pub fn encode_trial(trial: &Trial, model: &Model, vocab: &Vocab) -> Result<EmbeddingBundle> {
    encode_parts(&Query::from_trial(trial), model, vocab)
}

pub fn encode_query(query: &Query, model: &Model, vocab: &Vocab) -> Result<Vec<f64>> {
    Ok(encode_parts(query, model, vocab)?.global)
}

/// Cosine similarity; errors on a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector(None));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}
