//! Contrastive sample construction.
//!
//! Global samples perturb the trial's meta-structure: the positive drops one
//! key attribute, the hard negative borrows the title (or the context) of a
//! trial that targets the same disease. Local samples perturb one dictionary
//! entity inside an attribute text.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Attribute, Corpus, Trial};
use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeMap, DEFAULT_MAX_ENTITIES};
use crate::text::collapse_whitespace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeKind {
    Attr,
    Ctx,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSample {
    pub anchor: Trial,
    pub positive: Trial,
    pub hard_negative: Trial,
    pub negative_kind: NegativeKind,
    /// The hard negative came from a random trial, not a co-disease one.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSample {
    pub anchor_text: String,
    pub positive_text: String,
    pub negative_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    /// Fraction of hard negatives built by context replacement.
    pub mix_ratio_ctx: f64,
    pub n_local_negatives: usize,
    pub max_entities: usize,
    /// Attributes whose text may seed a local sample.
    pub local_attributes: Vec<Attribute>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mix_ratio_ctx: 0.5,
            n_local_negatives: 2,
            max_entities: DEFAULT_MAX_ENTITIES,
            local_attributes: Attribute::ALL.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ContrastiveBatch {
    pub globals: Vec<GlobalSample>,
    pub locals: Vec<LocalSample>,
    /// Trials for which no global sample could be built.
    pub skipped_global: Vec<String>,
    /// Trials without a local sample.
    pub skipped_local: Vec<String>,
}

/// Copy of `trial` with one uniformly chosen non-empty key attribute emptied.
pub fn make_global_positive<R: Rng + ?Sized>(trial: &Trial, rng: &mut R) -> Result<Trial> {
    let present = trial.present_attributes();
    if present.len() < 2 {
        return Err(Error::invalid(format!(
            "trial {:?} needs at least two non-empty key attributes for dropout",
            trial.id
        )));
    }
    let drop = present[rng.random_range(0..present.len())];
    let mut out = trial.clone();
    match drop {
        Attribute::Keywords => out.keywords = None,
        a => out.set_attribute(a, String::new()),
    }
    Ok(out)
}

/// Copy of `trial` with its title (`Attr`) or context (`Ctx`) taken from a
/// trial sharing its disease key. Falls back to a random other trial when no
/// co-disease trial exists; the returned flag is then set.
pub fn make_global_negative<R: Rng + ?Sized>(
    trial: &Trial,
    corpus: &Corpus,
    kind: NegativeKind,
    rng: &mut R,
) -> Result<(Trial, bool)> {
    if corpus.len() < 2 {
        return Err(Error::invalid("hard negatives need at least two trials"));
    }
    let peers: Vec<&String> = corpus
        .trials_with_disease(&trial.disease_key())
        .iter()
        .filter(|id| **id != trial.id)
        .collect();
    let (donor, fallback) = if peers.is_empty() {
        let others: Vec<&Trial> = corpus.trials().iter().filter(|t| t.id != trial.id).collect();
        if others.is_empty() {
            return Err(Error::invalid("hard negatives need at least two trials"));
        }
        (others[rng.random_range(0..others.len())], true)
    } else {
        let id = peers[rng.random_range(0..peers.len())];
        (corpus.get(id).expect("disease index is consistent"), false)
    };
    let mut out = trial.clone();
    match kind {
        NegativeKind::Attr => out.title = donor.title.clone(),
        NegativeKind::Ctx => {
            out.context = donor.context.clone();
            out.description = donor.description.clone();
            out.criteria = donor.criteria.clone();
        }
    }
    Ok((out, fallback))
}

/// Entity-level pair for one text: the positive swaps one mention for a
/// similar concept, each negative either deletes it or swaps in a dissimilar
/// concept.
pub fn make_local_sample<R: Rng + ?Sized>(
    text: &str,
    map: &KnowledgeMap,
    n_neg: usize,
    max_entities: usize,
    rng: &mut R,
) -> Result<LocalSample> {
    if n_neg == 0 {
        return Err(Error::invalid("local samples need at least one negative"));
    }
    let mentions = map.extract_entities(text, max_entities.max(1));
    if mentions.is_empty() {
        return Err(Error::NoEntity);
    }
    let m = &mentions[rng.random_range(0..mentions.len())];
    let (s, e) = m.span;
    let splice = |with: &str| format!("{}{}{}", &text[..s], with, &text[e..]);

    let positive_text = splice(&map.sample_similar(m, rng));
    let mut negative_texts = Vec::with_capacity(n_neg);
    for _ in 0..n_neg {
        let delete = rng.random_bool(0.5);
        let neg = if delete {
            collapse_whitespace(&splice(""))
        } else {
            match map.sample_dissimilar(m.entry, rng) {
                Ok(other) => splice(&other),
                Err(Error::NoDissimilarConcept) => collapse_whitespace(&splice("")),
                Err(err) => return Err(err),
            }
        };
        negative_texts.push(neg);
    }
    Ok(LocalSample {
        anchor_text: text.to_string(),
        positive_text,
        negative_texts,
    })
}

/// Which hard-negative kinds are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeKinds {
    pub attr: bool,
    pub ctx: bool,
}

impl Default for NegativeKinds {
    fn default() -> Self {
        Self {
            attr: true,
            ctx: true,
        }
    }
}

/// Per-trial kinds for a batch of `n`: `round(n * ratio)` context negatives,
/// shuffled.
fn assign_kinds<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Vec<NegativeKind> {
    let n_ctx = ((n as f64) * ratio.clamp(0.0, 1.0)).round() as usize;
    let mut kinds: Vec<NegativeKind> = (0..n)
        .map(|i| if i < n_ctx { NegativeKind::Ctx } else { NegativeKind::Attr })
        .collect();
    kinds.shuffle(rng);
    kinds
}

pub fn build_batch<R: Rng + ?Sized>(
    trials: &[Trial],
    corpus: &Corpus,
    map: &KnowledgeMap,
    config: &AugmentConfig,
    kinds_allowed: NegativeKinds,
    rng: &mut R,
) -> Result<ContrastiveBatch> {
    if trials.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let ratio = match (kinds_allowed.attr, kinds_allowed.ctx) {
        (true, false) => 0.0,
        (false, true) => 1.0,
        _ => config.mix_ratio_ctx,
    };
    let kinds = assign_kinds(trials.len(), ratio, rng);
    let mut batch = ContrastiveBatch::default();
    for (trial, kind) in trials.iter().zip(kinds) {
        let global = make_global_positive(trial, rng).and_then(|positive| {
            let (hard_negative, fallback) = make_global_negative(trial, corpus, kind, rng)?;
            Ok(GlobalSample {
                anchor: trial.clone(),
                positive,
                hard_negative,
                negative_kind: kind,
                fallback,
            })
        });
        match global {
            Ok(g) => batch.globals.push(g),
            Err(e) => {
                log::debug!("skipping global sample for {:?}: {e}", trial.id);
                batch.skipped_global.push(trial.id.clone());
            }
        }

        let sources: Vec<&str> = config
            .local_attributes
            .iter()
            .map(|a| trial.attribute(*a))
            .filter(|t| !map.extract_entities(t, 1).is_empty())
            .collect();
        if sources.is_empty() {
            batch.skipped_local.push(trial.id.clone());
            continue;
        }
        let text = sources[rng.random_range(0..sources.len())];
        match make_local_sample(text, map, config.n_local_negatives, config.max_entities, rng) {
            Ok(l) => batch.locals.push(l),
            Err(_) => batch.skipped_local.push(trial.id.clone()),
        }
    }
    Ok(batch)
}
