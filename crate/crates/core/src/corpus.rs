//! Trial documents, JSONL parsing and dataset splits.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_key;

/// Separator placed between context sections.
pub const SECTION_SEPARATOR: &str = "\n\n";

/// The key attributes of a trial, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Title,
    Intervention,
    Disease,
    Outcome,
    Keywords,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Title,
        Attribute::Intervention,
        Attribute::Disease,
        Attribute::Outcome,
        Attribute::Keywords,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Title => "title",
            Attribute::Intervention => "intervention",
            Attribute::Disease => "disease",
            Attribute::Outcome => "outcome",
            Attribute::Keywords => "keywords",
        }
    }

    pub fn parse(s: &str) -> Option<Attribute> {
        Attribute::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// One meta-structured trial document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub id: String,
    pub title: String,
    pub intervention: String,
    pub disease: String,
    pub outcome: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    /// Long-form sections joined by [`SECTION_SEPARATOR`]; derived on load.
    #[serde(skip)]
    pub context: String,
}

impl Trial {
    /// Rebuild `context` from description and criteria.
    pub fn with_derived_context(mut self) -> Self {
        self.context = [&self.description, &self.criteria]
            .into_iter()
            .flatten()
            .filter(|s| !s.trim().is_empty())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(SECTION_SEPARATOR);
        self
    }

    pub fn attribute(&self, attr: Attribute) -> &str {
        match attr {
            Attribute::Title => &self.title,
            Attribute::Intervention => &self.intervention,
            Attribute::Disease => &self.disease,
            Attribute::Outcome => &self.outcome,
            Attribute::Keywords => self.keywords.as_deref().unwrap_or(""),
        }
    }

    pub fn set_attribute(&mut self, attr: Attribute, value: String) {
        match attr {
            Attribute::Title => self.title = value,
            Attribute::Intervention => self.intervention = value,
            Attribute::Disease => self.disease = value,
            Attribute::Outcome => self.outcome = value,
            Attribute::Keywords => self.keywords = Some(value),
        }
    }

    /// Non-empty key attributes in canonical order.
    pub fn present_attributes(&self) -> Vec<Attribute> {
        Attribute::ALL
            .into_iter()
            .filter(|a| !self.attribute(*a).trim().is_empty())
            .collect()
    }

    pub fn disease_key(&self) -> String {
        normalize_key(&self.disease)
    }

    /// Every field concatenated, used by the bag-of-words baselines.
    pub fn full_text(&self) -> String {
        let mut parts: Vec<&str> = Attribute::ALL.iter().map(|a| self.attribute(*a)).collect();
        parts.push(&self.context);
        parts.retain(|p| !p.trim().is_empty());
        parts.join("\n")
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() {
            return Err(format!("trial {:?}: empty title", self.id));
        }
        if self.disease.trim().is_empty() {
            return Err(format!("trial {:?}: empty disease", self.id));
        }
        Ok(())
    }
}

/// Outcome classes derived from the registry status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusLabel {
    Completion,
    Termination,
    Unlabeled,
}

pub fn status_label(trial: &Trial) -> StatusLabel {
    let Some(status) = trial.status.as_deref() else {
        return StatusLabel::Unlabeled;
    };
    match status.trim().to_ascii_lowercase().as_str() {
        "approved" | "completed" => StatusLabel::Completion,
        "suspended" | "terminated" | "withdrawn" => StatusLabel::Termination,
        _ => StatusLabel::Unlabeled,
    }
}

/// An ordered, immutable trial collection with a disease index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    trials: Vec<Trial>,
    positions: HashMap<String, usize>,
    disease_index: BTreeMap<String, Vec<String>>,
}

impl Corpus {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        let mut positions = HashMap::with_capacity(trials.len());
        let mut disease_index: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, t) in trials.iter().enumerate() {
            t.validate().map_err(Error::Invalid)?;
            if positions.insert(t.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(t.id.clone()));
            }
            if t.context.trim().is_empty() {
                log::debug!("trial {:?} has an empty context", t.id);
            }
            disease_index
                .entry(t.disease_key())
                .or_default()
                .push(t.id.clone());
        }
        Ok(Self {
            trials,
            positions,
            disease_index,
        })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Trial> {
        self.positions.get(id).map(|&i| &self.trials[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn disease_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.disease_index
    }

    /// Ids of trials sharing `key` (already normalized).
    pub fn trials_with_disease(&self, key: &str) -> &[String] {
        self.disease_index
            .get(key)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t).expect("trial serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Parse JSON Lines text. Blank lines are skipped.
pub fn parse_jsonl(reader: impl BufRead) -> Result<Corpus> {
    let mut trials = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let trial: Trial = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trial = trial.with_derived_context();
        trial.validate().map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
        if seen.insert(trial.id.clone(), lineno).is_some() {
            return Err(Error::DuplicateId(trial.id));
        }
        trials.push(trial);
    }
    Corpus::new(trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(BufReader::new(f)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            valid_frac: 0.1,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.valid_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid(format!("split fractions out of [0,1]: {fr:?}")));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must sum to 1: {fr:?}")));
        }
        Ok(())
    }
}

/// Deterministic three-way split; each part keeps the corpus order.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot split an empty corpus"));
    }
    let n = corpus.len();
    let n_train = ((n as f64) * spec.train_frac).round() as usize;
    let n_valid = (((n as f64) * spec.valid_frac).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let n_test = n - n_train - n_valid;
    for (name, frac, size) in [
        ("train", spec.train_frac, n_train),
        ("valid", spec.valid_frac, n_valid),
        ("test", spec.test_frac, n_test),
    ] {
        if frac > 0.0 && size == 0 {
            log::warn!("{name} split is empty despite fraction {frac}");
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut part = vec![2u8; n];
    for &i in &order[..n_train] {
        part[i] = 0;
    }
    for &i in &order[n_train..n_train + n_valid] {
        part[i] = 1;
    }
    let pick = |p: u8| {
        Corpus::new(
            corpus
                .trials
                .iter()
                .zip(&part)
                .filter(|(_, &q)| q == p)
                .map(|(t, _)| t.clone())
                .collect(),
        )
    };
    Ok((pick(0)?, pick(1)?, pick(2)?))
}
