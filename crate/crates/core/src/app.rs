//! Configuration, the search engine shared by the CLI and the HTTP service,
//! embedding export, and ranking adapters for evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Attribute, Corpus};
use crate::encoder::{encode_query, encode_trial, EmbeddingBundle, EncoderConfig, Model, Query, Vocab};
use crate::error::{Error, Result};
use crate::outcome::HeadConfig;
use crate::retrieval::{DenseIndex, SparseModel};
use crate::train::{MlmConfig, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub knowledge_map: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

/// Encoder shape before the vocabulary is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub agg_heads: usize,
    pub min_freq: usize,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let e = EncoderConfig::default();
        Self {
            dim: e.dim,
            n_layers: e.n_layers,
            n_heads: e.n_heads,
            ffn_dim: e.ffn_dim,
            max_len: e.max_len,
            agg_heads: e.n_heads,
            min_freq: 1,
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            dim: self.dim,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub paths: Paths,
    pub model: ModelSpec,
    pub mlm: MlmConfig,
    pub train: TrainConfig,
    pub outcome: HeadConfig,
    pub log_level: String,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            model: ModelSpec::default(),
            mlm: MlmConfig::default(),
            train: TrainConfig::default(),
            outcome: HeadConfig::default(),
            log_level: "info".into(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Checks that a required input exists before a command starts.
pub fn require(path: Option<&Path>, what: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| Error::invalid(format!("missing {what} path")))?;
    if !p.exists() {
        return Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")),
        ));
    }
    Ok(p.to_path_buf())
}

pub fn encode_corpus(corpus: &Corpus, model: &Model, vocab: &Vocab) -> Result<BTreeMap<String, EmbeddingBundle>> {
    corpus
        .trials()
        .iter()
        .map(|t| {
            encode_trial(t, model, vocab)
                .map(|b| (t.id.clone(), b))
                .map_err(|e| match e {
                    Error::Invalid(m) => Error::invalid(format!("trial {:?}: {m}", t.id)),
                    other => other,
                })
        })
        .collect()
}

/// A search: either by stored trial id, or by a partial set of attributes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<Attribute, String>,
    pub k: usize,
}

impl SearchRequest {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        match (&self.id, self.attributes.is_empty()) {
            (Some(_), false) => Err(Error::invalid("give either an id or attributes, not both")),
            (None, true) => Err(Error::invalid("give a trial id or at least one attribute")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub rank: usize,
    pub id: String,
    pub title: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: SearchRequest,
    pub results: Vec<SearchHit>,
}

impl SearchResponse {
    /// The JSON body, shared verbatim by `search --json` and `GET /search`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>4}  {:<14} {:>8}  title\n", "rank", "id", "score");
        for h in &self.results {
            s.push_str(&format!("{:>4}  {:<14} {:>8.4}  {}\n", h.rank, h.id, h.score, h.title));
        }
        s
    }
}

/// Everything needed to answer searches; immutable once built.
pub struct SearchEngine {
    pub model: Model,
    pub vocab: Vocab,
    pub index: DenseIndex,
    pub corpus: Corpus,
}

impl SearchEngine {
    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse> {
        req.validate()?;
        let hits = match &req.id {
            Some(id) => {
                let v = self.index.vector(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
                self.index.search(v, req.k, Some(id))?
            }
            None => {
                let q = Query {
                    attrs: req.attributes.clone(),
                    context: None,
                };
                let v = encode_query(&q, &self.model, &self.vocab)?;
                self.index.search(&v, req.k, None)?
            }
        };
        let results = hits
            .into_iter()
            .enumerate()
            .map(|(i, h)| SearchHit {
                rank: i + 1,
                title: self.corpus.get(&h.id).map(|t| t.title.clone()).unwrap_or_default(),
                id: h.id,
                score: h.score,
            })
            .collect();
        Ok(SearchResponse {
            query: req.clone(),
            results,
        })
    }
}

fn clean_field(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// TSV with header `id\tdisease\tdim_0..`; one row per indexed trial.
pub fn embeddings_to_tsv(index: &DenseIndex, corpus: &Corpus) -> String {
    let mut s = String::from("id\tdisease");
    for j in 0..index.dim() {
        s.push_str(&format!("\tdim_{j}"));
    }
    s.push('\n');
    for (i, id) in index.ids().iter().enumerate() {
        s.push_str(&clean_field(id));
        s.push('\t');
        s.push_str(&clean_field(corpus.get(id).map_or("", |t| t.disease.as_str())));
        for &x in index.row(i) {
            s.push_str(&format!("\t{}", x as f32));
        }
        s.push('\n');
    }
    s
}

pub fn export_embeddings(index: &DenseIndex, corpus: &Corpus, path: &Path) -> Result<()> {
    std::fs::write(path, embeddings_to_tsv(index, corpus)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub disease: String,
    pub vector: Vec<f64>,
}

pub fn parse_embeddings_tsv(text: &str) -> Result<Vec<EmbeddingRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::invalid("empty embeddings file"))?;
    let dim = header.split('\t').count().saturating_sub(2);
    let mut out = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != dim + 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected {} columns, found {}", dim + 2, cols.len()),
            });
        }
        let vector = cols[2..]
            .iter()
            .map(|c| {
                c.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("{c:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        out.push(EmbeddingRow {
            id: cols[0].to_string(),
            disease: cols[1].to_string(),
            vector,
        });
    }
    Ok(out)
}

/// Re-ranks a candidate pool by cosine against the query's indexed vector.
pub fn dense_rank(index: &DenseIndex, query: &str, pool: &[String]) -> Result<Vec<String>> {
    let q = index.vector(query).ok_or_else(|| Error::UnknownId(query.into()))?;
    let mut scored = pool
        .iter()
        .map(|id| {
            let v = index.vector(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            Ok(crate::retrieval::Hit {
                id: id.clone(),
                score: crate::linalg::dot(q, v),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    Ok(scored.into_iter().map(|h| h.id).collect())
}

/// Re-ranks a candidate pool by a bag-of-words model's scores.
pub fn sparse_rank(model: &SparseModel, corpus: &Corpus, query: &str, pool: &[String]) -> Result<Vec<String>> {
    let trial = corpus.get(query).ok_or_else(|| Error::UnknownId(query.into()))?;
    let hits = model.search(&trial.full_text(), model.n_docs(), None)?;
    let scores: BTreeMap<&str, f64> = hits.iter().map(|h| (h.id.as_str(), h.score)).collect();
    let mut ranked = pool
        .iter()
        .map(|id| {
            scores
                .get(id.as_str())
                .map(|&s| (id.clone(), s))
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked.into_iter().map(|(id, _)| id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let c = AppConfig::from_toml("").unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.train.batch_size, 50);
        let c = AppConfig::from_toml("[train]\nlearning_rate = 0.001\n[model]\ndim = 32\n").unwrap();
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.batch_size, 50);
        assert_eq!(c.model.dim, 32);
        assert_eq!(AppConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(AppConfig::from_toml("[train]\nbatch_size = \"x\"").is_err());
    }

    #[test]
    fn request_validation() {
        let mut r = SearchRequest {
            k: 5,
            ..Default::default()
        };
        assert!(r.validate().is_err());
        r.attributes.insert(Attribute::Title, "x".into());
        assert!(r.validate().is_ok());
        r.id = Some("a".into());
        assert!(r.validate().is_err());
    }

    #[test]
    fn tsv_export_round_trip() {
        use crate::corpus::Trial;
        let t = |id: &str, d: &str| Trial {
            id: id.into(),
            title: "t".into(),
            intervention: String::new(),
            disease: d.into(),
            outcome: String::new(),
            keywords: None,
            description: None,
            criteria: None,
            status: None,
            context: String::new(),
        };
        let corpus = Corpus::new(vec![t("a", "flu\tsevere"), t("b", "cold"), t("c", "covid")]).unwrap();
        let index = DenseIndex::from_vectors([
            ("a".to_string(), vec![1.0, 2.0, 2.0]),
            ("b".to_string(), vec![0.3, -0.1, 0.7]),
            ("c".to_string(), vec![-1.0, 0.0, 0.0]),
        ])
        .unwrap();
        let tsv = embeddings_to_tsv(&index, &corpus);
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.starts_with("id\tdisease\tdim_0\tdim_1\tdim_2\n"));
        assert_eq!(tsv, embeddings_to_tsv(&index, &corpus));
        let rows = parse_embeddings_tsv(&tsv).unwrap();
        assert_eq!(rows[0].disease, "flu severe");
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.id, index.ids()[i]);
            for (a, b) in r.vector.iter().zip(index.row(i)) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
