use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::corpus::{Corpus, Trial};
use crate::error::{Error, Result};
use crate::text::tokenize;

use super::{top_k, Hit};

const MAGIC: &[u8; 4] = b"TSSP";
pub const SPARSE_VERSION: u32 = 1;
pub const DEFAULT_POOL_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseKind {
    Tfidf,
    Bm25,
}

impl SparseKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tfidf" | "tf-idf" => Some(Self::Tfidf),
            "bm25" => Some(Self::Bm25),
            _ => None,
        }
    }
}

/// Term statistics over a corpus. Raw term frequencies are stored; TF-IDF
/// weights are derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub kind: SparseKind,
    pub k1: f64,
    pub b: f64,
    ids: Vec<String>,
    terms: Vec<String>,
    term_index: HashMap<String, u32>,
    df: Vec<u32>,
    /// Per document: (term, tf) sorted by term.
    docs: Vec<Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    avgdl: f64,
    /// TF-IDF only: L2-normalized document weights.
    weights: Vec<Vec<(u32, f64)>>,
}

pub fn fit_sparse(corpus: &Corpus, kind: SparseKind) -> Result<SparseModel> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot fit a sparse model on an empty corpus"));
    }
    let mut counts: Vec<(String, BTreeMap<String, u32>, u32)> = Vec::with_capacity(corpus.len());
    let mut vocab = BTreeMap::new();
    for t in corpus.trials() {
        let toks = tokenize(&t.full_text());
        let mut tf = BTreeMap::new();
        for tok in &toks {
            *tf.entry(tok.clone()).or_insert(0u32) += 1;
        }
        for term in tf.keys() {
            *vocab.entry(term.clone()).or_insert(0u32) += 1;
        }
        counts.push((t.id.clone(), tf, toks.len() as u32));
    }
    let terms: Vec<String> = vocab.keys().cloned().collect();
    let df: Vec<u32> = vocab.values().copied().collect();
    let term_index: HashMap<String, u32> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    let mut ids = Vec::new();
    let mut docs = Vec::new();
    let mut doc_len = Vec::new();
    for (id, tf, len) in counts {
        ids.push(id);
        docs.push(tf.into_iter().map(|(t, c)| (term_index[&t], c)).collect());
        doc_len.push(len);
    }
    SparseModel::assemble(kind, 1.5, 0.75, ids, terms, df, docs, doc_len)
}

impl SparseModel {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: SparseKind,
        k1: f64,
        b: f64,
        ids: Vec<String>,
        terms: Vec<String>,
        df: Vec<u32>,
        docs: Vec<Vec<(u32, u32)>>,
        doc_len: Vec<u32>,
    ) -> Result<Self> {
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total as f64 / ids.len().max(1) as f64;
        if avgdl <= 0.0 {
            return Err(Error::invalid("corpus has no tokens"));
        }
        let term_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let mut m = Self {
            kind,
            k1,
            b,
            ids,
            terms,
            term_index,
            df,
            docs,
            doc_len,
            avgdl,
            weights: Vec::new(),
        };
        if kind == SparseKind::Tfidf {
            m.weights = m
                .docs
                .iter()
                .map(|d| m.normalized(d.iter().map(|&(t, c)| (t, f64::from(c)))))
                .collect();
        }
        Ok(m)
    }

    pub fn n_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> Option<u32> {
        self.term_index.get(term).map(|&i| self.df[i as usize])
    }

    /// Smoothed TF-IDF idf: ln((1+N)/(1+df)) + 1.
    pub fn tfidf_idf(&self, df: u32) -> f64 {
        let n = self.n_docs() as f64;
        ((1.0 + n) / (1.0 + f64::from(df))).ln() + 1.0
    }

    /// Okapi idf: ln((N−df+0.5)/(df+0.5) + 1).
    pub fn bm25_idf(&self, df: u32) -> f64 {
        let n = self.n_docs() as f64;
        let df = f64::from(df);
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn normalized(&self, tf: impl Iterator<Item = (u32, f64)>) -> Vec<(u32, f64)> {
        let mut w: Vec<(u32, f64)> = tf.map(|(t, c)| (t, c * self.tfidf_idf(self.df[t as usize]))).collect();
        let n = w.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            w.iter_mut().for_each(|(_, x)| *x /= n);
        }
        w
    }

    /// TF-IDF weights of document `i`, sorted by term id.
    pub fn doc_weights(&self, i: usize) -> Option<&[(u32, f64)]> {
        self.weights.get(i).map(Vec::as_slice)
    }

    fn scores(&self, query_text: &str) -> Result<Vec<f64>> {
        let toks = tokenize(query_text);
        if toks.is_empty() {
            return Err(Error::invalid("query has no tokens"));
        }
        let known: Vec<u32> = toks.iter().filter_map(|t| self.term_index.get(t).copied()).collect();
        let mut scores = vec![0.0; self.n_docs()];
        match self.kind {
            SparseKind::Tfidf => {
                let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
                for t in known {
                    *tf.entry(t).or_insert(0.0) += 1.0;
                }
                let q: HashMap<u32, f64> = self.normalized(tf.into_iter()).into_iter().collect();
                for (s, w) in scores.iter_mut().zip(&self.weights) {
                    *s = w.iter().filter_map(|(t, x)| q.get(t).map(|y| x * y)).sum();
                }
            }
            SparseKind::Bm25 => {
                for (i, s) in scores.iter_mut().enumerate() {
                    let doc = &self.docs[i];
                    let norm = self.k1 * (1.0 - self.b + self.b * f64::from(self.doc_len[i]) / self.avgdl);
                    for &t in &known {
                        if let Ok(p) = doc.binary_search_by_key(&t, |&(term, _)| term) {
                            let tf = f64::from(doc[p].1);
                            *s += self.bm25_idf(self.df[t as usize]) * tf * (self.k1 + 1.0) / (tf + norm);
                        }
                    }
                }
            }
        }
        Ok(scores)
    }

    pub fn search(&self, query_text: &str, k: usize, exclude: Option<&str>) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let scores = self.scores(query_text)?;
        let hits = self
            .ids
            .iter()
            .zip(scores)
            .filter(|(id, _)| Some(id.as_str()) != exclude)
            .map(|(id, score)| Hit { id: id.clone(), score })
            .collect();
        Ok(top_k(hits, k))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(SPARSE_VERSION);
        w.u8(match self.kind {
            SparseKind::Tfidf => 0,
            SparseKind::Bm25 => 1,
        });
        w.f64(self.k1);
        w.f64(self.b);
        w.u32(self.terms.len() as u32);
        for (t, &df) in self.terms.iter().zip(&self.df) {
            w.str(t);
            w.u32(df);
        }
        w.u64(self.ids.len() as u64);
        for ((id, doc), &len) in self.ids.iter().zip(&self.docs).zip(&self.doc_len) {
            w.str(id);
            w.u32(len);
            w.u32(doc.len() as u32);
            for &(t, c) in doc {
                w.u32(t);
                w.u32(c);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        r.expect_version(SPARSE_VERSION)?;
        let at = r.offset();
        let kind = match r.u8()? {
            0 => SparseKind::Tfidf,
            1 => SparseKind::Bm25,
            other => {
                return Err(Error::Corrupt {
                    offset: at,
                    message: format!("unknown model kind {other}"),
                })
            }
        };
        let k1 = r.f64()?;
        let b = r.f64()?;
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms.min(1 << 20));
        let mut df = Vec::with_capacity(n_terms.min(1 << 20));
        for _ in 0..n_terms {
            terms.push(r.str()?);
            let at = r.offset();
            let d = r.u32()?;
            if d == 0 {
                return Err(Error::Corrupt {
                    offset: at,
                    message: "document frequency of 0".into(),
                });
            }
            df.push(d);
        }
        let n_docs = r.u64()? as usize;
        let (mut ids, mut docs, mut doc_len) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n_docs {
            ids.push(r.str()?);
            doc_len.push(r.u32()?);
            let m = r.u32()? as usize;
            let mut doc = Vec::with_capacity(m.min(1 << 16));
            for _ in 0..m {
                let at = r.offset();
                let t = r.u32()?;
                if t as usize >= n_terms {
                    return Err(Error::Corrupt {
                        offset: at,
                        message: format!("term id {t} out of range"),
                    });
                }
                doc.push((t, r.u32()?));
            }
            docs.push(doc);
        }
        r.finish()?;
        if ids.is_empty() {
            return Err(r.corrupt("model has no documents"));
        }
        SparseModel::assemble(kind, k1, b, ids, terms, df, docs, doc_len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Top-`size` documents for `query` under `model`, excluding the query.
pub fn candidate_pool(model: &SparseModel, query: &Trial, size: usize) -> Result<Vec<String>> {
    if !model.ids.iter().any(|id| *id == query.id) {
        return Err(Error::UnknownId(query.id.clone()));
    }
    let hits = model.search(&query.full_text(), size, Some(&query.id))?;
    Ok(hits.into_iter().map(|h| h.id).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: &str, title: &str) -> Trial {
        Trial {
            id: id.into(),
            title: title.into(),
            intervention: String::new(),
            disease: "x".into(),
            outcome: String::new(),
            keywords: None,
            description: None,
            criteria: None,
            status: None,
            context: String::new(),
        }
    }

    fn corpus() -> Corpus {
        Corpus::new(vec![
            trial("a", "aspirin stroke"),
            trial("b", "aspirin headache"),
            trial("c", "warfarin stroke"),
        ])
        .unwrap()
    }

    #[test]
    fn tfidf_idf_values() {
        let m = fit_sparse(&corpus(), SparseKind::Tfidf).unwrap();
        // "x" (the disease) is in all 3 docs.
        assert_eq!(m.df("x"), Some(3));
        assert!((m.tfidf_idf(3) - 1.0).abs() < 1e-15);
        assert_eq!(m.df("headache"), Some(1));
        assert!((m.tfidf_idf(1) - 1.693147).abs() < 1e-6);
        for i in 0..3 {
            let n: f64 = m.doc_weights(i).unwrap().iter().map(|(_, w)| w * w).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oov_query_scores_zero_in_id_order() {
        for kind in [SparseKind::Tfidf, SparseKind::Bm25] {
            let m = fit_sparse(&corpus(), kind).unwrap();
            let hits = m.search("zzz qqq", 3, None).unwrap();
            assert!(hits.iter().all(|h| h.score == 0.0));
            let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
            assert_eq!(ids, ["a", "b", "c"]);
            assert!(m.search("  ,, ", 3, None).is_err());
        }
    }

    #[test]
    fn single_doc_corpus() {
        let c = Corpus::new(vec![trial("only", "something")]).unwrap();
        let m = fit_sparse(&c, SparseKind::Bm25).unwrap();
        assert_eq!(m.search("unrelated", 5, None).unwrap()[0].id, "only");
    }

    #[test]
    fn no_shared_terms_scores_zero() {
        let m = fit_sparse(&corpus(), SparseKind::Bm25).unwrap();
        let hits = m.search("headache", 3, None).unwrap();
        assert_eq!(hits[0].id, "b");
        assert!(hits[0].score > 0.0);
        assert!(hits[1..].iter().all(|h| h.score == 0.0));
    }

    #[test]
    fn pools() {
        let m = fit_sparse(&corpus(), SparseKind::Tfidf).unwrap();
        let c = corpus();
        let pool = candidate_pool(&m, c.get("a").unwrap(), 1).unwrap();
        assert_eq!(pool.len(), 1);
        assert_ne!(pool[0], "a");
        assert_eq!(candidate_pool(&m, c.get("a").unwrap(), 10).unwrap().len(), 2);
        assert!(matches!(candidate_pool(&m, &trial("zz", "aspirin"), 2), Err(Error::UnknownId(_))));
    }

    #[test]
    fn round_trip() {
        for kind in [SparseKind::Tfidf, SparseKind::Bm25] {
            let m = fit_sparse(&corpus(), kind).unwrap();
            let bytes = m.to_bytes();
            let back = SparseModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert!(matches!(SparseModel::from_bytes(&bytes[..20]), Err(Error::Corrupt { .. })));
        }
    }
}
