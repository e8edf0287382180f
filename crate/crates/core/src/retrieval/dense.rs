use std::collections::BTreeMap;
use std::path::Path;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::encoder::EmbeddingBundle;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

use super::{top_k, Hit};

const MAGIC: &[u8; 4] = b"TSIX";
pub const INDEX_VERSION: u32 = 1;

/// Unit-norm global vectors, one row per trial, ordered by id.
///
/// Rows are held at 32-bit precision so that a saved index reloads exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    ids: Vec<String>,
    dim: usize,
    rows: Vec<f64>,
    /// Reserved for approximate-search metadata; always empty today.
    ann: Vec<u8>,
}

pub fn build_index(bundles: &BTreeMap<String, EmbeddingBundle>) -> Result<DenseIndex> {
    DenseIndex::from_vectors(bundles.iter().map(|(id, b)| (id.clone(), b.global.clone())))
}

impl DenseIndex {
    pub fn from_vectors(vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut items: Vec<(String, Vec<f64>)> = vectors.into_iter().collect();
        items.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(w[0].0.clone()));
        }
        let dim = items.first().map_or(0, |(_, v)| v.len());
        let mut rows = Vec::with_capacity(items.len() * dim);
        let mut ids = Vec::with_capacity(items.len());
        for (id, v) in items {
            if v.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("vector for {id:?}")));
            }
            let n = norm(&v);
            if n == 0.0 {
                return Err(Error::ZeroVector(Some(id)));
            }
            rows.extend(v.iter().map(|x| (x / n) as f32 as f64));
            ids.push(id);
        }
        Ok(Self {
            ids,
            dim,
            rows,
            ann: Vec::new(),
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok().map(|i| self.row(i))
    }

    /// Exact top-`k` by cosine similarity; ties go to the smaller id.
    pub fn search(&self, query: &[f64], k: usize, exclude: Option<&str>) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if query.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: query.len(),
            });
        }
        let n = norm(query);
        if n == 0.0 {
            return Err(Error::ZeroVector(None));
        }
        if !n.is_finite() {
            return Err(Error::NonFinite("query vector".into()));
        }
        let hits = self
            .ids
            .iter()
            .enumerate()
            .filter(|(_, id)| Some(id.as_str()) != exclude)
            .map(|(i, id)| Hit {
                id: id.clone(),
                score: dot(self.row(i), query) / n,
            })
            .collect();
        Ok(top_k(hits, k))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(INDEX_VERSION);
        w.u64(self.ids.len() as u64);
        w.u32(self.dim as u32);
        w.u32(self.ann.len() as u32);
        w.bytes(&self.ann);
        for id in &self.ids {
            w.str(id);
        }
        for &x in &self.rows {
            w.f32(x as f32);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        r.expect_version(INDEX_VERSION)?;
        let n = r.u64()? as usize;
        let dim = r.u32()? as usize;
        let ann_len = r.u32()? as usize;
        let ann = r.take(ann_len)?.to_vec();
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let at = r.offset();
            let id = r.str()?;
            if ids.last().is_some_and(|prev: &String| prev >= &id) {
                return Err(Error::Corrupt {
                    offset: at,
                    message: format!("ids not strictly ascending at {id:?}"),
                });
            }
            ids.push(id);
        }
        let mut rows = Vec::with_capacity((n * dim).min(1 << 24));
        for i in 0..n {
            let at = r.offset();
            let row: Vec<f64> = (0..dim).map(|_| r.f32().map(f64::from)).collect::<Result<_>>()?;
            if (norm(&row) - 1.0).abs() > 1e-5 {
                return Err(Error::Corrupt {
                    offset: at,
                    message: format!("row {i} is not unit norm"),
                });
            }
            rows.extend(row);
        }
        r.finish()?;
        Ok(Self { ids, dim, rows, ann })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_index(n: usize, d: usize, seed: u64) -> DenseIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseIndex::from_vectors((0..n).map(|i| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            (format!("t{i:03}"), v)
        }))
        .unwrap()
    }

    #[test]
    fn normalizes_rows() {
        let idx = DenseIndex::from_vectors([("a".to_string(), vec![3.0, 4.0])]).unwrap();
        assert!((idx.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((idx.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn zero_vector_names_id() {
        let err = DenseIndex::from_vectors([("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![0.0, 0.0])])
            .unwrap_err();
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn self_query_first_and_full_ranking() {
        let idx = random_index(30, 8, 1);
        let q = idx.row(7).to_vec();
        let hits = idx.search(&q, 30, None).unwrap();
        assert_eq!(hits[0].id, "t007");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        let mut ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        ids.sort();
        assert_eq!(ids, idx.ids().iter().map(String::as_str).collect::<Vec<_>>());
        let ex = idx.search(&q, 5, Some("t007")).unwrap();
        assert!(ex.iter().all(|h| h.id != "t007"));
        assert_eq!(idx.search(&q, 100, None).unwrap().len(), 30);
    }

    #[test]
    fn ties_break_by_id() {
        let idx = DenseIndex::from_vectors([
            ("c".to_string(), vec![1.0, 0.0]),
            ("a".to_string(), vec![2.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let hits = idx.search(&[1.0, 0.0], 3, None).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["a", "c", "b"]);
    }

    #[test]
    fn round_trip_and_errors() {
        let idx = random_index(20, 6, 2);
        let bytes = idx.to_bytes();
        assert_eq!(bytes, random_index(20, 6, 2).to_bytes());
        let back = DenseIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        let err = DenseIndex::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
        let mut old = bytes.clone();
        old[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(DenseIndex::from_bytes(&old).unwrap_err(), Error::Version { found: 0, .. }));
    }

    #[test]
    fn search_errors() {
        let idx = random_index(5, 4, 3);
        assert!(idx.search(&[0.0; 4], 1, None).is_err());
        assert!(idx.search(&[1.0; 3], 1, None).is_err());
        assert!(idx.search(&[1.0; 4], 0, None).is_err());
    }

    proptest::proptest! {
        #[test]
        fn top_k_is_prefix_of_full_order(seed in 0u64..500, k in 1usize..20) {
            let idx = random_index(20, 5, seed);
            let q = random_index(1, 5, seed + 1000).row(0).to_vec();
            let full = idx.search(&q, 20, None).unwrap();
            let part = idx.search(&q, k, None).unwrap();
            proptest::prop_assert_eq!(&full[..k], &part[..]);
            proptest::prop_assert!(full.windows(2).all(|w| w[0].score >= w[1].score));
        }
    }
}
