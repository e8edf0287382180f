//! Exact dense search, bag-of-words baselines, and candidate pools.

mod dense;
mod sparse;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use dense::{build_index, DenseIndex, INDEX_VERSION};
pub use sparse::{candidate_pool, fit_sparse, SparseKind, SparseModel, DEFAULT_POOL_SIZE, SPARSE_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Descending score, then ascending id.
pub(crate) fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Sorts hits and truncates to `k`, warning if fewer than `k` exist.
pub(crate) fn top_k(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    if k > hits.len() {
        log::warn!("k={k} exceeds the {} searchable documents; returning all", hits.len());
    }
    hits.sort_by(rank_order);
    hits.truncate(k);
    hits
}
