//! Multi-head cross-attention from the context embedding onto the attribute
//! embeddings, producing the trial-level vector.

use rand::Rng;

use super::transformer::Params;
use crate::error::{Error, Result};
use crate::linalg::{dot, gemm, softmax, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub n_heads: usize,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
}

pub struct AggCache {
    query: Vec<f64>,
    locals: Vec<f64>,
    m: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention weights, `n_heads × m`.
    pub weights: Vec<f64>,
    heads_out: Vec<f64>,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(dim: usize, n_heads: usize, rng: &mut R) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        Self {
            n_heads,
            wq: Tensor::randn(dim, dim, std, rng),
            wk: Tensor::randn(dim, dim, std, rng),
            wv: Tensor::randn(dim, dim, std, rng),
            wo: Tensor::randn(dim, dim, std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_();
        z
    }

    /// Query attends over `locals`; returns the projected output and cache.
    pub fn forward(&self, query: &[f64], locals: &[&[f64]]) -> Result<(Vec<f64>, AggCache)> {
        let d = self.dim();
        if locals.is_empty() {
            return Err(Error::invalid("aggregation needs at least one local vector"));
        }
        if query.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: query.len(),
            });
        }
        if let Some(bad) = locals.iter().find(|l| l.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        let m = locals.len();
        let nh = self.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();
        let flat: Vec<f64> = locals.iter().flat_map(|l| l.iter().copied()).collect();

        let mut q = vec![0.0; d];
        gemm(query, false, &self.wq.data, false, &mut q, 1, d, d, false);
        let mut k = vec![0.0; m * d];
        gemm(&flat, false, &self.wk.data, false, &mut k, m, d, d, false);
        let mut v = vec![0.0; m * d];
        gemm(&flat, false, &self.wv.data, false, &mut v, m, d, d, false);

        let mut weights = vec![0.0; nh * m];
        let mut heads_out = vec![0.0; d];
        for h in 0..nh {
            let r = h * dh..(h + 1) * dh;
            let w = &mut weights[h * m..(h + 1) * m];
            for j in 0..m {
                w[j] = dot(&q[r.clone()], &k[j * d + r.start..j * d + r.end]) * scale;
            }
            softmax(w);
            for j in 0..m {
                for c in r.clone() {
                    heads_out[c] += w[j] * v[j * d + c];
                }
            }
        }
        let mut out = vec![0.0; d];
        gemm(&heads_out, false, &self.wo.data, false, &mut out, 1, d, d, false);
        Ok((
            out,
            AggCache {
                query: query.to_vec(),
                locals: flat,
                m,
                q,
                k,
                v,
                weights,
                heads_out,
            },
        ))
    }

    /// Returns (d_query, d_locals) and accumulates parameter gradients.
    pub fn backward(&self, cache: &AggCache, d_out: &[f64], grads: &mut AttentionParams) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.dim();
        let m = cache.m;
        let nh = self.n_heads;
        let dh = d / nh;
        let scale = 1.0 / (dh as f64).sqrt();

        gemm(&cache.heads_out, true, d_out, false, &mut grads.wo.data, d, 1, d, true);
        let mut d_heads = vec![0.0; d];
        gemm(d_out, false, &self.wo.data, true, &mut d_heads, 1, d, d, false);

        let mut dq = vec![0.0; d];
        let mut dk = vec![0.0; m * d];
        let mut dv = vec![0.0; m * d];
        for h in 0..nh {
            let r = h * dh..(h + 1) * dh;
            let w = &cache.weights[h * m..(h + 1) * m];
            let dw: Vec<f64> = (0..m)
                .map(|j| dot(&d_heads[r.clone()], &cache.v[j * d + r.start..j * d + r.end]))
                .collect();
            let s: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for j in 0..m {
                for c in r.clone() {
                    dv[j * d + c] += w[j] * d_heads[c];
                }
                let ds = w[j] * (dw[j] - s) * scale;
                for c in r.clone() {
                    dq[c] += ds * cache.k[j * d + c];
                    dk[j * d + c] += ds * cache.q[c];
                }
            }
        }

        gemm(&cache.query, true, &dq, false, &mut grads.wq.data, d, 1, d, true);
        gemm(&cache.locals, true, &dk, false, &mut grads.wk.data, d, m, d, true);
        gemm(&cache.locals, true, &dv, false, &mut grads.wv.data, d, m, d, true);

        let mut d_query = vec![0.0; d];
        gemm(&dq, false, &self.wq.data, true, &mut d_query, 1, d, d, false);
        let mut d_locals = vec![0.0; m * d];
        gemm(&dk, false, &self.wk.data, true, &mut d_locals, m, d, d, false);
        gemm(&dv, false, &self.wv.data, true, &mut d_locals, m, d, d, true);
        (d_query, d_locals.chunks(d).map(<[f64]>::to_vec).collect())
    }
}

impl Params for AttentionParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("wq".into(), &self.wq),
            ("wk".into(), &self.wk),
            ("wv".into(), &self.wv),
            ("wo".into(), &self.wo),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("wq".into(), &mut self.wq),
            ("wk".into(), &mut self.wk),
            ("wv".into(), &mut self.wv),
            ("wo".into(), &mut self.wo),
        ]
    }
}
