//! A compact pre-LayerNorm transformer encoder with an explicit backward pass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{add_bias, gemm, matmul, softmax, Tensor};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            dim: 128,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 512,
            max_len: 256,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.dim == 0 || self.n_heads == 0 || self.dim % self.n_heads != 0 {
            return Err(crate::Error::invalid(format!(
                "dim {} must be a positive multiple of n_heads {}",
                self.dim, self.n_heads
            )));
        }
        if self.vocab_size < super::vocab::N_SPECIAL as usize || self.max_len == 0 || self.ffn_dim == 0 {
            return Err(crate::Error::invalid("encoder config has an empty dimension"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Tensor,
    pub ln1_b: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_g: Tensor,
    pub ln2_b: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl LayerParams {
    fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        Self {
            ln1_g: Tensor::filled(1, d, 1.0),
            ln1_b: Tensor::zeros(1, d),
            wq: Tensor::randn(d, d, INIT_STD, rng),
            bq: Tensor::zeros(1, d),
            wk: Tensor::randn(d, d, INIT_STD, rng),
            bk: Tensor::zeros(1, d),
            wv: Tensor::randn(d, d, INIT_STD, rng),
            bv: Tensor::zeros(1, d),
            wo: Tensor::randn(d, d, INIT_STD, rng),
            bo: Tensor::zeros(1, d),
            ln2_g: Tensor::filled(1, d, 1.0),
            ln2_b: Tensor::zeros(1, d),
            w1: Tensor::randn(d, f, INIT_STD, rng),
            b1: Tensor::zeros(1, f),
            w2: Tensor::randn(f, d, INIT_STD, rng),
            b2: Tensor::zeros(1, d),
        }
    }

    fn named(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("ln1_g", &self.ln1_g),
            ("ln1_b", &self.ln1_b),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2_g", &self.ln2_g),
            ("ln2_b", &self.ln2_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 16] {
        [
            ("ln1_g", &mut self.ln1_g),
            ("ln1_b", &mut self.ln1_b),
            ("wq", &mut self.wq),
            ("bq", &mut self.bq),
            ("wk", &mut self.wk),
            ("bk", &mut self.bk),
            ("wv", &mut self.wv),
            ("bv", &mut self.bv),
            ("wo", &mut self.wo),
            ("bo", &mut self.bo),
            ("ln2_g", &mut self.ln2_g),
            ("ln2_b", &mut self.ln2_b),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub tok_emb: Tensor,
    pub pos_emb: Tensor,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Tensor,
    pub lnf_b: Tensor,
}

/// Anything that exposes its tensors by name, in a fixed order.
pub trait Params {
    fn tensors(&self) -> Vec<(String, &Tensor)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.data.len()).sum()
    }

    fn zero_(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.data.fill(0.0);
        }
    }

    /// `self += alpha * other`; both must share a layout.
    fn add_scaled(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::linalg::axpy(alpha, &b.data, &mut a.data);
        }
    }

    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n)
    }
}

impl Params for Tensor {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("x".into(), self)]
    }
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("x".into(), self)]
    }
}

impl Params for EncoderParams {
    fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("tok_emb".to_string(), &self.tok_emb),
            ("pos_emb".to_string(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.named().into_iter().map(|(n, t)| (format!("layer{i}.{n}"), t)));
        }
        out.push(("lnf_g".into(), &self.lnf_g));
        out.push(("lnf_b".into(), &self.lnf_b));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("tok_emb".to_string(), &mut self.tok_emb),
            ("pos_emb".to_string(), &mut self.pos_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.extend(
                l.named_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("layer{i}.{n}"), t)),
            );
        }
        out.push(("lnf_g".into(), &mut self.lnf_g));
        out.push(("lnf_b".into(), &mut self.lnf_b));
        out
    }
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    o: Vec<f64>,
    ln2: LnCache,
    c: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
}

/// Forward activations kept for the backward pass.
pub struct SeqCache {
    pub ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    /// Final token states, `ids.len() × dim`.
    pub states: Vec<f64>,
}

fn ln_forward(x: &[f64], d: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let n = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = g[j] * h + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

/// Returns dx; accumulates dg, db.
fn ln_backward(dy: &[f64], d: usize, cache: &LnCache, g: &[f64], dg: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xh[j];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            dx[i * d + j] = r * (dxhat[j] - m1 - xh[j] * m2);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + GELU_A * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

fn col_sum_into(x: &[f64], cols: usize, out: &mut [f64]) {
    for row in x.chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Copy the columns of head `h` out of an n×D matrix.
fn head_slice(x: &[f64], n: usize, d: usize, dh: usize, h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dh);
    for i in 0..n {
        out.extend_from_slice(&x[i * d + h * dh..i * d + (h + 1) * dh]);
    }
    out
}

fn head_scatter_add(src: &[f64], n: usize, d: usize, dh: usize, h: usize, dst: &mut [f64]) {
    for i in 0..n {
        for j in 0..dh {
            dst[i * d + h * dh + j] += src[i * dh + j];
        }
    }
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Self {
        Self {
            config,
            tok_emb: Tensor::randn(config.vocab_size, config.dim, INIT_STD, rng),
            pos_emb: Tensor::randn(config.max_len, config.dim, INIT_STD, rng),
            layers: (0..config.n_layers)
                .map(|_| LayerParams::init(&config, rng))
                .collect(),
            lnf_g: Tensor::filled(1, config.dim, 1.0),
            lnf_b: Tensor::zeros(1, config.dim),
        }
    }

    /// Zero-valued tensors with the same layout, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero_();
        z
    }

    /// Run the encoder over token ids (`1 ≤ len ≤ max_len`).
    pub fn forward(&self, ids: &[u32]) -> SeqCache {
        let cfg = &self.config;
        let (n, d, nh, dh) = (ids.len(), cfg.dim, cfg.n_heads, cfg.head_dim());
        assert!(n >= 1 && n <= cfg.max_len, "sequence length {n} out of range");
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = vec![0.0; n * d];
        for (i, &id) in ids.iter().enumerate() {
            let row = &mut x[i * d..(i + 1) * d];
            for ((r, t), p) in row.iter_mut().zip(self.tok_emb.row(id as usize)).zip(self.pos_emb.row(i)) {
                *r = t + p;
            }
        }

        let mut layers = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let (a, ln1) = ln_forward(&x, d, &lp.ln1_g.data, &lp.ln1_b.data);
            let mut q = matmul(&a, n, &lp.wq);
            add_bias(&mut q, &lp.bq.data);
            let mut k = matmul(&a, n, &lp.wk);
            add_bias(&mut k, &lp.bk.data);
            let mut v = matmul(&a, n, &lp.wv);
            add_bias(&mut v, &lp.bv.data);

            let mut probs = vec![0.0; nh * n * n];
            let mut o = vec![0.0; n * d];
            for h in 0..nh {
                let qh = head_slice(&q, n, d, dh, h);
                let kh = head_slice(&k, n, d, dh, h);
                let vh = head_slice(&v, n, d, dh, h);
                let p = &mut probs[h * n * n..(h + 1) * n * n];
                gemm(&qh, false, &kh, true, p, n, dh, n, false);
                for row in p.chunks_mut(n) {
                    row.iter_mut().for_each(|s| *s *= scale);
                    softmax(row);
                }
                let mut oh = vec![0.0; n * dh];
                gemm(p, false, &vh, false, &mut oh, n, n, dh, false);
                head_scatter_add(&oh, n, d, dh, h, &mut o);
            }
            let mut attn = matmul(&o, n, &lp.wo);
            add_bias(&mut attn, &lp.bo.data);
            for (xi, ai) in x.iter_mut().zip(&attn) {
                *xi += ai;
            }

            let (c, ln2) = ln_forward(&x, d, &lp.ln2_g.data, &lp.ln2_b.data);
            let mut u = matmul(&c, n, &lp.w1);
            add_bias(&mut u, &lp.b1.data);
            let act: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
            let mut f = matmul(&act, n, &lp.w2);
            add_bias(&mut f, &lp.b2.data);
            for (xi, fi) in x.iter_mut().zip(&f) {
                *xi += fi;
            }
            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                o,
                ln2,
                c,
                u,
                act,
            });
        }
        let (states, lnf) = ln_forward(&x, d, &self.lnf_g.data, &self.lnf_b.data);
        SeqCache {
            ids: ids.to_vec(),
            layers,
            lnf,
            states,
        }
    }

    /// Accumulate parameter gradients for upstream gradient `d_states`
    /// (same shape as `cache.states`).
    pub fn backward(&self, cache: &SeqCache, d_states: &[f64], grads: &mut EncoderParams) {
        let cfg = &self.config;
        let (n, d, nh, dh, f) = (cache.ids.len(), cfg.dim, cfg.n_heads, cfg.head_dim(), cfg.ffn_dim);
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dx = ln_backward(
            d_states,
            d,
            &cache.lnf,
            &self.lnf_g.data,
            &mut grads.lnf_g.data,
            &mut grads.lnf_b.data,
        );

        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lp = &self.layers[li];
            let gp = &mut grads.layers[li];

            // Feed-forward branch.
            gemm(&lc.act, true, &dx, false, &mut gp.w2.data, f, n, d, true);
            col_sum_into(&dx, d, &mut gp.b2.data);
            let mut du = vec![0.0; n * f];
            gemm(&dx, false, &lp.w2.data, true, &mut du, n, d, f, false);
            for (g, &u) in du.iter_mut().zip(&lc.u) {
                *g *= gelu_grad(u);
            }
            gemm(&lc.c, true, &du, false, &mut gp.w1.data, d, n, f, true);
            col_sum_into(&du, f, &mut gp.b1.data);
            let mut dc = vec![0.0; n * d];
            gemm(&du, false, &lp.w1.data, true, &mut dc, n, f, d, false);
            let dx1 = ln_backward(&dc, d, &lc.ln2, &lp.ln2_g.data, &mut gp.ln2_g.data, &mut gp.ln2_b.data);
            for (a, b) in dx.iter_mut().zip(&dx1) {
                *a += b;
            }

            // Attention branch.
            gemm(&lc.o, true, &dx, false, &mut gp.wo.data, d, n, d, true);
            col_sum_into(&dx, d, &mut gp.bo.data);
            let mut d_o = vec![0.0; n * d];
            gemm(&dx, false, &lp.wo.data, true, &mut d_o, n, d, d, false);

            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            for h in 0..nh {
                let p = &lc.probs[h * n * n..(h + 1) * n * n];
                let doh = head_slice(&d_o, n, d, dh, h);
                let qh = head_slice(&lc.q, n, d, dh, h);
                let kh = head_slice(&lc.k, n, d, dh, h);
                let vh = head_slice(&lc.v, n, d, dh, h);

                let mut dvh = vec![0.0; n * dh];
                gemm(p, true, &doh, false, &mut dvh, n, n, dh, false);
                let mut dp = vec![0.0; n * n];
                gemm(&doh, false, &vh, true, &mut dp, n, dh, n, false);
                for i in 0..n {
                    let pr = &p[i * n..(i + 1) * n];
                    let dr = &mut dp[i * n..(i + 1) * n];
                    let s: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                    for (dv_, pv) in dr.iter_mut().zip(pr) {
                        *dv_ = pv * (*dv_ - s) * scale;
                    }
                }
                let mut dqh = vec![0.0; n * dh];
                gemm(&dp, false, &kh, false, &mut dqh, n, n, dh, false);
                let mut dkh = vec![0.0; n * dh];
                gemm(&dp, true, &qh, false, &mut dkh, n, n, dh, false);
                head_scatter_add(&dqh, n, d, dh, h, &mut dq);
                head_scatter_add(&dkh, n, d, dh, h, &mut dk);
                head_scatter_add(&dvh, n, d, dh, h, &mut dv);
            }

            let mut da = vec![0.0; n * d];
            for (dm, w, gw, gb) in [
                (&dq, &lp.wq, &mut gp.wq, &mut gp.bq),
                (&dk, &lp.wk, &mut gp.wk, &mut gp.bk),
                (&dv, &lp.wv, &mut gp.wv, &mut gp.bv),
            ] {
                gemm(&lc.a, true, dm, false, &mut gw.data, d, n, d, true);
                col_sum_into(dm, d, &mut gb.data);
                gemm(dm, false, &w.data, true, &mut da, n, d, d, true);
            }
            let dx0 = ln_backward(&da, d, &lc.ln1, &lp.ln1_g.data, &mut gp.ln1_g.data, &mut gp.ln1_b.data);
            for (a, b) in dx.iter_mut().zip(&dx0) {
                *a += b;
            }
        }

        for (i, &id) in cache.ids.iter().enumerate() {
            let g = &dx[i * d..(i + 1) * d];
            crate::linalg::axpy(1.0, g, grads.tok_emb.row_mut(id as usize));
            crate::linalg::axpy(1.0, g, grads.pos_emb.row_mut(i));
        }
    }
}

/// Mean over token states.
pub fn mean_pool(states: &[f64], d: usize) -> Vec<f64> {
    let n = states.len() / d;
    let mut out = vec![0.0; d];
    col_sum_into(states, d, &mut out);
    out.iter_mut().for_each(|v| *v /= n as f64);
    out
}
