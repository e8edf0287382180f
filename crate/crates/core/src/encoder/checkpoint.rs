//! Versioned binary checkpoint.
//!
//! Layout (little-endian): magic `TSCK`, u32 version, config block of seven
//! u32 (vocab_size, dim, n_layers, n_heads, ffn_dim, max_len, agg_heads),
//! u32 tensor count, then per tensor: u32-prefixed UTF-8 name, u32 rows,
//! u32 cols, rows·cols f32 values row-major. Tensors whose name does not
//! start with `enc.` or `agg.` are carried as extras (MLM bias, outcome head).

use std::collections::BTreeMap;
use std::path::Path;

use super::{AttentionParams, EncoderConfig, EncoderParams, Model, Params};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Tensor;

pub const MAGIC: &[u8; 4] = b"TSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub extras: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            extras: BTreeMap::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = &self.model.enc.config;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        for v in [
            cfg.vocab_size,
            cfg.dim,
            cfg.n_layers,
            cfg.n_heads,
            cfg.ffn_dim,
            cfg.max_len,
            self.model.agg.n_heads,
        ] {
            w.u32(v as u32);
        }
        let tensors = self.model.tensors();
        w.u32((tensors.len() + self.extras.len()) as u32);
        let extras = self.extras.iter().map(|(n, t)| (n.clone(), t));
        for (name, t) in tensors.into_iter().chain(extras) {
            w.str(&name);
            w.u32(t.rows as u32);
            w.u32(t.cols as u32);
            for &v in &t.data {
                w.f32(v as f32);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(MAGIC)?;
        r.expect_version(VERSION)?;
        let mut cfg_vals = [0usize; 7];
        for v in cfg_vals.iter_mut() {
            *v = r.u32()? as usize;
        }
        let config = EncoderConfig {
            vocab_size: cfg_vals[0],
            dim: cfg_vals[1],
            n_layers: cfg_vals[2],
            n_heads: cfg_vals[3],
            ffn_dim: cfg_vals[4],
            max_len: cfg_vals[5],
        };
        config
            .validate()
            .map_err(|e| r.corrupt(format!("bad config block: {e}")))?;
        let agg_heads = cfg_vals[6];
        if agg_heads == 0 || config.dim % agg_heads != 0 {
            return Err(r.corrupt("bad aggregation head count"));
        }

        let n = r.u32()? as usize;
        let mut loaded: BTreeMap<String, Tensor> = BTreeMap::new();
        for _ in 0..n {
            let name = r.str()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| r.corrupt("tensor shape overflow"))?;
            let mut data = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                data.push(r.f32()? as f64);
            }
            loaded.insert(name, Tensor::from_vec(rows, cols, data));
        }
        r.finish()?;

        let mut model = Model {
            enc: zeroed_encoder(config),
            agg: zeroed_agg(config.dim, agg_heads),
        };
        for (name, slot) in model.tensors_mut() {
            let t = loaded.remove(&name).ok_or_else(|| Error::Corrupt {
                offset: 0,
                message: format!("missing tensor {name}"),
            })?;
            if (t.rows, t.cols) != (slot.rows, slot.cols) {
                return Err(Error::Corrupt {
                    offset: 0,
                    message: format!(
                        "tensor {name} has shape {}x{}, expected {}x{}",
                        t.rows, t.cols, slot.rows, slot.cols
                    ),
                });
            }
            *slot = t;
        }
        if let Some(stray) = loaded.keys().find(|k| k.starts_with("enc.") || k.starts_with("agg.")) {
            return Err(Error::Corrupt {
                offset: 0,
                message: format!("unexpected tensor {stray}"),
            });
        }
        model.validate()?;
        Ok(Self {
            model,
            extras: loaded,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

fn zeroed_encoder(config: EncoderConfig) -> EncoderParams {
    use rand::SeedableRng;
    let mut p = EncoderParams::init(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
    p.zero_();
    p
}

fn zeroed_agg(dim: usize, heads: usize) -> AttentionParams {
    AttentionParams {
        n_heads: heads,
        wq: Tensor::zeros(dim, dim),
        wk: Tensor::zeros(dim, dim),
        wv: Tensor::zeros(dim, dim),
        wo: Tensor::zeros(dim, dim),
    }
}

/// Round every parameter to the nearest f32, matching what a checkpoint
/// stores.
pub fn round_to_f32<P: Params>(p: &mut P) {
    for (_, t) in p.tensors_mut() {
        for v in t.data.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> Model {
        let cfg = EncoderConfig {
            vocab_size: 12,
            dim: 8,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 16,
            max_len: 10,
        };
        Model::init(cfg, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn round_trip_is_exact_after_f32_rounding() {
        let mut m = model();
        round_to_f32(&mut m);
        let mut ck = Checkpoint::new(m);
        ck.extras.insert("mlm.bias".into(), Tensor::filled(1, 12, 0.5));
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_file_is_error() {
        let bytes = Checkpoint::new(model()).to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
    }

    #[test]
    fn old_version_is_rejected() {
        let mut bytes = Checkpoint::new(model()).to_bytes();
        bytes[4..8].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Version { found: 0, expected: VERSION })
        ));
    }
}
