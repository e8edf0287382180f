//! InfoNCE losses over cosine similarities, with gradients w.r.t. the
//! embedding vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoNceVariant {
    /// Positive term included in the denominator; loss ≥ 0.
    #[default]
    Standard,
    /// Denominator sums over negatives only; loss may go negative.
    ExcludePositive,
}

/// InfoNCE for one anchor given raw similarities.
/// Returns (loss, d loss / d pos, d loss / d negs).
pub fn info_nce(pos: f64, negs: &[f64], tau: f64, variant: InfoNceVariant) -> Result<(f64, f64, Vec<f64>)> {
    if !pos.is_finite() || negs.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("similarity".into()));
    }
    if tau <= 0.0 {
        return Err(Error::invalid("temperature must be positive"));
    }
    let lp = pos / tau;
    let ln: Vec<f64> = negs.iter().map(|s| s / tau).collect();
    match variant {
        InfoNceVariant::Standard => {
            let mut all = Vec::with_capacity(ln.len() + 1);
            all.push(lp);
            all.extend_from_slice(&ln);
            let lse = log_sum_exp(&all);
            let dpos = (-1.0 + (lp - lse).exp()) / tau;
            let dnegs = ln.iter().map(|l| (l - lse).exp() / tau).collect();
            Ok((lse - lp, dpos, dnegs))
        }
        InfoNceVariant::ExcludePositive => {
            if ln.is_empty() {
                return Err(Error::invalid("negative-only denominator needs at least one negative"));
            }
            let lse = log_sum_exp(&ln);
            let dnegs = ln.iter().map(|l| (l - lse).exp() / tau).collect();
            Ok((lse - lp, -1.0 / tau, dnegs))
        }
    }
}

/// Cosine similarity with gradients w.r.t. both arguments.
pub fn cosine_grad(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector(None));
    }
    let c = dot(a, b) / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(x, y)| y / (na * nb) - c * x / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(x, y)| x / (na * nb) - c * y / (nb * nb))
        .collect();
    Ok((c, da, db))
}

/// Encoded vectors for one global sample.
#[derive(Debug, Clone)]
pub struct GlobalVectors {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub hard_negative: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct GlobalLoss {
    pub loss: f64,
    pub d_anchor: Vec<Vec<f64>>,
    pub d_positive: Vec<Vec<f64>>,
    pub d_hard_negative: Vec<Option<Vec<f64>>>,
}

/// Sum over anchors; negatives are the hard negative plus every other anchor.
pub fn loss_global(samples: &[GlobalVectors], tau: f64, variant: InfoNceVariant) -> Result<GlobalLoss> {
    let b = samples.len();
    let d = samples.first().map_or(0, |s| s.anchor.len());
    let mut out = GlobalLoss {
        loss: 0.0,
        d_anchor: vec![vec![0.0; d]; b],
        d_positive: vec![vec![0.0; d]; b],
        d_hard_negative: samples
            .iter()
            .map(|s| s.hard_negative.as_ref().map(|_| vec![0.0; d]))
            .collect(),
    };
    for i in 0..b {
        let s = &samples[i];
        let (sp, dap, dp) = cosine_grad(&s.anchor, &s.positive)?;
        let mut sims = Vec::with_capacity(b);
        let mut parts = Vec::with_capacity(b);
        if let Some(h) = &s.hard_negative {
            let (sn, dan, dn) = cosine_grad(&s.anchor, h)?;
            sims.push(sn);
            parts.push((None, dan, dn));
        }
        for (j, other) in samples.iter().enumerate() {
            if j != i {
                let (sn, dan, dn) = cosine_grad(&s.anchor, &other.anchor)?;
                sims.push(sn);
                parts.push((Some(j), dan, dn));
            }
        }
        let (l, gpos, gnegs) = info_nce(sp, &sims, tau, variant)?;
        out.loss += l;
        add(&mut out.d_anchor[i], gpos, &dap);
        add(&mut out.d_positive[i], gpos, &dp);
        for ((target, dan, dn), g) in parts.iter().zip(gnegs) {
            add(&mut out.d_anchor[i], g, dan);
            match target {
                None => add(out.d_hard_negative[i].as_mut().unwrap(), g, dn),
                Some(j) => add(&mut out.d_anchor[*j], g, dn),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LocalVectors {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LocalLoss {
    pub loss: f64,
    pub d_anchor: Vec<Vec<f64>>,
    pub d_positive: Vec<Vec<f64>>,
    pub d_negatives: Vec<Vec<Vec<f64>>>,
}

/// Sum over samples of standard InfoNCE against each sample's own negatives.
pub fn loss_local(samples: &[LocalVectors], tau: f64) -> Result<LocalLoss> {
    let mut out = LocalLoss {
        loss: 0.0,
        d_anchor: Vec::with_capacity(samples.len()),
        d_positive: Vec::with_capacity(samples.len()),
        d_negatives: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        if s.negatives.is_empty() {
            return Err(Error::invalid("local sample without negatives"));
        }
        let d = s.anchor.len();
        let (sp, dap, dp) = cosine_grad(&s.anchor, &s.positive)?;
        let mut sims = Vec::new();
        let mut parts = Vec::new();
        for n in &s.negatives {
            let (sn, dan, dn) = cosine_grad(&s.anchor, n)?;
            sims.push(sn);
            parts.push((dan, dn));
        }
        let (l, gpos, gnegs) = info_nce(sp, &sims, tau, InfoNceVariant::Standard)?;
        out.loss += l;
        let mut da = vec![0.0; d];
        let mut dpv = vec![0.0; d];
        add(&mut da, gpos, &dap);
        add(&mut dpv, gpos, &dp);
        let mut dns = Vec::new();
        for ((dan, dn), g) in parts.iter().zip(gnegs) {
            add(&mut da, g, dan);
            let mut v = vec![0.0; d];
            add(&mut v, g, dn);
            dns.push(v);
        }
        out.d_anchor.push(da);
        out.d_positive.push(dpv);
        out.d_negatives.push(dns);
    }
    Ok(out)
}

/// Unweighted sum of the global and local objectives.
pub fn loss_joint(global: f64, local: f64) -> f64 {
    global + local
}

fn add(dst: &mut [f64], alpha: f64, src: &[f64]) {
    crate::linalg::axpy(alpha, src, dst);
}
