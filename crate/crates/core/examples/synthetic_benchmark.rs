//! Trains on a synthetic corpus and compares rankers on TF-IDF candidate pools.
//!
//! Usage: cargo run --release --example synthetic_benchmark -- [key=value ...]
//! Keys: dim, layers, epochs, lr, tau, seed, batch, ablate (full|noctx|nolocal|noattr), common_drug.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trialsearch::app::{dense_rank, encode_corpus, sparse_rank};
use trialsearch::encoder::{fit_vocab, EncoderConfig, Model};
use trialsearch::eval::evaluate_run;
use trialsearch::corpus::Attribute;
use trialsearch::retrieval::{build_index, DenseIndex, fit_sparse, SparseKind};
use trialsearch::synth::{generate, judgments, SynthConfig};
use trialsearch::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let dim: usize = get("dim", "32").parse()?;
    let layers: usize = get("layers", "1").parse()?;
    let epochs: usize = get("epochs", "100").parse()?;
    let lr: f64 = get("lr", "1e-3").parse()?;
    let tau: f64 = get("tau", "1.0").parse()?;
    let seed: u64 = get("seed", "0").parse()?;
    let batch: usize = get("batch", "100").parse()?;
    let defaults = SynthConfig::default();
    let common_drug: f64 = get("common_drug", &defaults.common_drug_prob.to_string()).parse()?;
    let fam_outcome: f64 = get("fam_outcome", &defaults.family_outcome_prob.to_string()).parse()?;
    let repeats: usize = get("repeats", &defaults.site_repeats.to_string()).parse()?;
    let ablate = get("ablate", "full");
    let nneg: usize = get("nneg", "2").parse()?;
    let sites: usize = get("sites", &defaults.n_sites.to_string()).parse()?;
    let queries: usize = get("queries", &defaults.queries_per_family.to_string()).parse()?;

    let data = generate(&SynthConfig {
        seed,
        common_drug_prob: common_drug,
        n_sites: sites,
        queries_per_family: queries,
        family_outcome_prob: fam_outcome,
        site_repeats: repeats,
        ..Default::default()
    })?;
    let js = judgments(&data, 10)?;
    let with_rel = js.iter().filter(|q| q.total_relevant() > 0).count();
    let mean_rel = js.iter().map(|q| q.total_relevant()).sum::<usize>() as f64 / js.len() as f64;
    println!("pools: {with_rel}/{} with a relevant candidate, {mean_rel:.2} relevant on average", js.len());
    let vocab = fit_vocab(&data.corpus, 1)?;
    let cfg = EncoderConfig {
        vocab_size: vocab.len(),
        dim,
        n_layers: layers,
        n_heads: 2,
        ffn_dim: 2 * dim,
        max_len: 32,
    };
    let mut model = Model::init(cfg, 2, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let tfidf = fit_sparse(&data.corpus, SparseKind::Tfidf)?;
    let r = evaluate_run("tfidf", |q, p| sparse_rank(&tfidf, &data.corpus, q, p), &js, &[1, 5], 200, 0)?;
    println!("tfidf     prec@1 {:.3} ndcg@5 {:.3}", r.mean("prec@1").unwrap(), r.mean("ndcg@5").unwrap());
    let bm25 = fit_sparse(&data.corpus, SparseKind::Bm25)?;
    let r = evaluate_run("bm25", |q, p| sparse_rank(&bm25, &data.corpus, q, p), &js, &[1, 5], 200, 0)?;
    println!("bm25      prec@1 {:.3} ndcg@5 {:.3}", r.mean("prec@1").unwrap(), r.mean("ndcg@5").unwrap());

    let index = build_index(&encode_corpus(&data.corpus, &model, &vocab)?)?;
    let r = evaluate_run("untrained", |q, p| dense_rank(&index, q, p), &js, &[1, 5], 200, 0)?;
    println!("untrained prec@1 {:.3} ndcg@5 {:.3}", r.mean("prec@1").unwrap(), r.mean("ndcg@5").unwrap());

    let mut tc = TrainConfig {
        learning_rate: lr,
        epochs,
        seed,
        temperature: tau,
        batch_size: batch,
        ..Default::default()
    };
    tc.augment.n_local_negatives = nneg;
    match ablate.as_str() {
        "noctx" => tc.ablation.ctx_negatives = false,
        "nolocal" => tc.ablation.local_loss = false,
        "noattr" => tc.ablation.attr_negatives = false,
        _ => {}
    }
    let t0 = Instant::now();
    let every = (epochs / 6).max(1);
    let hist = train(&data.corpus, &data.map, &mut model, &vocab, &tc, |e, m| {
        if (e + 1) % every == 0 || e + 1 == epochs {
            let index = build_index(&encode_corpus(&data.corpus, m, &vocab)?)?;
            let r = evaluate_run("epoch", |q, p| dense_rank(&index, q, p), &js, &[1, 5], 0, 0)?;
            println!(
                "epoch {e} ({:.1}s) prec@1 {:.3} ndcg@5 {:.3}",
                t0.elapsed().as_secs_f64(),
                r.mean("prec@1").unwrap(),
                r.mean("ndcg@5").unwrap()
            );
            if args.contains_key("diag") {
                let bundles = encode_corpus(&data.corpus, m, &vocab)?;
                for attr in Attribute::ALL {
                    let idx = DenseIndex::from_vectors(
                        bundles.iter().filter_map(|(id, b)| b.locals.get(&attr).map(|v| (id.clone(), v.clone()))),
                    )?;
                    let r = evaluate_run("local", |q, p| dense_rank(&idx, q, p), &js, &[1, 5], 0, 0)?;
                    if let Some(p) = r.mean("prec@1") {
                        println!("   local {:<12} prec@1 {p:.3}", attr.name());
                    }
                }
            }
        }
        Ok(())
    })?;
    println!("final loss {:.4}", hist.last().map_or(f64::NAN, |h| h.loss));
    Ok(())
}
