#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trialsearch::app::{encode_corpus, SearchEngine};
use trialsearch::encoder::checkpoint::Checkpoint;
use trialsearch::encoder::{fit_vocab, EncoderConfig, Model};
use trialsearch::knowledge::map_to_jsonl;
use trialsearch::retrieval::{build_index, DenseIndex};
use trialsearch::synth::{generate, SynthConfig};
use trialsearch::train::{train, TrainConfig};

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub corpus: PathBuf,
    pub map: PathBuf,
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub index: PathBuf,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn model_args(&self) -> Vec<String> {
        [
            ("--corpus", &self.corpus),
            ("--checkpoint", &self.checkpoint),
            ("--index", &self.index),
        ]
        .iter()
        .flat_map(|(f, p)| [f.to_string(), p.display().to_string()])
        .collect()
    }

    pub fn engine(&self) -> SearchEngine {
        let model = Checkpoint::load(&self.checkpoint).unwrap().model;
        SearchEngine {
            model,
            vocab: trialsearch::encoder::Vocab::load(&self.vocab).unwrap(),
            index: DenseIndex::load(&self.index).unwrap(),
            corpus: trialsearch::corpus::parse_corpus(&self.corpus, Default::default()).unwrap(),
        }
    }
}

/// Synthetic corpus, a briefly trained 16-dim model, its vocab and index.
pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(&SynthConfig {
        trials_per_family: 6,
        queries_per_family: 2,
        ..Default::default()
    })
    .unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let map = dir.path().join("knowledge.jsonl");
    data.corpus.write_jsonl(&corpus).unwrap();
    std::fs::write(&map, map_to_jsonl(&data.map)).unwrap();

    let vocab = fit_vocab(&data.corpus, 1).unwrap();
    let cfg = EncoderConfig {
        vocab_size: vocab.len(),
        dim: 16,
        n_layers: 1,
        n_heads: 2,
        ffn_dim: 32,
        max_len: 24,
    };
    let mut model = Model::init(cfg, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let tc = TrainConfig {
        epochs: 1,
        learning_rate: 1e-3,
        ..Default::default()
    };
    train(&data.corpus, &data.map, &mut model, &vocab, &tc, |_, _| Ok(())).unwrap();

    let checkpoint = dir.path().join("model.ck");
    let vocab_path = dir.path().join("model.vocab");
    Checkpoint::new(model).save(&checkpoint).unwrap();
    vocab.save(&vocab_path).unwrap();
    // Index from the reloaded checkpoint so stored and served vectors agree.
    let model = Checkpoint::load(&checkpoint).unwrap().model;
    let index_path = dir.path().join("index.bin");
    build_index(&encode_corpus(&data.corpus, &model, &vocab).unwrap())
        .unwrap()
        .save(&index_path)
        .unwrap();
    Fixture {
        dir,
        corpus,
        map,
        checkpoint,
        vocab: vocab_path,
        index: index_path,
    }
}

pub fn bin(args: &[String]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_trialsearch"))
        .args(args)
        .output()
        .unwrap()
}

pub fn strings(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}
