//! Subcommands. Each one is a thin orchestration of library operations and
//! returns the text destined for stdout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trialsearch::app::{
    dense_rank, encode_corpus, export_embeddings, require, sparse_rank, AppConfig, SearchEngine, SearchRequest,
};
use trialsearch::corpus::{parse_corpus, split_corpus, Attribute, Corpus, CorpusFormat, SplitSpec};
use trialsearch::encoder::checkpoint::Checkpoint;
use trialsearch::encoder::vocab::corpus_texts;
use trialsearch::encoder::{fit_vocab, Model, Vocab};
use trialsearch::eval::{evaluate_run, judgments_to_jsonl, load_judgments, DEFAULT_BOOTSTRAP};
use trialsearch::knowledge::{load_map, map_to_jsonl};
use trialsearch::outcome::{fine_tune, metrics, train_head, write_predictions, OutcomeDataset};
use trialsearch::retrieval::{build_index, fit_sparse, DenseIndex, SparseKind};
use trialsearch::synth::{generate, judgments, SynthConfig};
use trialsearch::train::{pretrain_mlm, train, write_history, MlmHead};
use trialsearch::Error;

use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "trialsearch", version, about = "Clinical trial embedding, search and evaluation")]
pub struct Cli {
    /// TOML configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true)]
    pub log_level: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus, knowledge map and judgments.
    Synth(SynthArgs),
    /// Masked-language-model pretraining of a fresh encoder.
    PretrainMlm(PretrainArgs),
    /// Contrastive training.
    Train(TrainArgs),
    /// Encode a corpus into a dense index.
    Index(IndexArgs),
    /// Search by trial id or by partial attributes.
    Search(SearchArgs),
    /// Score a ranker on a judgments file.
    Evaluate(EvaluateArgs),
    /// Train a completion/termination classifier on trial embeddings.
    PredictOutcome(OutcomeArgs),
    /// Write trial embeddings as TSV.
    Export(ExportArgs),
    /// Serve GET /search and GET /health.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary sidecar to write; defaults next to the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub knowledge_map: Option<PathBuf>,
    /// Start from this checkpoint (e.g. MLM output) instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Vocabulary sidecar: read with --init, written otherwise.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Output checkpoint, rewritten after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_ctx_negatives: bool,
    #[arg(long)]
    pub no_attr_negatives: bool,
    #[arg(long)]
    pub no_local_loss: bool,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ModelPaths {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Defaults to the checkpoint path with a `vocab` extension.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub model: ModelPaths,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct SearchArgs {
    #[command(flatten)]
    pub model: ModelPaths,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Complete retrieval: neighbours of a stored trial.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub disease: Option<String>,
    #[arg(long)]
    pub intervention: Option<String>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub keywords: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Print the JSON body served by GET /search.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ranker {
    Trial2vec,
    Tfidf,
    Bm25,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub judgments: PathBuf,
    #[arg(long, value_enum, default_value_t = Ranker::Trial2vec)]
    pub ranker: Ranker,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Dense index for the trial2vec ranker.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutcomeArgs {
    #[command(flatten)]
    pub model: ModelPaths,
    /// Predictions CSV for the test split.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint with the classifier head appended.
    #[arg(long)]
    pub head_out: Option<PathBuf>,
    #[arg(long)]
    pub fine_tune: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub model: ModelPaths,
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

pub fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    Ok(match path {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    })
}

fn pick(flag: &Option<PathBuf>, fallback: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| fallback.clone())
}

fn vocab_beside(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("vocab")
}

fn load_corpus(flag: &Option<PathBuf>, cfg: &AppConfig) -> Result<Corpus> {
    let p = require(pick(flag, &cfg.paths.corpus).as_deref(), "corpus")?;
    Ok(parse_corpus(&p, CorpusFormat::Jsonl)?)
}

fn load_model(paths: &ModelPaths, cfg: &AppConfig) -> Result<(Model, Vocab)> {
    let ck = require(pick(&paths.checkpoint, &cfg.paths.checkpoint).as_deref(), "checkpoint")?;
    let vocab_path = pick(&paths.vocab, &cfg.paths.vocab).unwrap_or_else(|| vocab_beside(&ck));
    let vocab_path = require(Some(&vocab_path), "vocab")?;
    let model = Checkpoint::load(&ck)?.model;
    let vocab = Vocab::load(&vocab_path)?;
    if vocab.len() != model.enc.config.vocab_size {
        return Err(Error::Dimension {
            expected: model.enc.config.vocab_size,
            got: vocab.len(),
        }
        .into());
    }
    Ok((model, vocab))
}

fn load_index(flag: &Option<PathBuf>, cfg: &AppConfig) -> Result<DenseIndex> {
    let p = require(pick(flag, &cfg.paths.index).as_deref(), "index")?;
    Ok(DenseIndex::load(&p)?)
}

fn apply_model_flags(cfg: &mut AppConfig, f: &ModelFlags) {
    let m = &mut cfg.model;
    m.dim = f.dim.unwrap_or(m.dim);
    m.n_layers = f.layers.unwrap_or(m.n_layers);
    m.n_heads = f.heads.unwrap_or(m.n_heads);
    m.ffn_dim = f.ffn_dim.unwrap_or(m.ffn_dim);
    m.max_len = f.max_len.unwrap_or(m.max_len);
    m.min_freq = f.min_freq.unwrap_or(m.min_freq);
}

fn fresh_model(corpus: &Corpus, cfg: &AppConfig) -> Result<(Model, Vocab)> {
    let vocab = fit_vocab(corpus, cfg.model.min_freq)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.seed);
    let model = Model::init(cfg.model.encoder_config(vocab.len()), cfg.model.agg_heads, &mut rng)?;
    Ok((model, vocab))
}

/// Loads everything a search needs.
pub fn load_engine(args: &SearchArgs, cfg: &AppConfig) -> Result<SearchEngine> {
    let (model, vocab) = load_model(&args.model, cfg)?;
    let index = load_index(&args.index, cfg)?;
    let corpus = load_corpus(&args.model.corpus, cfg)?;
    if index.dim() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: index.dim(),
        }
        .into());
    }
    Ok(SearchEngine {
        model,
        vocab,
        index,
        corpus,
    })
}

pub fn search_request(args: &SearchArgs) -> SearchRequest {
    let attributes: BTreeMap<Attribute, String> = [
        (Attribute::Title, &args.title),
        (Attribute::Intervention, &args.intervention),
        (Attribute::Disease, &args.disease),
        (Attribute::Outcome, &args.outcome),
        (Attribute::Keywords, &args.keywords),
    ]
    .into_iter()
    .filter_map(|(a, v)| v.clone().map(|v| (a, v)))
    .collect();
    SearchRequest {
        id: args.id.clone(),
        attributes,
        k: args.k,
    }
}

/// Runs a command and returns its stdout text.
pub fn run(cli: Cli) -> Result<String> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::PretrainMlm(a) => {
            apply_model_flags(&mut cfg, &a.model);
            cmd_pretrain_mlm(&a, &mut cfg)
        }
        Command::Train(a) => {
            apply_model_flags(&mut cfg, &a.model);
            cmd_train(&a, &mut cfg)
        }
        Command::Index(a) => cmd_index(&a, &cfg),
        Command::Search(a) => cmd_search(&a, &cfg),
        Command::Evaluate(a) => cmd_evaluate(&a, &cfg),
        Command::PredictOutcome(a) => cmd_predict_outcome(&a, &mut cfg),
        Command::Export(a) => cmd_export(&a, &cfg),
        Command::Serve(a) => cmd_serve(&a, &cfg),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<String> {
    let data = generate(&SynthConfig {
        seed: a.seed,
        ..Default::default()
    })?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let js = judgments(&data, SynthConfig::default().pool_size)?;
    data.corpus.write_jsonl(&a.out_dir.join("corpus.jsonl"))?;
    write_file(&a.out_dir.join("knowledge.jsonl"), &map_to_jsonl(&data.map))?;
    write_file(&a.out_dir.join("judgments.jsonl"), &judgments_to_jsonl(&js))?;
    Ok(format!(
        "wrote {} trials, {} concepts, {} queries to {}\n",
        data.corpus.len(),
        data.map.len(),
        js.len(),
        a.out_dir.display()
    ))
}

fn cmd_pretrain_mlm(a: &PretrainArgs, cfg: &mut AppConfig) -> Result<String> {
    let corpus = load_corpus(&a.corpus, cfg)?;
    let m = &mut cfg.mlm;
    m.epochs = a.epochs.unwrap_or(m.epochs);
    m.learning_rate = a.lr.unwrap_or(m.learning_rate);
    m.max_steps = a.max_steps.or(m.max_steps);
    m.seed = a.seed.unwrap_or(m.seed);
    let (mut model, vocab) = fresh_model(&corpus, cfg)?;
    let mut head = MlmHead::new(vocab.len());
    let texts: Vec<&str> = corpus_texts(&corpus).collect();
    let history = pretrain_mlm(&texts, &mut model.enc, &mut head, &vocab, &cfg.mlm)?;
    Checkpoint::new(model).save(&a.out)?;
    vocab.save(&a.vocab.clone().unwrap_or_else(|| vocab_beside(&a.out)))?;
    let mut s = format!("{} steps", history.len());
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        let _ = write!(s, ", loss {first:.4} -> {last:.4}");
    }
    s.push('\n');
    Ok(s)
}

fn cmd_train(a: &TrainArgs, cfg: &mut AppConfig) -> Result<String> {
    let corpus = load_corpus(&a.corpus, cfg)?;
    let map_path = require(pick(&a.knowledge_map, &cfg.paths.knowledge_map).as_deref(), "knowledge map")?;
    let map = load_map(&map_path)?;
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.learning_rate = a.lr.unwrap_or(t.learning_rate);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.temperature = a.temperature.unwrap_or(t.temperature);
    t.seed = a.seed.unwrap_or(t.seed);
    t.ablation.ctx_negatives &= !a.no_ctx_negatives;
    t.ablation.attr_negatives &= !a.no_attr_negatives;
    t.ablation.local_loss &= !a.no_local_loss;

    let vocab_path = pick(&a.vocab, &cfg.paths.vocab);
    let (mut model, vocab) = match &a.init {
        Some(init) => {
            let paths = ModelPaths {
                corpus: None,
                checkpoint: Some(init.clone()),
                vocab: vocab_path.clone(),
            };
            load_model(&paths, cfg)?
        }
        None => fresh_model(&corpus, cfg)?,
    };
    vocab.save(&vocab_path.unwrap_or_else(|| vocab_beside(&a.out)))?;
    let history = train(&corpus, &map, &mut model, &vocab, &cfg.train, |epoch, m| {
        log::info!("epoch {epoch} done; writing {}", a.out.display());
        Checkpoint::new(m.clone()).save(&a.out)
    })?;
    Checkpoint::new(model).save(&a.out)?;
    if let Some(h) = &a.history {
        write_history(h, &history)?;
    }
    Ok(match history.last() {
        Some(r) => format!("{} steps, final loss {:.4}\n", history.len(), r.loss),
        None => "0 steps\n".to_string(),
    })
}

fn cmd_index(a: &IndexArgs, cfg: &AppConfig) -> Result<String> {
    let (model, vocab) = load_model(&a.model, cfg)?;
    let corpus = load_corpus(&a.model.corpus, cfg)?;
    let out = pick(&a.out, &cfg.paths.index).ok_or_else(|| Error::Invalid("missing index output path".into()))?;
    let index = build_index(&encode_corpus(&corpus, &model, &vocab)?)?;
    index.save(&out)?;
    Ok(format!("indexed {} trials (D={})\n", index.len(), index.dim()))
}

fn cmd_search(a: &SearchArgs, cfg: &AppConfig) -> Result<String> {
    let req = search_request(a);
    req.validate()?;
    let engine = load_engine(a, cfg)?;
    let resp = engine.search(&req)?;
    Ok(if a.json { resp.to_json() } else { resp.to_table() })
}

fn cmd_evaluate(a: &EvaluateArgs, cfg: &AppConfig) -> Result<String> {
    let js = load_judgments(&require(Some(&a.judgments), "judgments")?)?;
    let report = match a.ranker {
        Ranker::Trial2vec => {
            let index = load_index(&a.index, cfg)?;
            evaluate_run("trial2vec", |q, p| dense_rank(&index, q, p), &js, &a.ks, a.bootstrap, a.seed)?
        }
        Ranker::Tfidf | Ranker::Bm25 => {
            let corpus = load_corpus(&a.corpus, cfg)?;
            let (kind, name) = if a.ranker == Ranker::Tfidf {
                (SparseKind::Tfidf, "tfidf")
            } else {
                (SparseKind::Bm25, "bm25")
            };
            let model = fit_sparse(&corpus, kind)?;
            evaluate_run(name, |q, p| sparse_rank(&model, &corpus, q, p), &js, &a.ks, a.bootstrap, a.seed)?
        }
    };
    if let Some(p) = &a.report {
        write_file(p, &report.to_json())?;
    }
    Ok(report.table())
}

fn cmd_predict_outcome(a: &OutcomeArgs, cfg: &mut AppConfig) -> Result<String> {
    let (mut model, vocab) = load_model(&a.model, cfg)?;
    let corpus = load_corpus(&a.model.corpus, cfg)?;
    let h = &mut cfg.outcome;
    h.epochs = a.epochs.unwrap_or(h.epochs);
    h.learning_rate = a.lr.unwrap_or(h.learning_rate);
    h.fine_tune |= a.fine_tune;
    let (train_c, valid_c, test_c) = split_corpus(
        &corpus,
        &SplitSpec {
            seed: a.split_seed,
            ..Default::default()
        },
    )?;
    let (train_d, valid_d, test_d) = (
        OutcomeDataset::from_corpus(&train_c),
        OutcomeDataset::from_corpus(&valid_c),
        OutcomeDataset::from_corpus(&test_c),
    );
    let globals = |model: &Model| -> Result<BTreeMap<String, Vec<f64>>> {
        Ok(encode_corpus(&corpus, model, &vocab)?
            .into_iter()
            .map(|(id, b)| (id, b.global))
            .collect())
    };
    let valid = (!valid_d.is_empty()).then_some(&valid_d);
    let (mut head, _) = train_head(&globals(&model)?, &train_d, valid, &cfg.outcome)?;
    if cfg.outcome.fine_tune {
        fine_tune(&mut model, &mut head, &vocab, &corpus, &train_d, &cfg.outcome)?;
    }
    let emb = globals(&model)?;
    let mut rows = Vec::with_capacity(test_d.len());
    for (id, label) in &test_d.items {
        let p = trialsearch::outcome::sigmoid(head.logit(&emb[id])?);
        rows.push((id.clone(), p, *label));
    }
    write_predictions(&a.out, &rows)?;
    if let Some(p) = &a.head_out {
        let mut ck = Checkpoint::new(model);
        head.to_extras(&mut ck.extras);
        ck.save(p)?;
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let labels: Vec<u8> = rows.iter().map(|r| r.2).collect();
    let m = metrics(&scores, &labels)?;
    Ok(serde_json::to_string(&m).expect("metrics serialize") + "\n")
}

fn cmd_export(a: &ExportArgs, cfg: &AppConfig) -> Result<String> {
    let index = load_index(&a.index, cfg)?;
    let corpus = load_corpus(&a.corpus, cfg)?;
    export_embeddings(&index, &corpus, &a.out)?;
    Ok(format!("exported {} embeddings to {}\n", index.len(), a.out.display()))
}

fn cmd_serve(a: &ServeArgs, cfg: &AppConfig) -> Result<String> {
    let engine = load_engine(
        &SearchArgs {
            model: a.model.clone(),
            index: a.index.clone(),
            ..Default::default()
        },
        cfg,
    )?;
    let addr = format!("{}:{}", a.host, a.port);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(crate::server::serve(engine, &addr))?;
    Ok(String::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("trialsearch").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn search_flags_build_partial_request() {
        let Command::Search(a) = parse(&["search", "--title", "t", "--disease", "d", "--k", "3"]).command else {
            panic!("wrong command");
        };
        let r = search_request(&a);
        assert_eq!(r.k, 3);
        assert_eq!(r.id, None);
        assert_eq!(r.attributes.keys().copied().collect::<Vec<_>>(), [Attribute::Title, Attribute::Disease]);
    }

    #[test]
    fn ks_are_comma_separated() {
        let Command::Evaluate(a) = parse(&["evaluate", "--judgments", "j", "--ks", "1,5,10"]).command else {
            panic!("wrong command");
        };
        assert_eq!(a.ks, [1, 5, 10]);
        assert_eq!(a.ranker, Ranker::Trial2vec);
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = AppConfig::from_toml("[model]\ndim = 48\nn_layers = 3\n").unwrap();
        apply_model_flags(
            &mut cfg,
            &ModelFlags {
                dim: Some(16),
                ..Default::default()
            },
        );
        assert_eq!(cfg.model.dim, 16);
        assert_eq!(cfg.model.n_layers, 3);
    }

    #[test]
    fn missing_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cli = parse(&["index", "--corpus", dir.path().join("nope.jsonl").to_str().unwrap()]);
        let err = run(cli).unwrap_err().to_string();
        assert!(err.contains("checkpoint"), "{err}");
    }

    #[test]
    fn config_paths_are_used_when_flags_absent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.toml");
        let missing = dir.path().join("missing.jsonl");
        std::fs::write(&cfg_path, format!("[paths]\ncorpus = {:?}\n", missing.to_str().unwrap())).unwrap();
        let cli = parse(&[
            "--config",
            cfg_path.to_str().unwrap(),
            "export",
            "--index",
            missing.to_str().unwrap(),
            "--out",
            "x",
        ]);
        let err = run(cli).unwrap_err().to_string();
        assert!(err.contains("missing.jsonl"), "{err}");
    }
}
