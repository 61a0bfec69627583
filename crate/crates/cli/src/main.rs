//! `mdr`: builds benchmarks, trains and applies the linear encoder, and runs
//! allocation experiments. Exit status is 0 on success, 1 on a usage error
//! and 2 on a data error.

mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mdr_core::allocation::StrategySelector;
use mdr_core::data::{BenchmarkManifest, Corpus, CorpusEntry, QuerySet, TrainingPair};
use mdr_core::embedding::{
    embed_corpus, read_embeddings, read_encoder, write_embeddings, write_encoder, EmbeddingMatrix,
    FeaturizerConfig, LinearEncoder, QueryEmbedder,
};
use mdr_core::entity::{build_entity_benchmark, split_half, QuerySide};
use mdr_core::evaluation::{gold_share, rank_diagnostics, CandidatePool};
use mdr_core::ingest::{
    load_corpus, load_manifest, load_matches, load_query_set, load_training_pairs, resolve,
    to_jsonl_bytes,
};
use mdr_core::synthetic::{generate_synthetic_benchmark, SyntheticConfig, KNOWN_CORPUS_ID, UNKNOWN_CORPUS_ID};
use mdr_core::training::{train_encoder, TrainConfig};
use mdr_core::tuning::{
    datasize_sweep, default_grid, fraction_sweep, k_sweep, seed_set_tune, tune_csv, DatasizeSweep,
};

use record::RunRecord;

pub enum CliError {
    Usage(String),
    Data(mdr_core::Error),
}

impl From<mdr_core::Error> for CliError {
    fn from(e: mdr_core::Error) -> Self {
        Self::Data(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

const QUERY_MATRIX_ID: &str = "queries";

#[derive(Parser)]
#[command(name = "mdr", version, about = "Multi-distribution dense retrieval experiments")]
struct Cli {
    /// Worker threads for scoring and evaluation (default: all cores).
    #[arg(long, global = true, value_parser = positive)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark (corpora, query splits, training pairs, manifest).
    BuildBenchmark {
        #[command(subcommand)]
        kind: BuildKind,
    },
    /// Train the linear encoder on the manifest's training pairs.
    Train(TrainArgs),
    /// Embed every corpus with the manifest's encoder, or import MDRE files.
    Embed(EmbedArgs),
    /// Evaluate one allocation strategy at one budget.
    Eval(EvalArgs),
    /// Per-task recall at every fraction of a grid.
    SweepFraction(SweepFractionArgs),
    /// Naive, best per-task and oracle recall across budgets.
    SweepK(SweepKArgs),
    /// Retrain on growing subsets of the training pairs.
    SweepDatasize(SweepDatasizeArgs),
    /// Choose the per-task fraction on random validation seed sets.
    Tune(TuneArgs),
    /// Rank of every gold passage in its corpus' full ranking.
    DiagnoseRanks(DiagnoseArgs),
}

#[derive(Subcommand)]
enum BuildKind {
    /// Generated two-corpus benchmark.
    Synthetic(SyntheticArgs),
    /// Benchmark from two titled corpora and a CSV of matched ids.
    Entity(EntityArgs),
}

#[derive(Args, Serialize)]
struct OutArg {
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct Common {
    /// Benchmark manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Split {
    Val,
    Test,
}

#[derive(Copy, Clone, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Side {
    Both,
    A,
    B,
}

#[derive(Args, Serialize)]
struct SyntheticArgs {
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    n_pairs: usize,
    #[arg(long, default_value_t = 5)]
    distractors: usize,
    #[arg(long, default_value_t = 4)]
    entity_tokens: usize,
    #[arg(long, default_value_t = 20)]
    filler_a: usize,
    #[arg(long, default_value_t = 40)]
    filler_b: usize,
    #[arg(long, default_value_t = 200)]
    vocab_a: usize,
    #[arg(long, default_value_t = 200)]
    vocab_b: usize,
    /// Seed of the validation/test split of the queries.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Serialize)]
struct EntityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    out: OutArg,
    #[arg(long)]
    corpus_a: PathBuf,
    #[arg(long)]
    corpus_b: PathBuf,
    #[arg(long, default_value = "A")]
    id_a: String,
    #[arg(long, default_value = "B")]
    id_b: String,
    /// CSV with a header row and matched (id_a, id_b) pairs.
    #[arg(long)]
    matches: PathBuf,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, value_enum, default_value_t = Side::Both)]
    side: Side,
    /// Corpus whose unmatched items become training pairs (default: id-a).
    #[arg(long)]
    known: Option<String>,
}

#[derive(Args, Serialize, Clone, Copy)]
struct TrainOpts {
    #[arg(long, default_value_t = 10, value_parser = positive)]
    epochs: usize,
    #[arg(long, default_value_t = 5.0, value_parser = non_negative)]
    learning_rate: f64,
    #[arg(long, default_value_t = 64, value_parser = positive)]
    batch_size: usize,
    /// Seed of example order and negative sampling.
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
    /// Seed of the initial weights.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    #[arg(long, default_value_t = 64, value_parser = positive)]
    dim: usize,
    #[arg(long, default_value_t = 32768, value_parser = power_of_two)]
    buckets: u32,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.train_seed,
        }
    }

    fn init(&self) -> CliResult<LinearEncoder> {
        Ok(LinearEncoder::init(FeaturizerConfig::with_buckets(self.buckets), self.dim, self.init_seed)?)
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainOpts,
}

#[derive(Args, Serialize)]
struct EmbedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Use an existing MDRE file for a corpus, as CORPUS=PATH (repeatable).
    #[arg(long = "import", value_parser = import_spec)]
    imports: Vec<(String, PathBuf)>,
    /// MDRE file of query vectors keyed by query id.
    #[arg(long)]
    import_queries: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// naive, oracle or per-task:<fraction of k for the known corpus>.
    #[arg(long, value_parser = strategy)]
    strategy: String,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

#[derive(Args, Serialize)]
struct SweepFractionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    k: usize,
    /// Comma-separated fractions (default 0.0 to 1.0 in steps of 0.1).
    #[arg(long, value_delimiter = ',', value_parser = unit_fraction)]
    grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

#[derive(Args, Serialize)]
struct SweepKArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "1,2,5,10,20,50,100")]
    ks: Vec<usize>,
    #[arg(long, value_delimiter = ',', value_parser = unit_fraction)]
    grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

#[derive(Args, Serialize)]
struct SweepDatasizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', value_parser = unit_fraction, default_value = "0.25,0.5,1")]
    fractions: Vec<f64>,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    k: usize,
    #[arg(long, value_delimiter = ',', value_parser = unit_fraction)]
    grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Seed of the shuffle that picks each training subset.
    #[arg(long, default_value_t = 0)]
    subset_seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    train: TrainOpts,
}

#[derive(Args, Serialize)]
struct TuneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', value_parser = positive, default_value = "10,100")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    trials: usize,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    k: usize,
    #[arg(long, value_delimiter = ',', value_parser = unit_fraction)]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    bins: usize,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        Ok(x) => Err(format!("{x} is not a finite non-negative number")),
        Err(e) => Err(e.to_string()),
    }
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if (0.0..=1.0).contains(&x) => Ok(x),
        Ok(x) => Err(format!("{x} is outside [0, 1]")),
        Err(e) => Err(e.to_string()),
    }
}

fn power_of_two(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(n) if n >= 2 && n.is_power_of_two() => Ok(n),
        Ok(n) => Err(format!("{n} is not a power of two of at least 2")),
        Err(e) => Err(e.to_string()),
    }
}

fn strategy(s: &str) -> Result<String, String> {
    s.parse::<StrategySelector>()
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

fn import_spec(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => Ok((id.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected CORPUS=PATH, got `{s}`")),
    }
}

fn grid_or_default(grid: &[f64]) -> Vec<f64> {
    if grid.is_empty() {
        default_grid()
    } else {
        grid.to_vec()
    }
}

fn absolute(p: &Path) -> CliResult<PathBuf> {
    std::path::absolute(p).map_err(|e| CliError::Data(e.into()))
}

enum Embedder {
    Linear(LinearEncoder),
    Lookup(EmbeddingMatrix),
}

impl Embedder {
    fn as_dyn(&self) -> &dyn QueryEmbedder {
        match self {
            Self::Linear(e) => e,
            Self::Lookup(m) => m,
        }
    }
}

/// A manifest with its corpora loaded.
struct Bench {
    path: PathBuf,
    manifest: BenchmarkManifest,
    corpora: Vec<Corpus>,
}

impl Bench {
    fn open(path: &Path, run: &mut RunRecord) -> CliResult<Self> {
        run.input(path)?;
        let manifest = load_manifest(path)?;
        let mut corpora = Vec::new();
        for entry in &manifest.corpora {
            let p = resolve(path, &entry.path);
            run.input(&p)?;
            corpora.push(load_corpus(&p, &entry.id)?);
        }
        Ok(Self {
            path: path.to_path_buf(),
            manifest,
            corpora,
        })
    }

    fn known(&self) -> &Corpus {
        let id = &self.manifest.known_corpus_id;
        self.corpora.iter().find(|c| c.id() == id).expect("validated manifest")
    }

    fn corpus_refs(&self) -> Vec<&Corpus> {
        self.corpora.iter().collect()
    }

    fn queries(&self, split: Split, run: &mut RunRecord) -> CliResult<QuerySet> {
        let rel = match split {
            Split::Val => &self.manifest.queries_val,
            Split::Test => &self.manifest.queries_test,
        };
        let p = resolve(&self.path, rel);
        run.input(&p)?;
        Ok(load_query_set(&p, &self.corpus_refs())?)
    }

    fn pairs(&self, run: &mut RunRecord) -> CliResult<Vec<TrainingPair>> {
        let p = resolve(&self.path, &self.manifest.training_pairs);
        run.input(&p)?;
        Ok(load_training_pairs(&p, &self.corpus_refs())?)
    }

    fn matrices(&self, run: &mut RunRecord) -> CliResult<Vec<EmbeddingMatrix>> {
        let mut out = Vec::new();
        for entry in &self.manifest.corpora {
            let rel = entry
                .embeddings
                .as_ref()
                .ok_or_else(|| mdr_core::Error::MissingEmbeddings(entry.id.clone()))?;
            let p = resolve(&self.path, rel);
            run.input(&p)?;
            out.push(read_embeddings(&p, &entry.id)?);
        }
        Ok(out)
    }

    fn embedder(&self, run: &mut RunRecord) -> CliResult<Embedder> {
        if let Some(rel) = &self.manifest.encoder {
            let p = resolve(&self.path, rel);
            run.input(&p)?;
            return Ok(Embedder::Linear(read_encoder(&p)?));
        }
        if let Some(rel) = &self.manifest.query_embeddings {
            let p = resolve(&self.path, rel);
            run.input(&p)?;
            return Ok(Embedder::Lookup(read_embeddings(&p, QUERY_MATRIX_ID)?));
        }
        Err(mdr_core::Error::MissingEmbeddings(QUERY_MATRIX_ID.into()).into())
    }

    fn pool(&self, split: Split, depth: usize, run: &mut RunRecord) -> CliResult<CandidatePool> {
        let queries = self.queries(split, run)?;
        let matrices = self.matrices(run)?;
        let embedder = self.embedder(run)?;
        Ok(CandidatePool::build(&queries, &matrices, embedder.as_dyn(), depth)?)
    }

    /// Copy of the manifest with every path made absolute, for writing into
    /// a different directory.
    fn relocated(&self) -> CliResult<BenchmarkManifest> {
        let abs = |p: &Path| absolute(&resolve(&self.path, p));
        let mut m = self.manifest.clone();
        for c in &mut m.corpora {
            c.path = abs(&c.path)?;
            if let Some(e) = &c.embeddings {
                c.embeddings = Some(abs(e)?);
            }
        }
        m.queries_val = abs(&m.queries_val)?;
        m.queries_test = abs(&m.queries_test)?;
        m.training_pairs = abs(&m.training_pairs)?;
        if let Some(e) = &m.encoder {
            m.encoder = Some(abs(e)?);
        }
        if let Some(q) = &m.query_embeddings {
            m.query_embeddings = Some(abs(q)?);
        }
        Ok(m)
    }
}

fn write_benchmark_files(
    run: &mut RunRecord,
    corpora: &[&Corpus],
    val: &QuerySet,
    test: &QuerySet,
    pairs: &[TrainingPair],
    known: &str,
) -> CliResult {
    let mut entries = Vec::new();
    for c in corpora {
        let name = format!("{}.jsonl", c.id());
        run.write(&name, &to_jsonl_bytes(c.passages())?)?;
        entries.push(CorpusEntry {
            id: c.id().to_string(),
            path: name.into(),
            embeddings: None,
        });
    }
    run.write("queries_val.jsonl", &to_jsonl_bytes(&val.queries)?)?;
    run.write("queries_test.jsonl", &to_jsonl_bytes(&test.queries)?)?;
    run.write("train_pairs.jsonl", &to_jsonl_bytes(pairs)?)?;
    let manifest = BenchmarkManifest {
        corpora: entries,
        queries_val: "queries_val.jsonl".into(),
        queries_test: "queries_test.jsonl".into(),
        training_pairs: "train_pairs.jsonl".into(),
        known_corpus_id: known.to_string(),
        encoder: None,
        query_embeddings: None,
    };
    manifest.validate()?;
    run.write_json("manifest.json", &manifest)
}

fn build_synthetic(args: &SyntheticArgs) -> CliResult {
    let mut run = RunRecord::new(&args.out.out, "build-benchmark synthetic")?;
    let config = SyntheticConfig {
        seed: args.seed,
        n_pairs: args.n_pairs,
        n_distractors_per_query: args.distractors,
        entity_tokens: args.entity_tokens,
        filler_a_len: args.filler_a,
        filler_b_len: args.filler_b,
        vocab_a: args.vocab_a,
        vocab_b: args.vocab_b,
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let b = generate_synthetic_benchmark(&config)?;
    let (val, test) = split_half(&b.queries.queries, args.split_seed);
    write_benchmark_files(
        &mut run,
        &[&b.corpus_a, &b.corpus_b],
        &QuerySet::new(val),
        &QuerySet::new(test),
        &b.train_a,
        KNOWN_CORPUS_ID,
    )?;
    println!(
        "synthetic benchmark: |{KNOWN_CORPUS_ID}|={} |{UNKNOWN_CORPUS_ID}|={} queries={} training pairs={}",
        b.corpus_a.len(),
        b.corpus_b.len(),
        b.queries.len(),
        b.train_a.len()
    );
    run.finish(args)
}

fn build_entity(args: &EntityArgs) -> CliResult {
    if args.id_a == args.id_b {
        return Err(CliError::Usage("--id-a and --id-b must differ".into()));
    }
    let known = args.known.clone().unwrap_or_else(|| args.id_a.clone());
    if known != args.id_a && known != args.id_b {
        return Err(CliError::Usage(format!("--known must be `{}` or `{}`", args.id_a, args.id_b)));
    }
    let mut run = RunRecord::new(&args.out.out, "build-benchmark entity")?;
    for p in [&args.corpus_a, &args.corpus_b, &args.matches] {
        run.input(p)?;
    }
    let a = load_corpus(&args.corpus_a, &args.id_a)?;
    let b = load_corpus(&args.corpus_b, &args.id_b)?;
    let matches = load_matches(&args.matches)?;
    let side = match args.side {
        Side::Both => QuerySide::Both,
        Side::A => QuerySide::A,
        Side::B => QuerySide::B,
    };
    let bench = build_entity_benchmark(&a, &b, &matches, args.split_seed, side)?;
    let pairs = if known == args.id_a { &bench.train_a } else { &bench.train_b };
    write_benchmark_files(&mut run, &[&a, &b], &bench.val, &bench.test, pairs, &known)?;
    println!(
        "entity benchmark: |{}|={} |{}|={} val={} test={} training pairs={}",
        a.id(),
        a.len(),
        b.id(),
        b.len(),
        bench.val.len(),
        bench.test.len(),
        pairs.len()
    );
    run.finish(args)
}

fn train(args: &TrainArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "train")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let pairs = bench.pairs(&mut run)?;
    let known = bench.known();
    let pairs: Vec<TrainingPair> = pairs.into_iter().filter(|p| p.corpus_id == known.id()).collect();
    let (encoder, report) = train_encoder(&pairs, known, args.train.init()?, &args.train.config())?;
    write_encoder(&encoder, &run.path("encoder.mdrw"))?;
    run.written("encoder.mdrw")?;
    run.write_json("train_report.json", &report)?;
    let mut manifest = bench.relocated()?;
    manifest.encoder = Some("encoder.mdrw".into());
    run.write_json("manifest.json", &manifest)?;
    println!(
        "trained on {} pairs: loss {:.4} -> {:.4}",
        pairs.len(),
        report.epoch_losses.first().copied().unwrap_or(0.0),
        report.epoch_losses.last().copied().unwrap_or(0.0)
    );
    run.finish(args)
}

fn embed(args: &EmbedArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "embed")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let imports: BTreeMap<&str, &PathBuf> = args.imports.iter().map(|(c, p)| (c.as_str(), p)).collect();
    if let Some(stray) = imports.keys().find(|c| !bench.manifest.corpus_ids().contains(c)) {
        return Err(CliError::Usage(format!("--import names unknown corpus `{stray}`")));
    }
    let encoder = match &bench.manifest.encoder {
        Some(rel) if imports.len() < bench.corpora.len() => {
            let p = resolve(&bench.path, rel);
            run.input(&p)?;
            Some(read_encoder(&p)?)
        }
        _ => None,
    };

    let mut manifest = bench.relocated()?;
    for (corpus, entry) in bench.corpora.iter().zip(&mut manifest.corpora) {
        let matrix = match (imports.get(corpus.id()), &encoder) {
            (Some(p), _) => {
                run.input(p)?;
                read_embeddings(p, corpus.id())?
            }
            (None, Some(enc)) => embed_corpus(enc, corpus),
            (None, None) => return Err(mdr_core::Error::MissingEmbeddings(corpus.id().to_string()).into()),
        };
        let name = format!("{}.mdre", corpus.id());
        write_embeddings(&matrix, &run.path(&name))?;
        run.written(&name)?;
        entry.embeddings = Some(name.into());
        println!("{}: {} rows of dimension {}", corpus.id(), matrix.len(), matrix.dim());
    }
    if let Some(p) = &args.import_queries {
        run.input(p)?;
        let m = read_embeddings(p, QUERY_MATRIX_ID)?;
        let name = format!("{QUERY_MATRIX_ID}.mdre");
        write_embeddings(&m, &run.path(&name))?;
        run.written(&name)?;
        manifest.query_embeddings = Some(name.into());
    }
    run.write_json("manifest.json", &manifest)?;
    run.finish(args)
}

fn eval(args: &EvalArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "eval")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let selector: StrategySelector = args.strategy.parse()?;
    let known = bench.manifest.known_corpus_id.clone();
    let strat = selector
        .resolve(&known, &bench.manifest.corpus_ids())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let queries = bench.queries(args.split, &mut run)?;
    let matrices = bench.matrices(&mut run)?;
    let embedder = bench.embedder(&mut run)?;
    let pool = CandidatePool::build(&queries, &matrices, embedder.as_dyn(), args.k)?;
    let report = pool.evaluate(&strat, &args.strategy, args.k)?;
    let s = report.summary();
    let summary = json!({
        "k": s.k,
        "strategy": s.strategy,
        "mean_recall": s.mean_recall,
        "mean_ap": s.mean_ap,
        "n_queries": s.n_queries,
        "known_corpus_budget_share": report.budget_share(&known),
        "known_corpus_gold_share": gold_share(&queries, &known),
    });
    run.write_json("eval_summary.json", &summary)?;
    run.write("eval_per_query.csv", report.to_csv().as_bytes())?;
    println!("{}", report.headline());
    run.finish(args)
}

fn sweep_fraction(args: &SweepFractionArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "sweep-fraction")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let pool = bench.pool(args.split, args.k, &mut run)?;
    let sweep = fraction_sweep(&pool, &bench.manifest.known_corpus_id, args.k, &grid_or_default(&args.grid))?;
    run.write("sweep_fraction.csv", sweep.to_csv().as_bytes())?;
    print!("{}", sweep.to_csv());
    run.finish(args)
}

fn sweep_k(args: &SweepKArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "sweep-k")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let depth = args.ks.iter().copied().max().unwrap_or(1);
    let pool = bench.pool(args.split, depth, &mut run)?;
    let sweep = k_sweep(&pool, &bench.manifest.known_corpus_id, &args.ks, &grid_or_default(&args.grid))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    run.write("sweep_k.csv", sweep.to_csv().as_bytes())?;
    print!("{}", sweep.to_csv());
    run.finish(args)
}

fn sweep_datasize(args: &SweepDatasizeArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "sweep-datasize")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let queries = bench.queries(args.split, &mut run)?;
    let known = bench.known();
    let pairs: Vec<TrainingPair> = bench
        .pairs(&mut run)?
        .into_iter()
        .filter(|p| p.corpus_id == known.id())
        .collect();
    let init = args.train.init()?;
    let grid = grid_or_default(&args.grid);
    let corpora = bench.corpus_refs();
    let input = DatasizeSweep {
        pairs: &pairs,
        train_corpus: known,
        corpora: &corpora,
        queries: &queries,
        init: &init,
        train: args.train.config(),
        known: known.id(),
        k: args.k,
        grid: &grid,
        subset_seed: args.subset_seed,
    };
    let sweep = datasize_sweep(&input, &args.fractions).map_err(|e| match e {
        mdr_core::Error::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::Data(other),
    })?;
    run.write("sweep_datasize.csv", sweep.to_csv().as_bytes())?;
    print!("{}", sweep.to_csv());
    run.finish(args)
}

fn tune(args: &TuneArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "tune")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let val = bench.pool(Split::Val, args.k, &mut run)?;
    let test = bench.pool(Split::Test, args.k, &mut run)?;
    let reports = seed_set_tune(
        &val,
        &test,
        &bench.manifest.known_corpus_id,
        args.k,
        &args.sizes,
        args.trials,
        &grid_or_default(&args.grid),
        args.seed,
    )?;
    run.write("tune.csv", tune_csv(&reports).as_bytes())?;
    run.write_json("tune.json", &reports)?;
    for r in &reports {
        println!(
            "seed set {:>5}: held-out recall {:.2} +/- {:.2}",
            r.seed_set_size,
            100.0 * r.mean_heldout_recall,
            100.0 * r.std_heldout_recall
        );
    }
    run.finish(args)
}

fn diagnose(args: &DiagnoseArgs) -> CliResult {
    let mut run = RunRecord::new(&args.common.out.out, "diagnose-ranks")?;
    let bench = Bench::open(&args.common.manifest, &mut run)?;
    let queries = bench.queries(args.split, &mut run)?;
    let matrices = bench.matrices(&mut run)?;
    let embedder = bench.embedder(&mut run)?;
    let diag = rank_diagnostics(&queries, &matrices, embedder.as_dyn())?;
    run.write("ranks.csv", diag.to_csv().as_bytes())?;
    let mut summary = BTreeMap::new();
    for c in bench.manifest.corpus_ids() {
        let n = diag.for_corpus(c).count();
        summary.insert(
            c.to_string(),
            json!({
                "n": n,
                "median_normalized_rank": diag.median_normalized_rank(c),
                "histogram": diag.histogram(c, args.bins),
            }),
        );
        if let Some(m) = diag.median_normalized_rank(c) {
            println!("{c}: {n} gold passages, median normalized rank {m:.4}");
        }
    }
    run.write_json("ranks_summary.json", &summary)?;
    run.finish(args)
}

fn dispatch(command: &Command) -> CliResult {
    match command {
        Command::BuildBenchmark { kind: BuildKind::Synthetic(a) } => build_synthetic(a),
        Command::BuildBenchmark { kind: BuildKind::Entity(a) } => build_entity(a),
        Command::Train(a) => train(a),
        Command::Embed(a) => embed(a),
        Command::Eval(a) => eval(a),
        Command::SweepFraction(a) => sweep_fraction(a),
        Command::SweepK(a) => sweep_k(a),
        Command::SweepDatasize(a) => sweep_datasize(a),
        Command::Tune(a) => tune(a),
        Command::DiagnoseRanks(a) => diagnose(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
