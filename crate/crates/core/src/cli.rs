//! Command-line front end; `main` only forwards to [`run`].
//!
//! Primary outputs go to `--out` / `--out-dir` when given and to stdout
//! otherwise. Every run also writes a [`RunManifest`]: next to `--out` as
//! `<out>.manifest.json`, inside `--out-dir` as `manifest.json`, or as one
//! JSON line on stderr when output went to stdout.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::contrastive::{embed_tracks, pretrain, PretrainConfig, PretrainData, Warmup};
use crate::cooccur::{build_topk, count_cooccurrences};
use crate::corpus::{
    corpus_stats, load_playlists, write_bytes, ArtistMap, FeatureStore, LabelSet, PlaylistCorpus, Split, SplitSpec,
    TrackRegistry, TripletSet,
};
use crate::downstream::{evaluate_triplets, finetune, Classifier, FinetuneConfig, MetricReport, Phase};
use crate::embed::{train_cbow, W2VConfig, W2VModel};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Mlp, ModelKind};
use crate::pairgen::{PairSource, Strategy};
use crate::seed::{rng_for, Stream};
use crate::synth::{generate_world, SynthConfig};

#[derive(Parser, Debug, Serialize)]
#[command(name = "playpair", version, about = "Playlist-driven contrastive pre-training of track encoders")]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic world with planted genres.
    Synth(SynthArgs),
    /// Corpus degree statistics.
    Stats(StatsArgs),
    /// Generate one epoch of training pairs.
    MinePairs(MinePairsArgs),
    /// Train CBOW track embeddings on the playlists.
    TrainW2v(TrainW2vArgs),
    /// Contrastive pre-training of the backbone.
    Pretrain(PretrainArgs),
    /// Fine-tune a classifier and report test metrics.
    Finetune(FinetuneArgs),
    /// Triplet similarity evaluation of an encoder.
    EvalSim(EvalSimArgs),
    /// Classification metrics of a fine-tuned model.
    EvalCls(EvalClsArgs),
    /// Finite-difference checks of all hand-written gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArg {
    /// Directory holding playlists.jsonl, artists.tsv, features.tsv, ...
    #[arg(long, default_value = ".")]
    data: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON file with SynthConfig fields; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_genres: Option<usize>,
    #[arg(long)]
    tracks_per_genre: Option<usize>,
    #[arg(long)]
    n_artists: Option<usize>,
    #[arg(long)]
    n_playlists: Option<usize>,
    #[arg(long)]
    contamination: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    n_triplets: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct StatsArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MinePairsArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    epoch: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Word2Vec model for the w2v strategy.
    #[arg(long)]
    w2v: Option<PathBuf>,
    /// Writes pairs.tsv and summary.json here; stdout otherwise.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainW2vArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 5)]
    negatives: usize,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// Scaled for synthetic corpora of a few thousand tracks.
    Desk,
    /// Full-scale hyperparameters.
    Reference,
}

#[derive(Args, Debug, Serialize)]
struct PretrainArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long, conflicts_with = "warmup_fraction")]
    warmup_steps: Option<u64>,
    #[arg(long)]
    warmup_fraction: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    w2v: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SeedArgs {
    #[arg(long, required_unless_present = "seeds", conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated replicate seeds; reports mean ± std.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

impl SeedArgs {
    fn list(&self) -> Vec<u64> {
        match (&self.seeds, self.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(s)) => vec![s],
            (None, None) => unreachable!("clap requires --seed or --seeds"),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FinetuneArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Pre-trained checkpoint (`{seed}` is replaced per replicate); from scratch if omitted.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct EvalSimArgs {
    #[command(flatten)]
    data: DataArg,
    #[command(flatten)]
    seeds: SeedArgs,
    /// Encoder checkpoint (`{seed}` is replaced per replicate).
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    encoder: Option<String>,
    /// Evaluate an untrained, seeded encoder instead.
    #[arg(long)]
    random: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EvalClsArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    Valid,
    Test,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Reproduction record written alongside every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub flags: serde_json::Value,
    pub seeds: Vec<u64>,
    /// SHA-256 of every input file read, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads the standard files of a data directory, recording input digests.
struct DataDir {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl DataDir {
    fn new(dir: &Path) -> Self {
        DataDir {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        }
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        self.digests.insert(p.display().to_string(), sha256_hex(&bytes));
        Ok(p)
    }

    fn corpus(&mut self) -> Result<PlaylistCorpus> {
        let registry = if self.dir.join("tracks.txt").exists() {
            Some(TrackRegistry::load(&self.path("tracks.txt")?)?)
        } else {
            None
        };
        let (corpus, report) = load_playlists(&self.path("playlists.jsonl")?, registry)?;
        if report.deduplicated > 0 || report.skipped_empty > 0 {
            log::warn!(
                "playlists: {} repeated tracks dropped, {} empty playlists skipped",
                report.deduplicated,
                report.skipped_empty
            );
        }
        Ok(corpus)
    }

    fn artists(&mut self) -> Result<ArtistMap> {
        ArtistMap::load(&self.path("artists.tsv")?)
    }

    fn features(&mut self) -> Result<FeatureStore> {
        FeatureStore::load(&self.path("features.tsv")?)
    }

    fn labels(&mut self) -> Result<LabelSet> {
        LabelSet::load(&self.path("labels.tsv")?)
    }

    fn splits(&mut self) -> Result<SplitSpec> {
        SplitSpec::load(&self.path("splits.tsv")?)
    }

    fn triplets(&mut self) -> Result<TripletSet> {
        TripletSet::load(&self.path("triplets.tsv")?)
    }
}

/// Where the manifest goes, decided by the subcommand's output flags.
enum Sink<'a> {
    File(&'a Path),
    Dir(&'a Path),
    Stdout,
}

struct Ctx {
    argv: Vec<String>,
    subcommand: String,
    flags: serde_json::Value,
    inputs: BTreeMap<String, String>,
}

impl Ctx {
    fn absorb(&mut self, data: DataDir) {
        self.inputs.extend(data.digests);
    }

    fn digest(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn manifest(&self, seeds: Vec<u64>, sink: Sink<'_>) -> Result<()> {
        let m = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand.clone(),
            argv: self.argv.clone(),
            flags: self.flags.clone(),
            seeds,
            inputs: self.inputs.clone(),
        };
        match sink {
            Sink::File(out) => {
                let mut name = out.as_os_str().to_os_string();
                name.push(".manifest.json");
                write_json_file(Path::new(&name), &m)
            }
            Sink::Dir(dir) => write_json_file(&dir.join("manifest.json"), &m),
            Sink::Stdout => {
                eprintln!("{}", serde_json::to_string(&m)?);
                Ok(())
            }
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn write_json_file<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_bytes(path, &pretty(v)?)
}

fn stdout_bytes(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(Path::new("<stdout>"), e))
}

/// Writes `bytes` to `out` or stdout and returns the manifest sink.
fn emit<'a>(out: Option<&'a Path>, bytes: &[u8]) -> Result<Sink<'a>> {
    match out {
        Some(p) => {
            write_bytes(p, bytes)?;
            Ok(Sink::File(p))
        }
        None => {
            stdout_bytes(bytes)?;
            Ok(Sink::Stdout)
        }
    }
}

fn json_line<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

/// Parses argv, runs the subcommand, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .try_init();
    if cli.threads > 0 {
        // fails only if a pool already exists, e.g. when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let flags = serde_json::to_value(&cli.command).unwrap_or(serde_json::Value::Null);
    let subcommand = flags
        .as_object()
        .and_then(|o| o.keys().next().cloned())
        .unwrap_or_default();
    let mut ctx = Ctx {
        argv: argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        subcommand,
        flags,
        inputs: BTreeMap::new(),
    };
    match dispatch(&cli.command, &mut ctx) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: &Command, ctx: &mut Ctx) -> Result<i32> {
    match cmd {
        Command::Synth(a) => synth(a, ctx),
        Command::Stats(a) => stats(a, ctx),
        Command::MinePairs(a) => mine_pairs(a, ctx),
        Command::TrainW2v(a) => train_w2v(a, ctx),
        Command::Pretrain(a) => pretrain_cmd(a, ctx),
        Command::Finetune(a) => finetune_cmd(a, ctx),
        Command::EvalSim(a) => eval_sim(a, ctx),
        Command::EvalCls(a) => eval_cls(a, ctx),
        Command::Gradcheck(a) => gradcheck(a, ctx),
    }
}

fn synth(a: &SynthArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => {
            ctx.digest(p)?;
            serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?
        }
        None => SynthConfig::default(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.n_genres {
        cfg.n_genres = v;
    }
    if let Some(v) = a.tracks_per_genre {
        cfg.tracks_per_genre = v;
    }
    if let Some(v) = a.n_artists {
        cfg.n_artists = v;
    }
    if let Some(v) = a.n_playlists {
        cfg.n_playlists = v;
    }
    if let Some(v) = a.contamination {
        cfg.contamination = v;
    }
    if let Some(v) = a.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = a.n_triplets {
        cfg.n_triplets = v;
    }
    generate_world(&cfg)?.save(&a.out_dir)?;
    ctx.manifest(vec![a.seed], Sink::Dir(&a.out_dir))?;
    Ok(0)
}

fn stats(a: &StatsArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let corpus = d.corpus()?;
    let artists = d.artists()?;
    let report = corpus_stats(&corpus, &artists)?;
    ctx.absorb(d);
    let sink = emit(a.out.as_deref(), &pretty(&report)?)?;
    ctx.manifest(vec![], sink)?;
    Ok(0)
}

fn load_w2v(path: Option<&Path>, ctx: &mut Ctx) -> Result<Option<W2VModel>> {
    match path {
        Some(p) => {
            ctx.digest(p)?;
            Ok(Some(W2VModel::load(p)?))
        }
        None => Ok(None),
    }
}

fn mine_pairs(a: &MinePairsArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let corpus = d.corpus()?;
    let artists = match a.strategy {
        Strategy::ArtistCo => Some(d.artists()?),
        _ => None,
    };
    ctx.absorb(d);
    let w2v = load_w2v(a.w2v.as_deref(), ctx)?;
    let topk = match a.strategy {
        Strategy::Tco => Some(build_topk(&count_cooccurrences(&corpus), a.top_k)?),
        _ => None,
    };
    let source = match a.strategy {
        Strategy::Co => PairSource::Co(&corpus),
        Strategy::Tco => PairSource::Tco(topk.as_ref().expect("built above")),
        Strategy::ArtistCo => PairSource::ArtistCo(artists.as_ref().expect("loaded above")),
        Strategy::W2v => PairSource::W2v(
            corpus.registry(),
            w2v.as_ref()
                .ok_or_else(|| Error::Config("--w2v is required for the w2v strategy".into()))?,
        ),
        Strategy::SimClr => PairSource::SimClr(corpus.registry()),
    };
    let pairs = source.epoch(a.seed, a.epoch);
    let summary = pairs.summary(a.epoch);
    match &a.out_dir {
        Some(dir) => {
            write_bytes(&dir.join("pairs.tsv"), pairs.to_tsv().as_bytes())?;
            write_json_file(&dir.join("summary.json"), &summary)?;
            if topk.is_some() {
                count_cooccurrences(&corpus).save(&dir.join("cooc.tsv"))?;
            }
            ctx.manifest(vec![a.seed], Sink::Dir(dir))?;
        }
        None => {
            stdout_bytes(pairs.to_tsv().as_bytes())?;
            eprintln!("{}", json_line(&summary)?);
            ctx.manifest(vec![a.seed], Sink::Stdout)?;
        }
    }
    Ok(0)
}

fn train_w2v(a: &TrainW2vArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let corpus = d.corpus()?;
    ctx.absorb(d);
    let cfg = W2VConfig {
        dim: a.dim,
        lr: a.lr,
        epochs: a.epochs,
        negatives: a.negatives,
        min_count: a.min_count,
        ..W2VConfig::default()
    };
    let (model, log) = train_cbow(&corpus, &cfg, a.seed)?;
    eprintln!("{}", json_line(&log)?);
    let sink = match &a.out {
        Some(p) => {
            model.save(p)?;
            Sink::File(p)
        }
        None => {
            stdout_bytes(&model.to_bytes()?)?;
            Sink::Stdout
        }
    };
    ctx.manifest(vec![a.seed], sink)?;
    Ok(0)
}

fn pretrain_config(a: &PretrainArgs) -> PretrainConfig {
    let mut cfg = match a.preset {
        Preset::Desk => PretrainConfig::desk(a.strategy),
        Preset::Reference => PretrainConfig::reference(a.strategy),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch {
        cfg.ntxent.batch_size = v;
    }
    if let Some(v) = a.tau {
        cfg.ntxent.temperature = v;
    }
    if let Some(v) = a.peak_lr {
        cfg.peak_lr = v;
    }
    if let Some(v) = a.warmup_steps {
        cfg.warmup = Warmup::Steps(v);
    }
    if let Some(v) = a.warmup_fraction {
        cfg.warmup = Warmup::Fraction(v);
    }
    if let Some(v) = a.top_k {
        cfg.top_k = v;
    }
    cfg
}

fn pretrain_cmd(a: &PretrainArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let corpus = d.corpus()?;
    let features = d.features()?;
    let artists = match a.strategy {
        Strategy::ArtistCo => Some(d.artists()?),
        _ => None,
    };
    ctx.absorb(d);
    let w2v = load_w2v(a.w2v.as_deref(), ctx)?;
    if a.strategy == Strategy::W2v && w2v.is_none() {
        return Err(Error::Config("--w2v is required for the w2v strategy".into()));
    }
    let cfg = pretrain_config(a);
    let data = PretrainData {
        corpus: &corpus,
        features: &features,
        artists: artists.as_ref(),
        w2v: w2v.as_ref(),
    };
    let enc = pretrain(data, &cfg, a.seed)?;
    for h in &enc.history {
        eprintln!("{}", json_line(h)?);
    }
    let sink = emit(a.out.as_deref(), &enc.checkpoint().to_bytes()?)?;
    ctx.manifest(vec![a.seed], sink)?;
    Ok(0)
}

fn load_encoder(template: &str, seed: u64, ctx: &mut Ctx) -> Result<Mlp> {
    let path = PathBuf::from(template.replace("{seed}", &seed.to_string()));
    ctx.digest(&path)?;
    let c = Checkpoint::load(&path)?;
    c.backbone()
}

/// Mean and sample standard deviation of each metric present in every run.
#[derive(Debug, Serialize)]
struct SeedSummary {
    seeds: Vec<u64>,
    runs: Vec<MetricReport>,
    mean: BTreeMap<String, f64>,
    std: BTreeMap<String, f64>,
}

fn summarize(seeds: &[u64], runs: Vec<MetricReport>) -> SeedSummary {
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in [
            ("macro_roc_auc", r.macro_roc_auc),
            ("macro_average_precision", r.macro_average_precision),
            ("triplet_accuracy", r.triplet_accuracy),
            ("avg_distance_difference", r.avg_distance_difference),
        ] {
            if let Some(v) = v {
                columns.entry(k.to_string()).or_default().push(v);
            }
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for (k, v) in columns.into_iter().filter(|(_, v)| v.len() == runs.len()) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = if v.len() > 1 {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        mean.insert(k.clone(), m);
        std.insert(k, s);
    }
    SeedSummary {
        seeds: seeds.to_vec(),
        runs,
        mean,
        std,
    }
}

fn finetune_cmd(a: &FinetuneArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let features = d.features()?;
    let labels = d.labels()?;
    let splits = d.splits()?;
    ctx.absorb(d);
    let mut cfg = FinetuneConfig::default();
    if let Some(v) = a.max_epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.patience = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    let seeds = a.seeds.list();
    let origin = if a.encoder.is_some() { "pretrained" } else { "scratch" };
    let mut reports = Vec::new();
    let mut epoch_lines = String::new();
    for &seed in &seeds {
        let encoder = match &a.encoder {
            Some(t) => Some(load_encoder(t, seed, ctx)?),
            None => None,
        };
        let out = finetune(encoder.as_ref(), &features, &labels, &splits, &cfg, seed)?;
        for h in &out.history {
            let line = json_line(&serde_json::json!({
                "seed": seed,
                "epoch": h.epoch,
                "train_loss": h.train_loss,
                "val_ap": h.val_ap,
                "lr": h.lr,
            }))?;
            eprintln!("{line}");
            epoch_lines.push_str(&line);
            epoch_lines.push('\n');
        }
        if let Some(dir) = &a.out_dir {
            let name = if seeds.len() == 1 {
                "model.json".to_string()
            } else {
                format!("model-seed{seed}.json")
            };
            out.classifier
                .checkpoint(origin, Some(out.schedule), seed)
                .save(&dir.join(name))?;
        }
        reports.push(out.report);
    }
    let body = if seeds.len() == 1 {
        pretty(&reports[0])?
    } else {
        pretty(&summarize(&seeds, reports))?
    };
    match &a.out_dir {
        Some(dir) => {
            write_bytes(&dir.join("report.json"), &body)?;
            write_bytes(&dir.join("epochs.jsonl"), epoch_lines.as_bytes())?;
            stdout_bytes(&body)?;
            ctx.manifest(seeds, Sink::Dir(dir))?;
        }
        None => {
            stdout_bytes(&body)?;
            ctx.manifest(seeds, Sink::Stdout)?;
        }
    }
    Ok(0)
}

fn eval_sim(a: &EvalSimArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let features = d.features()?;
    let triplets = d.triplets()?;
    ctx.absorb(d);
    triplets.validate_against(&features)?;
    let seeds = a.seeds.list();
    let mut reports = Vec::new();
    for &seed in &seeds {
        let backbone = match &a.encoder {
            Some(t) => load_encoder(t, seed, ctx)?,
            None => {
                let w = PretrainConfig::desk(Strategy::Co).backbone_hidden;
                let widths: Vec<usize> = std::iter::once(features.dim()).chain(w).collect();
                Mlp::new(&widths, &mut rng_for(seed, Stream::Init, 0))?
            }
        };
        let tracks: Vec<_> = triplets
            .triplets
            .iter()
            .flat_map(|t| [&t.anchor, &t.positive, &t.negative])
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let emb = embed_tracks(&backbone, &features, tracks)?;
        let r = evaluate_triplets(&emb, &triplets)?;
        reports.push(MetricReport {
            seed,
            ..MetricReport::default()
        }
        .with_triplets(r));
    }
    let body = if seeds.len() == 1 {
        pretty(&reports[0])?
    } else {
        pretty(&summarize(&seeds, reports))?
    };
    let sink = emit(a.out.as_deref(), &body)?;
    ctx.manifest(seeds, sink)?;
    Ok(0)
}

fn eval_cls(a: &EvalClsArgs, ctx: &mut Ctx) -> Result<i32> {
    let mut d = DataDir::new(&a.data.data);
    let features = d.features()?;
    let labels = d.labels()?;
    let splits = d.splits()?;
    ctx.absorb(d);
    ctx.digest(&a.model)?;
    let ckpt = Checkpoint::load(&a.model)?;
    if ckpt.kind != ModelKind::Classifier {
        return Err(Error::Validation(format!("{} is not a classifier checkpoint", a.model.display())));
    }
    let cls = Classifier::from_checkpoint(&ckpt)?;
    if cls.tags != labels.vocabulary() {
        return Err(Error::Validation("model tags differ from labels.tsv vocabulary".into()));
    }
    let (split, phase) = match a.split {
        SplitArg::Valid => (Split::Valid, Phase::Valid),
        SplitArg::Test => (Split::Test, Phase::Test),
    };
    let m = cls.evaluate(&features, &labels, splits.get(split), phase)?;
    let report = MetricReport {
        seed: ckpt.seed,
        ..MetricReport::default()
    }
    .with_classification(m);
    let sink = emit(a.out.as_deref(), &pretty(&report)?)?;
    ctx.manifest(vec![ckpt.seed], sink)?;
    Ok(0)
}

fn gradcheck(a: &GradcheckArgs, ctx: &mut Ctx) -> Result<i32> {
    let results = crate::gradcheck::run_suite(a.seed)?;
    let ok = results.iter().all(|r| r.passed);
    let sink = emit(a.out.as_deref(), &pretty(&results)?)?;
    ctx.manifest(vec![a.seed], sink)?;
    Ok(if ok { 0 } else { 1 })
}
