//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error. Every
//! command writes its outputs plus a `manifest.json` into `--out DIR`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covariance::CovarianceType;
use crate::dataset::{load_any, write_embeddings, DatasetSplit, EmbeddingDataset};
use crate::error::Error;
use crate::eval::{distance_histogram, run_sweep, EvoSettings, GmmSettings, SweepConfig};
use crate::gmm::GmmConfig;
use crate::scorers::{Distance, ScorerKind, ScorerSpec};
use crate::selection::{
    compute_score_matrix, per_sample_errors, select_evolutionary, select_gmm_coreset, select_greedy,
    select_minimax_coverage, select_random, EvoConfig, FitnessMode, Strategy,
};
use crate::synthgen::{generate_longtail, LongTailConfig};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "protoselect", version, about = "Select prototypical training subsets for anomaly detectors")]
pub struct Cli {
    /// Worker threads; never changes any output byte.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic long-tail dataset as train/val/test EMB1 files.
    Synth(SynthArgs),
    /// Select a training subset with one strategy.
    Select(SelectArgs),
    /// Evaluate strategies over a grid of subset sizes.
    Sweep(SweepArgs),
    /// Histogram of training-sample distances to the mean, annotated with single-sample AUROC.
    Histogram(HistogramArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long, env = "PROTOSELECT_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    #[arg(long, value_enum, default_value = "knn")]
    pub scorer: ScorerKind,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "l1")]
    pub distance: Distance,
    #[arg(long, default_value_t = 1e-6)]
    pub cov_floor: f64,
}

impl ScorerArgs {
    fn spec(&self) -> ScorerSpec {
        ScorerSpec {
            kind: self.scorer,
            k: self.k,
            distance: self.distance,
            cov_floor: self.cov_floor,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvoArgs {
    #[arg(long = "pop", default_value_t = 1000)]
    pub population: usize,
    #[arg(long = "gens", default_value_t = 500)]
    pub generations: usize,
    #[arg(long = "crossover", default_value_t = 0.5)]
    pub crossover_prob: f64,
    /// Score each validation sample by its nearest prototype instead of the literal max.
    #[arg(long)]
    pub nearest_prototype: bool,
}

impl EvoArgs {
    fn fitness(&self) -> FitnessMode {
        if self.nearest_prototype {
            FitnessMode::NearestPrototype
        } else {
            FitnessMode::Literal
        }
    }
}

#[derive(Debug, Args)]
pub struct GmmArgs {
    /// Covariance structure; defaults to full up to 64 dims, diagonal above.
    #[arg(long, value_enum)]
    pub covariance: Option<CovarianceType>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value = "longtail-ref")]
    pub preset: String,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub per_mode: Option<usize>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tail_fraction: Option<f64>,
    #[arg(long)]
    pub tail_scale: Option<f64>,
    #[arg(long)]
    pub ood_count: Option<usize>,
    #[arg(long)]
    pub ood_offset: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled validation set; required by greedy and evolutionary.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Strategy,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub evo: EvoArgs,
    #[command(flatten)]
    pub gmm: GmmArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,25")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "random,greedy,evolutionary,gmm-coreset,minimax-coverage"
    )]
    pub strategies: Vec<Strategy>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[command(flatten)]
    pub evo: EvoArgs,
    #[command(flatten)]
    pub gmm: GmmArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[command(flatten)]
    pub scorer: ScorerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct InputFingerprint {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

/// Everything needed to re-run a command.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: C,
    pub inputs: Vec<InputFingerprint>,
    pub outputs: Vec<String>,
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be >= 1".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {t} threads: {e}")))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(a),
        Command::Select(a) => cmd_select(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Histogram(a) => cmd_histogram(a),
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Run(Error::Io { path: dir.into(), source: e }))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Run(Error::Io { path: path.into(), source: e }))
}

fn fingerprint(role: &'static str, path: &Path) -> CliResult<InputFingerprint> {
    let bytes = fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(InputFingerprint {
        role,
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn write_manifest<C: Serialize>(dir: &Path, manifest: &RunManifest<C>) -> CliResult<()> {
    write_file(&dir.join("manifest.json"), to_json(manifest)?)
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Run(Error::Validation(format!("cannot serialize: {e}"))))?;
    s.push('\n');
    Ok(s)
}

fn load(path: &Path) -> CliResult<EmbeddingDataset> {
    Ok(load_any(path)?)
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut cfg = LongTailConfig::preset(&a.preset)
        .ok_or_else(|| CliError::Usage(format!("unknown preset {:?} (known: longtail-ref)", a.preset)))?;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { cfg.$field = v; })* };
    }
    apply!(dims => dims, modes => modes, per_mode => per_mode_id, spread => mode_spread,
        sigma => core_sigma, tail_fraction => tail_fraction, tail_scale => tail_scale,
        ood_count => ood_count, ood_offset => ood_offset, val_fraction => val_fraction,
        test_fraction => test_fraction);
    if let Some(seed) = a.seed.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let split = generate_longtail(&cfg)?;
    prepare_out(&a.out)?;
    let mut outputs = Vec::new();
    for (name, part) in [("train.emb", &split.train), ("val.emb", &split.val), ("test.emb", &split.test)] {
        write_embeddings(a.out.join(name), part)?;
        outputs.push(name.to_owned());
    }
    write_manifest(
        &a.out,
        &RunManifest {
            command: "synth",
            version: VERSION,
            seed: cfg.seed,
            config: &cfg,
            inputs: vec![],
            outputs,
        },
    )
}

#[derive(Debug, Serialize)]
struct SelectConfig {
    strategy: Strategy,
    m: usize,
    scorer: Option<ScorerSpec>,
    evolutionary: Option<EvoConfig>,
    gmm: Option<GmmConfig>,
}

fn cmd_select(a: SelectArgs) -> CliResult<()> {
    let seed = a.seed.seed.unwrap_or(0);
    let train = load(&a.train)?;
    if a.m == 0 || a.m > train.len() {
        return Err(CliError::Usage(format!(
            "--m must lie in 1..={} (training set size), got {}",
            train.len(),
            a.m
        )));
    }
    let mut inputs = vec![fingerprint("train", &a.train)?];
    let mut config = SelectConfig {
        strategy: a.strategy,
        m: a.m,
        scorer: None,
        evolutionary: None,
        gmm: None,
    };

    let selection = if a.strategy.is_supervised() {
        let val_path = a.val.as_ref().ok_or_else(|| {
            CliError::Usage(format!(
                "strategy {} is weakly supervised: it ranks training samples by validation AUROC \
                 and needs a labeled --val file with both ID and OOD samples",
                a.strategy
            ))
        })?;
        let val = load(val_path)?;
        val.require_both_classes("--val").map_err(|e| CliError::Usage(e.to_string()))?;
        inputs.push(fingerprint("val", val_path)?);
        let spec = a.scorer.spec();
        config.scorer = Some(spec);
        let matrix = compute_score_matrix(&train, &val, spec)?;
        if a.strategy == Strategy::Greedy {
            let mut s = select_greedy(&per_sample_errors(&matrix), a.m)?;
            s.seed = seed;
            s
        } else {
            let evo = EvoConfig {
                population: a.evo.population,
                generations: a.evo.generations,
                crossover_prob: a.evo.crossover_prob,
                seed,
                fitness: a.evo.fitness(),
            };
            evo.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let s = select_evolutionary(&matrix, a.m, &evo)?;
            config.evolutionary = Some(evo);
            s
        }
    } else {
        match a.strategy {
            Strategy::Random => select_random(train.len(), a.m, seed)?,
            Strategy::GmmCoreset => {
                let mut gmm = GmmConfig::new(a.m, train.dim(), seed);
                if let Some(c) = a.gmm.covariance {
                    gmm.covariance = c;
                }
                gmm.restarts = a.gmm.restarts;
                gmm.max_iters = a.gmm.max_iters;
                gmm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                let s = select_gmm_coreset(&train, a.m, &gmm)?;
                config.gmm = Some(gmm);
                s
            }
            Strategy::MinimaxCoverage => select_minimax_coverage(&train, a.m, seed)?,
            Strategy::Greedy | Strategy::Evolutionary => unreachable!("handled above"),
        }
    };

    prepare_out(&a.out)?;
    write_file(&a.out.join("selection.json"), to_json(&selection)?)?;
    write_manifest(
        &a.out,
        &RunManifest {
            command: "select",
            version: VERSION,
            seed,
            config,
            inputs,
            outputs: vec!["selection.json".into()],
        },
    )
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let seed = a.seed.seed.unwrap_or(0);
    let split = DatasetSplit::new(load(&a.train)?, load(&a.val)?, load(&a.test)?)?;
    if let Some(&bad) = a.sizes.iter().find(|&&s| s == 0 || s > split.train.len()) {
        return Err(CliError::Usage(format!(
            "subset size {bad} is outside 1..={} (training set size)",
            split.train.len()
        )));
    }
    let cfg = SweepConfig {
        subset_sizes: a.sizes.clone(),
        random_repeats: a.repeats,
        strategies: a.strategies.clone(),
        scorer: a.scorer.spec(),
        seed,
        evolutionary: EvoSettings {
            population: a.evo.population,
            generations: a.evo.generations,
            crossover_prob: a.evo.crossover_prob,
            fitness: a.evo.fitness(),
        },
        gmm: GmmSettings {
            covariance: a.gmm.covariance,
            restarts: a.gmm.restarts,
            max_iters: a.gmm.max_iters,
            ..GmmSettings::default()
        },
    };
    cfg.validate(split.train.len()).map_err(|e| CliError::Usage(e.to_string()))?;

    let report = run_sweep(&split, &cfg)?;
    prepare_out(&a.out)?;
    write_file(&a.out.join("sweep.json"), report.to_json()?)?;
    write_file(&a.out.join("sweep.csv"), report.to_csv()?)?;
    write_manifest(
        &a.out,
        &RunManifest {
            command: "sweep",
            version: VERSION,
            seed,
            config: &cfg,
            inputs: vec![
                fingerprint("train", &a.train)?,
                fingerprint("val", &a.val)?,
                fingerprint("test", &a.test)?,
            ],
            outputs: vec!["sweep.json".into(), "sweep.csv".into()],
        },
    )
}

#[derive(Debug, Serialize)]
struct HistogramConfig {
    bins: usize,
    scorer: ScorerSpec,
}

fn cmd_histogram(a: HistogramArgs) -> CliResult<()> {
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be >= 1".into()));
    }
    let train = load(&a.train)?;
    let val = load(&a.val)?;
    let spec = a.scorer.spec();
    let matrix = compute_score_matrix(&train, &val, spec)?;
    let report = distance_histogram(&train, &matrix, spec, a.bins)?;
    prepare_out(&a.out)?;
    write_file(&a.out.join("histogram.json"), report.to_json()?)?;
    write_manifest(
        &a.out,
        &RunManifest {
            command: "histogram",
            version: VERSION,
            seed: 0,
            config: HistogramConfig { bins: a.bins, scorer: spec },
            inputs: vec![fingerprint("train", &a.train)?, fingerprint("val", &a.val)?],
            outputs: vec!["histogram.json".into()],
        },
    )
}
