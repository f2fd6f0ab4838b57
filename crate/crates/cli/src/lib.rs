//! Command-line driver: configuration, artifact files, run manifest.
//!
//! Settings resolve as flags > config file > defaults. Every artifact is
//! written to a temporary file and renamed into place; the manifest is
//! updated only after all of a stage's outputs are in place.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mangrove_core::synth::SynthConfig;
use mangrove_core::workflow::{self, Files, PipelineConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";
pub const LOCK: &str = ".lock";
pub const THREADS_ENV: &str = "PIPELINE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("{stage}: {source}")]
    Numeric { stage: String, source: mangrove_core::Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Numeric { .. } => 4,
            CliError::Io { .. } => 1,
        }
    }

    fn stage(stage: &str, e: mangrove_core::Error) -> Self {
        match e {
            mangrove_core::Error::Config(m) => CliError::Config(format!("{stage}: {m}")),
            other => CliError::Numeric { stage: stage.into(), source: other },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Input files; when absent, the synthetic inputs under the output
/// directory are used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    /// Polygon shapefile (`.shp`) per observed year.
    pub layers: BTreeMap<i32, PathBuf>,
    /// Climate CSV files; each may hold one or more years.
    pub ecv: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub inputs: Inputs,
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; required here or in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to PIPELINE_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate synthetic polygon layers and climate grids.
    Synth,
    /// Write the cell grid.
    Grid,
    /// Repair each layer and aggregate it per cell.
    Intersect,
    /// Align cells across years and interpolate the gaps.
    Panel,
    /// Join the climate grids and build the lag-target table.
    Join,
    /// EDA figures and the train/test split.
    Features,
    /// Cross-validate and fit every model and input variant.
    Train,
    /// Hypothesis tests across models and RFE feature counts.
    Compare,
    /// Exact Shapley attributions for one saved model.
    Shap,
    /// Conformalized quantile intervals.
    Cqr,
    /// One-step forecast with a saved model.
    Forecast,
    /// Every stage from grid to forecast.
    Run,
}

#[derive(Debug, Parser)]
#[command(name = "pipeline", version, about = "Gridded vegetation-area forecasting pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

pub const STAGES: [Command; 10] = [
    Command::Grid,
    Command::Intersect,
    Command::Panel,
    Command::Join,
    Command::Features,
    Command::Train,
    Command::Compare,
    Command::Shap,
    Command::Cqr,
    Command::Forecast,
];

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Grid => "grid",
            Command::Intersect => "intersect",
            Command::Panel => "panel",
            Command::Join => "join",
            Command::Features => "features",
            Command::Train => "train",
            Command::Compare => "compare",
            Command::Shap => "shap",
            Command::Cqr => "cqr",
            Command::Forecast => "forecast",
            Command::Run => "run",
        }
    }
}

/// Configuration after applying flags, with the pieces the run needs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Directory relative input paths are resolved against.
    pub base: PathBuf,
}

impl Resolved {
    pub fn new(args: &GlobalArgs) -> Result<Self, CliError> {
        let (mut config, base) = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if args.seed.is_some() {
            config.seed = args.seed;
        }
        if args.out.is_some() {
            config.out = args.out.clone();
        }
        let env_threads = match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?}")))?),
            Err(_) => None,
        };
        let threads = args.threads.or(env_threads).or(config.threads);
        if threads == Some(0) {
            return Err(CliError::Config("threads must be positive".into()));
        }
        config.threads = threads;
        let seed = config.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\")".into()))?;
        let out = config.out.clone().ok_or_else(|| CliError::Config("an output directory is required (--out or \"out\")".into()))?;
        config.pipeline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if config.synth.observed_years != config.pipeline.observed_years && config.inputs.layers.is_empty() {
            return Err(CliError::Config("synth.observed_years must match pipeline.observed_years".into()));
        }
        Ok(Self { config, seed, out, threads, base })
    }

    /// Hash of everything that can change an artifact: the configuration
    /// without output directory and thread count.
    pub fn config_hash(&self) -> String {
        let mut c = self.config.clone();
        c.out = None;
        c.threads = None;
        digest(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    fn external(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// Checksums only; wall-clock timings live in a separate file so the
/// manifest of a deterministic run is byte-stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    fn producer_digest(&self, path: &str) -> Option<&String> {
        self.stages.values().find_map(|s| s.outputs.get(path))
    }
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Advisory lock on the output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let path = out.join(LOCK);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(format!(
                "{} is locked by another run (remove {} if no run is active)",
                out.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// One run over an output directory.
pub struct Session {
    pub run: Resolved,
    manifest: RunManifest,
    timings: BTreeMap<String, f64>,
    _lock: DirLock,
}

struct Gathered {
    record: BTreeMap<String, String>,
}

impl Session {
    pub fn open(run: Resolved) -> Result<Self, CliError> {
        let lock = DirLock::acquire(&run.out)?;
        let hash = run.config_hash();
        let path = run.out.join(MANIFEST);
        let mut manifest = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?,
            Err(_) => RunManifest::default(),
        };
        if manifest.config_hash != hash {
            // artifacts of another configuration are stale
            manifest = RunManifest { tool_version: String::new(), config_hash: hash, stages: BTreeMap::new() };
        }
        manifest.tool_version = env!("CARGO_PKG_VERSION").into();
        let timings = fs::read_to_string(run.out.join(TIMINGS))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        Ok(Self { run, manifest, timings, _lock: lock })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.run.config.pipeline
    }

    /// Reads a prior-stage artifact after checking it against the manifest.
    fn artifact(&self, rel: &str, g: &mut Gathered) -> Result<Vec<u8>, CliError> {
        let expected = self
            .manifest
            .producer_digest(rel)
            .ok_or_else(|| CliError::MissingArtifact(format!("{rel} has no manifest entry; run the stage that produces it")))?;
        let path = self.run.out.join(rel);
        let bytes = fs::read(&path).map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?;
        let d = digest(&bytes);
        if &d != expected {
            return Err(CliError::MissingArtifact(format!("{rel} changed since it was recorded")));
        }
        g.record.insert(rel.into(), d);
        Ok(bytes)
    }

    fn artifact_text(&self, rel: &str, g: &mut Gathered) -> Result<String, CliError> {
        String::from_utf8(self.artifact(rel, g)?).map_err(|_| CliError::MissingArtifact(format!("{rel} is not UTF-8")))
    }

    /// A configured input file, or the synthetic one when none is configured.
    fn input(&self, configured: Option<&PathBuf>, synthetic: &str, g: &mut Gathered) -> Result<Vec<u8>, CliError> {
        match configured {
            Some(p) => {
                let path = self.run.external(p);
                let bytes = fs::read(&path).map_err(|e| CliError::Config(format!("input {}: {e}", path.display())))?;
                g.record.insert(p.display().to_string(), digest(&bytes));
                Ok(bytes)
            }
            None => self.artifact(synthetic, g),
        }
    }

    fn commit(&mut self, stage: Command, g: Gathered, files: Files, started: Instant) -> Result<(), CliError> {
        let mut outputs = BTreeMap::new();
        for (rel, bytes) in &files {
            write_atomic(&self.run.out.join(rel), bytes)?;
            outputs.insert(rel.clone(), digest(bytes));
        }
        self.manifest.stages.insert(stage.name().into(), StageRecord { inputs: g.record, outputs });
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n";
        write_atomic(&self.run.out.join(MANIFEST), json.as_bytes())?;
        self.timings.insert(stage.name().into(), started.elapsed().as_secs_f64());
        let t = serde_json::to_string_pretty(&self.timings).expect("timings serialize") + "\n";
        write_atomic(&self.run.out.join(TIMINGS), t.as_bytes())
    }

    pub fn run_stage(&mut self, stage: Command) -> Result<(), CliError> {
        if stage == Command::Run {
            for s in STAGES {
                self.run_stage(s)?;
            }
            return Ok(());
        }
        let started = Instant::now();
        let mut g = Gathered { record: BTreeMap::new() };
        let name = stage.name();
        let seed = self.run.seed;
        let cfg = self.cfg().clone();
        let wrap = |e: mangrove_core::Error| CliError::stage(name, e);
        let files = match stage {
            Command::Synth => workflow::synth_stage(&self.run.config.synth, seed).map_err(wrap)?,
            Command::Grid => workflow::grid_stage(&cfg).map_err(wrap)?,
            Command::Intersect => {
                self.artifact("grid.csv", &mut g)?;
                let mut layers = Vec::new();
                for &year in &cfg.observed_years {
                    let configured = self.run.config.inputs.layers.get(&year);
                    if configured.is_none() && !self.run.config.inputs.layers.is_empty() {
                        return Err(CliError::Config(format!("no input layer for observed year {year}")));
                    }
                    layers.push((year, self.input(configured, &format!("inputs/layers/{year}.shp"), &mut g)?));
                }
                workflow::intersect_stage(&cfg, &layers).map_err(wrap)?
            }
            Command::Panel => {
                let mut yearly = Vec::new();
                for &year in &cfg.observed_years {
                    yearly.push((year, self.artifact_text(&format!("intersect/{year}.csv"), &mut g)?));
                }
                workflow::panel_stage(&cfg, &yearly).map_err(wrap)?
            }
            Command::Join => {
                let panel = self.artifact_text("panel.csv", &mut g)?;
                let mut texts = Vec::new();
                if self.run.config.inputs.ecv.is_empty() {
                    let (first, last) = (cfg.observed_years[0], cfg.observed_years[cfg.observed_years.len() - 1]);
                    for year in first..=last {
                        texts.push(self.artifact_text(&format!("inputs/ecv/{year}.csv"), &mut g)?);
                    }
                } else {
                    for p in &self.run.config.inputs.ecv.clone() {
                        let bytes = self.input(Some(p), "", &mut g)?;
                        texts.push(String::from_utf8(bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", p.display())))?);
                    }
                }
                workflow::join_stage(&cfg, &panel, &texts).map_err(wrap)?
            }
            Command::Features => {
                let table = self.artifact_text("features.csv", &mut g)?;
                let frame = self.artifact_text("frame.csv", &mut g)?;
                workflow::features_stage(&cfg, &table, &frame, seed).map_err(wrap)?.1
            }
            Command::Train => {
                let train = self.artifact_text("train.csv", &mut g)?;
                let test = self.artifact_text("test.csv", &mut g)?;
                workflow::train_stage(&cfg, &train, &test, seed).map_err(wrap)?.1
            }
            Command::Compare => {
                let scores = self.artifact_text("train/scores.csv", &mut g)?;
                let train = self.artifact_text("train.csv", &mut g)?;
                workflow::compare_stage(&cfg, &scores, &train, seed).map_err(wrap)?.1
            }
            Command::Shap => {
                let model = self.artifact_text(&format!("models/{}.json", cfg.shap_model), &mut g)?;
                let train = self.artifact_text("train.csv", &mut g)?;
                let test = self.artifact_text("test.csv", &mut g)?;
                workflow::shap_stage(&cfg, &model, &train, &test, seed).map_err(wrap)?.1
            }
            Command::Cqr => {
                let train = self.artifact_text("train.csv", &mut g)?;
                let test = self.artifact_text("test.csv", &mut g)?;
                workflow::cqr_stage(&cfg, &train, &test, seed).map_err(wrap)?.1
            }
            Command::Forecast => {
                let model = self.artifact_text(&format!("models/{}.json", cfg.forecast_model), &mut g)?;
                let frame = self.artifact_text("forecast_frame.csv", &mut g)?;
                workflow::forecast_stage(&cfg.forecast_model, &model, &frame).map_err(wrap)?.1
            }
            Command::Run => unreachable!(),
        };
        self.commit(stage, g, files, started)
    }
}

/// Resolves the configuration and runs one command.
pub fn execute(command: Command, args: &GlobalArgs) -> Result<(), CliError> {
    let run = Resolved::new(args)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = run.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut session = Session::open(run)?;
    pool.install(|| session.run_stage(command))
}

/// Process entry point; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, &cli.global) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pipeline {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
