//! Command-line interface: `stats`, `split`, `generate`, `build-kb`, `run`, `eval`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 backend error. Results go to standard output, logs and errors to
//! standard error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregator::{predictions_jsonl, AblationMode, Pipeline};
use crate::backend::{backend_from_config, StubLexicon};
use crate::config::{BackendKind, PipelineConfig};
use crate::dataset::{load_dataset, load_posts, split, stats, write_dataset};
use crate::error::{Error, Result};
use crate::eval::{ablation_json, ablation_table, run_ablations};
use crate::fixtures::{synthetic_dataset, SyntheticSpec};
use crate::kb::{build_kb, load_corpus, KbStore};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "mmsenti", version, about = "Multimodal sentiment classification pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model backend; overrides the config file.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Extra `key=value` config overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Stub,
    Remote,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-label and modality statistics of a dataset.
    Stats { dataset: PathBuf },
    /// Stratified train/test split into `<out-dir>/train.jsonl` and `test.jsonl`.
    Split {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.1, value_parser = parse_fraction)]
        fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a seeded synthetic dataset with precomputed visual vectors.
    Generate {
        #[arg(long, default_value_t = 500)]
        per_label: usize,
        /// Share of posts whose text carries a keyword for the gold label.
        #[arg(long, default_value_t = 0.5)]
        keyword_rate: f64,
        #[arg(long, default_value_t = 0.3)]
        video_rate: f64,
        #[arg(long, default_value_t = 2025)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a knowledge base from a labelled training set and optional text corpora.
    BuildKb {
        #[arg(long)]
        train: PathBuf,
        #[arg(long = "corpus")]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run posts end to end; prints a stage trace and one JSON line per post.
    Run {
        #[arg(long)]
        post: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value = "full", value_parser = parse_mode)]
        mode: AblationMode,
    },
    /// Evaluate on a labelled test set, optionally with ablations.
    Eval {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// An ablation mode (evaluated next to the full pipeline), or `all`.
        #[arg(long, value_parser = parse_ablate)]
        ablate: Option<Modes>,
        /// Worker threads (default: available parallelism).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// Write prediction JSONL here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<AblationMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if f > 0.0 && f < 1.0 {
        Ok(f)
    } else {
        Err(format!("must be in (0, 1), got {f}"))
    }
}

#[derive(Debug, Clone)]
struct Modes(Vec<AblationMode>);

fn parse_ablate(s: &str) -> std::result::Result<Modes, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Modes(AblationMode::ALL.to_vec()));
    }
    let m = parse_mode(s)?;
    Ok(Modes(if m == AblationMode::Full { vec![m] } else { vec![AblationMode::Full, m] }))
}

fn load_config(g: &GlobalOpts) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    for o in &g.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(b) = g.backend {
        cfg.backend = match b {
            BackendArg::Stub => BackendKind::Stub,
            BackendArg::Remote => BackendKind::Remote,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let emit = |out: &mut dyn Write, s: &str| {
        out.write_all(s.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };
    match cli.command {
        Command::Stats { dataset } => {
            let st = stats(&load_dataset(&dataset)?);
            emit(out, &st.to_table())?;
            emit(out, &format!("{}\n", serde_json::to_string(&st).expect("stats serialize")))?;
        }
        Command::Split {
            dataset,
            fraction,
            seed,
            out_dir,
        } => {
            let d = load_dataset(&dataset)?;
            let (train, test) = split(&d, fraction, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_dataset(&out_dir.join("train.jsonl"), &train.samples)?;
            write_dataset(&out_dir.join("test.jsonl"), &test.samples)?;
            emit(
                out,
                &format!("train {} test {} (fraction {fraction}, seed {seed})\n", train.len(), test.len()),
            )?;
        }
        Command::Generate {
            per_label,
            keyword_rate,
            video_rate,
            seed,
            out: path,
        } => {
            for (name, v) in [("--keyword-rate", keyword_rate), ("--video-rate", video_rate)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
                }
            }
            let lexicon = match &cfg.lexicon_path {
                Some(p) => StubLexicon::from_file(p)?,
                None => StubLexicon::default(),
            };
            let spec = SyntheticSpec {
                per_label,
                dimension: cfg.dimension,
                keyword_rate,
                video_rate,
                seed,
            };
            let d = synthetic_dataset(&spec, &lexicon, &cfg.valence);
            write_dataset(&path, &d.samples)?;
            emit(out, &format!("wrote {} samples to {}\n", d.len(), path.display()))?;
        }
        Command::BuildKb { train, corpora, out: path } => {
            let pipeline = Pipeline::new(cfg)?;
            let train = load_dataset(&train)?;
            let corpora = corpora.iter().map(|p| load_corpus(p)).collect::<Result<Vec<_>>>()?;
            let backend = backend_from_config(&pipeline.config)?;
            let store = build_kb(&train, &corpora, backend.as_ref(), &pipeline.config, &pipeline.stopwords)?;
            store.persist(&path)?;
            emit(
                out,
                &format!(
                    "knowledge base: {} entries, dimension {} -> {}\n",
                    store.len(),
                    store.dimension(),
                    path.display()
                ),
            )?;
        }
        Command::Run { post, kb, mode } => {
            let pipeline = Pipeline::new(cfg)?;
            let posts = load_posts(&post)?;
            let store = KbStore::load_for(&kb, &pipeline.config)?;
            let backend = backend_from_config(&pipeline.config)?;
            for p in &posts {
                let o = pipeline.run_mode(p, &store, backend.as_ref(), mode)?;
                emit(out, &o.pretty())?;
                emit(out, &format!("{}\n", o.prediction_json()))?;
            }
        }
        Command::Eval {
            test,
            kb,
            ablate,
            jobs,
            out: pred_path,
        } => {
            let modes = ablate.map_or_else(|| vec![AblationMode::Full], |m| m.0);
            let pipeline = Pipeline::new(cfg)?;
            let test = load_dataset(&test)?;
            let store = KbStore::load_for(&kb, &pipeline.config)?;
            let backend = backend_from_config(&pipeline.config)?;
            let evals = run_ablations(
                &test,
                &store,
                backend.as_ref(),
                &pipeline,
                &modes,
                jobs.map(|j| j as usize),
            )?;
            emit(out, &ablation_table(&evals))?;
            emit(out, &format!("{}\n", ablation_json(&test.name, &evals)))?;
            if let Some(p) = pred_path {
                let body = if evals.len() == 1 {
                    predictions_jsonl(&evals[0].outputs)
                } else {
                    let mut s = String::new();
                    for e in &evals {
                        for o in &e.outputs {
                            let mut v = o.prediction_json();
                            v["mode"] = e.mode.name().into();
                            s.push_str(&format!("{v}\n"));
                        }
                    }
                    s
                };
                write_file(&p, &body)?;
            }
        }
    }
    Ok(())
}

/// Exit code for an error raised after argument parsing.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_backend() {
        EXIT_BACKEND
    } else if matches!(e.root(), Error::Config(_) | Error::WeightViolation(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        // A closed pipe on stdout (e.g. `| head`) is not a failure.
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the `mmsenti` binary.
pub fn main_from_env() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
