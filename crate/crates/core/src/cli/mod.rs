//! Command-line front end: `train`, `eval`, `diagnose` and `validate` over a
//! JSON run configuration.

mod config;
mod validate;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{
    expand, DetectorEntry, DiagnoseSection, EvalSection, ResolvedDetector, RunConfig, TrainJob, TrainSection,
    SCHEMA,
};
pub use validate::{
    run_validation, ExpectationRow, ValidationOptions, ValidationOutcome, EXPECTATION_TOLERANCE, IDENTITY_A,
    IDENTITY_TOLERANCE, IDENTITY_X,
};

use crate::detectors::Detector;
use crate::error::{Error, Result};
use crate::evaluation::{run_diagnostics, sweep_ber_points, write_report, EvalOptions, Report};
use crate::rng::{tags, RngStream};
use crate::unfolding_trainer::{incremental_train_with, ParamFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hs-mimo", version, about = "HS/THS MIMO detection: training, BER evaluation, diagnostics")]
pub struct Cli {
    /// Print the JSON schema of the run configuration and exit.
    #[arg(long)]
    pub print_schema: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a detector by incremental deep unfolding.
    Train(CommonArgs),
    /// Estimate BER curves for the configured detectors.
    Eval(CommonArgs),
    /// Record per-iteration gradient amplitude and bit-flip ratio.
    Diagnose(CommonArgs),
    /// Check the numerical identities the detectors rest on.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the output directory in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Optional run config; only its seed is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Deliberately compare against the wrong-sign closed form.
    #[arg(long, hide = true)]
    pub inject_sign_error: bool,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if cli.print_schema {
        print!("{SCHEMA}");
        return EXIT_OK;
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (train, eval, diagnose, validate)");
        return EXIT_USAGE;
    };
    match dispatch(command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Maps a library error to the documented exit status.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Diverged { .. }
        | Error::TrainingDiverged { .. }
        | Error::NonFiniteGradient { .. }
        | Error::LinearSolve(_) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Train(args) => {
            let (config, threads) = prepare(&args)?;
            with_threads(threads, || cmd_train(&config))
        }
        Command::Eval(args) => {
            let (config, threads) = prepare(&args)?;
            with_threads(threads, || cmd_eval(&config).map(|_| EXIT_OK))
        }
        Command::Diagnose(args) => {
            let (config, threads) = prepare(&args)?;
            with_threads(threads, || cmd_diagnose(&config).map(|_| EXIT_OK))
        }
        Command::Validate(args) => {
            let seed = match (&args.seed, &args.config) {
                (Some(seed), _) => *seed,
                (None, Some(path)) => RunConfig::load(path)?.seed,
                (None, None) => 0,
            };
            let mut options = ValidationOptions::new(seed);
            options.flip_tanh_sign = args.inject_sign_error;
            with_threads(args.threads, || cmd_validate(options))
        }
    }
}

fn prepare(args: &CommonArgs) -> Result<(RunConfig, Option<usize>)> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if args.threads == Some(0) {
        return Err(Error::InvalidConfig("--threads must be at least 1".into()));
    }
    let threads = args.threads.or(config.threads);
    Ok((config, threads))
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Trains every job of the `train` section. Returns [`EXIT_DIVERGED`] after
/// writing `train_divergence.json` when training blows up.
pub fn cmd_train(config: &RunConfig) -> Result<i32> {
    let section = config
        .train
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no train section".into()))?;
    let jobs = section.jobs(config.dims, config.seed)?;
    for job in &jobs {
        let label = job.snr_db.map_or(String::new(), |s| format!(" at {s} dB"));
        eprintln!(
            "training {:?}{label}: T={}, {} x {} per generation",
            job.config.family, job.config.depth, job.config.batches_per_generation, job.config.batch_size
        );
        let depth = job.config.depth;
        let outcome = incremental_train_with(&job.config, |g, loss| {
            eprintln!("  generation {g}/{depth}: mean loss {loss:.6e}");
        });
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::TrainingDiverged {
                generation,
                last_stable,
                source,
            }) => {
                let path = config.output_dir.join("train_divergence.json");
                let report = json!({
                    "generation": generation,
                    "error": source.to_string(),
                    "snr_db": job.snr_db,
                    "config_fingerprint": job.config.fingerprint(),
                    "last_stable_params": last_stable,
                });
                write_file(&path, &format!("{}\n", serde_json::to_string_pretty(&report).expect("json")))?;
                eprintln!("error: training diverged in generation {generation}: {source}");
                eprintln!("diagnostics written to {}", path.display());
                return Ok(EXIT_DIVERGED);
            }
            Err(e) => return Err(e),
        };
        let params_path = config.output_dir.join(&job.params_file);
        let loss_path = config.output_dir.join(&job.loss_file);
        write_file(&params_path, &ParamFile::from_outcome(&outcome).to_json())?;
        write_file(&loss_path, &outcome.log.to_csv())?;
        let tail = (job.config.batches_per_generation / 10).max(1);
        if let Some(&(g, loss)) = outcome.log.generation_summary(tail).last() {
            println!(
                "trained {}{label}: generation {g} final mean loss {loss:.6e} -> {}",
                outcome.detector.to_spec().kind(),
                params_path.display()
            );
        }
    }
    Ok(EXIT_OK)
}

/// Runs the `eval` section and writes `<stem>.json` and `<stem>_ber.csv`.
pub fn cmd_eval(config: &RunConfig) -> Result<Report> {
    let section = config
        .eval
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no eval section".into()))?;
    if section.detectors.is_empty() {
        return Err(Error::InvalidConfig("eval.detectors is empty".into()));
    }
    let options = EvalOptions {
        num_vectors: section.num_vectors,
        vectors_per_channel: section.vectors_per_channel,
    };
    // Resolve everything first so a missing file fails before any work.
    let resolved: Vec<Vec<ResolvedDetector>> = section
        .detectors
        .iter()
        .map(|d| {
            section
                .snr_db
                .iter()
                .map(|&snr| d.resolve(Some(snr), &config.output_dir))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let root = RngStream::new(config.seed, 0);
    let mut report = Report::new();
    let mut fingerprints = serde_json::Map::new();
    for (i, (entry, specs)) in section.detectors.iter().zip(&resolved).enumerate() {
        let stream = if section.paired {
            root
        } else {
            root.substream(tags::EVAL_DETECTOR, i as u64)
        };
        let points: Vec<(f64, &dyn Detector)> = section
            .snr_db
            .iter()
            .zip(specs)
            .map(|(&snr, r)| (snr, &r.spec as &dyn Detector))
            .collect();
        let mut curve = sweep_ber_points(&entry.name(), config.dims, &points, options, stream)?;
        curve.depth = specs[0].spec.depth();
        if config.record_timestamp {
            curve.timestamp = Some(unix_time());
        }
        let prints: Vec<Value> = specs
            .iter()
            .filter_map(|r| r.fingerprint.clone().map(Value::from))
            .collect();
        if !prints.is_empty() {
            fingerprints.insert(entry.name(), Value::from(prints));
        }
        for p in &curve.points {
            println!(
                "{:<14} {:>6} dB  BER {:.4e} +/- {:.1e}  ({} / {} bits)",
                curve.detector, p.snr_db, p.ber, p.ci_half_width, p.bit_errors, p.bits_tested
            );
        }
        report.curves.push(curve);
    }
    report.metadata.insert("seed".into(), json!(config.seed));
    report.metadata.insert("paired".into(), json!(section.paired));
    report.metadata.insert("num_vectors".into(), json!(section.num_vectors));
    report.metadata.insert("param_fingerprints".into(), Value::Object(fingerprints));
    report.metadata.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    write_report(&report, &config.output_dir, &section.stem)?;
    Ok(report)
}

/// Runs the `diagnose` section and writes `<stem>.json` and
/// `<stem>_diagnostics.csv`.
pub fn cmd_diagnose(config: &RunConfig) -> Result<Report> {
    let section = config
        .diagnose
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no diagnose section".into()))?;
    if section.detectors.is_empty() {
        return Err(Error::InvalidConfig("diagnose.detectors is empty".into()));
    }
    let snr = if section.noiseless { None } else { section.snr_db };
    let resolved: Vec<ResolvedDetector> = section
        .detectors
        .iter()
        .map(|d| {
            let r = d.resolve(snr, &config.output_dir)?;
            if !r.spec.supports_trace() {
                return Err(Error::InvalidConfig(format!(
                    "detector {} is not iterative and has no trace",
                    d.name()
                )));
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let stream = RngStream::new(config.seed, tags::DIAGNOSTICS);
    let mut report = Report::new();
    for (entry, r) in section.detectors.iter().zip(&resolved) {
        let mut record = run_diagnostics(
            &r.spec,
            config.dims,
            section.ensemble_size,
            section.noiseless,
            section.snr_db,
            stream,
        )?;
        record.detector = entry.name();
        let last = record.depth() - 1;
        println!(
            "{:<14} G(1) {:.4e}  G(T) {:.4e}  flips(1) {:.4e}  flips(T) {:.4e}",
            record.detector,
            record.mean_gradient_amplitude[0],
            record.mean_gradient_amplitude[last],
            record.mean_bit_flip_ratio[0],
            record.mean_bit_flip_ratio[last]
        );
        report.diagnostics.push(record);
    }
    report.metadata.insert("seed".into(), json!(config.seed));
    report.metadata.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    write_report(&report, &config.output_dir, &section.stem)?;
    Ok(report)
}

/// Prints the residual table; exit status 1 when any tolerance is violated.
pub fn cmd_validate(options: ValidationOptions) -> Result<i32> {
    let outcome = run_validation(options)?;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(outcome.table().as_bytes());
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_VALIDATION })
}

fn unix_time() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
