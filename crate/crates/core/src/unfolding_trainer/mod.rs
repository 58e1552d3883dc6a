//! Deep-unfolding training of the THS detector and the TPG baselines.
//!
//! Training is incremental: generation `g` optimizes the whole parameter
//! vector against the loss of the depth-`g` prefix, so layers beyond `g`
//! receive zero gradient and keep their initial values until their own
//! generation starts. Every mini-batch draws a fresh channel.

mod adam;
mod finite_diff;
mod unrolled;

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detectors::{DetectorSpec, ThsParams, TpgParams, TpgVariant};
use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};
use crate::system_model::{realify_channel, sample_channel, snr_to_sigma2, SystemDims};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use finite_diff::finite_difference_gradient;
pub use unrolled::{
    backward_gradients, forward_unrolled, ths_loss, tpg_backward, tpg_forward, Batch, LossValue,
    ParamGradient, ThsActivations, TpgActivations, TpgGradient, Unfoldable, POSITIVITY_FLOOR,
};

/// Which detector family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainableFamily {
    Ths,
    ScalableTpg,
    /// TPG with the LMMSE-like matrix; `α` stays fixed during training.
    Tpg,
}

/// Noise level of the training draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrSchedule {
    /// Every mini-batch at the same SNR (dB).
    Fixed(f64),
    /// SNR drawn uniformly in `[min_db, max_db]` per mini-batch.
    Uniform { min_db: f64, max_db: f64 },
    Noiseless,
}

impl SnrSchedule {
    fn sigma2<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        match *self {
            SnrSchedule::Fixed(snr) => snr_to_sigma2(snr, n),
            SnrSchedule::Uniform { min_db, max_db } => {
                snr_to_sigma2(rng.gen_range(min_db..=max_db), n)
            }
            SnrSchedule::Noiseless => 0.0,
        }
    }
}

fn default_family() -> TrainableFamily {
    TrainableFamily::Ths
}

fn default_depth() -> usize {
    30
}

fn default_batches() -> usize {
    200
}

fn default_batch_size() -> usize {
    200
}

fn default_lr() -> f64 {
    2e-4
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

fn default_init_eta() -> f64 {
    0.01
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub dims: SystemDims,
    #[serde(default = "default_family")]
    pub family: TrainableFamily,
    pub snr_schedule: SnrSchedule,
    #[serde(rename = "T", default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_batches")]
    pub batches_per_generation: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_epsilon: f64,
    /// Initial `η_t` (THS) or `γ_t` (TPG).
    #[serde(default = "default_init_eta")]
    pub init_eta: f64,
    /// Initial `β_t`; TPG starts from `θ_t = 1/β`.
    #[serde(default = "one")]
    pub init_beta: f64,
    #[serde(default = "one")]
    pub init_zeta: f64,
    /// Fixed LMMSE regularizer for the `tpg` family; unset means `σ_w²/2`.
    #[serde(default)]
    pub tpg_alpha: Option<f64>,
    pub seed: u64,
}

impl TrainingConfig {
    /// Desk-scale defaults for the given system.
    pub fn new(dims: SystemDims, snr_schedule: SnrSchedule, seed: u64) -> Self {
        Self {
            dims,
            family: TrainableFamily::Ths,
            snr_schedule,
            depth: default_depth(),
            batches_per_generation: default_batches(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_epsilon: default_eps(),
            init_eta: default_init_eta(),
            init_beta: 1.0,
            init_zeta: 1.0,
            tpg_alpha: None,
            seed,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("T must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batches_per_generation == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and batches_per_generation must be at least 1".into(),
            ));
        }
        if !(self.init_beta > 0.0 && self.init_beta.is_finite()) {
            return Err(Error::InvalidConfig("init_beta must be positive".into()));
        }
        if let SnrSchedule::Uniform { min_db, max_db } = self.snr_schedule {
            if !(min_db <= max_db) {
                return Err(Error::InvalidConfig("uniform SNR range is empty".into()));
            }
        }
        self.adam().validate()
    }

    /// Short stable hash of the configuration, stored next to trained parameters.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().fold(String::with_capacity(16), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn initial_ths(&self) -> Result<ThsParams> {
        ThsParams::constant(self.depth, self.init_beta, self.init_eta, self.init_zeta)
    }

    pub fn initial_tpg(&self) -> Result<TpgParams> {
        let variant = match self.family {
            TrainableFamily::Tpg => TpgVariant::Lmmse,
            _ => TpgVariant::Scalable,
        };
        TpgParams::new(
            vec![self.init_eta; self.depth],
            vec![1.0 / self.init_beta; self.depth],
            self.tpg_alpha,
            variant,
        )
    }
}

/// Draws one mini-batch: a fresh channel, `batch_size` signals and noise.
pub fn draw_batch(config: &TrainingConfig, stream: RngStream) -> Result<Batch> {
    let mut rng = stream.rng();
    let dims = config.dims;
    let channel = realify_channel(&sample_channel(dims, &mut rng));
    let sigma2 = config.snr_schedule.sigma2(dims.n(), &mut rng);
    let x = DMatrix::from_fn(dims.real_n(), config.batch_size, |_, _| {
        if rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    });
    let mut y = channel.matrix() * &x;
    let sd = (sigma2 / 2.0).sqrt();
    if sd > 0.0 {
        for v in y.iter_mut() {
            let w: f64 = rng.sample(StandardNormal);
            *v += sd * w;
        }
    }
    Batch::new(channel, x, y, sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub generation: usize,
    pub batch_index: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,batch_index,loss\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{:e}", e.generation, e.batch_index, e.loss);
        }
        out
    }

    /// Mean loss over the last mini-batches of each generation.
    pub fn generation_summary(&self, tail: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut start = 0;
        while start < self.entries.len() {
            let g = self.entries[start].generation;
            let end = self.entries[start..]
                .iter()
                .position(|e| e.generation != g)
                .map_or(self.entries.len(), |p| start + p);
            let slice = &self.entries[start.max(end.saturating_sub(tail))..end];
            let mean = slice.iter().map(|e| e.loss).sum::<f64>() / slice.len() as f64;
            out.push((g, mean));
            start = end;
        }
        out
    }
}

/// Result of [`incremental_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub detector: TrainedDetector,
    pub log: TrainingLog,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedDetector {
    Ths(ThsParams),
    Tpg(TpgParams),
}

impl TrainedDetector {
    pub fn to_spec(&self) -> DetectorSpec {
        match self {
            TrainedDetector::Ths(p) => DetectorSpec::Ths { params: p.clone() },
            TrainedDetector::Tpg(p) if p.variant() == TpgVariant::Scalable => {
                DetectorSpec::ScalableTpg { params: p.clone() }
            }
            TrainedDetector::Tpg(p) => DetectorSpec::Tpg { params: p.clone() },
        }
    }
}

/// Runs the full incremental schedule described by `config`.
pub fn incremental_train(config: &TrainingConfig) -> Result<TrainingOutcome> {
    incremental_train_with(config, |_, _| {})
}

/// As [`incremental_train`], calling `on_generation(g, mean_loss)` after each
/// generation.
pub fn incremental_train_with(
    config: &TrainingConfig,
    on_generation: impl FnMut(usize, f64),
) -> Result<TrainingOutcome> {
    config.validate()?;
    let (detector, log) = match config.family {
        TrainableFamily::Ths => {
            let (p, log) = train_schedule(config, config.initial_ths()?, on_generation)?;
            (TrainedDetector::Ths(p), log)
        }
        TrainableFamily::ScalableTpg | TrainableFamily::Tpg => {
            let (p, log) = train_schedule(config, config.initial_tpg()?, on_generation)?;
            (TrainedDetector::Tpg(p), log)
        }
    };
    Ok(TrainingOutcome {
        detector,
        log,
        config_fingerprint: config.fingerprint(),
    })
}

fn train_schedule<P: Unfoldable>(
    config: &TrainingConfig,
    init: P,
    mut on_generation: impl FnMut(usize, f64),
) -> Result<(P, TrainingLog)> {
    let adam = config.adam();
    let root = RngStream::new(config.seed, tags::TRAIN_BATCH);
    let mut params = init;
    let mut flat = params.to_flat();
    let mut log = TrainingLog {
        entries: Vec::with_capacity(config.depth * config.batches_per_generation),
    };
    let mut batch_counter = 0u64;
    for generation in 1..=config.depth {
        let mut state = AdamState::new(flat.len());
        let mut loss_sum = 0.0;
        for batch_index in 0..config.batches_per_generation {
            let stream = root.substream(tags::TRAIN_BATCH, batch_counter);
            batch_counter += 1;
            let step = (|| -> Result<f64> {
                let batch = draw_batch(config, stream)?;
                let (loss, grad) = params.loss_and_gradient(&batch, generation)?;
                let mut next = flat.clone();
                adam_step(&mut next, &grad, &mut state, &adam).map_err(|e| match e {
                    Error::NonFiniteGradient { index, .. } => {
                        Error::NonFiniteGradient { generation, index }
                    }
                    other => other,
                })?;
                params.project(&mut next);
                params = params.with_flat(&next)?;
                flat = next;
                Ok(loss)
            })();
            let loss = step.map_err(|source| Error::TrainingDiverged {
                generation,
                last_stable: flat.clone(),
                source: Box::new(source),
            })?;
            loss_sum += loss;
            log.entries.push(LogEntry {
                generation,
                batch_index,
                loss,
            });
        }
        on_generation(generation, loss_sum / config.batches_per_generation as f64);
    }
    Ok((params, log))
}

/// On-disk form of trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamFile {
    Ths {
        #[serde(flatten)]
        params: ThsParams,
        config_fingerprint: String,
    },
    Tpg {
        #[serde(flatten)]
        params: TpgParams,
        config_fingerprint: String,
    },
}

impl ParamFile {
    pub fn from_outcome(outcome: &TrainingOutcome) -> Self {
        let config_fingerprint = outcome.config_fingerprint.clone();
        match &outcome.detector {
            TrainedDetector::Ths(p) => ParamFile::Ths {
                params: p.clone(),
                config_fingerprint,
            },
            TrainedDetector::Tpg(p) => ParamFile::Tpg {
                params: p.clone(),
                config_fingerprint,
            },
        }
    }

    pub fn to_spec(&self) -> DetectorSpec {
        match self {
            ParamFile::Ths { params, .. } => TrainedDetector::Ths(params.clone()).to_spec(),
            ParamFile::Tpg { params, .. } => TrainedDetector::Tpg(params.clone()).to_spec(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("parameters serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
