use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::detectors::{DetectorSpec, HsParams};
use crate::error::{Error, Result};
use crate::system_model::SystemDims;
use crate::unfolding_trainer::{ParamFile, TrainingConfig};

/// Top-level run configuration shared by `train`, `eval` and `diagnose`.
///
/// `dims` and `seed` live here only, so every section sees the same system and
/// the same root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dims: SystemDims,
    /// Relative paths are taken from the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Stamp BER curves with the wall-clock time. Off by default because it
    /// breaks byte-identical reruns.
    #[serde(default)]
    pub record_timestamp: bool,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub eval: Option<EvalSection>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Training settings. Any field of [`TrainingConfig`] except `dims` and `seed`
/// may appear alongside the keys below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    /// Train one model per SNR (fixed-SNR schedule) instead of using
    /// `snr_schedule`.
    #[serde(default)]
    pub snr_grid: Option<Vec<f64>>,
    /// Output names under the output directory; `{snr}` expands to the SNR.
    #[serde(default)]
    pub params_file: Option<String>,
    #[serde(default)]
    pub loss_file: Option<String>,
    #[serde(flatten)]
    pub training: Map<String, Value>,
}

/// One training job: the resolved config plus where its files go.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainJob {
    pub config: TrainingConfig,
    pub snr_db: Option<f64>,
    pub params_file: String,
    pub loss_file: String,
}

impl TrainSection {
    pub fn jobs(&self, dims: SystemDims, seed: u64) -> Result<Vec<TrainJob>> {
        for key in ["dims", "seed"] {
            if self.training.contains_key(key) {
                return Err(Error::InvalidConfig(format!(
                    "train.{key} is not allowed; set it at the top level"
                )));
            }
        }
        let mut base = self.training.clone();
        base.insert("dims".into(), serde_json::to_value(dims).expect("dims serialize"));
        base.insert("seed".into(), Value::from(seed));
        let family = base
            .get("family")
            .and_then(Value::as_str)
            .unwrap_or("ths")
            .to_string();
        let grid: Vec<Option<f64>> = match &self.snr_grid {
            None => vec![None],
            Some(grid) if base.contains_key("snr_schedule") => {
                let _ = grid;
                return Err(Error::InvalidConfig(
                    "train.snr_grid and train.snr_schedule are mutually exclusive".into(),
                ));
            }
            Some(grid) if grid.is_empty() => {
                return Err(Error::InvalidConfig("train.snr_grid is empty".into()))
            }
            Some(grid) => grid.iter().map(|&s| Some(s)).collect(),
        };
        let suffix = if self.snr_grid.is_some() { "_{snr}dB" } else { "" };
        let params_template = self
            .params_file
            .clone()
            .unwrap_or_else(|| format!("{family}{suffix}_params.json"));
        let loss_template = self
            .loss_file
            .clone()
            .unwrap_or_else(|| format!("{family}{suffix}_loss.csv"));
        if grid.len() > 1 && !(params_template.contains("{snr}") && loss_template.contains("{snr}")) {
            return Err(Error::InvalidConfig(
                "with several SNRs, params_file and loss_file need a {snr} placeholder".into(),
            ));
        }
        grid.into_iter()
            .map(|snr| {
                let mut map = base.clone();
                if let Some(snr) = snr {
                    map.insert("snr_schedule".into(), serde_json::json!({ "fixed": snr }));
                }
                let config: TrainingConfig = serde_json::from_value(Value::Object(map))
                    .map_err(|e| Error::InvalidConfig(format!("train section: {e}")))?;
                config.validate()?;
                Ok(TrainJob {
                    config,
                    snr_db: snr,
                    params_file: expand(&params_template, snr),
                    loss_file: expand(&loss_template, snr),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Strictly increasing SNR grid in dB.
    pub snr_db: Vec<f64>,
    pub num_vectors: usize,
    #[serde(default = "one")]
    pub vectors_per_channel: usize,
    /// Give every detector the same channels, signals and noise.
    #[serde(default = "yes")]
    pub paired: bool,
    pub detectors: Vec<DetectorEntry>,
    #[serde(default = "default_ber_stem")]
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    #[serde(default = "yes")]
    pub noiseless: bool,
    #[serde(default)]
    pub snr_db: Option<f64>,
    pub detectors: Vec<DetectorEntry>,
    #[serde(default = "default_diag_stem")]
    pub stem: String,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_ensemble() -> usize {
    10_000
}

fn default_ber_stem() -> String {
    "eval".into()
}

fn default_diag_stem() -> String {
    "diagnose".into()
}

/// A detector to run: inline parameters, a parameter file written by `train`,
/// or nothing for the detectors that have defaults (`hs`, `mmse`, `ml`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub kind: String,
    #[serde(default)]
    pub label: Option<String>,
    /// Depth for a default `hs` detector.
    #[serde(rename = "T", default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub params: Option<Value>,
    /// Relative paths are taken from the output directory; `{snr}` expands
    /// to the SNR of the point being evaluated.
    #[serde(default)]
    pub params_file: Option<String>,
}

/// A resolved detector and, when it came from a file, the training config
/// fingerprint stored there.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDetector {
    pub spec: DetectorSpec,
    pub fingerprint: Option<String>,
}

impl DetectorEntry {
    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.clone())
    }

    pub fn resolve(&self, snr_db: Option<f64>, output_dir: &Path) -> Result<ResolvedDetector> {
        if self.params.is_some() && self.params_file.is_some() {
            return Err(Error::InvalidConfig(format!(
                "detector {}: give params or params_file, not both",
                self.name()
            )));
        }
        if let Some(file) = &self.params_file {
            let path = output_dir.join(expand(file, snr_db));
            let loaded = ParamFile::load(&path)?;
            let spec = loaded.to_spec();
            if spec.kind() != self.kind {
                return Err(Error::InvalidConfig(format!(
                    "{} holds {} parameters, expected {}",
                    path.display(),
                    spec.kind(),
                    self.kind
                )));
            }
            let fingerprint = match loaded {
                ParamFile::Ths { config_fingerprint, .. } | ParamFile::Tpg { config_fingerprint, .. } => {
                    config_fingerprint
                }
            };
            return Ok(ResolvedDetector {
                spec,
                fingerprint: Some(fingerprint),
            });
        }
        let spec = match (self.kind.as_str(), &self.params) {
            ("hs", None) => DetectorSpec::Hs {
                params: HsParams::reference(self.depth.unwrap_or(30)),
            },
            (_, params) => {
                let mut obj = Map::new();
                obj.insert("kind".into(), Value::from(self.kind.clone()));
                if let Some(p) = params {
                    obj.insert("params".into(), p.clone());
                }
                serde_json::from_value(Value::Object(obj)).map_err(|e| {
                    Error::InvalidConfig(format!("detector {}: {e}", self.name()))
                })?
            }
        };
        if let DetectorSpec::Hs { params } = &spec {
            params.validate()?;
        }
        Ok(ResolvedDetector {
            spec,
            fingerprint: None,
        })
    }
}

/// Substitutes `{snr}` with the SNR in shortest form, or `noiseless`.
pub fn expand(template: &str, snr_db: Option<f64>) -> String {
    let value = snr_db.map_or_else(|| "noiseless".to_string(), |s| format!("{s}"));
    template.replace("{snr}", &value)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if config.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            config.output_dir = base.join(&config.output_dir);
        }
        if config.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(config)
    }
}

/// JSON Schema of the run configuration, printed by `--print-schema`.
pub const SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "hs-mimo run configuration",
  "type": "object",
  "required": ["seed", "dims"],
  "additionalProperties": false,
  "properties": {
    "seed": { "type": "integer", "minimum": 0, "description": "Root seed; --seed overrides it." },
    "dims": { "$ref": "#/$defs/dims" },
    "output_dir": { "type": "string", "default": "out", "description": "Relative to the config file; --out overrides it." },
    "threads": { "type": ["integer", "null"], "minimum": 1, "description": "Worker threads; defaults to all cores. --threads overrides it." },
    "record_timestamp": { "type": "boolean", "default": false },
    "train": {
      "type": "object",
      "description": "Also accepts every training field listed here.",
      "properties": {
        "snr_grid": { "type": "array", "items": { "type": "number" }, "description": "One model per SNR; excludes snr_schedule." },
        "params_file": { "type": "string", "description": "Under output_dir; {snr} expands to the SNR." },
        "loss_file": { "type": "string" },
        "family": { "enum": ["ths", "scalable_tpg", "tpg"], "default": "ths" },
        "snr_schedule": {
          "oneOf": [
            { "const": "noiseless" },
            { "type": "object", "required": ["fixed"], "properties": { "fixed": { "type": "number" } } },
            { "type": "object", "required": ["uniform"], "properties": { "uniform": {
              "type": "object", "required": ["min_db", "max_db"],
              "properties": { "min_db": { "type": "number" }, "max_db": { "type": "number" } } } } }
          ]
        },
        "T": { "type": "integer", "minimum": 1, "default": 30 },
        "batches_per_generation": { "type": "integer", "minimum": 1, "default": 200 },
        "batch_size": { "type": "integer", "minimum": 1, "default": 200 },
        "learning_rate": { "type": "number", "default": 0.0002 },
        "adam_beta1": { "type": "number", "default": 0.9 },
        "adam_beta2": { "type": "number", "default": 0.999 },
        "adam_epsilon": { "type": "number", "default": 1e-8 },
        "init_eta": { "type": "number", "default": 0.01, "description": "Initial eta (THS) or gamma (TPG)." },
        "init_beta": { "type": "number", "default": 1.0, "description": "Initial beta; TPG starts at theta = 1/beta." },
        "init_zeta": { "type": "number", "default": 1.0 },
        "tpg_alpha": { "type": ["number", "null"], "description": "Fixed regularizer for family tpg; null means sigma^2/2." }
      }
    },
    "eval": {
      "type": "object",
      "required": ["snr_db", "num_vectors", "detectors"],
      "additionalProperties": false,
      "properties": {
        "snr_db": { "type": "array", "items": { "type": "number" }, "description": "Strictly increasing." },
        "num_vectors": { "type": "integer", "minimum": 1, "description": "Transmissions per SNR point." },
        "vectors_per_channel": { "type": "integer", "minimum": 1, "default": 1 },
        "paired": { "type": "boolean", "default": true },
        "detectors": { "type": "array", "items": { "$ref": "#/$defs/detector" } },
        "stem": { "type": "string", "default": "eval" }
      }
    },
    "diagnose": {
      "type": "object",
      "required": ["detectors"],
      "additionalProperties": false,
      "properties": {
        "ensemble_size": { "type": "integer", "minimum": 1, "default": 10000 },
        "noiseless": { "type": "boolean", "default": true },
        "snr_db": { "type": ["number", "null"], "description": "Required when noiseless is false." },
        "detectors": { "type": "array", "items": { "$ref": "#/$defs/detector" } },
        "stem": { "type": "string", "default": "diagnose" }
      }
    }
  },
  "$defs": {
    "dims": {
      "type": "object",
      "required": ["n", "m"],
      "properties": {
        "n": { "type": "integer", "minimum": 1, "description": "Transmit antennas." },
        "m": { "type": "integer", "minimum": 1, "description": "Receive antennas." }
      }
    },
    "detector": {
      "type": "object",
      "required": ["kind"],
      "additionalProperties": false,
      "properties": {
        "kind": { "enum": ["ths", "hs", "scalable_tpg", "tpg", "mmse", "ml"] },
        "label": { "type": "string" },
        "T": { "type": "integer", "minimum": 1, "description": "Depth of a default hs detector." },
        "params": { "type": "object", "description": "Inline parameters in the same form as a parameter file." },
        "params_file": { "type": "string", "description": "Relative to output_dir; {snr} expands to the SNR." }
      }
    }
  }
}
"##;
