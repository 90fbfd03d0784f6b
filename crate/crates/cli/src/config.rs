//! Run configuration: a TOML file, optionally a built-in preset, with
//! command-line overrides applied on top. The effective value is echoed into
//! every run directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qtranspile_core::ruleset::{DatasetSpec, MeasureMode};
use qtranspile_core::scaling::SweepAxis;
use qtranspile_core::sk::SkConfig;
use qtranspile_model::config::Breakpoint;
use qtranspile_model::{DecodeConfig, LossConfig, ModelConfig, OptimizerConfig, Strategy, TrainConfig};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [(&str, &str); 3] = [
    ("eagle-to-ionq", include_str!("../presets/eagle-to-ionq.toml")),
    ("eagle-to-heron", include_str!("../presets/eagle-to-heron.toml")),
    ("sk-discrete", include_str!("../presets/sk-discrete.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub decode: DecodeSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub sk: SkConfig,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            seed: 0,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            loss: LossSection::default(),
            optimizer: OptimizerConfig::default(),
            decode: DecodeSection::default(),
            bench: BenchSection::default(),
            sk: SkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: String,
    pub target: String,
    pub qubits: Vec<usize>,
    pub pairs_per_qubit: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub measure: MeasureMode,
    pub context_window: usize,
    /// Fraction of pairs held out for evaluation during training.
    pub holdout: f64,
    /// Dataset file used by `train` and `eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: "eagle".into(),
            target: "ionq".into(),
            qubits: vec![1],
            pairs_per_qubit: 1000,
            min_depth: 1,
            max_depth: 4,
            measure: MeasureMode::Never,
            context_window: 256,
            holdout: 0.1,
            path: None,
        }
    }
}

impl DataSection {
    pub fn spec(&self, seed: u64) -> DatasetSpec {
        DatasetSpec {
            qubit_counts: self.qubits.clone(),
            min_depth: self.min_depth,
            max_depth: self.max_depth,
            measure: self.measure,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_window: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "toy".into(),
            dropout: None,
            context_window: None,
        }
    }
}

impl ModelSection {
    pub fn build(&self, vocab_size: usize) -> Result<ModelConfig, CliError> {
        let mut cfg = ModelConfig::preset(&self.preset, vocab_size).map_err(CliError::invalid)?;
        if let Some(d) = self.dropout {
            cfg.dropout = d;
        }
        if let Some(w) = self.context_window {
            cfg.context_window = w;
        }
        cfg.validate().map_err(CliError::invalid)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_limit: Option<usize>,
    pub checkpoint_every: usize,
    pub fidelity_batch: usize,
    pub shards: usize,
    pub decode_max_len: usize,
    /// Run on a single thread.
    pub sequential: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            steps: t.steps,
            batch_size: t.batch_size,
            eval_every: t.eval_every,
            eval_limit: t.eval_limit,
            checkpoint_every: t.checkpoint_every,
            fidelity_batch: t.fidelity_batch,
            shards: t.shards,
            decode_max_len: t.decode_max_len,
            sequential: false,
        }
    }
}

impl TrainSection {
    pub fn build(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            seed,
            eval_every: self.eval_every,
            eval_limit: self.eval_limit,
            checkpoint_every: self.checkpoint_every,
            fidelity_batch: self.fidelity_batch,
            shards: self.shards,
            decode_max_len: self.decode_max_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub smoothing: f64,
    /// Explicit `(step, alpha, beta)` knots; when absent, pure cross-entropy
    /// for the first 30% of the steps, then alpha ramps to 0.5.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<Breakpoint>>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            smoothing: 0.1,
            schedule: None,
        }
    }
}

impl LossSection {
    pub fn build(&self, steps: usize) -> LossConfig {
        let mut lc = LossConfig::ramp(steps);
        lc.smoothing = self.smoothing;
        if let Some(s) = &self.schedule {
            lc.schedule = s.clone();
        }
        lc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub strategy: String,
    pub temperature: f64,
    pub k: usize,
    pub p: f64,
    pub max_len: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        Self {
            strategy: "greedy".into(),
            temperature: 1.0,
            k: 5,
            p: 0.9,
            max_len: 256,
        }
    }
}

impl DecodeSection {
    pub fn build(&self, seed: u64, window: usize) -> Result<DecodeConfig, CliError> {
        let t = self.temperature;
        let strategy = match self.strategy.as_str() {
            "greedy" => Strategy::Greedy,
            "temperature" => Strategy::Temperature { temperature: t },
            "top_k" => Strategy::TopK { k: self.k, temperature: t },
            "top_p" => Strategy::TopP { p: self.p, temperature: t },
            other => {
                return Err(CliError::Invalid(format!(
                    "unknown decode strategy `{other}` (greedy, temperature, top_k, top_p)"
                )))
            }
        };
        let dc = DecodeConfig {
            strategy,
            max_len: self.max_len.min(window),
            seed,
        };
        dc.validate(window).map_err(CliError::invalid)?;
        Ok(dc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub samples: usize,
    pub depth_points: Vec<usize>,
    /// Qubit count held fixed during the depth sweep.
    pub depth_sweep_qubits: usize,
    pub qubit_points: Vec<usize>,
    /// Depth held fixed during the qubit sweep.
    pub qubit_sweep_depth: usize,
    pub include_measure: bool,
    pub sk_growth: bool,
    pub sk_angles: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            samples: 30,
            depth_points: (1..=10).map(|d| 2 * d).collect(),
            depth_sweep_qubits: 3,
            qubit_points: (1..=5).collect(),
            qubit_sweep_depth: 10,
            include_measure: false,
            sk_growth: false,
            sk_angles: 8,
        }
    }
}

impl BenchSection {
    pub fn axis_points(&self, axis: SweepAxis) -> (usize, &[usize]) {
        match axis {
            SweepAxis::Depth => (self.depth_sweep_qubits, &self.depth_points),
            SweepAxis::Qubits => (self.qubit_sweep_depth, &self.qubit_points),
        }
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::Invalid(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            })?;
        Self::parse(text, name)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Invalid(format!("{origin}: {e}")))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(CliError::Invalid(format!(
                "{origin}: config schema version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Base config: `--config` file, else `--preset`, else defaults.
    pub fn resolve(file: Option<&Path>, preset: Option<&str>) -> Result<Self, CliError> {
        match (file, preset) {
            (Some(_), Some(_)) => Err(CliError::Invalid("pass either --config or --preset, not both".into())),
            (Some(p), None) => Self::load(p),
            (None, Some(n)) => Self::preset(n),
            (None, None) => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective config as `config.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let p = dir.join("config.toml");
        std::fs::write(&p, self.to_toml()).map_err(|e| CliError::io(&p, e))
    }
}
