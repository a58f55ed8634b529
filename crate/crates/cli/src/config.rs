//! Run configuration: a TOML file of record, overridden by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use nwos::trainer::TrainConfig;
use nwos::WoSConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUTPUT_DIR_ENV: &str = "NWOS_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "nwos-out";

/// A problem with the configuration rather than with the run itself.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    #[default]
    Buffered,
    Vanilla,
}

/// A jump limit: a count, or `"inf"` for walks that run to the boundary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepLimit {
    Steps(usize),
    Keyword(String),
}

impl StepLimit {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.parse::<usize>() {
            Ok(k) => Ok(StepLimit::Steps(k)),
            Err(_) => StepLimit::Keyword(s.to_string()).resolve().map(|_| StepLimit::Keyword(s.to_string())),
        }
    }

    pub fn resolve(&self) -> Result<Option<usize>, String> {
        match self {
            StepLimit::Steps(k) => Ok(Some(*k)),
            StepLimit::Keyword(w) if matches!(w.as_str(), "inf" | "none" | "unlimited") => Ok(None),
            StepLimit::Keyword(w) => Err(format!("wos.max_steps: expected a count or \"inf\", got {w:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub width: usize,
    pub depth: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { width: 256, depth: 6 }
    }
}

/// Walk settings. Unset fields take per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WosSection {
    pub epsilon: Option<f64>,
    pub max_steps: Option<StepLimit>,
    pub n_traj: Option<usize>,
    pub control_variate: Option<bool>,
    pub interior_draws: Option<usize>,
}

impl WosSection {
    pub fn resolve(&self, defaults: WoSConfig) -> anyhow::Result<WoSConfig> {
        let max_steps = match &self.max_steps {
            Some(limit) => limit.resolve().map_err(ConfigError)?,
            None => defaults.max_steps,
        };
        let cfg = WoSConfig {
            epsilon: self.epsilon.unwrap_or(defaults.epsilon),
            max_steps,
            n_traj: self.n_traj.unwrap_or(defaults.n_traj),
            use_control_variate: self.control_variate.unwrap_or(defaults.use_control_variate),
            interior_draws_per_step: self.interior_draws.unwrap_or(defaults.interior_draws_per_step),
        };
        cfg.validate().map_err(|e| ConfigError(format!("[wos] {e}")))?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub alpha: f64,
    pub grid: usize,
    pub max_iterations: usize,
    /// Use the closed-form slice `c₂ = c₃ = π` instead of a trained network.
    pub analytic: bool,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { alpha: 1e-3, grid: 64, max_iterations: 2000, analytic: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Problem name, e.g. `laplace10`, `poisson50`, `committor10`, `control`.
    pub problem: Option<String>,
    pub dim: Option<usize>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads for walks; 0 uses all available cores.
    pub threads: usize,
    /// Points used for the final error measurement.
    pub eval_points: usize,
    pub trainer: TrainerKind,
    pub checkpoint: Option<PathBuf>,
    /// Evaluation points for `estimate`, one CSV row per point.
    pub points: Option<PathBuf>,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub wos: WosSection,
    pub control: ControlSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: None,
            dim: None,
            seed: 0,
            output_dir: None,
            threads: 0,
            eval_points: 1_000_000,
            trainer: TrainerKind::Buffered,
            checkpoint: None,
            points: None,
            network: NetworkSection::default(),
            train: TrainConfig { eval_points: 10_000, ..TrainConfig::default() },
            wos: WosSection::default(),
            control: ControlSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", origin.display())).into())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path)
    }

    pub fn problem_name(&self) -> anyhow::Result<&str> {
        match self.problem.as_deref() {
            Some(p) if !p.is_empty() => Ok(p),
            _ => config_error("missing field `problem`: set `problem = \"...\"` in the config file or pass --problem"),
        }
    }

    /// Flag, then environment, then file, then the built-in default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let cfg = TrainConfig { seed: self.seed, ..self.train.clone() };
        cfg.validate().map_err(|e| ConfigError(format!("[train] {e}")))?;
        Ok(cfg)
    }

    pub fn train_wos(&self) -> anyhow::Result<WoSConfig> {
        self.wos.resolve(WoSConfig { max_steps: Some(10), n_traj: 100, use_control_variate: true, ..Default::default() })
    }

    pub fn estimate_wos(&self) -> anyhow::Result<WoSConfig> {
        let cfg = self.wos.resolve(WoSConfig { max_steps: None, n_traj: 10_000, ..Default::default() })?;
        if cfg.max_steps.is_some() || cfg.use_control_variate {
            return config_error("estimate runs plain walks: wos.max_steps must be \"inf\" and control_variate false");
        }
        Ok(cfg)
    }

    /// SHA-256 over every field that can change results. Output location
    /// and thread count are excluded.
    pub fn hash(&self) -> String {
        let semantic = RunConfig { output_dir: None, threads: 0, ..self.clone() };
        let bytes = serde_json::to_vec(&semantic).expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
