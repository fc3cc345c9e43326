//! The TOML run configuration.
//!
//! Precedence, lowest first: built-in defaults, the `ACTSEARCH_OUT`
//! environment variable (output directory only), the config file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use actsearch::evolve::{EvolutionConfig, RerankOptions};
use actsearch::trainer::TrainSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "ACTSEARCH_OUT";
const DEFAULT_OUT: &str = "actsearch-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Applied to the evolution and rerank seeds when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub evolution: EvolutionConfig,
    pub train: TrainSpec,
    pub rerank: RerankOptions,
    pub distrib: DistribSection,
    pub cross: CrossSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistribSection {
    pub bind: String,
    pub coordinator: String,
    pub task_timeout_secs: f64,
    pub heartbeat_secs: f64,
    pub max_retries: u32,
    /// Worker threads started inside `search --mode asynchronous`.
    pub local_workers: usize,
}

impl Default for DistribSection {
    fn default() -> Self {
        DistribSection {
            bind: "127.0.0.1:7878".into(),
            coordinator: "127.0.0.1:7878".into(),
            task_timeout_secs: 600.0,
            heartbeat_secs: 5.0,
            max_retries: 5,
            local_workers: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossSection {
    pub runs: usize,
    pub exprs: Vec<String>,
    /// Named training setups; when empty the `train` section is used alone.
    pub specs: BTreeMap<String, TrainSpec>,
}

impl Default for CrossSection {
    fn default() -> Self {
        CrossSection {
            runs: 3,
            exprs: Vec::new(),
            specs: BTreeMap::new(),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output_dir: None,
            evolution: EvolutionConfig::new(8, 4, 60, 0.5),
            train: TrainSpec::default(),
            rerank: RerankOptions::default(),
            distrib: DistribSection::default(),
            cross: CrossSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when `path` is `None`.
    /// Relative dataset paths are resolved against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |spec: &mut TrainSpec| {
            if let Some(p) = &spec.dataset.path {
                if p.is_relative() {
                    spec.dataset.path = Some(base.join(p));
                }
            }
        };
        fix(&mut cfg.train);
        cfg.cross.specs.values_mut().for_each(fix);
        Ok(cfg)
    }

    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(s) = seed.or(self.seed) {
            self.seed = Some(s);
            self.evolution.seed = s;
            self.rerank.seed = s;
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.evolution
            .validate()
            .map_err(|e| CliError::Config(format!("evolution: {e}")))?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        self.train
            .schedule
            .compress(2)
            .map_err(|e| CliError::Config(format!("train.schedule cannot be compressed by 2: {e}")))?;
        for (name, s) in &self.cross.specs {
            s.validate()
                .map_err(|e| CliError::Config(format!("cross.specs.{name}: {e}")))?;
        }
        if self.rerank.keep == 0 || self.rerank.top_n == 0 {
            return Err(CliError::Config("rerank: top_n and keep must be positive".into()));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.distrib.task_timeout_secs) || !pos(self.distrib.heartbeat_secs) {
            return Err(CliError::Config("distrib: timeouts must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
