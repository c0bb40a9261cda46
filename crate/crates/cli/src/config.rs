use std::path::{Path, PathBuf};

use cueplan::planner::PlanConfig;
use cueplan::predictors::ModelConfig;
use cueplan::training::TrainConfig;
use cueplan::worldgen::WorldSpec;
use cueplan::PhysicsParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SEED_ENV: &str = "CUEPLAN_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Names from the built-in variant list.
    pub datasets: Vec<String>,
    pub n_sequences: usize,
    pub horizon: usize,
    /// Rows of the text table.
    pub report_ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { datasets: vec!["train".into()], n_sequences: 500, horizon: 20, report_ks: vec![1, 5, 20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagineConfig {
    pub steps: usize,
    pub resolution: usize,
}

impl Default for ImagineConfig {
    fn default() -> Self {
        ImagineConfig { steps: 100, resolution: 128 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a command needs. Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub world: WorldSpec,
    pub n_sequences: usize,
    pub physics: PhysicsParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub plan: PlanConfig,
    pub trials: usize,
    pub eval: EvalConfig,
    pub imagine: ImagineConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            world: WorldSpec::default(),
            n_sequences: 1000,
            physics: PhysicsParams::default(),
            model: ModelConfig::oc(),
            train: TrainConfig::default(),
            plan: PlanConfig::default(),
            trials: 100,
            eval: EvalConfig::default(),
            imagine: ImagineConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    /// Flag, then environment, then config file.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, CliError> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| CliError::validation(format!("{SEED_ENV}={v} is not a u64")))?),
            Err(_) => None,
        };
        let seed = flag.or(env).or(self.seed).ok_or_else(|| {
            CliError::validation(format!("no seed: set `seed` in the config, {SEED_ENV}, or --seed"))
        })?;
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}
