//! JSON run configuration. Values come from, in increasing priority: the
//! built-in defaults, the `--config` file, then command-line flags.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "output_dir": "runs/a",
//!   "catalog_path": "nodes.json",
//!   "dataset_path": "dataset.csv",
//!   "features_path": "features.csv",
//!   "generation": { "n_subsets": 1900, "tasks_per_subset": 25, "window_s": 60.0 },
//!   "env": { "penalty": -10.0, "max_steps_per_episode": 250, "normalize": true },
//!   "policies": ["greedy", "random", "runs/a/policy.json"],
//!   "trainer": { "kind": "dqn", "learning_rate": 0.01, "n_step": 5 },
//!   "iterations": 100,
//!   "episodes": 100,
//!   "rounds": 50
//! }
//! ```
//!
//! Relative paths inside the file resolve against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use qstar::agents::{
    load_policy, DqnConfig, GreedyPolicy, Policy, PolicyFileError, QLearningConfig, RandomPolicy,
    RoundRobinPolicy,
};
use qstar::cloud::NodeCatalog;
use qstar::env::{EnvConfig, EnvOptions, QuantumCloudEnv};
use qstar::workload::{
    dataset_from_features, generate_dataset, read_features_csv, Dataset, GenerationParams,
};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainerConfig {
    Qlearning(QLearningConfig),
    Dqn(DqnConfig),
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig::Qlearning(QLearningConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    /// Circuit features to sample tasks from instead of synthetic ranges.
    pub features_path: Option<PathBuf>,
    pub generation: GenerationParams,
    pub env: EnvOptions,
    pub round: Option<usize>,
    /// Simulate only the first `rounds` rounds.
    pub rounds: Option<usize>,
    pub policies: Vec<String>,
    pub trainer: TrainerConfig,
    pub iterations: usize,
    pub episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output_dir: None,
            catalog_path: None,
            dataset_path: None,
            features_path: None,
            generation: GenerationParams::default(),
            env: EnvOptions::default(),
            round: None,
            rounds: None,
            policies: Vec::new(),
            trainer: TrainerConfig::default(),
            iterations: 100,
            episodes: 100,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.output_dir,
            &mut cfg.catalog_path,
            &mut cfg.dataset_path,
            &mut cfg.features_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply_common(&mut self, seed: Option<u64>, out: Option<PathBuf>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if out.is_some() {
            self.output_dir = out;
        }
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| invalid("a seed is required (--seed or \"seed\" in the config)"))
    }

    /// Existing output directory, `.` when unset.
    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("."));
        if !dir.is_dir() {
            return Err(invalid(format!(
                "output directory {} does not exist",
                dir.display()
            )));
        }
        Ok(dir)
    }

    pub fn validate_inputs(&self) -> Result<(), CliError> {
        for (what, p) in [
            ("catalog", &self.catalog_path),
            ("dataset", &self.dataset_path),
            ("features", &self.features_path),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(invalid(format!(
                        "{what} file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        self.generation
            .validate()
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn catalog(&self) -> Result<NodeCatalog, CliError> {
        match &self.catalog_path {
            Some(p) => {
                NodeCatalog::load(p).map_err(|e| invalid(format!("catalog {}: {e}", p.display())))
            }
            None => Ok(NodeCatalog::ibm_quantum()),
        }
    }

    /// Generates from the configured parameters, sampling circuits from the
    /// feature file when one is given.
    pub fn generate(&self, seed: u64) -> Result<Dataset, CliError> {
        let ds = match &self.features_path {
            Some(p) => {
                let file = fs::File::open(p)
                    .map_err(|e| invalid(format!("features {}: {e}", p.display())))?;
                let pool = read_features_csv(file)
                    .map_err(|e| invalid(format!("features {}: {e}", p.display())))?;
                dataset_from_features(&pool, &self.generation, seed)
            }
            None => generate_dataset(&self.generation, seed),
        };
        ds.map_err(|e| invalid(e.to_string()))
    }

    pub fn dataset(&self, seed: u64) -> Result<Dataset, CliError> {
        match &self.dataset_path {
            Some(p) => {
                Dataset::load_csv(p).map_err(|e| invalid(format!("dataset {}: {e}", p.display())))
            }
            None => self.generate(seed),
        }
    }

    pub fn environment(&self, seed: u64) -> Result<QuantumCloudEnv, CliError> {
        self.validate_inputs()?;
        let config = EnvConfig::new(self.catalog()?, Arc::new(self.dataset(seed)?))
            .with_options(self.env.clone());
        QuantumCloudEnv::new(config).map_err(|e| invalid(e.to_string()))
    }
}

/// Resolves a policy name (`greedy`, `random`, `round_robin`) or a policy
/// file path.
pub fn build_policy(
    spec: &str,
    seed: u64,
    env: &QuantumCloudEnv,
) -> Result<Box<dyn Policy>, CliError> {
    match spec {
        "greedy" => Ok(Box::new(GreedyPolicy)),
        "random" => Ok(Box::new(RandomPolicy::new(seed))),
        "round_robin" => Ok(Box::new(RoundRobinPolicy::default())),
        path => {
            let stored = load_policy(path).map_err(|e| match e {
                PolicyFileError::Io(io) => invalid(format!("policy {path}: {io}")),
                other => invalid(format!("policy {path}: {other}")),
            })?;
            stored
                .check_compatible(env)
                .map_err(|e| invalid(format!("policy {path}: {e}")))?;
            Ok(Box::new(stored))
        }
    }
}
