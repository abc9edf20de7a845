//! Task-placement environment with a step/reset interface.
//!
//! Each episode replays one dataset round. At every decision point the agent
//! sees the cluster (qubit capacity and backlog per node) and the task that
//! just arrived, and picks the node to run it on. A successful placement is
//! rewarded with the inverse of the task's completion time and the clock
//! moves on to the next arrival. A placement on a node with too few qubits is
//! penalized and the same task is presented again with the clock unchanged.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{
    backlog, estimate_execution_time, Broker, ExecutionRecord, NodeCatalog, QNode, QTask, SimEvent,
};
use crate::engine::{Engine, SimTime};
use crate::workload::{Dataset, WorkloadError};

pub const DEFAULT_PENALTY: f64 = -10.0;
/// Task attributes appended after the node block.
pub const TASK_FEATURES: usize = 3;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} out of range for {n_actions} nodes")]
    InvalidAction { action: usize, n_actions: usize },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode still running")]
    EpisodeRunning,
    #[error("reward undefined: task {task_id} would complete in zero time")]
    RewardUndefined { task_id: u64 },
    #[error("degenerate bounds for component {index}: lo = hi = {value}")]
    DegenerateBounds { index: usize, value: f64 },
    #[error("round {round} has no tasks")]
    EmptyRound { round: usize },
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum RewardMode {
    /// `1 / completion_s` on success.
    #[default]
    InverseCompletion,
    /// A fixed positive reward on success.
    Constant(f64),
}

/// Scalar environment settings, separable from the cluster and the dataset
/// so that run configs can carry them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvOptions {
    pub reward_mode: RewardMode,
    pub penalty: f64,
    /// Defaults to ten times the round's task count.
    pub max_steps_per_episode: Option<usize>,
    pub normalize: bool,
    /// Append quantum volume and CLOPS to each node's features.
    pub static_node_features: bool,
    /// Upper bound used when normalizing backlog seconds.
    pub backlog_bound_s: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            reward_mode: RewardMode::InverseCompletion,
            penalty: DEFAULT_PENALTY,
            max_steps_per_episode: None,
            normalize: false,
            static_node_features: false,
            backlog_bound_s: 60.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub catalog: NodeCatalog,
    pub dataset: Arc<Dataset>,
    pub options: EnvOptions,
}

impl EnvConfig {
    pub fn new(catalog: NodeCatalog, dataset: Arc<Dataset>) -> Self {
        EnvConfig {
            catalog,
            dataset,
            options: EnvOptions::default(),
        }
    }

    pub fn with_options(mut self, options: EnvOptions) -> Self {
        self.options = options;
        self
    }

    fn validate(&self) -> Result<(), EnvError> {
        let o = &self.options;
        if !(o.penalty < 0.0) {
            return Err(EnvError::InvalidConfig("penalty must be negative".into()));
        }
        if let RewardMode::Constant(v) = o.reward_mode {
            if !(v > 0.0) {
                return Err(EnvError::InvalidConfig(
                    "constant success reward must be positive".into(),
                ));
            }
        }
        if let Some(m) = o.max_steps_per_episode {
            if m < self.dataset.max_subset_len() {
                return Err(EnvError::InvalidConfig(format!(
                    "max_steps_per_episode {m} is below the largest round size {}",
                    self.dataset.max_subset_len()
                )));
            }
        }
        if !(o.backlog_bound_s > 0.0) {
            return Err(EnvError::InvalidConfig(
                "backlog_bound_s must be positive".into(),
            ));
        }
        if self.dataset.n_subsets() == 0 {
            return Err(EnvError::InvalidConfig("dataset has no rounds".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for Observation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-component bounds for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// `(x - lo) / (hi - lo)` clamped to `[0, 1]`, component-wise.
pub fn normalize(obs: &Observation, bounds: &ObsBounds) -> Result<Observation, EnvError> {
    assert_eq!(
        obs.len(),
        bounds.lo.len(),
        "observation and bounds differ in length"
    );
    assert_eq!(
        obs.len(),
        bounds.hi.len(),
        "observation and bounds differ in length"
    );
    obs.iter()
        .zip(bounds.lo.iter().zip(&bounds.hi))
        .enumerate()
        .map(|(index, (&x, (&lo, &hi)))| {
            if hi == lo {
                return Err(EnvError::DegenerateBounds { index, value: lo });
            }
            Ok(((x - lo) / (hi - lo)).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Observation)
}

/// Reward for one dispatch outcome.
pub fn reward(record: &ExecutionRecord, mode: RewardMode, penalty: f64) -> Result<f64, EnvError> {
    match (record.completion_s(), mode) {
        (None, _) => Ok(penalty),
        (Some(_), RewardMode::Constant(v)) => Ok(v),
        (Some(c), RewardMode::InverseCompletion) if c > 0.0 => Ok(1.0 / c),
        (Some(_), RewardMode::InverseCompletion) => Err(EnvError::RewardUndefined {
            task_id: record.task_id,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    NotReset,
    Running,
    Terminated,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub task_id: u64,
    pub node_id: usize,
    pub success: bool,
    pub wait_s: Option<f64>,
    pub exec_s: Option<f64>,
    pub completion_s: Option<f64>,
    pub violations_so_far: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub round: usize,
    pub reward_sum: f64,
    pub steps: usize,
    pub violations: usize,
    pub successes: usize,
    pub total_completion_s: f64,
    /// Mean over successful placements; zero when there were none.
    pub mean_completion_s: f64,
    pub terminated: bool,
}

/// Everything a placement can change besides the episode counters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub engine: Engine<SimEvent>,
    pub broker: Broker,
    /// Index of the current task within the round.
    pub cursor: usize,
}

#[derive(Debug, Clone)]
pub struct QuantumCloudEnv {
    config: EnvConfig,
    bounds: ObsBounds,
    sim: SimState,
    round: usize,
    next_round: usize,
    status: EpisodeStatus,
    max_steps: usize,
    stats: EpisodeStats,
    trace: Vec<ExecutionRecord>,
}

impl QuantumCloudEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let bounds = raw_bounds(&config);
        let sim = SimState {
            engine: Engine::new(),
            broker: Broker::from_catalog(&config.catalog),
            cursor: 0,
        };
        Ok(QuantumCloudEnv {
            config,
            bounds,
            sim,
            round: 0,
            next_round: 0,
            status: EpisodeStatus::NotReset,
            max_steps: 0,
            stats: EpisodeStats::default(),
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn catalog(&self) -> &NodeCatalog {
        &self.config.catalog
    }

    pub fn n_actions(&self) -> usize {
        self.config.catalog.len()
    }

    fn node_stride(&self) -> usize {
        if self.config.options.static_node_features {
            4
        } else {
            2
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.n_actions() * self.node_stride() + TASK_FEATURES
    }

    /// Bounds of the raw observation, used for normalization.
    pub fn bounds(&self) -> &ObsBounds {
        &self.bounds
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn now(&self) -> SimTime {
        self.sim.engine.now()
    }

    pub fn nodes(&self) -> &[QNode] {
        self.sim.broker.nodes()
    }

    pub fn sim_state(&self) -> &SimState {
        &self.sim
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn trace(&self) -> &[ExecutionRecord] {
        &self.trace
    }

    pub fn stats_so_far(&self) -> &EpisodeStats {
        &self.stats
    }

    fn round_tasks(&self) -> &[QTask] {
        &self.config.dataset.subsets()[self.round]
    }

    pub fn current_task(&self) -> Option<&QTask> {
        match self.status {
            EpisodeStatus::Running | EpisodeStatus::Truncated => {
                self.round_tasks().get(self.sim.cursor)
            }
            _ => None,
        }
    }

    /// Starts a new episode. An explicit `round` wins; otherwise `seed`
    /// selects round `seed mod n_subsets`; otherwise rounds advance
    /// cyclically.
    pub fn reset(
        &mut self,
        seed: Option<u64>,
        round: Option<usize>,
    ) -> Result<Observation, EnvError> {
        let n = self.config.dataset.n_subsets();
        let round = match (round, seed) {
            (Some(r), _) if r >= n => {
                return Err(WorkloadError::RoundOutOfRange {
                    round: r,
                    n_subsets: n,
                }
                .into())
            }
            (Some(r), _) => r,
            (None, Some(s)) => (s % n as u64) as usize,
            (None, None) => self.next_round,
        };
        if self.config.dataset.subsets()[round].is_empty() {
            return Err(EnvError::EmptyRound { round });
        }
        self.round = round;
        self.next_round = (round + 1) % n;

        let mut engine = Engine::new();
        for task in &self.config.dataset.subsets()[round] {
            engine
                .schedule(task.arrival_at, SimEvent::TaskArrival { task_id: task.id })
                .expect("fresh engine starts at zero");
        }
        self.sim = SimState {
            engine,
            broker: Broker::from_catalog(&self.config.catalog),
            cursor: 0,
        };
        let tasks = self.round_tasks().len();
        self.max_steps = self
            .config
            .options
            .max_steps_per_episode
            .unwrap_or(10 * tasks);
        self.stats = EpisodeStats {
            round,
            ..Default::default()
        };
        self.trace.clear();
        self.status = EpisodeStatus::Running;

        let first = self.round_tasks()[0].arrival_at;
        self.advance_to(first);
        Ok(self.observe())
    }

    fn advance_to(&mut self, t: SimTime) {
        let broker = &mut self.sim.broker;
        self.sim.engine.run_until(t, |_, ev| broker.on_event(&ev));
    }

    fn drain(&mut self) {
        let broker = &mut self.sim.broker;
        self.sim
            .engine
            .run_to_completion(|_, ev| broker.on_event(&ev));
    }

    /// Observation in raw units, regardless of the normalize option.
    pub fn raw_observation(&self) -> Observation {
        let now = self.now();
        let mut v = Vec::with_capacity(self.obs_dim());
        for node in self.nodes() {
            v.push(node.qubit_count as f64);
            v.push(backlog(node, now));
            if self.config.options.static_node_features {
                v.push(node.quantum_volume as f64);
                v.push(node.clops);
            }
        }
        match self.current_task() {
            Some(t) => v.extend([t.qubit_count as f64, t.depth1_layers as f64, t.shots as f64]),
            None => v.extend([0.0; TASK_FEATURES]),
        }
        Observation(v)
    }

    /// Current observation, normalized when the environment is configured
    /// to. Task features read zero once the episode has terminated.
    pub fn observe(&self) -> Observation {
        let raw = self.raw_observation();
        if self.config.options.normalize {
            normalize(&raw, &self.bounds).expect("bounds are built non-degenerate")
        } else {
            raw
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        match self.status {
            EpisodeStatus::NotReset => return Err(EnvError::NotReset),
            EpisodeStatus::Terminated | EpisodeStatus::Truncated => {
                return Err(EnvError::EpisodeOver)
            }
            EpisodeStatus::Running => {}
        }
        let n_actions = self.n_actions();
        if action >= n_actions {
            return Err(EnvError::InvalidAction { action, n_actions });
        }
        let task = self.round_tasks()[self.sim.cursor].clone();
        let now = self.now();
        let opts = &self.config.options;

        if opts.reward_mode == RewardMode::InverseCompletion {
            let node = &self.nodes()[action];
            if node.can_host(&task)
                && backlog(node, now) == 0.0
                && estimate_execution_time(&task, node) == 0.0
            {
                return Err(EnvError::RewardUndefined { task_id: task.id });
            }
        }

        let record = self
            .sim
            .broker
            .dispatch(&task, action, now, &mut self.sim.engine);
        let r = reward(&record, opts.reward_mode, opts.penalty)?;

        self.stats.steps += 1;
        self.stats.reward_sum += r;
        match record.timing {
            Some(t) => {
                self.stats.successes += 1;
                self.stats.total_completion_s += t.completion_s;
                self.stats.mean_completion_s =
                    self.stats.total_completion_s / self.stats.successes as f64;
                self.sim.cursor += 1;
                match self
                    .round_tasks()
                    .get(self.sim.cursor)
                    .map(|t| t.arrival_at)
                {
                    Some(next) => self.advance_to(next),
                    None => {
                        self.drain();
                        self.status = EpisodeStatus::Terminated;
                        self.stats.terminated = true;
                    }
                }
            }
            None => self.stats.violations += 1,
        }
        if self.status == EpisodeStatus::Running && self.stats.steps >= self.max_steps {
            self.status = EpisodeStatus::Truncated;
        }

        let info = StepInfo {
            task_id: record.task_id,
            node_id: record.node_id,
            success: record.success(),
            wait_s: record.timing.map(|t| t.wait_s),
            exec_s: record.timing.map(|t| t.exec_s),
            completion_s: record.completion_s(),
            violations_so_far: self.stats.violations,
        };
        self.trace.push(record);
        Ok(StepResult {
            observation: self.observe(),
            reward: r,
            terminated: self.status == EpisodeStatus::Terminated,
            truncated: self.status == EpisodeStatus::Truncated,
            info,
        })
    }

    pub fn episode_stats(&self) -> Result<EpisodeStats, EnvError> {
        match self.status {
            EpisodeStatus::Terminated | EpisodeStatus::Truncated => Ok(self.stats.clone()),
            _ => Err(EnvError::EpisodeRunning),
        }
    }
}

fn raw_bounds(config: &EnvConfig) -> ObsBounds {
    let o = &config.options;
    let entries = config.catalog.entries();
    let max_node_qubits = config.catalog.max_qubits() as f64;
    let max_qv = entries.iter().map(|e| e.qv).max().unwrap_or(1) as f64;
    let max_clops = entries.iter().map(|e| e.clops).fold(0.0, f64::max);

    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for _ in entries {
        lo.extend([0.0, 0.0]);
        hi.extend([max_node_qubits, o.backlog_bound_s]);
        if o.static_node_features {
            lo.extend([0.0, 0.0]);
            hi.extend([max_qv, max_clops]);
        }
    }
    let tasks = || config.dataset.tasks();
    let max_task_qubits = tasks()
        .map(|t| t.qubit_count)
        .max()
        .unwrap_or(0)
        .max(config.catalog.max_qubits());
    let max_depth = tasks().map(|t| t.depth1_layers).max().unwrap_or(0).max(1);
    let max_shots = tasks().map(|t| t.shots).max().unwrap_or(0).max(1);
    lo.extend([0.0; TASK_FEATURES]);
    hi.extend([max_task_qubits as f64, max_depth as f64, max_shots as f64]);
    ObsBounds { lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{ExecutionTiming, NodeSpec};

    fn task(id: u64, at: f64, qubits: u32, depth: u64, shots: u64) -> QTask {
        QTask {
            id,
            arrival_at: SimTime::new(at),
            qubit_count: qubits,
            depth1_layers: depth,
            shots,
            app_tag: "t".into(),
        }
    }

    fn env_with(
        catalog: NodeCatalog,
        subsets: Vec<Vec<QTask>>,
        options: EnvOptions,
    ) -> QuantumCloudEnv {
        let ds = Arc::new(Dataset::from_subsets(subsets).unwrap());
        QuantumCloudEnv::new(EnvConfig::new(catalog, ds).with_options(options)).unwrap()
    }

    fn two_node_catalog() -> NodeCatalog {
        NodeCatalog::new(vec![
            NodeSpec {
                name: "small".into(),
                qubits: 7,
                qv: 32,
                clops: 1000.0,
                d1cps: 100.0,
            },
            NodeSpec {
                name: "big".into(),
                qubits: 27,
                qv: 64,
                clops: 1000.0,
                d1cps: 100.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn reset_dimension_and_idle_cluster() {
        let ds = crate::workload::generate_dataset(
            &crate::workload::GenerationParams {
                n_subsets: 2,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mut env =
            QuantumCloudEnv::new(EnvConfig::new(NodeCatalog::ibm_quantum(), Arc::new(ds))).unwrap();
        let obs = env.reset(None, Some(0)).unwrap();
        assert_eq!(obs.len(), 13);
        assert!((0..5).all(|i| obs[2 * i + 1] == 0.0));
        assert_eq!(env.reset(Some(3), Some(0)).unwrap(), obs);
        assert!(matches!(
            env.reset(None, Some(2)),
            Err(EnvError::Workload(WorkloadError::RoundOutOfRange { .. }))
        ));
    }

    #[test]
    fn observation_layout() {
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 5, 10, 100), task(1, 1.0, 5, 10, 100)]],
            EnvOptions::default(),
        );
        let obs = env.reset(None, None).unwrap();
        assert_eq!(obs.0, vec![7.0, 0.0, 27.0, 0.0, 5.0, 10.0, 100.0]);
        // 10*100/100 = 10 s of work on node 0, observed one second later.
        env.step(0).unwrap();
        let obs = env.observe();
        assert_eq!(obs[1], 9.0);
        assert_eq!(obs[3], 0.0);
    }

    #[test]
    fn success_reward_and_termination() {
        // exec = 5*40/100 = 2 s
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 5, 5, 40)]],
            EnvOptions::default(),
        );
        env.reset(None, None).unwrap();
        let r = env.step(0).unwrap();
        assert_eq!(r.reward, 0.5);
        assert!(r.info.success && r.terminated && !r.truncated);
        assert_eq!(r.observation[4..], [0.0, 0.0, 0.0]);
        assert!(matches!(env.step(0), Err(EnvError::EpisodeOver)));
        assert_eq!(env.now().seconds(), 2.0);
        assert_eq!(env.sim_state().broker.completed(), 1);
    }

    #[test]
    fn violation_keeps_task_and_state() {
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 12, 5, 40), task(1, 3.0, 2, 5, 40)]],
            EnvOptions::default(),
        );
        let obs = env.reset(None, None).unwrap();
        let before = env.sim_state().clone();
        let r = env.step(0).unwrap();
        assert_eq!(r.reward, -10.0);
        assert!(!r.info.success && !r.terminated);
        assert_eq!(r.info.violations_so_far, 1);
        assert_eq!(r.observation, obs);
        assert_eq!(env.sim_state(), &before);
        assert_eq!(env.current_task().unwrap().id, 0);
    }

    #[test]
    fn truncation_bound() {
        let opts = EnvOptions {
            max_steps_per_episode: Some(3),
            ..Default::default()
        };
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 12, 5, 40)]],
            opts,
        );
        env.reset(None, None).unwrap();
        assert!(!env.step(0).unwrap().truncated);
        assert!(!env.step(0).unwrap().truncated);
        let last = env.step(0).unwrap();
        assert!(last.truncated && !last.terminated);
        assert!(matches!(env.step(1), Err(EnvError::EpisodeOver)));
        let stats = env.episode_stats().unwrap();
        assert_eq!((stats.steps, stats.violations, stats.successes), (3, 3, 0));
    }

    #[test]
    fn default_truncation_is_ten_times_round() {
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 12, 5, 40), task(1, 0.5, 12, 5, 40)]],
            EnvOptions::default(),
        );
        env.reset(None, None).unwrap();
        assert_eq!(env.max_steps(), 20);
    }

    #[test]
    fn invalid_action_and_unreset() {
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 2, 5, 40)]],
            EnvOptions::default(),
        );
        assert!(matches!(env.step(0), Err(EnvError::NotReset)));
        env.reset(None, None).unwrap();
        assert!(matches!(
            env.step(2),
            Err(EnvError::InvalidAction {
                action: 2,
                n_actions: 2
            })
        ));
        assert!(matches!(env.episode_stats(), Err(EnvError::EpisodeRunning)));
        assert_eq!(env.stats_so_far().steps, 0);
    }

    #[test]
    fn zero_completion_is_undefined() {
        let mut env = env_with(
            two_node_catalog(),
            vec![vec![task(0, 0.0, 2, 0, 40)]],
            EnvOptions::default(),
        );
        env.reset(None, None).unwrap();
        let before = env.sim_state().clone();
        assert!(matches!(
            env.step(0),
            Err(EnvError::RewardUndefined { task_id: 0 })
        ));
        assert_eq!(env.sim_state(), &before);

        let opts = EnvOptions {
            reward_mode: RewardMode::Constant(1.0),
            ..Default::default()
        };
        let mut env = env_with(two_node_catalog(), vec![vec![task(0, 0.0, 2, 0, 40)]], opts);
        env.reset(None, None).unwrap();
        assert_eq!(env.step(0).unwrap().reward, 1.0);
    }

    #[test]
    fn reward_law() {
        let ok = |c: f64| ExecutionRecord {
            task_id: 0,
            node_id: 0,
            dispatch_at: SimTime::ZERO,
            timing: Some(ExecutionTiming {
                start_at: SimTime::ZERO,
                wait_s: 0.0,
                exec_s: c,
                completion_s: c,
            }),
        };
        let m = RewardMode::InverseCompletion;
        assert_eq!(reward(&ok(1.0), m, -10.0).unwrap(), 1.0);
        assert_eq!(reward(&ok(2.0), m, -10.0).unwrap(), 0.5);
        let fail = ExecutionRecord {
            timing: None,
            ..ok(1.0)
        };
        assert_eq!(reward(&fail, m, -10.0).unwrap(), -10.0);
        assert!(reward(&ok(0.0), m, -10.0).is_err());
        assert_eq!(
            reward(&ok(0.0), RewardMode::Constant(2.0), -10.0).unwrap(),
            2.0
        );
    }

    #[test]
    fn normalize_contract() {
        let b = ObsBounds {
            lo: vec![1.0, 1.0, 1.0],
            hi: vec![3.0, 3.0, 3.0],
        };
        let n = normalize(&Observation(vec![1.0, 3.0, 9.0]), &b).unwrap();
        assert_eq!(n.0, vec![0.0, 1.0, 1.0]);
        let bad = ObsBounds {
            lo: vec![0.0, 2.0],
            hi: vec![1.0, 2.0],
        };
        assert!(matches!(
            normalize(&Observation(vec![0.0, 2.0]), &bad),
            Err(EnvError::DegenerateBounds { index: 1, .. })
        ));
    }

    #[test]
    fn normalized_observations_in_unit_box() {
        let opts = EnvOptions {
            normalize: true,
            static_node_features: true,
            ..Default::default()
        };
        let tasks = (0..10).map(|i| task(i, i as f64, 5, 500, 1000)).collect();
        let mut env = env_with(two_node_catalog(), vec![tasks], opts);
        let mut obs = env.reset(None, None).unwrap();
        assert_eq!(obs.len(), 2 * 4 + 3);
        loop {
            assert!(obs.iter().all(|x| (0.0..=1.0).contains(x)), "{obs:?}");
            let r = env.step(0).unwrap();
            obs = r.observation;
            if r.terminated {
                break;
            }
        }
    }

    #[test]
    fn rounds_advance_cyclically() {
        let mut env = env_with(
            two_node_catalog(),
            vec![
                vec![task(0, 0.0, 2, 5, 40)],
                vec![task(1, 0.0, 2, 5, 40)],
                vec![task(2, 0.0, 2, 5, 40)],
            ],
            EnvOptions::default(),
        );
        let mut seen = vec![];
        for _ in 0..4 {
            env.reset(None, None).unwrap();
            seen.push(env.round());
        }
        assert_eq!(seen, vec![0, 1, 2, 0]);
        env.reset(Some(5), None).unwrap();
        assert_eq!(env.round(), 2);
    }

    #[test]
    fn invalid_configs() {
        let ds = Arc::new(
            Dataset::from_subsets(vec![vec![task(0, 0.0, 2, 5, 40), task(1, 0.0, 2, 5, 40)]])
                .unwrap(),
        );
        for options in [
            EnvOptions {
                penalty: 1.0,
                ..Default::default()
            },
            EnvOptions {
                max_steps_per_episode: Some(1),
                ..Default::default()
            },
            EnvOptions {
                reward_mode: RewardMode::Constant(-1.0),
                ..Default::default()
            },
        ] {
            let cfg = EnvConfig::new(two_node_catalog(), ds.clone()).with_options(options);
            assert!(matches!(
                QuantumCloudEnv::new(cfg),
                Err(EnvError::InvalidConfig(_))
            ));
        }
    }
}
