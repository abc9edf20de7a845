//! Placement policies: heuristic baselines, an exhaustive one-step oracle,
//! tabular Q-learning and a deep Q-network trainer.

mod dqn;
mod nn;
mod policy_file;
mod qlearning;
mod replay;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{execution_time, NodeCatalog};
use crate::env::{EnvError, EpisodeStats, QuantumCloudEnv, TASK_FEATURES};

pub use dqn::{train_dqn, DqnConfig, DqnPolicy, DqnReport, EpsilonSchedule};
pub use nn::{Adam, Gradients, Mlp};
pub use policy_file::{load_policy, PolicyFileError, StoredPolicy, POLICY_VERSION};
pub use qlearning::{
    train_qlearning, Budget, QLearningConfig, QLearningReport, QTablePolicy, StateKey,
};
pub use replay::{Batch, NStepAccumulator, ReplayBuffer, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Chooses a node for the environment's current task.
pub trait Policy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize;

    fn name(&self) -> String;
}

/// Uniformly random node.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        self.rng.random_range(0..env.n_actions())
    }

    fn name(&self) -> String {
        "random".into()
    }
}

/// Cycles through the nodes regardless of state.
#[derive(Debug, Clone, Default)]
pub struct RoundRobinPolicy {
    next: usize,
}

impl Policy for RoundRobinPolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        let a = self.next % env.n_actions();
        self.next = a + 1;
        a
    }

    fn name(&self) -> String {
        "round_robin".into()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        select_greedy(&env.raw_observation(), env.catalog())
    }

    fn name(&self) -> String {
        "greedy".into()
    }
}

/// Earliest-completion placement read off a raw observation.
///
/// Among nodes with enough qubits, picks the one minimizing backlog plus
/// estimated execution time, lowest index on ties. When no node can host
/// the task, returns node 0.
pub fn select_greedy(obs: &[f64], catalog: &NodeCatalog) -> usize {
    let n = catalog.len();
    assert!(
        obs.len() >= TASK_FEATURES + 2 * n,
        "observation too short for {n} nodes"
    );
    let stride = (obs.len() - TASK_FEATURES) / n;
    let task = &obs[obs.len() - TASK_FEATURES..];
    let (qubits, depth, shots) = (task[0], task[1] as u64, task[2] as u64);

    let mut best: Option<(usize, f64)> = None;
    for (i, spec) in catalog.entries().iter().enumerate() {
        let node_qubits = obs[i * stride];
        let backlog = obs[i * stride + 1];
        if qubits > node_qubits {
            continue;
        }
        let completion = backlog + execution_time(depth, shots, spec.d1cps);
        if best.is_none_or(|(_, c)| completion < c) {
            best = Some((i, completion));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Tries every action on a copy of the environment and returns the one with
/// the smallest completion time, lowest index on ties, or node 0 when every
/// action violates capacity.
pub fn oracle_step(env: &QuantumCloudEnv) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for a in 0..env.n_actions() {
        let mut probe = env.clone();
        let completion = match probe.step(a) {
            Ok(r) => r.info.completion_s,
            Err(EnvError::RewardUndefined { .. }) => Some(0.0),
            Err(e) => panic!("oracle probe failed: {e}"),
        };
        if let Some(c) = completion {
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((a, c));
            }
        }
    }
    best.map_or(0, |(a, _)| a)
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStat {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).sqrt()
        }
    }

    pub fn summary(&self) -> MeanStd {
        MeanStd {
            mean: self.mean(),
            std: self.std(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub policy: String,
    pub episodes: usize,
    pub reward_sum: MeanStd,
    pub steps: MeanStd,
    pub violations: MeanStd,
    pub mean_completion_s: MeanStd,
    pub terminated: usize,
    pub truncated: usize,
}

/// Runs `episodes` full episodes. The first reset uses `seed`, later ones
/// advance rounds cyclically from there.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &mut QuantumCloudEnv,
    episodes: usize,
    seed: u64,
) -> Result<EvaluationSummary, AgentError> {
    if episodes == 0 {
        return Err(AgentError::InvalidHyperparameters(
            "episodes must be at least 1".into(),
        ));
    }
    let mut reward = RunningStat::default();
    let mut steps = RunningStat::default();
    let mut violations = RunningStat::default();
    let mut completion = RunningStat::default();
    let mut terminated = 0;
    for k in 0..episodes {
        let stats = run_episode(policy, env, if k == 0 { Some(seed) } else { None })?;
        reward.push(stats.reward_sum);
        steps.push(stats.steps as f64);
        violations.push(stats.violations as f64);
        completion.push(stats.mean_completion_s);
        terminated += stats.terminated as usize;
    }
    Ok(EvaluationSummary {
        policy: policy.name(),
        episodes,
        reward_sum: reward.summary(),
        steps: steps.summary(),
        violations: violations.summary(),
        mean_completion_s: completion.summary(),
        terminated,
        truncated: episodes - terminated,
    })
}

/// Plays one episode to its end.
pub fn run_episode(
    policy: &mut dyn Policy,
    env: &mut QuantumCloudEnv,
    seed: Option<u64>,
) -> Result<EpisodeStats, EnvError> {
    env.reset(seed, None)?;
    loop {
        let action = policy.select(env);
        let r = env.step(action)?;
        if r.terminated || r.truncated {
            return env.episode_stats();
        }
    }
}

pub const CURVE_HEADER: &str = "iteration,episodes,ep_reward_mean,ep_len_mean,violations_mean";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub episodes: usize,
    pub ep_reward_mean: f64,
    pub ep_len_mean: f64,
    pub violations_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CURVE_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iteration, r.episodes, r.ep_reward_mean, r.ep_len_mean, r.violations_mean
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        if lines.next() != Some(CURVE_HEADER) {
            return Err(format!("curve header must be `{CURVE_HEADER}`"));
        }
        let rows = lines
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                let bad = || format!("line {}: malformed curve row", i + 2);
                if f.len() != 5 {
                    return Err(bad());
                }
                Ok(CurveRow {
                    iteration: f[0].parse().map_err(|_| bad())?,
                    episodes: f[1].parse().map_err(|_| bad())?,
                    ep_reward_mean: f[2].parse().map_err(|_| bad())?,
                    ep_len_mean: f[3].parse().map_err(|_| bad())?,
                    violations_mean: f[4].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TrainingCurve { rows })
    }

    /// Mean of a column over the rows in `range`.
    pub fn mean_over(
        &self,
        range: std::ops::Range<usize>,
        column: impl Fn(&CurveRow) -> f64,
    ) -> f64 {
        let rows = &self.rows[range];
        rows.iter().map(column).sum::<f64>() / rows.len() as f64
    }
}

/// Groups finished episodes into fixed-size iterations of environment steps.
#[derive(Debug, Clone)]
pub(crate) struct CurveRecorder {
    steps_per_iteration: usize,
    steps_in_iteration: usize,
    pending: Vec<EpisodeStats>,
    curve: TrainingCurve,
    pub episodes: Vec<EpisodeStats>,
}

impl CurveRecorder {
    pub fn new(steps_per_iteration: usize) -> Self {
        CurveRecorder {
            steps_per_iteration,
            steps_in_iteration: 0,
            pending: Vec::new(),
            curve: TrainingCurve::default(),
            episodes: Vec::new(),
        }
    }

    pub fn iterations(&self) -> usize {
        self.curve.rows.len()
    }

    /// Call once per environment step, after any episode end it caused.
    pub fn on_step(&mut self) {
        self.steps_in_iteration += 1;
        if self.steps_in_iteration == self.steps_per_iteration {
            self.close_iteration();
        }
    }

    pub fn on_episode_end(&mut self, stats: EpisodeStats) {
        self.pending.push(stats.clone());
        self.episodes.push(stats);
    }

    fn close_iteration(&mut self) {
        let n = self.pending.len();
        let mean = |f: &dyn Fn(&EpisodeStats) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                self.pending.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let row = CurveRow {
            iteration: self.curve.rows.len() + 1,
            episodes: n,
            ep_reward_mean: mean(&|s| s.reward_sum),
            ep_len_mean: mean(&|s| s.steps as f64),
            violations_mean: mean(&|s| s.violations as f64),
        };
        self.curve.rows.push(row);
        self.pending.clear();
        self.steps_in_iteration = 0;
    }

    /// Closes a trailing partial iteration if it saw any episode.
    pub fn finish(mut self) -> (TrainingCurve, Vec<EpisodeStats>) {
        if !self.pending.is_empty() {
            self.close_iteration();
        }
        (self.curve, self.episodes)
    }
}
