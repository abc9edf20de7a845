//! Tabular Q-learning over a compact discretization of the observation.
//!
//! A state is the set of nodes able to host the current task together with
//! the ordering of nodes by backlog. That is enough to separate feasible from
//! infeasible placements and to prefer idle nodes, while keeping the table to
//! at most `2^n * n!` rows.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, CurveRecorder, EpsilonSchedule, Policy, TrainingCurve};
use crate::env::{EpisodeStats, QuantumCloudEnv, TASK_FEATURES};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    /// Bit `i` set when node `i` has enough qubits for the task.
    pub feasible: u32,
    /// Node indices sorted by backlog, ascending, ties by index.
    pub order: Vec<u8>,
}

impl StateKey {
    pub fn from_raw(obs: &[f64], n_nodes: usize) -> Self {
        assert!(n_nodes <= 32, "tabular state supports at most 32 nodes");
        let stride = (obs.len() - TASK_FEATURES) / n_nodes;
        let task_qubits = obs[obs.len() - TASK_FEATURES];
        let mut feasible = 0u32;
        for i in 0..n_nodes {
            if task_qubits <= obs[i * stride] {
                feasible |= 1 << i;
            }
        }
        let mut order: Vec<u8> = (0..n_nodes as u8).collect();
        order.sort_by(|&a, &b| {
            obs[a as usize * stride + 1]
                .total_cmp(&obs[b as usize * stride + 1])
                .then(a.cmp(&b))
        });
        StateKey { feasible, order }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTablePolicy {
    pub n_actions: usize,
    pub table: BTreeMap<StateKey, Vec<f64>>,
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

impl QTablePolicy {
    pub fn new(n_actions: usize) -> Self {
        QTablePolicy {
            n_actions,
            table: BTreeMap::new(),
        }
    }

    /// Greedy action; unseen states fall back to node 0.
    pub fn greedy(&self, key: &StateKey) -> usize {
        self.table.get(key).map_or(0, |q| argmax(q))
    }

    fn max_q(&self, key: &StateKey) -> f64 {
        self.table
            .get(key)
            .map_or(0.0, |q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn row(&mut self, key: StateKey) -> &mut Vec<f64> {
        let n = self.n_actions;
        self.table.entry(key).or_insert_with(|| vec![0.0; n])
    }
}

impl Policy for QTablePolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        self.greedy(&StateKey::from_raw(&env.raw_observation(), env.n_actions()))
    }

    fn name(&self) -> String {
        "qtable".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Episodes(usize),
    /// Iterations of `steps_per_iteration` environment steps each.
    Iterations(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub steps_per_iteration: usize,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            alpha: 0.1,
            gamma: 0.9,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.01,
                decay_steps: 20_000,
            },
            steps_per_iteration: 1000,
        }
    }
}

impl QLearningConfig {
    fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyperparameters(m.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in [0, 1]");
        }
        if self.steps_per_iteration == 0 {
            return bad("steps_per_iteration must be positive");
        }
        self.epsilon.validate()
    }
}

pub struct QLearningReport {
    pub policy: QTablePolicy,
    pub curve: TrainingCurve,
    pub episodes: Vec<EpisodeStats>,
}

/// Trains an ε-greedy tabular agent. The first reset uses `seed` and all
/// exploration draws come from one generator seeded by it.
pub fn train_qlearning(
    env: &mut QuantumCloudEnv,
    budget: Budget,
    hp: &QLearningConfig,
    seed: u64,
) -> Result<QLearningReport, AgentError> {
    hp.validate()?;
    match budget {
        Budget::Episodes(0) | Budget::Iterations(0) => {
            return Err(AgentError::InvalidHyperparameters(
                "training budget must be at least 1".into(),
            ))
        }
        _ => {}
    }
    let n = env.n_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = QTablePolicy::new(n);
    let mut rec = CurveRecorder::new(hp.steps_per_iteration);
    let mut total_steps = 0usize;

    'training: loop {
        match budget {
            Budget::Episodes(e) if rec.episodes.len() >= e => break,
            Budget::Iterations(i) if rec.iterations() >= i => break,
            _ => {}
        }
        let first = rec.episodes.is_empty() && total_steps == 0;
        env.reset(first.then_some(seed), None)?;
        let mut key = StateKey::from_raw(&env.raw_observation(), n);
        loop {
            let eps = hp.epsilon.value(total_steps);
            let action = if rng.random::<f64>() < eps {
                rng.random_range(0..n)
            } else {
                policy.greedy(&key)
            };
            let r = env.step(action)?;
            let next_key = StateKey::from_raw(&env.raw_observation(), n);
            let bootstrap = if r.terminated {
                0.0
            } else {
                hp.gamma * policy.max_q(&next_key)
            };
            let q = &mut policy.row(key)[action];
            *q += hp.alpha * (r.reward + bootstrap - *q);
            total_steps += 1;

            let done = r.terminated || r.truncated;
            if done {
                rec.on_episode_end(env.episode_stats()?);
            }
            rec.on_step();
            if matches!(budget, Budget::Iterations(i) if rec.iterations() >= i) {
                break 'training;
            }
            if done {
                break;
            }
            key = next_key;
        }
    }
    let (curve, episodes) = rec.finish();
    Ok(QLearningReport {
        policy,
        curve,
        episodes,
    })
}
