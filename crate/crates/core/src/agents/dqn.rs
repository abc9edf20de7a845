//! Deep Q-network with n-step returns, optional proportional prioritized
//! replay and a periodically synchronized target network.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Mlp};
use super::replay::{NStepAccumulator, ReplayBuffer};
use super::{AgentError, CurveRecorder, Policy, TrainingCurve};
use crate::env::{EpisodeStats, QuantumCloudEnv};

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: usize,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule {
            start: eps,
            end: eps,
            decay_steps: 0,
        }
    }

    pub fn value(&self, step: usize) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub(crate) fn validate(&self) -> Result<(), AgentError> {
        let ok = |e: f64| (0.0..=1.0).contains(&e);
        if ok(self.start) && ok(self.end) {
            Ok(())
        } else {
            Err(AgentError::InvalidHyperparameters(
                "epsilon values must lie in [0, 1]".into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub n_step: usize,
    pub prioritized: bool,
    pub pr_alpha: f64,
    pub pr_beta: f64,
    pub pr_epsilon: f64,
    pub hidden_layers: Vec<usize>,
    pub gamma: f64,
    pub epsilon_schedule: EpsilonSchedule,
    pub target_sync_every: usize,
    pub batch_size: usize,
    pub learning_starts: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    pub steps_per_iteration: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Distributional atoms are not supported; any value above 1 is ignored.
    pub num_atoms: Option<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            learning_rate: 0.01,
            replay_capacity: 60_000,
            n_step: 5,
            prioritized: true,
            pr_alpha: 0.5,
            pr_beta: 0.5,
            pr_epsilon: 3e-6,
            hidden_layers: vec![64, 64],
            gamma: 0.99,
            epsilon_schedule: EpsilonSchedule {
                start: 1.0,
                end: 0.02,
                decay_steps: 10_000,
            },
            target_sync_every: 500,
            batch_size: 32,
            learning_starts: 1000,
            train_every: 1,
            steps_per_iteration: 1000,
            grad_clip: Some(40.0),
            num_atoms: None,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::InvalidHyperparameters(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("replay_capacity must be at least batch_size, which must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if self.n_step == 0
            || self.target_sync_every == 0
            || self.train_every == 0
            || self.steps_per_iteration == 0
        {
            return bad(
                "n_step, target_sync_every, train_every and steps_per_iteration must be positive",
            );
        }
        if self.hidden_layers.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if self.prioritized
            && !(self.pr_alpha >= 0.0 && self.pr_beta >= 0.0 && self.pr_epsilon > 0.0)
        {
            return bad("prioritized replay needs alpha, beta >= 0 and epsilon > 0");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        self.epsilon_schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnPolicy {
    pub net: Mlp,
    /// Whether the network was trained on normalized observations.
    pub normalize: bool,
}

impl DqnPolicy {
    pub fn q_values(&self, obs: &[f64]) -> Vec<f64> {
        self.net.forward(obs)
    }

    pub fn greedy(&self, obs: &[f64]) -> usize {
        let q = self.q_values(obs);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        best
    }
}

impl Policy for DqnPolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        self.greedy(&env.observe())
    }

    fn name(&self) -> String {
        "dqn".into()
    }
}

pub struct DqnReport {
    pub policy: DqnPolicy,
    pub curve: TrainingCurve,
    pub episodes: Vec<EpisodeStats>,
}

struct Learner {
    online: Mlp,
    target: Mlp,
    opt: Adam,
    buffer: ReplayBuffer,
}

impl Learner {
    fn train_batch(&mut self, cfg: &DqnConfig, rng: &mut ChaCha8Rng) {
        let batch = self.buffer.sample(cfg.batch_size, rng);
        let targets: Vec<f64> = batch
            .transitions
            .iter()
            .map(|t| {
                if t.done {
                    t.reward
                } else {
                    let next = self.target.forward(&t.next_obs);
                    t.reward + t.discount * next.into_iter().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let inputs: Vec<&[f64]> = batch.transitions.iter().map(|t| t.obs.as_slice()).collect();
        let actions: Vec<usize> = batch.transitions.iter().map(|t| t.action).collect();
        let (mut grads, td) = self
            .online
            .q_gradients(&inputs, &actions, &targets, &batch.weights);
        if let Some(clip) = cfg.grad_clip {
            let norm = grads.norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        self.opt.step(&mut self.online, &grads);
        self.buffer.update_priorities(&batch.indices, &td);
    }
}

/// Trains for `iterations` blocks of `cfg.steps_per_iteration` environment
/// steps. The network sees `env.observe()`, so normalization follows the
/// environment's configuration.
pub fn train_dqn(
    env: &mut QuantumCloudEnv,
    iterations: usize,
    cfg: &DqnConfig,
    seed: u64,
) -> Result<DqnReport, AgentError> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(AgentError::InvalidHyperparameters(
            "iterations must be at least 1".into(),
        ));
    }
    if let Some(atoms) = cfg.num_atoms.filter(|&a| a > 1) {
        warn!("num_atoms = {atoms} requested; distributional DQN is not implemented, using a scalar Q head");
    }

    let n_actions = env.n_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![env.obs_dim()];
    sizes.extend(&cfg.hidden_layers);
    sizes.push(n_actions);
    let online = Mlp::new(&sizes, &mut rng);
    let mut learner = Learner {
        target: online.clone(),
        opt: Adam::new(&online, cfg.learning_rate),
        online,
        buffer: if cfg.prioritized {
            ReplayBuffer::prioritized(
                cfg.replay_capacity,
                cfg.pr_alpha,
                cfg.pr_beta,
                cfg.pr_epsilon,
            )
        } else {
            ReplayBuffer::uniform(cfg.replay_capacity)
        },
    };
    let mut nstep = NStepAccumulator::new(cfg.n_step, cfg.gamma);
    let mut rec = CurveRecorder::new(cfg.steps_per_iteration);
    let mut total_steps = 0usize;

    'training: loop {
        let first = total_steps == 0;
        let mut obs = env.reset(first.then_some(seed), None)?.0;
        nstep.clear();
        loop {
            let eps = cfg.epsilon_schedule.value(total_steps);
            let action = if rng.random::<f64>() < eps {
                rng.random_range(0..n_actions)
            } else {
                let q = learner.online.forward(&obs);
                let mut best = 0;
                for (i, &v) in q.iter().enumerate() {
                    if v > q[best] {
                        best = i;
                    }
                }
                best
            };
            let r = env.step(action)?;
            let next_obs = r.observation.0;
            for t in nstep.push(obs, action, r.reward, &next_obs, r.terminated, r.truncated) {
                learner.buffer.push(t);
            }
            total_steps += 1;

            if total_steps >= cfg.learning_starts
                && total_steps.is_multiple_of(cfg.train_every)
                && learner.buffer.len() >= cfg.batch_size
            {
                learner.train_batch(cfg, &mut rng);
            }
            if total_steps.is_multiple_of(cfg.target_sync_every) {
                learner.target = learner.online.clone();
            }

            let done = r.terminated || r.truncated;
            if done {
                rec.on_episode_end(env.episode_stats()?);
            }
            rec.on_step();
            if rec.iterations() >= iterations {
                break 'training;
            }
            if done {
                break;
            }
            obs = next_obs;
        }
    }
    let (curve, episodes) = rec.finish();
    Ok(DqnReport {
        policy: DqnPolicy {
            net: learner.online,
            normalize: env.config().options.normalize,
        },
        curve,
        episodes,
    })
}
