//! Experience replay: n-step transition assembly and a proportional
//! prioritized buffer backed by a sum tree.

use std::collections::VecDeque;

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    /// Discounted sum of the rewards collected over the n-step window.
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True when the window ended in a terminal state (no bootstrap).
    pub done: bool,
    /// `gamma^k` for the `k` steps the window spans.
    pub discount: f64,
}

/// Turns single environment steps into n-step transitions.
#[derive(Debug, Clone)]
pub struct NStepAccumulator {
    n: usize,
    gamma: f64,
    window: VecDeque<(Vec<f64>, usize, f64)>,
}

impl NStepAccumulator {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1, "n-step window must be at least 1");
        NStepAccumulator {
            n,
            gamma,
            window: VecDeque::with_capacity(n),
        }
    }

    fn emit_front(&mut self, next_obs: &[f64], done: bool) -> Transition {
        let mut ret = 0.0;
        let mut discount = 1.0;
        for (_, _, r) in &self.window {
            ret += discount * r;
            discount *= self.gamma;
        }
        let (obs, action, _) = self.window.pop_front().expect("window not empty");
        Transition {
            obs,
            action,
            reward: ret,
            next_obs: next_obs.to_vec(),
            done,
            discount,
        }
    }

    /// Records one step. `terminated` ends the episode without bootstrap;
    /// `truncated` ends it with bootstrap from `next_obs`. Returns every
    /// transition that became complete.
    pub fn push(
        &mut self,
        obs: Vec<f64>,
        action: usize,
        reward: f64,
        next_obs: &[f64],
        terminated: bool,
        truncated: bool,
    ) -> Vec<Transition> {
        self.window.push_back((obs, action, reward));
        let mut out = Vec::new();
        if terminated || truncated {
            while !self.window.is_empty() {
                out.push(self.emit_front(next_obs, terminated));
            }
        } else if self.window.len() == self.n {
            out.push(self.emit_front(next_obs, false));
        }
        out
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}

/// Binary tree of priorities whose internal nodes hold subtree sums.
#[derive(Debug, Clone)]
struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(capacity: usize) -> Self {
        SumTree {
            capacity,
            nodes: vec![0.0; 2 * capacity],
        }
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    fn get(&self, idx: usize) -> f64 {
        self.nodes[idx + self.capacity]
    }

    fn set(&mut self, idx: usize, priority: f64) {
        let mut i = idx + self.capacity;
        self.nodes[i] = priority;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf index whose cumulative range contains `mass`.
    fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.capacity {
            let left = self.nodes[2 * i];
            if mass < left || self.nodes[2 * i + 1] == 0.0 {
                i *= 2;
            } else {
                mass -= left;
                i = 2 * i + 1;
            }
        }
        i - self.capacity
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub transitions: Vec<Transition>,
    /// Importance-sampling weights, normalized so the largest is 1.
    pub weights: Vec<f64>,
}

/// Ring buffer of transitions. With `alpha = 0` sampling is uniform.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    tree: SumTree,
    max_priority: f64,
    alpha: f64,
    beta: f64,
    epsilon: f64,
    prioritized: bool,
}

impl ReplayBuffer {
    pub fn uniform(capacity: usize) -> Self {
        Self::build(capacity, false, 0.0, 0.0, 0.0)
    }

    pub fn prioritized(capacity: usize, alpha: f64, beta: f64, epsilon: f64) -> Self {
        Self::build(capacity, true, alpha, beta, epsilon)
    }

    fn build(capacity: usize, prioritized: bool, alpha: f64, beta: f64, epsilon: f64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            tree: SumTree::new(capacity.next_power_of_two()),
            max_priority: 1.0,
            alpha,
            beta,
            epsilon,
            prioritized,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Adds a transition with the highest priority seen so far, evicting the
    /// oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        let idx = self.next;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[idx] = t;
        }
        let p = if self.prioritized {
            self.max_priority.powf(self.alpha)
        } else {
            1.0
        };
        self.tree.set(idx, p);
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Batch {
        assert!(!self.items.is_empty(), "cannot sample from an empty buffer");
        let total = self.tree.total();
        let n = self.items.len() as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        // Stratified: one draw per equal slice of the total mass.
        let segment = total / batch_size as f64;
        for k in 0..batch_size {
            let mass = segment * (k as f64 + rng.random::<f64>());
            let idx = self
                .tree
                .find(mass.min(total * (1.0 - 1e-12)))
                .min(self.items.len() - 1);
            let p = self.tree.get(idx) / total;
            weights.push(if self.prioritized {
                (n * p).powf(-self.beta)
            } else {
                1.0
            });
            indices.push(idx);
        }
        let max_w = weights.iter().copied().fold(f64::MIN, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        Batch {
            transitions: indices.iter().map(|&i| self.items[i].clone()).collect(),
            indices,
            weights,
        }
    }

    /// Sets priorities from absolute TD errors.
    pub fn update_priorities(&mut self, indices: &[usize], td_errors: &[f64]) {
        if !self.prioritized {
            return;
        }
        for (&idx, &td) in indices.iter().zip(td_errors) {
            let p = td.abs() + self.epsilon;
            self.max_priority = self.max_priority.max(p);
            self.tree.set(idx, p.powf(self.alpha));
        }
    }
}
