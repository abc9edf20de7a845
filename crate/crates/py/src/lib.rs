//! Python bindings: node catalog, circuit feature extraction, dataset
//! generation, the placement environment, baselines and training.
//!
//! Structured results (infos, stats, summaries) are returned as plain
//! Python dicts and lists.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use qstar::agents::{
    self, load_policy, oracle_step, select_greedy, train_dqn, train_qlearning, Budget, DqnConfig,
    GreedyPolicy, Policy as _, QLearningConfig, RandomPolicy, RoundRobinPolicy, StoredPolicy,
};
use qstar::cloud::{estimate_execution_time, NodeCatalog, QNode, QTask};
use qstar::engine::SimTime;
use qstar::env::{EnvConfig, EnvOptions, QuantumCloudEnv};
use qstar::workload::{
    extract_features_qasm, generate_dataset, Dataset as CoreDataset, GenerationParams,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<Option<T>> {
    let Some(obj) = obj else { return Ok(None) };
    if obj.is_none() {
        return Ok(None);
    }
    let text: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map(Some).map_err(value_err)
}

#[pyclass(name = "Catalog", module = "qstar_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Catalog {
    inner: NodeCatalog,
}

#[pymethods]
impl Catalog {
    /// The built-in five-node IBM Quantum cluster.
    #[new]
    fn new() -> Self {
        Catalog {
            inner: NodeCatalog::ibm_quantum(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        NodeCatalog::from_json_str(text)
            .map(|inner| Catalog { inner })
            .map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn nodes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.entries())
    }

    fn names(&self) -> Vec<String> {
        self.inner
            .entries()
            .iter()
            .map(|e| e.name.clone())
            .collect()
    }

    /// Seconds to run all shots of a circuit on the named node.
    fn execution_time(&self, node: &str, qubits: u32, depth: u64, shots: u64) -> PyResult<f64> {
        let spec = self
            .inner
            .get(node)
            .ok_or_else(|| value_err(format!("unknown node {node:?}")))?;
        let task = QTask {
            id: 0,
            arrival_at: SimTime::ZERO,
            qubit_count: qubits,
            depth1_layers: depth,
            shots,
            app_tag: String::new(),
        };
        Ok(estimate_execution_time(&task, &QNode::from_spec(0, spec)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "Dataset", module = "qstar_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: Arc<CoreDataset>,
}

#[pymethods]
impl Dataset {
    /// Synthetic workload; `params` overrides generation defaults by key.
    #[staticmethod]
    #[pyo3(signature = (seed, params=None))]
    fn generate(seed: u64, params: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let params: GenerationParams = from_py(params)?.unwrap_or_default();
        let ds = generate_dataset(&params, seed).map_err(value_err)?;
        Ok(Dataset {
            inner: Arc::new(ds),
        })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        let ds = CoreDataset::load_csv(path).map_err(value_err)?;
        Ok(Dataset {
            inner: Arc::new(ds),
        })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(value_err)
    }

    #[getter]
    fn n_subsets(&self) -> usize {
        self.inner.n_subsets()
    }

    #[getter]
    fn n_tasks(&self) -> usize {
        self.inner.n_tasks()
    }

    fn subset<'py>(&self, py: Python<'py>, round: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.get_subset(round).map_err(value_err)?)
    }
}

type StepTuple<'py> = (Vec<f64>, f64, bool, bool, Bound<'py, PyAny>);

#[pyclass(name = "Env", module = "qstar_py")]
struct Env {
    inner: QuantumCloudEnv,
}

#[pymethods]
impl Env {
    /// `options` keys: reward_mode, penalty, max_steps_per_episode,
    /// normalize, static_node_features, backlog_bound_s.
    #[new]
    #[pyo3(signature = (dataset, catalog=None, options=None))]
    fn new(
        dataset: &Dataset,
        catalog: Option<&Catalog>,
        options: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let options: EnvOptions = from_py(options)?.unwrap_or_default();
        let catalog = catalog.map_or_else(NodeCatalog::ibm_quantum, |c| c.inner.clone());
        let config = EnvConfig::new(catalog, dataset.inner.clone()).with_options(options);
        QuantumCloudEnv::new(config)
            .map(|inner| Env { inner })
            .map_err(value_err)
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    #[getter]
    fn round(&self) -> usize {
        self.inner.round()
    }

    #[getter]
    fn now(&self) -> f64 {
        self.inner.now().seconds()
    }

    /// Returns `(obs, info)`.
    #[pyo3(signature = (seed=None, round=None))]
    fn reset<'py>(
        &mut self,
        py: Python<'py>,
        seed: Option<u64>,
        round: Option<usize>,
    ) -> PyResult<(Vec<f64>, Bound<'py, PyAny>)> {
        let obs = self.inner.reset(seed, round).map_err(value_err)?;
        let info = to_py(py, &serde_json::json!({ "round": self.inner.round() }))?;
        Ok((obs.0, info))
    }

    /// Returns `(obs, reward, terminated, truncated, info)`.
    fn step<'py>(&mut self, py: Python<'py>, action: usize) -> PyResult<StepTuple<'py>> {
        let r = self.inner.step(action).map_err(value_err)?;
        Ok((
            r.observation.0,
            r.reward,
            r.terminated,
            r.truncated,
            to_py(py, &r.info)?,
        ))
    }

    fn observe(&self) -> Vec<f64> {
        self.inner.observe().0
    }

    fn greedy_action(&self) -> usize {
        GreedyPolicy.select(&self.inner)
    }

    /// Action with the best immediate reward, found by trying every node.
    fn oracle_action(&self) -> usize {
        oracle_step(&self.inner)
    }

    fn episode_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.stats_so_far())
    }

    fn trace<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.trace())
    }
}

#[pyclass(name = "Policy", module = "qstar_py")]
struct Policy {
    inner: StoredPolicy,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_policy(path)
            .map(|inner| Policy { inner })
            .map_err(value_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(value_err)
    }

    fn act(&mut self, env: &Env) -> PyResult<usize> {
        self.inner.check_compatible(&env.inner).map_err(value_err)?;
        Ok(self.inner.select(&env.inner))
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.name()
    }
}

#[pyfunction]
fn extract_features<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &extract_features_qasm(source).map_err(value_err)?)
}

/// Least-loaded feasible node for a raw observation.
#[pyfunction]
#[pyo3(signature = (obs, catalog=None))]
fn greedy_action(obs: Vec<f64>, catalog: Option<&Catalog>) -> PyResult<usize> {
    let catalog = catalog.map_or_else(NodeCatalog::ibm_quantum, |c| c.inner.clone());
    if obs.len() < 3 + 2 * catalog.len() {
        return Err(value_err(format!(
            "observation of length {} is too short",
            obs.len()
        )));
    }
    Ok(select_greedy(&obs, &catalog))
}

/// Trains a policy; `trainer` is "qlearning" or "dqn" and `config`
/// overrides its hyperparameters by key. Returns `(policy, curve_rows)`.
#[pyfunction]
#[pyo3(signature = (env, iterations, seed, trainer="qlearning", config=None))]
fn train<'py>(
    py: Python<'py>,
    env: &mut Env,
    iterations: usize,
    seed: u64,
    trainer: &str,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(Policy, Bound<'py, PyAny>)> {
    let (inner, curve) = match trainer {
        "qlearning" => {
            let hp: QLearningConfig = from_py(config)?.unwrap_or_default();
            let rep = train_qlearning(&mut env.inner, Budget::Iterations(iterations), &hp, seed)
                .map_err(value_err)?;
            (StoredPolicy::QTable(rep.policy), rep.curve)
        }
        "dqn" => {
            let cfg: DqnConfig = from_py(config)?.unwrap_or_default();
            let rep = train_dqn(&mut env.inner, iterations, &cfg, seed).map_err(value_err)?;
            (StoredPolicy::Dqn(rep.policy), rep.curve)
        }
        other => return Err(value_err(format!("unknown trainer {other:?}"))),
    };
    Ok((Policy { inner }, to_py(py, &curve.rows)?))
}

/// Runs full episodes with a baseline name ("greedy", "random",
/// "round_robin") or a trained `Policy`.
#[pyfunction]
#[pyo3(signature = (env, policy, episodes, seed=0))]
fn evaluate<'py>(
    py: Python<'py>,
    env: &mut Env,
    policy: &Bound<'py, PyAny>,
    episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let summary = if let Ok(mut p) = policy.extract::<PyRefMut<'_, Policy>>() {
        p.inner.check_compatible(&env.inner).map_err(value_err)?;
        agents::evaluate(&mut p.inner, &mut env.inner, episodes, seed)
    } else {
        let name: String = policy.extract()?;
        let mut baseline: Box<dyn agents::Policy> = match name.as_str() {
            "greedy" => Box::new(GreedyPolicy),
            "random" => Box::new(RandomPolicy::new(seed)),
            "round_robin" => Box::new(RoundRobinPolicy::default()),
            other => return Err(value_err(format!("unknown policy {other:?}"))),
        };
        agents::evaluate(baseline.as_mut(), &mut env.inner, episodes, seed)
    }
    .map_err(value_err)?;
    to_py(py, &summary)
}

#[pymodule]
pub fn qstar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Catalog>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Env>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_action, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
