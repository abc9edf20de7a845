//! Quantum nodes, tasks, and the broker that places tasks on nodes.
//!
//! Execution timing is closed-form: each node keeps `next_free_at`, the
//! instant its FIFO queue drains, so a dispatch knows its start and
//! completion times immediately. The corresponding start/complete events are
//! still put on the engine calendar so that a run produces a full trace.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, Event, SimTime};

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("unknown node model `{0}`")]
    UnknownNodeModel(String),
    #[error("invalid node catalog: {0}")]
    InvalidCatalog(String),
    #[error("catalog I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Payloads carried by the simulation calendar.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    TaskArrival { task_id: u64 },
    ExecutionStart { task_id: u64, node_id: usize },
    ExecutionComplete { task_id: u64, node_id: usize },
    Custom(u64),
}

/// One row of a node catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub qubits: u32,
    pub qv: u32,
    pub clops: f64,
    pub d1cps: f64,
}

impl NodeSpec {
    pub fn new(name: &str, qubits: u32, qv: u32, clops: f64, d1cps: f64) -> Self {
        NodeSpec {
            name: name.to_string(),
            qubits,
            qv,
            clops,
            d1cps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeCatalog {
    entries: Vec<NodeSpec>,
}

impl Default for NodeCatalog {
    fn default() -> Self {
        Self::ibm_quantum()
    }
}

impl NodeCatalog {
    /// The five IBM Quantum systems used as the reference cluster, in
    /// cluster order: washington, kolkata, hanoi, perth, lagos.
    pub fn ibm_quantum() -> Self {
        NodeCatalog {
            entries: vec![
                NodeSpec::new("washington", 127, 64, 850.0, 16967.5),
                NodeSpec::new("kolkata", 27, 128, 2000.0, 39900.0),
                NodeSpec::new("hanoi", 27, 64, 2300.0, 45935.0),
                NodeSpec::new("perth", 7, 32, 2900.0, 57905.0),
                NodeSpec::new("lagos", 7, 32, 2700.0, 53865.0),
            ],
        }
    }

    pub fn new(entries: Vec<NodeSpec>) -> Result<Self, CloudError> {
        let catalog = NodeCatalog { entries };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn from_json_str(text: &str) -> Result<Self, CloudError> {
        let entries: Vec<NodeSpec> = serde_json::from_str(text)?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CloudError> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("catalog serializes")
    }

    fn validate(&self) -> Result<(), CloudError> {
        if self.entries.is_empty() {
            return Err(CloudError::InvalidCatalog("catalog is empty".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(CloudError::InvalidCatalog(format!(
                    "duplicate node name `{}`",
                    e.name
                )));
            }
            if e.qubits == 0 || e.qv == 0 {
                return Err(CloudError::InvalidCatalog(format!(
                    "`{}`: qubits and qv must be positive",
                    e.name
                )));
            }
            if !(e.clops > 0.0 && e.clops.is_finite() && e.d1cps > 0.0 && e.d1cps.is_finite()) {
                return Err(CloudError::InvalidCatalog(format!(
                    "`{}`: clops and d1cps must be positive",
                    e.name
                )));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[NodeSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&NodeSpec> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn max_qubits(&self) -> u32 {
        self.entries.iter().map(|e| e.qubits).max().unwrap_or(0)
    }

    pub fn create_node(&self, id: usize, name: &str) -> Result<QNode, CloudError> {
        let spec = self
            .get(name)
            .ok_or_else(|| CloudError::UnknownNodeModel(name.to_string()))?;
        Ok(QNode::from_spec(id, spec))
    }

    /// Fresh idle nodes for every catalog row, ids in catalog order.
    pub fn instantiate(&self) -> Vec<QNode> {
        self.entries
            .iter()
            .enumerate()
            .map(|(id, spec)| QNode::from_spec(id, spec))
            .collect()
    }
}

/// Builds a node from the built-in IBM Quantum catalog.
pub fn create_ibmq_node(name: &str) -> Result<QNode, CloudError> {
    let catalog = NodeCatalog::ibm_quantum();
    let id = catalog
        .entries
        .iter()
        .position(|e| e.name == name)
        .ok_or_else(|| CloudError::UnknownNodeModel(name.to_string()))?;
    catalog.create_node(id, name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNode {
    pub id: usize,
    pub name: String,
    pub qubit_count: u32,
    pub quantum_volume: u32,
    pub clops: f64,
    pub d1cps: f64,
    pub next_free_at: SimTime,
    /// Tasks submitted and not yet completed, in submission order.
    pub fifo_queue: VecDeque<u64>,
}

impl QNode {
    pub fn from_spec(id: usize, spec: &NodeSpec) -> Self {
        QNode {
            id,
            name: spec.name.clone(),
            qubit_count: spec.qubits,
            quantum_volume: spec.qv,
            clops: spec.clops,
            d1cps: spec.d1cps,
            next_free_at: SimTime::ZERO,
            fifo_queue: VecDeque::new(),
        }
    }

    pub fn can_host(&self, task: &QTask) -> bool {
        task.qubit_count <= self.qubit_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTask {
    pub id: u64,
    pub arrival_at: SimTime,
    pub qubit_count: u32,
    pub depth1_layers: u64,
    pub shots: u64,
    pub app_tag: String,
}

/// Seconds needed to run all shots of `task` on `node`:
/// `depth1_layers * shots / d1cps`.
pub fn estimate_execution_time(task: &QTask, node: &QNode) -> f64 {
    execution_time(task.depth1_layers, task.shots, node.d1cps)
}

pub(crate) fn execution_time(depth1_layers: u64, shots: u64, d1cps: f64) -> f64 {
    (depth1_layers as f64 * shots as f64) / d1cps
}

/// Remaining queued work on `node` as seen at `at`.
pub fn backlog(node: &QNode, at: SimTime) -> f64 {
    (node.next_free_at.seconds() - at.seconds()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTiming {
    pub start_at: SimTime,
    pub wait_s: f64,
    pub exec_s: f64,
    pub completion_s: f64,
}

/// Outcome of one dispatch. `timing` is `None` for a capacity violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub task_id: u64,
    pub node_id: usize,
    pub dispatch_at: SimTime,
    pub timing: Option<ExecutionTiming>,
}

impl ExecutionRecord {
    pub fn success(&self) -> bool {
        self.timing.is_some()
    }

    pub fn completion_s(&self) -> Option<f64> {
        self.timing.map(|t| t.completion_s)
    }
}

/// Dispatches `task` to `node` at `at`.
///
/// A task needing more qubits than the node has yields a failed record and
/// leaves the node untouched. Otherwise the task joins the node's FIFO queue
/// and its start/complete events go on the calendar.
///
/// Panics if `at` precedes the task's arrival or the engine clock.
pub fn submit(
    task: &QTask,
    node: &mut QNode,
    at: SimTime,
    engine: &mut Engine<SimEvent>,
) -> ExecutionRecord {
    assert!(
        at >= task.arrival_at,
        "task {} dispatched at {at} before its arrival at {}",
        task.id,
        task.arrival_at
    );
    let mut record = ExecutionRecord {
        task_id: task.id,
        node_id: node.id,
        dispatch_at: at,
        timing: None,
    };
    if !node.can_host(task) {
        return record;
    }

    let start_at = SimTime::new(at.seconds().max(node.next_free_at.seconds()));
    let exec_s = estimate_execution_time(task, node);
    let end_at = SimTime::new(start_at.seconds() + exec_s);
    node.next_free_at = end_at;
    node.fifo_queue.push_back(task.id);

    engine
        .schedule(
            start_at,
            SimEvent::ExecutionStart {
                task_id: task.id,
                node_id: node.id,
            },
        )
        .expect("start is never before the dispatch instant");
    engine
        .schedule(
            end_at,
            SimEvent::ExecutionComplete {
                task_id: task.id,
                node_id: node.id,
            },
        )
        .expect("completion follows start");

    let wait_s = start_at.seconds() - at.seconds();
    record.timing = Some(ExecutionTiming {
        start_at,
        wait_s,
        exec_s,
        completion_s: wait_s + exec_s,
    });
    record
}

/// Observed lifecycle of one task on the calendar.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObservedExecution {
    pub started_at: Option<SimTime>,
    pub completed_at: Option<SimTime>,
}

/// Owns the cluster and routes tasks to nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Broker {
    nodes: Vec<QNode>,
    completed: u64,
    observed: BTreeMap<u64, ObservedExecution>,
}

impl Broker {
    pub fn new(nodes: Vec<QNode>) -> Self {
        Broker {
            nodes,
            completed: 0,
            observed: BTreeMap::new(),
        }
    }

    pub fn from_catalog(catalog: &NodeCatalog) -> Self {
        Self::new(catalog.instantiate())
    }

    pub fn nodes(&self) -> &[QNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&QNode> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    /// Start and completion instants as fired by the calendar.
    pub fn observed(&self, task_id: u64) -> Option<&ObservedExecution> {
        self.observed.get(&task_id)
    }

    /// Panics if `node_id` is out of range.
    pub fn dispatch(
        &mut self,
        task: &QTask,
        node_id: usize,
        at: SimTime,
        engine: &mut Engine<SimEvent>,
    ) -> ExecutionRecord {
        submit(task, &mut self.nodes[node_id], at, engine)
    }

    /// Applies a fired calendar event to the cluster state.
    pub fn on_event(&mut self, event: &Event<SimEvent>) {
        match event.payload {
            SimEvent::ExecutionStart { task_id, .. } => {
                self.observed.entry(task_id).or_default().started_at = Some(event.fire_at);
            }
            SimEvent::ExecutionComplete { task_id, node_id } => {
                let node = &mut self.nodes[node_id];
                let head = node.fifo_queue.pop_front();
                debug_assert_eq!(
                    head,
                    Some(task_id),
                    "node {node_id} completed out of FIFO order"
                );
                self.completed += 1;
                self.observed.entry(task_id).or_default().completed_at = Some(event.fire_at);
            }
            _ => {}
        }
    }
}
