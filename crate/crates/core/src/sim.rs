//! Batch simulation: play a policy over dataset rounds and collect a
//! per-dispatch trace plus aggregate statistics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::agents::{Policy, RunningStat};
use crate::env::{EnvError, QuantumCloudEnv};
use crate::workload::{format_seconds, WorkloadError};

pub const TRACE_HEADER: &str =
    "round,task_id,node,dispatch_s,start_s,wait_s,exec_s,completion_s,success";

/// One dispatch decision. Timing columns are empty for capacity violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub task_id: u64,
    pub node: String,
    pub dispatch_s: f64,
    pub start_s: Option<f64>,
    pub wait_s: Option<f64>,
    pub exec_s: Option<f64>,
    pub completion_s: Option<f64>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub policy: String,
    pub rounds: usize,
    pub tasks: usize,
    pub steps: usize,
    pub successes: usize,
    pub violations: usize,
    pub truncated_rounds: usize,
    pub reward_sum: f64,
    pub total_wait_s: f64,
    pub total_exec_s: f64,
    pub total_completion_s: f64,
    pub mean_completion_s: f64,
    pub std_completion_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<TraceRow>,
    pub stats: SimulationStats,
}

/// Plays `policy` over each round in `rounds`, in order.
pub fn simulate(
    env: &mut QuantumCloudEnv,
    policy: &mut dyn Policy,
    rounds: &[usize],
) -> Result<SimulationReport, EnvError> {
    let names: Vec<String> = env
        .catalog()
        .entries()
        .iter()
        .map(|e| e.name.clone())
        .collect();
    let mut rows = Vec::new();
    let mut completion = RunningStat::default();
    let mut stats = SimulationStats {
        policy: policy.name(),
        rounds: rounds.len(),
        tasks: 0,
        steps: 0,
        successes: 0,
        violations: 0,
        truncated_rounds: 0,
        reward_sum: 0.0,
        total_wait_s: 0.0,
        total_exec_s: 0.0,
        total_completion_s: 0.0,
        mean_completion_s: 0.0,
        std_completion_s: 0.0,
    };

    for &round in rounds {
        env.reset(None, Some(round))?;
        stats.tasks += env.config().dataset.subsets()[round].len();
        loop {
            let r = env.step(policy.select(env))?;
            stats.reward_sum += r.reward;
            if r.terminated || r.truncated {
                stats.truncated_rounds += r.truncated as usize;
                break;
            }
        }
        for rec in env.trace() {
            let t = rec.timing;
            stats.steps += 1;
            match t {
                Some(t) => {
                    stats.successes += 1;
                    stats.total_wait_s += t.wait_s;
                    stats.total_exec_s += t.exec_s;
                    stats.total_completion_s += t.completion_s;
                    completion.push(t.completion_s);
                }
                None => stats.violations += 1,
            }
            rows.push(TraceRow {
                round,
                task_id: rec.task_id,
                node: names[rec.node_id].clone(),
                dispatch_s: rec.dispatch_at.seconds(),
                start_s: t.map(|t| t.start_at.seconds()),
                wait_s: t.map(|t| t.wait_s),
                exec_s: t.map(|t| t.exec_s),
                completion_s: t.map(|t| t.completion_s),
                success: t.is_some(),
            });
        }
    }
    stats.mean_completion_s = completion.mean();
    stats.std_completion_s = completion.std();
    Ok(SimulationReport { rows, stats })
}

fn opt(x: Option<f64>) -> String {
    x.map(format_seconds).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.round,
            r.task_id,
            r.node,
            format_seconds(r.dispatch_s),
            opt(r.start_s),
            opt(r.wait_s),
            opt(r.exec_s),
            opt(r.completion_s),
            r.success
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: Read>(mut input: R) -> Result<Vec<TraceRow>, WorkloadError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(WorkloadError::format(
            1,
            format!("trace header must be `{TRACE_HEADER}`"),
        ));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let bad = |what: &str| WorkloadError::format(line_no, format!("invalid {what}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(WorkloadError::format(
                    line_no,
                    format!("expected 9 fields, found {}", f.len()),
                ));
            }
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let opt_num = |s: &str, what: &str| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s, what).map(Some)
                }
            };
            Ok(TraceRow {
                round: f[0].parse().map_err(|_| bad("round"))?,
                task_id: f[1].parse().map_err(|_| bad("task_id"))?,
                node: f[2].to_string(),
                dispatch_s: num(f[3], "dispatch_s")?,
                start_s: opt_num(f[4], "start_s")?,
                wait_s: opt_num(f[5], "wait_s")?,
                exec_s: opt_num(f[6], "exec_s")?,
                completion_s: opt_num(f[7], "completion_s")?,
                success: f[8].parse().map_err(|_| bad("success"))?,
            })
        })
        .collect()
}
