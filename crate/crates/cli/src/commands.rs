use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use log::warn;
use serde_json::json;

use qstar::agents::{
    evaluate, train_dqn, train_qlearning, Budget, EvaluationSummary, StoredPolicy, TrainingCurve,
};
use qstar::serve::{serve_stdio, serve_tcp};
use qstar::sim::{simulate, write_trace_csv};
use qstar::workload::{
    app_tag_from_path, extract_features_file, write_features_csv, TaggedCircuit,
};

use crate::config::{build_policy, RunConfig, TrainerConfig};
use crate::{CliError, Status};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(io_err(path))
}

pub fn generate(cfg: &RunConfig) -> Result<Status, CliError> {
    cfg.validate_inputs()?;
    let out = cfg.output_dir()?;
    let seed = cfg.seed.unwrap_or(0);
    let ds = cfg.generate(seed)?;
    let path = out.join("dataset.csv");
    ds.save_csv(&path)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    println!(
        "wrote {} tasks in {} subsets to {}",
        ds.n_tasks(),
        ds.n_subsets(),
        path.display()
    );
    Ok(Status::Ok)
}

fn qasm_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_err(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "qasm"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Invalid(format!("{} does not exist", p.display())));
        }
    }
    Ok(files)
}

pub fn extract(paths: &[PathBuf], cfg: &RunConfig) -> Result<Status, CliError> {
    let out = cfg.output_dir()?;
    let files = qasm_files(paths)?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    for f in &files {
        match extract_features_file(f) {
            Ok(features) => rows.push((
                f.display().to_string(),
                TaggedCircuit {
                    app_tag: app_tag_from_path(f),
                    features,
                },
            )),
            Err(e) => {
                warn!("skipping {}: {e}", f.display());
                skipped += 1;
            }
        }
    }
    let path = out.join("features.csv");
    let file = File::create(&path).map_err(io_err(&path))?;
    write_features_csv(
        BufWriter::new(file),
        rows.iter().map(|(s, c)| (s.as_str(), c)),
    )
    .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    println!(
        "extracted {} of {} circuits to {}",
        rows.len(),
        files.len(),
        path.display()
    );
    Ok(if skipped > 0 {
        Status::Warnings
    } else {
        Status::Ok
    })
}

pub fn simulate_cmd(cfg: &RunConfig) -> Result<Status, CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.output_dir()?;
    let mut env = cfg.environment(seed)?;
    let spec = cfg.policies.first().map_or("greedy", String::as_str);
    let mut policy = build_policy(spec, seed, &env)?;
    let n = env.config().dataset.n_subsets();
    let rounds: Vec<usize> = match (cfg.round, cfg.rounds) {
        (Some(r), _) if r >= n => {
            return Err(CliError::Invalid(format!(
                "round {r} out of range (dataset has {n})"
            )))
        }
        (Some(r), _) => vec![r],
        (None, Some(k)) => (0..k.min(n)).collect(),
        (None, None) => (0..n).collect(),
    };
    let rep = simulate(&mut env, policy.as_mut(), &rounds)
        .map_err(|e| CliError::Invalid(e.to_string()))?;

    let trace = out.join("trace.csv");
    let file = File::create(&trace).map_err(io_err(&trace))?;
    write_trace_csv(&rep.rows, BufWriter::new(file)).map_err(io_err(&trace))?;
    write_json(
        &out.join("stats.json"),
        &serde_json::to_value(&rep.stats).expect("serializable"),
    )?;
    println!(
        "simulated {} tasks over {} rounds with {}: {} violations, mean completion {:.6} s",
        rep.stats.tasks,
        rep.stats.rounds,
        rep.stats.policy,
        rep.stats.violations,
        rep.stats.mean_completion_s
    );
    Ok(if rep.stats.truncated_rounds > 0 {
        warn!("{} rounds were truncated", rep.stats.truncated_rounds);
        Status::Warnings
    } else {
        Status::Ok
    })
}

fn curve_tail(curve: &TrainingCurve) -> (f64, f64) {
    let rows: Vec<_> = curve
        .rows
        .iter()
        .rev()
        .take(10)
        .filter(|r| r.episodes > 0)
        .collect();
    let n = rows.len().max(1) as f64;
    (
        rows.iter().map(|r| r.ep_len_mean).sum::<f64>() / n,
        rows.iter().map(|r| r.ep_reward_mean).sum::<f64>() / n,
    )
}

pub fn train(cfg: &RunConfig) -> Result<Status, CliError> {
    let seed = cfg.require_seed()?;
    let out = cfg.output_dir()?;
    if cfg.iterations == 0 {
        return Err(CliError::Invalid("iterations must be at least 1".into()));
    }
    let mut env = cfg.environment(seed)?;
    let agent_err = |e: qstar::agents::AgentError| CliError::Invalid(e.to_string());
    let (stored, curve, episodes, file_name, kind) = match &cfg.trainer {
        TrainerConfig::Qlearning(hp) => {
            let rep = train_qlearning(&mut env, Budget::Iterations(cfg.iterations), hp, seed)
                .map_err(agent_err)?;
            (
                StoredPolicy::QTable(rep.policy),
                rep.curve,
                rep.episodes.len(),
                "policy.json",
                "qlearning",
            )
        }
        TrainerConfig::Dqn(dqn) => {
            if !cfg.env.normalize {
                warn!("training a network on raw observations; set env.normalize to true for scaled inputs");
            }
            let rep = train_dqn(&mut env, cfg.iterations, dqn, seed).map_err(agent_err)?;
            (
                StoredPolicy::Dqn(rep.policy),
                rep.curve,
                rep.episodes.len(),
                "policy.bin",
                "dqn",
            )
        }
    };
    let policy_path = out.join(file_name);
    stored
        .save(&policy_path)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", policy_path.display())))?;
    let curve_path = out.join("curve.csv");
    fs::write(&curve_path, curve.to_csv_string()).map_err(io_err(&curve_path))?;
    let (len, reward) = curve_tail(&curve);
    write_json(
        &out.join("train.json"),
        &json!({
            "trainer": kind,
            "seed": seed,
            "iterations": curve.rows.len(),
            "episodes": episodes,
            "final_ep_len_mean": len,
            "final_ep_reward_mean": reward,
            "policy": policy_path.file_name().and_then(|n| n.to_str()),
        }),
    )?;
    println!(
        "trained {kind} for {} iterations ({episodes} episodes): final ep_len_mean {len:.2}, ep_reward_mean {reward:.3}; policy at {}",
        curve.rows.len(),
        policy_path.display()
    );
    Ok(Status::Ok)
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Result<Status, CliError> {
    let seed = cfg.seed.unwrap_or(0);
    let out = cfg.output_dir()?;
    if cfg.episodes == 0 {
        return Err(CliError::Invalid("episodes must be at least 1".into()));
    }
    let mut env = cfg.environment(seed)?;
    let specs: Vec<String> = if cfg.policies.is_empty() {
        vec!["greedy".into(), "random".into()]
    } else {
        cfg.policies.clone()
    };
    let mut policies = specs
        .iter()
        .map(|s| build_policy(s, seed, &env))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results: Vec<(String, EvaluationSummary)> = Vec::new();
    for (spec, policy) in specs.iter().zip(policies.iter_mut()) {
        let summary = evaluate(policy.as_mut(), &mut env, cfg.episodes, seed)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        println!(
            "{spec}: reward {:.4} +/- {:.4}, steps {:.2}, violations {:.2}, completion {:.4} s",
            summary.reward_sum.mean,
            summary.reward_sum.std,
            summary.steps.mean,
            summary.violations.mean,
            summary.mean_completion_s.mean
        );
        results.push((spec.clone(), summary));
    }
    write_json(
        &out.join("evaluation.json"),
        &json!({
            "seed": seed,
            "episodes": cfg.episodes,
            "policies": results
                .iter()
                .map(|(spec, s)| json!({"spec": spec, "summary": s}))
                .collect::<Vec<_>>(),
        }),
    )?;
    Ok(Status::Ok)
}

pub fn serve_env(cfg: &RunConfig, listen: Option<&str>) -> Result<Status, CliError> {
    let env = cfg.environment(cfg.seed.unwrap_or(0))?;
    match listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr)
                .map_err(|e| CliError::Invalid(format!("cannot listen on {addr}: {e}")))?;
            eprintln!(
                "serving on {}",
                listener
                    .local_addr()
                    .map(|a| a.to_string())
                    .unwrap_or_default()
            );
            serve_tcp(listener, || env.clone(), None)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
        }
        None => {
            serve_stdio(env).map_err(|e| CliError::Invalid(e.to_string()))?;
        }
    }
    Ok(Status::Ok)
}
