//! Independent reading of the QASM corpus: a line-based tokenizer plus
//! repeated peeling of the earliest runnable gates into layers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

pub fn corpus() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/qasm");
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "qasm"))
        .collect();
    files.sort();
    files
}

pub struct Reference {
    pub qubits: usize,
    pub ops: Vec<Vec<usize>>,
}

pub fn reference(source: &str) -> Reference {
    let mut regs: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut total = 0;
    let mut ops = Vec::new();
    for line in source.lines() {
        let line = line.trim().trim_end_matches(';');
        if line.is_empty()
            || ["OPENQASM", "include", "creg", "barrier"]
                .iter()
                .any(|k| line.starts_with(k))
        {
            continue;
        }
        if let Some(decl) = line.strip_prefix("qreg ") {
            let (name, size) = decl.trim_end_matches(']').split_once('[').unwrap();
            let size: usize = size.parse().unwrap();
            regs.insert(name.to_string(), (total, size));
            total += size;
            continue;
        }
        let qubits_of = |operand: &str| -> Vec<usize> {
            let operand = operand.trim();
            match operand.split_once('[') {
                Some((name, idx)) => {
                    vec![regs[name].0 + idx.trim_end_matches(']').parse::<usize>().unwrap()]
                }
                None => {
                    let (off, size) = regs[operand];
                    (off..off + size).collect()
                }
            }
        };
        if let Some(rest) = line.strip_prefix("measure ") {
            let (q, _) = rest.split_once("->").unwrap();
            for qubit in qubits_of(q) {
                ops.push(vec![qubit]);
            }
            continue;
        }
        // Operands follow the last ')' of a parameter list, or the first space.
        let args = match line.rfind(')') {
            Some(close) => &line[close + 1..],
            None => line.split_once(' ').unwrap().1,
        };
        let operands: Vec<Vec<usize>> = args.split(',').map(qubits_of).collect();
        if operands.len() == 1 {
            for q in &operands[0] {
                ops.push(vec![*q]);
            }
        } else {
            ops.push(operands.into_iter().map(|o| o[0]).collect());
        }
    }
    Reference { qubits: total, ops }
}

/// Number of rounds needed when each round takes every gate none of whose
/// qubits is touched by an earlier gate still waiting or already taken.
pub fn peel_depth(ops: &[Vec<usize>]) -> usize {
    let mut remaining: Vec<&Vec<usize>> = ops.iter().collect();
    let mut layers = 0;
    while !remaining.is_empty() {
        let mut blocked = BTreeSet::new();
        let mut next = Vec::new();
        for op in remaining {
            if op.iter().any(|q| blocked.contains(q)) {
                next.push(op);
            }
            blocked.extend(op.iter().copied());
        }
        layers += 1;
        remaining = next;
    }
    layers
}
