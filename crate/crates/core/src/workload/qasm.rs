//! Circuit feature extraction for flattened OpenQASM 2.0 programs.
//!
//! Supported statements: the `OPENQASM 2.0` header, `include`, `qreg`,
//! `creg`, gate applications (with optional parameter lists), `measure`,
//! `reset` and `barrier`. User-defined `gate`/`opaque` bodies and classical
//! `if` are rejected. A whole register used as an operand broadcasts the
//! statement over its elements.
//!
//! Depth is ASAP layering: a gate lands one layer above the deepest of the
//! qubits it touches, and then occupies that layer on all of them. Measure
//! and reset count as gates, barrier does not.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QasmError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported OpenQASM version `{0}` (only 2.0 is accepted)")]
    UnsupportedVersion(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CircuitFeatures {
    pub qubit_count: u32,
    pub depth1_layers: u64,
    pub gate_count: u64,
    pub gate_histogram: BTreeMap<String, u64>,
}

struct Statement {
    line: usize,
    text: String,
}

fn err(line: usize, reason: impl Into<String>) -> QasmError {
    QasmError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Splits the source into `;`-terminated statements, dropping `//` comments.
fn statements(source: &str) -> Result<Vec<Statement>, QasmError> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start_line = 1;
    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split("//").next().unwrap_or("");
        for ch in line.chars() {
            if current.trim().is_empty() {
                start_line = line_no;
            }
            match ch {
                ';' => {
                    out.push(Statement {
                        line: start_line,
                        text: current.trim().to_string(),
                    });
                    current.clear();
                }
                '{' | '}' => return Err(err(line_no, "gate bodies and blocks are not supported")),
                _ => current.push(ch),
            }
        }
        current.push(' ');
    }
    if !current.trim().is_empty() {
        return Err(err(
            start_line,
            format!("missing `;` after `{}`", current.trim()),
        ));
    }
    Ok(out)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `name[size]` as used in register declarations.
fn parse_indexed(text: &str, line: usize) -> Result<(String, Option<u32>), QasmError> {
    let text = text.trim();
    match text.find('[') {
        None => {
            if !is_identifier(text) {
                return Err(err(line, format!("invalid identifier `{text}`")));
            }
            Ok((text.to_string(), None))
        }
        Some(open) => {
            let name = text[..open].trim();
            let rest = text[open + 1..].trim();
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("unterminated index in `{text}`")))?;
            if !is_identifier(name) {
                return Err(err(line, format!("invalid identifier `{name}`")));
            }
            let idx = inner
                .trim()
                .parse::<u32>()
                .map_err(|_| err(line, format!("invalid index `{inner}`")))?;
            Ok((name.to_string(), Some(idx)))
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Register {
    offset: u32,
    size: u32,
}

#[derive(Default)]
struct Registers {
    quantum: BTreeMap<String, Register>,
    classical: BTreeMap<String, u32>,
    total_qubits: u32,
}

/// A resolved operand: either one global qubit or a whole register.
enum Operand {
    Single(u32),
    Whole(Register),
}

impl Registers {
    fn declared(&self, name: &str) -> bool {
        self.quantum.contains_key(name) || self.classical.contains_key(name)
    }

    fn qubit_operand(&self, text: &str, line: usize) -> Result<Operand, QasmError> {
        let (name, idx) = parse_indexed(text, line)?;
        let reg = *self
            .quantum
            .get(&name)
            .ok_or_else(|| err(line, format!("unknown quantum register `{name}`")))?;
        match idx {
            None => Ok(Operand::Whole(reg)),
            Some(i) if i < reg.size => Ok(Operand::Single(reg.offset + i)),
            Some(i) => Err(err(
                line,
                format!("index {i} out of range for `{name}[{}]`", reg.size),
            )),
        }
    }

    fn classical_operand(&self, text: &str, line: usize) -> Result<Option<u32>, QasmError> {
        let (name, idx) = parse_indexed(text, line)?;
        let size = *self
            .classical
            .get(&name)
            .ok_or_else(|| err(line, format!("unknown classical register `{name}`")))?;
        match idx {
            None => Ok(Some(size)),
            Some(i) if i < size => Ok(None),
            Some(i) => Err(err(
                line,
                format!("index {i} out of range for `{name}[{size}]`"),
            )),
        }
    }
}

/// Expands operands into per-application qubit lists, broadcasting whole
/// registers element-wise.
fn expand(operands: &[Operand], line: usize) -> Result<Vec<Vec<u32>>, QasmError> {
    let mut width = None;
    for op in operands {
        if let Operand::Whole(reg) = op {
            match width {
                None => width = Some(reg.size),
                Some(w) if w == reg.size => {}
                Some(_) => return Err(err(line, "broadcast over registers of different sizes")),
            }
        }
    }
    let reps = width.unwrap_or(1);
    let mut apps = Vec::with_capacity(reps as usize);
    for k in 0..reps {
        let qubits: Vec<u32> = operands
            .iter()
            .map(|op| match op {
                Operand::Single(q) => *q,
                Operand::Whole(reg) => reg.offset + k,
            })
            .collect();
        let mut sorted = qubits.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(err(line, "the same qubit appears twice in one operation"));
        }
        apps.push(qubits);
    }
    Ok(apps)
}

fn split_operands(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).collect()
}

/// Splits `name(params) args` into its mnemonic and argument text.
fn split_gate_call(text: &str, line: usize) -> Result<(String, &str), QasmError> {
    let name_end = text
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(text.len());
    let name = &text[..name_end];
    if !is_identifier(name) {
        return Err(err(line, format!("expected a gate name in `{text}`")));
    }
    let mut rest = text[name_end..].trim_start();
    if rest.starts_with('(') {
        let mut depth = 0usize;
        let mut close = None;
        for (i, c) in rest.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        let close =
            close.ok_or_else(|| err(line, format!("unbalanced parameter list in `{text}`")))?;
        rest = rest[close + 1..].trim_start();
    }
    if rest.is_empty() {
        return Err(err(line, format!("gate `{name}` has no operands")));
    }
    Ok((name.to_ascii_lowercase(), rest))
}

struct Layering {
    layers: Vec<u64>,
    depth: u64,
    gate_count: u64,
    histogram: BTreeMap<String, u64>,
}

impl Layering {
    fn apply(&mut self, name: &str, qubits: &[u32]) {
        let layer = 1 + qubits
            .iter()
            .map(|&q| self.layers[q as usize])
            .max()
            .unwrap_or(0);
        for &q in qubits {
            self.layers[q as usize] = layer;
        }
        self.depth = self.depth.max(layer);
        self.gate_count += 1;
        *self.histogram.entry(name.to_string()).or_insert(0) += 1;
    }
}

pub fn extract_features_qasm(source: &str) -> Result<CircuitFeatures, QasmError> {
    let stmts = statements(source)?;
    let mut regs = Registers::default();
    let mut layering = Layering {
        layers: Vec::new(),
        depth: 0,
        gate_count: 0,
        histogram: BTreeMap::new(),
    };

    for (i, stmt) in stmts.iter().enumerate() {
        let line = stmt.line;
        let text = stmt.text.as_str();
        if text.is_empty() {
            continue;
        }
        let keyword = text
            .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .next()
            .unwrap_or("");
        let body = text[keyword.len()..].trim();
        match keyword {
            "OPENQASM" => {
                if i != 0 {
                    return Err(err(line, "OPENQASM header must be the first statement"));
                }
                if body != "2.0" && body != "2" {
                    return Err(QasmError::UnsupportedVersion(body.to_string()));
                }
            }
            "include" => {
                if !(body.len() >= 2 && body.starts_with('"') && body.ends_with('"')) {
                    return Err(err(line, "include expects a quoted file name"));
                }
            }
            "qreg" | "creg" => {
                let (name, size) = parse_indexed(body, line)?;
                let size = match size {
                    Some(n) if n > 0 => n,
                    _ => {
                        return Err(err(
                            line,
                            format!("register `{name}` needs a positive size"),
                        ))
                    }
                };
                if regs.declared(&name) {
                    return Err(err(line, format!("register `{name}` declared twice")));
                }
                if keyword == "qreg" {
                    regs.quantum.insert(
                        name,
                        Register {
                            offset: regs.total_qubits,
                            size,
                        },
                    );
                    regs.total_qubits += size;
                    layering.layers.resize(regs.total_qubits as usize, 0);
                } else {
                    regs.classical.insert(name, size);
                }
            }
            "gate" | "opaque" | "if" => {
                return Err(err(
                    line,
                    format!("`{keyword}` statements are not supported"),
                ));
            }
            "barrier" => {
                let operands = split_operands(body)
                    .into_iter()
                    .map(|o| regs.qubit_operand(o, line))
                    .collect::<Result<Vec<_>, _>>()?;
                if operands.is_empty() {
                    return Err(err(line, "barrier without operands"));
                }
            }
            "measure" => {
                let (q, c) = body
                    .split_once("->")
                    .ok_or_else(|| err(line, "measure expects `qubit -> bit`"))?;
                let qop = regs.qubit_operand(q, line)?;
                let csize = regs.classical_operand(c, line)?;
                match (&qop, csize) {
                    (Operand::Whole(reg), Some(n)) if reg.size != n => {
                        return Err(err(line, "measure between registers of different sizes"))
                    }
                    (Operand::Single(_), Some(_)) | (Operand::Whole(_), None) => {
                        return Err(err(line, "measure mixes a register with a single bit"))
                    }
                    _ => {}
                }
                for qubits in expand(&[qop], line)? {
                    layering.apply("measure", &qubits);
                }
            }
            _ => {
                let (name, args) = split_gate_call(text, line)?;
                let operands = split_operands(args)
                    .into_iter()
                    .map(|o| regs.qubit_operand(o, line))
                    .collect::<Result<Vec<_>, _>>()?;
                for qubits in expand(&operands, line)? {
                    layering.apply(&name, &qubits);
                }
            }
        }
    }

    if regs.total_qubits == 0 {
        return Err(err(
            stmts.last().map_or(1, |s| s.line),
            "no quantum register declared",
        ));
    }
    Ok(CircuitFeatures {
        qubit_count: regs.total_qubits,
        depth1_layers: layering.depth,
        gate_count: layering.gate_count,
        gate_histogram: layering.histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_of_three() {
        let f = extract_features_qasm("qreg q[3]; h q[0]; cx q[0],q[1]; cx q[1],q[2];").unwrap();
        assert_eq!((f.qubit_count, f.gate_count, f.depth1_layers), (3, 3, 3));
        assert_eq!(f.gate_histogram["cx"], 2);
    }

    #[test]
    fn empty_circuit() {
        let f = extract_features_qasm("qreg q[5];").unwrap();
        assert_eq!((f.qubit_count, f.gate_count, f.depth1_layers), (5, 0, 0));
    }

    #[test]
    fn parallel_hadamards() {
        let f = extract_features_qasm("qreg q[2]; h q[0]; h q[1]; cx q[0],q[1];").unwrap();
        assert_eq!(f.depth1_layers, 2);
    }

    #[test]
    fn full_program_with_header_measure_and_barrier() {
        let src = r#"// Benchmark was created by MQT Bench
OPENQASM 2.0;
include "qelib1.inc";
qreg q[3];
creg meas[3];
h q[0];
cx q[0],q[1];
cx q[1],q[2];
barrier q[0],q[1],q[2];
measure q[0] -> meas[0];
measure q[1] -> meas[1];
measure q[2] -> meas[2];
"#;
        let f = extract_features_qasm(src).unwrap();
        assert_eq!(f.gate_count, 6);
        assert_eq!(f.depth1_layers, 4);
        assert_eq!(f.gate_histogram["measure"], 3);
        assert!(!f.gate_histogram.contains_key("barrier"));
    }

    #[test]
    fn parameters_and_case() {
        let src = "OPENQASM 2.0; qreg q[2]; U(pi/2, 0, (pi)) q[0]; rz(-pi/4) q[1]; CX q[0], q[1];";
        let f = extract_features_qasm(src).unwrap();
        assert_eq!(f.gate_histogram["u"], 1);
        assert_eq!(f.gate_histogram["cx"], 1);
        assert_eq!(f.depth1_layers, 2);
    }

    #[test]
    fn register_broadcast() {
        let src = "qreg a[3]; qreg b[3]; creg c[3]; h a; cx a,b; measure b -> c;";
        let f = extract_features_qasm(src).unwrap();
        assert_eq!(f.qubit_count, 6);
        assert_eq!(f.gate_count, 9);
        assert_eq!(f.depth1_layers, 3);
    }

    #[test]
    fn multi_line_statement_reports_first_line() {
        let e = extract_features_qasm("qreg q[2];\ncx q[0],\n q[5];").unwrap_err();
        assert!(matches!(e, QasmError::Parse { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn rejects_other_versions() {
        assert_eq!(
            extract_features_qasm("OPENQASM 3.0; qubit[2] q;").unwrap_err(),
            QasmError::UnsupportedVersion("3.0".into())
        );
    }

    #[test]
    fn parse_errors() {
        let cases = [
            "qreg q[2]; h q[0]",
            "qreg q[2]; foo r[0];",
            "qreg q[2]; cx q[0],q[0];",
            "qreg q[2]; gate g a { h a; }",
            "qreg q[2]; creg c[2]; if(c==1) x q[0];",
            "qreg q[0];",
            "qreg q[2]; h q[2];",
            "qreg q[2]; h;",
            "creg c[2];",
            "qreg q[2]; qreg q[3];",
            "qreg q[2]; creg c[1]; measure q -> c;",
        ];
        for src in cases {
            assert!(
                matches!(extract_features_qasm(src), Err(QasmError::Parse { .. })),
                "{src}"
            );
        }
    }
}
