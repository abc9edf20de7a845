//! On-disk policy formats.
//!
//! Q-tables are JSON documents tagged `"format": "qstar-qtable"`. Networks are
//! binary: the magic `QSTARDQN`, a little-endian `u32` header length, a JSON
//! header, then every parameter as a little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dqn::DqnPolicy;
use super::nn::Mlp;
use super::qlearning::{QTablePolicy, StateKey};
use super::Policy;
use crate::env::QuantumCloudEnv;

pub const POLICY_VERSION: u32 = 1;
const QTABLE_FORMAT: &str = "qstar-qtable";
const DQN_FORMAT: &str = "qstar-dqn";
const DQN_MAGIC: &[u8; 8] = b"QSTARDQN";

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed policy file: {0}")]
    Malformed(String),
    #[error("unsupported policy version {found} (expected {POLICY_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("policy expects {expected} {what} but the environment has {found}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct QTableEntry {
    feasible: u32,
    order: Vec<u8>,
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct QTableDoc {
    format: String,
    version: u32,
    n_actions: usize,
    entries: Vec<QTableEntry>,
}

#[derive(Serialize, Deserialize)]
struct DqnHeader {
    format: String,
    version: u32,
    layers: Vec<usize>,
    normalize: bool,
    n_params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoredPolicy {
    QTable(QTablePolicy),
    Dqn(DqnPolicy),
}

impl StoredPolicy {
    pub fn n_actions(&self) -> usize {
        match self {
            StoredPolicy::QTable(p) => p.n_actions,
            StoredPolicy::Dqn(p) => *p.net.sizes().last().expect("non-empty network"),
        }
    }

    /// Checks the policy fits the environment's action and observation sizes.
    pub fn check_compatible(&self, env: &QuantumCloudEnv) -> Result<(), PolicyFileError> {
        if self.n_actions() != env.n_actions() {
            return Err(PolicyFileError::Mismatch {
                what: "actions",
                expected: self.n_actions(),
                found: env.n_actions(),
            });
        }
        if let StoredPolicy::Dqn(p) = self {
            let input = p.net.sizes()[0];
            if input != env.obs_dim() {
                return Err(PolicyFileError::Mismatch {
                    what: "observation features",
                    expected: input,
                    found: env.obs_dim(),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            StoredPolicy::QTable(p) => {
                let doc = QTableDoc {
                    format: QTABLE_FORMAT.into(),
                    version: POLICY_VERSION,
                    n_actions: p.n_actions,
                    entries: p
                        .table
                        .iter()
                        .map(|(k, q)| QTableEntry {
                            feasible: k.feasible,
                            order: k.order.clone(),
                            q: q.clone(),
                        })
                        .collect(),
                };
                let mut out = serde_json::to_vec_pretty(&doc).expect("serializable");
                out.push(b'\n');
                out
            }
            StoredPolicy::Dqn(p) => {
                let params = p.net.params();
                let header = serde_json::to_vec(&DqnHeader {
                    format: DQN_FORMAT.into(),
                    version: POLICY_VERSION,
                    layers: p.net.sizes(),
                    normalize: p.normalize,
                    n_params: params.len(),
                })
                .expect("serializable");
                let mut out = Vec::with_capacity(12 + header.len() + 8 * params.len());
                out.extend_from_slice(DQN_MAGIC);
                out.extend_from_slice(&(header.len() as u32).to_le_bytes());
                out.extend_from_slice(&header);
                for w in params {
                    out.extend_from_slice(&w.to_le_bytes());
                }
                out
            }
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyFileError> {
        let bad = |m: &str| PolicyFileError::Malformed(m.into());
        if let Some(rest) = bytes.strip_prefix(DQN_MAGIC) {
            let len = rest
                .get(..4)
                .ok_or_else(|| bad("truncated header length"))?;
            let len = u32::from_le_bytes(len.try_into().expect("4 bytes")) as usize;
            let header = rest
                .get(4..4 + len)
                .ok_or_else(|| bad("truncated header"))?;
            let header: DqnHeader =
                serde_json::from_slice(header).map_err(|e| bad(&e.to_string()))?;
            if header.format != DQN_FORMAT {
                return Err(bad("unknown network format"));
            }
            if header.version != POLICY_VERSION {
                return Err(PolicyFileError::UnsupportedVersion {
                    found: header.version,
                });
            }
            let body = &rest[4 + len..];
            if body.len() != 8 * header.n_params {
                return Err(bad("weight payload length does not match header"));
            }
            let params: Vec<f64> = body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let net = Mlp::from_params(&header.layers, &params)
                .ok_or_else(|| bad("layer sizes do not match weights"))?;
            return Ok(StoredPolicy::Dqn(DqnPolicy {
                net,
                normalize: header.normalize,
            }));
        }

        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| bad(&e.to_string()))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(QTABLE_FORMAT) {
            return Err(bad("unrecognized policy file"));
        }
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| bad("missing version"))?;
        if version != POLICY_VERSION as u64 {
            return Err(PolicyFileError::UnsupportedVersion {
                found: version as u32,
            });
        }
        let doc: QTableDoc = serde_json::from_value(value).map_err(|e| bad(&e.to_string()))?;
        let mut policy = QTablePolicy::new(doc.n_actions);
        for e in doc.entries {
            if e.q.len() != doc.n_actions || e.order.len() != doc.n_actions {
                return Err(bad("q-table row width does not match n_actions"));
            }
            policy.table.insert(
                StateKey {
                    feasible: e.feasible,
                    order: e.order,
                },
                e.q,
            );
        }
        Ok(StoredPolicy::QTable(policy))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyFileError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

impl Policy for StoredPolicy {
    fn select(&mut self, env: &QuantumCloudEnv) -> usize {
        match self {
            StoredPolicy::QTable(p) => p.select(env),
            StoredPolicy::Dqn(p) => p.select(env),
        }
    }

    fn name(&self) -> String {
        match self {
            StoredPolicy::QTable(p) => p.name(),
            StoredPolicy::Dqn(p) => p.name(),
        }
    }
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<StoredPolicy, PolicyFileError> {
    StoredPolicy::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qtable_roundtrip() {
        let mut p = QTablePolicy::new(2);
        p.table.insert(
            StateKey {
                feasible: 0b11,
                order: vec![1, 0],
            },
            vec![-10.0, 0.25],
        );
        let s = StoredPolicy::QTable(p);
        assert_eq!(StoredPolicy::from_bytes(&s.to_bytes()).unwrap(), s);
    }

    #[test]
    fn dqn_roundtrip_is_bit_exact() {
        let net = Mlp::new(&[13, 8, 5], &mut ChaCha8Rng::seed_from_u64(3));
        let s = StoredPolicy::Dqn(DqnPolicy {
            net,
            normalize: true,
        });
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], b"QSTARDQN");
        assert_eq!(StoredPolicy::from_bytes(&bytes).unwrap(), s);
    }

    #[test]
    fn unknown_version_rejected() {
        let doc = r#"{"format":"qstar-qtable","version":99,"n_actions":2,"entries":[]}"#;
        assert!(matches!(
            StoredPolicy::from_bytes(doc.as_bytes()),
            Err(PolicyFileError::UnsupportedVersion { found: 99 })
        ));
        let net = Mlp::new(&[3, 2], &mut ChaCha8Rng::seed_from_u64(0));
        let mut bytes = StoredPolicy::Dqn(DqnPolicy {
            net,
            normalize: false,
        })
        .to_bytes();
        let text = String::from_utf8_lossy(&bytes).replace("\"version\":1", "\"version\":7");
        bytes = text.into_bytes();
        assert!(matches!(
            StoredPolicy::from_bytes(&bytes),
            Err(PolicyFileError::UnsupportedVersion { found: 7 })
        ));
    }

    #[test]
    fn garbage_rejected() {
        assert!(matches!(
            StoredPolicy::from_bytes(b"hello"),
            Err(PolicyFileError::Malformed(_))
        ));
        assert!(matches!(
            StoredPolicy::from_bytes(b"QSTARDQN\x01"),
            Err(PolicyFileError::Malformed(_))
        ));
    }
}
