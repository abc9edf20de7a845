use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{TaggedCircuit, WorkloadError};
use crate::cloud::QTask;
use crate::engine::SimTime;

pub const DATASET_HEADER: &str = "subset_id,task_id,arrival_s,qubits,depth1_layers,shots,app_tag";

/// Application families of the reference benchmark corpus.
pub const DEFAULT_APP_TAGS: [&str; 12] = [
    "ae",
    "dj",
    "ghz",
    "qft",
    "qftentangled",
    "qnn",
    "qpeexact",
    "qpeinexact",
    "random",
    "realamprandom",
    "su2random",
    "twolocalrandom",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Exactly `tasks_per_subset` arrivals placed uniformly over the window.
    #[default]
    Uniform,
    /// Poisson-distributed count with mean `tasks_per_subset` (at least one),
    /// placed uniformly over the window.
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub n_subsets: usize,
    pub tasks_per_subset: usize,
    pub window_s: f64,
    pub qubit_range: [u32; 2],
    pub depth_range: [u64; 2],
    pub shots_range: [u64; 2],
    pub app_tags: Vec<String>,
    pub arrival: ArrivalModel,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            n_subsets: 1900,
            tasks_per_subset: 25,
            window_s: 60.0,
            qubit_range: [2, 27],
            depth_range: [1, 500],
            shots_range: [100, 2000],
            app_tags: DEFAULT_APP_TAGS.iter().map(|s| s.to_string()).collect(),
            arrival: ArrivalModel::Uniform,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: &str| Err(WorkloadError::InvalidParams(msg.to_string()));
        if self.n_subsets == 0 {
            return bad("n_subsets must be at least 1");
        }
        if self.tasks_per_subset == 0 {
            return bad("tasks_per_subset must be at least 1");
        }
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return bad("window_s must be positive and finite");
        }
        if self.qubit_range[0] == 0 || self.qubit_range[0] > self.qubit_range[1] {
            return bad("qubit_range must be a non-empty range of positive counts");
        }
        if self.depth_range[0] > self.depth_range[1] {
            return bad("depth_range is empty");
        }
        if self.shots_range[0] == 0 || self.shots_range[0] > self.shots_range[1] {
            return bad("shots_range must be a non-empty range of positive counts");
        }
        if self.app_tags.is_empty() {
            return bad("app_tags is empty");
        }
        Ok(())
    }

    fn subset_size(&self, rng: &mut ChaCha8Rng) -> usize {
        match self.arrival {
            ArrivalModel::Uniform => self.tasks_per_subset,
            ArrivalModel::Poisson => {
                let dist = Poisson::new(self.tasks_per_subset as f64).expect("positive mean");
                (dist.sample(rng) as usize).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub params: GenerationParams,
}

/// Tasks grouped into independent rounds. Each round is one episode with
/// its own clock origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    subsets: Vec<Vec<QTask>>,
    provenance: Option<Provenance>,
}

impl Dataset {
    /// Sorts each subset by arrival and checks ids are unique.
    pub fn from_subsets(mut subsets: Vec<Vec<QTask>>) -> Result<Self, WorkloadError> {
        let mut ids = HashSet::new();
        for subset in &mut subsets {
            subset.sort_by(|a, b| a.arrival_at.seconds().total_cmp(&b.arrival_at.seconds()));
            for t in subset.iter() {
                if !ids.insert(t.id) {
                    return Err(WorkloadError::InvalidParams(format!(
                        "duplicate task id {}",
                        t.id
                    )));
                }
                if t.shots == 0 || t.qubit_count == 0 {
                    return Err(WorkloadError::InvalidParams(format!(
                        "task {} has zero qubits or shots",
                        t.id
                    )));
                }
            }
        }
        Ok(Dataset {
            subsets,
            provenance: None,
        })
    }

    pub fn subsets(&self) -> &[Vec<QTask>] {
        &self.subsets
    }

    pub fn n_subsets(&self) -> usize {
        self.subsets.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.provenance.as_ref().map(|p| p.seed)
    }

    pub fn params(&self) -> Option<&GenerationParams> {
        self.provenance.as_ref().map(|p| &p.params)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &QTask> {
        self.subsets.iter().flatten()
    }

    pub fn max_subset_len(&self) -> usize {
        self.subsets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn get_subset(&self, round: usize) -> Result<&[QTask], WorkloadError> {
        self.subsets
            .get(round)
            .map(Vec::as_slice)
            .ok_or(WorkloadError::RoundOutOfRange {
                round,
                n_subsets: self.subsets.len(),
            })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), WorkloadError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(DATASET_HEADER.split(','))?;
        for (subset_id, subset) in self.subsets.iter().enumerate() {
            for t in subset {
                w.write_record([
                    subset_id.to_string(),
                    t.id.to_string(),
                    format_seconds(t.arrival_at.seconds()),
                    t.qubit_count.to_string(),
                    t.depth1_layers.to_string(),
                    t.shots.to_string(),
                    t.app_tag.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, WorkloadError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(input);
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r?,
            None => return Err(WorkloadError::format(1, "empty file, expected a header")),
        };
        let header: Vec<&str> = header.iter().collect();
        if header.join(",") != DATASET_HEADER {
            return Err(WorkloadError::format(
                1,
                format!("header must be `{DATASET_HEADER}`"),
            ));
        }

        let mut grouped: BTreeMap<usize, Vec<QTask>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for (idx, record) in records.enumerate() {
            let line = idx + 2;
            let record = record?;
            if record.len() != 7 {
                return Err(WorkloadError::format(
                    line,
                    format!("expected 7 columns, found {}", record.len()),
                ));
            }
            let subset_id: usize = parse_field(&record[0], "subset_id", line)?;
            let arrival: f64 = parse_field(&record[2], "arrival_s", line)?;
            if !(arrival >= 0.0 && arrival.is_finite()) {
                return Err(WorkloadError::format(
                    line,
                    "arrival_s must be a non-negative number",
                ));
            }
            let task = QTask {
                id: parse_field(&record[1], "task_id", line)?,
                arrival_at: SimTime::new(arrival),
                qubit_count: parse_field(&record[3], "qubits", line)?,
                depth1_layers: parse_field(&record[4], "depth1_layers", line)?,
                shots: if record[5].trim().is_empty() {
                    1
                } else {
                    parse_field(&record[5], "shots", line)?
                },
                app_tag: record[6].to_string(),
            };
            if task.qubit_count == 0 || task.shots == 0 {
                return Err(WorkloadError::format(
                    line,
                    "qubits and shots must be positive",
                ));
            }
            if !seen.insert(task.id) {
                return Err(WorkloadError::format(
                    line,
                    format!("duplicate task_id {}", task.id),
                ));
            }
            grouped.entry(subset_id).or_default().push(task);
        }

        let n_subsets = grouped.keys().next_back().map_or(0, |k| k + 1);
        let mut subsets = vec![Vec::new(); n_subsets];
        for (id, tasks) in grouped {
            subsets[id] = tasks;
        }
        Self::from_subsets(subsets)
    }

    /// Writes the dataset CSV. Generation provenance, when known, goes to a
    /// `<path>.meta.json` sidecar so that [`Dataset::load_csv`] restores it.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), WorkloadError> {
        let path = path.as_ref();
        self.write_csv(io::BufWriter::new(File::create(path)?))?;
        let meta = sidecar_path(path);
        match &self.provenance {
            Some(p) => fs::write(meta, serde_json::to_string_pretty(p)? + "\n")?,
            None if meta.exists() => fs::remove_file(meta)?,
            None => {}
        }
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, WorkloadError> {
        let path = path.as_ref();
        let mut ds = Self::read_csv(io::BufReader::new(File::open(path)?))?;
        let meta = sidecar_path(path);
        if meta.exists() {
            let provenance: Provenance = serde_json::from_str(&fs::read_to_string(meta)?)?;
            // Trailing rounds with no rows cannot be seen in the CSV alone.
            if ds.subsets.len() < provenance.params.n_subsets {
                ds.subsets.resize(provenance.params.n_subsets, Vec::new());
            }
            ds.provenance = Some(provenance);
        }
        Ok(ds)
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn parse_field<T: std::str::FromStr>(
    text: &str,
    column: &str,
    line: usize,
) -> Result<T, WorkloadError> {
    text.trim()
        .parse()
        .map_err(|_| WorkloadError::format(line, format!("invalid {column} `{text}`")))
}

/// Shortest round-trip decimal with at least six fractional digits.
pub fn format_seconds(x: f64) -> String {
    let mut s = format!("{x}");
    let frac = match s.find('.') {
        Some(dot) => s.len() - dot - 1,
        None => {
            s.push('.');
            0
        }
    };
    for _ in frac..6 {
        s.push('0');
    }
    s
}

struct TaskDraw {
    arrival: f64,
    qubits: u32,
    depth: u64,
    shots: u64,
    app_tag: String,
}

fn assemble(mut draws: Vec<Vec<TaskDraw>>, provenance: Provenance) -> Dataset {
    let mut next_id = 0u64;
    let subsets = draws
        .iter_mut()
        .map(|subset| {
            subset.sort_by(|a, b| a.arrival.total_cmp(&b.arrival));
            subset
                .drain(..)
                .map(|d| {
                    let task = QTask {
                        id: next_id,
                        arrival_at: SimTime::new(d.arrival),
                        qubit_count: d.qubits,
                        depth1_layers: d.depth,
                        shots: d.shots,
                        app_tag: d.app_tag,
                    };
                    next_id += 1;
                    task
                })
                .collect()
        })
        .collect();
    Dataset {
        subsets,
        provenance: Some(provenance),
    }
}

/// Synthetic dataset with every task attribute drawn uniformly from the
/// configured ranges. Fully determined by `(params, seed)`.
pub fn generate_dataset(params: &GenerationParams, seed: u64) -> Result<Dataset, WorkloadError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(params.n_subsets);
    for _ in 0..params.n_subsets {
        let n = params.subset_size(&mut rng);
        let subset = (0..n)
            .map(|_| TaskDraw {
                arrival: rng.random_range(0.0..params.window_s),
                qubits: rng.random_range(params.qubit_range[0]..=params.qubit_range[1]),
                depth: rng.random_range(params.depth_range[0]..=params.depth_range[1]),
                shots: rng.random_range(params.shots_range[0]..=params.shots_range[1]),
                app_tag: params
                    .app_tags
                    .choose(&mut rng)
                    .expect("validated non-empty")
                    .clone(),
            })
            .collect();
        draws.push(subset);
    }
    Ok(assemble(
        draws,
        Provenance {
            seed,
            params: params.clone(),
        },
    ))
}

/// Dataset whose circuits are sampled with replacement from `pool`; arrival
/// times and shots are drawn as in [`generate_dataset`]. The qubit, depth and
/// tag settings of `params` are not used.
pub fn dataset_from_features(
    pool: &[TaggedCircuit],
    params: &GenerationParams,
    seed: u64,
) -> Result<Dataset, WorkloadError> {
    if pool.is_empty() {
        return Err(WorkloadError::InvalidParams("feature pool is empty".into()));
    }
    if let Some(bad) = pool.iter().find(|c| c.features.qubit_count == 0) {
        return Err(WorkloadError::InvalidParams(format!(
            "circuit `{}` has no qubits",
            bad.app_tag
        )));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(params.n_subsets);
    for _ in 0..params.n_subsets {
        let n = params.subset_size(&mut rng);
        let subset = (0..n)
            .map(|_| {
                let arrival = rng.random_range(0.0..params.window_s);
                let circuit = pool.choose(&mut rng).expect("non-empty pool");
                TaskDraw {
                    arrival,
                    qubits: circuit.features.qubit_count,
                    depth: circuit.features.depth1_layers,
                    shots: rng.random_range(params.shots_range[0]..=params.shots_range[1]),
                    app_tag: circuit.app_tag.clone(),
                }
            })
            .collect();
        draws.push(subset);
    }
    Ok(assemble(
        draws,
        Provenance {
            seed,
            params: params.clone(),
        },
    ))
}
