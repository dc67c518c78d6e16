//! End-to-end experiment orchestration: read a labeled dataset, build
//! targets for one learning task, sweep embedding sizes and seeds, and emit
//! a results CSV plus a median-over-seeds report for plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gen::Sampler;
use crate::gnn::{GnnError, GnnModel, Readout};
use crate::graph::encode_graph;
use crate::graph::MilpGraph;
use crate::io::{self, IoError};
use crate::milp::MilpInstance;
use crate::oracle::{canonical_solution, solve_milp, OracleError, OracleLabel};
use crate::train::{
    eval_graph, eval_nodes, train_graph, train_nodes, Standardizer, Task, TrainConfig, TrainError,
};

/// One experiment: a dataset manifest, a task, and sweeps over embedding
/// size and initialization seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    /// Path to the dataset manifest produced by `gen`.
    pub manifest: PathBuf,
    /// Learning task: "feas", "obj", or "solu".
    pub task: String,
    /// Embedding sizes to sweep.
    pub dims: Vec<usize>,
    /// Model initialization seeds; one training run per (dim, seed).
    pub seeds: Vec<u64>,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Stop a run early once the train task error reaches this level.
    #[serde(default)]
    pub target_error: Option<f64>,
    /// Append one shared random feature vector to every instance.
    #[serde(default)]
    pub random_features: bool,
    /// Seed for the shared random feature vector.
    #[serde(default)]
    pub rf_seed: u64,
    /// Number of leading usable instances used for training.
    pub train_size: usize,
    /// Number of subsequent instances held out for testing (0 = no split).
    #[serde(default)]
    pub test_size: usize,
    /// Directory for model checkpoints; no checkpoints when absent.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

fn default_batch_size() -> usize {
    32
}

fn default_learning_rate() -> f64 {
    1e-4
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("split needs {needed} usable instances but the dataset has {available}")]
    SplitTooLarge { needed: usize, available: usize },
    #[error("instances in one dataset must share dimensions: {0}x{1} vs {2}x{3}")]
    MixedDimensions(usize, usize, usize, usize),
    #[error("results CSV is empty")]
    EmptyResults,
    #[error("malformed results CSV line: {0}")]
    MalformedCsv(String),
}

/// One results row; `test_err` is `None` when the spec has no test split.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub task: Task,
    pub variant: String,
    pub d: usize,
    pub n_params: usize,
    pub seed: u64,
    pub train_err: f64,
    pub test_err: Option<f64>,
    pub epochs: usize,
    pub wall_ms: u128,
    pub manifest: String,
    pub checkpoint: String,
}

pub const RESULTS_HEADER: &str =
    "experiment,task,variant,d,n_params,seed,train_err,test_err,epochs,wall_ms,manifest,checkpoint";

/// Targets for one task over a dataset, paired with the usable graphs.
/// Infeasible instances are dropped for the objective and solution tasks.
#[derive(Debug, Clone)]
pub enum Targets {
    Graph(Vec<f64>),
    Nodes(Vec<Vec<f64>>),
}

/// Solve every instance with the exact oracle.
pub fn label_instances(instances: &[MilpInstance]) -> Result<Vec<OracleLabel>, OracleError> {
    instances.iter().map(solve_milp).collect()
}

/// Per-variable regression target: the canonical solution when the instance
/// is unfoldable, otherwise the oracle's deterministic optimal solution.
pub fn solution_target(inst: &MilpInstance, label: &OracleLabel) -> Result<Vec<f64>, OracleError> {
    match canonical_solution(inst) {
        Ok(x) => Ok(x),
        Err(OracleError::Foldable(_)) => Ok(label
            .solution
            .clone()
            .expect("feasible label carries a solution")),
        Err(e) => Err(e),
    }
}

/// Encode and label a dataset for one task: solve every instance, attach
/// the shared random feature vector when requested, drop instances unusable
/// for the task, and pair each remaining graph with its target.
pub fn prepare_dataset(
    task: Task,
    instances: &[MilpInstance],
    random_features: bool,
    rf_seed: u64,
) -> Result<(Vec<MilpGraph>, Targets), ExperimentError> {
    let labels = label_instances(instances)?;
    let mut graphs: Vec<MilpGraph> = instances.iter().map(encode_graph).collect();
    if random_features {
        attach_shared_features(&mut graphs, rf_seed)?;
    }
    build_targets(task, instances, &labels, &graphs)
}

/// Attach one shared random feature vector, drawn from `rf_seed`, to every
/// graph; all graphs must share the same dimensions.
fn attach_shared_features(graphs: &mut [MilpGraph], rf_seed: u64) -> Result<(), ExperimentError> {
    let (m, n) = match graphs.first() {
        Some(g) => (g.num_constraints(), g.num_variables()),
        None => (0, 0),
    };
    // One shared random vector for every instance, train and test.
    let omega = Sampler::new(rf_seed).random_features(m, n);
    for g in graphs.iter_mut() {
        if g.num_constraints() != m || g.num_variables() != n {
            return Err(ExperimentError::MixedDimensions(
                m,
                n,
                g.num_constraints(),
                g.num_variables(),
            ));
        }
        *g = g.with_random_features(omega.clone()).map_err(GnnError::from)?;
    }
    Ok(())
}

fn build_targets(
    task: Task,
    instances: &[MilpInstance],
    labels: &[OracleLabel],
    graphs: &[MilpGraph],
) -> Result<(Vec<MilpGraph>, Targets), ExperimentError> {
    match task {
        Task::Feas => {
            let ys = labels
                .iter()
                .map(|l| if l.feasible { 1.0 } else { 0.0 })
                .collect();
            Ok((graphs.to_vec(), Targets::Graph(ys)))
        }
        Task::Obj => {
            let mut gs = Vec::new();
            let mut ys = Vec::new();
            for (i, l) in labels.iter().enumerate() {
                if l.feasible {
                    gs.push(graphs[i].clone());
                    ys.push(l.objective);
                }
            }
            Ok((gs, Targets::Graph(ys)))
        }
        Task::Solu => {
            let mut gs = Vec::new();
            let mut ys = Vec::new();
            for (i, l) in labels.iter().enumerate() {
                if l.feasible {
                    gs.push(graphs[i].clone());
                    ys.push(solution_target(&instances[i], l)?);
                }
            }
            Ok((gs, Targets::Nodes(ys)))
        }
    }
}

/// Run the full sweep for one spec; rows come out sorted by (d, seed).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>, ExperimentError> {
    let task =
        Task::parse(&spec.task).ok_or_else(|| ExperimentError::UnknownTask(spec.task.clone()))?;
    let manifest = io::read_manifest(&spec.manifest)?;
    let instances = io::read_manifest_instances(&spec.manifest)?;
    let (graphs, targets) =
        prepare_dataset(task, &instances, spec.random_features, spec.rf_seed)?;
    let needed = spec.train_size + spec.test_size;
    if graphs.len() < needed {
        return Err(ExperimentError::SplitTooLarge {
            needed,
            available: graphs.len(),
        });
    }

    // Standardize objective targets with train-split statistics only.
    let targets = match targets {
        Targets::Graph(ys) if task == Task::Obj => {
            let std = Standardizer::fit(&ys[..spec.train_size]);
            Targets::Graph(ys.iter().map(|&y| std.apply(y)).collect())
        }
        t => t,
    };

    let mut rows = Vec::new();
    for &d in &spec.dims {
        for &seed in &spec.seeds {
            let readout = match task {
                Task::Solu => Readout::Node,
                _ => Readout::Graph,
            };
            let mut model = GnnModel::new(d, readout, spec.random_features, seed);
            let n_params = model.param_count();
            let cfg = TrainConfig {
                task,
                learning_rate: spec.learning_rate,
                epochs: spec.epochs,
                batch_size: spec.batch_size,
                target_error: spec.target_error,
            };
            let (log, train_err, test_err) = match &targets {
                Targets::Graph(ys) => {
                    let train: Vec<(&MilpGraph, f64)> = graphs[..spec.train_size]
                        .iter()
                        .zip(&ys[..spec.train_size])
                        .map(|(g, &y)| (g, y))
                        .collect();
                    let log = train_graph(&mut model, &train, &cfg)?;
                    let train_err = eval_graph(&model, &train, task)?;
                    let test_err = if spec.test_size > 0 {
                        let test: Vec<(&MilpGraph, f64)> = graphs[spec.train_size..needed]
                            .iter()
                            .zip(&ys[spec.train_size..needed])
                            .map(|(g, &y)| (g, y))
                            .collect();
                        Some(eval_graph(&model, &test, task)?)
                    } else {
                        None
                    };
                    (log, train_err, test_err)
                }
                Targets::Nodes(ys) => {
                    let train: Vec<(&MilpGraph, Vec<f64>)> = graphs[..spec.train_size]
                        .iter()
                        .zip(&ys[..spec.train_size])
                        .map(|(g, y)| (g, y.clone()))
                        .collect();
                    let log = train_nodes(&mut model, &train, &cfg)?;
                    let train_err = eval_nodes(&model, &train)?;
                    let test_err = if spec.test_size > 0 {
                        let test: Vec<(&MilpGraph, Vec<f64>)> = graphs[spec.train_size..needed]
                            .iter()
                            .zip(&ys[spec.train_size..needed])
                            .map(|(g, y)| (g, y.clone()))
                            .collect();
                        Some(eval_nodes(&model, &test)?)
                    } else {
                        None
                    };
                    (log, train_err, test_err)
                }
            };
            let checkpoint = match &spec.checkpoint_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(IoError::from)?;
                    let file = format!("{}_{}_d{}_s{}.json", spec.name, task.as_str(), d, seed);
                    let path = dir.join(file);
                    io::write_checkpoint(&path, &model, seed)?;
                    path.to_string_lossy().into_owned()
                }
                None => String::new(),
            };
            rows.push(ResultRow {
                experiment: spec.name.clone(),
                task,
                variant: manifest.variant.clone(),
                d,
                n_params,
                seed,
                train_err,
                test_err,
                epochs: log.len(),
                wall_ms: log.last().map_or(0, |e| e.wall_ms),
                manifest: spec.manifest.to_string_lossy().into_owned(),
                checkpoint,
            });
        }
    }
    Ok(rows)
}

/// Render result rows as a CSV document with header.
pub fn results_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let test = r.test_err.map_or(String::new(), |e| e.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.task.as_str(),
            r.variant,
            r.d,
            r.n_params,
            r.seed,
            r.train_err,
            test,
            r.epochs,
            r.wall_ms,
            r.manifest,
            r.checkpoint
        );
    }
    out
}

/// Parse a results CSV produced by [`results_to_csv`].
pub fn results_from_csv(text: &str) -> Result<Vec<ResultRow>, ExperimentError> {
    let bad = |line: &str| ExperimentError::MalformedCsv(line.to_string());
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(line));
        }
        rows.push(ResultRow {
            experiment: f[0].to_string(),
            task: Task::parse(f[1]).ok_or_else(|| bad(line))?,
            variant: f[2].to_string(),
            d: f[3].parse().map_err(|_| bad(line))?,
            n_params: f[4].parse().map_err(|_| bad(line))?,
            seed: f[5].parse().map_err(|_| bad(line))?,
            train_err: f[6].parse().map_err(|_| bad(line))?,
            test_err: if f[7].is_empty() {
                None
            } else {
                Some(f[7].parse().map_err(|_| bad(line))?)
            },
            epochs: f[8].parse().map_err(|_| bad(line))?,
            wall_ms: f[9].parse().map_err(|_| bad(line))?,
            manifest: f[10].to_string(),
            checkpoint: f[11].to_string(),
        });
    }
    Ok(rows)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// One aggregated report row: medians over seeds within a (experiment,
/// task, variant, d) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub task: Task,
    pub variant: String,
    pub d: usize,
    pub n_params: usize,
    pub seeds: usize,
    pub train_err: f64,
    pub test_err: Option<f64>,
}

/// Aggregate result rows over seeds; output is sorted by (experiment, task,
/// variant, d).
pub fn aggregate(rows: &[ResultRow]) -> Result<Vec<ReportRow>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::EmptyResults);
    }
    let mut keys: Vec<(String, Task, String, usize)> = rows
        .iter()
        .map(|r| (r.experiment.clone(), r.task, r.variant.clone(), r.d))
        .collect();
    keys.sort_by(|a, b| (&a.0, a.1.as_str(), &a.2, a.3).cmp(&(&b.0, b.1.as_str(), &b.2, b.3)));
    keys.dedup();

    let mut out = Vec::new();
    for (experiment, task, variant, d) in keys {
        let cell: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| {
                r.experiment == experiment && r.task == task && r.variant == variant && r.d == d
            })
            .collect();
        let mut train: Vec<f64> = cell.iter().map(|r| r.train_err).collect();
        let mut test: Vec<f64> = cell.iter().filter_map(|r| r.test_err).collect();
        out.push(ReportRow {
            experiment,
            task,
            variant,
            d,
            n_params: cell[0].n_params,
            seeds: cell.len(),
            train_err: median(&mut train),
            test_err: if test.is_empty() {
                None
            } else {
                Some(median(&mut test))
            },
        });
    }
    Ok(out)
}

/// Summary text plus a plot-ready CSV (one row per sweep cell, columns
/// `experiment,task,variant,d,n_params,seeds,train_err,test_err`).
pub fn report(rows: &[ResultRow]) -> Result<(String, String), ExperimentError> {
    let agg = aggregate(rows)?;
    let mut summary = String::new();
    let mut csv = String::from("experiment,task,variant,d,n_params,seeds,train_err,test_err\n");
    for r in &agg {
        let test_txt = r
            .test_err
            .map_or(String::new(), |e| format!(" test_err={e}"));
        let _ = writeln!(
            summary,
            "{} [{} on {}] d={} params={} seeds={}: train_err={}{}",
            r.experiment,
            r.task.as_str(),
            r.variant,
            r.d,
            r.n_params,
            r.seeds,
            r.train_err,
            test_txt
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.experiment,
            r.task.as_str(),
            r.variant,
            r.d,
            r.n_params,
            r.seeds,
            r.train_err,
            r.test_err.map_or(String::new(), |e| e.to_string())
        );
    }
    Ok((summary, csv))
}

/// Write a dataset (instances + manifest) under `dir`; file names are
/// `inst_00000.json`, … and the manifest is `manifest.json`.
pub fn write_dataset(
    dir: &Path,
    variant: &str,
    seed: u64,
    instances: &[MilpInstance],
) -> Result<PathBuf, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(IoError::from)?;
    let mut files = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let name = format!("inst_{i:05}.json");
        io::write_instance(&dir.join(&name), inst)?;
        files.push(name);
    }
    let manifest = io::Manifest {
        variant: variant.to_string(),
        seed,
        count: instances.len(),
        files,
    };
    let path = dir.join("manifest.json");
    io::write_manifest(&path, &manifest)?;
    Ok(path)
}
