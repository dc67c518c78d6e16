//! File formats: instance documents, label files, dataset manifests, and
//! model checkpoints. Everything is UTF-8 JSON written with shortest
//! round-trip float formatting, so values survive a write/read cycle
//! bit-exactly and equal inputs produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{GnnModel, Readout};
use crate::milp::{Lower, MilpError, MilpInstance, Sense, Upper};
use crate::oracle::OracleLabel;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid instance: {0}")]
    Instance(#[from] MilpError),
    #[error("unknown sense {0:?} (expected \"<=\", \"=\", \">=\")")]
    BadSense(String),
    #[error("unknown bound marker {0:?} (expected a number, \"-inf\", or \"+inf\")")]
    BadBound(String),
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("unknown readout {0:?} (expected \"graph\" or \"node\")")]
    BadReadout(String),
    #[error("checkpoint holds {got} parameters but the described model has {want}")]
    ParamCount { got: usize, want: usize },
}

/// A bound entry: a plain number or an infinity marker string.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum BoundJson {
    Num(f64),
    Marker(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceJson {
    m: usize,
    n: usize,
    #[serde(rename = "A")]
    a: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    senses: Vec<String>,
    c: Vec<f64>,
    l: Vec<BoundJson>,
    u: Vec<BoundJson>,
    #[serde(rename = "I")]
    integer: Vec<usize>,
}

/// Serialize an instance to its JSON document.
pub fn instance_to_json(inst: &MilpInstance) -> String {
    let doc = InstanceJson {
        m: inst.num_constraints(),
        n: inst.num_variables(),
        a: inst.entries().collect(),
        b: inst.rhs().to_vec(),
        senses: inst.senses().iter().map(|s| s.as_str().to_string()).collect(),
        c: inst.objective().to_vec(),
        l: inst
            .lower_bounds()
            .iter()
            .map(|l| match l {
                Lower::Finite(v) => BoundJson::Num(*v),
                Lower::NegInf => BoundJson::Marker("-inf".into()),
            })
            .collect(),
        u: inst
            .upper_bounds()
            .iter()
            .map(|u| match u {
                Upper::Finite(v) => BoundJson::Num(*v),
                Upper::PosInf => BoundJson::Marker("+inf".into()),
            })
            .collect(),
        integer: (0..inst.num_variables())
            .filter(|&j| inst.is_integer(j))
            .collect(),
    };
    serde_json::to_string(&doc).expect("instance document serializes")
}

/// Parse an instance from its JSON document, re-validating every invariant.
pub fn instance_from_json(text: &str) -> Result<MilpInstance, IoError> {
    let doc: InstanceJson = serde_json::from_str(text)?;
    let senses = doc
        .senses
        .iter()
        .map(|s| match s.as_str() {
            "<=" => Ok(Sense::Le),
            "=" => Ok(Sense::Eq),
            ">=" => Ok(Sense::Ge),
            other => Err(IoError::BadSense(other.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let lower = doc
        .l
        .iter()
        .map(|b| match b {
            BoundJson::Num(v) => Ok(Lower::Finite(*v)),
            BoundJson::Marker(s) if s == "-inf" => Ok(Lower::NegInf),
            BoundJson::Marker(s) => Err(IoError::BadBound(s.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let upper = doc
        .u
        .iter()
        .map(|b| match b {
            BoundJson::Num(v) => Ok(Upper::Finite(*v)),
            BoundJson::Marker(s) if s == "+inf" => Ok(Upper::PosInf),
            BoundJson::Marker(s) => Err(IoError::BadBound(s.clone())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut integer = vec![false; doc.n];
    for &j in &doc.integer {
        if j >= doc.n {
            return Err(IoError::Instance(MilpError::EntryOutOfRange {
                i: 0,
                j,
                m: doc.m,
                n: doc.n,
            }));
        }
        integer[j] = true;
    }
    Ok(MilpInstance::new(
        doc.m, doc.n, doc.a, doc.b, senses, doc.c, lower, upper, integer,
    )?)
}

pub fn write_instance(path: &Path, inst: &MilpInstance) -> Result<(), IoError> {
    Ok(fs::write(path, instance_to_json(inst) + "\n")?)
}

pub fn read_instance(path: &Path) -> Result<MilpInstance, IoError> {
    instance_from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelJson {
    feasible: u8,
    /// Objective value, or the string "inf" for infeasible instances.
    objective: BoundJson,
    solution: Option<Vec<f64>>,
    node_count: usize,
}

pub fn label_to_json(label: &OracleLabel) -> String {
    let doc = LabelJson {
        feasible: label.feasible as u8,
        objective: if label.feasible {
            BoundJson::Num(label.objective)
        } else {
            BoundJson::Marker("inf".into())
        },
        solution: label.solution.clone(),
        node_count: label.node_count,
    };
    serde_json::to_string(&doc).expect("label document serializes")
}

pub fn label_from_json(text: &str) -> Result<OracleLabel, IoError> {
    let doc: LabelJson = serde_json::from_str(text)?;
    let objective = match doc.objective {
        BoundJson::Num(v) => v,
        BoundJson::Marker(s) if s == "inf" => f64::INFINITY,
        BoundJson::Marker(s) => return Err(IoError::BadBound(s)),
    };
    Ok(OracleLabel {
        feasible: doc.feasible != 0,
        objective,
        solution: doc.solution,
        node_count: doc.node_count,
    })
}

pub fn write_label(path: &Path, label: &OracleLabel) -> Result<(), IoError> {
    Ok(fs::write(path, label_to_json(label) + "\n")?)
}

pub fn read_label(path: &Path) -> Result<OracleLabel, IoError> {
    label_from_json(&fs::read_to_string(path)?)
}

/// Dataset manifest: what was generated, from which seed, into which files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub variant: String,
    pub seed: u64,
    pub count: usize,
    /// Instance file names relative to the manifest's directory.
    pub files: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), IoError> {
    Ok(fs::write(
        path,
        serde_json::to_string_pretty(manifest)? + "\n",
    )?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Load every instance listed by a manifest (paths resolve relative to the
/// manifest file's directory).
pub fn read_manifest_instances(path: &Path) -> Result<Vec<MilpInstance>, IoError> {
    let manifest = read_manifest(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .files
        .iter()
        .map(|f| read_instance(&dir.join(f)))
        .collect()
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointJson {
    version: u32,
    d: usize,
    readout: String,
    uses_random_feature: bool,
    /// Seed the model weights were initialized from.
    init_seed: u64,
    n_params: usize,
    params: Vec<f64>,
}

/// Write all model parameters plus the metadata needed to rebuild the model.
pub fn write_checkpoint(path: &Path, model: &GnnModel, init_seed: u64) -> Result<(), IoError> {
    let doc = CheckpointJson {
        version: CHECKPOINT_VERSION,
        d: model.d,
        readout: match model.readout {
            Readout::Graph => "graph".into(),
            Readout::Node => "node".into(),
        },
        uses_random_feature: model.uses_random_feature,
        init_seed,
        n_params: model.param_count(),
        params: model.flatten(),
    };
    Ok(fs::write(path, serde_json::to_string(&doc)? + "\n")?)
}

/// Rebuild a model from a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<GnnModel, IoError> {
    let doc: CheckpointJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(IoError::BadVersion(doc.version));
    }
    let readout = match doc.readout.as_str() {
        "graph" => Readout::Graph,
        "node" => Readout::Node,
        other => return Err(IoError::BadReadout(other.to_string())),
    };
    let mut model = GnnModel::new(doc.d, readout, doc.uses_random_feature, doc.init_seed);
    if doc.params.len() != model.param_count() {
        return Err(IoError::ParamCount {
            got: doc.params.len(),
            want: model.param_count(),
        });
    }
    model.unflatten(&doc.params);
    Ok(model)
}
