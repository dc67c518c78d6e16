//! MSE training loops for the message-passing GNN: Adam over fixed-order
//! minibatches, per-epoch logging, and task-error metrics for the three
//! learning targets (feasibility bit, optimal objective, optimal solution).

use std::time::Instant;

use thiserror::Error;

use crate::gnn::{
    forward_graph, forward_nodes, sse_grad_graph, sse_grad_nodes, GnnError, GnnModel,
};
use crate::graph::MilpGraph;
use crate::nn::Adam;

/// Learning target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Regress the feasibility bit; error = misclassification rate of the
    /// 1/2-thresholded output.
    Feas,
    /// Regress the (standardized) optimal objective; error = MSE.
    Obj,
    /// Regress the optimal solution vector per variable; error = MSE over
    /// all coordinates.
    Solu,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Feas => "feas",
            Task::Obj => "obj",
            Task::Solu => "solu",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "feas" => Some(Task::Feas),
            "obj" => Some(Task::Obj),
            "solu" => Some(Task::Solu),
            _ => None,
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub task: Task,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop early once the epoch task error drops to this level.
    pub target_error: Option<f64>,
}

impl TrainConfig {
    pub fn new(task: Task, epochs: usize) -> TrainConfig {
        TrainConfig {
            task,
            learning_rate: 1e-4,
            epochs,
            batch_size: 32,
            target_error: None,
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean squared error over the epoch (pre-update outputs).
    pub loss: f64,
    /// Task error over the epoch (pre-update outputs).
    pub task_error: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

/// Affine target scaling fitted on the training targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    /// Fit mean and standard deviation; a degenerate spread falls back to 1
    /// so apply/invert stay bijective.
    pub fn fit(values: &[f64]) -> Standardizer {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Standardizer { mean, std }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

fn graph_error(task: Task, outputs_targets: &[(f64, f64)]) -> f64 {
    match task {
        Task::Feas => {
            let wrong = outputs_targets
                .iter()
                .filter(|(y, t)| (*y > 0.5) != (*t > 0.5))
                .count();
            wrong as f64 / outputs_targets.len().max(1) as f64
        }
        _ => {
            outputs_targets
                .iter()
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>()
                / outputs_targets.len().max(1) as f64
        }
    }
}

/// Train a graph-readout model in place; returns the per-epoch log.
pub fn train_graph(
    model: &mut GnnModel,
    data: &[(&MilpGraph, f64)],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut params = model.flatten();
    let mut opt = Adam::new(cfg.learning_rate, params.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let mut sse = 0.0;
        let mut pre_outputs: Vec<(f64, f64)> = Vec::with_capacity(data.len());
        for batch in data.chunks(cfg.batch_size) {
            let (batch_sse, outputs, grads) = sse_grad_graph(model, batch)?;
            sse += batch_sse;
            pre_outputs.extend(outputs.iter().copied().zip(batch.iter().map(|&(_, t)| t)));
            let mut flat = grads.flatten();
            let scale = 1.0 / batch.len() as f64;
            for v in flat.iter_mut() {
                *v *= scale;
            }
            opt.step(&mut params, &flat);
            model.unflatten(&params);
        }
        let loss = sse / data.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        let task_error = graph_error(cfg.task, &pre_outputs);
        log.push(EpochLog {
            epoch,
            loss,
            task_error,
            wall_ms: start.elapsed().as_millis(),
        });
        if cfg.target_error.is_some_and(|t| task_error <= t) {
            break;
        }
    }
    Ok(log)
}

/// Train a node-readout model in place; returns the per-epoch log.
pub fn train_nodes(
    model: &mut GnnModel,
    data: &[(&MilpGraph, Vec<f64>)],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut params = model.flatten();
    let mut opt = Adam::new(cfg.learning_rate, params.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let mut sse = 0.0;
        let mut coords = 0usize;
        for batch in data.chunks(cfg.batch_size) {
            let borrowed: Vec<(&MilpGraph, &[f64])> =
                batch.iter().map(|(g, t)| (*g, t.as_slice())).collect();
            let (batch_sse, grads) = sse_grad_nodes(model, &borrowed)?;
            sse += batch_sse;
            coords += borrowed.iter().map(|(_, t)| t.len()).sum::<usize>();
            let mut flat = grads.flatten();
            let scale = 1.0 / batch.len() as f64;
            for v in flat.iter_mut() {
                *v *= scale;
            }
            opt.step(&mut params, &flat);
            model.unflatten(&params);
        }
        let loss = sse / coords.max(1) as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        log.push(EpochLog {
            epoch,
            loss,
            task_error: loss,
            wall_ms: start.elapsed().as_millis(),
        });
        if cfg.target_error.is_some_and(|t| loss <= t) {
            break;
        }
    }
    Ok(log)
}

/// Task error of a graph-readout model on a labeled dataset.
pub fn eval_graph(
    model: &GnnModel,
    data: &[(&MilpGraph, f64)],
    task: Task,
) -> Result<f64, GnnError> {
    let mut outs = Vec::with_capacity(data.len());
    for &(g, t) in data {
        outs.push((forward_graph(model, g)?, t));
    }
    Ok(graph_error(task, &outs))
}

/// Mean squared error of a node-readout model on a labeled dataset.
pub fn eval_nodes(model: &GnnModel, data: &[(&MilpGraph, Vec<f64>)]) -> Result<f64, GnnError> {
    let mut sse = 0.0;
    let mut coords = 0usize;
    for (g, targets) in data {
        let y = forward_nodes(model, g)?;
        for (a, b) in y.iter().zip(targets) {
            sse += (a - b) * (a - b);
        }
        coords += targets.len();
    }
    Ok(sse / coords.max(1) as f64)
}
