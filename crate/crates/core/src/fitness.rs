//! Outcome of one fitness evaluation.

use serde::{Deserialize, Serialize};

use crate::graph::ActivationGraph;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Unstable,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Unstable => "unstable",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    /// Validation accuracy after the last epoch; 0 when unstable.
    pub fitness: f64,
    pub status: Status,
    pub runtime_seconds: f64,
    pub curves: Vec<EpochStats>,
    /// `[epoch][layer][param_index]`: mean value of each activation
    /// parameter over the units of each hidden layer, after each epoch.
    pub param_trajectory: Vec<Vec<Vec<f64>>>,
    pub test_acc: Option<f64>,
}

impl FitnessRecord {
    pub fn ok(fitness: f64, runtime_seconds: f64) -> Self {
        FitnessRecord {
            fitness,
            status: Status::Ok,
            runtime_seconds,
            curves: Vec::new(),
            param_trajectory: Vec::new(),
            test_acc: None,
        }
    }

    pub fn unstable(runtime_seconds: f64) -> Self {
        FitnessRecord {
            fitness: 0.0,
            status: Status::Unstable,
            runtime_seconds,
            curves: Vec::new(),
            param_trajectory: Vec::new(),
            test_acc: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Per-epoch mean of each parameter index across all hidden layers.
    pub fn network_param_means(&self) -> Vec<Vec<f64>> {
        self.param_trajectory
            .iter()
            .map(|layers| {
                let k = layers.first().map_or(0, Vec::len);
                (0..k)
                    .map(|i| layers.iter().map(|l| l[i]).sum::<f64>() / layers.len() as f64)
                    .collect()
            })
            .collect()
    }

    /// Clamps a record to its invariants: unstable implies fitness 0, and a
    /// non-finite or out-of-range fitness is treated as unstable.
    pub fn sanitized(mut self) -> Self {
        if self.status == Status::Unstable || !(0.0..=1.0).contains(&self.fitness) {
            self.status = Status::Unstable;
            self.fitness = 0.0;
        }
        if !self.runtime_seconds.is_finite() || self.runtime_seconds < 0.0 {
            self.runtime_seconds = 0.0;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("evaluation failed: {0}")]
pub struct EvalError(pub String);

/// Maps a graph and a seed to a fitness record.
pub trait Evaluator: Sync {
    fn evaluate(&self, graph: &ActivationGraph, seed: u64) -> Result<FitnessRecord, EvalError>;
}

impl<F> Evaluator for F
where
    F: Fn(&ActivationGraph, u64) -> Result<FitnessRecord, EvalError> + Sync,
{
    fn evaluate(&self, graph: &ActivationGraph, seed: u64) -> Result<FitnessRecord, EvalError> {
        self(graph, seed)
    }
}

/// Evaluates and folds every failure into an unstable record.
pub fn evaluate_contained(eval: &dyn Evaluator, graph: &ActivationGraph, seed: u64) -> FitnessRecord {
    match eval.evaluate(graph, seed) {
        Ok(r) => r.sanitized(),
        Err(_) => FitnessRecord::unstable(0.0),
    }
}
