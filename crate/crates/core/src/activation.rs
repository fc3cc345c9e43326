//! A scalar activation with learnable parameters, as seen by the trainer.

use std::sync::Arc;

use crate::graph::{ActivationGraph, Tape};

/// Anything the trainer can place after a hidden layer.
pub trait ActivationFn: Send + Sync {
    fn name(&self) -> String;

    fn num_params(&self) -> usize;

    /// Values every parameter slot starts from.
    fn initial_params(&self) -> Vec<f64>;

    fn forward(&self, x: f64, params: &[f64]) -> f64;

    /// Returns `(f(x), df/dx)` and overwrites `dparams` with `df/dp`.
    fn forward_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64);
}

/// A graph compiled once for repeated evaluation.
#[derive(Clone, Debug)]
pub struct GraphActivation {
    graph: ActivationGraph,
    tape: Tape,
}

impl GraphActivation {
    pub fn new(graph: ActivationGraph) -> Self {
        let tape = Tape::compile(&graph);
        GraphActivation { graph, tape }
    }

    pub fn graph(&self) -> &ActivationGraph {
        &self.graph
    }
}

impl ActivationFn for GraphActivation {
    fn name(&self) -> String {
        self.graph.to_text()
    }

    fn num_params(&self) -> usize {
        self.tape.param_count()
    }

    fn initial_params(&self) -> Vec<f64> {
        vec![1.0; self.tape.param_count()]
    }

    fn forward(&self, x: f64, params: &[f64]) -> f64 {
        self.tape.eval(x, params)
    }

    fn forward_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64) {
        self.tape.eval_grad(x, params, dparams)
    }
}

impl<T: ActivationFn + ?Sized> ActivationFn for Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn num_params(&self) -> usize {
        (**self).num_params()
    }

    fn initial_params(&self) -> Vec<f64> {
        (**self).initial_params()
    }

    fn forward(&self, x: f64, params: &[f64]) -> f64 {
        (**self).forward(x, params)
    }

    fn forward_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64) {
        (**self).forward_grad(x, params, dparams)
    }
}

impl<T: ActivationFn + ?Sized> ActivationFn for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn num_params(&self) -> usize {
        (**self).num_params()
    }

    fn initial_params(&self) -> Vec<f64> {
        (**self).initial_params()
    }

    fn forward(&self, x: f64, params: &[f64]) -> f64 {
        (**self).forward(x, params)
    }

    fn forward_grad(&self, x: f64, params: &[f64], dparams: &mut [f64]) -> (f64, f64) {
        (**self).forward_grad(x, params, dparams)
    }
}
