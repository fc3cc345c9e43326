//! Evolutionary search for parametric activation functions.

pub mod activation;
pub mod analysis;
pub mod distrib;
pub mod evolve;
pub mod fitness;
pub mod graph;
pub mod seed;
pub mod trainer;

pub use activation::{ActivationFn, GraphActivation};
pub use fitness::{EvalError, Evaluator, FitnessRecord, Status};
pub use graph::{ActivationGraph, Expr, ParamValues};
