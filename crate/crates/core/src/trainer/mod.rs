//! Fitness by training a small dense network with the candidate activation.

mod data;
mod network;
mod schedule;

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use data::{generate_dataset, DataError, Dataset, DatasetKind, DatasetRef, Split};
pub use network::{train, Network, Scratch};
pub use schedule::{LrSchedule, ScheduleError, Warmup};

use crate::activation::{ActivationFn, GraphActivation};
use crate::fitness::{EvalError, Evaluator, FitnessRecord, Status};
use crate::graph::{ActivationGraph, MAX_PARAMS};
use crate::seed::{derive_seed, rng_from, stream};

/// How activation parameters are shared within a hidden layer. For dense
/// layers a channel is a unit, so the last two coincide.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    PerLayer,
    #[default]
    PerChannel,
    PerNeuron,
}

/// What a fitness record's runtime measures.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Wall-clock seconds.
    Wall,
    /// Training examples processed, in millions; reproducible across runs.
    #[default]
    Work,
}

/// Missing fields take their values from [`TrainSpec::default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub layer_widths: Vec<usize>,
    pub dataset: DatasetRef,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub granularity: Granularity,
    pub seed: u64,
    pub timing: Timing,
}

impl Default for TrainSpec {
    /// Two spirals, a `[2, 16, 16, 2]` network, 60 epochs with the rate
    /// dropped by 0.2 at 30%, 60% and 80% of training.
    fn default() -> Self {
        TrainSpec {
            layer_widths: vec![2, 16, 16, 2],
            dataset: DatasetRef::two_spirals(800, 400, 400, 0.03, 0),
            schedule: LrSchedule::step(0.1, vec![18, 36, 48], 0.2, 60),
            momentum: 0.9,
            l2: 5e-4,
            batch_size: 32,
            granularity: Granularity::PerChannel,
            seed: 0,
            timing: Timing::Work,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl TrainSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::Spec("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Spec(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(TrainError::Spec(format!("l2 must be finite and >= 0, got {}", self.l2)));
        }
        if self.layer_widths.len() < 3 {
            return Err(TrainError::Spec("need at least one hidden layer".into()));
        }
        Ok(())
    }

    /// The same spec with its schedule compressed by `factor`.
    pub fn compressed(&self, factor: usize) -> Result<TrainSpec, TrainError> {
        Ok(TrainSpec {
            schedule: self.schedule.compress(factor)?,
            ..self.clone()
        })
    }

    /// The same spec with every hidden layer widened by `factor`.
    pub fn widened(&self, factor: usize) -> TrainSpec {
        let n = self.layer_widths.len();
        let layer_widths = self
            .layer_widths
            .iter()
            .enumerate()
            .map(|(i, &w)| if i == 0 || i == n - 1 { w } else { w * factor })
            .collect();
        TrainSpec {
            layer_widths,
            ..self.clone()
        }
    }
}

/// Trains a fresh network with `act` under `schedule`. `run_seed` drives
/// weight initialization and shuffling; the dataset has its own seed.
pub fn train_activation(
    act: Arc<dyn ActivationFn>,
    spec: &TrainSpec,
    schedule: &LrSchedule,
    run_seed: u64,
) -> Result<FitnessRecord, TrainError> {
    spec.validate()?;
    schedule.validate()?;
    let ds = generate_dataset(&spec.dataset)?;
    let widths = &spec.layer_widths;
    if widths[0] != ds.features || widths[widths.len() - 1] != ds.classes {
        return Err(TrainError::Spec(format!(
            "layer widths {widths:?} do not match {} features and {} classes",
            ds.features, ds.classes
        )));
    }
    let mut rng = rng_from(run_seed);
    let mut net = Network::new(widths, act, spec.granularity, &mut rng)?;
    Ok(train(&mut net, &ds, spec, schedule, &mut rng))
}

fn graph_activation(graph: &ActivationGraph) -> Result<Arc<dyn ActivationFn>, TrainError> {
    if graph.param_count() > MAX_PARAMS {
        return Err(TrainError::Spec(format!(
            "{} parameters, at most {MAX_PARAMS} allowed",
            graph.param_count()
        )));
    }
    Ok(Arc::new(GraphActivation::new(graph.clone())))
}

/// Fitness under `spec.schedule` compressed by a factor of two.
pub fn fitness_compressed(
    graph: &ActivationGraph,
    spec: &TrainSpec,
    run_seed: u64,
) -> Result<FitnessRecord, TrainError> {
    let schedule = spec.schedule.compress(2)?;
    train_activation(graph_activation(graph)?, spec, &schedule, run_seed)
}

/// Fitness under the full `spec.schedule`.
pub fn fitness_full(graph: &ActivationGraph, spec: &TrainSpec, run_seed: u64) -> Result<FitnessRecord, TrainError> {
    train_activation(graph_activation(graph)?, spec, &spec.schedule, run_seed)
}

/// [`fitness_compressed`] as an [`Evaluator`].
#[derive(Clone, Debug)]
pub struct CompressedFitness(pub TrainSpec);

/// [`fitness_full`] as an [`Evaluator`].
#[derive(Clone, Debug)]
pub struct FullFitness(pub TrainSpec);

impl Evaluator for CompressedFitness {
    fn evaluate(&self, graph: &ActivationGraph, seed: u64) -> Result<FitnessRecord, EvalError> {
        fitness_compressed(graph, &self.0, seed).map_err(|e| EvalError(e.to_string()))
    }
}

impl Evaluator for FullFitness {
    fn evaluate(&self, graph: &ActivationGraph, seed: u64) -> Result<FitnessRecord, EvalError> {
        fitness_full(graph, &self.0, seed).map_err(|e| EvalError(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossCell {
    pub mean_fitness: f64,
    pub runs: usize,
    pub unstable_runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[graph][spec]`.
    pub cells: Vec<Vec<CrossCell>>,
}

/// Mean full fitness of every graph under every spec over `runs` seeds. The
/// same seeds are used in every cell; unstable runs count as 0.
pub fn cross_evaluate(
    graphs: &[ActivationGraph],
    specs: &[(String, TrainSpec)],
    runs: usize,
    seed: u64,
) -> Result<CrossMatrix, TrainError> {
    if graphs.is_empty() || specs.is_empty() || runs == 0 {
        return Err(TrainError::Spec(
            "cross evaluation needs graphs, specs and at least one run".into(),
        ));
    }
    for (_, s) in specs {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize, usize)> = (0..graphs.len())
        .flat_map(|g| (0..specs.len()).flat_map(move |s| (0..runs).map(move |r| (g, s, r))))
        .collect();
    let results: Vec<Result<FitnessRecord, TrainError>> = jobs
        .par_iter()
        .map(|&(g, s, r)| fitness_full(&graphs[g], &specs[s].1, derive_seed(seed, stream::CROSS_EVAL, r as u64)))
        .collect();
    let mut cells = vec![
        vec![
            CrossCell {
                mean_fitness: 0.0,
                runs,
                unstable_runs: 0
            };
            specs.len()
        ];
        graphs.len()
    ];
    for (&(g, s, _), res) in jobs.iter().zip(results) {
        let rec = res?;
        let cell = &mut cells[g][s];
        if rec.status == Status::Ok {
            cell.mean_fitness += rec.fitness / runs as f64;
        } else {
            cell.unstable_runs += 1;
        }
    }
    Ok(CrossMatrix {
        rows: graphs.iter().map(ActivationGraph::to_text).collect(),
        columns: specs.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    })
}

impl CrossMatrix {
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "expr,spec,mean_fitness,runs,unstable_runs")?;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    csv_quote(&self.rows[i]),
                    csv_quote(&self.columns[j]),
                    c.mean_fitness,
                    c.runs,
                    c.unstable_runs
                )?;
            }
        }
        Ok(())
    }
}

/// Quotes a CSV field when it contains a comma, quote or newline.
pub fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_curves_csv(rec: &FitnessRecord, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "epoch,lr,train_loss,train_acc,val_acc")?;
    for c in &rec.curves {
        writeln!(w, "{},{},{},{},{}", c.epoch, c.lr, c.train_loss, c.train_acc, c.val_acc)?;
    }
    Ok(())
}

pub fn write_trajectory_csv(rec: &FitnessRecord, mut w: impl Write) -> io::Result<()> {
    writeln!(w, "epoch,param_index,layer,mean_value")?;
    for (epoch, layers) in rec.param_trajectory.iter().enumerate() {
        for (layer, means) in layers.iter().enumerate() {
            for (i, v) in means.iter().enumerate() {
                writeln!(w, "{epoch},{i},{layer},{v}")?;
            }
        }
    }
    Ok(())
}
