//! Regularized evolution with a fitness gate.

use std::collections::VecDeque;
use std::io::{self, BufRead, Write};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mutate::{init_random, mutate, parameterize, MutationKind};
use crate::fitness::{evaluate_contained, Evaluator, FitnessRecord, Status};
use crate::graph::ActivationGraph;
use crate::seed::{derive_seed, rng_from, stream, Rng};
use crate::trainer::Granularity;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Sequential,
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Population window size `P`.
    pub population: usize,
    /// Tournament sample size `S`, drawn with replacement.
    pub sample: usize,
    /// Total number of evaluations `C`.
    pub budget: usize,
    /// Minimum fitness `V` for entering the population.
    pub threshold: f64,
    #[serde(default)]
    pub granularity: Granularity,
    /// When false, candidates never carry parameters.
    #[serde(default = "yes")]
    pub parameterize: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: SearchMode,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("need 1 <= sample <= population <= budget, got S={sample}, P={population}, C={budget}")]
    Sizes {
        sample: usize,
        population: usize,
        budget: usize,
    },
    #[error("threshold must lie in [0, 1), got {0}")]
    Threshold(f64),
}

impl EvolutionConfig {
    pub fn new(population: usize, sample: usize, budget: usize, threshold: f64) -> Self {
        EvolutionConfig {
            population,
            sample,
            budget,
            threshold,
            granularity: Granularity::default(),
            parameterize: true,
            seed: 0,
            mode: SearchMode::Sequential,
        }
    }

    /// The settings that turn the search into random search.
    pub fn random_search(mut self) -> Self {
        self.population = 1;
        self.sample = 1;
        self.threshold = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1 <= self.sample && self.sample <= self.population && self.population <= self.budget) {
            return Err(ConfigError::Sizes {
                sample: self.sample,
                population: self.population,
                budget: self.budget,
            });
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub seq: u64,
    pub graph: ActivationGraph,
    pub fitness: f64,
    pub status: Status,
    pub runtime_seconds: f64,
    pub parent_seq: Option<u64>,
    pub mutation: Option<MutationKind>,
    /// Sequence numbers drawn in the tournament that chose the parent.
    pub sampled: Vec<u64>,
    /// Whether the candidate passed the gate and joined the population.
    pub accepted: bool,
    /// Seed handed to the fitness function.
    pub eval_seed: u64,
    /// Completed evaluations when the candidate was proposed; the
    /// tournament drew from the accepted entries among those.
    pub completed_at_issue: usize,
}

impl Candidate {
    pub fn k(&self) -> usize {
        self.graph.param_count()
    }
}

/// A candidate waiting for its fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    /// Order of issue, distinct from the completion-order sequence number.
    pub index: u64,
    pub graph: ActivationGraph,
    pub parent_seq: Option<u64>,
    pub mutation: Option<MutationKind>,
    pub sampled: Vec<u64>,
    pub eval_seed: u64,
    pub completed_at_issue: usize,
}

/// Selection and population state shared by the sequential loop and the
/// distributed coordinator. Proposals may be issued before earlier ones are
/// recorded; the population is always the last `P` accepted records.
pub struct SearchState {
    config: EvolutionConfig,
    rng: Rng,
    population: VecDeque<u64>,
    history: Vec<Candidate>,
    issued: u64,
}

impl SearchState {
    pub fn new(config: EvolutionConfig) -> Self {
        let rng = rng_from(derive_seed(config.seed, stream::SEARCH, 0));
        SearchState {
            config,
            rng,
            population: VecDeque::new(),
            history: Vec::new(),
            issued: 0,
        }
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn completed(&self) -> usize {
        self.history.len()
    }

    pub fn issued(&self) -> u64 {
        self.issued
    }

    pub fn is_done(&self) -> bool {
        self.history.len() >= self.config.budget
    }

    /// Sequence numbers of the current population, oldest first.
    pub fn population(&self) -> impl Iterator<Item = u64> + '_ {
        self.population.iter().copied()
    }

    pub fn history(&self) -> &[Candidate] {
        &self.history
    }

    fn finish(&mut self, graph: ActivationGraph) -> ActivationGraph {
        if self.config.parameterize {
            parameterize(&graph, &mut self.rng)
        } else {
            graph.strip_params()
        }
    }

    /// Issues the next candidate: a random one while the population is not
    /// yet full, otherwise a mutation of the fittest of `S` members sampled
    /// with replacement (ties go to the newest).
    pub fn propose(&mut self) -> Proposal {
        let index = self.issued;
        self.issued += 1;
        let eval_seed = derive_seed(self.config.seed, stream::CANDIDATE, index);
        let completed_at_issue = self.history.len();
        if self.population.len() < self.config.population {
            let g = init_random(&mut self.rng);
            return Proposal {
                index,
                graph: self.finish(g),
                parent_seq: None,
                mutation: None,
                sampled: Vec::new(),
                eval_seed,
                completed_at_issue,
            };
        }
        let mut sampled = Vec::with_capacity(self.config.sample);
        for _ in 0..self.config.sample {
            let i = self.rng.random_range(0..self.population.len());
            sampled.push(self.population[i]);
        }
        let parent = *sampled
            .iter()
            .max_by(|&&a, &&b| {
                let (fa, fb) = (self.history[a as usize].fitness, self.history[b as usize].fitness);
                fa.total_cmp(&fb).then(a.cmp(&b))
            })
            .expect("sample size is at least one");
        let (child, kind) = mutate(&self.history[parent as usize].graph, &mut self.rng);
        Proposal {
            index,
            graph: self.finish(child),
            parent_seq: Some(parent),
            mutation: Some(kind),
            sampled,
            eval_seed,
            completed_at_issue,
        }
    }

    /// Appends a completed evaluation and applies the gate.
    pub fn record(&mut self, proposal: Proposal, record: FitnessRecord) -> &Candidate {
        let record = record.sanitized();
        let seq = self.history.len() as u64;
        let accepted = record.status == Status::Ok && record.fitness >= self.config.threshold;
        if accepted {
            self.population.push_back(seq);
            if self.population.len() > self.config.population {
                self.population.pop_front();
            }
        }
        self.history.push(Candidate {
            seq,
            graph: proposal.graph,
            fitness: record.fitness,
            status: record.status,
            runtime_seconds: record.runtime_seconds,
            parent_seq: proposal.parent_seq,
            mutation: proposal.mutation,
            sampled: proposal.sampled,
            accepted,
            eval_seed: proposal.eval_seed,
            completed_at_issue: proposal.completed_at_issue,
        });
        &self.history[seq as usize]
    }

    pub fn into_history(self) -> SearchHistory {
        SearchHistory {
            window: self.config.population,
            candidates: self.history,
        }
    }
}

/// Runs the search to its budget, one evaluation at a time. Evaluation
/// failures are recorded as unstable candidates.
pub fn evolve(config: &EvolutionConfig, eval: &dyn Evaluator) -> Result<SearchHistory, ConfigError> {
    evolve_with(config, eval, |_| {})
}

/// As [`evolve`], calling `on_record` after every evaluation.
pub fn evolve_with(
    config: &EvolutionConfig,
    eval: &dyn Evaluator,
    mut on_record: impl FnMut(&Candidate),
) -> Result<SearchHistory, ConfigError> {
    config.validate()?;
    let mut state = SearchState::new(config.clone());
    while !state.is_done() {
        let p = state.propose();
        let r = evaluate_contained(eval, &p.graph, p.eval_seed);
        on_record(state.record(p, r));
    }
    Ok(state.into_history())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchHistory {
    /// Window size used for the running average.
    pub window: usize,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryLine {
    pub seq: u64,
    pub expr: String,
    pub k: usize,
    pub fitness: f64,
    pub status: Status,
    pub runtime_seconds: f64,
    pub parent_seq: Option<u64>,
    pub mutation: Option<MutationKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProgressRow {
    pub seq: u64,
    pub cumulative_seconds: f64,
    pub best_so_far: f64,
    pub window_avg: f64,
}

impl SearchHistory {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn accepted(&self) -> usize {
        self.candidates.iter().filter(|c| c.accepted).count()
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .max_by(|a, b| a.fitness.total_cmp(&b.fitness).then(b.seq.cmp(&a.seq)))
    }

    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = 0.0f64;
        self.candidates
            .iter()
            .map(|c| {
                best = best.max(c.fitness);
                best
            })
            .collect()
    }

    /// Mean fitness of the last `window` evaluated candidates, after each one.
    pub fn window_average(&self) -> Vec<f64> {
        let w = self.window.max(1);
        (0..self.candidates.len())
            .map(|i| {
                let n = (i + 1).min(w);
                self.candidates[i + 1 - n..=i].iter().map(|c| c.fitness).sum::<f64>() / n as f64
            })
            .collect()
    }

    pub fn progress(&self) -> Vec<ProgressRow> {
        let best = self.best_so_far();
        let avg = self.window_average();
        let mut t = 0.0;
        self.candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                t += c.runtime_seconds;
                ProgressRow {
                    seq: c.seq,
                    cumulative_seconds: t,
                    best_so_far: best[i],
                    window_avg: avg[i],
                }
            })
            .collect()
    }

    pub fn lines(&self) -> Vec<HistoryLine> {
        self.candidates
            .iter()
            .map(|c| HistoryLine {
                seq: c.seq,
                expr: c.graph.to_text(),
                k: c.k(),
                fitness: c.fitness,
                status: c.status,
                runtime_seconds: c.runtime_seconds,
                parent_seq: c.parent_seq,
                mutation: c.mutation,
            })
            .collect()
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        for line in self.lines() {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write_progress_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "seq,cumulative_seconds,best_so_far,window_avg")?;
        for r in self.progress() {
            writeln!(
                w,
                "{},{},{},{}",
                r.seq, r.cumulative_seconds, r.best_so_far, r.window_avg
            )?;
        }
        Ok(())
    }
}

/// Reads history records, skipping blank lines and any object without a
/// `seq` field (such as a provenance header).
pub fn read_history_lines(r: impl BufRead) -> io::Result<Vec<HistoryLine>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        if value.get("seq").is_none() {
            continue;
        }
        let parsed = serde_json::from_value(value)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        out.push(parsed);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankOptions {
    pub top_n: usize,
    pub runs: usize,
    pub keep: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RerankOptions {
    fn default() -> Self {
        RerankOptions {
            top_n: 10,
            runs: 2,
            keep: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub seq: u64,
    pub graph: ActivationGraph,
    pub search_fitness: f64,
    pub run_fitness: Vec<f64>,
    /// Mean of `run_fitness`.
    pub adjusted: f64,
}

/// The `top_n` distinct expressions by search fitness (ties to the earlier
/// candidate), in that order.
pub fn top_candidates(history: &SearchHistory, top_n: usize) -> Vec<&Candidate> {
    let mut order: Vec<&Candidate> = history.candidates.iter().collect();
    order.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.seq.cmp(&b.seq)));
    let mut seen = std::collections::HashSet::new();
    order
        .into_iter()
        .filter(|c| seen.insert(c.graph.to_text()))
        .take(top_n)
        .collect()
}

/// Re-evaluates the best candidates `runs` times each with distinct seeds
/// and keeps the `keep` best by mean fitness. Unstable runs count as 0.
pub fn rerank(history: &SearchHistory, eval: &dyn Evaluator, opts: &RerankOptions) -> Vec<Ranked> {
    let top = top_candidates(history, opts.top_n);
    let jobs: Vec<(usize, usize)> = (0..top.len())
        .flat_map(|i| (0..opts.runs).map(move |r| (i, r)))
        .collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let seed = derive_seed(derive_seed(opts.seed, stream::RERANK, top[i].seq), 0, r as u64);
            let rec = evaluate_contained(eval, &top[i].graph, seed);
            if rec.is_ok() {
                rec.fitness
            } else {
                0.0
            }
        })
        .collect();
    let mut ranked: Vec<Ranked> = top
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let run_fitness = results[i * opts.runs..(i + 1) * opts.runs].to_vec();
            let adjusted = if run_fitness.is_empty() {
                0.0
            } else {
                run_fitness.iter().sum::<f64>() / run_fitness.len() as f64
            };
            Ranked {
                seq: c.seq,
                graph: c.graph.clone(),
                search_fitness: c.fitness,
                run_fitness,
                adjusted,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.adjusted.total_cmp(&a.adjusted).then(a.seq.cmp(&b.seq)));
    ranked.truncate(opts.keep);
    ranked
}

/// Indices of the vectors that no other vector dominates, in input order.
pub fn non_dominated(vectors: &[Vec<f64>]) -> Vec<usize> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y);
    (0..vectors.len())
        .filter(|&i| !(0..vectors.len()).any(|j| j != i && dominates(&vectors[j], &vectors[i])))
        .collect()
}

/// Candidates whose fitness vectors are not dominated, ordered by sequence
/// number.
pub fn pareto_general<'a>(candidates: &'a [Candidate], fitness: &[Vec<f64>]) -> Vec<&'a Candidate> {
    assert_eq!(candidates.len(), fitness.len(), "one fitness vector per candidate");
    let mut out: Vec<&Candidate> = non_dominated(fitness).into_iter().map(|i| &candidates[i]).collect();
    out.sort_by_key(|c| c.seq);
    out
}
