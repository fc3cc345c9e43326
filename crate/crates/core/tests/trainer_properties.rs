mod common;

use std::sync::Arc;

use actsearch::seed::{derive_seed, rng_from, stream};
use actsearch::trainer::{
    cross_evaluate, fitness_full, generate_dataset, train_activation, Dataset, DatasetKind, DatasetRef, Granularity,
    LrSchedule, Network, TrainSpec,
};
use actsearch::{ActivationGraph, GraphActivation, ParamValues, Status};
use common::{central_difference, random_graph, relative_error, same};
use proptest::prelude::*;
use rand::Rng as _;

const WIDTHS: [usize; 3] = [2, 4, 2];

/// Smallest kink margin over every hidden pre-activation of a 2-4-2 network
/// with per-channel parameters.
fn network_margin(g: &ActivationGraph, params: &[f64], rows: &[&[f64]]) -> f64 {
    let k = g.param_count();
    let mut margin = f64::INFINITY;
    for x in rows {
        for u in 0..4 {
            let z = params[u * 2] * x[0] + params[u * 2 + 1] * x[1] + params[8 + u];
            let p = ParamValues::from_vec(params[22 + u * k..22 + (u + 1) * k].to_vec());
            margin = margin.min(g.kink_margin(&p, z));
        }
    }
    margin
}

/// Largest relative error between the analytic loss gradient and central
/// differences over every network parameter. `None` when the setup is not
/// smooth or not finite.
fn network_gradient_error(g: &ActivationGraph, seed: u64) -> Option<f64> {
    let ds = generate_dataset(&DatasetRef::two_spirals(16, 8, 0, 0.03, seed)).unwrap();
    let mut rng = rng_from(seed);
    let act = Arc::new(GraphActivation::new(g.clone()));
    let mut net = Network::new(&WIDTHS, act, Granularity::PerChannel, &mut rng).unwrap();
    for i in 8..12 {
        net.params[i] = rng.random_range(-0.5..0.5);
    }
    for i in 22..net.params.len() {
        net.params[i] = rng.random_range(0.5..1.5);
    }
    let rows: Vec<usize> = (0..ds.train.len()).collect();
    let inputs: Vec<&[f64]> = rows.iter().map(|&i| ds.train.row(i, 2)).collect();
    if network_margin(g, &net.params, &inputs) < 1e-3 {
        return None;
    }
    let (loss, grad) = net.data_loss_grad(&ds.train, 2, &rows);
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut worst: f64 = 0.0;
    for i in 0..net.params.len() {
        let p0 = net.params[i];
        let h = 1e-5 * p0.abs().max(1.0);
        let mut probe = |p: f64| {
            net.params[i] = p;
            net.data_loss(&ds.train, 2, &rows)
        };
        let stencil: Vec<f64> = [-2.0, -1.0, 1.0, 2.0].iter().map(|s| probe(p0 + s * h)).collect();
        net.params[i] = p0;
        if stencil.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let numeric = (stencil[0] - 8.0 * stencil[1] + 8.0 * stencil[2] - stencil[3]) / (12.0 * h);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    Some(worst)
}

#[test]
fn network_gradients_match_differences() {
    let mut checked = 0;
    for seed in 0..120 {
        let g = random_graph(seed);
        if let Some(err) = network_gradient_error(&g, seed) {
            assert!(err <= 1e-4, "{g}: relative error {err}");
            checked += 1;
        }
    }
    assert!(checked >= 60, "only {checked} graphs were smooth enough to check");
}

#[test]
fn central_difference_of_a_cubic() {
    let d = central_difference(|x| x * x * x, 2.0, 1e-3);
    assert!((d - 12.0).abs() < 1e-9);
}

fn sample_rows(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed);
    (0..10)
        .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect()
}

fn small_spec(epochs: usize) -> TrainSpec {
    TrainSpec {
        layer_widths: vec![2, 6, 2],
        dataset: DatasetRef::two_spirals(64, 32, 0, 0.03, 1),
        schedule: LrSchedule::step(0.1, vec![epochs / 2], 0.2, epochs),
        ..TrainSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parameterized_and_stripped_networks_start_identical(seed in any::<u64>()) {
        let g = random_graph(seed);
        let bare = g.strip_params();
        let a = Network::new(&WIDTHS, Arc::new(GraphActivation::new(g)), Granularity::PerChannel, &mut rng_from(seed)).unwrap();
        let b = Network::new(&WIDTHS, Arc::new(GraphActivation::new(bare)), Granularity::PerChannel, &mut rng_from(seed)).unwrap();
        let (mut sa, mut sb) = (a.scratch(), b.scratch());
        for x in sample_rows(seed) {
            let (la, lb) = (a.logits(&x, &mut sa), b.logits(&x, &mut sb));
            prop_assert!(la.iter().zip(&lb).all(|(u, v)| same(*u, *v)));
        }
    }

    #[test]
    fn activation_parameter_count_follows_granularity(
        hidden in prop::collection::vec(1usize..12, 1..4),
        seed in any::<u64>(),
    ) {
        let g = random_graph(seed);
        let k = g.param_count();
        let mut widths = vec![3];
        widths.extend(&hidden);
        widths.push(2);
        for (gran, expected) in [
            (Granularity::PerLayer, k * hidden.len()),
            (Granularity::PerChannel, k * hidden.iter().sum::<usize>()),
            (Granularity::PerNeuron, k * hidden.iter().sum::<usize>()),
        ] {
            let net = Network::new(&widths, Arc::new(GraphActivation::new(g.clone())), gran, &mut rng_from(0)).unwrap();
            prop_assert_eq!(net.activation_param_count(), expected);
        }
    }

    #[test]
    fn schedule_steps_only_at_milestones_and_warmup(
        total in 2usize..400,
        raw in prop::collection::btree_set(1usize..400, 0..5),
        warm in 0usize..4,
    ) {
        let milestones: Vec<usize> = raw.into_iter().filter(|&m| m < total && m > warm).collect();
        let mut s = LrSchedule::step(0.1, milestones.clone(), 0.2, total);
        if warm > 0 {
            s = s.with_warmup(0.01, warm);
        }
        prop_assume!(s.validate().is_ok());
        let jumps = (1..total).filter(|&e| s.lr_at(e) != s.lr_at(e - 1)).count();
        prop_assert_eq!(jumps, milestones.len() + usize::from(warm > 0));
        if let Ok(c) = s.compress(2) {
            prop_assert!((2 * c.total_epochs).abs_diff(total) <= 1);
            prop_assert_eq!(c.milestones.len(), milestones.len());
            for (m, half) in milestones.iter().zip(&c.milestones) {
                prop_assert!((2 * half).abs_diff(*m) <= 1);
            }
            prop_assert_eq!(c.warmup, s.warmup.clone());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn training_records_are_consistent(seed in any::<u64>()) {
        let g = random_graph(seed);
        let spec = small_spec(4);
        let rec = train_activation(Arc::new(GraphActivation::new(g)), &spec, &spec.schedule, seed).unwrap();
        prop_assert_eq!(rec.curves.len(), rec.param_trajectory.len());
        prop_assert!(rec.curves.len() <= 4);
        prop_assert!(rec.runtime_seconds.is_finite());
        if !rec.curves.is_empty() {
            prop_assert!(rec.runtime_seconds > 0.0);
        }
        for c in &rec.curves {
            prop_assert!(c.train_loss.is_finite() && c.train_acc.is_finite() && c.val_acc.is_finite());
        }
        prop_assert!(rec.param_trajectory.iter().flatten().flatten().all(|v| v.is_finite()));
        match rec.status {
            Status::Ok => {
                prop_assert_eq!(rec.curves.len(), 4);
                prop_assert!((0.0..=1.0).contains(&rec.fitness));
            }
            Status::Unstable => prop_assert_eq!(rec.fitness, 0.0),
        }
    }
}

#[test]
fn overflow_chain_is_contained() {
    let g = ActivationGraph::parse("exp(exp(exp(p0(x))))").unwrap();
    let spec = small_spec(6);
    let rec = train_activation(Arc::new(GraphActivation::new(g)), &spec, &spec.schedule, 0).unwrap();
    assert_eq!(rec.status, Status::Unstable);
    assert_eq!(rec.fitness, 0.0);
    assert!(rec.curves.len() < 6);
}

/// Validation accuracy of a softmax linear classifier fit by full-batch
/// gradient descent.
fn linear_probe(ds: &Dataset) -> f64 {
    let (f, c) = (ds.features, ds.classes);
    let mut w = vec![0.0; (f + 1) * c];
    let scores = |w: &[f64], x: &[f64]| -> Vec<f64> {
        (0..c)
            .map(|k| w[k * (f + 1) + f] + (0..f).map(|j| w[k * (f + 1) + j] * x[j]).sum::<f64>())
            .collect()
    };
    let n = ds.train.len();
    for _ in 0..500 {
        let mut grad = vec![0.0; w.len()];
        for i in 0..n {
            let x = ds.train.row(i, f);
            let s = scores(&w, x);
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
            for k in 0..c {
                let p = (s[k] - m).exp() / z - f64::from(u8::from(ds.train.y[i] == k));
                for j in 0..f {
                    grad[k * (f + 1) + j] += p * x[j] / n as f64;
                }
                grad[k * (f + 1) + f] += p / n as f64;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= 0.5 * g;
        }
    }
    let hits = (0..ds.val.len())
        .filter(|&i| {
            let s = scores(&w, ds.val.row(i, f));
            let best = (0..c).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
            best == ds.val.y[i]
        })
        .count();
    hits as f64 / ds.val.len() as f64
}

#[test]
fn linear_probe_separates_blobs_but_not_spirals() {
    let spirals = generate_dataset(&DatasetRef::two_spirals(400, 200, 0, 0.0, 3)).unwrap();
    let acc = linear_probe(&spirals);
    assert!(acc < 0.6, "spirals probe {acc}");
    let blobs = generate_dataset(&DatasetRef::synthetic(DatasetKind::Blobs, (400, 200, 0), 2, 0.0, 3)).unwrap();
    let acc = linear_probe(&blobs);
    assert!(acc >= 0.99, "blobs probe {acc}");
}

#[test]
fn warmup_rate_applies_to_the_first_epoch() {
    let s = LrSchedule::step(0.1, vec![91, 137], 0.1, 182).with_warmup(0.01, 1);
    assert_eq!(s.lr_at(0), 0.01);
    assert_eq!(s.lr_at(1), 0.1);
}

// Frozen from five ReLU runs on the default spec: every run reached 1.0,
// so mean - 2 sigma is 1.0, above the 0.95 floor.
#[test]
fn relu_clears_the_default_floor() {
    let spec = TrainSpec::default();
    let relu = ActivationGraph::parse("relu(x)").unwrap();
    let acc: Vec<f64> = (0..5).map(|s| fitness_full(&relu, &spec, s).unwrap().fitness).collect();
    let mean = acc.iter().sum::<f64>() / 5.0;
    let sd = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!(mean - 2.0 * sd >= 0.95, "{acc:?}");
}

#[test]
fn cross_evaluation_cells_are_fitness_means() {
    let spec = small_spec(4);
    let graphs = [
        ActivationGraph::parse("relu(x)").unwrap(),
        ActivationGraph::parse("tanh(x)").unwrap(),
    ];
    let specs = vec![
        ("small".to_string(), spec.clone()),
        ("wide".to_string(), spec.widened(2)),
    ];
    let m = cross_evaluate(&graphs, &specs, 2, 9).unwrap();
    assert_eq!((m.cells.len(), m.cells[0].len()), (2, 2));
    assert_eq!(m.columns, ["small", "wide"]);
    let one = cross_evaluate(&graphs[..1], &specs[..1], 2, 9).unwrap();
    let want = (0..2)
        .map(|r| {
            fitness_full(&graphs[0], &spec, derive_seed(9, stream::CROSS_EVAL, r))
                .unwrap()
                .fitness
        })
        .sum::<f64>()
        / 2.0;
    assert_eq!(one.cells[0][0].mean_fitness, want);
    assert_eq!(one.cells[0][0], m.cells[0][0]);
}
