//! Dense classifier with a pluggable hidden activation.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::data::{Dataset, Split};
use super::schedule::LrSchedule;
use super::{Granularity, Timing, TrainError, TrainSpec};
use crate::activation::ActivationFn;
use crate::fitness::{EpochStats, FitnessRecord, Status};
use crate::seed::Rng;

#[derive(Copy, Clone, Debug)]
struct Layer {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

/// All trainable values live in one flat vector: each layer's weights
/// (row-major, `fan_out x fan_in`) and biases, then the activation
/// parameters of every hidden layer.
pub struct Network {
    act: Arc<dyn ActivationFn>,
    k: usize,
    granularity: Granularity,
    layers: Vec<Layer>,
    act_offsets: Vec<usize>,
    weights_end: usize,
    pub params: Vec<f64>,
}

/// Per-sample buffers reused across the forward and backward pass.
pub struct Scratch {
    acts: Vec<Vec<f64>>,
    dact: Vec<Vec<f64>>,
    dpar: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
    p_grad: Vec<f64>,
}

impl Network {
    /// Weights start from `N(0, 2 / fan_in)`, biases from 0, activation
    /// parameters from the activation's initial values.
    pub fn new(
        widths: &[usize],
        act: Arc<dyn ActivationFn>,
        granularity: Granularity,
        rng: &mut Rng,
    ) -> Result<Network, TrainError> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(TrainError::Spec(format!(
                "layer widths need an input, at least one hidden layer and an output, all positive: {widths:?}"
            )));
        }
        let k = act.num_params();
        let init = act.initial_params();
        let mut layers = Vec::new();
        let mut params = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = params.len();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive deviation");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            let b = params.len();
            params.extend(std::iter::repeat_n(0.0, fan_out));
            layers.push(Layer { w, b, fan_in, fan_out });
        }
        let weights_end = params.len();
        let mut act_offsets = Vec::new();
        for &width in &widths[1..widths.len() - 1] {
            act_offsets.push(params.len());
            let groups = match granularity {
                Granularity::PerLayer => 1,
                Granularity::PerChannel | Granularity::PerNeuron => width,
            };
            for _ in 0..groups {
                params.extend_from_slice(&init);
            }
        }
        Ok(Network {
            act,
            k,
            granularity,
            layers,
            act_offsets,
            weights_end,
            params,
        })
    }

    pub fn hidden_layers(&self) -> usize {
        self.act_offsets.len()
    }

    pub fn activation_param_count(&self) -> usize {
        self.params.len() - self.weights_end
    }

    /// Whether `params[i]` is a connection weight (biases and activation
    /// parameters are not).
    pub fn is_weight(&self, i: usize) -> bool {
        self.layers.iter().any(|l| i >= l.w && i < l.w + l.fan_in * l.fan_out)
    }

    fn act_range(&self, hidden: usize, unit: usize) -> std::ops::Range<usize> {
        let group = match self.granularity {
            Granularity::PerLayer => 0,
            _ => unit,
        };
        let start = self.act_offsets[hidden] + group * self.k;
        start..start + self.k
    }

    /// Mean value of each activation parameter over each hidden layer.
    pub fn activation_means(&self) -> Vec<Vec<f64>> {
        (0..self.hidden_layers())
            .map(|h| {
                let width = self.layers[h].fan_out;
                let groups = match self.granularity {
                    Granularity::PerLayer => 1,
                    _ => width,
                };
                (0..self.k)
                    .map(|i| {
                        (0..groups)
                            .map(|g| self.params[self.act_offsets[h] + g * self.k + i])
                            .sum::<f64>()
                            / groups as f64
                    })
                    .collect()
            })
            .collect()
    }

    pub fn scratch(&self) -> Scratch {
        let mut acts = vec![vec![0.0; self.layers[0].fan_in]];
        acts.extend(self.layers.iter().map(|l| vec![0.0; l.fan_out]));
        let hidden = &self.layers[..self.layers.len() - 1];
        Scratch {
            acts,
            dact: hidden.iter().map(|l| vec![0.0; l.fan_out]).collect(),
            dpar: hidden.iter().map(|l| vec![0.0; l.fan_out * self.k]).collect(),
            delta: Vec::new(),
            back: Vec::new(),
            p_grad: vec![0.0; self.k],
        }
    }

    fn forward(&self, x: &[f64], s: &mut Scratch, with_grad: bool) {
        s.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for o in 0..layer.fan_out {
                let row = &self.params[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                let z = row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + self.params[layer.b + o];
                out[o] = if l == last {
                    z
                } else {
                    let p = &self.params[self.act_range(l, o)];
                    if with_grad {
                        let (v, d) = self.act.forward_grad(z, p, &mut s.p_grad);
                        s.dact[l][o] = d;
                        s.dpar[l][o * self.k..(o + 1) * self.k].copy_from_slice(&s.p_grad);
                        v
                    } else {
                        self.act.forward(z, p)
                    }
                };
            }
        }
    }

    pub fn logits(&self, x: &[f64], s: &mut Scratch) -> Vec<f64> {
        self.forward(x, s, false);
        s.acts[self.layers.len()].clone()
    }

    /// Adds the gradient of one sample's cross-entropy to `grad` and returns
    /// `(loss, correct)`.
    pub fn accumulate(&self, x: &[f64], y: usize, grad: &mut [f64], s: &mut Scratch) -> (f64, bool) {
        self.forward(x, s, true);
        let out = &s.acts[self.layers.len()];
        let (loss, probs) = cross_entropy(out, y);
        let correct = argmax(out) == Some(y);
        s.delta.clear();
        s.delta.extend_from_slice(&probs);
        s.delta[y] -= 1.0;
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let input = &s.acts[l];
            for o in 0..layer.fan_out {
                let d = s.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[layer.b + o] += d;
            }
            if l == 0 {
                break;
            }
            let h = l - 1;
            s.back.clear();
            s.back.resize(layer.fan_in, 0.0);
            for o in 0..layer.fan_out {
                let d = s.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &self.params[layer.w + o * layer.fan_in..layer.w + (o + 1) * layer.fan_in];
                for (b, w) in s.back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            s.delta.clear();
            for i in 0..layer.fan_in {
                let g = s.back[i];
                if g == 0.0 {
                    s.delta.push(0.0);
                    continue;
                }
                let range = self.act_range(h, i);
                for (j, gi) in range.enumerate() {
                    grad[gi] += g * s.dpar[h][i * self.k + j];
                }
                s.delta.push(g * s.dact[h][i]);
            }
        }
        (loss, correct)
    }

    /// Mean cross-entropy over the given rows of `split`, without L2.
    pub fn data_loss(&self, split: &Split, features: usize, rows: &[usize]) -> f64 {
        let mut s = self.scratch();
        rows.iter()
            .map(|&i| cross_entropy(&self.logits(split.row(i, features), &mut s), split.y[i]).0)
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Mean cross-entropy and its gradient over the given rows, without L2.
    pub fn data_loss_grad(&self, split: &Split, features: usize, rows: &[usize]) -> (f64, Vec<f64>) {
        let mut s = self.scratch();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for &i in rows {
            loss += self.accumulate(split.row(i, features), split.y[i], &mut grad, &mut s).0;
        }
        let n = rows.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn accuracy(&self, split: &Split, features: usize) -> f64 {
        if split.is_empty() {
            return 0.0;
        }
        let mut s = self.scratch();
        let correct = (0..split.len())
            .filter(|&i| argmax(&self.logits(split.row(i, features), &mut s)) == Some(split.y[i]))
            .count();
        correct as f64 / split.len() as f64
    }

    pub fn l2_penalty(&self, l2: f64) -> f64 {
        l2 * self
            .layers
            .iter()
            .flat_map(|l| &self.params[l.w..l.w + l.fan_in * l.fan_out])
            .map(|w| w * w)
            .sum::<f64>()
    }

    fn add_l2_grad(&self, l2: f64, grad: &mut [f64]) {
        for l in &self.layers {
            for i in l.w..l.w + l.fan_in * l.fan_out {
                grad[i] += 2.0 * l2 * self.params[i];
            }
        }
    }
}

/// `(-log softmax(z)[y], softmax(z))`, computed with the max shift.
fn cross_entropy(z: &[f64], y: usize) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (z[y] - m);
    (loss, exps.iter().map(|e| e / sum).collect())
}

/// Index of the largest finite-comparable value; `None` if any value is NaN.
fn argmax(z: &[f64]) -> Option<usize> {
    if z.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut best = 0;
    for i in 1..z.len() {
        if z[i] > z[best] {
            best = i;
        }
    }
    Some(best)
}

/// Minibatch SGD with Nesterov momentum:
/// `v <- mu v - lr g`, `w <- w + mu v - lr g`.
/// Training stops as soon as the loss or any parameter is non-finite.
pub fn train(net: &mut Network, ds: &Dataset, spec: &TrainSpec, schedule: &LrSchedule, rng: &mut Rng) -> FitnessRecord {
    let start = Instant::now();
    let mut work = 0u64;
    let runtime = |work: u64| match spec.timing {
        Timing::Wall => start.elapsed().as_secs_f64(),
        Timing::Work => work as f64 * 1e-6,
    };
    let f = ds.features;
    let n = ds.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity = vec![0.0; net.params.len()];
    let mut grad = vec![0.0; net.params.len()];
    let mut scratch = net.scratch();
    let mut curves = Vec::new();
    let mut trajectory = Vec::new();
    let unstable = |curves: Vec<EpochStats>, trajectory: Vec<Vec<Vec<f64>>>, t: f64| FitnessRecord {
        fitness: 0.0,
        status: Status::Unstable,
        runtime_seconds: t,
        curves,
        param_trajectory: trajectory,
        test_acc: None,
    };
    for epoch in 0..schedule.total_epochs {
        let lr = schedule.lr_at(epoch);
        order.shuffle(rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (l, c) = net.accumulate(ds.train.row(i, f), ds.train.y[i], &mut grad, &mut scratch);
                batch_loss += l;
                correct += usize::from(c);
            }
            work += batch.len() as u64;
            let m = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= m);
            let loss = batch_loss / m + net.l2_penalty(spec.l2);
            net.add_l2_grad(spec.l2, &mut grad);
            if !loss.is_finite() {
                return unstable(curves, trajectory, runtime(work));
            }
            let mu = spec.momentum;
            for ((w, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v - lr * g;
                *w += mu * *v - lr * g;
            }
            if net.params.iter().any(|p| !p.is_finite()) {
                return unstable(curves, trajectory, runtime(work));
            }
            loss_sum += batch_loss;
        }
        let val_acc = net.accuracy(&ds.val, f);
        work += ds.val.len() as u64;
        curves.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            val_acc,
        });
        trajectory.push(net.activation_means());
    }
    let fitness = curves.last().map_or(0.0, |c| c.val_acc);
    let test_acc = (!ds.test.is_empty()).then(|| net.accuracy(&ds.test, f));
    FitnessRecord {
        fitness,
        status: Status::Ok,
        runtime_seconds: runtime(work).max(f64::MIN_POSITIVE),
        curves,
        param_trajectory: trajectory,
        test_acc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::GraphActivation;
    use crate::graph::ActivationGraph;
    use crate::seed::rng_from;

    fn act(s: &str) -> Arc<dyn ActivationFn> {
        Arc::new(GraphActivation::new(ActivationGraph::parse(s).unwrap()))
    }

    #[test]
    fn parameter_counts_follow_granularity() {
        let mut rng = rng_from(0);
        let g = act("p0(tanh(p1(add(p2(x), 1))))");
        let net = Network::new(&[2, 16, 16, 2], g.clone(), Granularity::PerLayer, &mut rng).unwrap();
        assert_eq!(net.activation_param_count(), 6);
        let g2 = act("p0(tanh(p1(x)))");
        let net = Network::new(&[2, 16, 16, 2], g2, Granularity::PerNeuron, &mut rng).unwrap();
        assert_eq!(net.activation_param_count(), 64);
        assert!(net.params[net.params.len() - 64..].iter().all(|&p| p == 1.0));
    }

    #[test]
    fn rejects_networks_without_hidden_layers() {
        assert!(Network::new(&[2, 2], act("relu(x)"), Granularity::PerLayer, &mut rng_from(0)).is_err());
    }

    #[test]
    fn softmax_cross_entropy() {
        let (l, p) = cross_entropy(&[0.0, 0.0], 1);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(p, vec![0.5, 0.5]);
        let (l, _) = cross_entropy(&[1000.0, 0.0], 0);
        assert_eq!(l, 0.0);
        assert_eq!(argmax(&[0.0, f64::NAN]), None);
    }
}
