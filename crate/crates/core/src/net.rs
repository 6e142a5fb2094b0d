//! Fully connected feed-forward regression network: two inputs, one output,
//! mean-squared-error loss, reverse-mode gradients and Adam.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::SupervisedSet;
use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Affine layer `a_out = act(a_in · W + b)` with `W` stored `[in x out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { weights: Array2::zeros((n_in, n_out)), bias: Array1::zeros(n_out) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Same shapes as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// Stop after this many epochs without a new best validation MSE.
    pub early_stopping: Option<usize>,
    /// Decoupled weight decay applied to weight matrices (not biases).
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            hidden_layers: 1,
            hidden_width: 64,
            activation: Activation::Relu,
            early_stopping: None,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::Config(format!("{name} {reason}")));
        if self.epochs < 1 {
            return bad("epochs", "must be at least 1");
        }
        if self.batch_size < 1 {
            return bad("batch_size", "must be at least 1");
        }
        if self.hidden_width < 1 {
            return bad("hidden_width", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas", "must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps", "must be positive");
        }
        if self.activation == Activation::Identity {
            return bad("activation", "hidden layers need a nonlinearity");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay * self.learning_rate < 1.0) {
            return bad("weight_decay", "must be non-negative and below 1 / learning_rate");
        }
        if self.early_stopping == Some(0) {
            return bad("early_stopping", "patience must be at least 1");
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// Seeded initialization: He-normal for ReLU, Xavier-uniform for tanh and
/// sigmoid; zero biases.
pub fn init_network(cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    let sizes = cfg.layer_sizes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = match cfg.activation {
                Activation::Relu => {
                    let std = (2.0 / n_in as f64).sqrt();
                    Array2::from_shape_simple_fn((n_in, n_out), || std * rng.sample::<f64, _>(StandardNormal))
                }
                _ => {
                    let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                    Array2::from_shape_simple_fn((n_in, n_out), || rng.random_range(-limit..limit))
                }
            };
            Layer { weights, bias: Array1::zeros(n_out) }
        })
        .collect();
    Ok(Network {
        layer_sizes: sizes,
        layers,
        hidden_activation: cfg.activation,
        output_activation: Activation::Identity,
    })
}

struct Tape {
    /// Layer inputs, `acts[0]` is the batch itself.
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Network {
    /// Network with all parameters zero.
    pub fn zeros(layer_sizes: &[usize], hidden_activation: Activation) -> Self {
        Network {
            layer_sizes: layer_sizes.to_vec(),
            layers: layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            hidden_activation,
            output_activation: Activation::Identity,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn run(&self, x: &Array2<f64>, keep: bool) -> (Array1<f64>, Option<Tape>) {
        let mut tape = keep.then(|| Tape { acts: Vec::new(), pre: Vec::new() });
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights);
            z += &layer.bias;
            let act = self.activation(l);
            let out = z.mapv(|v| act.apply(v));
            if let Some(t) = tape.as_mut() {
                t.acts.push(a);
                t.pre.push(z);
            }
            a = out;
        }
        let y = a.index_axis_move(Axis(1), 0);
        (y, tape)
    }

    /// Predictions for a `[n x 2]` batch.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array1<f64> {
        self.run(x, false).0
    }

    pub fn forward(&self, input: [f64; 2]) -> Result<f64> {
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!("non-finite network input {input:?}")));
        }
        let x = Array2::from_shape_vec((1, 2), input.to_vec()).expect("1x2");
        Ok(self.forward_batch(&x)[0])
    }

    pub fn mse(&self, x: &Array2<f64>, y: &[f64]) -> f64 {
        let pred = self.forward_batch(x);
        pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn loss_and_grad(&self, x: &Array2<f64>, y: &[f64]) -> Result<(f64, Gradients)> {
        let n = y.len();
        if n == 0 || x.nrows() != n {
            return Err(Error::Precondition(format!("batch has {} inputs and {n} targets", x.nrows())));
        }
        let (pred, tape) = self.run(x, true);
        let tape = tape.expect("tape recorded");
        let resid: Array1<f64> = &pred - &Array1::from(y.to_vec());
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;

        let last = self.layers.len() - 1;
        // dL/d(output) as an [n x 1] matrix.
        let mut delta = (resid * (2.0 / n as f64)).insert_axis(Axis(1));
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for l in (0..=last).rev() {
            let act = self.activation(l);
            if act != Activation::Identity {
                let out = tape.pre[l].mapv(|z| act.apply(z));
                Zip::from(&mut delta).and(&tape.pre[l]).and(&out).for_each(|d, &z, &a| *d *= act.slope(z, a));
            }
            let weights = tape.acts[l].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&self.layers[l].weights.t());
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            version: NETWORK_FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            weights: self.layers.iter().map(|l| l.weights.t().iter().copied().collect()).collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Network> {
        if file.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported network format version {}", file.version)));
        }
        let sizes = &file.layer_sizes;
        if sizes.len() < 2 || file.weights.len() != sizes.len() - 1 || file.biases.len() != sizes.len() - 1 {
            return Err(Error::Config("layer count does not match layer_sizes".into()));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (k, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            // Stored as [out x in] row-major.
            let weights = Array2::from_shape_vec((n_out, n_in), file.weights[k].clone())
                .map_err(|e| Error::Config(format!("layer {k} weights: {e}")))?
                .reversed_axes()
                .as_standard_layout()
                .to_owned();
            if file.biases[k].len() != n_out {
                return Err(Error::Config(format!("layer {k} bias has {} entries, expected {n_out}", file.biases[k].len())));
            }
            layers.push(Layer { weights, bias: Array1::from(file.biases[k].clone()) });
        }
        Ok(Network {
            layer_sizes: sizes.clone(),
            layers,
            hidden_activation: file.hidden_activation,
            output_activation: file.output_activation,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, &self.to_file())
    }

    pub fn load(path: &Path) -> Result<Network> {
        Network::from_file(&io::read_json(path)?)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()).collect()
    }
}

pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// On-disk network: weights of each layer stored `[out x in]` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Compares analytic gradients with central finite differences; returns the
/// largest elementwise relative error `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(net: &Network, x: &Array2<f64>, y: &[f64], h: f64, floor: f64) -> Result<f64> {
    let (_, grads) = net.loss_and_grad(x, y)?;
    let analytic = grads.flat();
    let mut probe = net.clone();
    let n = analytic.len();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let original = *probe.params_mut().nth(k).expect("index in range");
        *probe.params_mut().nth(k).unwrap() = original + h;
        let plus = probe.mse(x, y);
        *probe.params_mut().nth(k).unwrap() = original - h;
        let minus = probe.mse(x, y);
        *probe.params_mut().nth(k).unwrap() = original;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    decay: f64,
}

impl Adam {
    fn new(net: &Network, cfg: &TrainConfig) -> Self {
        let zeros = || net.layers.iter().map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols())).collect();
        Adam {
            m: zeros(),
            v: zeros(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            decay: cfg.weight_decay,
        }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.lr;
        let rule = move |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        let shrink = 1.0 - lr * self.decay;
        for (((layer, m), v), g) in net.layers.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(&grads.layers) {
            if shrink != 1.0 {
                layer.weights.mapv_inplace(|w| w * shrink);
            }
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| rule(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| rule(p, m, v, g));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Validation MSE of the network before the first update.
    pub initial_val_mse: f64,
    pub wall_clock_secs: f64,
    pub network: Network,
}

impl TrainLog {
    pub fn final_val_mse(&self) -> f64 {
        self.epochs.last().map_or(self.initial_val_mse, |r| r.val_mse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch, io::fmt_f64(r.train_mse), io::fmt_f64(r.val_mse));
        }
        out
    }
}

/// Trains with Adam on seeded shuffled mini-batches.
pub fn train(net: Network, data: &SupervisedSet, cfg: &TrainConfig) -> Result<TrainLog> {
    train_with(net, data, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch(epoch, &net)` after every epoch.
pub fn train_with<F>(mut net: Network, data: &SupervisedSet, cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainLog>
where
    F: FnMut(usize, &Network) -> Result<()>,
{
    cfg.validate()?;
    if data.train_idx.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    let started = Instant::now();
    // The validation set falls back to the training set when the split leaves it empty.
    let val_idx = if data.val_idx.is_empty() { &data.train_idx } else { &data.val_idx };
    let (xv, yv) = data.gather(val_idx);
    let initial_val_mse = net.mse(&xv, &yv);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut adam = Adam::new(&net, cfg);
    let mut order = data.train_idx.clone();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = data.gather(batch);
            let (loss, grads) = net.loss_and_grad(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            adam.update(&mut net, &grads);
        }
        let val_mse = net.mse(&xv, &yv);
        if !val_mse.is_finite() || !net.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epochs.push(EpochRecord { epoch, train_mse: total / order.len() as f64, val_mse });
        on_epoch(epoch, &net)?;
        if let Some(patience) = cfg.early_stopping {
            if val_mse < best {
                best = val_mse;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    Ok(TrainLog { epochs, initial_val_mse, wall_clock_secs: started.elapsed().as_secs_f64(), network: net })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split_indices, Combination, NormParams};

    fn linear_neuron(w: [f64; 2], b: f64) -> Network {
        let mut net = Network::zeros(&[2, 1], Activation::Relu);
        net.layers[0].weights[[0, 0]] = w[0];
        net.layers[0].weights[[1, 0]] = w[1];
        net.layers[0].bias[0] = b;
        net
    }

    fn set_from(inputs: Array2<f64>, targets: Vec<f64>, seed: u64) -> SupervisedSet {
        let (train_idx, val_idx) = split_indices(targets.len(), 0.8, seed);
        SupervisedSet {
            combination: Combination::FV,
            inputs,
            targets,
            norm: NormParams::identity(2),
            split: 0.8,
            split_seed: seed,
            deriv_scale: 1.0,
            train_idx,
            val_idx,
        }
    }

    fn random_batch(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn init_is_seeded() {
        let cfg = TrainConfig { seed: 42, ..TrainConfig::default() };
        let a = init_network(&cfg).unwrap();
        assert_eq!(a, init_network(&cfg).unwrap());
        assert_ne!(a, init_network(&TrainConfig { seed: 43, ..cfg.clone() }).unwrap());
        assert_eq!(a.layer_sizes, vec![2, 64, 1]);
        let deep = init_network(&TrainConfig { hidden_layers: 3, ..cfg.clone() }).unwrap();
        assert_eq!(deep.layer_sizes, vec![2, 64, 64, 64, 1]);
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let cfg = TrainConfig { hidden_width: 0, ..TrainConfig::default() };
        assert!(matches!(init_network(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn forward_examples() {
        let zero = Network::zeros(&[2, 8, 8, 1], Activation::Tanh);
        assert_eq!(zero.forward([0.3, -7.0]).unwrap(), 0.0);
        assert_eq!(linear_neuron([0.5, 0.0], 0.0).forward([1.0, 0.0]).unwrap(), 0.5);
        assert!(zero.forward([f64::NAN, 0.0]).is_err());

        // Dead ReLU layer: the output reduces to the output bias.
        let mut net = Network::zeros(&[2, 4, 1], Activation::Relu);
        net.layers[0].bias.fill(-1.0);
        net.layers[0].weights.fill(0.1);
        net.layers[1].weights.fill(3.0);
        net.layers[1].bias[0] = 0.25;
        assert_eq!(net.forward([1.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn single_neuron_loss_and_gradient() {
        let net = linear_neuron([0.5, 0.0], 0.0);
        let x = Array2::from_shape_vec((1, 2), vec![1.0, 0.0]).unwrap();
        let (loss, g) = net.loss_and_grad(&x, &[0.0]).unwrap();
        assert_eq!(loss, 0.25);
        assert_eq!(g.layers[0].weights[[0, 0]], 1.0);
        assert_eq!(g.layers[0].weights[[1, 0]], 0.0);
        assert_eq!(g.layers[0].bias[0], 1.0);

        let (loss, g) = net.loss_and_grad(&x, &[0.5]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|&v| v == 0.0));

        let empty = Array2::zeros((0, 2));
        assert!(net.loss_and_grad(&empty, &[]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (activation, seed) in [(Activation::Tanh, 1), (Activation::Sigmoid, 2), (Activation::Relu, 3)] {
            let cfg = TrainConfig { hidden_layers: 2, hidden_width: 6, activation, seed, ..TrainConfig::default() };
            let mut net = init_network(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
            for l in &mut net.layers {
                l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
            }
            let (x, y) = random_batch(16, seed);
            let err = gradient_check(&net, &x, &y, 1e-5, 1e-6).unwrap();
            assert!(err < 1e-5, "{activation:?}: {err}");
        }
    }

    #[test]
    fn learns_a_linear_map() {
        // Least squares oracle: v = 0.5 u is exactly representable.
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random_range(-1.0..1.0));
        let y: Vec<f64> = x.rows().into_iter().map(|r| 0.5 * r[0]).collect();
        let data = set_from(x, y, 3);
        let cfg = TrainConfig {
            epochs: 200,
            hidden_layers: 1,
            hidden_width: 8,
            learning_rate: 1e-2,
            seed: 9,
            ..TrainConfig::default()
        };
        let log = train(init_network(&cfg).unwrap(), &data, &cfg).unwrap();
        assert_eq!(log.epochs.len(), 200);
        assert!(log.final_val_mse() < 1e-6, "val mse {}", log.final_val_mse());
        assert!(log.final_val_mse() <= log.initial_val_mse);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = random_batch(200, 11);
        let data = set_from(x, y, 1);
        let cfg = TrainConfig { epochs: 5, hidden_width: 16, seed: 4, ..TrainConfig::default() };
        let a = train(init_network(&cfg).unwrap(), &data, &cfg).unwrap();
        let b = train(init_network(&cfg).unwrap(), &data, &cfg).unwrap();
        assert_eq!(a.epochs, b.epochs);
        assert_eq!(a.network, b.network);
        assert_eq!(a.to_csv(), b.to_csv());

        let one = TrainConfig { epochs: 1, ..cfg };
        assert_eq!(train(init_network(&one).unwrap(), &data, &one).unwrap().epochs.len(), 1);
    }

    #[test]
    fn early_stopping_halts() {
        let (x, y) = random_batch(100, 12);
        let data = set_from(x, y, 2);
        let cfg = TrainConfig { epochs: 500, hidden_width: 8, early_stopping: Some(3), ..TrainConfig::default() };
        let log = train(init_network(&cfg).unwrap(), &data, &cfg).unwrap();
        assert!(log.epochs.len() < 500);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, _) = random_batch(64, 13);
        let y = vec![1e200; 64];
        let data = set_from(x, y, 2);
        let cfg = TrainConfig { epochs: 3, hidden_width: 4, ..TrainConfig::default() };
        assert!(matches!(train(init_network(&cfg).unwrap(), &data, &cfg), Err(Error::Diverged { epoch: 1 })));
    }

    #[test]
    fn serialization_round_trip() {
        let cfg = TrainConfig { hidden_layers: 2, hidden_width: 5, activation: Activation::Tanh, ..TrainConfig::default() };
        let net = init_network(&cfg).unwrap();
        let json = serde_json::to_string(&net.to_file()).unwrap();
        let back = Network::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, net);
        let mut file = net.to_file();
        file.version = 99;
        assert!(Network::from_file(&file).is_err());
    }
}
