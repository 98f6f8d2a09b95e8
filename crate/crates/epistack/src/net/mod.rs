//! Dense feedforward networks: forward pass, reconstruction / cross-entropy
//! cost with weight decay, and exact batch backpropagation.
//!
//! Weight matrix `l` has shape `(s_{l+1}, s_l)`; activations are handled as
//! row-per-sample batches. Dropout is inverted (mask then scale by
//! `1/(1-rate)`) and applies only in training mode.

mod train;

pub use train::{
    train, write_history_csv, EpochState, TrainError, TrainHistory, TrainOptions, Trainer,
};

pub mod serialize;

use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Rectifier,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Rectifier => z.max(F::zero()),
            Activation::Sigmoid => {
                // split on sign to avoid exp overflow
                if z >= F::zero() {
                    F::one() / (F::one() + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (F::one() + e)
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative with respect to the pre-activation. The rectifier
    /// subgradient at exactly 0 is fixed to 0.
    pub fn derivative<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Rectifier => {
                if z > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => {
                let a = self.apply(z);
                a * (F::one() - a)
            }
            Activation::Linear => F::one(),
        }
    }
}

/// Size and activation of one non-input layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(size: usize, activation: Activation) -> LayerSpec {
        LayerSpec { size, activation }
    }
}

/// Which per-sample cost drives the output deltas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostKind {
    /// Half squared error averaged over the batch.
    SquaredError,
    /// Bernoulli cross-entropy per output unit; requires a sigmoid output layer.
    CrossEntropy,
}

/// Training schedule knobs. Learning rate decays as
/// `alpha / (1 + rate_annealing * samples_seen)` and is additionally scaled by
/// `rate_decay^d` where `d` counts layers inward from the output. Momentum
/// interpolates linearly from `momentum_start` at zero samples to
/// `momentum_stable` after `momentum_ramp` samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rate_annealing: f64,
    pub rate_decay: f64,
    pub weight_decay: f64,
    pub momentum_start: f64,
    pub momentum_ramp: f64,
    pub momentum_stable: f64,
    pub epochs_max: usize,
    pub hidden_dropout: f64,
    pub input_dropout: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    /// `None` trains full-batch; the pipeline default is 32.
    pub batch_size: Option<usize>,
    pub cost: CostKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.005,
            rate_annealing: 1e-6,
            rate_decay: 1.0,
            weight_decay: 0.0,
            momentum_start: 0.5,
            momentum_ramp: 1e-6,
            momentum_stable: 0.0,
            epochs_max: 100,
            hidden_dropout: 0.5,
            input_dropout: 0.0,
            seed: 0,
            early_stop_patience: 5,
            batch_size: None,
            cost: CostKind::SquaredError,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(NetError::BadConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.hidden_dropout) || !(0.0..1.0).contains(&self.input_dropout) {
            return Err(NetError::BadConfig("dropout rates must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(NetError::BadConfig("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Weights and biases of a dense feedforward network, along with the layer
/// specs needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<F: Scalar> {
    pub(crate) input_dim: usize,
    pub(crate) layers: Vec<LayerSpec>,
    pub(crate) weights: Vec<Array2<F>>,
    pub(crate) biases: Vec<Array1<F>>,
}

/// Per-layer weight and bias gradients, shaped like the parameters.
pub type Gradients<F> = (Vec<Array2<F>>, Vec<Array1<F>>);

/// Per-layer pre-activations and activations of a batch forward pass, plus
/// the dropout masks that were applied (scaled by the keep probability).
pub struct ActivationTrace<F: Scalar> {
    /// `activations[0]` is the (possibly input-dropped) input batch.
    pub activations: Vec<Array2<F>>,
    /// `pre_activations[l]` feeds layer `l + 1`.
    pub pre_activations: Vec<Array2<F>>,
    /// Scaled masks per activation slot; `None` in inference mode.
    pub masks: Option<Vec<Option<Array2<F>>>>,
}

/// Initialise a network with uniform weights in
/// `+/- sqrt(6 / (fan_in + fan_out))` and zero biases; deterministic per seed.
pub fn init_network<F: Scalar>(
    input_dim: usize,
    layers: &[LayerSpec],
    seed: u64,
) -> Result<NetworkParams<F>, NetError> {
    if layers.is_empty() {
        return Err(NetError::TooFewLayers);
    }
    if input_dim == 0 || layers.iter().any(|l| l.size == 0) {
        return Err(NetError::BadConfig("layer sizes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layers.len());
    let mut biases = Vec::with_capacity(layers.len());
    let mut fan_in = input_dim;
    for spec in layers {
        let fan_out = spec.size;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
            F::from_f64_lossy(rng.random_range(-bound..bound))
        });
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
        fan_in = fan_out;
    }
    Ok(NetworkParams {
        input_dim,
        layers: layers.to_vec(),
        weights,
        biases,
    })
}

impl<F: Scalar> NetworkParams<F> {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[Array2<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<F>] {
        &self.biases
    }

    /// Mutable parameter access, e.g. for finite-difference probing.
    /// Shapes must stay unchanged.
    pub fn weights_mut(&mut self) -> &mut [Array2<F>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<F>] {
        &mut self.biases
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.size).unwrap_or(0)
    }

    /// Assemble a network from explicit parts, checking the shape chain.
    pub fn from_parts(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        weights: Vec<Array2<F>>,
        biases: Vec<Array1<F>>,
    ) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::TooFewLayers);
        }
        if layers.len() != weights.len() || layers.len() != biases.len() {
            return Err(NetError::ShapeMismatch(format!(
                "{} layer specs vs {} weight matrices vs {} bias vectors",
                layers.len(),
                weights.len(),
                biases.len()
            )));
        }
        let mut fan_in = input_dim;
        for (i, ((spec, w), b)) in layers.iter().zip(&weights).zip(&biases).enumerate() {
            if w.shape() != [spec.size, fan_in] || b.len() != spec.size {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {i}: weight {:?} / bias {} vs expected ({}, {fan_in})",
                    w.shape(),
                    b.len(),
                    spec.size
                )));
            }
            fan_in = spec.size;
        }
        Ok(NetworkParams {
            input_dim,
            layers,
            weights,
            biases,
        })
    }

    /// Sum of squared non-bias weights (the decay term without its `lambda/2`).
    pub fn weight_norm_sq(&self) -> F {
        self.weights
            .iter()
            .map(|w| w.iter().map(|&x| x * x).sum())
            .sum()
    }

    fn check_input(&self, x: &Array2<F>) -> Result<(), NetError> {
        if x.ncols() != self.input_dim {
            return Err(NetError::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Batch forward pass. `dropout` carries `(input_rate, hidden_rate, rng)`
    /// for training mode; `None` runs plain inference.
    pub fn forward(
        &self,
        x: &Array2<F>,
        dropout: Option<(&f64, &f64, &mut ChaCha8Rng)>,
    ) -> Result<ActivationTrace<F>, NetError> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre_activations = Vec::with_capacity(n_layers);
        let mut masks: Option<Vec<Option<Array2<F>>>> = dropout.as_ref().map(|_| Vec::new());

        let mut dropout = dropout;
        let mut a0 = x.clone();
        if let Some((input_rate, _, rng)) = dropout.as_mut() {
            let mask = sample_mask(a0.dim(), **input_rate, rng);
            if let Some(m) = &mask {
                a0 = &a0 * m;
            }
            masks.as_mut().unwrap().push(mask);
        }
        activations.push(a0);

        for (l, spec) in self.layers.iter().enumerate() {
            let z = activations[l].dot(&self.weights[l].t()) + &self.biases[l];
            let mut a = z.mapv(|v| spec.activation.apply(v));
            if let Some((_, hidden_rate, rng)) = dropout.as_mut() {
                // output layer is never dropped
                let mask = if l + 1 < n_layers {
                    sample_mask(a.dim(), **hidden_rate, rng)
                } else {
                    None
                };
                if let Some(m) = &mask {
                    a = &a * m;
                }
                masks.as_mut().unwrap().push(mask);
            }
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ActivationTrace {
            activations,
            pre_activations,
            masks,
        })
    }

    /// Inference-mode outputs for a batch.
    pub fn outputs(&self, x: &Array2<F>) -> Result<Array2<F>, NetError> {
        Ok(self.forward(x, None)?.activations.pop().unwrap())
    }

    /// Case probability per sample: the activation of the last output unit.
    pub fn predict(&self, x: &Array2<F>) -> Result<Array1<F>, NetError> {
        let out = self.outputs(x)?;
        Ok(out.column(out.ncols() - 1).to_owned())
    }

    /// Batch cost: data term per `cost`, plus `lambda/2 * sum W^2` (biases
    /// excluded from decay).
    pub fn cost(
        &self,
        x: &Array2<F>,
        y: &Array2<F>,
        lambda: f64,
        cost: CostKind,
    ) -> Result<F, NetError> {
        let outputs = self.outputs(x)?;
        self.cost_from_outputs(&outputs, y, lambda, cost)
    }

    pub(crate) fn cost_from_outputs(
        &self,
        outputs: &Array2<F>,
        y: &Array2<F>,
        lambda: f64,
        cost: CostKind,
    ) -> Result<F, NetError> {
        if outputs.dim() != y.dim() {
            return Err(NetError::ShapeMismatch(format!(
                "outputs {:?} vs targets {:?}",
                outputs.dim(),
                y.dim()
            )));
        }
        let m = F::from_usize(outputs.nrows()).unwrap();
        let half = F::from_f64_lossy(0.5);
        let data = match cost {
            CostKind::SquaredError => {
                let diff = outputs - y;
                diff.iter().map(|&d| half * d * d).sum::<F>() / m
            }
            CostKind::CrossEntropy => {
                let clamp = F::from_f64_lossy(1e-12);
                let one = F::one();
                outputs
                    .iter()
                    .zip(y.iter())
                    .map(|(&a, &t)| {
                        let a = a.max(clamp).min(one - clamp);
                        -(t * a.ln() + (one - t) * (one - a).ln())
                    })
                    .sum::<F>()
                    / m
            }
        };
        Ok(data + F::from_f64_lossy(lambda / 2.0) * self.weight_norm_sq())
    }

    /// Batch gradients of the cost with respect to every weight and bias.
    /// Returns sums over the batch; divide by the batch size and add
    /// `lambda * W` to obtain full-cost gradients (as `grad_full` does).
    pub fn backprop(
        &self,
        trace: &ActivationTrace<F>,
        y: &Array2<F>,
        cost: CostKind,
    ) -> Result<Gradients<F>, NetError> {
        self.backprop_with_hidden_bias(trace, y, cost, None)
    }

    /// Backpropagation with an optional extra delta term injected into the
    /// first hidden layer (used by the sparse autoencoder penalty). The term
    /// is added per sample before multiplying by the activation derivative.
    pub(crate) fn backprop_with_hidden_bias(
        &self,
        trace: &ActivationTrace<F>,
        y: &Array2<F>,
        cost: CostKind,
        hidden_extra: Option<&Array1<F>>,
    ) -> Result<Gradients<F>, NetError> {
        let n_layers = self.layers.len();
        let outputs = &trace.activations[n_layers];
        if outputs.dim() != y.dim() {
            return Err(NetError::ShapeMismatch(format!(
                "outputs {:?} vs targets {:?}",
                outputs.dim(),
                y.dim()
            )));
        }

        // output delta
        let z_out = &trace.pre_activations[n_layers - 1];
        let mut delta = match cost {
            CostKind::SquaredError => {
                let act = self.layers[n_layers - 1].activation;
                let mut d = outputs - y;
                d.zip_mut_with(z_out, |d, &z| *d = *d * act.derivative(z));
                d
            }
            // derivative of the Bernoulli likelihood through a sigmoid output
            CostKind::CrossEntropy => outputs - y,
        };

        let mut grad_w = vec![Array2::zeros((0, 0)); n_layers];
        let mut grad_b = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            grad_w[l] = delta.t().dot(&trace.activations[l]);
            grad_b[l] = delta.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let mut back = delta.dot(&self.weights[l]);
            if l == 1 {
                if let Some(extra) = hidden_extra {
                    back = back + extra;
                }
            }
            // dropout mask applied on the way forward scales the gradient too
            if let Some(masks) = &trace.masks {
                if let Some(mask) = &masks[l] {
                    back = back * mask;
                }
            }
            let act = self.layers[l - 1].activation;
            back.zip_mut_with(&trace.pre_activations[l - 1], |d, &z| {
                *d = *d * act.derivative(z)
            });
            delta = back;
        }
        Ok((grad_w, grad_b))
    }

    /// Mean-per-sample gradients including the weight-decay term.
    pub fn grad_full(
        &self,
        x: &Array2<F>,
        y: &Array2<F>,
        lambda: f64,
        cost: CostKind,
    ) -> Result<Gradients<F>, NetError> {
        let trace = self.forward(x, None)?;
        let (mut gw, mut gb) = self.backprop(&trace, y, cost)?;
        let m = F::from_usize(x.nrows()).unwrap();
        let lam = F::from_f64_lossy(lambda);
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            g.zip_mut_with(w, |g, &w| *g = *g / m + lam * w);
        }
        for g in gb.iter_mut() {
            g.mapv_inplace(|v| v / m);
        }
        Ok((gw, gb))
    }
}

fn sample_mask<F: Scalar>(
    dim: (usize, usize),
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Array2<F>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 - rate;
    let scale = F::from_f64_lossy(1.0 / keep);
    Some(Array2::from_shape_fn(dim, |_| {
        if rng.random::<f64>() < keep {
            scale
        } else {
            F::zero()
        }
    }))
}

/// One-hot targets for 0/1 labels: control -> (1, 0), case -> (0, 1) when the
/// head has two units, plain 0/1 column for a single-unit head.
pub fn one_hot_targets<F: Scalar>(labels: &[u8], output_dim: usize) -> Array2<F> {
    let mut y = Array2::zeros((labels.len(), output_dim));
    for (i, &l) in labels.iter().enumerate() {
        if output_dim == 1 {
            y[(i, 0)] = F::from_u8(l).unwrap();
        } else {
            y[(i, output_dim - 1)] = F::from_u8(l).unwrap();
            if l == 0 {
                y[(i, 0)] = F::one();
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn specs(sizes: &[usize], act: Activation, head: Activation) -> Vec<LayerSpec> {
        let mut v: Vec<LayerSpec> = sizes[..sizes.len() - 1]
            .iter()
            .map(|&s| LayerSpec::new(s, act))
            .collect();
        v.push(LayerSpec::new(*sizes.last().unwrap(), head));
        v
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let layers = specs(&[5, 3, 2], Activation::Rectifier, Activation::Sigmoid);
        let a: NetworkParams<f64> = init_network(8, &layers, 42).unwrap();
        let b: NetworkParams<f64> = init_network(8, &layers, 42).unwrap();
        let c: NetworkParams<f64> = init_network(8, &layers, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_shapes_chain_for_deep_head() {
        let layers = specs(&[10, 10, 10, 10, 2], Activation::Rectifier, Activation::Sigmoid);
        let net: NetworkParams<f64> = init_network(4666, &layers, 1).unwrap();
        assert_eq!(net.weights().len(), 5);
        let mut fan_in = 4666;
        for (w, spec) in net.weights().iter().zip(net.layers()) {
            assert_eq!(w.shape(), [spec.size, fan_in]);
            fan_in = spec.size;
        }
    }

    #[test]
    fn init_respects_uniform_bound() {
        let layers = vec![LayerSpec::new(30, Activation::Sigmoid)];
        let net: NetworkParams<f64> = init_network(50, &layers, 7).unwrap();
        let bound = (6.0f64 / (50 + 30) as f64).sqrt();
        assert!(net.weights()[0].iter().all(|w| w.abs() < bound));
        assert!(net.biases()[0].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_outputs_one_half_through_sigmoid() {
        let layers = vec![LayerSpec::new(1, Activation::Sigmoid)];
        let net = NetworkParams::from_parts(
            3,
            layers,
            vec![Array2::<f64>::zeros((1, 3))],
            vec![Array1::zeros(1)],
        )
        .unwrap();
        let out = net.predict(&array![[0.3, -2.0, 5.0]]).unwrap();
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn rectifier_clamps_negative_preactivation() {
        let layers = vec![LayerSpec::new(1, Activation::Rectifier)];
        let net = NetworkParams::from_parts(
            1,
            layers,
            vec![array![[-1.0]]],
            vec![Array1::zeros(1)],
        )
        .unwrap();
        let out = net.outputs(&array![[2.0]]).unwrap();
        assert_eq!(out[(0, 0)], 0.0);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // 2-2-1 network evaluated by hand
        let layers = vec![
            LayerSpec::new(2, Activation::Sigmoid),
            LayerSpec::new(1, Activation::Linear),
        ];
        let net = NetworkParams::from_parts(
            2,
            layers,
            vec![array![[0.5, -0.25], [1.0, 0.75]], array![[2.0, -1.0]]],
            vec![array![0.1, -0.2], array![0.05]],
        )
        .unwrap();
        let x = array![[0.4, 0.8]];
        let z1: f64 = 0.5 * 0.4 - 0.25 * 0.8 + 0.1;
        let z2: f64 = 1.0 * 0.4 + 0.75 * 0.8 - 0.2;
        let a1 = 1.0 / (1.0 + (-z1).exp());
        let a2 = 1.0 / (1.0 + (-z2).exp());
        let expected = 2.0 * a1 - 1.0 * a2 + 0.05;
        let out = net.outputs(&x).unwrap();
        assert_relative_eq!(out[(0, 0)], expected, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let layers = vec![LayerSpec::new(1, Activation::Sigmoid)];
        let net: NetworkParams<f64> = init_network(3, &layers, 0).unwrap();
        assert!(matches!(
            net.outputs(&Array2::zeros((1, 4))),
            Err(NetError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let layers = vec![LayerSpec::new(1, Activation::Sigmoid)];
        let net = NetworkParams::from_parts(
            1,
            layers,
            vec![Array2::<f64>::zeros((1, 1))],
            vec![Array1::zeros(1)],
        )
        .unwrap();
        // output is 0.5, target 1: J = 0.5 * 0.25 = 0.125
        let x = array![[0.0]];
        let y = array![[1.0]];
        let j = net.cost(&x, &y, 0.0, CostKind::SquaredError).unwrap();
        assert_relative_eq!(j, 0.125, epsilon = 1e-15);
        // perfect prediction costs nothing
        let y = array![[0.5]];
        let j = net.cost(&x, &y, 0.0, CostKind::SquaredError).unwrap();
        assert_eq!(j, 0.0);
        // decay adds exactly lambda/2 * sum w^2
        let layers = vec![LayerSpec::new(1, Activation::Linear)];
        let net =
            NetworkParams::from_parts(1, layers, vec![array![[3.0]]], vec![array![0.0]]).unwrap();
        let j0 = net.cost(&x, &array![[0.0]], 0.0, CostKind::SquaredError).unwrap();
        let j1 = net.cost(&x, &array![[0.0]], 0.4, CostKind::SquaredError).unwrap();
        assert_relative_eq!(j1 - j0, 0.2 * 9.0, epsilon = 1e-12);
    }

    #[test]
    fn gradients_vanish_at_exact_fit_with_linear_output() {
        let layers = vec![LayerSpec::new(1, Activation::Linear)];
        let net =
            NetworkParams::from_parts(2, layers, vec![array![[1.0, -2.0]]], vec![array![0.5]])
                .unwrap();
        let x = array![[1.0, 1.0], [2.0, 0.25]];
        let y = net.outputs(&x).unwrap();
        let (gw, gb) = net.grad_full(&x, &y, 0.0, CostKind::SquaredError).unwrap();
        assert!(gw[0].iter().all(|&g| g == 0.0));
        assert!(gb[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn decay_gradient_alone_is_lambda_w() {
        let layers = vec![LayerSpec::new(1, Activation::Linear)];
        let net =
            NetworkParams::from_parts(2, layers, vec![array![[1.5, -0.5]]], vec![array![0.0]])
                .unwrap();
        let x = array![[0.7, -0.3]];
        let y = net.outputs(&x).unwrap(); // data gradient zero at exact fit
        let lambda = 0.25;
        let (gw, _) = net.grad_full(&x, &y, lambda, CostKind::SquaredError).unwrap();
        let expected = net.weights()[0].mapv(|w| lambda * w);
        assert_relative_eq!(gw[0][(0, 0)], expected[(0, 0)], epsilon = 1e-15);
        assert_relative_eq!(gw[0][(0, 1)], expected[(0, 1)], epsilon = 1e-15);
    }

    /// Central finite differences of the batch cost.
    fn numeric_grads(
        net: &NetworkParams<f64>,
        x: &Array2<f64>,
        y: &Array2<f64>,
        lambda: f64,
        cost: CostKind,
        eps: f64,
    ) -> (Vec<Array2<f64>>, Vec<Array1<f64>>) {
        let mut gw = Vec::new();
        let mut gb = Vec::new();
        for l in 0..net.layers().len() {
            let mut g = Array2::zeros(net.weights[l].dim());
            for idx in ndarray::indices(net.weights[l].dim()) {
                let mut plus = net.clone();
                plus.weights[l][idx] += eps;
                let mut minus = net.clone();
                minus.weights[l][idx] -= eps;
                g[idx] = (plus.cost(x, y, lambda, cost).unwrap()
                    - minus.cost(x, y, lambda, cost).unwrap())
                    / (2.0 * eps);
            }
            gw.push(g);
            let mut g = Array1::zeros(net.biases[l].len());
            for i in 0..net.biases[l].len() {
                let mut plus = net.clone();
                plus.biases[l][i] += eps;
                let mut minus = net.clone();
                minus.biases[l][i] -= eps;
                g[i] = (plus.cost(x, y, lambda, cost).unwrap()
                    - minus.cost(x, y, lambda, cost).unwrap())
                    / (2.0 * eps);
            }
            gb.push(g);
        }
        (gw, gb)
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64]) {
        for (&a, &n) in analytic.iter().zip(numeric) {
            let mag = a.abs().max(n.abs());
            if mag < 1e-4 {
                assert!((a - n).abs() < 1e-8, "near-zero gradient off: {a} vs {n}");
            } else {
                assert!((a - n).abs() / mag < 1e-6, "gradient off: {a} vs {n}");
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences_on_5_3_2() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let layers = vec![
                LayerSpec::new(3, Activation::Sigmoid),
                LayerSpec::new(2, Activation::Sigmoid),
            ];
            let net: NetworkParams<f64> = init_network(5, &layers, trial).unwrap();
            let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
            let y = Array2::from_shape_fn((4, 2), |_| rng.random_range(0.0..1.0));
            for (lambda, cost) in [
                (0.0, CostKind::SquaredError),
                (0.1, CostKind::SquaredError),
                (0.05, CostKind::CrossEntropy),
            ] {
                let (gw, gb) = net.grad_full(&x, &y, lambda, cost).unwrap();
                let (nw, nb) = numeric_grads(&net, &x, &y, lambda, cost, 1e-5);
                for (a, n) in gw.iter().zip(&nw) {
                    assert_grads_close(a.as_slice().unwrap(), n.as_slice().unwrap());
                }
                for (a, n) in gb.iter().zip(&nb) {
                    assert_grads_close(a.as_slice().unwrap(), n.as_slice().unwrap());
                }
            }
        }
    }

    #[test]
    fn one_hot_layout() {
        let y = one_hot_targets::<f64>(&[0, 1], 2);
        assert_eq!(y, array![[1.0, 0.0], [0.0, 1.0]]);
        let y = one_hot_targets::<f64>(&[0, 1], 1);
        assert_eq!(y, array![[0.0], [1.0]]);
    }

    #[test]
    fn predict_is_deterministic_and_in_range() {
        use rand::{Rng, SeedableRng};
        let layers = specs(&[6, 4, 2], Activation::Rectifier, Activation::Sigmoid);
        let net: NetworkParams<f64> = init_network(9, &layers, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((200, 9), |_| rng.random_range(-4.0..4.0));
        let p1 = net.predict(&x).unwrap();
        let p2 = net.predict(&x).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.iter().all(|&p| p > 0.0 && p < 1.0));
    }
}
