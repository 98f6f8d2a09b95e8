//! Sparse autoencoders with a Bernoulli KL activation penalty, greedy
//! layer-wise stacking, latent encoding, and classifier initialisation from
//! the stack.
//!
//! Hidden units are sigmoid (the KL penalty needs activations inside (0,1));
//! the reconstruction head is linear. Decoder weights are untied. The hidden
//! mean activation is recomputed over the full training batch each epoch, so
//! every epoch does one extra forward pass.

use crate::net::{
    Activation, CostKind, Gradients, LayerSpec, NetError, NetworkParams, TrainConfig, TrainError,
};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SaeError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("encode depth {depth} out of range 1..={max}")]
    DepthOutOfRange { depth: usize, max: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Configuration of one sparse autoencoder layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseAeConfig {
    pub hidden_size: usize,
    /// Target mean activation of each hidden unit.
    pub sparsity_target: f64,
    /// Weight of the KL penalty in the cost.
    pub sparsity_weight: f64,
    pub base: TrainConfig,
}

impl SparseAeConfig {
    pub fn new(hidden_size: usize, base: TrainConfig) -> SparseAeConfig {
        SparseAeConfig {
            hidden_size,
            sparsity_target: 0.05,
            sparsity_weight: 3.0,
            base,
        }
    }
}

/// Trained symmetric autoencoder: sigmoid encoder, linear decoder.
#[derive(Debug, Clone)]
pub struct SparseAutoencoder<F: Scalar> {
    pub net: NetworkParams<F>,
    /// Mean hidden activation over the training batch after the final epoch.
    pub mean_activation: Array1<F>,
    pub config: SparseAeConfig,
}

impl<F: Scalar> SparseAutoencoder<F> {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn hidden_size(&self) -> usize {
        self.net.layers()[0].size
    }

    pub fn encoder_weights(&self) -> &Array2<F> {
        &self.net.weights()[0]
    }

    pub fn encoder_biases(&self) -> &Array1<F> {
        &self.net.biases()[0]
    }

    /// Sigmoid hidden activations for a batch.
    pub fn encode(&self, x: &Array2<F>) -> Result<Array2<F>, SaeError> {
        Ok(encode_layer(
            self.encoder_weights(),
            self.encoder_biases(),
            x,
        ))
    }

    pub fn reconstruct(&self, x: &Array2<F>) -> Result<Array2<F>, SaeError> {
        Ok(self.net.outputs(x)?)
    }

    /// Mean squared reconstruction error per matrix entry.
    pub fn reconstruction_mse(&self, x: &Array2<F>) -> Result<f64, SaeError> {
        let out = self.reconstruct(x)?;
        let diff = &out - x;
        let n = (x.nrows() * x.ncols()) as f64;
        Ok(diff.iter().map(|&d| d.to_f64_lossy().powi(2)).sum::<f64>() / n)
    }
}

fn encode_layer<F: Scalar>(w: &Array2<F>, b: &Array1<F>, x: &Array2<F>) -> Array2<F> {
    let z = x.dot(&w.t()) + b;
    z.mapv(|v| Activation::Sigmoid.apply(v))
}

/// Mean activation of each hidden unit over a batch (Bernoulli mean for
/// sigmoid units).
pub fn mean_hidden_activation<F: Scalar>(
    encoder_w: &Array2<F>,
    encoder_b: &Array1<F>,
    x: &Array2<F>,
) -> Result<Array1<F>, SaeError> {
    if x.nrows() == 0 {
        return Err(SaeError::EmptyBatch);
    }
    Ok(encode_layer(encoder_w, encoder_b, x).mean_axis(Axis(0)).unwrap())
}

const P_HAT_CLAMP: f64 = 1e-6;

/// Summed Bernoulli KL divergence between the target rate and each unit's
/// mean activation. Mean activations are clamped to `[1e-6, 1 - 1e-6]` so
/// dead or saturated units stay finite.
pub fn kl_penalty<F: Scalar>(target: f64, mean_activation: &Array1<F>) -> f64 {
    let p = target;
    mean_activation
        .iter()
        .map(|&ph| {
            let ph = ph.to_f64_lossy().clamp(P_HAT_CLAMP, 1.0 - P_HAT_CLAMP);
            p * (p / ph).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - ph)).ln()
        })
        .sum()
}

/// Sparse reconstruction cost: squared-error cost (with weight decay) plus
/// `beta` times the KL penalty of the batch mean activation.
pub fn sparse_cost<F: Scalar>(
    net: &NetworkParams<F>,
    x: &Array2<F>,
    lambda: f64,
    beta: f64,
    target: f64,
) -> Result<f64, SaeError> {
    let base = net.cost(x, x, lambda, CostKind::SquaredError)?.to_f64_lossy();
    if beta == 0.0 {
        return Ok(base);
    }
    let p_hat = mean_hidden_activation(&net.weights()[0], &net.biases()[0], x)?;
    Ok(base + beta * kl_penalty(target, &p_hat))
}

/// Batch gradients of the sparse cost (mean data gradients plus decay plus
/// the KL pathway). Two passes: the batch mean activation first, then
/// per-example backprop with the sparsity delta injected into the hidden
/// layer. With `beta == 0` this is exactly plain backpropagation.
pub fn sparse_backprop<F: Scalar>(
    net: &NetworkParams<F>,
    x: &Array2<F>,
    lambda: f64,
    beta: f64,
    target: f64,
) -> Result<Gradients<F>, SaeError> {
    if x.nrows() == 0 {
        return Err(SaeError::EmptyBatch);
    }
    if beta == 0.0 {
        return Ok(net.grad_full(x, x, lambda, CostKind::SquaredError)?);
    }
    // first pass: batch mean activation
    let p_hat = mean_hidden_activation(&net.weights()[0], &net.biases()[0], x)?;
    let sparsity_delta = p_hat.mapv(|ph| {
        let ph = ph.to_f64_lossy().clamp(P_HAT_CLAMP, 1.0 - P_HAT_CLAMP);
        F::from_f64_lossy(beta * (-target / ph + (1.0 - target) / (1.0 - ph)))
    });
    // second pass: backprop with the extra hidden delta
    let trace = net.forward(x, None)?;
    let (mut gw, mut gb) =
        net.backprop_with_hidden_bias(&trace, x, CostKind::SquaredError, Some(&sparsity_delta))?;
    let m = F::from_usize(x.nrows()).unwrap();
    let lam = F::from_f64_lossy(lambda);
    for (g, w) in gw.iter_mut().zip(net.weights()) {
        g.zip_mut_with(w, |g, &w| *g = *g / m + lam * w);
    }
    for g in gb.iter_mut() {
        g.mapv_inplace(|v| v / m);
    }
    Ok((gw, gb))
}

/// Train a single sparse autoencoder on `x` by full-batch gradient descent
/// on the sparse cost. Momentum, annealing and per-layer rate decay follow
/// the base schedule; dropout and mini-batching do not apply here.
pub fn train_autoencoder<F: Scalar>(
    x: &Array2<F>,
    config: &SparseAeConfig,
) -> Result<SparseAutoencoder<F>, SaeError> {
    if x.nrows() == 0 {
        return Err(SaeError::EmptyBatch);
    }
    let input_dim = x.ncols();
    let layers = vec![
        LayerSpec::new(config.hidden_size, Activation::Sigmoid),
        LayerSpec::new(input_dim, Activation::Linear),
    ];
    let mut net: NetworkParams<F> = crate::net::init_network(input_dim, &layers, config.base.seed)?;

    let c = &config.base;
    c.validate()?;
    let mut velocity_w: Vec<Array2<F>> =
        net.weights().iter().map(|w| Array2::zeros(w.dim())).collect();
    let mut velocity_b: Vec<Array1<F>> =
        net.biases().iter().map(|b| Array1::zeros(b.len())).collect();
    let mut samples_seen = 0u64;

    for epoch in 1..=c.epochs_max {
        let (gw, gb) = sparse_backprop(&net, x, c.weight_decay, config.sparsity_weight,
            config.sparsity_target)?;
        let alpha = c.learning_rate / (1.0 + c.rate_annealing * samples_seen as f64);
        let mu = if c.momentum_ramp <= 0.0 {
            c.momentum_stable
        } else {
            let t = (samples_seen as f64 / c.momentum_ramp).min(1.0);
            c.momentum_start + (c.momentum_stable - c.momentum_start) * t
        };
        let mu = F::from_f64_lossy(mu);
        let n_layers = net.layers().len();
        for l in 0..n_layers {
            let alpha_eff =
                F::from_f64_lossy(alpha * c.rate_decay.powi((n_layers - 1 - l) as i32));
            ndarray::Zip::from(&mut velocity_w[l])
                .and(&gw[l])
                .for_each(|v, &g| *v = mu * *v - alpha_eff * g);
            net.weights[l].zip_mut_with(&velocity_w[l], |w, &v| *w = *w + v);
            ndarray::Zip::from(&mut velocity_b[l])
                .and(&gb[l])
                .for_each(|v, &g| *v = mu * *v - alpha_eff * g);
            net.biases[l].zip_mut_with(&velocity_b[l], |b, &v| *b = *b + v);
        }
        samples_seen += x.nrows() as u64;
        if net.weights().iter().any(|w| w.iter().any(|v| !v.is_finite())) {
            return Err(SaeError::Train(TrainError::NonFiniteLoss { epoch }));
        }
    }
    let mean_activation = mean_hidden_activation(&net.weights()[0], &net.biases()[0], x)?;
    Ok(SparseAutoencoder {
        net,
        mean_activation,
        config: config.clone(),
    })
}

/// One trained encoder layer of a stack.
#[derive(Debug, Clone)]
pub struct StackLayer<F: Scalar> {
    pub weights: Array2<F>,
    pub biases: Array1<F>,
    pub hidden_size: usize,
    pub mean_activation: Array1<F>,
}

/// Greedy layer-wise stack of trained encoders.
#[derive(Debug, Clone)]
pub struct AutoencoderStack<F: Scalar> {
    pub input_dim: usize,
    pub layers: Vec<StackLayer<F>>,
}

impl<F: Scalar> AutoencoderStack<F> {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_size).collect()
    }

    /// Feed a batch through the first `depth` encoders.
    pub fn encode(&self, x: &Array2<F>, depth: usize) -> Result<Array2<F>, SaeError> {
        if depth == 0 || depth > self.layers.len() {
            return Err(SaeError::DepthOutOfRange {
                depth,
                max: self.layers.len(),
            });
        }
        let mut a = x.clone();
        for layer in &self.layers[..depth] {
            a = encode_layer(&layer.weights, &layer.biases, &a);
        }
        Ok(a)
    }
}

/// Train a stack greedily: the first layer on `x`, each further layer on the
/// deterministic encoding of the previous layers. One config per size; a
/// shorter config list repeats its last entry.
pub fn stack_train<F: Scalar>(
    x: &Array2<F>,
    sizes: &[usize],
    configs: &[SparseAeConfig],
) -> Result<AutoencoderStack<F>, SaeError> {
    if x.nrows() == 0 {
        return Err(SaeError::EmptyBatch);
    }
    assert!(!sizes.is_empty() && sizes.iter().all(|&s| s > 0), "stack sizes must be positive");
    assert!(!configs.is_empty(), "at least one layer config required");
    let input_dim = x.ncols();
    let mut layers = Vec::with_capacity(sizes.len());
    let mut current = x.clone();
    for (i, &size) in sizes.iter().enumerate() {
        let mut config = configs[i.min(configs.len() - 1)].clone();
        config.hidden_size = size;
        // one deterministic sub-seed per layer
        config.base.seed = config.base.seed.wrapping_add(i as u64);
        let trained = train_autoencoder(&current, &config)?;
        current = trained.encode(&current)?;
        layers.push(StackLayer {
            weights: trained.net.weights()[0].clone(),
            biases: trained.net.biases()[0].clone(),
            hidden_size: size,
            mean_activation: trained.mean_activation,
        });
    }
    Ok(AutoencoderStack { input_dim, layers })
}

/// Build a classifier whose first `depth` layers are the stack encoders
/// (weights copied, sigmoid activations) followed by a freshly initialised
/// head. `head_layers` starts at the latent width; every layer stays
/// trainable unless the caller freezes the prefix at training time.
pub fn init_classifier_from_stack<F: Scalar>(
    stack: &AutoencoderStack<F>,
    depth: usize,
    head_layers: &[LayerSpec],
    seed: u64,
) -> Result<NetworkParams<F>, SaeError> {
    if depth == 0 || depth > stack.layers.len() {
        return Err(SaeError::DepthOutOfRange {
            depth,
            max: stack.layers.len(),
        });
    }
    if head_layers.is_empty() {
        return Err(SaeError::Net(NetError::TooFewLayers));
    }
    let latent = stack.layers[depth - 1].hidden_size;
    let head: NetworkParams<F> = crate::net::init_network(latent, head_layers, seed)?;

    let mut layers = Vec::with_capacity(depth + head_layers.len());
    let mut weights = Vec::with_capacity(depth + head_layers.len());
    let mut biases = Vec::with_capacity(depth + head_layers.len());
    for layer in &stack.layers[..depth] {
        layers.push(LayerSpec::new(layer.hidden_size, Activation::Sigmoid));
        weights.push(layer.weights.clone());
        biases.push(layer.biases.clone());
    }
    layers.extend_from_slice(head.layers());
    weights.extend(head.weights().iter().cloned());
    biases.extend(head.biases().iter().cloned());
    Ok(NetworkParams::from_parts(
        stack.input_dim,
        layers,
        weights,
        biases,
    )?)
}

/// Stack manifest persisted next to the encoder container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackManifest {
    pub input_dim: usize,
    pub layer_sizes: Vec<usize>,
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub mean_activation: Vec<Vec<f64>>,
}
