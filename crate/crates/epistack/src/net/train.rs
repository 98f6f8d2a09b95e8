//! Accumulate-then-update gradient descent with momentum, annealing and
//! per-layer rate decay, plus the epoch loop with early stopping on
//! validation misclassification.

use super::{NetError, NetworkParams, TrainConfig};
use crate::metrics::{auc_rank, logloss, ScoredLabels};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("cost became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("training and validation sets must be non-empty")]
    EmptySet,
}

/// Momentum buffers and the sample counter driving annealing.
pub struct EpochState<F: Scalar> {
    pub samples_seen: u64,
    velocity_w: Vec<Array2<F>>,
    velocity_b: Vec<Array1<F>>,
}

impl<F: Scalar> EpochState<F> {
    pub fn new(params: &NetworkParams<F>) -> Self {
        EpochState {
            samples_seen: 0,
            velocity_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            velocity_b: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }
}

/// Per-epoch metric record.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub epoch: usize,
    pub train_logloss: f64,
    pub valid_logloss: f64,
    pub train_auc: f64,
    pub valid_auc: f64,
    pub valid_misclass: f64,
}

/// Emit history rows as CSV with the fixed column set.
pub fn write_history_csv(
    history: &[TrainHistory],
    w: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(
        w,
        "epoch,train_logloss,valid_logloss,train_auc,valid_auc,valid_misclass"
    )?;
    for h in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            h.epoch, h.train_logloss, h.valid_logloss, h.train_auc, h.valid_auc, h.valid_misclass
        )?;
    }
    Ok(())
}

/// Extra knobs that sit outside the schedule config.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Leading weight layers excluded from updates (pretrained encoders can
    /// be frozen during fine-tuning).
    pub frozen_prefix: usize,
}

/// Owns the parameter state across epochs.
pub struct Trainer<F: Scalar> {
    pub params: NetworkParams<F>,
    pub config: TrainConfig,
    pub options: TrainOptions,
    state: EpochState<F>,
    rng: ChaCha8Rng,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(params: NetworkParams<F>, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let state = EpochState::new(&params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            params,
            config,
            options: TrainOptions::default(),
            state,
            rng,
        })
    }

    pub fn with_options(mut self, options: TrainOptions) -> Self {
        self.options = options;
        self
    }

    fn momentum_at(&self, samples_seen: u64) -> f64 {
        let c = &self.config;
        if c.momentum_ramp <= 0.0 {
            return c.momentum_stable;
        }
        let t = (samples_seen as f64 / c.momentum_ramp).min(1.0);
        c.momentum_start + (c.momentum_stable - c.momentum_start) * t
    }

    /// Accumulate gradients over one batch and apply the update rule
    /// `W <- W - alpha_eff [(1/m) dW + lambda W]`, `b <- b - alpha_eff (1/m) db`,
    /// through the classical momentum buffer.
    fn update_batch(&mut self, x: &Array2<F>, y: &Array2<F>) -> Result<(), TrainError> {
        let c = self.config.clone();
        let m = F::from_usize(x.nrows()).unwrap();
        let dropout_active = c.input_dropout > 0.0 || c.hidden_dropout > 0.0;
        let trace = if dropout_active {
            self.params
                .forward(x, Some((&c.input_dropout, &c.hidden_dropout, &mut self.rng)))?
        } else {
            self.params.forward(x, None)?
        };
        let (grad_w, grad_b) = self.params.backprop(&trace, y, c.cost)?;

        let alpha = c.learning_rate / (1.0 + c.rate_annealing * self.state.samples_seen as f64);
        let mu = F::from_f64_lossy(self.momentum_at(self.state.samples_seen));
        let lam = F::from_f64_lossy(c.weight_decay);
        let n_layers = self.params.layers.len();
        for l in self.options.frozen_prefix..n_layers {
            // layer index counted inward from the output scales the rate
            let alpha_eff =
                F::from_f64_lossy(alpha * c.rate_decay.powi((n_layers - 1 - l) as i32));
            {
                let v = &mut self.state.velocity_w[l];
                ndarray::Zip::from(&mut *v)
                    .and(&grad_w[l])
                    .and(&self.params.weights[l])
                    .for_each(|v, &g, &w| *v = mu * *v - alpha_eff * (g / m + lam * w));
                self.params.weights[l].zip_mut_with(v, |w, &v| *w = *w + v);
            }
            {
                let v = &mut self.state.velocity_b[l];
                ndarray::Zip::from(&mut *v)
                    .and(&grad_b[l])
                    .for_each(|v, &g| *v = mu * *v - alpha_eff * (g / m));
                self.params.biases[l].zip_mut_with(v, |b, &v| *b = *b + v);
            }
        }
        self.state.samples_seen += x.nrows() as u64;
        Ok(())
    }

    /// One pass over the training set: full-batch when `batch_size` is
    /// `None`, otherwise seed-shuffled mini-batches.
    pub fn run_epoch(&mut self, x: &Array2<F>, y: &Array2<F>, epoch: usize) -> Result<(), TrainError> {
        match self.config.batch_size {
            None => self.update_batch(x, y)?,
            Some(bs) => {
                let bs = bs.max(1);
                let mut order: Vec<usize> = (0..x.nrows()).collect();
                order.shuffle(&mut self.rng);
                for chunk in order.chunks(bs) {
                    let xb = x.select(Axis(0), chunk);
                    let yb = y.select(Axis(0), chunk);
                    self.update_batch(&xb, &yb)?;
                }
            }
        }
        if !self.params_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        Ok(())
    }

    fn params_finite(&self) -> bool {
        self.params.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.params.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn split_metrics<F: Scalar>(
    params: &NetworkParams<F>,
    x: &Array2<F>,
    labels: &[u8],
) -> Result<(f64, f64, f64), TrainError> {
    let scores = params.predict(x)?;
    let sl = ScoredLabels::new(scores.to_vec(), labels.to_vec())
        .map_err(|e| NetError::ShapeMismatch(e.to_string()))?;
    let ll = logloss(&sl);
    let auc = auc_rank(&sl).unwrap_or(f64::NAN);
    let half = F::from_f64_lossy(0.5);
    let misclass = sl
        .scores()
        .iter()
        .zip(sl.labels())
        .filter(|(&s, &l)| (s >= half) != (l == 1))
        .count() as f64
        / labels.len() as f64;
    Ok((ll, auc, misclass))
}

/// Train with early stopping: runs up to `epochs_max` epochs, records
/// per-epoch metrics, stops once validation misclassification has not
/// improved for `early_stop_patience` consecutive epochs, and returns the
/// parameters from the best validation epoch.
pub fn train<F: Scalar>(
    params: NetworkParams<F>,
    train_x: &Array2<F>,
    train_labels: &[u8],
    valid_x: &Array2<F>,
    valid_labels: &[u8],
    config: &TrainConfig,
    options: TrainOptions,
) -> Result<(NetworkParams<F>, Vec<TrainHistory>), TrainError> {
    if train_x.nrows() == 0 || valid_x.nrows() == 0 {
        return Err(TrainError::EmptySet);
    }
    let output_dim = params.output_dim();
    let train_y = super::one_hot_targets::<F>(train_labels, output_dim);

    let mut trainer = Trainer::new(params, config.clone())?.with_options(options);
    let mut history = Vec::new();
    let mut best_params = trainer.params.clone();
    let mut best_misclass = f64::INFINITY;
    let mut epochs_since_best = 0usize;

    for epoch in 1..=config.epochs_max {
        trainer.run_epoch(&train_x.to_owned(), &train_y, epoch)?;
        let (train_ll, train_auc, _) = split_metrics(&trainer.params, train_x, train_labels)?;
        let (valid_ll, valid_auc, valid_mis) = split_metrics(&trainer.params, valid_x, valid_labels)?;
        if !valid_ll.is_finite() || !train_ll.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        history.push(TrainHistory {
            epoch,
            train_logloss: train_ll,
            valid_logloss: valid_ll,
            train_auc,
            valid_auc,
            valid_misclass: valid_mis,
        });
        if valid_mis < best_misclass {
            best_misclass = valid_mis;
            best_params = trainer.params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    Ok((best_params, history))
}
