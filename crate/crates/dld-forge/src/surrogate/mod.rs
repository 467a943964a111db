//! Surrogate networks: a fully connected direct predictor for the critical
//! diameter and a convolutional decoder that reconstructs velocity fields,
//! both with from-scratch backpropagation and Adam training.

mod direct;
mod field;
mod io;
mod layers;

pub use direct::{fcnn_build, fcnn_gradient_self_check, fcnn_predict, fcnn_train, DirectNet, DirectSample};
pub use field::{cnn_build, cnn_gradient_self_check, cnn_predict_field, cnn_train, FieldNet, FieldSample};
pub use io::{load_model, save_model, NetModel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min-max normalization of the (f, N, Re) inputs onto [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mins: [f64; 3],
    pub maxs: [f64; 3],
}

impl InputNorm {
    /// Fit the hull of a set of raw inputs.
    pub fn fit(inputs: impl IntoIterator<Item = [f64; 3]>) -> Result<Self> {
        let mut mins = [f64::INFINITY; 3];
        let mut maxs = [f64::NEG_INFINITY; 3];
        for row in inputs {
            for k in 0..3 {
                mins[k] = mins[k].min(row[k]);
                maxs[k] = maxs[k].max(row[k]);
            }
        }
        if mins.iter().any(|m| !m.is_finite()) {
            return Err(Error::Argument("cannot fit normalization: no data".into()));
        }
        for k in 0..3 {
            if maxs[k] - mins[k] < 1e-12 {
                return Err(Error::Argument(format!(
                    "degenerate hull on feature {k}: [{}, {}]",
                    mins[k], maxs[k]
                )));
            }
        }
        Ok(InputNorm { mins, maxs })
    }

    pub fn normalize(&self, raw: [f64; 3]) -> Result<[f64; 3]> {
        const NAMES: [&str; 3] = ["f", "N", "Re"];
        let mut out = [0.0; 3];
        for k in 0..3 {
            let span = self.maxs[k] - self.mins[k];
            let v = (raw[k] - self.mins[k]) / span;
            if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(Error::Extrapolation {
                    name: NAMES[k],
                    value: raw[k],
                    min: self.mins[k],
                    max: self.maxs[k],
                });
            }
            out[k] = v.clamp(0.0, 1.0);
        }
        Ok(out)
    }

    pub fn denormalize(&self, unit: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = self.mins[k] + unit[k] * (self.maxs[k] - self.mins[k]);
        }
        out
    }
}

/// Training hyperparameters. The loss is always mean squared error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Learning-rate schedule: (number of epochs, rate) segments.
    pub schedule: Vec<(usize, f64)>,
    pub seed: u64,
    /// Stop once the epoch train loss drops below this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
}

impl TrainConfig {
    pub fn epochs(&self) -> usize {
        self.schedule.iter().map(|(e, _)| e).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be positive".into()));
        }
        if self.schedule.is_empty() || self.schedule.iter().any(|&(_, lr)| lr <= 0.0) {
            return Err(Error::Argument("schedule rates must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for a 0-based epoch index.
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let mut acc = 0;
        for &(span, lr) in &self.schedule {
            acc += span;
            if epoch < acc {
                return lr;
            }
        }
        self.schedule.last().map(|&(_, lr)| lr).unwrap_or(1e-3)
    }
}

/// Training bookkeeping kept with a trained net.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub seed: u64,
    /// (train MSE, dev MSE) per epoch; dev is NaN when no dev set was given.
    pub losses: Vec<(f64, f64)>,
}

impl TrainMeta {
    pub fn final_train_loss(&self) -> f64 {
        self.losses.last().map(|l| l.0).unwrap_or(f64::NAN)
    }

    pub fn final_dev_loss(&self) -> f64 {
        self.losses.last().map(|l| l.1).unwrap_or(f64::NAN)
    }
}

/// Deterministic Fisher-Yates shuffle used for minibatching.
pub(crate) fn shuffle_indices(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::Rng;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
