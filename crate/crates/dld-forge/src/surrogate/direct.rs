//! Fully connected direct predictor: (f, N, Re) -> nondimensional critical
//! diameter, rectified-linear hidden layers, linear output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::DldParams;

use super::layers::{Activation, Dense};
use super::{shuffle_indices, InputNorm, TrainConfig, TrainMeta};

/// One labeled training point, inputs in raw units.
#[derive(Debug, Clone, Copy)]
pub struct DirectSample {
    pub inputs: [f64; 3],
    pub d_c: f64,
}

#[derive(Debug, Clone)]
pub struct DirectNet {
    pub layers: Vec<Dense>,
    pub norm: InputNorm,
    pub meta: TrainMeta,
}

/// Build the predictor topology with zero weights; training initializes
/// them from its seed.
pub fn fcnn_build(hidden_layers: usize, width: usize) -> Result<DirectNet> {
    if hidden_layers < 1 || width < 1 {
        return Err(Error::Argument(
            "need at least one hidden layer and one node".into(),
        ));
    }
    let mut layers = Vec::with_capacity(hidden_layers + 1);
    layers.push(Dense::new(3, width, Activation::Relu));
    for _ in 1..hidden_layers {
        layers.push(Dense::new(width, width, Activation::Relu));
    }
    layers.push(Dense::new(width, 1, Activation::Linear));
    Ok(DirectNet {
        layers,
        norm: InputNorm {
            mins: [0.0, 0.0, 0.0],
            maxs: [1.0, 1.0, 1.0],
        },
        meta: TrainMeta::default(),
    })
}

impl DirectNet {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Parameter tensors in canonical serialization order.
    pub(super) fn tensors(&self) -> Vec<&super::layers::Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub(super) fn tensors_mut(&mut self) -> Vec<&mut super::layers::Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Forward pass on normalized inputs.
    pub fn forward(&self, unit_inputs: [f64; 3]) -> f64 {
        let mut current = unit_inputs.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.resize(layer.out_w, 0.0);
            layer.forward(&current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        current[0]
    }

    fn init_weights(&mut self, rng: &mut ChaCha8Rng) {
        for layer in &mut self.layers {
            layer.init(rng);
        }
    }

    fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.w.zero_grad();
            layer.b.zero_grad();
        }
    }

    fn adam_step(&mut self, lr: f64, t: usize) {
        for layer in &mut self.layers {
            layer.w.adam_step(lr, t);
            layer.b.adam_step(lr, t);
        }
    }

    /// Forward with tape, backward accumulating grads; returns squared error.
    fn accumulate(&mut self, unit_inputs: [f64; 3], target: f64, grad_scale: f64) -> f64 {
        // Tape of post-activation vectors per layer.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        activations.push(unit_inputs.to_vec());
        for layer in &self.layers {
            let mut out = vec![0.0; layer.out_w];
            layer.forward(activations.last().unwrap(), &mut out);
            activations.push(out);
        }
        let prediction = activations.last().unwrap()[0];
        let err = prediction - target;

        let mut grad_out = vec![2.0 * err * grad_scale];
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let mut grad_in = vec![0.0; layer.in_w];
            layer.backward(
                &activations[i],
                &activations[i + 1],
                &mut grad_out,
                &mut grad_in,
            );
            grad_out = grad_in;
        }
        err * err
    }

    pub fn mse(&self, samples: &[DirectSample]) -> f64 {
        if samples.is_empty() {
            return f64::NAN;
        }
        let mut acc = 0.0;
        for s in samples {
            let unit = self
                .norm
                .normalize(s.inputs)
                .expect("training samples are inside the fitted hull");
            let e = self.forward(unit) - s.d_c;
            acc += e * e;
        }
        acc / samples.len() as f64
    }
}

/// Train on the labeled samples; `dev` is monitored only.
pub fn fcnn_train(
    net: &mut DirectNet,
    train: &[DirectSample],
    dev: &[DirectSample],
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    net.norm = InputNorm::fit(train.iter().chain(dev.iter()).map(|s| s.inputs))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    net.init_weights(&mut rng);

    let normalized: Vec<([f64; 3], f64)> = train
        .iter()
        .map(|s| (net.norm.normalize(s.inputs).unwrap(), s.d_c))
        .collect();

    let mut losses = Vec::with_capacity(cfg.epochs());
    let mut step = 0usize;
    for epoch in 0..cfg.epochs() {
        let lr = cfg.rate_at(epoch);
        let order = shuffle_indices(&mut rng, normalized.len());
        let mut epoch_sq = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            net.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (unit, target) = normalized[i];
                epoch_sq += net.accumulate(unit, target, scale);
            }
            step += 1;
            net.adam_step(lr, step);
        }
        let train_mse = epoch_sq / normalized.len() as f64;
        if !train_mse.is_finite() {
            return Err(Error::Training {
                epoch,
                loss: train_mse,
            });
        }
        let dev_mse = if dev.is_empty() { f64::NAN } else { net.mse(dev) };
        losses.push((train_mse, dev_mse));
        if cfg.stop_below.is_some_and(|t| train_mse < t) {
            break;
        }
    }
    net.meta = TrainMeta {
        epochs: losses.len(),
        seed: cfg.seed,
        losses,
    };
    Ok(())
}

/// Predict the nondimensional critical diameter, clamped into (0, 1-f).
pub fn fcnn_predict(net: &DirectNet, params: &DldParams) -> Result<f64> {
    let unit = net.norm.normalize([params.f, params.n as f64, params.re])?;
    let raw = net.forward(unit);
    let ceiling = (1.0 - params.f) - 1e-9;
    Ok(raw.clamp(1e-9, ceiling))
}

/// Self-check: worst relative deviation between analytic and central
/// finite-difference gradients over random weight coordinates of a small
/// randomly initialized predictor.
pub fn fcnn_gradient_self_check(seed: u64, coords: usize) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = fcnn_build(3, 12).expect("valid topology");
    net.init_weights(&mut rng);
    let unit = [rng.gen(), rng.gen(), rng.gen()];
    let target = 0.3;
    net.zero_grads();
    net.accumulate(unit, target, 1.0);
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let li = rng.gen_range(0..net.layers.len());
        let wi = rng.gen_range(0..net.layers[li].w.data.len());
        let analytic = net.layers[li].w.grad[wi];
        let eps = 1e-6;
        let orig = net.layers[li].w.data[wi];
        net.layers[li].w.data[wi] = orig + eps;
        let up = (net.forward(unit) - target).powi(2);
        net.layers[li].w.data[wi] = orig - eps;
        let down = (net.forward(unit) - target).powi(2);
        net.layers[li].w.data[wi] = orig;
        let fd = (up - down) / (2.0 * eps);
        if analytic.abs() < 1e-12 && fd.abs() < 1e-12 {
            continue;
        }
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(((analytic - fd) / denom).abs());
    }
    worst
}
