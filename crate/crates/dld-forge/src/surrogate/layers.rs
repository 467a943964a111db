//! Dense and convolutional layer primitives with hand-rolled backprop, plus
//! the Adam update rule. Feature maps are HWC with the channel index
//! contiguous, so every inner loop runs over a contiguous slice.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Flat parameter tensor with its Adam moments.
#[derive(Debug, Clone, Default)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Tensor {
    pub fn zeros(len: usize) -> Self {
        Tensor {
            data: vec![0.0; len],
            grad: vec![0.0; len],
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn he_init(&mut self, rng: &mut ChaCha8Rng, fan_in: usize) {
        let scale = (2.0 / fan_in as f64).sqrt();
        for w in &mut self.data {
            // Box-Muller from two uniforms keeps the dependency surface small.
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            *w = scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// One Adam step with bias correction; `t` is 1-based.
    pub fn adam_step(&mut self, lr: f64, t: usize) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let c1 = 1.0 - B1.powi(t as i32);
        let c2 = 1.0 - B2.powi(t as i32);
        for i in 0..self.data.len() {
            let g = self.grad[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            self.data[i] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
}

/// Activation applied after a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

pub fn apply_activation(act: Activation, values: &mut [f64]) {
    if act == Activation::Relu {
        for v in values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Backprop through the activation given the post-activation values.
pub fn activation_backward(act: Activation, post: &[f64], grad: &mut [f64]) {
    if act == Activation::Relu {
        for (g, &p) in grad.iter_mut().zip(post) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

/// Fully connected layer, weights `[out][in]` row-major.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub in_w: usize,
    pub out_w: usize,
    pub act: Activation,
}

impl Dense {
    pub fn new(in_w: usize, out_w: usize, act: Activation) -> Self {
        Dense {
            w: Tensor::zeros(in_w * out_w),
            b: Tensor::zeros(out_w),
            in_w,
            out_w,
            act,
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.w.he_init(rng, self.in_w);
    }

    pub fn forward(&self, input: &[f64], output: &mut [f64]) {
        debug_assert_eq!(input.len(), self.in_w);
        debug_assert_eq!(output.len(), self.out_w);
        for (o, out) in output.iter_mut().enumerate() {
            let row = &self.w.data[o * self.in_w..(o + 1) * self.in_w];
            let mut acc = self.b.data[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            *out = acc;
        }
        apply_activation(self.act, output);
    }

    /// Backprop: `post` are this layer's post-activation outputs, `grad_out`
    /// the loss gradient w.r.t. them (modified in place), `input` the layer
    /// input; accumulates into the parameter grads and writes `grad_in`.
    pub fn backward(
        &mut self,
        input: &[f64],
        post: &[f64],
        grad_out: &mut [f64],
        grad_in: &mut [f64],
    ) {
        activation_backward(self.act, post, grad_out);
        grad_in.iter_mut().for_each(|g| *g = 0.0);
        for (o, &go) in grad_out.iter().enumerate() {
            self.b.grad[o] += go;
            let row = &mut self.w.grad[o * self.in_w..(o + 1) * self.in_w];
            let wrow = &self.w.data[o * self.in_w..(o + 1) * self.in_w];
            for i in 0..self.in_w {
                row[i] += go * input[i];
                grad_in[i] += wrow[i] * go;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.data.len() + self.b.data.len()
    }
}

/// 3x3 convolution, stride 1, zero ("same") padding, HWC feature maps.
/// Weights are stored `[ky][kx][ic][oc]` so both forward accumulation and
/// the weight-gradient outer product run contiguously over `oc`.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub w: Tensor,
    pub b: Tensor,
    pub in_ch: usize,
    pub out_ch: usize,
    pub act: Activation,
}

impl Conv3x3 {
    pub fn new(in_ch: usize, out_ch: usize, act: Activation) -> Self {
        Conv3x3 {
            w: Tensor::zeros(9 * in_ch * out_ch),
            b: Tensor::zeros(out_ch),
            in_ch,
            out_ch,
            act,
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.w.he_init(rng, 9 * self.in_ch);
    }

    pub fn forward(&self, input: &[f64], size: usize, output: &mut [f64]) {
        let (ic, oc) = (self.in_ch, self.out_ch);
        debug_assert_eq!(input.len(), size * size * ic);
        debug_assert_eq!(output.len(), size * size * oc);
        for y in 0..size {
            for x in 0..size {
                let out_px = &mut output[(y * size + x) * oc..(y * size + x + 1) * oc];
                out_px.copy_from_slice(&self.b.data);
                for ky in 0..3usize {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= size as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= size as isize {
                            continue;
                        }
                        let in_px =
                            &input[(sy as usize * size + sx as usize) * ic..][..ic];
                        let wk = &self.w.data[(ky * 3 + kx) * ic * oc..][..ic * oc];
                        for (i, &xv) in in_px.iter().enumerate() {
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &wk[i * oc..(i + 1) * oc];
                            for (o, wv) in wrow.iter().enumerate() {
                                out_px[o] += xv * wv;
                            }
                        }
                    }
                }
            }
        }
        apply_activation(self.act, output);
    }

    pub fn backward(
        &mut self,
        input: &[f64],
        size: usize,
        post: &[f64],
        grad_out: &mut [f64],
        grad_in: &mut [f64],
    ) {
        let (ic, oc) = (self.in_ch, self.out_ch);
        activation_backward(self.act, post, grad_out);
        grad_in.iter_mut().for_each(|g| *g = 0.0);
        for y in 0..size {
            for x in 0..size {
                let go_px = &grad_out[(y * size + x) * oc..(y * size + x + 1) * oc];
                for (o, &g) in go_px.iter().enumerate() {
                    self.b.grad[o] += g;
                }
                for ky in 0..3usize {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= size as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let sx = x as isize + kx as isize - 1;
                        if sx < 0 || sx >= size as isize {
                            continue;
                        }
                        let px = sy as usize * size + sx as usize;
                        let in_px = &input[px * ic..(px + 1) * ic];
                        let gi_px = &mut grad_in[px * ic..(px + 1) * ic];
                        let base = (ky * 3 + kx) * ic * oc;
                        for i in 0..ic {
                            let wrow = &self.w.data[base + i * oc..base + (i + 1) * oc];
                            let grow = &mut self.w.grad[base + i * oc..base + (i + 1) * oc];
                            let xv = in_px[i];
                            let mut acc = 0.0;
                            for o in 0..oc {
                                let g = go_px[o];
                                grow[o] += xv * g;
                                acc += wrow[o] * g;
                            }
                            gi_px[i] += acc;
                        }
                    }
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.data.len() + self.b.data.len()
    }
}

/// 2x nearest-neighbor upsampling of an HWC map.
pub fn upsample2x(input: &[f64], size: usize, ch: usize, output: &mut [f64]) {
    let out_size = 2 * size;
    debug_assert_eq!(output.len(), out_size * out_size * ch);
    for y in 0..out_size {
        let sy = y / 2;
        for x in 0..out_size {
            let sx = x / 2;
            let src = &input[(sy * size + sx) * ch..(sy * size + sx + 1) * ch];
            output[(y * out_size + x) * ch..(y * out_size + x + 1) * ch].copy_from_slice(src);
        }
    }
}

/// Backprop through nearest-neighbor upsampling: sum the 2x2 fan-out.
pub fn upsample2x_backward(grad_out: &[f64], size: usize, ch: usize, grad_in: &mut [f64]) {
    let out_size = 2 * size;
    grad_in.iter_mut().for_each(|g| *g = 0.0);
    for y in 0..out_size {
        let sy = y / 2;
        for x in 0..out_size {
            let sx = x / 2;
            let dst = &mut grad_in[(sy * size + sx) * ch..(sy * size + sx + 1) * ch];
            let src = &grad_out[(y * out_size + x) * ch..(y * out_size + x + 1) * ch];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}
