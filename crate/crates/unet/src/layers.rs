//! Layers with hand-written backward passes.
//!
//! Each layer has a pure `forward` used for inference, a `forward_train`
//! that caches what `backward` needs, and a `backward` that accumulates
//! parameter gradients and returns the gradient with respect to its input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{col2im, gemm, im2col, Tensor, Window};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// A named parameter or state buffer with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Running statistics are stored and restored but never optimized.
    pub trainable: bool,
}

impl Param {
    fn new(name: String, value: Vec<f64>, trainable: bool) -> Self {
        let grad = vec![0.0; value.len()];
        Self { name, value, grad, trainable }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, len: usize, fan_in: f64) -> Vec<f64> {
    let bound = (6.0 / fan_in).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

fn add_bias(out: &mut [f64], bias: &[f64], plane: usize) {
    for (ch, b) in bias.iter().enumerate() {
        out[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad(grad: &mut [f64], dout: &[f64], plane: usize) {
    for (ch, g) in grad.iter_mut().enumerate() {
        *g += dout[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
    }
}

/// 2-D convolution; weights are `out_c x in_c x k x k`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub win: Window,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(name: &str, in_c: usize, out_c: usize, win: Window, rng: &mut ChaCha8Rng) -> Self {
        let k2 = win.kernel * win.kernel;
        let fan_in = (in_c * k2) as f64;
        Self {
            in_c,
            out_c,
            win,
            weight: Param::new(format!("{name}.weight"), he_uniform(rng, out_c * in_c * k2, fan_in), true),
            bias: Param::new(format!("{name}.bias"), vec![0.0; out_c], true),
            input: None,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.win == Window { kernel: 1, stride: 1, pad: 0 }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "{}: channel mismatch", self.weight.name);
        let (oh, ow) = (self.win.conv_out(x.h), self.win.conv_out(x.w));
        let kdim = self.in_c * self.win.kernel * self.win.kernel;
        let mut out = Tensor::zeros(x.n, self.out_c, oh, ow);
        let mut col = if self.is_pointwise() { Vec::new() } else { vec![0.0; kdim * oh * ow] };
        for i in 0..x.n {
            let cols: &[f64] = if self.is_pointwise() {
                x.sample(i)
            } else {
                im2col(x.sample(i), x.c, x.h, x.w, self.win, oh, ow, &mut col);
                &col
            };
            let dst = out.sample_mut(i);
            gemm(self.out_c, kdim, oh * ow, &self.weight.value, false, cols, false, 0.0, dst);
            add_bias(dst, &self.bias.value, oh * ow);
        }
        out
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let out = self.forward(x);
        self.input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward before forward_train");
        let (oh, ow) = (dout.h, dout.w);
        let kdim = self.in_c * self.win.kernel * self.win.kernel;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let pointwise = self.is_pointwise();
        let mut col = if pointwise { Vec::new() } else { vec![0.0; kdim * oh * ow] };
        let mut dcol = if pointwise { Vec::new() } else { vec![0.0; kdim * oh * ow] };
        for i in 0..x.n {
            let g = dout.sample(i);
            accumulate_bias_grad(&mut self.bias.grad, g, oh * ow);
            if pointwise {
                gemm(self.out_c, oh * ow, kdim, g, false, x.sample(i), true, 1.0, &mut self.weight.grad);
                gemm(kdim, self.out_c, oh * ow, &self.weight.value, true, g, false, 0.0, dx.sample_mut(i));
            } else {
                im2col(x.sample(i), x.c, x.h, x.w, self.win, oh, ow, &mut col);
                gemm(self.out_c, oh * ow, kdim, g, false, &col, true, 1.0, &mut self.weight.grad);
                gemm(kdim, self.out_c, oh * ow, &self.weight.value, true, g, false, 0.0, &mut dcol);
                col2im(&dcol, x.c, x.h, x.w, self.win, oh, ow, dx.sample_mut(i));
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Transposed 2-D convolution; weights are `in_c x out_c x k x k`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub in_c: usize,
    pub out_c: usize,
    pub win: Window,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(name: &str, in_c: usize, out_c: usize, win: Window, rng: &mut ChaCha8Rng) -> Self {
        let k2 = win.kernel * win.kernel;
        // each output pixel sees k²/stride² taps per input channel
        let fan_in = (in_c * k2) as f64 / (win.stride * win.stride) as f64;
        Self {
            in_c,
            out_c,
            win,
            weight: Param::new(format!("{name}.weight"), he_uniform(rng, in_c * out_c * k2, fan_in), true),
            bias: Param::new(format!("{name}.bias"), vec![0.0; out_c], true),
            input: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.in_c, "{}: channel mismatch", self.weight.name);
        let (oh, ow) = (self.win.transpose_out(x.h), self.win.transpose_out(x.w));
        let kdim = self.out_c * self.win.kernel * self.win.kernel;
        let mut out = Tensor::zeros(x.n, self.out_c, oh, ow);
        let mut col = vec![0.0; kdim * x.h * x.w];
        for i in 0..x.n {
            gemm(kdim, self.in_c, x.h * x.w, &self.weight.value, true, x.sample(i), false, 0.0, &mut col);
            let dst = out.sample_mut(i);
            col2im(&col, self.out_c, oh, ow, self.win, x.h, x.w, dst);
            add_bias(dst, &self.bias.value, oh * ow);
        }
        out
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let out = self.forward(x);
        self.input = Some(x.clone());
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward before forward_train");
        let kdim = self.out_c * self.win.kernel * self.win.kernel;
        let plane_in = x.h * x.w;
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut dcol = vec![0.0; kdim * plane_in];
        for i in 0..x.n {
            let g = dout.sample(i);
            accumulate_bias_grad(&mut self.bias.grad, g, dout.h * dout.w);
            im2col(g, self.out_c, dout.h, dout.w, self.win, x.h, x.w, &mut dcol);
            gemm(self.in_c, kdim, plane_in, &self.weight.value, false, &dcol, false, 0.0, dx.sample_mut(i));
            gemm(self.in_c, plane_in, kdim, x.sample(i), false, &dcol, true, 1.0, &mut self.weight.grad);
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Batch normalization over `(N, H, W)` per channel.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl BatchNorm2d {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(format!("{name}.gamma"), vec![1.0; channels], true),
            beta: Param::new(format!("{name}.beta"), vec![0.0; channels], true),
            running_mean: Param::new(format!("{name}.running_mean"), vec![0.0; channels], false),
            running_var: Param::new(format!("{name}.running_var"), vec![1.0; channels], false),
            cache: None,
        }
    }

    /// Inference: normalizes with the running statistics.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        let plane = x.plane();
        for i in 0..x.n {
            let s = out.sample_mut(i);
            for ch in 0..self.channels {
                let inv = 1.0 / (self.running_var.value[ch] + BN_EPS).sqrt();
                let scale = self.gamma.value[ch] * inv;
                let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
                s[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }

    /// Training: normalizes with batch statistics and updates the running
    /// estimates (unbiased variance, momentum 0.1).
    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let plane = x.plane();
        let count = (x.n * plane) as f64;
        let mut xhat = x.clone();
        let mut inv_std = vec![0.0; self.channels];
        for ch in 0..self.channels {
            let mut sum = 0.0;
            for i in 0..x.n {
                sum += x.sample(i)[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for i in 0..x.n {
                sq += x.sample(i)[ch * plane..(ch + 1) * plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            let var = sq / count;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            inv_std[ch] = inv;
            for i in 0..x.n {
                xhat.sample_mut(i)[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = (*v - mean) * inv);
            }
            let unbiased = if count > 1.0 { sq / (count - 1.0) } else { var };
            let rm = &mut self.running_mean.value[ch];
            *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean;
            let rv = &mut self.running_var.value[ch];
            *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
        }
        let mut out = xhat.clone();
        for i in 0..x.n {
            let s = out.sample_mut(i);
            for ch in 0..self.channels {
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                s[ch * plane..(ch + 1) * plane].iter_mut().for_each(|v| *v = *v * g + b);
            }
        }
        self.cache = Some((xhat, inv_std));
        out
    }

    pub fn backward(&mut self, dout: &Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("backward before forward_train");
        let plane = dout.plane();
        let count = (dout.n * plane) as f64;
        let mut dx = Tensor::zeros(dout.n, dout.c, dout.h, dout.w);
        for ch in 0..self.channels {
            let range = ch * plane..(ch + 1) * plane;
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for i in 0..dout.n {
                let dy = &dout.sample(i)[range.clone()];
                let xh = &xhat.sample(i)[range.clone()];
                sum_dy += dy.iter().sum::<f64>();
                sum_dy_xhat += dy.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
            }
            self.beta.grad[ch] += sum_dy;
            self.gamma.grad[ch] += sum_dy_xhat;
            let k = self.gamma.value[ch] * inv_std[ch] / count;
            for i in 0..dout.n {
                let dy = &dout.sample(i)[range.clone()];
                let xh = &xhat.sample(i)[range.clone()];
                let dst = &mut dx.sample_mut(i)[range.clone()];
                for ((d, &g), &h) in dst.iter_mut().zip(dy).zip(xh) {
                    *d = k * (count * g - sum_dy - h * sum_dy_xhat);
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Backward through ReLU given its output.
pub fn relu_backward(dout: &Tensor, out: &Tensor) -> Tensor {
    let mut dx = dout.clone();
    for (d, &o) in dx.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= slope
        }
    });
    out
}

/// Backward through leaky ReLU given its output (the sign is preserved for
/// a positive slope).
pub fn leaky_relu_backward(dout: &Tensor, out: &Tensor, slope: f64) -> Tensor {
    let mut dx = dout.clone();
    for (d, &o) in dx.data.iter_mut().zip(&out.data) {
        if o < 0.0 {
            *d *= slope;
        }
    }
    dx
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
    out
}

pub fn sigmoid_backward(dout: &Tensor, out: &Tensor) -> Tensor {
    let mut dx = dout.clone();
    for (d, &s) in dx.data.iter_mut().zip(&out.data) {
        *d *= s * (1.0 - s);
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (oh, ow) = (2 * x.h, 2 * x.w);
    let mut out = Tensor::zeros(x.n, x.c, oh, ow);
    for nc in 0..x.n * x.c {
        let src = &x.data[nc * x.h * x.w..(nc + 1) * x.h * x.w];
        let dst = &mut out.data[nc * oh * ow..(nc + 1) * oh * ow];
        for r in 0..oh {
            for c in 0..ow {
                dst[r * ow + c] = src[(r / 2) * x.w + c / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(dout: &Tensor) -> Tensor {
    let (h, w) = (dout.h / 2, dout.w / 2);
    let mut dx = Tensor::zeros(dout.n, dout.c, h, w);
    for nc in 0..dout.n * dout.c {
        let src = &dout.data[nc * dout.h * dout.w..(nc + 1) * dout.h * dout.w];
        let dst = &mut dx.data[nc * h * w..(nc + 1) * h * w];
        for r in 0..dout.h {
            for c in 0..dout.w {
                dst[(r / 2) * w + c / 2] += src[r * dout.w + c];
            }
        }
    }
    dx
}
