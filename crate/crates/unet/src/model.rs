//! The BCS-UNet reconstruction network.
//!
//! ```text
//! (c, k/4, k/4) ─ UpBlock ─ UpBlock ─▶ (U, k, k)
//!   UpBlock: tconv 4/2 → BN → ReLU → conv 3/1 → BN → ReLU, plus a
//!            residual 1x1 projection of the input, nearest-upsampled 2x
//! (U, k, k) ─ enc0 … enc4 ─▶ (E4, k/32, k/32)
//!   encoder: conv 4/2 → leaky ReLU(0.02) → BN
//! dec0(enc4) → cat enc3 → dec1 → cat enc2 → dec2 → cat enc1 → dec3 → cat enc0
//!   decoder: tconv 4/2 → ReLU → BN
//! head: tconv 4/2 to one channel → sigmoid ─▶ (1, k, k)
//! ```
//!
//! Decoder widths mirror the encoder (`dec_i` outputs `E_{3-i}` channels).
//! The network is fully convolutional, so any input whose upsampled side is
//! a multiple of 32 is accepted.

use bcs_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layers::{
    leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, sigmoid_backward, upsample2,
    upsample2_backward, BatchNorm2d, Conv2d, ConvTranspose2d, Param,
};
use crate::tensor::{Tensor, Window};

const DOWN: Window = Window { kernel: 4, stride: 2, pad: 1 };
const SAME: Window = Window { kernel: 3, stride: 1, pad: 1 };
const POINT: Window = Window { kernel: 1, stride: 1, pad: 0 };

pub const ENCODER_DEPTH: usize = 5;
/// Spatial factor between the measurement grid and the image.
pub const UPSAMPLE_FACTOR: usize = 4;
/// Smallest image side the encoder can halve five times.
pub const MIN_IMAGE_SIDE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub upsample_channels: usize,
    pub encoder_channels: Vec<usize>,
    pub block_size: usize,
    pub leaky_slope: f64,
}

impl ModelConfig {
    /// Full-width network for `in_channels` measurements per block.
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            upsample_channels: 64,
            encoder_channels: vec![64, 128, 256, 512, 512],
            block_size: 4,
            leaky_slope: 0.02,
        }
    }

    /// A narrow network with every width set to `width`.
    pub fn uniform(in_channels: usize, width: usize) -> Self {
        Self {
            upsample_channels: width,
            encoder_channels: vec![width; ENCODER_DEPTH],
            ..Self::new(in_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.len() != ENCODER_DEPTH {
            return Err(Error::Argument(format!(
                "encoder needs exactly {ENCODER_DEPTH} channel widths, got {}",
                self.encoder_channels.len()
            )));
        }
        if self.in_channels == 0 || self.upsample_channels == 0 || self.encoder_channels.contains(&0) {
            return Err(Error::Argument("channel widths must be positive".into()));
        }
        if self.block_size != UPSAMPLE_FACTOR {
            return Err(Error::Argument(format!(
                "two 2x upsampling stages need block size {UPSAMPLE_FACTOR}, got {}",
                self.block_size
            )));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Argument(format!("leaky slope must be in (0, 1), got {}", self.leaky_slope)));
        }
        Ok(())
    }

    fn decoder_out(&self, i: usize) -> usize {
        self.encoder_channels[ENCODER_DEPTH - 2 - i]
    }
}

#[derive(Debug, Clone)]
struct UpBlock {
    tconv: ConvTranspose2d,
    bn1: BatchNorm2d,
    conv: Conv2d,
    bn2: BatchNorm2d,
    proj: Conv2d,
    act1: Option<Tensor>,
    act2: Option<Tensor>,
}

impl UpBlock {
    fn new(name: &str, in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            tconv: ConvTranspose2d::new(&format!("{name}.tconv"), in_c, out_c, DOWN, rng),
            bn1: BatchNorm2d::new(&format!("{name}.bn1"), out_c),
            conv: Conv2d::new(&format!("{name}.conv"), out_c, out_c, SAME, rng),
            bn2: BatchNorm2d::new(&format!("{name}.bn2"), out_c),
            proj: Conv2d::new(&format!("{name}.proj"), in_c, out_c, POINT, rng),
            act1: None,
            act2: None,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let a1 = relu(&self.bn1.forward(&self.tconv.forward(x)));
        let mut out = relu(&self.bn2.forward(&self.conv.forward(&a1)));
        // a 1x1 conv commutes with nearest upsampling
        out.add_assign(&upsample2(&self.proj.forward(x)));
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let t = self.tconv.forward_train(x);
        let a1 = relu(&self.bn1.forward_train(&t));
        let c = self.conv.forward_train(&a1);
        let a2 = relu(&self.bn2.forward_train(&c));
        let mut out = a2.clone();
        out.add_assign(&upsample2(&self.proj.forward_train(x)));
        self.act1 = Some(a1);
        self.act2 = Some(a2);
        out
    }

    fn backward(&mut self, dout: &Tensor) -> Tensor {
        let a1 = self.act1.take().expect("backward before forward_train");
        let a2 = self.act2.take().expect("backward before forward_train");
        let mut dx = self.proj.backward(&upsample2_backward(dout));
        let d = self.bn2.backward(&relu_backward(dout, &a2));
        let d = self.conv.backward(&d);
        let d = self.bn1.backward(&relu_backward(&d, &a1));
        dx.add_assign(&self.tconv.backward(&d));
        dx
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        out.extend(self.tconv.params_mut());
        out.extend(self.bn1.params_mut());
        out.extend(self.conv.params_mut());
        out.extend(self.bn2.params_mut());
        out.extend(self.proj.params_mut());
        out
    }
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    conv: Conv2d,
    bn: BatchNorm2d,
    slope: f64,
    act: Option<Tensor>,
}

impl EncoderBlock {
    fn new(name: &str, in_c: usize, out_c: usize, slope: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::new(&format!("{name}.conv"), in_c, out_c, DOWN, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), out_c),
            slope,
            act: None,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        self.bn.forward(&leaky_relu(&self.conv.forward(x), self.slope))
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let a = leaky_relu(&self.conv.forward_train(x), self.slope);
        let out = self.bn.forward_train(&a);
        self.act = Some(a);
        out
    }

    fn backward(&mut self, dout: &Tensor) -> Tensor {
        let a = self.act.take().expect("backward before forward_train");
        let d = self.bn.backward(dout);
        self.conv.backward(&leaky_relu_backward(&d, &a, self.slope))
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.conv.params_mut().into_iter().collect();
        out.extend(self.bn.params_mut());
        out
    }
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    tconv: ConvTranspose2d,
    bn: BatchNorm2d,
    act: Option<Tensor>,
}

impl DecoderBlock {
    fn new(name: &str, in_c: usize, out_c: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            tconv: ConvTranspose2d::new(&format!("{name}.tconv"), in_c, out_c, DOWN, rng),
            bn: BatchNorm2d::new(&format!("{name}.bn"), out_c),
            act: None,
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        self.bn.forward(&relu(&self.tconv.forward(x)))
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let a = relu(&self.tconv.forward_train(x));
        let out = self.bn.forward_train(&a);
        self.act = Some(a);
        out
    }

    fn backward(&mut self, dout: &Tensor) -> Tensor {
        let a = self.act.take().expect("backward before forward_train");
        let d = self.bn.backward(dout);
        self.tconv.backward(&relu_backward(&d, &a))
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.tconv.params_mut().into_iter().collect();
        out.extend(self.bn.params_mut());
        out
    }
}

/// UpsampleNet followed by the UNet encoder-decoder.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    up: Vec<UpBlock>,
    encoders: Vec<EncoderBlock>,
    decoders: Vec<DecoderBlock>,
    head: ConvTranspose2d,
    /// Channel counts of the decoder outputs, for splitting skip gradients.
    skip_split: Vec<usize>,
    head_out: Option<Tensor>,
}

impl Network {
    /// Builds the network with weights drawn from a ChaCha8 stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = config.upsample_channels;
        let e = &config.encoder_channels;
        let up = vec![
            UpBlock::new("up0", config.in_channels, u, &mut rng),
            UpBlock::new("up1", u, u, &mut rng),
        ];
        let encoders = (0..ENCODER_DEPTH)
            .map(|i| {
                let in_c = if i == 0 { u } else { e[i - 1] };
                EncoderBlock::new(&format!("enc{i}"), in_c, e[i], config.leaky_slope, &mut rng)
            })
            .collect();
        let mut skip_split = Vec::new();
        let decoders = (0..ENCODER_DEPTH - 1)
            .map(|i| {
                let in_c = if i == 0 { e[ENCODER_DEPTH - 1] } else { config.decoder_out(i - 1) + e[ENCODER_DEPTH - 1 - i] };
                let out_c = config.decoder_out(i);
                skip_split.push(out_c);
                DecoderBlock::new(&format!("dec{i}"), in_c, out_c, &mut rng)
            })
            .collect();
        let head = ConvTranspose2d::new("head", config.decoder_out(ENCODER_DEPTH - 2) + e[0], 1, DOWN, &mut rng);
        Ok(Self { config, up, encoders, decoders, head, skip_split, head_out: None })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Checks an `(n, c, h, w)` measurement batch against the network's
    /// channel count and size contract.
    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "model expects {} measurement channels, got {}",
                self.config.in_channels, x.c
            )));
        }
        for side in [x.h, x.w] {
            let out = side * UPSAMPLE_FACTOR;
            if out < MIN_IMAGE_SIDE || out % MIN_IMAGE_SIDE != 0 {
                return Err(Error::Shape(format!(
                    "measurement grid {}x{} gives a {}x{} image; sides must be multiples of {MIN_IMAGE_SIDE} (at least {MIN_IMAGE_SIDE})",
                    x.h,
                    x.w,
                    x.h * UPSAMPLE_FACTOR,
                    x.w * UPSAMPLE_FACTOR
                )));
            }
        }
        Ok(())
    }

    /// Inference pass; batch norm uses running statistics.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = self.up[0].forward(x);
        h = self.up[1].forward(&h);
        let mut skips = Vec::with_capacity(ENCODER_DEPTH);
        for enc in &self.encoders {
            h = enc.forward(&h);
            skips.push(h.clone());
        }
        let mut d = self.decoders[0].forward(&skips[ENCODER_DEPTH - 1]);
        for (i, dec) in self.decoders.iter().enumerate().skip(1) {
            d = dec.forward(&Tensor::concat_channels(&d, &skips[ENCODER_DEPTH - 1 - i])?);
        }
        let cat = Tensor::concat_channels(&d, &skips[0])?;
        Ok(sigmoid(&self.head.forward(&cat)))
    }

    /// Training pass with batch statistics; caches activations for
    /// [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = self.up[0].forward_train(x);
        h = self.up[1].forward_train(&h);
        let mut skips = Vec::with_capacity(ENCODER_DEPTH);
        for enc in &mut self.encoders {
            h = enc.forward_train(&h);
            skips.push(h.clone());
        }
        let mut d = self.decoders[0].forward_train(&skips[ENCODER_DEPTH - 1]);
        for i in 1..self.decoders.len() {
            let cat = Tensor::concat_channels(&d, &skips[ENCODER_DEPTH - 1 - i])?;
            d = self.decoders[i].forward_train(&cat);
        }
        let cat = Tensor::concat_channels(&d, &skips[0])?;
        let out = sigmoid(&self.head.forward_train(&cat));
        self.head_out = Some(out.clone());
        Ok(out)
    }

    /// Backpropagates `dout` (gradient w.r.t. the output image batch),
    /// accumulating into every parameter's `grad`.
    pub fn backward(&mut self, dout: &Tensor) {
        let out = self.head_out.take().expect("backward before forward_train");
        let d = self.head.backward(&sigmoid_backward(dout, &out));
        let last = self.decoders.len() - 1;
        let (mut d_dec, d_skip0) = d.split_channels(self.skip_split[last]);
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; ENCODER_DEPTH];
        skip_grads[0] = Some(d_skip0);
        for i in (1..self.decoders.len()).rev() {
            let d = self.decoders[i].backward(&d_dec);
            let (prev, skip) = d.split_channels(self.skip_split[i - 1]);
            skip_grads[ENCODER_DEPTH - 1 - i] = Some(skip);
            d_dec = prev;
        }
        let mut d_enc = self.decoders[0].backward(&d_dec);
        for i in (0..ENCODER_DEPTH).rev() {
            if let Some(skip) = skip_grads[i].take() {
                d_enc.add_assign(&skip);
            }
            d_enc = self.encoders[i].backward(&d_enc);
        }
        let d = self.up[1].backward(&d_enc);
        self.up[0].backward(&d);
    }

    /// Every parameter and running-statistics buffer, in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in &mut self.up {
            out.extend(b.params_mut());
        }
        for b in &mut self.encoders {
            out.extend(b.params_mut());
        }
        for b in &mut self.decoders {
            out.extend(b.params_mut());
        }
        out.extend(self.head.params_mut());
        out
    }

    /// Snapshot of `(name, values)` for all parameters and buffers.
    pub fn state(&mut self) -> Vec<(String, Vec<f64>)> {
        self.params_mut().into_iter().map(|p| (p.name.clone(), p.value.clone())).collect()
    }

    pub fn load_state(&mut self, state: &[(String, Vec<f64>)]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != state.len() {
            return Err(Error::Format(format!(
                "model has {} tensors but {} were supplied",
                params.len(),
                state.len()
            )));
        }
        for (p, (name, values)) in params.into_iter().zip(state) {
            if &p.name != name || p.value.len() != values.len() {
                return Err(Error::Format(format!(
                    "tensor {name} ({} values) does not match {} ({} values)",
                    values.len(),
                    p.name,
                    p.value.len()
                )));
            }
            p.value.copy_from_slice(values);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Number of trainable scalars.
    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }
}
