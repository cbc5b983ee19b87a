//! Encoder-decoder segmentation network.
//!
//! Four encoder levels with channel widths f, 2f, 4f, 8f. The first three
//! levels are double 3x3 convolutions followed by 2x2 max pooling; the
//! deepest level is a single 3x3 convolution at width 8f. The decoder
//! mirrors the encoder with 2x bilinear upsampling, concatenation with the
//! matching skip (skip channels first), and double convolutions halving the
//! width back down to f. A 1x1 convolution plus sigmoid produces one
//! burn-probability channel. No normalization or dropout anywhere.
//!
//! Three poolings mean inputs must have spatial dims divisible by 8.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::nn::{
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, sigmoid, sigmoid_backward,
    upsample_bilinear2x, upsample_bilinear2x_backward, Adam, Conv2d, ConvGrad,
};
use crate::{Error, Result};

/// Encoder levels including the deepest single-convolution block.
pub const NUM_LEVELS: usize = 4;

/// Spatial dims must be divisible by this (one halving per pooling).
pub const SPATIAL_DIVISOR: usize = 8;

/// Learnable layers in application order.
pub const LAYER_NAMES: [&str; 14] = [
    "enc1a", "enc1b", "enc2a", "enc2b", "enc3a", "enc3b", "bottleneck", "dec1a", "dec1b",
    "dec2a", "dec2b", "dec3a", "dec3b", "head",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    /// Width of the first encoder level; deeper levels double it.
    pub initial_filters: usize,
}

impl UNetConfig {
    pub fn new(in_channels: usize, initial_filters: usize) -> UNetConfig {
        UNetConfig {
            in_channels,
            initial_filters,
        }
    }

    /// Channel widths per encoder level: f, 2f, 4f, 8f.
    pub fn widths(&self) -> [usize; NUM_LEVELS] {
        let f = self.initial_filters;
        [f, 2 * f, 4 * f, 8 * f]
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    pub config: UNetConfig,
    convs: Vec<Conv2d>,
}

/// Gradients for every learnable layer, in [`LAYER_NAMES`] order.
#[derive(Debug, Clone)]
pub struct UNetGrads(pub Vec<ConvGrad>);

impl UNetGrads {
    pub fn zeros_like(net: &UNet) -> UNetGrads {
        UNetGrads(net.convs.iter().map(ConvGrad::zeros_like).collect())
    }

    pub fn add_assign(&mut self, other: &UNetGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            g.scale(factor);
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    /// Input to each conv, by layer index.
    conv_inputs: Vec<Array3<f64>>,
    /// Pre-activation input to the ReLU after each conv (head excluded).
    relu_inputs: Vec<Array3<f64>>,
    pool_args: Vec<ndarray::Array3<u8>>,
    pool_in_dims: Vec<(usize, usize, usize)>,
    up_in_dims: Vec<(usize, usize, usize)>,
    /// Sigmoid output `(1, h, w)`.
    pub probs: Array3<f64>,
}

impl UNet {
    pub fn new(config: UNetConfig, seed: u64) -> UNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [w1, w2, w3, w4] = config.widths();
        let c = config.in_channels;
        let conv3 = |o, i, rng: &mut ChaCha8Rng| Conv2d::he_init(o, i, 3, 1, rng);
        let convs = vec![
            conv3(w1, c, &mut rng),
            conv3(w1, w1, &mut rng),
            conv3(w2, w1, &mut rng),
            conv3(w2, w2, &mut rng),
            conv3(w3, w2, &mut rng),
            conv3(w3, w3, &mut rng),
            conv3(w4, w3, &mut rng),
            conv3(w3, w3 + w4, &mut rng),
            conv3(w3, w3, &mut rng),
            conv3(w2, w2 + w3, &mut rng),
            conv3(w2, w2, &mut rng),
            conv3(w1, w1 + w2, &mut rng),
            conv3(w1, w1, &mut rng),
            Conv2d::he_init(1, w1, 1, 0, &mut rng),
        ];
        UNet { config, convs }
    }

    pub fn parameter_count(&self) -> usize {
        self.convs.iter().map(Conv2d::parameter_count).sum()
    }

    /// `(name, layer)` pairs in application order.
    pub fn layers(&self) -> impl Iterator<Item = (&'static str, &Conv2d)> {
        LAYER_NAMES.iter().copied().zip(self.convs.iter())
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv2d> {
        self.convs.iter_mut().collect()
    }

    fn check_input(&self, x: &Array3<f64>) -> Result<()> {
        let (c, h, w) = x.dim();
        if c != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        if h == 0 || w == 0 || h % SPATIAL_DIVISOR != 0 || w % SPATIAL_DIVISOR != 0 {
            return Err(Error::ShapeMismatch(format!(
                "spatial dims {h}x{w} must be positive multiples of {SPATIAL_DIVISOR}"
            )));
        }
        Ok(())
    }

    /// Full forward pass retaining the activations needed for backprop.
    pub fn forward_cached(&self, x: &Array3<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut cache = ForwardCache {
            conv_inputs: Vec::with_capacity(self.convs.len()),
            relu_inputs: Vec::with_capacity(self.convs.len() - 1),
            pool_args: Vec::with_capacity(3),
            pool_in_dims: Vec::with_capacity(3),
            up_in_dims: Vec::with_capacity(3),
            probs: Array3::zeros((0, 0, 0)),
        };
        let conv_relu = |input: Array3<f64>, idx: usize, cache: &mut ForwardCache| {
            let pre = self.convs[idx].forward(&input);
            cache.conv_inputs.push(input);
            let out = relu(&pre);
            cache.relu_inputs.push(pre);
            out
        };

        // Encoder: three double-conv levels, each followed by pooling.
        let mut cur = x.clone();
        let mut skips = Vec::with_capacity(3);
        for level in 0..3 {
            let a = conv_relu(cur, 2 * level, &mut cache);
            let b = conv_relu(a, 2 * level + 1, &mut cache);
            cache.pool_in_dims.push(b.dim());
            let (pooled, arg) = maxpool2x2(&b);
            cache.pool_args.push(arg);
            skips.push(b);
            cur = pooled;
        }
        // Deepest level: single convolution at width 8f.
        cur = conv_relu(cur, 6, &mut cache);

        // Decoder: upsample, concat skip first, double conv.
        for (j, skip) in skips.into_iter().rev().enumerate() {
            cache.up_in_dims.push(cur.dim());
            let up = upsample_bilinear2x(&cur);
            let cat = ndarray::concatenate(ndarray::Axis(0), &[skip.view(), up.view()])
                .expect("skip and upsampled share spatial dims");
            let a = conv_relu(cat, 7 + 2 * j, &mut cache);
            cur = conv_relu(a, 8 + 2 * j, &mut cache);
        }

        let logits = self.convs[13].forward(&cur);
        cache.conv_inputs.push(cur);
        cache.probs = sigmoid(&logits);
        Ok(cache)
    }

    /// Probability map only.
    pub fn forward(&self, x: &Array3<f64>) -> Result<Array3<f64>> {
        Ok(self.forward_cached(x)?.probs)
    }

    /// Deterministic parallel forward over a batch (output order matches
    /// input order).
    pub fn forward_batch(&self, batch: &[Array3<f64>]) -> Result<Vec<Array3<f64>>> {
        batch.par_iter().map(|x| self.forward(x)).collect()
    }

    /// Backpropagates `grad_probs` (dL/d probability) through the cached
    /// forward pass. Returns parameter gradients; the input gradient is
    /// discarded.
    pub fn backward(&self, cache: &ForwardCache, grad_probs: &Array3<f64>) -> UNetGrads {
        let mut grads: Vec<Option<ConvGrad>> = vec![None; self.convs.len()];
        let set = |idx: usize, g: ConvGrad, grads: &mut Vec<Option<ConvGrad>>| {
            grads[idx] = Some(g);
        };

        let g = sigmoid_backward(&cache.probs, grad_probs);
        let (mut g, head_grad) = self.convs[13].backward(&cache.conv_inputs[13], &g);
        set(13, head_grad, &mut grads);

        // Decoder blocks, deepest-first in the forward order means we walk
        // dec3 -> dec1 here; each split yields the skip gradient and the
        // gradient flowing down through the upsampling.
        let [w1, w2, w3, _] = self.config.widths();
        let skip_widths = [w1, w2, w3];
        let mut skip_grads: Vec<Array3<f64>> = Vec::with_capacity(3);
        for j in (0..3).rev() {
            let back = |idx: usize, g: &Array3<f64>| {
                let pre = relu_backward(&cache.relu_inputs[idx], g);
                self.convs[idx].backward(&cache.conv_inputs[idx], &pre)
            };
            let (gb, grad_b) = back(8 + 2 * j, &g);
            set(8 + 2 * j, grad_b, &mut grads);
            let (gcat, grad_a) = back(7 + 2 * j, &gb);
            set(7 + 2 * j, grad_a, &mut grads);
            let skip_c = skip_widths[2 - j];
            let g_skip = gcat.slice(ndarray::s![..skip_c, .., ..]).to_owned();
            let g_up = gcat.slice(ndarray::s![skip_c.., .., ..]).to_owned();
            skip_grads.push(g_skip);
            g = upsample_bilinear2x_backward(&g_up, cache.up_in_dims[j]);
        }
        // skip_grads now holds [enc1, enc2, enc3] order (dec3 split first).

        // Deepest single conv.
        {
            let pre = relu_backward(&cache.relu_inputs[6], &g);
            let (gx, grad) = self.convs[6].backward(&cache.conv_inputs[6], &pre);
            set(6, grad, &mut grads);
            g = gx;
        }

        // Encoder levels, deepest-first.
        for level in (0..3).rev() {
            let mut gb = maxpool2x2_backward(
                &cache.pool_args[level],
                &g,
                cache.pool_in_dims[level],
            );
            gb += &skip_grads[level];
            let back = |idx: usize, g: &Array3<f64>| {
                let pre = relu_backward(&cache.relu_inputs[idx], g);
                self.convs[idx].backward(&cache.conv_inputs[idx], &pre)
            };
            let (ga, grad_b) = back(2 * level + 1, &gb);
            set(2 * level + 1, grad_b, &mut grads);
            let (gx, grad_a) = back(2 * level, &ga);
            set(2 * level, grad_a, &mut grads);
            g = gx;
        }

        UNetGrads(grads.into_iter().map(Option::unwrap).collect())
    }

    /// One optimizer update from accumulated gradients.
    pub fn apply_grads(&mut self, opt: &mut Adam, grads: &UNetGrads) {
        let mut convs = self.convs_mut();
        opt.step(&mut convs, &grads.0);
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(b"SMUN")?;
        f.write_all(&1u32.to_le_bytes())?;
        f.write_all(&(self.config.in_channels as u32).to_le_bytes())?;
        f.write_all(&(self.config.initial_filters as u32).to_le_bytes())?;
        for conv in &self.convs {
            for &v in conv.weight.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
            for &v in conv.bias.iter() {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Loads a checkpoint saved by [`UNet::save`]; the stored configuration
    /// must match `config` exactly.
    pub fn load(path: impl AsRef<Path>, config: UNetConfig) -> Result<UNet> {
        let path = path.as_ref();
        let display = path.display().to_string();
        if !path.exists() {
            return Err(Error::MissingArtifact(display));
        }
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"SMUN" {
            return Err(Error::format(&display, "bad magic"));
        }
        let mut u32buf = [0u8; 4];
        f.read_exact(&mut u32buf)?;
        if u32::from_le_bytes(u32buf) != 1 {
            return Err(Error::format(&display, "unsupported version"));
        }
        f.read_exact(&mut u32buf)?;
        let in_channels = u32::from_le_bytes(u32buf) as usize;
        f.read_exact(&mut u32buf)?;
        let initial_filters = u32::from_le_bytes(u32buf) as usize;
        if (in_channels, initial_filters) != (config.in_channels, config.initial_filters) {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint is {in_channels} channels / {initial_filters} filters, \
                 requested {} / {}",
                config.in_channels, config.initial_filters
            )));
        }
        let mut net = UNet::new(config, 0);
        for conv in &mut net.convs {
            let mut read_into = |values: &mut [f64]| -> Result<()> {
                let mut buf = vec![0u8; values.len() * 8];
                f.read_exact(&mut buf)?;
                for (v, chunk) in values.iter_mut().zip(buf.chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().unwrap());
                }
                Ok(())
            };
            read_into(conv.weight.as_slice_mut().expect("weights are contiguous"))?;
            read_into(conv.bias.as_slice_mut().expect("bias is contiguous"))?;
        }
        Ok(net)
    }
}
