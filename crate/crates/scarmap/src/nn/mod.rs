//! Minimal dense-layer toolkit for the segmentation network: 2D convolution
//! (im2col + GEMM), ReLU, 2x2 max pooling, 2x bilinear upsampling, sigmoid
//! and Adam. Everything is f64, single-sample `(C, H, W)` tensors, stride 1.
//!
//! Each op exposes an explicit `backward` taking the cached forward inputs,
//! so gradients stay exact and checkable by finite differences.

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Unfolds `x` into a `(c*k*k, oh*ow)` patch matrix for stride-1 convolution.
fn im2col(x: &Array3<f64>, k: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let mut dst = cols.row_mut(row);
                for oi in 0..oh {
                    let si = oi + ki;
                    if si < pad || si >= h + pad {
                        continue;
                    }
                    for oj in 0..ow {
                        let sj = oj + kj;
                        if sj < pad || sj >= w + pad {
                            continue;
                        }
                        dst[oi * ow + oj] = x[[ci, si - pad, sj - pad]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds patch-matrix gradients back onto the input.
fn col2im(cols: &Array2<f64>, shape: (usize, usize, usize), k: usize, pad: usize) -> Array3<f64> {
    let (c, h, w) = shape;
    let oh = h + 2 * pad + 1 - k;
    let ow = w + 2 * pad + 1 - k;
    let mut x = Array3::zeros(shape);
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = cols.row(row);
                for oi in 0..oh {
                    let si = oi + ki;
                    if si < pad || si >= h + pad {
                        continue;
                    }
                    for oj in 0..ow {
                        let sj = oj + kj;
                        if sj < pad || sj >= w + pad {
                            continue;
                        }
                        x[[ci, si - pad, sj - pad]] += src[oi * ow + oj];
                    }
                }
            }
        }
    }
    x
}

/// Stride-1 2D convolution with square kernel and symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(out_channels, in_channels, k, k)`.
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub padding: usize,
}

/// Gradient of one [`Conv2d`], same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvGrad {
    pub fn zeros_like(conv: &Conv2d) -> ConvGrad {
        ConvGrad {
            weight: Array4::zeros(conv.weight.dim()),
            bias: Array1::zeros(conv.bias.dim()),
        }
    }

    pub fn add_assign(&mut self, other: &ConvGrad) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight *= factor;
        self.bias *= factor;
    }
}

impl Conv2d {
    /// He-initialized convolution (weights N(0, 2/fan_in), zero bias).
    pub fn he_init(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Conv2d {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weight = Array4::from_shape_simple_fn(
            (out_channels, in_channels, kernel, kernel),
            || std * rng.sample::<f64, _>(StandardNormal),
        );
        Conv2d {
            weight,
            bias: Array1::zeros(out_channels),
            padding,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn weight_matrix(&self) -> Array2<f64> {
        let (o, c, k, _) = self.weight.dim();
        self.weight
            .view()
            .into_shape((o, c * k * k))
            .expect("conv weight is contiguous")
            .to_owned()
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (_, h, w) = x.dim();
        let k = self.kernel();
        let oh = h + 2 * self.padding + 1 - k;
        let ow = w + 2 * self.padding + 1 - k;
        let cols = im2col(x, k, self.padding);
        let mut y_mat = self.weight_matrix().dot(&cols);
        for (mut row, &b) in y_mat.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row += b;
        }
        y_mat
            .into_shape((self.weight.dim().0, oh, ow))
            .expect("gemm output is contiguous")
    }

    /// Returns `(grad_x, grad_params)` given the forward input and the
    /// gradient of the loss with respect to the output.
    pub fn backward(&self, x: &Array3<f64>, grad_y: &Array3<f64>) -> (Array3<f64>, ConvGrad) {
        let (o, c, k, _) = self.weight.dim();
        let (_, oh, ow) = grad_y.dim();
        let cols = im2col(x, k, self.padding);
        let gy_mat = grad_y
            .view()
            .into_shape((o, oh * ow))
            .expect("grad_y is contiguous")
            .to_owned();
        let gw_mat = gy_mat.dot(&cols.t());
        let grad = ConvGrad {
            weight: gw_mat
                .into_shape((o, c, k, k))
                .expect("gemm output is contiguous"),
            bias: gy_mat.sum_axis(Axis(1)),
        };
        let gcols = self.weight_matrix().t().dot(&gy_mat);
        let grad_x = col2im(&gcols, x.dim(), k, self.padding);
        (grad_x, grad)
    }
}

pub fn relu(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

/// ReLU gradient; `x` is the forward input (zero gradient at exactly 0).
pub fn relu_backward(x: &Array3<f64>, grad_y: &Array3<f64>) -> Array3<f64> {
    let mut g = grad_y.clone();
    ndarray::Zip::from(&mut g).and(x).for_each(|g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    g
}

/// 2x2 max pooling, stride 2. Requires even spatial dims. The second return
/// holds the flat window index (0..4) of each maximum for the backward pass;
/// ties resolve to the first position in row-major window order.
pub fn maxpool2x2(x: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array3::zeros((c, oh, ow));
    let mut arg = Array3::zeros((c, oh, ow));
    for ci in 0..c {
        for oi in 0..oh {
            for oj in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0u8;
                for (k, (di, dj)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                    let v = x[[ci, 2 * oi + di, 2 * oj + dj]];
                    if v > best {
                        best = v;
                        best_k = k as u8;
                    }
                }
                y[[ci, oi, oj]] = best;
                arg[[ci, oi, oj]] = best_k;
            }
        }
    }
    (y, arg)
}

pub fn maxpool2x2_backward(
    arg: &Array3<u8>,
    grad_y: &Array3<f64>,
    input_dim: (usize, usize, usize),
) -> Array3<f64> {
    let mut gx = Array3::zeros(input_dim);
    for ((ci, oi, oj), &g) in grad_y.indexed_iter() {
        let k = arg[[ci, oi, oj]] as usize;
        gx[[ci, 2 * oi + k / 2, 2 * oj + k % 2]] += g;
    }
    gx
}

/// 1D interpolation taps for doubling a length-`n` axis with half-pixel
/// centers: output `d` samples source `(d + 0.5) / 2 - 0.5`, edges clamped.
fn upsample_taps(n: usize) -> Vec<(usize, f64, usize, f64)> {
    (0..2 * n)
        .map(|d| {
            let src = (d as f64 + 0.5) / 2.0 - 0.5;
            let lo = src.floor();
            let frac = src - lo;
            let clamp = |i: f64| i.clamp(0.0, (n - 1) as f64) as usize;
            (clamp(lo), 1.0 - frac, clamp(lo + 1.0), frac)
        })
        .collect()
}

/// Bilinear 2x upsampling with half-pixel alignment, applied separably.
pub fn upsample_bilinear2x(x: &Array3<f64>) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut y = Array3::zeros((c, 2 * h, 2 * w));
    for ci in 0..c {
        for (oi, &(r0, wr0, r1, wr1)) in rows.iter().enumerate() {
            for (oj, &(c0, wc0, c1, wc1)) in cols.iter().enumerate() {
                y[[ci, oi, oj]] = wr0 * (wc0 * x[[ci, r0, c0]] + wc1 * x[[ci, r0, c1]])
                    + wr1 * (wc0 * x[[ci, r1, c0]] + wc1 * x[[ci, r1, c1]]);
            }
        }
    }
    y
}

/// Adjoint of [`upsample_bilinear2x`] (scatter-add with the same taps).
pub fn upsample_bilinear2x_backward(
    grad_y: &Array3<f64>,
    input_dim: (usize, usize, usize),
) -> Array3<f64> {
    let (c, h, w) = input_dim;
    let rows = upsample_taps(h);
    let cols = upsample_taps(w);
    let mut gx = Array3::zeros(input_dim);
    for ci in 0..c {
        for (oi, &(r0, wr0, r1, wr1)) in rows.iter().enumerate() {
            for (oj, &(c0, wc0, c1, wc1)) in cols.iter().enumerate() {
                let g = grad_y[[ci, oi, oj]];
                gx[[ci, r0, c0]] += wr0 * wc0 * g;
                gx[[ci, r0, c1]] += wr0 * wc1 * g;
                gx[[ci, r1, c0]] += wr1 * wc0 * g;
                gx[[ci, r1, c1]] += wr1 * wc1 * g;
            }
        }
    }
    gx
}

pub fn sigmoid(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Sigmoid gradient in terms of the forward output `y`.
pub fn sigmoid_backward(y: &Array3<f64>, grad_y: &Array3<f64>) -> Array3<f64> {
    let mut g = grad_y.clone();
    ndarray::Zip::from(&mut g).and(y).for_each(|g, &s| *g *= s * (1.0 - s));
    g
}

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<ConvGrad>,
    v: Vec<ConvGrad>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update to `convs` given matching gradients.
    pub fn step(&mut self, convs: &mut [&mut Conv2d], grads: &[ConvGrad]) {
        assert_eq!(convs.len(), grads.len(), "parameter/gradient count mismatch");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| ConvGrad {
                weight: Array4::zeros(g.weight.dim()),
                bias: Array1::zeros(g.bias.dim()),
            }).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..convs.len() {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            };
            ndarray::Zip::from(&mut convs[i].weight)
                .and(&grads[i].weight)
                .and(&mut self.m[i].weight)
                .and(&mut self.v[i].weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut convs[i].bias)
                .and(&grads[i].bias)
                .and(&mut self.m[i].bias)
                .and(&mut self.v[i].bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}
