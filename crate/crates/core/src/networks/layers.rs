//! Neural layers with explicit forward/backward passes.
//!
//! All parallel loops are gather-style (each output element is produced by
//! one task with a fixed inner summation order), so results are bitwise
//! reproducible regardless of thread count.

use rayon::prelude::*;

use crate::num::{real, Scalar};
use crate::rng::normal;
use crate::tensor::Tensor;

/// Forward-pass context.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Record activations needed by a later `backward` call.
    pub cache: bool,
    /// Training mode: spectral-norm power iteration advances.
    pub train: bool,
}

impl Forward {
    pub const INFER: Forward = Forward {
        cache: false,
        train: false,
    };
    /// Caches for backprop without advancing any persistent state; used by
    /// gradient verification and by generator updates through a frozen net.
    pub const GRAD: Forward = Forward {
        cache: true,
        train: false,
    };
    pub const TRAIN: Forward = Forward {
        cache: true,
        train: true,
    };
}

/// Weight init convention: zero-mean Gaussian, std 0.02.
pub const INIT_STD: f64 = 0.02;

#[inline]
fn flat4(c: usize, h: usize, w: usize, b: usize, ch: usize, y: usize, x: usize) -> usize {
    ((b * c + ch) * h + y) * w + x
}

/// 2D convolution with zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>, // [oc, ic, k, k]
    pub bias: Tensor<T>,   // [oc]
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    cache_input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: rand::Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let mut weight = Tensor::zeros(&[out_channels, in_channels, kernel, kernel]);
        let std = real::<T>(INIT_STD);
        for v in weight.data_mut() {
            *v = normal::<T, _>(rng) * std;
        }
        Conv2d {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(&[out_channels]),
            weight,
            bias: Tensor::zeros(&[out_channels]),
            stride,
            pad,
            cache_input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let out = self.forward_with_weight(x, &self.weight.clone());
        if fwd.cache {
            self.cache_input = Some(x.clone());
        }
        out
    }

    /// Convolution with an explicit weight tensor (used by spectral norm,
    /// which substitutes the normalized weight).
    pub fn forward_with_weight(&self, x: &Tensor<T>, weight: &Tensor<T>) -> Tensor<T> {
        let (n, ic, h, w) = shape4(x);
        assert_eq!(ic, self.in_channels(), "conv input channels");
        let k = self.kernel();
        let (oh, ow) = self.output_hw(h, w);
        let oc = self.out_channels();
        let (stride, pad) = (self.stride, self.pad);
        let mut out = Tensor::zeros(&[n, oc, oh, ow]);
        let xs = x.data();
        let ws = weight.data();
        let bias = self.bias.data();
        out.data_mut()
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(plane, out_plane)| {
                let b = plane / oc;
                let o = plane % oc;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[o];
                        for c in 0..ic {
                            for ky in 0..k {
                                let iy = oy * stride + ky;
                                if iy < pad || iy >= h + pad {
                                    continue;
                                }
                                let iy = iy - pad;
                                let wrow = &ws[((o * ic + c) * k + ky) * k..][..k];
                                let xrow = &xs[flat4(ic, h, w, b, c, iy, 0)..][..w];
                                for (kx, &wv) in wrow.iter().enumerate() {
                                    let ix = ox * stride + kx;
                                    if ix < pad || ix >= w + pad {
                                        continue;
                                    }
                                    acc += wv * xrow[ix - pad];
                                }
                            }
                        }
                        out_plane[oy * ow + ox] = acc;
                    }
                }
            });
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let weight = self.weight.clone();
        self.backward_with_weight(gy, &weight)
    }

    /// Backward with an explicit weight tensor. Accumulates `grad_weight`
    /// (with respect to that weight) and `grad_bias`, returns grad input.
    pub fn backward_with_weight(&mut self, gy: &Tensor<T>, weight: &Tensor<T>) -> Tensor<T> {
        let x = self
            .cache_input
            .take()
            .expect("conv backward without cached forward");
        let (n, ic, h, w) = shape4(&x);
        let (gn, oc, oh, ow) = shape4(gy);
        assert_eq!(gn, n, "conv backward batch");
        assert_eq!(oc, self.out_channels(), "conv backward channels");
        let k = self.kernel();
        let (stride, pad) = (self.stride, self.pad);
        let xs = x.data();
        let gys = gy.data();
        let ws = weight.data();

        // bias gradient, one task per output channel
        {
            let gb = self.grad_bias.data_mut();
            gb.par_iter_mut().enumerate().for_each(|(o, gbo)| {
                let mut acc = T::zero();
                for b in 0..n {
                    let plane = &gys[flat4(oc, oh, ow, b, o, 0, 0)..][..oh * ow];
                    for &g in plane {
                        acc += g;
                    }
                }
                *gbo += acc;
            });
        }

        // weight gradient, one task per output channel
        {
            let gw = self.grad_weight.data_mut();
            gw.par_chunks_mut(ic * k * k)
                .enumerate()
                .for_each(|(o, gwo)| {
                    for b in 0..n {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = gys[flat4(oc, oh, ow, b, o, oy, ox)];
                                if g == T::zero() {
                                    continue;
                                }
                                for c in 0..ic {
                                    for ky in 0..k {
                                        let iy = oy * stride + ky;
                                        if iy < pad || iy >= h + pad {
                                            continue;
                                        }
                                        let iy = iy - pad;
                                        for kx in 0..k {
                                            let ix = ox * stride + kx;
                                            if ix < pad || ix >= w + pad {
                                                continue;
                                            }
                                            gwo[(c * k + ky) * k + kx] +=
                                                g * xs[flat4(ic, h, w, b, c, iy, ix - pad)];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
        }

        // input gradient, one task per (batch, input-channel) plane
        let mut gx = Tensor::zeros(&[n, ic, h, w]);
        gx.data_mut()
            .par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(plane, gx_plane)| {
                let b = plane / ic;
                let c = plane % ic;
                for iy in 0..h {
                    for ix in 0..w {
                        let mut acc = T::zero();
                        for ky in 0..k {
                            let oy_num = iy + pad;
                            if oy_num < ky {
                                continue;
                            }
                            let oy_s = oy_num - ky;
                            if oy_s % stride != 0 {
                                continue;
                            }
                            let oy = oy_s / stride;
                            if oy >= oh {
                                continue;
                            }
                            for kx in 0..k {
                                let ox_num = ix + pad;
                                if ox_num < kx {
                                    continue;
                                }
                                let ox_s = ox_num - kx;
                                if ox_s % stride != 0 {
                                    continue;
                                }
                                let ox = ox_s / stride;
                                if ox >= ow {
                                    continue;
                                }
                                for o in 0..oc {
                                    acc += gys[flat4(oc, oh, ow, b, o, oy, ox)]
                                        * ws[((o * ic + c) * k + ky) * k + kx];
                                }
                            }
                        }
                        gx_plane[iy * w + ix] = acc;
                    }
                }
            });
        gx
    }

    /// Input gradient without touching parameter gradients; for frozen
    /// networks like the perceptual feature extractor.
    pub fn backward_input_only(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self
            .cache_input
            .take()
            .expect("conv backward without cached forward");
        let (n, ic, h, w) = shape4(&x);
        let (_, oc, oh, ow) = shape4(gy);
        let k = self.kernel();
        let (stride, pad) = (self.stride, self.pad);
        let gys = gy.data();
        let ws = self.weight.data();
        let mut gx = Tensor::zeros(&[n, ic, h, w]);
        gx.data_mut()
            .par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(plane, gx_plane)| {
                let b = plane / ic;
                let c = plane % ic;
                for iy in 0..h {
                    for ix in 0..w {
                        let mut acc = T::zero();
                        for ky in 0..k {
                            let oy_num = iy + pad;
                            if oy_num < ky || (oy_num - ky) % stride != 0 {
                                continue;
                            }
                            let oy = (oy_num - ky) / stride;
                            if oy >= oh {
                                continue;
                            }
                            for kx in 0..k {
                                let ox_num = ix + pad;
                                if ox_num < kx || (ox_num - kx) % stride != 0 {
                                    continue;
                                }
                                let ox = (ox_num - kx) / stride;
                                if ox >= ow {
                                    continue;
                                }
                                for o in 0..oc {
                                    acc += gys[flat4(oc, oh, ow, b, o, oy, ox)]
                                        * ws[((o * ic + c) * k + ky) * k + kx];
                                }
                            }
                        }
                        gx_plane[iy * w + ix] = acc;
                    }
                }
            });
        gx
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.weight"),
            &mut self.weight,
            &mut self.grad_weight,
        );
        f(format!("{prefix}.bias"), &mut self.bias, &mut self.grad_bias);
    }
}

/// 2x2 max pooling with stride 2.
#[derive(Debug, Clone)]
pub struct MaxPool2<T> {
    cache: Option<(Vec<usize>, Vec<usize>)>, // (input shape, argmax flat indices)
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> MaxPool2<T> {
    pub fn new() -> Self {
        MaxPool2 {
            cache: None,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let (n, c, h, w) = shape4(x);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let xs = x.data();
        for plane in 0..n * c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = plane * h * w + (2 * oy) * w + 2 * ox;
                    let mut best = xs[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = plane * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                        if xs[idx] > best {
                            best = xs[idx];
                            best_idx = idx;
                        }
                    }
                    let o = plane * oh * ow + oy * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        if fwd.cache {
            self.cache = Some((x.shape().to_vec(), argmax));
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let (shape, argmax) = self.cache.take().expect("maxpool backward without forward");
        let mut gx = Tensor::zeros(&shape);
        for (o, &src) in argmax.iter().enumerate() {
            gx.data_mut()[src] += gy.data()[o];
        }
        gx
    }
}

fn shape4<T: Scalar>(t: &Tensor<T>) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected 4-d tensor, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

/// Normalization over the spatial dimensions alone, per sample and channel.
#[derive(Debug, Clone)]
pub struct InstanceNorm2d<T> {
    pub gamma: Tensor<T>, // [c]
    pub beta: Tensor<T>,  // [c]
    pub grad_gamma: Tensor<T>,
    pub grad_beta: Tensor<T>,
    pub eps: T,
    cache: Option<(Tensor<T>, Vec<T>)>, // (x_hat, inv_std per (b, c))
}

impl<T: Scalar> InstanceNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        InstanceNorm2d {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            eps: real(1e-5),
            cache: None,
        }
    }

    /// Normalized activations without the affine rescale; exposed so the
    /// normalization contract (zero mean, unit variance) is testable.
    pub fn normalize(&self, x: &Tensor<T>) -> Tensor<T> {
        let (xhat, _) = self.normalize_with_stats(x);
        xhat
    }

    fn normalize_with_stats(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        let (n, c, h, w) = shape4(x);
        let plane = h * w;
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_stds = vec![T::zero(); n * c];
        let xs = x.data();
        let eps = self.eps;
        xhat.data_mut()
            .par_chunks_mut(plane)
            .zip(inv_stds.par_iter_mut())
            .enumerate()
            .for_each(|(i, (out_plane, inv_std_out))| {
                let src = &xs[i * plane..][..plane];
                let count = real::<T>(plane as f64);
                let mut mean = T::zero();
                for &v in src {
                    mean += v;
                }
                mean /= count;
                let mut var = T::zero();
                for &v in src {
                    let d = v - mean;
                    var += d * d;
                }
                var /= count;
                let inv_std = T::one() / (var + eps).sqrt();
                for (o, &v) in out_plane.iter_mut().zip(src.iter()) {
                    *o = (v - mean) * inv_std;
                }
                *inv_std_out = inv_std;
            });
        (xhat, inv_stds)
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let (n, c, h, w) = shape4(x);
        let plane = h * w;
        let (xhat, inv_stds) = self.normalize_with_stats(x);
        let mut out = Tensor::zeros(x.shape());
        {
            let os = out.data_mut();
            let xh = xhat.data();
            for b in 0..n {
                for ch in 0..c {
                    let g = self.gamma.data()[ch];
                    let be = self.beta.data()[ch];
                    let base = (b * c + ch) * plane;
                    for i in 0..plane {
                        os[base + i] = g * xh[base + i] + be;
                    }
                }
            }
        }
        if fwd.cache {
            self.cache = Some((xhat, inv_stds));
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let (xhat, inv_stds) = self
            .cache
            .take()
            .expect("instance norm backward without cached forward");
        let (n, c, h, w) = shape4(gy);
        let plane = h * w;
        let count = real::<T>(plane as f64);
        let gys = gy.data();
        let xh = xhat.data();

        for ch in 0..c {
            let mut gg = T::zero();
            let mut gb = T::zero();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    gg += gys[base + i] * xh[base + i];
                    gb += gys[base + i];
                }
            }
            self.grad_gamma.data_mut()[ch] += gg;
            self.grad_beta.data_mut()[ch] += gb;
        }

        let gamma = self.gamma.clone();
        let mut gx = Tensor::zeros(gy.shape());
        gx.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, gx_plane)| {
                let ch = idx % c;
                let g = gamma.data()[ch];
                let inv_std = inv_stds[idx];
                let base = idx * plane;
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for i in 0..plane {
                    let gi = gys[base + i] * g;
                    sum_g += gi;
                    sum_gx += gi * xh[base + i];
                }
                for i in 0..plane {
                    let gi = gys[base + i] * g;
                    gx_plane[i] = inv_std * (gi - (sum_g + xh[base + i] * sum_gx) / count);
                }
            });
        gx
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.gamma"),
            &mut self.gamma,
            &mut self.grad_gamma,
        );
        f(format!("{prefix}.beta"), &mut self.beta, &mut self.grad_beta);
    }
}

#[derive(Debug, Clone)]
pub struct Relu<T> {
    cache: Option<Tensor<T>>, // input
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
        if fwd.cache {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self.cache.take().expect("relu backward without forward");
        let mut gx = gy.clone();
        for (g, &v) in gx.data_mut().iter_mut().zip(x.data().iter()) {
            if v <= T::zero() {
                *g = T::zero();
            }
        }
        gx
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu<T> {
    pub slope: T,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: real(slope),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let s = self.slope;
        let out = x.map(|v| if v > T::zero() { v } else { s * v });
        if fwd.cache {
            self.cache = Some(x.clone());
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let x = self
            .cache
            .take()
            .expect("leaky relu backward without forward");
        let s = self.slope;
        let mut gx = gy.clone();
        for (g, &v) in gx.data_mut().iter_mut().zip(x.data().iter()) {
            if v <= T::zero() {
                *g *= s;
            }
        }
        gx
    }
}

#[derive(Debug, Clone)]
pub struct Tanh<T> {
    cache: Option<Tensor<T>>, // output
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Tanh { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let out = x.map(|v| v.tanh());
        if fwd.cache {
            self.cache = Some(out.clone());
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let y = self.cache.take().expect("tanh backward without forward");
        let mut gx = gy.clone();
        for (g, &o) in gx.data_mut().iter_mut().zip(y.data().iter()) {
            *g *= T::one() - o * o;
        }
        gx
    }
}

#[derive(Debug, Clone)]
pub struct Sigmoid<T> {
    cache: Option<Tensor<T>>, // output
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let one = T::one();
        let out = x.map(|v| one / (one + (-v).exp()));
        if fwd.cache {
            self.cache = Some(out.clone());
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let y = self.cache.take().expect("sigmoid backward without forward");
        let mut gx = gy.clone();
        for (g, &o) in gx.data_mut().iter_mut().zip(y.data().iter()) {
            *g *= o * (T::one() - o);
        }
        gx
    }
}

/// Nearest-neighbor 2x upsampling (checkerboard-free when followed by a
/// convolution).
#[derive(Debug, Clone)]
pub struct UpsampleNearest2x;

impl UpsampleNearest2x {
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, c, h, w) = shape4(x);
        let mut out = Tensor::zeros(&[n, c, h * 2, w * 2]);
        let xs = x.data();
        out.data_mut()
            .par_chunks_mut(4 * h * w)
            .enumerate()
            .for_each(|(plane, op)| {
                let src = &xs[plane * h * w..][..h * w];
                let ow = w * 2;
                for y in 0..h {
                    for x_ in 0..w {
                        let v = src[y * w + x_];
                        op[(2 * y) * ow + 2 * x_] = v;
                        op[(2 * y) * ow + 2 * x_ + 1] = v;
                        op[(2 * y + 1) * ow + 2 * x_] = v;
                        op[(2 * y + 1) * ow + 2 * x_ + 1] = v;
                    }
                }
            });
        out
    }

    pub fn backward<T: Scalar>(&self, gy: &Tensor<T>) -> Tensor<T> {
        let (n, c, h2, w2) = shape4(gy);
        let (h, w) = (h2 / 2, w2 / 2);
        let mut gx = Tensor::zeros(&[n, c, h, w]);
        let gys = gy.data();
        gx.data_mut()
            .par_chunks_mut(h * w)
            .enumerate()
            .for_each(|(plane, gp)| {
                let src = &gys[plane * h2 * w2..][..h2 * w2];
                for y in 0..h {
                    for x_ in 0..w {
                        gp[y * w + x_] = src[(2 * y) * w2 + 2 * x_]
                            + src[(2 * y) * w2 + 2 * x_ + 1]
                            + src[(2 * y + 1) * w2 + 2 * x_]
                            + src[(2 * y + 1) * w2 + 2 * x_ + 1];
                    }
                }
            });
        gx
    }
}

/// Spectral normalization wrapper around a convolution.
///
/// Keeps persistent left/right singular-vector estimates, advances them one
/// power-iteration step per training forward, and runs the convolution with
/// `weight / sigma`. Gradients flow through the normalization.
#[derive(Debug, Clone)]
pub struct SpectralConv2d<T> {
    pub conv: Conv2d<T>,
    pub grad_weight: Tensor<T>, // gradient with respect to the raw weight
    pub u: Vec<T>,
    pub v: Vec<T>,
    norm_weight: Option<Tensor<T>>, // cached W / sigma for the pending backward
    sigma: T,
}

impl<T: Scalar> SpectralConv2d<T> {
    pub fn new<R: rand::Rng>(conv: Conv2d<T>, rng: &mut R) -> Self {
        let oc = conv.out_channels();
        let m = conv.weight.len() / oc;
        let mut u: Vec<T> = (0..oc).map(|_| normal::<T, _>(rng)).collect();
        normalize_vec(&mut u);
        let mut sn = SpectralConv2d {
            grad_weight: Tensor::zeros(conv.weight.shape()),
            conv,
            u,
            v: vec![T::zero(); m],
            norm_weight: None,
            sigma: T::one(),
        };
        // converge the estimate at construction so the normalized weight
        // honors the Lipschitz bound from the first forward on; clustered
        // singular values converge slowly, hence the adaptive stop
        let mut prev = T::zero();
        let mut stable = 0;
        for _ in 0..20_000 {
            sn.power_iterate_once();
            let sigma = sn.sigma_estimate();
            if (sigma - prev).abs() <= real::<T>(1e-8) * sigma.max(T::one()) {
                stable += 1;
                if stable >= 2 {
                    break;
                }
            } else {
                stable = 0;
            }
            prev = sigma;
        }
        sn
    }

    /// One power-iteration step on the raw weight matrix [oc, ic*k*k].
    pub fn power_iterate_once(&mut self) {
        let oc = self.conv.out_channels();
        let m = self.conv.weight.len() / oc;
        let w = self.conv.weight.data();
        // v = normalize(W^T u)
        for j in 0..m {
            let mut acc = T::zero();
            for i in 0..oc {
                acc += w[i * m + j] * self.u[i];
            }
            self.v[j] = acc;
        }
        normalize_vec(&mut self.v);
        // u = normalize(W v)
        for i in 0..oc {
            let mut acc = T::zero();
            let row = &w[i * m..][..m];
            for (j, &vj) in self.v.iter().enumerate() {
                acc += row[j] * vj;
            }
            self.u[i] = acc;
        }
        normalize_vec(&mut self.u);
    }

    /// Current spectral-norm estimate `u^T W v`.
    pub fn sigma_estimate(&self) -> T {
        let oc = self.conv.out_channels();
        let m = self.conv.weight.len() / oc;
        let w = self.conv.weight.data();
        let mut sigma = T::zero();
        for i in 0..oc {
            let mut acc = T::zero();
            let row = &w[i * m..][..m];
            for (j, &vj) in self.v.iter().enumerate() {
                acc += row[j] * vj;
            }
            sigma += self.u[i] * acc;
        }
        sigma
    }

    /// The weight actually convolved with: `W / sigma`.
    pub fn normalized_weight(&self) -> Tensor<T> {
        let sigma = self.sigma_estimate();
        let mut w = self.conv.weight.clone();
        let inv = T::one() / sigma;
        w.scale(inv);
        w
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        if fwd.train {
            self.power_iterate_once();
        }
        let sigma = self.sigma_estimate();
        let mut w_bar = self.conv.weight.clone();
        w_bar.scale(T::one() / sigma);
        let out = self.conv.forward_with_weight(x, &w_bar);
        if fwd.cache {
            self.conv.cache_input = Some(x.clone());
            self.norm_weight = Some(w_bar);
            self.sigma = sigma;
        }
        out
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let w_bar = self
            .norm_weight
            .take()
            .expect("spectral conv backward without forward");
        // route conv grads into a scratch accumulator first
        let mut scratch = Tensor::zeros(self.conv.grad_weight.shape());
        std::mem::swap(&mut self.conv.grad_weight, &mut scratch);
        let gx = self.conv.backward_with_weight(gy, &w_bar);
        std::mem::swap(&mut self.conv.grad_weight, &mut scratch);
        let g_bar = scratch; // dL/d(w_bar)

        // dL/dW = (G - <G, w_bar> u v^T) / sigma
        let mut inner = T::zero();
        for (g, w) in g_bar.data().iter().zip(w_bar.data().iter()) {
            inner += *g * *w;
        }
        let oc = self.conv.out_channels();
        let m = self.conv.weight.len() / oc;
        let inv_sigma = T::one() / self.sigma;
        let gw = self.grad_weight.data_mut();
        for i in 0..oc {
            for j in 0..m {
                let uv = self.u[i] * self.v[j];
                gw[i * m + j] += (g_bar.data()[i * m + j] - inner * uv) * inv_sigma;
            }
        }
        gx
    }

    pub fn visit_params(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>),
    ) {
        f(
            format!("{prefix}.weight"),
            &mut self.conv.weight,
            &mut self.grad_weight,
        );
        f(
            format!("{prefix}.bias"),
            &mut self.conv.bias,
            &mut self.conv.grad_bias,
        );
    }

    /// Persistent non-parameter state (the singular-vector estimates).
    pub fn visit_state(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut [T])) {
        f(format!("{prefix}.sn_u"), &mut self.u);
        f(format!("{prefix}.sn_v"), &mut self.v);
    }
}

fn normalize_vec<T: Scalar>(v: &mut [T]) {
    let mut norm = T::zero();
    for &x in v.iter() {
        norm += x * x;
    }
    let norm = norm.sqrt() + real::<T>(1e-12);
    for x in v.iter_mut() {
        *x /= norm;
    }
}

/// True spectral norm of a weight tensor via fresh power iterations,
/// independent of the persistent estimates. Test instrumentation.
pub fn spectral_norm_of<T: Scalar>(weight: &Tensor<T>, iterations: usize) -> T {
    let oc = weight.shape()[0];
    let m = weight.len() / oc;
    let w = weight.data();
    let mut u = vec![T::one(); oc];
    normalize_vec(&mut u);
    let mut v = vec![T::zero(); m];
    for _ in 0..iterations {
        for j in 0..m {
            let mut acc = T::zero();
            for i in 0..oc {
                acc += w[i * m + j] * u[i];
            }
            v[j] = acc;
        }
        normalize_vec(&mut v);
        for (i, ui) in u.iter_mut().enumerate() {
            let mut acc = T::zero();
            let row = &w[i * m..][..m];
            for (j, &vj) in v.iter().enumerate() {
                acc += row[j] * vj;
            }
            *ui = acc;
        }
        normalize_vec(&mut u);
    }
    let mut sigma = T::zero();
    for i in 0..oc {
        let mut acc = T::zero();
        let row = &w[i * m..][..m];
        for (j, &vj) in v.iter().enumerate() {
            acc += row[j] * vj;
        }
        sigma += u[i] * acc;
    }
    sigma
}
