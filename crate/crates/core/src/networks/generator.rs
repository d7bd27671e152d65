//! Colorization generators.
//!
//! The residual generator keeps spatial resolution high: a 7x7 stem, two
//! stride-2 downsampling stages, 8 residual blocks, then two
//! nearest-neighbor-plus-convolution upsampling stages and a tanh-bounded
//! 7x7 output head. Instance normalization throughout.
//!
//! The baseline is an encoder-decoder with skip connections that downsamples
//! all the way to a 2x2 bottleneck, conditioned on the line art alone.

use rand::Rng;

use crate::num::Scalar;
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

use super::layers::{Conv2d, Forward, InstanceNorm2d, LeakyRelu, Relu, Tanh, UpsampleNearest2x};
use super::{GeneratorSpec, ParamVisitor};

/// Convolution + instance norm + ReLU.
#[derive(Debug, Clone)]
struct ConvBlock<T> {
    conv: Conv2d<T>,
    norm: InstanceNorm2d<T>,
    relu: Relu<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn new<R: Rng>(ic: usize, oc: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        ConvBlock {
            conv: Conv2d::new(ic, oc, k, stride, pad, rng),
            norm: InstanceNorm2d::new(oc),
            relu: Relu::new(),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let x = self.conv.forward(x, fwd);
        let x = self.norm.forward(&x, fwd);
        self.relu.forward(&x, fwd)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let gy = self.relu.backward(gy);
        let gy = self.norm.backward(&gy);
        self.conv.backward(&gy)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<T>) {
        self.conv.visit_params(&format!("{prefix}.conv"), f);
        self.norm.visit_params(&format!("{prefix}.norm"), f);
    }
}

/// Two 3x3 convolutions with instance norm, additive skip.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    conv1: Conv2d<T>,
    norm1: InstanceNorm2d<T>,
    relu: Relu<T>,
    conv2: Conv2d<T>,
    norm2: InstanceNorm2d<T>,
}

impl<T: Scalar> ResidualBlock<T> {
    fn new<R: Rng>(channels: usize, rng: &mut R) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(channels, channels, 3, 1, 1, rng),
            norm1: InstanceNorm2d::new(channels),
            relu: Relu::new(),
            conv2: Conv2d::new(channels, channels, 3, 1, 1, rng),
            norm2: InstanceNorm2d::new(channels),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let mut y = self.conv1.forward(x, fwd);
        y = self.norm1.forward(&y, fwd);
        y = self.relu.forward(&y, fwd);
        y = self.conv2.forward(&y, fwd);
        y = self.norm2.forward(&y, fwd);
        y.add_assign(x);
        y
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let g = self.norm2.backward(gy);
        let g = self.conv2.backward(&g);
        let g = self.relu.backward(&g);
        let g = self.norm1.backward(&g);
        let mut gx = self.conv1.backward(&g);
        gx.add_assign(gy); // skip path
        gx
    }

    /// Test hook: zero the convolution weights and biases, making the block
    /// an identity map.
    pub fn zero_weights(&mut self) {
        self.conv1.weight.fill(T::zero());
        self.conv1.bias.fill(T::zero());
        self.conv2.weight.fill(T::zero());
        self.conv2.bias.fill(T::zero());
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<T>) {
        self.conv1.visit_params(&format!("{prefix}.conv1"), f);
        self.norm1.visit_params(&format!("{prefix}.norm1"), f);
        self.conv2.visit_params(&format!("{prefix}.conv2"), f);
        self.norm2.visit_params(&format!("{prefix}.norm2"), f);
    }
}

#[derive(Debug, Clone)]
pub struct ResidualGenerator<T> {
    pub spec: GeneratorSpec,
    head: ConvBlock<T>,
    down: Vec<ConvBlock<T>>,
    pub blocks: Vec<ResidualBlock<T>>,
    up: Vec<ConvBlock<T>>,
    upsample: UpsampleNearest2x,
    tail: Conv2d<T>,
    tanh: Tanh<T>,
}

impl<T: Scalar> ResidualGenerator<T> {
    pub fn new(spec: &GeneratorSpec, seed: u64) -> Self {
        let mut rng = stream(seed, &[tag::GENERATOR_INIT]);
        let bw = spec.base_width;
        let head = ConvBlock::new(spec.input_channels, bw, 7, 1, 3, &mut rng);
        let mut down = Vec::new();
        let mut width = bw;
        for _ in 0..spec.n_down {
            down.push(ConvBlock::new(width, width * 2, 3, 2, 1, &mut rng));
            width *= 2;
        }
        let blocks = (0..spec.n_residual_blocks)
            .map(|_| ResidualBlock::new(width, &mut rng))
            .collect();
        let mut up = Vec::new();
        for _ in 0..spec.n_down {
            up.push(ConvBlock::new(width, width / 2, 3, 1, 1, &mut rng));
            width /= 2;
        }
        let tail = Conv2d::new(width, spec.output_channels, 7, 1, 3, &mut rng);
        ResidualGenerator {
            spec: spec.clone(),
            head,
            down,
            blocks,
            up,
            upsample: UpsampleNearest2x,
            tail,
            tanh: Tanh::new(),
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let mut y = self.head.forward(x, fwd);
        for stage in &mut self.down {
            y = stage.forward(&y, fwd);
        }
        for block in &mut self.blocks {
            y = block.forward(&y, fwd);
        }
        for stage in &mut self.up {
            y = self.upsample.forward(&y);
            y = stage.forward(&y, fwd);
        }
        let y = self.tail.forward(&y, fwd);
        self.tanh.forward(&y, fwd)
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let mut g = self.tanh.backward(gy);
        g = self.tail.backward(&g);
        for stage in self.up.iter_mut().rev() {
            g = stage.backward(&g);
            g = self.upsample.backward(&g);
        }
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
        for stage in self.down.iter_mut().rev() {
            g = stage.backward(&g);
        }
        self.head.backward(&g)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<T>) {
        self.head.visit_params("gen.head", f);
        for (i, stage) in self.down.iter_mut().enumerate() {
            stage.visit_params(&format!("gen.down.{i}"), f);
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit_params(&format!("gen.blocks.{i}"), f);
        }
        for (i, stage) in self.up.iter_mut().enumerate() {
            stage.visit_params(&format!("gen.up.{i}"), f);
        }
        self.tail.visit_params("gen.tail", f);
    }
}

/// One U-Net encoder stage: stride-2 4x4 convolution, instance norm (except
/// the stem), leaky ReLU.
#[derive(Debug, Clone)]
struct UnetEncoderStage<T> {
    conv: Conv2d<T>,
    norm: Option<InstanceNorm2d<T>>,
    act: LeakyRelu<T>,
}

impl<T: Scalar> UnetEncoderStage<T> {
    fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let mut y = self.conv.forward(x, fwd);
        if let Some(norm) = &mut self.norm {
            y = norm.forward(&y, fwd);
        }
        self.act.forward(&y, fwd)
    }

    fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let mut g = self.act.backward(gy);
        if let Some(norm) = &mut self.norm {
            g = norm.backward(&g);
        }
        self.conv.backward(&g)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<T>) {
        self.conv.visit_params(&format!("{prefix}.conv"), f);
        if let Some(norm) = &mut self.norm {
            norm.visit_params(&format!("{prefix}.norm"), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnetGenerator<T> {
    pub spec: GeneratorSpec,
    encoder: Vec<UnetEncoderStage<T>>,
    decoder: Vec<ConvBlock<T>>,
    upsample: UpsampleNearest2x,
    tail: Conv2d<T>,
    tanh: Tanh<T>,
    skip_cache: Vec<Tensor<T>>,
}

impl<T: Scalar> UnetGenerator<T> {
    pub fn new(spec: &GeneratorSpec, seed: u64) -> Self {
        let mut rng = stream(seed, &[tag::GENERATOR_INIT]);
        let depth = spec.unet_depth();
        let width = |i: usize| -> usize { (spec.base_width << i).min(512) };

        let mut encoder = Vec::new();
        let mut in_ch = spec.input_channels;
        for i in 0..depth {
            encoder.push(UnetEncoderStage {
                conv: Conv2d::new(in_ch, width(i), 4, 2, 1, &mut rng),
                norm: if i == 0 {
                    None
                } else {
                    Some(InstanceNorm2d::new(width(i)))
                },
                act: LeakyRelu::new(0.2),
            });
            in_ch = width(i);
        }

        let mut decoder = Vec::new();
        for j in 0..depth {
            let input = if j == 0 {
                width(depth - 1)
            } else {
                // previous decoder output concatenated with the mirror skip
                2 * width(depth - 1 - j)
            };
            let output = if j == depth - 1 {
                spec.base_width
            } else {
                width(depth - 2 - j)
            };
            decoder.push(ConvBlock::new(input, output, 3, 1, 1, &mut rng));
        }
        let tail = Conv2d::new(spec.base_width, spec.output_channels, 7, 1, 3, &mut rng);
        UnetGenerator {
            spec: spec.clone(),
            encoder,
            decoder,
            upsample: UpsampleNearest2x,
            tail,
            tanh: Tanh::new(),
            skip_cache: Vec::new(),
        }
    }

    /// Spatial size of the bottleneck at a given input size.
    pub fn bottleneck_size(&self, input: usize) -> usize {
        input >> self.spec.unet_depth()
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let depth = self.encoder.len();
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(depth);
        let mut y = x.clone();
        for stage in &mut self.encoder {
            y = stage.forward(&y, fwd);
            skips.push(y.clone());
        }
        for (j, stage) in self.decoder.iter_mut().enumerate() {
            let input = if j == 0 {
                skips[depth - 1].clone()
            } else {
                concat_channels(&y, &skips[depth - 1 - j])
            };
            y = self.upsample.forward(&input);
            y = stage.forward(&y, fwd);
        }
        if fwd.cache {
            self.skip_cache = skips;
        }
        let y = self.tail.forward(&y, fwd);
        self.tanh.forward(&y, fwd)
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let depth = self.encoder.len();
        let mut g = self.tanh.backward(gy);
        g = self.tail.backward(&g);
        // per-encoder-stage gradient accumulators for the skip connections
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        for j in (0..self.decoder.len()).rev() {
            g = self.decoder[j].backward(&g);
            g = self.upsample.backward(&g);
            if j == 0 {
                add_grad(&mut skip_grads[depth - 1], &g);
                g = Tensor::zeros(&[0]);
            } else {
                let skip_channels = self.skip_cache[depth - 1 - j].shape()[1];
                let (g_main, g_skip) = split_channels(&g, skip_channels);
                add_grad(&mut skip_grads[depth - 1 - j], &g_skip);
                g = g_main;
            }
        }
        self.skip_cache.clear();
        // walk the encoder backwards, merging skip gradients
        let mut g_out: Option<Tensor<T>> = None;
        for i in (0..depth).rev() {
            let mut grad = skip_grads[i].take().unwrap_or_else(|| {
                panic!("encoder stage {i} received no gradient")
            });
            if let Some(prev) = g_out.take() {
                grad.add_assign(&prev);
            }
            g_out = Some(self.encoder[i].backward(&grad));
        }
        g_out.expect("unet backward produced no input gradient")
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<T>) {
        for (i, stage) in self.encoder.iter_mut().enumerate() {
            stage.visit_params(&format!("gen.enc.{i}"), f);
        }
        for (i, stage) in self.decoder.iter_mut().enumerate() {
            stage.visit_params(&format!("gen.dec.{i}"), f);
        }
        self.tail.visit_params("gen.tail", f);
    }
}

fn add_grad<T: Scalar>(slot: &mut Option<Tensor<T>>, g: &Tensor<T>) {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

/// Concatenate along the channel axis: [n, c1 + c2, h, w].
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, c1, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
    let c2 = b.shape()[1];
    assert_eq!(b.shape()[0], n, "concat batch");
    assert_eq!(&b.shape()[2..], &[h, w], "concat spatial");
    let mut out = Tensor::zeros(&[n, c1 + c2, h, w]);
    let plane = h * w;
    for bi in 0..n {
        let dst = &mut out.data_mut()[bi * (c1 + c2) * plane..][..(c1 + c2) * plane];
        dst[..c1 * plane].copy_from_slice(&a.data()[bi * c1 * plane..][..c1 * plane]);
        dst[c1 * plane..].copy_from_slice(&b.data()[bi * c2 * plane..][..c2 * plane]);
    }
    out
}

/// Split a channel concatenation back into (first, last `tail_channels`).
pub fn split_channels<T: Scalar>(x: &Tensor<T>, tail_channels: usize) -> (Tensor<T>, Tensor<T>) {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let c1 = c - tail_channels;
    let plane = h * w;
    let mut a = Tensor::zeros(&[n, c1, h, w]);
    let mut b = Tensor::zeros(&[n, tail_channels, h, w]);
    for bi in 0..n {
        let src = &x.data()[bi * c * plane..][..c * plane];
        a.data_mut()[bi * c1 * plane..][..c1 * plane].copy_from_slice(&src[..c1 * plane]);
        b.data_mut()[bi * tail_channels * plane..][..tail_channels * plane]
            .copy_from_slice(&src[c1 * plane..]);
    }
    (a, b)
}

/// Either generator behind one interface.
#[derive(Debug, Clone)]
pub enum Generator<T> {
    Residual(ResidualGenerator<T>),
    Unet(UnetGenerator<T>),
}

impl<T: Scalar> Generator<T> {
    pub fn spec(&self) -> &GeneratorSpec {
        match self {
            Generator::Residual(g) => &g.spec,
            Generator::Unet(g) => &g.spec,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        match self {
            Generator::Residual(g) => g.forward(x, fwd),
            Generator::Unet(g) => g.forward(x, fwd),
        }
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        match self {
            Generator::Residual(g) => g.backward(gy),
            Generator::Unet(g) => g.backward(gy),
        }
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<T>) {
        match self {
            Generator::Residual(g) => g.visit_params(f),
            Generator::Unet(g) => g.visit_params(f),
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, grad| grad.fill(T::zero()));
    }

    /// Clone of every named parameter, for determinism checks.
    pub fn snapshot(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, value, _| out.push((name, value.clone())));
        out
    }
}
