//! Frozen convolutional feature extractor with named activation taps, used
//! by the content and style losses.
//!
//! Production runs a VGG-19 layout with taps at relu1_1 through relu5_1,
//! filled from a pretrained weight archive. The test suites run a tiny
//! seeded extractor with the same interface so everything verifies offline.

use std::path::Path;

use crate::error::{Error, Result};
use crate::networks::checkpoint::Archive;
use crate::networks::layers::{Conv2d, Forward, MaxPool2, Relu};
use crate::num::{real, Scalar};
use crate::rng::{normal, stream, tag};
use crate::tensor::Tensor;

/// Per-channel normalization of storage-space RGB before the first layer.
/// The pinned constants are the extractor pretraining corpus statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preprocess {
    /// `(storage_value - mean) / std` per channel.
    Normalize {
        mean: [f64; 3],
        std: [f64; 3],
    },
    /// Feed model-space values through untouched (test extractors).
    Identity,
}

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone)]
pub enum ExtractorLayer<T> {
    Conv(Conv2d<T>),
    Relu(Relu<T>),
    Pool(MaxPool2<T>),
    Passthrough,
}

/// Convolutional stack with activation taps. Weights are frozen: no
/// parameter-visiting API exists, so no optimizer can ever update them.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<T> {
    layers: Vec<ExtractorLayer<T>>,
    /// (name, layer index); the tap reads the output of that layer.
    taps: Vec<(String, usize)>,
    pub preprocess: Preprocess,
    pub frozen: bool,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn tap_names(&self) -> Vec<&str> {
        self.taps.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn tap_count(&self) -> usize {
        self.taps.len()
    }

    fn last_tap_layer(&self) -> usize {
        self.taps.iter().map(|(_, i)| *i).max().expect("taps")
    }

    fn apply_preprocess(&self, x: &Tensor<T>) -> Tensor<T> {
        match self.preprocess {
            Preprocess::Identity => x.clone(),
            Preprocess::Normalize { mean, std } => {
                let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
                assert_eq!(c, 3, "normalization expects rgb input");
                let half = real::<T>(0.5);
                let mut out = x.clone();
                let plane = h * w;
                for b in 0..n {
                    for ch in 0..3 {
                        let m = real::<T>(mean[ch]);
                        let s = real::<T>(std[ch]);
                        let base = (b * c + ch) * plane;
                        for v in &mut out.data_mut()[base..base + plane] {
                            // model space -> storage space -> normalized
                            *v = ((*v + T::one()) * half - m) / s;
                        }
                    }
                }
                out
            }
        }
    }

    fn preprocess_grad(&self, g: &Tensor<T>) -> Tensor<T> {
        match self.preprocess {
            Preprocess::Identity => g.clone(),
            Preprocess::Normalize { std, .. } => {
                let (n, c, h, w) = (g.shape()[0], g.shape()[1], g.shape()[2], g.shape()[3]);
                let half = real::<T>(0.5);
                let mut out = g.clone();
                let plane = h * w;
                for b in 0..n {
                    for ch in 0..3 {
                        let s = real::<T>(std[ch]);
                        let base = (b * c + ch) * plane;
                        for v in &mut out.data_mut()[base..base + plane] {
                            *v = *v * half / s;
                        }
                    }
                }
                out
            }
        }
    }

    /// Run the stack on a model-space batch [n, c, h, w]; returns one
    /// activation tensor per tap, in tap order.
    pub fn forward_taps(&mut self, x: &Tensor<T>, fwd: Forward) -> Vec<Tensor<T>> {
        let last = self.last_tap_layer();
        let mut current = self.apply_preprocess(x);
        let mut outputs: Vec<Option<Tensor<T>>> = vec![None; self.taps.len()];
        for (i, layer) in self.layers.iter_mut().enumerate().take(last + 1) {
            current = match layer {
                ExtractorLayer::Conv(conv) => conv.forward(&current, fwd),
                ExtractorLayer::Relu(relu) => relu.forward(&current, fwd),
                ExtractorLayer::Pool(pool) => pool.forward(&current, fwd),
                ExtractorLayer::Passthrough => current.clone(),
            };
            for (t, (_, tap_idx)) in self.taps.iter().enumerate() {
                if *tap_idx == i {
                    outputs[t] = Some(current.clone());
                }
            }
        }
        outputs.into_iter().map(|o| o.expect("tap filled")).collect()
    }

    /// Backpropagate per-tap gradients to the model-space input. Must follow
    /// a cached `forward_taps`. Parameter gradients are never produced.
    pub fn backward_taps(&mut self, tap_grads: Vec<Tensor<T>>) -> Tensor<T> {
        assert_eq!(tap_grads.len(), self.taps.len());
        let last = self.last_tap_layer();
        let mut grad: Option<Tensor<T>> = None;
        for i in (0..=last).rev() {
            for (t, (_, tap_idx)) in self.taps.iter().enumerate() {
                if *tap_idx == i {
                    match &mut grad {
                        Some(g) => g.add_assign(&tap_grads[t]),
                        None => grad = Some(tap_grads[t].clone()),
                    }
                }
            }
            let g = grad.take().expect("gradient reaches every tap layer");
            grad = Some(match &mut self.layers[i] {
                ExtractorLayer::Conv(conv) => conv.backward_input_only(&g),
                ExtractorLayer::Relu(relu) => relu.backward(&g),
                ExtractorLayer::Pool(pool) => pool.backward(&g),
                ExtractorLayer::Passthrough => g,
            });
        }
        self.preprocess_grad(&grad.expect("input gradient"))
    }
}

/// The VGG-19 feature layout up to relu5_1, with the five standard taps.
/// Weights come from `archive`, keyed `vgg.<layer>.weight` / `.bias`.
pub fn vgg19_extractor<T: Scalar>(archive_path: &Path) -> Result<FeatureExtractor<T>> {
    if !archive_path.exists() {
        return Err(Error::ExtractorUnavailable(format!(
            "no extractor checkpoint at {}",
            archive_path.display()
        )));
    }
    let archive = Archive::<T>::read(archive_path)?;
    // (name, in, out, pool before)
    let plan: [(&str, usize, usize, bool); 12] = [
        ("conv1_1", 3, 64, false),
        ("conv1_2", 64, 64, false),
        ("conv2_1", 64, 128, true),
        ("conv2_2", 128, 128, false),
        ("conv3_1", 128, 256, true),
        ("conv3_2", 256, 256, false),
        ("conv3_3", 256, 256, false),
        ("conv3_4", 256, 256, false),
        ("conv4_1", 256, 512, true),
        ("conv4_2", 512, 512, false),
        ("conv4_3", 512, 512, false),
        ("conv4_4", 512, 512, false),
    ];
    let tap_after = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"];
    let mut layers: Vec<ExtractorLayer<T>> = Vec::new();
    let mut taps = Vec::new();
    let mut rng = stream(0, &[tag::EXTRACTOR_INIT]);
    let mut add_conv = |name: &str,
                        ic: usize,
                        oc: usize,
                        layers: &mut Vec<ExtractorLayer<T>>,
                        taps: &mut Vec<(String, usize)>|
     -> Result<()> {
        let mut conv = Conv2d::<T>::new(ic, oc, 3, 1, 1, &mut rng);
        archive.take_into(&format!("vgg.{name}.weight"), &mut conv.weight)?;
        archive.take_into(&format!("vgg.{name}.bias"), &mut conv.bias)?;
        layers.push(ExtractorLayer::Conv(conv));
        layers.push(ExtractorLayer::Relu(Relu::new()));
        if tap_after.contains(&name) {
            let tap_name = format!("relu{}", &name[4..]);
            taps.push((tap_name, layers.len() - 1));
        }
        Ok(())
    };
    for (name, ic, oc, pool_before) in plan {
        if pool_before {
            layers.push(ExtractorLayer::Pool(MaxPool2::new()));
        }
        add_conv(name, ic, oc, &mut layers, &mut taps)?;
    }
    layers.push(ExtractorLayer::Pool(MaxPool2::new()));
    add_conv("conv5_1", 512, 512, &mut layers, &mut taps)?;

    Ok(FeatureExtractor {
        layers,
        taps,
        preprocess: Preprocess::Normalize {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        },
        frozen: true,
    })
}

/// Small seeded extractor with three taps; offline stand-in for tests and
/// desk-scale runs.
pub fn tiny_test_extractor<T: Scalar>(seed: u64) -> FeatureExtractor<T> {
    let mut rng = stream(seed, &[tag::EXTRACTOR_INIT]);
    // scale calibrated so content/style magnitudes land in the pretrained
    // extractor's regime the loss weights were tuned for
    let scale = real::<T>(1.5);
    let mut conv = |ic: usize, oc: usize| -> Conv2d<T> {
        let mut c = Conv2d::new(ic, oc, 3, 1, 1, &mut rng);
        c.weight.scale(scale);
        for b in c.bias.data_mut() {
            *b = normal::<T, _>(&mut rng) * real::<T>(0.1);
        }
        c
    };
    let layers = vec![
        ExtractorLayer::Conv(conv(3, 4)),
        ExtractorLayer::Relu(Relu::new()),
        ExtractorLayer::Conv(conv(4, 6)),
        ExtractorLayer::Relu(Relu::new()),
        ExtractorLayer::Pool(MaxPool2::new()),
        ExtractorLayer::Conv(conv(6, 8)),
        ExtractorLayer::Relu(Relu::new()),
    ];
    FeatureExtractor {
        layers,
        taps: vec![
            ("tap1".into(), 1),
            ("tap2".into(), 3),
            ("tap3".into(), 6),
        ],
        preprocess: Preprocess::Normalize {
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        },
        frozen: true,
    }
}

/// Single-tap extractor that returns its input unchanged; closed-form test
/// instrumentation.
pub fn identity_extractor<T: Scalar>() -> FeatureExtractor<T> {
    FeatureExtractor {
        layers: vec![ExtractorLayer::Passthrough],
        taps: vec![("input".into(), 0)],
        preprocess: Preprocess::Identity,
        frozen: true,
    }
}
