//! 70x70 patch discriminator: four spectrally normalized 4x4 convolution
//! stages (strides 2,2,2,1), leaky ReLU activations, and a spectrally
//! normalized 1-channel head squashed to patch probabilities.

use crate::num::Scalar;
use crate::rng::{stream, tag};
use crate::tensor::Tensor;

use super::layers::{Conv2d, Forward, LeakyRelu, Sigmoid, SpectralConv2d};
use super::{DiscriminatorSpec, ParamVisitor};

#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    pub spec: DiscriminatorSpec,
    stages: Vec<(SpectralConv2d<T>, LeakyRelu<T>)>,
    head: SpectralConv2d<T>,
    sigmoid: Sigmoid<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(spec: &DiscriminatorSpec, seed: u64) -> Self {
        let mut rng = stream(seed, &[tag::DISCRIMINATOR_INIT]);
        let bw = spec.base_width;
        let widths = [bw, bw * 2, bw * 4, bw * 8];
        let schedule = DiscriminatorSpec::layer_schedule();
        let mut stages = Vec::new();
        let mut in_ch = spec.input_channels;
        for (i, &w) in widths.iter().enumerate() {
            let (k, s) = schedule[i];
            let conv = Conv2d::new(in_ch, w, k, s, 1, &mut rng);
            stages.push((SpectralConv2d::new(conv, &mut rng), LeakyRelu::new(0.2)));
            in_ch = w;
        }
        let (k, s) = schedule[4];
        let head = SpectralConv2d::new(Conv2d::new(in_ch, 1, k, s, 1, &mut rng), &mut rng);
        Discriminator {
            spec: spec.clone(),
            stages,
            head,
            sigmoid: Sigmoid::new(),
        }
    }

    /// Patch probability map of shape [n, 1, p, p], values in (0, 1).
    pub fn forward(&mut self, x: &Tensor<T>, fwd: Forward) -> Tensor<T> {
        let mut y = x.clone();
        for (conv, act) in &mut self.stages {
            y = conv.forward(&y, fwd);
            y = act.forward(&y, fwd);
        }
        let y = self.head.forward(&y, fwd);
        self.sigmoid.forward(&y, fwd)
    }

    pub fn backward(&mut self, gy: &Tensor<T>) -> Tensor<T> {
        let mut g = self.sigmoid.backward(gy);
        g = self.head.backward(&g);
        for (conv, act) in self.stages.iter_mut().rev() {
            g = act.backward(&g);
            g = conv.backward(&g);
        }
        g
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<T>) {
        for (i, (conv, _)) in self.stages.iter_mut().enumerate() {
            conv.visit_params(&format!("disc.stage.{i}"), f);
        }
        self.head.visit_params("disc.head", f);
    }

    /// Persistent power-iteration state, serialized with checkpoints.
    pub fn visit_state(&mut self, f: &mut dyn FnMut(String, &mut [T])) {
        for (i, (conv, _)) in self.stages.iter_mut().enumerate() {
            conv.visit_state(&format!("disc.stage.{i}"), f);
        }
        self.head.visit_state("disc.head", f);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, grad| grad.fill(T::zero()));
    }

    /// The normalized weights the forward pass actually uses.
    pub fn normalized_weights(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        for (i, (conv, _)) in self.stages.iter().enumerate() {
            out.push((format!("disc.stage.{i}.weight"), conv.normalized_weight()));
        }
        out.push(("disc.head.weight".into(), self.head.normalized_weight()));
        out
    }

    pub fn snapshot(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, value, _| out.push((name, value.clone())));
        out
    }
}
