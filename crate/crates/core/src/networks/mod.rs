//! Network architectures: the residual colorization generator, the U-Net
//! baseline, and the 70x70 patch discriminator with spectral normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::tensor::Tensor;

pub mod checkpoint;
pub mod discriminator;
pub mod generator;
pub mod layers;

pub use discriminator::Discriminator;
pub use generator::{Generator, ResidualGenerator, UnetGenerator};
pub use layers::Forward;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// 2 downsampling stages, 8 residual blocks, nearest-neighbor upsampling.
    Residual,
    /// Encoder-decoder with skip connections, downsampling to a 2x2
    /// bottleneck, conditioned on line art alone.
    UnetBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Line art (1) plus condition channels (3) for the residual model;
    /// 1 for the baseline.
    pub input_channels: usize,
    pub output_channels: usize,
    pub base_width: usize,
    pub n_down: usize,
    pub n_residual_blocks: usize,
    /// Training resolution; fixes the U-Net depth (bottleneck is 2x2).
    pub image_size: usize,
}

impl GeneratorSpec {
    pub fn residual() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::Residual,
            input_channels: 4,
            output_channels: 3,
            base_width: 64,
            n_down: 2,
            n_residual_blocks: 8,
            image_size: 256,
        }
    }

    pub fn unet_baseline() -> Self {
        GeneratorSpec {
            kind: GeneratorKind::UnetBaseline,
            input_channels: 1,
            output_channels: 3,
            base_width: 64,
            n_down: 2,
            n_residual_blocks: 8,
            image_size: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "generator output channels must be 3, got {}",
                self.output_channels
            )));
        }
        if self.base_width == 0 {
            return Err(Error::InvalidConfig("base_width 0".into()));
        }
        match self.kind {
            GeneratorKind::Residual => {
                if self.n_down != 2 || self.n_residual_blocks != 8 {
                    return Err(Error::InvalidConfig(format!(
                        "residual generator is fixed at 2 downsampling stages and 8 blocks, \
                         got {} and {}",
                        self.n_down, self.n_residual_blocks
                    )));
                }
                if self.input_channels != 4 {
                    return Err(Error::InvalidConfig(format!(
                        "residual generator takes 1+3=4 input channels, got {}",
                        self.input_channels
                    )));
                }
            }
            GeneratorKind::UnetBaseline => {
                if self.input_channels != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "baseline is conditioned on line art alone (1 channel), got {}",
                        self.input_channels
                    )));
                }
                if !self.image_size.is_power_of_two() || self.image_size < 4 {
                    return Err(Error::InvalidConfig(format!(
                        "baseline image size must be a power of two >= 4, got {}",
                        self.image_size
                    )));
                }
            }
        }
        Ok(())
    }

    /// Encoder depth of the baseline: downsample until the 2x2 bottleneck.
    pub fn unet_depth(&self) -> usize {
        (self.image_size as f64).log2() as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    /// Candidate frame (3) concatenated with the condition frame (3), plus
    /// the optional line-art channel.
    pub input_channels: usize,
    pub base_width: usize,
    pub n_layers: usize,
    pub spectral_norm: bool,
    /// Off by default: append the line art as an extra condition group.
    pub condition_on_lineart: bool,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            input_channels: 6,
            base_width: 64,
            n_layers: 4,
            spectral_norm: true,
            condition_on_lineart: false,
        }
    }
}

impl DiscriminatorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers != 4 {
            return Err(Error::InvalidConfig(format!(
                "patch discriminator is fixed at 4 stages, got {}",
                self.n_layers
            )));
        }
        let expected = if self.condition_on_lineart { 7 } else { 6 };
        if self.input_channels != expected && self.input_channels != 4 {
            return Err(Error::InvalidConfig(format!(
                "discriminator input channels {} do not match the conditioning \
                 protocol (expected {expected}, or 4 for the baseline)",
                self.input_channels
            )));
        }
        if self.base_width == 0 {
            return Err(Error::InvalidConfig("base_width 0".into()));
        }
        Ok(())
    }

    /// Baseline variant: candidate frame conditioned on line art only.
    pub fn baseline() -> Self {
        DiscriminatorSpec {
            input_channels: 4,
            ..Default::default()
        }
    }

    /// Analytic receptive field of one patch output, from the layer
    /// (kernel, stride) schedule: rf grows by (k-1) * jump per layer.
    pub fn receptive_field(&self) -> usize {
        let mut rf = 1usize;
        let mut jump = 1usize;
        for (k, s) in Self::layer_schedule() {
            rf += (k - 1) * jump;
            jump *= s;
        }
        rf
    }

    /// (kernel, stride) per convolution, the 4 stages plus the 1-channel head.
    pub fn layer_schedule() -> [(usize, usize); 5] {
        [(4, 2), (4, 2), (4, 2), (4, 1), (4, 1)]
    }

    /// Patch-map spatial size at a given square input size; 0 when the
    /// input is too small for the five-layer stack.
    pub fn patch_map_size(&self, input: usize) -> usize {
        let mut s = input;
        for (k, stride) in Self::layer_schedule() {
            if s + 2 < k {
                return 0;
            }
            s = (s + 2 - k) / stride + 1;
        }
        s
    }
}

/// Build a generator with seed-controlled Gaussian init.
pub fn build_generator<T: Scalar>(spec: &GeneratorSpec, seed: u64) -> Result<Generator<T>> {
    spec.validate()?;
    Ok(match spec.kind {
        GeneratorKind::Residual => Generator::Residual(ResidualGenerator::new(spec, seed)),
        GeneratorKind::UnetBaseline => Generator::Unet(UnetGenerator::new(spec, seed)),
    })
}

/// Build the patch discriminator with seed-controlled Gaussian init.
pub fn build_discriminator<T: Scalar>(
    spec: &DiscriminatorSpec,
    seed: u64,
) -> Result<Discriminator<T>> {
    spec.validate()?;
    Ok(Discriminator::new(spec, seed))
}

/// Named mutable views over parameters and their gradient accumulators.
pub type ParamVisitor<'a, T> = dyn FnMut(String, &mut Tensor<T>, &mut Tensor<T>) + 'a;
