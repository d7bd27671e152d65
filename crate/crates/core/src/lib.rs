//! Temporally coherent line-art colorization: conditional-GAN networks,
//! losses, data pipeline, training loop, sequential inference, and image
//! quality metrics, all generic over the working float type.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod inference;
pub mod losses;
pub mod networks;
pub mod num;
pub mod optim;
pub mod reference;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use num::Scalar;

/// Training-precision aliases.
pub type Tensor32 = tensor::Tensor<f32>;
pub type Frame32 = imaging::Frame<f32>;
pub type Generator32 = networks::Generator<f32>;
pub type Discriminator32 = networks::Discriminator<f32>;

/// Verification-precision aliases.
pub type Tensor64 = tensor::Tensor<f64>;
pub type Frame64 = imaging::Frame<f64>;
pub type Generator64 = networks::Generator<f64>;
pub type Discriminator64 = networks::Discriminator<f64>;
