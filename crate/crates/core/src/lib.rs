//! Transferable L∞ adversarial attacks on small differentiable classifiers.
//!
//! The crate is organised in layers:
//!
//! - [`tensor`], [`resize`], [`rng`]: image tensors, geometric primitives and
//!   a seeded, platform-independent generator.
//! - [`model`]: the classifier contract with hand-written backward passes,
//!   SGD training and a binary checkpoint format.
//! - [`attack`]: input-diversity transforms, Gaussian gradient smoothing,
//!   multi-scale and multi-model logit fusion, momentum and Nesterov updates,
//!   value- and region-fitting steps, and the configurable runner.
//! - [`oracle`]: slow, independent reference implementations for tests.
//! - [`harness`]: datasets, tensor files, attack matrices, reports and
//!   visualizations.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common double-precision instantiation.

pub mod attack;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod resize;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use attack::{run_attack, AttackConfig, AttackTrace, GaussianKernel, KernelSpec, TransformKind};
pub use error::{Error, Result};
pub use model::{Architecture, Classifier, LabeledExample, Model, Network, TrainConfig};
pub use resize::bilinear_resize;
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{clip_to_ball, conv2d_same, pad, sign, ImageTensor, Kernel2d, Shape};

/// Double-precision image.
pub type Image = ImageTensor<f64>;
/// Single-precision image.
pub type Image32 = ImageTensor<f32>;
/// Double-precision model of any built-in architecture.
pub type AnyModel = Model<f64>;
pub type Cnn = model::TinyCnn<f64>;
pub type Linear = model::LinearSoftmax<f64>;
pub type Mlp = model::DenseNet<f64>;
pub type Example = LabeledExample<f64>;
