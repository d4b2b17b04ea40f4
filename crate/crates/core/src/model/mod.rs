//! Differentiable classifiers: the white-box gradient source for attacks and
//! the black-box targets they are evaluated against.
//!
//! Every model exposes a two-phase interface: [`Classifier::forward`] records
//! the activations needed by [`Classifier::backward`], which maps an upstream
//! gradient on the logits to a gradient on the input image. Splitting the two
//! lets callers fuse logits from several forward passes before choosing the
//! upstream gradient.

mod checkpoint;
mod cnn;
pub(crate) mod layers;
mod linear;
mod mlp;
mod train;

use std::fmt;
use std::str::FromStr;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use cnn::TinyCnn;
pub use linear::LinearSoftmax;
pub use mlp::DenseNet;
pub use train::{accuracy, train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};

/// Activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub logits: Vec<T>,
    pub(crate) input: Vec<T>,
    pub(crate) acts: Vec<Vec<T>>,
    pub(crate) switches: Vec<Vec<usize>>,
}

impl<T: Scalar> Trace<T> {
    /// True when both passes took the same piecewise-linear branch: identical
    /// ReLU on/off pattern and identical max-pool winners. Within one branch
    /// the network is smooth, so finite differences are meaningful.
    pub fn same_branch(&self, other: &Trace<T>) -> bool {
        self.switches == other.switches
            && self.acts.len() == other.acts.len()
            && self
                .acts
                .iter()
                .zip(&other.acts)
                .all(|(a, b)| a.iter().zip(b).all(|(u, v)| (*u > T::zero()) == (*v > T::zero())))
    }
}

pub trait Classifier<T: Scalar>: Send + Sync {
    fn input_shape(&self) -> Shape;

    fn num_classes(&self) -> usize;

    fn forward(&self, x: &ImageTensor<T>) -> Result<Trace<T>>;

    /// Input gradient of `⟨upstream, logits(x)⟩` at the traced point.
    fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> ImageTensor<T>;

    fn logits(&self, x: &ImageTensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(x)?.logits)
    }

    /// Argmax of the logits, lowest index on ties.
    fn predict(&self, x: &ImageTensor<T>) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Softmax cross-entropy `J(x, y)` and its input gradient. Targeted
    /// attacks pass the target label and descend along the returned gradient.
    fn loss_and_input_gradient(&self, x: &ImageTensor<T>, y: usize) -> Result<(T, ImageTensor<T>)> {
        let trace = self.forward(x)?;
        let (loss, upstream) = softmax_cross_entropy(&trace.logits, y)?;
        Ok((loss, self.backward(&trace, &upstream)))
    }
}

/// A named parameter tensor with an explicit shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub(crate) fn new(name: &str, shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.to_string(),
            shape,
            data,
        }
    }

    pub(crate) fn normal(name: &str, shape: Vec<usize>, std: f64, rng: &mut crate::Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(std * rng.normal())).collect();
        Self::new(name, shape, data)
    }

    pub(crate) fn zeros(name: &str, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); n])
    }
}

/// Classifier with trainable parameters.
pub trait Network<T: Scalar>: Classifier<T> {
    fn architecture(&self) -> Architecture;

    fn params(&self) -> &[Param<T>];

    fn params_mut(&mut self) -> &mut [Param<T>];

    /// Like [`Classifier::backward`], additionally accumulating parameter
    /// gradients into `grads` (one buffer per entry of [`params`](Self::params)).
    fn backward_with_params(
        &self,
        trace: &Trace<T>,
        upstream: &[T],
        grads: &mut [Vec<T>],
    ) -> ImageTensor<T>;
}

/// Architecture descriptor, serialized into checkpoints as e.g.
/// `cnn in=28x28x1 conv1=8 conv2=16 classes=10`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    Linear {
        input: Shape,
        classes: usize,
    },
    Cnn {
        input: Shape,
        conv1: usize,
        conv2: usize,
        classes: usize,
    },
    Mlp {
        input: Shape,
        hidden: usize,
        classes: usize,
    },
}

impl Architecture {
    /// The default source model: 8 and 16 filters.
    pub fn tiny_cnn(input: Shape, classes: usize) -> Self {
        Architecture::Cnn {
            input,
            conv1: 8,
            conv2: 16,
            classes,
        }
    }

    pub fn input_shape(&self) -> Shape {
        match *self {
            Architecture::Linear { input, .. }
            | Architecture::Cnn { input, .. }
            | Architecture::Mlp { input, .. } => input,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Architecture::Linear { classes, .. }
            | Architecture::Cnn { classes, .. }
            | Architecture::Mlp { classes, .. } => classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let input = self.input_shape();
        if input.is_empty() {
            return Err(Error::InvalidArgument(format!("empty input shape {input}")));
        }
        if self.classes() < 2 {
            return Err(Error::InvalidArgument("a classifier needs at least 2 classes".into()));
        }
        match *self {
            Architecture::Cnn { input, conv1, conv2, .. } => {
                if input.height < 4 || input.width < 4 || conv1 == 0 || conv2 == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "cnn needs input >= 4x4 and positive widths, got {self}"
                    )));
                }
            }
            Architecture::Mlp { hidden, .. } if hidden == 0 => {
                return Err(Error::InvalidArgument("mlp needs hidden > 0".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Fresh randomly initialized model.
    pub fn build<T: Scalar>(&self, seed: u64) -> Result<Model<T>> {
        self.validate()?;
        let mut rng = crate::Rng::new(seed);
        Ok(match *self {
            Architecture::Linear { input, classes } => {
                Model::Linear(LinearSoftmax::random(input, classes, &mut rng))
            }
            Architecture::Cnn { input, conv1, conv2, classes } => {
                Model::Cnn(TinyCnn::random(input, conv1, conv2, classes, &mut rng))
            }
            Architecture::Mlp { input, hidden, classes } => {
                Model::Mlp(DenseNet::random(input, hidden, classes, &mut rng))
            }
        })
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::Linear { input, classes } => {
                write!(f, "linear in={input} classes={classes}")
            }
            Architecture::Cnn { input, conv1, conv2, classes } => {
                write!(f, "cnn in={input} conv1={conv1} conv2={conv2} classes={classes}")
            }
            Architecture::Mlp { input, hidden, classes } => {
                write!(f, "mlp in={input} hidden={hidden} classes={classes}")
            }
        }
    }
}

pub(crate) fn parse_shape(s: &str) -> Option<Shape> {
    let dims: Vec<usize> = s.split('x').map(|d| d.parse().ok()).collect::<Option<_>>()?;
    match dims.as_slice() {
        [h, w, c] => Some(Shape::new(*h, *w, *c)),
        _ => None,
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::format("architecture descriptor", s.to_string());
        let mut parts = s.split_whitespace();
        let kind = parts.next().ok_or_else(bad)?;
        let mut input = None;
        let mut fields = std::collections::BTreeMap::new();
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            if k == "in" {
                input = Some(parse_shape(v).ok_or_else(bad)?);
            } else {
                fields.insert(k, v.parse::<usize>().map_err(|_| bad())?);
            }
        }
        let input = input.ok_or_else(bad)?;
        let mut take = |k: &str| fields.remove(k).ok_or_else(bad);
        let arch = match kind {
            "linear" => Architecture::Linear { input, classes: take("classes")? },
            "cnn" => Architecture::Cnn {
                input,
                conv1: take("conv1")?,
                conv2: take("conv2")?,
                classes: take("classes")?,
            },
            "mlp" => Architecture::Mlp {
                input,
                hidden: take("hidden")?,
                classes: take("classes")?,
            },
            _ => return Err(bad()),
        };
        if !fields.is_empty() {
            return Err(bad());
        }
        arch.validate()?;
        Ok(arch)
    }
}

/// Any of the built-in networks.
#[derive(Clone, Debug, PartialEq)]
pub enum Model<T> {
    Linear(LinearSoftmax<T>),
    Cnn(TinyCnn<T>),
    Mlp(DenseNet<T>),
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Linear($m) => $e,
            Model::Cnn($m) => $e,
            Model::Mlp($m) => $e,
        }
    };
}

impl<T: Scalar> Classifier<T> for Model<T> {
    fn input_shape(&self) -> Shape {
        dispatch!(self, m => m.input_shape())
    }
    fn num_classes(&self) -> usize {
        dispatch!(self, m => m.num_classes())
    }
    fn forward(&self, x: &ImageTensor<T>) -> Result<Trace<T>> {
        dispatch!(self, m => m.forward(x))
    }
    fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> ImageTensor<T> {
        dispatch!(self, m => m.backward(trace, upstream))
    }
}

impl<T: Scalar> Network<T> for Model<T> {
    fn architecture(&self) -> Architecture {
        dispatch!(self, m => m.architecture())
    }
    fn params(&self) -> &[Param<T>] {
        dispatch!(self, m => m.params())
    }
    fn params_mut(&mut self) -> &mut [Param<T>] {
        dispatch!(self, m => m.params_mut())
    }
    fn backward_with_params(&self, trace: &Trace<T>, upstream: &[T], grads: &mut [Vec<T>]) -> ImageTensor<T> {
        dispatch!(self, m => m.backward_with_params(trace, upstream, grads))
    }
}

impl<T: Scalar> Model<T> {
    /// Rebuilds a model from a descriptor and parameter list (checkpoint load).
    pub fn from_parts(arch: Architecture, params: Vec<Param<T>>) -> Result<Self> {
        let mut model: Model<T> = arch.build(0)?;
        let slots = model.params_mut();
        if slots.len() != params.len() {
            return Err(Error::format(
                "checkpoint",
                format!("{arch} expects {} parameter tensors, found {}", slots.len(), params.len()),
            ));
        }
        for (slot, p) in slots.iter_mut().zip(params) {
            if slot.shape != p.shape {
                return Err(Error::format(
                    "checkpoint",
                    format!("parameter {} has shape {:?}, expected {:?}", slot.name, p.shape, slot.shape),
                ));
            }
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format("checkpoint", format!("parameter {} is not finite", slot.name)));
            }
            slot.data = p.data;
        }
        Ok(model)
    }
}

/// A labeled image.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample<T> {
    pub image: ImageTensor<T>,
    pub label: usize,
}

/// Lowest index of the maximum.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of `softmax(logits)` against class `y`, with the gradient
/// `softmax(logits) − onehot(y)` on the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], y: usize) -> Result<(T, Vec<T>)> {
    if y >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = logits.iter().map(|&z| (z - m).exp()).sum();
    let lse = m + total.ln();
    let loss = (lse - logits[y]).max(T::zero());
    let mut grad: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
    grad[y] -= T::one();
    Ok((loss, grad))
}

pub(crate) fn check_input<T: Scalar>(expected: Shape, x: &ImageTensor<T>) -> Result<()> {
    x.expect_shape(expected)?;
    x.check_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64; 10], 3).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-15);
        assert!((loss - 2.302585).abs() < 1e-6);
        assert!((grad[3] + 0.9).abs() < 1e-15);
        assert!((grad[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loss_rejects_bad_label() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0f64; 3], 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn loss_is_stable_for_large_logits() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0f64, -1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss >= 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0f64, -1000.0, 0.0], 1).unwrap();
        assert!((loss - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0f64, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 5]), 0);
    }

    #[test]
    fn descriptor_round_trip() {
        let archs = [
            Architecture::Linear { input: Shape::new(2, 2, 1), classes: 3 },
            Architecture::tiny_cnn(Shape::new(28, 28, 1), 10),
            Architecture::Mlp { input: Shape::new(28, 28, 3), hidden: 64, classes: 10 },
        ];
        for a in archs {
            let text = a.to_string();
            assert_eq!(text.parse::<Architecture>().unwrap(), a, "{text}");
        }
        assert!("cnn in=28x28x1 conv1=8 classes=10".parse::<Architecture>().is_err());
        assert!("resnet in=28x28x1 classes=10".parse::<Architecture>().is_err());
        assert!("linear in=2x2x1 classes=1".parse::<Architecture>().is_err());
    }
}
