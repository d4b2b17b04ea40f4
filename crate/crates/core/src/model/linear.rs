use super::layers::{dense_backward, dense_forward};
use super::{check_input, Architecture, Classifier, Network, Param, Trace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};
use crate::Rng;

/// Multinomial logistic regression: `logits = W·vec(x) + b`.
///
/// The input gradient of the cross-entropy loss has the closed form
/// `Wᵀ(softmax(logits) − onehot(y))`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSoftmax<T> {
    input: Shape,
    params: Vec<Param<T>>,
}

impl<T: Scalar> LinearSoftmax<T> {
    /// `weights` is `classes × input.len()`, row-major.
    pub fn new(input: Shape, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let classes = bias.len();
        if classes < 2 || weights.len() != classes * input.len() {
            return Err(Error::InvalidArgument(format!(
                "linear model needs >= 2 classes and {}x{} weights",
                classes,
                input.len()
            )));
        }
        Ok(Self {
            input,
            params: vec![
                Param::new("weight", vec![classes, input.len()], weights),
                Param::new("bias", vec![classes], bias),
            ],
        })
    }

    pub fn zeros(input: Shape, classes: usize) -> Self {
        Self::new(
            input,
            vec![T::zero(); classes * input.len()],
            vec![T::zero(); classes],
        )
        .expect("valid zero model")
    }

    pub(crate) fn random(input: Shape, classes: usize, rng: &mut Rng) -> Self {
        let d = input.len();
        Self {
            input,
            params: vec![
                Param::normal("weight", vec![classes, d], (1.0 / d as f64).sqrt(), rng),
                Param::zeros("bias", vec![classes]),
            ],
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.params[0].data
    }

    pub fn bias(&self) -> &[T] {
        &self.params[1].data
    }
}

impl<T: Scalar> Classifier<T> for LinearSoftmax<T> {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn num_classes(&self) -> usize {
        self.params[1].data.len()
    }

    fn forward(&self, x: &ImageTensor<T>) -> Result<Trace<T>> {
        check_input(self.input, x)?;
        Ok(Trace {
            logits: dense_forward(x.data(), self.weights(), self.bias()),
            input: x.data().to_vec(),
            acts: vec![],
            switches: vec![],
        })
    }

    fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> ImageTensor<T> {
        let g = dense_backward(&trace.input, self.weights(), upstream, None);
        ImageTensor::new(self.input, g).expect("gradient matches input shape")
    }
}

impl<T: Scalar> Network<T> for LinearSoftmax<T> {
    fn architecture(&self) -> Architecture {
        Architecture::Linear {
            input: self.input,
            classes: self.num_classes(),
        }
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn backward_with_params(&self, trace: &Trace<T>, upstream: &[T], grads: &mut [Vec<T>]) -> ImageTensor<T> {
        let (gw, rest) = grads.split_at_mut(1);
        let g = dense_backward(
            &trace.input,
            self.weights(),
            upstream,
            Some((&mut gw[0], &mut rest[0])),
        );
        ImageTensor::new(self.input, g).expect("gradient matches input shape")
    }
}
