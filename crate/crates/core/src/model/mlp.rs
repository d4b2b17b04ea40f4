use super::layers::{dense_backward, dense_forward, relu, relu_backward};
use super::{check_input, Architecture, Classifier, Network, Param, Trace};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};
use crate::Rng;

/// One-hidden-layer ReLU network on the flattened image.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    input: Shape,
    hidden: usize,
    classes: usize,
    params: Vec<Param<T>>,
}

impl<T: Scalar> DenseNet<T> {
    pub(crate) fn random(input: Shape, hidden: usize, classes: usize, rng: &mut Rng) -> Self {
        let d = input.len();
        let params = vec![
            Param::normal("hidden.weight", vec![hidden, d], (2.0 / d as f64).sqrt(), rng),
            Param::zeros("hidden.bias", vec![hidden]),
            Param::normal("out.weight", vec![classes, hidden], (1.0 / hidden as f64).sqrt(), rng),
            Param::zeros("out.bias", vec![classes]),
        ];
        Self {
            input,
            hidden,
            classes,
            params,
        }
    }

    fn run_backward(&self, trace: &Trace<T>, upstream: &[T], grads: Option<&mut [Vec<T>]>) -> ImageTensor<T> {
        let pre = &trace.acts[0];
        let act = relu(pre);
        let p = &self.params;
        let d_x = match grads {
            Some(g) => {
                let (first, second) = g.split_at_mut(2);
                let (go_w, go_b) = second.split_at_mut(1);
                let mut d_hidden = dense_backward(&act, &p[2].data, upstream, Some((&mut go_w[0], &mut go_b[0])));
                relu_backward(pre, &mut d_hidden);
                let (gh_w, gh_b) = first.split_at_mut(1);
                dense_backward(&trace.input, &p[0].data, &d_hidden, Some((&mut gh_w[0], &mut gh_b[0])))
            }
            None => {
                let mut d_hidden = dense_backward(&act, &p[2].data, upstream, None);
                relu_backward(pre, &mut d_hidden);
                dense_backward(&trace.input, &p[0].data, &d_hidden, None)
            }
        };
        ImageTensor::new(self.input, d_x).expect("gradient matches input shape")
    }
}

impl<T: Scalar> Classifier<T> for DenseNet<T> {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn forward(&self, x: &ImageTensor<T>) -> Result<Trace<T>> {
        check_input(self.input, x)?;
        let p = &self.params;
        let pre = dense_forward(x.data(), &p[0].data, &p[1].data);
        let logits = dense_forward(&relu(&pre), &p[2].data, &p[3].data);
        Ok(Trace {
            logits,
            input: x.data().to_vec(),
            acts: vec![pre],
            switches: vec![],
        })
    }

    fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> ImageTensor<T> {
        self.run_backward(trace, upstream, None)
    }
}

impl<T: Scalar> Network<T> for DenseNet<T> {
    fn architecture(&self) -> Architecture {
        Architecture::Mlp {
            input: self.input,
            hidden: self.hidden,
            classes: self.classes,
        }
    }

    fn params(&self) -> &[Param<T>] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    fn backward_with_params(&self, trace: &Trace<T>, upstream: &[T], grads: &mut [Vec<T>]) -> ImageTensor<T> {
        self.run_backward(trace, upstream, Some(grads))
    }
}
