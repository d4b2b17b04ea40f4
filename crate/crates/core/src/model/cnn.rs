use super::layers::{
    conv3x3_backward, conv3x3_forward, dense_backward, dense_forward, relu_maxpool2_backward,
    relu_maxpool2_forward, MapDims,
};
use super::{check_input, Architecture, Classifier, Network, Param, Trace};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};
use crate::Rng;

/// conv3×3(`conv1`) → ReLU → maxpool 2×2 → conv3×3(`conv2`) → ReLU →
/// maxpool 2×2 → dense → logits.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyCnn<T> {
    input: Shape,
    conv1: usize,
    conv2: usize,
    classes: usize,
    params: Vec<Param<T>>,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const W3: usize = 4;
const B3: usize = 5;

impl<T: Scalar> TinyCnn<T> {
    pub(crate) fn random(input: Shape, conv1: usize, conv2: usize, classes: usize, rng: &mut Rng) -> Self {
        let c = input.channels;
        let flat = (input.height / 4) * (input.width / 4) * conv2;
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let params = vec![
            Param::normal("conv1.weight", vec![conv1, 3, 3, c], he(9 * c), rng),
            Param::zeros("conv1.bias", vec![conv1]),
            Param::normal("conv2.weight", vec![conv2, 3, 3, conv1], he(9 * conv1), rng),
            Param::zeros("conv2.bias", vec![conv2]),
            Param::normal("dense.weight", vec![classes, flat], (1.0 / flat as f64).sqrt(), rng),
            Param::zeros("dense.bias", vec![classes]),
        ];
        Self {
            input,
            conv1,
            conv2,
            classes,
            params,
        }
    }

    fn dims1(&self) -> MapDims {
        MapDims {
            h: self.input.height,
            w: self.input.width,
            c: self.input.channels,
        }
    }

    fn dims2(&self) -> MapDims {
        MapDims {
            h: self.input.height / 2,
            w: self.input.width / 2,
            c: self.conv1,
        }
    }

    fn run_backward(
        &self,
        trace: &Trace<T>,
        upstream: &[T],
        mut grads: Option<&mut [Vec<T>]>,
    ) -> ImageTensor<T> {
        let [pre1, pool1, pre2, pool2] = [&trace.acts[0], &trace.acts[1], &trace.acts[2], &trace.acts[3]];
        let [idx1, idx2] = [&trace.switches[0], &trace.switches[1]];
        let p = &self.params;

        let d_pool2 = match grads.as_deref_mut() {
            Some(g) => {
                let (gw, gb) = pair(g, W3, B3);
                dense_backward(pool2, &p[W3].data, upstream, Some((gw, gb)))
            }
            None => dense_backward(pool2, &p[W3].data, upstream, None),
        };
        let d_pre2 = relu_maxpool2_backward(pre2, idx2, &d_pool2);
        let d_pool1 = match grads.as_deref_mut() {
            Some(g) => {
                let (gw, gb) = pair(g, W2, B2);
                conv3x3_backward(pool1, self.dims2(), &p[W2].data, self.conv2, &d_pre2, Some((gw, gb)))
            }
            None => conv3x3_backward(pool1, self.dims2(), &p[W2].data, self.conv2, &d_pre2, None),
        };
        let d_pre1 = relu_maxpool2_backward(pre1, idx1, &d_pool1);
        let d_x = match grads {
            Some(g) => {
                let (gw, gb) = pair(g, W1, B1);
                conv3x3_backward(&trace.input, self.dims1(), &p[W1].data, self.conv1, &d_pre1, Some((gw, gb)))
            }
            None => conv3x3_backward(&trace.input, self.dims1(), &p[W1].data, self.conv1, &d_pre1, None),
        };
        ImageTensor::new(self.input, d_x).expect("gradient matches input shape")
    }
}

/// Disjoint mutable borrows of two adjacent gradient buffers.
fn pair<T>(g: &mut [Vec<T>], w: usize, b: usize) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(b, w + 1);
    let (head, tail) = g.split_at_mut(b);
    (&mut head[w], &mut tail[0])
}

impl<T: Scalar> Classifier<T> for TinyCnn<T> {
    fn input_shape(&self) -> Shape {
        self.input
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn forward(&self, x: &ImageTensor<T>) -> Result<Trace<T>> {
        check_input(self.input, x)?;
        let p = &self.params;
        let pre1 = conv3x3_forward(x.data(), self.dims1(), &p[W1].data, &p[B1].data);
        let mut d1 = self.dims1();
        d1.c = self.conv1;
        let (pool1, idx1) = relu_maxpool2_forward(&pre1, d1);
        let pre2 = conv3x3_forward(&pool1, self.dims2(), &p[W2].data, &p[B2].data);
        let mut d2 = self.dims2();
        d2.c = self.conv2;
        let (pool2, idx2) = relu_maxpool2_forward(&pre2, d2);
        let logits = dense_forward(&pool2, &p[W3].data, &p[B3].data);
        Ok(Trace {
            logits,
            input: x.data().to_vec(),
            acts: vec![pre1, pool1, pre2, pool2],
            switches: vec![idx1, idx2],
        })
    }

    fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> ImageTensor<T> {
        self.run_backward(trace, upstream, None)
    }
}

impl<T: Scalar> Network<T> for TinyCnn<T> {
    fn architecture(&self) -> Architecture {
        Architecture::Cnn {
            input: self.input,
            conv1: self.conv1,
            conv2: self.conv2,
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
