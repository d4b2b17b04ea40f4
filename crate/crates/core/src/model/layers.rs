//! Slice-level forward/backward kernels shared by the concrete networks.
//!
//! Feature maps use the same H→W→C layout as [`ImageTensor`](crate::ImageTensor).
//! Conv weights are laid out `[out][ky][kx][in]`; dense weights `[out][in]`.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct MapDims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl MapDims {
    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }
}

/// 3×3 stride-1 convolution with one pixel of zero padding.
pub(crate) fn conv3x3_forward<T: Scalar>(
    input: &[T],
    dims: MapDims,
    weights: &[T],
    bias: &[T],
) -> Vec<T> {
    let out_c = bias.len();
    let (h, w, in_c) = (dims.h as isize, dims.w as isize, dims.c);
    let mut out = vec![T::zero(); dims.h * dims.w * out_c];
    for y in 0..h {
        for x in 0..w {
            let o_base = ((y * w + x) as usize) * out_c;
            out[o_base..o_base + out_c].copy_from_slice(bias);
            for ky in 0..3isize {
                let sy = y + ky - 1;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kx in 0..3isize {
                    let sx = x + kx - 1;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    let i_base = ((sy * w + sx) as usize) * in_c;
                    let src = &input[i_base..i_base + in_c];
                    for (o, acc) in out[o_base..o_base + out_c].iter_mut().enumerate() {
                        let k_base = ((o * 3 + ky as usize) * 3 + kx as usize) * in_c;
                        let kw = &weights[k_base..k_base + in_c];
                        let mut s = T::zero();
                        for (a, b) in kw.iter().zip(src) {
                            s += *a * *b;
                        }
                        *acc += s;
                    }
                }
            }
        }
    }
    out
}

/// Returns the input gradient; accumulates weight/bias gradients when given.
pub(crate) fn conv3x3_backward<T: Scalar>(
    input: &[T],
    dims: MapDims,
    weights: &[T],
    out_c: usize,
    grad_out: &[T],
    mut param_grads: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let (h, w, in_c) = (dims.h as isize, dims.w as isize, dims.c);
    let mut grad_in = vec![T::zero(); dims.len()];
    for y in 0..h {
        for x in 0..w {
            let o_base = ((y * w + x) as usize) * out_c;
            let go = &grad_out[o_base..o_base + out_c];
            if let Some((_, gb)) = param_grads.as_mut() {
                for (b, &g) in gb.iter_mut().zip(go) {
                    *b += g;
                }
            }
            for ky in 0..3isize {
                let sy = y + ky - 1;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kx in 0..3isize {
                    let sx = x + kx - 1;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    let i_base = ((sy * w + sx) as usize) * in_c;
                    for (o, &g) in go.iter().enumerate() {
                        if g == T::zero() {
                            continue;
                        }
                        let k_base = ((o * 3 + ky as usize) * 3 + kx as usize) * in_c;
                        for ci in 0..in_c {
                            grad_in[i_base + ci] += weights[k_base + ci] * g;
                        }
                        if let Some((gw, _)) = param_grads.as_mut() {
                            for ci in 0..in_c {
                                gw[k_base + ci] += input[i_base + ci] * g;
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

pub(crate) fn relu<T: Scalar>(pre: &[T]) -> Vec<T> {
    pre.iter().map(|&v| v.max(T::zero())).collect()
}

/// Masks `grad` in place where the pre-activation was not positive.
pub(crate) fn relu_backward<T: Scalar>(pre: &[T], grad: &mut [T]) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

/// 2×2 stride-2 max pool over `relu(pre)`; odd trailing rows/columns are
/// dropped. Returns pooled values and the flat source index of each maximum
/// (first maximum wins ties).
pub(crate) fn relu_maxpool2_forward<T: Scalar>(pre: &[T], dims: MapDims) -> (Vec<T>, Vec<usize>) {
    let (oh, ow, c) = (dims.h / 2, dims.w / 2, dims.c);
    let mut out = Vec::with_capacity(oh * ow * c);
    let mut idx = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best_i = ((2 * y) * dims.w + 2 * x) * c + ch;
                let mut best = pre[best_i].max(T::zero());
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = ((2 * y + dy) * dims.w + 2 * x + dx) * c + ch;
                    let v = pre[i].max(T::zero());
                    if v > best {
                        best = v;
                        best_i = i;
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    (out, idx)
}

/// Routes pooled gradients back to the winning positions, through the ReLU.
pub(crate) fn relu_maxpool2_backward<T: Scalar>(
    pre: &[T],
    idx: &[usize],
    grad_out: &[T],
) -> Vec<T> {
    let mut grad = vec![T::zero(); pre.len()];
    for (&i, &g) in idx.iter().zip(grad_out) {
        if pre[i] > T::zero() {
            grad[i] += g;
        }
    }
    grad
}

pub(crate) fn dense_forward<T: Scalar>(input: &[T], weights: &[T], bias: &[T]) -> Vec<T> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(input).map(|(&a, &v)| a * v).sum::<T>()
        })
        .collect()
}

pub(crate) fn dense_backward<T: Scalar>(
    input: &[T],
    weights: &[T],
    grad_out: &[T],
    param_grads: Option<(&mut [T], &mut [T])>,
) -> Vec<T> {
    let n_in = input.len();
    let mut grad_in = vec![T::zero(); n_in];
    for (o, &g) in grad_out.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let row = &weights[o * n_in..(o + 1) * n_in];
        for (gi, &wv) in grad_in.iter_mut().zip(row) {
            *gi += wv * g;
        }
    }
    if let Some((gw, gb)) = param_grads {
        for (o, &g) in grad_out.iter().enumerate() {
            gb[o] += g;
            let row = &mut gw[o * n_in..(o + 1) * n_in];
            for (r, &v) in row.iter_mut().zip(input) {
                *r += v * g;
            }
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_single_tap() {
        // center-tap-only kernel reproduces the input, scaled
        let dims = MapDims { h: 3, w: 3, c: 1 };
        let input: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let mut k = vec![0.0; 9];
        k[4] = 2.0;
        let out = conv3x3_forward(&input, dims, &k, &[1.0]);
        let expected: Vec<f64> = input.iter().map(|v| 2.0 * v + 1.0).collect();
        assert_eq!(out, expected);
    }

    #[test]
    fn conv_zero_padding_at_corner() {
        let dims = MapDims { h: 2, w: 2, c: 1 };
        let input = vec![1.0, 1.0, 1.0, 1.0];
        let k = vec![1.0; 9];
        let out = conv3x3_forward(&input, dims, &k, &[0.0]);
        // every output sees the full 2x2 input
        assert_eq!(out, vec![4.0; 4]);
    }

    #[test]
    fn pool_picks_first_max_and_drops_odd_edge() {
        let dims = MapDims { h: 3, w: 3, c: 1 };
        let pre = vec![1.0, 1.0, 9.0, 0.5, -2.0, 9.0, 9.0, 9.0, 9.0];
        let (out, idx) = relu_maxpool2_forward(&pre, dims);
        assert_eq!(out, vec![1.0]);
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn dense_roundtrip_shapes() {
        let w = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = dense_forward(&[1.0, 0.0, -1.0], &w, &[0.5, -0.5]);
        assert_eq!(out, vec![-1.5, -2.5]);
        let g = dense_backward(&[1.0, 0.0, -1.0], &w, &[1.0, 1.0], None);
        assert_eq!(g, vec![5.0, 7.0, 9.0]);
    }
}
