//! Bilinear resampling with half-pixel centers and edge clamping.
//!
//! Output sample `d` along an axis reads source coordinate
//! `(d + 0.5) · in/out − 0.5`, clamped to `[0, in − 1]`. Resampling is a
//! linear map, so [`ResizeMap`] also exposes its exact adjoint for
//! back-propagating gradients through a resize.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};

/// Two-tap interpolation along one axis: `v[lo] + frac · (v[hi] − v[lo])`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn axis_taps<T: Scalar>(n_in: usize, n_out: usize) -> Vec<Tap<T>> {
    if n_in == n_out {
        return (0..n_out)
            .map(|d| Tap {
                lo: d,
                hi: d,
                frac: T::zero(),
            })
            .collect();
    }
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            Tap {
                lo,
                hi,
                frac: T::of(src - lo as f64),
            }
        })
        .collect()
}

#[inline]
fn lerp<T: Scalar>(a: T, b: T, frac: T) -> T {
    let v = a + frac * (b - a);
    // keep rounding from stepping outside the endpoints
    v.max(a.min(b)).min(a.max(b))
}

/// Precomputed bilinear resampling between two spatial sizes.
#[derive(Clone, Debug)]
pub struct ResizeMap<T> {
    in_h: usize,
    in_w: usize,
    rows: Vec<Tap<T>>,
    cols: Vec<Tap<T>>,
}

impl<T: Scalar> ResizeMap<T> {
    pub fn new(in_h: usize, in_w: usize, out_h: usize, out_w: usize) -> Result<Self> {
        if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
            return Err(Error::InvalidArgument(format!(
                "resize sizes must be positive ({in_h}x{in_w} -> {out_h}x{out_w})"
            )));
        }
        Ok(Self {
            in_h,
            in_w,
            rows: axis_taps(in_h, out_h),
            cols: axis_taps(in_w, out_w),
        })
    }

    pub fn out_size(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn apply(&self, t: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        let s = t.shape();
        if s.height != self.in_h || s.width != self.in_w {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(self.in_h, self.in_w, s.channels),
                actual: s,
            });
        }
        let out_shape = Shape::new(self.rows.len(), self.cols.len(), s.channels);
        let src = t.data();
        let mut out = Vec::with_capacity(out_shape.len());
        for r in &self.rows {
            for q in &self.cols {
                for c in 0..s.channels {
                    let v00 = src[s.index(r.lo, q.lo, c)];
                    let v01 = src[s.index(r.lo, q.hi, c)];
                    let v10 = src[s.index(r.hi, q.lo, c)];
                    let v11 = src[s.index(r.hi, q.hi, c)];
                    let top = lerp(v00, v01, q.frac);
                    let bottom = lerp(v10, v11, q.frac);
                    out.push(lerp(top, bottom, r.frac));
                }
            }
        }
        ImageTensor::new(out_shape, out)
    }

    /// Transpose of [`apply`](Self::apply): scatters an output-space gradient
    /// back onto the input grid using the same interpolation weights.
    pub fn adjoint(&self, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        let s = g.shape();
        let (oh, ow) = self.out_size();
        if s.height != oh || s.width != ow {
            return Err(Error::ShapeMismatch {
                expected: Shape::new(oh, ow, s.channels),
                actual: s,
            });
        }
        let in_shape = Shape::new(self.in_h, self.in_w, s.channels);
        let mut out = ImageTensor::zeros(in_shape);
        let src = g.data();
        let dst = out.data_mut();
        for (oy, r) in self.rows.iter().enumerate() {
            let (wr0, wr1) = (T::one() - r.frac, r.frac);
            for (ox, q) in self.cols.iter().enumerate() {
                let (wq0, wq1) = (T::one() - q.frac, q.frac);
                for c in 0..s.channels {
                    let v = src[s.index(oy, ox, c)];
                    dst[in_shape.index(r.lo, q.lo, c)] += wr0 * wq0 * v;
                    dst[in_shape.index(r.lo, q.hi, c)] += wr0 * wq1 * v;
                    dst[in_shape.index(r.hi, q.lo, c)] += wr1 * wq0 * v;
                    dst[in_shape.index(r.hi, q.hi, c)] += wr1 * wq1 * v;
                }
            }
        }
        Ok(out)
    }
}

/// Bilinear resize to `out_h × out_w`. Resizing to the same size returns a
/// bit-identical copy.
pub fn bilinear_resize<T: Scalar>(
    t: &ImageTensor<T>,
    out_h: usize,
    out_w: usize,
) -> Result<ImageTensor<T>> {
    ResizeMap::new(t.height(), t.width(), out_h, out_w)?.apply(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_size_is_bit_identical() {
        let t = ImageTensor::from_fn(Shape::new(5, 7, 3), |y, x, c| ((y * 31 + x * 7 + c) % 13) as f64 / 13.0 + 1e-3);
        assert_eq!(bilinear_resize(&t, 5, 7).unwrap(), t);
    }

    #[test]
    fn two_by_two_to_one_is_the_mean() {
        let t = ImageTensor::new(Shape::new(2, 2, 1), vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let r = bilinear_resize(&t, 1, 1).unwrap();
        assert_eq!(r.data(), &[1.5]);
    }

    #[test]
    fn upsample_known_values() {
        // 1x2 [0, 1] -> 1x4: sources -0.25(clamped 0), 0.25, 0.75, 1.25(clamped 1)
        let t = ImageTensor::new(Shape::new(1, 2, 1), vec![0.0, 1.0]).unwrap();
        let r = bilinear_resize(&t, 1, 4).unwrap();
        assert_eq!(r.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn rejects_zero_size() {
        let t = ImageTensor::<f64>::zeros(Shape::new(2, 2, 1));
        assert!(bilinear_resize(&t, 0, 3).is_err());
        assert!(bilinear_resize(&t, 3, 0).is_err());
    }

    proptest! {
        #[test]
        fn constants_are_fixed_points(v in 0.0f64..1.0, h in 1usize..9, w in 1usize..9, oh in 1usize..20, ow in 1usize..20) {
            let t = ImageTensor::filled(Shape::new(h, w, 2), v);
            let r = bilinear_resize(&t, oh, ow).unwrap();
            prop_assert!(r.data().iter().all(|&x| x == v));
            let back = bilinear_resize(&bilinear_resize(&t, 2 * h, 2 * w).unwrap(), h, w).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn output_within_input_range(
            data in prop::collection::vec(-3.0f64..3.0, 36),
            oh in 1usize..15, ow in 1usize..15,
        ) {
            let t = ImageTensor::new(Shape::new(6, 6, 1), data).unwrap();
            let r = bilinear_resize(&t, oh, ow).unwrap();
            prop_assert!(r.min_value() >= t.min_value());
            prop_assert!(r.max_value() <= t.max_value());
        }

        // <A x, y> = <x, A^T y>
        #[test]
        fn adjoint_matches_inner_product(
            x in prop::collection::vec(-1.0f64..1.0, 5 * 4 * 2),
            y in prop::collection::vec(-1.0f64..1.0, 9 * 3 * 2),
        ) {
            let map = ResizeMap::<f64>::new(5, 4, 9, 3).unwrap();
            let xt = ImageTensor::new(Shape::new(5, 4, 2), x).unwrap();
            let yt = ImageTensor::new(Shape::new(9, 3, 2), y).unwrap();
            let ax = map.apply(&xt).unwrap();
            let aty = map.adjoint(&yt).unwrap();
            let lhs: f64 = ax.data().iter().zip(yt.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = xt.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
