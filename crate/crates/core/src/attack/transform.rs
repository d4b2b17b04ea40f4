//! Random resize-and-pad input transforms and their adjoints.
//!
//! A transform is drawn once as a *plan* (the random sizes and offsets) and
//! then applied to the image and, transposed, to the gradient. Both resizes
//! and the zero padding are linear maps, so the adjoint is exact.

use crate::error::{Error, Result};
use crate::resize::ResizeMap;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{crop, pad, ImageTensor};

fn square_side<T: Scalar>(x: &ImageTensor<T>) -> Result<usize> {
    if x.height() != x.width() {
        return Err(Error::InvalidArgument(format!(
            "diversity transforms need square images, got {}",
            x.shape()
        )));
    }
    Ok(x.height())
}

/// Random rescale to `size × size` and placement at `(top, left)` on a zero
/// canvas of side `canvas`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PadPlan {
    pub source: usize,
    pub size: usize,
    pub canvas: usize,
    pub top: usize,
    pub left: usize,
}

impl PadPlan {
    /// Draws `size ~ U[source, canvas)`, then `top`, `left ~ U[0, canvas − size)`,
    /// in that order.
    pub fn draw(source: usize, canvas: usize, rng: &mut Rng) -> Result<Self> {
        if canvas < source {
            return Err(Error::InvalidArgument(format!(
                "diversity scale {canvas} is smaller than the input side {source}"
            )));
        }
        let size = rng.uniform_usize(source, canvas)?;
        let room = canvas - size;
        let top = rng.uniform_usize(0, room)?;
        let left = rng.uniform_usize(0, room)?;
        Ok(Self {
            source,
            size,
            canvas,
            top,
            left,
        })
    }

    fn margins(&self) -> (usize, usize, usize, usize) {
        let room = self.canvas - self.size;
        (self.top, room - self.top, self.left, room - self.left)
    }

    /// `source × source` → `canvas × canvas`.
    pub fn apply<T: Scalar>(&self, x: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        let s = square_side(x)?;
        if s != self.source {
            return Err(Error::InvalidArgument(format!(
                "plan drawn for side {} applied to side {s}",
                self.source
            )));
        }
        let resized = ResizeMap::new(s, s, self.size, self.size)?.apply(x)?;
        let (t, b, l, r) = self.margins();
        Ok(pad(&resized, t, b, l, r, T::zero()))
    }

    /// `canvas × canvas` gradient → `source × source`.
    pub fn adjoint<T: Scalar>(&self, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        let inner = crop(g, self.top, self.left, self.size, self.size)?;
        ResizeMap::new(self.source, self.source, self.size, self.size)?.adjoint(&inner)
    }
}

/// One draw of the resized-diverse-inputs transform: pad plan followed by a
/// resize of the canvas back to the input side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RdimPlan {
    pub pad: PadPlan,
}

impl RdimPlan {
    pub fn draw(source: usize, canvas: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            pad: PadPlan::draw(source, canvas, rng)?,
        })
    }

    /// True when the canvas equals the input side; the transform is then the
    /// identity.
    pub fn is_identity(&self) -> bool {
        self.pad.canvas == self.pad.source
    }

    pub fn apply<T: Scalar>(&self, x: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        let padded = self.pad.apply(x)?;
        let s = self.pad.source;
        ResizeMap::new(self.pad.canvas, self.pad.canvas, s, s)?.apply(&padded)
    }

    pub fn adjoint<T: Scalar>(&self, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        if self.is_identity() {
            return Ok(g.clone());
        }
        let s = self.pad.source;
        let canvas_grad = ResizeMap::new(self.pad.canvas, self.pad.canvas, s, s)?.adjoint(g)?;
        self.pad.adjoint(&canvas_grad)
    }
}

/// Resized-diverse-inputs transform of a square `S × S` image with diversity
/// scale `S1 ≥ S`. Always applied; the output has the input's shape.
pub fn rdim_transform<T: Scalar>(x: &ImageTensor<T>, s1: usize, rng: &mut Rng) -> Result<ImageTensor<T>> {
    let s = square_side(x)?;
    RdimPlan::draw(s, s1, rng)?.apply(x)
}

/// Outcome of the probability gate of the diverse-inputs transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DimPlan {
    Untouched,
    Padded(PadPlan),
}

impl DimPlan {
    /// One uniform draw for the gate, then (if it fires) the pad plan.
    pub fn draw(source: usize, canvas: usize, p: f64, rng: &mut Rng) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "transform probability must lie in [0, 1], got {p}"
            )));
        }
        if canvas < source {
            return Err(Error::InvalidArgument(format!(
                "diversity scale {canvas} is smaller than the input side {source}"
            )));
        }
        if rng.next_f64() < p {
            Ok(DimPlan::Padded(PadPlan::draw(source, canvas, rng)?))
        } else {
            Ok(DimPlan::Untouched)
        }
    }

    pub fn apply<T: Scalar>(&self, x: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        match self {
            DimPlan::Untouched => Ok(x.clone()),
            DimPlan::Padded(plan) => plan.apply(x),
        }
    }

    pub fn adjoint<T: Scalar>(&self, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        match self {
            DimPlan::Untouched => Ok(g.clone()),
            DimPlan::Padded(plan) => plan.adjoint(g),
        }
    }
}

/// Diverse-inputs transform: with probability `p` the image is rescaled and
/// padded onto an `S1 × S1` canvas (not resized back); otherwise returned
/// unchanged.
pub fn dim_transform<T: Scalar>(x: &ImageTensor<T>, p: f64, s1: usize, rng: &mut Rng) -> Result<ImageTensor<T>> {
    let s = square_side(x)?;
    DimPlan::draw(s, s1, p, rng)?.apply(x)
}

/// A drawn transform as seen by a model with `S × S` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformPlan {
    Identity,
    Rdim(RdimPlan),
    /// Diverse-inputs draw; padded canvases are resized back to `S` so
    /// fixed-input models can consume them.
    Dim(DimPlan),
}

impl TransformPlan {
    pub fn apply<T: Scalar>(&self, x: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        match self {
            TransformPlan::Identity => Ok(x.clone()),
            TransformPlan::Rdim(p) => p.apply(x),
            TransformPlan::Dim(DimPlan::Untouched) => Ok(x.clone()),
            TransformPlan::Dim(DimPlan::Padded(p)) => {
                let canvas = p.apply(x)?;
                ResizeMap::new(p.canvas, p.canvas, p.source, p.source)?.apply(&canvas)
            }
        }
    }

    pub fn adjoint<T: Scalar>(&self, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
        match self {
            TransformPlan::Identity => Ok(g.clone()),
            TransformPlan::Rdim(p) => p.adjoint(g),
            TransformPlan::Dim(DimPlan::Untouched) => Ok(g.clone()),
            TransformPlan::Dim(DimPlan::Padded(p)) => {
                let canvas_grad = ResizeMap::new(p.canvas, p.canvas, p.source, p.source)?.adjoint(g)?;
                p.adjoint(&canvas_grad)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn image(side: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = Rng::new(seed);
        ImageTensor::from_fn(Shape::square(side, 2), |_, _, _| rng.next_f64())
    }

    #[test]
    fn rdim_with_equal_scale_is_identity() {
        let x = image(28, 1);
        let mut rng = Rng::new(9);
        assert_eq!(rdim_transform(&x, 28, &mut rng).unwrap(), x);
        // no randomness consumed
        assert_eq!(rng.next_u64(), Rng::new(9).next_u64());
    }

    #[test]
    fn rdim_keeps_shape() {
        let x = image(28, 2);
        let mut rng = Rng::new(0);
        for s1 in [29, 32, 40, 47, 60] {
            assert_eq!(rdim_transform(&x, s1, &mut rng).unwrap().shape(), x.shape());
        }
    }

    #[test]
    fn rdim_rejects_small_scale() {
        assert!(rdim_transform(&image(28, 0), 27, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn plan_ranges() {
        let mut rng = Rng::new(4);
        for _ in 0..500 {
            let p = PadPlan::draw(28, 47, &mut rng).unwrap();
            assert!((28..47).contains(&p.size));
            assert!(p.top < 47 - p.size && p.left < 47 - p.size);
        }
    }

    #[test]
    fn dim_probability_gate() {
        let x = image(12, 3);
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            assert_eq!(dim_transform(&x, 0.0, 16, &mut rng).unwrap(), x);
            assert_eq!(dim_transform(&x, 1.0, 16, &mut rng).unwrap().height(), 16);
        }
        assert!(dim_transform(&x, 1.5, 16, &mut rng).is_err());
        assert!(dim_transform(&x, -0.1, 16, &mut rng).is_err());
    }

    #[test]
    fn dim_half_probability_fraction() {
        let mut rng = Rng::new(77);
        let n = 10_000;
        let fired = (0..n)
            .filter(|_| matches!(DimPlan::draw(12, 16, 0.5, &mut rng).unwrap(), DimPlan::Padded(_)))
            .count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((fired as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    fn dot(a: &ImageTensor<f64>, b: &ImageTensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(u, v)| u * v).sum()
    }

    proptest! {
        // <T x, y> = <x, T^T y> for every transform plan
        #[test]
        fn adjoints_are_transposes(seed in any::<u64>(), s1 in 10usize..24) {
            let mut rng = Rng::new(seed);
            let x = image(10, seed ^ 1);
            let plans = [
                TransformPlan::Rdim(RdimPlan::draw(10, s1, &mut rng).unwrap()),
                TransformPlan::Dim(DimPlan::draw(10, s1, 1.0, &mut rng).unwrap()),
            ];
            for plan in plans {
                let tx = plan.apply(&x).unwrap();
                let y = image(10, seed ^ 2);
                let lhs = dot(&tx, &y);
                let rhs = dot(&x, &plan.adjoint(&y).unwrap());
                prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
            }
            let pad_plan = PadPlan::draw(10, s1, &mut rng).unwrap();
            let canvas = pad_plan.apply(&x).unwrap();
            let y = ImageTensor::from_fn(canvas.shape(), |a, b, c| ((a * 7 + b * 3 + c) as f64).sin());
            prop_assert!((dot(&canvas, &y) - dot(&x, &pad_plan.adjoint(&y).unwrap())).abs() < 1e-10);
        }

        #[test]
        fn pixel_range_preserved(seed in any::<u64>(), s1 in 28usize..48) {
            let x = image(28, seed);
            let out = rdim_transform(&x, s1, &mut Rng::new(seed)).unwrap();
            prop_assert!(out.is_pixel_valued());
        }
    }
}
