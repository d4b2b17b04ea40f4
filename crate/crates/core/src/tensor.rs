//! Dense H×W×C image tensors and the elementwise / geometric primitives the
//! attacks are built from.
//!
//! Data is stored row-major in H→W→C order, so the channel index varies
//! fastest. The same container carries pixel-valued images (range `[0, 1]`),
//! input gradients and perturbations.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// Square image of side `side`.
    pub const fn square(side: usize, channels: usize) -> Self {
        Self::new(side, side, channels)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        assert!(!shape.is_empty(), "tensor dimensions must be positive");
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, T::zero())
    }

    /// Builds a tensor by evaluating `f(y, x, c)` at every element.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(!shape.is_empty(), "tensor dimensions must be positive");
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.shape.index(y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: T) {
        let i = self.shape.index(y, x, c);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_shape(other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        self.expect_shape(other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn expect_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.shape,
            });
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn l1_norm(&self) -> T {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn linf_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Errors on the first NaN or infinite element.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// True when every element lies in `[0, 1]`.
    pub fn is_pixel_valued(&self) -> bool {
        self.data
            .iter()
            .all(|&v| v >= T::zero() && v <= T::one())
    }

    /// Element type conversion (e.g. `f32` file payloads into `f64` math).
    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Elementwise sign with `sign(0) = 0`. NaN input signals a corrupt gradient.
pub fn sign<T: Scalar>(t: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    if let Some(index) = t.data().iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite { index });
    }
    Ok(t.map(sign_scalar))
}

#[inline]
pub(crate) fn sign_scalar<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Pads with `fill`, placing the original at offset `(top, left)`.
pub fn pad<T: Scalar>(
    t: &ImageTensor<T>,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
    fill: T,
) -> ImageTensor<T> {
    let s = t.shape();
    let out_shape = Shape::new(s.height + top + bottom, s.width + left + right, s.channels);
    let mut out = ImageTensor::filled(out_shape, fill);
    let row = s.width * s.channels;
    for y in 0..s.height {
        let src = s.index(y, 0, 0);
        let dst = out_shape.index(y + top, left, 0);
        out.data[dst..dst + row].copy_from_slice(&t.data[src..src + row]);
    }
    out
}

/// Extracts the `height × width` window at `(top, left)`. This is the adjoint
/// of zero padding.
pub fn crop<T: Scalar>(
    t: &ImageTensor<T>,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
) -> Result<ImageTensor<T>> {
    let s = t.shape();
    if top + height > s.height || left + width > s.width || height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "crop {height}x{width} at ({top},{left}) outside {s}"
        )));
    }
    let out_shape = Shape::new(height, width, s.channels);
    let row = width * s.channels;
    let mut data = Vec::with_capacity(out_shape.len());
    for y in 0..height {
        let src = s.index(y + top, left, 0);
        data.extend_from_slice(&t.data[src..src + row]);
    }
    ImageTensor::new(out_shape, data)
}

/// Projects `x` onto `{v : |v − x_ref| ≤ eps} ∩ [lo, hi]` elementwise.
pub fn clip_to_ball<T: Scalar>(
    x: &ImageTensor<T>,
    x_ref: &ImageTensor<T>,
    eps: T,
    lo: T,
    hi: T,
) -> Result<ImageTensor<T>> {
    x_ref.expect_shape(x.shape())?;
    if eps < T::zero() || !(lo < hi) {
        return Err(Error::InvalidArgument(format!(
            "clip_to_ball needs eps >= 0 and lo < hi (eps={eps}, lo={lo}, hi={hi})"
        )));
    }
    x.zip_map(x_ref, |v, r| {
        let lower = lo.max(r - eps);
        let upper = hi.min(r + eps);
        v.max(lower).min(upper)
    })
}

/// Square 2-D weight window of odd or even side, applied depthwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d<T> {
    side: usize,
    weights: Vec<T>,
}

impl<T: Scalar> Kernel2d<T> {
    pub fn new(side: usize, weights: Vec<T>) -> Result<Self> {
        if side == 0 || weights.len() != side * side {
            return Err(Error::InvalidArgument(format!(
                "kernel of side {side} needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        Ok(Self { side, weights })
    }

    /// The 1×1 identity kernel.
    pub fn delta() -> Self {
        Self {
            side: 1,
            weights: vec![T::one()],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn radius(&self) -> usize {
        self.side / 2
    }

    /// Weight at row `i`, column `j`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.side + j]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }
}

impl<T> AsRef<Kernel2d<T>> for Kernel2d<T> {
    fn as_ref(&self) -> &Kernel2d<T> {
        self
    }
}

/// Depthwise "same" cross-correlation with zero padding outside the borders:
/// `out[y][x][c] = Σ_ij K[i][j] · t[y+i−r][x+j−r][c]`.
pub fn conv2d_same<T: Scalar, K: AsRef<Kernel2d<T>>>(
    t: &ImageTensor<T>,
    kernel: &K,
) -> Result<ImageTensor<T>> {
    let k = kernel.as_ref();
    if k.side % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "convolution kernel side must be odd, got {}",
            k.side
        )));
    }
    let s = t.shape();
    let r = k.radius() as isize;
    let (h, w, ch) = (s.height as isize, s.width as isize, s.channels);
    let mut out = ImageTensor::zeros(s);
    for y in 0..h {
        for x in 0..w {
            let dst = s.index(y as usize, x as usize, 0);
            for ki in 0..k.side {
                let sy = y + ki as isize - r;
                if sy < 0 || sy >= h {
                    continue;
                }
                for kj in 0..k.side {
                    let sx = x + kj as isize - r;
                    if sx < 0 || sx >= w {
                        continue;
                    }
                    let wgt = k.weight(ki, kj);
                    let src = s.index(sy as usize, sx as usize, 0);
                    for c in 0..ch {
                        out.data[dst + c] += wgt * t.data[src + c];
                    }
                }
            }
        }
    }
    Ok(out)
}
