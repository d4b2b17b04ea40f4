//! Update rules of the sign-gradient attack family.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{clip_to_ball, sign_scalar, ImageTensor};

/// Below this L1 norm a gradient is treated as zero by [`momentum_update`].
pub const ZERO_GRADIENT_L1: f64 = 1e-12;

/// `μ·g_prev + grad / ‖grad‖₁`. When `‖grad‖₁` is below
/// [`ZERO_GRADIENT_L1`] the normalized term is dropped, leaving `μ·g_prev`.
pub fn momentum_update<T: Scalar>(g_prev: &ImageTensor<T>, grad: &ImageTensor<T>, mu: T) -> Result<ImageTensor<T>> {
    let l1 = grad.l1_norm();
    if l1 < T::of(ZERO_GRADIENT_L1) {
        g_prev.zip_map(grad, |g, _| mu * g)
    } else {
        g_prev.zip_map(grad, |g, d| mu * g + d / l1)
    }
}

/// Look-ahead evaluation point `x_adv + α·μ·g`. Not projected.
pub fn nesterov_lookahead<T: Scalar>(x_adv: &ImageTensor<T>, alpha: T, mu: T, g: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    let scale = alpha * mu;
    x_adv.zip_map(g, |x, d| x + scale * d)
}

fn signed_step<T: Scalar>(
    x_t: &ImageTensor<T>,
    g: &ImageTensor<T>,
    size: T,
    x0: &ImageTensor<T>,
    eps: T,
) -> Result<ImageTensor<T>> {
    let moved = x_t.zip_map(g, |x, d| x + size * sign_scalar(d))?;
    clip_to_ball(&moved, x0, eps, T::zero(), T::one())
}

/// Value fitting: `Clip{x_t + α·sign(g)}` onto the ε-ball around `x0` ∩ `[0, 1]`.
pub fn step_value_fitting<T: Scalar>(
    x_t: &ImageTensor<T>,
    g: &ImageTensor<T>,
    alpha: T,
    x0: &ImageTensor<T>,
    eps: T,
) -> Result<ImageTensor<T>> {
    signed_step(x_t, g, alpha, x0, eps)
}

/// Region fitting: the full budget every iteration, `Clip{x_t + ε·sign(g)}`.
pub fn step_region_fitting<T: Scalar>(
    g: &ImageTensor<T>,
    eps: T,
    x0: &ImageTensor<T>,
    x_t: &ImageTensor<T>,
) -> Result<ImageTensor<T>> {
    signed_step(x_t, g, eps, x0, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Shape;
    use proptest::prelude::*;

    fn random(shape: Shape, seed: u64, lo: f64, hi: f64) -> ImageTensor<f64> {
        let mut rng = Rng::new(seed);
        ImageTensor::from_fn(shape, |_, _, _| lo + (hi - lo) * rng.next_f64())
    }

    #[test]
    fn momentum_reductions() {
        let s = Shape::new(3, 3, 2);
        let g_prev = random(s, 1, -1.0, 1.0);
        let grad = random(s, 2, -1.0, 1.0);
        let l1 = grad.l1_norm();
        let m0 = momentum_update(&g_prev, &grad, 0.0).unwrap();
        for (a, b) in m0.data().iter().zip(grad.data()) {
            assert_eq!(*a, b / l1);
        }
        let zero = ImageTensor::zeros(s);
        assert_eq!(momentum_update(&g_prev, &zero, 1.0).unwrap(), g_prev);
    }

    #[test]
    fn nesterov_reductions() {
        let s = Shape::new(2, 2, 1);
        let x = random(s, 3, 0.0, 1.0);
        let g = random(s, 4, -1.0, 1.0);
        assert_eq!(nesterov_lookahead(&x, 0.1, 0.0, &g).unwrap(), x);
        assert_eq!(nesterov_lookahead(&x, 0.1, 1.0, &ImageTensor::zeros(s)).unwrap(), x);
        let out = nesterov_lookahead(&ImageTensor::zeros(s), 0.1, 1.0, &ImageTensor::filled(s, 1.0)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.1));
    }

    #[test]
    fn zero_gradient_steps_only_project() {
        let s = Shape::new(2, 2, 1);
        let x0 = ImageTensor::filled(s, 0.5);
        let x_t = ImageTensor::filled(s, 0.55);
        let zero = ImageTensor::zeros(s);
        assert_eq!(step_value_fitting(&x_t, &zero, 0.01, &x0, 0.1).unwrap(), x_t);
        assert_eq!(step_region_fitting(&zero, 0.1, &x0, &x_t).unwrap(), x_t);
        let far = ImageTensor::filled(s, 0.9);
        let projected = step_region_fitting(&zero, 0.1, &x0, &far).unwrap();
        assert!(projected.data().iter().all(|&v| v == 0.5 + 0.1));
    }

    #[test]
    fn value_fitting_accumulates_to_eps() {
        let s = Shape::new(4, 4, 1);
        let x0 = random(s, 5, 0.2, 0.8);
        let eps = 16.0 / 255.0;
        let steps = 10;
        let alpha = eps / steps as f64;
        let g = ImageTensor::filled(s, 1.0);
        let mut x = x0.clone();
        for _ in 0..steps {
            x = step_value_fitting(&x, &g, alpha, &x0, eps).unwrap();
        }
        for (a, b) in x.data().iter().zip(x0.data()) {
            assert!(((a - b) - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn region_fitting_first_step_and_sign_flip() {
        // 2x2 interior instance: x0 in [eps, 1-eps]
        let s = Shape::new(2, 2, 1);
        let x0 = ImageTensor::new(s, vec![0.3, 0.4, 0.5, 0.6]).unwrap();
        let eps = 0.1;
        let g = ImageTensor::new(s, vec![1.0, -2.0, 0.5, -0.1]).unwrap();
        let x1 = step_region_fitting(&g, eps, &x0, &x0).unwrap();
        let d1: Vec<f64> = x1.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
        for (d, e) in d1.iter().zip([0.1, -0.1, 0.1, -0.1]) {
            assert!((d - e).abs() < 1e-12);
        }
        // flipped gradient: a step from X_t lands on the clean pixel, the next
        // one reaches the opposite face
        let flipped = g.map(|v| -v);
        let x2 = step_region_fitting(&flipped, eps, &x0, &x1).unwrap();
        for (a, b) in x2.data().iter().zip(x0.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let x3 = step_region_fitting(&flipped, eps, &x0, &x2).unwrap();
        let d3: Vec<f64> = x3.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
        for (d, e) in d3.iter().zip([-0.1, 0.1, -0.1, 0.1]) {
            assert!((d - e).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn steps_stay_feasible(seed in any::<u64>(), eps in 0.0f64..0.2, alpha in 0.001f64..0.3) {
            let s = Shape::new(3, 4, 2);
            let x0 = random(s, seed, 0.0, 1.0);
            let x_t = random(s, seed ^ 7, -0.2, 1.2);
            let g = random(s, seed ^ 9, -1.0, 1.0);
            for out in [
                step_value_fitting(&x_t, &g, alpha, &x0, eps).unwrap(),
                step_region_fitting(&g, eps, &x0, &x_t).unwrap(),
            ] {
                for (v, r) in out.data().iter().zip(x0.data()) {
                    prop_assert!((v - r).abs() <= eps + 1e-12);
                    prop_assert!((0.0..=1.0).contains(v));
                }
            }
        }

        #[test]
        fn normalized_term_has_unit_l1(seed in any::<u64>()) {
            let s = Shape::new(3, 3, 1);
            let grad = random(s, seed, -1.0, 1.0);
            let m = momentum_update(&ImageTensor::zeros(s), &grad, 1.0).unwrap();
            prop_assert!((m.l1_norm() - 1.0).abs() < 1e-12);
        }
    }
}
