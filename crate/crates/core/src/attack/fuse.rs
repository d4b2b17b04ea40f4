//! Logit fusion across diversity scales and across models, and the input
//! gradient of the cross-entropy of the fused logits.

use super::transform::{RdimPlan, TransformPlan};
use crate::error::{Error, Result};
use crate::model::{softmax_cross_entropy, Classifier, Trace};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

/// Fusion weights must be non-negative and sum to one.
pub fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Config("fusion needs at least one weight".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!("fusion weights must be non-negative: {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("fusion weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn check_models<T: Scalar>(models: &[&dyn Classifier<T>], weights: &[f64]) -> Result<()> {
    let first = models
        .first()
        .ok_or_else(|| Error::Config("at least one model is required".into()))?;
    if models.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} models but {} ensemble weights",
            models.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    for m in &models[1..] {
        if m.num_classes() != first.num_classes() {
            return Err(Error::Config(format!(
                "ensemble members disagree on class count ({} vs {})",
                m.num_classes(),
                first.num_classes()
            )));
        }
        if m.input_shape() != first.input_shape() {
            return Err(Error::Config(format!(
                "ensemble members disagree on input shape ({} vs {})",
                m.input_shape(),
                first.input_shape()
            )));
        }
    }
    Ok(())
}

fn accumulate<T: Scalar>(acc: &mut [T], logits: &[T], w: T) {
    for (a, &l) in acc.iter_mut().zip(logits) {
        *a += w * l;
    }
}

/// `Σ_m w_m · logits(model_m, x)`.
pub fn ensemble_logits<T: Scalar>(
    models: &[&dyn Classifier<T>],
    weights: &[f64],
    x: &ImageTensor<T>,
) -> Result<Vec<T>> {
    check_models(models, weights)?;
    let mut fused = vec![T::zero(); models[0].num_classes()];
    for (m, &w) in models.iter().zip(weights) {
        accumulate(&mut fused, &m.logits(x)?, T::of(w));
    }
    Ok(fused)
}

/// `Σ_k ω_k · logits(model, T(x, S_k))` with a fresh resized-diverse-inputs
/// draw per scale, consumed from `rng` in scale order.
pub fn dem_fused_logits<T: Scalar>(
    model: &dyn Classifier<T>,
    x: &ImageTensor<T>,
    scales: &[usize],
    weights: &[f64],
    rng: &mut Rng,
) -> Result<Vec<T>> {
    if scales.is_empty() {
        return Err(Error::Config("diversity ensemble needs at least one scale".into()));
    }
    if scales.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} scales but {} weights",
            scales.len(),
            weights.len()
        )));
    }
    check_weights(weights)?;
    let side = x.height();
    let mut fused = vec![T::zero(); model.num_classes()];
    for (&s1, &w) in scales.iter().zip(weights) {
        let plan = RdimPlan::draw(side, s1, rng)?;
        accumulate(&mut fused, &model.logits(&plan.apply(x)?)?, T::of(w));
    }
    Ok(fused)
}

/// Fused logits, their cross-entropy loss and its gradient with respect to
/// the untransformed input.
#[derive(Clone, Debug)]
pub struct FusedEval<T> {
    pub logits: Vec<T>,
    pub loss: T,
    pub grad: ImageTensor<T>,
}

/// Evaluates `J(Σ_k ω_k Σ_m w_m · logits_m(T_k(x)), y)` and back-propagates
/// through every model and every transform plan.
pub fn fused_loss_and_gradient<T: Scalar>(
    models: &[&dyn Classifier<T>],
    model_weights: &[f64],
    x: &ImageTensor<T>,
    plans: &[TransformPlan],
    plan_weights: &[f64],
    y: usize,
) -> Result<FusedEval<T>> {
    check_models(models, model_weights)?;
    if plans.is_empty() || plans.len() != plan_weights.len() {
        return Err(Error::Config(format!(
            "{} transform plans but {} weights",
            plans.len(),
            plan_weights.len()
        )));
    }
    let classes = models[0].num_classes();
    let mut fused = vec![T::zero(); classes];
    let mut traces: Vec<Vec<Trace<T>>> = Vec::with_capacity(plans.len());
    for (plan, &wk) in plans.iter().zip(plan_weights) {
        let xk = plan.apply(x)?;
        let mut per_model = Vec::with_capacity(models.len());
        for (m, &wm) in models.iter().zip(model_weights) {
            let trace = m.forward(&xk)?;
            accumulate(&mut fused, &trace.logits, T::of(wk * wm));
            per_model.push(trace);
        }
        traces.push(per_model);
    }

    let (loss, upstream) = softmax_cross_entropy(&fused, y)?;
    let mut grad = ImageTensor::zeros(x.shape());
    for ((plan, &wk), per_model) in plans.iter().zip(plan_weights).zip(&traces) {
        let mut gk: Option<ImageTensor<T>> = None;
        for ((m, &wm), trace) in models.iter().zip(model_weights).zip(per_model) {
            let scaled: Vec<T> = upstream.iter().map(|&u| u * T::of(wk * wm)).collect();
            let g = m.backward(trace, &scaled);
            match gk.as_mut() {
                Some(acc) => acc.add_scaled(&g, T::one())?,
                None => gk = Some(g),
            }
        }
        let gk = gk.expect("at least one model");
        grad.add_scaled(&plan.adjoint(&gk)?, T::one())?;
    }
    Ok(FusedEval {
        logits: fused,
        loss,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearSoftmax;
    use crate::tensor::Shape;

    fn linear(seed: u64) -> LinearSoftmax<f64> {
        let mut rng = Rng::new(seed);
        let s = Shape::square(6, 1);
        let w = (0..3 * s.len()).map(|_| rng.normal() * 0.3).collect();
        let b = (0..3).map(|_| rng.normal() * 0.1).collect();
        LinearSoftmax::new(s, w, b).unwrap()
    }

    fn input() -> ImageTensor<f64> {
        ImageTensor::from_fn(Shape::square(6, 1), |y, x, _| ((y * 6 + x) as f64 * 0.37).sin() * 0.5 + 0.5)
    }

    #[test]
    fn weight_validation() {
        assert!(check_weights(&[0.5, 0.5]).is_ok());
        assert!(check_weights(&[]).is_err());
        assert!(check_weights(&[0.7, 0.7]).is_err());
        assert!(check_weights(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn single_scale_at_input_size_is_plain_logits() {
        let m = linear(1);
        let x = input();
        let plain = m.logits(&x).unwrap();
        let mut rng = Rng::new(0);
        assert_eq!(dem_fused_logits(&m, &x, &[6], &[1.0], &mut rng).unwrap(), plain);
        let two = dem_fused_logits(&m, &x, &[6, 6], &[0.5, 0.5], &mut rng).unwrap();
        for (a, b) in two.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(dem_fused_logits(&m, &x, &[], &[], &mut rng).is_err());
    }

    #[test]
    fn ensemble_reductions() {
        let (a, b) = (linear(1), linear(2));
        let x = input();
        let one = ensemble_logits(&[&a], &[1.0], &x).unwrap();
        assert_eq!(one, a.logits(&x).unwrap());
        let twin = ensemble_logits(&[&a, &a], &[0.5, 0.5], &x).unwrap();
        for (u, v) in twin.iter().zip(&one) {
            assert!((u - v).abs() < 1e-15);
        }
        // averaging two linear models is the linear model with averaged parameters
        let avg_w: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(p, q)| (p + q) / 2.0).collect();
        let avg_b: Vec<f64> = a.bias().iter().zip(b.bias()).map(|(p, q)| (p + q) / 2.0).collect();
        let avg = LinearSoftmax::new(Shape::square(6, 1), avg_w, avg_b).unwrap();
        let fused = ensemble_logits(&[&a, &b], &[0.5, 0.5], &x).unwrap();
        for (u, v) in fused.iter().zip(avg.logits(&x).unwrap()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_rejects_mismatched_classes() {
        let a = linear(1);
        let b = LinearSoftmax::<f64>::zeros(Shape::square(6, 1), 4);
        assert!(ensemble_logits(&[&a, &b], &[0.5, 0.5], &input()).is_err());
    }

    #[test]
    fn identity_plan_matches_direct_gradient() {
        let m = linear(3);
        let x = input();
        let eval = fused_loss_and_gradient(&[&m], &[1.0], &x, &[TransformPlan::Identity], &[1.0], 2).unwrap();
        let (loss, grad) = m.loss_and_input_gradient(&x, 2).unwrap();
        assert_eq!(eval.loss, loss);
        assert_eq!(eval.grad, grad);
    }
}
