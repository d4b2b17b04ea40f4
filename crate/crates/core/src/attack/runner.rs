//! The configurable iterative attack.
//!
//! Each iteration runs, in this order: optional Nesterov look-ahead, fused
//! logits over diversity scales and models, the loss gradient with respect to
//! the untransformed input, optional Gaussian blur of the gradient, optional
//! momentum accumulation, and a value- or region-fitting signed step.
//! Toggling these stages reproduces FGSM, I-FGSM, MI-FGSM, NI-FGSM, the
//! diverse-input and translation-invariant variants, and the full
//! region-fitting diversity-ensemble pipeline.

use super::config::{AttackConfig, TransformKind};
use super::fuse::fused_loss_and_gradient;
use super::kernel::{make_gaussian_kernel, GaussianKernel};
use super::step::{momentum_update, nesterov_lookahead, step_region_fitting, step_value_fitting};
use super::transform::{DimPlan, RdimPlan, TransformPlan};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{conv2d_same, ImageTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Cross-entropy of the fused logits at the evaluation point.
    pub loss: f64,
    /// L1 norm of the raw (unblurred) input gradient.
    pub grad_l1: f64,
    /// ‖X_{t+1} − X‖∞ after the step.
    pub linf: f64,
}

#[derive(Clone, Debug)]
pub struct AttackTrace<T> {
    pub eps: f64,
    pub origin: ImageTensor<T>,
    pub records: Vec<IterationRecord>,
    /// `X_1 … X_T` when snapshots were requested.
    pub snapshots: Vec<ImageTensor<T>>,
}

impl<T: Scalar> AttackTrace<T> {
    /// Perturbation `X_t − X` of snapshot `t` (0-based).
    pub fn perturbation(&self, t: usize) -> Result<ImageTensor<T>> {
        let snap = self
            .snapshots
            .get(t)
            .ok_or_else(|| Error::InvalidArgument(format!("no snapshot for iteration {t}")))?;
        snap.zip_map(&self.origin, |a, b| a - b)
    }
}

#[derive(Clone, Debug)]
pub struct AttackOutput<T> {
    pub adversarial: ImageTensor<T>,
    pub trace: AttackTrace<T>,
}

/// Draws the transform plans for one iteration. Scales are drawn in order,
/// each from the same generator.
pub fn draw_plans(cfg: &AttackConfig, side: usize, rng: &mut Rng) -> Result<Vec<TransformPlan>> {
    match cfg.transform {
        TransformKind::None => Ok(vec![TransformPlan::Identity]),
        TransformKind::Rdim => cfg
            .diversity_scales
            .iter()
            .map(|&s1| RdimPlan::draw(side, s1, rng).map(TransformPlan::Rdim))
            .collect(),
        TransformKind::Dim => cfg
            .diversity_scales
            .iter()
            .map(|&s1| DimPlan::draw(side, s1, cfg.dim_prob, rng).map(TransformPlan::Dim))
            .collect(),
    }
}

fn plan_weights(cfg: &AttackConfig) -> Vec<f64> {
    match cfg.transform {
        TransformKind::None => vec![1.0],
        _ => cfg.resolved_weights(),
    }
}

/// Crafts an adversarial example for `x` against the weighted model
/// ensemble. `y` is the true label, or the target label when
/// `cfg.targeted` is set.
pub fn run_attack<T: Scalar>(
    models: &[&dyn Classifier<T>],
    weights: &[f64],
    x: &ImageTensor<T>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutput<T>> {
    let first = models.first().ok_or_else(|| Error::Config("no source model".into()))?;
    let shape = first.input_shape();
    if shape.height != shape.width && cfg.transform != TransformKind::None {
        return Err(Error::Config(format!("diversity transforms need square inputs, model takes {shape}")));
    }
    cfg.validate(Some(shape.height))?;
    x.expect_shape(shape)?;
    x.check_finite()?;
    if y >= first.num_classes() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: first.num_classes(),
        });
    }
    let kernel: Option<GaussianKernel<T>> = match cfg.kernel.resolved() {
        Some((size, sigma)) => Some(make_gaussian_kernel(size, sigma)?),
        None => None,
    };
    let pw = plan_weights(cfg);
    let eps = T::of(cfg.eps);
    let alpha = T::of(cfg.step_size());
    let mu = T::of(cfg.mu);

    let mut rng = Rng::new(cfg.seed);
    let mut x_adv = x.clone();
    let mut g = ImageTensor::zeros(shape);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::new();

    for _ in 0..cfg.iterations {
        let eval_point = if cfg.nesterov {
            nesterov_lookahead(&x_adv, alpha, mu, &g)?
        } else {
            x_adv.clone()
        };
        let plans = draw_plans(cfg, shape.height, &mut rng)?;
        let fused = fused_loss_and_gradient(models, weights, &eval_point, &plans, &pw, y)?;
        fused.grad.check_finite()?;
        let grad_l1 = fused.grad.l1_norm().as_f64();

        let smoothed = match &kernel {
            Some(k) => conv2d_same(&fused.grad, k)?,
            None => fused.grad,
        };
        let mut direction = if cfg.momentum {
            g = momentum_update(&g, &smoothed, mu)?;
            g.clone()
        } else {
            smoothed
        };
        if cfg.targeted {
            direction = direction.map(|v| -v);
        }
        x_adv = if cfg.region_fitting {
            step_region_fitting(&direction, eps, x, &x_adv)?
        } else {
            step_value_fitting(&x_adv, &direction, alpha, x, eps)?
        };

        let linf = x_adv.zip_map(x, |a, b| a - b)?.linf_norm().as_f64();
        records.push(IterationRecord {
            loss: fused.loss.as_f64(),
            grad_l1,
            linf,
        });
        if cfg.record_snapshots {
            snapshots.push(x_adv.clone());
        }
    }

    Ok(AttackOutput {
        adversarial: x_adv,
        trace: AttackTrace {
            eps: cfg.eps,
            origin: x.clone(),
            records,
            snapshots,
        },
    })
}

/// Single-model convenience wrapper around [`run_attack`].
pub fn attack_single<T: Scalar>(
    model: &dyn Classifier<T>,
    x: &ImageTensor<T>,
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackOutput<T>> {
    run_attack(&[model], &[1.0], x, y, cfg)
}
