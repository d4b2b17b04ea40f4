//! The sign-gradient attack family and its building blocks.

pub mod config;
pub mod fuse;
pub mod kernel;
pub mod runner;
pub mod step;
pub mod transform;

pub use config::{dem_scales, scale_for, AttackConfig, KernelSpec, PresetParams, TransformKind, PRESET_NAMES};
pub use fuse::{dem_fused_logits, ensemble_logits, fused_loss_and_gradient, FusedEval};
pub use kernel::{default_sigma, make_gaussian_kernel, GaussianKernel};
pub use runner::{attack_single, draw_plans, run_attack, AttackOutput, AttackTrace, IterationRecord};
pub use step::{momentum_update, nesterov_lookahead, step_region_fitting, step_value_fitting};
pub use transform::{dim_transform, rdim_transform, DimPlan, PadPlan, RdimPlan, TransformPlan};
