//! Attack configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! name = rf-de-tim
//! eps = 16/255              # pixel units; fractions allowed
//! iterations = 10
//! alpha = auto              # auto = eps / iterations
//! mu = 1
//! momentum = true
//! nesterov = false
//! region_fitting = true
//! transform = rdim          # none | dim | rdim
//! dim_prob = 0.5
//! diversity_scales = 32,36,39,43,47
//! scale_weights = equal     # or a comma list summing to 1
//! kernel = gaussian         # none | gaussian
//! kernel_size = 15
//! kernel_sigma = auto       # auto = kernel_size / 3
//! targeted = false
//! seed = 0
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::fuse::check_weights;
use super::kernel::default_sigma;
use crate::error::{Error, Result};

/// Input-diversity transform applied before each gradient evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TransformKind {
    #[default]
    None,
    /// Gated resize-and-pad (probability `dim_prob`, single scale).
    Dim,
    /// Resized diverse inputs, one independent draw per diversity scale.
    Rdim,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformKind::None => "none",
            TransformKind::Dim => "dim",
            TransformKind::Rdim => "rdim",
        })
    }
}

impl FromStr for TransformKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TransformKind::None),
            "dim" => Ok(TransformKind::Dim),
            "rdim" => Ok(TransformKind::Rdim),
            _ => Err(Error::Config(format!("unknown transform '{s}' (none | dim | rdim)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum KernelSpec {
    #[default]
    None,
    Gaussian { size: usize, sigma: Option<f64> },
}

impl KernelSpec {
    pub fn gaussian(size: usize) -> Self {
        KernelSpec::Gaussian { size, sigma: None }
    }

    /// `(size, sigma)` with the default sigma filled in.
    pub fn resolved(&self) -> Option<(usize, f64)> {
        match *self {
            KernelSpec::None => None,
            KernelSpec::Gaussian { size, sigma } => Some((size, sigma.unwrap_or_else(|| default_sigma(size)))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub name: String,
    /// L∞ budget in pixel units (`[0, 1]` domain).
    pub eps: f64,
    pub iterations: usize,
    /// Step size; `None` means `eps / iterations`.
    pub alpha: Option<f64>,
    pub mu: f64,
    pub momentum: bool,
    pub nesterov: bool,
    pub region_fitting: bool,
    pub transform: TransformKind,
    pub dim_prob: f64,
    pub diversity_scales: Vec<usize>,
    /// Empty means equal weights.
    pub scale_weights: Vec<f64>,
    pub kernel: KernelSpec,
    pub targeted: bool,
    pub seed: u64,
    /// Keep a copy of every iterate in the trace.
    pub record_snapshots: bool,
}

impl Default for AttackConfig {
    /// I-FGSM with ε = 16/255 and 10 iterations.
    fn default() -> Self {
        Self {
            name: "i-fgsm".into(),
            eps: 16.0 / 255.0,
            iterations: 10,
            alpha: None,
            mu: 1.0,
            momentum: false,
            nesterov: false,
            region_fitting: false,
            transform: TransformKind::None,
            dim_prob: 0.5,
            diversity_scales: vec![],
            scale_weights: vec![],
            kernel: KernelSpec::None,
            targeted: false,
            seed: 0,
            record_snapshots: false,
        }
    }
}

/// Diversity-list ratios: the list 340..500 relative to a 299-pixel input.
pub const DEM_SCALE_RATIOS: [f64; 5] = [340.0 / 299.0, 380.0 / 299.0, 420.0 / 299.0, 460.0 / 299.0, 500.0 / 299.0];
/// Single-scale canvas of the gated diverse-inputs baseline (330 at 299).
pub const DIM_SCALE_RATIO: f64 = 330.0 / 299.0;
/// Single-scale canvas used for resized diverse inputs (500 at 299).
pub const RDIM_SCALE_RATIO: f64 = 500.0 / 299.0;

/// Scales a ratio to an integer canvas side for input side `side`, never
/// below `side`.
pub fn scale_for(side: usize, ratio: f64) -> usize {
    ((side as f64 * ratio).round() as usize).max(side)
}

/// The diversity list adapted to input side `side`.
pub fn dem_scales(side: usize) -> Vec<usize> {
    DEM_SCALE_RATIOS.iter().map(|&r| scale_for(side, r)).collect()
}

/// Shared hyper-parameters from which named attacks are assembled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PresetParams {
    pub input_side: usize,
    pub eps: f64,
    pub iterations: usize,
    pub mu: f64,
    pub kernel_size: usize,
    pub dim_prob: f64,
    pub seed: u64,
}

impl PresetParams {
    /// ε = 16/255, T = 10, μ = 1, 15×15 kernel, p = 0.5.
    pub fn standard(input_side: usize) -> Self {
        Self {
            input_side,
            eps: 16.0 / 255.0,
            iterations: 10,
            mu: 1.0,
            kernel_size: 15,
            dim_prob: 0.5,
            seed: 0,
        }
    }
}

/// Names accepted by [`AttackConfig::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "fgsm",
    "i-fgsm",
    "mi-fgsm",
    "ni-fgsm",
    "rdi-fgsm",
    "rdi-mi-fgsm",
    "tim",
    "ti-dim",
    "ti-rdim",
    "ni-ti-dim",
    "ni-ti-rdim",
    "de-tim",
    "de-ni-tim",
    "rf-ti-rdim",
    "rf-de-tim",
];

impl AttackConfig {
    /// Builds a named method of the family from shared hyper-parameters.
    pub fn preset(name: &str, p: &PresetParams) -> Result<Self> {
        let mut cfg = AttackConfig {
            name: name.to_string(),
            eps: p.eps,
            iterations: p.iterations,
            mu: p.mu,
            dim_prob: p.dim_prob,
            seed: p.seed,
            ..Default::default()
        };
        let side = p.input_side;
        let rdim_single = |c: &mut AttackConfig| {
            c.transform = TransformKind::Rdim;
            c.diversity_scales = vec![scale_for(side, RDIM_SCALE_RATIO)];
        };
        let dim_single = |c: &mut AttackConfig| {
            c.transform = TransformKind::Dim;
            c.diversity_scales = vec![scale_for(side, DIM_SCALE_RATIO)];
        };
        let dem = |c: &mut AttackConfig| {
            c.transform = TransformKind::Rdim;
            c.diversity_scales = dem_scales(side);
        };
        let tim = |c: &mut AttackConfig| c.kernel = KernelSpec::gaussian(p.kernel_size);

        match name {
            "fgsm" => {
                cfg.iterations = 1;
                cfg.alpha = Some(p.eps);
            }
            "i-fgsm" => {}
            "mi-fgsm" => cfg.momentum = true,
            "ni-fgsm" => {
                cfg.momentum = true;
                cfg.nesterov = true;
            }
            "rdi-fgsm" => {
                cfg.iterations = 1;
                cfg.alpha = Some(p.eps);
                rdim_single(&mut cfg);
            }
            "rdi-mi-fgsm" => {
                cfg.momentum = true;
                rdim_single(&mut cfg);
            }
            "tim" => {
                cfg.momentum = true;
                tim(&mut cfg);
            }
            "ti-dim" | "ni-ti-dim" => {
                cfg.momentum = true;
                cfg.nesterov = name.starts_with("ni");
                dim_single(&mut cfg);
                tim(&mut cfg);
            }
            "ti-rdim" | "ni-ti-rdim" | "rf-ti-rdim" => {
                cfg.momentum = true;
                cfg.nesterov = name.starts_with("ni");
                cfg.region_fitting = name.starts_with("rf");
                rdim_single(&mut cfg);
                tim(&mut cfg);
            }
            "de-tim" | "de-ni-tim" | "rf-de-tim" => {
                cfg.momentum = true;
                cfg.nesterov = name == "de-ni-tim";
                cfg.region_fitting = name.starts_with("rf");
                dem(&mut cfg);
                tim(&mut cfg);
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown attack '{name}'; known: {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        Ok(cfg)
    }

    /// The full pipeline at standard settings for input side `side`.
    pub fn flagship(side: usize) -> Self {
        Self::preset("rf-de-tim", &PresetParams::standard(side)).expect("known preset")
    }

    pub fn step_size(&self) -> f64 {
        self.alpha.unwrap_or(self.eps / self.iterations.max(1) as f64)
    }

    /// Scale weights with the equal-weight default filled in.
    pub fn resolved_weights(&self) -> Vec<f64> {
        let k = self.effective_scales().len();
        if self.scale_weights.is_empty() {
            vec![1.0 / k as f64; k]
        } else {
            self.scale_weights.clone()
        }
    }

    /// Scales actually used: none for the identity transform.
    pub fn effective_scales(&self) -> &[usize] {
        match self.transform {
            TransformKind::None => &[],
            _ => &self.diversity_scales,
        }
    }

    /// Checks every invariant that does not depend on the model. Pass
    /// `input_side` to also check the diversity scales against it.
    pub fn validate(&self, input_side: Option<usize>) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return bad(format!("eps must be finite and >= 0, got {}", self.eps));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        let alpha = self.step_size();
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return bad(format!("step size must be finite and >= 0, got {alpha}"));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return bad(format!("decay mu must be >= 0, got {}", self.mu));
        }
        if self.nesterov && !self.momentum {
            return bad("nesterov look-ahead requires momentum".into());
        }
        if !(0.0..=1.0).contains(&self.dim_prob) {
            return bad(format!("dim_prob must lie in [0, 1], got {}", self.dim_prob));
        }
        match self.transform {
            TransformKind::None => {}
            TransformKind::Dim => {
                if self.diversity_scales.len() != 1 {
                    return bad("dim takes exactly one diversity scale".into());
                }
            }
            TransformKind::Rdim => {
                if self.diversity_scales.is_empty() {
                    return bad("rdim needs at least one diversity scale".into());
                }
            }
        }
        if self.transform != TransformKind::None {
            if !self.scale_weights.is_empty() && self.scale_weights.len() != self.diversity_scales.len() {
                return bad(format!(
                    "{} diversity scales but {} scale weights",
                    self.diversity_scales.len(),
                    self.scale_weights.len()
                ));
            }
            check_weights(&self.resolved_weights())?;
            if let Some(side) = input_side {
                if let Some(&s) = self.diversity_scales.iter().find(|&&s| s < side) {
                    return bad(format!("diversity scale {s} is below the model input side {side}"));
                }
            }
        }
        if let KernelSpec::Gaussian { size, sigma } = self.kernel {
            if size == 0 || size % 2 == 0 {
                return bad(format!("kernel_size must be odd, got {size}"));
            }
            if let Some(s) = sigma {
                if !(s > 0.0) {
                    return bad(format!("kernel_sigma must be positive, got {s}"));
                }
            }
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let err = |what: &str| Error::Config(format!("{key}: cannot parse '{value}' as {what}"));
        match key {
            "name" => self.name = value.to_string(),
            "eps" => self.eps = parse_real(value).ok_or_else(|| err("a number"))?,
            "iterations" => self.iterations = value.parse().map_err(|_| err("an integer"))?,
            "alpha" => {
                self.alpha = match value {
                    "auto" => None,
                    v => Some(parse_real(v).ok_or_else(|| err("a number or 'auto'"))?),
                }
            }
            "mu" => self.mu = parse_real(value).ok_or_else(|| err("a number"))?,
            "momentum" => self.momentum = parse_bool(value).ok_or_else(|| err("a boolean"))?,
            "nesterov" => self.nesterov = parse_bool(value).ok_or_else(|| err("a boolean"))?,
            "region_fitting" => self.region_fitting = parse_bool(value).ok_or_else(|| err("a boolean"))?,
            "transform" => self.transform = value.parse()?,
            "dim_prob" => self.dim_prob = parse_real(value).ok_or_else(|| err("a number"))?,
            "diversity_scales" => {
                self.diversity_scales = parse_list(value, |s| s.parse().ok()).ok_or_else(|| err("a list of integers"))?
            }
            "scale_weights" => {
                self.scale_weights = match value {
                    "equal" | "" => vec![],
                    v => parse_list(v, parse_real).ok_or_else(|| err("a list of numbers"))?,
                }
            }
            "kernel" => {
                self.kernel = match value {
                    "none" => KernelSpec::None,
                    "gaussian" => match self.kernel {
                        KernelSpec::None => KernelSpec::gaussian(15),
                        k => k,
                    },
                    _ => return Err(err("'none' or 'gaussian'")),
                }
            }
            "kernel_size" => {
                let size = value.parse().map_err(|_| err("an integer"))?;
                self.kernel = match self.kernel {
                    KernelSpec::Gaussian { sigma, .. } => KernelSpec::Gaussian { size, sigma },
                    KernelSpec::None => KernelSpec::Gaussian { size, sigma: None },
                };
            }
            "kernel_sigma" => {
                let sigma = match value {
                    "auto" => None,
                    v => Some(parse_real(v).ok_or_else(|| err("a number or 'auto'"))?),
                };
                self.kernel = match self.kernel {
                    KernelSpec::Gaussian { size, .. } => KernelSpec::Gaussian { size, sigma },
                    KernelSpec::None => KernelSpec::Gaussian { size: 15, sigma },
                };
            }
            "targeted" => self.targeted = parse_bool(value).ok_or_else(|| err("a boolean"))?,
            "seed" => self.seed = value.parse().map_err(|_| err("an unsigned integer"))?,
            "record_snapshots" => self.record_snapshots = parse_bool(value).ok_or_else(|| err("a boolean"))?,
            _ => return Err(Error::Config(format!("unknown attack config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses the text form on top of the defaults. `kernel = none` after a
    /// size or sigma key switches the kernel off again.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = AttackConfig::default();
        for (key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "eps = {}", fmt_real(self.eps));
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "alpha = {}", self.alpha.map_or("auto".into(), fmt_real));
        let _ = writeln!(s, "mu = {}", fmt_real(self.mu));
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "nesterov = {}", self.nesterov);
        let _ = writeln!(s, "region_fitting = {}", self.region_fitting);
        let _ = writeln!(s, "transform = {}", self.transform);
        let _ = writeln!(s, "dim_prob = {}", fmt_real(self.dim_prob));
        let _ = writeln!(s, "diversity_scales = {}", list(&self.diversity_scales));
        if self.scale_weights.is_empty() {
            let _ = writeln!(s, "scale_weights = equal");
        } else {
            let w: Vec<String> = self.scale_weights.iter().map(|&v| fmt_real(v)).collect();
            let _ = writeln!(s, "scale_weights = {}", w.join(","));
        }
        match self.kernel {
            KernelSpec::None => {
                let _ = writeln!(s, "kernel = none");
            }
            KernelSpec::Gaussian { size, sigma } => {
                let _ = writeln!(s, "kernel = gaussian");
                let _ = writeln!(s, "kernel_size = {size}");
                let _ = writeln!(s, "kernel_sigma = {}", sigma.map_or("auto".into(), fmt_real));
            }
        }
        let _ = writeln!(s, "targeted = {}", self.targeted);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "record_snapshots = {}", self.record_snapshots);
        s
    }
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:?}")
}

/// Parses a real number or a fraction such as `16/255`.
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
            (d != 0.0).then(|| n / d)
        }
        None => s.parse().ok(),
    }
}

pub(crate) fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

pub(crate) fn parse_list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    if s.trim().is_empty() {
        return Some(vec![]);
    }
    s.split(',').map(|p| f(p.trim())).collect()
}

/// Splits flat `key = value` text into ordered pairs, dropping blank lines
/// and `#` comments. Duplicate keys are an error.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("config", format!("line {}: expected 'key = value'", n + 1)))?;
        let key = k.trim().to_string();
        if out.iter().any(|(existing, _)| *existing == key) {
            return Err(Error::format("config", format!("line {}: duplicate key '{key}'", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}
