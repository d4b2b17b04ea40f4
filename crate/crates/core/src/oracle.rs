//! Slow reference implementations used to check the fast paths.
//!
//! Nothing here calls into the code it verifies: the loss is recomputed from
//! raw logits, the translation sum shifts whole images instead of sliding a
//! window, and the resized-diverse-inputs replay carries its own resampler.
//! The only shared pieces are the tensor container, the model forward pass
//! (the quantity being differentiated) and the random generator (whose draw
//! sequence is part of the contract being replayed).

use crate::error::{Error, Result};
use crate::model::{Classifier, Network, Trace};
use crate::rng::Rng;
use crate::tensor::{ImageTensor, Kernel2d};

/// Softmax cross-entropy recomputed with a log-sum-exp.
fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[y]
}

fn loss_at(model: &dyn Classifier<f64>, x: &ImageTensor<f64>, y: usize) -> Result<f64> {
    Ok(cross_entropy(&model.logits(x)?, y))
}

/// Central-difference gradient of the cross-entropy `J(x, y)` with respect
/// to every input coordinate.
pub fn finite_diff_grad(model: &dyn Classifier<f64>, x: &ImageTensor<f64>, y: usize, h: f64) -> Result<ImageTensor<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut out = ImageTensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        out.data_mut()[i] = central_difference(model, &mut probe, i, y, h)?;
    }
    Ok(out)
}

fn central_difference(model: &dyn Classifier<f64>, probe: &mut ImageTensor<f64>, i: usize, y: usize, h: f64) -> Result<f64> {
    let orig = probe.data()[i];
    probe.data_mut()[i] = orig + h;
    let plus = loss_at(model, probe, y)?;
    probe.data_mut()[i] = orig - h;
    let minus = loss_at(model, probe, y)?;
    probe.data_mut()[i] = orig;
    Ok((plus - minus) / (2.0 * h))
}

/// `Σ_{i,j} W[i][j] · shift(g, r − i, r − j)`: each kernel tap contributes a
/// whole copy of the input translated by its offset, with vacated pixels
/// left at zero.
pub fn translation_sum(grad: &ImageTensor<f64>, kernel: &Kernel2d<f64>) -> Result<ImageTensor<f64>> {
    let side = kernel.side();
    if side % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel side must be odd, got {side}")));
    }
    let r = (side / 2) as isize;
    let (h, w, c) = (grad.height() as isize, grad.width() as isize, grad.channels());
    let mut acc = ImageTensor::zeros(grad.shape());
    for i in 0..side {
        for j in 0..side {
            // tap (i, j) reads the pixel at offset (i − r, j − r)
            let (dy, dx) = (i as isize - r, j as isize - r);
            let mut shifted = ImageTensor::zeros(grad.shape());
            for y in 0..h {
                for x in 0..w {
                    let (sy, sx) = (y + dy, x + dx);
                    if sy < 0 || sy >= h || sx < 0 || sx >= w {
                        continue;
                    }
                    for ch in 0..c {
                        shifted.set(y as usize, x as usize, ch, grad.get(sy as usize, sx as usize, ch));
                    }
                }
            }
            let wgt = kernel.weight(i, j);
            for (a, s) in acc.data_mut().iter_mut().zip(shifted.data()) {
                *a += wgt * s;
            }
        }
    }
    Ok(acc)
}

/// Bilinear resampling with half-pixel centers, written out per pixel.
fn resample(img: &ImageTensor<f64>, out_h: usize, out_w: usize) -> ImageTensor<f64> {
    let (in_h, in_w, c) = (img.height(), img.width(), img.channels());
    let mut out = ImageTensor::zeros(crate::tensor::Shape::new(out_h, out_w, c));
    for oy in 0..out_h {
        let (y0, y1, fy) = source_coordinate(oy, in_h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = source_coordinate(ox, in_w, out_w);
            for ch in 0..c {
                let top = mix(img.get(y0, x0, ch), img.get(y0, x1, ch), fx);
                let bottom = mix(img.get(y1, x0, ch), img.get(y1, x1, ch), fx);
                out.set(oy, ox, ch, mix(top, bottom, fy));
            }
        }
    }
    out
}

fn source_coordinate(d: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    if n_in == n_out {
        return (d, d, 0.0);
    }
    let s = (d as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
    let s = s.max(0.0).min((n_in - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = if i0 + 1 < n_in { i0 + 1 } else { n_in - 1 };
    (i0, i1, s - i0 as f64)
}

fn mix(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    v.max(lo).min(hi)
}

/// Resized-diverse-inputs transform transcribed line by line, drawing from
/// `rng`: size `a ~ U[S, S1)`, resize to `a × a`, `H = S1 − a`,
/// `top ~ U[0, H)`, `left ~ U[0, H)`, zero-pad to `S1 × S1`, resize to `S × S`.
pub fn replay_rdim_with(x: &ImageTensor<f64>, s: usize, s1: usize, rng: &mut Rng) -> Result<ImageTensor<f64>> {
    if x.height() != s || x.width() != s {
        return Err(Error::InvalidArgument(format!("expected a {s}x{s} image, got {}", x.shape())));
    }
    if s1 < s {
        return Err(Error::InvalidArgument(format!("S1 = {s1} is smaller than S = {s}")));
    }
    // line 1: random size
    let a = rng.uniform_int(s as i64, s1 as i64)? as usize;
    // line 2: resize
    let xr = resample(x, a, a);
    // line 3: remaining room
    let room = s1 - a;
    // lines 4-5: random offsets
    let top = rng.uniform_int(0, room as i64)? as usize;
    let left = rng.uniform_int(0, room as i64)? as usize;
    // line 6: zero padding
    let c = x.channels();
    let mut xp = ImageTensor::zeros(crate::tensor::Shape::new(s1, s1, c));
    for y in 0..a {
        for xx in 0..a {
            for ch in 0..c {
                xp.set(top + y, left + xx, ch, xr.get(y, xx, ch));
            }
        }
    }
    // line 7: back to the input size
    Ok(resample(&xp, s, s))
}

/// [`replay_rdim_with`] on a fresh generator seeded with `seed`.
pub fn replay_rdim(x: &ImageTensor<f64>, s: usize, s1: usize, seed: u64) -> Result<ImageTensor<f64>> {
    replay_rdim_with(x, s, s1, &mut Rng::new(seed))
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Denominator floor of [`relative_error`] used by the gradient checks.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-7;

/// Outcome of a sampled gradient check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Sampled coordinates rejected because the ±h probes crossed a ReLU or
    /// max-pool switch.
    pub skipped: usize,
    pub max_rel_error: f64,
    /// Coordinate of the worst error: (parameter tensor, flat index);
    /// the tensor is `None` for input coordinates.
    pub worst: Option<(Option<usize>, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, err: f64, at: (Option<usize>, usize)) {
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = Some(at);
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

const MAX_ATTEMPTS_PER_SAMPLE: usize = 50;

fn probe_branch(model: &dyn Classifier<f64>, x: &ImageTensor<f64>, y: usize, base: &Trace<f64>) -> Result<Option<f64>> {
    let t = model.forward(x)?;
    Ok(t.same_branch(base).then(|| cross_entropy(&t.logits, y)))
}

/// Compares the analytic input gradient with central differences on
/// `samples` random coordinates. Coordinates whose probes leave the
/// piecewise-linear branch of `x` are redrawn.
pub fn check_input_gradient(
    model: &dyn Classifier<f64>,
    x: &ImageTensor<f64>,
    y: usize,
    samples: usize,
    h: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let (_, analytic) = model.loss_and_input_gradient(x, y)?;
    let base = model.forward(x)?;
    let mut report = GradCheckReport::default();
    let mut probe = x.clone();
    for _ in 0..samples {
        for attempt in 0.. {
            if attempt == MAX_ATTEMPTS_PER_SAMPLE {
                return Err(Error::InvalidArgument(format!(
                    "no smooth coordinate found in {MAX_ATTEMPTS_PER_SAMPLE} draws; reduce h"
                )));
            }
            let i = rng.uniform_usize(0, x.len())?;
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let plus = probe_branch(model, &probe, y, &base)?;
            probe.data_mut()[i] = orig - h;
            let minus = probe_branch(model, &probe, y, &base)?;
            probe.data_mut()[i] = orig;
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let numeric = (p - m) / (2.0 * h);
                    report.record(relative_error(analytic.data()[i], numeric, RELATIVE_ERROR_FLOOR), (None, i));
                    break;
                }
                _ => report.skipped += 1,
            }
        }
    }
    Ok(report)
}

/// Parameter-gradient counterpart of [`check_input_gradient`]: `samples`
/// random entries of every parameter tensor.
pub fn check_param_gradient<N: Network<f64> + Clone>(
    model: &N,
    x: &ImageTensor<f64>,
    y: usize,
    samples: usize,
    h: f64,
    rng: &mut Rng,
) -> Result<GradCheckReport> {
    let base = model.forward(x)?;
    let logits = &base.logits;
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    let upstream: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, l)| (l - m).exp() / z - if k == y { 1.0 } else { 0.0 })
        .collect();
    let mut grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.data.len()]).collect();
    model.backward_with_params(&base, &upstream, &mut grads);

    let mut report = GradCheckReport::default();
    let mut probe = model.clone();
    for (p, analytic) in grads.iter().enumerate() {
        let n = analytic.len();
        for _ in 0..samples.min(n) {
            for attempt in 0.. {
                if attempt == MAX_ATTEMPTS_PER_SAMPLE {
                    return Err(Error::InvalidArgument(format!(
                        "no smooth entry of parameter {p} found in {MAX_ATTEMPTS_PER_SAMPLE} draws"
                    )));
                }
                let i = rng.uniform_usize(0, n)?;
                let orig = probe.params()[p].data[i];
                probe.params_mut()[p].data[i] = orig + h;
                let plus = probe_branch(&probe, x, y, &base)?;
                probe.params_mut()[p].data[i] = orig - h;
                let minus = probe_branch(&probe, x, y, &base)?;
                probe.params_mut()[p].data[i] = orig;
                match (plus, minus) {
                    (Some(a), Some(b)) => {
                        let numeric = (a - b) / (2.0 * h);
                        report.record(relative_error(analytic[i], numeric, RELATIVE_ERROR_FLOOR), (Some(p), i));
                        break;
                    }
                    _ => report.skipped += 1,
                }
            }
        }
    }
    Ok(report)
}
