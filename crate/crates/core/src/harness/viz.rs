//! Binary PGM/PPM output and the two diagnostic visualizations: the
//! nonzero mask of a diverse-input gradient, and per-iteration
//! perturbation frames.
//!
//! With bilinear resampling and scale ratios below 2 the resize adjoints
//! reach every pixel, so exact-zero stripes come only from the model
//! gradient itself (inactive ReLU regions), never from the transform.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::attack::{AttackTrace, RdimPlan};
use crate::error::{Error, Result};
use crate::model::{softmax_cross_entropy, Classifier};
use crate::rng::Rng;
use crate::tensor::ImageTensor;

/// Writes an 8-bit binary PGM (`P5`).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_netpbm(path, "P5", width, height, 1, pixels)
}

/// Writes an 8-bit binary PPM (`P6`), pixels as interleaved RGB.
pub fn write_ppm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write_netpbm(path, "P6", width, height, 3, pixels)
}

fn write_netpbm(path: &Path, magic: &str, width: usize, height: usize, channels: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height * channels {
        return Err(Error::InvalidArgument(format!(
            "{} bytes for a {width}x{height}x{channels} image",
            pixels.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "{magic}\n{width} {height}\n255\n")
        .and_then(|_| w.write_all(pixels))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes a 1- or 3-channel tensor as PGM or PPM, mapping `[lo, hi]` to
/// `[0, 255]` with rounding and saturation.
pub fn write_tensor_image(path: &Path, t: &ImageTensor<f64>, lo: f64, hi: f64) -> Result<()> {
    let bytes: Vec<u8> = t.data().iter().map(|&v| to_byte(v, lo, hi)).collect();
    match t.channels() {
        1 => write_pgm(path, t.width(), t.height(), &bytes),
        3 => write_ppm(path, t.width(), t.height(), &bytes),
        c => Err(Error::InvalidArgument(format!("cannot write a {c}-channel image"))),
    }
}

/// Affine map of `[lo, hi]` onto `[0, 255]`, rounded and saturated.
pub fn to_byte(v: f64, lo: f64, hi: f64) -> u8 {
    (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
}

/// Nonzero mask (`|g| > 1e-12`) collapsed over channels.
pub fn nonzero_mask(g: &ImageTensor<f64>) -> Vec<Vec<bool>> {
    (0..g.height())
        .map(|y| {
            (0..g.width())
                .map(|x| (0..g.channels()).any(|c| g.get(y, x, c).abs() > 1e-12))
                .collect()
        })
        .collect()
}

/// All-zero rows and columns of a mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct StripeCount {
    pub rows: usize,
    pub cols: usize,
}

impl StripeCount {
    pub fn total(&self) -> usize {
        self.rows + self.cols
    }
}

pub fn count_stripes(mask: &[Vec<bool>]) -> StripeCount {
    let rows = mask.iter().filter(|r| r.iter().all(|&m| !m)).count();
    let width = mask.first().map_or(0, |r| r.len());
    let cols = (0..width).filter(|&x| mask.iter().all(|r| !r[x])).count();
    StripeCount { rows, cols }
}

/// Input gradient of the cross-entropy through one diverse-input draw:
/// the model gradient at `T(x)` pulled back by the exact adjoint of `T`.
pub fn diverse_input_gradient(
    model: &dyn Classifier<f64>,
    x: &ImageTensor<f64>,
    y: usize,
    plan: &RdimPlan,
) -> Result<ImageTensor<f64>> {
    let xt = plan.apply(x)?;
    let trace = model.forward(&xt)?;
    let (_, upstream) = softmax_cross_entropy(&trace.logits, y)?;
    plan.adjoint(&model.backward(&trace, &upstream))
}

/// Stripes of the transform's own adjoint mask: `Tᵀ(1)` for the draw made
/// from `seed` at scale `s1`, on a `side × side` single-channel input.
/// Depends only on the transform, not on any model.
pub fn adjoint_mask_stripes(side: usize, s1: usize, seed: u64) -> Result<StripeCount> {
    let plan = RdimPlan::draw(side, s1, &mut Rng::new(seed))?;
    let ones = ImageTensor::filled(crate::tensor::Shape::square(side, 1), 1.0);
    Ok(count_stripes(&nonzero_mask(&plan.adjoint(&ones)?)))
}

/// Draws one diverse-input transform at scale `s1` from `seed`, writes the
/// nonzero mask of the input gradient as a PGM (nonzero → 255, zero → 0)
/// and returns its stripe count.
pub fn visualize_gradient_stripes(
    model: &dyn Classifier<f64>,
    x: &ImageTensor<f64>,
    y: usize,
    s1: usize,
    seed: u64,
    out: &Path,
) -> Result<StripeCount> {
    let plan = RdimPlan::draw(x.height(), s1, &mut Rng::new(seed))?;
    let g = diverse_input_gradient(model, x, y, &plan)?;
    let mask = nonzero_mask(&g);
    let bytes: Vec<u8> = mask.iter().flatten().map(|&m| if m { 255 } else { 0 }).collect();
    write_pgm(out, g.width(), g.height(), &bytes)?;
    Ok(count_stripes(&mask))
}

/// Writes `iter_01.pgm … iter_TT.pgm` into `dir`: the perturbation
/// `X_t − X` mapped from `[−ε, ε]` onto `[0, 255]`.
pub fn visualize_perturbation(trace: &AttackTrace<f64>, dir: &Path) -> Result<Vec<PathBuf>> {
    if trace.snapshots.is_empty() {
        return Err(Error::InvalidArgument("trace has no snapshots; enable record_snapshots".into()));
    }
    if !(trace.eps > 0.0) {
        return Err(Error::InvalidArgument("perturbation frames need eps > 0".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = trace.snapshots.len().to_string().len().max(2);
    let mut paths = Vec::with_capacity(trace.snapshots.len());
    for t in 0..trace.snapshots.len() {
        let delta = trace.perturbation(t)?;
        let path = dir.join(format!("iter_{:0width$}.pgm", t + 1));
        let gray = collapse_channels(&delta);
        write_tensor_image(&path, &gray, -trace.eps, trace.eps)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Channel mean for multi-channel perturbations, so frames are grayscale.
fn collapse_channels(t: &ImageTensor<f64>) -> ImageTensor<f64> {
    if t.channels() == 1 {
        return t.clone();
    }
    let c = t.channels() as f64;
    ImageTensor::from_fn(crate::tensor::Shape::new(t.height(), t.width(), 1), |y, x, _| {
        (0..t.channels()).map(|k| t.get(y, x, k)).sum::<f64>() / c
    })
}

/// Parses a binary PGM written by [`write_pgm`]: `(width, height, pixels)`.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::format("pgm", m.to_string());
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected an 8-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    if pos >= bytes.len() {
        return Err(bad("missing payload"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != w * h {
        return Err(bad("payload size does not match the header"));
    }
    Ok((w, h, data.to_vec()))
}
