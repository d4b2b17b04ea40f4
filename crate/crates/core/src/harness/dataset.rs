//! Labelled image datasets: manifests of tensor files, and the synthetic
//! geometric-pattern classes used as a stand-in for natural images.
//!
//! A manifest is UTF-8 CSV. The first line is a descriptor comment, then a
//! `path,label` header, then one row per example. Relative paths resolve
//! against the manifest's directory.
//!
//! ```text
//! # advpipe-dataset shape=28x28x1 classes=10
//! path,label
//! images/000000.atns,0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::tensorfile::{load_tensor, save_tensor};
use crate::error::{Error, Result};
use crate::model::{parse_shape, LabeledExample};
use crate::rng::Rng;
use crate::tensor::{ImageTensor, Shape};

const DESCRIPTOR_PREFIX: &str = "# advpipe-dataset";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetDescriptor {
    pub shape: Shape,
    pub classes: usize,
}

impl DatasetDescriptor {
    fn header_line(&self) -> String {
        format!("{DESCRIPTOR_PREFIX} shape={} classes={}", self.shape, self.classes)
    }

    fn parse_header(line: &str) -> Result<Self> {
        let rest = line
            .strip_prefix(DESCRIPTOR_PREFIX)
            .ok_or_else(|| Error::format("manifest", format!("first line must start with '{DESCRIPTOR_PREFIX}'")))?;
        let mut shape = None;
        let mut classes = None;
        for tok in rest.split_whitespace() {
            match tok.split_once('=') {
                Some(("shape", v)) => {
                    shape = Some(
                        parse_shape(v)
                            .filter(|s| s.len() > 0)
                            .ok_or_else(|| Error::format("manifest", format!("bad shape '{v}'")))?,
                    )
                }
                Some(("classes", v)) => {
                    classes = Some(
                        v.parse::<usize>()
                            .map_err(|_| Error::format("manifest", format!("bad class count '{v}'")))?,
                    )
                }
                _ => return Err(Error::format("manifest", format!("unknown descriptor field '{tok}'"))),
            }
        }
        match (shape, classes) {
            (Some(shape), Some(classes)) if classes >= 2 => Ok(Self { shape, classes }),
            _ => Err(Error::format("manifest", "descriptor needs shape=HxWxC and classes>=2")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub descriptor: DatasetDescriptor,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_csv(&self) -> String {
        let mut out = self.descriptor.header_line();
        out.push('\n');
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["path", "label"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.path.to_string_lossy().as_ref(), &e.label.to_string()])
                .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 input"));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let descriptor = DatasetDescriptor::parse_header(first.trim_end())?;
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::format("manifest", e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
            return Err(Error::format("manifest", "header must be 'path,label'"));
        }
        let mut entries = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("manifest", format!("entry {i}: {e}")))?;
            let label = rec[1]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::format("manifest", format!("entry {i}: bad label '{}'", &rec[1])))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                label,
            });
        }
        Ok(Self { descriptor, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }
}

/// Examples together with their descriptor.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub descriptor: DatasetDescriptor,
    pub examples: Vec<LabeledExample<f64>>,
}

impl Dataset {
    /// First `n` examples and the rest.
    pub fn split(&self, n: usize) -> (Vec<LabeledExample<f64>>, Vec<LabeledExample<f64>>) {
        let n = n.min(self.examples.len());
        (self.examples[..n].to_vec(), self.examples[n..].to_vec())
    }
}

/// Loads and validates every entry of a manifest, in listed order.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let d = manifest.descriptor;
    let mut examples = Vec::with_capacity(manifest.entries.len());
    for (i, e) in manifest.entries.iter().enumerate() {
        let at = || format!("manifest entry {i} ({})", e.path.display());
        if e.label >= d.classes {
            return Err(Error::LabelOutOfRange {
                label: e.label,
                classes: d.classes,
            }
            .context(at()));
        }
        let path = if e.path.is_absolute() { e.path.clone() } else { base.join(&e.path) };
        let image: ImageTensor<f64> = load_tensor(&path).map_err(|err| err.context(at()))?;
        image.expect_shape(d.shape).map_err(|err| err.context(at()))?;
        image.check_finite().map_err(|err| err.context(at()))?;
        examples.push(LabeledExample { image, label: e.label });
    }
    Ok(Dataset { descriptor: d, examples })
}

/// Number of distinct synthetic pattern classes.
pub const TOY_PATTERNS: usize = 10;

/// Synthetic classes: bar, column, two diagonals, hollow square, disc, plus,
/// cross, ring and four corner dots. Each example jitters position, size,
/// stroke and contrast and adds Gaussian background noise. Values are
/// rounded to `f32` so examples survive a tensor-file round trip unchanged.
/// Examples are interleaved by class (`0, 1, …, C−1, 0, 1, …`).
pub fn generate_toy_examples(
    seed: u64,
    n_per_class: usize,
    side: usize,
    classes: usize,
) -> Result<Vec<LabeledExample<f64>>> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be positive".into()));
    }
    if side < 8 {
        return Err(Error::InvalidArgument(format!("toy images need side >= 8, got {side}")));
    }
    if !(2..=TOY_PATTERNS).contains(&classes) {
        return Err(Error::InvalidArgument(format!(
            "toy dataset supports 2..={TOY_PATTERNS} classes, got {classes}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(n_per_class * classes);
    for _ in 0..n_per_class {
        for label in 0..classes {
            out.push(LabeledExample {
                image: toy_image(label, side, &mut rng),
                label,
            });
        }
    }
    Ok(out)
}

fn toy_image(label: usize, side: usize, rng: &mut Rng) -> ImageTensor<f64> {
    let s = side as f64;
    let jitter = s / 7.0;
    let cy = s / 2.0 - 0.5 + jitter * (2.0 * rng.next_f64() - 1.0);
    let cx = s / 2.0 - 0.5 + jitter * (2.0 * rng.next_f64() - 1.0);
    let r = s * (0.22 + 0.1 * rng.next_f64());
    let t = s / 28.0 * (1.2 + 1.0 * rng.next_f64());
    // low contrast keeps the classes learnable but within reach of a 16/255 budget
    let amp = 0.3 + 0.15 * rng.next_f64();
    let base = 0.3 + 0.1 * rng.next_f64();
    let mut noise: Vec<f64> = (0..side * side).map(|_| 0.06 * rng.normal()).collect();
    ImageTensor::from_fn(Shape::square(side, 1), |y, x, _| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        let inside = pattern(label, dy, dx, r, t);
        let v = base + if inside { amp } else { 0.0 } + std::mem::take(&mut noise[y * side + x]);
        (v.clamp(0.0, 1.0) as f32) as f64
    })
}

fn pattern(label: usize, dy: f64, dx: f64, r: f64, t: f64) -> bool {
    let (ay, ax) = (dy.abs(), dx.abs());
    let dist = (dy * dy + dx * dx).sqrt();
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    match label {
        0 => ay <= t && ax <= r,
        1 => ax <= t && ay <= r,
        2 => ((dy - dx) * diag).abs() <= t && ay <= r && ax <= r,
        3 => ((dy + dx) * diag).abs() <= t && ay <= r && ax <= r,
        4 => ay.max(ax) <= r && ay.max(ax) >= r - t,
        5 => dist <= 0.8 * r,
        6 => (ay <= t && ax <= r) || (ax <= t && ay <= r),
        7 => (((dy - dx) * diag).abs() <= t || ((dy + dx) * diag).abs() <= t) && ay <= r && ax <= r,
        8 => (dist - r).abs() <= t,
        _ => {
            let c = 0.75 * r;
            ((ay - c).powi(2) + (ax - c).powi(2)).sqrt() <= t + 1.0
        }
    }
}

/// Writes `examples` as tensor files under `dir/images/` plus
/// `dir/manifest.csv`, and returns the manifest.
pub fn write_dataset(dir: &Path, examples: &[LabeledExample<f64>], classes: usize) -> Result<DatasetManifest> {
    let first = examples.first().ok_or(Error::EmptyDataset)?;
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut entries = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let rel = PathBuf::from("images").join(format!("{i:06}.atns"));
        save_tensor(&dir.join(&rel), &ex.image)?;
        entries.push(ManifestEntry {
            path: rel,
            label: ex.label,
        });
    }
    let manifest = DatasetManifest {
        descriptor: DatasetDescriptor {
            shape: first.image.shape(),
            classes,
        },
        entries,
    };
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// Generates the synthetic dataset and writes it to `dir`.
pub fn make_toy_dataset(dir: &Path, seed: u64, n_per_class: usize, side: usize, classes: usize) -> Result<DatasetManifest> {
    let examples = generate_toy_examples(seed, n_per_class, side, classes)?;
    write_dataset(dir, &examples, classes)
}

/// SHA-256 over labels (u32 LE) and pixel values (f32 LE), in order.
pub fn dataset_checksum(examples: &[LabeledExample<f64>]) -> String {
    let mut h = Sha256::new();
    for ex in examples {
        h.update((ex.label as u32).to_le_bytes());
        for v in ex.image.data() {
            h.update((*v as f32).to_le_bytes());
        }
    }
    format!("{:x}", h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic_and_in_range() {
        let a = generate_toy_examples(1, 3, 16, 10).unwrap();
        let b = generate_toy_examples(1, 3, 16, 10).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(dataset_checksum(&a), dataset_checksum(&b));
        assert!(a.iter().all(|e| e.image.is_pixel_valued()));
        assert_eq!(a.iter().map(|e| e.label).take(10).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
        assert_ne!(dataset_checksum(&a), dataset_checksum(&generate_toy_examples(2, 3, 16, 10).unwrap()));
    }

    #[test]
    fn generator_guards() {
        assert!(generate_toy_examples(0, 0, 28, 10).is_err());
        assert!(generate_toy_examples(0, 1, 4, 10).is_err());
        assert!(generate_toy_examples(0, 1, 28, 11).is_err());
        assert!(generate_toy_examples(0, 1, 28, 1).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = DatasetManifest {
            descriptor: DatasetDescriptor {
                shape: Shape::square(28, 1),
                classes: 10,
            },
            entries: vec![
                ManifestEntry { path: "a/b.atns".into(), label: 3 },
                ManifestEntry { path: "with,comma.atns".into(), label: 0 },
            ],
        };
        let text = m.to_csv();
        assert!(text.starts_with("# advpipe-dataset shape=28x28x1 classes=10\npath,label\n"));
        assert_eq!(DatasetManifest::parse(&text).unwrap(), m);
        assert!(DatasetManifest::parse("path,label\nx,1\n").is_err());
        assert!(DatasetManifest::parse("# advpipe-dataset shape=2x2x1 classes=3\npath,label\nx,y\n").is_err());
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let examples = generate_toy_examples(5, 2, 12, 4).unwrap();
        make_toy_dataset(dir.path(), 5, 2, 12, 4).unwrap();
        let ds = load_dataset(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(ds.descriptor.classes, 4);
        assert_eq!(ds.examples.len(), examples.len());
        for (a, b) in ds.examples.iter().zip(&examples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.image, b.image);
        }
    }

    #[test]
    fn load_errors_name_the_entry() {
        let dir = tempfile::tempdir().unwrap();
        let d = DatasetDescriptor {
            shape: Shape::square(12, 1),
            classes: 4,
        };
        let empty = DatasetManifest { descriptor: d, entries: vec![] };
        let p = dir.path().join("empty.csv");
        empty.save(&p).unwrap();
        assert_eq!(load_dataset(&p).unwrap_err().to_string(), "empty dataset");

        make_toy_dataset(dir.path(), 0, 1, 12, 4).unwrap();
        let mut m = DatasetManifest::load(&dir.path().join("manifest.csv")).unwrap();
        m.entries[2].label = 7;
        let p = dir.path().join("bad_label.csv");
        m.save(&p).unwrap();
        let msg = load_dataset(&p).unwrap_err().to_string();
        assert!(msg.contains("entry 2"), "{msg}");

        m.entries[2].label = 2;
        m.entries[1].path = "missing.atns".into();
        let p = dir.path().join("missing.csv");
        m.save(&p).unwrap();
        let msg = load_dataset(&p).unwrap_err().to_string();
        assert!(msg.contains("entry 1") && msg.contains("missing.atns"), "{msg}");

        m.descriptor.shape = Shape::square(10, 1);
        m.entries[1].path = "images/000001.atns".into();
        let p = dir.path().join("shape.csv");
        m.save(&p).unwrap();
        assert!(load_dataset(&p).unwrap_err().to_string().contains("entry 0"));
    }
}
