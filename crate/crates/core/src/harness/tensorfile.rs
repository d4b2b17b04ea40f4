//! Binary tensor files.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "ATNS"
//! 4       1         format version (1)
//! 5       1         ndim (3: height, width, channels)
//! 6       4·ndim    dims, u32 little-endian
//! ...     4·Πdims   payload, f32 little-endian, row-major H→W→C
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, Shape};

pub const TENSOR_MAGIC: &[u8; 4] = b"ATNS";
pub const TENSOR_VERSION: u8 = 1;

pub fn write_tensor<T: Scalar, W: Write>(mut w: W, t: &ImageTensor<T>) -> Result<()> {
    let s = t.shape();
    let mut buf = Vec::with_capacity(6 + 12 + 4 * t.len());
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.push(TENSOR_VERSION);
    buf.push(3);
    for d in [s.height, s.width, s.channels] {
        let d = u32::try_from(d).map_err(|_| Error::format("tensor", format!("dimension {d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        let f = v.to_f32().unwrap_or(f32::NAN);
        buf.extend_from_slice(&f.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::format("tensor", e.to_string()))
}

pub fn read_tensor<T: Scalar, R: Read>(mut r: R) -> Result<ImageTensor<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format("tensor", e.to_string()))?;
    if bytes.len() < 6 || &bytes[..4] != TENSOR_MAGIC {
        return Err(Error::format("tensor", "missing ATNS magic"));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(Error::format("tensor", format!("unsupported version {}", bytes[4])));
    }
    let ndim = bytes[5] as usize;
    if ndim != 3 {
        return Err(Error::format("tensor", format!("expected 3 dimensions, found {ndim}")));
    }
    let header = 6 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format("tensor", "truncated header"));
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() != header + 4 * count {
        return Err(Error::format(
            "tensor",
            format!("payload is {} bytes, dims {dims:?} need {}", bytes.len() - header, 4 * count),
        ));
    }
    if dims.contains(&0) {
        return Err(Error::format("tensor", format!("zero-sized dimension in {dims:?}")));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    ImageTensor::new(Shape::new(dims[0], dims[1], dims[2]), data)
}

pub fn save_tensor<T: Scalar>(path: &Path, t: &ImageTensor<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor(&mut w, t).map_err(|e| e.context(path.display().to_string()))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = Rng::new(3);
        let t = ImageTensor::<f32>::from_fn(Shape::new(5, 7, 3), |_, _, _| rng.next_f64() as f32);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.atns");
        save_tensor(&path, &t).unwrap();
        let back: ImageTensor<f32> = load_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn header_layout() {
        let t = ImageTensor::<f64>::filled(Shape::new(1, 2, 1), 0.5);
        let mut bytes = Vec::new();
        write_tensor(&mut bytes, &t).unwrap();
        assert_eq!(&bytes[..6], b"ATNS\x01\x03");
        assert_eq!(&bytes[6..18], &[1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[18..22], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 26);
    }

    #[test]
    fn rejects_corruption() {
        let t = ImageTensor::<f64>::filled(Shape::new(2, 2, 1), 0.25);
        let mut bytes = Vec::new();
        write_tensor(&mut bytes, &t).unwrap();
        assert!(read_tensor::<f64, _>(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_tensor::<f64, _>(&bad[..]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(read_tensor::<f64, _>(&bad[..]).is_err());
        assert!(read_tensor::<f64, _>(&bytes[..]).is_ok());
    }
}
