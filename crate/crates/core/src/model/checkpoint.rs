//! Binary model checkpoints.
//!
//! ```text
//! "ADVM"                      4 bytes magic
//! version                     u32 LE (currently 1)
//! descriptor length, bytes    u32 LE, UTF-8 architecture descriptor
//! tensor count                u32 LE
//! per tensor: ndim u32 LE, dims u32 LE each, payload f64 LE row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Architecture, Model, Network, Param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"ADVM";
const VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, N: Network<T> + ?Sized, W: Write>(model: &N, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let desc = model.architecture().to_string();
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    w.write_all(desc.as_bytes())?;
    let params = model.params();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        w.write_all(&(p.shape.len() as u32).to_le_bytes())?;
        for &d in &p.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &p.data {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    w.flush()
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::format("checkpoint", format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Model<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("checkpoint", "missing magic"))?;
    if &magic != MAGIC {
        return Err(Error::format("checkpoint", format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let len = read_u32(&mut r)? as usize;
    if len > 4096 {
        return Err(Error::format("checkpoint", "descriptor too long"));
    }
    let mut desc = vec![0u8; len];
    r.read_exact(&mut desc)
        .map_err(|_| Error::format("checkpoint", "truncated descriptor"))?;
    let desc = String::from_utf8(desc).map_err(|_| Error::format("checkpoint", "descriptor is not UTF-8"))?;
    let arch: Architecture = desc.parse()?;

    let count = read_u32(&mut r)? as usize;
    if count > 64 {
        return Err(Error::format("checkpoint", format!("implausible tensor count {count}")));
    }
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let ndim = read_u32(&mut r)? as usize;
        if ndim > 8 {
            return Err(Error::format("checkpoint", format!("tensor {i} has {ndim} dims")));
        }
        let shape = (0..ndim)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| Error::format("checkpoint", format!("tensor {i} payload truncated")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        params.push(Param::new(&format!("tensor{i}"), shape, data));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::format("checkpoint", e.to_string()))? != 0 {
        return Err(Error::format("checkpoint", "trailing bytes after last tensor"));
    }
    Model::from_parts(arch, params)
}

pub fn save_checkpoint<T: Scalar, N: Network<T> + ?Sized>(model: &N, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file)).map_err(|e| e.context(path.display().to_string()))
}
