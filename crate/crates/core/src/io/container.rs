//! `MDTN` tensor container.
//!
//! ```text
//! magic   "MDTN"
//! version u8 = 1
//! dtype   u8   0 = f32, 1 = f64, 2 = u64, 3 = u8
//! ndim    u8
//! dims    ndim × u64 little-endian
//! payload row-major little-endian values
//! ```

use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use crate::coding::EncodedFrames;
use crate::error::{Error, Result};
use crate::flow::Video;

const MAGIC: &[u8; 4] = b"MDTN";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F32(ArrayD<f32>),
    F64(ArrayD<f64>),
    U64(ArrayD<u64>),
    U8(ArrayD<u8>),
}

impl Tensor {
    fn dtype(&self) -> u8 {
        match self {
            Tensor::F32(_) => 0,
            Tensor::F64(_) => 1,
            Tensor::U64(_) => 2,
            Tensor::U8(_) => 3,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F32(a) => a.shape(),
            Tensor::F64(a) => a.shape(),
            Tensor::U64(a) => a.shape(),
            Tensor::U8(a) => a.shape(),
        }
    }

    /// Values widened to `f64`; integer payloads are converted.
    pub fn to_f64(&self) -> ArrayD<f64> {
        match self {
            Tensor::F32(a) => a.mapv(f64::from),
            Tensor::F64(a) => a.clone(),
            Tensor::U64(a) => a.mapv(|v| v as f64),
            Tensor::U8(a) => a.mapv(f64::from),
        }
    }
}

pub fn encode_tensor(tensor: &Tensor) -> Vec<u8> {
    let shape = tensor.shape();
    let mut out = Vec::with_capacity(7 + 8 * shape.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(tensor.dtype());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match tensor {
        Tensor::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Tensor::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Tensor::U64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Tensor::U8(a) => out.extend(a.iter().copied()),
    }
    out
}

fn chunks<const N: usize>(payload: &[u8]) -> impl Iterator<Item = [u8; N]> + '_ {
    payload
        .chunks_exact(N)
        .map(|c| c.try_into().expect("chunk has exact size"))
}

/// Parses a container; `origin` only labels errors.
pub fn decode_tensor(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let bad = |reason: String| Error::format(origin, reason);
    if bytes.len() < 7 {
        return Err(bad(format!("header truncated at {} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic, expected MDTN".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let dtype = bytes[5];
    let ndim = bytes[6] as usize;
    let dims_end = 7 + 8 * ndim;
    if bytes.len() < dims_end {
        return Err(bad("dimension table truncated".into()));
    }
    let dims: Vec<usize> = chunks::<8>(&bytes[7..dims_end])
        .map(|c| u64::from_le_bytes(c) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("element count overflows".into()))?;
    let size = match dtype {
        0 => 4,
        1 => 8,
        2 => 8,
        3 => 1,
        other => return Err(bad(format!("unknown dtype code {other}"))),
    };
    let payload = &bytes[dims_end..];
    let expected = count
        .checked_mul(size)
        .ok_or_else(|| bad("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(bad(format!(
            "payload has {} bytes, shape {dims:?} needs {expected}",
            payload.len()
        )));
    }
    let shape = IxDyn(&dims);
    let tensor = match dtype {
        0 => {
            Tensor::F32(ArrayD::from_shape_vec(shape, chunks::<4>(payload).map(f32::from_le_bytes).collect()).unwrap())
        }
        1 => {
            Tensor::F64(ArrayD::from_shape_vec(shape, chunks::<8>(payload).map(f64::from_le_bytes).collect()).unwrap())
        }
        2 => {
            Tensor::U64(ArrayD::from_shape_vec(shape, chunks::<8>(payload).map(u64::from_le_bytes).collect()).unwrap())
        }
        _ => Tensor::U8(ArrayD::from_shape_vec(shape, payload.to_vec()).unwrap()),
    };
    Ok(tensor)
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<()> {
    super::write_atomic(path, &encode_tensor(tensor))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes, path)
}

/// Reads a 4-D floating-point tensor as a video.
pub fn read_video_tensor(path: &Path) -> Result<Video> {
    let tensor = read_tensor(path)?;
    if !matches!(tensor, Tensor::F32(_) | Tensor::F64(_)) {
        return Err(Error::format(path, "expected a floating-point tensor"));
    }
    tensor
        .to_f64()
        .into_dimensionality()
        .map_err(|_| Error::format(path, "expected a 4-D frames×channels×height×width tensor"))
}

pub fn write_codes(path: &Path, enc: &EncodedFrames) -> Result<()> {
    write_tensor(path, &Tensor::U64(enc.codes().clone().into_dyn()))
}

pub fn read_codes(path: &Path) -> Result<EncodedFrames> {
    match read_tensor(path)? {
        Tensor::U64(a) => {
            let codes = a
                .into_dimensionality()
                .map_err(|_| Error::format(path, "codes must be a 3-D frames×height×width tensor"))?;
            Ok(EncodedFrames::from_codes(codes))
        }
        _ => Err(Error::format(path, "codes must be stored as u64")),
    }
}
