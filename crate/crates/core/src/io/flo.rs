//! Middlebury `.flo` optical flow files.
//!
//! Layout: the float `202021.25` (bytes `PIEH`), width and height as `i32`,
//! then `height × width` interleaved `(u, v)` pairs as `f32`, all
//! little-endian. `u` is horizontal and `v` vertical; in memory slices hold
//! `(dy, dx)`, so `v` lands in component 0 and `u` in component 1.

use std::path::Path;

use ndarray::{Array3, ArrayView3};

use super::sorted_files;
use crate::error::{Error, Result};
use crate::flow::{FlowDirection, FlowField};

pub const FLO_MAGIC: f32 = 202021.25;

pub fn decode_flo(bytes: &[u8], origin: &Path) -> Result<Array3<f64>> {
    let bad = |reason: String| Error::format(origin, reason);
    if bytes.len() < 12 {
        return Err(bad(format!("header truncated at {} bytes", bytes.len())));
    }
    let word = |k: usize| -> [u8; 4] { bytes[4 * k..4 * k + 4].try_into().unwrap() };
    let magic = f32::from_le_bytes(word(0));
    if magic != FLO_MAGIC {
        return Err(bad(format!("bad magic {magic}, expected {FLO_MAGIC}")));
    }
    let width = i32::from_le_bytes(word(1));
    let height = i32::from_le_bytes(word(2));
    if width <= 0 || height <= 0 {
        return Err(bad(format!("nonpositive dimensions {width}×{height}")));
    }
    let (w, h) = (width as usize, height as usize);
    let expected = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(8))
        .ok_or_else(|| bad("dimensions overflow".into()))?;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(bad(format!(
            "payload has {} bytes, {w}×{h} flow needs {expected}",
            payload.len()
        )));
    }
    let mut out = Array3::zeros((h, w, 2));
    for (k, pair) in payload.chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(pair[..4].try_into().unwrap());
        let v = f32::from_le_bytes(pair[4..].try_into().unwrap());
        out[[k / w, k % w, 0]] = f64::from(v);
        out[[k / w, k % w, 1]] = f64::from(u);
    }
    Ok(out)
}

/// Serializes an `H × W × 2` slice of `(dy, dx)` displacements. Values are
/// narrowed to `f32`; non-finite values are rejected.
pub fn encode_flo(slice: ArrayView3<'_, f64>, origin: &Path) -> Result<Vec<u8>> {
    let (h, w, comps) = slice.dim();
    if comps != 2 || h == 0 || w == 0 {
        return Err(Error::Shape(format!("flow slice has shape {:?}", slice.dim())));
    }
    if h > i32::MAX as usize || w > i32::MAX as usize {
        return Err(Error::format(origin, "flow too large for .flo"));
    }
    if slice.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("flow slice"));
    }
    let mut out = Vec::with_capacity(12 + 8 * h * w);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&(slice[[y, x, 1]] as f32).to_le_bytes());
            out.extend_from_slice(&(slice[[y, x, 0]] as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_flo(path: &Path) -> Result<Array3<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}

pub fn write_flo(path: &Path, slice: ArrayView3<'_, f64>) -> Result<()> {
    let bytes = encode_flo(slice, path)?;
    super::write_atomic(path, &bytes)
}

/// Reads every `.flo` file in `dir`, in name order, as one flow field.
pub fn read_flow_dir(dir: &Path, direction: FlowDirection) -> Result<FlowField> {
    let files = sorted_files(dir, "flo")?;
    if files.is_empty() {
        return Err(Error::format(dir, "no .flo files found"));
    }
    let slices = files.iter().map(|p| read_flo(p)).collect::<Result<Vec<_>>>()?;
    let (h, w, _) = slices[0].dim();
    FlowField::from_slices(&slices, h, w, direction).map_err(|e| match e {
        Error::Shape(reason) => Error::format(dir, reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_2x1() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"PIEH");
        b.extend_from_slice(&[2, 0, 0, 0]);
        b.extend_from_slice(&[1, 0, 0, 0]);
        // pixel (0,0): u = 1.5, v = -0.25
        b.extend_from_slice(&[0x00, 0x00, 0xc0, 0x3f]);
        b.extend_from_slice(&[0x00, 0x00, 0x80, 0xbe]);
        // pixel (0,1): u = 0, v = 2
        b.extend_from_slice(&[0, 0, 0, 0]);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x40]);
        b
    }

    #[test]
    fn magic_bytes_spell_pieh() {
        assert_eq!(&FLO_MAGIC.to_le_bytes(), b"PIEH");
    }

    #[test]
    fn golden_file_parses_with_axis_swap() {
        let bytes = golden_2x1();
        assert_eq!(bytes.len(), 28);
        let f = decode_flo(&bytes, Path::new("golden.flo")).unwrap();
        assert_eq!(f.dim(), (1, 2, 2));
        assert_eq!((f[[0, 0, 0]], f[[0, 0, 1]]), (-0.25, 1.5));
        assert_eq!((f[[0, 1, 0]], f[[0, 1, 1]]), (2.0, 0.0));
        assert_eq!(encode_flo(f.view(), Path::new("g")).unwrap(), bytes);
    }

    #[test]
    fn zero_flow_one_pixel_is_twenty_bytes() {
        let bytes = encode_flo(Array3::zeros((1, 1, 2)).view(), Path::new("z")).unwrap();
        assert_eq!(bytes.len(), 20);
    }

    #[test]
    fn rejects_bad_input() {
        let p = Path::new("bad.flo");
        let mut zero_magic = golden_2x1();
        zero_magic[..4].copy_from_slice(&0f32.to_le_bytes());
        assert!(decode_flo(&zero_magic, p).is_err());
        let mut truncated = golden_2x1();
        truncated.truncate(27);
        assert!(decode_flo(&truncated, p).is_err());
        let mut negative = golden_2x1();
        negative[4..8].copy_from_slice(&(-2i32).to_le_bytes());
        assert!(decode_flo(&negative, p).is_err());
        assert!(decode_flo(b"PIE", p).is_err());
        let mut nan = Array3::zeros((1, 1, 2));
        nan[[0, 0, 1]] = f64::NAN;
        assert!(matches!(encode_flo(nan.view(), p), Err(Error::NonFinite(_))));
    }
}
