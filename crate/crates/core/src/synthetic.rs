//! Synthetic scenes with exact flows, for benchmarks and tests.

use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, FlowField, OcclusionMask, Video};

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub video: Video,
    /// Backward flows, exact.
    pub flows: FlowField,
    pub occlusions: OcclusionMask,
}

/// A random texture panned by `shift = (dy, dx)` pixels per frame. Pixels
/// whose source lies outside the previous frame are marked occluded.
pub fn translating_texture(
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    shift: (isize, isize),
    seed: u64,
) -> Result<SyntheticScene> {
    if frames == 0 || channels == 0 || height == 0 || width == 0 {
        return Err(Error::param("scene", "all dimensions must be positive"));
    }
    let (sy, sx) = shift;
    let span_y = height + (frames - 1) * sy.unsigned_abs();
    let span_x = width + (frames - 1) * sx.unsigned_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = Array3::from_shape_simple_fn((channels, span_y, span_x), || rng.random::<f64>());
    // texture origin for frame 0, so every frame stays inside the texture
    let oy = if sy > 0 { (frames - 1) as isize * sy } else { 0 };
    let ox = if sx > 0 { (frames - 1) as isize * sx } else { 0 };

    let video = Array4::from_shape_fn((frames, channels, height, width), |(i, c, y, x)| {
        let ty = y as isize - i as isize * sy + oy;
        let tx = x as isize - i as isize * sx + ox;
        texture[[c, ty as usize, tx as usize]]
    });

    let slices = frames - 1;
    let mut flows = Array4::zeros((slices, height, width, 2));
    let mut occ = Array3::from_elem((slices, height, width), false);
    for i in 0..slices {
        for y in 0..height {
            for x in 0..width {
                flows[[i, y, x, 0]] = -sy as f64;
                flows[[i, y, x, 1]] = -sx as f64;
                let (py, px) = (y as isize - sy, x as isize - sx);
                occ[[i, y, x]] = py < 0 || px < 0 || py >= height as isize || px >= width as isize;
            }
        }
    }
    Ok(SyntheticScene {
        video,
        flows: FlowField::new(flows, FlowDirection::Backward)?,
        occlusions: OcclusionMask::new(occ),
    })
}
