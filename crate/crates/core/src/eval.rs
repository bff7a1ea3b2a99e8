//! Temporal consistency measurements: endpoint error between flow fields, an
//! exhaustive block-matching flow estimator, photometric warp error and the
//! horizontal scan image.

use std::fmt;

use ndarray::{Array3, Array4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{destination, FlowDirection, FlowField, OcclusionMask, Video};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpeReport {
    pub mean_epe: f64,
    pub frac_gt_1: f64,
    pub frac_gt_3: f64,
    pub frac_gt_5: f64,
    /// Pixels that entered the statistics.
    pub pixels: usize,
}

impl fmt::Display for EpeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mean_epe={:.6}", self.mean_epe)?;
        writeln!(f, "frac_gt_1px={:.6}", self.frac_gt_1)?;
        writeln!(f, "frac_gt_3px={:.6}", self.frac_gt_3)?;
        writeln!(f, "frac_gt_5px={:.6}", self.frac_gt_5)?;
        write!(f, "pixels={}", self.pixels)
    }
}

/// Mean Euclidean distance between corresponding displacement vectors, and
/// the share of pixels whose distance strictly exceeds 1, 3 and 5 pixels.
/// Pixels flagged in `mask` are left out.
pub fn endpoint_error(a: &FlowField, b: &FlowField, mask: Option<&OcclusionMask>) -> Result<EpeReport> {
    if a.data().dim() != b.data().dim() {
        return Err(Error::Shape(format!(
            "flow shapes differ: {:?} vs {:?}",
            a.data().dim(),
            b.data().dim()
        )));
    }
    if a.direction() != b.direction() {
        return Err(Error::Shape("flow directions differ".into()));
    }
    if let Some(m) = mask {
        m.check_matches(a, "evaluation")?;
    }
    let (slices, h, w) = (a.frames() - 1, a.height(), a.width());
    let mut sum = 0.0;
    let mut over = [0usize; 3];
    let mut pixels = 0usize;
    for i in 0..slices {
        for y in 0..h {
            for x in 0..w {
                if mask.is_some_and(|m| m.is_occluded(i, y, x)) {
                    continue;
                }
                let (ay, ax) = a.at(i, y, x);
                let (by, bx) = b.at(i, y, x);
                let d = (ay - by).hypot(ax - bx);
                sum += d;
                pixels += 1;
                for (count, limit) in over.iter_mut().zip([1.0, 3.0, 5.0]) {
                    if d > limit {
                        *count += 1;
                    }
                }
            }
        }
    }
    if pixels == 0 {
        return Ok(EpeReport {
            mean_epe: 0.0,
            frac_gt_1: 0.0,
            frac_gt_3: 0.0,
            frac_gt_5: 0.0,
            pixels: 0,
        });
    }
    let p = pixels as f64;
    Ok(EpeReport {
        mean_epe: sum / p,
        frac_gt_1: over[0] as f64 / p,
        frac_gt_3: over[1] as f64 / p,
        frac_gt_5: over[2] as f64 / p,
        pixels,
    })
}

/// Backward flow by exhaustive block matching: for each pixel of frame
/// `i + 1`, the integer displacement into frame `i` within `search_radius`
/// minimizing the mean squared patch difference over the patch pixels that
/// fall inside both frames. Ties go to the smallest displacement, then to the
/// first in row-major order.
pub fn block_matching_flow(video: &Video, search_radius: usize, patch: usize) -> Result<FlowField> {
    let (frames, channels, h, w) = video.dim();
    if frames < 2 {
        return Err(Error::param("video", "block matching needs at least two frames"));
    }
    if search_radius < 1 {
        return Err(Error::param("search_radius", "must be at least 1"));
    }
    if patch < 1 {
        return Err(Error::param("patch", "must be at least 1"));
    }
    if h < patch || w < patch {
        return Err(Error::Shape(format!("frame {h}×{w} is smaller than patch {patch}")));
    }

    let r = search_radius as isize;
    let mut candidates: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dy, dx))).collect();
    candidates.sort_by_key(|&(dy, dx)| (dy * dy + dx * dx, dy, dx));
    let lo = -((patch as isize - 1) / 2);
    let hi = patch as isize / 2;

    let rows: Vec<(usize, usize, Vec<(f64, f64)>)> = (0..frames - 1)
        .flat_map(|i| (0..h).map(move |y| (i, y)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, y)| {
            let row = (0..w)
                .map(|x| {
                    let mut best = f64::INFINITY;
                    let mut best_d = (0isize, 0isize);
                    for &(dy, dx) in &candidates {
                        let (ty, tx) = (y as isize + dy, x as isize + dx);
                        if ty < 0 || tx < 0 || ty >= h as isize || tx >= w as isize {
                            continue;
                        }
                        let mut acc = 0.0;
                        let mut count = 0usize;
                        for py in lo..=hi {
                            for px in lo..=hi {
                                let (sy, sx) = (y as isize + py, x as isize + px);
                                let (cy, cx) = (ty + py, tx + px);
                                if sy < 0
                                    || sx < 0
                                    || cy < 0
                                    || cx < 0
                                    || sy >= h as isize
                                    || sx >= w as isize
                                    || cy >= h as isize
                                    || cx >= w as isize
                                {
                                    continue;
                                }
                                for ch in 0..channels {
                                    let d = video[[i + 1, ch, sy as usize, sx as usize]]
                                        - video[[i, ch, cy as usize, cx as usize]];
                                    acc += d * d;
                                }
                                count += 1;
                            }
                        }
                        let cost = acc / count as f64;
                        if cost < best {
                            best = cost;
                            best_d = (dy, dx);
                        }
                    }
                    (best_d.0 as f64, best_d.1 as f64)
                })
                .collect();
            (i, y, row)
        })
        .collect();

    let mut flows = Array4::zeros((frames - 1, h, w, 2));
    for (i, y, row) in rows {
        for (x, (dy, dx)) in row.into_iter().enumerate() {
            flows[[i, y, x, 0]] = dy;
            flows[[i, y, x, 1]] = dx;
        }
    }
    FlowField::new(flows, FlowDirection::Backward)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpError {
    /// Mean absolute difference per channel over compared pixels.
    pub mean: f64,
    pub compared: usize,
    /// Unoccluded pixels whose correspondent leaves the frame.
    pub out_of_bounds: usize,
}

/// Mean absolute photometric difference between each unoccluded pixel and its
/// rounded flow correspondent in the adjacent frame.
pub fn warp_error(video: &Video, flow: &FlowField, occ: &OcclusionMask) -> Result<WarpError> {
    let (frames, channels, h, w) = video.dim();
    if (frames, h, w) != (flow.frames(), flow.height(), flow.width()) {
        return Err(Error::Shape(format!(
            "video {:?} does not match flow with {} frames of {}×{}",
            video.dim(),
            flow.frames(),
            flow.height(),
            flow.width()
        )));
    }
    occ.check_matches(flow, "warp")?;
    let mut sum = 0.0;
    let mut compared = 0usize;
    let mut out_of_bounds = 0usize;
    for i in 0..frames - 1 {
        let (src, dst) = match flow.direction() {
            FlowDirection::Backward => (i + 1, i),
            FlowDirection::Forward => (i, i + 1),
        };
        for y in 0..h {
            for x in 0..w {
                if occ.is_occluded(i, y, x) {
                    continue;
                }
                let Some((ty, tx)) = destination(flow, i, y, x) else {
                    out_of_bounds += 1;
                    continue;
                };
                for ch in 0..channels {
                    sum += (video[[src, ch, y, x]] - video[[dst, ch, ty, tx]]).abs();
                }
                compared += 1;
            }
        }
    }
    let mean = if compared == 0 {
        0.0
    } else {
        sum / (compared * channels) as f64
    };
    Ok(WarpError {
        mean,
        compared,
        out_of_bounds,
    })
}

/// Default strip width of the horizontal scan.
pub const DEFAULT_SCAN_WIDTH: usize = 20;

/// Concatenates a `width`-wide vertical strip of every frame into one
/// `C × H × (T·width)` image. Frame `i` contributes the strip starting at
/// `column - i·shift_per_frame`, clamped to the frame.
pub fn horizontal_scan(video: &Video, column: usize, width: usize, shift_per_frame: usize) -> Result<Array3<f64>> {
    let (frames, channels, h, w) = video.dim();
    if width == 0 || column + width > w {
        return Err(Error::param(
            "column",
            format!("strip [{column}, {}) does not fit in width {w}", column + width),
        ));
    }
    let mut out = Array3::zeros((channels, h, frames * width));
    for i in 0..frames {
        let start = (column as isize - (i * shift_per_frame) as isize).max(0) as usize;
        for ch in 0..channels {
            for y in 0..h {
                for k in 0..width {
                    out[[ch, y, i * width + k]] = video[[i, ch, y, start + k]];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::s;

    #[test]
    fn epe_of_identical_fields_is_zero() {
        let a = FlowField::new(Array4::from_elem((2, 3, 3, 2), 0.7), FlowDirection::Backward).unwrap();
        let r = endpoint_error(&a, &a, None).unwrap();
        assert_eq!(
            (r.mean_epe, r.frac_gt_1, r.frac_gt_3, r.frac_gt_5),
            (0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn epe_three_four_five() {
        let a = FlowField::zeros(3, 2, 2, FlowDirection::Backward);
        let mut d = Array4::zeros((2, 2, 2, 2));
        d.slice_mut(s![.., .., .., 0]).fill(3.0);
        d.slice_mut(s![.., .., .., 1]).fill(4.0);
        let b = FlowField::new(d, FlowDirection::Backward).unwrap();
        let r = endpoint_error(&a, &b, None).unwrap();
        assert_abs_diff_eq!(r.mean_epe, 5.0);
        assert_eq!((r.frac_gt_1, r.frac_gt_3, r.frac_gt_5), (1.0, 1.0, 0.0));
    }

    #[test]
    fn epe_mask_excludes_pixels() {
        let a = FlowField::zeros(2, 1, 2, FlowDirection::Backward);
        let mut d = Array4::zeros((1, 1, 2, 2));
        d[[0, 0, 0, 1]] = 10.0;
        let b = FlowField::new(d, FlowDirection::Backward).unwrap();
        let mut m = Array3::from_elem((1, 1, 2), false);
        m[[0, 0, 0]] = true;
        let r = endpoint_error(&a, &b, Some(&OcclusionMask::new(m))).unwrap();
        assert_eq!(r.pixels, 1);
        assert_eq!(r.mean_epe, 0.0);
    }

    #[test]
    fn epe_direction_mismatch() {
        let a = FlowField::zeros(2, 1, 2, FlowDirection::Backward);
        let b = FlowField::zeros(2, 1, 2, FlowDirection::Forward);
        assert!(endpoint_error(&a, &b, None).is_err());
    }

    #[test]
    fn block_matching_static_video() {
        let v = Array4::from_shape_fn((3, 1, 6, 6), |(_, _, y, x)| ((y * 7 + x * 3) % 5) as f64);
        let f = block_matching_flow(&v, 2, 3).unwrap();
        assert!(f.data().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn block_matching_rejects_tiny_frames() {
        let v = Array4::zeros((2, 1, 2, 2));
        assert!(block_matching_flow(&v, 1, 3).is_err());
    }

    #[test]
    fn warp_error_zero_for_static_and_positive_for_changes() {
        let v = Array4::from_shape_fn((3, 1, 4, 4), |(_, _, y, x)| (y + x) as f64);
        let f = FlowField::zeros(3, 4, 4, FlowDirection::Backward);
        let occ = OcclusionMask::none_for(&f);
        assert_eq!(warp_error(&v, &f, &occ).unwrap().mean, 0.0);
        let u = Array4::from_shape_fn((3, 1, 4, 4), |(i, _, y, x)| (i * y + x) as f64);
        assert!(warp_error(&u, &f, &occ).unwrap().mean > 0.0);
    }

    #[test]
    fn scan_shapes_and_bands() {
        let v = Array4::from_shape_fn((5, 1, 4, 30), |(i, ..)| i as f64);
        let scan = horizontal_scan(&v, 5, DEFAULT_SCAN_WIDTH, 0).unwrap();
        assert_eq!(scan.dim(), (1, 4, 100));
        for i in 0..5 {
            assert!(scan
                .slice(s![.., .., i * 20..(i + 1) * 20])
                .iter()
                .all(|&p| p == i as f64));
        }
        assert!(horizontal_scan(&v, 11, 20, 0).is_err());
    }

    #[test]
    fn scan_shift_clamps_at_left_edge() {
        let v = Array4::from_shape_fn((3, 1, 1, 6), |(_, _, _, x)| x as f64);
        let scan = horizontal_scan(&v, 2, 2, 2).unwrap();
        assert_eq!(scan.slice(s![0, 0, ..]).to_vec(), vec![2.0, 3.0, 0.0, 1.0, 0.0, 1.0]);
    }
}
