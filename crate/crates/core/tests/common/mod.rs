#![allow(dead_code)]

use std::collections::HashMap;

use flowmed::{EncodedFrames, FlowDirection, FlowField, OcclusionMask};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Where a trajectory starts: the frame and pixel that first saw its point.
pub type Origin = (usize, usize, usize);

fn round_half_away(v: f64) -> f64 {
    if v >= 0.0 {
        (v + 0.5).floor()
    } else {
        -((-v + 0.5).floor())
    }
}

/// Follows a pixel backward through the flows, one frame at a time, until it
/// reaches the anchor or a pixel without a valid correspondent.
///
/// Works on backward flows in processing order; forward inputs are handled by
/// the caller through explicit index reversal.
fn trace_origin(flows: &Array4<f64>, occ: &Array3<bool>, frame: usize, y: usize, x: usize) -> Origin {
    let (h, w) = (flows.dim().1, flows.dim().2);
    let (mut i, mut y, mut x) = (frame, y, x);
    while i > 0 {
        let s = i - 1;
        if occ[[s, y, x]] {
            return (i, y, x);
        }
        let ty = round_half_away(y as f64 + flows[[s, y, x, 0]]);
        let tx = round_half_away(x as f64 + flows[[s, y, x, 1]]);
        if ty < 0.0 || tx < 0.0 || ty >= h as f64 || tx >= w as f64 {
            return (i, y, x);
        }
        i -= 1;
        y = ty as usize;
        x = tx as usize;
    }
    (0, y, x)
}

/// Origin of every pixel, in the original frame order.
pub fn trajectory_origins(flow: &FlowField, occ: &OcclusionMask) -> Array3<Origin> {
    let frames = flow.frames();
    let (h, w) = (flow.height(), flow.width());
    let (flows, masks) = match flow.direction() {
        FlowDirection::Backward => (flow.data().clone(), occ.data().clone()),
        FlowDirection::Forward => {
            // reverse the slice order by hand
            let slices = frames - 1;
            let f = Array4::from_shape_fn(flow.data().dim(), |(s, y, x, c)| flow.data()[[slices - 1 - s, y, x, c]]);
            let m = Array3::from_shape_fn(occ.data().dim(), |(s, y, x)| occ.data()[[slices - 1 - s, y, x]]);
            (f, m)
        }
    };
    Array3::from_shape_fn((frames, h, w), |(i, y, x)| {
        let processed = match flow.direction() {
            FlowDirection::Backward => i,
            FlowDirection::Forward => frames - 1 - i,
        };
        trace_origin(&flows, &masks, processed, y, x)
    })
}

/// True when codes and origins induce the same partition of pixels.
pub fn same_partition(enc: &EncodedFrames, origins: &Array3<Origin>) -> bool {
    if enc.dim() != origins.dim() {
        return false;
    }
    let mut by_code: HashMap<u64, Origin> = HashMap::new();
    let mut by_origin: HashMap<Origin, u64> = HashMap::new();
    for (&code, &origin) in enc.codes().iter().zip(origins.iter()) {
        if *by_code.entry(code).or_insert(origin) != origin {
            return false;
        }
        if *by_origin.entry(origin).or_insert(code) != code {
            return false;
        }
    }
    true
}

pub struct RandomFlow {
    pub flow: FlowField,
    pub occ: OcclusionMask,
}

/// Random flows in `[-max_disp, max_disp]` with roughly `occ_rate` occlusion.
pub fn random_flow(
    rng: &mut ChaCha8Rng,
    frames: usize,
    h: usize,
    w: usize,
    max_disp: f64,
    occ_rate: f64,
    direction: FlowDirection,
) -> RandomFlow {
    let flows = Array4::from_shape_simple_fn((frames - 1, h, w, 2), || rng.random_range(-max_disp..=max_disp));
    let masks = Array3::from_shape_simple_fn((frames - 1, h, w), || rng.random_bool(occ_rate));
    RandomFlow {
        flow: FlowField::new(flows, direction).unwrap(),
        occ: OcclusionMask::new(masks),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_video(rng: &mut ChaCha8Rng, dim: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(dim, || rng.random::<f64>())
}

/// Random codes with every value in `[0, n)` used at least once.
pub fn random_codes(rng: &mut ChaCha8Rng, frames: usize, h: usize, w: usize, n: usize) -> EncodedFrames {
    let total = frames * h * w;
    assert!(n >= 1 && n <= total);
    let mut values: Vec<u64> = (0..n as u64).collect();
    values.extend((n..total).map(|_| rng.random_range(0..n as u64)));
    for i in (1..values.len()).rev() {
        let j = rng.random_range(0..=i);
        values.swap(i, j);
    }
    EncodedFrames::from_parts(Array3::from_shape_vec((frames, h, w), values).unwrap(), n as u64, 0)
}
