//! Trajectory harmonizers: the global pixel repository with its closed-form
//! unweighted average, and the Gaussian-smoothed local variant that convolves
//! each trajectory along time.

use std::collections::HashMap;

use ndarray::{Array2, Array4};

use crate::coding::{decode, EncodedFrames};
use crate::error::{Error, Result};
use crate::flow::Video;

/// One value per trajectory code, plus the number of pixels carrying it.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelRepository {
    slots: Array2<f64>,
    counts: Vec<u64>,
}

impl PixelRepository {
    pub fn new(slots: Array2<f64>, counts: Vec<u64>) -> Self {
        Self { slots, counts }
    }

    /// `n × C` slot values.
    pub fn slots(&self) -> &Array2<f64> {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut Array2<f64> {
        &mut self.slots
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.slots.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.nrows() == 0
    }
}

/// Replaces every pixel by the mean of all pixels sharing its code.
///
/// The mean is the least-squares minimizer of the distance between the
/// decoded repository and `x`. Unused codes keep a zero slot.
pub fn harmonize_global(x: &Video, enc: &EncodedFrames) -> Result<(Video, PixelRepository)> {
    let repo = build_repository(x, enc)?;
    let out = decode(&repo, enc)?;
    Ok((out, repo))
}

/// Slot values minimizing the trajectory consistency loss for `x`.
pub fn build_repository(x: &Video, enc: &EncodedFrames) -> Result<PixelRepository> {
    enc.check_video(x.dim(), "video")?;
    let n = enc.n() as usize;
    let channels = x.dim().1;
    let mut counts = vec![0u64; n];
    // sums are shifted by each group's first sample so already-equal groups
    // reproduce their value exactly
    let mut first = Array2::<f64>::zeros((n, channels));
    let mut shifted = Array2::<f64>::zeros((n, channels));

    for ((i, y, xx), &code) in enc.codes().indexed_iter() {
        let c = code as usize;
        if c >= n {
            return Err(Error::CodeOutOfRange { code, len: n });
        }
        if counts[c] == 0 {
            for ch in 0..channels {
                first[[c, ch]] = x[[i, ch, y, xx]];
            }
        } else {
            for ch in 0..channels {
                shifted[[c, ch]] += x[[i, ch, y, xx]] - first[[c, ch]];
            }
        }
        counts[c] += 1;
    }

    let mut slots = first;
    for (c, &count) in counts.iter().enumerate() {
        if count > 1 {
            for ch in 0..channels {
                slots[[c, ch]] += shifted[[c, ch]] / count as f64;
            }
        }
    }
    Ok(PixelRepository { slots, counts })
}

/// Repository holding, per code, the value of the first pixel that carries it
/// in frame order. Serves as the unharmonized baseline for loss reporting.
pub fn first_occurrence_repository(x: &Video, enc: &EncodedFrames) -> Result<PixelRepository> {
    enc.check_video(x.dim(), "video")?;
    let n = enc.n() as usize;
    let channels = x.dim().1;
    let mut counts = vec![0u64; n];
    let mut slots = Array2::<f64>::zeros((n, channels));
    for ((i, y, xx), &code) in enc.codes().indexed_iter() {
        let c = code as usize;
        if c >= n {
            return Err(Error::CodeOutOfRange { code, len: n });
        }
        if counts[c] == 0 {
            for ch in 0..channels {
                slots[[c, ch]] = x[[i, ch, y, xx]];
            }
        }
        counts[c] += 1;
    }
    Ok(PixelRepository { slots, counts })
}

/// Temporal consistency loss: Euclidean norm of `decode(repo) - x`.
pub fn consistency_loss(repo: &PixelRepository, enc: &EncodedFrames, x: &Video) -> Result<f64> {
    enc.check_video(x.dim(), "video")?;
    let decoded = decode(repo, enc)?;
    Ok(decoded
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Coordinate of one pixel in a video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PixelCoord {
    pub frame: u32,
    pub y: u32,
    pub x: u32,
}

/// Per-code pixel lists in temporal order, stored as a compressed index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InverseRepository {
    offsets: Vec<usize>,
    coords: Vec<PixelCoord>,
    dim: (usize, usize, usize),
}

impl InverseRepository {
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn trajectory(&self, code: usize) -> &[PixelCoord] {
        &self.coords[self.offsets[code]..self.offsets[code + 1]]
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &[PixelCoord]> + '_ {
        self.offsets.windows(2).map(move |w| &self.coords[w[0]..w[1]])
    }

    pub fn longest(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Frames × height × width of the encoded video.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.dim
    }
}

/// Counting sort of pixels by code. A single row-major pass keeps each list
/// sorted by frame.
pub fn build_inverse_repository(enc: &EncodedFrames) -> Result<InverseRepository> {
    let n = enc.n() as usize;
    let mut offsets = vec![0usize; n + 1];
    for &code in enc.codes().iter() {
        if code as usize >= n {
            return Err(Error::CodeOutOfRange { code, len: n });
        }
        offsets[code as usize + 1] += 1;
    }
    for c in 0..n {
        offsets[c + 1] += offsets[c];
    }
    let mut cursor = offsets[..n].to_vec();
    let mut coords = vec![PixelCoord { frame: 0, y: 0, x: 0 }; enc.codes().len()];
    for ((i, y, x), &code) in enc.codes().indexed_iter() {
        let slot = &mut cursor[code as usize];
        coords[*slot] = PixelCoord {
            frame: i as u32,
            y: y as u32,
            x: x as u32,
        };
        *slot += 1;
    }
    Ok(InverseRepository {
        offsets,
        coords,
        dim: enc.dim(),
    })
}

/// Normalized symmetric 1D kernel used by the local harmonizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    taps: Vec<f64>,
    sigma: f64,
}

/// Maps a smoothing seed to a Gaussian standard deviation: `100^s + 0.2`.
pub fn sigma_from_seed(seed: f64) -> f64 {
    100f64.powf(seed) + 0.2
}

/// Seeds `-1.0, -0.8, ..., 0.0`.
pub fn sigma_seed_grid() -> Vec<f64> {
    (0..=5).map(|k| -1.0 + 0.2 * k as f64).collect()
}

/// Discrete Gaussian with `length + 1` taps centred on tap `length / 2`,
/// normalized to sum to one.
pub fn gaussian_kernel(length: usize, sigma: f64) -> Result<SmoothingKernel> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    if length % 2 != 0 {
        return Err(Error::param("kernel_length", format!("must be even, got {length}")));
    }
    let center = (length / 2) as f64;
    let raw: Vec<f64> = (0..=length)
        .map(|x| {
            let z = (x as f64 - center) / sigma;
            (-0.5 * z * z).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let taps: Vec<f64> = raw.iter().map(|v| v / total).collect();
    if taps.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::param(
            "sigma",
            format!("sigma {sigma} underflows the outer taps of a length-{length} kernel"),
        ));
    }
    Ok(SmoothingKernel { taps, sigma })
}

impl SmoothingKernel {
    /// Box kernel with `length + 1` equal taps (the `sigma -> inf` limit).
    pub fn flat(length: usize) -> Result<Self> {
        if length % 2 != 0 {
            return Err(Error::param("kernel_length", format!("must be even, got {length}")));
        }
        let tap = 1.0 / (length + 1) as f64;
        Ok(Self {
            taps: vec![tap; length + 1],
            sigma: f64::INFINITY,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn length(&self) -> usize {
        self.taps.len() - 1
    }

    /// Ratio of the largest to the smallest tap.
    pub fn ratio(&self) -> f64 {
        let max = self.taps.iter().copied().fold(f64::MIN, f64::max);
        let min = self.taps.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    /// Sparse `len × len` operator applying this kernel to a sequence of
    /// length `len` under edge-repeating symmetric reflection.
    ///
    /// The sequence is extended periodically as `x0..x{L-1}, x{L-1}..x0`, so
    /// kernels longer than the sequence stay well defined and every sample
    /// appears equally often per period.
    fn operator(&self, len: usize) -> Vec<Vec<(usize, f64)>> {
        if len == 1 {
            return vec![vec![(0, 1.0)]];
        }
        let period = 2 * len;
        let half = self.length() / 2;
        let mut folded = vec![0.0; period];
        for (k, &tap) in self.taps.iter().enumerate() {
            let offset = (k as isize - half as isize).rem_euclid(period as isize) as usize;
            folded[offset] += tap;
        }
        let bins: Vec<(usize, f64)> = folded.into_iter().enumerate().filter(|&(_, w)| w != 0.0).collect();
        (0..len)
            .map(|i| {
                bins.iter()
                    .map(|&(p, w)| {
                        let m = (i + p) % period;
                        let j = if m < len { m } else { period - 1 - m };
                        (j, w)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Smooths each trajectory along time with `kernel` and scatters the result
/// back to its pixels. Trajectories are reflection-padded so their length is
/// preserved.
pub fn harmonize_local(x: &Video, inv: &InverseRepository, kernel: &SmoothingKernel) -> Result<Video> {
    let (frames, channels, h, w) = x.dim();
    if (frames, h, w) != inv.dim() {
        return Err(Error::Shape(format!(
            "video has frames×height×width ({frames}, {h}, {w}), inverse repository has {:?}",
            inv.dim()
        )));
    }
    let mut out = Array4::zeros(x.dim());
    let mut operators: HashMap<usize, Vec<Vec<(usize, f64)>>> = HashMap::new();
    let mut values = Vec::new();
    for traj in inv.trajectories() {
        if traj.is_empty() {
            continue;
        }
        let op = operators
            .entry(traj.len())
            .or_insert_with(|| kernel.operator(traj.len()));
        for ch in 0..channels {
            values.clear();
            values.extend(
                traj.iter()
                    .map(|p| x[[p.frame as usize, ch, p.y as usize, p.x as usize]]),
            );
            for (row, p) in op.iter().zip(traj) {
                let v: f64 = row.iter().map(|&(j, wt)| wt * values[j]).sum();
                out[[p.frame as usize, ch, p.y as usize, p.x as usize]] = v;
            }
        }
    }
    Ok(out)
}

/// Which harmonizer mixes the pixels of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum HarmonizerKind {
    Global,
    Local(SmoothingKernel),
}

/// A harmonizer bound to one set of codes.
#[derive(Debug, Clone)]
pub struct Harmonizer {
    enc: EncodedFrames,
    kind: HarmonizerKind,
    inverse: Option<InverseRepository>,
}

impl Harmonizer {
    pub fn new(enc: EncodedFrames, kind: HarmonizerKind) -> Result<Self> {
        let inverse = match kind {
            HarmonizerKind::Global => None,
            HarmonizerKind::Local(_) => Some(build_inverse_repository(&enc)?),
        };
        Ok(Self { enc, kind, inverse })
    }

    pub fn global(enc: EncodedFrames) -> Self {
        Self {
            enc,
            kind: HarmonizerKind::Global,
            inverse: None,
        }
    }

    pub fn codes(&self) -> &EncodedFrames {
        &self.enc
    }

    pub fn kind(&self) -> &HarmonizerKind {
        &self.kind
    }

    pub fn apply(&self, x: &Video) -> Result<Video> {
        match (&self.kind, &self.inverse) {
            (HarmonizerKind::Global, _) => Ok(harmonize_global(x, &self.enc)?.0),
            (HarmonizerKind::Local(kernel), Some(inv)) => harmonize_local(x, inv, kernel),
            (HarmonizerKind::Local(_), None) => unreachable!("local harmonizer built without inverse repository"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr3, s, Array3};

    fn video_from(frames: &[&[f64]], h: usize, w: usize) -> Video {
        let mut v = Array4::zeros((frames.len(), 1, h, w));
        for (i, f) in frames.iter().enumerate() {
            for (k, &val) in f.iter().enumerate() {
                v[[i, 0, k / w, k % w]] = val;
            }
        }
        v
    }

    #[test]
    fn singleton_groups_are_untouched() {
        let x = Array4::from_shape_fn((2, 3, 2, 2), |(a, b, c, d)| (a * 7 + b * 3 + c * 5 + d) as f64 * 0.37);
        let enc = EncodedFrames::distinct(2, 2, 2);
        let (out, _) = harmonize_global(&x, &enc).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn shared_code_takes_mean() {
        let x = video_from(&[&[1.0, 2.0, 3.0, 4.0]], 2, 2);
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 0], [0, 1]]]), 2, 0);
        let (out, repo) = harmonize_global(&x, &enc).unwrap();
        assert_eq!(repo.slots()[[0, 0]], 2.0);
        assert_eq!(repo.counts(), &[3, 1]);
        assert_eq!(out.slice(s![0, 0, .., ..]), ndarray::arr2(&[[2.0, 2.0], [2.0, 4.0]]));
    }

    #[test]
    fn harmonizing_twice_is_bit_identical() {
        let x = video_from(&[&[0.1, 0.2, 0.7], &[0.3, 0.1, 0.9], &[0.2, 0.35, 0.11]], 1, 3);
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 1, 2]], [[0, 0, 2]], [[1, 0, 2]]]), 3, 0);
        let (once, _) = harmonize_global(&x, &enc).unwrap();
        let (twice, _) = harmonize_global(&once, &enc).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn loss_drops_for_shared_pair() {
        let x = video_from(&[&[0.0], &[1.0]], 1, 1);
        let enc = EncodedFrames::from_parts(Array3::zeros((2, 1, 1)), 1, 0);
        let before = consistency_loss(&first_occurrence_repository(&x, &enc).unwrap(), &enc, &x).unwrap();
        let after = consistency_loss(&build_repository(&x, &enc).unwrap(), &enc, &x).unwrap();
        assert_abs_diff_eq!(before, 1.0);
        assert_abs_diff_eq!(after, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn video_shape_mismatch() {
        let x = Array4::zeros((2, 1, 2, 2));
        let enc = EncodedFrames::distinct(3, 2, 2);
        assert!(matches!(harmonize_global(&x, &enc), Err(Error::Shape(_))));
    }

    #[test]
    fn inverse_repository_single_trajectory() {
        let enc = EncodedFrames::from_parts(Array3::zeros((3, 1, 1)), 1, 0);
        let inv = build_inverse_repository(&enc).unwrap();
        let frames: Vec<u32> = inv.trajectory(0).iter().map(|p| p.frame).collect();
        assert_eq!(frames, vec![0, 1, 2]);
        assert_eq!(inv.longest(), 3);
    }

    #[test]
    fn inverse_repository_distinct_codes_are_singletons() {
        let enc = EncodedFrames::distinct(2, 3, 2);
        let inv = build_inverse_repository(&enc).unwrap();
        assert_eq!(inv.n(), 12);
        assert!(inv.trajectories().all(|t| t.len() == 1));
    }

    #[test]
    fn kernel_single_tap() {
        let k = gaussian_kernel(0, 0.5).unwrap();
        assert_eq!(k.taps(), &[1.0]);
        assert_eq!(k.ratio(), 1.0);
    }

    #[test]
    fn kernel_three_taps() {
        // exp(-1/2) / (1 + 2 exp(-1/2)) and 1 / (1 + 2 exp(-1/2))
        let e = (-0.5f64).exp();
        let k = gaussian_kernel(2, 1.0).unwrap();
        assert_abs_diff_eq!(k.taps()[0], e / (1.0 + 2.0 * e), epsilon = 1e-15);
        assert_abs_diff_eq!(k.taps()[1], 1.0 / (1.0 + 2.0 * e), epsilon = 1e-15);
        assert_abs_diff_eq!(k.taps()[0], 0.27406, epsilon = 1e-5);
        assert_abs_diff_eq!(k.taps()[1], 0.45186, epsilon = 1e-5);
        assert_abs_diff_eq!(k.ratio(), 1.6487, epsilon = 1e-4);
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(gaussian_kernel(3, 1.0).is_err());
        assert!(gaussian_kernel(2, 0.0).is_err());
        assert!(gaussian_kernel(2, -1.0).is_err());
        assert!(gaussian_kernel(400, 0.21).is_err());
    }

    #[test]
    fn sigma_seed_grid_gives_six_increasing_sigmas() {
        let sigmas: Vec<f64> = sigma_seed_grid().into_iter().map(sigma_from_seed).collect();
        assert_eq!(sigmas.len(), 6);
        assert_abs_diff_eq!(sigmas[0], 0.21, epsilon = 1e-12);
        assert_abs_diff_eq!(sigmas[1], 100f64.powf(-0.8) + 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(sigmas[5], 1.2, epsilon = 1e-12);
        let ratios: Vec<f64> = sigmas.iter().map(|&s| gaussian_kernel(8, s).unwrap().ratio()).collect();
        assert!(ratios.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn reflection_operator_mirrors_whole_samples() {
        // length-3 sequence with a 5-tap kernel reads [b, a | a, b, c | c, b]
        let k = SmoothingKernel::flat(4).unwrap();
        let op = k.operator(3);
        let mut dense = [[0.0; 3]; 3];
        for (i, row) in op.iter().enumerate() {
            for &(j, w) in row {
                dense[i][j] += w;
            }
        }
        assert_abs_diff_eq!(dense[0][0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[0][1], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[0][2], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[1][0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[1][2], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn local_on_singletons_is_identity() {
        let x = Array4::from_shape_fn((3, 2, 2, 2), |(a, b, c, d)| {
            ((a + 1) * (b + 2) * (c + 3) + d) as f64 * 0.1
        });
        let inv = build_inverse_repository(&EncodedFrames::distinct(3, 2, 2)).unwrap();
        let out = harmonize_local(&x, &inv, &gaussian_kernel(8, 0.5).unwrap()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn local_spike_spreads_and_keeps_sum() {
        let x = video_from(&[&[0.0], &[0.0], &[10.0], &[0.0], &[0.0]], 1, 1);
        let enc = EncodedFrames::from_parts(Array3::zeros((5, 1, 1)), 1, 0);
        let inv = build_inverse_repository(&enc).unwrap();
        let k = gaussian_kernel(2, 1.0).unwrap();
        let out = harmonize_local(&x, &inv, &k).unwrap();
        // direct convolution of the padded sequence [0, 0,0,10,0,0, 0]
        let expected = [0.0, 10.0 * k.taps()[0], 10.0 * k.taps()[1], 10.0 * k.taps()[2], 0.0];
        for (i, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(out[[i, 0, 0, 0]], e, epsilon = 1e-12);
        }
        assert!(out[[2, 0, 0, 0]] < 10.0);
        assert!(out[[1, 0, 0, 0]] > 0.0 && out[[3, 0, 0, 0]] > 0.0);
        assert_abs_diff_eq!(out.sum(), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn local_shape_mismatch() {
        let inv = build_inverse_repository(&EncodedFrames::distinct(2, 2, 2)).unwrap();
        let x = Array4::zeros((2, 1, 3, 2));
        assert!(harmonize_local(&x, &inv, &SmoothingKernel::flat(2).unwrap()).is_err());
    }
}
