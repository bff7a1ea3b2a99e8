//! Flow coding: assigns every video pixel an integer code naming the scene
//! point it views, by propagating codes along flow trajectories.

use std::fmt;

use ndarray::{s, Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::flow::{destination, FlowDirection, FlowField, OcclusionMask, Video};
use crate::harmonize::PixelRepository;

/// Trajectory codes for a `T × H × W` video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedFrames {
    codes: Array3<u64>,
    n: u64,
    anchor: usize,
}

impl EncodedFrames {
    /// Wraps raw codes. `n` is taken as one past the largest code; the anchor
    /// is frame 0 unless only the last frame carries the row-major identity.
    pub fn from_codes(codes: Array3<u64>) -> Self {
        let n = codes.iter().copied().max().map_or(0, |m| m + 1);
        let last = codes.len_of(Axis(0)).saturating_sub(1);
        let anchor = if !is_identity_frame(&codes, 0) && is_identity_frame(&codes, last) {
            last
        } else {
            0
        };
        Self { codes, n, anchor }
    }

    /// Wraps raw codes with an explicit code count and anchor frame, without
    /// validation. Use [`validate_codes`] to check them.
    pub fn from_parts(codes: Array3<u64>, n: u64, anchor: usize) -> Self {
        Self { codes, n, anchor }
    }

    /// Every pixel gets its own code; harmonization becomes the identity.
    pub fn distinct(frames: usize, height: usize, width: usize) -> Self {
        let total = frames * height * width;
        let codes = Array3::from_shape_vec((frames, height, width), (0..total as u64).collect())
            .expect("shape matches element count");
        Self {
            codes,
            n: total as u64,
            anchor: 0,
        }
    }

    pub fn codes(&self) -> &Array3<u64> {
        &self.codes
    }

    pub fn into_codes(self) -> Array3<u64> {
        self.codes
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn frames(&self) -> usize {
        self.codes.len_of(Axis(0))
    }

    pub fn height(&self) -> usize {
        self.codes.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.codes.len_of(Axis(2))
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.codes.dim()
    }

    pub fn check_video(&self, video_dim: (usize, usize, usize, usize), what: &str) -> Result<()> {
        let (t, _, h, w) = video_dim;
        if (t, h, w) != self.codes.dim() {
            return Err(Error::Shape(format!(
                "{what} has frames×height×width ({t}, {h}, {w}), codes have {:?}",
                self.codes.dim()
            )));
        }
        Ok(())
    }
}

fn is_identity_frame(codes: &Array3<u64>, frame: usize) -> bool {
    if frame >= codes.len_of(Axis(0)) {
        return false;
    }
    codes
        .slice(s![frame, .., ..])
        .iter()
        .enumerate()
        .all(|(i, &c)| c == i as u64)
}

/// Encodes a video from its flows and occlusions.
///
/// Backward flows are processed directly with frame 0 as the anchor. Forward
/// flows are temporally flipped together with their masks, encoded as
/// backward flows, and the resulting codes flipped back, which makes the last
/// frame the anchor. Destinations that leave the frame count as occluded.
pub fn flow_code(flow: &FlowField, occ: &OcclusionMask) -> Result<EncodedFrames> {
    occ.check_matches(flow, "adjacent")?;
    match flow.direction() {
        FlowDirection::Backward => Ok(encode_backward(flow, occ, None)),
        FlowDirection::Forward => Ok(flip_codes(encode_backward(&flow.flipped(), &occ.flipped(), None))),
    }
}

/// Encodes with additional flows to a more distant frame.
///
/// For backward flows, slice `i` of `flow_dist` maps frame `i + 1` to frame
/// `max(i - gap, 0)`. For forward flows, slice `i` maps frame `i` to frame
/// `min(i + 1 + gap, T - 1)`. A pixel takes the code of its distant
/// correspondent when both the distant and the adjacent correspondences are
/// valid, the adjacent code when only the adjacent one is, and a fresh code
/// otherwise.
pub fn flow_code_distant(
    flow_adj: &FlowField,
    occ_adj: &OcclusionMask,
    flow_dist: &FlowField,
    occ_dist: &OcclusionMask,
    gap: usize,
) -> Result<EncodedFrames> {
    if gap < 1 {
        return Err(Error::param("gap", "frame gap must be at least 1"));
    }
    occ_adj.check_matches(flow_adj, "adjacent")?;
    occ_dist.check_matches(flow_dist, "distant")?;
    if flow_dist.data().dim() != flow_adj.data().dim() {
        return Err(Error::Shape(format!(
            "distant flow shape {:?} differs from adjacent flow shape {:?}",
            flow_dist.data().dim(),
            flow_adj.data().dim()
        )));
    }
    if flow_dist.direction() != flow_adj.direction() {
        return Err(Error::Shape("distant and adjacent flows differ in direction".into()));
    }
    match flow_adj.direction() {
        FlowDirection::Backward => Ok(encode_backward(flow_adj, occ_adj, Some((flow_dist, occ_dist, gap)))),
        FlowDirection::Forward => {
            let dist = flow_dist.flipped();
            let dist_occ = occ_dist.flipped();
            Ok(flip_codes(encode_backward(
                &flow_adj.flipped(),
                &occ_adj.flipped(),
                Some((&dist, &dist_occ, gap)),
            )))
        }
    }
}

fn encode_backward(
    flow: &FlowField,
    occ: &OcclusionMask,
    distant: Option<(&FlowField, &OcclusionMask, usize)>,
) -> EncodedFrames {
    let (frames, h, w) = (flow.frames(), flow.height(), flow.width());
    let mut codes = Array3::<u64>::zeros((frames, h, w));
    let mut n = (h * w) as u64;
    for (i, c) in codes.slice_mut(s![0, .., ..]).iter_mut().enumerate() {
        *c = i as u64;
    }

    for i in 0..frames - 1 {
        let dist_src = distant.map(|(_, _, gap)| i.saturating_sub(gap));
        for y in 0..h {
            for x in 0..w {
                let adjacent = if occ.is_occluded(i, y, x) {
                    None
                } else {
                    destination(flow, i, y, x)
                };
                let far = match distant {
                    Some((dflow, docc, _)) if !docc.is_occluded(i, y, x) => destination(dflow, i, y, x),
                    _ => None,
                };
                // fresh codes are handed out in row-major order
                codes[[i + 1, y, x]] = match (adjacent, far, dist_src) {
                    (Some(_), Some((fy, fx)), Some(src)) => codes[[src, fy, fx]],
                    (Some((ay, ax)), _, _) => codes[[i, ay, ax]],
                    (None, _, _) => {
                        n += 1;
                        n - 1
                    }
                };
            }
        }
    }

    EncodedFrames { codes, n, anchor: 0 }
}

fn flip_codes(enc: EncodedFrames) -> EncodedFrames {
    let mut codes = enc.codes;
    codes.invert_axis(Axis(0));
    let anchor = codes.len_of(Axis(0)) - 1 - enc.anchor;
    EncodedFrames {
        codes: codes.as_standard_layout().into_owned(),
        n: enc.n,
        anchor,
    }
}

/// Consistency report for a set of codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeReport {
    pub n: u64,
    /// Codes first seen in each frame, walking away from the anchor.
    pub novel_per_frame: Vec<u64>,
    /// Pixels whose code is `>= n`.
    pub range_violations: usize,
    /// Codes in `[0, n)` that no pixel carries.
    pub unused_codes: u64,
    /// Anchor pixels not holding their row-major index.
    pub anchor_violations: usize,
}

impl CodeReport {
    pub fn passed(&self) -> bool {
        self.range_violations == 0 && self.unused_codes == 0 && self.anchor_violations == 0
    }
}

impl fmt::Display for CodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        let novel: Vec<String> = self.novel_per_frame.iter().map(u64::to_string).collect();
        writeln!(f, "novel_per_frame={}", novel.join(","))?;
        writeln!(f, "range_violations={}", self.range_violations)?;
        writeln!(f, "unused_codes={}", self.unused_codes)?;
        writeln!(f, "anchor_violations={}", self.anchor_violations)?;
        write!(f, "status={}", if self.passed() { "pass" } else { "fail" })
    }
}

pub fn validate_codes(enc: &EncodedFrames) -> CodeReport {
    let frames = enc.frames();
    let n = enc.n;
    let mut range_violations = 0;
    let mut seen = vec![false; n as usize];
    let mut novel_per_frame = vec![0u64; frames];

    let order: Vec<usize> = if enc.anchor == 0 {
        (0..frames).collect()
    } else {
        (0..frames).rev().collect()
    };
    for &i in &order {
        for &c in enc.codes.slice(s![i, .., ..]).iter() {
            if c >= n {
                range_violations += 1;
            } else if !seen[c as usize] {
                seen[c as usize] = true;
                novel_per_frame[i] += 1;
            }
        }
    }
    let unused_codes = seen.iter().filter(|&&s| !s).count() as u64;

    let anchor_violations = if enc.anchor < frames {
        enc.codes
            .slice(s![enc.anchor, .., ..])
            .iter()
            .enumerate()
            .filter(|&(i, &c)| c != i as u64)
            .count()
    } else {
        enc.height() * enc.width()
    };

    CodeReport {
        n,
        novel_per_frame,
        range_violations,
        unused_codes,
        anchor_violations,
    }
}

/// Fetches each pixel's value from its repository slot.
pub fn decode(repo: &PixelRepository, enc: &EncodedFrames) -> Result<Video> {
    let (frames, h, w) = enc.dim();
    let slots = repo.slots();
    let channels = slots.ncols();
    let mut out = Array4::zeros((frames, channels, h, w));
    for ((i, y, x), &code) in enc.codes.indexed_iter() {
        if code as usize >= slots.nrows() {
            return Err(Error::CodeOutOfRange {
                code,
                len: slots.nrows(),
            });
        }
        for ch in 0..channels {
            out[[i, ch, y, x]] = slots[[code as usize, ch]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr3, Array2};

    fn backward(flows: Array4<f64>) -> FlowField {
        FlowField::new(flows, FlowDirection::Backward).unwrap()
    }

    #[test]
    fn zero_flow_repeats_anchor() {
        let flow = FlowField::zeros(3, 2, 2, FlowDirection::Backward);
        let enc = flow_code(&flow, &OcclusionMask::none_for(&flow)).unwrap();
        assert_eq!(enc.n(), 4);
        for i in 0..3 {
            assert_eq!(enc.codes().slice(s![i, .., ..]), ndarray::arr2(&[[0, 1], [2, 3]]));
        }
    }

    #[test]
    fn displaced_pixel_pulls_neighbour_code() {
        let mut flows = Array4::zeros((1, 1, 2, 2));
        flows[[0, 0, 0, 1]] = 1.0;
        let flow = backward(flows);
        let enc = flow_code(&flow, &OcclusionMask::none_for(&flow)).unwrap();
        assert_eq!(enc.codes(), &arr3(&[[[0, 1]], [[1, 1]]]));
        assert_eq!(enc.n(), 2);
    }

    #[test]
    fn occluded_pixel_gets_fresh_code() {
        let flow = FlowField::zeros(2, 1, 2, FlowDirection::Backward);
        let mut masks = Array3::from_elem((1, 1, 2), false);
        masks[[0, 0, 0]] = true;
        let enc = flow_code(&flow, &OcclusionMask::new(masks)).unwrap();
        assert_eq!(enc.codes(), &arr3(&[[[0, 1]], [[2, 1]]]));
        assert_eq!(enc.n(), 3);
    }

    #[test]
    fn out_of_frame_destination_is_occluded() {
        let mut flows = Array4::zeros((1, 1, 2, 2));
        flows[[0, 0, 1, 1]] = 1.0;
        let flow = backward(flows);
        let enc = flow_code(&flow, &OcclusionMask::none_for(&flow)).unwrap();
        assert_eq!(enc.codes(), &arr3(&[[[0, 1]], [[0, 2]]]));
    }

    #[test]
    fn forward_anchor_is_last_frame() {
        let flow = FlowField::zeros(3, 1, 2, FlowDirection::Forward);
        let mut masks = Array3::from_elem((2, 1, 2), false);
        masks[[0, 0, 1]] = true;
        let enc = flow_code(&flow, &OcclusionMask::new(masks)).unwrap();
        assert_eq!(enc.anchor(), 2);
        assert_eq!(enc.codes(), &arr3(&[[[0, 2]], [[0, 1]], [[0, 1]]]));
        assert!(validate_codes(&enc).passed());
    }

    #[test]
    fn mask_shape_mismatch_is_rejected() {
        let flow = FlowField::zeros(3, 2, 2, FlowDirection::Backward);
        let occ = OcclusionMask::new(Array3::from_elem((1, 2, 2), false));
        assert!(matches!(flow_code(&flow, &occ), Err(Error::Shape(_))));
    }

    #[test]
    fn distant_flow_overrides_drift() {
        let mut adj = Array4::zeros((2, 1, 3, 2));
        adj.slice_mut(s![.., .., .., 1]).fill(0.4);
        let mut dist = Array4::zeros((2, 1, 3, 2));
        dist.slice_mut(s![0, .., .., 1]).fill(0.4);
        dist.slice_mut(s![1, .., .., 1]).fill(0.8);
        let adj = backward(adj);
        let dist = backward(dist);
        let enc = flow_code_distant(
            &adj,
            &OcclusionMask::none_for(&adj),
            &dist,
            &OcclusionMask::none_for(&dist),
            1,
        )
        .unwrap();
        assert_eq!(enc.codes(), &arr3(&[[[0, 1, 2]], [[0, 1, 2]], [[1, 2, 2]]]));
        assert_eq!(enc.n(), 3);
    }

    #[test]
    fn distant_fully_occluded_falls_back() {
        let mut adj = Array4::zeros((3, 2, 3, 2));
        adj[[1, 0, 1, 1]] = 1.0;
        adj[[2, 1, 0, 0]] = -1.0;
        let adj = backward(adj);
        let mut occ = Array3::from_elem((3, 2, 3), false);
        occ[[1, 1, 2]] = true;
        let occ = OcclusionMask::new(occ);
        let dist = backward(Array4::from_elem((3, 2, 3, 2), 0.7));
        let dist_occ = OcclusionMask::new(Array3::from_elem((3, 2, 3), true));
        let a = flow_code(&adj, &occ).unwrap();
        let b = flow_code_distant(&adj, &occ, &dist, &dist_occ, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gap_rejected() {
        let flow = FlowField::zeros(2, 1, 1, FlowDirection::Backward);
        let occ = OcclusionMask::none_for(&flow);
        assert!(flow_code_distant(&flow, &occ, &flow, &occ, 0).is_err());
    }

    #[test]
    fn report_flags_out_of_range_code() {
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 1]], [[2, 3]]]), 3, 0);
        let report = validate_codes(&enc);
        assert_eq!(report.range_violations, 1);
        assert!(!report.passed());
    }

    #[test]
    fn report_flags_missing_anchor_code() {
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 1], [2, 2]], [[3, 1], [2, 0]]]), 4, 0);
        let report = validate_codes(&enc);
        assert_eq!(report.anchor_violations, 1);
        assert_eq!(report.unused_codes, 0);
        assert!(!report.passed());
    }

    #[test]
    fn report_counts_novel_codes() {
        let flow = FlowField::zeros(2, 1, 2, FlowDirection::Backward);
        let mut masks = Array3::from_elem((1, 1, 2), false);
        masks[[0, 0, 0]] = true;
        let enc = flow_code(&flow, &OcclusionMask::new(masks)).unwrap();
        let report = validate_codes(&enc);
        assert!(report.passed());
        assert_eq!(report.novel_per_frame, vec![2, 1]);
    }

    #[test]
    fn decode_identity_layout_and_shared_slots() {
        let repo = PixelRepository::new(
            Array2::from_shape_vec((4, 1), vec![10.0, 20.0, 30.0, 40.0]).unwrap(),
            vec![1, 1, 2, 0],
        );
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 1], [2, 2]]]), 4, 0);
        let video = decode(&repo, &enc).unwrap();
        assert_eq!(
            video.slice(s![0, 0, .., ..]),
            ndarray::arr2(&[[10.0, 20.0], [30.0, 30.0]])
        );
    }

    #[test]
    fn decode_rejects_short_repository() {
        let repo = PixelRepository::new(Array2::zeros((2, 1)), vec![1, 1]);
        let enc = EncodedFrames::from_parts(arr3(&[[[0, 2]]]), 3, 0);
        assert!(matches!(
            decode(&repo, &enc),
            Err(Error::CodeOutOfRange { code: 2, .. })
        ));
    }
}
