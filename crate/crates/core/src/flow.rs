//! Dense displacement fields and occlusion masks between adjacent frames.
//!
//! Displacements are stored as `(dy, dx)` pairs in pixels. A backward flow
//! slice `i` maps each pixel of frame `i + 1` to its correspondent in frame
//! `i`; a forward flow slice `i` maps each pixel of frame `i` to frame `i + 1`.
//! Occlusion slice `i` lives on the grid of the *source* pixels of flow slice
//! `i` and marks pixels without a valid correspondent.

use ndarray::{s, Array3, Array4, ArrayView3, Axis};

use crate::error::{Error, Result};

/// Video tensor laid out as frames × channels × height × width.
pub type Video = Array4<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FlowDirection {
    Forward,
    #[default]
    Backward,
}

impl FlowDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowDirection::Forward => "forward",
            FlowDirection::Backward => "backward",
        }
    }
}

impl std::str::FromStr for FlowDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(FlowDirection::Forward),
            "backward" => Ok(FlowDirection::Backward),
            other => Err(Error::param(
                "flow_direction",
                format!("expected forward or backward, got {other:?}"),
            )),
        }
    }
}

/// Per-frame displacement fields for a `T`-frame video.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    flows: Array4<f64>,
    direction: FlowDirection,
}

impl FlowField {
    /// Wraps `(T-1) × H × W × 2` displacements, rejecting NaN and infinities.
    pub fn new(flows: Array4<f64>, direction: FlowDirection) -> Result<Self> {
        if flows.len_of(Axis(3)) != 2 {
            return Err(Error::Shape(format!(
                "flow slices need 2 components, got {}",
                flows.len_of(Axis(3))
            )));
        }
        if flows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow field"));
        }
        Ok(Self { flows, direction })
    }

    pub fn zeros(frames: usize, height: usize, width: usize, direction: FlowDirection) -> Self {
        Self {
            flows: Array4::zeros((frames.saturating_sub(1), height, width, 2)),
            direction,
        }
    }

    /// Builds a field from per-slice `H × W × 2` arrays.
    pub fn from_slices(slices: &[Array3<f64>], height: usize, width: usize, direction: FlowDirection) -> Result<Self> {
        let mut flows = Array4::zeros((slices.len(), height, width, 2));
        for (i, slice) in slices.iter().enumerate() {
            if slice.dim() != (height, width, 2) {
                return Err(Error::Shape(format!(
                    "flow slice {i} has shape {:?}, expected ({height}, {width}, 2)",
                    slice.dim()
                )));
            }
            flows.slice_mut(s![i, .., .., ..]).assign(slice);
        }
        Self::new(flows, direction)
    }

    pub fn frames(&self) -> usize {
        self.flows.len_of(Axis(0)) + 1
    }

    pub fn height(&self) -> usize {
        self.flows.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.flows.len_of(Axis(2))
    }

    pub fn direction(&self) -> FlowDirection {
        self.direction
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.flows
    }

    pub fn into_data(self) -> Array4<f64> {
        self.flows
    }

    pub fn slice(&self, i: usize) -> ArrayView3<'_, f64> {
        self.flows.slice(s![i, .., .., ..])
    }

    /// Displacement `(dy, dx)` of pixel `(y, x)` in slice `i`.
    #[inline]
    pub fn at(&self, i: usize, y: usize, x: usize) -> (f64, f64) {
        (self.flows[[i, y, x, 0]], self.flows[[i, y, x, 1]])
    }

    /// Same displacements with the slice order reversed.
    pub fn flipped(&self) -> Self {
        let mut flows = self.flows.clone();
        flows.invert_axis(Axis(0));
        Self {
            flows: flows.as_standard_layout().into_owned(),
            direction: self.direction,
        }
    }
}

/// Per-slice occlusion flags; `true` means no valid correspondence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcclusionMask {
    masks: Array3<bool>,
}

impl OcclusionMask {
    pub fn new(masks: Array3<bool>) -> Self {
        Self { masks }
    }

    /// All-visible masks matching `flow`.
    pub fn none_for(flow: &FlowField) -> Self {
        Self::new(Array3::from_elem(
            (flow.frames() - 1, flow.height(), flow.width()),
            false,
        ))
    }

    pub fn data(&self) -> &Array3<bool> {
        &self.masks
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.masks.dim()
    }

    #[inline]
    pub fn is_occluded(&self, i: usize, y: usize, x: usize) -> bool {
        self.masks[[i, y, x]]
    }

    pub fn count(&self) -> usize {
        self.masks.iter().filter(|&&m| m).count()
    }

    pub fn flipped(&self) -> Self {
        let mut masks = self.masks.clone();
        masks.invert_axis(Axis(0));
        Self::new(masks.as_standard_layout().into_owned())
    }

    pub(crate) fn check_matches(&self, flow: &FlowField, what: &str) -> Result<()> {
        let expected = (flow.frames() - 1, flow.height(), flow.width());
        if self.masks.dim() != expected {
            return Err(Error::Shape(format!(
                "{what} occlusion mask has shape {:?}, flow expects {expected:?}",
                self.masks.dim()
            )));
        }
        Ok(())
    }
}

/// Rounds a displaced coordinate half away from zero and returns it if it
/// lands inside `[0, len)`.
#[inline]
pub(crate) fn warp_coord(base: usize, delta: f64, len: usize) -> Option<usize> {
    let target = (base as f64 + delta).round();
    if target >= 0.0 && target < len as f64 {
        Some(target as usize)
    } else {
        None
    }
}

/// Integer destination of pixel `(y, x)` under slice `i`, or `None` when it
/// leaves the frame.
#[inline]
pub(crate) fn destination(flow: &FlowField, i: usize, y: usize, x: usize) -> Option<(usize, usize)> {
    let (dy, dx) = flow.at(i, y, x);
    Some((warp_coord(y, dy, flow.height())?, warp_coord(x, dx, flow.width())?))
}
