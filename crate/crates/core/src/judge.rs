//! Per-pedestrian intrusion verdicts from detections and an AoI mask.

use serde::{Deserialize, Serialize};

use crate::detection::{filter_by_confidence, Detection};
use crate::geometry::{bbox_mask_overlap, BBox};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    /// Overlap-pixel threshold; a box intrudes when its overlap is strictly greater.
    pub p_t: u64,
    /// Confidence threshold; detections at or below it are not judged.
    pub c_t: f64,
}

impl JudgeConfig {
    pub const DEFAULT_P_T: u64 = 20;
    pub const DEFAULT_C_T: f64 = 0.8;
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            p_t: Self::DEFAULT_P_T,
            c_t: Self::DEFAULT_C_T,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub detection: Detection,
    pub overlap_pixels: u64,
    pub intruding: bool,
}

/// The one intrusion rule shared by runtime judgment, label fusion and
/// evaluation.
#[inline]
pub fn exceeds_overlap(overlap_pixels: u64, p_t: u64) -> bool {
    overlap_pixels > p_t
}

/// Overlap of `bbox` with the mask and whether it counts as intruding.
pub fn judge_box(bbox: &BBox, mask: &BinaryMask, p_t: u64) -> (u64, bool) {
    let overlap = bbox_mask_overlap(bbox, mask);
    (overlap, exceeds_overlap(overlap, p_t))
}

pub fn judge_intrusion(detection: Detection, mask: &BinaryMask, cfg: &JudgeConfig) -> Verdict {
    let (overlap_pixels, intruding) = judge_box(&detection.bbox, mask, cfg.p_t);
    Verdict {
        detection,
        overlap_pixels,
        intruding,
    }
}

/// Gate detections by confidence, then judge each survivor in order.
pub fn annotate_frame(detections: &[Detection], mask: &BinaryMask, cfg: &JudgeConfig) -> Vec<Verdict> {
    filter_by_confidence(detections, cfg.c_t)
        .into_iter()
        .map(|d| judge_intrusion(d, mask, cfg))
        .collect()
}
