//! Non-learned detection machinery: anchors, greedy NMS, confidence gating.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{bbox_iou, BBox};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("confidence must lie in [0, 1], got {0}")]
    InvalidConfidence(f64),
    #[error("anchor configuration needs at least one scale and one ratio")]
    EmptyAnchorConfig,
    #[error("anchor scales, ratios and stride must be positive")]
    NonPositiveAnchorParam,
    #[error("grid dimensions must be positive, got {0}x{1}")]
    EmptyGrid(u32, u32),
    #[error("NMS IoU threshold must lie in (0, 1], got {0}")]
    InvalidIouThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64) -> Result<Self, DetectionError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::InvalidConfidence(confidence));
        }
        Ok(Self { bbox, confidence })
    }
}

/// Total order used wherever detections are ranked: confidence descending,
/// then `x_min` ascending, then `y_min` ascending.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.bbox.x_min.cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.cmp(&b.bbox.y_min))
}

/// Aspect ratio expressed as `width : height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectRatio {
    pub w: u32,
    pub h: u32,
}

impl AspectRatio {
    pub const fn new(w: u32, h: u32) -> Self {
        Self { w, h }
    }

    pub fn value(&self) -> f64 {
        self.w as f64 / self.h as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// Anchor areas in square pixels.
    pub scales: Vec<f64>,
    pub ratios: Vec<AspectRatio>,
    pub stride: u32,
}

impl Default for AnchorConfig {
    /// Five scales by five ratios, 25 anchors per location.
    fn default() -> Self {
        Self {
            scales: [32.0, 64.0, 128.0, 256.0, 512.0].iter().map(|s: &f64| s * s).collect(),
            ratios: vec![
                AspectRatio::new(1, 2),
                AspectRatio::new(2, 3),
                AspectRatio::new(1, 1),
                AspectRatio::new(3, 2),
                AspectRatio::new(2, 1),
            ],
            stride: 16,
        }
    }
}

impl AnchorConfig {
    pub fn anchors_per_location(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    fn validate(&self) -> Result<(), DetectionError> {
        if self.scales.is_empty() || self.ratios.is_empty() {
            return Err(DetectionError::EmptyAnchorConfig);
        }
        let bad_scale = self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0));
        let bad_ratio = self.ratios.iter().any(|r| r.w == 0 || r.h == 0);
        if bad_scale || bad_ratio || self.stride == 0 {
            return Err(DetectionError::NonPositiveAnchorParam);
        }
        Ok(())
    }

    /// Rounded `(width, height)` of every (scale, ratio) pair, scale-major.
    /// `width = round(sqrt(scale * r))`, `height = round(sqrt(scale / r))`.
    pub fn shapes(&self) -> Result<Vec<(u32, u32)>, DetectionError> {
        self.validate()?;
        Ok(self
            .scales
            .iter()
            .flat_map(|&scale| {
                self.ratios.iter().map(move |r| {
                    let w = (scale * r.value()).sqrt().round().max(1.0);
                    let h = (scale / r.value()).sqrt().round().max(1.0);
                    (w as u32, h as u32)
                })
            })
            .collect())
    }
}

/// Anchors centered on every feature cell `((i + 0.5) s, (j + 0.5) s)`,
/// clipped to the `grid_w * s` by `grid_h * s` image. Row-major over cells,
/// then scale-major within a cell.
pub fn generate_anchors(cfg: &AnchorConfig, grid_w: u32, grid_h: u32) -> Result<Vec<BBox>, DetectionError> {
    if grid_w == 0 || grid_h == 0 {
        return Err(DetectionError::EmptyGrid(grid_w, grid_h));
    }
    let shapes = cfg.shapes()?;
    let s = cfg.stride as f64;
    let (img_w, img_h) = (grid_w as i64 * cfg.stride as i64, grid_h as i64 * cfg.stride as i64);
    let mut anchors = Vec::with_capacity(grid_w as usize * grid_h as usize * shapes.len());
    for j in 0..grid_h {
        let cy = (j as f64 + 0.5) * s;
        for i in 0..grid_w {
            let cx = (i as f64 + 0.5) * s;
            for &(w, h) in &shapes {
                let x0 = (cx - w as f64 / 2.0).round() as i64;
                let y0 = (cy - h as f64 / 2.0).round() as i64;
                let clip = |v: i64, hi: i64| v.clamp(0, hi) as u32;
                let b = BBox {
                    x_min: clip(x0, img_w),
                    y_min: clip(y0, img_h),
                    x_max: clip(x0 + w as i64, img_w),
                    y_max: clip(y0 + h as i64, img_h),
                };
                // An anchor always contains its cell center, so clipping
                // cannot empty it unless a side rounds to a single pixel.
                if b.is_valid() {
                    anchors.push(b);
                }
            }
        }
    }
    Ok(anchors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    pub max_keep: Option<usize>,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.7,
            max_keep: None,
        }
    }
}

impl NmsConfig {
    pub fn new(iou_threshold: f64) -> Result<Self, DetectionError> {
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(DetectionError::InvalidIouThreshold(iou_threshold));
        }
        Ok(Self {
            iou_threshold,
            max_keep: None,
        })
    }
}

/// Greedy non-maximum suppression. Keeps the best remaining detection and
/// drops everything overlapping it by more than the threshold. Output is in
/// [`rank_order`].
pub fn nms(dets: &[Detection], cfg: &NmsConfig) -> Vec<Detection> {
    let mut order = dets.to_vec();
    order.sort_by(rank_order);
    let mut suppressed = vec![false; order.len()];
    let mut kept = Vec::new();
    let cap = cfg.max_keep.unwrap_or(usize::MAX);
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        if kept.len() == cap {
            break;
        }
        kept.push(order[i]);
        for j in i + 1..order.len() {
            if !suppressed[j] && bbox_iou(&order[i].bbox, &order[j].bbox) > cfg.iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Detections with confidence strictly above `c_t`, original order kept.
pub fn filter_by_confidence(dets: &[Detection], c_t: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence > c_t).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x0: u32, y0: u32, x1: u32, y1: u32, c: f64) -> Detection {
        Detection::new(BBox::new(x0, y0, x1, y1).unwrap(), c).unwrap()
    }

    // Keep a detection iff no already-kept one overlaps it too much.
    fn nms_reference(dets: &[Detection], thr: f64) -> Vec<Detection> {
        let mut sorted = dets.to_vec();
        sorted.sort_by(rank_order);
        let mut kept: Vec<Detection> = Vec::new();
        for d in sorted {
            if kept.iter().all(|k| bbox_iou(&k.bbox, &d.bbox) <= thr) {
                kept.push(d);
            }
        }
        kept
    }

    fn random_dets(seed: u64, n: usize) -> Vec<Detection> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x0 = rng.random_range(0..90);
                let y0 = rng.random_range(0..90);
                let w = rng.random_range(1..30);
                let h = rng.random_range(1..30);
                // coarse confidences so ties exercise the tie-break
                let c = rng.random_range(0..20) as f64 / 20.0;
                det(x0, y0, x0 + w, y0 + h, c)
            })
            .collect()
    }

    #[test]
    fn default_anchor_grid_has_25_per_cell() {
        let cfg = AnchorConfig::default();
        assert_eq!(cfg.anchors_per_location(), 25);
        // big enough that nothing clips away
        assert_eq!(generate_anchors(&cfg, 1, 1).unwrap().len(), 25);
        assert_eq!(generate_anchors(&cfg, 4, 3).unwrap().len(), 4 * 3 * 25);
    }

    #[test]
    fn single_anchor_config() {
        let cfg = AnchorConfig {
            scales: vec![64.0 * 64.0],
            ratios: vec![AspectRatio::new(1, 1)],
            stride: 64,
        };
        let anchors = generate_anchors(&cfg, 2, 2).unwrap();
        assert_eq!(anchors.len(), 4);
        assert!(anchors.iter().all(|a| a.width() == 64 && a.height() == 64));
        assert_eq!(anchors[1], BBox::new(64, 0, 128, 64).unwrap());
    }

    #[test]
    fn tall_anchor_rounding() {
        let cfg = AnchorConfig {
            scales: vec![1024.0],
            ratios: vec![AspectRatio::new(1, 2)],
            stride: 16,
        };
        assert_eq!(cfg.shapes().unwrap(), vec![(23, 45)]);
    }

    #[test]
    fn anchor_config_errors() {
        let empty = AnchorConfig {
            scales: vec![],
            ..AnchorConfig::default()
        };
        assert_eq!(generate_anchors(&empty, 1, 1), Err(DetectionError::EmptyAnchorConfig));
        assert_eq!(
            generate_anchors(&AnchorConfig::default(), 0, 3),
            Err(DetectionError::EmptyGrid(0, 3))
        );
    }

    #[test]
    fn nms_basic_cases() {
        let cfg = NmsConfig::new(0.5).unwrap();
        let a = det(0, 0, 10, 10, 0.9);
        assert_eq!(nms(&[a], &cfg), vec![a]);
        let b = det(0, 0, 10, 10, 0.8);
        assert_eq!(nms(&[b, a], &cfg), vec![a]);
        let far = det(50, 50, 60, 60, 0.95);
        assert_eq!(nms(&[b, a, far], &cfg), vec![far, a]);
    }

    #[test]
    fn nms_max_keep_caps_output() {
        let cfg = NmsConfig {
            iou_threshold: 0.5,
            max_keep: Some(1),
        };
        let out = nms(&[det(0, 0, 5, 5, 0.3), det(20, 20, 25, 25, 0.6)], &cfg);
        assert_eq!(out, vec![det(20, 20, 25, 25, 0.6)]);
    }

    #[test]
    fn nms_threshold_validated() {
        assert!(NmsConfig::new(0.0).is_err());
        assert!(NmsConfig::new(1.5).is_err());
        assert!(NmsConfig::new(1.0).is_ok());
    }

    #[test]
    fn nms_matches_reference_on_random_sets() {
        for seed in 0..200 {
            let dets = random_dets(seed, 50);
            for thr in [0.3, 0.5, 0.7] {
                let cfg = NmsConfig::new(thr).unwrap();
                assert_eq!(nms(&dets, &cfg), nms_reference(&dets, thr), "seed {seed} thr {thr}");
            }
        }
    }

    #[test]
    fn confidence_filter_is_strict() {
        let d = [det(0, 0, 1, 1, 0.8), det(0, 0, 1, 1, 0.81), det(0, 0, 1, 1, 0.0)];
        assert_eq!(filter_by_confidence(&d, 0.8), vec![d[1]]);
        assert_eq!(filter_by_confidence(&d, 0.0).len(), 2);
        assert!(filter_by_confidence(&d, 1.0).is_empty());
    }

    proptest! {
        #[test]
        fn nms_output_properties(seed in any::<u64>(), n in 0usize..40, thr in 0.05f64..1.0) {
            let dets = random_dets(seed, n);
            let cfg = NmsConfig::new(thr).unwrap();
            let out = nms(&dets, &cfg);
            for d in &out {
                prop_assert!(dets.contains(d));
            }
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    prop_assert!(bbox_iou(&a.bbox, &b.bbox) <= thr);
                }
            }
            prop_assert!(out.windows(2).all(|w| w[0].confidence >= w[1].confidence));
            prop_assert_eq!(nms(&out, &cfg), out);
        }

        #[test]
        fn anchor_shapes_preserve_scale_and_ratio(side in 4.0f64..600.0, rw in 1u32..6, rh in 1u32..6) {
            let cfg = AnchorConfig { scales: vec![side * side], ratios: vec![AspectRatio::new(rw, rh)], stride: 8 };
            let (w, h) = cfg.shapes().unwrap()[0];
            let r = rw as f64 / rh as f64;
            let (ew, eh) = ((side * side * r).sqrt(), (side * side / r).sqrt());
            prop_assert!((w as f64 - ew).abs() <= 0.5 + 1e-9);
            prop_assert!((h as f64 - eh).abs() <= 0.5 + 1e-9);
        }
    }
}
