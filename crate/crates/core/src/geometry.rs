//! Pixel-space and feature-grid geometry.
//!
//! All boxes use a half-open integer convention: a box covers pixel columns
//! `x_min..x_max` and rows `y_min..y_max`, so areas are exact integers and
//! adjacent boxes tile without gaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate box ({x_min},{y_min})-({x_max},{y_max}): min must be strictly below max")]
    Degenerate {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    #[error("stride must be positive")]
    ZeroStride,
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("extension coefficient must be a finite value >= 1.0, got {0}")]
    InvalidAlpha(f64),
}

/// Axis-aligned pixel box, half-open on the max side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

/// A crop rectangle (MBR or extended MBR). Same representation as [`BBox`];
/// the alias only marks the role.
pub type Rect = BBox;

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::Degenerate {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Whole-image rectangle.
    pub fn frame(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage { width, height });
        }
        Ok(Self::new(0, 0, width, height).expect("non-empty frame"))
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    pub fn width(&self) -> u32 {
        self.x_max.saturating_sub(self.x_min)
    }

    pub fn height(&self) -> u32 {
        self.y_max.saturating_sub(self.y_min)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min as f64 + self.x_max as f64) / 2.0,
            (self.y_min as f64 + self.y_max as f64) / 2.0,
        )
    }

    /// Half-open point membership.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min as f64 && x < self.x_max as f64 && y >= self.y_min as f64 && y < self.y_max as f64
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }

    pub fn is_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.max(other.x_min),
            y_min: self.y_min.max(other.y_min),
            x_max: self.x_max.min(other.x_max),
            y_max: self.y_max.min(other.y_max),
        };
        b.is_valid().then_some(b)
    }

    /// Clip to `[0, width) x [0, height)`; `None` if nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.min(width),
            y_min: self.y_min.min(height),
            x_max: self.x_max.min(width),
            y_max: self.y_max.min(height),
        };
        b.is_valid().then_some(b)
    }
}

/// What to do with a frame whose AoI mask has no set pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyAoiPolicy {
    /// No AoI means nothing can intrude: detection is not run at all.
    #[default]
    SkipDetection,
    /// Fall back to detecting over the whole frame.
    FullFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropConfig {
    pub alpha: f64,
    pub symmetric: bool,
    pub empty_aoi_policy: EmptyAoiPolicy,
}

impl CropConfig {
    pub const DEFAULT_ALPHA: f64 = 1.2;

    pub fn new(alpha: f64) -> Result<Self, GeometryError> {
        let cfg = Self {
            alpha,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !self.alpha.is_finite() || self.alpha < 1.0 {
            return Err(GeometryError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            symmetric: false,
            empty_aoi_policy: EmptyAoiPolicy::SkipDetection,
        }
    }
}

/// Rectangle on the downsampled feature grid, half-open, with the stride and
/// source image size it was mapped from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRect {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub stride: u32,
    pub image_w: u32,
    pub image_h: u32,
}

impl FeatureRect {
    /// Grid extent `(ceil(W/s), ceil(H/s))`.
    pub fn grid_size(&self) -> (u32, u32) {
        grid_size(self.image_w, self.image_h, self.stride)
    }

    pub fn cells(&self) -> u64 {
        (self.x_max - self.x_min) as u64 * (self.y_max - self.y_min) as u64
    }
}

pub fn grid_size(image_w: u32, image_h: u32, stride: u32) -> (u32, u32) {
    (image_w.div_ceil(stride), image_h.div_ceil(stride))
}

/// Tightest rectangle holding every set pixel, or `None` for an empty mask.
pub fn mbr_of_mask(mask: &BinaryMask) -> Option<Rect> {
    let mut rows = (0..mask.height()).filter(|&y| mask.row(y).any());
    let y_min = rows.next()?;
    let y_max = rows.next_back().unwrap_or(y_min) + 1;

    let mut x_min = u32::MAX;
    let mut x_max = 0u32;
    for y in y_min..y_max {
        let row = mask.row(y);
        if let (Some(first), Some(last)) = (row.first_one(), row.last_one()) {
            x_min = x_min.min(first as u32);
            x_max = x_max.max(last as u32 + 1);
        }
    }
    Some(BBox {
        x_min,
        y_min,
        x_max,
        y_max,
    })
}

/// Extend the max sides of `rect` by the coefficient `alpha`, clamped to the
/// image. With `cfg.symmetric` the min sides are pushed out by the mirrored
/// amount as well.
pub fn extend_rect(rect: Rect, cfg: &CropConfig, image_w: u32, image_h: u32) -> Rect {
    let span_x = scaled_span(rect.width(), cfg.alpha);
    let span_y = scaled_span(rect.height(), cfg.alpha);

    let x_max = (rect.x_min as i64 + span_x).min(image_w as i64) as u32;
    let y_max = (rect.y_min as i64 + span_y).min(image_h as i64) as u32;
    let (x_min, y_min) = if cfg.symmetric {
        (
            (rect.x_max as i64 - span_x).max(0) as u32,
            (rect.y_max as i64 - span_y).max(0) as u32,
        )
    } else {
        (rect.x_min, rect.y_min)
    };
    BBox {
        x_min: x_min.min(image_w),
        y_min: y_min.min(image_h),
        x_max,
        y_max,
    }
}

// f64::round rounds half away from zero.
fn scaled_span(len: u32, alpha: f64) -> i64 {
    (alpha * len as f64).round() as i64
}

/// Map a pixel rectangle onto the feature grid of stride `stride`:
/// max sides `floor(X/s) + 1`, min sides `ceil(X/s) - 1`, clamped to
/// `[0, ceil(W/s)]`.
pub fn map_rect_to_feature(rect: Rect, stride: u32, image_w: u32, image_h: u32) -> Result<FeatureRect, GeometryError> {
    if stride == 0 {
        return Err(GeometryError::ZeroStride);
    }
    if image_w == 0 || image_h == 0 {
        return Err(GeometryError::EmptyImage {
            width: image_w,
            height: image_h,
        });
    }
    let (grid_w, grid_h) = grid_size(image_w, image_h, stride);
    let lower = |v: u32, extent: u32| (v.div_ceil(stride) as i64 - 1).clamp(0, extent as i64) as u32;
    let upper = |v: u32, extent: u32| (v as i64 / stride as i64 + 1).clamp(0, extent as i64) as u32;

    Ok(FeatureRect {
        x_min: lower(rect.x_min, grid_w),
        y_min: lower(rect.y_min, grid_h),
        x_max: upper(rect.x_max, grid_w),
        y_max: upper(rect.y_max, grid_h),
        stride,
        image_w,
        image_h,
    })
}

/// Pixel region covered by a feature rectangle, clipped to the image.
pub fn feature_rect_to_pixels(fr: &FeatureRect) -> Rect {
    let s = fr.stride as u64;
    let clip = |v: u32, limit: u32| (v as u64 * s).min(limit as u64) as u32;
    BBox {
        x_min: clip(fr.x_min, fr.image_w),
        y_min: clip(fr.y_min, fr.image_h),
        x_max: clip(fr.x_max, fr.image_w),
        y_max: clip(fr.y_max, fr.image_h),
    }
}

/// Number of set mask pixels inside `bbox` (clipped to the mask extent).
pub fn bbox_mask_overlap(bbox: &BBox, mask: &BinaryMask) -> u64 {
    let Some(b) = bbox.clamp_to(mask.width(), mask.height()) else {
        return 0;
    };
    (b.y_min..b.y_max)
        .map(|y| mask.row(y)[b.x_min as usize..b.x_max as usize].count_ones() as u64)
        .sum()
}

/// Intersection over union on half-open pixel areas.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BBox::new(3, 0, 3, 5).is_err());
        assert!(BBox::new(0, 6, 3, 5).is_err());
    }

    #[test]
    fn mbr_full_empty_and_two_pixels() {
        assert_eq!(
            mbr_of_mask(&BinaryMask::filled(10, 10, true).unwrap()),
            Some(bb(0, 0, 10, 10))
        );
        assert_eq!(mbr_of_mask(&BinaryMask::new(10, 10).unwrap()), None);

        let mut m = BinaryMask::new(10, 10).unwrap();
        m.set(2, 3, true);
        m.set(7, 5, true);
        assert_eq!(mbr_of_mask(&m), Some(bb(2, 3, 8, 6)));
    }

    #[test]
    fn extend_examples() {
        let cfg = CropConfig::default();
        assert_eq!(
            extend_rect(bb(50, 100, 150, 200), &cfg, 1024, 512),
            bb(50, 100, 170, 220)
        );
        assert_eq!(
            extend_rect(bb(900, 400, 1020, 510), &cfg, 1024, 512),
            bb(900, 400, 1024, 512)
        );
        let id = CropConfig::new(1.0).unwrap();
        assert_eq!(extend_rect(bb(13, 7, 99, 41), &id, 1024, 512), bb(13, 7, 99, 41));
    }

    #[test]
    fn extend_rounds_half_away_from_zero() {
        // 1.25 * 10 = 12.5 -> 13
        let cfg = CropConfig::new(1.25).unwrap();
        assert_eq!(extend_rect(bb(0, 0, 10, 10), &cfg, 100, 100), bb(0, 0, 13, 13));
    }

    #[test]
    fn symmetric_extension_mirrors_and_clamps_at_zero() {
        let cfg = CropConfig {
            symmetric: true,
            ..CropConfig::default()
        };
        assert_eq!(
            extend_rect(bb(50, 100, 150, 200), &cfg, 1024, 512),
            bb(30, 80, 170, 220)
        );
        assert_eq!(extend_rect(bb(5, 5, 105, 105), &cfg, 1024, 512), bb(0, 0, 125, 125));
    }

    #[test]
    fn alpha_below_one_rejected() {
        assert_eq!(CropConfig::new(0.9), Err(GeometryError::InvalidAlpha(0.9)));
        assert!(CropConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn map_examples() {
        let fr = map_rect_to_feature(bb(50, 100, 170, 220), 16, 1024, 512).unwrap();
        assert_eq!((fr.x_min, fr.y_min, fr.x_max, fr.y_max), (3, 6, 11, 14));
        let fr = map_rect_to_feature(bb(0, 0, 16, 16), 1, 1024, 512).unwrap();
        assert_eq!((fr.x_min, fr.y_min, fr.x_max, fr.y_max), (0, 0, 17, 17));
        let fr = map_rect_to_feature(bb(0, 0, 32, 32), 32, 1024, 512).unwrap();
        assert_eq!((fr.x_min, fr.y_min, fr.x_max, fr.y_max), (0, 0, 2, 2));
        assert_eq!(
            map_rect_to_feature(bb(0, 0, 32, 32), 0, 1024, 512),
            Err(GeometryError::ZeroStride)
        );
    }

    #[test]
    fn map_clamps_to_ceil_grid_extent() {
        // 100 / 16 -> grid of 7 cells
        let fr = map_rect_to_feature(bb(0, 0, 100, 100), 16, 100, 100).unwrap();
        assert_eq!(fr.grid_size(), (7, 7));
        assert_eq!((fr.x_max, fr.y_max), (7, 7));
        assert_eq!(feature_rect_to_pixels(&fr), bb(0, 0, 100, 100));
    }

    #[test]
    fn feature_to_pixel_examples() {
        let fr = FeatureRect {
            x_min: 3,
            y_min: 6,
            x_max: 11,
            y_max: 14,
            stride: 16,
            image_w: 1024,
            image_h: 512,
        };
        assert_eq!(feature_rect_to_pixels(&fr), bb(48, 96, 176, 224));
        let fr = FeatureRect {
            x_min: 0,
            y_min: 0,
            x_max: 2,
            y_max: 2,
            stride: 32,
            image_w: 1024,
            image_h: 512,
        };
        assert_eq!(feature_rect_to_pixels(&fr), bb(0, 0, 64, 64));
    }

    #[test]
    fn overlap_examples() {
        let ones = BinaryMask::filled(10, 10, true).unwrap();
        let zeros = BinaryMask::new(10, 10).unwrap();
        assert_eq!(bbox_mask_overlap(&bb(0, 0, 4, 4), &ones), 16);
        assert_eq!(bbox_mask_overlap(&bb(0, 0, 4, 4), &zeros), 0);

        let top = BinaryMask::from_fn(10, 10, |_, y| y < 4).unwrap();
        // rows 2,3 x columns 2..6
        assert_eq!(bbox_mask_overlap(&bb(2, 2, 6, 6), &top), 8);
        // box hanging off the mask is clipped
        assert_eq!(bbox_mask_overlap(&bb(8, 0, 20, 2), &ones), 4);
    }

    #[test]
    fn iou_examples() {
        let a = bb(0, 0, 10, 10);
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &bb(10, 0, 20, 10)), 0.0);
        assert!((bbox_iou(&a, &bb(5, 5, 15, 15)) - 25.0 / 175.0).abs() < 1e-12);
    }

    fn arb_box(limit: u32) -> impl Strategy<Value = BBox> {
        (0..limit - 1, 0..limit - 1)
            .prop_flat_map(move |(x, y)| (Just(x), Just(y), x + 1..=limit, y + 1..=limit))
            .prop_map(|(x0, y0, x1, y1)| bb(x0, y0, x1, y1))
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..24, 1u32..24).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| BinaryMask::from_bits(w, h, &bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn crop_round_trip_contains_rect(r in arb_box(400), s in 1u32..40) {
            let fr = map_rect_to_feature(r, s, 400, 400).unwrap();
            prop_assert!(fr.x_min < fr.x_max && fr.y_min < fr.y_max);
            prop_assert!(feature_rect_to_pixels(&fr).contains(&r));
        }

        #[test]
        fn extension_contains_input_and_stays_in_image(r in arb_box(300), alpha in 1.0f64..3.0, sym in any::<bool>()) {
            let cfg = CropConfig { alpha, symmetric: sym, ..CropConfig::default() };
            let e = extend_rect(r, &cfg, 300, 300);
            prop_assert!(e.contains(&r));
            prop_assert!(e.is_within(300, 300));
        }

        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(50), b in arb_box(50)) {
            let ab = bbox_iou(&a, &b);
            prop_assert_eq!(ab, bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn overlap_bounded_by_area_and_set_count(mask in arb_mask(), b in arb_box(24)) {
            let ov = bbox_mask_overlap(&b, &mask);
            let clipped_area = b.clamp_to(mask.width(), mask.height()).map_or(0, |c| c.area());
            prop_assert!(ov <= clipped_area.min(mask.count_ones()));
            let mut brute = 0u64;
            let mut all_set = true;
            for y in b.y_min..b.y_max {
                for x in b.x_min..b.x_max {
                    let set = x < mask.width() && y < mask.height() && mask.get(x, y);
                    brute += set as u64;
                    all_set &= set;
                }
            }
            prop_assert_eq!(ov, brute);
            prop_assert_eq!(ov == b.area(), all_set);
        }

        #[test]
        fn mbr_is_tightest(mask in arb_mask()) {
            let mut set = Vec::new();
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    if mask.get(x, y) { set.push((x, y)); }
                }
            }
            match mbr_of_mask(&mask) {
                None => prop_assert!(set.is_empty()),
                Some(r) => {
                    let x0 = set.iter().map(|p| p.0).min().unwrap();
                    let x1 = set.iter().map(|p| p.0).max().unwrap() + 1;
                    let y0 = set.iter().map(|p| p.1).min().unwrap();
                    let y1 = set.iter().map(|p| p.1).max().unwrap() + 1;
                    prop_assert_eq!(r, bb(x0, y0, x1, y1));
                }
            }
        }
    }
}
