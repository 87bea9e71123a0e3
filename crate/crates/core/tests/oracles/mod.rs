//! Independent brute-force reference implementations used by the
//! integration and acceptance tests.

#![allow(dead_code)]

use pidkit_core::arch::{LayerKind, LayerSpec};
use pidkit_core::detection::Detection;
use pidkit_core::geometry::BBox;
use pidkit_core::mask::BinaryMask;
use pidkit_core::metrics::{FrameEval, GroundTruthCase, ScoredDetection};
use rand::Rng;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let mut inter = 0u64;
    for _x in a.x_min.max(b.x_min)..a.x_max.min(b.x_max) {
        for _y in a.y_min.max(b.y_min)..a.y_max.min(b.y_max) {
            inter += 1;
        }
    }
    let area = |r: &BBox| (r.x_max - r.x_min) as u64 * (r.y_max - r.y_min) as u64;
    let union = area(a) + area(b) - inter;
    inter as f64 / union as f64
}

pub fn overlap(b: &BBox, mask: &BinaryMask) -> u64 {
    let mut n = 0;
    for y in b.y_min..b.y_max.min(mask.height()) {
        for x in b.x_min..b.x_max.min(mask.width()) {
            n += mask.get(x, y) as u64;
        }
    }
    n
}

fn rank_key(d: &Detection) -> (std::cmp::Reverse<u64>, u32, u32) {
    (std::cmp::Reverse(d.confidence.to_bits()), d.bbox.x_min, d.bbox.y_min)
}

/// Match every detection of a frame: rank order, each taking the free
/// groundtruth of largest IoU above `iou_t`, lowest index on ties.
pub fn match_all(
    dets: &[ScoredDetection],
    gts: &[GroundTruthCase],
    iou_t: f64,
) -> Vec<(ScoredDetection, Option<usize>)> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by_key(|&i| rank_key(&dets[i].detection));
    let mut free = vec![true; gts.len()];
    let mut out = Vec::new();
    for i in idx {
        let d = dets[i];
        let mut best: Option<usize> = None;
        let mut best_iou = iou_t;
        for g in 0..gts.len() {
            let v = iou(&d.detection.bbox, &gts[g].bbox);
            if free[g] && v > best_iou {
                best = Some(g);
                best_iou = v;
            }
        }
        if let Some(g) = best {
            free[g] = false;
        }
        out.push((d, best));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub total: u64,
}

pub fn counts_at(frames: &[FrameEval], iou_t: f64, c_t: f64, p_t: u64) -> Counts {
    let mut c = Counts {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
        total: 0,
    };
    for f in frames {
        let matched = match_all(&f.detections, &f.ground_truth, iou_t);
        let mut hit = vec![false; f.ground_truth.len()];
        let mut tp = 0;
        for (d, g) in &matched {
            let flagged = d.detection.confidence > c_t && d.overlap_pixels > p_t;
            if !flagged {
                continue;
            }
            match g {
                Some(g) if f.ground_truth[*g].intrusion => tp += 1,
                _ => c.fp += 1,
            }
            if let Some(g) = g {
                hit[*g] = true;
            }
        }
        let positives = f.ground_truth.iter().filter(|g| g.intrusion).count() as u64;
        c.tp += tp;
        c.fn_ += positives - tp;
        c.tn += f
            .ground_truth
            .iter()
            .enumerate()
            .filter(|(i, g)| !g.intrusion && !hit[*i])
            .count() as u64;
        c.total += f.ground_truth.len() as u64;
    }
    c
}

/// Eleven-point PID_AP by sweeping every distinct confidence plus 0 and 1.
/// `None` when there is no intrusion groundtruth.
pub fn pid_ap(frames: &[FrameEval], iou_t: f64, p_t: u64) -> Option<f64> {
    let positives: u64 = frames
        .iter()
        .map(|f| f.ground_truth.iter().filter(|g| g.intrusion).count() as u64)
        .sum();
    if positives == 0 {
        return None;
    }
    let mut thresholds = vec![0.0, 1.0];
    for f in frames {
        for d in &f.detections {
            thresholds.push(d.detection.confidence);
        }
    }
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let c = counts_at(frames, iou_t, t, p_t);
            let precision = if c.tp + c.fp == 0 {
                1.0
            } else {
                c.tp as f64 / (c.tp + c.fp) as f64
            };
            (c.tp as f64 / positives as f64, precision)
        })
        .collect();
    let mut sum = 0.0;
    for k in 0..=10 {
        let level = k as f64 / 10.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
        sum += best.unwrap_or(0.0);
    }
    Some(sum / 11.0)
}

fn random_box(rng: &mut impl Rng, extent: u32) -> BBox {
    let x0 = rng.random_range(0..extent - 4);
    let y0 = rng.random_range(0..extent - 4);
    let w = rng.random_range(4..=(extent - x0).min(30));
    let h = rng.random_range(4..=(extent - y0).min(40));
    BBox::new(x0, y0, x0 + w, y0 + h).unwrap()
}

fn perturb(rng: &mut impl Rng, b: &BBox, extent: u32, j: i64) -> BBox {
    let mut e = |v: u32| (v as i64 + rng.random_range(-j..=j)).clamp(0, extent as i64) as u32;
    let (x0, y0, x1, y1) = (e(b.x_min), e(b.y_min), e(b.x_max), e(b.y_max));
    BBox::new(
        x0.min(x1),
        y0.min(y1),
        x0.max(x1).max(x0.min(x1) + 1),
        y0.max(y1).max(y0.min(y1) + 1),
    )
    .unwrap()
}

/// Random multi-frame instance with at most `max_gts` groundtruths and
/// `max_dets` detections in total. Confidences are drawn from a coarse grid
/// so ties occur.
pub fn random_instance(rng: &mut impl Rng, max_gts: usize, max_dets: usize) -> Vec<FrameEval> {
    const EXTENT: u32 = 100;
    let n_frames = rng.random_range(1..=3usize);
    let mut gts_left = rng.random_range(0..=max_gts);
    let mut dets_left = rng.random_range(0..=max_dets);
    let mut frames = Vec::new();
    for f in 0..n_frames {
        let last = f + 1 == n_frames;
        let ng = if last { gts_left } else { rng.random_range(0..=gts_left) };
        let nd = if last {
            dets_left
        } else {
            rng.random_range(0..=dets_left)
        };
        gts_left -= ng;
        dets_left -= nd;
        let ground_truth: Vec<GroundTruthCase> = (0..ng)
            .map(|_| GroundTruthCase {
                bbox: random_box(rng, EXTENT),
                intrusion: rng.random_bool(0.6),
            })
            .collect();
        let detections = (0..nd)
            .map(|_| {
                let bbox = if !ground_truth.is_empty() && rng.random_bool(0.7) {
                    let g = ground_truth[rng.random_range(0..ground_truth.len())].bbox;
                    perturb(rng, &g, EXTENT, 6)
                } else {
                    random_box(rng, EXTENT)
                };
                let confidence = rng.random_range(0..=20u32) as f64 / 20.0;
                ScoredDetection {
                    detection: Detection::new(bbox, confidence).unwrap(),
                    overlap_pixels: rng.random_range(0..=60),
                }
            })
            .collect();
        frames.push(FrameEval {
            detections,
            ground_truth,
        });
    }
    frames
}

/// Quadratic NMS reference: scan detections in rank order and keep each one
/// that overlaps no kept detection by more than `threshold`.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by_key(rank_key);
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Count learnable scalars by visiting every index of every weight tensor.
pub fn enumerate_weights(l: &LayerSpec) -> u64 {
    let mut n = 0u64;
    let k = l.kernel;
    match l.kind {
        LayerKind::Conv => {
            for _o in 0..l.out_ch {
                for _i in 0..l.in_ch {
                    for _ky in 0..k {
                        for _kx in 0..k {
                            n += 1;
                        }
                    }
                }
            }
            if l.has_bias {
                for _o in 0..l.out_ch {
                    n += 1;
                }
            }
        }
        LayerKind::DepthwiseConv => {
            for _c in 0..l.in_ch {
                for _ky in 0..k {
                    for _kx in 0..k {
                        n += 1;
                    }
                }
            }
            if l.has_bias {
                for _c in 0..l.in_ch {
                    n += 1;
                }
            }
        }
        LayerKind::PointwiseConv | LayerKind::FullyConnected => {
            for _o in 0..l.out_ch {
                for _i in 0..l.in_ch {
                    n += 1;
                }
            }
            if l.has_bias || l.kind == LayerKind::FullyConnected {
                for _o in 0..l.out_ch {
                    n += 1;
                }
            }
        }
        LayerKind::BatchNorm => {
            for _gamma in 0..l.out_ch {
                n += 1;
            }
            for _beta in 0..l.out_ch {
                n += 1;
            }
        }
        LayerKind::Pooling | LayerKind::GlobalPooling => {}
    }
    n
}

/// A random valid layer with small dimensions.
pub fn random_layer(rng: &mut impl Rng) -> LayerSpec {
    let in_ch = rng.random_range(1..=48u64);
    let out_ch = rng.random_range(1..=48u64);
    let k = rng.random_range(1..=7u64);
    let s = rng.random_range(1..=3u64);
    let bias = rng.random_bool(0.5);
    match rng.random_range(0..6) {
        0 => LayerSpec::conv(in_ch, out_ch, k, s).with_bias(bias),
        1 => LayerSpec::depthwise(in_ch, k, s).with_bias(bias),
        2 => LayerSpec::pointwise(in_ch, out_ch).with_bias(bias),
        3 => LayerSpec::fully_connected(in_ch, out_ch),
        4 => LayerSpec::batch_norm(in_ch),
        _ => LayerSpec::max_pool(in_ch, k, s),
    }
}

/// Per-split rows of the published dataset summary:
/// (split, cities, images, intrusion cases, no-intrusion cases).
pub const TABLE_ONE: [(&str, usize, usize, usize, usize); 2] =
    [("train", 18, 2303, 3829, 12691), ("val", 3, 398, 770, 2393)];

/// A dataset file whose counts encode [`TABLE_ONE`]: tiny inline masks and
/// cases spread as evenly as possible over each split's images.
pub fn table_one_dataset() -> String {
    let mut out = String::new();
    let mut city_base = 0;
    for (split, cities, images, intrusion, none) in TABLE_ONE {
        let share = |total: usize, i: usize| total / images + (i < total % images) as usize;
        for i in 0..images {
            let mut cases = Vec::new();
            for (n, flag) in [(share(intrusion, i), "Y"), (share(none, i), "N")] {
                for c in 0..n {
                    let x = (c % 8) as u32;
                    cases.push(format!(
                        r#"{{"x0":{x},"y0":0,"x1":{},"y1":4,"intrusion":"{flag}"}}"#,
                        x + 4
                    ));
                }
            }
            out.push_str(&format!(
                r#"{{"frame_id":"{split}_{i:05}","city":"city{:02}","split":"{split}","width":16,"height":16,"mask":"rle v1: 16 16 0 256","cases":[{}]}}"#,
                city_base + i % cities,
                cases.join(",")
            ));
            out.push('\n');
        }
        city_base += cities;
    }
    out
}
