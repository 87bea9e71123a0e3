//! PID evaluation: detection/groundtruth matching under the strict
//! true-positive rule, 11-point interpolated PID_AP, PID_mAP and PID_Acc.
//!
//! A detection counts as a true positive only when all of the following hold:
//! it is matched to an intrusion groundtruth with IoU above the IoU
//! threshold, its confidence is above `c_t`, and its overlap with the AoI
//! exceeds `p_t` pixels. A detection that is *flagged* (confidence and
//! overlap both above threshold) but is not a true positive is a false
//! positive. Unflagged detections still take part in matching, so a
//! low-overlap box can consume its groundtruth.
//!
//! Matching is greedy in [`rank_order`]: every detection claims the unmatched
//! groundtruth with the highest IoU above the threshold. Because the order is
//! by confidence, the matching of the detections above any confidence cut is
//! a prefix of the full matching, and a confidence sweep needs only one
//! matching pass per frame.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{rank_order, Detection};
use crate::geometry::{bbox_iou, BBox};
use crate::judge::exceeds_overlap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("recall is undefined: the groundtruth set has no intrusion cases")]
    NoIntrusionGroundTruth,
    #[error("p_t set for PID_mAP is empty")]
    EmptyPtSet,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthCase {
    pub bbox: BBox,
    pub intrusion: bool,
}

/// A detection together with its precomputed AoI overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredDetection {
    pub detection: Detection,
    pub overlap_pixels: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub detections: Vec<ScoredDetection>,
    pub ground_truth: Vec<GroundTruthCase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccFormula {
    /// `(tp + fn) / total`, exactly as the formula is printed.
    Literal,
    /// `(tp + tn) / total` over all groundtruth cases.
    #[default]
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub c_t: f64,
    pub p_t: u64,
    pub p_t_set: Vec<u64>,
    pub recall_levels: Vec<f64>,
    pub acc_formula: AccFormula,
}

impl EvalConfig {
    pub const DEFAULT_IOU: f64 = 0.5;
    pub const RECALL_SAMPLES: usize = 11;

    /// `{0.0, 0.1, ..., 1.0}`, each level computed as `k / 10` so that it
    /// compares exactly against recalls such as `3 / 10`.
    pub fn eleven_point_levels() -> Vec<f64> {
        (0..Self::RECALL_SAMPLES).map(|k| k as f64 / 10.0).collect()
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::InvalidConfig(m));
        if !(self.iou_threshold >= 0.0 && self.iou_threshold < 1.0) {
            return bad(format!("iou_threshold {} outside [0, 1)", self.iou_threshold));
        }
        if !(0.0..=1.0).contains(&self.c_t) {
            return bad(format!("c_t {} outside [0, 1]", self.c_t));
        }
        if self.recall_levels.is_empty() {
            return bad("no recall levels".into());
        }
        if self.recall_levels.iter().any(|r| !(0.0..=1.0).contains(r))
            || self.recall_levels.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("recall levels must be strictly increasing within [0, 1]".into());
        }
        Ok(())
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: Self::DEFAULT_IOU,
            c_t: 0.8,
            p_t: 20,
            p_t_set: vec![20],
            recall_levels: Self::eleven_point_levels(),
            acc_formula: AccFormula::Corrected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub total: u64,
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            total: self.total + o.total,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

impl ConfusionCounts {
    pub fn recall(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    /// Precision with the empty operating point defined as 1.
    pub fn precision(&self) -> f64 {
        precision(self.tp, self.fp)
    }
}

fn precision(tp: u64, fp: u64) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// One point of the confidence sweep: detections with confidence strictly
/// above `confidence` are in force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub confidence: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApAtThreshold {
    pub p_t: u64,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub c_t: f64,
    pub p_t: u64,
    pub pid_ap: Vec<ApAtThreshold>,
    pub pid_map: Option<f64>,
    pub pid_acc: Option<f64>,
    pub acc_formula: AccFormula,
    pub counts: ConfusionCounts,
    /// Sweep at `p_t`, from the strictest threshold down to zero.
    pub pr_curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy)]
struct RankedDetection {
    det: ScoredDetection,
    /// Index of the matched groundtruth.
    gt: Option<usize>,
}

fn match_frame(dets: &[ScoredDetection], gts: &[GroundTruthCase], iou_threshold: f64) -> Vec<RankedDetection> {
    let mut order = dets.to_vec();
    order.sort_by(|a, b| rank_order(&a.detection, &b.detection));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|det| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = bbox_iou(&det.detection.bbox, &gt.bbox);
                if iou > iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            RankedDetection {
                det,
                gt: best.map(|(g, _)| g),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    TruePositive,
    FalsePositive,
    /// Not flagged at this `p_t`; invisible to precision and recall.
    Unflagged,
}

fn outcome(r: &RankedDetection, gts: &[GroundTruthCase], p_t: u64) -> Outcome {
    if !exceeds_overlap(r.det.overlap_pixels, p_t) {
        return Outcome::Unflagged;
    }
    match r.gt {
        Some(g) if gts[g].intrusion => Outcome::TruePositive,
        _ => Outcome::FalsePositive,
    }
}

fn count_frame(ranked: &[RankedDetection], gts: &[GroundTruthCase], c_t: f64, p_t: u64) -> ConfusionCounts {
    let mut counts = ConfusionCounts {
        total: gts.len() as u64,
        ..Default::default()
    };
    let mut flagged_gt = vec![false; gts.len()];
    for r in ranked.iter().filter(|r| r.det.detection.confidence > c_t) {
        match outcome(r, gts, p_t) {
            Outcome::TruePositive => counts.tp += 1,
            Outcome::FalsePositive => counts.fp += 1,
            Outcome::Unflagged => continue,
        }
        if let Some(g) = r.gt {
            flagged_gt[g] = true;
        }
    }
    let positives = gts.iter().filter(|g| g.intrusion).count() as u64;
    counts.fn_ = positives - counts.tp;
    counts.tn = gts
        .iter()
        .zip(&flagged_gt)
        .filter(|(g, flagged)| !g.intrusion && !**flagged)
        .count() as u64;
    counts
}

/// Confusion counts for one frame at the configured `c_t` and `p_t`.
pub fn match_detections(dets: &[ScoredDetection], gts: &[GroundTruthCase], cfg: &EvalConfig) -> ConfusionCounts {
    let ranked = match_frame(dets, gts, cfg.iou_threshold);
    count_frame(&ranked, gts, cfg.c_t, cfg.p_t)
}

struct MatchedFrames<'a> {
    frames: Vec<(Vec<RankedDetection>, &'a [GroundTruthCase])>,
}

impl<'a> MatchedFrames<'a> {
    fn new(frames: &'a [FrameEval], iou_threshold: f64) -> Self {
        let frames = frames
            .par_iter()
            .map(|f| {
                (
                    match_frame(&f.detections, &f.ground_truth, iou_threshold),
                    f.ground_truth.as_slice(),
                )
            })
            .collect();
        Self { frames }
    }

    fn positives(&self) -> u64 {
        self.frames
            .iter()
            .map(|(_, gts)| gts.iter().filter(|g| g.intrusion).count() as u64)
            .sum()
    }

    fn counts(&self, c_t: f64, p_t: u64) -> ConfusionCounts {
        self.frames.iter().map(|(r, gts)| count_frame(r, gts, c_t, p_t)).sum()
    }

    fn sweep(&self, p_t: u64) -> Result<Vec<PrPoint>, MetricsError> {
        let positives = self.positives();
        if positives == 0 {
            return Err(MetricsError::NoIntrusionGroundTruth);
        }
        let mut scored: Vec<(f64, Outcome)> = self
            .frames
            .iter()
            .flat_map(|(ranked, gts)| {
                ranked
                    .iter()
                    .map(move |r| (r.det.detection.confidence, outcome(r, gts, p_t)))
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));

        let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).chain([0.0, 1.0]).collect();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();

        let (mut tp, mut fp, mut next) = (0u64, 0u64, 0usize);
        Ok(thresholds
            .into_iter()
            .map(|t| {
                while next < scored.len() && scored[next].0 > t {
                    match scored[next].1 {
                        Outcome::TruePositive => tp += 1,
                        Outcome::FalsePositive => fp += 1,
                        Outcome::Unflagged => {}
                    }
                    next += 1;
                }
                PrPoint {
                    confidence: t,
                    recall: tp as f64 / positives as f64,
                    precision: precision(tp, fp),
                }
            })
            .collect())
    }
}

/// Mean over recall levels of the best precision reached at any operating
/// point with at least that recall (0 where no point reaches it).
pub fn interpolated_ap(points: &[PrPoint], recall_levels: &[f64]) -> f64 {
    let sum: f64 = recall_levels
        .iter()
        .map(|&r| {
            points
                .iter()
                .filter(|p| p.recall >= r)
                .map(|p| p.precision)
                .fold(0.0, f64::max)
        })
        .sum();
    sum / recall_levels.len() as f64
}

/// Precision/recall sweep over every distinct detection confidence plus 0 and 1.
pub fn pr_curve(frames: &[FrameEval], cfg: &EvalConfig, p_t: u64) -> Result<Vec<PrPoint>, MetricsError> {
    cfg.validate()?;
    MatchedFrames::new(frames, cfg.iou_threshold).sweep(p_t)
}

pub fn pid_ap(frames: &[FrameEval], cfg: &EvalConfig, p_t: u64) -> Result<f64, MetricsError> {
    let points = pr_curve(frames, cfg, p_t)?;
    Ok(interpolated_ap(&points, &cfg.recall_levels))
}

/// Mean PID_AP over `cfg.p_t_set`.
pub fn pid_map(frames: &[FrameEval], cfg: &EvalConfig) -> Result<f64, MetricsError> {
    cfg.validate()?;
    if cfg.p_t_set.is_empty() {
        return Err(MetricsError::EmptyPtSet);
    }
    let matched = MatchedFrames::new(frames, cfg.iou_threshold);
    let mut sum = 0.0;
    for &p_t in &cfg.p_t_set {
        sum += interpolated_ap(&matched.sweep(p_t)?, &cfg.recall_levels);
    }
    Ok(sum / cfg.p_t_set.len() as f64)
}

/// Confusion counts over all frames at `cfg.c_t` / `cfg.p_t`.
pub fn total_counts(frames: &[FrameEval], cfg: &EvalConfig) -> ConfusionCounts {
    MatchedFrames::new(frames, cfg.iou_threshold).counts(cfg.c_t, cfg.p_t)
}

fn accuracy(counts: &ConfusionCounts, formula: AccFormula) -> Option<f64> {
    let numerator = match formula {
        AccFormula::Corrected => counts.tp + counts.tn,
        AccFormula::Literal => counts.tp + counts.fn_,
    };
    (counts.total > 0).then(|| numerator as f64 / counts.total as f64)
}

/// PID accuracy at `cfg.c_t`; `None` when there is no groundtruth at all.
pub fn pid_acc(frames: &[FrameEval], cfg: &EvalConfig) -> Option<f64> {
    accuracy(&total_counts(frames, cfg), cfg.acc_formula)
}

/// Every metric in one pass. AP-type values are `None` when there are no
/// intrusion groundtruths to recall.
pub fn evaluate(frames: &[FrameEval], cfg: &EvalConfig) -> Result<EvalReport, MetricsError> {
    cfg.validate()?;
    if cfg.p_t_set.is_empty() {
        return Err(MetricsError::EmptyPtSet);
    }
    let matched = MatchedFrames::new(frames, cfg.iou_threshold);
    let ap_at = |p_t: u64| -> Result<Option<f64>, MetricsError> {
        match matched.sweep(p_t) {
            Ok(points) => Ok(Some(interpolated_ap(&points, &cfg.recall_levels))),
            Err(MetricsError::NoIntrusionGroundTruth) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let pid_ap = cfg
        .p_t_set
        .iter()
        .map(|&p_t| Ok(ApAtThreshold { p_t, ap: ap_at(p_t)? }))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let pid_map = pid_ap
        .iter()
        .map(|a| a.ap)
        .sum::<Option<f64>>()
        .map(|s| s / pid_ap.len() as f64);
    let counts = matched.counts(cfg.c_t, cfg.p_t);
    let pr_curve = matched.sweep(cfg.p_t).unwrap_or_default();
    Ok(EvalReport {
        iou_threshold: cfg.iou_threshold,
        c_t: cfg.c_t,
        p_t: cfg.p_t,
        pid_ap,
        pid_map,
        pid_acc: accuracy(&counts, cfg.acc_formula),
        acc_formula: cfg.acc_formula,
        counts,
        pr_curve,
    })
}
