//! Deterministic synthetic scenes, a seeded oracle detector and the full
//! segment → crop → detect → judge → evaluate pipeline.
//!
//! Every random draw comes from a [`ChaCha8Rng`] seeded per frame from a root
//! seed, so serial and parallel runs produce identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::fuse_labels;
use crate::detection::{nms, Detection, NmsConfig};
use crate::geometry::{
    bbox_iou, bbox_mask_overlap, extend_rect, feature_rect_to_pixels, map_rect_to_feature, mbr_of_mask, BBox,
    CropConfig, EmptyAoiPolicy, GeometryError, Rect,
};
use crate::judge::{annotate_frame, JudgeConfig, Verdict};
use crate::mask::{BinaryMask, MaskError};
use crate::metrics::{evaluate, EvalConfig, EvalReport, FrameEval, GroundTruthCase, MetricsError, ScoredDetection};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

const SCENE_STREAM: u64 = 0x5343_454e_4500_0001;
const DETECT_STREAM: u64 = 0x4445_5445_4354_0002;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for frame `index` of stream `stream` under `root`.
pub fn derive_seed(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ stream).wrapping_add(index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    /// Inclusive range of pedestrians per scene.
    pub pedestrians: (usize, usize),
    /// Inclusive range of pedestrian box heights in pixels.
    pub ped_height: (u32, u32),
    /// Range of width / height ratios.
    pub aspect: (f64, f64),
    /// Range of the road's far edge, as a fraction of the image height.
    pub horizon: (f64, f64),
    /// Overlap threshold used to label the groundtruth.
    pub p_t: u64,
    /// Pedestrian boxes in one scene never overlap more than this.
    pub max_pair_iou: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 512,
            pedestrians: (2, 8),
            ped_height: (40, 160),
            aspect: (0.35, 0.5),
            horizon: (0.35, 0.65),
            p_t: JudgeConfig::DEFAULT_P_T,
            max_pair_iou: 0.3,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if self.width < 16 || self.height < 16 {
            return bad("image must be at least 16x16");
        }
        if self.pedestrians.0 > self.pedestrians.1 {
            return bad("pedestrian count range is reversed");
        }
        if self.ped_height.0 < 2 || self.ped_height.0 > self.ped_height.1 || self.ped_height.1 > self.height {
            return bad("pedestrian height range must be within 2..=image height");
        }
        if !(self.aspect.0 > 0.0 && self.aspect.0 <= self.aspect.1) {
            return bad("aspect range must be positive and ordered");
        }
        if !(0.0 <= self.horizon.0 && self.horizon.0 <= self.horizon.1 && self.horizon.1 < 1.0) {
            return bad("horizon range must be ordered within [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.max_pair_iou) {
            return bad("max_pair_iou must be within [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub road_polygon: Vec<(f64, f64)>,
    pub mask: BinaryMask,
    pub pedestrians: Vec<BBox>,
    pub gt_cases: Vec<GroundTruthCase>,
    pub p_t: u64,
}

impl Scene {
    /// Rasterize `road_polygon` and label `pedestrians` against it.
    pub fn from_polygon(
        width: u32,
        height: u32,
        road_polygon: Vec<(f64, f64)>,
        pedestrians: Vec<BBox>,
        p_t: u64,
    ) -> Result<Self, SimError> {
        let mask = BinaryMask::from_polygon(width, height, &road_polygon)?;
        let mut scene = Self::from_mask(mask, pedestrians, p_t)?;
        scene.road_polygon = road_polygon;
        Ok(scene)
    }

    /// A scene over an existing AoI raster.
    pub fn from_mask(mask: BinaryMask, pedestrians: Vec<BBox>, p_t: u64) -> Result<Self, SimError> {
        let (width, height) = (mask.width(), mask.height());
        if let Some(b) = pedestrians.iter().find(|b| !b.is_within(width, height)) {
            return Err(SimError::InvalidParams(format!(
                "pedestrian {b:?} outside {width}x{height}"
            )));
        }
        let gt_cases = fuse_labels(&mask, &pedestrians, p_t);
        Ok(Self {
            width,
            height,
            road_polygon: Vec::new(),
            mask,
            pedestrians,
            gt_cases,
            p_t,
        })
    }

    pub fn frame(&self) -> Rect {
        BBox {
            x_min: 0,
            y_min: 0,
            x_max: self.width,
            y_max: self.height,
        }
    }

    /// Re-derive every label from the raster.
    pub fn labels_consistent(&self) -> bool {
        self.gt_cases == fuse_labels(&self.mask, &self.pedestrians, self.p_t)
    }
}

fn sample_range_u32(rng: &mut impl Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.random_range(lo..=hi)
}

fn sample_range_f64(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn road_trapezoid(params: &SceneParams, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let (w, h) = (params.width as f64, params.height as f64);
    let top = (sample_range_f64(rng, params.horizon) * h).round();
    let bottom_left = (rng.random_range(0.0..0.3) * w).round();
    let bottom_right = (rng.random_range(0.7..1.0) * w).round();
    let centre = rng.random_range(0.35..0.65) * w;
    let half = rng.random_range(0.05..0.2) * w;
    vec![
        (bottom_left, h),
        (bottom_right, h),
        ((centre + half).round(), top),
        ((centre - half).round(), top),
    ]
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Deterministic random scene. Pedestrians that intrude have their box centre
/// inside the road MBR, and no two pedestrians overlap beyond
/// `params.max_pair_iou`.
pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<Scene, SimError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let polygon = road_trapezoid(params, &mut rng);
    let mask = BinaryMask::from_polygon(params.width, params.height, &polygon)?;
    let mbr = mbr_of_mask(&mask);
    let count = rng.random_range(params.pedestrians.0..=params.pedestrians.1);

    let mut pedestrians: Vec<BBox> = Vec::with_capacity(count);
    for _ in 0..count {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let bh = sample_range_u32(&mut rng, params.ped_height);
            let bw = ((bh as f64 * sample_range_f64(&mut rng, params.aspect)).round() as u32).clamp(1, params.width);
            let x0 = rng.random_range(0..=params.width - bw);
            let y0 = rng.random_range(0..=params.height - bh);
            let b = BBox {
                x_min: x0,
                y_min: y0,
                x_max: x0 + bw,
                y_max: y0 + bh,
            };
            if pedestrians.iter().any(|p| bbox_iou(p, &b) > params.max_pair_iou) {
                continue;
            }
            if bbox_mask_overlap(&b, &mask) > params.p_t {
                let (cx, cy) = b.center();
                if !mbr.is_some_and(|m| m.contains_point(cx, cy)) {
                    continue;
                }
            }
            pedestrians.push(b);
            break;
        }
    }
    let mut scene = Scene::from_mask(mask, pedestrians, params.p_t)?;
    scene.road_polygon = polygon;
    Ok(scene)
}

/// Scene with a rectangular road and one pedestrian straddling its right
/// edge: its centre lies beyond the unextended crop but inside the crop
/// extended by 1.2. Intended for 16-pixel strides.
pub fn generate_boundary_scene(seed: u64) -> Result<Scene, SimError> {
    const W: u32 = 640;
    const H: u32 = 320;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rng.random_range(20..=120u32);
    let x1 = rng.random_range(x0 + 200..=W - 100);
    let y0 = rng.random_range(120..=180u32);
    let polygon = vec![
        (x0 as f64, y0 as f64),
        (x1 as f64, y0 as f64),
        (x1 as f64, H as f64),
        (x0 as f64, H as f64),
    ];

    let straddle_w = rng.random_range(56..=64u32);
    let straddle_x = x1 - rng.random_range(4..=6u32);
    let straddle_y = rng.random_range(y0 + 10..=H - 130);
    let mut pedestrians = vec![BBox {
        x_min: straddle_x,
        y_min: straddle_y,
        x_max: straddle_x + straddle_w,
        y_max: straddle_y + 120,
    }];

    let inner = rng.random_range(1..=3usize);
    for _ in 0..inner {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let bh = rng.random_range(60..=110u32);
            let bw = bh * 2 / 5;
            let bx = rng.random_range(x0..=x1 - 80 - bw);
            let by = rng.random_range(y0..=H - bh);
            let b = BBox {
                x_min: bx,
                y_min: by,
                x_max: bx + bw,
                y_max: by + bh,
            };
            if pedestrians.iter().all(|p| bbox_iou(p, &b) <= 0.1) {
                pedestrians.push(b);
                break;
            }
        }
    }
    Scene::from_polygon(W, H, polygon, pedestrians, JudgeConfig::DEFAULT_P_T)
}

/// Confidence is `mean ± spread`, uniform, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    pub mean_true: f64,
    pub mean_false: f64,
    pub spread: f64,
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        Self {
            mean_true: 0.9,
            mean_false: 0.4,
            spread: 0.1,
        }
    }
}

impl ConfidenceModel {
    fn draw(&self, mean: f64, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        (mean + self.spread * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorNoise {
    /// Maximum uniform perturbation per box edge.
    pub jitter_px: u32,
    pub drop_prob: f64,
    /// Expected spurious boxes per frame.
    pub spurious_rate: f64,
    pub conf_model: ConfidenceModel,
    pub seed: u64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            jitter_px: 4,
            drop_prob: 0.05,
            spurious_rate: 1.0,
            conf_model: ConfidenceModel::default(),
            seed: 0,
        }
    }
}

impl DetectorNoise {
    /// Every visible pedestrian reported exactly, at confidence `mean_true`.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            jitter_px: 0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            conf_model: ConfidenceModel {
                spread: 0.0,
                ..ConfidenceModel::default()
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return bad("drop_prob must be within [0, 1]");
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return bad("spurious_rate must be finite and non-negative");
        }
        let c = &self.conf_model;
        if ![c.mean_true, c.mean_false].iter().all(|m| (0.0..=1.0).contains(m))
            || !(c.spread.is_finite() && c.spread >= 0.0)
        {
            return bad("confidence means must be within [0, 1] and spread non-negative");
        }
        Ok(())
    }
}

fn jitter_edge(v: u32, delta: i64, lo: u32, hi: u32) -> u32 {
    (v as i64 + delta).clamp(lo as i64, hi as i64) as u32
}

fn jitter_box(b: &BBox, d: [i64; 4], width: u32, height: u32) -> BBox {
    let x_min = jitter_edge(b.x_min, d[0], 0, width - 1);
    let y_min = jitter_edge(b.y_min, d[1], 0, height - 1);
    let x_max = jitter_edge(b.x_max, d[2], x_min + 1, width);
    let y_max = jitter_edge(b.y_max, d[3], y_min + 1, height);
    BBox {
        x_min,
        y_min,
        x_max,
        y_max,
    }
}

const MAX_SPURIOUS: u64 = 1000;

/// Noisy oracle detections with a caller-supplied generator. All random
/// values for a pedestrian are drawn before its visibility is tested, so
/// changing `visible` changes nothing but visibility.
pub fn oracle_detect_with(
    scene: &Scene,
    noise: &DetectorNoise,
    visible: Option<Rect>,
    rng: &mut impl Rng,
) -> Vec<Detection> {
    let j = noise.jitter_px as i64;
    let mut out = Vec::new();
    for ped in &scene.pedestrians {
        let dropped = rng.random::<f64>() < noise.drop_prob;
        let deltas: [i64; 4] = std::array::from_fn(|_| rng.random_range(-j..=j));
        let confidence = noise.conf_model.draw(noise.conf_model.mean_true, rng);
        let (cx, cy) = ped.center();
        if dropped || !visible.is_some_and(|v| v.contains_point(cx, cy)) {
            continue;
        }
        let bbox = jitter_box(ped, deltas, scene.width, scene.height);
        out.push(Detection { bbox, confidence });
    }

    let Some(region) = visible.filter(|v| v.is_valid()) else {
        return out;
    };
    if noise.spurious_rate > 0.0 {
        let count = Poisson::new(noise.spurious_rate)
            .map(|p| (p.sample(rng) as u64).min(MAX_SPURIOUS))
            .unwrap_or(0);
        for _ in 0..count {
            let bw = rng.random_range(1..=region.width().min(64));
            let bh = rng.random_range(1..=region.height().min(160));
            let x0 = rng.random_range(region.x_min..=region.x_max - bw);
            let y0 = rng.random_range(region.y_min..=region.y_max - bh);
            let confidence = noise.conf_model.draw(noise.conf_model.mean_false, rng);
            out.push(Detection {
                bbox: BBox {
                    x_min: x0,
                    y_min: y0,
                    x_max: x0 + bw,
                    y_max: y0 + bh,
                },
                confidence,
            });
        }
    }
    out
}

/// Noisy oracle detections seeded by `noise.seed`.
pub fn oracle_detect(scene: &Scene, noise: &DetectorNoise, visible: Option<Rect>) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    oracle_detect_with(scene, noise, visible, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    #[serde(alias = "full")]
    FullFrame,
    #[default]
    Fcm,
}

impl std::str::FromStr for PipelineMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" | "full-frame" => Ok(Self::FullFrame),
            "fcm" => Ok(Self::Fcm),
            other => Err(format!("unknown mode '{other}' (expected fcm or full)")),
        }
    }
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FullFrame => "full",
            Self::Fcm => "fcm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub crop: CropConfig,
    pub stride: u32,
    pub judge: JudgeConfig,
    pub eval: EvalConfig,
    pub mode: PipelineMode,
    pub nms: NmsConfig,
    /// Detections at or below this confidence are discarded before NMS.
    pub score_floor: Option<f64>,
}

impl PipelineConfig {
    pub const DEFAULT_STRIDE: u32 = 16;

    pub fn validate(&self) -> Result<(), SimError> {
        self.crop.validate()?;
        if self.stride == 0 {
            return Err(GeometryError::ZeroStride.into());
        }
        self.eval.validate()?;
        if !(0.0..=1.0).contains(&self.judge.c_t) {
            return Err(SimError::InvalidParams(format!(
                "judge c_t {} outside [0, 1]",
                self.judge.c_t
            )));
        }
        if !(self.nms.iou_threshold > 0.0 && self.nms.iou_threshold <= 1.0) {
            return Err(SimError::InvalidParams(format!(
                "NMS threshold {} outside (0, 1]",
                self.nms.iou_threshold
            )));
        }
        Ok(())
    }

    /// Set `p_t` and `c_t` for both judgment and evaluation.
    pub fn with_thresholds(mut self, p_t: u64, c_t: f64) -> Self {
        self.judge = JudgeConfig { p_t, c_t };
        self.eval.p_t = p_t;
        self.eval.p_t_set = vec![p_t];
        self.eval.c_t = c_t;
        self
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            crop: CropConfig::default(),
            stride: Self::DEFAULT_STRIDE,
            judge: JudgeConfig::default(),
            eval: EvalConfig::default(),
            mode: PipelineMode::default(),
            nms: NmsConfig::default(),
            score_floor: None,
        }
    }
}

/// Region the detector sees, or `None` when detection is skipped.
pub fn visible_region(mask: &BinaryMask, cfg: &PipelineConfig) -> Result<Option<Rect>, SimError> {
    let (w, h) = (mask.width(), mask.height());
    let frame = BBox::frame(w, h)?;
    if cfg.mode == PipelineMode::FullFrame {
        return Ok(Some(frame));
    }
    let Some(mbr) = mbr_of_mask(mask) else {
        return Ok(match cfg.crop.empty_aoi_policy {
            EmptyAoiPolicy::SkipDetection => None,
            EmptyAoiPolicy::FullFrame => Some(frame),
        });
    };
    let extended = extend_rect(mbr, &cfg.crop, w, h);
    let fr = map_rect_to_feature(extended, cfg.stride, w, h)?;
    Ok(Some(feature_rect_to_pixels(&fr)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub visible: Option<Rect>,
    pub verdicts: Vec<Verdict>,
    pub eval: FrameEval,
}

fn process_frame(
    scene: &Scene,
    cfg: &PipelineConfig,
    noise: &DetectorNoise,
    rng: &mut impl Rng,
) -> Result<FrameResult, SimError> {
    let visible = visible_region(&scene.mask, cfg)?;
    let mut raw = oracle_detect_with(scene, noise, visible, rng);
    if let Some(floor) = cfg.score_floor {
        raw.retain(|d| d.confidence > floor);
    }
    let kept = nms(&raw, &cfg.nms);
    let verdicts = annotate_frame(&kept, &scene.mask, &cfg.judge);
    let detections = kept
        .iter()
        .map(|&detection| ScoredDetection {
            detection,
            overlap_pixels: bbox_mask_overlap(&detection.bbox, &scene.mask),
        })
        .collect();
    Ok(FrameResult {
        visible,
        verdicts,
        eval: FrameEval {
            detections,
            ground_truth: scene.gt_cases.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub frame: FrameResult,
    pub report: EvalReport,
}

/// Run one scene through the pipeline with the detector seeded by
/// `noise.seed`.
pub fn run_pipeline(scene: &Scene, cfg: &PipelineConfig, noise: &DetectorNoise) -> Result<PipelineOutput, SimError> {
    cfg.validate()?;
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let frame = process_frame(scene, cfg, noise, &mut rng)?;
    let report = evaluate(std::slice::from_ref(&frame.eval), &cfg.eval)?;
    Ok(PipelineOutput { frame, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub scenes: usize,
    /// Root seed for scene generation; the detector uses `noise.seed`.
    pub seed: u64,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRun {
    pub frames: Vec<FrameResult>,
    pub report: EvalReport,
}

impl SimulationRun {
    pub fn intruding_verdicts(&self) -> usize {
        self.frames
            .iter()
            .flat_map(|f| &f.verdicts)
            .filter(|v| v.intruding)
            .count()
    }

    pub fn verdicts(&self) -> usize {
        self.frames.iter().map(|f| f.verdicts.len()).sum()
    }
}

/// Generate and process frame `index`: scene and detector streams are
/// seeded independently from their root seeds.
pub fn simulate_frame(
    params: &SceneParams,
    cfg: &PipelineConfig,
    noise: &DetectorNoise,
    root_seed: u64,
    index: usize,
) -> Result<FrameResult, SimError> {
    let scene = generate_scene(params, derive_seed(root_seed, SCENE_STREAM, index as u64))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, DETECT_STREAM, index as u64));
    process_frame(&scene, cfg, noise, &mut rng)
}

/// Scene seed used for frame `index` of a simulation rooted at `root_seed`.
pub fn scene_seed(root_seed: u64, index: usize) -> u64 {
    derive_seed(root_seed, SCENE_STREAM, index as u64)
}

pub fn simulate(
    params: &SceneParams,
    cfg: &PipelineConfig,
    noise: &DetectorNoise,
    spec: SimulationSpec,
) -> Result<SimulationRun, SimError> {
    params.validate()?;
    cfg.validate()?;
    noise.validate()?;
    let run = |i| simulate_frame(params, cfg, noise, spec.seed, i);
    let frames = if spec.parallel {
        (0..spec.scenes)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>, _>>()?
    } else {
        (0..spec.scenes).map(run).collect::<Result<Vec<_>, _>>()?
    };
    let evals: Vec<FrameEval> = frames.iter().map(|f| f.eval.clone()).collect();
    let report = evaluate(&evals, &cfg.eval)?;
    Ok(SimulationRun { frames, report })
}
