//! `pidkit`: simulate, evaluate, judge, fuse, summarize and validate
//! pedestrian intrusion data from the command line.
//!
//! Exit codes: 0 success, 2 malformed input, 3 semantically invalid input.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use pidkit_core::arch::{model_flops, model_params, presets, receptive_field_of, ArchError, ArchSpec, Shape};
use pidkit_core::dataset::{
    dataset_stats, drop_empty_frames, fuse_labels, read_dataset, review_candidates, split_stats, validate_masks,
    CaseRecord, DatasetError, DatasetStats,
};
use pidkit_core::detection::{Detection, DetectionError};
use pidkit_core::geometry::{bbox_mask_overlap, BBox, GeometryError};
use pidkit_core::judge::{annotate_frame, JudgeConfig};
use pidkit_core::mask::BinaryMask;
use pidkit_core::metrics::{evaluate, AccFormula, EvalConfig, FrameEval, MetricsError, ScoredDetection};
use pidkit_core::report::{emit_report, ReportFormat};
use pidkit_core::sim::{simulate, DetectorNoise, PipelineConfig, PipelineMode, SceneParams, SimError, SimulationSpec};

#[derive(Parser)]
#[command(name = "pidkit", version, about = "Pedestrian intrusion detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run synthetic scenes through the pipeline and report the metrics.
    Simulate(SimulateArgs),
    /// Score a detections file against a dataset.
    Evaluate(EvaluateArgs),
    /// Judge boxes against an AoI mask.
    Judge(JudgeArgs),
    /// Label person boxes as intrusion cases from an AoI mask.
    Fuse(FuseArgs),
    /// Summarize a dataset.
    Stats(StatsArgs),
    /// Parameter, MAC and receptive-field table for architecture presets.
    AnalyzeArch(AnalyzeArchArgs),
    /// Check a dataset file and its masks.
    Validate(ValidateArgs),
}

/// Error that maps to exit code 3.
#[derive(Debug)]
struct Semantic(String);

impl fmt::Display for Semantic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Semantic {}

fn semantic(msg: impl Into<String>) -> anyhow::Error {
    Semantic(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(d) = cause.downcast_ref::<DatasetError>() {
            return d.exit_code() as u8;
        }
        if cause.is::<Semantic>()
            || cause.is::<MetricsError>()
            || cause.is::<GeometryError>()
            || cause.is::<DetectionError>()
            || cause.is::<ArchError>()
        {
            return 3;
        }
        if let Some(SimError::InvalidParams(_) | SimError::Metrics(_) | SimError::Geometry(_)) =
            cause.downcast_ref::<SimError>()
        {
            return 3;
        }
    }
    2
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: pidkit_core::report::ReportError| e.to_string())
}

/// Settings file for `simulate`; any flag given on the command line wins.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimConfigFile {
    scenes: Option<usize>,
    seed: Option<u64>,
    scene: SceneParams,
    pipeline: PipelineConfig,
    noise: DetectorNoise,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON settings file with optional `scenes`, `seed`, `scene`, `pipeline` and `noise` objects.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<usize>,
    /// Root seed for scene generation.
    #[arg(long)]
    seed: Option<u64>,
    /// `fcm` crops detection to the extended road rectangle; `full` sees the whole frame.
    #[arg(long)]
    mode: Option<PipelineMode>,
    /// Crop extension coefficient (>= 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Extend the crop on the min sides as well.
    #[arg(long)]
    symmetric: bool,
    /// Overlap-pixel threshold.
    #[arg(long)]
    pt: Option<u64>,
    /// Confidence threshold.
    #[arg(long)]
    ct: Option<f64>,
    #[arg(long)]
    iou: Option<f64>,
    /// Feature-map stride used for cropping.
    #[arg(long)]
    stride: Option<u32>,
    /// Detector seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    jitter: Option<u32>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    spurious_rate: Option<f64>,
    /// Report every visible pedestrian exactly.
    #[arg(long)]
    noiseless: bool,
    /// PID_Acc numerator: `corrected` (tp + tn) or `literal` (tp + fn).
    #[arg(long, value_enum)]
    acc: Option<AccArg>,
    #[arg(long, value_parser = parse_format, default_value = "text")]
    format: ReportFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Process frames on one thread.
    #[arg(long)]
    serial: bool,
    /// Also time the other mode and print relative timing to stderr.
    #[arg(long)]
    compare_modes: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AccArg {
    Corrected,
    Literal,
}

impl From<AccArg> for AccFormula {
    fn from(a: AccArg) -> Self {
        match a {
            AccArg::Corrected => AccFormula::Corrected,
            AccArg::Literal => AccFormula::Literal,
        }
    }
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<SimConfigFile>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SimConfigFile::default(),
    };
    let cfg = &mut file.pipeline;
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    if let Some(alpha) = args.alpha {
        cfg.crop.alpha = alpha;
    }
    if args.symmetric {
        cfg.crop.symmetric = true;
    }
    let p_t = args.pt.unwrap_or(cfg.judge.p_t);
    let c_t = args.ct.unwrap_or(cfg.judge.c_t);
    if args.pt.is_some() || args.ct.is_some() {
        *cfg = cfg.clone().with_thresholds(p_t, c_t);
    }
    if args.pt.is_some() {
        file.scene.p_t = p_t;
    }
    if let Some(iou) = args.iou {
        cfg.eval.iou_threshold = iou;
    }
    if let Some(stride) = args.stride {
        cfg.stride = stride;
    }
    if let Some(acc) = args.acc {
        cfg.eval.acc_formula = acc.into();
    }

    let mut noise = if args.noiseless {
        DetectorNoise::noiseless(file.noise.seed)
    } else {
        file.noise
    };
    if let Some(seed) = args.noise_seed {
        noise.seed = seed;
    }
    if let Some(j) = args.jitter {
        noise.jitter_px = j;
    }
    if let Some(d) = args.drop_prob {
        noise.drop_prob = d;
    }
    if let Some(s) = args.spurious_rate {
        noise.spurious_rate = s;
    }

    let spec = SimulationSpec {
        scenes: args.scenes.or(file.scenes).unwrap_or(100),
        seed: args.seed.or(file.seed).unwrap_or(0),
        parallel: !args.serial,
    };
    let started = Instant::now();
    let run = simulate(&file.scene, &file.pipeline, &noise, spec)?;
    let elapsed = started.elapsed();

    if args.compare_modes {
        let other_mode = match file.pipeline.mode {
            PipelineMode::Fcm => PipelineMode::FullFrame,
            PipelineMode::FullFrame => PipelineMode::Fcm,
        };
        let other = PipelineConfig {
            mode: other_mode,
            ..file.pipeline.clone()
        };
        let t = Instant::now();
        simulate(&file.scene, &other, &noise, spec)?;
        let other_elapsed = t.elapsed();
        eprintln!(
            "{}: {:.3} ms, {}: {:.3} ms, ratio {:.3}",
            file.pipeline.mode,
            elapsed.as_secs_f64() * 1e3,
            other_mode,
            other_elapsed.as_secs_f64() * 1e3,
            elapsed.as_secs_f64() / other_elapsed.as_secs_f64().max(f64::MIN_POSITIVE),
        );
    }

    let model = format!("sim-{}-alpha{}", file.pipeline.mode, file.pipeline.crop.alpha);
    write_output(args.out.as_deref(), &emit_report(&run.report, &model, args.format))
}

/// One line of a detections file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionLine {
    frame_id: String,
    detections: Vec<BoxLine>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxLine {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
    #[serde(default = "full_confidence")]
    confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl BoxLine {
    fn detection(&self, width: u32, height: u32) -> Result<Detection> {
        let bbox = BBox::new(self.x0, self.y0, self.x1, self.y1)?;
        if !bbox.is_within(width, height) {
            return Err(semantic(format!("box {bbox:?} outside {width}x{height}")));
        }
        Ok(Detection::new(bbox, self.confidence)?)
    }
}

#[derive(Args)]
struct EvalThresholds {
    /// Overlap-pixel threshold.
    #[arg(long, default_value_t = JudgeConfig::DEFAULT_P_T)]
    pt: u64,
    /// Confidence threshold.
    #[arg(long, default_value_t = JudgeConfig::DEFAULT_C_T)]
    ct: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Line-delimited JSON: `{"frame_id": .., "detections": [{"x0","y0","x1","y1","confidence"}]}`.
    #[arg(long)]
    detections: PathBuf,
    #[command(flatten)]
    thresholds: EvalThresholds,
    /// Extra overlap thresholds to average into PID_mAP, besides `--pt`.
    #[arg(long, value_delimiter = ',')]
    map_pt: Vec<u64>,
    #[arg(long, default_value_t = EvalConfig::DEFAULT_IOU)]
    iou: f64,
    #[arg(long, value_enum, default_value_t = AccArg::Corrected)]
    acc: AccArg,
    #[arg(long, value_parser = parse_format, default_value = "text")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_detections(path: &Path) -> Result<HashMap<String, Vec<BoxLine>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out: HashMap<String, Vec<BoxLine>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: DetectionLine = serde_json::from_str(line)
            .with_context(|| format!("{}: line {}: malformed detections record", path.display(), i + 1))?;
        out.entry(d.frame_id).or_default().extend(d.detections);
    }
    Ok(out)
}

fn dataset_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let records = read_dataset(&args.dataset)?;
    let mut detections = read_detections(&args.detections)?;
    let base = dataset_dir(&args.dataset);

    let mut frames = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let mask = r
            .mask
            .load(base)
            .map_err(|source| DatasetError::Mask { line: i + 1, source })?;
        let dets = detections
            .remove(&r.frame_id)
            .unwrap_or_default()
            .iter()
            .map(|b| {
                let detection = b.detection(r.image_w, r.image_h)?;
                Ok(ScoredDetection {
                    detection,
                    overlap_pixels: bbox_mask_overlap(&detection.bbox, &mask),
                })
            })
            .collect::<Result<Vec<_>>>()
            .with_context(|| format!("frame `{}`", r.frame_id))?;
        frames.push(FrameEval {
            detections: dets,
            ground_truth: r.cases.clone(),
        });
    }
    if let Some(unknown) = detections.keys().min() {
        return Err(semantic(format!("detections reference unknown frame `{unknown}`")));
    }

    let p_t = args.thresholds.pt;
    let mut p_t_set = vec![p_t];
    p_t_set.extend(args.map_pt.iter().copied().filter(|&p| p != p_t));
    let cfg = EvalConfig {
        iou_threshold: args.iou,
        c_t: args.thresholds.ct,
        p_t,
        p_t_set,
        acc_formula: args.acc.into(),
        ..EvalConfig::default()
    };
    let report = evaluate(&frames, &cfg)?;
    let model = args
        .detections
        .file_stem()
        .map_or_else(|| "detections".to_string(), |s| s.to_string_lossy().into_owned());
    write_output(args.out.as_deref(), &emit_report(&report, &model, args.format))
}

/// Boxes file: one box per line, `x0 y0 x1 y1 [confidence]`, separated by
/// whitespace or commas; `#` starts a comment.
fn read_boxes(path: &Path) -> Result<Vec<BoxLine>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let bad = || {
            format!(
                "{}: line {}: expected `x0 y0 x1 y1 [confidence]`",
                path.display(),
                i + 1
            )
        };
        if !(4..=5).contains(&fields.len()) {
            bail!(bad());
        }
        let coord = |s: &str| s.parse::<u32>().with_context(bad);
        out.push(BoxLine {
            x0: coord(fields[0])?,
            y0: coord(fields[1])?,
            x1: coord(fields[2])?,
            y1: coord(fields[3])?,
            confidence: match fields.get(4) {
                Some(c) => c.parse().with_context(bad)?,
                None => 1.0,
            },
        });
    }
    Ok(out)
}

fn load_mask(path: &Path) -> Result<BinaryMask> {
    BinaryMask::read_file(path).with_context(|| format!("mask {}", path.display()))
}

#[derive(Args)]
struct JudgeArgs {
    /// AoI mask (PGM or RLE).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    boxes: PathBuf,
    #[command(flatten)]
    thresholds: EvalThresholds,
}

fn run_judge(args: JudgeArgs) -> Result<()> {
    let mask = load_mask(&args.mask)?;
    let dets = read_boxes(&args.boxes)?
        .iter()
        .map(|b| b.detection(mask.width(), mask.height()))
        .collect::<Result<Vec<_>>>()?;
    let cfg = JudgeConfig {
        p_t: args.thresholds.pt,
        c_t: args.thresholds.ct,
    };
    let mut out = String::new();
    for v in annotate_frame(&dets, &mask, &cfg) {
        let b = v.detection.bbox;
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            b.x_min,
            b.y_min,
            b.x_max,
            b.y_max,
            v.detection.confidence,
            v.overlap_pixels,
            if v.intruding { "Y" } else { "N" }
        ));
    }
    write_output(None, out.as_bytes())
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    boxes: PathBuf,
    #[arg(long, default_value_t = JudgeConfig::DEFAULT_P_T)]
    pt: u64,
    /// Write cases within 25% of the threshold here for manual review.
    #[arg(long)]
    review: Option<PathBuf>,
}

fn run_fuse(args: FuseArgs) -> Result<()> {
    let mask = load_mask(&args.mask)?;
    let boxes = read_boxes(&args.boxes)?
        .iter()
        .map(|b| Ok(b.detection(mask.width(), mask.height())?.bbox))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    for case in fuse_labels(&mask, &boxes, args.pt) {
        out.push_str(&serde_json::to_string(&CaseRecord::from(&case))?);
        out.push('\n');
    }
    if let Some(path) = &args.review {
        let mut review = String::new();
        for r in review_candidates(&mask, &boxes, args.pt) {
            review.push_str(&serde_json::to_string(&r)?);
            review.push('\n');
        }
        fs::write(path, review).with_context(|| format!("writing {}", path.display()))?;
    }
    write_output(None, out.as_bytes())
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Ignore frames without any annotated person.
    #[arg(long)]
    drop_empty_frames: bool,
    /// Also print one block per split.
    #[arg(long)]
    by_split: bool,
}

fn format_stats(label: &str, s: &DatasetStats) -> String {
    format!(
        "[{label}]\ncities: {}\nimages: {}\nintrusion_cases: {}\nno_intrusion_cases: {}\navg_cases_per_image: {:.2}\n",
        s.cities, s.images, s.intrusion_cases, s.no_intrusion_cases, s.avg_cases_per_image
    )
}

fn run_stats(args: StatsArgs) -> Result<()> {
    let mut records = read_dataset(&args.dataset)?;
    if args.drop_empty_frames {
        records = drop_empty_frames(records);
    }
    let mut out = format_stats("all", &dataset_stats(&records));
    if args.by_split {
        let by: BTreeMap<_, _> = split_stats(&records);
        for (split, s) in by {
            out.push_str(&format_stats(&format!("{split:?}").to_lowercase(), &s));
        }
    }
    write_output(None, out.as_bytes())
}

#[derive(Args)]
struct AnalyzeArchArgs {
    /// Preset name, or `all`.
    #[arg(long, default_value = "all")]
    preset: String,
    /// Override the input shape, `CxHxW`.
    #[arg(long, value_parser = parse_shape)]
    input: Option<Shape>,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    format: TableFormat,
    /// Append the candidate spatial-path reduction ratios.
    #[arg(long)]
    ratios: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims: Vec<u64> = s
        .split(['x', 'X'])
        .map(|d| d.trim().parse::<u64>().map_err(|e| format!("'{d}': {e}")))
        .collect::<Result<_, _>>()?;
    match dims[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok(Shape::new(c, h, w)),
        _ => Err(format!("expected CxHxW with positive sizes, got '{s}'")),
    }
}

struct ArchRow {
    name: String,
    params: u64,
    macs: u64,
    rf: u64,
    reference: Option<f64>,
}

fn arch_row(spec: &ArchSpec) -> Result<ArchRow> {
    let params = model_params(spec).with_context(|| spec.name.clone())?;
    let macs = model_flops(spec).with_context(|| spec.name.clone())?;
    let rf = receptive_field_of(&spec.trunk())?.rf;
    Ok(ArchRow {
        name: spec.name.clone(),
        params,
        macs,
        rf,
        reference: presets::reference_params_millions(&spec.name),
    })
}

fn run_analyze_arch(args: AnalyzeArchArgs) -> Result<()> {
    let mut specs = if args.preset == "all" {
        presets::preset_variants()
    } else {
        match presets::preset(&args.preset) {
            Some(p) => vec![p],
            None => {
                let names: Vec<String> = presets::preset_variants().into_iter().map(|p| p.name).collect();
                return Err(semantic(format!(
                    "unknown preset '{}'; available: {}",
                    args.preset,
                    names.join(", ")
                )));
            }
        }
    };
    if let Some(input) = args.input {
        specs = specs.into_iter().map(|s| s.with_input(input)).collect();
    }
    let rows = specs.iter().map(arch_row).collect::<Result<Vec<_>>>()?;
    let reference = |r: &ArchRow| r.reference.map_or_else(|| "-".to_string(), |m| format!("{m}"));

    let mut out = String::new();
    match args.format {
        TableFormat::Csv => {
            out.push_str("name,params,macs,rf,reference_params_m\n");
            for r in &rows {
                let reference = r.reference.map_or_else(String::new, |m| m.to_string());
                out.push_str(&format!("{},{},{},{},{}\n", r.name, r.params, r.macs, r.rf, reference));
            }
        }
        TableFormat::Text => {
            let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
            out.push_str(&format!(
                "{:<width$}  {:>12}  {:>10}  {:>16}  {:>6}  {:>9}\n",
                "name", "params", "params(M)", "MACs", "rf", "ref(M)"
            ));
            for r in &rows {
                out.push_str(&format!(
                    "{:<width$}  {:>12}  {:>10.3}  {:>16}  {:>6}  {:>9}\n",
                    r.name,
                    r.params,
                    r.params as f64 / 1e6,
                    r.macs,
                    r.rf,
                    reference(r)
                ));
            }
        }
    }
    if args.ratios {
        out.push_str("\nspatial-path reduction candidates\n");
        for (label, ratio) in presets::spatial_path_ratio_candidates() {
            out.push_str(&format!("{label}: {ratio:.4} (1/{:.2})\n", 1.0 / ratio));
        }
    }
    write_output(None, out.as_bytes())
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Skip loading masks.
    #[arg(long)]
    no_mask_check: bool,
}

fn run_validate(args: ValidateArgs) -> Result<()> {
    let records = read_dataset(&args.dataset)?;
    if !args.no_mask_check {
        validate_masks(&records, dataset_dir(&args.dataset))?;
    }
    let cases: usize = records.iter().map(|r| r.cases.len()).sum();
    println!("ok: {} frames, {} cases", records.len(), cases);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Judge(a) => run_judge(a),
        Command::Fuse(a) => run_fuse(a),
        Command::Stats(a) => run_stats(a),
        Command::AnalyzeArch(a) => run_analyze_arch(a),
        Command::Validate(a) => run_validate(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
