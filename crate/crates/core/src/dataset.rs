//! Intrusion dataset construction, I/O, validation and statistics.
//!
//! A dataset is a UTF-8 file with one JSON object per line:
//!
//! ```text
//! {"frame_id":"f1","city":"ulm","split":"train","width":64,"height":32,"mask":"rle v1: 64 32 0 2048","cases":[{"x0":1,"y0":2,"x1":9,"y1":20,"intrusion":"N"}]}
//! ```
//!
//! `mask` is either an inline run-length mask (starting with `rle v1:`) or a
//! path to a mask file, resolved relative to the dataset file. The canonical
//! form orders frames by `frame_id` and cases by `(y0, x0, y1, x1)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::judge::judge_box;
use crate::mask::{BinaryMask, MaskError, RLE_MAGIC};
use crate::metrics::GroundTruthCase;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}, column {column}: malformed record: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error("line {line}: mask: {source}")]
    Mask {
        line: usize,
        #[source]
        source: MaskError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    /// Process exit code for CLI validation: 2 for unparseable input, 3 for
    /// well-formed records that break a dataset rule.
    pub fn exit_code(&self) -> i32 {
        match self {
            DatasetError::Malformed { .. } | DatasetError::Io(_) => 2,
            DatasetError::Semantic { .. } | DatasetError::Mask { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskRef {
    Path(String),
    Inline(BinaryMask),
}

impl MaskRef {
    fn encode(&self) -> String {
        match self {
            MaskRef::Path(p) => p.clone(),
            MaskRef::Inline(m) => m.to_rle(),
        }
    }

    pub fn resolve(&self, base_dir: &Path) -> Option<PathBuf> {
        match self {
            MaskRef::Path(p) => Some(base_dir.join(p)),
            MaskRef::Inline(_) => None,
        }
    }

    pub fn load(&self, base_dir: &Path) -> Result<BinaryMask, MaskError> {
        match self {
            MaskRef::Path(p) => BinaryMask::read_file(base_dir.join(p)),
            MaskRef::Inline(m) => Ok(m.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub frame_id: String,
    pub city: String,
    pub split: Split,
    pub image_w: u32,
    pub image_h: u32,
    pub mask: MaskRef,
    pub cases: Vec<GroundTruthCase>,
}

impl FrameRecord {
    pub fn canonicalize(&mut self) {
        self.cases
            .sort_by_key(|c| (c.bbox.y_min, c.bbox.x_min, c.bbox.y_max, c.bbox.x_max, c.intrusion));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum YesNo {
    Y,
    N,
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Y
        } else {
            YesNo::N
        }
    }
}

impl From<YesNo> for bool {
    fn from(v: YesNo) -> Self {
        v == YesNo::Y
    }
}

/// Wire form of a labelled case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub intrusion: YesNo,
}

impl From<&GroundTruthCase> for CaseRecord {
    fn from(c: &GroundTruthCase) -> Self {
        Self {
            x0: c.bbox.x_min,
            y0: c.bbox.y_min,
            x1: c.bbox.x_max,
            y1: c.bbox.y_max,
            intrusion: c.intrusion.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordWire {
    frame_id: String,
    city: String,
    split: Split,
    width: u32,
    height: u32,
    mask: String,
    cases: Vec<CaseRecord>,
}

impl From<&FrameRecord> for RecordWire {
    fn from(r: &FrameRecord) -> Self {
        Self {
            frame_id: r.frame_id.clone(),
            city: r.city.clone(),
            split: r.split,
            width: r.image_w,
            height: r.image_h,
            mask: r.mask.encode(),
            cases: r.cases.iter().map(CaseRecord::from).collect(),
        }
    }
}

fn record_from_wire(w: RecordWire, line: usize) -> Result<FrameRecord, DatasetError> {
    let semantic = |message: String| DatasetError::Semantic { line, message };
    if w.frame_id.is_empty() {
        return Err(semantic("empty frame_id".into()));
    }
    if w.width == 0 || w.height == 0 {
        return Err(semantic(format!(
            "image size {}x{} must be positive",
            w.width, w.height
        )));
    }
    let mask = if w.mask.starts_with(RLE_MAGIC) {
        let m = BinaryMask::from_rle(&w.mask).map_err(|source| DatasetError::Mask { line, source })?;
        if (m.width(), m.height()) != (w.width, w.height) {
            return Err(semantic(format!(
                "inline mask is {}x{} but the frame is {}x{}",
                m.width(),
                m.height(),
                w.width,
                w.height
            )));
        }
        MaskRef::Inline(m)
    } else if w.mask.is_empty() {
        return Err(semantic("empty mask reference".into()));
    } else {
        MaskRef::Path(w.mask)
    };
    let mut cases = Vec::with_capacity(w.cases.len());
    for (i, c) in w.cases.iter().enumerate() {
        let bbox = BBox::new(c.x0, c.y0, c.x1, c.y1).map_err(|e| semantic(format!("case {i}: {e}")))?;
        if !bbox.is_within(w.width, w.height) {
            return Err(semantic(format!(
                "case {i}: box ({},{})-({},{}) exceeds image {}x{}",
                c.x0, c.y0, c.x1, c.y1, w.width, w.height
            )));
        }
        cases.push(GroundTruthCase {
            bbox,
            intrusion: c.intrusion.into(),
        });
    }
    Ok(FrameRecord {
        frame_id: w.frame_id,
        city: w.city,
        split: w.split,
        image_w: w.width,
        image_h: w.height,
        mask,
        cases,
    })
}

/// Parse dataset text. Mask paths are checked for existence against
/// `base_dir` when one is given.
pub fn parse_dataset(reader: impl BufRead, base_dir: Option<&Path>) -> Result<Vec<FrameRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: RecordWire = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            column: e.column(),
            message: e.to_string(),
        })?;
        let record = record_from_wire(wire, line_no)?;
        if let Some(first) = seen.insert(record.frame_id.clone(), line_no) {
            return Err(DatasetError::Semantic {
                line: line_no,
                message: format!("duplicate frame_id `{}` (first seen on line {first})", record.frame_id),
            });
        }
        if let Some(path) = base_dir.and_then(|base| record.mask.resolve(base)) {
            if !path.is_file() {
                return Err(DatasetError::Semantic {
                    line: line_no,
                    message: format!("missing mask file {}", path.display()),
                });
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<FrameRecord>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_dataset(std::io::BufReader::new(file), Some(base))
}

/// Canonical text: frames sorted by id, cases sorted, one compact object per line.
pub fn to_canonical_string(records: &[FrameRecord]) -> String {
    let mut sorted: Vec<FrameRecord> = records.to_vec();
    sorted.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    let mut out = String::new();
    for r in &mut sorted {
        r.canonicalize();
        out.push_str(&serde_json::to_string(&RecordWire::from(&*r)).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(records: &[FrameRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(to_canonical_string(records).as_bytes())?;
    file.flush()?;
    Ok(())
}

/// Load every mask and check it matches its frame size.
pub fn validate_masks(records: &[FrameRecord], base_dir: &Path) -> Result<(), DatasetError> {
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        let m = r
            .mask
            .load(base_dir)
            .map_err(|source| DatasetError::Mask { line, source })?;
        if (m.width(), m.height()) != (r.image_w, r.image_h) {
            return Err(DatasetError::Semantic {
                line,
                message: format!(
                    "mask for `{}` is {}x{} but the frame is {}x{}",
                    r.frame_id,
                    m.width(),
                    m.height(),
                    r.image_w,
                    r.image_h
                ),
            });
        }
    }
    Ok(())
}

/// Preliminary labels: a person is an intrusion case when their box overlaps
/// the AoI by more than `p_t` pixels.
pub fn fuse_labels(mask: &BinaryMask, person_boxes: &[BBox], p_t: u64) -> Vec<GroundTruthCase> {
    person_boxes
        .iter()
        .map(|b| GroundTruthCase {
            bbox: *b,
            intrusion: judge_box(b, mask, p_t).1,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewCase {
    pub bbox: BBox,
    pub overlap_pixels: u64,
    pub intrusion: bool,
}

/// Cases whose overlap lies within 25% of `p_t`; these are the labels most
/// likely to need a manual check.
pub fn review_candidates(mask: &BinaryMask, person_boxes: &[BBox], p_t: u64) -> Vec<ReviewCase> {
    let band = p_t as f64 * 0.25;
    person_boxes
        .iter()
        .filter_map(|b| {
            let (overlap, intrusion) = judge_box(b, mask, p_t);
            ((overlap as f64 - p_t as f64).abs() <= band).then_some(ReviewCase {
                bbox: *b,
                overlap_pixels: overlap,
                intrusion,
            })
        })
        .collect()
}

pub fn drop_empty_frames(records: Vec<FrameRecord>) -> Vec<FrameRecord> {
    records.into_iter().filter(|r| !r.cases.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub cities: u64,
    pub images: u64,
    pub intrusion_cases: u64,
    pub no_intrusion_cases: u64,
    pub avg_cases_per_image: f64,
}

pub fn dataset_stats(records: &[FrameRecord]) -> DatasetStats {
    let cities: BTreeSet<&str> = records.iter().map(|r| r.city.as_str()).collect();
    let intrusion = records.iter().flat_map(|r| &r.cases).filter(|c| c.intrusion).count() as u64;
    let all = records.iter().map(|r| r.cases.len() as u64).sum::<u64>();
    let images = records.len() as u64;
    DatasetStats {
        cities: cities.len() as u64,
        images,
        intrusion_cases: intrusion,
        no_intrusion_cases: all - intrusion,
        avg_cases_per_image: if images == 0 { 0.0 } else { all as f64 / images as f64 },
    }
}

/// Stats per split, in split order.
pub fn split_stats(records: &[FrameRecord]) -> BTreeMap<Split, DatasetStats> {
    let mut by_split: BTreeMap<Split, Vec<FrameRecord>> = BTreeMap::new();
    for r in records {
        by_split.entry(r.split).or_default().push(r.clone());
    }
    by_split.into_iter().map(|(s, rs)| (s, dataset_stats(&rs))).collect()
}
