//! Binary AoI rasters: construction, polygon rasterization and the two
//! on-disk encodings (binary PGM and run-length text).

use std::fmt::Write as _;
use std::path::Path;

use bitvec::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("expected {expected} pixels, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(&'static str),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("malformed RLE: {0}")]
    Rle(String),
    #[error("unrecognized mask encoding")]
    UnknownFormat,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const RLE_MAGIC: &str = "rle v1:";

/// Row-major H x W binary raster, one bit per pixel (1 = AoI).
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: BitVec<u64, Lsb0>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    /// All-zero mask.
    pub fn new(width: u32, height: u32) -> Result<Self, MaskError> {
        Self::filled(width, height, false)
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyDimensions { width, height });
        }
        Ok(Self {
            width,
            height,
            bits: BitVec::repeat(value, width as usize * height as usize),
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        Ok(mask)
    }

    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Result<Self, MaskError> {
        let mut mask = Self::new(width, height)?;
        if bits.len() != mask.bits.len() {
            return Err(MaskError::SizeMismatch {
                expected: mask.bits.len(),
                actual: bits.len(),
            });
        }
        for (i, &b) in bits.iter().enumerate() {
            mask.bits.set(i, b);
        }
        Ok(mask)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x},{y}) outside {}x{}",
            self.width,
            self.height
        );
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits.set(i, value);
    }

    pub fn row(&self, y: u32) -> &BitSlice<u64, Lsb0> {
        let start = y as usize * self.width as usize;
        &self.bits[start..start + self.width as usize]
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.count_ones() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.bits.not_any()
    }

    /// Rasterize a polygon with the even-odd rule, sampling pixel centers.
    ///
    /// A pixel `(x, y)` is set when its center `(x + 0.5, y + 0.5)` lies inside.
    /// Centers exactly on a left edge count as inside, on a right edge as
    /// outside. Vertices may lie outside the raster.
    pub fn from_polygon(width: u32, height: u32, vertices: &[(f64, f64)]) -> Result<Self, MaskError> {
        if vertices.len() < 3 {
            return Err(MaskError::DegeneratePolygon("fewer than 3 vertices"));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(MaskError::DegeneratePolygon("non-finite vertex"));
        }
        if polygon_area(vertices) == 0.0 {
            return Err(MaskError::DegeneratePolygon("zero area"));
        }
        let mut mask = Self::new(width, height)?;
        let mut crossings = Vec::with_capacity(vertices.len());
        for y in 0..height {
            let yc = y as f64 + 0.5;
            crossings.clear();
            for (i, &(xi, yi)) in vertices.iter().enumerate() {
                let (xj, yj) = vertices[(i + vertices.len() - 1) % vertices.len()];
                if (yi > yc) != (yj > yc) {
                    crossings.push((xj - xi) * (yc - yi) / (yj - yi) + xi);
                }
            }
            crossings.sort_by(f64::total_cmp);
            for span in crossings.chunks_exact(2) {
                let start = (span[0] - 0.5).ceil().clamp(0.0, width as f64) as usize;
                let end = (span[1] - 0.5).ceil().clamp(0.0, width as f64) as usize;
                if start < end {
                    let row = y as usize * width as usize;
                    mask.bits[row + start..row + end].fill(true);
                }
            }
        }
        Ok(mask)
    }

    /// Binary PGM ("P5", maxval 255). Set pixels are written as 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|b| if *b { 255u8 } else { 0 }));
        out
    }

    /// Parse a binary PGM; any nonzero sample is a set pixel.
    pub fn from_pgm(data: &[u8]) -> Result<Self, MaskError> {
        let bad = |m: &str| MaskError::Pgm(m.to_string());
        let mut pos = 0usize;
        let mut fields = [0u32; 3];
        if data.get(..2) != Some(b"P5") {
            return Err(bad("missing P5 magic"));
        }
        pos += 2;
        for field in fields.iter_mut() {
            // whitespace and comments
            loop {
                match data.get(pos) {
                    Some(c) if c.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while data.get(pos).is_some_and(|&c| c != b'\n') {
                            pos += 1;
                        }
                    }
                    _ => break,
                }
            }
            let start = pos;
            while data.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(bad("expected an integer header field"));
            }
            *field = std::str::from_utf8(&data[start..pos])
                .expect("ascii digits")
                .parse()
                .map_err(|_| bad("header field out of range"))?;
        }
        if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(bad("missing whitespace after maxval"));
        }
        pos += 1;
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(MaskError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let pixels = &data[pos..];
        let mut mask = Self::new(width, height)?;
        if pixels.len() != mask.bits.len() {
            return Err(MaskError::SizeMismatch {
                expected: mask.bits.len(),
                actual: pixels.len(),
            });
        }
        for (i, &p) in pixels.iter().enumerate() {
            if p != 0 {
                mask.bits.set(i, true);
            }
        }
        Ok(mask)
    }

    /// `rle v1: <width> <height> <val0> <run> <run> ...`, row-major runs of
    /// alternating value starting with `val0`.
    pub fn to_rle(&self) -> String {
        let mut out = format!("{RLE_MAGIC} {} {} {}", self.width, self.height, self.bits[0] as u8);
        let mut current = self.bits[0];
        let mut run = 0usize;
        for b in self.bits.iter().by_vals() {
            if b == current {
                run += 1;
            } else {
                write!(out, " {run}").unwrap();
                current = b;
                run = 1;
            }
        }
        write!(out, " {run}").unwrap();
        out
    }

    pub fn from_rle(text: &str) -> Result<Self, MaskError> {
        let bad = |m: String| MaskError::Rle(m);
        let body = text
            .trim()
            .strip_prefix(RLE_MAGIC)
            .ok_or_else(|| bad(format!("missing `{RLE_MAGIC}` prefix")))?;
        let mut tokens = body.split_ascii_whitespace().map(|t| {
            t.parse::<u64>()
                .map_err(|_| MaskError::Rle(format!("not a non-negative integer: `{t}`")))
        });
        let mut next = |what: &str| {
            tokens
                .next()
                .unwrap_or_else(|| Err(MaskError::Rle(format!("missing {what}"))))
        };
        let width = u32::try_from(next("width")?).map_err(|_| bad("width too large".into()))?;
        let height = u32::try_from(next("height")?).map_err(|_| bad("height too large".into()))?;
        let mut value = match next("start value")? {
            0 => false,
            1 => true,
            v => return Err(bad(format!("start value must be 0 or 1, got {v}"))),
        };
        let mut mask = Self::new(width, height)?;
        let total = mask.bits.len();
        let mut filled = 0usize;
        for run in tokens {
            let run = run? as usize;
            if run == 0 {
                return Err(bad("zero-length run".into()));
            }
            if filled + run > total {
                return Err(bad(format!("runs exceed {total} pixels")));
            }
            if value {
                mask.bits[filled..filled + run].fill(true);
            }
            filled += run;
            value = !value;
        }
        if filled != total {
            return Err(bad(format!("runs cover {filled} of {total} pixels")));
        }
        Ok(mask)
    }

    /// Decode either encoding by sniffing the leading bytes.
    pub fn decode(data: &[u8]) -> Result<Self, MaskError> {
        if data.starts_with(b"P5") {
            Self::from_pgm(data)
        } else if data.starts_with(RLE_MAGIC.as_bytes()) {
            let text = std::str::from_utf8(data).map_err(|_| MaskError::Rle("not UTF-8".into()))?;
            Self::from_rle(text)
        } else {
            Err(MaskError::UnknownFormat)
        }
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, MaskError> {
        Self::decode(&std::fs::read(path)?)
    }
}

/// Shoelace area (absolute).
pub fn polygon_area(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = vertices[i];
            let (x1, y1) = vertices[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}
