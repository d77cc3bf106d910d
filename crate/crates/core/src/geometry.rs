//! Page geometry: crop grid selection, normalised bounding boxes, OCR
//! confidence filtering and OCR-token-to-crop assignment.
//!
//! All coordinates are fractions of page width/height, so nothing below
//! depends on the pixel resolution of the source image.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid bbox [{x0}, {y0}, {x1}, {y1}]: need 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1")]
    InvalidBBox { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("OCR token text must be non-empty")]
    EmptyText,
    #[error("OCR confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("crop ({row}, {col}) outside {rows}x{cols} grid")]
    CropOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned box in normalised page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        let ok = [x0, y0, x1, y1].iter().all(|v| v.is_finite())
            && 0.0 <= x0
            && x0 < x1
            && x1 <= 1.0
            && 0.0 <= y0
            && y0 < y1
            && y1 <= 1.0;
        if ok {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(GeometryError::InvalidBBox { x0, y0, x1, y1 })
        }
    }

    /// Normalises a pixel-space box by the page size.
    pub fn from_pixels(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        width_px: u32,
        height_px: u32,
    ) -> Result<Self, GeometryError> {
        let (w, h) = (f64::from(width_px), f64::from(height_px));
        Self::new(x0 / w, y0 / h, x1 / w, y1 / h)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// One recognised word with its box and recognition confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BBox,
    pub conf: f64,
}

impl OcrToken {
    pub fn new(text: impl Into<String>, bbox: BBox, conf: f64) -> Result<Self, GeometryError> {
        let text = text.into();
        if text.is_empty() {
            return Err(GeometryError::EmptyText);
        }
        if !(0.0..=1.0).contains(&conf) {
            return Err(GeometryError::InvalidConfidence(conf));
        }
        Ok(Self { text, bbox, conf })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    Iou,
    #[default]
    Intersection,
    TokenCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub crop_px: u32,
    pub min_crops: usize,
    pub max_crops: usize,
    pub overlap_mode: OverlapMode,
    pub tau_overlap: f64,
    /// OCR tokens below this confidence are dropped before assignment.
    pub ocr_min_conf: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            crop_px: 384,
            min_crops: 4,
            max_crops: 18,
            overlap_mode: OverlapMode::Intersection,
            tau_overlap: 0.0,
            ocr_min_conf: 0.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidConfig(m.to_string()));
        if self.crop_px == 0 {
            return bad("crop_px must be >= 1");
        }
        if self.min_crops == 0 {
            return bad("min_crops must be >= 1");
        }
        if self.max_crops < self.min_crops {
            return bad("max_crops must be >= min_crops");
        }
        if !(self.tau_overlap >= 0.0 && self.tau_overlap.is_finite()) {
            return bad("tau_overlap must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.ocr_min_conf) {
            return bad("ocr_min_conf must lie in [0, 1]");
        }
        Ok(())
    }
}

/// R×C tiling of the resized page into square crops of `crop_px` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CropGrid {
    pub rows: usize,
    pub cols: usize,
    pub crop_px: u32,
    pub target_w: u32,
    pub target_h: u32,
}

impl CropGrid {
    pub fn new(rows: usize, cols: usize, crop_px: u32) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid needs at least one crop");
        Self {
            rows,
            cols,
            crop_px,
            target_w: cols as u32 * crop_px,
            target_h: rows as u32 * crop_px,
        }
    }

    pub fn crop_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major `(i, j)` crop coordinates.
    pub fn crops(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |i| (0..self.cols).map(move |j| (i, j)))
    }
}

/// Picks the grid whose aspect ratio R/C best matches height/width.
///
/// Ties go to fewer crops, then fewer rows. Ratio errors are compared exactly
/// in integer arithmetic, so the choice never depends on float rounding.
pub fn select_grid(width_px: u32, height_px: u32, cfg: &GridConfig) -> CropGrid {
    let (w, h) = (u128::from(width_px.max(1)), u128::from(height_px.max(1)));
    // |R/C - h/w| = |R*w - C*h| / (C*w); w is shared so compare |R*w - C*h| / C.
    let err_num = |r: u128, c: u128| (r * w).abs_diff(c * h);
    let mut best: Option<(usize, usize)> = None;
    for r in 1..=cfg.max_crops {
        for c in 1..=cfg.max_crops / r {
            let n = r * c;
            if n < cfg.min_crops || n > cfg.max_crops {
                continue;
            }
            let better = match best {
                None => true,
                Some((br, bc)) => {
                    let lhs = err_num(r as u128, c as u128) * bc as u128;
                    let rhs = err_num(br as u128, bc as u128) * c as u128;
                    match lhs.cmp(&rhs) {
                        Ordering::Less => true,
                        Ordering::Greater => false,
                        Ordering::Equal => (n, r) < (br * bc, br),
                    }
                }
            };
            if better {
                best = Some((r, c));
            }
        }
    }
    let (r, c) = best.unwrap_or((1, cfg.min_crops.max(1)));
    CropGrid::new(r, c, cfg.crop_px)
}

/// Normalised box of crop `(i, j)`: `[j/C, i/R, (j+1)/C, (i+1)/R]`.
pub fn crop_bbox(grid: &CropGrid, i: usize, j: usize) -> Result<BBox, GeometryError> {
    if i >= grid.rows || j >= grid.cols {
        return Err(GeometryError::CropOutOfRange {
            row: i,
            col: j,
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    let (r, c) = (grid.rows as f64, grid.cols as f64);
    Ok(BBox {
        x0: j as f64 / c,
        y0: i as f64 / r,
        x1: (j + 1) as f64 / c,
        y1: (i + 1) as f64 / r,
    })
}

pub fn overlap(b1: &BBox, b2: &BBox, mode: OverlapMode) -> f64 {
    let inter = b1.intersection_area(b2);
    match mode {
        OverlapMode::Intersection => inter,
        OverlapMode::Iou => {
            if inter == 0.0 {
                0.0
            } else {
                inter / (b1.area() + b2.area() - inter)
            }
        }
        OverlapMode::TokenCoverage => inter / b1.area(),
    }
}

/// Keeps tokens with `conf >= tau_conf`, preserving order.
pub fn filter_ocr(tokens: &[OcrToken], tau_conf: f64) -> Vec<OcrToken> {
    tokens.iter().filter(|t| t.conf >= tau_conf).cloned().collect()
}

/// Per-crop lists of token indices, row-major over the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropAssignment {
    pub rows: usize,
    pub cols: usize,
    lists: Vec<Vec<usize>>,
}

impl CropAssignment {
    pub fn indices(&self, i: usize, j: usize) -> &[usize] {
        &self.lists[i * self.cols + j]
    }

    pub fn tokens<'a>(&self, i: usize, j: usize, tokens: &'a [OcrToken]) -> Vec<&'a OcrToken> {
        self.indices(i, j).iter().map(|&k| &tokens[k]).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> + '_ {
        self.lists
            .iter()
            .enumerate()
            .map(move |(n, l)| ((n / self.cols, n % self.cols), l.as_slice()))
    }

    /// Total number of (token, crop) pairs; exceeds the token count when
    /// words straddle crop borders.
    pub fn pair_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Assigns token `k` to crop `(i, j)` iff `overlap(b_k, crop) > tau_overlap`.
/// A token spanning a border lands in every crop it overlaps.
pub fn assign_ocr(tokens: &[OcrToken], grid: &CropGrid, cfg: &GridConfig) -> CropAssignment {
    let mut lists = vec![Vec::new(); grid.crop_count()];
    for (k, tok) in tokens.iter().enumerate() {
        // Candidate crops from the box's index range, padded by one on each
        // side so float rounding at crop borders cannot skip a crop.
        let (r, c) = (grid.rows as f64, grid.cols as f64);
        let i_lo = ((tok.bbox.y0 * r).floor() as usize).saturating_sub(1);
        let i_hi = ((tok.bbox.y1 * r).ceil() as usize + 1).min(grid.rows);
        let j_lo = ((tok.bbox.x0 * c).floor() as usize).saturating_sub(1);
        let j_hi = ((tok.bbox.x1 * c).ceil() as usize + 1).min(grid.cols);
        for i in i_lo..i_hi {
            for j in j_lo..j_hi {
                let cell = crop_bbox(grid, i, j).expect("index within grid");
                if overlap(&tok.bbox, &cell, cfg.overlap_mode) > cfg.tau_overlap {
                    lists[i * grid.cols + j].push(k);
                }
            }
        }
    }
    CropAssignment {
        rows: grid.rows,
        cols: grid.cols,
        lists,
    }
}
