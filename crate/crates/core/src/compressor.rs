//! Hierarchical multimodal page compression.
//!
//! Each page is tiled into crops. Every crop's visual patch tokens absorb the
//! OCR words that overlap that crop through one residual cross-attention
//! layer (local OCR compression). A small set of global tokens per crop
//! region then attends to the fused local tokens (global visual
//! compression). The per-region global tokens are concatenated row-major into
//! the page embedding, whose length is `R * C * global_tokens_per_region` no
//! matter how many OCR words the page carries.
//!
//! The vision and text encoders are hash-seeded mocks: every feature value is
//! a pure function of its coordinates and the seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    assign_ocr, filter_ocr, select_grid, CropGrid, GeometryError, GridConfig, OcrToken,
};
use crate::par;
use crate::tensor::{cross_attention, splitmix64, unit_interval, AttentionParams, FeatureMatrix, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("compressed token count must be positive")]
    ZeroCompressedTokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub patches_per_crop: usize,
    pub global_tokens_per_region: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            patches_per_crop: 16,
            global_tokens_per_region: 4,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    /// Full-width shape check: 1152-dim features and a 2x2 region layout with
    /// 144 global tokens per region, i.e. 576 tokens per page. Pair with
    /// [`full_width_grid`].
    pub fn full_width() -> Self {
        Self {
            d_model: 1152,
            patches_per_crop: 16,
            global_tokens_per_region: 144,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CompressError> {
        if self.d_model == 0 || self.patches_per_crop == 0 || self.global_tokens_per_region == 0 {
            return Err(CompressError::InvalidConfig(
                "d_model, patches_per_crop and global_tokens_per_region must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Tokens emitted for one page tiled by `grid`.
    pub fn page_budget(&self, grid: &CropGrid) -> usize {
        grid.crop_count() * self.global_tokens_per_region
    }
}

/// Grid config that always yields a 2x2 crop layout.
pub fn full_width_grid() -> GridConfig {
    GridConfig {
        min_crops: 4,
        max_crops: 4,
        ..GridConfig::default()
    }
}

/// One document page as seen by the compressor.
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub page_id: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub ocr: Vec<OcrToken>,
}

/// Mock vision-encoder output for one page. Blocks are stored row-major
/// over the crop grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PageFeatures {
    pub grid: CropGrid,
    pub local: Vec<FeatureMatrix>,
    pub global_regions: Vec<FeatureMatrix>,
}

impl PageFeatures {
    pub fn local(&self, i: usize, j: usize) -> &FeatureMatrix {
        &self.local[i * self.grid.cols + j]
    }

    pub fn global_region(&self, i: usize, j: usize) -> &FeatureMatrix {
        &self.global_regions[i * self.grid.cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageEmbedding {
    pub page_id: u32,
    pub grid: CropGrid,
    pub tokens: FeatureMatrix,
}

impl PageEmbedding {
    pub fn token_count(&self) -> usize {
        self.tokens.rows()
    }
}

/// Weights for both cross-attention stages.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressorParams {
    pub local: AttentionParams,
    pub global: AttentionParams,
}

impl CompressorParams {
    pub fn seeded(d_model: usize, seed: u64) -> Result<Self, TensorError> {
        Ok(Self {
            local: AttentionParams::seeded(d_model, seed)?,
            global: AttentionParams::seeded(d_model, splitmix64(seed ^ 0x676C_6F62_616C))?,
        })
    }
}

const ROLE_LOCAL: u64 = 1;
const ROLE_GLOBAL: u64 = 2;
const ROLE_TEXT: u64 = 3;

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |h, &p| splitmix64(h ^ p))
}

fn hash_text(text: &str) -> u64 {
    // FNV-1a over the UTF-8 bytes; stable across platforms and releases.
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Mock vision encoder. Entry `(patch, dim)` of crop `c` is
/// `h(seed, page_id, role, c, patch, dim)` mapped to `[-1, 1]`.
pub fn encode_page_visual(page_id: u32, grid: &CropGrid, cfg: &EncoderConfig) -> PageFeatures {
    let block = |role: u64, crop: usize, rows: usize| {
        FeatureMatrix::from_fn(rows, cfg.d_model, |p, d| {
            unit_interval(mix(&[cfg.seed, u64::from(page_id), role, crop as u64, p as u64, d as u64]))
        })
        .expect("hash features are finite")
    };
    let n = grid.crop_count();
    PageFeatures {
        grid: *grid,
        local: (0..n).map(|c| block(ROLE_LOCAL, c, cfg.patches_per_crop)).collect(),
        global_regions: (0..n)
            .map(|c| block(ROLE_GLOBAL, c, cfg.global_tokens_per_region))
            .collect(),
    }
}

/// Mock text encoder: a unit-norm hash embedding of the lower-cased word.
pub fn embed_ocr<'a>(
    tokens: impl IntoIterator<Item = &'a OcrToken>,
    cfg: &EncoderConfig,
) -> FeatureMatrix {
    let mut data = Vec::new();
    let mut rows = 0;
    for tok in tokens {
        let key = hash_text(&tok.text.to_lowercase());
        let start = data.len();
        data.extend(
            (0..cfg.d_model).map(|d| unit_interval(mix(&[cfg.seed, ROLE_TEXT, key, d as u64]))),
        );
        let norm = data[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            data[start..].iter_mut().for_each(|v| *v /= norm);
        } else {
            data[start] = 1.0;
        }
        rows += 1;
    }
    FeatureMatrix::new(rows, cfg.d_model, data).expect("hash embeddings are finite")
}

/// Local visual tokens of one crop attend to that crop's OCR embeddings.
pub fn local_ocr_compression(
    visual: &FeatureMatrix,
    ocr: &FeatureMatrix,
    params: &AttentionParams,
) -> Result<FeatureMatrix, CompressError> {
    Ok(cross_attention(visual, ocr, params)?)
}

/// Global tokens of one region attend to that region's fused local tokens.
pub fn global_visual_compression(
    global: &FeatureMatrix,
    fused_local: &FeatureMatrix,
    params: &AttentionParams,
) -> Result<FeatureMatrix, CompressError> {
    Ok(cross_attention(global, fused_local, params)?)
}

/// End-to-end compression of one page into its fixed-length embedding.
pub fn compress_page(
    page: &Page,
    cfg: &EncoderConfig,
    grid_cfg: &GridConfig,
    params: &CompressorParams,
) -> Result<PageEmbedding, CompressError> {
    let grid = select_grid(page.width_px, page.height_px, grid_cfg);
    let ocr = filter_ocr(&page.ocr, grid_cfg.ocr_min_conf);
    let assignment = assign_ocr(&ocr, &grid, grid_cfg);
    let features = encode_page_visual(page.page_id, &grid, cfg);
    let mut regions = Vec::with_capacity(grid.crop_count());
    for (i, j) in grid.crops() {
        let text = embed_ocr(assignment.tokens(i, j, &ocr), cfg);
        let fused = local_ocr_compression(features.local(i, j), &text, &params.local)?;
        regions.push(global_visual_compression(
            features.global_region(i, j),
            &fused,
            &params.global,
        )?);
    }
    Ok(PageEmbedding {
        page_id: page.page_id,
        grid,
        tokens: FeatureMatrix::vstack(&regions)?,
    })
}

/// Compressor bundle: configs plus weights, shareable across threads.
#[derive(Debug, Clone)]
pub struct Compressor {
    pub encoder: EncoderConfig,
    pub grid: GridConfig,
    pub params: CompressorParams,
}

impl Compressor {
    pub fn new(encoder: EncoderConfig, grid: GridConfig) -> Result<Self, CompressError> {
        encoder.validate()?;
        grid.validate()?;
        let params = CompressorParams::seeded(encoder.d_model, encoder.seed)?;
        Ok(Self {
            encoder,
            grid,
            params,
        })
    }

    pub fn compress(&self, page: &Page) -> Result<PageEmbedding, CompressError> {
        compress_page(page, &self.encoder, &self.grid, &self.params)
    }

    /// Compresses pages in order, fanning out over the thread pool when
    /// `parallel` is set and the `parallel` feature is enabled.
    pub fn compress_all(
        &self,
        pages: &[Page],
        parallel: bool,
    ) -> Result<Vec<PageEmbedding>, CompressError> {
        par::map(pages, parallel, |p| self.compress(p)).into_iter().collect()
    }

    pub fn page_budget(&self, page: &Page) -> usize {
        self.encoder
            .page_budget(&select_grid(page.width_px, page.height_px, &self.grid))
    }
}

/// `baseline / compressed`, e.g. 3210 dense tokens against 576 compressed.
pub fn token_reduction_ratio(baseline: usize, compressed: usize) -> Result<f64, CompressError> {
    if compressed == 0 {
        return Err(CompressError::ZeroCompressedTokens);
    }
    Ok(baseline as f64 / compressed as f64)
}
