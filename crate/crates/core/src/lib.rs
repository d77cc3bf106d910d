//! Fixed-budget multimodal page compression and constant-memory streaming
//! question answering over long documents.
//!
//! * [`tensor`]: dense matrices and residual single-head cross-attention.
//! * [`geometry`]: crop grids, bounding boxes, OCR filtering and assignment.
//! * [`compressor`]: mock encoders and the two-stage page compressor.
//! * [`streaming`]: segmentation, the scripted model, entropy and residency.
//! * [`aggregate`]: abstention filtering and lowest-uncertainty selection.
//! * [`harness`]: document files, the memory model, ANLS and the CLI.
//!
//! With the default `parallel` feature, page compression and segment
//! processing can fan out over rayon; without it every path runs serially.

pub mod aggregate;
pub mod compressor;
pub mod geometry;
pub mod harness;
pub mod par;
pub mod streaming;
pub mod tensor;

pub use aggregate::{aggregate, filter_valid, select_answer, AggregationResult};
pub use compressor::{Compressor, EncoderConfig, Page, PageEmbedding};
pub use geometry::{BBox, CropGrid, GridConfig, OcrToken, OverlapMode};
pub use streaming::{stream_process, MockSlm, SegmentPrediction, StreamConfig, SENTINEL};
pub use tensor::{AttentionParams, FeatureMatrix};
