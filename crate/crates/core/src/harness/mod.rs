//! Command-line harness: document ingestion, the memory model, ANLS scoring
//! and the `pagestream` subcommands.

pub mod anls;
pub mod cli;
pub mod document;
pub mod eval;
pub mod memory;

use thiserror::Error;

use crate::compressor::CompressError;
use crate::streaming::StreamError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: at {at}: {msg}")]
    Parse { file: String, at: String, msg: String },
    #[error("invalid {at}: {msg}")]
    Invalid { at: String, msg: String },
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl HarnessError {
    /// 1 for bad input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Invalid { .. } | Self::Stream(_) | Self::Compress(_) => 1,
            Self::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
            Self::Io { .. } | Self::Internal(_) => 2,
        }
    }
}
