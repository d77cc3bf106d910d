//! Runs every QA pair of a document through streaming + aggregation and
//! scores the answers with ANLS.

use serde::Serialize;

use super::anls::{anls, DEFAULT_THRESHOLD};
use super::document::Document;
use super::HarnessError;
use crate::aggregate::{aggregate, AggregationResult};
use crate::compressor::Compressor;
use crate::streaming::{stream_process, StreamConfig, StreamOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QaOutcome {
    pub query: String,
    pub truth: String,
    pub result: AggregationResult,
    pub anls: f64,
    pub segments: usize,
    pub abstained_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub doc_id: String,
    pub outcomes: Vec<QaOutcome>,
}

impl EvalReport {
    pub fn mean_anls(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().map(|o| o.anls).sum::<f64>() / self.outcomes.len() as f64
    }

    pub fn abstained_answers(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.all_abstained).count()
    }
}

/// Streams the document for one query and aggregates the segment answers.
pub fn answer_query(
    doc: &Document,
    query: &str,
    compressor: &Compressor,
    cfg: &StreamConfig,
) -> Result<(StreamOutcome, AggregationResult), HarnessError> {
    let outcome = stream_process(&doc.pages, query, &doc.slm, compressor, cfg)?;
    let result = aggregate(&outcome.predictions);
    Ok((outcome, result))
}

pub fn evaluate_document(
    doc: &Document,
    compressor: &Compressor,
    cfg: &StreamConfig,
) -> Result<EvalReport, HarnessError> {
    let outcomes = doc
        .qa
        .iter()
        .map(|qa| {
            let (stream, result) = answer_query(doc, &qa.query, compressor, cfg)?;
            Ok(QaOutcome {
                query: qa.query.clone(),
                truth: qa.answer.clone(),
                anls: anls(&result.answer, &qa.answer, DEFAULT_THRESHOLD),
                segments: stream.predictions.len(),
                abstained_segments: stream.predictions.iter().filter(|p| p.abstained).count(),
                result,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(EvalReport {
        doc_id: doc.doc_id.clone(),
        outcomes,
    })
}
