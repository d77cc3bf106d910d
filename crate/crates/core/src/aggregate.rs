//! Document-level answer selection over segment predictions.

use serde::Serialize;

use crate::streaming::{SegmentPrediction, SENTINEL};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationResult {
    pub answer: String,
    pub uncertainty: f64,
    /// `None` when every segment abstained.
    pub source_segment: Option<usize>,
    pub all_abstained: bool,
}

/// Drops abstained predictions, keeping order.
pub fn filter_valid(preds: &[SegmentPrediction]) -> Vec<SegmentPrediction> {
    preds.iter().filter(|p| !p.abstained).cloned().collect()
}

/// Lowest-uncertainty prediction wins; ties go to the lowest segment index.
/// With nothing to choose from the document abstains.
pub fn select_answer(valid: &[SegmentPrediction]) -> AggregationResult {
    let best = valid.iter().reduce(|best, p| {
        let better = p.uncertainty < best.uncertainty
            || (p.uncertainty == best.uncertainty && p.segment_index < best.segment_index);
        if better {
            p
        } else {
            best
        }
    });
    match best {
        Some(p) => AggregationResult {
            answer: p.text.clone(),
            uncertainty: p.uncertainty,
            source_segment: Some(p.segment_index),
            all_abstained: false,
        },
        None => AggregationResult {
            answer: SENTINEL.to_string(),
            uncertainty: 0.0,
            source_segment: None,
            all_abstained: true,
        },
    }
}

pub fn aggregate(preds: &[SegmentPrediction]) -> AggregationResult {
    select_answer(&filter_valid(preds))
}
