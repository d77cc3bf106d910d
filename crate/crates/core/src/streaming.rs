//! Segment-wise streaming inference with entropy-based abstention.
//!
//! A document is cut into consecutive segments of `segment_len` pages. Each
//! segment is compressed, handed to the language model together with the
//! query, scored by the mean token entropy of what the model generated, and
//! then dropped. Only `(text, uncertainty, abstained)` outlives a segment, so
//! resident embedding memory is bounded by one segment's worth of tokens.
//!
//! The language model here is [`MockSlm`], a lookup table keyed by query and
//! by which pages are present in the segment.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressor::{CompressError, Compressor, Page, PageEmbedding};
use crate::par;

/// Literal answer a segment produces when it holds no evidence.
pub const SENTINEL: &str = "Not Answerable";

pub fn is_sentinel(text: &str) -> bool {
    text.trim() == SENTINEL
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("invalid token distribution: {0}")]
    InvalidDistribution(String),
    #[error("distribution has {got} entries but the vocabulary has {expected}")]
    VocabMismatch { expected: usize, got: usize },
    #[error("uncertainty is undefined without generated tokens")]
    NoTokens,
    #[error("{dists} distributions but {targets} target ids")]
    LengthMismatch { dists: usize, targets: usize },
    #[error("target id {id} outside vocabulary of {vocab}")]
    TargetOutOfRange { id: usize, vocab: usize },
    #[error("segment {0} is empty or missing embeddings")]
    EmptySegment(usize),
    #[error("segment_len must be >= 1")]
    ZeroSegmentLen,
    #[error("document has no pages")]
    EmptyDocument,
    #[error("invalid SLM script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

/// Splits pages `1..=n_pages` into consecutive runs of `segment_len`; the
/// last run holds the remainder and may be shorter.
pub fn segment_document(n_pages: usize, segment_len: usize) -> Vec<RangeInclusive<usize>> {
    assert!(segment_len >= 1, "segment_len must be >= 1");
    (1..=n_pages)
        .step_by(segment_len)
        .map(|start| start..=(start + segment_len - 1).min(n_pages))
        .collect()
}

/// Probability vector over the vocabulary for one generated position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, StreamError> {
        if probs.is_empty() {
            return Err(StreamError::InvalidDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(StreamError::InvalidDistribution(format!("entry {p} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(StreamError::InvalidDistribution(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, idx: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[idx] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        // `0.0 - x` rather than `-x` so one-hot rows give +0.0.
        0.0 - self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

impl TryFrom<Vec<f64>> for TokenDistribution {
    type Error = StreamError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<TokenDistribution> for Vec<f64> {
    fn from(d: TokenDistribution) -> Self {
        d.probs
    }
}

/// Mean per-position entropy (nats) of the generated distributions.
pub fn token_entropy(dists: &[TokenDistribution]) -> Result<f64, StreamError> {
    if dists.is_empty() {
        return Err(StreamError::NoTokens);
    }
    Ok(dists.iter().map(TokenDistribution::entropy).sum::<f64>() / dists.len() as f64)
}

/// Summed next-token negative log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtpLoss {
    pub value: f64,
    /// Set when some target had probability zero; each such position then
    /// contributes `-ln(f64::MIN_POSITIVE)` instead of infinity.
    pub saturated: bool,
}

pub fn ntp_loss(dists: &[TokenDistribution], target_ids: &[usize]) -> Result<NtpLoss, StreamError> {
    if dists.len() != target_ids.len() {
        return Err(StreamError::LengthMismatch {
            dists: dists.len(),
            targets: target_ids.len(),
        });
    }
    let mut value = 0.0;
    let mut saturated = false;
    for (d, &id) in dists.iter().zip(target_ids) {
        let p = *d.probs.get(id).ok_or(StreamError::TargetOutOfRange {
            id,
            vocab: d.len(),
        })?;
        if p > 0.0 {
            value -= p.ln();
        } else {
            saturated = true;
            value -= f64::MIN_POSITIVE.ln();
        }
    }
    Ok(NtpLoss { value, saturated })
}

/// Contiguous run of pages processed as one inference unit.
#[derive(Debug, Clone)]
pub struct Segment {
    pub index: usize,
    pub page_ids: Vec<u32>,
    pub embeddings: Vec<PageEmbedding>,
}

impl Segment {
    pub fn resident_tokens(&self) -> usize {
        self.embeddings.iter().map(PageEmbedding::token_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPrediction {
    pub segment_index: usize,
    pub page_ids: Vec<u32>,
    pub text: String,
    /// Per-position distributions; emptied once the segment is released.
    pub token_dists: Vec<TokenDistribution>,
    pub uncertainty: f64,
    pub abstained: bool,
}

impl SegmentPrediction {
    pub fn new(segment_index: usize, page_ids: Vec<u32>, text: String, uncertainty: f64) -> Self {
        Self {
            segment_index,
            page_ids,
            abstained: is_sentinel(&text),
            text,
            token_dists: Vec::new(),
            uncertainty,
        }
    }

    fn release(mut self) -> Self {
        self.token_dists = Vec::new();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub query: String,
    /// Every listed page must be in the segment for the entry to fire.
    #[serde(default)]
    pub pages: Vec<u32>,
    pub answer: String,
    pub dists: Vec<TokenDistribution>,
}

/// Scripted stand-in for the language model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSlm {
    pub vocab: Vec<String>,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    /// Distributions emitted with the sentinel when nothing matches. Defaults
    /// to one one-hot position per sentinel word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abstain_dists: Option<Vec<TokenDistribution>>,
}

impl Default for MockSlm {
    fn default() -> Self {
        Self {
            vocab: SENTINEL.split(' ').map(str::to_string).collect(),
            entries: Vec::new(),
            abstain_dists: None,
        }
    }
}

impl MockSlm {
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.vocab.is_empty() {
            return Err(StreamError::InvalidScript("vocab must be non-empty".into()));
        }
        for (n, e) in self.entries.iter().enumerate() {
            if e.dists.is_empty() {
                return Err(StreamError::InvalidScript(format!(
                    "entries[{n}] has no token distributions"
                )));
            }
            self.check_dists(&e.dists)?;
        }
        if let Some(d) = &self.abstain_dists {
            if d.is_empty() {
                return Err(StreamError::InvalidScript("abstain_dists is empty".into()));
            }
            self.check_dists(d)?;
        }
        Ok(())
    }

    fn check_dists(&self, dists: &[TokenDistribution]) -> Result<(), StreamError> {
        match dists.iter().find(|d| d.len() != self.vocab.len()) {
            Some(d) => Err(StreamError::VocabMismatch {
                expected: self.vocab.len(),
                got: d.len(),
            }),
            None => Ok(()),
        }
    }

    /// First script entry whose query matches and whose pages are all present.
    pub fn generate(&self, query: &str, page_ids: &[u32]) -> (String, Vec<TokenDistribution>) {
        let present: BTreeSet<u32> = page_ids.iter().copied().collect();
        let query = query.trim();
        match self
            .entries
            .iter()
            .find(|e| e.query.trim() == query && e.pages.iter().all(|p| present.contains(p)))
        {
            Some(e) => (e.answer.clone(), e.dists.clone()),
            None => (SENTINEL.to_string(), self.abstain_distributions()),
        }
    }

    fn abstain_distributions(&self) -> Vec<TokenDistribution> {
        self.abstain_dists.clone().unwrap_or_else(|| {
            let n = self.vocab.len();
            SENTINEL
                .split(' ')
                .map(|w| TokenDistribution::one_hot(n, self.vocab.iter().position(|v| v == w).unwrap_or(0)))
                .collect()
        })
    }
}

/// Runs the model on one segment and scores it before the segment's
/// buffers are released.
pub fn run_segment(
    segment: &Segment,
    query: &str,
    slm: &MockSlm,
) -> Result<SegmentPrediction, StreamError> {
    if segment.page_ids.is_empty() || segment.embeddings.len() != segment.page_ids.len() {
        return Err(StreamError::EmptySegment(segment.index));
    }
    let (text, dists) = slm.generate(query, &segment.page_ids);
    slm.check_dists(&dists)?;
    let uncertainty = token_entropy(&dists)?;
    let mut pred = SegmentPrediction::new(segment.index, segment.page_ids.clone(), text, uncertainty);
    pred.token_dists = dists;
    Ok(pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub segment_len: usize,
    pub parallel: bool,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            segment_len: 10,
            parallel: false,
        }
    }
}

/// Resident embedding-token count after every acquire/release event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResidencyTrace {
    samples: Vec<usize>,
    resident: usize,
    peak: usize,
}

impl ResidencyTrace {
    fn acquire(&mut self, tokens: usize) {
        self.resident += tokens;
        self.peak = self.peak.max(self.resident);
        self.samples.push(self.resident);
    }

    fn release(&mut self, tokens: usize) {
        self.resident -= tokens;
        self.samples.push(self.resident);
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn resident(&self) -> usize {
        self.resident
    }
}

#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub predictions: Vec<SegmentPrediction>,
    pub trace: ResidencyTrace,
    /// Segments held at once: 1 sequentially, the worker count in parallel.
    pub wave_size: usize,
}

/// Streams `pages` through compression and the model, one segment at a time
/// (or one wave of `worker_count` segments in parallel mode).
pub fn stream_process(
    pages: &[Page],
    query: &str,
    slm: &MockSlm,
    compressor: &Compressor,
    cfg: &StreamConfig,
) -> Result<StreamOutcome, StreamError> {
    if cfg.segment_len == 0 {
        return Err(StreamError::ZeroSegmentLen);
    }
    if pages.is_empty() {
        return Err(StreamError::EmptyDocument);
    }
    slm.validate()?;
    let ranges: Vec<_> = segment_document(pages.len(), cfg.segment_len)
        .into_iter()
        .enumerate()
        .collect();
    let wave_size = par::worker_count(cfg.parallel);
    let mut trace = ResidencyTrace::default();
    let mut predictions = Vec::with_capacity(ranges.len());

    let build = |index: usize, range: &RangeInclusive<usize>| -> Result<Segment, StreamError> {
        let slice = &pages[range.start() - 1..*range.end()];
        Ok(Segment {
            index,
            page_ids: slice.iter().map(|p| p.page_id).collect(),
            embeddings: slice
                .iter()
                .map(|p| compressor.compress(p))
                .collect::<Result<_, _>>()?,
        })
    };

    if wave_size == 1 {
        for (index, range) in &ranges {
            let slice = &pages[range.start() - 1..*range.end()];
            let mut segment = Segment {
                index: *index,
                page_ids: Vec::with_capacity(slice.len()),
                embeddings: Vec::with_capacity(slice.len()),
            };
            for page in slice {
                let emb = compressor.compress(page)?;
                trace.acquire(emb.token_count());
                segment.page_ids.push(page.page_id);
                segment.embeddings.push(emb);
            }
            let pred = run_segment(&segment, query, slm)?;
            trace.release(segment.resident_tokens());
            drop(segment);
            predictions.push(pred.release());
        }
    } else {
        for wave in ranges.chunks(wave_size) {
            let segments: Vec<Segment> = par::map(wave, true, |(i, r)| build(*i, r))
                .into_iter()
                .collect::<Result<_, _>>()?;
            let held: usize = segments.iter().map(Segment::resident_tokens).sum();
            trace.acquire(held);
            let preds = par::map(&segments, true, |s| run_segment(s, query, slm));
            trace.release(held);
            drop(segments);
            for p in preds {
                predictions.push(p?.release());
            }
        }
    }

    Ok(StreamOutcome {
        predictions,
        trace,
        wave_size,
    })
}
