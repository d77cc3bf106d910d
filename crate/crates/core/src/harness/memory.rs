//! Affine peak-memory model and page-count sweeps.
//!
//! Peak GB = parameters (billions) x bytes per parameter
//!         + resident context (thousands of tokens) x KV cost per 1k tokens
//!         + fixed overhead.
//!
//! Dense models keep every page resident, so the context term grows with the
//! page count. Streaming models only ever hold one segment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModelParams {
    /// Parameter count in billions.
    pub p_b: f64,
    /// Bytes per parameter.
    pub b: f64,
    /// GB of KV cache per 1k resident tokens.
    pub g: f64,
    /// Fixed activation/workspace overhead in GB.
    pub o: f64,
}

impl MemoryModelParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        for (name, v) in [("p_b", self.p_b), ("b", self.b), ("g", self.g), ("o", self.o)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(HarnessError::Invalid {
                    at: name.into(),
                    msg: format!("memory coefficient must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Fits `g` and `o` through two `(k_tokens, gb)` observations, holding the
    /// parameter term `p_b * b` fixed.
    pub fn fit_two_point(
        p_b: f64,
        b: f64,
        (k1, gb1): (f64, f64),
        (k2, gb2): (f64, f64),
    ) -> Result<Self, HarnessError> {
        if k1 == k2 {
            return Err(HarnessError::Invalid {
                at: "fit.points".into(),
                msg: "fit points need distinct token counts".into(),
            });
        }
        let g = (gb2 - gb1) / (k2 - k1);
        let o = gb1 - g * k1 - p_b * b;
        let params = Self { p_b, b, g, o };
        params.validate().map_err(|e| HarnessError::Invalid {
            at: "fit".into(),
            msg: format!("fit gives g = {g:.4}, o = {o:.4}: {e}"),
        })?;
        Ok(params)
    }
}

/// Predicted peak VRAM in GB for `k_tokens` thousand resident tokens.
pub fn predict_vram(params: &MemoryModelParams, k_tokens: f64) -> f64 {
    params.p_b * params.b + k_tokens * params.g + params.o
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub label: String,
    pub params: MemoryModelParams,
    pub tokens_per_page: usize,
    pub streaming: bool,
    pub segment_len: usize,
}

impl ModelSpec {
    /// Resident context in thousands of tokens at `pages` pages.
    pub fn k_tokens(&self, pages: usize) -> f64 {
        let resident = if self.streaming {
            pages.min(self.segment_len)
        } else {
            pages
        };
        (resident * self.tokens_per_page) as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub pages: usize,
    pub k_tokens: f64,
    pub predicted_gb: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn for_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,pages,k_tokens,predicted_gb\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.3},{:.1}", r.label, r.pages, r.k_tokens, r.predicted_gb);
        }
        out
    }
}

/// Evaluates every spec at every page count (sorted ascending, deduplicated).
pub fn mem_sweep(specs: &[ModelSpec], page_counts: &[usize]) -> SweepReport {
    let mut pages = page_counts.to_vec();
    pages.sort_unstable();
    pages.dedup();
    let rows = specs
        .iter()
        .flat_map(|spec| {
            pages.iter().map(move |&n| {
                let k = spec.k_tokens(n);
                SweepRow {
                    label: spec.label.clone(),
                    pages: n,
                    k_tokens: k,
                    predicted_gb: predict_vram(&spec.params, k),
                }
            })
        })
        .collect();
    SweepReport { rows }
}

/// Coefficients either given directly or fitted through two
/// `(pages, gb)` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamSource {
    Params(MemoryModelParams),
    Fit {
        p_b: f64,
        b: f64,
        points: [(usize, f64); 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecRecord {
    pub label: String,
    pub tokens_per_page: usize,
    #[serde(default)]
    pub streaming: bool,
    #[serde(default)]
    pub segment_len: Option<usize>,
    #[serde(flatten)]
    pub source: ParamSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpecFile {
    pub models: Vec<ModelSpecRecord>,
}

impl SweepSpecFile {
    pub fn resolve(&self) -> Result<Vec<ModelSpec>, HarnessError> {
        if self.models.is_empty() {
            return Err(HarnessError::Invalid {
                at: "models".into(),
                msg: "spec lists no models".into(),
            });
        }
        self.models
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let at = |f: &str| format!("models[{n}].{f}");
                let segment_len = match (m.streaming, m.segment_len) {
                    (true, Some(0)) | (true, None) => {
                        return Err(HarnessError::Invalid {
                            at: at("segment_len"),
                            msg: "streaming models need segment_len >= 1".into(),
                        })
                    }
                    (_, len) => len.unwrap_or(0),
                };
                let mut spec = ModelSpec {
                    label: m.label.clone(),
                    params: MemoryModelParams { p_b: 0.0, b: 0.0, g: 0.0, o: 0.0 },
                    tokens_per_page: m.tokens_per_page,
                    streaming: m.streaming,
                    segment_len,
                };
                spec.params = match &m.source {
                    ParamSource::Params(p) => {
                        p.validate().map_err(|e| HarnessError::Invalid { at: at("params"), msg: e.to_string() })?;
                        *p
                    }
                    ParamSource::Fit { p_b, b, points } => {
                        let [(n1, gb1), (n2, gb2)] = *points;
                        MemoryModelParams::fit_two_point(*p_b, *b, (spec.k_tokens(n1), gb1), (spec.k_tokens(n2), gb2))
                            .map_err(|e| HarnessError::Invalid { at: at("fit"), msg: e.to_string() })?
                    }
                };
                Ok(spec)
            })
            .collect()
    }
}
