//! Independent reference implementations used by the integration and
//! acceptance tests. Deliberately naive: plain nested loops over `Vec`s, no
//! shared code with the library beyond its input types.

#![allow(dead_code)]

use std::path::PathBuf;

use pagestream::geometry::OcrToken;
use pagestream::harness::document::{load_document, Document};
use pagestream::{AttentionParams, BBox, FeatureMatrix, SegmentPrediction};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

pub fn corpus_doc(name: &str) -> Document {
    load_document(corpus_dir().join(name)).expect("bundled corpus document loads")
}

pub fn corpus_docs() -> Vec<Document> {
    let mut paths: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.into_iter().map(|p| load_document(p).unwrap()).collect()
}

fn rows(m: &FeatureMatrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

fn project(x: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d_out = w[0].len();
    x.iter()
        .map(|row| {
            (0..d_out)
                .map(|a| {
                    let mut s = 0.0;
                    for (b, xb) in row.iter().enumerate() {
                        s += xb * w[b][a];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Attention weights `softmax(q k^T / sqrt(d))`, one row per query.
pub fn attention_weights(queries: &FeatureMatrix, kv: &FeatureMatrix, p: &AttentionParams) -> Vec<Vec<f64>> {
    let d = p.d_model as f64;
    let q = project(&rows(queries), &rows(&p.w_q));
    let k = project(&rows(kv), &rows(&p.w_k));
    q.iter()
        .map(|qi| {
            let scores: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|v| v / z).collect()
        })
        .collect()
}

/// Scalar-loop cross-attention with residual.
pub fn cross_attention_oracle(queries: &FeatureMatrix, kv: &FeatureMatrix, p: &AttentionParams) -> Vec<Vec<f64>> {
    let x = rows(queries);
    if kv.rows() == 0 || x.is_empty() {
        return x;
    }
    let w = attention_weights(queries, kv, p);
    let v = project(&rows(kv), &rows(&p.w_v));
    let d = p.d_model;
    let ctx: Vec<Vec<f64>> = w
        .iter()
        .map(|wi| {
            (0..d)
                .map(|a| wi.iter().zip(&v).map(|(wj, vj)| wj * vj[a]).sum())
                .collect()
        })
        .collect();
    let out = project(&ctx, &rows(&p.w_o));
    x.iter()
        .zip(out)
        .map(|(xi, oi)| xi.iter().zip(oi).map(|(a, b)| a + b).collect())
        .collect()
}

pub fn max_diff(m: &FeatureMatrix, reference: &[Vec<f64>]) -> f64 {
    assert_eq!(m.rows(), reference.len());
    let mut worst = 0.0f64;
    for (i, row) in reference.iter().enumerate() {
        assert_eq!(m.cols(), row.len());
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((m.get(i, j) - v).abs());
        }
    }
    worst
}

/// Mean over positions of `-sum p ln p`, by direct summation.
pub fn entropy_oracle(dists: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for d in dists {
        let mut h = 0.0;
        for &p in d {
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
        total += h;
    }
    total / dists.len() as f64
}

pub fn ntp_loss_oracle(dists: &[Vec<f64>], targets: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (d, &t) in dists.iter().zip(targets) {
        loss -= d[t].ln();
    }
    loss
}

/// Linear scan: skip abstentions, keep the strictly smaller uncertainty or the
/// smaller segment index on an exact tie.
pub fn select_oracle(preds: &[SegmentPrediction]) -> Option<(usize, f64, String)> {
    let mut best: Option<&SegmentPrediction> = None;
    for p in preds {
        if p.abstained {
            continue;
        }
        best = match best {
            None => Some(p),
            Some(b) if p.uncertainty < b.uncertainty => Some(p),
            Some(b) if p.uncertainty == b.uncertainty && p.segment_index < b.segment_index => Some(p),
            keep => keep,
        };
    }
    best.map(|p| (p.segment_index, p.uncertainty, p.text.clone()))
}

pub const RASTER: usize = 1000;

/// Pixel centres `(k + 0.5) / RASTER` covered by `[lo, hi)`.
fn raster_span(lo: f64, hi: f64) -> Vec<bool> {
    (0..RASTER)
        .map(|k| {
            let c = (k as f64 + 0.5) / RASTER as f64;
            c >= lo && c < hi
        })
        .collect()
}

/// Whether two boxes share at least one pixel on a `RASTER x RASTER` grid.
/// Rectangles rasterise separably, so the 2-D test reduces to two 1-D ones.
pub fn raster_overlaps(a: &BBox, b: &BBox) -> bool {
    let hit = |a0, a1, b0, b1| {
        raster_span(a0, a1)
            .iter()
            .zip(raster_span(b0, b1))
            .any(|(x, y)| *x && y)
    };
    hit(a.x0(), a.x1(), b.x0(), b.x1()) && hit(a.y0(), a.y1(), b.y0(), b.y1())
}

/// True when any token edge lies within `eps` of a crop edge of an
/// `rows x cols` grid, where rasterisation and exact geometry may disagree.
pub fn near_grid_line(t: &BBox, rows: usize, cols: usize, eps: f64) -> bool {
    let near = |v: f64, n: usize| (0..=n).any(|k| (v - k as f64 / n as f64).abs() < eps);
    near(t.x0(), cols) || near(t.x1(), cols) || near(t.y0(), rows) || near(t.y1(), rows)
}

pub fn crop_box_oracle(rows: usize, cols: usize, i: usize, j: usize) -> BBox {
    BBox::new(
        j as f64 / cols as f64,
        i as f64 / rows as f64,
        (j + 1) as f64 / cols as f64,
        (i + 1) as f64 / rows as f64,
    )
    .unwrap()
}

pub fn normalize_oracle(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Full `(m+1) x (n+1)` Wagner-Fischer matrix over chars.
pub fn levenshtein_oracle(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in m.iter_mut().enumerate() {
        row[0] = i;
    }
    m[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = m[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            m[i][j] = sub.min(m[i - 1][j] + 1).min(m[i][j - 1] + 1);
        }
    }
    m[a.len()][b.len()]
}

pub fn anls_oracle(pred: &str, truth: &str, threshold: f64) -> f64 {
    let p = normalize_oracle(pred);
    let t = normalize_oracle(truth);
    let longest = p.chars().count().max(t.chars().count());
    if longest == 0 {
        return 1.0;
    }
    let score = 1.0 - levenshtein_oracle(&p, &t) as f64 / longest as f64;
    if score < threshold {
        0.0
    } else {
        score
    }
}

pub fn token(text: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> OcrToken {
    OcrToken::new(text, BBox::new(x0, y0, x1, y1).unwrap(), 0.9).unwrap()
}
