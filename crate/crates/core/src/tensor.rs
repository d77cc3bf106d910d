//! Dense row-major matrices and the residual cross-attention block shared by
//! both compression stages.
//!
//! Everything here is deliberately small: a single attention head with
//! `1/sqrt(d)` scaling, no normalisation layers and no feed-forward block.
//! Weights come from a seeded splitmix64 stream so that every test and every
//! CLI run is reproducible without weight files.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix must have at least one column")]
    ZeroColumns,
    #[error("data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

/// Row-major matrix of token embeddings: one row per token, one column per
/// embedding dimension.
#[derive(Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for FeatureMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FeatureMatrix({}x{})", self.rows, self.cols)
    }
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if cols == 0 {
            return Err(TensorError::ZeroColumns);
        }
        if data.len() != rows * cols {
            return Err(TensorError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite {
                row: idx / cols,
                col: idx % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self, TensorError> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self, TensorError> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        Ok(m)
    }

    /// Builds a matrix from nested rows. All rows must share the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(TensorError::ShapeMismatch {
                op: "from_rows",
                left: (1, cols),
                right: (1, bad.len()),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix by evaluating `f(row, col)` for every entry.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, TensorError> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self, TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Stacks matrices vertically. All inputs must share the column count.
    pub fn vstack(parts: &[FeatureMatrix]) -> Result<Self, TensorError> {
        let cols = parts.first().map(|m| m.cols).ok_or(TensorError::ZeroColumns)?;
        let mut data = Vec::with_capacity(parts.iter().map(|m| m.data.len()).sum());
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "vstack",
                    left: (rows, cols),
                    right: m.shape(),
                });
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Self { rows, cols, data })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard matrix product `a * b`.
pub fn matmul(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix, TensorError> {
    if a.cols != b.rows {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    // i-k-j ordering keeps the inner loop contiguous in both b and out.
    for i in 0..n {
        let out_row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * m..(p + 1) * m];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    FeatureMatrix::new(n, m, out)
}

/// `a * b^T` without materialising the transpose. `b` must be non-empty.
fn matmul_transposed(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix, TensorError> {
    if a.cols != b.cols {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_transposed",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Vec::with_capacity(a.rows * b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.push(ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum());
        }
    }
    FeatureMatrix::new(a.rows, b.rows, out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(m: &FeatureMatrix) -> FeatureMatrix {
    let mut data = m.data.clone();
    for row in data.chunks_mut(m.cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    FeatureMatrix {
        rows: m.rows,
        cols: m.cols,
        data,
    }
}

/// splitmix64 finaliser; also used as the hash behind the mock encoders.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps a hash to a uniform value in `[-1, 1]`.
pub fn unit_interval(h: u64) -> f64 {
    // 53 high bits give an exact dyadic rational in [0, 1].
    let u = (h >> 11) as f64 / ((1u64 << 53) - 1) as f64;
    2.0 * u - 1.0
}

/// Sequential splitmix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[-1, 1]`.
    pub fn next_signed(&mut self) -> f64 {
        unit_interval(self.next_u64())
    }
}

/// Projection weights of one single-head cross-attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub d_model: usize,
    pub w_q: FeatureMatrix,
    pub w_k: FeatureMatrix,
    pub w_v: FeatureMatrix,
    pub w_o: FeatureMatrix,
    pub seed: u64,
}

impl AttentionParams {
    /// Deterministic initialisation: entries uniform in `[-1, 1]` scaled by
    /// `1/sqrt(d)`, drawn in the order W_q, W_k, W_v, W_o.
    pub fn seeded(d_model: usize, seed: u64) -> Result<Self, TensorError> {
        let mut rng = SplitMix64::new(seed);
        let scale = 1.0 / (d_model as f64).sqrt();
        let mut next = || FeatureMatrix::from_fn(d_model, d_model, |_, _| rng.next_signed() * scale);
        Ok(Self {
            d_model,
            w_q: next()?,
            w_k: next()?,
            w_v: next()?,
            w_o: next()?,
            seed,
        })
    }

    pub fn from_weights(
        w_q: FeatureMatrix,
        w_k: FeatureMatrix,
        w_v: FeatureMatrix,
        w_o: FeatureMatrix,
    ) -> Result<Self, TensorError> {
        let d = w_q.rows();
        for w in [&w_q, &w_k, &w_v, &w_o] {
            if w.shape() != (d, d) {
                return Err(TensorError::ShapeMismatch {
                    op: "attention_params",
                    left: (d, d),
                    right: w.shape(),
                });
            }
        }
        Ok(Self {
            d_model: d,
            w_q,
            w_k,
            w_v,
            w_o,
            seed: 0,
        })
    }
}

/// `queries + softmax(Q K^T / sqrt(d)) V W_o` with `Q = queries W_q`,
/// `K = keys_values W_k` and `V = keys_values W_v`.
///
/// An empty context leaves the queries untouched.
pub fn cross_attention(
    queries: &FeatureMatrix,
    keys_values: &FeatureMatrix,
    params: &AttentionParams,
) -> Result<FeatureMatrix, TensorError> {
    let d = params.d_model;
    if queries.cols() != d {
        return Err(TensorError::ShapeMismatch {
            op: "cross_attention(queries)",
            left: queries.shape(),
            right: (d, d),
        });
    }
    if keys_values.cols() != d {
        return Err(TensorError::ShapeMismatch {
            op: "cross_attention(keys_values)",
            left: keys_values.shape(),
            right: (d, d),
        });
    }
    if keys_values.is_empty() || queries.is_empty() {
        return Ok(queries.clone());
    }
    let q = matmul(queries, &params.w_q)?;
    let k = matmul(keys_values, &params.w_k)?;
    let v = matmul(keys_values, &params.w_v)?;
    let scores = matmul_transposed(&q, &k)?.scale(1.0 / (d as f64).sqrt());
    let weights = softmax_rows(&scores);
    let context = matmul(&weights, &v)?;
    let attended = matmul(&context, &params.w_o)?;
    queries.add(&attended)
}
