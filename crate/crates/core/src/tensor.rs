//! Dense token storage and the numeric kernels shared by every other module.
//!
//! All reductions run serially in ascending index order, so results are
//! bit-reproducible across runs and platforms.

use crate::error::{Error, Result};

/// Default layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Row-major `rows × cols` matrix of finite `f64` values.
///
/// Token `i` occupies `data[i * cols..(i + 1) * cols]`. The same type carries
/// raw tokens, projections, attention scores and aggregated representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    /// Builds a matrix, checking the shape and that every element is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, found: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * c);
        for r in rows {
            let r = r.as_ref();
            if r.len() != c {
                return Err(Error::Dimension { expected: c, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, c, data)
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be non-empty");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps kernel output whose finiteness follows from finite inputs.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Sets one element. Non-finite values are rejected.
    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(i * self.cols + j));
        }
        self.data[i * self.cols + j] = value;
        Ok(())
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// Gathers the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Shape("cannot select zero rows".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::Shape(format!("row {i} out of range for {} rows", self.rows)));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self::from_raw(indices.len(), self.cols, data))
    }

    /// Copies the column block `[start, start + width)`.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Self> {
        if width == 0 || start + width > self.cols {
            return Err(Error::Shape(format!(
                "column block [{start}, {}) out of range for {} columns",
                start + width,
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for r in self.row_iter() {
            data.extend_from_slice(&r[start..start + width]);
        }
        Ok(Self::from_raw(self.rows, width, data))
    }

    /// Writes `block` into the columns starting at `start`.
    pub(crate) fn write_column_block(&mut self, start: usize, block: &TokenMatrix) {
        debug_assert_eq!(block.rows, self.rows);
        for i in 0..self.rows {
            self.row_mut(i)[start..start + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Elementwise sum with a same-shape matrix.
    pub fn add(&self, other: &TokenMatrix) -> Result<Self> {
        check_same_shape(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * factor).collect())
    }

    /// Euclidean norm of every row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.row_iter().map(norm).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }
}

/// Spatial shape of a feature map flattened to tokens in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMapShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl FeatureMapShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels }
    }

    pub fn tokens(&self) -> usize {
        self.height * self.width
    }

    /// `(row, col)` of a raster-order token index.
    pub fn position(&self, token: usize) -> (usize, usize) {
        (token / self.width, token % self.width)
    }

    pub fn check(&self, x: &TokenMatrix) -> Result<()> {
        if x.rows() != self.tokens() || x.cols() != self.channels {
            return Err(Error::Shape(format!(
                "tokens are {}x{}, map {}x{}x{} needs {}x{}",
                x.rows(),
                x.cols(),
                self.height,
                self.width,
                self.channels,
                self.tokens(),
                self.channels
            )));
        }
        Ok(())
    }
}

/// Query/key/value projections (`C × d`) and the optional channel-scaling
/// projections (`d × scaled_dim`) applied to queries and compressed keys.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionWeights {
    pub w_q: TokenMatrix,
    pub w_k: TokenMatrix,
    pub w_v: TokenMatrix,
    pub channel_scaling: Option<ChannelScaling>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScaling {
    pub w_qs: TokenMatrix,
    pub w_ks: TokenMatrix,
}

impl ProjectionWeights {
    pub fn new(
        w_q: TokenMatrix,
        w_k: TokenMatrix,
        w_v: TokenMatrix,
        channel_scaling: Option<ChannelScaling>,
    ) -> Result<Self> {
        let (c, d) = (w_q.rows(), w_q.cols());
        for (name, w) in [("w_k", &w_k), ("w_v", &w_v)] {
            if w.rows() != c || w.cols() != d {
                return Err(Error::Shape(format!("{name} is {}x{}, expected {c}x{d}", w.rows(), w.cols())));
            }
        }
        if let Some(cs) = &channel_scaling {
            let sd = cs.w_qs.cols();
            if cs.w_qs.rows() != d || cs.w_ks.rows() != d || cs.w_ks.cols() != sd {
                return Err(Error::Shape(format!(
                    "channel scaling projections must both be {d}x{sd}, got {}x{} and {}x{}",
                    cs.w_qs.rows(),
                    cs.w_qs.cols(),
                    cs.w_ks.rows(),
                    cs.w_ks.cols()
                )));
            }
        }
        Ok(Self { w_q, w_k, w_v, channel_scaling })
    }

    pub fn in_channels(&self) -> usize {
        self.w_q.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.w_q.cols()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity given precomputed norms. Zero-norm vectors (norm ≤ eps)
/// have similarity 0 with everything; the result is clamped to [-1, 1].
#[inline]
pub(crate) fn cosine_from_parts(dot_ab: f64, norm_a: f64, norm_b: f64, eps: f64) -> f64 {
    if norm_a <= eps || norm_b <= eps {
        0.0
    } else {
        (dot_ab / (norm_a * norm_b)).clamp(-1.0, 1.0)
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), found: b.len() });
    }
    Ok(cosine_from_parts(dot(a, b), norm(a), norm(b), eps))
}

pub fn cosine_distance(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b, eps)?)
}

/// Numerically stable softmax over each row.
pub fn row_softmax(m: &TokenMatrix) -> TokenMatrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        softmax_in_place(out.row_mut(i));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
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

/// Dense product `a · b`. Each output element accumulates over the inner
/// index in ascending order, matching a naive triple loop bit for bit.
pub fn matmul(a: &TokenMatrix, b: &TokenMatrix) -> Result<TokenMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension { expected: a.cols(), found: b.rows() });
    }
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let a_row = a.row(i);
        let out_row = &mut out[i * r..(i + 1) * r];
        for (k, &aik) in a_row.iter().enumerate().take(q) {
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(TokenMatrix::from_raw(p, r, out))
}

/// `a · bᵀ`, i.e. all pairwise row dot products.
pub fn matmul_transposed(a: &TokenMatrix, b: &TokenMatrix) -> Result<TokenMatrix> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension { expected: a.cols(), found: b.cols() });
    }
    let mut out = Vec::with_capacity(a.rows() * b.rows());
    for ar in a.row_iter() {
        for br in b.row_iter() {
            out.push(dot(ar, br));
        }
    }
    Ok(TokenMatrix::from_raw(a.rows(), b.rows(), out))
}

/// Per-token layer normalization with affine `gamma`, `beta`.
pub fn layer_norm(x: &TokenMatrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<TokenMatrix> {
    let c = x.cols();
    if gamma.len() != c {
        return Err(Error::Dimension { expected: c, found: gamma.len() });
    }
    if beta.len() != c {
        return Err(Error::Dimension { expected: c, found: beta.len() });
    }
    if eps <= 0.0 {
        return Err(Error::Config(format!("layer norm eps must be positive, got {eps}")));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean) * inv * gamma[j] + beta[j];
        }
    }
    Ok(out)
}

fn check_same_shape(a: &TokenMatrix, b: &TokenMatrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    Ok(())
}

/// `‖a − b‖_F`.
pub fn frobenius_error(a: &TokenMatrix, b: &TokenMatrix) -> Result<f64> {
    check_same_shape(a, b)?;
    let mut acc = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}
