//! Attention kernels: vanilla self-attention, window self-attention and
//! selective aggregation attention (full-resolution queries against `K`
//! aggregated keys and values), plus closed-form operation counts.

use std::fmt;
use std::io::Write;

use crate::dta::{dta_compress, ClusterResult, DtaConfig};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_transposed, softmax_in_place, FeatureMapShape, ProjectionWeights, TokenMatrix};

/// Head geometry and optional channel scaling of queries and compressed keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSpec {
    pub head_dim: usize,
    /// `r_c` in `(0, 1]`.
    pub channel_scale: f64,
    pub use_channel_scaling: bool,
}

impl AttentionSpec {
    pub const DEFAULT_CHANNEL_SCALE: f64 = 0.5;

    /// Channel scaling disabled.
    pub fn new(head_dim: usize) -> Self {
        Self { head_dim, channel_scale: Self::DEFAULT_CHANNEL_SCALE, use_channel_scaling: false }
    }

    pub fn with_channel_scaling(head_dim: usize, channel_scale: f64) -> Self {
        Self { head_dim, channel_scale, use_channel_scaling: true }
    }

    /// `max(1, ⌈r_c·d⌉)` with scaling on, `d` otherwise.
    pub fn scaled_dim(&self) -> usize {
        if self.use_channel_scaling {
            ((self.channel_scale * self.head_dim as f64).ceil() as usize).max(1)
        } else {
            self.head_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 {
            return Err(Error::Config("head_dim must be positive".into()));
        }
        if !(self.channel_scale > 0.0 && self.channel_scale <= 1.0) {
            return Err(Error::Config(format!("channel_scale must lie in (0, 1], got {}", self.channel_scale)));
        }
        Ok(())
    }

    fn check_weights(&self, x: &TokenMatrix, w: &ProjectionWeights) -> Result<()> {
        self.validate()?;
        if w.in_channels() != x.cols() {
            return Err(Error::Dimension { expected: x.cols(), found: w.in_channels() });
        }
        if w.head_dim() != self.head_dim {
            return Err(Error::Dimension { expected: self.head_dim, found: w.head_dim() });
        }
        if self.use_channel_scaling {
            let cs = w
                .channel_scaling
                .as_ref()
                .ok_or_else(|| Error::Config("channel scaling enabled but no scaling projections given".into()))?;
            if cs.w_qs.cols() != self.scaled_dim() {
                return Err(Error::Dimension { expected: self.scaled_dim(), found: cs.w_qs.cols() });
            }
        }
        Ok(())
    }
}

/// `softmax(q kᵀ / √dim) v`; returns the output and the attention matrix.
fn attend(q: &TokenMatrix, k: &TokenMatrix, v: &TokenMatrix, dim: usize) -> Result<(TokenMatrix, TokenMatrix)> {
    let mut scores = matmul_transposed(q, k)?;
    let inv = 1.0 / (dim as f64).sqrt();
    for i in 0..scores.rows() {
        let row = scores.row_mut(i);
        row.iter_mut().for_each(|s| *s *= inv);
        softmax_in_place(row);
    }
    let out = matmul(&scores, v)?;
    Ok((out, scores))
}

/// `softmax(QKᵀ/√d)V` with `Q = XW_Q`, `K = XW_K`, `V = XW_V`.
pub fn vanilla_attention(x: &TokenMatrix, w: &ProjectionWeights) -> Result<TokenMatrix> {
    if w.in_channels() != x.cols() {
        return Err(Error::Dimension { expected: x.cols(), found: w.in_channels() });
    }
    let q = matmul(x, &w.w_q)?;
    let k = matmul(x, &w.w_k)?;
    let v = matmul(x, &w.w_v)?;
    Ok(attend(&q, &k, &v, w.head_dim())?.0)
}

/// Vanilla attention run independently inside each non-overlapping
/// `window × window` tile of the feature map.
pub fn window_attention(
    x: &TokenMatrix,
    shape: FeatureMapShape,
    window: usize,
    w: &ProjectionWeights,
) -> Result<TokenMatrix> {
    shape.check(x)?;
    if window == 0 || !shape.height.is_multiple_of(window) || !shape.width.is_multiple_of(window) {
        return Err(Error::Shape(format!("window {window} does not divide a {}x{} map", shape.height, shape.width)));
    }
    let mut out = TokenMatrix::zeros(x.rows(), w.head_dim());
    let mut tile = Vec::with_capacity(window * window);
    for top in (0..shape.height).step_by(window) {
        for left in (0..shape.width).step_by(window) {
            tile.clear();
            for r in top..top + window {
                tile.extend((left..left + window).map(|c| r * shape.width + c));
            }
            let local = vanilla_attention(&x.select_rows(&tile)?, w)?;
            for (slot, &token) in tile.iter().enumerate() {
                out.row_mut(token).copy_from_slice(local.row(slot));
            }
        }
    }
    Ok(out)
}

/// Everything produced by one selective aggregation attention pass.
#[derive(Debug, Clone)]
pub struct SaaOutput {
    /// `N × d`.
    pub output: TokenMatrix,
    /// `N × K` attention weights.
    pub attention: TokenMatrix,
    pub compressed_keys: TokenMatrix,
    pub compressed_values: TokenMatrix,
    pub clusters: ClusterResult,
}

/// Selective aggregation attention with the density-driven compressor.
pub fn saa_attention(
    x: &TokenMatrix,
    w: &ProjectionWeights,
    spec: &AttentionSpec,
    cfg: &DtaConfig,
) -> Result<TokenMatrix> {
    Ok(saa_attention_detailed(x, w, spec, cfg)?.output)
}

pub fn saa_attention_detailed(
    x: &TokenMatrix,
    w: &ProjectionWeights,
    spec: &AttentionSpec,
    cfg: &DtaConfig,
) -> Result<SaaOutput> {
    cfg.validate()?;
    saa_attention_with(x, w, spec, cfg, |keys| dta_compress(keys, cfg))
}

/// Selective aggregation attention with a caller-supplied key compressor.
///
/// The compressor clusters the projected keys `XW_K`; its clustering
/// (assignment and weights) is reused to aggregate `XW_V` so that row `k` of
/// `K'` and `V'` describe the same cluster. Values get norm restoration when
/// `cfg.fnr_enabled`.
pub fn saa_attention_with<F>(
    x: &TokenMatrix,
    w: &ProjectionWeights,
    spec: &AttentionSpec,
    cfg: &DtaConfig,
    compress: F,
) -> Result<SaaOutput>
where
    F: FnOnce(&TokenMatrix) -> Result<ClusterResult>,
{
    spec.check_weights(x, w)?;
    let q = matmul(x, &w.w_q)?;
    let k = matmul(x, &w.w_k)?;
    let v = matmul(x, &w.w_v)?;

    let clusters = compress(&k)?;
    if clusters.assignment.len() != x.rows() {
        return Err(Error::Dimension { expected: x.rows(), found: clusters.assignment.len() });
    }
    let compressed_keys = clusters.aggregated.clone();
    let compressed_values = clusters.aggregate(&v, cfg)?;

    let (output, attention) = match (&w.channel_scaling, spec.use_channel_scaling) {
        (Some(cs), true) => {
            let qs = matmul(&q, &cs.w_qs)?;
            let ks = matmul(&compressed_keys, &cs.w_ks)?;
            attend(&qs, &ks, &compressed_values, spec.scaled_dim())?
        }
        _ => attend(&q, &compressed_keys, &compressed_values, spec.head_dim)?,
    };
    Ok(SaaOutput { output, attention, compressed_keys, compressed_values, clusters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Vanilla,
    Saa,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vanilla => "vanilla",
            Variant::Saa => "saa",
        })
    }
}

/// Term-by-term operation count of one attention layer.
///
/// | term             | vanilla | saa    |
/// |------------------|---------|--------|
/// | q_projection     | N·C²    | N·C²   |
/// | kv_projection    | 2·N·C²  | 2·K·C² |
/// | dta_cost         | 0       | N·K·C  |
/// | attention_matrix | N²·d    | N·K·d  |
/// | softmax_cost     | N²      | N·K    |
/// | weighted_sum     | N²·d    | N·K·d  |
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopEstimate {
    pub variant: Variant,
    pub n: u64,
    pub k: u64,
    pub c: u64,
    pub d: u64,
    pub q_projection: u64,
    pub kv_projection: u64,
    pub dta_cost: u64,
    pub attention_matrix: u64,
    pub softmax_cost: u64,
    pub weighted_sum: u64,
    pub total: u64,
}

impl FlopEstimate {
    pub fn terms(&self) -> [(&'static str, u64); 7] {
        [
            ("q_projection", self.q_projection),
            ("kv_projection", self.kv_projection),
            ("dta_cost", self.dta_cost),
            ("attention_matrix", self.attention_matrix),
            ("softmax_cost", self.softmax_cost),
            ("weighted_sum", self.weighted_sum),
            ("total", self.total),
        ]
    }
}

/// Closed-form operation counts; `k` is ignored for the vanilla variant.
pub fn estimate_flops(n: u64, k: u64, c: u64, d: u64, variant: Variant) -> FlopEstimate {
    let keys = match variant {
        Variant::Vanilla => n,
        Variant::Saa => k,
    };
    let q_projection = n * c * c;
    let kv_projection = 2 * keys * c * c;
    let dta_cost = match variant {
        Variant::Vanilla => 0,
        Variant::Saa => n * k * c,
    };
    let attention_matrix = n * keys * d;
    let softmax_cost = n * keys;
    let weighted_sum = n * keys * d;
    let total = q_projection + kv_projection + dta_cost + attention_matrix + softmax_cost + weighted_sum;
    FlopEstimate {
        variant,
        n,
        k: keys,
        c,
        d,
        q_projection,
        kv_projection,
        dta_cost,
        attention_matrix,
        softmax_cost,
        weighted_sum,
        total,
    }
}

/// `total_vanilla / total_saa`.
pub fn analytic_speedup(n: u64, k: u64, c: u64, d: u64) -> f64 {
    estimate_flops(n, k, c, d, Variant::Vanilla).total as f64 / estimate_flops(n, k, c, d, Variant::Saa).total as f64
}

/// `variant,N,K,C,d,term,count`
pub fn write_flops_csv<W: Write>(writer: W, estimates: &[FlopEstimate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variant", "N", "K", "C", "d", "term", "count"])?;
    for e in estimates {
        for (term, count) in e.terms() {
            w.write_record([
                e.variant.to_string(),
                e.n.to_string(),
                e.k.to_string(),
                e.c.to_string(),
                e.d.to_string(),
                term.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
