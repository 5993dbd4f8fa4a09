//! Toy transformer blocks: pre-norm attention and MLP sublayers with
//! residuals, alternating global (selective aggregation) and local (window)
//! attention.
//!
//! ```text
//! y   = x + MultiHeadAttention(LN₁(x))
//! out = y + W₂ · gelu(W₁ · LN₂(y) + b₁) + b₂
//! ```
//!
//! Heads split the channels into `h` contiguous slices of `C/h`; each head
//! has its own `(C/h) × (C/h)` projections and the head outputs are
//! concatenated back to `C` channels. `gelu` is the tanh approximation
//! `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.

use crate::attention::{saa_attention, window_attention, AttentionSpec};
use crate::dta::DtaConfig;
use crate::error::{Error, Result};
use crate::synth::{self, uniform_matrix};
use crate::tensor::{
    layer_norm, matmul, ChannelScaling, FeatureMapShape, ProjectionWeights, TokenMatrix, LAYER_NORM_EPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Global block: selective aggregation attention.
    Satb,
    /// Local block: non-overlapping window attention.
    Ltb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockConfig {
    pub channels: usize,
    pub heads: usize,
    pub kind: BlockKind,
    pub window_size: usize,
    pub mlp_ratio: f64,
    pub dta: DtaConfig,
    /// Per-head attention geometry; `head_dim` must be `channels / heads`.
    pub spec: AttentionSpec,
}

impl BlockConfig {
    pub fn new(channels: usize, heads: usize, kind: BlockKind) -> Self {
        Self {
            channels,
            heads,
            kind,
            window_size: 4,
            mlp_ratio: 2.0,
            dta: DtaConfig::default(),
            spec: AttentionSpec::new(channels / heads.max(1)),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn hidden(&self) -> usize {
        ((self.mlp_ratio * self.channels as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{} channels cannot be split into {} heads", self.channels, self.heads)));
        }
        if self.spec.head_dim != self.head_dim() {
            return Err(Error::Config(format!(
                "attention head_dim {} does not match channels/heads = {}",
                self.spec.head_dim,
                self.head_dim()
            )));
        }
        if !(self.mlp_ratio > 0.0 && self.mlp_ratio.is_finite()) {
            return Err(Error::Config(format!("mlp_ratio must be positive, got {}", self.mlp_ratio)));
        }
        if self.kind == BlockKind::Ltb && self.window_size == 0 {
            return Err(Error::Config("window_size must be positive".into()));
        }
        self.spec.validate()?;
        self.dta.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub heads: Vec<ProjectionWeights>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    /// `C × hidden`
    pub mlp_w1: TokenMatrix,
    pub mlp_b1: Vec<f64>,
    /// `hidden × C`
    pub mlp_w2: TokenMatrix,
    pub mlp_b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub config: BlockConfig,
    pub weights: BlockWeights,
}

impl Block {
    /// Unit LN gain, zero LN bias, every projection and MLP parameter zero.
    pub fn zeroed(config: BlockConfig) -> Result<Self> {
        config.validate()?;
        let (c, dh, hidden) = (config.channels, config.head_dim(), config.hidden());
        let sd = config.spec.use_channel_scaling.then(|| config.spec.scaled_dim());
        let head = ProjectionWeights {
            w_q: TokenMatrix::zeros(c / config.heads, dh),
            w_k: TokenMatrix::zeros(c / config.heads, dh),
            w_v: TokenMatrix::zeros(c / config.heads, dh),
            channel_scaling: sd
                .map(|sd| ChannelScaling { w_qs: TokenMatrix::zeros(dh, sd), w_ks: TokenMatrix::zeros(dh, sd) }),
        };
        let weights = BlockWeights {
            ln1_gamma: vec![1.0; c],
            ln1_beta: vec![0.0; c],
            heads: vec![head; config.heads],
            ln2_gamma: vec![1.0; c],
            ln2_beta: vec![0.0; c],
            mlp_w1: TokenMatrix::zeros(c, hidden),
            mlp_b1: vec![0.0; hidden],
            mlp_w2: TokenMatrix::zeros(hidden, c),
            mlp_b2: vec![0.0; c],
        };
        Ok(Self { config, weights })
    }

    /// Weights uniform on `[-1/√fan_in, 1/√fan_in]`; LN gain 1, bias 0.
    pub fn seeded(config: BlockConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (c, dh, hidden) = (config.channels, config.head_dim(), config.hidden());
        let mut rng = synth::rng(seed);
        let heads = (0..config.heads)
            .map(|_| {
                let sd = config.spec.use_channel_scaling.then(|| config.spec.scaled_dim());
                synth::uniform_projection_weights(dh, dh, sd, rand::Rng::random(&mut rng))
            })
            .collect();
        let b1 = 1.0 / (c as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let mlp_w1 = uniform_matrix(c, hidden, b1, &mut rng);
        let mlp_b1 = uniform_matrix(1, hidden, b1, &mut rng).into_vec();
        let mlp_w2 = uniform_matrix(hidden, c, b2, &mut rng);
        let mlp_b2 = uniform_matrix(1, c, b2, &mut rng).into_vec();
        let weights = BlockWeights {
            ln1_gamma: vec![1.0; c],
            ln1_beta: vec![0.0; c],
            heads,
            ln2_gamma: vec![1.0; c],
            ln2_beta: vec![0.0; c],
            mlp_w1,
            mlp_b1,
            mlp_w2,
            mlp_b2,
        };
        Ok(Self { config, weights })
    }

    fn check_input(&self, x: &TokenMatrix, shape: FeatureMapShape) -> Result<()> {
        shape.check(x)?;
        if shape.channels != self.config.channels {
            return Err(Error::Dimension { expected: self.config.channels, found: shape.channels });
        }
        if self.weights.heads.len() != self.config.heads {
            return Err(Error::Dimension { expected: self.config.heads, found: self.weights.heads.len() });
        }
        Ok(())
    }

    /// Multi-head attention over an already normalized input, without the residual.
    pub fn attention_branch(&self, normed: &TokenMatrix, shape: FeatureMapShape) -> Result<TokenMatrix> {
        let dh = self.config.head_dim();
        let mut out = TokenMatrix::zeros(normed.rows(), self.config.channels);
        for (h, w) in self.weights.heads.iter().enumerate() {
            let slice = normed.column_block(h * dh, dh)?;
            let head_out = match self.config.kind {
                BlockKind::Satb => saa_attention(&slice, w, &self.config.spec, &self.config.dta)?,
                BlockKind::Ltb => {
                    let head_shape = FeatureMapShape::new(shape.height, shape.width, dh);
                    window_attention(&slice, head_shape, self.config.window_size, w)?
                }
            };
            out.write_column_block(h * dh, &head_out);
        }
        Ok(out)
    }

    /// `W₂ · gelu(W₁ · x + b₁) + b₂`, per token.
    pub fn mlp(&self, x: &TokenMatrix) -> Result<TokenMatrix> {
        let w = &self.weights;
        let mut hidden = matmul(x, &w.mlp_w1)?;
        add_bias(&mut hidden, &w.mlp_b1)?;
        for i in 0..hidden.rows() {
            hidden.row_mut(i).iter_mut().for_each(|v| *v = gelu(*v));
        }
        let mut out = matmul(&hidden, &w.mlp_w2)?;
        add_bias(&mut out, &w.mlp_b2)?;
        Ok(out)
    }

    pub fn forward(&self, x: &TokenMatrix, shape: FeatureMapShape) -> Result<TokenMatrix> {
        self.check_input(x, shape)?;
        let w = &self.weights;
        let normed = layer_norm(x, &w.ln1_gamma, &w.ln1_beta, LAYER_NORM_EPS)?;
        let y = x.add(&self.attention_branch(&normed, shape)?)?;
        let normed = layer_norm(&y, &w.ln2_gamma, &w.ln2_beta, LAYER_NORM_EPS)?;
        y.add(&self.mlp(&normed)?)
    }
}

fn add_bias(m: &mut TokenMatrix, bias: &[f64]) -> Result<()> {
    if bias.len() != m.cols() {
        return Err(Error::Dimension { expected: m.cols(), found: bias.len() });
    }
    for i in 0..m.rows() {
        for (v, b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(())
}

pub fn gelu(x: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044_715 * x * x * x)).tanh())
}

/// Global block forward pass.
pub fn satb_forward(x: &TokenMatrix, shape: FeatureMapShape, block: &Block) -> Result<TokenMatrix> {
    if block.config.kind != BlockKind::Satb {
        return Err(Error::Config("satb_forward called on a local block".into()));
    }
    block.forward(x, shape)
}

/// Local block forward pass.
pub fn ltb_forward(x: &TokenMatrix, shape: FeatureMapShape, block: &Block) -> Result<TokenMatrix> {
    if block.config.kind != BlockKind::Ltb {
        return Err(Error::Config("ltb_forward called on a global block".into()));
    }
    block.forward(x, shape)
}

/// Ordered blocks applied one after another.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockStack {
    pub blocks: Vec<Block>,
}

impl BlockStack {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if let Some(first) = blocks.first() {
            let c = first.config.channels;
            if let Some(b) = blocks.iter().find(|b| b.config.channels != c) {
                return Err(Error::Dimension { expected: c, found: b.config.channels });
            }
        }
        Ok(Self { blocks })
    }

    /// Seeded blocks of the given kinds, e.g. `[Ltb, Satb, Ltb, Satb]`.
    pub fn seeded(template: &BlockConfig, kinds: &[BlockKind], seed: u64) -> Result<Self> {
        let blocks = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let config = BlockConfig { kind, ..template.clone() };
                Block::seeded(config, seed.wrapping_add(i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks)
    }

    pub fn kinds(&self) -> Vec<BlockKind> {
        self.blocks.iter().map(|b| b.config.kind).collect()
    }
}

pub fn stack_forward(x: &TokenMatrix, shape: FeatureMapShape, stack: &BlockStack) -> Result<TokenMatrix> {
    shape.check(x)?;
    let mut h = x.clone();
    for block in &stack.blocks {
        h = block.forward(&h, shape)?;
    }
    Ok(h)
}
