//! Seeded generators for token sets and projection weights.
//!
//! Every generator draws from ChaCha8 seeded through `seed_from_u64`, whose
//! output stream is specified and platform independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{ChannelScaling, ProjectionWeights, TokenMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Token distribution for synthetic inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// `groups` unit directions with pairwise cosine `-1/(groups-1)` (a regular
    /// simplex); each token is its group's direction plus `spread`-scaled
    /// gaussian noise, renormalized to unit length.
    Clustered { groups: usize, spread: f64 },
}

pub fn gaussian_tokens(n: usize, c: usize, seed: u64) -> Result<TokenMatrix> {
    let mut rng = rng(seed);
    let data = (0..n * c).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    TokenMatrix::new(n, c, data)
}

/// Clustered tokens and each token's ground-truth group label.
///
/// Labels are a seeded shuffle of `i mod groups`, so every group is populated
/// when `n >= groups`.
pub fn clustered_tokens(
    n: usize,
    c: usize,
    groups: usize,
    spread: f64,
    seed: u64,
) -> Result<(TokenMatrix, Vec<usize>)> {
    if groups == 0 || groups > c {
        return Err(Error::Config(format!("clustered generator needs 1 <= groups <= C, got {groups}")));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Config(format!("spread must be finite and non-negative, got {spread}")));
    }
    let directions = simplex_directions(groups, c);
    let mut rng = rng(seed);
    let mut labels: Vec<usize> = (0..n).map(|i| i % groups).collect();
    // Fisher-Yates with the seeded stream.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let mut data = Vec::with_capacity(n * c);
    for &g in &labels {
        let mut v: Vec<f64> =
            directions[g].iter().map(|&d| d + spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let len = crate::tensor::norm(&v);
        if len > 0.0 {
            v.iter_mut().for_each(|x| *x /= len);
        }
        data.extend(v);
    }
    Ok((TokenMatrix::new(n, c, data)?, labels))
}

fn simplex_directions(groups: usize, c: usize) -> Vec<Vec<f64>> {
    if groups == 1 {
        let mut e = vec![0.0; c];
        e[0] = 1.0;
        return vec![e];
    }
    let centroid = 1.0 / groups as f64;
    (0..groups)
        .map(|g| {
            let mut v = vec![0.0; c];
            for (j, x) in v.iter_mut().enumerate().take(groups) {
                *x = if j == g { 1.0 - centroid } else { -centroid };
            }
            let len = crate::tensor::norm(&v);
            v.iter_mut().for_each(|x| *x /= len);
            v
        })
        .collect()
}

pub fn synthetic_tokens(n: usize, c: usize, dist: Distribution, seed: u64) -> Result<TokenMatrix> {
    match dist {
        Distribution::Gaussian => gaussian_tokens(n, c, seed),
        Distribution::Clustered { groups, spread } => clustered_tokens(n, c, groups, spread, seed).map(|(t, _)| t),
    }
}

/// `rows × cols` matrix uniform on `[-bound, bound]`.
pub fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> TokenMatrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    TokenMatrix::from_raw(rows, cols, data)
}

/// Projection weights uniform on `[-1/√fan_in, 1/√fan_in]`. When
/// `scaled_dim` is given, channel-scaling projections `d × scaled_dim` are
/// drawn as well.
pub fn uniform_projection_weights(c: usize, d: usize, scaled_dim: Option<usize>, seed: u64) -> ProjectionWeights {
    let mut rng = rng(seed);
    let bound = 1.0 / (c as f64).sqrt();
    let w_q = uniform_matrix(c, d, bound, &mut rng);
    let w_k = uniform_matrix(c, d, bound, &mut rng);
    let w_v = uniform_matrix(c, d, bound, &mut rng);
    let channel_scaling = scaled_dim.map(|sd| {
        let b = 1.0 / (d as f64).sqrt();
        ChannelScaling { w_qs: uniform_matrix(d, sd, b, &mut rng), w_ks: uniform_matrix(d, sd, b, &mut rng) }
    });
    ProjectionWeights { w_q, w_k, w_v, channel_scaling }
}
