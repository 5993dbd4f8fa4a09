//! Reference clusterings and the method comparison used by benchmarks.
//!
//! - [`dpc_knn_exact`]: the density-peak pipeline with no subsampling, O(N²C).
//! - [`kmeans_baseline`]: Lloyd iterations under cosine assignment, O(iters·NKC).
//! - [`compare_methods`]: end-to-end attention per method, timed, with the
//!   Frobenius error against vanilla attention.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index;

use crate::attention::{saa_attention_with, vanilla_attention, window_attention, AttentionSpec};
use crate::dta::{
    compress_with_plan, dta_compress, max_row_norm, restore_feature_norms, ClusterResult, DtaConfig, SubsamplePlan,
};
use crate::error::{Error, Result};
use crate::synth;
use crate::tensor::{cosine_from_parts, dot, frobenius_error, FeatureMapShape, ProjectionWeights, TokenMatrix};

/// Exact density-peak clustering into `k` clusters: every token is scored.
///
/// Reads `neighbor_count`, `temperature`, `eps` and `fnr_enabled` from `cfg`;
/// tie rules, assignment and aggregation are those of [`dta_compress`].
pub fn dpc_knn_exact(tokens: &TokenMatrix, k: usize, cfg: &DtaConfig) -> Result<ClusterResult> {
    let n = tokens.rows();
    if n < 2 {
        return Err(Error::Degenerate(format!("exact density peaks need at least 2 tokens, got {n}")));
    }
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot form {k} clusters from {n} tokens")));
    }
    compress_with_plan(tokens, &SubsamplePlan::exhaustive(n, k), k, cfg)
}

pub const KMEANS_ITERS: usize = 20;

/// Lloyd's algorithm with cosine assignment and mean updates, run for exactly
/// `iters` iterations.
///
/// Initial centroids are `k` tokens drawn without replacement. A cluster left
/// empty by an assignment step takes the token least similar to its own
/// centroid (lowest index among ties) from a cluster with at least two
/// members. The returned centers are the members closest to each final
/// centroid; weights are uniform; `eps` and `fnr_enabled` come from `cfg`.
pub fn kmeans_baseline(
    tokens: &TokenMatrix,
    k: usize,
    iters: usize,
    seed: u64,
    cfg: &DtaConfig,
) -> Result<ClusterResult> {
    let n = tokens.rows();
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot form {k} clusters from {n} tokens")));
    }
    if iters == 0 {
        return Err(Error::Config("k-means needs at least one iteration".into()));
    }
    let eps = cfg.eps;
    let norms = tokens.row_norms();
    let mut rng = synth::rng(seed);
    let init: Vec<usize> = index::sample(&mut rng, n, k).into_vec();
    let mut centroids = tokens.select_rows(&init)?;

    let mut assignment = vec![0usize; n];
    let mut similarity = vec![0.0f64; n];
    let mut sizes = vec![0usize; k];
    for _ in 0..iters {
        let centroid_norms = centroids.row_norms();
        sizes.iter_mut().for_each(|s| *s = 0);
        for i in 0..n {
            let xi = tokens.row(i);
            let mut best = f64::NEG_INFINITY;
            for (c, cr) in centroids.row_iter().enumerate() {
                let s = cosine_from_parts(dot(xi, cr), norms[i], centroid_norms[c], eps);
                if s > best {
                    best = s;
                    assignment[i] = c;
                }
            }
            similarity[i] = best;
            sizes[assignment[i]] += 1;
        }

        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut far = None;
            for i in 0..n {
                if sizes[assignment[i]] > 1 && far.is_none_or(|f: usize| similarity[i] < similarity[f]) {
                    far = Some(i);
                }
            }
            // k <= n guarantees some cluster has a spare member.
            let f = far.expect("a cluster with at least two members");
            sizes[assignment[f]] -= 1;
            assignment[f] = empty;
            sizes[empty] = 1;
            similarity[f] = f64::INFINITY;
        }

        let mut sums = TokenMatrix::zeros(k, tokens.cols());
        for (i, &a) in assignment.iter().enumerate() {
            for (acc, &x) in sums.row_mut(a).iter_mut().zip(tokens.row(i)) {
                *acc += x;
            }
        }
        for (c, &size) in sizes.iter().enumerate() {
            let inv = 1.0 / size as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
        centroids = sums;
    }

    let centroid_norms = centroids.row_norms();
    let mut centers = vec![usize::MAX; k];
    let mut best = vec![f64::NEG_INFINITY; k];
    for (i, &a) in assignment.iter().enumerate() {
        let s = cosine_from_parts(dot(tokens.row(i), centroids.row(a)), norms[i], centroid_norms[a], eps);
        if s > best[a] {
            best[a] = s;
            centers[a] = i;
        }
    }

    let aggregated = if cfg.fnr_enabled { restore_feature_norms(&centroids, tokens, cfg) } else { centroids };
    Ok(ClusterResult { centers, assignment, weights: vec![1.0; n], aggregated, max_norm: max_row_norm(tokens) })
}

/// Median wall-clock of `reps` timed calls after `warmup` untimed ones.
/// Returns the median in nanoseconds (at least 1) and the last result.
pub fn median_runtime<T, F>(warmup: usize, reps: usize, mut f: F) -> Result<(u64, T)>
where
    F: FnMut() -> Result<T>,
{
    if reps == 0 {
        return Err(Error::Config("at least one timed repetition is required".into()));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(reps);
    let mut last = None;
    for _ in 0..reps {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_nanos() as u64);
        last = Some(out);
    }
    times.sort_unstable();
    let mid = times.len() / 2;
    let median = if times.len() % 2 == 1 { times[mid] } else { (times[mid - 1] + times[mid]) / 2 };
    Ok((median.max(1), last.expect("reps >= 1")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dta,
    DpcKnn,
    Kmeans,
    Vanilla,
    Window,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Dta, Method::DpcKnn, Method::Kmeans, Method::Vanilla, Method::Window];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Dta => "dta",
            Method::DpcKnn => "dpc_knn",
            Method::Kmeans => "kmeans",
            Method::Vanilla => "vanilla",
            Method::Window => "window",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| Error::UnknownMethod(s.trim().to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub warmup: usize,
    pub reps: usize,
    pub kmeans_iters: usize,
    /// Window side for the window-attention method.
    pub window: usize,
    /// Feature-map shape for window attention; a square map is assumed when
    /// absent and `N` is a perfect square.
    pub shape: Option<FeatureMapShape>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { warmup: 2, reps: 5, kmeans_iters: KMEANS_ITERS, window: 8, shape: None }
    }
}

/// One row of a method comparison.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub method: Method,
    pub n: usize,
    /// Keys each query attends to.
    pub k: usize,
    pub c: usize,
    pub seed: u64,
    pub wall_clock_ns: u64,
    pub cluster_result: Option<ClusterResult>,
    pub frobenius_error_vs_vanilla: f64,
}

fn square_shape(x: &TokenMatrix) -> Result<FeatureMapShape> {
    let n = x.rows();
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n {
        return Err(Error::Shape(format!("{n} tokens do not form a square map; pass a shape")));
    }
    Ok(FeatureMapShape::new(side, side, x.cols()))
}

/// Runs attention end to end with each method and reports the median
/// wall-clock and the Frobenius error against vanilla attention.
pub fn compare_methods(
    tokens: &TokenMatrix,
    w: &ProjectionWeights,
    spec: &AttentionSpec,
    cfg: &DtaConfig,
    methods: &[Method],
    opts: &CompareOptions,
) -> Result<Vec<OracleReport>> {
    cfg.validate()?;
    let n = tokens.rows();
    let k = cfg.cluster_count(n);
    let reference = vanilla_attention(tokens, w)?;
    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let (keys, (ns, (output, clusters))) = match method {
            Method::Vanilla => {
                (n, median_runtime(opts.warmup, opts.reps, || Ok((vanilla_attention(tokens, w)?, None)))?)
            }
            Method::Window => {
                let shape = match opts.shape {
                    Some(s) => s,
                    None => square_shape(tokens)?,
                };
                (
                    opts.window * opts.window,
                    median_runtime(opts.warmup, opts.reps, || {
                        Ok((window_attention(tokens, shape, opts.window, w)?, None))
                    })?,
                )
            }
            Method::Dta | Method::DpcKnn | Method::Kmeans => {
                let run = || {
                    let out = saa_attention_with(tokens, w, spec, cfg, |keys| match method {
                        Method::Dta => dta_compress(keys, cfg),
                        Method::DpcKnn => dpc_knn_exact(keys, k, cfg),
                        _ => kmeans_baseline(keys, k, opts.kmeans_iters, cfg.seed, cfg),
                    })?;
                    Ok((out.output, Some(out.clusters)))
                };
                (k, median_runtime(opts.warmup, opts.reps, run)?)
            }
        };
        reports.push(OracleReport {
            method,
            n,
            k: keys,
            c: tokens.cols(),
            seed: cfg.seed,
            wall_clock_ns: ns,
            cluster_result: clusters,
            frobenius_error_vs_vanilla: frobenius_error(&output, &reference)?,
        });
    }
    Ok(reports)
}

/// `method,N,K,C,seed,wall_clock_ns,frobenius_error`
pub fn write_reports_csv<W: Write>(writer: W, reports: &[OracleReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "N", "K", "C", "seed", "wall_clock_ns", "frobenius_error"])?;
    for r in reports {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.c.to_string(),
            r.seed.to_string(),
            r.wall_clock_ns.to_string(),
            r.frobenius_error_vs_vanilla.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
