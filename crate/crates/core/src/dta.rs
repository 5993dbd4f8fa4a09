//! Density-driven token aggregation: compresses `N` tokens into `K`
//! representatives.
//!
//! Pipeline:
//!
//! 1. split the raster sequence into `K` contiguous regions and draw a
//!    stratified subsample of `S = β·K` tokens ([`build_subsample_plan`]);
//! 2. score the subsample with k-NN cosine density `ρ`, separation `δ` and
//!    `γ = ρ·δ` ([`compute_density_stats`]);
//! 3. keep the `K` highest-`γ` tokens as centers ([`select_centers`]);
//! 4. assign every token to its most similar center ([`assign_tokens`]);
//! 5. merge each cluster with weights `exp(s(x, c)/τ)` ([`aggregate_clusters`]);
//! 6. optionally rescale every representative to the largest original token
//!    norm ([`restore_feature_norms`]).
//!
//! Tie rules: `γ` ties go to the lower subsample position, assignment ties to
//! the lower center ordinal, and every center is assigned to its own cluster.

use std::io::Write;
use std::ops::Range;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::synth;
use crate::tensor::{cosine_from_parts, dot, norm, FeatureMapShape, TokenMatrix};

/// Clustering knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct DtaConfig {
    /// Fraction of tokens kept as representatives, in `(0, 1]`.
    pub keep_ratio: f64,
    /// Subsampling factor; the subsample holds `β·K` tokens, clamped to `N`.
    pub beta: usize,
    /// `m` of the k-NN density estimator, clamped to `S - 1`.
    pub neighbor_count: usize,
    /// Aggregation temperature `τ`.
    pub temperature: f64,
    /// Zero-norm guard.
    pub eps: f64,
    /// Feature norm restoration on the aggregated rows.
    pub fnr_enabled: bool,
    pub seed: u64,
}

impl Default for DtaConfig {
    fn default() -> Self {
        Self { keep_ratio: 0.03, beta: 4, neighbor_count: 5, temperature: 1.0, eps: 1e-6, fnr_enabled: true, seed: 0 }
    }
}

impl DtaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return bad(format!("keep_ratio must lie in (0, 1], got {}", self.keep_ratio));
        }
        if self.beta < 2 {
            return bad(format!("beta must be at least 2, got {}", self.beta));
        }
        if self.neighbor_count < 1 {
            return bad("neighbor_count must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }

    /// `K = max(1, round(keep_ratio · n))`, never above `n`.
    pub fn cluster_count(&self, n: usize) -> usize {
        ((self.keep_ratio * n as f64).round() as usize).clamp(1, n.max(1))
    }

    /// `S = β·K`, clamped to `n`.
    pub fn sample_size(&self, n: usize) -> usize {
        (self.beta.saturating_mul(self.cluster_count(n))).min(n)
    }
}

/// Stratified subsample over raster-order regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsamplePlan {
    pub region_bounds: Vec<Range<usize>>,
    /// Distinct token indices, ascending.
    pub sampled_indices: Vec<usize>,
    /// Per-region draw `m_i = min(⌊S/K⌋, |R_i|)`, before the top-up.
    pub per_region_counts: Vec<usize>,
}

impl SubsamplePlan {
    /// Plan that samples every token, as exact density-peak clustering does.
    pub fn exhaustive(n: usize, k: usize) -> Self {
        let region_bounds = region_bounds(n, k);
        let per_region_counts = region_bounds.iter().map(|r| r.len()).collect();
        Self { region_bounds, sampled_indices: (0..n).collect(), per_region_counts }
    }

    pub fn len(&self) -> usize {
        self.sampled_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sampled_indices.is_empty()
    }
}

/// `K` contiguous regions of length `⌊n/K⌋`; the last absorbs the remainder.
fn region_bounds(n: usize, k: usize) -> Vec<Range<usize>> {
    let step = n / k;
    (0..k)
        .map(|i| {
            let end = if i + 1 == k { n } else { (i + 1) * step };
            i * step..end
        })
        .collect()
}

pub fn build_subsample_plan(n: usize, cfg: &DtaConfig) -> Result<SubsamplePlan> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Degenerate("cannot subsample an empty token sequence".into()));
    }
    let k = cfg.cluster_count(n);
    let s = cfg.sample_size(n);
    let bounds = region_bounds(n, k);
    let quota = s / k;
    let mut rng = synth::rng(cfg.seed);

    let mut taken = vec![false; n];
    let mut per_region_counts = Vec::with_capacity(k);
    for region in &bounds {
        let m_i = quota.min(region.len());
        per_region_counts.push(m_i);
        for offset in index::sample(&mut rng, region.len(), m_i) {
            taken[region.start + offset] = true;
        }
    }

    let drawn: usize = per_region_counts.iter().sum();
    if drawn < s {
        let remaining: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        for pick in index::sample(&mut rng, remaining.len(), s - drawn) {
            taken[remaining[pick]] = true;
        }
    }

    let sampled_indices = (0..n).filter(|&i| taken[i]).collect();
    Ok(SubsamplePlan { region_bounds: bounds, sampled_indices, per_region_counts })
}

/// Local density, separation and center score per subsampled token.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityStats {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Symmetric `S × S` cosine similarity matrix. The diagonal is unused.
struct SimilarityMatrix {
    size: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    fn new(tokens: &TokenMatrix, eps: f64) -> Self {
        let size = tokens.rows();
        let norms = tokens.row_norms();
        let mut values = vec![0.0; size * size];
        for i in 0..size {
            let xi = tokens.row(i);
            for j in i..size {
                let s = cosine_from_parts(dot(xi, tokens.row(j)), norms[i], norms[j], eps);
                values[i * size + j] = s;
                values[j * size + i] = s;
            }
        }
        Self { size, values }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.size..(i + 1) * self.size]
    }
}

/// Scores the given tokens (the subsample, already gathered).
///
/// `ρ_i` is the mean similarity to the `m` most similar other tokens. `δ_i` is
/// the smallest cosine distance to a token of strictly higher `ρ`; tokens with
/// no such token (including every token tied at the maximum) get the largest
/// distance to any other token instead.
pub fn compute_density_stats(tokens: &TokenMatrix, cfg: &DtaConfig) -> Result<DensityStats> {
    let s = tokens.rows();
    if s < 2 {
        return Err(Error::Degenerate(format!("density statistics need at least 2 tokens, got {s}")));
    }
    let m = cfg.neighbor_count.clamp(1, s - 1);
    let sims = SimilarityMatrix::new(tokens, cfg.eps);

    let mut rho = Vec::with_capacity(s);
    let mut scratch = Vec::with_capacity(s - 1);
    for i in 0..s {
        scratch.clear();
        scratch.extend(sims.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v));
        if m < scratch.len() {
            scratch.select_nth_unstable_by(m - 1, |a, b| b.total_cmp(a));
        }
        let top = &mut scratch[..m];
        top.sort_unstable_by(|a, b| b.total_cmp(a));
        rho.push(top.iter().sum::<f64>() / m as f64);
    }

    let mut delta = Vec::with_capacity(s);
    for i in 0..s {
        let row = sims.row(i);
        let mut nearest_denser = f64::INFINITY;
        let mut farthest = 0.0f64;
        for j in 0..s {
            if j == i {
                continue;
            }
            let d = 1.0 - row[j];
            if rho[j] > rho[i] && d < nearest_denser {
                nearest_denser = d;
            }
            farthest = farthest.max(d);
        }
        delta.push(if nearest_denser.is_finite() { nearest_denser } else { farthest });
    }

    let gamma = rho.iter().zip(&delta).map(|(r, d)| r * d).collect();
    Ok(DensityStats { rho, delta, gamma })
}

/// Picks the `k` highest-`γ` subsample slots and returns their original token
/// indices in ascending order.
pub fn select_centers(stats: &DensityStats, plan: &SubsamplePlan, k: usize) -> Result<Vec<usize>> {
    let s = stats.gamma.len();
    if s != plan.len() {
        return Err(Error::Dimension { expected: plan.len(), found: s });
    }
    if k == 0 || k > s {
        return Err(Error::Config(format!("cannot select {k} centers from {s} candidates")));
    }
    let mut order: Vec<usize> = (0..s).collect();
    // Stable sort keeps lower positions first among equal scores.
    order.sort_by(|&a, &b| stats.gamma[b].total_cmp(&stats.gamma[a]));
    let mut centers: Vec<usize> = order[..k].iter().map(|&slot| plan.sampled_indices[slot]).collect();
    centers.sort_unstable();
    Ok(centers)
}

fn check_centers(n: usize, centers: &[usize]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::Config("at least one center is required".into()));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= n) {
        return Err(Error::Shape(format!("center {c} out of range for {n} tokens")));
    }
    Ok(())
}

/// `α(i) = argmax_k s(x_i, c_k)`; ties go to the lower ordinal and each center
/// keeps its own ordinal.
pub fn assign_tokens(tokens: &TokenMatrix, centers: &[usize], cfg: &DtaConfig) -> Result<Vec<usize>> {
    let n = tokens.rows();
    check_centers(n, centers)?;
    let norms = tokens.row_norms();
    let mut assignment = vec![0usize; n];
    for (i, slot) in assignment.iter_mut().enumerate() {
        let xi = tokens.row(i);
        let mut best = f64::NEG_INFINITY;
        for (k, &c) in centers.iter().enumerate() {
            let s = cosine_from_parts(dot(xi, tokens.row(c)), norms[i], norms[c], cfg.eps);
            if s > best {
                best = s;
                *slot = k;
            }
        }
    }
    for (k, &c) in centers.iter().enumerate() {
        assignment[c] = k;
    }
    Ok(assignment)
}

/// Weighted cluster means with precomputed weights. Sums run over members in
/// ascending token order.
pub fn weighted_average(tokens: &TokenMatrix, assignment: &[usize], weights: &[f64], k: usize) -> Result<TokenMatrix> {
    let n = tokens.rows();
    if assignment.len() != n {
        return Err(Error::Dimension { expected: n, found: assignment.len() });
    }
    if weights.len() != n {
        return Err(Error::Dimension { expected: n, found: weights.len() });
    }
    let mut totals = vec![0.0; k];
    for (&a, &w) in assignment.iter().zip(weights) {
        if a >= k {
            return Err(Error::Shape(format!("cluster id {a} out of range for {k} clusters")));
        }
        totals[a] += w;
    }
    if let Some(empty) = totals.iter().position(|&t| t <= 0.0) {
        return Err(Error::Degenerate(format!("cluster {empty} has no weight")));
    }
    let mut y = TokenMatrix::zeros(k, tokens.cols());
    for (i, (&a, &w)) in assignment.iter().zip(weights).enumerate() {
        let share = w / totals[a];
        for (acc, &x) in y.row_mut(a).iter_mut().zip(tokens.row(i)) {
            *acc += share * x;
        }
    }
    Ok(y)
}

/// Similarity-weighted merge: `y_k = Σ w_i x_i / Σ w_i` with
/// `w_i = exp(s(x_i, c_k)/τ)`. Returns the `K × C` representatives and the
/// per-token weights.
pub fn aggregate_clusters(
    tokens: &TokenMatrix,
    assignment: &[usize],
    centers: &[usize],
    cfg: &DtaConfig,
) -> Result<(TokenMatrix, Vec<f64>)> {
    let n = tokens.rows();
    check_centers(n, centers)?;
    if assignment.len() != n {
        return Err(Error::Dimension { expected: n, found: assignment.len() });
    }
    let norms = tokens.row_norms();
    let mut weights = Vec::with_capacity(n);
    for (i, &a) in assignment.iter().enumerate() {
        let c = *centers.get(a).ok_or_else(|| Error::Shape(format!("token {i} assigned to missing cluster {a}")))?;
        let s = cosine_from_parts(dot(tokens.row(i), tokens.row(c)), norms[i], norms[c], cfg.eps);
        weights.push((s / cfg.temperature).exp());
    }
    let y = weighted_average(tokens, assignment, &weights, centers.len())?;
    Ok((y, weights))
}

/// Largest row norm.
pub fn max_row_norm(m: &TokenMatrix) -> f64 {
    m.row_iter().map(norm).fold(0.0, f64::max)
}

/// Rescales every row with norm above `eps` to the largest norm among the
/// original tokens, keeping its direction. Rows at or below `eps` pass through.
pub fn restore_feature_norms(y: &TokenMatrix, original: &TokenMatrix, cfg: &DtaConfig) -> TokenMatrix {
    let n_max = max_row_norm(original);
    let mut out = y.clone();
    for k in 0..out.rows() {
        let row = out.row_mut(k);
        let len = norm(row);
        if len > cfg.eps {
            for v in row.iter_mut() {
                *v = *v / len * n_max;
            }
        }
    }
    out
}

/// Output of a token compression.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Representative token index per cluster.
    pub centers: Vec<usize>,
    /// Cluster id per token.
    pub assignment: Vec<usize>,
    /// Aggregation weight per token.
    pub weights: Vec<f64>,
    /// `K × C` representatives.
    pub aggregated: TokenMatrix,
    /// Largest original token norm.
    pub max_norm: f64,
}

impl ClusterResult {
    pub fn cluster_count(&self) -> usize {
        self.centers.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.cluster_count()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }

    /// Aggregates another matrix with this clustering (same assignment and
    /// weights), restoring norms against that matrix when FNR is enabled.
    pub fn aggregate(&self, values: &TokenMatrix, cfg: &DtaConfig) -> Result<TokenMatrix> {
        let y = weighted_average(values, &self.assignment, &self.weights, self.cluster_count())?;
        Ok(if cfg.fnr_enabled { restore_feature_norms(&y, values, cfg) } else { y })
    }

    /// `token_id,cluster_id,weight`
    pub fn write_assignment_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["token_id", "cluster_id", "weight"])?;
        for (i, (&a, &wt)) in self.assignment.iter().zip(&self.weights).enumerate() {
            w.write_record([i.to_string(), a.to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `cluster_id,center_token_id`, plus `row,col` when the map shape is known.
    pub fn write_centers_csv<W: Write>(&self, writer: W, shape: Option<FeatureMapShape>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match shape {
            Some(_) => w.write_record(["cluster_id", "center_token_id", "row", "col"])?,
            None => w.write_record(["cluster_id", "center_token_id"])?,
        }
        for (k, &c) in self.centers.iter().enumerate() {
            let mut rec = vec![k.to_string(), c.to_string()];
            if let Some(shape) = shape {
                let (r, col) = shape.position(c);
                rec.push(r.to_string());
                rec.push(col.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs center selection on the planned subsample, then assignment,
/// aggregation and (optionally) norm restoration over all tokens.
pub fn compress_with_plan(
    tokens: &TokenMatrix,
    plan: &SubsamplePlan,
    k: usize,
    cfg: &DtaConfig,
) -> Result<ClusterResult> {
    cfg.validate()?;
    let centers = if plan.len() < 2 {
        // Only reachable for a single token.
        plan.sampled_indices.clone()
    } else {
        let sample = tokens.select_rows(&plan.sampled_indices)?;
        let stats = compute_density_stats(&sample, cfg)?;
        select_centers(&stats, plan, k)?
    };
    let assignment = assign_tokens(tokens, &centers, cfg)?;
    let (y, weights) = aggregate_clusters(tokens, &assignment, &centers, cfg)?;
    let max_norm = max_row_norm(tokens);
    let aggregated = if cfg.fnr_enabled { restore_feature_norms(&y, tokens, cfg) } else { y };
    Ok(ClusterResult { centers, assignment, weights, aggregated, max_norm })
}

/// Compresses `N` tokens to `K = max(1, round(keep_ratio·N))` representatives.
pub fn dta_compress(tokens: &TokenMatrix, cfg: &DtaConfig) -> Result<ClusterResult> {
    let plan = build_subsample_plan(tokens.rows(), cfg)?;
    compress_with_plan(tokens, &plan, cfg.cluster_count(tokens.rows()), cfg)
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;

    fn cfg() -> DtaConfig {
        DtaConfig { fnr_enabled: false, ..DtaConfig::default() }
    }

    fn m(rows: &[&[f64]]) -> TokenMatrix {
        TokenMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn validation() {
        assert!(DtaConfig::default().validate().is_ok());
        for bad in [
            DtaConfig { keep_ratio: 0.0, ..cfg() },
            DtaConfig { keep_ratio: 1.5, ..cfg() },
            DtaConfig { beta: 1, ..cfg() },
            DtaConfig { neighbor_count: 0, ..cfg() },
            DtaConfig { temperature: 0.0, ..cfg() },
            DtaConfig { eps: -1.0, ..cfg() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn cluster_count_arithmetic() {
        let c = DtaConfig::default();
        assert_eq!(c.cluster_count(100), 3);
        assert_eq!(c.cluster_count(1000), 30);
        assert_eq!(c.cluster_count(4096), 123);
        assert_eq!(c.cluster_count(10), 1);
        assert_eq!(c.cluster_count(1), 1);
    }

    #[test]
    fn plan_for_hundred_tokens() {
        let plan = build_subsample_plan(100, &cfg()).unwrap();
        assert_eq!(plan.region_bounds, vec![0..33, 33..66, 66..100]);
        assert_eq!(plan.per_region_counts, vec![4, 4, 4]);
        assert_eq!(plan.len(), 12);
        for (r, range) in plan.region_bounds.iter().enumerate() {
            let inside = plan.sampled_indices.iter().filter(|i| range.contains(i)).count();
            assert_eq!(inside, plan.per_region_counts[r]);
        }
        assert!(plan.sampled_indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn plan_takes_everything_when_clamped() {
        let c = DtaConfig { keep_ratio: 1.0, ..cfg() };
        let plan = build_subsample_plan(7, &c).unwrap();
        assert_eq!(plan.sampled_indices, (0..7).collect::<Vec<_>>());
        // Uneven regions: top-up fills the deficit.
        let c = DtaConfig { keep_ratio: 0.3, beta: 4, ..cfg() };
        let plan = build_subsample_plan(10, &c).unwrap();
        assert_eq!(plan.per_region_counts, vec![3, 3, 3]);
        assert_eq!(plan.sampled_indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn plan_top_up_fills_clamped_sample() {
        // K=4 over 11 tokens: regions of 2, 2, 2, 5.
        let c = DtaConfig { keep_ratio: 4.0 / 11.0, beta: 2, seed: 5, ..cfg() };
        assert_eq!(c.cluster_count(11), 4);
        let plan = build_subsample_plan(11, &c).unwrap();
        assert_eq!(plan.region_bounds, vec![0..2, 2..4, 4..6, 6..11]);
        assert_eq!(plan.per_region_counts, vec![2, 2, 2, 2]);
        assert_eq!(plan.len(), 8);
        // S = 12 clamps to 11; quota ⌊11/4⌋ = 2 leaves 3 for the top-up.
        let c = DtaConfig { beta: 3, ..c };
        let plan = build_subsample_plan(11, &c).unwrap();
        assert_eq!(plan.per_region_counts, vec![2, 2, 2, 2]);
        assert_eq!(plan.sampled_indices, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn plan_is_deterministic() {
        let c = DtaConfig { seed: 42, ..cfg() };
        assert_eq!(build_subsample_plan(500, &c).unwrap(), build_subsample_plan(500, &c).unwrap());
        let other = DtaConfig { seed: 43, ..cfg() };
        assert_ne!(
            build_subsample_plan(500, &c).unwrap().sampled_indices,
            build_subsample_plan(500, &other).unwrap().sampled_indices
        );
    }

    #[test]
    fn density_of_identical_tokens() {
        let t = m(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        let c = DtaConfig { neighbor_count: 1, ..cfg() };
        let st = compute_density_stats(&t, &c).unwrap();
        for i in 0..3 {
            assert!((st.rho[i] - 1.0).abs() < 1e-15);
            assert!(st.delta[i].abs() < 1e-15);
            assert!(st.gamma[i].abs() < 1e-15);
        }
    }

    #[test]
    fn density_of_hand_instance() {
        let t = m(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let c = DtaConfig { neighbor_count: 1, ..cfg() };
        let st = compute_density_stats(&t, &c).unwrap();
        assert_eq!(st.rho, vec![1.0, 1.0, 0.0]);
        assert_eq!(st.delta, vec![1.0, 1.0, 1.0]);
        assert_eq!(st.gamma, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn density_needs_two_tokens() {
        assert!(matches!(compute_density_stats(&m(&[&[1.0]]), &cfg()), Err(Error::Degenerate(_))));
    }

    fn stats(gamma: Vec<f64>) -> DensityStats {
        let n = gamma.len();
        DensityStats { rho: vec![0.0; n], delta: vec![0.0; n], gamma }
    }

    #[test]
    fn center_selection_rules() {
        let plan =
            SubsamplePlan { region_bounds: vec![0..30], sampled_indices: vec![4, 17, 25], per_region_counts: vec![3] };
        assert_eq!(select_centers(&stats(vec![0.5, 0.9, 0.1]), &plan, 1).unwrap(), vec![17]);
        assert_eq!(select_centers(&stats(vec![0.3; 3]), &plan, 2).unwrap(), vec![4, 17]);
        assert!(matches!(select_centers(&stats(vec![0.3; 3]), &plan, 4), Err(Error::Config(_))));
    }

    #[test]
    fn assignment_rules() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.9, 0.1], &[0.1, 0.9]]);
        assert_eq!(assign_tokens(&t, &[2], &cfg()).unwrap(), vec![0; 4]);
        assert_eq!(assign_tokens(&t, &[0, 1], &cfg()).unwrap(), vec![0, 1, 0, 1]);
        // Duplicate center directions: each center still owns itself.
        let d = m(&[&[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]]);
        assert_eq!(assign_tokens(&d, &[1, 2], &cfg()).unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn aggregation_examples() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (y, w) = aggregate_clusters(&t, &[0, 0], &[0], &cfg()).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - e).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        assert!((y.get(0, 0) - 0.73105858).abs() < 1e-8);
        assert!((y.get(0, 1) - 0.26894142).abs() < 1e-8);

        let same = m(&[&[1.0, 0.0], &[1.0, 0.0]]);
        for tau in [0.01, 1.0, 100.0] {
            let c = DtaConfig { temperature: tau, ..cfg() };
            let (y, _) = aggregate_clusters(&same, &[0, 0], &[1], &c).unwrap();
            assert_eq!(y.as_slice(), &[1.0, 0.0]);
        }

        let (y, _) = aggregate_clusters(&t, &[1, 0], &[1, 0], &cfg()).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn aggregation_rejects_empty_cluster() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(weighted_average(&t, &[0, 0], &[1.0, 1.0], 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn norm_restoration_examples() {
        let originals = m(&[&[1.0, 0.0], &[0.0, 2.0], &[3.0, 4.0]]);
        let y = m(&[&[0.24, 0.32], &[0.0, 0.0]]);
        let out = restore_feature_norms(&y, &originals, &cfg());
        assert!((norm(out.row(0)) - 5.0).abs() < 1e-9);
        assert!((out.get(0, 0) / out.get(0, 1) - 0.75).abs() < 1e-12);
        assert_eq!(out.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn identity_compression() {
        let t = m(&[&[1.0, 0.2], &[-0.3, 1.0], &[0.5, -2.0], &[2.0, 2.0]]);
        let c = DtaConfig { keep_ratio: 1.0, ..cfg() };
        let r = dta_compress(&t, &c).unwrap();
        assert_eq!(r.centers, vec![0, 1, 2, 3]);
        assert_eq!(r.assignment, vec![0, 1, 2, 3]);
        assert_eq!(r.aggregated, t);
    }

    #[test]
    fn single_token() {
        let t = m(&[&[3.0, 4.0]]);
        let r = dta_compress(&t, &DtaConfig::default()).unwrap();
        assert_eq!(r.centers, vec![0]);
        assert_eq!(r.aggregated, t);
        assert_eq!(r.max_norm, 5.0);
    }

    #[test]
    fn csv_exports() {
        let t = m(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.1], &[0.1, 1.0]]);
        let c = DtaConfig { keep_ratio: 0.5, ..cfg() };
        let r = dta_compress(&t, &c).unwrap();
        let mut a = Vec::new();
        r.write_assignment_csv(&mut a).unwrap();
        let a = String::from_utf8(a).unwrap();
        assert!(a.starts_with("token_id,cluster_id,weight\n0,"));
        assert_eq!(a.lines().count(), 5);

        let mut b = Vec::new();
        r.write_centers_csv(&mut b, Some(FeatureMapShape::new(2, 2, 2))).unwrap();
        let b = String::from_utf8(b).unwrap();
        let mut lines = b.lines();
        assert_eq!(lines.next(), Some("cluster_id,center_token_id,row,col"));
        for (k, line) in lines.enumerate() {
            let c = r.centers[k];
            assert_eq!(line, format!("{k},{c},{},{}", c / 2, c % 2));
        }
    }
}
