use std::fs::{self, File};
use std::io::{self, BufWriter, Write};

use saa_core::attention::{estimate_flops, saa_attention_with, vanilla_attention, Variant};
use saa_core::oracles::{dpc_knn_exact, kmeans_baseline, median_runtime, CompareOptions, Method, OracleReport};
use saa_core::synth::{uniform_projection_weights, Distribution};
use saa_core::tensor::frobenius_error;
use saa_core::{compare_methods, dta_compress, saa_attention, AttentionSpec, ClusterResult, DtaConfig, TokenMatrix};

use crate::config::{HarnessConfig, SyntheticSpec, TokenSource};
use crate::HarnessError;

pub const DEFAULT_RATIOS: [f64; 4] = [0.01, 0.03, 0.10, 0.20];
pub const EQUIVALENCE_SIZES: [usize; 3] = [16, 64, 256];
pub const BENCH_SIZES: [usize; 3] = [1024, 2048, 4096];
pub const BENCH_CLUSTERS: usize = 64;
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

/// Writes to `--out` when given, stdout otherwise.
pub fn with_output<F>(cfg: &HarnessConfig, f: F) -> Result<(), HarnessError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), HarnessError>,
{
    match &cfg.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn weight_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn relative_error(approx: &TokenMatrix, exact: &TokenMatrix) -> Result<f64, HarnessError> {
    let err = frobenius_error(approx, exact)?;
    let scale = exact.frobenius_norm();
    Ok(if scale > 0.0 { err / scale } else { err })
}

/// Clusters the input tokens and writes `assignment.csv` and `centers.csv`
/// into the `--out` directory.
pub fn cluster(cfg: &HarnessConfig) -> Result<ClusterResult, HarnessError> {
    let tokens = cfg.load_tokens()?;
    let shape = cfg.feature_map(&tokens)?;
    let dir = cfg.out.as_ref().ok_or_else(|| HarnessError::Usage("cluster needs --out DIR".into()))?;
    let result = dta_compress(&tokens, &cfg.dta)?;
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    };
    result.write_assignment_csv(create("assignment.csv")?)?;
    result.write_centers_csv(create("centers.csv")?, shape)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `(N, max relative error over instances)`.
    pub per_size: Vec<(usize, f64)>,
}

impl EquivalenceReport {
    pub fn max_error(&self) -> f64 {
        self.per_size.iter().map(|&(_, e)| e).fold(0.0, f64::max)
    }

    pub fn passes(&self) -> bool {
        self.max_error() <= EQUIVALENCE_TOLERANCE
    }
}

/// Selective aggregation with every token kept against vanilla attention.
///
/// FNR is off unless `--fnr on` is given; channel scaling is always off. With
/// `--input` the file is the only instance, otherwise `instances` synthetic
/// draws are made at each size.
pub fn equivalence(cfg: &HarnessConfig) -> Result<EquivalenceReport, HarnessError> {
    let dta = DtaConfig { keep_ratio: 1.0, fnr_enabled: cfg.fnr.unwrap_or(false), ..cfg.dta };
    let check = |x: &TokenMatrix, seed: u64| -> Result<f64, HarnessError> {
        let d = cfg.head_dim.unwrap_or(x.cols());
        let spec = AttentionSpec::new(d);
        let w = uniform_projection_weights(x.cols(), d, None, weight_seed(seed));
        let exact = vanilla_attention(x, &w)?;
        let approx = saa_attention(x, &w, &spec, &DtaConfig { seed, ..dta })?;
        relative_error(&approx, &exact)
    };

    if let Some(TokenSource::Input(_)) = cfg.source {
        let x = cfg.load_tokens()?;
        return Ok(EquivalenceReport { per_size: vec![(x.rows(), check(&x, cfg.seed)?)] });
    }
    let base = cfg.synthetic_or(SyntheticSpec { n: 0, c: 16, dist: Distribution::Gaussian });
    let sizes = cfg.sizes.clone().unwrap_or_else(|| EQUIVALENCE_SIZES.to_vec());
    let mut per_size = Vec::with_capacity(sizes.len());
    for n in sizes {
        let spec = SyntheticSpec { n, ..base };
        let mut worst: f64 = 0.0;
        for i in 0..cfg.instances as u64 {
            let seed = cfg.seed.wrapping_add(i);
            worst = worst.max(check(&spec.generate(seed)?, seed)?);
        }
        per_size.push((n, worst));
    }
    Ok(EquivalenceReport { per_size })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub keep_ratio: f64,
    pub seed: u64,
    pub frobenius_error: f64,
    pub runtime_ns: Option<u64>,
    pub flops_saa: u64,
    pub flops_vanilla: u64,
}

/// One row per `(keep_ratio, seed)`, ordered by ratio then seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `(keep_ratio, mean error)` in sweep order.
    pub fn mean_error_by_ratio(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        for row in &self.rows {
            match out.last_mut() {
                Some((r, sum, count)) if *r == row.keep_ratio => {
                    *sum += row.frobenius_error;
                    *count += 1;
                }
                _ => out.push((row.keep_ratio, row.frobenius_error, 1)),
            }
        }
        out.into_iter().map(|(r, sum, count)| (r, sum / count as f64)).collect()
    }

    /// `keep_ratio,seed,frobenius_error,runtime_ns,flops_saa,flops_vanilla`;
    /// `runtime_ns` is empty when timing was off.
    pub fn write_csv(&self, writer: &mut dyn Write) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["keep_ratio", "seed", "frobenius_error", "runtime_ns", "flops_saa", "flops_vanilla"])
            .map_err(saa_core::Error::from)?;
        for r in &self.rows {
            w.write_record([
                r.keep_ratio.to_string(),
                r.seed.to_string(),
                r.frobenius_error.to_string(),
                r.runtime_ns.map(|t| t.to_string()).unwrap_or_default(),
                r.flops_saa.to_string(),
                r.flops_vanilla.to_string(),
            ])
            .map_err(saa_core::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Error against vanilla attention and analytic cost for each keep ratio
/// and seed. Each seed draws its own tokens and weights, shared by all
/// ratios so the comparison across ratios is paired.
pub fn sweep_ratio(cfg: &HarnessConfig) -> Result<SweepResult, HarnessError> {
    let ratios = cfg.ratios.clone().unwrap_or_else(|| DEFAULT_RATIOS.to_vec());
    if ratios.is_empty() {
        return Err(HarnessError::Usage("sweep-ratio needs at least one keep ratio".into()));
    }
    if cfg.seeds == 0 {
        return Err(HarnessError::Usage("sweep-ratio needs at least one seed".into()));
    }
    let fixed = match cfg.source {
        Some(TokenSource::Input(_)) => Some(cfg.load_tokens()?),
        _ => None,
    };
    let spec_default = SyntheticSpec { n: 256, c: 64, dist: Distribution::Gaussian };
    let synthetic = cfg.synthetic_or(spec_default);

    let mut instances = Vec::with_capacity(cfg.seeds);
    for s in 0..cfg.seeds as u64 {
        let seed = cfg.seed.wrapping_add(s);
        let x = match &fixed {
            Some(x) => x.clone(),
            None => synthetic.generate(seed)?,
        };
        let spec = cfg.attention_spec(x.cols())?;
        let w = cfg.weights(x.cols(), &spec, weight_seed(seed));
        let exact = vanilla_attention(&x, &w)?;
        instances.push((seed, x, spec, w, exact));
    }

    let mut rows = Vec::with_capacity(ratios.len() * instances.len());
    for &keep_ratio in &ratios {
        let dta = DtaConfig { keep_ratio, ..cfg.dta };
        dta.validate()?;
        for (seed, x, spec, w, exact) in &instances {
            let dta = DtaConfig { seed: *seed, ..dta };
            let approx = saa_attention(x, w, spec, &dta)?;
            let runtime_ns = if cfg.timing {
                Some(median_runtime(cfg.warmup, cfg.reps, || saa_attention(x, w, spec, &dta))?.0)
            } else {
                None
            };
            let (n, c, d) = (x.rows() as u64, x.cols() as u64, spec.head_dim as u64);
            let k = dta.cluster_count(x.rows()) as u64;
            rows.push(SweepRow {
                keep_ratio,
                seed: *seed,
                frobenius_error: frobenius_error(&approx, exact)?,
                runtime_ns,
                flops_saa: estimate_flops(n, k, c, d, Variant::Saa).total,
                flops_vanilla: estimate_flops(n, n, c, d, Variant::Vanilla).total,
            });
        }
    }
    Ok(SweepResult { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    pub wall_clock_ns: u64,
    pub flops: u64,
    pub frobenius_error: f64,
}

/// `method,N,K,C,wall_clock_ns,flops,frobenius_error`
pub fn write_bench_csv(writer: &mut dyn Write, records: &[BenchRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "N", "K", "C", "wall_clock_ns", "flops", "frobenius_error"])
        .map_err(saa_core::Error::from)?;
    for r in records {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.c.to_string(),
            r.wall_clock_ns.to_string(),
            r.flops.to_string(),
            r.frobenius_error.to_string(),
        ])
        .map_err(saa_core::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Analytic count for attention whose keys were clustered by `method`: the
/// selective aggregation estimate with the clustering term swapped.
fn bench_flops(method: Method, n: u64, k: u64, c: u64, d: u64, iters: u64) -> u64 {
    if method == Method::Vanilla {
        return estimate_flops(n, n, c, d, Variant::Vanilla).total;
    }
    let saa = estimate_flops(n, k, c, d, Variant::Saa);
    let clustering = match method {
        Method::DpcKnn => n * n * c,
        Method::Kmeans => iters * n * k * c,
        _ => saa.dta_cost,
    };
    saa.total - saa.dta_cost + clustering
}

/// Median end-to-end attention time at each size with a fixed cluster count.
pub fn bench(cfg: &HarnessConfig) -> Result<Vec<BenchRecord>, HarnessError> {
    let methods =
        cfg.methods.clone().unwrap_or_else(|| vec![Method::Dta, Method::Kmeans, Method::DpcKnn, Method::Vanilla]);
    if methods.contains(&Method::Window) {
        return Err(HarnessError::Usage("bench does not time window attention; use compare".into()));
    }
    let sizes = cfg.sizes.clone().unwrap_or_else(|| BENCH_SIZES.to_vec());
    let k = cfg.clusters.unwrap_or(BENCH_CLUSTERS);
    let synthetic = cfg.synthetic_or(SyntheticSpec { n: 0, c: 64, dist: Distribution::Gaussian });

    let mut records = Vec::new();
    for n in sizes {
        if k == 0 || k > n {
            return Err(HarnessError::Usage(format!("K={k} is out of range for N={n}")));
        }
        let x = SyntheticSpec { n, ..synthetic }.generate(cfg.seed)?;
        let spec = cfg.attention_spec(x.cols())?;
        let w = cfg.weights(x.cols(), &spec, weight_seed(cfg.seed));
        let dta = DtaConfig { keep_ratio: k as f64 / n as f64, ..cfg.dta };
        dta.validate()?;
        debug_assert_eq!(dta.cluster_count(n), k);
        let exact = vanilla_attention(&x, &w)?;

        for &method in &methods {
            let (ns, out) = median_runtime(cfg.warmup, cfg.reps, || match method {
                Method::Vanilla => vanilla_attention(&x, &w),
                Method::DpcKnn => {
                    Ok(saa_attention_with(&x, &w, &spec, &dta, |keys| dpc_knn_exact(keys, k, &dta))?.output)
                }
                Method::Kmeans => Ok(saa_attention_with(&x, &w, &spec, &dta, |keys| {
                    kmeans_baseline(keys, k, cfg.iters, dta.seed, &dta)
                })?
                .output),
                _ => saa_attention(&x, &w, &spec, &dta),
            })?;
            let keys = if method == Method::Vanilla { n } else { k };
            let (n64, k64, c64, d64) = (n as u64, k as u64, x.cols() as u64, spec.head_dim as u64);
            records.push(BenchRecord {
                method,
                n,
                k: keys,
                c: x.cols(),
                wall_clock_ns: ns,
                flops: bench_flops(method, n64, k64, c64, d64, cfg.iters as u64),
                frobenius_error: frobenius_error(&out, &exact)?,
            });
            eprintln!("{method} N={n}: {:.3} ms", ns as f64 / 1e6);
        }
    }
    Ok(records)
}

/// Every method on the same tokens and weights.
pub fn compare(cfg: &HarnessConfig) -> Result<Vec<OracleReport>, HarnessError> {
    let tokens = cfg.load_tokens()?;
    let shape = cfg.feature_map(&tokens)?;
    let spec = cfg.attention_spec(tokens.cols())?;
    let w = cfg.weights(tokens.cols(), &spec, weight_seed(cfg.seed));
    let methods = cfg.methods.clone().unwrap_or_else(|| {
        let side = (tokens.rows() as f64).sqrt().round() as usize;
        let square = side * side == tokens.rows() && side.is_multiple_of(cfg.window);
        Method::ALL.into_iter().filter(|&m| m != Method::Window || shape.is_some() || square).collect()
    });
    let opts =
        CompareOptions { warmup: cfg.warmup, reps: cfg.reps, kmeans_iters: cfg.iters, window: cfg.window, shape };
    Ok(compare_methods(&tokens, &w, &spec, &cfg.dta, &methods, &opts)?)
}
