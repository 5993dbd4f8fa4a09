#![allow(clippy::single_range_in_vec_init, clippy::needless_range_loop)]

mod common;

use common::{dpc_oracle, naive_cosine};
use proptest::prelude::*;
use saa_core::dta::{
    aggregate_clusters, assign_tokens, build_subsample_plan, compute_density_stats, dta_compress, max_row_norm,
    restore_feature_norms, select_centers, DensityStats, DtaConfig, SubsamplePlan,
};
use saa_core::synth::gaussian_tokens;
use saa_core::tensor::norm;
use saa_core::TokenMatrix;

fn no_fnr() -> DtaConfig {
    DtaConfig { fnr_enabled: false, ..DtaConfig::default() }
}

#[test]
fn density_stats_match_pairwise_oracle() {
    let x = gaussian_tokens(32, 6, 21).unwrap();
    let cfg = no_fnr();
    let st = compute_density_stats(&x, &cfg).unwrap();
    let (rho, delta, gamma) = dpc_oracle(&x, cfg.neighbor_count, cfg.eps);
    for i in 0..32 {
        assert!((st.rho[i] - rho[i]).abs() <= 1e-12);
        assert!((st.delta[i] - delta[i]).abs() <= 1e-12);
        assert!((st.gamma[i] - gamma[i]).abs() <= 1e-12);
        assert_eq!(st.gamma[i], st.rho[i] * st.delta[i]);
        assert!(st.delta[i] >= 0.0 && st.rho[i].abs() <= 1.0);
    }
}

#[test]
fn center_selection_matches_full_sort() {
    let x = gaussian_tokens(64, 5, 22).unwrap();
    let plan = SubsamplePlan::exhaustive(64, 4);
    let st = compute_density_stats(&x, &no_fnr()).unwrap();
    let got = select_centers(&st, &plan, 4).unwrap();

    let mut ranked: Vec<(f64, usize)> = st.gamma.iter().copied().zip(0..).collect();
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut want: Vec<usize> = ranked[..4].iter().map(|&(_, i)| i).collect();
    want.sort();
    assert_eq!(got, want);
}

#[test]
fn center_selection_maps_through_subsample() {
    let plan = SubsamplePlan {
        region_bounds: vec![0..100],
        sampled_indices: vec![3, 10, 50, 70, 99],
        per_region_counts: vec![5],
    };
    let st = DensityStats { rho: vec![0.0; 5], delta: vec![0.0; 5], gamma: vec![0.1, 0.7, 0.2, 0.7, 0.9] };
    assert_eq!(select_centers(&st, &plan, 2).unwrap(), vec![10, 99]);
    assert_eq!(select_centers(&st, &plan, 3).unwrap(), vec![10, 70, 99]);
}

#[test]
fn assignment_matches_exhaustive_argmax() {
    let x = gaussian_tokens(128, 6, 23).unwrap();
    let centers = [3, 17, 29, 40, 77, 90, 101, 127];
    let cfg = no_fnr();
    let got = assign_tokens(&x, &centers, &cfg).unwrap();
    for i in 0..128 {
        let sims: Vec<f64> = centers.iter().map(|&c| naive_cosine(x.row(i), x.row(c), cfg.eps)).collect();
        let best = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let want = if let Some(k) = centers.iter().position(|&c| c == i) {
            k
        } else {
            sims.iter().position(|&s| s == best).unwrap()
        };
        assert_eq!(got[i], want, "token {i}");
    }
}

#[test]
fn singleton_clusters_reproduce_tokens() {
    let x = gaussian_tokens(10, 4, 24).unwrap();
    let centers: Vec<usize> = (0..10).collect();
    let (y, w) = aggregate_clusters(&x, &centers, &centers, &no_fnr()).unwrap();
    assert_eq!(y, x);
    assert!(w.iter().all(|&v| v > 0.0));
}

#[test]
fn restored_norms_equal_global_max() {
    let x = gaussian_tokens(50, 7, 25).unwrap();
    let y = gaussian_tokens(6, 7, 26).unwrap().scale(0.1);
    let cfg = DtaConfig::default();
    let out = restore_feature_norms(&y, &x, &cfg);
    let n_max = x.row_iter().map(norm).fold(0.0, f64::max);
    for k in 0..6 {
        assert!((norm(out.row(k)) - n_max).abs() <= 1e-9);
        let (a, b) = (norm(y.row(k)), norm(out.row(k)));
        for j in 0..7 {
            assert!((y.get(k, j) / a - out.get(k, j) / b).abs() <= 1e-12);
        }
    }
}

#[test]
fn keep_ratio_three_percent_of_thousand() {
    let x = gaussian_tokens(1000, 8, 27).unwrap();
    let r = dta_compress(&x, &DtaConfig::default()).unwrap();
    assert_eq!(r.aggregated.rows(), 30);
    assert_eq!(r.centers.len(), 30);
}

#[test]
fn clusters_partition_the_tokens() {
    let x = gaussian_tokens(256, 8, 28).unwrap();
    let cfg = DtaConfig { keep_ratio: 0.125, ..DtaConfig::default() };
    let r = dta_compress(&x, &cfg).unwrap();
    let sizes = r.cluster_sizes();
    assert_eq!(sizes.len(), 32);
    assert_eq!(sizes.iter().sum::<usize>(), 256);
    assert!(sizes.iter().all(|&s| s >= 1));
}

#[test]
fn full_subsample_agrees_with_exhaustive_oracle() {
    let x = gaussian_tokens(40, 5, 29).unwrap();
    // K = 4, β·K = 40 = N: the subsample is the whole set.
    let cfg = DtaConfig { keep_ratio: 0.1, beta: 10, ..no_fnr() };
    let plan = build_subsample_plan(40, &cfg).unwrap();
    assert_eq!(plan.sampled_indices, (0..40).collect::<Vec<_>>());
    let st = compute_density_stats(&x.select_rows(&plan.sampled_indices).unwrap(), &cfg).unwrap();
    let (_, _, gamma) = dpc_oracle(&x, cfg.neighbor_count, cfg.eps);
    for i in 0..40 {
        assert!((st.gamma[i] - gamma[i]).abs() <= 1e-12);
    }
}

fn instance() -> impl Strategy<Value = (TokenMatrix, DtaConfig)> {
    (8usize..120, 2usize..10, any::<u64>(), 0.02f64..0.5, 2usize..6, 1usize..8, 0.1f64..5.0).prop_map(
        |(n, c, seed, keep_ratio, beta, m, tau)| {
            let x = gaussian_tokens(n, c, seed).unwrap();
            let cfg = DtaConfig {
                keep_ratio,
                beta,
                neighbor_count: m,
                temperature: tau,
                seed: seed.rotate_left(7),
                ..DtaConfig::default()
            };
            (x, cfg)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_property((x, cfg) in instance()) {
        let r = dta_compress(&x, &cfg).unwrap();
        let sizes = r.cluster_sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), x.rows());
        prop_assert_eq!(r.aggregated.rows(), cfg.cluster_count(x.rows()));
        for (k, &c) in r.centers.iter().enumerate() {
            prop_assert_eq!(r.assignment[c], k);
        }
    }

    #[test]
    fn aggregation_shrinks_norms((x, cfg) in instance()) {
        let plan = build_subsample_plan(x.rows(), &cfg).unwrap();
        let k = cfg.cluster_count(x.rows());
        let st = compute_density_stats(&x.select_rows(&plan.sampled_indices).unwrap(), &cfg).unwrap();
        let centers = select_centers(&st, &plan, k).unwrap();
        let assignment = assign_tokens(&x, &centers, &cfg).unwrap();
        let (y, _) = aggregate_clusters(&x, &assignment, &centers, &cfg).unwrap();
        for c in 0..k {
            let max_member = (0..x.rows()).filter(|&i| assignment[i] == c).map(|i| norm(x.row(i))).fold(0.0, f64::max);
            prop_assert!(norm(y.row(c)) <= max_member + 1e-9);
        }
        let restored = restore_feature_norms(&y, &x, &cfg);
        let n_max = max_row_norm(&x);
        for c in 0..k {
            let pre = norm(y.row(c));
            if pre > cfg.eps {
                prop_assert!((norm(restored.row(c)) - n_max).abs() <= 1e-9);
                let cos = naive_cosine(y.row(c), restored.row(c), 0.0);
                prop_assert!((cos - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn compression_is_deterministic((x, cfg) in instance()) {
        prop_assert_eq!(dta_compress(&x, &cfg).unwrap(), dta_compress(&x, &cfg).unwrap());
    }

    #[test]
    fn large_temperature_approaches_plain_mean((x, cfg) in instance()) {
        let hot = DtaConfig { temperature: 1e6, fnr_enabled: false, ..cfg };
        let r = dta_compress(&x, &hot).unwrap();
        for k in 0..r.cluster_count() {
            let members: Vec<usize> = (0..x.rows()).filter(|&i| r.assignment[i] == k).collect();
            let mut mean = vec![0.0; x.cols()];
            for &i in &members {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v / members.len() as f64;
                }
            }
            let diff: Vec<f64> = mean.iter().zip(r.aggregated.row(k)).map(|(a, b)| a - b).collect();
            let scale = norm(&mean).max(1e-12);
            // Relative to the member scale when the mean nearly cancels.
            let member_scale = members.iter().map(|&i| norm(x.row(i))).fold(0.0, f64::max);
            prop_assert!(norm(&diff) <= 1e-4 * scale.max(member_scale * 1e-2), "{} vs {}", norm(&diff), scale);
        }
    }
}
