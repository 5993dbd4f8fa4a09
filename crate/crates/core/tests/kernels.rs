mod common;

use common::{naive_cosine, naive_matmul};
use proptest::prelude::*;
use saa_core::synth::gaussian_tokens;
use saa_core::tensor::{
    cosine_distance, cosine_similarity, frobenius_error, layer_norm, matmul, matmul_transposed, row_softmax,
};
use saa_core::TokenMatrix;

const EPS: f64 = 1e-6;

#[test]
fn matmul_matches_triple_loop() {
    let a = gaussian_tokens(5, 7, 11).unwrap();
    let b = gaussian_tokens(7, 3, 12).unwrap();
    let got = matmul(&a, &b).unwrap();
    let want = naive_matmul(&a, &b);
    for (g, w) in got.as_slice().iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12);
        // Same accumulation order, so identical bits.
        assert_eq!(g.to_bits(), w.to_bits());
    }
}

#[test]
fn matmul_transposed_matches_explicit_transpose() {
    let a = gaussian_tokens(4, 6, 1).unwrap();
    let b = gaussian_tokens(5, 6, 2).unwrap();
    let mut bt = TokenMatrix::zeros(6, 5);
    for i in 0..5 {
        for j in 0..6 {
            bt.set(j, i, b.get(i, j)).unwrap();
        }
    }
    assert_eq!(matmul_transposed(&a, &b).unwrap(), matmul(&a, &bt).unwrap());
}

#[test]
fn layer_norm_statistics() {
    let x = gaussian_tokens(4, 8, 3).unwrap().scale(7.5);
    let out = layer_norm(&x, &[1.0; 8], &[0.0; 8], 1e-5).unwrap();
    for row in out.row_iter() {
        let mean = row.iter().sum::<f64>() / 8.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() <= 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() <= 1e-4, "var {var}");
    }
    let gamma: Vec<f64> = (0..8).map(|i| 0.5 + i as f64).collect();
    let beta: Vec<f64> = (0..8).map(|i| -(i as f64)).collect();
    let affine = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
    for i in 0..4 {
        for j in 0..8 {
            let expect = out.get(i, j) * gamma[j] + beta[j];
            assert!((affine.get(i, j) - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn frobenius_matches_direct_sum() {
    let a = gaussian_tokens(6, 5, 7).unwrap();
    let b = gaussian_tokens(6, 5, 8).unwrap();
    let mut acc = 0.0;
    for i in 0..6 {
        for j in 0..5 {
            acc += (a.get(i, j) - b.get(i, j)).powi(2);
        }
    }
    assert!((frobenius_error(&a, &b).unwrap() - acc.sqrt()).abs() <= 1e-12);
}

fn vec_pair(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| (prop::collection::vec(-100.0f64..100.0, n), prop::collection::vec(-100.0f64..100.0, n)))
}

fn matrix(rows: usize, cols: usize, bound: f64) -> impl Strategy<Value = TokenMatrix> {
    prop::collection::vec(-bound..bound, rows * cols).prop_map(move |d| TokenMatrix::new(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn cosine_is_symmetric((a, b) in vec_pair(1..16)) {
        let ab = cosine_similarity(&a, &b, EPS).unwrap();
        prop_assert_eq!(ab.to_bits(), cosine_similarity(&b, &a, EPS).unwrap().to_bits());
        prop_assert!(ab.abs() <= 1.0 + 1e-9);
        prop_assert!((ab - naive_cosine(&a, &b, EPS)).abs() <= 1e-15);
        let d = cosine_distance(&a, &b, EPS).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
    }

    #[test]
    fn cosine_is_scale_invariant((a, b) in vec_pair(1..16), lambda in 1e-3f64..1e3) {
        let scaled: Vec<f64> = a.iter().map(|v| v * lambda).collect();
        let base = cosine_similarity(&a, &b, EPS).unwrap();
        let s = cosine_similarity(&scaled, &b, EPS).unwrap();
        // Both sides see the same zero-norm branch unless `a` straddles eps.
        let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm_a > 1e-3 && norm_a * lambda > 1e-3);
        prop_assert!((s - base).abs() <= 1e-12, "{} vs {}", s, base);
    }

    #[test]
    fn softmax_rows_sum_to_one(m in matrix(4, 9, 1e4)) {
        let s = row_softmax(&m);
        for row in s.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn matmul_is_bit_exact_against_triple_loop(a in matrix(3, 5, 10.0), b in matrix(5, 4, 10.0)) {
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(&a, &b);
        for (g, w) in got.as_slice().iter().zip(&want) {
            prop_assert_eq!(g.to_bits(), w.to_bits());
        }
    }

    #[test]
    fn frobenius_triangle_inequality(a in matrix(3, 3, 50.0), b in matrix(3, 3, 50.0), c in matrix(3, 3, 50.0)) {
        let ab = frobenius_error(&a, &b).unwrap();
        let bc = frobenius_error(&b, &c).unwrap();
        let ac = frobenius_error(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }
}
