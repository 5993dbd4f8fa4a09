//! Brute-force references, written independently of the library kernels.
#![allow(dead_code, clippy::needless_range_loop)]

use saa_core::TokenMatrix;

pub fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn naive_cosine(a: &[f64], b: &[f64], eps: f64) -> f64 {
    let na = naive_dot(a, a).sqrt();
    let nb = naive_dot(b, b).sqrt();
    if na <= eps || nb <= eps {
        return 0.0;
    }
    (naive_dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn naive_matmul(a: &TokenMatrix, b: &TokenMatrix) -> Vec<f64> {
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        for j in 0..r {
            let mut s = 0.0;
            for k in 0..q {
                s += a.get(i, k) * b.get(k, j);
            }
            out[i * r + j] = s;
        }
    }
    out
}

/// Exhaustive density-peak statistics over all rows.
pub fn dpc_oracle(x: &TokenMatrix, m: usize, eps: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = x.rows();
    let m = m.min(n - 1).max(1);
    let sim = |i: usize, j: usize| naive_cosine(x.row(i), x.row(j), eps);
    let mut rho = vec![0.0; n];
    for i in 0..n {
        let mut others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| sim(i, j)).collect();
        others.sort_by(|a, b| b.partial_cmp(a).unwrap());
        rho[i] = others[..m].iter().sum::<f64>() / m as f64;
    }
    let mut delta = vec![0.0; n];
    for i in 0..n {
        let denser: Vec<f64> = (0..n).filter(|&j| rho[j] > rho[i]).map(|j| 1.0 - sim(i, j)).collect();
        delta[i] = if denser.is_empty() {
            (0..n).filter(|&j| j != i).map(|j| 1.0 - sim(i, j)).fold(0.0, f64::max)
        } else {
            denser.into_iter().fold(f64::INFINITY, f64::min)
        };
    }
    let gamma = rho.iter().zip(&delta).map(|(r, d)| r * d).collect();
    (rho, delta, gamma)
}

/// softmax(q·kᵀ/√scale)·v, one query at a time.
pub fn per_query_attention(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], scale: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| {
            let logits: Vec<f64> = k.iter().map(|kj| naive_dot(qi, kj) / scale.sqrt()).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            let mut out = vec![0.0; v[0].len()];
            for (e, vj) in exps.iter().zip(v) {
                for (o, x) in out.iter_mut().zip(vj) {
                    *o += e / z * x;
                }
            }
            out
        })
        .collect()
}

pub fn rows(m: &TokenMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

pub fn project(x: &TokenMatrix, w: &TokenMatrix) -> Vec<Vec<f64>> {
    let flat = naive_matmul(x, w);
    flat.chunks(w.cols()).map(|c| c.to_vec()).collect()
}
