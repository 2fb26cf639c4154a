// SPDX-License-Identifier: Apache-2.0

//! Brute-force oracles shared by the integration tests. None of these call into
//! the library's own target or solver code.

#![allow(dead_code)]

use equilibria::tasks::SegmentIndices;

/// `Σ_{t∈[i,j]} u_t ± Σ_{t∈[k,l]} u_t` with 1-based inclusive bounds, one index at a time.
pub fn arithmetic(row: &[f64], s: SegmentIndices, add: bool) -> f64 {
    let mut a = 0.0;
    let mut b = 0.0;
    for t in 1..=row.len() {
        if s.i <= t && t <= s.j {
            a += row[t - 1];
        }
        if s.k <= t && t <= s.l {
            b += row[t - 1];
        }
    }
    if add {
        a + b
    } else {
        a - b
    }
}

/// Mean of `row[0..=j]`, summed from scratch.
pub fn prefix_mean(row: &[f64], j: usize) -> f64 {
    let mut s = 0.0;
    for v in &row[..=j] {
        s += v;
    }
    s / (j + 1) as f64
}

/// Smallest index `m ≤ j` with `row[m] ≥ row[t]` for every `t ≤ j`.
pub fn prefix_argmax(row: &[f64], j: usize) -> usize {
    (0..=j)
        .find(|&m| (0..=j).all(|t| row[m] >= row[t]))
        .expect("a maximum exists")
}

/// Two-pass population variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Predicts the final running argmax from everything but the last element; wrong
/// only when the last element is the new maximum.
pub fn copy_previous_final(row: &[f64]) -> usize {
    prefix_argmax(row, row.len() - 2)
}

/// Exact fixed point of `x = max(0, A x + b)` for strictly upper-triangular `A`
/// (row-major, `n × n`) by back substitution.
pub fn upper_fixed_point(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut z = b[i];
        for j in i + 1..n {
            z += a[i * n + j] * x[j];
        }
        x[i] = z.max(0.0);
    }
    x
}

/// Row-major `m · v`.
pub fn matvec(m: &[f64], rows: usize, v: &[f64]) -> Vec<f64> {
    let cols = v.len();
    assert_eq!(m.len(), rows * cols);
    (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c] * v[c]).sum())
        .collect()
}

/// Fixed point of `x = max(0, A x + B u)`, iterated until steps are a few ulps.
/// Returns the state and the pre-activation at the fixed point.
pub fn fixed_point(a: &[f64], b: &[f64], n: usize, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let bu = matvec(b, n, u);
    let mut x = vec![0.0; n];
    for _ in 0..100_000 {
        let ax = matvec(a, n, &x);
        let z: Vec<f64> = ax.iter().zip(&bu).map(|(p, q)| p + q).collect();
        let next: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let step = next.iter().zip(&x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if step <= 4.0 * f64::EPSILON * scale {
            return (next, z);
        }
        x = next;
    }
    panic!("oracle fixed point did not settle");
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
