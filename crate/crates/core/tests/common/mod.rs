//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use aoft::linalg::Matrix;
use aoft::seed::{self, normal_vec, Rng};

pub fn rng(label: &str) -> Rng {
    seed::rng(0x5eed, label)
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, normal_vec(rng, rows * cols, 1.0)).unwrap()
}

/// Unit-norm vector with `q0` bounded away from the pole.
pub fn unit_generator(rng: &mut Rng, n: usize) -> Vec<f64> {
    loop {
        let v = normal_vec(rng, n, 1.0);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let q: Vec<f64> = v.iter().map(|x| x / norm).collect();
        if 1.0 + q[0] > 1e-3 {
            return q;
        }
    }
}

pub fn triple_loop(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Singular values by one-sided Jacobi rotations, descending.
pub fn jacobi_singular_values(a: &Matrix) -> Vec<f64> {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

pub fn numerical_rank(a: &Matrix) -> usize {
    let sv = jacobi_singular_values(a);
    let top = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1.0)).count()
}

/// `erf` by composite Simpson quadrature of `2/√π · exp(−t²)`.
pub fn erf_quadrature(x: f64) -> f64 {
    let n = 4000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

pub fn gelu_oracle(x: f64) -> f64 {
    0.5 * x * (1.0 + erf_quadrature(x / std::f64::consts::SQRT_2))
}

/// Single-head attention with explicit scalar loops.
pub fn attention_loops(x: &Matrix, wq: &Matrix, wk: &Matrix, wv: &Matrix) -> Matrix {
    let (t, d) = x.shape();
    let dh = wq.cols();
    let proj = |w: &Matrix| {
        let mut p = vec![vec![0.0; dh]; t];
        for (i, row) in p.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                for a in 0..d {
                    *v += x.get(i, a) * w.get(a, k);
                }
            }
        }
        p
    };
    let (q, k, v) = (proj(wq), proj(wk), proj(wv));
    let mut out = Matrix::zeros(t, dh);
    for i in 0..t {
        let scores: Vec<f64> = (0..t)
            .map(|j| (0..dh).map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
            .collect();
        let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for c in 0..dh {
            out.set(i, c, (0..t).map(|j| e[j] / z * v[j][c]).sum());
        }
    }
    out
}

/// Angles in degrees between every column pair, via `acos` of the cosine.
pub fn brute_force_angles(a: &Matrix) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.column(j)).collect();
    let mut out = Vec::new();
    for i in 0..cols.len() {
        for j in i + 1..cols.len() {
            let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum();
            let ni = cols[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            let nj = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            out.push((dot / (ni * nj)).clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    out
}

/// `γ/m · E‖Σ ξᵢ xᵢ‖` averaged over all `2^m` sign patterns.
pub fn rademacher_enumeration(xs: &[Vec<f64>], gamma: f64) -> f64 {
    let m = xs.len();
    let dim = xs[0].len();
    let mut total = 0.0;
    for mask in 0..(1u32 << m) {
        let mut s = vec![0.0; dim];
        for (i, x) in xs.iter().enumerate() {
            let sign = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
            for (acc, v) in s.iter_mut().zip(x) {
                *acc += sign * v;
            }
        }
        total += s.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    gamma * total / (1u64 << m) as f64 / m as f64
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
