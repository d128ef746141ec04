//! Reference implementations used only by tests. None of them call into the
//! code paths they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgom::DMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One-sided Jacobi SVD. Returns `(U, s, V)` with `s` descending and `U`
/// thin (`m x min(m, n)`).
pub fn jacobi_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DMatrix::from_fn(m, n, |i, c| {
        let j = order[c];
        if norms[j] > 0.0 { w[j][i] / norms[j] } else { 0.0 }
    });
    let vv = DMatrix::from_fn(n, n, |i, c| v[order[c]][i]);
    (u, s, vv)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    for (x, y) in head[p].iter_mut().zip(tail[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Literal pairwise modularity with `A = R R'` built entry by entry.
pub fn literal_modularity(r: &DMatrix<f64>, pi: &DMatrix<f64>) -> f64 {
    let (n, j) = r.shape();
    let k = pi.ncols();
    let mut a = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in 0..n {
            a[x][y] = (0..j).map(|c| r[(x, c)] * r[(y, c)]).sum();
        }
    }
    let part = |sign: f64| -> (f64, f64) {
        let w: Vec<Vec<f64>> = a.iter().map(|row| row.iter().map(|&v| (sign * v).max(0.0)).collect()).collect();
        let d: Vec<f64> = w.iter().map(|row| row.iter().sum()).collect();
        let m: f64 = d.iter().sum::<f64>() / 2.0;
        if m == 0.0 {
            return (0.0, 0.0);
        }
        let mut q = 0.0;
        for x in 0..n {
            for y in 0..n {
                let overlap: f64 = (0..k).map(|c| pi[(x, c)] * pi[(y, c)]).sum();
                q += (w[x][y] - d[x] * d[y] / (2.0 * m)) * overlap;
            }
        }
        (m, q / (2.0 * m))
    };
    let (mp, qp) = part(1.0);
    let (mm, qm) = part(-1.0);
    if mp + mm == 0.0 {
        return 0.0;
    }
    (mp * qp - mm * qm) / (mp + mm)
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// `min_P |est - truth P|_1 / N` by enumerating every `P`.
pub fn brute_hamming(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let (n, k) = truth.shape();
    permutations(k)
        .into_iter()
        .map(|p| {
            let permuted = DMatrix::from_fn(n, k, |i, c| truth[(i, p[c])]);
            (est - permuted).iter().map(|v| v.abs()).sum::<f64>() / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// `min_P |est - truth P|_F / |truth|_F` by enumerating every `P`.
pub fn brute_relative(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let (n, k) = truth.shape();
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    permutations(k)
        .into_iter()
        .map(|p| {
            let permuted = DMatrix::from_fn(n, k, |i, c| truth[(i, p[c])]);
            (est - permuted).iter().map(|v| v * v).sum::<f64>().sqrt() / norm
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn random_stochastic<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>());
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}

/// `k` pure rows first, then random mixed rows.
pub fn membership_with_pure<R: Rng>(rng: &mut R, n: usize, k: usize) -> DMatrix<f64> {
    let mut m = random_stochastic(rng, n, k);
    for i in 0..k {
        m.row_mut(i).fill(0.0);
        m[(i, i)] = 1.0;
    }
    m
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, n: usize, j: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, j, |_, _| lo + (hi - lo) * rng.random::<f64>())
}

/// `Q diag(s) W'` with random orthonormal factors.
pub fn with_spectrum<R: Rng>(rng: &mut R, n: usize, j: usize, s: &[f64]) -> DMatrix<f64> {
    let r = s.len();
    let q = uniform_matrix(rng, n, r, -1.0, 1.0).qr().q();
    let w = uniform_matrix(rng, j, r, -1.0, 1.0).qr().q();
    q * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s)) * w.transpose()
}
