//! Label-aligned error metrics and membership profile statistics.
//!
//! Both the Hamming and the relative error decompose into a sum of per-column
//! costs once a column permutation is fixed, so the best permutation is a
//! linear assignment problem. Small `K` is searched exhaustively.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgomError};
use crate::model::{MembershipMatrix, ResponseMatrix};

/// Largest `K` searched by enumerating all permutations under `Auto`.
pub const EXHAUSTIVE_LIMIT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentStrategy {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] classes, assignment above.
    #[default]
    Auto,
    Exhaustive,
    Assignment,
}

/// Column matching `estimate[:, a] <-> truth[:, permutation[a]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub permutation: Vec<usize>,
    pub cost: f64,
}

/// Minimises `sum_a cost[(a, perm[a])]` over permutations of a square matrix.
pub fn align_columns(cost: &DMatrix<f64>, strategy: AlignmentStrategy) -> Alignment {
    assert!(cost.is_square(), "cost matrix must be square");
    let k = cost.nrows();
    let exhaustive = match strategy {
        AlignmentStrategy::Auto => k <= EXHAUSTIVE_LIMIT,
        AlignmentStrategy::Exhaustive => true,
        AlignmentStrategy::Assignment => false,
    };
    let permutation = if exhaustive { exhaustive_search(cost) } else { hungarian(cost) };
    let cost = total_cost(cost, &permutation);
    Alignment { permutation, cost }
}

fn total_cost(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
    perm.iter().enumerate().fold(0.0, |acc, (a, &b)| acc + cost[(a, b)])
}

fn exhaustive_search(cost: &DMatrix<f64>) -> Vec<usize> {
    let k = cost.nrows();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = total_cost(cost, &perm);
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let value = total_cost(cost, &perm);
            if value < best_cost {
                best_cost = value;
                best.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Shortest augmenting path Hungarian method with potentials, `O(K^3)`.
fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(WgomError::Dimension(format!(
            "{what}: estimate is {}x{} but truth is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(WgomError::Dimension(format!("{what}: empty matrices")));
    }
    Ok(())
}

/// `cost[(a, b)] = f(estimate[:, a], truth[:, b])`.
fn column_costs(
    estimate: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    gap: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let k = estimate.ncols();
    DMatrix::from_fn(k, k, |a, b| {
        estimate
            .column(a)
            .iter()
            .zip(truth.column(b).iter())
            .fold(0.0, |acc, (x, y)| acc + gap(x - y))
    })
}

/// `min_P |pi_hat - pi P|_1 / N` over column permutations.
pub fn hamming_error(pi_hat: &MembershipMatrix, pi_true: &MembershipMatrix) -> Result<f64> {
    hamming_error_with(pi_hat.as_matrix(), pi_true.as_matrix(), AlignmentStrategy::Auto)
}

pub fn hamming_error_with(
    pi_hat: &DMatrix<f64>,
    pi_true: &DMatrix<f64>,
    strategy: AlignmentStrategy,
) -> Result<f64> {
    check_same_shape(pi_hat, pi_true, "hamming error")?;
    let cost = column_costs(pi_hat, pi_true, f64::abs);
    Ok(align_columns(&cost, strategy).cost / pi_hat.nrows() as f64)
}

/// `min_P |theta_hat - theta P|_F / |theta|_F` over column permutations.
pub fn relative_error(theta_hat: &DMatrix<f64>, theta_true: &DMatrix<f64>) -> Result<f64> {
    relative_error_with(theta_hat, theta_true, AlignmentStrategy::Auto)
}

pub fn relative_error_with(
    theta_hat: &DMatrix<f64>,
    theta_true: &DMatrix<f64>,
    strategy: AlignmentStrategy,
) -> Result<f64> {
    check_same_shape(theta_hat, theta_true, "relative error")?;
    let norm = theta_true.norm();
    if !(norm > 0.0) {
        return Err(WgomError::InvalidInput("true item parameters have zero norm".into()));
    }
    let cost = column_costs(theta_hat, theta_true, |d| d * d);
    Ok(align_columns(&cost, strategy).cost.sqrt() / norm)
}

/// Fraction of `k_hats` equal to `k_true`.
pub fn accuracy_rate(k_hats: &[usize], k_true: usize) -> Result<f64> {
    if k_hats.is_empty() {
        return Err(WgomError::InvalidInput("accuracy rate of an empty list".into()));
    }
    let hits = k_hats.iter().filter(|&&k| k == k_true).count();
    Ok(hits as f64 / k_hats.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileThresholds {
    /// A row is highly mixed when its largest entry is at most this.
    pub mixed: f64,
    /// A row is highly pure when its largest entry is at least this.
    pub pure: f64,
}

impl Default for ProfileThresholds {
    fn default() -> Self {
        Self { mixed: 0.6, pure: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipProfile {
    pub omega_mixed: f64,
    pub omega_pure: f64,
    /// Smallest over largest column sum.
    pub eta: f64,
}

pub fn profile_memberships(
    pi_hat: &MembershipMatrix,
    thresholds: ProfileThresholds,
) -> MembershipProfile {
    let pi = pi_hat.as_matrix();
    let n = pi.nrows() as f64;
    let (mut mixed, mut pure) = (0usize, 0usize);
    for row in pi.row_iter() {
        let top = row.max();
        if top <= thresholds.mixed {
            mixed += 1;
        }
        if top >= thresholds.pure {
            pure += 1;
        }
    }
    let sums: Vec<f64> = pi.column_iter().map(|c| c.sum()).collect();
    let lo = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sums.iter().copied().fold(0.0, f64::max);
    let eta = if hi > 0.0 { lo / hi } else { 0.0 };
    MembershipProfile { omega_mixed: mixed as f64 / n, omega_pure: pure as f64 / n, eta }
}

/// Fraction of entries that are exactly zero.
pub fn data_sparsity(responses: &ResponseMatrix) -> f64 {
    let r = responses.values();
    let zeros = r.iter().filter(|&&v| v == 0.0).count();
    zeros as f64 / r.len() as f64
}
