//! Truncated SVD and small dense inverses.
//!
//! Matrices whose smaller side is at most [`SvdOptions::dense_limit`] get a
//! full Golub-Kahan SVD that is then truncated; larger ones use randomized
//! subspace iteration. Either way each left singular vector is sign-fixed so
//! that its largest-magnitude entry is nonnegative.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, WgomError};

/// `sigma_k / sigma_1` below this makes a top-k SVD degenerate.
pub const SVD_DEGENERACY: f64 = 1e-12;
/// Relative cutoff for switching [`solve_small_inverse`] to a pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Seed for the Gaussian test matrix of the randomized path.
    pub seed: u64,
    /// Largest `min(N, J)` handled by the dense path.
    pub dense_limit: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self { seed: 0x5eed_cafe, dense_limit: 512, oversampling: 10, power_iterations: 4 }
    }
}

impl SvdOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    /// Always take the randomized path.
    pub fn randomized(seed: u64) -> Self {
        Self { seed, dense_limit: 0, ..Self::default() }
    }
}

/// Leading `k` singular triplets: `M ~ left * diag(singulars) * right'`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    left: DMatrix<f64>,
    singulars: Vec<f64>,
    right: DMatrix<f64>,
}

impl TruncatedSvd {
    /// `N x k`, orthonormal columns.
    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// Nonincreasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.singulars
    }

    /// `J x k`, orthonormal columns.
    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    /// `left * diag(singulars) * right'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.scaled_left() * self.right.transpose()
    }

    /// `left * diag(singulars)`.
    pub fn scaled_left(&self) -> DMatrix<f64> {
        let mut us = self.left.clone();
        for (c, s) in self.singulars.iter().enumerate() {
            us.column_mut(c).scale_mut(*s);
        }
        us
    }

    /// The first `k` triplets, failing like [`top_k_svd`] when `sigma_k` is
    /// numerically zero.
    pub fn leading(&self, k: usize) -> Result<TruncatedSvd> {
        if k == 0 || k > self.rank() {
            return Err(WgomError::Dimension(format!(
                "cannot take {k} leading triplets of a rank-{} decomposition",
                self.rank()
            )));
        }
        check_degeneracy(&self.singulars[..k])?;
        Ok(TruncatedSvd {
            left: self.left.columns(0, k).into_owned(),
            singulars: self.singulars[..k].to_vec(),
            right: self.right.columns(0, k).into_owned(),
        })
    }
}

/// Top-`k` SVD with default options.
pub fn top_k_svd(matrix: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    top_k_svd_with(matrix, k, &SvdOptions::default())
}

pub fn top_k_svd_with(matrix: &DMatrix<f64>, k: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let svd = leading_triplets(matrix, k, opts)?;
    check_degeneracy(&svd.singulars)?;
    Ok(svd)
}

/// Top-`k` triplets without the degeneracy check; singular values may be 0.
pub(crate) fn leading_triplets(
    matrix: &DMatrix<f64>,
    k: usize,
    opts: &SvdOptions,
) -> Result<TruncatedSvd> {
    let (n, j) = matrix.shape();
    if k == 0 || k > n.min(j) {
        return Err(WgomError::Dimension(format!(
            "k = {k} must lie in 1..={} for a {n}x{j} matrix",
            n.min(j)
        )));
    }
    let mut svd = if n.min(j) <= opts.dense_limit {
        dense_triplets(matrix, k)
    } else {
        randomized_triplets(matrix, k, opts)
    };
    canonicalize_signs(&mut svd);
    Ok(svd)
}

fn check_degeneracy(singulars: &[f64]) -> Result<()> {
    let first = singulars[0];
    let last = singulars[singulars.len() - 1];
    if !(first > 0.0) || !(last >= SVD_DEGENERACY * first) {
        return Err(WgomError::DegenerateRank(format!(
            "sigma_{} = {last:e} is numerically zero relative to sigma_1 = {first:e}",
            singulars.len()
        )));
    }
    Ok(())
}

fn dense_triplets(matrix: &DMatrix<f64>, k: usize) -> TruncatedSvd {
    let svd = matrix.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    order.truncate(k);

    let left = DMatrix::from_fn(u.nrows(), k, |i, c| u[(i, order[c])]);
    let right = DMatrix::from_fn(vt.ncols(), k, |i, c| vt[(order[c], i)]);
    let singulars = order.iter().map(|&c| sv[c]).collect();
    TruncatedSvd { left, singulars, right }
}

/// Randomized range finder with power iterations (Halko, Martinsson & Tropp).
fn randomized_triplets(matrix: &DMatrix<f64>, k: usize, opts: &SvdOptions) -> TruncatedSvd {
    let (n, j) = matrix.shape();
    let width = (k + opts.oversampling).min(n.min(j));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DMatrix::from_fn(j, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormal_basis(matrix * omega);
    for _ in 0..opts.power_iterations {
        let z = orthonormal_basis(matrix.tr_mul(&q));
        q = orthonormal_basis(matrix * z);
    }

    let small = q.tr_mul(matrix);
    let inner = dense_triplets(&small, k);
    TruncatedSvd { left: q * inner.left, singulars: inner.singulars, right: inner.right }
}

fn orthonormal_basis(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Flip each pair `(u_c, v_c)` so the largest-magnitude entry of `u_c` is
/// nonnegative, ties going to the lowest row index.
fn canonicalize_signs(svd: &mut TruncatedSvd) {
    for c in 0..svd.left.ncols() {
        let col = svd.left.column(c);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            svd.left.column_mut(c).neg_mut();
            svd.right.column_mut(c).neg_mut();
        }
    }
}

/// Inverse of a small square matrix.
#[derive(Debug, Clone)]
pub struct SmallInverse {
    pub inverse: DMatrix<f64>,
    /// Set when the Moore-Penrose pseudo-inverse was returned instead.
    pub pseudo_inverse: bool,
}

/// Inverts a `K x K` matrix (`K <= 64`), falling back to the pseudo-inverse
/// when `sigma_min < 1e-10 * sigma_max`.
pub fn solve_small_inverse(matrix: &DMatrix<f64>) -> Result<SmallInverse> {
    let (r, c) = matrix.shape();
    if r != c || r == 0 || r > 64 {
        return Err(WgomError::Dimension(format!(
            "expected a square matrix of size 1..=64, got {r}x{c}"
        )));
    }
    let svd = matrix.clone().svd(true, true);
    let hi = svd.singular_values.max();
    let lo = svd.singular_values.min();
    if hi > 0.0 && lo >= PINV_CUTOFF * hi {
        if let Some(inverse) = matrix.clone().try_inverse() {
            return Ok(SmallInverse { inverse, pseudo_inverse: false });
        }
    }

    let cutoff = PINV_CUTOFF * hi;
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let inv_s = DVector::from_iterator(
        r,
        svd.singular_values.iter().map(|&s| if hi > 0.0 && s > cutoff { 1.0 / s } else { 0.0 }),
    );
    let mut v_scaled = vt.transpose();
    for (col, w) in inv_s.iter().enumerate() {
        v_scaled.column_mut(col).scale_mut(*w);
    }
    Ok(SmallInverse { inverse: v_scaled * u.transpose(), pseudo_inverse: true })
}
