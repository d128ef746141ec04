//! Membership and item-parameter estimators.
//!
//! SCGoMA runs successive projection on the top-`k` left singular vectors of
//! `R`, inverts the simplex spanned by the chosen vertices, row-normalises
//! the clamped coordinates into memberships, and regresses the rank-`k`
//! reconstruction on them for the item parameters. RMSP does the same on the
//! raw rows of `R` with no SVD. The `ideal_*` variants take the noiseless
//! expectation `R0` and recover `(Pi, Theta)` exactly.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgomError};
use crate::linalg::{self, solve_small_inverse, SvdOptions, TruncatedSvd};
use crate::model::{MembershipMatrix, ResponseMatrix};
use crate::vertex::successive_projection;

/// `sigma_{k+1} / sigma_1` above this means `R0` is not rank `k`.
const IDEAL_RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Scgoma,
    Rmsp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Scgoma => "scgoma",
            Method::Rmsp => "rmsp",
        })
    }
}

impl FromStr for Method {
    type Err = WgomError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scgoma" => Ok(Method::Scgoma),
            "rmsp" => Ok(Method::Rmsp),
            other => Err(WgomError::InvalidInput(format!(
                "unknown method {other:?} (expected scgoma or rmsp)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub membership_hat: MembershipMatrix,
    /// `J x k`.
    pub item_params_hat: DMatrix<f64>,
    /// Zero-based subject indices picked as vertices, in selection order.
    pub pure_index_set: Vec<usize>,
    /// Top-`k` singular values of `R`; empty for RMSP, which takes no SVD.
    pub singular_values: Vec<f64>,
    /// Rows whose clamped simplex coordinates were all zero and were set to
    /// the uniform membership.
    pub zero_row_fallbacks: usize,
    /// Whether a vertex or Gram matrix needed the pseudo-inverse.
    pub pseudo_inverse_used: bool,
}

/// Nonnegative simplex coordinates and the vertex rows they were solved
/// against.
#[derive(Debug, Clone)]
pub struct SimplexRecovery {
    pub z: DMatrix<f64>,
    pub vertex_rows: DMatrix<f64>,
    pub pseudo_inverse: bool,
}

/// SCGoMA with default SVD options.
pub fn scgoma(responses: &ResponseMatrix, k: usize) -> Result<EstimationResult> {
    scgoma_with(responses, k, &SvdOptions::default())
}

pub fn scgoma_with(responses: &ResponseMatrix, k: usize, opts: &SvdOptions) -> Result<EstimationResult> {
    ensure_nonzero(responses)?;
    let svd = linalg::top_k_svd_with(responses.values(), k, opts)?;
    scgoma_from_svd(&svd)
}

/// SCGoMA steps 2-5 on a precomputed top-`k` SVD of `R`.
pub fn scgoma_from_svd(svd: &TruncatedSvd) -> Result<EstimationResult> {
    let u = svd.left();
    let vertices = successive_projection(u, svd.rank())?;
    // Z = U U(I,:)^{-1}
    let corner = vertices.select_rows(u);
    let simplex = recover_simplex(u.clone(), &corner, corner.clone())?;
    let (membership_hat, zero_row_fallbacks) = normalize_rows(&simplex.z)?;

    // R_hat' Pi = V Sigma (U' Pi)
    let pi = membership_hat.as_matrix();
    let rt_pi = svd.right() * scale_rows(&u.tr_mul(pi), svd.singular_values());
    let (item_params_hat, gram_pinv) = regress_items(rt_pi, pi)?;

    Ok(EstimationResult {
        membership_hat,
        item_params_hat,
        pure_index_set: vertices.into_vec(),
        singular_values: svd.singular_values().to_vec(),
        zero_row_fallbacks,
        pseudo_inverse_used: simplex.pseudo_inverse || gram_pinv,
    })
}

/// RMSP: successive projection on the raw rows of `R`.
pub fn rmsp(responses: &ResponseMatrix, k: usize) -> Result<EstimationResult> {
    ensure_nonzero(responses)?;
    let r = responses.values();
    let (n, j) = r.shape();
    if k == 0 || k > n.min(j) {
        return Err(WgomError::Dimension(format!(
            "k = {k} must lie in 1..={} for a {n}x{j} matrix",
            n.min(j)
        )));
    }
    rmsp_unchecked(r, k)
}

fn rmsp_unchecked(r: &DMatrix<f64>, k: usize) -> Result<EstimationResult> {
    let vertices = successive_projection(r, k)?;
    // Z = R R(I,:)' (R(I,:) R(I,:)')^{-1}
    let corner = vertices.select_rows(r);
    let system = &corner * corner.transpose();
    let simplex = recover_simplex(r * corner.transpose(), &system, corner)?;
    let (membership_hat, zero_row_fallbacks) = normalize_rows(&simplex.z)?;
    let pi = membership_hat.as_matrix();
    let (item_params_hat, gram_pinv) = regress_items(r.tr_mul(pi), pi)?;
    Ok(EstimationResult {
        membership_hat,
        item_params_hat,
        pure_index_set: vertices.into_vec(),
        singular_values: Vec::new(),
        zero_row_fallbacks,
        pseudo_inverse_used: simplex.pseudo_inverse || gram_pinv,
    })
}

/// Runs the named estimator.
pub fn estimate(
    method: Method,
    responses: &ResponseMatrix,
    k: usize,
    opts: &SvdOptions,
) -> Result<EstimationResult> {
    match method {
        Method::Scgoma => scgoma_with(responses, k, opts),
        Method::Rmsp => rmsp(responses, k),
    }
}

/// Exact recovery from the expectation matrix through its singular vectors.
pub fn ideal_scgoma(expected: &DMatrix<f64>, k: usize) -> Result<(MembershipMatrix, DMatrix<f64>)> {
    let svd = exact_rank_svd(expected, k)?;
    let est = scgoma_from_svd(&svd)?;
    Ok((est.membership_hat, est.item_params_hat))
}

/// Exact recovery from the expectation matrix through its own rows.
pub fn ideal_rmsp(expected: &DMatrix<f64>, k: usize) -> Result<(MembershipMatrix, DMatrix<f64>)> {
    exact_rank_svd(expected, k)?;
    let est = rmsp_unchecked(expected, k)?;
    Ok((est.membership_hat, est.item_params_hat))
}

/// Top-`k` SVD of a matrix required to have rank exactly `k`.
fn exact_rank_svd(m: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, j) = m.shape();
    if k == 0 || k > n.min(j) {
        return Err(WgomError::Dimension(format!(
            "k = {k} must lie in 1..={} for a {n}x{j} matrix",
            n.min(j)
        )));
    }
    let opts = SvdOptions::default();
    if k == n.min(j) {
        return linalg::top_k_svd_with(m, k, &opts);
    }
    let wide = linalg::leading_triplets(m, k + 1, &opts)?;
    let sv = wide.singular_values();
    if sv[k] > IDEAL_RANK_TOLERANCE * sv[0] {
        return Err(WgomError::RankMismatch(format!(
            "expected rank {k}, but sigma_{} = {:e} against sigma_1 = {:e}",
            k + 1,
            sv[k],
            sv[0]
        )));
    }
    wide.leading(k)
}

fn ensure_nonzero(responses: &ResponseMatrix) -> Result<()> {
    if responses.is_all_zero() {
        return Err(WgomError::DegenerateRank("response matrix is all zero".into()));
    }
    Ok(())
}

/// `Z = max(0, coords * system^{-1})`, with `system` the `k x k` matrix
/// built from the vertex rows.
fn recover_simplex(
    coords: DMatrix<f64>,
    system: &DMatrix<f64>,
    vertex_rows: DMatrix<f64>,
) -> Result<SimplexRecovery> {
    let inv = solve_small_inverse(system)?;
    let z = (coords * &inv.inverse).map(|v| v.max(0.0));
    Ok(SimplexRecovery { z, vertex_rows, pseudo_inverse: inv.pseudo_inverse })
}

/// Divides each row by its 1-norm; all-zero rows become uniform.
fn normalize_rows(z: &DMatrix<f64>) -> Result<(MembershipMatrix, usize)> {
    let (n, k) = z.shape();
    let mut out = z.clone();
    let mut fallbacks = 0;
    for i in 0..n {
        let norm: f64 = z.row(i).iter().sum();
        if norm > 0.0 && norm.is_finite() {
            out.row_mut(i).unscale_mut(norm);
        } else {
            out.row_mut(i).fill(1.0 / k as f64);
            fallbacks += 1;
        }
    }
    Ok((MembershipMatrix::new(out)?, fallbacks))
}

/// `Theta = (R' Pi) (Pi' Pi)^{-1}`.
fn regress_items(rt_pi: DMatrix<f64>, pi: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    let inv = solve_small_inverse(&pi.tr_mul(pi))?;
    Ok((rt_pi * inv.inverse, inv.pseudo_inverse))
}

fn scale_rows(m: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, w) in s.iter().enumerate() {
        out.row_mut(i).scale_mut(*w);
    }
    out
}
