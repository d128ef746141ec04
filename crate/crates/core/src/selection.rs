//! Fuzzy weighted modularity and choice of the number of classes.
//!
//! `A = R R'` is split into `A+ = max(0, A)` and `A- = max(0, -A)`. With
//! degrees `d+-` and half-weights `m+-`, each signed part scores a membership
//! matrix `P` as
//!
//! ```text
//! Q+- = [ tr(P' A+- P) - |P' d+-|^2 / 2m+- ] / 2m+-      (0 when m+- = 0)
//! Q   = (m+ Q+ - m- Q-) / (m+ + m-)
//! ```
//!
//! which equals the pairwise sum over `(A(i,j) - d(i) d(j) / 2m) <P_i, P_j>`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgomError};
use crate::estimation::{rmsp, scgoma_from_svd, Method};
use crate::linalg::{self, SvdOptions};
use crate::model::{MembershipMatrix, ResponseMatrix};

/// Default upper end of the candidate range `1..=k_max`.
pub const DEFAULT_K_MAX: usize = 15;
/// Above this many subjects a single-signed `A` is never materialised.
pub const DENSE_MODULARITY_LIMIT: usize = 4096;

/// Materialised sign split of `A = R R'`.
#[derive(Debug, Clone)]
pub struct ModularityDecomposition {
    pub a_plus: DMatrix<f64>,
    pub a_minus: DMatrix<f64>,
    pub d_plus: DVector<f64>,
    pub d_minus: DVector<f64>,
    pub m_plus: f64,
    pub m_minus: f64,
}

impl ModularityDecomposition {
    pub fn new(responses: &ResponseMatrix) -> Self {
        let r = responses.values();
        let mut a = r * r.transpose();
        let n = a.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                a[(i, j)] = a[(j, i)];
            }
        }
        let a_plus = a.map(|v| v.max(0.0));
        let a_minus = a.map(|v| (-v).max(0.0));
        let d_plus = degrees(&a_plus);
        let d_minus = degrees(&a_minus);
        let m_plus = sum_in_order(d_plus.as_slice()) / 2.0;
        let m_minus = sum_in_order(d_minus.as_slice()) / 2.0;
        Self { a_plus, a_minus, d_plus, d_minus, m_plus, m_minus }
    }

    pub fn modularity(&self, membership: &MembershipMatrix) -> Result<f64> {
        check_rows(self.a_plus.nrows(), membership)?;
        let pi = membership.as_matrix();
        let q_plus = dense_part(&self.a_plus, &self.d_plus, 2.0 * self.m_plus, pi);
        let q_minus = dense_part(&self.a_minus, &self.d_minus, 2.0 * self.m_minus, pi);
        Ok(combine(self.m_plus, q_plus, self.m_minus, q_minus))
    }
}

/// Row sums, each accumulated in column order. `A` is symmetric, so row `i`
/// is read as column `i`.
fn degrees(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.ncols(), a.column_iter().map(|c| sum_in_order(c.as_slice())))
}

fn sum_in_order(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| acc + x)
}

// The accumulation order mirrors `degrees` so that the all-ones membership
// scores exactly zero.
fn dense_part(a: &DMatrix<f64>, d: &DVector<f64>, two_m: f64, pi: &DMatrix<f64>) -> f64 {
    if !(two_m > 0.0) {
        return 0.0;
    }
    let n = a.nrows();
    let (mut trace, mut null) = (0.0, 0.0);
    for k in 0..pi.ncols() {
        let p = pi.column(k);
        let (mut t, mut s) = (0.0, 0.0);
        for i in 0..n {
            let row = a.column(i);
            let mut w = 0.0;
            for j in 0..n {
                w += row[j] * p[j];
            }
            t += p[i] * w;
            s += p[i] * d[i];
        }
        trace += t;
        null += s * (s / two_m);
    }
    (trace - null) / two_m
}

fn combine(m_plus: f64, q_plus: f64, m_minus: f64, q_minus: f64) -> f64 {
    let total = m_plus + m_minus;
    if total > 0.0 {
        (m_plus * q_plus - m_minus * q_minus) / total
    } else {
        0.0
    }
}

fn check_rows(n: usize, membership: &MembershipMatrix) -> Result<()> {
    if membership.n_subjects() != n {
        return Err(WgomError::Dimension(format!(
            "membership has {} rows but the response matrix has {n} subjects",
            membership.n_subjects()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Engine {
    Dense(ModularityDecomposition),
    /// `A = R R'` has one sign; scores via `R' P` without forming `A`.
    Factored { r: DMatrix<f64>, d: DVector<f64>, m: f64 },
}

/// Reusable modularity scorer for one response matrix.
#[derive(Debug, Clone)]
pub struct FuzzyModularity {
    engine: Engine,
}

impl FuzzyModularity {
    pub fn new(responses: &ResponseMatrix) -> Self {
        Self::with_dense_limit(responses, DENSE_MODULARITY_LIMIT)
    }

    /// Uses the factored path when `N > dense_limit` and every entry of `R`
    /// has the same sign; otherwise materialises `A`.
    pub fn with_dense_limit(responses: &ResponseMatrix, dense_limit: usize) -> Self {
        let r = responses.values();
        let single_sign = r.iter().all(|&v| v >= 0.0) || r.iter().all(|&v| v <= 0.0);
        if r.nrows() > dense_limit && single_sign {
            // R >= 0 or R <= 0 both give A >= 0.
            let sign = if r.iter().any(|&v| v > 0.0) { 1.0 } else { -1.0 };
            let r = r * sign;
            let col_sums = r.tr_mul(&DVector::from_element(r.nrows(), 1.0));
            let d = &r * col_sums;
            let m = sum_in_order(d.as_slice()) / 2.0;
            Self { engine: Engine::Factored { r, d, m } }
        } else {
            Self { engine: Engine::Dense(ModularityDecomposition::new(responses)) }
        }
    }

    pub fn is_factored(&self) -> bool {
        matches!(self.engine, Engine::Factored { .. })
    }

    pub fn score(&self, membership: &MembershipMatrix) -> Result<f64> {
        match &self.engine {
            Engine::Dense(dec) => dec.modularity(membership),
            Engine::Factored { r, d, m, .. } => {
                check_rows(r.nrows(), membership)?;
                let two_m = 2.0 * m;
                if !(two_m > 0.0) {
                    return Ok(0.0);
                }
                let pi = membership.as_matrix();
                let g = r.tr_mul(pi);
                let trace = g.norm_squared();
                let s = pi.tr_mul(d);
                let null: f64 = s.iter().map(|v| v * (v / two_m)).sum();
                Ok((trace - null) / two_m)
            }
        }
    }
}

/// Fuzzy weighted modularity of `membership` on `A = R R'`.
pub fn fuzzy_weighted_modularity(
    responses: &ResponseMatrix,
    membership: &MembershipMatrix,
) -> Result<f64> {
    check_rows(responses.n_subjects(), membership)?;
    FuzzyModularity::new(responses).score(membership)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    /// `None` when the estimator failed at this `k`.
    pub modularity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k_hat: usize,
    pub curve: Vec<CurvePoint>,
}

/// Fits `method` for every `k` in `1..=k_max` and returns the `k` with the
/// largest modularity (smallest `k` on ties). Failures at individual `k` are
/// kept in the curve and skipped.
///
/// SCGoMA computes one top-`k_max` decomposition and truncates it for each
/// candidate.
pub fn select_k(
    responses: &ResponseMatrix,
    method: Method,
    k_max: usize,
    seed: u64,
) -> Result<KSelection> {
    let (n, j) = (responses.n_subjects(), responses.n_items());
    if k_max == 0 || k_max > n.min(j) {
        return Err(WgomError::Dimension(format!(
            "k_max = {k_max} must lie in 1..={} for a {n}x{j} matrix",
            n.min(j)
        )));
    }
    if responses.is_all_zero() {
        return Err(WgomError::DegenerateRank("response matrix is all zero".into()));
    }
    let scorer = FuzzyModularity::new(responses);

    let fit: Box<dyn Fn(usize) -> Result<MembershipMatrix> + Sync> = match method {
        Method::Scgoma => {
            let svd = linalg::leading_triplets(responses.values(), k_max, &SvdOptions::with_seed(seed))?;
            Box::new(move |k| Ok(scgoma_from_svd(&svd.leading(k)?)?.membership_hat))
        }
        Method::Rmsp => Box::new(|k| Ok(rmsp(responses, k)?.membership_hat)),
    };

    let curve: Vec<CurvePoint> = (1..=k_max)
        .into_par_iter()
        .map(|k| match fit(k).and_then(|m| scorer.score(&m)) {
            Ok(q) => CurvePoint { k, modularity: Some(q), error: None },
            Err(e) => CurvePoint { k, modularity: None, error: Some(e.to_string()) },
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for point in &curve {
        if let Some(q) = point.modularity {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((point.k, q));
            }
        }
    }
    let (k_hat, _) = best.ok_or_else(|| {
        WgomError::DegenerateRank("the estimator failed for every candidate k".into())
    })?;
    Ok(KSelection { k_hat, curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_scores_zero() {
        let r = ResponseMatrix::from_rows(&[
            vec![1.0, 0.0, 2.0],
            vec![0.5, 3.0, 0.0],
            vec![0.0, 1.0, 1.0],
            vec![2.0, 2.0, 0.1],
        ])
        .unwrap();
        let ones = MembershipMatrix::new(DMatrix::from_element(4, 1, 1.0)).unwrap();
        assert_eq!(fuzzy_weighted_modularity(&r, &ones).unwrap(), 0.0);
    }

    #[test]
    fn nonnegative_responses_have_no_negative_part() {
        let r = ResponseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let dec = ModularityDecomposition::new(&r);
        assert_eq!(dec.m_minus, 0.0);
        assert!(dec.a_minus.iter().all(|&v| v == 0.0));
        // A = [[1,0,1],[0,1,1],[1,1,2]], d = (2,2,4), m = 4
        assert_eq!(dec.m_plus, 4.0);
        assert_eq!(dec.d_plus.as_slice(), &[2.0, 2.0, 4.0]);
    }

    #[test]
    fn two_block_hard_partition() {
        // Two disconnected pairs: classical modularity of the split is 1/2.
        let r = ResponseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let pi = MembershipMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let q = fuzzy_weighted_modularity(&r, &pi).unwrap();
        assert!((q - 0.5).abs() < 1e-15, "{q}");
    }

    #[test]
    fn dimension_mismatch_errors() {
        let r = ResponseMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let pi = MembershipMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(fuzzy_weighted_modularity(&r, &pi), Err(WgomError::Dimension(_))));
    }

    #[test]
    fn constant_matrix_selects_one() {
        let r = ResponseMatrix::new(DMatrix::from_element(12, 8, 2.0)).unwrap();
        for method in [Method::Scgoma, Method::Rmsp] {
            let sel = select_k(&r, method, 5, 1).unwrap();
            assert_eq!(sel.k_hat, 1);
            assert_eq!(sel.curve[0].modularity, Some(0.0));
            for point in &sel.curve[1..] {
                assert!(point.modularity.is_none_or(|q| q.abs() < 1e-12), "{point:?}");
            }
        }
    }

    #[test]
    fn k_max_is_bounded() {
        let r = ResponseMatrix::new(DMatrix::from_element(3, 2, 1.0)).unwrap();
        assert!(select_k(&r, Method::Scgoma, 3, 0).is_err());
        assert!(select_k(&r, Method::Scgoma, 0, 0).is_err());
    }
}
