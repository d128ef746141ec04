//! Successive projection (SP) vertex hunting.
//!
//! Given rows `M = Pi * X` lying in a simplex, SP repeatedly takes the row
//! with the largest residual norm and projects every row onto the orthogonal
//! complement of that row. For separable inputs the `k` picks are one pure
//! row per vertex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, WgomError};

/// Relative slack under which two residual norms count as tied.
const TIE_TOLERANCE: f64 = 1e-12;
/// Residual norm (relative to the largest input row) treated as zero.
const ZERO_RESIDUAL: f64 = 1e-12;

/// Row indices chosen by SP, in selection order. Zero-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexIndexSet(Vec<usize>);

impl VertexIndexSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// The selected rows of `m`, stacked in selection order.
    pub fn select_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(self.0.iter())
    }
}

/// Runs SP for `k` steps over the rows of `rows`.
pub fn successive_projection(rows: &DMatrix<f64>, k: usize) -> Result<VertexIndexSet> {
    let (n, d) = rows.shape();
    if k == 0 || k > n.min(d) {
        return Err(WgomError::Dimension(format!(
            "cannot pick {k} vertices from {n} rows of dimension {d}"
        )));
    }

    let mut residual = rows.clone();
    let initial = max_row_norm(&residual);
    if !(initial > 0.0) {
        return Err(WgomError::DegenerateRank("all rows are zero".into()));
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut picked = Vec::with_capacity(k);
    for step in 0..k {
        let norms = row_norms(&residual);
        let mut best = 0;
        for i in 1..n {
            if norms[i] > norms[best] * (1.0 + TIE_TOLERANCE) {
                best = i;
            }
        }
        if norms[best] < ZERO_RESIDUAL * initial {
            return Err(WgomError::DegenerateRank(format!(
                "residual vanished after {step} of {k} vertex selections"
            )));
        }

        let mut q: DVector<f64> = residual.row(best).transpose();
        for b in &basis {
            let c = b.dot(&q);
            q.axpy(-c, b, 1.0);
        }
        q.normalize_mut();

        let coeffs = &residual * &q;
        residual.ger(-1.0, &coeffs, &q, 1.0);

        basis.push(q);
        picked.push(best);
    }
    Ok(VertexIndexSet(picked))
}

fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sq = vec![0.0; m.nrows()];
    for col in m.column_iter() {
        for (acc, v) in sq.iter_mut().zip(col.iter()) {
            *acc += v * v;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

fn max_row_norm(m: &DMatrix<f64>) -> f64 {
    row_norms(m).into_iter().fold(0.0, f64::max)
}
