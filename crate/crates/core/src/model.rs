//! Domain types shared by every stage: response matrices, memberships, item
//! parameters, distributions and the model specification tying them together.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgomError};
use crate::sampler;

/// Absolute tolerance on `|sum_k Pi(i,k) - 1|`.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Relative threshold below which `sigma_K` counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Pure-row tolerance for memberships produced in memory.
pub const PURE_TOLERANCE: f64 = 1e-12;
/// Pure-row tolerance for memberships read from user files.
pub const LOADED_PURE_TOLERANCE: f64 = 1e-6;

/// Observed `N x J` response matrix. Zero entries double as "no response".
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    values: DMatrix<f64>,
}

impl ResponseMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(WgomError::Dimension(format!(
                "response matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(WgomError::InvalidInput(format!(
                "response entry ({row}, {col}) is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Row-stochastic `N x K` membership matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    rows: DMatrix<f64>,
}

impl MembershipMatrix {
    /// Builds a membership matrix, rejecting negative entries and rows that
    /// do not sum to one.
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        let m = Self::new_unchecked(rows);
        if m.rows.nrows() == 0 || m.rows.ncols() == 0 {
            return Err(WgomError::Dimension(
                "membership matrix must have at least one row and one class".into(),
            ));
        }
        if let Some(v) = m.structural_violations().into_iter().next() {
            return Err(WgomError::InvalidMembership(v.to_string()));
        }
        Ok(m)
    }

    /// Wraps a matrix without checking stochasticity. Used to diagnose
    /// malformed inputs with [`validate_model_spec`].
    pub fn new_unchecked(rows: DMatrix<f64>) -> Self {
        Self { rows }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.rows.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.rows
    }

    /// Class of a pure row, if the row has an entry within `tol` of one.
    pub fn pure_class(&self, row: usize, tol: f64) -> Option<usize> {
        (0..self.n_classes()).find(|&k| (self.rows[(row, k)] - 1.0).abs() <= tol)
    }

    /// Classes that have no pure subject at tolerance `tol`.
    pub fn classes_without_pure_subject(&self, tol: f64) -> Vec<usize> {
        let mut seen = vec![false; self.n_classes()];
        for i in 0..self.n_subjects() {
            if let Some(k) = self.pure_class(i, tol) {
                seen[k] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(k, _)| k)
            .collect()
    }

    fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for i in 0..self.rows.nrows() {
            let mut sum = 0.0;
            for k in 0..self.rows.ncols() {
                let v = self.rows[(i, k)];
                if !(v >= 0.0) {
                    out.push(Violation::NegativeMembership { row: i, class: k, value: v });
                }
                sum += v;
            }
            if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
                out.push(Violation::RowSum { row: i, sum });
            }
        }
        out
    }
}

/// `J x K` item parameter matrix `Theta = rho * B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemParams {
    values: DMatrix<f64>,
    scale: f64,
}

impl ItemParams {
    /// Wraps `values` with `scale = max |Theta(j,k)|`, so that the implied
    /// `B` has unit max-norm. Rejects non-finite or rank-deficient input.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let params = Self { values, scale };
        params.check()?;
        Ok(params)
    }

    /// `Theta = rho * B` with the nominal scale `rho`. `B` need not have unit
    /// max-norm (the simulation designs draw it uniformly).
    pub fn from_factors(b: &DMatrix<f64>, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(WgomError::InvalidInput(format!(
                "scale must be a positive finite real, got {rho}"
            )));
        }
        let params = Self { values: b * rho, scale: rho };
        params.check()?;
        Ok(params)
    }

    /// Skips the finiteness and rank checks.
    pub fn new_unchecked(values: DMatrix<f64>) -> Self {
        let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        Self { values, scale }
    }

    fn check(&self) -> Result<()> {
        if self.values.nrows() == 0 || self.values.ncols() == 0 {
            return Err(WgomError::Dimension("item parameters must be non-empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(WgomError::InvalidInput("item parameters must be finite".into()));
        }
        let (lo, hi) = self.extreme_singular_values();
        if !(lo > RANK_TOLERANCE * hi) {
            return Err(WgomError::DegenerateRank(format!(
                "item parameter matrix is rank deficient (sigma_K = {lo:e}, sigma_1 = {hi:e})"
            )));
        }
        Ok(())
    }

    /// `(sigma_K, sigma_1)`; `sigma_K` is zero when `J < K`.
    pub fn extreme_singular_values(&self) -> (f64, f64) {
        let sv = self.values.clone().svd(false, false).singular_values;
        let hi = sv.iter().cloned().fold(0.0, f64::max);
        let lo = if self.values.nrows() < self.values.ncols() {
            0.0
        } else {
            sv.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        (lo, hi)
    }

    pub fn n_items(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// The scaling parameter `rho`.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Which solution of the moment equations a discrete distribution uses.
///
/// Indices are zero-based positions in the sorted support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiscreteScheme {
    /// Two-point support; the unique solution.
    Binary,
    /// The probability at `free` is solved for and all other support points
    /// share one common probability. `free = 0` is the canonical scheme.
    EqualOthers { free: usize },
    /// Three-point support whose probability at `index` equals the mean; the
    /// remaining two probabilities follow from the moment equations.
    Pinned { index: usize },
}

impl Default for DiscreteScheme {
    fn default() -> Self {
        DiscreteScheme::EqualOthers { free: 0 }
    }
}

/// Response distribution `F`, parameterised by its mean `R0(i,j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Bernoulli,
    Binomial { trials: u32 },
    /// `Uniform(0, 2 * mean)`.
    Uniform,
    Normal { variance: f64 },
    /// `+1` with probability `(1 + mean) / 2`, `-1` otherwise.
    SignedBinary,
    Poisson,
    /// Exponential with rate `1 / mean`.
    Exponential,
    Discrete {
        support: Vec<f64>,
        #[serde(default)]
        scheme: DiscreteScheme,
    },
}

/// Interval of admissible means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRange {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl MeanRange {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: true }
    }

    fn positive() -> Self {
        Self { lo: 0.0, hi: f64::INFINITY, lo_closed: false, hi_closed: false }
    }

    pub fn contains(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    /// [`contains`](Self::contains) with a `1e-12` relative slack at closed
    /// endpoints, absorbing rounding in `Pi * Theta'`.
    pub fn admits(&self, x: f64) -> bool {
        if self.contains(x) {
            return true;
        }
        let near = |end: f64| end.is_finite() && (x - end).abs() <= 1e-12 * end.abs().max(1.0);
        x.is_finite() && ((self.lo_closed && near(self.lo)) || (self.hi_closed && near(self.hi)))
    }
}

impl fmt::Display for MeanRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        write!(f, "{open}{}, {}{close}", self.lo, self.hi)
    }
}

impl DistributionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::Bernoulli => "bernoulli",
            DistributionSpec::Binomial { .. } => "binomial",
            DistributionSpec::Uniform => "uniform",
            DistributionSpec::Normal { .. } => "normal",
            DistributionSpec::SignedBinary => "signed_binary",
            DistributionSpec::Poisson => "poisson",
            DistributionSpec::Exponential => "exponential",
            DistributionSpec::Discrete { .. } => "discrete",
        }
    }

    /// Checks the distribution's own parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::Binomial { trials } if *trials == 0 => Err(
                WgomError::InvalidInput("binomial needs at least one trial".into()),
            ),
            DistributionSpec::Normal { variance } if !(*variance > 0.0 && variance.is_finite()) => {
                Err(WgomError::InvalidInput(format!(
                    "normal variance must be positive, got {variance}"
                )))
            }
            DistributionSpec::Discrete { support, scheme } => {
                sampler::discrete_mean_range(support, *scheme).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Range of means the distribution can realise.
    ///
    /// `Uniform` admits a zero mean, which samples to exactly zero.
    pub fn mean_range(&self) -> Result<MeanRange> {
        Ok(match self {
            DistributionSpec::Bernoulli => MeanRange::closed(0.0, 1.0),
            DistributionSpec::Binomial { trials } => MeanRange::closed(0.0, f64::from(*trials)),
            DistributionSpec::Uniform => MeanRange { lo_closed: true, ..MeanRange::positive() },
            DistributionSpec::Normal { .. } => MeanRange {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
                lo_closed: false,
                hi_closed: false,
            },
            DistributionSpec::SignedBinary => MeanRange::closed(-1.0, 1.0),
            DistributionSpec::Poisson | DistributionSpec::Exponential => MeanRange::positive(),
            DistributionSpec::Discrete { support, scheme } => {
                sampler::discrete_mean_range(support, *scheme)?
            }
        })
    }

    /// Variance of a single draw with the given mean.
    pub fn variance(&self, mean: f64) -> f64 {
        match self {
            DistributionSpec::Bernoulli => mean * (1.0 - mean),
            DistributionSpec::Binomial { trials } => mean * (1.0 - mean / f64::from(*trials)),
            DistributionSpec::Uniform => mean * mean / 3.0,
            DistributionSpec::Normal { variance } => *variance,
            DistributionSpec::SignedBinary => 1.0 - mean * mean,
            DistributionSpec::Poisson => mean,
            DistributionSpec::Exponential => mean * mean,
            DistributionSpec::Discrete { support, scheme } => {
                match sampler::construct_discrete(support, *scheme, mean) {
                    Ok(p) => {
                        let second: f64 = p.iter().zip(support).map(|(p, a)| p * a * a).sum();
                        second - mean * mean
                    }
                    Err(_) => f64::NAN,
                }
            }
        }
    }

    /// Whether simulated item parameters may be negative.
    pub fn allows_negative_means(&self) -> bool {
        self.mean_range().map(|r| r.lo < 0.0).unwrap_or(false)
    }
}

/// Everything needed to sample a response matrix.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub membership: MembershipMatrix,
    pub item_params: ItemParams,
    pub distribution: DistributionSpec,
    /// Probability `p` that a response is retained by the missing-response mask.
    pub sparsity: f64,
}

impl ModelSpec {
    pub fn new(
        membership: MembershipMatrix,
        item_params: ItemParams,
        distribution: DistributionSpec,
        sparsity: f64,
    ) -> Self {
        Self { membership, item_params, distribution, sparsity }
    }

    pub fn n_subjects(&self) -> usize {
        self.membership.n_subjects()
    }

    pub fn n_items(&self) -> usize {
        self.item_params.n_items()
    }

    pub fn n_classes(&self) -> usize {
        self.membership.n_classes()
    }
}

/// Empirical noise diagnostics for one sampled matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    /// `max |R(i,j) - R0(i,j)|` before masking.
    pub tau_hat: f64,
    /// Largest per-item mean squared deviation `(R - R0)^2`, divided by `rho`.
    pub gamma_hat: f64,
}

/// A broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    RowSum { row: usize, sum: f64 },
    NegativeMembership { row: usize, class: usize, value: f64 },
    MissingPureSubject { class: usize },
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    NonFiniteItemParam,
    MeanOutOfRange { row: usize, col: usize, mean: f64 },
    Sparsity(f64),
    Distribution(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Violation::RowSum { row, sum } => write!(f, "row sum ≠ 1 at row {row} (sum = {sum})"),
            Violation::NegativeMembership { row, class, value } => {
                write!(f, "negative membership {value} at ({row}, {class})")
            }
            Violation::MissingPureSubject { class } => {
                write!(f, "no pure subject for class {}", class + 1)
            }
            Violation::RankDeficient { sigma_min, sigma_max } => write!(
                f,
                "item parameters are rank deficient (sigma_K = {sigma_min:e}, sigma_1 = {sigma_max:e})"
            ),
            Violation::NonFiniteItemParam => write!(f, "item parameters contain non-finite values"),
            Violation::MeanOutOfRange { row, col, mean } => {
                write!(f, "expected response {mean} at ({row}, {col}) is outside the admissible range")
            }
            Violation::Sparsity(p) => write!(f, "sparsity {p} is outside (0, 1]"),
            Violation::Distribution(msg) => write!(f, "invalid distribution: {msg}"),
        }
    }
}

/// Every violated invariant of `spec`, using the in-memory pure tolerance.
pub fn validate_model_spec(spec: &ModelSpec) -> Vec<Violation> {
    validate_model_spec_with(spec, PURE_TOLERANCE)
}

/// As [`validate_model_spec`] with an explicit pure-row tolerance.
pub fn validate_model_spec_with(spec: &ModelSpec, pure_tol: f64) -> Vec<Violation> {
    let mut out = spec.membership.structural_violations();
    for class in spec.membership.classes_without_pure_subject(pure_tol) {
        out.push(Violation::MissingPureSubject { class });
    }

    let theta = spec.item_params.values();
    if theta.iter().any(|v| !v.is_finite()) {
        out.push(Violation::NonFiniteItemParam);
    } else {
        let (lo, hi) = spec.item_params.extreme_singular_values();
        if !(lo > RANK_TOLERANCE * hi) {
            out.push(Violation::RankDeficient { sigma_min: lo, sigma_max: hi });
        }
    }

    if !(spec.sparsity > 0.0 && spec.sparsity <= 1.0) {
        out.push(Violation::Sparsity(spec.sparsity));
    }

    if spec.membership.n_classes() != spec.item_params.n_classes() {
        out.push(Violation::Dimension(format!(
            "membership has {} classes but item parameters have {}",
            spec.membership.n_classes(),
            spec.item_params.n_classes()
        )));
        return out;
    }

    match spec.distribution.validate().and_then(|_| spec.distribution.mean_range()) {
        Err(e) => out.push(Violation::Distribution(e.to_string())),
        Ok(range) => {
            let r0 = spec.membership.as_matrix() * theta.transpose();
            for j in 0..r0.ncols() {
                for i in 0..r0.nrows() {
                    let mean = r0[(i, j)];
                    if !range.admits(mean) {
                        out.push(Violation::MeanOutOfRange { row: i, col: j, mean });
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(WgomError::Dimension(format!(
            "row {i} has {} entries, expected {d}",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}
