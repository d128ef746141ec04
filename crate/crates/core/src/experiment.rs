//! Simulation geometries and the replicate/grid experiment harness.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WgomError};
use crate::estimation::{estimate, Method};
use crate::evaluation::{accuracy_rate, hamming_error, relative_error};
use crate::linalg::SvdOptions;
use crate::model::{DistributionSpec, ItemParams, MembershipMatrix, ModelSpec};
use crate::sampler::{discrete_mean_range, sample_response};
use crate::selection::{select_k, DEFAULT_K_MAX};

/// Stream of the seed's ChaCha generator used for `Pi` and `B`; the sampler
/// uses streams 0 and 1.
const PARAMETER_STREAM: u64 = 2;

/// How the rows after the pure block are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedRule {
    /// Every mixed row is `(1/K, ..., 1/K)`.
    #[default]
    Balanced,
    /// The first `K - 1` entries are independent `U(0, 1/K)`, the last entry
    /// takes the remainder.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub n_items: usize,
    pub n_classes: usize,
    /// Pure subjects per class, placed in class order at the top.
    pub pure_per_class: usize,
    pub rho: f64,
    pub distribution: DistributionSpec,
    /// Retention probability `p` of the missing-response mask.
    #[serde(default = "one")]
    pub sparsity: f64,
    #[serde(default)]
    pub mixed: MixedRule,
}

fn one() -> f64 {
    1.0
}

impl SimulationConfig {
    /// `K = 3`, `J = N/2` and `N/4` pure subjects per class.
    pub fn standard(n_subjects: usize, distribution: DistributionSpec, rho: f64, sparsity: f64) -> Self {
        Self {
            n_subjects,
            n_items: n_subjects / 2,
            n_classes: 3,
            pure_per_class: n_subjects / 4,
            rho,
            distribution,
            sparsity,
            mixed: MixedRule::Balanced,
        }
    }

    /// `N = 100K`, `J = 50K` and 80 pure subjects per class.
    pub fn varying_classes(n_classes: usize, distribution: DistributionSpec, rho: f64, sparsity: f64) -> Self {
        Self {
            n_subjects: 100 * n_classes,
            n_items: 50 * n_classes,
            n_classes,
            pure_per_class: 80,
            rho,
            distribution,
            sparsity,
            mixed: MixedRule::Balanced,
        }
    }

    /// `K = 3`, `N = 800`, `J = 400`, 200 pure subjects per class and random
    /// mixed rows, Bernoulli responses at `rho = 1`.
    pub fn simplex_illustration() -> Self {
        Self {
            n_subjects: 800,
            n_items: 400,
            n_classes: 3,
            pure_per_class: 200,
            rho: 1.0,
            distribution: DistributionSpec::Bernoulli,
            sparsity: 1.0,
            mixed: MixedRule::Random,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes;
        if k == 0 || self.pure_per_class == 0 {
            return Err(WgomError::InvalidInput("need at least one class and one pure subject per class".into()));
        }
        if self.pure_per_class * k > self.n_subjects {
            return Err(WgomError::InvalidInput(format!(
                "{k} classes of {} pure subjects exceed N = {}",
                self.pure_per_class, self.n_subjects
            )));
        }
        if self.n_items < k {
            return Err(WgomError::InvalidInput(format!("J = {} is smaller than K = {k}", self.n_items)));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(WgomError::InvalidInput(format!("rho = {} must be positive", self.rho)));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(WgomError::InvalidInput(format!("sparsity {} is outside (0, 1]", self.sparsity)));
        }
        self.distribution.validate()
    }

    fn membership<R: Rng>(&self, rng: &mut R) -> MembershipMatrix {
        let (n, k) = (self.n_subjects, self.n_classes);
        let pure = self.pure_per_class * k;
        let mut pi = DMatrix::zeros(n, k);
        for i in 0..pure {
            pi[(i, i / self.pure_per_class)] = 1.0;
        }
        let share = 1.0 / k as f64;
        for i in pure..n {
            match self.mixed {
                MixedRule::Balanced => pi.row_mut(i).fill(share),
                MixedRule::Random => {
                    let mut rest = 1.0;
                    for c in 0..k - 1 {
                        let v = rng.random::<f64>() * share;
                        pi[(i, c)] = v;
                        rest -= v;
                    }
                    pi[(i, k - 1)] = rest;
                }
            }
        }
        MembershipMatrix::new_unchecked(pi)
    }

    /// `B` in `(0, 1]`, or `[-1, 1]` when negative means are admissible.
    fn item_factors<R: Rng>(&self, rng: &mut R, lo: f64, hi: f64) -> DMatrix<f64> {
        // u in [0, 1) keeps draws in (lo, hi], away from a zero mean.
        DMatrix::from_fn(self.n_items, self.n_classes, |_, _| hi - (hi - lo) * rng.random::<f64>())
    }

    /// Draws `Pi` and `Theta = rho * B` from `seed`. Discrete responses have
    /// a bounded mean range, so their `Theta` is drawn uniformly over that
    /// range directly and `rho` is not used.
    pub fn build_spec(&self, seed: u64) -> Result<ModelSpec> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PARAMETER_STREAM);
        let membership = self.membership(&mut rng);
        let items = match &self.distribution {
            DistributionSpec::Discrete { support, scheme } => {
                let range = discrete_mean_range(support, *scheme)?;
                ItemParams::new(self.item_factors(&mut rng, range.lo, range.hi))?
            }
            d => {
                let lo = if d.allows_negative_means() { -1.0 } else { 0.0 };
                ItemParams::from_factors(&self.item_factors(&mut rng, lo, 1.0), self.rho)?
            }
        };
        Ok(ModelSpec::new(membership, items, self.distribution.clone(), self.sparsity))
    }
}

/// Which parameter an experiment sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    VaryRho,
    VaryN,
    VaryK,
    VaryP,
}

impl Family {
    pub fn parameter_name(self) -> &'static str {
        match self {
            Family::VaryRho => "rho",
            Family::VaryN => "n",
            Family::VaryK => "k",
            Family::VaryP => "p",
        }
    }
}

fn default_n() -> usize {
    800
}
fn default_replicates() -> usize {
    20
}
fn default_k_max() -> usize {
    DEFAULT_K_MAX
}
fn default_method() -> Method {
    Method::Scgoma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub family: Family,
    pub distribution: DistributionSpec,
    /// Values of the swept parameter, one grid point each.
    pub grid: Vec<f64>,
    /// `N` when it is not the swept parameter.
    #[serde(default = "default_n")]
    pub n_subjects: usize,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "one")]
    pub sparsity: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Also run K selection and report the accuracy rate.
    #[serde(default)]
    pub estimate_k: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(WgomError::InvalidInput("experiment grid is empty".into()));
        }
        if self.replicates == 0 {
            return Err(WgomError::InvalidInput("replicates must be at least 1".into()));
        }
        if self.k_max == 0 {
            return Err(WgomError::InvalidInput("k_max must be at least 1".into()));
        }
        for &v in &self.grid {
            self.config_at(v)?.validate()?;
        }
        Ok(())
    }

    /// Simulation geometry at one grid value.
    pub fn config_at(&self, value: f64) -> Result<SimulationConfig> {
        let integral = |what: &str| -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(WgomError::InvalidInput(format!("{what} grid value {value} is not a positive integer")))
            }
        };
        let dist = self.distribution.clone();
        Ok(match self.family {
            Family::VaryRho => SimulationConfig::standard(self.n_subjects, dist, value, self.sparsity),
            Family::VaryN => SimulationConfig::standard(integral("N")?, dist, self.rho, self.sparsity),
            Family::VaryK => SimulationConfig::varying_classes(integral("K")?, dist, self.rho, self.sparsity),
            Family::VaryP => SimulationConfig::standard(self.n_subjects, dist, self.rho, value),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub hamming_error: f64,
    pub relative_error: f64,
    /// Wall-clock seconds spent in the estimator at the true `K`.
    pub runtime_seconds: f64,
    pub k_hat: Option<usize>,
}

/// Samples one matrix from `config`, estimates at the true `K` and scores
/// the estimate. With `k_max` set, also selects `K` over `1..=k_max`
/// (capped at `min(N, J)`).
pub fn run_replicate(
    config: &SimulationConfig,
    method: Method,
    seed: u64,
    k_max: Option<usize>,
) -> Result<ReplicateResult> {
    let spec = config.build_spec(seed)?;
    let (responses, _) = sample_response(&spec, seed)?;
    let start = Instant::now();
    let fit = estimate(method, &responses, config.n_classes, &SvdOptions::with_seed(seed))?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    let hamming = hamming_error(&fit.membership_hat, &spec.membership)?;
    let relative = relative_error(&fit.item_params_hat, spec.item_params.values())?;
    let k_hat = match k_max {
        Some(k_max) => {
            let cap = k_max.min(config.n_subjects.min(config.n_items));
            Some(select_k(&responses, method, cap, seed)?.k_hat)
        }
        None => None,
    };
    Ok(ReplicateResult { hamming_error: hamming, relative_error: relative, runtime_seconds, k_hat })
}

/// Seed of replicate `r`. Grid points share seeds, so neighbouring points
/// see common random numbers.
pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    seed ^ replicate as u64
}

/// Means over the replicates of one grid point. `error` is set, and the
/// numbers are NaN, when any replicate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPointResult {
    pub value: f64,
    pub mean_hamming_error: f64,
    pub mean_relative_error: f64,
    pub mean_runtime_seconds: f64,
    /// NaN when `K` was not estimated.
    pub accuracy_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridPointResult {
    fn failed(value: f64, error: String) -> Self {
        Self {
            value,
            mean_hamming_error: f64::NAN,
            mean_relative_error: f64::NAN,
            mean_runtime_seconds: f64::NAN,
            accuracy_rate: f64::NAN,
            error: Some(error),
        }
    }
}

pub fn run_grid_point(spec: &ExperimentSpec, value: f64) -> GridPointResult {
    let config = match spec.config_at(value) {
        Ok(c) => c,
        Err(e) => return GridPointResult::failed(value, e.to_string()),
    };
    let k_max = spec.estimate_k.then_some(spec.k_max);
    let outcomes: Vec<Result<ReplicateResult>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(&config, spec.method, replicate_seed(spec.seed, r), k_max))
        .collect();

    let mut reps = Vec::with_capacity(outcomes.len());
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => reps.push(rep),
            Err(e) => return GridPointResult::failed(value, format!("replicate {r}: {e}")),
        }
    }
    let n = reps.len() as f64;
    let mean = |f: fn(&ReplicateResult) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let accuracy = if spec.estimate_k {
        let k_hats: Vec<usize> = reps.iter().filter_map(|r| r.k_hat).collect();
        accuracy_rate(&k_hats, config.n_classes).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    GridPointResult {
        value,
        mean_hamming_error: mean(|r| r.hamming_error),
        mean_relative_error: mean(|r| r.relative_error),
        mean_runtime_seconds: mean(|r| r.runtime_seconds),
        accuracy_rate: accuracy,
        error: None,
    }
}

/// One result per grid value, in grid order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<GridPointResult>> {
    spec.validate()?;
    Ok(spec.grid.iter().map(|&v| run_grid_point(spec, v)).collect())
}
