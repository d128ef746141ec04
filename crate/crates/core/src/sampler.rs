//! Drawing response matrices from a [`ModelSpec`].
//!
//! Responses are drawn in row-major order from one ChaCha stream; the
//! missing-response mask uses a second, independent stream of the same seed,
//! so changing the retention probability `p` leaves the unmasked draws
//! untouched.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Poisson, StandardNormal};

use crate::error::{Result, WgomError};
use crate::model::{DiscreteScheme, DistributionSpec, MeanRange, ModelSpec, ResponseMatrix, SampleDiagnostics};

/// Slack on probabilities and closed range endpoints.
const PROB_SLACK: f64 = 1e-12;

const RESPONSE_STREAM: u64 = 0;
const MASK_STREAM: u64 = 1;

/// `R0 = Pi * Theta'`.
pub fn expected_responses(spec: &ModelSpec) -> DMatrix<f64> {
    spec.membership.as_matrix() * spec.item_params.values().transpose()
}

/// Draws `R` with `E[R] = R0`, then zeroes each entry independently with
/// probability `1 - p`.
pub fn sample_response(spec: &ModelSpec, seed: u64) -> Result<(ResponseMatrix, SampleDiagnostics)> {
    if spec.membership.n_classes() != spec.item_params.n_classes() {
        return Err(WgomError::Dimension(format!(
            "membership has {} classes but item parameters have {}",
            spec.membership.n_classes(),
            spec.item_params.n_classes()
        )));
    }
    let p = spec.sparsity;
    if !(p > 0.0 && p <= 1.0) {
        return Err(WgomError::InvalidInput(format!("sparsity {p} is outside (0, 1]")));
    }
    spec.distribution.validate()?;
    let range = spec.distribution.mean_range()?;
    let r0 = expected_responses(spec);
    let (n, j) = r0.shape();

    for row in 0..n {
        for col in 0..j {
            let mean = r0[(row, col)];
            if !range.admits(mean) {
                return Err(WgomError::MeanOutOfRange {
                    row,
                    col,
                    mean,
                    range: range.to_string(),
                    distribution: spec.distribution.name().into(),
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RESPONSE_STREAM);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed);
    mask_rng.set_stream(MASK_STREAM);

    let mut values = DMatrix::zeros(n, j);
    let mut tau: f64 = 0.0;
    let mut col_sq = vec![0.0; j];
    for row in 0..n {
        for col in 0..j {
            let mean = r0[(row, col)];
            let x = draw(&spec.distribution, mean, &mut rng)?;
            let dev = x - mean;
            tau = tau.max(dev.abs());
            col_sq[col] += dev * dev;
            let keep = p >= 1.0 || mask_rng.random::<f64>() < p;
            values[(row, col)] = if keep { x } else { 0.0 };
        }
    }

    let gamma = col_sq.iter().map(|s| s / n as f64).fold(0.0, f64::max) / spec.item_params.scale();
    let diagnostics = SampleDiagnostics { tau_hat: tau, gamma_hat: gamma };
    Ok((ResponseMatrix::new(values)?, diagnostics))
}

/// One draw with the given mean. The mean must already be admissible.
pub fn draw<R: Rng + ?Sized>(dist: &DistributionSpec, mean: f64, rng: &mut R) -> Result<f64> {
    Ok(match dist {
        DistributionSpec::Bernoulli => bernoulli(rng, mean),
        DistributionSpec::Binomial { trials } => {
            let prob = (mean / f64::from(*trials)).clamp(0.0, 1.0);
            let b = Binomial::new(u64::from(*trials), prob)
                .map_err(|e| WgomError::InvalidInput(format!("binomial: {e}")))?;
            b.sample(rng) as f64
        }
        DistributionSpec::Uniform => {
            if mean <= 0.0 {
                0.0
            } else {
                2.0 * mean * rng.random::<f64>()
            }
        }
        DistributionSpec::Normal { variance } => {
            let z: f64 = StandardNormal.sample(rng);
            mean + variance.sqrt() * z
        }
        DistributionSpec::SignedBinary => {
            if bernoulli(rng, (1.0 + mean) / 2.0) == 1.0 {
                1.0
            } else {
                -1.0
            }
        }
        DistributionSpec::Poisson => Poisson::new(mean)
            .map_err(|e| WgomError::InvalidInput(format!("poisson: {e}")))?
            .sample(rng),
        DistributionSpec::Exponential => Exp::new(1.0 / mean)
            .map_err(|e| WgomError::InvalidInput(format!("exponential: {e}")))?
            .sample(rng),
        DistributionSpec::Discrete { support, scheme } => {
            let probs = construct_discrete(support, *scheme, mean)?;
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut value = support[support.len() - 1];
            for (p, a) in probs.iter().zip(support) {
                acc += p;
                if u < acc {
                    value = *a;
                    break;
                }
            }
            value
        }
    })
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, prob: f64) -> f64 {
    if rng.random::<f64>() < prob {
        1.0
    } else {
        0.0
    }
}

/// Probability vector over `support` with the requested mean.
///
/// * Two-point supports have the unique solution
///   `p1 = (a2 - mean) / (a2 - a1)`.
/// * [`DiscreteScheme::EqualOthers`] gives every point except `free` the same
///   probability `y = (mean - a_free) / (sum(a) - Q * a_free)`.
/// * [`DiscreteScheme::Pinned`] (three points) sets the probability at
///   `index` to the mean itself and solves for the other two.
///
/// The last solved component is `1 - sum(others)`.
pub fn construct_discrete(support: &[f64], scheme: DiscreteScheme, mean: f64) -> Result<Vec<f64>> {
    let range = discrete_mean_range(support, scheme)?;
    if !range.admits(mean) {
        return Err(WgomError::InvalidInput(format!(
            "mean {mean} is outside the admissible range {range} of the discrete scheme"
        )));
    }
    let probs = raw_probabilities(support, scheme, mean);
    for (q, &p) in probs.iter().enumerate() {
        if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
            return Err(WgomError::InfeasibleScheme(format!(
                "probability {p} at support point {} for mean {mean}",
                support[q]
            )));
        }
    }
    Ok(probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
}

/// Solves the two moment equations without range checks. Every component is
/// affine in `mean`.
fn raw_probabilities(support: &[f64], scheme: DiscreteScheme, mean: f64) -> Vec<f64> {
    let q = support.len();
    if q == 2 {
        let p1 = (support[1] - mean) / (support[1] - support[0]);
        return vec![p1, 1.0 - p1];
    }
    match scheme {
        DiscreteScheme::Binary => unreachable!("binary scheme requires two support points"),
        DiscreteScheme::EqualOthers { free } => {
            let total: f64 = support.iter().sum();
            let a_free = support[free];
            let y = (mean - a_free) / (total - q as f64 * a_free);
            let mut probs = vec![y; q];
            let others: f64 = (0..q).filter(|&i| i != free).map(|_| y).sum();
            probs[free] = 1.0 - others;
            probs
        }
        DiscreteScheme::Pinned { index } => {
            let (a, b) = match index {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let pb = (mean - support[index] * mean - support[a] * (1.0 - mean))
                / (support[b] - support[a]);
            let mut probs = vec![0.0; 3];
            probs[index] = mean;
            probs[b] = pb;
            probs[a] = 1.0 - mean - pb;
            probs
        }
    }
}

/// Interval of means a scheme can realise with valid probabilities.
pub fn discrete_mean_range(support: &[f64], scheme: DiscreteScheme) -> Result<MeanRange> {
    check_support(support)?;
    let q = support.len();
    match scheme {
        DiscreteScheme::Binary if q != 2 => {
            return Err(WgomError::InfeasibleScheme(format!(
                "binary scheme needs two support points, got {q}"
            )))
        }
        DiscreteScheme::EqualOthers { free } if free >= q => {
            return Err(WgomError::InfeasibleScheme(format!(
                "free index {free} outside a support of {q} points"
            )))
        }
        DiscreteScheme::Pinned { index } if q != 3 || index >= 3 => {
            return Err(WgomError::InfeasibleScheme(format!(
                "pinned scheme needs three support points and an index below 3, got {q} points and index {index}"
            )))
        }
        _ => {}
    }
    if q == 2 {
        return Ok(MeanRange::closed(support[0], support[1]));
    }

    if let DiscreteScheme::EqualOthers { free } = scheme {
        let a_free = support[free];
        let others = (support.iter().sum::<f64>() - a_free) / (q - 1) as f64;
        let scale = support.iter().fold(1.0_f64, |m, a| m.max(a.abs()));
        if (others - a_free).abs() <= PROB_SLACK * scale {
            return Err(WgomError::InfeasibleScheme(format!(
                "support point {a_free} equals the mean of the others; the scheme is singular"
            )));
        }
        return Ok(MeanRange::closed(a_free.min(others), a_free.max(others)));
    }

    let at0 = raw_probabilities(support, scheme, 0.0);
    let at1 = raw_probabilities(support, scheme, 1.0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (c0, p1) in at0.iter().zip(&at1) {
        let slope = p1 - c0;
        if slope == 0.0 {
            if !(0.0..=1.0).contains(c0) {
                lo = f64::INFINITY;
            }
            continue;
        }
        let (x, y) = (-c0 / slope, (1.0 - c0) / slope);
        lo = lo.max(x.min(y));
        hi = hi.min(x.max(y));
    }
    if !(lo <= hi) {
        return Err(WgomError::InfeasibleScheme(
            "no mean yields valid probabilities under this scheme".into(),
        ));
    }
    Ok(MeanRange::closed(lo, hi))
}

fn check_support(support: &[f64]) -> Result<()> {
    if support.len() < 2 {
        return Err(WgomError::InvalidInput("discrete support needs at least two points".into()));
    }
    if support.iter().any(|a| !a.is_finite()) {
        return Err(WgomError::InvalidInput("discrete support must be finite".into()));
    }
    if support.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(WgomError::InvalidInput(
            "discrete support must be sorted and distinct".into(),
        ));
    }
    Ok(())
}
