//! Weighted grade-of-membership (WGoM) modelling.
//!
//! An `N x J` response matrix `R` is modelled as independent draws with
//! expectation `R0 = Pi * Theta'`, where `Pi` is a row-stochastic `N x K`
//! membership matrix and `Theta` a rank-`K` item parameter matrix. The
//! crate covers the whole loop:
//!
//! * [`sampler`] draws `R` from a [`ModelSpec`] under any of the supported
//!   response distributions, with an optional missing-response mask.
//! * [`estimation`] recovers `Pi` and `Theta` with the spectral SCGoMA
//!   estimator or the SVD-free RMSP baseline.
//! * [`selection`] scores memberships by fuzzy weighted modularity and picks
//!   the number of classes that maximises it.
//! * [`evaluation`] provides permutation-aligned error metrics and
//!   membership profiles.
//! * [`experiment`] runs seeded Monte-Carlo grids over those pieces.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod selection;
pub mod vertex;

pub use error::{Result, WgomError};
pub use estimation::{ideal_rmsp, ideal_scgoma, rmsp, scgoma, EstimationResult, Method};
pub use evaluation::{
    accuracy_rate, data_sparsity, hamming_error, profile_memberships, relative_error,
    AlignmentStrategy, MembershipProfile, ProfileThresholds,
};
pub use experiment::{run_experiment, ExperimentSpec, Family, GridPointResult, SimulationConfig};
pub use linalg::{solve_small_inverse, top_k_svd, SvdOptions, TruncatedSvd};
pub use model::{
    validate_model_spec, DiscreteScheme, DistributionSpec, ItemParams, MembershipMatrix,
    ModelSpec, ResponseMatrix, SampleDiagnostics, Violation,
};
pub use sampler::{construct_discrete, expected_responses, sample_response};
pub use selection::{fuzzy_weighted_modularity, select_k, CurvePoint, FuzzyModularity, KSelection};
pub use vertex::{successive_projection, VertexIndexSet};

pub use nalgebra::DMatrix;
