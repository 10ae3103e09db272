//! Expectation-maximization for the symmetric mixture of linear regressions
//! `y_r = z_r ⟨x_r, θ*⟩ + ε_r` with pairwise-comparison covariates
//! `x_r = e_i − e_j`.
//!
//! - [`linalg`]: centering, pseudoinverse and norms on the sum-zero hyperplane.
//! - [`model`]: synthetic instances, ground truths and initializations.
//! - [`estimators`]: EM, Easy-EM, alternating minimization and the spectral
//!   (classical MDS) initializer.
//! - [`diagnostics`]: sign-resolved errors, the optimal ℓ₂ rate and
//!   covariance health checks.
//! - [`experiments`]: seeded Monte-Carlo sweeps and CSV/JSON output.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod rng;

pub use diagnostics::{
    covariance_report, optimal_rate, separation_profile, sign_resolved_errors, theory_tau_t,
    ErrorReport, ReportOptions, SeparationProfile, TheoryReport,
};
pub use error::{Error, Result};
pub use estimators::{
    am_step, easy_em_step, em_step, run, spectral_init, EstimatorKind, IterationConfig,
    IterationTrace, SpectralResult,
};
pub use experiments::{
    identifiability_demo, run_init_sweep, run_noise_sweep, run_sample_sweep, write_rows,
    IdentifiabilityDemo, OutputFormat, SweepConfig, SweepEstimator, SweepKind, SweepRow,
};
pub use linalg::{
    project_to_h, pseudoinverse, CenteredVector, PseudoinverseResult, SymmetricMatrix,
};
pub use model::{generate, linear_theta_star, random_init, DesignKind, GroundTruthSpec, Instance};
