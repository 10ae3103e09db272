//! EM, Easy-EM and alternating-minimization updates, the iteration runner, and
//! the classical-MDS spectral initializer.
//!
//! All three updates share the form `(d − 1)/(2N) Σ_r w(y_r ⟨x_r, θ⟩) y_r x_r`:
//! Easy-EM uses `w(a) = tanh(a/σ²)`, AM uses the three-valued `sign(a)`, and
//! EM/AM additionally apply `Σ̂†`.

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    project_to_h, pseudoinverse, sorted_eigen, CenteredVector, PseudoinverseResult,
    SymmetricMatrix, DEFAULT_PINV_REL_TOL,
};
use crate::model::{covariance_scale, sample_covariance, Covariates, Instance};

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

/// `tanh` is ±1 to double precision beyond this magnitude.
const TANH_CLAMP: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Em,
    EasyEm,
    Am,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationConfig {
    pub max_steps: usize,
    /// Stop once the ℓ∞ change between successive iterates is at most this.
    pub step_tol: f64,
    pub sigma_floor: f64,
    /// Keep every k-th iterate in the trace; 0 keeps only the final one.
    pub record_every: usize,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            max_steps: 100,
            step_tol: 1e-10,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub kind: EstimatorKind,
    /// `(step index, iterate)`; index 0 is the initialization.
    pub iterates: Vec<(usize, Vec<f64>)>,
    pub step_linf_changes: Vec<f64>,
    #[serde(rename = "final")]
    pub final_theta: Vec<f64>,
    pub steps_taken: usize,
    pub converged: bool,
}

impl IterationTrace {
    /// Copy keeping only iterates whose step index is a multiple of `k`
    /// (plus the final one).
    pub fn thinned(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.iterates
            .retain(|(t, _)| (k > 0 && t % k == 0) || *t == self.steps_taken);
        out
    }

    pub fn final_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.final_theta)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: path.to_path_buf(),
            source,
        })?;
        fs::write(path, text).map_err(|source| Error::Io {
            context: path.to_path_buf(),
            source,
        })
    }
}

fn check_dim(instance: &Instance, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != instance.d {
        return Err(Error::Dimension(format!(
            "theta has length {}, instance has d = {}",
            theta.len(),
            instance.d
        )));
    }
    Ok(())
}

/// `(d − 1)/(2N) Σ_r w(y_r ⟨x_r, θ⟩) y_r x_r`.
fn weighted_response_sum<F>(instance: &Instance, theta: &DVector<f64>, weight: F) -> DVector<f64>
where
    F: Fn(f64) -> f64,
{
    let d = instance.d;
    let mut acc = DVector::<f64>::zeros(d);
    match &instance.covariates {
        Covariates::Pairs(pairs) => {
            for (&(i, j), &y) in pairs.iter().zip(&instance.responses) {
                let c = weight(y * (theta[i] - theta[j])) * y;
                acc[i] += c;
                acc[j] -= c;
            }
        }
        Covariates::Dense(rows) => {
            for (x, &y) in rows.iter().zip(&instance.responses) {
                let proj: f64 = x.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
                let c = weight(y * proj) * y;
                for (a, xa) in acc.iter_mut().zip(x) {
                    *a += c * xa;
                }
            }
        }
    }
    acc * covariance_scale(instance)
}

/// Three-valued sign with `sign(0) = 0`.
pub fn sign0(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn clamped_tanh(a: f64) -> f64 {
    a.clamp(-TANH_CLAMP, TANH_CLAMP).tanh()
}

/// Easy-EM operator `Q̄(θ) = (d − 1)/(2N) Σ tanh(y_r ⟨x_r, θ⟩/σ²) y_r x_r`.
pub fn easy_em_step(instance: &Instance, theta: &DVector<f64>) -> Result<DVector<f64>> {
    easy_em_step_with_floor(instance, theta, DEFAULT_SIGMA_FLOOR)
}

fn easy_em_step_with_floor(
    instance: &Instance,
    theta: &DVector<f64>,
    floor: f64,
) -> Result<DVector<f64>> {
    check_dim(instance, theta)?;
    let sigma = instance.sigma;
    if sigma <= floor {
        return Err(Error::SigmaBelowFloor { sigma, floor });
    }
    let inv_var = 1.0 / (sigma * sigma);
    Ok(weighted_response_sum(instance, theta, |a| {
        clamped_tanh(a * inv_var)
    }))
}

/// EM operator `Q̂(θ) = Σ̂† Q̄(θ)`. `cov` must be the pseudoinverse of the
/// instance's sample covariance.
pub fn em_step(
    instance: &Instance,
    theta: &DVector<f64>,
    cov: &PseudoinverseResult,
) -> Result<DVector<f64>> {
    em_step_with_floor(instance, theta, cov, DEFAULT_SIGMA_FLOOR)
}

fn em_step_with_floor(
    instance: &Instance,
    theta: &DVector<f64>,
    cov: &PseudoinverseResult,
    floor: f64,
) -> Result<DVector<f64>> {
    let q = easy_em_step_with_floor(instance, theta, floor)?;
    Ok(cov.dagger.apply(&q))
}

/// Noiseless limit of EM: `(Σ x_r x_rᵀ)† Σ sign(y_r ⟨x_r, θ⟩) y_r x_r`.
pub fn am_step(
    instance: &Instance,
    theta: &DVector<f64>,
    cov: &PseudoinverseResult,
) -> Result<DVector<f64>> {
    check_dim(instance, theta)?;
    let numer = weighted_response_sum(instance, theta, sign0);
    Ok(cov.dagger.apply(&numer))
}

/// Pseudoinverse of the sample covariance with the default cutoff.
pub fn covariance_pseudoinverse(instance: &Instance) -> Result<PseudoinverseResult> {
    pseudoinverse(&sample_covariance(instance), DEFAULT_PINV_REL_TOL)
}

fn linf_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

pub fn run(
    instance: &Instance,
    theta0: &DVector<f64>,
    kind: EstimatorKind,
    config: &IterationConfig,
) -> Result<IterationTrace> {
    let cov = covariance_pseudoinverse(instance)?;
    run_with_cov(instance, theta0, kind, config, &cov)
}

/// [`run`] with a precomputed covariance pseudoinverse.
pub fn run_with_cov(
    instance: &Instance,
    theta0: &DVector<f64>,
    kind: EstimatorKind,
    config: &IterationConfig,
    cov: &PseudoinverseResult,
) -> Result<IterationTrace> {
    if config.max_steps == 0 {
        return Err(Error::Parameter("max_steps must be at least 1".into()));
    }
    if !(config.step_tol > 0.0) {
        return Err(Error::Parameter("step_tol must be positive".into()));
    }
    check_dim(instance, theta0)?;
    if kind != EstimatorKind::Am && instance.sigma <= config.sigma_floor {
        return Err(Error::SigmaBelowFloor {
            sigma: instance.sigma,
            floor: config.sigma_floor,
        });
    }
    if kind != EstimatorKind::EasyEm && instance.is_pairwise() && !cov.connected {
        warn!(
            "comparison graph is disconnected (rank {} < d - 1 = {}); estimates are only defined up to per-component shifts",
            cov.rank,
            instance.d - 1
        );
    }

    let keep = |t: usize| config.record_every > 0 && t.is_multiple_of(config.record_every);
    let mut iterates = Vec::new();
    if keep(0) {
        iterates.push((0, theta0.as_slice().to_vec()));
    }
    let mut changes = Vec::with_capacity(config.max_steps);
    let mut current = theta0.clone();
    let mut converged = false;
    for t in 1..=config.max_steps {
        let next = match kind {
            EstimatorKind::Em => em_step_with_floor(instance, &current, cov, config.sigma_floor)?,
            EstimatorKind::EasyEm => {
                easy_em_step_with_floor(instance, &current, config.sigma_floor)?
            }
            EstimatorKind::Am => am_step(instance, &current, cov)?,
        };
        let change = linf_diff(&next, &current);
        changes.push(change);
        current = next;
        if keep(t) {
            iterates.push((t, current.as_slice().to_vec()));
        }
        if change <= config.step_tol {
            converged = true;
            break;
        }
    }
    let steps_taken = changes.len();
    if iterates.last().map(|(t, _)| *t) != Some(steps_taken) {
        iterates.push((steps_taken, current.as_slice().to_vec()));
    }
    Ok(IterationTrace {
        kind,
        iterates,
        step_linf_changes: changes,
        final_theta: current.as_slice().to_vec(),
        steps_taken,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub theta_tilde: CenteredVector,
    pub lambda1: f64,
    /// Debiased squared-difference matrix `D`; zero diagonal, zero for unobserved pairs.
    pub distance_matrix: DMatrix<f64>,
    /// Magnitude of the most negative eigenvalue of `−½ J D J` (0 if PSD).
    pub gram_psd_defect: f64,
}

/// `D_ij = d(d − 1)/(2N) Σ_r (y_r² − σ²) 1{x_r = e_i − e_j}`.
pub fn distance_matrix(instance: &Instance) -> Result<DMatrix<f64>> {
    let Covariates::Pairs(pairs) = &instance.covariates else {
        return Err(Error::NotPairwise);
    };
    let d = instance.d;
    let scale = (d * (d - 1)) as f64 / (2.0 * instance.n as f64);
    let var = instance.sigma * instance.sigma;
    let mut dm = DMatrix::<f64>::zeros(d, d);
    for (&(i, j), &y) in pairs.iter().zip(&instance.responses) {
        dm[(i, j)] += y * y - var;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let v = dm[(i, j)] * scale;
            dm[(i, j)] = v;
            dm[(j, i)] = v;
        }
    }
    Ok(dm)
}

/// Classical MDS estimate `θ̃ = √λ₁ v₁` from the leading eigenpair of
/// `−½ J D J`. The sign of `v₁` makes its first nonzero coordinate positive.
/// A leading eigenvalue within rounding of zero counts as degenerate.
pub fn spectral_init(instance: &Instance) -> Result<SpectralResult> {
    let dm = distance_matrix(instance)?;
    let d = instance.d;
    let j = SymmetricMatrix::centering(d);
    let b = SymmetricMatrix::symmetrize(j.matrix() * &dm * j.matrix() * -0.5);
    let eig = sorted_eigen(&b);
    let lambda1 = eig.values[0];
    let gram_psd_defect = (-eig.values[d - 1]).max(0.0);
    let spread = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if !(lambda1 > 1e-12 * spread) {
        return Err(Error::SpectralDegenerate { lambda1 });
    }
    let mut v1: Vec<f64> = eig.vectors.column(0).iter().copied().collect();
    let tiny = 1e-12 * v1.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v1.iter().find(|x| x.abs() > tiny) {
        if *first < 0.0 {
            v1.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let root = lambda1.sqrt();
    let theta: Vec<f64> = v1.iter().map(|x| root * x).collect();
    Ok(SpectralResult {
        theta_tilde: project_to_h(&theta)?,
        lambda1,
        distance_matrix: dm,
        gram_psd_defect,
    })
}
