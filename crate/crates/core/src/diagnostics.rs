//! Error metrics, the sharp ℓ₂ rate, local-convergence quantities and
//! covariance health checks.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::em_step;
use crate::linalg::{
    linf_norm_restricted_lower, linf_norm_upper, pseudoinverse, spectral_norm, trace_of,
    CenteredVector, PseudoinverseResult, DEFAULT_PINV_REL_TOL,
};
use crate::model::{covariance_scale, gram_matrix, sample_covariance, Instance};
use crate::rng::rng_from_seed;

/// Errors against whichever of `±θ*` is closer in ℓ₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub linf: f64,
    pub l2_squared: f64,
    pub sign_used: i8,
}

pub fn sign_resolved_errors(theta: &[f64], theta_star: &CenteredVector) -> Result<ErrorReport> {
    let ts = theta_star.as_slice();
    if theta.len() != ts.len() {
        return Err(Error::Dimension(format!(
            "estimate has length {}, ground truth has {}",
            theta.len(),
            ts.len()
        )));
    }
    let errs = |s: f64| {
        theta
            .iter()
            .zip(ts)
            .fold((0.0_f64, 0.0_f64), |(li, l2), (a, b)| {
                let e = a - s * b;
                (li.max(e.abs()), l2 + e * e)
            })
    };
    let (li_p, l2_p) = errs(1.0);
    let (li_m, l2_m) = errs(-1.0);
    Ok(if l2_m < l2_p {
        ErrorReport {
            linf: li_m,
            l2_squared: l2_m,
            sign_used: -1,
        }
    } else {
        ErrorReport {
            linf: li_p,
            l2_squared: l2_p,
            sign_used: 1,
        }
    })
}

/// `σ² (d − 1)/(2N) tr(Σ̂†)` given the pseudoinverse of `Σ̂`.
pub fn optimal_rate_with_cov(instance: &Instance, cov: &PseudoinverseResult) -> f64 {
    instance.sigma * instance.sigma * covariance_scale(instance) * trace_of(&cov.dagger)
}

/// Fixed-design linear-regression rate `σ² tr((Σ_r x_r x_rᵀ)†)`.
pub fn optimal_rate(instance: &Instance) -> Result<f64> {
    let cov = pseudoinverse(&sample_covariance(instance), DEFAULT_PINV_REL_TOL)?;
    Ok(optimal_rate_with_cov(instance, &cov))
}

/// The same rate computed directly from the unscaled Gram matrix.
pub fn optimal_rate_from_gram(instance: &Instance) -> Result<f64> {
    let g = pseudoinverse(&gram_matrix(instance), DEFAULT_PINV_REL_TOL)?;
    Ok(instance.sigma * instance.sigma * trace_of(&g.dagger))
}

/// `τ = C₂ σ √(d/N · ln N)`. Natural log; the base only rescales `C₂`.
pub fn theory_tau(sigma: f64, d: usize, n: usize, c2: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Parameter(format!("N must be at least 3, got {n}")));
    }
    if !(c2 > 0.0) {
        return Err(Error::Parameter(format!("C2 must be positive, got {c2}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let nf = n as f64;
    Ok(c2 * sigma * (d as f64 / nf * nf.ln()).sqrt())
}

/// `(τ, T)` with `T = max{0, ⌈log_{4/3}(‖θ⁰ − θ*‖∞ / 4τ)⌉}`. `T` is undefined
/// when `σ = 0`.
pub fn theory_tau_t(
    sigma: f64,
    d: usize,
    n: usize,
    theta0_linf_err: f64,
    c2: f64,
) -> Result<(f64, u32)> {
    let tau = theory_tau(sigma, d, n, c2)?;
    if tau == 0.0 {
        return Err(Error::Parameter(
            "tau is zero (sigma = 0); T is undefined".into(),
        ));
    }
    let ratio = theta0_linf_err / (4.0 * tau);
    let steps = if ratio <= 1.0 {
        0
    } else {
        (ratio.ln() / (4.0_f64 / 3.0).ln()).ceil() as u32
    };
    Ok((tau, steps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceFlags {
    /// `‖Σ̂‖_op ≤ 3`
    pub op_norm_le_3: bool,
    /// `‖Σ̂†‖_op ≤ 5`
    pub dagger_op_norm_le_5: bool,
    /// `tr(Σ̂†) ≥ (d − 1)/3`
    pub trace_dagger_ge_third: bool,
    pub rank_full: bool,
}

impl CovarianceFlags {
    pub fn all(&self) -> bool {
        self.op_norm_le_3
            && self.dagger_op_norm_le_5
            && self.trace_dagger_ge_third
            && self.rank_full
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub tau: f64,
    pub tau_over_c2: f64,
    /// `None` when no initial error was supplied or `σ = 0`.
    pub t_steps: Option<u32>,
    pub optimal_rate: f64,
    pub trace_dagger: f64,
    pub spectral_norm_cov: f64,
    pub spectral_norm_dagger: f64,
    pub linf_dagger_upper: f64,
    pub linf_dagger_lower: f64,
    pub rank: usize,
    pub c2: f64,
    pub flags: CovarianceFlags,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub c2: f64,
    pub theta0_linf_err: Option<f64>,
    pub lower_bound_samples: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            c2: 1.0,
            theta0_linf_err: None,
            lower_bound_samples: 200,
            seed: 0,
        }
    }
}

pub fn covariance_report(instance: &Instance, opts: &ReportOptions) -> Result<TheoryReport> {
    if !instance.is_pairwise() {
        return Err(Error::NotPairwise);
    }
    let cov_mat = sample_covariance(instance);
    let cov = pseudoinverse(&cov_mat, DEFAULT_PINV_REL_TOL)?;
    let d = instance.d;
    let spectral_norm_cov = spectral_norm(&cov_mat);
    let spectral_norm_dagger = spectral_norm(&cov.dagger);
    let trace_dagger = trace_of(&cov.dagger);
    let mut rng = rng_from_seed(opts.seed);
    let linf_dagger_lower =
        linf_norm_restricted_lower(&cov.dagger, opts.lower_bound_samples.max(1), &mut rng)?;

    let (tau, t_steps) = if instance.n >= 3 {
        let tau = theory_tau(instance.sigma, d, instance.n, opts.c2)?;
        let t = match opts.theta0_linf_err {
            Some(err) if tau > 0.0 => {
                Some(theory_tau_t(instance.sigma, d, instance.n, err, opts.c2)?.1)
            }
            _ => None,
        };
        (tau, t)
    } else {
        (f64::NAN, None)
    };

    Ok(TheoryReport {
        tau,
        tau_over_c2: tau / opts.c2,
        t_steps,
        optimal_rate: optimal_rate_with_cov(instance, &cov),
        trace_dagger,
        spectral_norm_cov,
        spectral_norm_dagger,
        linf_dagger_upper: linf_norm_upper(&cov.dagger),
        linf_dagger_lower,
        rank: cov.rank,
        c2: opts.c2,
        flags: CovarianceFlags {
            op_norm_le_3: spectral_norm_cov <= 3.0,
            dagger_op_norm_le_5: spectral_norm_dagger <= 5.0,
            trace_dagger_ge_third: trace_dagger >= (d as f64 - 1.0) / 3.0,
            rank_full: cov.connected,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationProfile {
    pub delta: f64,
    /// `sizes[i] = |{j ≠ i : |θ*_i − θ*_j| ≤ Δ}|`
    pub sizes: Vec<usize>,
}

pub fn separation_profile(theta_star: &CenteredVector, delta: f64) -> Result<SeparationProfile> {
    if !(delta >= 0.0) {
        return Err(Error::Parameter(format!("delta must be >= 0, got {delta}")));
    }
    let t = theta_star.as_slice();
    let sizes = t
        .iter()
        .enumerate()
        .map(|(i, a)| {
            t.iter()
                .enumerate()
                .filter(|&(j, b)| j != i && (a - b).abs() <= delta)
                .count()
        })
        .collect();
    Ok(SeparationProfile { delta, sizes })
}

/// `‖Q̂(θ) − θ‖∞`.
pub fn fixed_point_residual(
    instance: &Instance,
    theta: &DVector<f64>,
    cov: &PseudoinverseResult,
) -> Result<f64> {
    Ok((em_step(instance, theta, cov)? - theta).amax())
}

/// Ratios `c[t+1]/c[t]` over the last `window + 1` step changes.
pub fn tail_step_ratios(changes: &[f64], window: usize) -> Vec<f64> {
    let start = changes.len().saturating_sub(window + 1);
    changes[start..].windows(2).map(|w| w[1] / w[0]).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample mean and variance of `X tanh(μX/σ²)` for `X ~ N(μ, σ²)`.
pub fn gauss_tanh_moments<R: Rng + ?Sized>(
    mu: f64,
    sigma: f64,
    n: usize,
    rng: &mut R,
) -> (f64, f64) {
    let inv_var = 1.0 / (sigma * sigma);
    let (mut m, mut m2) = (0.0_f64, 0.0_f64);
    // Welford
    for k in 1..=n {
        let x = mu + sigma * rng.sample::<f64, _>(StandardNormal);
        let v = x * (mu * x * inv_var).tanh();
        let delta = v - m;
        m += delta / k as f64;
        m2 += delta * (v - m);
    }
    (m, if n > 1 { m2 / (n - 1) as f64 } else { 0.0 })
}
