//! Synthetic data for the symmetric two-component mixture
//! `y_r = z_r · ⟨x_r, θ*⟩ + ε_r` under pairwise-comparison or Gaussian designs.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{project_to_h, CenteredVector, SymmetricMatrix};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// `x_r = e_i − e_j` with `(i, j)` uniform over unordered pairs, with replacement.
    PairwiseUniform,
    /// `x_r ~ N(0, (2/d) I)`.
    GaussianIsotropic,
    /// Deterministic test design: every pair once, `z_r = +1`, `ε_r = 0`.
    ExhaustivePairs,
}

impl DesignKind {
    pub fn is_pairwise(self) -> bool {
        !matches!(self, DesignKind::GaussianIsotropic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroundTruthSpec {
    /// `θ*_i = i/d − (d+1)/(2d)` for `i = 1..=d`.
    Linear(usize),
    Explicit(CenteredVector),
}

/// Covariates of an instance. Pair indices are zero-based with `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariates {
    Pairs(Vec<(usize, usize)>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub design: DesignKind,
    pub covariates: Covariates,
    pub responses: Vec<f64>,
    pub latent_signs: Vec<i8>,
    pub noise: Vec<f64>,
    pub theta_star: CenteredVector,
    pub seed: u64,
}

pub fn linear_theta_star(d: usize) -> Result<CenteredVector> {
    if d < 2 {
        return Err(Error::Dimension(format!("need d >= 2, got {d}")));
    }
    let df = d as f64;
    let offset = (df + 1.0) / (2.0 * df);
    let raw: Vec<f64> = (1..=d).map(|i| i as f64 / df - offset).collect();
    // The formula is exactly antisymmetric about the middle; centering only
    // removes rounding residue.
    project_to_h(&raw)
}

/// Membership in `Θ(β)`: nondecreasing entries and `|θ_i − θ_j| ≥ β (j − i)/d`.
///
/// A relative slack of `1e-12` absorbs rounding in vectors built from the
/// separation formula itself.
pub fn theta_in_class(theta: &CenteredVector, beta: f64) -> bool {
    let t = theta.as_slice();
    let d = t.len();
    let slack = 1e-12 * t.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    if t.windows(2).any(|w| w[1] < w[0]) {
        return false;
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let need = beta * (j - i) as f64 / d as f64;
            if (t[j] - t[i]) + slack < need {
                return false;
            }
        }
    }
    true
}

/// `(1 − η) θ* + η θ^R` where `θ^R` is a centered vector of i.i.d.
/// `Uniform[−0.5, 0.5]` entries.
pub fn random_init<R: Rng + ?Sized>(
    theta_star: &CenteredVector,
    eta: f64,
    rng: &mut R,
) -> Result<CenteredVector> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Parameter(format!(
            "eta must lie in [0, 1], got {eta}"
        )));
    }
    let raw: Vec<f64> = (0..theta_star.len())
        .map(|_| rng.random_range(-0.5..=0.5))
        .collect();
    let theta_r = project_to_h(&raw)?;
    let mixed: Vec<f64> = theta_star
        .as_slice()
        .iter()
        .zip(theta_r.as_slice())
        .map(|(s, r)| (1.0 - eta) * s + eta * r)
        .collect();
    project_to_h(&mixed)
}

/// All unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn all_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect()
}

/// `z · ⟨x, θ⟩ + ε` for each record.
pub fn responses_for(
    covariates: &Covariates,
    theta: &[f64],
    signs: &[i8],
    noise: &[f64],
) -> Vec<f64> {
    match covariates {
        Covariates::Pairs(pairs) => pairs
            .iter()
            .zip(signs)
            .zip(noise)
            .map(|((&(i, j), &z), &e)| f64::from(z) * (theta[i] - theta[j]) + e)
            .collect(),
        Covariates::Dense(rows) => rows
            .iter()
            .zip(signs)
            .zip(noise)
            .map(|((x, &z), &e)| f64::from(z) * dot(x, theta) + e)
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate(
    d: usize,
    n: usize,
    sigma: f64,
    spec: &GroundTruthSpec,
    design: DesignKind,
    seed: u64,
) -> Result<Instance> {
    if d < 2 {
        return Err(Error::Dimension(format!("need d >= 2, got {d}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let theta_star = match spec {
        GroundTruthSpec::Linear(k) if *k != d => {
            return Err(Error::Dimension(format!(
                "ground truth dimension {k} does not match d = {d}"
            )))
        }
        GroundTruthSpec::Linear(_) => linear_theta_star(d)?,
        GroundTruthSpec::Explicit(v) if v.len() != d => {
            return Err(Error::Dimension(format!(
                "ground truth dimension {} does not match d = {d}",
                v.len()
            )))
        }
        GroundTruthSpec::Explicit(v) => v.clone(),
    };
    if n == 0 && design != DesignKind::ExhaustivePairs {
        return Err(Error::Parameter("N must be at least 1".into()));
    }

    let mut rng = rng_from_seed(seed);
    let (covariates, signs, noise) = match design {
        DesignKind::ExhaustivePairs => {
            let pairs = all_pairs(d);
            let m = pairs.len();
            (Covariates::Pairs(pairs), vec![1_i8; m], vec![0.0; m])
        }
        DesignKind::PairwiseUniform => {
            let table = all_pairs(d);
            let mut pairs = Vec::with_capacity(n);
            let mut signs = Vec::with_capacity(n);
            let mut noise = Vec::with_capacity(n);
            for _ in 0..n {
                pairs.push(table[rng.random_range(0..table.len())]);
                signs.push(if rng.random::<bool>() { 1 } else { -1 });
                noise.push(sigma * rng.sample::<f64, _>(StandardNormal));
            }
            (Covariates::Pairs(pairs), signs, noise)
        }
        DesignKind::GaussianIsotropic => {
            let sd = (2.0 / d as f64).sqrt();
            let mut rows = Vec::with_capacity(n);
            let mut signs = Vec::with_capacity(n);
            let mut noise = Vec::with_capacity(n);
            for _ in 0..n {
                rows.push(
                    (0..d)
                        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                        .collect::<Vec<_>>(),
                );
                signs.push(if rng.random::<bool>() { 1 } else { -1 });
                noise.push(sigma * rng.sample::<f64, _>(StandardNormal));
            }
            (Covariates::Dense(rows), signs, noise)
        }
    };
    let responses = responses_for(&covariates, theta_star.as_slice(), &signs, &noise);
    Ok(Instance {
        d,
        n: responses.len(),
        sigma,
        design,
        covariates,
        responses,
        latent_signs: signs,
        noise,
        theta_star,
        seed,
    })
}

/// `Σ_r x_r x_rᵀ`. For pairwise designs this is the comparison-graph Laplacian.
pub fn gram_matrix(instance: &Instance) -> SymmetricMatrix {
    let d = instance.d;
    let mut g = DMatrix::<f64>::zeros(d, d);
    match &instance.covariates {
        Covariates::Pairs(pairs) => {
            for &(i, j) in pairs {
                g[(i, i)] += 1.0;
                g[(j, j)] += 1.0;
                g[(i, j)] -= 1.0;
                g[(j, i)] -= 1.0;
            }
        }
        Covariates::Dense(rows) => {
            for x in rows {
                for a in 0..d {
                    for b in a..d {
                        g[(a, b)] += x[a] * x[b];
                    }
                }
            }
            for a in 0..d {
                for b in 0..a {
                    g[(a, b)] = g[(b, a)];
                }
            }
        }
    }
    SymmetricMatrix::symmetrize(g)
}

/// Scale factor `(d − 1)/(2N)` relating the Gram matrix to the sample covariance.
pub fn covariance_scale(instance: &Instance) -> f64 {
    (instance.d as f64 - 1.0) / (2.0 * instance.n as f64)
}

/// `Σ̂ = (d − 1)/(2N) Σ_r x_r x_rᵀ`.
pub fn sample_covariance(instance: &Instance) -> SymmetricMatrix {
    gram_matrix(instance).scaled(covariance_scale(instance))
}

impl Instance {
    pub fn is_pairwise(&self) -> bool {
        matches!(self.covariates, Covariates::Pairs(_))
    }

    /// Largest `|y_r − (z_r ⟨x_r, θ*⟩ + ε_r)|`.
    pub fn audit_residual(&self) -> f64 {
        responses_for(
            &self.covariates,
            self.theta_star.as_slice(),
            &self.latent_signs,
            &self.noise,
        )
        .iter()
        .zip(&self.responses)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
    }

    /// Structural checks applied to deserialized instances.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.d < 2 || self.theta_star.len() != self.d {
            return Err(Error::Format("dimension mismatch with theta_star".into()));
        }
        if self.responses.len() != n || self.latent_signs.len() != n || self.noise.len() != n {
            return Err(Error::Format("record arrays disagree with n".into()));
        }
        if self.latent_signs.iter().any(|&z| z != 1 && z != -1) {
            return Err(Error::Format("latent signs must be +1 or -1".into()));
        }
        match &self.covariates {
            Covariates::Pairs(p) => {
                if p.len() != n {
                    return Err(Error::Format("pair count disagrees with n".into()));
                }
                if let Some(bad) = p.iter().find(|&&(i, j)| !(i < j && j < self.d)) {
                    return Err(Error::Format(format!("invalid pair {bad:?}")));
                }
            }
            Covariates::Dense(rows) => {
                if rows.len() != n || rows.iter().any(|x| x.len() != self.d) {
                    return Err(Error::Format("dense covariates have wrong shape".into()));
                }
            }
        }
        Ok(())
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

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            context: path.to_path_buf(),
            source,
        })?;
        let inst: Instance = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.to_path_buf(),
            source,
        })?;
        inst.validate()?;
        Ok(inst)
    }
}
