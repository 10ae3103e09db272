//! Monte-Carlo sweeps over initialization quality, noise level and sample
//! size, plus the three-component non-identifiability construction.
//!
//! Each `(grid point, repetition)` cell draws its instance and its
//! initialization from independent streams derived from `base_seed`, so cells
//! can run in any order or in parallel and still produce the same rows.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{mean, median, optimal_rate_with_cov, sign_resolved_errors};
use crate::error::{Error, Result};
use crate::estimators::{
    covariance_pseudoinverse, run_with_cov, spectral_init, EstimatorKind, IterationConfig,
};
use crate::model::{generate, random_init, DesignKind, GroundTruthSpec};
use crate::rng::{derive_seed, rng_from_seed, Purpose, RNG_FAMILY, SEED_DERIVATION_RULE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    InitInterpolation,
    NoiseSweep,
    SampleSizeSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepEstimator {
    Spectral,
    EmFromSpectral,
    EasyEmFromSpectral,
    EmFromRandomInit,
}

impl SweepEstimator {
    pub fn label(self) -> &'static str {
        match self {
            SweepEstimator::Spectral => "spectral",
            SweepEstimator::EmFromSpectral => "em_from_spectral",
            SweepEstimator::EasyEmFromSpectral => "easy_em_from_spectral",
            SweepEstimator::EmFromRandomInit => "em_from_random_init",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [
            SweepEstimator::Spectral,
            SweepEstimator::EmFromSpectral,
            SweepEstimator::EasyEmFromSpectral,
            SweepEstimator::EmFromRandomInit,
        ]
        .into_iter()
        .find(|e| e.label() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub d: usize,
    /// Sample size for sweeps that hold `N` fixed.
    pub n: usize,
    /// Grid for [`SweepKind::SampleSizeSweep`].
    pub n_grid: Vec<usize>,
    /// Noise std for sweeps that hold `σ` fixed.
    pub sigma: f64,
    /// Grid of `σ²` values for [`SweepKind::NoiseSweep`].
    pub sigma_sq_grid: Vec<f64>,
    /// Grid for [`SweepKind::InitInterpolation`].
    pub eta_grid: Vec<f64>,
    pub design: DesignKind,
    pub estimators: Vec<SweepEstimator>,
    pub reps: usize,
    pub max_steps: usize,
    pub step_tol: f64,
    pub base_seed: u64,
    /// A row succeeds when its final squared error is at most this multiple
    /// of the optimal rate.
    pub success_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::init_interpolation(DesignKind::PairwiseUniform)
    }
}

/// `count` points spaced evenly in log scale over `[lo, hi]`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|k| {
                    if k == count - 1 {
                        hi
                    } else {
                        (a + (b - a) * k as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

impl SweepConfig {
    /// d = 50, N = 1000, σ = 0.1, η ∈ {0.1, …, 1}, 100 reps, 100 EM steps.
    pub fn init_interpolation(design: DesignKind) -> Self {
        Self {
            kind: SweepKind::InitInterpolation,
            d: 50,
            n: 1000,
            n_grid: Vec::new(),
            sigma: 0.1,
            sigma_sq_grid: Vec::new(),
            eta_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            design,
            estimators: vec![SweepEstimator::EmFromRandomInit],
            reps: 100,
            max_steps: 100,
            step_tol: 1e-10,
            base_seed: 0,
            success_factor: 10.0,
        }
    }

    /// d = 50, N = 1000, σ² on 10 log-spaced points in [0.002, 2], 20 steps.
    pub fn noise_sweep() -> Self {
        Self {
            kind: SweepKind::NoiseSweep,
            sigma_sq_grid: log_grid(0.002, 2.0, 10),
            eta_grid: Vec::new(),
            estimators: vec![
                SweepEstimator::Spectral,
                SweepEstimator::EmFromSpectral,
                SweepEstimator::EasyEmFromSpectral,
            ],
            max_steps: 20,
            ..Self::init_interpolation(DesignKind::PairwiseUniform)
        }
    }

    /// d = 50, σ = 0.1, N on 8 log-spaced integers in [500, 2000], 20 steps.
    pub fn sample_size_sweep() -> Self {
        Self {
            kind: SweepKind::SampleSizeSweep,
            n_grid: log_grid(500.0, 2000.0, 8)
                .into_iter()
                .map(|x| x.round() as usize)
                .collect(),
            sigma_sq_grid: Vec::new(),
            ..Self::noise_sweep()
        }
    }

    pub fn defaults_for(kind: SweepKind) -> Self {
        match kind {
            SweepKind::InitInterpolation => Self::init_interpolation(DesignKind::PairwiseUniform),
            SweepKind::NoiseSweep => Self::noise_sweep(),
            SweepKind::SampleSizeSweep => Self::sample_size_sweep(),
        }
    }

    /// Grid values in sweep order.
    pub fn grid(&self) -> Vec<f64> {
        match self.kind {
            SweepKind::InitInterpolation => self.eta_grid.clone(),
            SweepKind::NoiseSweep => self.sigma_sq_grid.clone(),
            SweepKind::SampleSizeSweep => self.n_grid.iter().map(|&n| n as f64).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if self.grid().is_empty() {
            return Err(Error::Parameter("sweep grid is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Parameter("no estimators selected".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Parameter("max_steps must be at least 1".into()));
        }
        if self.d < 2 {
            return Err(Error::Dimension(format!("need d >= 2, got {}", self.d)));
        }
        match self.kind {
            SweepKind::InitInterpolation => {
                if self.eta_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(Error::Parameter("eta values must lie in [0, 1]".into()));
                }
            }
            SweepKind::NoiseSweep | SweepKind::SampleSizeSweep => {
                if !self.design.is_pairwise() {
                    return Err(Error::Parameter(
                        "spectral sweeps need a pairwise design".into(),
                    ));
                }
                if self.sigma_sq_grid.iter().any(|s| !(*s > 0.0)) {
                    return Err(Error::Parameter("sigma^2 values must be positive".into()));
                }
                if self.n_grid.contains(&0) {
                    return Err(Error::Parameter("N values must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_value: f64,
    pub rep: usize,
    pub seed: u64,
    pub estimator: SweepEstimator,
    pub err_init_l2sq: f64,
    pub err_final_l2sq: f64,
    pub err_final_linf: f64,
    pub steps: usize,
    pub converged: bool,
    pub optimal_rate: f64,
    pub success: bool,
}

pub const CSV_HEADER: [&str; 11] = [
    "grid_value",
    "rep",
    "seed",
    "estimator",
    "err_init_l2sq",
    "err_final_l2sq",
    "err_final_linf",
    "steps",
    "converged",
    "optimal_rate",
    "success",
];

fn is_success(err_final: f64, rate: f64, factor: f64) -> bool {
    err_final <= factor * rate
}

/// Rows for one `(grid_index, rep)` cell, in `config.estimators` order.
pub fn run_cell(config: &SweepConfig, grid_index: usize, rep: usize) -> Result<Vec<SweepRow>> {
    let grid_value = config.grid()[grid_index];
    let (n, sigma) = match config.kind {
        SweepKind::InitInterpolation => (config.n, config.sigma),
        SweepKind::NoiseSweep => (config.n, grid_value.sqrt()),
        SweepKind::SampleSizeSweep => (config.n_grid[grid_index], config.sigma),
    };
    let data_seed = derive_seed(
        config.base_seed,
        grid_index as u64,
        rep as u64,
        Purpose::Data,
    );
    let mut init_rng = rng_from_seed(derive_seed(
        config.base_seed,
        grid_index as u64,
        rep as u64,
        Purpose::Init,
    ));
    let instance = generate(
        config.d,
        n,
        sigma,
        &GroundTruthSpec::Linear(config.d),
        config.design,
        data_seed,
    )?;
    let cov = covariance_pseudoinverse(&instance)?;
    let rate = optimal_rate_with_cov(&instance, &cov);
    let iter_cfg = IterationConfig {
        max_steps: config.max_steps,
        step_tol: config.step_tol,
        record_every: 0,
        ..Default::default()
    };
    let ts = &instance.theta_star;

    // Spectral start, falling back to a fully random start if degenerate.
    let spectral = if config.kind == SweepKind::InitInterpolation {
        None
    } else {
        Some(match spectral_init(&instance) {
            Ok(res) => (res.theta_tilde, true),
            Err(Error::SpectralDegenerate { .. }) => (random_init(ts, 1.0, &mut init_rng)?, false),
            Err(e) => return Err(e),
        })
    };

    let mut rows = Vec::with_capacity(config.estimators.len());
    for &est in &config.estimators {
        let row = |err_init: f64, fin: &[f64], steps: usize, converged: bool| -> Result<SweepRow> {
            let e = sign_resolved_errors(fin, ts)?;
            Ok(SweepRow {
                grid_value,
                rep,
                seed: data_seed,
                estimator: est,
                err_init_l2sq: err_init,
                err_final_l2sq: e.l2_squared,
                err_final_linf: e.linf,
                steps,
                converged,
                optimal_rate: rate,
                success: is_success(e.l2_squared, rate, config.success_factor),
            })
        };
        let iterate = |start: &[f64], kind: EstimatorKind, start_ok: bool| -> Result<SweepRow> {
            let err_init = sign_resolved_errors(start, ts)?.l2_squared;
            let trace = run_with_cov(
                &instance,
                &DVector::from_column_slice(start),
                kind,
                &iter_cfg,
                &cov,
            )?;
            row(
                err_init,
                &trace.final_theta,
                trace.steps_taken,
                trace.converged && start_ok,
            )
        };
        rows.push(match est {
            SweepEstimator::EmFromRandomInit => {
                let eta = if config.kind == SweepKind::InitInterpolation {
                    grid_value
                } else {
                    1.0
                };
                let start = random_init(ts, eta, &mut init_rng)?;
                iterate(start.as_slice(), EstimatorKind::Em, true)?
            }
            SweepEstimator::Spectral => {
                let (theta, ok) = spectral_start(&spectral)?;
                let err = sign_resolved_errors(theta.as_slice(), ts)?.l2_squared;
                row(err, theta.as_slice(), 0, ok)?
            }
            SweepEstimator::EmFromSpectral => {
                let (theta, ok) = spectral_start(&spectral)?;
                iterate(theta.as_slice(), EstimatorKind::Em, ok)?
            }
            SweepEstimator::EasyEmFromSpectral => {
                let (theta, ok) = spectral_start(&spectral)?;
                iterate(theta.as_slice(), EstimatorKind::EasyEm, ok)?
            }
        });
    }
    Ok(rows)
}

fn spectral_start<T>(s: &Option<(T, bool)>) -> Result<(&T, bool)> {
    s.as_ref().map(|(t, ok)| (t, *ok)).ok_or_else(|| {
        Error::Parameter("spectral estimators need a noise or sample-size sweep".into())
    })
}

/// Runs every cell (in parallel on the current rayon pool) and returns rows
/// ordered by `(grid index, rep, estimator position)`.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.grid().len())
        .flat_map(|g| (0..config.reps).map(move |r| (g, r)))
        .collect();
    let chunks: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(g, r)| run_cell(config, g, r))
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn expect_kind(config: &SweepConfig, kind: SweepKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::Parameter(format!(
            "expected a {kind:?} config, got {:?}",
            config.kind
        )));
    }
    Ok(())
}

pub fn run_init_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    expect_kind(config, SweepKind::InitInterpolation)?;
    run_sweep(config)
}

pub fn run_noise_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    expect_kind(config, SweepKind::NoiseSweep)?;
    run_sweep(config)
}

pub fn run_sample_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    expect_kind(config, SweepKind::SampleSizeSweep)?;
    run_sweep(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub grid_value: f64,
    pub estimator: SweepEstimator,
    pub count: usize,
    pub mean_init_l2sq: f64,
    pub mean_final_l2sq: f64,
    pub median_final_l2sq: f64,
    pub mean_optimal_rate: f64,
    pub median_optimal_rate: f64,
    pub success_fraction: f64,
}

/// Mean and median per `(grid_value, estimator)`, in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, SweepEstimator)> = Vec::new();
    for r in rows {
        if !keys
            .iter()
            .any(|&(g, e)| g == r.grid_value && e == r.estimator)
        {
            keys.push((r.grid_value, r.estimator));
        }
    }
    keys.into_iter()
        .map(|(g, e)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.grid_value == g && r.estimator == e)
                .collect();
            let col = |f: fn(&SweepRow) -> f64| group.iter().map(|r| f(r)).collect::<Vec<_>>();
            let fin = col(|r| r.err_final_l2sq);
            let rate = col(|r| r.optimal_rate);
            SummaryRow {
                grid_value: g,
                estimator: e,
                count: group.len(),
                mean_init_l2sq: mean(&col(|r| r.err_init_l2sq)).unwrap_or(f64::NAN),
                mean_final_l2sq: mean(&fin).unwrap_or(f64::NAN),
                median_final_l2sq: median(&fin).unwrap_or(f64::NAN),
                mean_optimal_rate: mean(&rate).unwrap_or(f64::NAN),
                median_optimal_rate: median(&rate).unwrap_or(f64::NAN),
                success_fraction: group.iter().filter(|r| r.success).count() as f64
                    / group.len() as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Sidecar written next to every sweep output as `<output>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub library: String,
    pub version: String,
    pub rng_family: String,
    pub seed_derivation: String,
    pub grid_note: String,
    pub aggregation_note: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub config: SweepConfig,
}

impl SweepMetadata {
    pub fn new(config: &SweepConfig, rows: usize) -> Self {
        let grid_note = match config.kind {
            SweepKind::InitInterpolation => "eta grid as configured".to_string(),
            SweepKind::NoiseSweep => format!(
                "{} sigma^2 values; default grid is 10 log-spaced points in [0.002, 2]",
                config.sigma_sq_grid.len()
            ),
            SweepKind::SampleSizeSweep => format!(
                "{} N values; default grid is 8 log-spaced integers in [500, 2000]",
                config.n_grid.len()
            ),
        };
        Self {
            library: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng_family: RNG_FAMILY.to_string(),
            seed_derivation: SEED_DERIVATION_RULE.to_string(),
            grid_note,
            aggregation_note: "rows are per repetition; summaries report both mean and median"
                .to_string(),
            columns: CSV_HEADER.iter().map(|s| s.to_string()).collect(),
            rows,
            config: config.clone(),
        }
    }
}

pub fn metadata_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        context: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        context: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |source| Error::Json {
        context: path.to_path_buf(),
        source,
    }
}

/// Writes rows as CSV (fixed header, floats with 17 significant digits) or
/// JSON.
pub fn write_rows(rows: &[SweepRow], path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
            w.write_record(CSV_HEADER).map_err(csv_err(path))?;
            for r in rows {
                w.write_record([
                    fmt_f64(r.grid_value),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.estimator.label().to_string(),
                    fmt_f64(r.err_init_l2sq),
                    fmt_f64(r.err_final_l2sq),
                    fmt_f64(r.err_final_linf),
                    r.steps.to_string(),
                    r.converged.to_string(),
                    fmt_f64(r.optimal_rate),
                    r.success.to_string(),
                ])
                .map_err(csv_err(path))?;
            }
            w.flush().map_err(io_err(path))
        }
        OutputFormat::Json => {
            let file = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(file);
            serde_json::to_writer_pretty(&mut w, rows).map_err(json_err(path))?;
            w.flush().map_err(io_err(path))
        }
    }
}

pub fn write_metadata(meta: &SweepMetadata, output: &Path) -> Result<()> {
    let path = metadata_path(output);
    let text = serde_json::to_string_pretty(meta).map_err(json_err(&path))?;
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn read_rows(path: &Path, format: OutputFormat) -> Result<Vec<SweepRow>> {
    match format {
        OutputFormat::Json => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text).map_err(json_err(path))
        }
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
            let header = r.headers().map_err(csv_err(path))?.clone();
            if header.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Format(format!("unexpected CSV header: {header:?}")));
            }
            r.records()
                .map(|rec| {
                    let rec = rec.map_err(csv_err(path))?;
                    parse_row(&rec)
                })
                .collect()
        }
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<SweepRow> {
    fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T> {
        let raw = rec.get(k).unwrap_or("");
        raw.parse()
            .map_err(|_| Error::Format(format!("column {}: cannot parse {raw:?}", CSV_HEADER[k])))
    }
    let label: String = field(rec, 3)?;
    Ok(SweepRow {
        grid_value: field(rec, 0)?,
        rep: field(rec, 1)?,
        seed: field(rec, 2)?,
        estimator: SweepEstimator::from_label(&label)
            .ok_or_else(|| Error::Format(format!("unknown estimator {label:?}")))?,
        err_init_l2sq: field(rec, 4)?,
        err_final_l2sq: field(rec, 5)?,
        err_final_linf: field(rec, 6)?,
        steps: field(rec, 7)?,
        converged: field(rec, 8)?,
        optimal_rate: field(rec, 9)?,
        success: field(rec, 10)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMultisets {
    pub i: usize,
    pub j: usize,
    /// Sorted `{θ^[ℓ]_i − θ^[ℓ]_j : ℓ = 1, 2, 3}` for mixture A.
    pub a: [f64; 3],
    pub b: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityDemo {
    pub mixture_a: [Vec<f64>; 3],
    pub mixture_b: [Vec<f64>; 3],
    pub pairs: Vec<PairMultisets>,
    pub equal: bool,
}

/// Two three-component mixtures that differ only in the first two
/// coordinates, `{(1,2), (3,3), (2,4)}` versus `{(2,2), (1,3), (3,4)}`, and
/// share `tail` in the rest. Every pair observes the same multiset of
/// differences under both.
pub fn identifiability_demo(tail: &[f64]) -> IdentifiabilityDemo {
    let build = |heads: [(f64, f64); 3]| {
        heads.map(|(a, b)| {
            let mut v = vec![a, b];
            v.extend_from_slice(tail);
            v
        })
    };
    let mixture_a = build([(1.0, 2.0), (3.0, 3.0), (2.0, 4.0)]);
    let mixture_b = build([(2.0, 2.0), (1.0, 3.0), (3.0, 4.0)]);
    let d = tail.len() + 2;
    let diffs = |m: &[Vec<f64>; 3], i: usize, j: usize| {
        let mut s = [m[0][i] - m[0][j], m[1][i] - m[1][j], m[2][i] - m[2][j]];
        s.sort_by(f64::total_cmp);
        s
    };
    let pairs: Vec<PairMultisets> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .map(|(i, j)| PairMultisets {
            i,
            j,
            a: diffs(&mixture_a, i, j),
            b: diffs(&mixture_b, i, j),
        })
        .collect();
    let equal = pairs.iter().all(|p| {
        p.a.iter()
            .zip(&p.b)
            .all(|(x, y)| x.to_bits() == y.to_bits())
    });
    IdentifiabilityDemo {
        mixture_a,
        mixture_b,
        pairs,
        equal,
    }
}
