//! Monte Carlo experiments comparing sampled spectra against the limit laws.

use serde::Serialize;
use thiserror::Error;

use crate::dyson::{
    cdf_from_density, circulant_law, refined_grid, solve_semicircular, solve_wishart, stieltjes_density,
    DysonError, SemicircleMixture, SolverOptions, TabulatedCdf, DEFAULT_EPS,
};
use crate::esd::{empirical_cauchy, kolmogorov_distance, mean_cauchy, mean_cauchy_by, per_trial, summarize, EmpiricalCdf, EsdError, MeanEstimate};
use crate::eta::{BlockSource, CovarianceMap, CovarianceTensor, EtaError, EtaPair};
use crate::linalg::{hermitian_eigenvalues, C64};
use crate::sampler::{hermitize, sample_spectrum, sample_wishart_factor, EntryLaw, Model, ModelSpec, SampleError};

/// Tolerance on the nominal variance match required of two laws.
pub const VARIANCE_MATCH_TOL: f64 = 1e-12;
/// Points with error below this many standard errors are left out of fits.
pub const NOISE_FLOOR_SE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("solver did not converge at z = {z} (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { z: C64, residual: f64, iterations: usize },
    #[error("laws have different variances: {a} vs {b}")]
    VarianceMismatch { a: f64, b: f64 },
    #[error("z = {0} is outside the sector 0 < arg z < π/2")]
    Sector(C64),
    #[error("{0}")]
    BadInput(String),
    #[error("no limit law is implemented for {0}")]
    NoLimit(String),
    #[error(transparent)]
    Dyson(#[from] DysonError),
    #[error(transparent)]
    Esd(#[from] EsdError),
    #[error(transparent)]
    Eta(#[from] EtaError),
    #[error(transparent)]
    Sample(#[from] SampleError),
}

/// Deterministic decorrelated seed for sub-experiment `k`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut x = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic limit of a model's normalized-trace Cauchy transform.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitLaw {
    Semicircular(CovarianceMap),
    Wishart(EtaPair),
    Mixture(SemicircleMixture),
}

impl LimitLaw {
    pub fn cauchy(&self, z: C64, opts: &SolverOptions) -> Result<C64, ExperimentError> {
        let sol = match self {
            LimitLaw::Mixture(m) => return Ok(m.cauchy(z)?),
            LimitLaw::Semicircular(eta) => solve_semicircular(eta, z, opts)?,
            LimitLaw::Wishart(pair) => solve_wishart(pair, z, opts)?,
        };
        if !sol.converged {
            return Err(ExperimentError::NoConvergence { z, residual: sol.residual, iterations: sol.iterations });
        }
        Ok(sol.trace())
    }
}

/// The limit law built from the same parameters the sampler uses.
pub fn limit_law(spec: &ModelSpec) -> Result<LimitLaw, ExperimentError> {
    spec.validate()?;
    let d = spec.d;
    let law = &spec.law;
    Ok(match &spec.model {
        Model::HermitizedIid {} => LimitLaw::Semicircular(match law {
            EntryLaw::BlockPool { blocks, .. } => CovarianceMap::exchangeable_pool(blocks)?,
            _ => CovarianceMap::iid_blocks(BlockSource::Moments(&CovarianceTensor::independent(d, law.variance())?))?,
        }),
        Model::WignerBlocks {} => LimitLaw::Semicircular(match law {
            EntryLaw::BlockPool { blocks, .. } => CovarianceMap::wigner_blocks(BlockSource::Samples(blocks))?,
            _ => CovarianceMap::wigner_blocks(BlockSource::Moments(&CovarianceTensor::independent(d, law.variance())?))?,
        }),
        Model::Kronecker { betas, sigma } => LimitLaw::Semicircular(CovarianceMap::kronecker(betas, sigma)?),
        Model::CorrelatedBlocks { tensor } => LimitLaw::Semicircular(CovarianceMap::correlated_tensor(tensor)?),
        Model::Circulant { real_entries: false } => LimitLaw::Mixture(circulant_law(d)),
        Model::Circulant { real_entries: true } => return Err(ExperimentError::NoLimit("real-entry circulant".into())),
        Model::WishartCorrelated { tensor } => LimitLaw::Wishart(EtaPair::wishart(tensor)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    /// Fewer than three points rose above the Monte Carlo noise.
    NoiseFloor,
    /// Every error was exactly zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub model: ModelSpec,
    #[serde(with = "crate::serde_complex::complex")]
    pub z: C64,
    #[serde(with = "crate::serde_complex::complex")]
    pub limit: C64,
    pub n_grid: Vec<usize>,
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub status: FitStatus,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    /// How many grid points entered the fit.
    pub points_used: usize,
}

/// Weighted least-squares line through `(x, y)` with weights `w`; returns
/// `(slope, intercept, slope standard error)`.
pub fn weighted_line_fit(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx, (1.0 / sxx).sqrt())
}

/// Fit of `log error` against `log N`, weighted by the inverse variance of
/// `log error ≈ se/error`, using only points more than
/// [`NOISE_FLOOR_SE`] standard errors above zero.
pub fn fit_rate(n_grid: &[usize], errors: &[f64], stderrs: &[f64]) -> (FitStatus, Option<f64>, Option<f64>, usize) {
    if errors.iter().all(|e| *e == 0.0) {
        return (FitStatus::Degenerate, None, None, 0);
    }
    let keep: Vec<usize> = (0..errors.len()).filter(|&k| errors[k] > NOISE_FLOOR_SE * stderrs[k]).collect();
    if keep.len() < 3 {
        return (FitStatus::NoiseFloor, None, None, keep.len());
    }
    let x: Vec<f64> = keep.iter().map(|&k| (n_grid[k] as f64).ln()).collect();
    let y: Vec<f64> = keep.iter().map(|&k| errors[k].ln()).collect();
    let w: Vec<f64> =
        keep.iter().map(|&k| if stderrs[k] > 0.0 { (errors[k] / stderrs[k]).powi(2) } else { 1e12 }).collect();
    let (slope, _, se) = weighted_line_fit(&x, &y, &w);
    (FitStatus::Fitted, Some(slope), Some(se), keep.len())
}

pub fn rate_experiment(
    template: &ModelSpec,
    z: C64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<RateReport, ExperimentError> {
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ExperimentError::BadInput("rate grid needs at least 3 strictly increasing N".into()));
    }
    let limit = limit_law(&template.with_n(n_grid[0]))?.cauchy(z, opts)?;
    let mut errors = Vec::with_capacity(n_grid.len());
    let mut stderrs = Vec::with_capacity(n_grid.len());
    for (k, &n) in n_grid.iter().enumerate() {
        let spec = template.with_n(n).with_seed(derive_seed(seed, k as u64));
        let est = mean_cauchy(&spec, &[z], trials)?[0];
        errors.push((est.mean - limit).norm());
        stderrs.push(est.stderr);
    }
    let (status, slope, slope_stderr, points_used) = fit_rate(n_grid, &errors, &stderrs);
    Ok(RateReport {
        model: template.clone(),
        z,
        limit,
        n_grid: n_grid.to_vec(),
        errors,
        stderrs,
        status,
        slope,
        slope_stderr,
        points_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalityReport {
    pub n: usize,
    pub a: MeanEstimate,
    pub b: MeanEstimate,
    pub difference: f64,
    pub combined_stderr: f64,
    /// `max(3·combined SE, 5/√N)`.
    pub bound: f64,
    pub within: bool,
}

pub fn universality_experiment(
    template: &ModelSpec,
    law_a: &EntryLaw,
    law_b: &EntryLaw,
    z: C64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<UniversalityReport, ExperimentError> {
    let (va, vb) = (law_a.variance(), law_b.variance());
    if !((va - vb).abs() <= VARIANCE_MATCH_TOL) {
        return Err(ExperimentError::VarianceMismatch { a: va, b: vb });
    }
    let base = template.with_n(n);
    let a = mean_cauchy(&base.with_law(law_a.clone()).with_seed(derive_seed(seed, 0)), &[z], trials)?[0];
    let b = mean_cauchy(&base.with_law(law_b.clone()).with_seed(derive_seed(seed, 1)), &[z], trials)?[0];
    let difference = (a.mean - b.mean).norm();
    let combined_stderr = a.stderr.hypot(b.stderr);
    let bound = (3.0 * combined_stderr).max(5.0 / (n as f64).sqrt());
    Ok(UniversalityReport { n, a, b, difference, combined_stderr, bound, within: difference <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsRow {
    pub n: usize,
    pub mean_ks: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirculantKsReport {
    pub d: usize,
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub rows: Vec<KsRow>,
    /// Each mean KS is below its predecessor plus one combined SE.
    pub decreasing: bool,
}

/// CDF of a semicircle mixture by Stieltjes inversion on a refined grid.
pub fn mixture_cdf(mixture: &SemicircleMixture, eps: f64, step: f64) -> Result<TabulatedCdf, ExperimentError> {
    let edge = mixture.edges().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let grid = refined_grid(-edge - 0.5, edge + 0.5, step, &mixture.edges(), eps)?;
    Ok(cdf_from_density(&stieltjes_density(|z| mixture.cauchy(z), &grid, eps)?)?)
}

pub fn circulant_ks_experiment(
    d: usize,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<CirculantKsReport, ExperimentError> {
    if d < 2 {
        return Err(ExperimentError::BadInput("circulant needs d >= 2".into()));
    }
    if trials < 2 {
        return Err(EsdError::TooFewTrials(trials).into());
    }
    let law = circulant_law(d);
    let cdf = mixture_cdf(&law, DEFAULT_EPS, 1e-3)?;
    let mut rows = Vec::new();
    for (k, &n) in n_grid.iter().enumerate() {
        let spec = ModelSpec::new(Model::Circulant { real_entries: false }, d, n, EntryLaw::default(), derive_seed(seed, k as u64));
        let ks = per_trial(trials, |t| {
            let ev = sample_spectrum(&spec, t)?.eigenvalues;
            Ok::<_, ExperimentError>(kolmogorov_distance(&EmpiricalCdf::new(ev)?, |x| cdf.eval(x)))
        })?;
        let est = summarize(C64::new(0.0, 0.0), &ks.iter().map(|v| C64::new(*v, 0.0)).collect::<Vec<_>>());
        rows.push(KsRow { n, mean_ks: est.mean.re, stderr: est.stderr });
    }
    let decreasing = rows.windows(2).all(|w| w[1].mean_ks <= w[0].mean_ks + w[0].stderr.hypot(w[1].stderr));
    Ok(CirculantKsReport { d, weights: law.weights, variances: law.variances, rows, decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WishartReport {
    #[serde(with = "crate::serde_complex::complex")]
    pub z: C64,
    #[serde(with = "crate::serde_complex::complex")]
    pub z_squared: C64,
    /// Largest `|g_X(z) − z·g_W(z²)|` over the identity-checked trials.
    pub identity_defect: f64,
    pub identity_trials: usize,
    #[serde(with = "crate::serde_complex::complex")]
    pub solver_trace: C64,
    pub monte_carlo: MeanEstimate,
    pub within_3se: bool,
}

/// `|g_X(z) − z·g_W(z²)|` for one sample, where `X` is the Hermitization of
/// `H` and `W = H H*`.
pub fn schur_identity_defect(spec: &ModelSpec, trial: u64, z: C64) -> Result<f64, ExperimentError> {
    let h = sample_wishart_factor(spec, trial)?;
    let ev_x = hermitian_eigenvalues(&hermitize(&h)).map_err(SampleError::from)?;
    let ev_w = hermitian_eigenvalues(&h.gram()).map_err(SampleError::from)?;
    Ok((empirical_cauchy(&ev_x, z) - z * empirical_cauchy(&ev_w, z * z)).norm())
}

/// Checks the sample-wise Hermitization identity on the first
/// `identity_trials` trials and compares the Wishart solver at `z²` against
/// the Monte Carlo mean over all `trials`.
#[allow(clippy::too_many_arguments)]
pub fn wishart_consistency_experiment(
    tensor: &CovarianceTensor,
    law: &EntryLaw,
    z: C64,
    n: usize,
    trials: usize,
    identity_trials: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<WishartReport, ExperimentError> {
    let arg = z.arg();
    if !(arg > 0.0 && arg < std::f64::consts::FRAC_PI_2) {
        return Err(ExperimentError::Sector(z));
    }
    let spec = ModelSpec::new(Model::WishartCorrelated { tensor: tensor.clone() }, tensor.d(), n, law.clone(), seed);
    let w = z * z;
    let identity_trials = identity_trials.min(trials);
    let defects = per_trial(identity_trials, |t| schur_identity_defect(&spec, t, z))?;
    let identity_defect = defects.into_iter().fold(0.0f64, f64::max);
    let solver_trace = limit_law(&spec)?.cauchy(w, opts)?;
    let monte_carlo = mean_cauchy_by(&[w], trials, |t| {
        let h = sample_wishart_factor(&spec, t)?;
        Ok(hermitian_eigenvalues(&h.gram())?)
    })?[0];
    let within_3se = (solver_trace - monte_carlo.mean).norm() <= 3.0 * monte_carlo.stderr;
    Ok(WishartReport { z, z_squared: w, identity_defect, identity_trials, solver_trace, monte_carlo, within_3se })
}
