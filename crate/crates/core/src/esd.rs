//! Empirical spectral statistics.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{LinalgError, C64};
use crate::sampler::{sample_spectrum, ModelSpec, SampleError, SpectrumSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EsdError {
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("spectral parameter {0} lies on the real axis")]
    RealZ(C64),
    #[error("no sample points")]
    Empty,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `(1/n) Σ 1/(z − λ_i)`.
pub fn empirical_cauchy(eigenvalues: &[f64], z: C64) -> C64 {
    let n = eigenvalues.len() as f64;
    eigenvalues.iter().map(|&l| (z - l).inv()).sum::<C64>() / n
}

pub fn sample_cauchy(sample: &SpectrumSample, z: C64) -> C64 {
    empirical_cauchy(&sample.eigenvalues, z)
}

/// Right-continuous empirical CDF `F(x) = #{x_i ≤ x}/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    points: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut points: Vec<f64>) -> Result<Self, EsdError> {
        if points.is_empty() {
            return Err(EsdError::Empty);
        }
        points.sort_by(f64::total_cmp);
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.points.partition_point(|p| *p <= x) as f64 / self.points.len() as f64
    }

    /// Left limit `F(x⁻) = #{x_i < x}/n`.
    pub fn eval_left(&self, x: f64) -> f64 {
        self.points.partition_point(|p| *p < x) as f64 / self.points.len() as f64
    }
}

/// `sup_x |F(x) − G(x)|` for a step function `F` and a continuous monotone
/// `G`, evaluated exactly from both one-sided limits at every jump.
pub fn kolmogorov_distance(f: &EmpiricalCdf, g: impl Fn(f64) -> f64) -> f64 {
    let n = f.points.len();
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < n {
        let x = f.points[i];
        let mut j = i;
        while j < n && f.points[j] == x {
            j += 1;
        }
        let gx = g(x);
        let below = i as f64 / n as f64;
        let above = j as f64 / n as f64;
        worst = worst.max((above - gx).abs()).max((below - gx).abs());
        i = j;
    }
    worst
}

/// `sup_x |F(x) − G(x)|` for two step functions, comparing right values
/// and left limits at every jump of either.
pub fn kolmogorov_distance_steps(f: &EmpiricalCdf, g: &EmpiricalCdf) -> f64 {
    f.points
        .iter()
        .chain(&g.points)
        .map(|&x| (f.eval(x) - g.eval(x)).abs().max((f.eval_left(x) - g.eval_left(x)).abs()))
        .fold(0.0, f64::max)
}

/// Monte Carlo estimate at one spectral parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    #[serde(with = "crate::serde_complex::complex")]
    pub z: C64,
    #[serde(with = "crate::serde_complex::complex")]
    pub mean: C64,
    /// Larger of the real and imaginary standard errors.
    pub stderr: f64,
    pub trials: usize,
}

/// Mean and standard error of per-trial values, in trial order.
pub fn summarize(z: C64, values: &[C64]) -> MeanEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<C64>() / n;
    let (mut vr, mut vi) = (0.0, 0.0);
    for v in values {
        vr += (v.re - mean.re).powi(2);
        vi += (v.im - mean.im).powi(2);
    }
    let denom = (n - 1.0).max(1.0);
    let sd = (vr / denom).max(vi / denom).sqrt();
    MeanEstimate { z, mean, stderr: sd / n.sqrt(), trials: values.len() }
}

/// Runs `f(trial)` for every trial in parallel and returns the results in
/// trial order.
pub fn per_trial<T, E>(trials: usize, f: impl Fn(u64) -> Result<T, E> + Sync + Send) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
{
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// Per-z mean empirical Cauchy transform of `trials` seeded samples.
pub fn mean_cauchy(spec: &ModelSpec, zs: &[C64], trials: usize) -> Result<Vec<MeanEstimate>, EsdError> {
    mean_cauchy_by(zs, trials, |t| Ok(sample_spectrum(spec, t)?.eigenvalues))
}

/// As [`mean_cauchy`] with a custom per-trial spectrum.
pub fn mean_cauchy_by(
    zs: &[C64],
    trials: usize,
    spectrum: impl Fn(u64) -> Result<Vec<f64>, EsdError> + Sync + Send,
) -> Result<Vec<MeanEstimate>, EsdError> {
    if trials < 2 {
        return Err(EsdError::TooFewTrials(trials));
    }
    if let Some(z) = zs.iter().find(|z| z.im == 0.0) {
        return Err(EsdError::RealZ(*z));
    }
    let values = per_trial(trials, |t| {
        let ev = spectrum(t)?;
        Ok::<_, EsdError>(zs.iter().map(|&z| empirical_cauchy(&ev, z)).collect::<Vec<_>>())
    })?;
    Ok(zs
        .iter()
        .enumerate()
        .map(|(k, &z)| summarize(z, &values.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect())
}
