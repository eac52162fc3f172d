//! Fixed-point solvers for the matrix Dyson equations
//!
//! ```text
//! z G = 1 + η(G) G                       (semicircular)
//! w G = 1 + η1((1 − η2(G))⁻¹) G          (Wishart)
//! ```
//!
//! plus scalar closed forms and Stieltjes inversion to densities and CDFs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eta::{CovarianceMap, EtaPair};
use crate::linalg::{hermitian_eigenvalues, invert, ComplexMatrix, LinalgError, C64};

/// Damping is halved when a window of this many steps fails to shrink the
/// residual by the factor [`STALL_PROGRESS`].
pub const STALL_WINDOW: usize = 10;
pub const STALL_PROGRESS: f64 = 0.99;
/// Newton polishing is attempted at stalls for block dimensions up to this.
pub const NEWTON_MAX_D: usize = 16;
const NEWTON_STEPS: usize = 30;
/// Condition estimate above which the Wishart middle inverse is rejected.
pub const MIDDLE_CONDITION_LIMIT: f64 = 1e12;
/// Default Stieltjes smoothing.
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DysonError {
    #[error("spectral parameter must satisfy Im(z) > 0, got {0}")]
    NotUpperHalfPlane(C64),
    #[error("invalid solver options: {0}")]
    BadOptions(String),
    #[error("variance must be positive, got {0}")]
    BadVariance(f64),
    #[error("mixture weights must be nonnegative and sum to 1 (sum = {sum})")]
    BadWeights { sum: f64 },
    #[error("mixture has {weights} weights but {variances} variances")]
    MixtureShape { weights: usize, variances: usize },
    #[error("Wishart middle factor 1 − η2(G) is numerically singular (condition ≈ {condition:e})")]
    SingularMiddle { condition: f64 },
    #[error("solver failed at x = {x}: {reason}")]
    DensityFailure { x: f64, reason: String },
    #[error("grid must be nonempty and sorted, with step and eps positive")]
    BadGrid,
    #[error("map acts on {map}x{map} matrices but the dimension {got} was requested")]
    DimensionMismatch { map: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_damping: f64,
    pub min_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 20_000, initial_damping: 1.0, min_damping: 1.0 / 64.0 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), DysonError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(DysonError::BadOptions(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.min_damping > 0.0 && self.min_damping <= self.initial_damping && self.initial_damping <= 1.0) {
            return Err(DysonError::BadOptions(format!(
                "need 0 < min_damping <= initial_damping <= 1, got {} and {}",
                self.min_damping, self.initial_damping
            )));
        }
        Ok(())
    }

    /// Plain undamped iteration.
    pub fn undamped(max_iter: usize) -> Self {
        Self { max_iter, initial_damping: 1.0, min_damping: 1.0, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DysonSolution {
    #[serde(with = "crate::serde_complex::complex")]
    pub z: C64,
    pub g: ComplexMatrix,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Damping in effect when the iteration stopped.
    pub damping_used: f64,
}

impl DysonSolution {
    /// Normalized trace `tr_d G`, the scalar Cauchy transform.
    pub fn trace(&self) -> C64 {
        self.g.normalized_trace()
    }

    /// Largest eigenvalue of `Im G = (G − G*)/(2i)`; nonpositive for valid
    /// solutions.
    pub fn max_imaginary_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.g.imaginary_part()).map(|ev| ev[ev.len() - 1]).unwrap_or(f64::INFINITY)
    }
}

fn check_z(z: C64) -> Result<(), DysonError> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(DysonError::NotUpperHalfPlane(z));
    }
    Ok(())
}

/// `‖zG − 1 − η(G)G‖_F`.
pub fn semicircular_residual(eta: &CovarianceMap, z: C64, g: &ComplexMatrix) -> f64 {
    semicircular_defect(eta, z, g).frobenius_norm()
}

fn semicircular_defect(eta: &CovarianceMap, z: C64, g: &ComplexMatrix) -> ComplexMatrix {
    let mut r = g.scale(z);
    r -= &ComplexMatrix::identity(g.rows());
    r -= &(&eta.apply_unchecked(g) * g);
    r
}

/// `‖zG − 1 − η1((1 − η2(G))⁻¹)G‖_F`, or an error if the middle factor is
/// ill-conditioned.
pub fn wishart_residual(pair: &EtaPair, z: C64, g: &ComplexMatrix) -> Result<f64, DysonError> {
    Ok(wishart_defect(pair, z, g)?.frobenius_norm())
}

fn wishart_defect(pair: &EtaPair, z: C64, g: &ComplexMatrix) -> Result<ComplexMatrix, DysonError> {
    let middle = wishart_middle(pair, g)?;
    let mut r = g.scale(z);
    r -= &ComplexMatrix::identity(g.rows());
    r -= &(&pair.eta1.apply_unchecked(&middle) * g);
    Ok(r)
}

fn wishart_middle(pair: &EtaPair, g: &ComplexMatrix) -> Result<ComplexMatrix, DysonError> {
    let d = g.rows();
    let a = &ComplexMatrix::identity(d) - &pair.eta2.apply_unchecked(g);
    let inv = invert(&a).map_err(|_| DysonError::SingularMiddle { condition: f64::INFINITY })?;
    let condition = a.frobenius_norm() * inv.frobenius_norm();
    if !(condition <= MIDDLE_CONDITION_LIMIT) {
        return Err(DysonError::SingularMiddle { condition });
    }
    Ok(inv)
}

/// Solves `zG = 1 + η(G)G` by damped iteration of `G ↦ (z − η(G))⁻¹` from
/// `G₀ = 1/z`.
///
/// Running out of iterations is not an error: the last iterate is returned
/// with `converged = false`.
pub fn solve_semicircular(eta: &CovarianceMap, z: C64, opts: &SolverOptions) -> Result<DysonSolution, DysonError> {
    check_z(z)?;
    opts.validate()?;
    let d = eta.d();
    let zi = ComplexMatrix::scalar(d, z);
    damped_iteration(
        z,
        d,
        opts,
        |g| Ok(invert(&(&zi - &eta.apply_unchecked(g)))?),
        |g| Ok(semicircular_residual(eta, z, g)),
        |g| Ok(semicircular_defect(eta, z, g)),
        // d/dG of zG − 1 − η(G)G along H.
        |g, h| {
            let mut r = h.scale(z);
            r -= &(&eta.apply_unchecked(h) * g);
            r -= &(&eta.apply_unchecked(g) * h);
            Ok(r)
        },
    )
}

/// Solves `zG = 1 + η1((1 − η2(G))⁻¹)G`. Steps whose middle factor is
/// ill-conditioned are retried at half the damping; if the floor is reached
/// the error is returned.
pub fn solve_wishart(pair: &EtaPair, z: C64, opts: &SolverOptions) -> Result<DysonSolution, DysonError> {
    check_z(z)?;
    opts.validate()?;
    let d = pair.d();
    let zi = ComplexMatrix::scalar(d, z);
    damped_iteration(
        z,
        d,
        opts,
        |g| {
            let middle = wishart_middle(pair, g)?;
            Ok(invert(&(&zi - &pair.eta1.apply_unchecked(&middle)))?)
        },
        |g| wishart_residual(pair, z, g),
        |g| wishart_defect(pair, z, g),
        // With M = (1 − η2(G))⁻¹, dM = M η2(H) M.
        |g, h| {
            let m = wishart_middle(pair, g)?;
            let dm = &(&m * &pair.eta2.apply_unchecked(h)) * &m;
            let mut r = h.scale(z);
            r -= &(&pair.eta1.apply_unchecked(&dm) * g);
            r -= &(&pair.eta1.apply_unchecked(&m) * h);
            Ok(r)
        },
    )
}

fn damped_iteration(
    z: C64,
    d: usize,
    opts: &SolverOptions,
    step: impl Fn(&ComplexMatrix) -> Result<ComplexMatrix, DysonError>,
    residual: impl Fn(&ComplexMatrix) -> Result<f64, DysonError>,
    defect: impl Fn(&ComplexMatrix) -> Result<ComplexMatrix, DysonError>,
    derivative: impl Fn(&ComplexMatrix, &ComplexMatrix) -> Result<ComplexMatrix, DysonError>,
) -> Result<DysonSolution, DysonError> {
    let mut g = ComplexMatrix::scalar(d, z.inv());
    let mut r = residual(&g)?;
    let mut theta = opts.initial_damping;
    let mut window_start = r;
    let mut window = 0;
    let mut iterations = 0;
    while r > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let target = step(&g)?;
        let (candidate, cr) = loop {
            let candidate = if theta == 1.0 {
                target.clone()
            } else {
                &g.scale_real(1.0 - theta) + &target.scale_real(theta)
            };
            match residual(&candidate) {
                Ok(cr) => break (candidate, cr),
                Err(DysonError::SingularMiddle { .. }) if theta > opts.min_damping => {
                    theta = (theta * 0.5).max(opts.min_damping);
                }
                Err(e) => return Err(e),
            }
        };
        g = candidate;
        r = cr;
        window += 1;
        if window == STALL_WINDOW {
            if r > STALL_PROGRESS * window_start {
                if d <= NEWTON_MAX_D {
                    if let Some((gn, rn, steps)) = newton_polish(&g, opts.tol, &defect, &derivative) {
                        let iterations = iterations + steps;
                        return Ok(DysonSolution { z, g: gn, residual: rn, iterations, converged: true, damping_used: theta });
                    }
                }
                if theta > opts.min_damping {
                    theta = (theta * 0.5).max(opts.min_damping);
                }
            }
            window_start = r;
            window = 0;
        }
    }
    Ok(DysonSolution { z, g, residual: r, iterations, converged: r <= opts.tol, damping_used: theta })
}

/// Newton's method on the residual from `g0`. The result is kept only if
/// it meets `tol` and has negative definite imaginary part, so a stray root
/// never replaces the iterate.
fn newton_polish(
    g0: &ComplexMatrix,
    tol: f64,
    defect: impl Fn(&ComplexMatrix) -> Result<ComplexMatrix, DysonError>,
    derivative: impl Fn(&ComplexMatrix, &ComplexMatrix) -> Result<ComplexMatrix, DysonError>,
) -> Option<(ComplexMatrix, f64, usize)> {
    let d = g0.rows();
    let mut g = g0.clone();
    for step in 0..=NEWTON_STEPS {
        let f = defect(&g).ok()?;
        let r = f.frobenius_norm();
        if !r.is_finite() {
            return None;
        }
        if r <= tol {
            let imag = hermitian_eigenvalues(&g.imaginary_part()).ok()?;
            return (imag[d - 1] < 0.0).then_some((g, r, step));
        }
        if step == NEWTON_STEPS {
            return None;
        }
        // Column a·d + b of the Jacobian is the derivative along E_ab.
        let mut jac = ComplexMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let col = derivative(&g, &ComplexMatrix::unit(d, a, b)).ok()?;
                for (k, v) in col.as_slice().iter().enumerate() {
                    jac[(k, a * d + b)] = *v;
                }
            }
        }
        let rhs = ComplexMatrix::new(d * d, 1, f.as_slice().to_vec()).ok()?;
        let delta = &invert(&jac).ok()? * &rhs;
        let delta = ComplexMatrix::new(d, d, delta.into_vec()).ok()?;
        g -= &delta;
    }
    None
}

/// Cauchy transform of the semicircle law of variance `t`,
/// `g = (z − √(z² − 4t))/(2t)` on the branch with `Im g < 0`.
pub fn scalar_semicircle_cauchy(t: f64, z: C64) -> Result<C64, DysonError> {
    check_z(z)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(DysonError::BadVariance(t));
    }
    Ok(semicircle_unchecked(t, z))
}

fn semicircle_unchecked(t: f64, z: C64) -> C64 {
    // Roots of t g² − z g + 1 = 0 are 2/(z ± s); take the larger denominator
    // to avoid cancellation, then fix the branch.
    let s = (z * z - 4.0 * t).sqrt();
    let (a, b) = (z + s, z - s);
    let big = if a.norm() >= b.norm() { a } else { b };
    let g = C64::new(2.0, 0.0) / big;
    if g.im < 0.0 {
        g
    } else {
        // The other root, via the product of roots 1/t.
        C64::new(1.0 / t, 0.0) / g
    }
}

/// A finite mixture of centred semicircle laws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemicircleMixture {
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
}

impl SemicircleMixture {
    pub fn new(weights: Vec<f64>, variances: Vec<f64>) -> Result<Self, DysonError> {
        if weights.len() != variances.len() || weights.is_empty() {
            return Err(DysonError::MixtureShape { weights: weights.len(), variances: variances.len() });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(DysonError::BadWeights { sum });
        }
        if let Some(&t) = variances.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(DysonError::BadVariance(t));
        }
        Ok(Self { weights, variances })
    }

    pub fn cauchy(&self, z: C64) -> Result<C64, DysonError> {
        check_z(z)?;
        Ok(self.weights.iter().zip(&self.variances).map(|(w, t)| semicircle_unchecked(*t, z) * *w).sum())
    }

    /// Support edges `±2√t` of every component.
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.variances.iter().flat_map(|t| [-2.0 * t.sqrt(), 2.0 * t.sqrt()]).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn second_moment(&self) -> f64 {
        self.weights.iter().zip(&self.variances).map(|(w, t)| w * t).sum()
    }
}

/// `Σ w_m g_{t_m}(z)`.
pub fn mixture_cauchy(weights: &[f64], variances: &[f64], z: C64) -> Result<C64, DysonError> {
    SemicircleMixture::new(weights.to_vec(), variances.to_vec())?.cauchy(z)
}

/// Components of the circulant limit law as exact fractions over `d`:
/// `(weight numerator, variance numerator)` with both denominators `d`.
///
/// Odd `d`: `(d−1)/d · γ_{(d−1)/d} + 1/d · γ_{(2d−1)/d}`.
/// Even `d`: `(d−2)/d · γ_{(d−2)/d} + 2/d · γ_{(2d−2)/d}`; for `d = 2` the
/// first component has weight zero and is dropped.
pub fn circulant_components(d: usize) -> Vec<(u64, u64)> {
    assert!(d >= 2, "circulant law needs d >= 2");
    let d = d as u64;
    let parts = if d % 2 == 1 { [(d - 1, d - 1), (1, 2 * d - 1)] } else { [(d - 2, d - 2), (2, 2 * d - 2)] };
    parts.into_iter().filter(|(w, _)| *w > 0).collect()
}

/// The limit law of the block circulant model with `d` blocks.
pub fn circulant_law(d: usize) -> SemicircleMixture {
    let df = d as f64;
    let comps = circulant_components(d);
    SemicircleMixture {
        weights: comps.iter().map(|(w, _)| *w as f64 / df).collect(),
        variances: comps.iter().map(|(_, t)| *t as f64 / df).collect(),
    }
}

/// Uniform grid on `[lo, hi]` with spacing at most `step`, refined to
/// spacing `eps/2` within `2·step` of each edge.
pub fn refined_grid(lo: f64, hi: f64, step: f64, edges: &[f64], eps: f64) -> Result<Vec<f64>, DysonError> {
    if !(hi > lo && step > 0.0 && eps > 0.0) {
        return Err(DysonError::BadGrid);
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let mut xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let fine = eps / 2.0;
    for &e in edges {
        let a = (e - 2.0 * step).max(lo);
        let b = (e + 2.0 * step).min(hi);
        if b <= a {
            continue;
        }
        let m = ((b - a) / fine).ceil() as usize;
        xs.extend((0..=m).map(|i| a + (b - a) * i as f64 / m as f64));
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < fine * 1e-6);
    Ok(xs)
}

/// A tabulated density `(x, ρ(x))` on a sorted grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityTable {
    pub eps: f64,
    pub points: Vec<(f64, f64)>,
}

impl DensityTable {
    /// Trapezoid integral of the table.
    pub fn mass(&self) -> f64 {
        self.points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    }
}

/// `ρ(x) = −Im g(x + iε)/π` on `grid`, clipped at zero. Values below
/// `−1e-9` before clipping indicate a broken transform and are reported as
/// failures.
///
/// The trapezoid mass of the result over a grid covering the support differs
/// from 1 by `O(ε) + O(h²)` in the interior step `h`, with an extra
/// `O(h^{3/2})` contribution from square-root edges that [`refined_grid`]
/// suppresses.
pub fn stieltjes_density(
    g: impl Fn(C64) -> Result<C64, DysonError>,
    grid: &[f64],
    eps: f64,
) -> Result<DensityTable, DysonError> {
    if grid.is_empty() || !(eps > 0.0) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(DysonError::BadGrid);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &x in grid {
        let v = g(C64::new(x, eps)).map_err(|e| DysonError::DensityFailure { x, reason: e.to_string() })?;
        let rho = -v.im / std::f64::consts::PI;
        if rho < -1e-9 {
            return Err(DysonError::DensityFailure { x, reason: format!("negative density {rho:e}") });
        }
        points.push((x, rho.max(0.0)));
    }
    Ok(DensityTable { eps, points })
}

/// Density of the scalar Cauchy transform `tr_d G` of a covariance map.
pub fn map_density(
    eta: &CovarianceMap,
    grid: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> Result<DensityTable, DysonError> {
    stieltjes_density(
        |z| {
            let sol = solve_semicircular(eta, z, opts)?;
            if !sol.converged {
                return Err(DysonError::BadOptions(format!(
                    "no convergence after {} iterations (residual {:e})",
                    sol.iterations, sol.residual
                )));
            }
            Ok(sol.trace())
        },
        grid,
        eps,
    )
}

/// Piecewise-linear CDF from the cumulative trapezoid of a density table,
/// renormalized to total mass 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedCdf {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

pub fn cdf_from_density(table: &DensityTable) -> Result<TabulatedCdf, DysonError> {
    let pts = &table.points;
    if pts.is_empty() {
        return Err(DysonError::BadGrid);
    }
    let mut cum = Vec::with_capacity(pts.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in pts.windows(2) {
        acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
        cum.push(acc);
    }
    if acc > 0.0 {
        cum.iter_mut().for_each(|c| *c /= acc);
    } else {
        // No mass at all: a point mass at the right end.
        cum.iter_mut().for_each(|c| *c = 0.0);
        *cum.last_mut().unwrap() = 1.0;
    }
    Ok(TabulatedCdf { xs: pts.iter().map(|p| p.0).collect(), cum })
}

impl TabulatedCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return if n == 1 && x >= self.xs[0] { 1.0 } else { 0.0 };
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let k = self.xs.partition_point(|v| *v <= x);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (c0, c1) = (self.cum[k - 1], self.cum[k]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
        (c0 + t * (c1 - c0)).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eta::CovarianceMap;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn converges_near_the_edge_close_to_the_axis() {
        // The plain iteration spirals here; the stall path has to finish it.
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        for x in [-2.01, -1.99, -1.9, 0.0] {
            for eps in [1e-3, 1e-6] {
                let z = c(x, eps);
                let sol = solve_semicircular(&eta, z, &SolverOptions::default()).unwrap();
                assert!(sol.converged, "{z}");
                let exact = scalar_semicircle_cauchy(1.0, z).unwrap();
                assert!((sol.trace() - exact).norm() < 1e-8, "{z}: {} vs {exact}", sol.trace());
            }
        }
    }

    #[test]
    fn zero_map_gives_inverse_z() {
        let eta = CovarianceMap::scalar(2, 0.0).unwrap();
        let sol = solve_semicircular(&eta, c(0.0, 3.0), &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.residual, 0.0);
        assert!(sol.g.max_abs_diff(&ComplexMatrix::scalar(2, c(0.0, -1.0 / 3.0))) < 1e-16);
    }

    #[test]
    fn scalar_semicircle_at_2i() {
        let want = c(0.0, 1.0 - 2f64.sqrt());
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        let sol = solve_semicircular(&eta, c(0.0, 2.0), &SolverOptions::default()).unwrap();
        assert!(sol.converged && sol.residual <= 1e-11);
        assert!((sol.trace() - want).norm() < 1e-10);
        assert!((scalar_semicircle_cauchy(1.0, c(0.0, 2.0)).unwrap() - want).norm() < 1e-15);
    }

    #[test]
    fn flat_map_reduces_to_scalar() {
        let eta = CovarianceMap::flat(3, 1.0).unwrap();
        let sol = solve_semicircular(&eta, c(0.0, 2.0), &SolverOptions::default()).unwrap();
        let want = ComplexMatrix::scalar(3, c(0.0, 1.0 - 2f64.sqrt()));
        assert!(sol.g.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn rejects_lower_half_plane_and_bad_options() {
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        assert!(matches!(
            solve_semicircular(&eta, c(1.0, 0.0), &SolverOptions::default()),
            Err(DysonError::NotUpperHalfPlane(_))
        ));
        let bad = SolverOptions { min_damping: 0.0, ..SolverOptions::default() };
        assert!(matches!(solve_semicircular(&eta, c(0.0, 1.0), &bad), Err(DysonError::BadOptions(_))));
        assert!(scalar_semicircle_cauchy(0.0, c(0.0, 1.0)).is_err());
        assert!(scalar_semicircle_cauchy(1.0, c(0.0, -1.0)).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        let opts = SolverOptions { max_iter: 3, ..SolverOptions::default() };
        let sol = solve_semicircular(&eta, c(0.1, 0.01), &opts).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 3);
        assert!(sol.residual > opts.tol);
    }

    #[test]
    fn reported_residual_is_reproducible() {
        let eta = CovarianceMap::flat(2, 1.3).unwrap();
        let z = c(0.7, 0.4);
        let sol = solve_semicircular(&eta, z, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((semicircular_residual(&eta, z, &sol.g) - sol.residual).abs() < 1e-13);
    }

    #[test]
    fn semicircle_closed_form_properties() {
        for &(t, z) in &[(1.0, c(0.0, 1e6)), (2.0, c(-3.0, 0.1)), (0.3, c(0.2, 5.0)), (1.0, c(1.9, 1e-8))] {
            let g = scalar_semicircle_cauchy(t, z).unwrap();
            assert!(g.im < 0.0);
            let q = g * g * t - z * g + 1.0;
            assert!(q.norm() < 1e-12, "quadratic residual {q} at t={t} z={z}");
        }
        let g = scalar_semicircle_cauchy(1.0, c(0.0, 1e6)).unwrap();
        assert!((g - c(0.0, -1e-6)).norm() < 1e-12 * 1e-6);
        let g0 = scalar_semicircle_cauchy(1.0, c(0.0, 1e-9)).unwrap();
        assert!((g0.im + 1.0).abs() < 1e-8);
    }

    #[test]
    fn wishart_trivial_cases() {
        let zero = EtaPair::new(CovarianceMap::zero(2), CovarianceMap::zero(2)).unwrap();
        let z = c(1.0, 1.0);
        let sol = solve_wishart(&zero, z, &SolverOptions::default()).unwrap();
        assert!(sol.g.max_abs_diff(&ComplexMatrix::scalar(2, z.inv())) < 1e-15);

        let pair = EtaPair::new(CovarianceMap::scalar(1, 1.0).unwrap(), CovarianceMap::zero(1)).unwrap();
        let sol = solve_wishart(&pair, c(0.0, 2.0), &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!((sol.trace() - c(-0.2, -0.4)).norm() < 1e-10);
    }

    #[test]
    fn wishart_matches_marchenko_pastur() {
        // Square complex Ginibre: w g² − w g + 1 = 0.
        let t = crate::eta::CovarianceTensor::independent(1, 1.0).unwrap();
        let pair = EtaPair::wishart(&t).unwrap();
        for &w in &[c(4.0, 0.01), c(1.0, 0.5), c(-1.0, 0.2), c(2.0, 3.0)] {
            let sol = solve_wishart(&pair, w, &SolverOptions::default()).unwrap();
            assert!(sol.converged, "no convergence at {w}");
            let g = sol.trace();
            assert!((w * g * g - w * g + 1.0).norm() < 1e-9);
            assert!(g.im < 0.0);
        }
    }

    #[test]
    fn circulant_components_examples() {
        assert_eq!(circulant_law(3).weights, vec![2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(circulant_law(3).variances, vec![2.0 / 3.0, 5.0 / 3.0]);
        assert_eq!(circulant_law(4).weights, vec![0.5, 0.5]);
        assert_eq!(circulant_law(4).variances, vec![0.5, 1.5]);
        assert_eq!(circulant_components(2), vec![(2, 2)]);
        for d in 2..=20u64 {
            let comps = circulant_components(d as usize);
            assert_eq!(comps.iter().map(|c| c.0).sum::<u64>(), d);
            assert_eq!(comps.iter().map(|c| c.0 * c.1).sum::<u64>(), d * d);
        }
    }

    #[test]
    fn mixture_validation() {
        assert!(matches!(mixture_cauchy(&[0.5, 0.4], &[1.0, 2.0], c(0.0, 1.0)), Err(DysonError::BadWeights { .. })));
        assert!(matches!(mixture_cauchy(&[1.0], &[1.0, 2.0], c(0.0, 1.0)), Err(DysonError::MixtureShape { .. })));
        assert!(matches!(mixture_cauchy(&[1.0], &[0.0], c(0.0, 1.0)), Err(DysonError::BadVariance(_))));
        let z = c(0.3, 0.7);
        assert_eq!(mixture_cauchy(&[1.0], &[1.5], z).unwrap(), scalar_semicircle_cauchy(1.5, z).unwrap());
    }

    #[test]
    fn density_of_semicircle() {
        let g = |z| scalar_semicircle_cauchy(1.0, z);
        let table = stieltjes_density(g, &[0.0, 2.6, -3.0], 1e-4);
        assert!(matches!(table, Err(DysonError::BadGrid)));
        let table = stieltjes_density(g, &[-3.0, 0.0, 2.6], 1e-4).unwrap();
        assert!((table.points[1].1 - 1.0 / std::f64::consts::PI).abs() < 1e-3);
        assert!(table.points[0].1 <= 1e-3 && table.points[2].1 <= 1e-3);
    }

    #[test]
    fn cdf_of_semicircle() {
        let grid = refined_grid(-3.0, 3.0, 1e-3, &[-2.0, 2.0], 1e-4).unwrap();
        let table = stieltjes_density(|z| scalar_semicircle_cauchy(1.0, z), &grid, 1e-4).unwrap();
        assert!((table.mass() - 1.0).abs() < 2e-3);
        let cdf = cdf_from_density(&table).unwrap();
        assert!((cdf.eval(0.0) - 0.5).abs() < 2e-3);
        assert_eq!(cdf.eval(-3.0), 0.0);
        assert_eq!(cdf.eval(3.0), 1.0);
        assert!(cdf.eval(2.1) >= 0.999);
        assert!(cdf_from_density(&DensityTable { eps: 1e-4, points: vec![] }).is_err());
    }

    #[test]
    fn density_failure_names_x() {
        let table = stieltjes_density(|z| Ok(c(0.0, 1.0) / z.norm()), &[1.5], 1e-4);
        assert!(matches!(table, Err(DysonError::DensityFailure { x, .. }) if x == 1.5));
    }
}
