//! Seeded generators for the block random-matrix models.
//!
//! Each `(seed, trial)` pair owns an independent ChaCha stream, so trials can
//! be generated in any order or in parallel without changing a single draw.
//! Hermitian outputs are assembled as `S + S*` and are therefore exactly
//! Hermitian.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eta::{CovarianceTensor, EtaError};
use crate::linalg::{hermitian_eigenvalues, kron, pivoted_cholesky, ComplexMatrix, LinalgError, C64};

/// Relative pivot cutoff for the Cholesky factor of correlation data.
const CHOLESKY_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid model: {0}")]
    BadSpec(String),
    #[error("pool has {got} values but the model consumes {expected} entries")]
    PoolSize { expected: usize, got: usize },
    #[error("entry law {0} is not supported by this model")]
    UnsupportedLaw(String),
    #[error(transparent)]
    Eta(#[from] EtaError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn one() -> f64 {
    1.0
}

/// Distribution of a single matrix entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryLaw {
    /// Real and imaginary parts independent `N(0, variance/2)`.
    ComplexGaussian {
        #[serde(default = "one")]
        variance: f64,
    },
    RealGaussian {
        #[serde(default = "one")]
        variance: f64,
    },
    Rademacher {},
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: f64, b: f64, p: f64 },
    /// A uniformly random arrangement of a fixed list of values, one per
    /// entry slot. With `tile` the list is repeated to fill every slot.
    PermutationPool {
        values: Vec<f64>,
        #[serde(default)]
        tile: bool,
    },
    /// Pool of whole `d x d` blocks, arranged over the block slots.
    BlockPool {
        blocks: Vec<ComplexMatrix>,
        #[serde(default)]
        tile: bool,
    },
}

impl Default for EntryLaw {
    fn default() -> Self {
        EntryLaw::ComplexGaussian { variance: 1.0 }
    }
}

impl EntryLaw {
    pub fn name(&self) -> &'static str {
        match self {
            EntryLaw::ComplexGaussian { .. } => "complex_gaussian",
            EntryLaw::RealGaussian { .. } => "real_gaussian",
            EntryLaw::Rademacher {} => "rademacher",
            EntryLaw::TwoPoint { .. } => "two_point",
            EntryLaw::PermutationPool { .. } => "permutation_pool",
            EntryLaw::BlockPool { .. } => "block_pool",
        }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let bad = |m: String| Err(SampleError::BadSpec(m));
        match self {
            EntryLaw::ComplexGaussian { variance } | EntryLaw::RealGaussian { variance } => {
                if !(*variance >= 0.0 && variance.is_finite()) {
                    return bad(format!("variance must be nonnegative, got {variance}"));
                }
            }
            EntryLaw::Rademacher {} => {}
            EntryLaw::TwoPoint { a, b, p } => {
                if !(0.0..=1.0).contains(p) || !a.is_finite() || !b.is_finite() {
                    return bad(format!("two_point needs finite values and p in [0, 1], got p = {p}"));
                }
            }
            EntryLaw::PermutationPool { values, .. } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return bad("permutation_pool needs a nonempty list of finite values".into());
                }
            }
            EntryLaw::BlockPool { blocks, .. } => {
                if blocks.is_empty() {
                    return bad("block_pool needs at least one block".into());
                }
                let d = blocks[0].rows();
                if blocks.iter().any(|b| b.rows() != d || b.cols() != d) {
                    return bad("block_pool blocks must all be square of one size".into());
                }
            }
        }
        Ok(())
    }

    /// `E[x]`, or the pool mean.
    pub fn mean(&self) -> f64 {
        match self {
            EntryLaw::TwoPoint { a, b, p } => p * a + (1.0 - p) * b,
            EntryLaw::PermutationPool { values, .. } => values.iter().sum::<f64>() / values.len() as f64,
            _ => 0.0,
        }
    }

    /// `E|x − E x|²`, or the centred pool variance.
    pub fn variance(&self) -> f64 {
        match self {
            EntryLaw::ComplexGaussian { variance } | EntryLaw::RealGaussian { variance } => *variance,
            EntryLaw::Rademacher {} => 1.0,
            EntryLaw::TwoPoint { a, b, p } => p * (1.0 - p) * (a - b) * (a - b),
            EntryLaw::PermutationPool { values, .. } => {
                let m = self.mean();
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
            }
            EntryLaw::BlockPool { .. } => f64::NAN,
        }
    }

    pub fn is_pool(&self) -> bool {
        matches!(self, EntryLaw::PermutationPool { .. } | EntryLaw::BlockPool { .. })
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, EntryLaw::ComplexGaussian { .. } | EntryLaw::BlockPool { .. })
    }

    /// One draw from a non-pool law.
    fn draw<R: Rng>(&self, rng: &mut R) -> C64 {
        match self {
            EntryLaw::ComplexGaussian { variance } => {
                let s = (variance / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(s * re, s * im)
            }
            EntryLaw::RealGaussian { variance } => {
                let x: f64 = rng.sample(StandardNormal);
                C64::new(variance.sqrt() * x, 0.0)
            }
            EntryLaw::Rademacher {} => C64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0),
            EntryLaw::TwoPoint { a, b, p } => C64::new(if rng.random::<f64>() < *p { *a } else { *b }, 0.0),
            EntryLaw::PermutationPool { .. } | EntryLaw::BlockPool { .. } => {
                unreachable!("pools are drawn through EntryStream")
            }
        }
    }

    /// Centred, unit-variance complex draw with `E ξ² = 0`, or a real
    /// unit-variance draw when `real` is set. Used as the base vector for
    /// the correlated models.
    fn standard<R: Rng>(&self, rng: &mut R, real: bool, scale: f64) -> C64 {
        let m = self.mean();
        if self.is_complex() {
            let x = self.draw(rng) * scale;
            return if real { C64::new(x.re * std::f64::consts::SQRT_2, 0.0) } else { x };
        }
        let x = (self.draw(rng).re - m) * scale;
        if real {
            C64::new(x, 0.0)
        } else {
            let y = (self.draw(rng).re - m) * scale;
            C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
        }
    }

    fn base_scale(&self) -> Result<f64, SampleError> {
        if self.is_pool() {
            return Err(SampleError::UnsupportedLaw(self.name().into()));
        }
        let v = self.variance();
        if !(v > 0.0) {
            return Err(SampleError::BadSpec(format!("{} has zero variance and cannot drive a correlated model", self.name())));
        }
        Ok(1.0 / v.sqrt())
    }
}

/// Block random-matrix model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// `[A]_ij = (X_ij + X_ji*)/√(2N)` with i.i.d. `d x d` blocks `X_ij`.
    HermitizedIid {},
    /// Block Wigner matrix: `x_ij` below the diagonal, `x_ji*` above and
    /// `(x_ii + x_ii*)/2` on it, scaled by `1/√N`.
    WignerBlocks {},
    /// `Σ_k β_k ⊗ Y_k + β_k* ⊗ Y_k*` with `Y_k` jointly Gaussian across `k`,
    /// `Cov(y^(k), conj y^(l)) = σ(k,l)`, entries scaled by `1/√N`.
    Kronecker { betas: Vec<ComplexMatrix>, sigma: ComplexMatrix },
    /// `d x d` grid of `N x N` blocks with entry covariance `σ(i,j;k,l)`
    /// across block indices, scaled by `1/√(dN)`.
    CorrelatedBlocks { tensor: CovarianceTensor },
    /// Self-adjoint block circulant of `⌊d/2⌋ + 1` independent Wigner
    /// matrices, prefactor `1/√d`.
    Circulant {
        #[serde(default)]
        real_entries: bool,
    },
    /// `H H*` with `H` a `d x d` grid of `N x N` blocks of covariance
    /// `σ(i,j;k,l)`, scaled by `1/√(dN)`.
    WishartCorrelated { tensor: CovarianceTensor },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::HermitizedIid {} => "hermitized_iid",
            Model::WignerBlocks {} => "wigner_blocks",
            Model::Kronecker { .. } => "kronecker",
            Model::CorrelatedBlocks { .. } => "correlated_blocks",
            Model::Circulant { .. } => "circulant",
            Model::WishartCorrelated { .. } => "wishart_correlated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: Model,
    pub d: usize,
    pub n: usize,
    #[serde(default)]
    pub law: EntryLaw,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(model: Model, d: usize, n: usize, law: EntryLaw, seed: u64) -> Self {
        Self { model, d, n, law, seed }
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_law(&self, law: EntryLaw) -> Self {
        Self { law, ..self.clone() }
    }

    /// Side length of the sampled matrix.
    pub fn dimension(&self) -> usize {
        self.d * self.n
    }

    /// Number of entries (or blocks, for a block pool) drawn per sample.
    pub fn pool_slots(&self) -> Option<usize> {
        let (n, d) = (self.n, self.d);
        let blocks = match self.model {
            Model::HermitizedIid {} => n * n,
            Model::WignerBlocks {} => n * (n + 1) / 2,
            _ => return None,
        };
        Some(if matches!(self.law, EntryLaw::BlockPool { .. }) { blocks } else { blocks * d * d })
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        if self.n == 0 || self.d == 0 {
            return Err(SampleError::BadSpec("d and n must be at least 1".into()));
        }
        self.law.validate()?;
        match &self.model {
            Model::HermitizedIid {} | Model::WignerBlocks {} => {
                let slots = self.pool_slots().expect("pool models");
                match &self.law {
                    EntryLaw::PermutationPool { values, tile } => check_pool(values.len(), slots, *tile)?,
                    EntryLaw::BlockPool { blocks, tile } => {
                        if blocks[0].rows() != self.d {
                            return Err(SampleError::BadSpec(format!(
                                "block_pool blocks are {0}x{0} but d = {1}",
                                blocks[0].rows(),
                                self.d
                            )));
                        }
                        check_pool(blocks.len(), slots, *tile)?;
                    }
                    _ => {}
                }
            }
            Model::Kronecker { betas, sigma } => {
                if betas.is_empty() {
                    return Err(SampleError::BadSpec("kronecker needs at least one beta".into()));
                }
                if betas.iter().any(|b| b.rows() != self.d || b.cols() != self.d) {
                    return Err(SampleError::BadSpec(format!("every beta must be {0}x{0}", self.d)));
                }
                if sigma.rows() != betas.len() || sigma.cols() != betas.len() {
                    return Err(SampleError::BadSpec(format!("sigma must be {0}x{0}", betas.len())));
                }
                self.law.base_scale()?;
            }
            Model::CorrelatedBlocks { tensor } | Model::WishartCorrelated { tensor } => {
                if tensor.d() != self.d {
                    return Err(SampleError::BadSpec(format!("tensor has d = {} but model d = {}", tensor.d(), self.d)));
                }
                self.law.base_scale()?;
            }
            Model::Circulant { .. } => {
                if self.d < 2 {
                    return Err(SampleError::BadSpec("circulant needs d >= 2".into()));
                }
                self.law.base_scale()?;
            }
        }
        Ok(())
    }
}

fn check_pool(len: usize, slots: usize, tile: bool) -> Result<(), SampleError> {
    let ok = if tile { slots % len == 0 } else { slots == len };
    if ok {
        Ok(())
    } else {
        Err(SampleError::PoolSize { expected: slots, got: len })
    }
}

/// Independent stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Sorted eigenvalues of one sampled matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    pub seed: u64,
    pub trial_index: u64,
}

/// Source of block entries for the Hermitized and Wigner models.
struct EntryStream {
    pool: Option<Vec<C64>>,
    blocks: Option<Vec<ComplexMatrix>>,
    pos: usize,
}

impl EntryStream {
    fn new<R: Rng>(law: &EntryLaw, slots: usize, rng: &mut R) -> Self {
        let mut s = Self { pool: None, blocks: None, pos: 0 };
        match law {
            EntryLaw::PermutationPool { values, .. } => {
                let mut pool: Vec<C64> = values.iter().cycle().take(slots).map(|v| C64::new(*v, 0.0)).collect();
                pool.shuffle(rng);
                s.pool = Some(pool);
            }
            EntryLaw::BlockPool { blocks, .. } => {
                let mut pool: Vec<ComplexMatrix> = blocks.iter().cycle().take(slots).cloned().collect();
                pool.shuffle(rng);
                s.blocks = Some(pool);
            }
            _ => {}
        }
        s
    }

    fn block<R: Rng>(&mut self, law: &EntryLaw, d: usize, rng: &mut R) -> ComplexMatrix {
        if let Some(blocks) = &self.blocks {
            self.pos += 1;
            return blocks[self.pos - 1].clone();
        }
        ComplexMatrix::from_fn(d, d, |_, _| match &self.pool {
            Some(pool) => {
                self.pos += 1;
                pool[self.pos - 1]
            }
            None => law.draw(rng),
        })
    }
}

/// Draws one matrix of the model for trial `trial`.
pub fn sample(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    spec.validate()?;
    let mut rng = trial_rng(spec.seed, trial);
    match &spec.model {
        Model::HermitizedIid {} => Ok(hermitized(spec, &mut rng)),
        Model::WignerBlocks {} => Ok(wigner_blocks(spec, &mut rng)),
        Model::Kronecker { betas, sigma } => kronecker(spec, betas, sigma, &mut rng),
        Model::CorrelatedBlocks { tensor } => correlated_blocks(spec, tensor, &mut rng),
        Model::Circulant { real_entries } => Ok(circulant(spec, *real_entries, &mut rng)),
        Model::WishartCorrelated { tensor } => Ok(wishart_factor_with(spec, tensor, &mut rng)?.gram()),
    }
}

/// Eigenvalues of [`sample`].
pub fn sample_spectrum(spec: &ModelSpec, trial: u64) -> Result<SpectrumSample, SampleError> {
    let m = sample(spec, trial)?;
    Ok(SpectrumSample { eigenvalues: hermitian_eigenvalues(&m)?, seed: spec.seed, trial_index: trial })
}

pub fn sample_hermitized(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::HermitizedIid {}), "hermitized_iid")?;
    sample(spec, trial)
}

pub fn sample_wigner_blocks(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::WignerBlocks {}), "wigner_blocks")?;
    sample(spec, trial)
}

pub fn sample_kronecker(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::Kronecker { .. }), "kronecker")?;
    sample(spec, trial)
}

pub fn sample_correlated_blocks(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::CorrelatedBlocks { .. }), "correlated_blocks")?;
    sample(spec, trial)
}

pub fn sample_circulant(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::Circulant { .. }), "circulant")?;
    sample(spec, trial)
}

/// `H H*` for the Wishart model.
pub fn sample_wishart(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    require(spec, matches!(spec.model, Model::WishartCorrelated { .. }), "wishart_correlated")?;
    sample(spec, trial)
}

/// The factor `H` behind [`sample_wishart`]; same draws for the same trial.
pub fn sample_wishart_factor(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    spec.validate()?;
    let Model::WishartCorrelated { tensor } = &spec.model else {
        return Err(SampleError::BadSpec(format!("expected wishart_correlated, got {}", spec.model.name())));
    };
    wishart_factor_with(spec, tensor, &mut trial_rng(spec.seed, trial))
}

/// Hermitized permutation-pool model; the law must be a pool.
pub fn sample_exchangeable(spec: &ModelSpec, trial: u64) -> Result<ComplexMatrix, SampleError> {
    if !spec.law.is_pool() {
        return Err(SampleError::UnsupportedLaw(spec.law.name().into()));
    }
    sample_hermitized(spec, trial)
}

fn require(spec: &ModelSpec, ok: bool, want: &str) -> Result<(), SampleError> {
    if ok {
        Ok(())
    } else {
        Err(SampleError::BadSpec(format!("expected {want}, got {}", spec.model.name())))
    }
}

/// `[[0, H], [H*, 0]]`.
pub fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    let (r, c) = (h.rows(), h.cols());
    let mut s = ComplexMatrix::zeros(r + c, r + c);
    for i in 0..r {
        for j in 0..c {
            s[(i, r + j)] = h[(i, j)];
        }
    }
    s.plus_adjoint()
}

fn hermitized<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ComplexMatrix {
    let (n, d) = (spec.n, spec.d);
    let scale = 1.0 / (2.0 * n as f64).sqrt();
    let mut stream = EntryStream::new(&spec.law, spec.pool_slots().unwrap(), rng);
    let mut s = ComplexMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..n {
            let x = stream.block(&spec.law, d, rng);
            put_block(&mut s, i * d, j * d, &x, scale);
        }
    }
    s.plus_adjoint()
}

fn wigner_blocks<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ComplexMatrix {
    let (n, d) = (spec.n, spec.d);
    let scale = 1.0 / (n as f64).sqrt();
    let mut stream = EntryStream::new(&spec.law, spec.pool_slots().unwrap(), rng);
    let mut s = ComplexMatrix::zeros(n * d, n * d);
    for i in 0..n {
        for j in 0..=i {
            let x = stream.block(&spec.law, d, rng);
            put_block(&mut s, i * d, j * d, &x, if i == j { 0.5 * scale } else { scale });
        }
    }
    s.plus_adjoint()
}

fn put_block(s: &mut ComplexMatrix, r0: usize, c0: usize, x: &ComplexMatrix, scale: f64) {
    for k in 0..x.rows() {
        for l in 0..x.cols() {
            s[(r0 + k, c0 + l)] = x[(k, l)] * scale;
        }
    }
}

/// Correlated vector `L ξ` with `ξ` a standard base vector.
fn correlated<R: Rng>(l: &ComplexMatrix, law: &EntryLaw, scale: f64, real: bool, rng: &mut R) -> Vec<C64> {
    let m = l.rows();
    let xi: Vec<C64> = (0..m).map(|_| law.standard(rng, real, scale)).collect();
    (0..m).map(|r| l.row(r).iter().zip(&xi).map(|(a, b)| a * b).sum()).collect()
}

fn kronecker<R: Rng>(
    spec: &ModelSpec,
    betas: &[ComplexMatrix],
    sigma: &ComplexMatrix,
    rng: &mut R,
) -> Result<ComplexMatrix, SampleError> {
    let n = spec.n;
    let l = pivoted_cholesky(sigma, CHOLESKY_REL_TOL)?;
    let scale = spec.law.base_scale()?;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut ys = vec![ComplexMatrix::zeros(n, n); betas.len()];
    for r in 0..n {
        for c in 0..n {
            let y = correlated(&l, &spec.law, scale, false, rng);
            for (k, yk) in ys.iter_mut().enumerate() {
                yk[(r, c)] = y[k] * inv_sqrt_n;
            }
        }
    }
    let mut s = ComplexMatrix::zeros(spec.dimension(), spec.dimension());
    for (beta, y) in betas.iter().zip(&ys) {
        s += &kron(beta, y);
    }
    Ok(s.plus_adjoint())
}

fn correlated_blocks<R: Rng>(
    spec: &ModelSpec,
    tensor: &CovarianceTensor,
    rng: &mut R,
) -> Result<ComplexMatrix, SampleError> {
    let (n, d) = (spec.n, spec.d);
    let l = pivoted_cholesky(&tensor.covariance_matrix(), CHOLESKY_REL_TOL)?;
    let scale = spec.law.base_scale()?;
    let w = 1.0 / ((d * n) as f64).sqrt();
    let mut s = ComplexMatrix::zeros(d * n, d * n);
    for r in 0..n {
        for p in r..n {
            let a = correlated(&l, &spec.law, scale, false, rng);
            let f = if r == p { 0.5 * w } else { w };
            for i in 0..d {
                for j in 0..d {
                    s[(i * n + r, j * n + p)] = a[i * d + j] * f;
                }
            }
        }
    }
    Ok(s.plus_adjoint())
}

fn circulant<R: Rng>(spec: &ModelSpec, real: bool, rng: &mut R) -> ComplexMatrix {
    let (n, d) = (spec.n, spec.d);
    let scale = spec.law.base_scale().expect("validated");
    let copies = d / 2 + 1;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let wigners: Vec<ComplexMatrix> = (0..copies)
        .map(|_| {
            let mut s = ComplexMatrix::zeros(n, n);
            for r in 0..n {
                for p in r..n {
                    let f = if r == p { 0.5 * inv_sqrt_n } else { inv_sqrt_n };
                    s[(r, p)] = spec.law.standard(rng, real, scale) * f;
                }
            }
            s.plus_adjoint()
        })
        .collect();
    let w = 1.0 / (d as f64).sqrt();
    let mut x = ComplexMatrix::zeros(d * n, d * n);
    for br in 0..d {
        for bc in 0..d {
            let m = (bc + d - br) % d;
            let a = &wigners[m.min(d - m)];
            put_block(&mut x, br * n, bc * n, a, w);
        }
    }
    x
}

fn wishart_factor_with<R: Rng>(
    spec: &ModelSpec,
    tensor: &CovarianceTensor,
    rng: &mut R,
) -> Result<ComplexMatrix, SampleError> {
    let (n, d) = (spec.n, spec.d);
    let l = pivoted_cholesky(&tensor.covariance_matrix(), CHOLESKY_REL_TOL)?;
    let scale = spec.law.base_scale()?;
    let w = 1.0 / ((d * n) as f64).sqrt();
    let mut h = ComplexMatrix::zeros(d * n, d * n);
    for r in 0..n {
        for c in 0..n {
            let a = correlated(&l, &spec.law, scale, false, rng);
            for i in 0..d {
                for j in 0..d {
                    h[(i * n + r, j * n + c)] = a[i * d + j] * w;
                }
            }
        }
    }
    Ok(h)
}

/// Writes `rows`, `cols` as little-endian `u32` followed by the entries as
/// little-endian `f64` pairs `(re, im)` in row-major order.
pub fn write_matrix_binary<W: Write>(m: &ComplexMatrix, mut w: W) -> io::Result<()> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"));
    w.write_all(&dim(m.rows())?.to_le_bytes())?;
    w.write_all(&dim(m.cols())?.to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut r: R) -> io::Result<ComplexMatrix> {
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    let mut b8 = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        data.push(C64::new(re, f64::from_le_bytes(b8)));
    }
    ComplexMatrix::new(rows, cols, data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn spec(model: Model, d: usize, n: usize, law: EntryLaw) -> ModelSpec {
        ModelSpec::new(model, d, n, law, 7)
    }

    #[test]
    fn deterministic_two_point_hermitized() {
        let law = EntryLaw::TwoPoint { a: 0.3, b: 0.3, p: 0.5 };
        let m = sample_hermitized(&spec(Model::HermitizedIid {}, 1, 1, law), 0).unwrap();
        assert!((m[(0, 0)].re - 2f64.sqrt() * 0.3).abs() < 1e-15);
    }

    #[test]
    fn deterministic_two_point_wigner() {
        let law = EntryLaw::TwoPoint { a: 0.3, b: 0.3, p: 0.5 };
        let m = sample_wigner_blocks(&spec(Model::WignerBlocks {}, 1, 1, law), 0).unwrap();
        assert_eq!(m[(0, 0)], c(0.3, 0.0));
    }

    #[test]
    fn outputs_are_exactly_hermitian() {
        let t = CovarianceTensor::independent(2, 1.0).unwrap();
        let models = [
            (Model::HermitizedIid {}, 2),
            (Model::WignerBlocks {}, 3),
            (Model::Kronecker { betas: vec![ComplexMatrix::identity(2)], sigma: ComplexMatrix::identity(1) }, 2),
            (Model::CorrelatedBlocks { tensor: t.clone() }, 2),
            (Model::Circulant { real_entries: false }, 3),
            (Model::WishartCorrelated { tensor: t }, 2),
        ];
        for (model, d) in models {
            let m = sample(&spec(model, d, 5, EntryLaw::default()), 3).unwrap();
            assert_eq!(m.hermiticity_defect(), 0.0);
        }
    }

    #[test]
    fn trials_are_reproducible_and_distinct() {
        let s = spec(Model::HermitizedIid {}, 2, 4, EntryLaw::default());
        assert_eq!(sample(&s, 1).unwrap(), sample(&s, 1).unwrap());
        assert_ne!(sample(&s, 1).unwrap(), sample(&s, 2).unwrap());
        assert_ne!(sample(&s, 1).unwrap(), sample(&s.with_seed(8), 1).unwrap());
    }

    #[test]
    fn pool_size_is_checked() {
        let law = EntryLaw::PermutationPool { values: vec![1.0, -1.0, 1.0], tile: false };
        let s = spec(Model::HermitizedIid {}, 1, 2, law);
        assert_eq!(sample(&s, 0), Err(SampleError::PoolSize { expected: 4, got: 3 }));
        let tiled = s.with_law(EntryLaw::PermutationPool { values: vec![1.0, -1.0], tile: true });
        assert!(sample(&tiled, 0).is_ok());
        let wigner = spec(Model::WignerBlocks {}, 1, 3, EntryLaw::PermutationPool { values: vec![1.0; 6], tile: false });
        assert!(sample(&wigner, 0).is_ok());
    }

    #[test]
    fn constant_pool_gives_rank_one() {
        let n = 4;
        let law = EntryLaw::PermutationPool { values: vec![0.5; n * n], tile: false };
        let m = sample_exchangeable(&spec(Model::HermitizedIid {}, 1, n, law), 0).unwrap();
        let want = 2.0 * 0.5 / (2.0 * n as f64).sqrt();
        assert!(m.as_slice().iter().all(|v| (v.re - want).abs() < 1e-15 && v.im == 0.0));
        let ev = hermitian_eigenvalues(&m).unwrap();
        assert!(ev[..n - 1].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pool_is_a_permutation() {
        let values: Vec<f64> = (0..9).map(|v| v as f64).collect();
        let law = EntryLaw::PermutationPool { values: values.clone(), tile: false };
        let s = spec(Model::HermitizedIid {}, 1, 3, law);
        // Recover X from the trial's stream and check it is a rearrangement.
        let mut rng = trial_rng(s.seed, 0);
        let mut stream = EntryStream::new(&s.law, 9, &mut rng);
        let mut drawn: Vec<f64> = (0..9).map(|_| stream.block(&s.law, 1, &mut rng)[(0, 0)].re).collect();
        drawn.sort_by(f64::total_cmp);
        assert_eq!(drawn, values);
    }

    #[test]
    fn pool_arrangements_are_uniform() {
        let law = EntryLaw::PermutationPool { values: vec![0.0, 1.0, 2.0, 3.0], tile: false };
        let trials = 24_000;
        let mut counts = std::collections::HashMap::new();
        for t in 0..trials {
            let mut rng = trial_rng(7, t);
            let mut stream = EntryStream::new(&law, 4, &mut rng);
            let key: Vec<u8> = (0..4).map(|_| stream.block(&law, 1, &mut rng)[(0, 0)].re as u8).collect();
            *counts.entry(key).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 24);
        // Expected 1000 each, sd ≈ 31.
        for (key, n) in counts {
            assert!((850..=1150).contains(&n), "{key:?}: {n}");
        }
    }

    #[test]
    fn zero_correlations_give_zero_matrices() {
        let z = spec(
            Model::Kronecker { betas: vec![ComplexMatrix::identity(2)], sigma: ComplexMatrix::zeros(1, 1) },
            2,
            3,
            EntryLaw::default(),
        );
        assert_eq!(sample(&z, 0).unwrap(), ComplexMatrix::zeros(6, 6));
        let t = CovarianceTensor::zeros(2);
        let z = spec(Model::CorrelatedBlocks { tensor: t.clone() }, 2, 3, EntryLaw::default());
        assert_eq!(sample(&z, 0).unwrap(), ComplexMatrix::zeros(6, 6));
        let z = spec(Model::WishartCorrelated { tensor: t }, 2, 3, EntryLaw::default());
        assert_eq!(sample(&z, 0).unwrap(), ComplexMatrix::zeros(6, 6));
    }

    #[test]
    fn circulant_structure() {
        for d in [2usize, 3, 4, 5] {
            let n = 3;
            let m = sample_circulant(&spec(Model::Circulant { real_entries: false }, d, n, EntryLaw::default()), 0).unwrap();
            for br in 0..d {
                for bc in 0..d {
                    for r in 0..n {
                        for p in 0..n {
                            let a = m[(br * n + r, bc * n + p)];
                            let b = m[(((br + 1) % d) * n + r, ((bc + 1) % d) * n + p)];
                            assert_eq!(a, b);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn wishart_is_psd_and_matches_factor() {
        let t = CovarianceTensor::independent(2, 1.0).unwrap();
        let s = spec(Model::WishartCorrelated { tensor: t }, 2, 6, EntryLaw::Rademacher {});
        let w = sample_wishart(&s, 4).unwrap();
        let h = sample_wishart_factor(&s, 4).unwrap();
        assert_eq!(w, h.gram());
        assert!(hermitian_eigenvalues(&w).unwrap()[0] >= -1e-9);
    }

    #[test]
    fn model_mismatch_and_bad_specs() {
        let s = spec(Model::HermitizedIid {}, 1, 2, EntryLaw::Rademacher {});
        assert!(matches!(sample_wishart(&s, 0), Err(SampleError::BadSpec(_))));
        let s = spec(Model::Circulant { real_entries: false }, 1, 2, EntryLaw::default());
        assert!(sample(&s, 0).is_err());
        let pool = EntryLaw::PermutationPool { values: vec![1.0], tile: true };
        let s = spec(Model::Circulant { real_entries: false }, 3, 2, pool);
        assert!(matches!(sample(&s, 0), Err(SampleError::UnsupportedLaw(_))));
        let s = spec(Model::HermitizedIid {}, 0, 2, EntryLaw::Rademacher {});
        assert!(sample(&s, 0).is_err());
        let s = spec(Model::HermitizedIid {}, 1, 2, EntryLaw::RealGaussian { variance: -1.0 });
        assert!(sample(&s, 0).is_err());
    }

    #[test]
    fn hermitize_layout() {
        let h = ComplexMatrix::from_fn(2, 2, |r, cc| c((r * 2 + cc) as f64, 1.0));
        let x = hermitize(&h);
        assert_eq!(x[(0, 3)], h[(0, 1)]);
        assert_eq!(x[(3, 0)], h[(0, 1)].conj());
        assert_eq!(x[(0, 1)], c(0.0, 0.0));
        assert_eq!(x.hermiticity_defect(), 0.0);
    }

    #[test]
    fn binary_roundtrip() {
        let m = ComplexMatrix::from_fn(2, 3, |r, cc| c(r as f64 - 0.5, cc as f64 * 1e-300));
        let mut buf = Vec::new();
        write_matrix_binary(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 6 * 16);
        assert_eq!(&buf[..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(read_matrix_binary(&buf[..]).unwrap(), m);
        assert!(read_matrix_binary(&buf[..20]).is_err());
    }

    #[test]
    fn law_serde() {
        let law: EntryLaw = serde_json::from_str(r#"{"kind": "complex_gaussian"}"#).unwrap();
        assert_eq!(law, EntryLaw::ComplexGaussian { variance: 1.0 });
        let law: EntryLaw = serde_json::from_str(r#"{"kind": "two_point", "a": 1, "b": -1, "p": 0.5}"#).unwrap();
        assert_eq!(law.variance(), 1.0);
        assert!(serde_json::from_str::<EntryLaw>(r#"{"kind": "rademacher", "x": 1}"#).is_err());
    }
}
