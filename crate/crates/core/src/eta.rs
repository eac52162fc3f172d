//! Completely positive covariance maps `η: M_d -> M_d`.
//!
//! Every map is lowered to its Choi matrix
//! `C[(i,k),(j,l)] = η(E_ij)[k][l]` (row index `i*d + k`, column `j*d + l`),
//! so application, positivity checks and norms share one code path:
//!
//! ```text
//! η(B)[k][l] = Σ_{i,j} B[i][j] · C[(i,k),(j,l)]
//! ```
//!
//! The Kronecker form additionally keeps its structured representation and
//! applies it directly when that is cheaper than the contraction.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, ComplexMatrix, LinalgError, C64};
use crate::serde_complex::ComplexValue;

/// Minimum Choi eigenvalue accepted as positive semidefinite.
pub const CP_TOL: f64 = 1e-10;
/// Tolerance on the Hermitian symmetry of covariance tensors.
pub const TENSOR_SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EtaError {
    #[error("no samples supplied")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("tensor violates Hermitian symmetry σ(i,j;k,l) = conj σ(k,l;i,j) by {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("tensor violates mirror symmetry σ(i,j;k,l) = σ(l,k;j,i) by {defect:e}")]
    NotMirrorSymmetric { defect: f64 },
    #[error("tensor must be real-valued (max imaginary part {max_imag:e})")]
    NotReal { max_imag: f64 },
    #[error("scale must be nonnegative and finite, got {0}")]
    BadScale(f64),
    #[error("map is not completely positive (min Choi eigenvalue {min_eigenvalue:e})")]
    NotCompletelyPositive { min_eigenvalue: f64 },
    #[error("tensor entry index {index:?} out of range for d = {d}")]
    IndexOutOfRange { index: [usize; 4], d: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

fn c0() -> C64 {
    C64::new(0.0, 0.0)
}

/// Second-order statistics `σ(i,j;k,l)` of the entries of a `d x d` random
/// block, in the Hermitian convention `σ(i,j;k,l) = E[a_ij · conj(a_kl)]`
/// taken at a common entry position.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTensor {
    d: usize,
    sigma: Vec<C64>,
}

impl CovarianceTensor {
    /// Validates Hermitian symmetry and positive semidefiniteness of the
    /// `d² x d²` matrix `Σ[(i,j),(k,l)] = σ(i,j;k,l)`.
    pub fn new(d: usize, sigma: Vec<C64>) -> Result<Self, EtaError> {
        if d == 0 || sigma.len() != d.pow(4) {
            return Err(EtaError::DimensionMismatch(format!(
                "tensor for d = {d} needs {} entries, got {}",
                d.pow(4),
                sigma.len()
            )));
        }
        let t = Self { d, sigma };
        let defect = t.hermitian_defect();
        if defect > TENSOR_SYMMETRY_TOL * (1.0 + t.max_abs()) {
            return Err(EtaError::NotHermitian { defect });
        }
        let min_eigenvalue = hermitian_eigenvalues(&t.covariance_matrix().real_part())?[0];
        if min_eigenvalue < -CP_TOL {
            return Err(EtaError::NotPsd { min_eigenvalue });
        }
        Ok(t)
    }

    pub fn from_fn(d: usize, f: impl Fn(usize, usize, usize, usize) -> C64) -> Result<Self, EtaError> {
        let mut sigma = Vec::with_capacity(d.pow(4));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        sigma.push(f(i, j, k, l));
                    }
                }
            }
        }
        Self::new(d, sigma)
    }

    /// Builds the tensor from `Σ[(i,j),(k,l)]` given as a `d² x d²` matrix.
    pub fn from_covariance_matrix(d: usize, m: &ComplexMatrix) -> Result<Self, EtaError> {
        if m.rows() != d * d || m.cols() != d * d {
            return Err(EtaError::DimensionMismatch(format!("expected {0}x{0} covariance", d * d)));
        }
        Self::from_fn(d, |i, j, k, l| m[(i * d + j, k * d + l)])
    }

    /// Converts a tensor written in the transposed-position pairing
    /// `τ(i,j;k,l) = E[a_ij(r,p) · a_kl(p,r)]` used for Hermitian block
    /// matrices with `A^(ji) = (A^(ij))*`. Since `a_kl(p,r) = conj(a_lk(r,p))`,
    /// the Hermitian-convention tensor is `σ(i,j;k,l) = τ(i,j;l,k)`.
    pub fn from_transposed_pairing(
        d: usize,
        tau: impl Fn(usize, usize, usize, usize) -> C64,
    ) -> Result<Self, EtaError> {
        Self::from_fn(d, |i, j, k, l| tau(i, j, l, k))
    }

    pub fn zeros(d: usize) -> Self {
        Self { d, sigma: vec![c0(); d.pow(4)] }
    }

    /// `σ(i,j;k,l) = v δ_ik δ_jl`: independent entries of variance `v`.
    pub fn independent(d: usize, variance: f64) -> Result<Self, EtaError> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(EtaError::BadScale(variance));
        }
        Self::from_fn(d, |i, j, k, l| {
            if i == k && j == l {
                C64::new(variance, 0.0)
            } else {
                c0()
            }
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        let d = self.d;
        self.sigma[((i * d + j) * d + k) * d + l]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.sigma
    }

    /// `Σ[(i,j),(k,l)] = σ(i,j;k,l)`.
    pub fn covariance_matrix(&self) -> ComplexMatrix {
        let d = self.d;
        ComplexMatrix::from_fn(d * d, d * d, |r, c| self.get(r / d, r % d, c / d, c % d))
    }

    fn max_abs(&self) -> f64 {
        self.sigma.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn hermitian_defect(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0f64;
        for_each_index(d, |i, j, k, l| {
            worst = worst.max((self.get(i, j, k, l) - self.get(k, l, i, j).conj()).norm());
        });
        worst
    }

    /// `max |σ(i,j;k,l) − σ(l,k;j,i)|`. Zero exactly when the block `M` and
    /// its adjoint `M*` share second moments.
    pub fn mirror_defect(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0f64;
        for_each_index(d, |i, j, k, l| {
            worst = worst.max((self.get(i, j, k, l) - self.get(l, k, j, i)).norm());
        });
        worst
    }

    pub fn max_imag(&self) -> f64 {
        self.sigma.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|v| *v == c0())
    }

    fn check_mirror(&self) -> Result<(), EtaError> {
        let defect = self.mirror_defect();
        if defect > TENSOR_SYMMETRY_TOL * (1.0 + self.max_abs()) {
            return Err(EtaError::NotMirrorSymmetric { defect });
        }
        Ok(())
    }
}

fn for_each_index(d: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    f(i, j, k, l);
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRepr {
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entries: Option<Vec<(usize, usize, usize, usize, ComplexValue)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<ComplexMatrix>,
}

impl Serialize for CovarianceTensor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut entries = Vec::new();
        for_each_index(self.d, |i, j, k, l| {
            let v = self.get(i, j, k, l);
            if v != c0() {
                entries.push((i, j, k, l, ComplexValue(v)));
            }
        });
        TensorRepr { d: self.d, entries: Some(entries), matrix: None }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovarianceTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let repr = TensorRepr::deserialize(deserializer)?;
        let d = repr.d;
        match (repr.entries, repr.matrix) {
            (Some(entries), None) => {
                let mut sigma = vec![c0(); d.pow(4)];
                for (i, j, k, l, v) in entries {
                    if i >= d || j >= d || k >= d || l >= d {
                        return Err(D::Error::custom(EtaError::IndexOutOfRange { index: [i, j, k, l], d }));
                    }
                    sigma[((i * d + j) * d + k) * d + l] = v.0;
                }
                CovarianceTensor::new(d, sigma).map_err(D::Error::custom)
            }
            (None, Some(m)) => CovarianceTensor::from_covariance_matrix(d, &m).map_err(D::Error::custom),
            _ => Err(D::Error::custom("tensor needs exactly one of `entries` or `matrix`")),
        }
    }
}

/// How a [`CovarianceMap`] was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum MapForm {
    /// `η(B) = t B`.
    Scalar { t: f64 },
    /// Given directly (or lowered from a tensor formula) as a Choi matrix.
    Choi,
    /// `η(B) = c Σ_{k,l} σ(k,l) β_k B β_l* + conj σ(k,l) β_k* B β_l`.
    Kronecker { betas: Vec<ComplexMatrix>, sigma: ComplexMatrix, prefactor: f64 },
    /// Built from centred samples; `symmetrize` selects the half-sum
    /// `½(ĀBĀ* + Ā*BĀ)` instead of the single term `ĀBĀ*`.
    Empirical { samples: usize, symmetrize: bool },
}

/// A completely positive linear map on `d x d` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMap {
    d: usize,
    form: MapForm,
    choi: ComplexMatrix,
    /// Total magnitude of negative Choi eigenvalues removed by projection.
    projection: f64,
}

/// Source of second moments for the block-matrix constructors.
#[derive(Debug, Clone, Copy)]
pub enum BlockSource<'a> {
    /// Realized blocks; centred at their sample mean.
    Samples(&'a [ComplexMatrix]),
    /// Exact covariance of the centred block entries.
    Moments(&'a CovarianceTensor),
}

impl CovarianceMap {
    pub fn scalar(d: usize, t: f64) -> Result<Self, EtaError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(EtaError::BadScale(t));
        }
        let choi = choi_from_fn(d, |i, k, j, l| if i == k && j == l { C64::new(t, 0.0) } else { c0() });
        Ok(Self { d, form: MapForm::Scalar { t }, choi, projection: 0.0 })
    }

    /// `η(B) = c · tr(B)/d · I`.
    pub fn flat(d: usize, c: f64) -> Result<Self, EtaError> {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(EtaError::BadScale(c));
        }
        let v = c / d as f64;
        let choi = choi_from_fn(d, |i, k, j, l| if i == j && k == l { C64::new(v, 0.0) } else { c0() });
        Ok(Self { d, form: MapForm::Choi, choi, projection: 0.0 })
    }

    pub fn zero(d: usize) -> Self {
        Self::scalar(d, 0.0).expect("zero is a valid scale")
    }

    /// Validates a user-supplied Choi matrix.
    pub fn from_choi(d: usize, choi: ComplexMatrix) -> Result<Self, EtaError> {
        if choi.rows() != d * d || choi.cols() != d * d {
            return Err(EtaError::DimensionMismatch(format!("Choi matrix must be {0}x{0}", d * d)));
        }
        choi.check_hermitian()?;
        let map = Self { d, form: MapForm::Choi, choi: choi.real_part(), projection: 0.0 };
        let min_eigenvalue = map.min_choi_eigenvalue();
        if min_eigenvalue < -CP_TOL {
            return Err(EtaError::NotCompletelyPositive { min_eigenvalue });
        }
        Ok(map)
    }

    /// Half-sum map `½(E[ĀBĀ*] + E[Ā*BĀ])` of i.i.d. blocks.
    pub fn iid_blocks(source: BlockSource<'_>) -> Result<Self, EtaError> {
        match source {
            BlockSource::Samples(samples) => Self::empirical(samples, true),
            BlockSource::Moments(t) => {
                let d = t.d();
                let choi = choi_from_fn(d, |k, i, l, j| (t.get(i, k, j, l) + t.get(l, j, k, i)) * 0.5);
                Self::lowered(d, choi)
            }
        }
    }

    /// Single-term map `E[ĀBĀ*]` of Wigner-type blocks.
    pub fn wigner_blocks(source: BlockSource<'_>) -> Result<Self, EtaError> {
        match source {
            BlockSource::Samples(samples) => Self::empirical(samples, false),
            BlockSource::Moments(t) => {
                let d = t.d();
                let choi = choi_from_fn(d, |k, i, l, j| t.get(i, k, j, l));
                Self::lowered(d, choi)
            }
        }
    }

    /// Variance function of an exchangeable pool: the pool is centred at its
    /// mean and the half-sum is taken over every element.
    pub fn exchangeable_pool(pool: &[ComplexMatrix]) -> Result<Self, EtaError> {
        Self::empirical(pool, true)
    }

    pub fn exchangeable_pool_scalars(pool: &[f64]) -> Result<Self, EtaError> {
        let blocks: Vec<ComplexMatrix> =
            pool.iter().map(|&v| ComplexMatrix::scalar(1, C64::new(v, 0.0))).collect();
        Self::exchangeable_pool(&blocks)
    }

    /// Kronecker-structured map with unit prefactor.
    pub fn kronecker(betas: &[ComplexMatrix], sigma: &ComplexMatrix) -> Result<Self, EtaError> {
        Self::kronecker_with_prefactor(betas, sigma, 1.0)
    }

    pub fn kronecker_with_prefactor(
        betas: &[ComplexMatrix],
        sigma: &ComplexMatrix,
        prefactor: f64,
    ) -> Result<Self, EtaError> {
        let l = betas.len();
        if l == 0 {
            return Err(EtaError::Empty);
        }
        let d = betas[0].rows();
        if betas.iter().any(|b| b.rows() != d || b.cols() != d) {
            return Err(EtaError::DimensionMismatch("all betas must be d x d".into()));
        }
        if sigma.rows() != l || sigma.cols() != l {
            return Err(EtaError::DimensionMismatch(format!("sigma must be {l}x{l}")));
        }
        if !(prefactor >= 0.0 && prefactor.is_finite()) {
            return Err(EtaError::BadScale(prefactor));
        }
        sigma.check_hermitian()?;
        let min_eigenvalue = hermitian_eigenvalues(sigma)?[0];
        if min_eigenvalue < -CP_TOL {
            return Err(EtaError::NotPsd { min_eigenvalue });
        }
        let form = MapForm::Kronecker { betas: betas.to_vec(), sigma: sigma.real_part(), prefactor };
        let choi = choi_from_map(d, |b| apply_kronecker(&form, b));
        Ok(Self { d, form, choi: choi.real_part(), projection: 0.0 })
    }

    /// Correlated-block map `η(B)_ij = (1/d) Σ_{k,l} σ(i,k;j,l) B_kl`.
    ///
    /// In the transposed-position pairing convention (see
    /// [`CovarianceTensor::from_transposed_pairing`]) the same map reads
    /// `(1/d) Σ τ(i,k;l,j) B_kl`. Requires mirror symmetry so that the blocks
    /// above and below the diagonal share their second moments.
    pub fn correlated_tensor(t: &CovarianceTensor) -> Result<Self, EtaError> {
        t.check_mirror()?;
        let d = t.d();
        let inv_d = 1.0 / d as f64;
        let choi = choi_from_fn(d, |k, i, l, j| t.get(i, k, j, l) * inv_d);
        Self::lowered(d, choi)
    }

    fn lowered(d: usize, choi: ComplexMatrix) -> Result<Self, EtaError> {
        let map = Self { d, form: MapForm::Choi, choi: choi.real_part(), projection: 0.0 };
        let min_eigenvalue = map.min_choi_eigenvalue();
        if min_eigenvalue < -CP_TOL {
            return Err(EtaError::NotCompletelyPositive { min_eigenvalue });
        }
        Ok(map)
    }

    fn empirical(samples: &[ComplexMatrix], symmetrize: bool) -> Result<Self, EtaError> {
        let m = samples.len();
        if m == 0 {
            return Err(EtaError::Empty);
        }
        let d = samples[0].rows();
        if samples.iter().any(|s| s.rows() != d || s.cols() != d) {
            return Err(EtaError::DimensionMismatch("samples must all be d x d".into()));
        }
        let mut mean = ComplexMatrix::zeros(d, d);
        for s in samples {
            mean += s;
        }
        let mean = mean.scale_real(1.0 / m as f64);
        let dd = d * d;
        let mut choi = ComplexMatrix::zeros(dd, dd);
        let weight = if symmetrize { 0.5 / m as f64 } else { 1.0 / m as f64 };
        for s in samples {
            let a = s - &mean;
            // C[(k,i),(l,j)] += a_ik conj(a_jl)  [+ conj(a_ki) a_lj]
            for k in 0..d {
                for i in 0..d {
                    for l in 0..d {
                        for j in 0..d {
                            let mut v = a[(i, k)] * a[(j, l)].conj();
                            if symmetrize {
                                v += a[(k, i)].conj() * a[(l, j)];
                            }
                            choi[(k * d + i, l * d + j)] += v * weight;
                        }
                    }
                }
            }
        }
        let (choi, projection) = project_psd(&choi.real_part())?;
        Ok(Self { d, form: MapForm::Empirical { samples: m, symmetrize }, choi, projection })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn form(&self) -> &MapForm {
        &self.form
    }

    pub fn choi_matrix(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn projection_magnitude(&self) -> f64 {
        self.projection
    }

    pub fn apply(&self, b: &ComplexMatrix) -> Result<ComplexMatrix, EtaError> {
        if b.rows() != self.d || b.cols() != self.d {
            return Err(EtaError::DimensionMismatch(format!(
                "map acts on {0}x{0} matrices, got {1}x{2}",
                self.d,
                b.rows(),
                b.cols()
            )));
        }
        Ok(self.apply_unchecked(b))
    }

    /// Application without the shape check; panics on mismatch.
    pub fn apply_unchecked(&self, b: &ComplexMatrix) -> ComplexMatrix {
        match &self.form {
            MapForm::Scalar { t } => b.scale_real(*t),
            MapForm::Kronecker { betas, .. } if 4 * betas.len() < self.d => apply_kronecker(&self.form, b),
            _ => contract_choi(&self.choi, self.d, b),
        }
    }

    pub fn min_choi_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.choi).map(|ev| ev[0]).unwrap_or(f64::NEG_INFINITY)
    }

    pub fn is_completely_positive(&self) -> bool {
        self.min_choi_eigenvalue() >= -CP_TOL
    }

    /// `‖η‖ = ‖η(I)‖_op`, exact for completely positive maps.
    pub fn cp_norm(&self) -> f64 {
        self.apply_unchecked(&ComplexMatrix::identity(self.d)).operator_norm()
    }
}

/// Pair of maps for the correlated Wishart equation
/// `zG = 1 + η1((1 − η2(G))⁻¹) G`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPair {
    pub eta1: CovarianceMap,
    pub eta2: CovarianceMap,
}

impl EtaPair {
    pub fn new(eta1: CovarianceMap, eta2: CovarianceMap) -> Result<Self, EtaError> {
        if eta1.d() != eta2.d() {
            return Err(EtaError::DimensionMismatch("eta1 and eta2 act on different sizes".into()));
        }
        Ok(Self { eta1, eta2 })
    }

    pub fn d(&self) -> usize {
        self.eta1.d()
    }

    /// Maps for `H H*` with `H` built from `d x d` blocks whose entries have
    /// real covariance `σ`:
    ///
    /// ```text
    /// η1(B)_ij = (1/d) Σ σ(i,k;j,l) B_kl      (= E[H B H*])
    /// η2(B)_ij = (1/d) Σ σ(l,j;k,i) B_kl      (= E[H* B H])
    /// ```
    pub fn wishart(t: &CovarianceTensor) -> Result<Self, EtaError> {
        Self::wishart_with_prefactor(t, 1.0 / t.d() as f64)
    }

    pub fn wishart_with_prefactor(t: &CovarianceTensor, prefactor: f64) -> Result<Self, EtaError> {
        let max_imag = t.max_imag();
        if max_imag > TENSOR_SYMMETRY_TOL {
            return Err(EtaError::NotReal { max_imag });
        }
        if !(prefactor >= 0.0 && prefactor.is_finite()) {
            return Err(EtaError::BadScale(prefactor));
        }
        let d = t.d();
        let c1 = choi_from_fn(d, |k, i, l, j| t.get(i, k, j, l) * prefactor);
        let c2 = choi_from_fn(d, |k, i, l, j| t.get(l, j, k, i) * prefactor);
        Ok(Self { eta1: CovarianceMap::lowered(d, c1)?, eta2: CovarianceMap::lowered(d, c2)? })
    }
}

/// Choi matrix from its entries `f(i, k, j, l) = η(E_ij)[k][l]`.
fn choi_from_fn(d: usize, f: impl Fn(usize, usize, usize, usize) -> C64) -> ComplexMatrix {
    ComplexMatrix::from_fn(d * d, d * d, |r, c| f(r / d, r % d, c / d, c % d))
}

/// Choi matrix of an arbitrary linear map, by evaluating it on matrix units.
pub fn choi_from_map(d: usize, f: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
    let mut choi = ComplexMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let img = f(&ComplexMatrix::unit(d, i, j));
            for k in 0..d {
                for l in 0..d {
                    choi[(i * d + k, j * d + l)] = img[(k, l)];
                }
            }
        }
    }
    choi
}

fn contract_choi(choi: &ComplexMatrix, d: usize, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d, d);
    let dd = d * d;
    let data = choi.as_slice();
    let out_data = out.as_mut_slice();
    for i in 0..d {
        for j in 0..d {
            let bij = b[(i, j)];
            if bij == c0() {
                continue;
            }
            for k in 0..d {
                let row = &data[(i * d + k) * dd + j * d..(i * d + k) * dd + j * d + d];
                for (l, cv) in row.iter().enumerate() {
                    out_data[k * d + l] += bij * cv;
                }
            }
        }
    }
    out
}

fn apply_kronecker(form: &MapForm, b: &ComplexMatrix) -> ComplexMatrix {
    let MapForm::Kronecker { betas, sigma, prefactor } = form else {
        unreachable!("apply_kronecker on a non-Kronecker form");
    };
    let d = b.rows();
    let l = betas.len();
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..l {
        // Σ_l σ(k,l) β_l* = (Σ_l conj σ(k,l) β_l)*
        let mut gamma = ComplexMatrix::zeros(d, d);
        for m in 0..l {
            gamma += &betas[m].scale(sigma[(k, m)].conj());
        }
        let beta = &betas[k];
        out += &(&(beta * b) * &gamma.adjoint());
        out += &(&(&beta.adjoint() * b) * &gamma);
    }
    out.scale_real(*prefactor)
}

/// Hermitian part of `choi` with negative eigenvalues clipped to zero;
/// returns the clipped matrix and the total clipped magnitude.
fn project_psd(choi: &ComplexMatrix) -> Result<(ComplexMatrix, f64), EtaError> {
    let ev = hermitian_eigenvalues(choi)?;
    if ev[0] >= 0.0 {
        return Ok((choi.clone(), 0.0));
    }
    let (vals, vecs) = hermitian_eigen(choi)?;
    let removed: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let rebuilt = &(&vecs * &ComplexMatrix::from_real_diagonal(&clipped)) * &vecs.adjoint();
    Ok((rebuilt.real_part(), removed))
}
