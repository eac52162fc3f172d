//! The covariance maps against brute-force block moments of sampled
//! matrices: `η(B) = E[(id ⊗ tr_N)(X (B ⊗ 1) X)]` for Hermitian models and
//! the two one-sided products for Wishart factors.

use num_complex::Complex64 as C64;

use dyson_blocks::eta::{CovarianceMap, CovarianceTensor, EtaPair};
use dyson_blocks::linalg::{ComplexMatrix, C64 as C};
use dyson_blocks::sampler::{sample, sample_wishart_factor, EntryLaw, Model, ModelSpec};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `Σ_{k,l} B_kl tr_N(P_ik Q_lj)` for `d x d` grids of `N x N` blocks,
/// block `(i, j)` at rows `i N ..`, columns `j N ..`.
fn block_moment(p: &ComplexMatrix, q: &ComplexMatrix, b: &ComplexMatrix, d: usize, n: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = C::new(0.0, 0.0);
            for k in 0..d {
                for l in 0..d {
                    let mut tr = C::new(0.0, 0.0);
                    for r in 0..n {
                        for s in 0..n {
                            tr += p[(i * n + r, k * n + s)] * q[(l * n + s, j * n + r)];
                        }
                    }
                    acc += b[(k, l)] * tr;
                }
            }
            out[(i, j)] = acc / n as f64;
        }
    }
    out
}

fn test_b(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |r, k| c(0.3 + r as f64 - 0.7 * k as f64, 0.2 * (r * d + k) as f64 - 0.4))
}

fn average(samples: usize, f: impl Fn(u64) -> ComplexMatrix) -> ComplexMatrix {
    let mut acc = f(0);
    for t in 1..samples as u64 {
        acc += &f(t);
    }
    acc.scale_real(1.0 / samples as f64)
}

/// A mirror-symmetric tensor on d = 2 correlating a_01 with a_10 (complex
/// coefficient) and a_00 with a_11, with unequal diagonal variances.
fn asymmetric_tensor() -> CovarianceTensor {
    let idx = |i: usize, j: usize| i * 2 + j;
    let mut m = ComplexMatrix::zeros(4, 4);
    m[(idx(0, 0), idx(0, 0))] = c(1.0, 0.0);
    m[(idx(1, 1), idx(1, 1))] = c(2.0, 0.0);
    m[(idx(0, 1), idx(0, 1))] = c(1.5, 0.0);
    m[(idx(1, 0), idx(1, 0))] = c(1.5, 0.0);
    m[(idx(0, 0), idx(1, 1))] = c(0.6, 0.0);
    m[(idx(1, 1), idx(0, 0))] = c(0.6, 0.0);
    m[(idx(0, 1), idx(1, 0))] = c(0.3, 0.4);
    m[(idx(1, 0), idx(0, 1))] = c(0.3, -0.4);
    CovarianceTensor::from_covariance_matrix(2, &m).unwrap()
}

#[test]
fn correlated_tensor_pattern_matches_block_moments() {
    let t = asymmetric_tensor();
    assert!(t.mirror_defect() < 1e-15);
    let (d, n) = (2, 80);
    let spec = ModelSpec::new(Model::CorrelatedBlocks { tensor: t.clone() }, d, n, EntryLaw::default(), 17);
    let b = test_b(d);
    let mc = average(12, |s| {
        let x = sample(&spec, s).unwrap();
        block_moment(&x, &x, &b, d, n)
    });
    let eta = CovarianceMap::correlated_tensor(&t).unwrap().apply(&b).unwrap();
    let err = mc.max_abs_diff(&eta);
    assert!(err < 0.06, "η(B) {eta:?} vs moments {mc:?}: {err}");

    // The index pattern σ(i,k;l,j) read literally in this convention is a
    // different (and not completely positive) map.
    let mut literal = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    literal[(i, j)] += t.get(i, k, l, j) * b[(k, l)] / d as f64;
                }
            }
        }
    }
    assert!(mc.max_abs_diff(&literal) > 0.3);
}

#[test]
fn transposed_pairing_gives_the_same_map() {
    let t = asymmetric_tensor();
    let tau = |i: usize, j: usize, k: usize, l: usize| t.get(i, j, l, k);
    let back = CovarianceTensor::from_transposed_pairing(2, tau).unwrap();
    assert_eq!(back, t);
    // In the transposed pairing the map reads (1/d) Σ τ(i,k;l,j) B_kl.
    let b = test_b(2);
    let eta = CovarianceMap::correlated_tensor(&back).unwrap().apply(&b).unwrap();
    let mut want = ComplexMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    want[(i, j)] += tau(i, k, l, j) * b[(k, l)] / 2.0;
                }
            }
        }
    }
    assert!(eta.max_abs_diff(&want) < 1e-15);
}

fn real_wishart_tensor() -> CovarianceTensor {
    let l = ComplexMatrix::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.4, 0.9, 0.0, 0.0],
        &[-0.3, 0.5, 0.7, 0.0],
        &[0.2, 0.0, -0.6, 1.1],
    ]);
    CovarianceTensor::from_covariance_matrix(2, &(&l * &l.adjoint())).unwrap()
}

#[test]
fn wishart_pair_matches_one_sided_moments() {
    let t = real_wishart_tensor();
    let (d, n) = (2, 80);
    let spec = ModelSpec::new(Model::WishartCorrelated { tensor: t.clone() }, d, n, EntryLaw::default(), 5);
    let b = test_b(d);
    let mut m1 = ComplexMatrix::zeros(d, d);
    let mut m2 = ComplexMatrix::zeros(d, d);
    let samples = 12;
    for s in 0..samples {
        let h = sample_wishart_factor(&spec, s).unwrap();
        let ha = h.adjoint();
        m1 += &block_moment(&h, &ha, &b, d, n);
        m2 += &block_moment(&ha, &h, &b, d, n);
    }
    let (m1, m2) = (m1.scale_real(1.0 / samples as f64), m2.scale_real(1.0 / samples as f64));
    let pair = EtaPair::wishart(&t).unwrap();
    let e1 = pair.eta1.apply(&b).unwrap();
    let e2 = pair.eta2.apply(&b).unwrap();
    assert!(m1.max_abs_diff(&e1) < 0.08, "η1 {e1:?} vs {m1:?}");
    assert!(m2.max_abs_diff(&e2) < 0.08, "η2 {e2:?} vs {m2:?}");

    // A 1/(2d) normalization undershoots by a factor of two.
    let half = EtaPair::wishart_with_prefactor(&t, 0.25).unwrap();
    assert!(m1.max_abs_diff(&half.eta1.apply(&b).unwrap()) > 0.3);
}

#[test]
fn kronecker_unit_prefactor_matches_block_moments() {
    let (d, n) = (2, 256);
    let betas = vec![
        ComplexMatrix::from_fn(2, 2, |r, k| c(0.5 * r as f64 + 0.2, 0.3 * k as f64)),
        ComplexMatrix::from_real_rows(&[&[0.0, 0.8], &[0.4, -0.5]]),
    ];
    let sigma = ComplexMatrix::from_fn(2, 2, |r, k| match (r, k) {
        (0, 0) => c(1.0, 0.0),
        (1, 1) => c(0.7, 0.0),
        (0, 1) => c(0.3, 0.2),
        _ => c(0.3, -0.2),
    });
    let spec = ModelSpec::new(
        Model::Kronecker { betas: betas.clone(), sigma: sigma.clone() },
        d,
        n,
        EntryLaw::default(),
        9,
    );
    let b = test_b(d);
    let mc = average(4, |s| {
        let x = sample(&spec, s).unwrap();
        block_moment(&x, &x, &b, d, n)
    });
    let unit = CovarianceMap::kronecker(&betas, &sigma).unwrap().apply(&b).unwrap();
    let scaled = CovarianceMap::kronecker_with_prefactor(&betas, &sigma, 0.25).unwrap().apply(&b).unwrap();
    assert!(mc.max_abs_diff(&unit) < 0.03, "{unit:?} vs {mc:?}");
    assert!(mc.max_abs_diff(&scaled) > 0.3);
}

#[test]
fn iid_and_wigner_limits_match_block_moments() {
    let (d, n) = (2, 60);
    let b = test_b(d);
    for (model, pair_factor) in [(Model::HermitizedIid {}, true), (Model::WignerBlocks {}, false)] {
        let spec = ModelSpec::new(model, d, n, EntryLaw::Rademacher {}, 3);
        // Blocks sit at rows i d + k here, so permute to the outer-d layout.
        let mc = average(10, |s| {
            let x = sample(&spec, s).unwrap();
            let p = ComplexMatrix::from_fn(d * n, d * n, |r, k| x[((r % n) * d + r / n, (k % n) * d + k / n)]);
            block_moment(&p, &p, &b, d, n)
        });
        let t = CovarianceTensor::independent(d, 1.0).unwrap();
        let eta = if pair_factor {
            CovarianceMap::iid_blocks(dyson_blocks::eta::BlockSource::Moments(&t)).unwrap()
        } else {
            CovarianceMap::wigner_blocks(dyson_blocks::eta::BlockSource::Moments(&t)).unwrap()
        };
        let want = eta.apply(&b).unwrap();
        assert!(mc.max_abs_diff(&want) < 0.06, "{want:?} vs {mc:?}");
    }
}
