//! Eigendecomposition of complex-symmetric matrices with bilinear
//! normalization.
//!
//! For `M = Mᵀ` the left eigenvectors are the transposes of the right ones,
//! so a single set of columns `φ_λ` carries the full biorthogonal system
//! `φ_λᵀ φ_λ' = δ_λλ'`. Close to an exceptional point the bilinear self
//! product `φᵀφ` vanishes and the normalization is undefined; such vectors
//! are flagged instead of being scaled.

use std::cmp::Ordering;

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

/// Relative size of `|φᵀφ| / ‖φ‖²` below which a vector counts as
/// self-orthogonal.
pub const DEFECT_TOL: f64 = 1e-8;

/// Largest tolerated `max|M - Mᵀ|`, relative to `max(1, max|M|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Two eigenvectors whose normalized Hermitian overlap exceeds `1 - PARALLEL_TOL`
/// are numerically the same direction (a coalesced pair).
const PARALLEL_TOL: f64 = 1e-10;

/// Residuals above this (relative to `‖M‖`) are reported as a numerical failure.
const RESIDUAL_FAIL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Complex eigenvalues `z_λ`, sorted by real part then imaginary part.
    pub eigenvalues: Vec<C64>,
    /// Right eigenvectors as columns; c-normalized where `c_norms_ok` is set.
    pub right_vectors: DMatrix<C64>,
    pub c_norms_ok: Vec<bool>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn vector(&self, index: usize) -> DVector<C64> {
        self.right_vectors.column(index).into_owned()
    }

    /// True when every vector could be c-normalized.
    pub fn is_complete(&self) -> bool {
        self.c_norms_ok.iter().all(|&ok| ok)
    }

    /// Smallest distance between two eigenvalues and the (sorted) pair
    /// attaining it. `None` for systems of dimension below two.
    pub fn closest_pair(&self) -> Option<(usize, usize, f64)> {
        closest_pair(&self.eigenvalues)
    }
}

/// `A_λ = ⟨φ_λ|φ_λ⟩` and `B_λ^λ' = |⟨φ_λ|φ_λ'⟩|` for a c-normalized system.
#[derive(Debug, Clone)]
pub struct OverlapReport {
    pub a_norm: Vec<f64>,
    /// Full matrix of Hermitian overlap moduli; the diagonal repeats `a_norm`.
    pub cross_overlaps: DMatrix<f64>,
}

/// Bilinear versus Hermitian norm of a vector, together with the rotation
/// that makes its real and imaginary parts orthogonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidityDecomposition {
    /// `Σ φ² / Σ |φ|²`.
    pub ratio: C64,
    /// Angle in `[0, π)` such that `Re(e^{-iθ}φ) ⟂ Im(e^{-iθ}φ)`.
    pub theta: f64,
    /// `‖Re(e^{-iθ}φ)‖²`
    pub re_norm2: f64,
    /// `‖Im(e^{-iθ}φ)‖²`
    pub im_norm2: f64,
}

/// Matching of eigenpairs between two neighbouring parameter points.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairing {
    /// `permutation[i]` is the index in `next` matched to state `i` of `prev`.
    pub permutation: Vec<usize>,
    /// Overlap of each matched pair.
    pub overlaps: Vec<f64>,
}

pub fn bilinear(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn hermitian(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Splits `φ` into the parts entering the phase rigidity.
pub fn rigidity_decomposition(phi: &[C64]) -> Result<RigidityDecomposition> {
    let denom = norm2(phi);
    if !(denom > 0.0) {
        return Err(Error::InvalidInput("zero vector has no phase rigidity".into()));
    }
    let square = bilinear(phi, phi);
    let theta = if square.norm() == 0.0 {
        0.0
    } else {
        (square.arg() / 2.0).rem_euclid(std::f64::consts::PI)
    };
    let rot = C64::from_polar(1.0, -theta);
    let (re_norm2, im_norm2) = phi.iter().fold((0.0, 0.0), |(re, im), x| {
        let y = rot * x;
        (re + y.re * y.re, im + y.im * y.im)
    });
    Ok(RigidityDecomposition {
        ratio: square / denom,
        theta,
        re_norm2,
        im_norm2,
    })
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `max|M - Mᵀ|`.
pub fn symmetry_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).norm());
        }
    }
    worst
}

fn closest_pair(values: &[C64]) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..values.len() {
        for j in (i + 1)..values.len() {
            let gap = (values[i] - values[j]).norm();
            if best.is_none_or(|(_, _, g)| gap < g) {
                best = Some((i, j, gap));
            }
        }
    }
    best
}

fn eigen_order(a: &C64, b: &C64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

fn check_square_symmetric(m: &DMatrix<C64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = max_abs(m).max(1.0);
    let defect = symmetry_defect(m);
    if defect > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "matrix is not complex symmetric (defect {defect:e})"
        )));
    }
    Ok(scale)
}

/// Eigenvalues only, unsorted. Cheaper than the full decomposition; used by
/// gap scans.
pub fn eigenvalues_complex_symmetric(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    check_square_symmetric(m)?;
    let n = m.nrows();
    if m.iter().all(|z| z.im == 0.0) {
        let real = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let values = real
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| no_convergence())?;
        return Ok(values.into_iter().map(|x| C64::new(x, 0.0)).collect());
    }
    let mat = Mat::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
    mat.eigenvalues().map_err(|_| no_convergence())
}

fn no_convergence() -> Error {
    Error::NumericalFailure {
        what: "eigenvalue iteration did not converge".into(),
        residual: f64::NAN,
    }
}

/// Full eigendecomposition of a complex-symmetric matrix.
///
/// Real input goes through the self-adjoint solver, so closed systems come
/// back with real eigenvalues and real orthonormal vectors. Complex input
/// uses a general Schur-based solver; the vectors are then c-normalized.
pub fn eig_complex_symmetric(m: &DMatrix<C64>) -> Result<EigenSystem> {
    let scale = check_square_symmetric(m)?;
    let n = m.nrows();

    let fm = Mat::<C64>::from_fn(n, n, |i, j| m[(i, j)]);
    let (values, fu) = if m.iter().all(|z| z.im == 0.0) {
        let real = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)].re);
        let evd = real
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| no_convergence())?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let values: Vec<C64> = (0..n).map(|i| C64::new(s[i], 0.0)).collect();
        (values, Mat::<C64>::from_fn(n, n, |i, j| C64::new(u[(i, j)], 0.0)))
    } else {
        let evd = fm.eigen().map_err(|_| no_convergence())?;
        let s = evd.S().column_vector();
        let values: Vec<C64> = (0..n).map(|i| s[i]).collect();
        (values, evd.U().to_owned())
    };

    // residual of the raw pairs, measured on unit vectors
    let image = &fm * &fu;
    let mut worst: f64 = 0.0;
    for (j, z) in values.iter().enumerate() {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            num += (image[(i, j)] - fu[(i, j)] * z).norm_sqr();
            den += fu[(i, j)].norm_sqr();
        }
        worst = worst.max((num / den).sqrt());
    }
    if !(worst <= RESIDUAL_FAIL * scale) {
        return Err(Error::NumericalFailure {
            what: "eigenpair residual too large".into(),
            residual: worst,
        });
    }
    let gram = fu.adjoint() * &fu;
    let vectors = DMatrix::from_fn(n, n, |i, j| fu[(i, j)]);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen_order(&values[a], &values[b]).then(a.cmp(&b)));
    let eigenvalues: Vec<C64> = order.iter().map(|&k| values[k]).collect();
    let sorted = DMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);

    let (right_vectors, mut c_norms_ok) = c_normalize(&sorted)?;

    // Coalesced pairs come back as two copies of (almost) the same vector.
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (order[i], order[j]);
            let cos = gram[(a, b)].norm() / (gram[(a, a)].re * gram[(b, b)].re).sqrt();
            if cos > 1.0 - PARALLEL_TOL {
                c_norms_ok[i] = false;
                c_norms_ok[j] = false;
            }
        }
    }
    // flagged vectors keep unit Hermitian norm
    let mut right_vectors = right_vectors;
    for (j, ok) in c_norms_ok.iter().enumerate() {
        if !ok {
            let col = sorted.column(j).normalize();
            right_vectors.set_column(j, &col);
        }
    }

    Ok(EigenSystem {
        eigenvalues,
        right_vectors,
        c_norms_ok,
    })
}

/// Scales each column to unit bilinear self product `φᵀφ = 1`.
///
/// The sign left open by the square root is fixed so that the
/// largest-modulus component has phase in `(-π/2, π/2]`. Columns with
/// `|φᵀφ| / ‖φ‖² < DEFECT_TOL` are returned unchanged with their flag
/// cleared.
pub fn c_normalize(vectors: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<bool>)> {
    let mut out = vectors.clone();
    let mut flags = Vec::with_capacity(vectors.ncols());
    for j in 0..vectors.ncols() {
        let col: Vec<C64> = vectors.column(j).iter().copied().collect();
        let len2 = norm2(&col);
        if !(len2 > 0.0) {
            return Err(Error::InvalidInput(format!("column {j} is a zero vector")));
        }
        let self_product = bilinear(&col, &col);
        if self_product.norm() / len2 < DEFECT_TOL {
            flags.push(false);
            continue;
        }
        let scale = self_product.sqrt().inv();
        let mut scaled: Vec<C64> = col.iter().map(|x| x * scale).collect();
        let lead = scaled
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (k, x)| {
                if x.norm() > best.1 {
                    (k, x.norm())
                } else {
                    best
                }
            })
            .0;
        let phase = scaled[lead].arg();
        let half = std::f64::consts::FRAC_PI_2;
        if phase <= -half || phase > half {
            scaled.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, x) in scaled.into_iter().enumerate() {
            out[(i, j)] = x;
        }
        flags.push(true);
    }
    Ok((out, flags))
}

/// Hermitian norms and cross overlaps of a fully c-normalized system.
pub fn overlaps(eigsys: &EigenSystem) -> Result<OverlapReport> {
    if let Some(bad) = eigsys.c_norms_ok.iter().position(|ok| !ok) {
        return Err(Error::Defective {
            energy: f64::NAN,
            detail: format!("vector {bad} is self-orthogonal; A is unbounded"),
        });
    }
    let v = &eigsys.right_vectors;
    let n = eigsys.dim();
    let cross_overlaps = DMatrix::from_fn(n, n, |i, j| v.column(i).dotc(&v.column(j)).norm());
    let a_norm = (0..n).map(|i| v.column(i).norm_squared()).collect();
    Ok(OverlapReport {
        a_norm,
        cross_overlaps,
    })
}

fn pair_overlap(prev: &EigenSystem, i: usize, next: &EigenSystem, j: usize) -> f64 {
    let a = prev.right_vectors.column(i);
    let b = next.right_vectors.column(j);
    if prev.c_norms_ok[i] && next.c_norms_ok[j] {
        a.dot(&b).norm()
    } else {
        a.dotc(&b).norm() / (a.norm() * b.norm())
    }
}

/// Greedy bijective matching of the states of `prev` onto those of `next`.
///
/// The score of a pair is `|φ_prevᵀ φ_next|` for c-normalized vectors and the
/// normalized Hermitian overlap when either vector is flagged. Pairs are
/// taken largest score first; ties go to the lower `(prev, next)` index.
///
/// # Panics
///
/// If the two systems differ in dimension.
pub fn track_pairing(prev: &EigenSystem, next: &EigenSystem) -> Pairing {
    assert_eq!(prev.dim(), next.dim(), "track_pairing needs equal dimensions");
    let n = prev.dim();
    let mut candidates = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            candidates.push((pair_overlap(prev, i, next, j), i, j));
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut permutation = vec![usize::MAX; n];
    let mut overlaps = vec![0.0; n];
    let mut taken = vec![false; n];
    let mut left = n;
    for (score, i, j) in candidates {
        if left == 0 {
            break;
        }
        if permutation[i] != usize::MAX || taken[j] {
            continue;
        }
        permutation[i] = j;
        overlaps[i] = score;
        taken[j] = true;
        left -= 1;
    }
    Pairing {
        permutation,
        overlaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn residual(m: &DMatrix<C64>, sys: &EigenSystem, k: usize) -> f64 {
        let v = sys.right_vectors.column(k);
        (m * v - v * sys.eigenvalues[k]).norm() / v.norm()
    }

    // Deterministic pseudo-random complex-symmetric matrix.
    fn scrambled_symmetric(n: usize, seed: u64) -> DMatrix<C64> {
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let z = c(next(), next());
                m[(i, j)] = z;
                m[(j, i)] = z;
            }
        }
        m
    }

    #[test]
    fn diagonal_matrix_has_identity_vectors() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let sys = eig_complex_symmetric(&m).unwrap();
        assert_eq!(sys.eigenvalues, vec![c(1.0, 0.0), c(2.0, 0.0)]);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(sys.right_vectors[(i, j)].re, expect, epsilon = 1e-14);
                assert_abs_diff_eq!(sys.right_vectors[(i, j)].im, 0.0, epsilon = 1e-14);
            }
        }
        assert!(sys.is_complete());
    }

    #[test]
    fn jordan_block_is_flagged() {
        // z = -iγ/2 ± sqrt(2u² - γ²/4) with a vanishing radicand
        let u = 2f64.sqrt() / 16.0;
        let gamma = 0.25;
        let off = c(2f64.sqrt() * u, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, -gamma), off, off, c(0.0, 0.0)]);
        let sys = eig_complex_symmetric(&m).unwrap();
        for z in &sys.eigenvalues {
            assert!((z - c(0.0, -0.125)).norm() < 1e-7, "{z}");
        }
        assert!(sys.c_norms_ok.iter().all(|ok| !ok));
        assert!(overlaps(&sys).is_err());
    }

    #[test]
    fn random_symmetric_residuals_and_biorthogonality() {
        for seed in 1..6 {
            let m = scrambled_symmetric(6, seed);
            let sys = eig_complex_symmetric(&m).unwrap();
            assert_eq!(sys.dim(), 6);
            assert!(sys.is_complete());
            for k in 0..6 {
                assert!(residual(&m, &sys, k) < 1e-10);
                let v: Vec<C64> = sys.right_vectors.column(k).iter().copied().collect();
                assert!((bilinear(&v, &v) - c(1.0, 0.0)).norm() < 1e-10);
                for l in (k + 1)..6 {
                    let w: Vec<C64> = sys.right_vectors.column(l).iter().copied().collect();
                    assert!(bilinear(&v, &w).norm() < 1e-8);
                }
            }
            for pair in sys.eigenvalues.windows(2) {
                assert_ne!(eigen_order(&pair[0], &pair[1]), Ordering::Greater);
            }
        }
    }

    #[test]
    fn real_symmetric_input_is_hermitian_limit() {
        // chain Laplacian with a doubly degenerate level pattern
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 1)] = c(-1.0, 0.0);
        m[(1, 0)] = c(-1.0, 0.0);
        m[(2, 3)] = c(-1.0, 0.0);
        m[(3, 2)] = c(-1.0, 0.0);
        let sys = eig_complex_symmetric(&m).unwrap();
        assert!(sys.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
        let report = overlaps(&sys).unwrap();
        for (i, a) in report.a_norm.iter().enumerate() {
            assert_abs_diff_eq!(*a, 1.0, epsilon = 1e-12);
            for j in 0..4 {
                if i != j {
                    assert!(report.cross_overlaps[(i, j)] < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = DMatrix::<C64>::zeros(2, 3);
        assert!(matches!(eig_complex_symmetric(&m), Err(Error::InvalidInput(_))));
        let mut m = DMatrix::<C64>::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(eig_complex_symmetric(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn c_normalize_examples() {
        let v = DMatrix::from_column_slice(2, 1, &[c(0.6, 0.0), c(0.8, 0.0)]);
        let (out, flags) = c_normalize(&v).unwrap();
        assert_eq!(flags, vec![true]);
        assert_abs_diff_eq!(out[(0, 0)].re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(1, 0)].re, 0.8, epsilon = 1e-15);

        let s = 0.5f64.sqrt();
        let chiral = DMatrix::from_column_slice(2, 1, &[c(s, 0.0), c(0.0, s)]);
        let (out, flags) = c_normalize(&chiral).unwrap();
        assert_eq!(flags, vec![false]);
        assert_eq!(out, chiral);

        let v = DMatrix::from_column_slice(2, 1, &[c(2.0, 0.0), c(0.0, 0.0)]);
        let (out, _) = c_normalize(&v).unwrap();
        assert_eq!(out[(0, 0)], c(1.0, 0.0));
        assert_eq!(out[(1, 0)], c(0.0, 0.0));

        let v = DMatrix::from_column_slice(2, 1, &[c(-2.0, 0.0), c(0.0, 0.0)]);
        let (out, _) = c_normalize(&v).unwrap();
        assert_eq!(out[(0, 0)], c(1.0, 0.0));

        let zero = DMatrix::<C64>::zeros(2, 1);
        assert!(c_normalize(&zero).is_err());
    }

    #[test]
    fn pairing_examples() {
        let m = scrambled_symmetric(5, 11);
        let sys = eig_complex_symmetric(&m).unwrap();
        let ident = track_pairing(&sys, &sys);
        assert_eq!(ident.permutation, vec![0, 1, 2, 3, 4]);

        let mut swapped = sys.clone();
        swapped.right_vectors.swap_columns(1, 3);
        swapped.eigenvalues.swap(1, 3);
        let p = track_pairing(&sys, &swapped);
        assert_eq!(p.permutation, vec![0, 3, 2, 1, 4]);
    }

    #[test]
    fn rigidity_decomposition_limits() {
        let d = rigidity_decomposition(&[c(1.0, 0.0), c(-2.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(d.ratio.re, 1.0, epsilon = 1e-15);
        assert_eq!(d.theta, 0.0);
        let s = 0.5f64.sqrt();
        let d = rigidity_decomposition(&[c(s, 0.0), c(0.0, s)]).unwrap();
        assert!(d.ratio.norm() < 1e-15);
        assert!(rigidity_decomposition(&[c(0.0, 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn pairing_is_a_bijection(seed_a in 1u64..500, seed_b in 1u64..500) {
            let a = eig_complex_symmetric(&scrambled_symmetric(5, seed_a)).unwrap();
            let b = eig_complex_symmetric(&scrambled_symmetric(5, seed_b)).unwrap();
            let mut perm = track_pairing(&a, &b).permutation;
            perm.sort_unstable();
            prop_assert_eq!(perm, vec![0, 1, 2, 3, 4]);
        }

        #[test]
        fn rigidity_orthogonalizes(re in proptest::collection::vec(-1.0f64..1.0, 4),
                                   im in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let v: Vec<C64> = re.iter().zip(&im).map(|(a, b)| c(*a, *b)).collect();
            prop_assume!(norm2(&v) > 1e-6);
            let d = rigidity_decomposition(&v).unwrap();
            let rot = C64::from_polar(1.0, -d.theta);
            let cross: f64 = v.iter().map(|x| { let y = rot * x; y.re * y.im }).sum();
            prop_assert!(cross.abs() < 1e-10 * norm2(&v));
            let modulus = (d.re_norm2 - d.im_norm2) / (d.re_norm2 + d.im_norm2);
            prop_assert!((modulus - d.ratio.norm()).abs() < 1e-12);
            prop_assert!(d.ratio.norm() <= 1.0 + 1e-12);
        }
    }
}
