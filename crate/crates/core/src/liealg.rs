//! Matrix Lie algebras spanned by Jacobians: bracket closure, the derived
//! series, and a constructive Lie theorem (common triangularization).
//!
//! Spans are computed numerically. Matrices are vectorized and
//! orthonormalized through an SVD; singular values below
//! `tol·max(σ_max, 1)` count as zero.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::{CMat, C64};

/// Default rank tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("no generators given")]
    Empty,
    #[error("generators must be square matrices of one size")]
    ShapeMismatch,
    #[error("no common eigenvector at deflation depth {depth} (dimension {dim}); the matrices are not simultaneously triangularizable")]
    NotSimultaneouslyTriangularizable { depth: usize, dim: usize },
    #[error("triangularization residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("diagonal entry {index} of T{subsystem} has real part {re} ≥ 0; the Jacobian is not Hurwitz")]
    NotHurwitz { subsystem: usize, index: usize, re: f64 },
}

/// Numerical span of a set of matrices, closed under the commutator.
#[derive(Debug, Clone)]
pub struct MatrixLieAlgebra {
    n: usize,
    generators: Vec<CMat>,
    basis: Vec<CMat>,
}

impl MatrixLieAlgebra {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn matrix_size(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[CMat] {
        &self.generators
    }

    /// Orthonormal (Frobenius) basis of the algebra.
    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }
}

fn check_shapes(mats: &[CMat]) -> Result<usize, LieError> {
    let n = mats.first().ok_or(LieError::Empty)?.nrows();
    if mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(LieError::ShapeMismatch);
    }
    Ok(n)
}

// Orthonormal basis of span(mats), mats viewed as vectors in ℂ^{n²}.
fn span(mats: &[CMat], n: usize, tol: f64) -> Vec<CMat> {
    if mats.is_empty() {
        return Vec::new();
    }
    let cols: Vec<DVector<C64>> = mats.iter().map(linalg::vectorize).collect();
    let m = CMat::from_columns(&cols);
    let u = linalg::column_span(&m, tol);
    (0..u.ncols()).map(|i| linalg::unvectorize(u.column(i).as_slice(), n)).collect()
}

fn pairwise_brackets(basis: &[CMat]) -> Vec<CMat> {
    let mut out = Vec::new();
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            out.push(linalg::commutator(&basis[i], &basis[j]));
        }
    }
    out
}

/// Smallest bracket-closed subspace containing the generators.
///
/// Generators are scaled to unit Frobenius norm first so the rank test does
/// not depend on their magnitude.
pub fn close_under_bracket(generators: &[CMat], tol: f64) -> Result<MatrixLieAlgebra, LieError> {
    let n = check_shapes(generators)?;
    let normalized: Vec<CMat> = generators
        .iter()
        .map(|g| {
            let f = g.norm();
            if f > 0.0 {
                g / C64::new(f, 0.0)
            } else {
                g.clone()
            }
        })
        .collect();
    let mut basis = span(&normalized, n, tol);
    loop {
        let mut all = basis.clone();
        all.extend(pairwise_brackets(&basis));
        let next = span(&all, n, tol);
        if next.len() == basis.len() {
            break;
        }
        basis = next;
    }
    Ok(MatrixLieAlgebra { n, generators: generators.to_vec(), basis })
}

/// Derived series `𝔤^{j+1} = [𝔤^j, 𝔤^j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solvability {
    pub solvable: bool,
    /// Dimensions of `𝔤⁰ = 𝔤, 𝔤¹, …` until zero or stagnation.
    pub derived_dims: Vec<usize>,
}

pub fn is_solvable(g: &MatrixLieAlgebra, tol: f64) -> Solvability {
    let mut dims = vec![g.dim()];
    let mut cur = g.basis.clone();
    while !cur.is_empty() {
        let next = span(&pairwise_brackets(&cur), g.n, tol);
        dims.push(next.len());
        if next.len() >= cur.len() {
            return Solvability { solvable: false, derived_dims: dims };
        }
        cur = next;
    }
    Solvability { solvable: true, derived_dims: dims }
}

/// Common upper-triangular form `T⁽ⁱ⁾ = P⁻¹ A⁽ⁱ⁾ P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangularizationResult {
    #[serde(with = "crate::serial::cmat")]
    pub p: CMat,
    #[serde(with = "crate::serial::cmat")]
    pub p_inv: CMat,
    #[serde(with = "crate::serial::cmat_list")]
    pub t_list: Vec<CMat>,
    /// Diagonal of each `T⁽ⁱ⁾`.
    #[serde(with = "crate::serial::cvec_list")]
    pub eigenvalues: Vec<Vec<C64>>,
    /// Largest strictly-lower modulus over all `T⁽ⁱ⁾`.
    pub residual: f64,
    /// `‖P‖∞‖P⁻¹‖∞`.
    pub cond: f64,
}

impl TriangularizationResult {
    /// Fails with [`LieError::NotHurwitz`] if any diagonal has `Re ≥ 0`.
    pub fn check_hurwitz(&self) -> Result<(), LieError> {
        for (i, ev) in self.eigenvalues.iter().enumerate() {
            for (j, l) in ev.iter().enumerate() {
                if l.re >= 0.0 {
                    return Err(LieError::NotHurwitz { subsystem: i + 1, index: j + 1, re: l.re });
                }
            }
        }
        Ok(())
    }
}

/// Cluster tolerance for eigenvalues, relative to `max(‖A‖_F, 1)`.
const CLUSTER_TOL: f64 = 1e-8;
/// Null-space threshold for stacked `A − μI`, relative to `max(‖A‖_F, 1)`.
const NULL_TOL: f64 = 1e-7;

/// Builds a unitary common flag by repeated common-eigenvector extraction and
/// deflation, then scales `P` so that `‖P⁻¹‖∞ = 1`.
///
/// At each depth every combination of eigenvalue clusters (one per matrix) is
/// tried; the common eigenspace is the null space of the stacked `A⁽ⁱ⁾ − μᵢI`.
/// Among nonempty intersections the one closest to the first coordinate axis
/// wins (earliest combination on ties) and the eigenvector is the normalized
/// projection of that axis onto it.
pub fn simultaneous_triangularize(a_list: &[CMat], tol: f64) -> Result<TriangularizationResult, LieError> {
    let n = check_shapes(a_list)?;
    let u = flag_recursive(a_list, 0)?;
    let c = linalg::inf_norm(&u.adjoint());
    let p = &u * C64::new(c, 0.0);
    let p_inv = u.adjoint() / C64::new(c, 0.0);
    let t_list: Vec<CMat> = a_list.iter().map(|a| u.adjoint() * a * &u).collect();
    let residual = t_list.iter().map(linalg::strictly_lower_max).fold(0.0, f64::max);
    let scale = a_list.iter().map(linalg::max_abs).fold(0.0, f64::max).max(1.0);
    let allowed = tol.max(1e-9) * scale;
    if residual > allowed {
        return Err(LieError::ResidualTooLarge { residual, tol: allowed });
    }
    let eigenvalues = t_list.iter().map(|t| (0..n).map(|i| t[(i, i)]).collect()).collect();
    let cond = linalg::cond_inf(&p, &p_inv);
    if cond > 1e8 {
        log::warn!("triangularizing basis is ill-conditioned (cond = {cond:e})");
    }
    Ok(TriangularizationResult { p, p_inv, t_list, eigenvalues, residual, cond })
}

fn flag_recursive(a_list: &[CMat], depth: usize) -> Result<CMat, LieError> {
    let n = a_list[0].nrows();
    if n == 1 {
        return Ok(CMat::identity(1, 1));
    }
    let v = common_eigenvector(a_list).ok_or(LieError::NotSimultaneouslyTriangularizable { depth, dim: n })?;
    let q2 = linalg::complement(&v);
    let deflated: Vec<CMat> = a_list.iter().map(|a| q2.adjoint() * a * &q2).collect();
    let sub = flag_recursive(&deflated, depth + 1)?;
    let rest = &q2 * sub;
    let mut cols = vec![v];
    cols.extend((0..n - 1).map(|i| rest.column(i).into_owned()));
    Ok(CMat::from_columns(&cols))
}

fn common_eigenvector(a_list: &[CMat]) -> Option<DVector<C64>> {
    let n = a_list[0].nrows();
    let scales: Vec<f64> = a_list.iter().map(|a| a.norm().max(1.0)).collect();
    let clusters: Vec<Vec<C64>> = a_list
        .iter()
        .zip(&scales)
        .map(|(a, s)| linalg::eigenvalue_clusters(a, CLUSTER_TOL * s))
        .collect();
    let total: usize = clusters.iter().map(Vec::len).product();
    let mut best: Option<(f64, CMat)> = None;
    for code in 0..total {
        // mixed-radix decode, first matrix most significant
        let mut rem = code;
        let mut choice = vec![0usize; a_list.len()];
        for i in (0..a_list.len()).rev() {
            choice[i] = rem % clusters[i].len();
            rem /= clusters[i].len();
        }
        let mut stacked = CMat::zeros(n * a_list.len(), n);
        for (i, a) in a_list.iter().enumerate() {
            let mut shifted = a.clone();
            for d in 0..n {
                shifted[(d, d)] -= clusters[i][choice[i]];
            }
            // scale each block so all matrices weigh the same
            let shifted = shifted / C64::new(scales[i], 0.0);
            stacked.view_mut((i * n, 0), (n, n)).copy_from(&shifted);
        }
        let ns = linalg::nullspace(&stacked, NULL_TOL);
        if ns.ncols() == 0 {
            continue;
        }
        // cos of the angle between e₁ and the subspace
        let score = ns.row(0).norm();
        if best.as_ref().is_none_or(|(s, _)| score > *s + 1e-12) {
            best = Some((score, ns));
        }
    }
    let (score, ns) = best?;
    let v: DVector<C64> = if score > 1e-12 {
        let coeffs = ns.row(0).adjoint();
        &ns * coeffs
    } else {
        let col = ns.column(0).into_owned();
        // fix the phase: largest entry real positive
        let (k, _) = col.iter().enumerate().fold((0, 0.0), |acc, (i, c)| if c.norm() > acc.1 + 1e-14 { (i, c.norm()) } else { acc });
        let ph = col[k] / C64::new(col[k].norm(), 0.0);
        col / ph
    };
    let nv = v.norm();
    Some(v / C64::new(nv, 0.0))
}

/// Lyapunov weights for the linear switched system `ẋ = A⁽ⁱ⁾x` in a common
/// flag, `V(x) = Σ ε_j |v_j† x|²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClf {
    pub epsilon: Vec<f64>,
    /// Orthonormal flag vectors `v_j` as columns.
    #[serde(with = "crate::serial::cmat")]
    pub flag: CMat,
}

impl LinearClf {
    pub fn evaluate(&self, x: &[C64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        (0..self.epsilon.len())
            .map(|j| self.epsilon[j] * self.flag.column(j).dotc(&xv).norm_sqr())
            .sum()
    }
}

/// Headroom factor in the ε recursions.
pub const DEFAULT_ETA: f64 = 0.5;

/// `ε₁ = 1`, then
/// `ε_j = (1+η)·max_{i,k<j} ε_k (n−1)²/4 · |T⁽ⁱ⁾_kj|² / (|Re T⁽ⁱ⁾_jj||Re T⁽ⁱ⁾_kk|)`,
/// with `ε_j = 1` when the maximum is over nothing coupled.
pub fn linear_clf(tri: &TriangularizationResult, eta: f64) -> Result<LinearClf, LieError> {
    tri.check_hurwitz()?;
    let n = tri.p.nrows();
    let factor = ((n as f64 - 1.0).powi(2)) / 4.0;
    let mut eps = vec![1.0; n];
    for j in 1..n {
        let mut m = 0.0f64;
        for t in &tri.t_list {
            for k in 0..j {
                let q = factor * t[(k, j)].norm_sqr() / (t[(j, j)].re.abs() * t[(k, k)].re.abs());
                m = m.max(eps[k] * q);
            }
        }
        eps[j] = if m > 0.0 { (1.0 + eta) * m } else { 1.0 };
    }
    Ok(LinearClf { epsilon: eps, flag: unitary_flag(tri) })
}

/// The unitary matrix `U` with `P = c·U`.
pub fn unitary_flag(tri: &TriangularizationResult) -> CMat {
    let c = 1.0 / tri.p_inv.column(0).norm();
    &tri.p_inv.adjoint() * C64::new(c, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn m2(v: [f64; 4]) -> CMat {
        CMat::from_row_slice(2, 2, &v.map(c))
    }

    fn e() -> CMat {
        m2([0.0, 1.0, 0.0, 0.0])
    }
    fn f() -> CMat {
        m2([0.0, 0.0, 1.0, 0.0])
    }
    fn h() -> CMat {
        m2([1.0, 0.0, 0.0, -1.0])
    }

    // Brute-force oracle: closure by repeated Gram–Schmidt over all brackets
    // of all elements found so far (not only of a basis).
    fn oracle_closure_dim(gens: &[CMat]) -> usize {
        let mut elems: Vec<CMat> = gens.to_vec();
        let rank = |v: &[CMat]| {
            let cols: Vec<_> = v.iter().map(linalg::vectorize).collect();
            let m = CMat::from_columns(&cols);
            m.svd(false, false).singular_values.iter().filter(|&&s| s > 1e-9).count()
        };
        loop {
            let r = rank(&elems);
            let mut more = elems.clone();
            for a in &elems {
                for b in &elems {
                    more.push(linalg::commutator(a, b));
                }
            }
            if rank(&more) == r {
                return r;
            }
            elems = more;
        }
    }

    #[test]
    fn commuting_diagonals() {
        let a = CMat::from_diagonal(&DVector::from_vec(vec![c(-1.0), c(-2.0)]));
        let b = CMat::from_diagonal(&DVector::from_vec(vec![c(-3.0), c(0.5)]));
        let g = close_under_bracket(&[a.clone(), b], DEFAULT_TOL).unwrap();
        assert_eq!(g.dim(), 2);
        let g1 = close_under_bracket(&[a.clone(), a * c(2.0)], DEFAULT_TOL).unwrap();
        assert_eq!(g1.dim(), 1);
    }

    #[test]
    fn e_and_f_close_to_sl2() {
        let g = close_under_bracket(&[e(), f()], DEFAULT_TOL).unwrap();
        assert_eq!(g.dim(), 3);
        assert_eq!(oracle_closure_dim(&[e(), f()]), 3);
        let s = is_solvable(&g, DEFAULT_TOL);
        assert!(!s.solvable);
        assert_eq!(s.derived_dims, vec![3, 3]);
    }

    #[test]
    fn e_and_h_span_a_borel_subalgebra() {
        // [E, H] = −2E, so this pair closes in two dimensions and is solvable
        let g = close_under_bracket(&[e(), h()], DEFAULT_TOL).unwrap();
        assert_eq!(g.dim(), 2);
        assert_eq!(oracle_closure_dim(&[e(), h()]), 2);
        assert!(is_solvable(&g, DEFAULT_TOL).solvable);
    }

    #[test]
    fn scalar_multiples_of_identity() {
        let g = close_under_bracket(&[m2([-0.5, 0.0, 0.0, -0.5]), m2([-2.0, 0.0, 0.0, -2.0])], DEFAULT_TOL).unwrap();
        assert_eq!(g.dim(), 1);
        assert_eq!(is_solvable(&g, DEFAULT_TOL).derived_dims, vec![1, 0]);
    }

    #[test]
    fn triangular_and_single_matrices_are_solvable() {
        let t1 = m2([-1.0, 2.0, 0.0, -3.0]);
        let t2 = m2([0.5, -1.0, 0.0, 4.0]);
        assert!(is_solvable(&close_under_bracket(&[t1.clone(), t2], DEFAULT_TOL).unwrap(), DEFAULT_TOL).solvable);
        assert!(is_solvable(&close_under_bracket(&[e() + f()], DEFAULT_TOL).unwrap(), DEFAULT_TOL).solvable);
    }

    #[test]
    fn upper_triangular_pair_gives_identity() {
        let t1 = m2([-1.0, 2.0, 0.0, -3.0]);
        let t2 = m2([-2.0, -1.0, 0.0, -1.0]);
        let r = simultaneous_triangularize(&[t1.clone(), t2.clone()], DEFAULT_TOL).unwrap();
        assert_eq!(r.p, CMat::identity(2, 2));
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.t_list, vec![t1, t2]);
    }

    #[test]
    fn conjugated_diagonal_pair() {
        let s = m2([1.0, 0.4, -0.7, 1.3]);
        let si = s.clone().try_inverse().unwrap();
        let a = &s * m2([-1.0, 0.0, 0.0, -2.0]) * &si;
        let b = &s * m2([-3.0, 0.0, 0.0, -1.0]) * &si;
        let r = simultaneous_triangularize(&[a.clone(), b.clone()], DEFAULT_TOL).unwrap();
        assert!(r.residual <= 1e-9);
        assert!((&r.p * &r.p_inv - CMat::identity(2, 2)).norm() <= 1e-10);
        assert!((linalg::inf_norm(&r.p_inv) - 1.0).abs() < 1e-12);
        let mut d: Vec<C64> = r.eigenvalues[0].clone();
        linalg::sort_complex(&mut d);
        assert!((d[0] - c(-2.0)).norm() < 1e-9 && (d[1] - c(-1.0)).norm() < 1e-9);
    }

    #[test]
    fn sl2_pair_has_no_common_eigenvector() {
        let err = simultaneous_triangularize(&[e(), f()], DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, LieError::NotSimultaneouslyTriangularizable { depth: 0, dim: 2 }));
        // oracle: eigenvectors of E are multiples of e₁, of F multiples of e₂
        let ee = linalg::nullspace(&e(), 1e-12);
        let ff = linalg::nullspace(&f(), 1e-12);
        assert_eq!((ee.ncols(), ff.ncols()), (1, 1));
        assert!(ee.column(0).dotc(&ff.column(0)).norm() < 1e-12);
    }

    #[test]
    fn linear_clf_examples() {
        let t = m2([-1.0, 1.0, 0.0, -1.0]);
        let r = simultaneous_triangularize(&[t], DEFAULT_TOL).unwrap();
        let l = linear_clf(&r, DEFAULT_ETA).unwrap();
        assert_eq!(l.epsilon, vec![1.0, 0.375]);

        let d = simultaneous_triangularize(&[m2([-1.0, 0.0, 0.0, -2.0]), m2([-3.0, 0.0, 0.0, -4.0])], DEFAULT_TOL).unwrap();
        assert_eq!(linear_clf(&d, DEFAULT_ETA).unwrap().epsilon, vec![1.0, 1.0]);

        let one = simultaneous_triangularize(&[CMat::from_element(1, 1, c(-2.0))], DEFAULT_TOL).unwrap();
        assert_eq!(linear_clf(&one, DEFAULT_ETA).unwrap().epsilon, vec![1.0]);
    }

    #[test]
    fn linear_clf_rejects_unstable_diagonal() {
        let r = simultaneous_triangularize(&[m2([0.5, 1.0, 0.0, -1.0])], DEFAULT_TOL).unwrap();
        assert!(matches!(linear_clf(&r, DEFAULT_ETA), Err(LieError::NotHurwitz { subsystem: 1, index: 1, .. })));
    }

    pub(crate) fn random_triangular(rng: &mut impl Rng, n: usize) -> CMat {
        CMat::from_fn(n, n, |i, j| {
            if i > j {
                C64::new(0.0, 0.0)
            } else if i == j {
                C64::new(-rng.random_range(0.5..3.0), rng.random_range(-1.0..1.0))
            } else {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }
        })
    }

    fn random_similarity(rng: &mut impl Rng, n: usize) -> CMat {
        loop {
            let s = CMat::from_fn(n, n, |i, j| {
                let d = if i == j { 2.0 } else { 0.0 };
                C64::new(d + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            if s.clone().try_inverse().is_some() {
                return s;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn solvability_is_similarity_invariant(seed in any::<u64>(), n in 2usize..=4) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = random_similarity(&mut rng, n);
            let si = s.clone().try_inverse().unwrap();
            let tri = [random_triangular(&mut rng, n), random_triangular(&mut rng, n)];
            let conj: Vec<CMat> = tri.iter().map(|t| &s * t * &si).collect();
            prop_assert!(is_solvable(&close_under_bracket(&conj, 1e-8).unwrap(), 1e-8).solvable);
            // embed sl₂ in the top-left corner
            let mut ee = CMat::zeros(n, n);
            ee[(0, 1)] = C64::new(1.0, 0.0);
            let ff = ee.transpose();
            let conj_sl2 = [&s * &ee * &si, &s * &ff * &si];
            prop_assert!(!is_solvable(&close_under_bracket(&conj_sl2, 1e-8).unwrap(), 1e-8).solvable);
        }

        #[test]
        fn triangularization_of_conjugated_pairs(seed in any::<u64>(), n in 1usize..=4) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = random_similarity(&mut rng, n);
            let si = s.clone().try_inverse().unwrap();
            let tri = [random_triangular(&mut rng, n), random_triangular(&mut rng, n)];
            let a: Vec<CMat> = tri.iter().map(|t| &s * t * &si).collect();
            let r = simultaneous_triangularize(&a, DEFAULT_TOL).unwrap();
            let scale = a.iter().map(linalg::max_abs).fold(0.0, f64::max);
            prop_assert!(r.residual <= 1e-9 * scale.max(1.0));
            prop_assert!((&r.p * &r.p_inv - CMat::identity(n, n)).norm() <= 1e-10);
            for (i, ai) in a.iter().enumerate() {
                let mut got = r.eigenvalues[i].clone();
                let mut want = linalg::eigenvalues(ai);
                linalg::sort_complex(&mut got);
                linalg::sort_complex(&mut want);
                for (x, y) in got.iter().zip(&want) {
                    prop_assert!((x - y).norm() <= 1e-8);
                }
            }
            let clf = linear_clf(&r, DEFAULT_ETA).unwrap();
            // strict ε-condition, checked directly
            let factor = ((n as f64 - 1.0).powi(2)) / 4.0;
            for t in &r.t_list {
                for j in 1..n {
                    for k in 0..j {
                        let q = factor * t[(k, j)].norm_sqr() / (t[(j, j)].re.abs() * t[(k, k)].re.abs());
                        prop_assert!(clf.epsilon[j] > clf.epsilon[k] * q);
                    }
                }
            }
        }
    }
}
