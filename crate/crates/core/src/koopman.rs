//! Truncated Koopman generator `L_F f = F·∇f` in the monomial basis.
//!
//! Row `k` holds `L_F e_k` expanded on the basis, so
//!
//! ```text
//! K[k][j] = ⟨L_F e_k, e_j⟩ = Σ_l α_l(k) · a_{l, (α(j) − α(k))_l}     if |α(j)| ≥ |α(k)|
//! ```
//!
//! and zero otherwise. Indices are basis indices, so the constant monomial
//! (index 0) is an empty row; [`KoopmanMatrix::dense`] drops it.
//!
//! Since entries only couple `|α(j)| ≥ |α(k)|`, every stored entry is
//! exact: truncation removes entries, it never perturbs them. What truncation
//! does limit is which rows are complete; that is `exact_degree`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::multiindex::{shift_index, MultiIndex, MultiIndexBasis};
use crate::serial::complex_literal;
use crate::vectorfield::PolyVectorField;
use crate::{CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoopmanError {
    #[error("field dimension {field} does not match basis dimension {basis}")]
    DimensionMismatch { field: usize, basis: usize },
    #[error("basis must contain degree-1 monomials")]
    DegreeZeroBasis,
    #[error("diagonal entry at {alpha:?} is {got} but Σ α_l λ_l = {expected}")]
    DiagonalMismatch { alpha: MultiIndex, expected: C64, got: C64 },
}

/// Deliberate corruption of the entry formula, for mutation testing.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryFault {
    None,
    SignFlip,
}

#[derive(Debug, Clone)]
pub struct KoopmanMatrix {
    basis: MultiIndexBasis,
    rows: Vec<Vec<(usize, C64)>>,
    exact_degree: u32,
    field_degree: u32,
}

/// `⟨L_F e_k, e_j⟩` straight from the coefficient formula.
pub fn entry(f: &PolyVectorField, basis: &MultiIndexBasis, k: usize, j: usize) -> C64 {
    let ak = basis.alpha(k);
    let aj = basis.alpha(j);
    let mut s = C64::new(0.0, 0.0);
    if aj.total_degree() < ak.total_degree() {
        return s;
    }
    for l in 0..basis.dim() {
        let w = ak.get(l);
        if w == 0 {
            continue;
        }
        if let Some(beta) = shift_index(ak, l, aj) {
            s += f.coefficient(l, &beta) * w as f64;
        }
    }
    s
}

pub fn build_matrix(f: &PolyVectorField, basis: &MultiIndexBasis) -> Result<KoopmanMatrix, KoopmanError> {
    build_matrix_faulty(f, basis, EntryFault::None)
}

#[doc(hidden)]
pub fn build_matrix_faulty(f: &PolyVectorField, basis: &MultiIndexBasis, fault: EntryFault) -> Result<KoopmanMatrix, KoopmanError> {
    if f.dim() != basis.dim() {
        return Err(KoopmanError::DimensionMismatch { field: f.dim(), basis: basis.dim() });
    }
    if basis.max_degree() < 1 {
        return Err(KoopmanError::DegreeZeroBasis);
    }
    let nmax = basis.max_degree();
    let terms: Vec<(usize, &MultiIndex, C64)> = f.terms().collect();
    let sign = if fault == EntryFault::SignFlip { -1.0 } else { 1.0 };
    // scatter: the term a·z^β of F_l sends z^α to α_l·a·z^{α+β−e_l}
    let rows: Vec<Vec<(usize, C64)>> = (0..basis.len())
        .into_par_iter()
        .map(|k| {
            let ak = basis.alpha(k);
            let mut row: BTreeMap<usize, C64> = BTreeMap::new();
            for &(l, beta, a) in &terms {
                let w = ak.get(l);
                if w == 0 || ak.total_degree() + beta.total_degree() - 1 > nmax {
                    continue;
                }
                let mut g = ak.checked_add(beta).exponents().to_vec();
                g[l] -= 1;
                let j = basis.index_of(&MultiIndex::new(g)).expect("dimension checked").expect("degree checked");
                *row.entry(j).or_insert(C64::new(0.0, 0.0)) += a * (w as f64 * sign);
            }
            row.into_iter().filter(|(_, v)| *v != C64::new(0.0, 0.0)).collect()
        })
        .collect();
    let field_degree = f.degree();
    let exact_degree = (nmax + 1).saturating_sub(field_degree.max(1));
    Ok(KoopmanMatrix { basis: basis.clone(), rows, exact_degree, field_degree })
}

impl KoopmanMatrix {
    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    /// Number of non-constant monomials `M`.
    pub fn size(&self) -> usize {
        self.basis.len() - 1
    }

    /// Rows `k` with `|α(k)| ≤ exact_degree` contain every entry of the
    /// infinite matrix.
    pub fn exact_degree(&self) -> u32 {
        self.exact_degree
    }

    pub fn field_degree(&self) -> u32 {
        self.field_degree
    }

    /// Sparse row `k` as `(j, value)` pairs sorted by `j`.
    pub fn row(&self, k: usize) -> &[(usize, C64)] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, j: usize) -> C64 {
        match self.rows[k].binary_search_by_key(&j, |e| e.0) {
            Ok(p) => self.rows[k][p].1,
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Diagonal entry `λ_j = K[j][j]`.
    pub fn diagonal(&self, j: usize) -> C64 {
        self.get(j, j)
    }

    /// All nonzero entries `(k, j, value)`, row-major.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(k, r)| r.iter().map(move |&(j, v)| (k, j, v)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `true` iff every entry below the diagonal has modulus `≤ tol`.
    pub fn verify_triangular(&self, tol: f64) -> bool {
        self.entries().all(|(k, j, v)| k <= j || v.norm() <= tol)
    }

    /// Largest modulus below the diagonal.
    pub fn max_subdiagonal(&self) -> f64 {
        self.entries().filter(|(k, j, _)| k > j).map(|(_, _, v)| v.norm()).fold(0.0, f64::max)
    }

    /// `Σ_l α_l(j) λ̃_l` for every basis index, checked against the stored
    /// diagonal (index 0 is the constant and maps to 0).
    pub fn diagonal_eigenvalues(&self, lambda: &[C64]) -> Result<Vec<C64>, KoopmanError> {
        let mut out = Vec::with_capacity(self.basis.len());
        for j in 0..self.basis.len() {
            let a = self.basis.alpha(j);
            let expected: C64 = lambda.iter().enumerate().map(|(l, x)| x * a.get(l) as f64).sum();
            let got = self.diagonal(j);
            if (expected - got).norm() > 1e-12 * expected.norm().max(1.0) {
                return Err(KoopmanError::DiagonalMismatch { alpha: a.clone(), expected, got });
            }
            out.push(expected);
        }
        Ok(out)
    }

    /// `Σ_l |⟨L_F e_l, e_j⟩|` for every `j` (column sums of the stored
    /// matrix, exact since a column only collects lower-degree rows).
    pub fn row_abs_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.basis.len()];
        for (_, j, v) in self.entries() {
            s[j] += v.norm();
        }
        s
    }

    pub fn row_abs_sum(&self, j: usize) -> f64 {
        self.entries().filter(|e| e.1 == j).map(|e| e.2.norm()).sum()
    }

    /// Dense `M×M` matrix over the non-constant monomials.
    pub fn dense(&self) -> CMat {
        let m = self.size();
        let mut d = CMat::zeros(m, m);
        for (k, j, v) in self.entries() {
            d[(k - 1, j - 1)] = v;
        }
        d
    }

    /// Dense export, row-major, one complex literal per cell.
    pub fn to_csv(&self) -> String {
        let d = self.dense();
        let mut s = String::new();
        for i in 0..d.nrows() {
            let row: Vec<String> = (0..d.ncols()).map(|j| complex_literal(d[(i, j)])).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// `Σ_l |⟨L_F e_k, e_l⟩| ≤ Σ_l α_l(k)·‖F_l‖₁`, with the tail norm when known.
pub fn col_abs_sum(f: &PolyVectorField, alpha: &MultiIndex) -> f64 {
    (0..f.dim()).map(|l| alpha.get(l) as f64 * f.l1_norm(l)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    #[test]
    fn scalar_linear_is_diagonal() {
        let a = 0.7;
        let f = systems::diagonal_linear(1, -a);
        let b = MultiIndexBasis::new(1, 6).unwrap();
        for k in 1..=6 {
            for j in 1..=6 {
                let want = if k == j { c(-a * k as f64) } else { c(0.0) };
                assert_eq!(entry(&f, &b, k, j), want);
            }
        }
    }

    #[test]
    fn example1_entries() {
        let bb = 0.3;
        let fam = systems::example1(1.0, bb).unwrap();
        let f2 = fam.get(1);
        let b = MultiIndexBasis::new(2, 4).unwrap();
        let idx = |v: &[u32]| b.index_of(&mi(v)).unwrap().unwrap();
        assert!((entry(f2, &b, idx(&[1, 0]), idx(&[2, 0])) - c(bb)).norm() < 1e-15);
        assert!((entry(f2, &b, idx(&[1, 0]), idx(&[1, 2])) - c(-bb)).norm() < 1e-15);
        // the general table: b(α₁(j) + (α₂(j)−2)/2) and −b α₁(j)
        let k = build_matrix(f2, &b).unwrap();
        for (kk, j, v) in k.entries() {
            let (ak, aj) = (b.alpha(kk), b.alpha(j));
            let want = if kk == j {
                c(-(aj.total_degree() as f64))
            } else if ak.get(0) + 1 == aj.get(0) && ak.get(1) == aj.get(1) {
                c(bb * (aj.get(0) as f64 + (aj.get(1) as f64 - 2.0) / 2.0))
            } else if ak.get(0) == aj.get(0) && ak.get(1) + 2 == aj.get(1) {
                c(-bb * aj.get(0) as f64)
            } else {
                panic!("unexpected entry at {ak:?} -> {aj:?}");
            };
            assert!((v - want).norm() < 1e-14, "{ak:?} {aj:?}");
        }
    }

    #[test]
    fn diagonal_linear_matrix() {
        let f = systems::diagonal_linear(2, -1.0);
        let b = MultiIndexBasis::new(2, 2).unwrap();
        let k = build_matrix(&f, &b).unwrap();
        let want = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(-1.0), c(-2.0), c(-2.0), c(-2.0)]));
        assert_eq!(k.dense(), want);
        assert_eq!(k.exact_degree(), 2);
    }

    #[test]
    fn example1_first_subsystem_diagonal() {
        let a = 1.5;
        let fam = systems::example1(a, 0.2).unwrap();
        let b = MultiIndexBasis::new(2, 5).unwrap();
        let k = build_matrix(fam.get(0), &b).unwrap();
        for (kk, j, v) in k.entries() {
            assert_eq!(kk, j);
            assert_eq!(v, c(-a * b.degree(j) as f64));
        }
    }

    #[test]
    fn linear_upper_triangular_is_block_triangular() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0), c(2.0), c(0.0), c(-3.0)]);
        let f = PolyVectorField::linear(&a).unwrap();
        let b = MultiIndexBasis::new(2, 4).unwrap();
        let k = build_matrix(&f, &b).unwrap();
        for (kk, j, _) in k.entries() {
            assert_eq!(b.degree(kk), b.degree(j));
            assert!(kk <= j);
        }
        // degree-1 block is the transposed Jacobian: K[k][j] = [JF(0)]_{jk}
        assert_eq!(k.get(1, 2), c(2.0));
        assert!(k.verify_triangular(0.0));
    }

    #[test]
    fn lower_coupling_breaks_triangularity() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0), c(0.0), c(1.0), c(-2.0)]);
        let f = PolyVectorField::linear(&a).unwrap();
        let b = MultiIndexBasis::new(2, 3).unwrap();
        let k = build_matrix(&f, &b).unwrap();
        assert!(!k.verify_triangular(1e-12));
        assert!(k.max_subdiagonal() >= 1.0);
        assert!(build_matrix(&systems::diagonal_linear(3, -1.0), &MultiIndexBasis::new(3, 3).unwrap()).unwrap().verify_triangular(0.0));
    }

    #[test]
    fn diagonal_eigenvalue_formula() {
        let a = CMat::from_row_slice(2, 2, &[c(-1.0), c(0.5), c(0.0), c(-2.0)]);
        let f = PolyVectorField::linear(&a).unwrap();
        let b = MultiIndexBasis::new(2, 3).unwrap();
        let k = build_matrix(&f, &b).unwrap();
        let lam = k.diagonal_eigenvalues(&[c(-1.0), c(-2.0)]).unwrap();
        assert_eq!(lam[b.index_of(&mi(&[1, 1])).unwrap().unwrap()], c(-3.0));
        assert!(k.diagonal_eigenvalues(&[c(-1.0), c(-1.0)]).is_err());

        let e2 = systems::example2(3.0, 6).unwrap();
        let b6 = MultiIndexBasis::new(2, 6).unwrap();
        let k2 = build_matrix(e2.get(0), &b6).unwrap();
        let lam2 = k2.diagonal_eigenvalues(&[c(-1.0), c(-1.0)]).unwrap();
        assert_eq!(lam2[b6.index_of(&mi(&[3, 1])).unwrap().unwrap()], c(-4.0));
    }

    #[test]
    fn example2_column_sums() {
        let mu = 3.0;
        let fam = systems::example2(mu, 12).unwrap();
        let ch = 2f64.cosh();
        for a in [mi(&[1, 0]), mi(&[3, 2]), mi(&[0, 4])] {
            let deg = a.total_degree() as f64;
            let a1 = a.get(0) as f64;
            assert!((col_abs_sum(fam.get(0), &a) - (deg + a1 * (ch - 1.0) / (2.0 * mu))).abs() < 1e-13);
            assert!((col_abs_sum(fam.get(1), &a) - (deg + a1 * (ch + 1.0) / (2.0 * mu))).abs() < 1e-13);
        }
    }

    #[test]
    fn example2_row_sums_match_closed_form() {
        let mu = 2.4;
        let n = 14;
        let fam = systems::example2(mu, n).unwrap();
        let b = MultiIndexBasis::new(2, n).unwrap();
        let k1 = build_matrix(fam.get(0), &b).unwrap();
        let k2 = build_matrix(fam.get(1), &b).unwrap();
        let (r1, r2) = (k1.row_abs_sums(), k2.row_abs_sums());
        for j in 1..b.len() {
            let a = b.alpha(j);
            let a1 = a.get(0) as i64;
            let mut s = 0.0;
            if a.get(1) >= 1 {
                let mut l = 1;
                while a1 - 1 - 2 * l >= 0 {
                    let w = (a1 - 1 - 2 * l) as f64;
                    s += w * 2f64.powi(2 * l as i32 - 1) / (1..=(2 * l) as u64).map(|x| x as f64).product::<f64>();
                    l += 1;
                }
            }
            let deg = a.total_degree() as f64;
            assert!((r1[j] - (deg + s / mu)).abs() < 1e-12, "{a:?}");
            let extra = if a.get(1) >= 1 && a1 >= 1 { (a1 - 1) as f64 / mu } else { 0.0 };
            assert!((r2[j] - (deg + extra + s / mu)).abs() < 1e-12, "{a:?}");
            assert!((k1.row_abs_sum(j) - r1[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn row_sum_of_diagonal_linear() {
        let a = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1.0), c(-2.0)]));
        let f = PolyVectorField::linear(&a).unwrap();
        let b = MultiIndexBasis::new(2, 3).unwrap();
        let k = build_matrix(&f, &b).unwrap();
        for j in 1..b.len() {
            assert_eq!(k.row_abs_sum(j), k.diagonal(j).norm());
        }
    }

    #[test]
    fn csv_export() {
        let f = systems::diagonal_linear(1, -1.0);
        let k = build_matrix(&f, &MultiIndexBasis::new(1, 2).unwrap()).unwrap();
        assert_eq!(k.to_csv(), "-1+0i,0+0i\n0+0i,-2+0i\n");
    }

    fn arb_field(n: usize, deg: u32, upper: bool) -> impl Strategy<Value = PolyVectorField> {
        let basis = MultiIndexBasis::new(n, deg).unwrap();
        let alphas: Vec<MultiIndex> = basis.table()[1..].to_vec();
        let m = alphas.len() * n;
        proptest::collection::vec((-4i32..=4, -4i32..=4, 0u8..2), m).prop_map(move |v| {
            let terms = v.iter().enumerate().filter(|(_, t)| t.2 == 0).filter_map(|(i, t)| {
                let (l, a) = (i % n, alphas[i / n].clone());
                // strictly lower linear coupling: z_m in F_l with m < l
                if upper && a.total_degree() == 1 && (0..l).any(|m| a.get(m) == 1) {
                    return None;
                }
                Some((l, a, C64::new(t.0 as f64 / 4.0, t.1 as f64 / 4.0)))
            });
            PolyVectorField::from_terms(n, terms).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn scatter_build_matches_entry_formula(f in arb_field(2, 3, false)) {
            let b = MultiIndexBasis::new(2, 5).unwrap();
            let k = build_matrix(&f, &b).unwrap();
            for kk in 1..b.len() {
                for j in 1..b.len() {
                    prop_assert!((k.get(kk, j) - entry(&f, &b, kk, j)).norm() <= 1e-12);
                }
            }
        }

        #[test]
        fn zero_structure_and_row_support(f in arb_field(2, 3, false)) {
            let b = MultiIndexBasis::new(2, 6).unwrap();
            let k = build_matrix(&f, &b).unwrap();
            for (kk, j, _) in k.entries() {
                prop_assert!(b.degree(j) >= b.degree(kk));
            }
            for kk in 0..b.len() {
                prop_assert!(k.row(kk).len() <= f.term_count());
            }
        }

        #[test]
        fn bracket_identity(f in arb_field(2, 2, false), g in arb_field(2, 2, false)) {
            let nn = 6;
            let b = MultiIndexBasis::new(2, nn).unwrap();
            let kf = build_matrix(&f, &b).unwrap().dense();
            let kg = build_matrix(&g, &b).unwrap().dense();
            let kb = build_matrix(&f.lie_bracket(&g).unwrap(), &b).unwrap().dense();
            let comm = &kg * &kf - &kf * &kg;
            let lim = nn as i64 - f.degree() as i64 - g.degree() as i64 + 2;
            for i in 0..b.len() - 1 {
                for j in 0..b.len() - 1 {
                    if (b.degree(j + 1) as i64) <= lim {
                        prop_assert!((comm[(i, j)] - kb[(i, j)]).norm() <= 1e-10);
                    }
                }
            }
        }

        #[test]
        fn upper_jacobian_gives_triangular_matrix(f in arb_field(3, 2, true)) {
            let b = MultiIndexBasis::new(3, 4).unwrap();
            prop_assert!(build_matrix(&f, &b).unwrap().verify_triangular(0.0));
        }

        #[test]
        fn equal_degree_entries_follow_the_linear_part(f in arb_field(2, 3, false)) {
            // within one degree only the Jacobian acts: K[k][j] = Σ_l α_l(k) J_{l m}
            // where α(j) = α(k) − e_l + e_m
            let b = MultiIndexBasis::new(2, 4).unwrap();
            let k = build_matrix(&f, &b).unwrap();
            let jac = f.jacobian_at_origin();
            for (kk, j, v) in k.entries() {
                if b.degree(kk) != b.degree(j) {
                    continue;
                }
                let (ak, aj) = (b.alpha(kk), b.alpha(j));
                let mut want = C64::new(0.0, 0.0);
                for l in 0..2 {
                    for m in 0..2 {
                        if let Some(lo) = ak.lowered(l) {
                            if lo.checked_add(&MultiIndex::unit(2, m)) == *aj {
                                want += jac[(l, m)] * ak.get(l) as f64;
                            }
                        }
                    }
                }
                prop_assert!((v - want).norm() <= 1e-12);
            }
        }
    }
}
