//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::{CMat, C64};

/// Induced ∞-norm (max absolute row sum).
pub fn inf_norm(m: &CMat) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Largest modulus strictly below the diagonal.
pub fn strictly_lower_max(m: &CMat) -> f64 {
    let mut r = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i.min(m.ncols()) {
            r = r.max(m[(i, j)].norm());
        }
    }
    r
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Eigenvalues from the complex Schur form, sorted by real then imaginary part.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    let (_, t) = m.clone().schur().unpack();
    let mut v: Vec<C64> = t.diagonal().iter().copied().collect();
    sort_complex(&mut v);
    v
}

pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Groups eigenvalues lying within `tol` of each other (single linkage on the
/// sorted list) and returns one mean per cluster.
pub fn eigenvalue_clusters(m: &CMat, tol: f64) -> Vec<C64> {
    let vals = eigenvalues(m);
    let mut groups: Vec<Vec<C64>> = Vec::new();
    for v in vals {
        match groups.iter_mut().find(|g| g.iter().any(|w| (w - v).norm() <= tol)) {
            Some(g) => g.push(v),
            None => groups.push(vec![v]),
        }
    }
    groups
        .into_iter()
        .map(|g| g.iter().sum::<C64>() / C64::new(g.len() as f64, 0.0))
        .collect()
}

/// Orthonormal basis (as columns) of the null space of `m`; singular values
/// `≤ thr` count as zero. Requires `nrows ≥ ncols`.
pub fn nullspace(m: &CMat, thr: f64) -> CMat {
    let n = m.ncols();
    assert!(m.nrows() >= n, "nullspace needs a tall or square matrix");
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("v requested");
    let cols: Vec<_> = (0..n)
        .filter(|&i| svd.singular_values[i] <= thr)
        .map(|i| vt.row(i).adjoint())
        .collect();
    if cols.is_empty() {
        return CMat::zeros(n, 0);
    }
    CMat::from_columns(&cols)
}

/// Orthonormal basis of the column span of `m`; singular values below
/// `rel_tol · max(σ_max, 1)` are dropped.
pub fn column_span(m: &CMat, rel_tol: f64) -> CMat {
    let rows = m.nrows();
    if m.ncols() == 0 {
        return CMat::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thr = rel_tol * smax.max(1.0);
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr)
        .map(|i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return CMat::zeros(rows, 0);
    }
    CMat::from_columns(&cols)
}

/// Orthonormal complement of the unit vector `v` built by Gram–Schmidt on the
/// canonical axes, largest residual first (ties to the lowest index).
pub fn complement(v: &nalgebra::DVector<C64>) -> CMat {
    let n = v.len();
    let mut basis: Vec<nalgebra::DVector<C64>> = vec![v.clone()];
    let mut used = vec![false; n];
    while basis.len() < n {
        let mut best: Option<(usize, f64, nalgebra::DVector<C64>)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut r = nalgebra::DVector::<C64>::zeros(n);
            r[i] = C64::new(1.0, 0.0);
            // two passes for stability
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dotc(&r);
                    r -= b * c;
                }
            }
            let nr = r.norm();
            if best.as_ref().is_none_or(|(_, bn, _)| nr > *bn + 1e-12) {
                best = Some((i, nr, r));
            }
        }
        let (i, nr, r) = best.expect("complement exhausted");
        used[i] = true;
        basis.push(r / C64::new(nr, 0.0));
    }
    CMat::from_columns(&basis[1..])
}

/// Real-to-complex conversion helper.
pub fn complexify(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// Matrix exponential.
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// ∞-norm condition number.
pub fn cond_inf(p: &CMat, p_inv: &CMat) -> f64 {
    inf_norm(p) * inf_norm(p_inv)
}

/// Column-major vectorization.
pub fn vectorize(m: &CMat) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_iterator(m.len(), m.iter().copied())
}

pub fn unvectorize(v: &[C64], n: usize) -> CMat {
    CMat::from_column_slice(n, n, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inf_norm_is_max_row_sum() {
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -2.0), c(3.0, 4.0), c(0.0, 0.0)]);
        assert_eq!(inf_norm(&m), 5.0);
    }

    #[test]
    fn clusters_merge_repeated_eigenvalues() {
        let m = CMat::from_row_slice(3, 3, &[
            c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0),
            c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0),
        ]);
        let cl = eigenvalue_clusters(&m, 1e-8);
        assert_eq!(cl.len(), 2);
        assert!((cl[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((cl[1] - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn nullspace_of_jordan_block() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let ns = nullspace(&m, 1e-10);
        assert_eq!(ns.ncols(), 1);
        assert!((ns[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let v = nalgebra::DVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]);
        let q = complement(&v);
        assert_eq!(q.ncols(), 2);
        let full = CMat::from_columns(&[v.clone(), q.column(0).into_owned(), q.column(1).into_owned()]);
        let g = full.adjoint() * &full - CMat::identity(3, 3);
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn complement_of_first_axis_is_remaining_axes() {
        let v = nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let q = complement(&v);
        assert_eq!(q, CMat::from_row_slice(3, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]));
    }
}
