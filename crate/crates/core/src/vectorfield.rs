//! Polynomial (or degree-truncated analytic) vector fields on ℂⁿ.
//!
//! `F_l(z) = Σ_{|α|≥1} a_{l,α} z^α`, stored sparsely per component. Fields
//! that come from truncating a power series may carry the exact ℓ¹ norm of
//! every component's full coefficient sequence in `tail_l1`; every ℓ¹ sum
//! downstream prefers it over the truncated one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::halton::halton;
use crate::multiindex::MultiIndex;
use crate::poly::{self, Poly};
use crate::{CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field dimension must be at least 1")]
    ZeroDimension,
    #[error("component {component} has a constant term; fields must vanish at the origin")]
    ConstantTerm { component: usize },
    #[error("component index {component} out of range for dimension {dim}")]
    BadComponent { component: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tail ℓ¹ norm {tail} of component {component} is below the stored sum {stored}")]
    TailTooSmall { component: usize, tail: f64, stored: f64 },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("a switched family needs at least one subsystem")]
    EmptyFamily,
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("sample count must be positive")]
    ZeroSamples,
    #[error("radius must lie in (0, 1], got {0}")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone)]
struct Term {
    component: usize,
    exps: Vec<u32>,
    coeff: C64,
}

#[derive(Debug, Clone)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<Poly>,
    tail_l1: Option<Vec<f64>>,
    // flattened copy of `components` for fast evaluation
    terms: Vec<Term>,
    max_exp: Vec<u32>,
}

impl PartialEq for PolyVectorField {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.components == other.components && self.tail_l1 == other.tail_l1
    }
}

impl PolyVectorField {
    /// Builds a field from `(component, α, coefficient)` triples with 0-based
    /// components. Duplicate terms are summed and exact zeros dropped.
    pub fn from_terms<I>(dim: usize, terms: I) -> Result<Self, FieldError>
    where
        I: IntoIterator<Item = (usize, MultiIndex, C64)>,
    {
        if dim == 0 {
            return Err(FieldError::ZeroDimension);
        }
        let mut comps = vec![Poly::new(); dim];
        for (l, a, c) in terms {
            if l >= dim {
                return Err(FieldError::BadComponent { component: l, dim });
            }
            if a.dim() != dim {
                return Err(FieldError::DimensionMismatch { expected: dim, got: a.dim() });
            }
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(FieldError::NonFinite);
            }
            if a.total_degree() == 0 {
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                return Err(FieldError::ConstantTerm { component: l });
            }
            *comps[l].entry(a).or_insert(C64::new(0.0, 0.0)) += c;
        }
        Self::from_components(dim, comps)
    }

    fn from_components(dim: usize, mut components: Vec<Poly>) -> Result<Self, FieldError> {
        for p in components.iter_mut() {
            poly::drop_zeros(p);
        }
        for (l, p) in components.iter().enumerate() {
            if p.keys().any(|a| a.total_degree() == 0) {
                return Err(FieldError::ConstantTerm { component: l });
            }
        }
        let mut max_exp = vec![0u32; dim];
        let mut terms = Vec::new();
        for (l, p) in components.iter().enumerate() {
            for (a, &c) in p {
                for (m, &e) in a.exponents().iter().enumerate() {
                    max_exp[m] = max_exp[m].max(e);
                }
                terms.push(Term { component: l, exps: a.exponents().to_vec(), coeff: c });
            }
        }
        Ok(PolyVectorField { dim, components, tail_l1: None, terms, max_exp })
    }

    /// The zero field.
    pub fn zero(dim: usize) -> Result<Self, FieldError> {
        Self::from_terms(dim, std::iter::empty())
    }

    /// Linear field `F(z) = A z`.
    pub fn linear(a: &CMat) -> Result<Self, FieldError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(FieldError::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let terms = (0..n).flat_map(|l| (0..n).map(move |m| (l, MultiIndex::unit(n, m), a[(l, m)])));
        Self::from_terms(n, terms)
    }

    /// Attaches exact per-component ℓ¹ norms of the untruncated series.
    pub fn with_tail_l1(mut self, tail: Vec<f64>) -> Result<Self, FieldError> {
        if tail.len() != self.dim {
            return Err(FieldError::DimensionMismatch { expected: self.dim, got: tail.len() });
        }
        for (l, &t) in tail.iter().enumerate() {
            if !t.is_finite() {
                return Err(FieldError::NonFinite);
            }
            let stored = self.stored_l1(l);
            // allow rounding in the last bits
            if t < stored * (1.0 - 1e-12) {
                return Err(FieldError::TailTooSmall { component: l, tail: t, stored });
            }
        }
        self.tail_l1 = Some(tail);
        Ok(self)
    }

    pub fn without_tail(mut self) -> Self {
        self.tail_l1 = None;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail_l1(&self) -> Option<&[f64]> {
        self.tail_l1.as_deref()
    }

    /// Coefficient table of component `l` (0-based).
    pub fn component(&self, l: usize) -> &BTreeMap<MultiIndex, C64> {
        &self.components[l]
    }

    pub fn coefficient(&self, l: usize, a: &MultiIndex) -> C64 {
        self.components[l].get(a).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    /// All stored terms as `(component, α, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &MultiIndex, C64)> {
        self.components.iter().enumerate().flat_map(|(l, p)| p.iter().map(move |(a, &c)| (l, a, c)))
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Max total degree with a nonzero coefficient (0 for the zero field).
    pub fn degree(&self) -> u32 {
        self.components
            .iter()
            .flat_map(|p| p.keys().map(MultiIndex::total_degree))
            .max()
            .unwrap_or(0)
    }

    /// Sum of |a_{l,α}| over stored coefficients of component `l`.
    pub fn stored_l1(&self, l: usize) -> f64 {
        self.components[l].values().map(|c| c.norm()).sum()
    }

    /// ℓ¹ norm of component `l`: the tail norm when known, else the stored sum.
    pub fn l1_norm(&self, l: usize) -> f64 {
        match &self.tail_l1 {
            Some(t) => t[l],
            None => self.stored_l1(l),
        }
    }

    /// Number of nonzero terms not of the form `z_l` in `F_l`.
    pub fn off_diagonal_term_count(&self) -> usize {
        self.terms()
            .filter(|(l, a, _)| !(a.total_degree() == 1 && a.get(*l) == 1))
            .count()
    }

    pub fn evaluate(&self, z: &[C64]) -> Vec<C64> {
        assert_eq!(z.len(), self.dim, "evaluation point has wrong dimension");
        let pows = poly::power_table(z, &self.max_exp);
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        for t in &self.terms {
            out[t.component] += t.coeff * poly::monomial(&pows, &t.exps);
        }
        out
    }

    /// `[JF(0)]_{lj}` = coefficient of `z_j` in `F_l`.
    pub fn jacobian_at_origin(&self) -> CMat {
        let n = self.dim;
        CMat::from_fn(n, n, |l, j| self.coefficient(l, &MultiIndex::unit(n, j)))
    }

    /// `[F, G] = JG·F − JF·G`, exact in the coefficients.
    pub fn lie_bracket(&self, other: &PolyVectorField) -> Result<PolyVectorField, FieldError> {
        if self.dim != other.dim {
            return Err(FieldError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let n = self.dim;
        let one = C64::new(1.0, 0.0);
        let mut comps = vec![Poly::new(); n];
        for (l, out) in comps.iter_mut().enumerate() {
            for m in 0..n {
                let dg = poly::deriv(&other.components[l], m);
                let df = poly::deriv(&self.components[l], m);
                poly::add_scaled(out, &poly::mul(&dg, &self.components[m]), one);
                poly::add_scaled(out, &poly::mul(&df, &other.components[m]), -one);
            }
        }
        Self::from_components(n, comps)
    }

    /// Linear combination `self + s·other` (tails dropped).
    pub fn add_scaled(&self, other: &PolyVectorField, s: C64) -> Result<PolyVectorField, FieldError> {
        if self.dim != other.dim {
            return Err(FieldError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut comps = self.components.clone();
        for (c, o) in comps.iter_mut().zip(&other.components) {
            poly::add_scaled(c, o, s);
        }
        Self::from_components(self.dim, comps)
    }

    /// Largest coefficient modulus.
    pub fn max_coefficient(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).fold(0.0, f64::max)
    }

    /// One classical RK4 step of `ż = F(z)`.
    pub fn flow_step(&self, z: &[C64], dt: f64) -> Result<Vec<C64>, FieldError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FieldError::InvalidStep(dt));
        }
        let out = self.rk4(z, dt);
        if out.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            Ok(out)
        } else {
            Err(FieldError::NonFinite)
        }
    }

    pub(crate) fn rk4(&self, z: &[C64], h: f64) -> Vec<C64> {
        let hh = C64::new(h, 0.0);
        let half = C64::new(0.5 * h, 0.0);
        let axpy = |x: &[C64], k: &[C64], s: C64| -> Vec<C64> { x.iter().zip(k).map(|(a, b)| a + b * s).collect() };
        let k1 = self.evaluate(z);
        let k2 = self.evaluate(&axpy(z, &k1, half));
        let k3 = self.evaluate(&axpy(z, &k2, half));
        let k4 = self.evaluate(&axpy(z, &k3, hh));
        let sixth = C64::new(h / 6.0, 0.0);
        (0..z.len())
            .map(|i| z[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * sixth)
            .collect()
    }

    /// Integrates to time `t` with fixed steps `dt`, shortening the last one.
    pub fn integrate(&self, z0: &[C64], t: f64, dt: f64) -> Result<Vec<C64>, FieldError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FieldError::InvalidStep(dt));
        }
        let steps = (t / dt).ceil().max(0.0) as usize;
        let mut z = z0.to_vec();
        let mut clock = 0.0;
        for i in 0..steps {
            let h = if i + 1 == steps { t - clock } else { dt };
            if h <= 0.0 {
                break;
            }
            z = self.flow_step(&z, h)?;
            clock += h;
        }
        Ok(z)
    }

    /// Samples `Re(F_l(z) z̄_l)` on the faces `|z_l| = ρ`, `|z_j| ≤ ρ`.
    ///
    /// Each face gets `64·samples` equispaced phases of `z_l`; the remaining
    /// coordinates follow a Halton fill of the closed disk plus a copy pushed
    /// to the face corner (`|z_j| = ρ`). Evidence, not proof.
    pub fn boundary_invariance_check(&self, rho: f64, samples: usize, margin: f64) -> Result<InvarianceReport, FieldError> {
        if samples == 0 {
            return Err(FieldError::ZeroSamples);
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(FieldError::InvalidRadius(rho));
        }
        let n = self.dim;
        let count = 64 * samples;
        let tau = std::f64::consts::TAU;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_point = vec![C64::new(0.0, 0.0); n];
        let mut worst_face = 0;
        for l in 0..n {
            for p in 0..count {
                let theta = tau * p as f64 / count as f64;
                for corner in [false, true] {
                    let mut z = vec![C64::new(0.0, 0.0); n];
                    for (j, zj) in z.iter_mut().enumerate() {
                        if j == l {
                            *zj = C64::from_polar(rho, theta);
                        } else {
                            let idx = (p + 1) as u64;
                            let r = if corner { rho } else { rho * halton(idx, 2 * j).sqrt() };
                            *zj = C64::from_polar(r, tau * halton(idx, 2 * j + 1));
                        }
                    }
                    let v = (self.evaluate(&z)[l] * z[l].conj()).re;
                    if v > worst {
                        worst = v;
                        worst_point = z;
                        worst_face = l;
                    }
                }
            }
        }
        Ok(InvarianceReport {
            holds: worst < -margin,
            worst_value: worst,
            worst_face: worst_face + 1,
            worst_point,
            rho,
            samples: n * count * 2,
            margin,
        })
    }

    /// The field in new coordinates, `F̂(ẑ) = P⁻¹ F(P ẑ)`.
    ///
    /// Strictly-lower linear coefficients (zero in exact arithmetic once `P`
    /// triangularizes the Jacobian) are cleared, and for a general `P`
    /// coefficients below `1e-13·max|c|` are dropped as round-off. Tail norms
    /// survive only when `P` is a unimodular monomial matrix (a permutation
    /// with phases), which preserves every ℓ¹ norm; the bool reports whether
    /// tails were kept.
    pub fn transformed(&self, p: &CMat, p_inv: &CMat) -> Result<(PolyVectorField, bool), FieldError> {
        let n = self.dim;
        if p.nrows() != n || p_inv.nrows() != n {
            return Err(FieldError::DimensionMismatch { expected: n, got: p.nrows() });
        }
        let one = C64::new(1.0, 0.0);
        let perm = unimodular_monomial(p);
        let mut comps = vec![Poly::new(); n];
        if let Some(perm) = &perm {
            // z_m = p_m ẑ_{π(m)}: substitute monomial-wise
            for (m, pm) in self.components.iter().enumerate() {
                let mut sub = Poly::new();
                for (a, &c) in pm {
                    let mut e = vec![0u32; n];
                    let mut coef = c;
                    for (k, &ak) in a.exponents().iter().enumerate() {
                        let (col, ph) = perm[k];
                        e[col] += ak;
                        coef *= ph.powu(ak);
                    }
                    *sub.entry(MultiIndex::new(e)).or_insert(C64::new(0.0, 0.0)) += coef;
                }
                for (l, out) in comps.iter_mut().enumerate() {
                    let w = p_inv[(l, m)];
                    if w != C64::new(0.0, 0.0) {
                        poly::add_scaled(out, &sub, w);
                    }
                }
            }
        } else {
            // linear forms (Pẑ)_m
            let forms: Vec<Poly> = (0..n)
                .map(|m| (0..n).filter(|&c| p[(m, c)] != C64::new(0.0, 0.0)).map(|c| (MultiIndex::unit(n, c), p[(m, c)])).collect())
                .collect();
            let mut power_cache: Vec<Vec<Poly>> = forms.iter().map(|f| vec![[(MultiIndex::zero(n), one)].into_iter().collect(), f.clone()]).collect();
            for (m, pm) in self.components.iter().enumerate() {
                let mut sub = Poly::new();
                for (a, &c) in pm {
                    let mut prod: Poly = [(MultiIndex::zero(n), c)].into_iter().collect();
                    for (k, &ak) in a.exponents().iter().enumerate() {
                        if ak == 0 {
                            continue;
                        }
                        while power_cache[k].len() <= ak as usize {
                            let next = poly::mul(power_cache[k].last().expect("nonempty"), &forms[k]);
                            power_cache[k].push(next);
                        }
                        prod = poly::mul(&prod, &power_cache[k][ak as usize]);
                    }
                    poly::add_scaled(&mut sub, &prod, one);
                }
                for (l, out) in comps.iter_mut().enumerate() {
                    let w = p_inv[(l, m)];
                    if w != C64::new(0.0, 0.0) {
                        poly::add_scaled(out, &sub, w);
                    }
                }
            }
            let cmax = comps.iter().flat_map(|c| c.values()).map(|c| c.norm()).fold(0.0, f64::max);
            for c in comps.iter_mut() {
                c.retain(|_, v| v.norm() > 1e-13 * cmax);
            }
        }
        for (l, c) in comps.iter_mut().enumerate() {
            for m in 0..l {
                c.remove(&MultiIndex::unit(n, m));
            }
        }
        let mut out = Self::from_components(n, comps)?;
        let mut kept = false;
        if let (Some(tail), Some(perm)) = (&self.tail_l1, &perm) {
            // F̂_{π(m)} carries the phase-rotated F_m
            let mut t = vec![0.0; n];
            for (m, &(col, _)) in perm.iter().enumerate() {
                t[col] = tail[m];
            }
            out = out.with_tail_l1(t)?;
            kept = true;
        }
        Ok((out, kept || self.tail_l1.is_none()))
    }
}

// For P with exactly one unit-modulus entry per row and column, returns
// (column, entry) per row.
fn unimodular_monomial(p: &CMat) -> Option<Vec<(usize, C64)>> {
    let n = p.nrows();
    let mut out = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for m in 0..n {
        let nz: Vec<usize> = (0..n).filter(|&c| p[(m, c)] != C64::new(0.0, 0.0)).collect();
        if nz.len() != 1 || seen[nz[0]] || (p[(m, nz[0])].norm() - 1.0).abs() > 1e-14 {
            return None;
        }
        seen[nz[0]] = true;
        out.push((nz[0], p[(m, nz[0])]));
    }
    Some(out)
}

/// Outcome of [`PolyVectorField::boundary_invariance_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub holds: bool,
    pub worst_value: f64,
    /// 1-based face index where the worst value occurred.
    pub worst_face: usize,
    #[serde(with = "crate::serial::cvec")]
    pub worst_point: Vec<C64>,
    pub rho: f64,
    pub samples: usize,
    pub margin: f64,
}

/// Ordered list of subsystems sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedFamily {
    subsystems: Vec<PolyVectorField>,
}

impl SwitchedFamily {
    pub fn new(subsystems: Vec<PolyVectorField>) -> Result<Self, FieldError> {
        let first = subsystems.first().ok_or(FieldError::EmptyFamily)?;
        let n = first.dim();
        if let Some(bad) = subsystems.iter().find(|f| f.dim() != n) {
            return Err(FieldError::DimensionMismatch { expected: n, got: bad.dim() });
        }
        Ok(SwitchedFamily { subsystems })
    }

    pub fn dim(&self) -> usize {
        self.subsystems[0].dim()
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[PolyVectorField] {
        &self.subsystems
    }

    pub fn get(&self, i: usize) -> &PolyVectorField {
        &self.subsystems[i]
    }

    pub fn jacobians(&self) -> Vec<CMat> {
        self.subsystems.iter().map(PolyVectorField::jacobian_at_origin).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex::new(v.to_vec())
    }

    fn close(a: &[C64], b: &[C64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn evaluate_linear_diagonal() {
        let f = systems::diagonal_linear(2, -1.0);
        let v = f.evaluate(&[c(0.5, 0.0), c(0.0, 0.5)]);
        assert!(close(&v, &[c(-0.5, 0.0), c(0.0, -0.5)], 1e-15));
    }

    #[test]
    fn evaluate_example1_second_subsystem() {
        let fam = systems::example1(1.0, 0.25).unwrap();
        let v = fam.get(1).evaluate(&[c(0.2, 0.0), c(0.1, 0.0)]);
        assert!(close(&v, &[c(-0.1905, 0.0), c(-0.0975, 0.0)], 1e-14), "{v:?}");
        assert!(close(&fam.get(1).evaluate(&[c(0.0, 0.0); 2]), &[c(0.0, 0.0); 2], 0.0));
    }

    #[test]
    fn rejects_constant_terms() {
        let e = PolyVectorField::from_terms(2, vec![(0, mi(&[0, 0]), c(1.0, 0.0))]).unwrap_err();
        assert_eq!(e, FieldError::ConstantTerm { component: 0 });
    }

    #[test]
    fn tail_must_dominate_stored_sum() {
        let f = PolyVectorField::from_terms(1, vec![(0, mi(&[1]), c(-1.0, 0.0)), (0, mi(&[2]), c(0.5, 0.0))]).unwrap();
        assert!(f.clone().with_tail_l1(vec![1.0]).is_err());
        let g = f.with_tail_l1(vec![2.0]).unwrap();
        assert_eq!(g.l1_norm(0), 2.0);
    }

    #[test]
    fn jacobians() {
        let fam = systems::example1(1.0, 0.25).unwrap();
        assert_eq!(fam.get(1).jacobian_at_origin(), CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]));
        let f = PolyVectorField::from_terms(2, vec![
            (0, mi(&[1, 0]), c(-1.0, 0.0)),
            (0, mi(&[0, 1]), c(2.0, 0.0)),
            (1, mi(&[0, 1]), c(-3.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(f.jacobian_at_origin(), CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(-3.0, 0.0)]));
        let q = PolyVectorField::from_terms(2, vec![(0, mi(&[2, 0]), c(1.0, 0.0))]).unwrap();
        assert_eq!(q.jacobian_at_origin(), CMat::zeros(2, 2));
    }

    #[test]
    fn bracket_of_flag_example_fields() {
        // F1 = -α x, F2 = -β x + γ (x1² - x2², 2 x1 x2) up to scaling
        let (al, be, ga) = (0.7, 1.3, 0.4);
        let f1 = systems::diagonal_linear(2, -al);
        let f2 = PolyVectorField::from_terms(2, vec![
            (0, mi(&[1, 0]), c(-be, 0.0)),
            (1, mi(&[0, 1]), c(-be, 0.0)),
            (0, mi(&[2, 0]), c(ga, 0.0)),
            (0, mi(&[0, 2]), c(-ga, 0.0)),
            (1, mi(&[1, 1]), c(2.0 * ga, 0.0)),
        ])
        .unwrap();
        let br = f1.lie_bracket(&f2).unwrap();
        let expect = PolyVectorField::from_terms(2, vec![
            (0, mi(&[2, 0]), c(-al * ga, 0.0)),
            (0, mi(&[0, 2]), c(al * ga, 0.0)),
            (1, mi(&[1, 1]), c(-2.0 * al * ga, 0.0)),
        ])
        .unwrap();
        for (l, a, v) in expect.terms() {
            assert!((br.coefficient(l, a) - v).norm() < 1e-14);
        }
        assert_eq!(br.term_count(), 3);
    }

    #[test]
    fn bracket_with_self_vanishes() {
        let f = systems::example1(1.0, 0.3).unwrap().get(1).clone();
        assert_eq!(f.lie_bracket(&f).unwrap().term_count(), 0);
        let d1 = systems::diagonal_linear(2, -1.0);
        let d2 = PolyVectorField::linear(&CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-2.0, 0.0), c(-3.0, 1.0)]))).unwrap();
        assert_eq!(d1.lie_bracket(&d2).unwrap().term_count(), 0);
    }

    #[test]
    fn rk4_scalar_decay() {
        let f = systems::diagonal_linear(1, -1.0);
        let z = f.integrate(&[c(1.0, 0.0)], 1.0, 1e-3).unwrap();
        assert!((z[0] - c((-1.0f64).exp(), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn rk4_decoupled_half_life() {
        let f = systems::diagonal_linear(2, -1.0);
        let z = f.integrate(&[c(1.0, 0.0), c(0.0, 1.0)], 2f64.ln(), 1e-3).unwrap();
        assert!(close(&z, &[c(0.5, 0.0), c(0.0, 0.5)], 1e-8));
    }

    #[test]
    fn rk4_example1_trajectory_contracts_and_matches_half_step() {
        let f = systems::example1(1.0, 0.25).unwrap().get(1).clone();
        let dt = 1e-2;
        let mut z = vec![c(0.5, 0.0), c(0.5, 0.0)];
        let mut fine = z.clone();
        let mut last = 0.5f64;
        for _ in 0..500 {
            z = f.flow_step(&z, dt).unwrap();
            fine = f.flow_step(&f.flow_step(&fine, dt / 2.0).unwrap(), dt / 2.0).unwrap();
            let norm = z.iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(norm <= last + 1e-15);
            last = norm;
        }
        // RK4 error scales as dt^4; the half-step run agrees to that order
        assert!(close(&z, &fine, 1e-9));
        assert!(last < 0.01);
    }

    #[test]
    fn rejects_bad_step() {
        let f = systems::diagonal_linear(1, -1.0);
        assert_eq!(f.flow_step(&[c(1.0, 0.0)], 0.0), Err(FieldError::InvalidStep(0.0)));
    }

    #[test]
    fn boundary_check_linear_contraction() {
        let f = systems::diagonal_linear(2, -1.0);
        let r = f.boundary_invariance_check(0.9, 1, 0.0).unwrap();
        assert!(r.holds);
        assert!((r.worst_value + 0.81).abs() < 1e-12);
    }

    #[test]
    fn boundary_check_example1() {
        let fam = systems::example1(1.0, 0.25).unwrap();
        for f in fam.subsystems() {
            assert!(f.boundary_invariance_check(0.9, 2, 0.0).unwrap().holds);
        }
    }

    #[test]
    fn boundary_check_outward_face() {
        let f = PolyVectorField::from_terms(2, vec![(0, mi(&[1, 0]), c(1.0, 0.0)), (1, mi(&[0, 1]), c(-1.0, 0.0))]).unwrap();
        let r = f.boundary_invariance_check(0.5, 1, 0.0).unwrap();
        assert!(!r.holds);
        assert!((r.worst_value - 0.25).abs() < 1e-12);
        assert_eq!(r.worst_face, 1);
        assert!(f.boundary_invariance_check(0.5, 0, 0.0).is_err());
    }

    #[test]
    fn transform_by_identity_is_noop() {
        let f = systems::example2(3.0, 8).unwrap().get(0).clone();
        let id = CMat::identity(2, 2);
        let (g, kept) = f.transformed(&id, &id).unwrap();
        assert!(kept);
        assert_eq!(g, f);
    }

    #[test]
    fn transform_matches_pointwise_conjugation() {
        let f = systems::example1(1.0, 0.3).unwrap().get(1).clone();
        let p = CMat::from_row_slice(2, 2, &[c(1.0, 0.2), c(0.3, 0.0), c(-0.1, 0.0), c(0.9, -0.4)]);
        let pi = p.clone().try_inverse().unwrap();
        let (g, _) = f.transformed(&p, &pi).unwrap();
        let zh = nalgebra::DVector::from_vec(vec![c(0.2, 0.1), c(-0.15, 0.05)]);
        let z = &p * &zh;
        let fz = nalgebra::DVector::from_vec(f.evaluate(z.as_slice()));
        let expect = &pi * fz;
        let got = g.evaluate(zh.as_slice());
        // the strictly lower linear coefficient was cleared on purpose; it is
        // nonzero here because P does not triangularize, so compare the rest
        let lin = pi.clone() * f.jacobian_at_origin() * &p;
        let corr = lin[(1, 0)] * zh[0];
        assert!((got[0] - expect[0]).norm() < 1e-13);
        assert!((got[1] + corr - expect[1]).norm() < 1e-13);
    }

    fn arb_field(n: usize, deg: u32) -> impl Strategy<Value = PolyVectorField> {
        let basis = crate::multiindex::MultiIndexBasis::new(n, deg).unwrap();
        let alphas: Vec<MultiIndex> = basis.table()[1..].to_vec();
        let m = alphas.len() * n;
        proptest::collection::vec((-3i32..=3, -3i32..=3, 0u8..3), m).prop_map(move |v| {
            let terms = v.iter().enumerate().filter(|(_, t)| t.2 == 0).map(|(i, t)| {
                (i % n, alphas[i / n].clone(), C64::new(t.0 as f64 / 2.0, t.1 as f64 / 2.0))
            });
            PolyVectorField::from_terms(n, terms).unwrap()
        })
    }

    fn coeff_close(a: &PolyVectorField, b: &PolyVectorField, tol: f64) -> bool {
        // max |a - b| over all coefficients
        let d = a.add_scaled(b, C64::new(-1.0, 0.0)).unwrap();
        d.max_coefficient() <= tol
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn bracket_is_antisymmetric_and_bilinear(
            (f, g, h) in (1usize..=3).prop_flat_map(|n| (arb_field(n, 3), arb_field(n, 3), arb_field(n, 3)))
        ) {
            let fg = f.lie_bracket(&g).unwrap();
            let gf = g.lie_bracket(&f).unwrap();
            prop_assert!(fg.add_scaled(&gf, C64::new(1.0, 0.0)).unwrap().max_coefficient() <= 1e-9);
            let s = C64::new(0.5, -1.5);
            let lhs = f.add_scaled(&h, s).unwrap().lie_bracket(&g).unwrap();
            let rhs = fg.add_scaled(&h.lie_bracket(&g).unwrap(), s).unwrap();
            prop_assert!(coeff_close(&lhs, &rhs, 1e-9));
            prop_assert!(fg.degree() <= (f.degree() + g.degree()).saturating_sub(1));
        }

        #[test]
        fn jacobi_identity(f in arb_field(2, 3), g in arb_field(2, 3), h in arb_field(2, 2)) {
            let a = f.lie_bracket(&g.lie_bracket(&h).unwrap()).unwrap();
            let b = g.lie_bracket(&h.lie_bracket(&f).unwrap()).unwrap();
            let c3 = h.lie_bracket(&f.lie_bracket(&g).unwrap()).unwrap();
            let one = C64::new(1.0, 0.0);
            let sum = a.add_scaled(&b, one).unwrap().add_scaled(&c3, one).unwrap();
            prop_assert!(sum.max_coefficient() <= 1e-9, "residual {}", sum.max_coefficient());
        }

        #[test]
        fn bracket_linear_part_is_matrix_commutator(f in arb_field(3, 2), g in arb_field(3, 2)) {
            let jf = f.jacobian_at_origin();
            let jg = g.jacobian_at_origin();
            let jb = f.lie_bracket(&g).unwrap().jacobian_at_origin();
            let expect = &jg * &jf - &jf * &jg;
            prop_assert!((jb - expect).norm() <= 1e-12);
        }

        #[test]
        fn rk4_linear_matches_expm(re in proptest::collection::vec(-1.0f64..1.0, 4), im in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let a = CMat::from_fn(2, 2, |i, j| C64::new(re[2 * i + j], im[2 * i + j]));
            let f = PolyVectorField::linear(&a).unwrap();
            let norm = crate::linalg::inf_norm(&a).max(1e-3);
            let dt = (0.02 / norm).min(0.02);
            let z0 = [C64::new(0.3, -0.2), C64::new(-0.1, 0.4)];
            let z = f.integrate(&z0, 1.0, dt).unwrap();
            let expect = crate::linalg::expm(&a) * nalgebra::DVector::from_column_slice(&z0);
            for i in 0..2 {
                prop_assert!((z[i] - expect[i]).norm() <= 1e-8);
            }
        }
    }
}
