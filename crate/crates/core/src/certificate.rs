//! Common Lyapunov functions `V(z) = Σ_k ε_k |ẑ^{α(k)}|²`, `ẑ = P⁻¹z`, for
//! switched families whose Jacobians at the origin are simultaneously
//! triangularizable.
//!
//! In the triangular coordinates every Koopman matrix `K⁽ⁱ⁾` is upper
//! triangular with diagonal `λ_j = Σ_l α_l(j) λ̃_l`. Given weights `b_jk ≥ 0`
//! with row sums at most one, the double sequence
//!
//! ```text
//! Q⁽ⁱ⁾_jk = |K⁽ⁱ⁾[k][j]|² / (4 |Re λ_j| |Re λ_k| b_jk b_kj)      (j > k, coupled)
//! ```
//!
//! drives the recursion `ε_j > max_{i,k} ε_k Q⁽ⁱ⁾_jk`. When
//! `Σ |α(k)| ε_k ρ^{2|α(k)|}` converges, `V` is a common Lyapunov function on
//! the polydisk of radius `ρ`.
//!
//! Two weight schemes are available:
//!
//! * **polynomial** — `b_jj = 1−ξ`, `b_jk = ξ/(2K̂)` with `K̂` the number of
//!   non-diagonal terms of the field. The ξ-free condition
//!   `K̂²|K[k][j]|²/(|Re λ_j||Re λ_k|) < 1` certifies the whole polydisk.
//! * **diagonal dominance** — `b_jj = 1−ξ−κ`, `ξ/(2D)` on equal-degree pairs
//!   (`D = (n²−n)/2`), and κ/2-normalized ratios across degrees, which give
//!   `Q_jk = R_j C_k / (κ² |Re λ_j||Re λ_k|)` with `R_j` the absolute column
//!   sum into `e_j` and `C_k = Σ_l α_l(k)‖F_l‖₁`. The radius follows from
//!   `limsup Q < 1/ρ²`.
//!
//! Everything here is evaluated on a finite truncation; limsups are estimated
//! from per-degree maxima (see [`extrapolate_limsup`]) and the report keeps
//! computed and extrapolated values apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::koopman::{self, KoopmanError, KoopmanMatrix};
use crate::liealg::{self, LieError, Solvability, TriangularizationResult};
use crate::linalg;
use crate::multiindex::{monomials_of_degree, BasisError, MultiIndex, MultiIndexBasis};
use crate::vectorfield::{FieldError, InvarianceReport, PolyVectorField, SwitchedFamily};
use crate::{CMat, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("scheme parameter out of range: {0}")]
    BadParameter(String),
    #[error("diagonal entry λ at {alpha:?} has Re λ = {re} ≥ 0")]
    NonHurwitzDiagonal { alpha: MultiIndex, re: f64 },
    #[error("the ε recursion blew up at {alpha:?}; Q is unbounded over the truncation")]
    Unbounded { alpha: MultiIndex },
    #[error("point lies outside the unit polydisk in the working coordinates (‖ẑ‖∞ = {0})")]
    OutsidePolydisk(f64),
    #[error("report carries no certificate")]
    NotCertified,
    #[error("inconsistent certificate data: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Koopman(#[from] KoopmanError),
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// Weight scheme with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightScheme {
    Polynomial { xi: f64 },
    DiagonalDominance { xi: f64, kappa: f64 },
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), CertifyError> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        match *self {
            WeightScheme::Polynomial { xi } if !open(xi) => Err(CertifyError::BadParameter(format!("ξ = {xi} must lie in (0, 1)"))),
            WeightScheme::DiagonalDominance { xi, kappa } if !(open(xi) && open(kappa) && xi + kappa < 1.0) => {
                Err(CertifyError::BadParameter(format!("need ξ, κ ∈ (0, 1) with ξ + κ < 1, got ξ = {xi}, κ = {kappa}")))
            }
            _ => Ok(()),
        }
    }

    pub fn xi(&self) -> f64 {
        match *self {
            WeightScheme::Polynomial { xi } | WeightScheme::DiagonalDominance { xi, .. } => xi,
        }
    }
}

/// Per-subsystem data in the triangular coordinates.
#[derive(Debug, Clone)]
pub struct SubsystemData {
    pub field: PolyVectorField,
    pub matrix: KoopmanMatrix,
    /// `λ_j = K[j][j]`, by basis index.
    pub lambda: Vec<C64>,
    /// `R_j = Σ_l |K[l][j]|`, by basis index.
    pub row_sums: Vec<f64>,
    /// `C_k = Σ_l α_l(k) ‖F_l‖₁`, by basis index.
    pub col_sums: Vec<f64>,
    /// Number of terms other than `z_l` in `F_l`.
    pub k_hat: usize,
}

impl SubsystemData {
    pub fn new(field: PolyVectorField, basis: &MultiIndexBasis) -> Result<Self, CertifyError> {
        let matrix = koopman::build_matrix(&field, basis)?;
        let jac = field.jacobian_at_origin();
        let lt: Vec<C64> = (0..field.dim()).map(|l| jac[(l, l)]).collect();
        let lambda = matrix.diagonal_eigenvalues(&lt)?;
        for j in 1..basis.len() {
            if lambda[j].re >= 0.0 {
                return Err(CertifyError::NonHurwitzDiagonal { alpha: basis.alpha(j).clone(), re: lambda[j].re });
            }
        }
        let row_sums = matrix.row_abs_sums();
        let col_sums = basis.table().iter().map(|a| koopman::col_abs_sum(&field, a)).collect();
        let k_hat = field.off_diagonal_term_count();
        Ok(SubsystemData { field, matrix, lambda, row_sums, col_sums, k_hat })
    }

    fn basis(&self) -> &MultiIndexBasis {
        self.matrix.basis()
    }

    /// Coupled pairs `(j, k, |K[k][j]|)` with `j > k ≥ 1`.
    pub fn coupled_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.matrix.entries().filter(|(k, j, _)| *k >= 1 && j > k).map(|(k, j, v)| (j, k, v.norm()))
    }

    fn is_coupled(&self, j: usize, k: usize) -> Option<f64> {
        let (lo, hi) = if j < k { (j, k) } else { (k, j) };
        let v = self.matrix.get(lo, hi);
        (v != C64::new(0.0, 0.0) && lo != hi).then(|| v.norm())
    }
}

fn pair_count_d(n: usize) -> f64 {
    ((n * n - n) / 2) as f64
}

/// Weight `b_jk` of the scheme for subsystem data `s`.
pub fn weights(scheme: &WeightScheme, s: &SubsystemData, j: usize, k: usize) -> Result<f64, CertifyError> {
    scheme.validate()?;
    let b = s.basis();
    if j == k {
        return Ok(match *scheme {
            WeightScheme::Polynomial { xi } => 1.0 - xi,
            WeightScheme::DiagonalDominance { xi, kappa } => 1.0 - xi - kappa,
        });
    }
    let Some(e) = s.is_coupled(j, k) else { return Ok(0.0) };
    Ok(match *scheme {
        WeightScheme::Polynomial { xi } => xi / (2.0 * s.k_hat as f64),
        WeightScheme::DiagonalDominance { xi, kappa } => {
            if b.degree(j) == b.degree(k) {
                xi / (2.0 * pair_count_d(b.dim()))
            } else if j > k {
                kappa / 2.0 * e / s.row_sums[j]
            } else {
                kappa / 2.0 * e / s.col_sums[j]
            }
        }
    })
}

/// `Q_jk` for `j > k`, zero when uncoupled.
pub fn q_value(scheme: &WeightScheme, s: &SubsystemData, j: usize, k: usize) -> Result<f64, CertifyError> {
    scheme.validate()?;
    let Some(e) = s.is_coupled(j, k) else { return Ok(0.0) };
    let lam = s.lambda[j].re.abs() * s.lambda[k].re.abs();
    let b = s.basis();
    // closed forms of |e|²/(4|λ_j||λ_k| b_jk b_kj), avoiding the cancellation
    Ok(match *scheme {
        WeightScheme::Polynomial { xi } => (s.k_hat as f64).powi(2) * e * e / (xi * xi * lam),
        WeightScheme::DiagonalDominance { xi, kappa } => {
            if b.degree(j) == b.degree(k) {
                pair_count_d(b.dim()).powi(2) * e * e / (xi * xi * lam)
            } else {
                s.row_sums[j] * s.col_sums[k] / (kappa * kappa * lam)
            }
        }
    })
}

/// Reference to a maximizing pair, 1-based subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRef {
    pub subsystem: usize,
    pub j: MultiIndex,
    pub k: MultiIndex,
    pub value: f64,
}

/// Outcome of a scheme condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Which quantity was maximized.
    pub quantity: String,
    /// Max over all in-basis coupled pairs.
    pub computed_sup: f64,
    /// Limsup estimate from the per-degree maxima.
    pub extrapolated_sup: f64,
    /// Max for pairs whose `|α(j)| = d`, entry `d−1`.
    pub by_degree: Vec<f64>,
    pub argmax: Option<PairRef>,
    /// The condition is `max(computed, extrapolated) < threshold`.
    pub threshold: f64,
    pub pass: bool,
    /// Diagonal-dominance data of the Jacobians (second scheme only).
    pub dominance: Option<DominanceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// Smallest ξ for which both Jacobian inequalities hold (strictly above).
    pub xi_min: f64,
    pub holds: bool,
}

/// Limsup estimate from per-degree maxima: with the last two nonzero degrees
/// `d₁ < d₂`, an increasing tail is fitted as `A − B/d` and `A` returned;
/// the result is never below the largest computed value.
pub fn extrapolate_limsup(by_degree: &[f64]) -> f64 {
    let computed = by_degree.iter().cloned().fold(0.0, f64::max);
    let nz: Vec<(f64, f64)> = by_degree.iter().enumerate().filter(|(_, &q)| q > 0.0).map(|(i, &q)| ((i + 1) as f64, q)).collect();
    if nz.len() < 2 {
        return computed;
    }
    let (d1, q1) = nz[nz.len() - 2];
    let (d2, q2) = nz[nz.len() - 1];
    if q2 > q1 {
        computed.max((d2 * q2 - d1 * q1) / (d2 - d1))
    } else {
        computed
    }
}

fn scan_pairs<F>(data: &[SubsystemData], mut value: F) -> (Vec<f64>, Option<PairRef>)
where
    F: FnMut(&SubsystemData, usize, usize, f64) -> Option<f64>,
{
    let basis = data[0].basis();
    let mut by_degree = vec![0.0; basis.max_degree() as usize];
    let mut best: Option<PairRef> = None;
    for (i, s) in data.iter().enumerate() {
        for (j, k, e) in s.coupled_pairs() {
            let Some(q) = value(s, j, k, e) else { continue };
            let d = basis.degree(j) as usize;
            if q > by_degree[d - 1] {
                by_degree[d - 1] = q;
            }
            if best.as_ref().is_none_or(|b| q > b.value) {
                best = Some(PairRef { subsystem: i + 1, j: basis.alpha(j).clone(), k: basis.alpha(k).clone(), value: q });
            }
        }
    }
    (by_degree, best)
}

/// ξ-free polynomial-scheme condition, `K̂²|K[k][j]|²/(|Re λ_j||Re λ_k|) < 1`.
pub fn check_poly_condition(data: &[SubsystemData]) -> ConditionReport {
    let (by_degree, argmax) = scan_pairs(data, |s, j, k, e| {
        Some((s.k_hat as f64).powi(2) * e * e / (s.lambda[j].re.abs() * s.lambda[k].re.abs()))
    });
    let computed_sup = by_degree.iter().cloned().fold(0.0, f64::max);
    let extrapolated_sup = extrapolate_limsup(&by_degree);
    ConditionReport {
        quantity: "xi_free_q".into(),
        computed_sup,
        extrapolated_sup,
        by_degree,
        argmax,
        threshold: 1.0,
        pass: computed_sup < 1.0 && extrapolated_sup < 1.0,
        dominance: None,
    }
}

/// Smallest ξ making the Jacobians (in triangular form) diagonally dominant:
/// for `q < r`, `|J_qr|² < (ξ/D)²|Re J_rr||Re J_qq|` and `|J_qr| < (ξ/D)|Re J_qq|`.
pub fn dominance_xi_min(jacobians: &[CMat]) -> f64 {
    let n = jacobians.first().map_or(0, |j| j.nrows());
    let d = pair_count_d(n);
    let mut x = 0.0f64;
    for j in jacobians {
        for q in 0..n {
            for r in (q + 1)..n {
                let a = j[(q, r)].norm();
                if a == 0.0 {
                    continue;
                }
                let (rq, rr) = (j[(q, q)].re.abs(), j[(r, r)].re.abs());
                x = x.max(d * a / (rr * rq).sqrt()).max(d * a / rq);
            }
        }
    }
    x
}

fn dominance_holds(jacobians: &[CMat], xi: f64) -> bool {
    let n = jacobians.first().map_or(0, |j| j.nrows());
    let d = pair_count_d(n);
    jacobians.iter().all(|j| {
        (0..n).all(|q| {
            ((q + 1)..n).all(|r| {
                let a = j[(q, r)].norm();
                let (rq, rr) = (j[(q, q)].re.abs(), j[(r, r)].re.abs());
                a == 0.0 || (a * a < (xi / d).powi(2) * rr * rq && a < xi / d * rq)
            })
        })
    })
}

/// Cross-degree ratio `R_j C_k/(κ²|Re λ_j||Re λ_k|)` over coupled pairs plus
/// the Jacobian dominance test; passes iff both hold and the limsup estimate
/// is below `1/ρ²`.
pub fn check_dd_condition(data: &[SubsystemData], xi: f64, kappa: f64, rho: f64) -> ConditionReport {
    let basis = data[0].basis();
    let (by_degree, argmax) = scan_pairs(data, |s, j, k, _| {
        (basis.degree(j) != basis.degree(k)).then(|| s.row_sums[j] * s.col_sums[k] / (kappa * kappa * s.lambda[j].re.abs() * s.lambda[k].re.abs()))
    });
    let jac: Vec<CMat> = data.iter().map(|s| s.field.jacobian_at_origin()).collect();
    let holds = dominance_holds(&jac, xi);
    let computed_sup = by_degree.iter().cloned().fold(0.0, f64::max);
    let extrapolated_sup = extrapolate_limsup(&by_degree);
    let threshold = 1.0 / (rho * rho);
    ConditionReport {
        quantity: "cross_degree_ratio".into(),
        computed_sup,
        extrapolated_sup,
        by_degree,
        argmax,
        threshold,
        pass: holds && computed_sup < threshold && extrapolated_sup < threshold,
        dominance: Some(DominanceReport { xi_min: dominance_xi_min(&jac), holds }),
    }
}

/// Relative positivity floor of the ε recursion.
pub const EPS_FLOOR: f64 = 1e-12;

/// ε recursion: `ε₁ = 1` and, for `j ≥ 2`,
///
/// ```text
/// ε_j = (1 + η/|α(j)|²) · max_{i, coupled k<j} ε_k Q⁽ⁱ⁾_jk
/// ```
///
/// bounded below by `EPS_FLOOR · 2^{1−|α(j)|} · max_{k<j} ε_k` so every
/// monomial keeps a positive, geometrically decaying weight. The headroom
/// shrinks with the degree so it does not compound into the growth rate of
/// the sequence. Index 0 (the constant) gets weight 0.
pub fn epsilon_sequence(data: &[SubsystemData], scheme: &WeightScheme, eta: f64) -> Result<Vec<f64>, CertifyError> {
    scheme.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(CertifyError::BadParameter(format!("η = {eta} must be positive")));
    }
    let basis = data[0].basis();
    let len = basis.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len];
    for s in data {
        for (j, k, _) in s.coupled_pairs() {
            incoming[j].push((k, q_value(scheme, s, j, k)?));
        }
    }
    let mut eps = vec![0.0; len];
    if len < 2 {
        return Ok(eps);
    }
    eps[1] = 1.0;
    let mut running_max = 1.0f64;
    for j in 2..len {
        let d = basis.degree(j);
        let m = incoming[j].iter().map(|&(k, q)| eps[k] * q).fold(0.0, f64::max);
        let floor = EPS_FLOOR * running_max * 0.5f64.powi(d as i32 - 1);
        let v = ((1.0 + eta / (d as f64 * d as f64)) * m).max(floor);
        if !v.is_finite() || v > 1e300 {
            return Err(CertifyError::Unbounded { alpha: basis.alpha(j).clone() });
        }
        eps[j] = v;
        running_max = running_max.max(v);
    }
    // strict inequality, checked directly
    for (j, inc) in incoming.iter().enumerate() {
        for &(k, q) in inc {
            if !(eps[j] > eps[k] * q) {
                return Err(CertifyError::Inconsistent(format!("ε at {:?} does not dominate {:?}", basis.alpha(j), basis.alpha(k))));
            }
        }
    }
    Ok(eps)
}

/// Partial sum and tail bound of `Σ_k |α(k)| ε_k ρ^{2|α(k)|}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub partial_sum: f64,
    pub tail_bound: f64,
    /// Observed per-degree growth ratio `r` of the max-ε envelope.
    pub ratio: f64,
    /// `E_N`, the largest ε at the top degree.
    pub top_epsilon: f64,
    pub convergent: bool,
}

/// Per-degree maxima `E_d = max_{|α(j)|=d} ε_j`, entry `d−1`.
pub fn degree_envelope(eps: &[f64], basis: &MultiIndexBasis) -> Vec<f64> {
    (1..=basis.max_degree()).map(|d| basis.degree_range(d).map(|j| eps[j]).fold(0.0, f64::max)).collect()
}

/// `r = max_{⌈N/2⌉ ≤ d < N} (E_N/E_d)^{1/(N−d)}`.
pub fn growth_ratio(envelope: &[f64]) -> f64 {
    let nn = envelope.len();
    if nn <= 1 {
        return 1.0;
    }
    let en = envelope[nn - 1];
    let mut r = 0.0f64;
    for d in nn.div_ceil(2)..nn {
        let ed = envelope[d - 1];
        if ed > 0.0 && en > 0.0 {
            r = r.max((en / ed).powf(1.0 / (nn - d) as f64));
        }
    }
    if r == 0.0 {
        1.0
    } else {
        r
    }
}

// Σ_{d>N} C(d+n−1, n−1) d^p x^d scaled by E_N r^{−N}, summed in log space.
fn tail_sum(n: usize, nn: u32, top: f64, r: f64, x: f64, power: i32) -> f64 {
    if top == 0.0 {
        return 0.0;
    }
    if !(x < 1.0) {
        return f64::INFINITY;
    }
    if x <= 0.0 {
        return 0.0;
    }
    let lead = top.ln() - nn as f64 * r.ln();
    let mut sum = 0.0;
    let mut d = nn + 1;
    loop {
        let lc = monomials_of_degree(n, d).ln() + power as f64 * (d as f64).ln() + d as f64 * x.ln();
        let t = (lead + lc).exp();
        sum += t;
        if (t <= 1e-17 * sum && d > nn + 8) || t == 0.0 || d > nn + 2_000_000 {
            break;
        }
        d += 1;
    }
    sum
}

pub fn convergence_check(eps: &[f64], basis: &MultiIndexBasis, rho: f64) -> Convergence {
    let partial_sum = (1..basis.len())
        .map(|j| {
            let d = basis.degree(j) as i32;
            d as f64 * eps[j] * rho.powi(2 * d)
        })
        .sum();
    let env = degree_envelope(eps, basis);
    let ratio = growth_ratio(&env);
    let top = env.last().copied().unwrap_or(0.0);
    let x = ratio * rho * rho;
    let tail_bound = tail_sum(basis.dim(), basis.max_degree(), top, ratio, x, 1);
    Convergence { partial_sum, tail_bound, ratio, top_epsilon: top, convergent: tail_bound.is_finite() && x < 1.0 }
}

/// Evaluable Lyapunov function.
#[derive(Debug, Clone)]
pub struct Clf {
    basis: MultiIndexBasis,
    epsilon: Vec<f64>,
    p: CMat,
    p_inv: CMat,
    rho: f64,
    ratio: f64,
    top: f64,
}

impl Clf {
    pub fn new(basis: MultiIndexBasis, epsilon: Vec<f64>, p: CMat, p_inv: CMat, rho: f64) -> Result<Self, CertifyError> {
        if epsilon.len() != basis.len() {
            return Err(CertifyError::Inconsistent(format!("{} weights for {} monomials", epsilon.len(), basis.len())));
        }
        let env = degree_envelope(&epsilon, &basis);
        let ratio = growth_ratio(&env);
        let top = env.last().copied().unwrap_or(0.0);
        Ok(Clf { basis, epsilon, p, p_inv, rho, ratio, top })
    }

    pub fn basis(&self) -> &MultiIndexBasis {
        &self.basis
    }

    pub fn epsilon(&self) -> &[f64] {
        &self.epsilon
    }

    pub fn epsilon_mut(&mut self) -> &mut [f64] {
        &mut self.epsilon
    }

    pub fn p(&self) -> &CMat {
        &self.p
    }

    pub fn p_inv(&self) -> &CMat {
        &self.p_inv
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Working coordinates `ẑ = P⁻¹z`.
    pub fn to_hat(&self, z: &[C64]) -> Vec<C64> {
        let n = z.len();
        (0..n).map(|i| (0..n).map(|m| self.p_inv[(i, m)] * z[m]).sum()).collect()
    }

    pub fn from_hat(&self, zh: &[C64]) -> Vec<C64> {
        let n = zh.len();
        (0..n).map(|i| (0..n).map(|m| self.p[(i, m)] * zh[m]).sum()).collect()
    }

    /// Truncated `V(z)` plus a tail estimate.
    pub fn evaluate(&self, z: &[C64]) -> Result<(f64, f64), CertifyError> {
        let zh = self.to_hat(z);
        self.evaluate_hat(&zh)
    }

    pub fn evaluate_hat(&self, zh: &[C64]) -> Result<(f64, f64), CertifyError> {
        let s = zh.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if s >= 1.0 {
            return Err(CertifyError::OutsidePolydisk(s));
        }
        let v = self.partial_hat(zh);
        let tail = tail_sum(self.basis.dim(), self.basis.max_degree(), self.top, self.ratio, self.ratio * s * s, 0);
        Ok((v, tail))
    }

    /// Truncated sum only, no domain check.
    pub fn partial_hat(&self, zh: &[C64]) -> f64 {
        let n = zh.len();
        let nmax = self.basis.max_degree() as usize;
        let sq: Vec<Vec<f64>> = zh
            .iter()
            .map(|c| {
                let a = c.norm_sqr();
                let mut row = Vec::with_capacity(nmax + 1);
                let mut p = 1.0;
                row.push(p);
                for _ in 0..nmax {
                    p *= a;
                    row.push(p);
                }
                row
            })
            .collect();
        let mut v = 0.0;
        for (k, a) in self.basis.table().iter().enumerate().skip(1) {
            let mut m = self.epsilon[k];
            for l in 0..n {
                m *= sq[l][a.get(l) as usize];
            }
            v += m;
        }
        v
    }
}

/// Evaluates `V` for given weights and `P⁻¹`.
pub fn clf_evaluate(eps: &[f64], p_inv: &CMat, basis: &MultiIndexBasis, z: &[C64]) -> Result<(f64, f64), CertifyError> {
    let p = linalg::inverse(p_inv).ok_or_else(|| CertifyError::Inconsistent("P⁻¹ is singular".into()))?;
    Clf::new(basis.clone(), eps.to_vec(), p, p_inv.clone(), 1.0)?.evaluate(z)
}

/// Scheme selection for [`certify`]; unset parameters take defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeChoice {
    #[serde(alias = "polynomial")]
    Poly { xi: Option<f64> },
    #[serde(alias = "diagonal_dominance")]
    Dd { xi: Option<f64>, kappa: Option<f64> },
}

/// Default ξ of the polynomial scheme (its condition is ξ-free).
pub const DEFAULT_POLY_XI: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    pub degree: u32,
    pub scheme: SchemeChoice,
    pub rho_request: Option<f64>,
    pub eta: f64,
    pub lie_tol: f64,
    pub invariance_samples: usize,
    pub invariance_margin: f64,
}

impl CertifyOptions {
    pub fn new(degree: u32, scheme: SchemeChoice) -> Self {
        CertifyOptions {
            degree,
            scheme,
            rho_request: None,
            eta: liealg::DEFAULT_ETA,
            lie_tol: liealg::DEFAULT_TOL,
            invariance_samples: 2,
            invariance_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Certified,
    Unsolvable,
    ConditionFailed,
    Divergent,
}

impl Outcome {
    /// Process exit code used by the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Certified => 0,
            Outcome::Unsolvable => 2,
            Outcome::ConditionFailed => 3,
            Outcome::Divergent => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEntry {
    pub alpha: MultiIndex,
    pub value: f64,
}

/// Everything [`certify`] found out, serializable as the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub outcome: Outcome,
    pub message: String,
    pub n: usize,
    pub truncation_degree: u32,
    pub subsystems: usize,
    pub algebra_dim: usize,
    pub solvability: Solvability,
    pub triangularization: Option<TriangularizationResult>,
    pub scheme: Option<WeightScheme>,
    pub exact_degree: Option<u32>,
    pub condition: Option<ConditionReport>,
    pub rho_requested: Option<f64>,
    pub rho_certified: Option<f64>,
    pub epsilon: Vec<EpsilonEntry>,
    pub convergence: Option<Convergence>,
    pub invariance_evidence: Vec<InvarianceReport>,
    pub warnings: Vec<String>,
}

impl CertificateReport {
    pub fn is_certified(&self) -> bool {
        self.outcome == Outcome::Certified
    }

    /// Rebuilds the Lyapunov function of a certified report.
    pub fn clf(&self) -> Result<Clf, CertifyError> {
        if !self.is_certified() {
            return Err(CertifyError::NotCertified);
        }
        let tri = self.triangularization.as_ref().ok_or(CertifyError::NotCertified)?;
        let rho = self.rho_certified.ok_or(CertifyError::NotCertified)?;
        let basis = MultiIndexBasis::new(self.n, self.truncation_degree)?;
        let mut eps = vec![0.0; basis.len()];
        for e in &self.epsilon {
            let k = basis
                .index_of(&e.alpha)?
                .ok_or_else(|| CertifyError::Inconsistent(format!("{:?} outside the basis", e.alpha)))?;
            eps[k] = e.value;
        }
        Clf::new(basis, eps, tri.p.clone(), tri.p_inv.clone(), rho)
    }

    /// ε and per-degree condition maxima as CSV.
    pub fn epsilon_csv(&self) -> String {
        let mut s = String::from("alpha,degree,epsilon\n");
        for e in &self.epsilon {
            let a: Vec<String> = e.alpha.exponents().iter().map(u32::to_string).collect();
            s.push_str(&format!("{},{},{}\n", a.join(" "), e.alpha.total_degree(), e.value));
        }
        s
    }

    pub fn by_degree_csv(&self) -> String {
        let mut s = String::from("degree,max\n");
        if let Some(c) = &self.condition {
            for (i, q) in c.by_degree.iter().enumerate() {
                s.push_str(&format!("{},{}\n", i + 1, q));
            }
        }
        s
    }
}

/// Recursion bounds `max_{i, coupled k<j} ε_k Q⁽ⁱ⁾_jk` by basis index.
pub fn epsilon_bounds(data: &[SubsystemData], scheme: &WeightScheme, eps: &[f64]) -> Result<Vec<f64>, CertifyError> {
    let mut out = vec![0.0; eps.len()];
    for s in data {
        for (j, k, _) in s.coupled_pairs() {
            out[j] = f64::max(out[j], eps[k] * q_value(scheme, s, j, k)?);
        }
    }
    Ok(out)
}

/// Negative control: sets ε of the first coupled monomial to `factor` times
/// its recursion bound (below the bound for `factor < 1`). Returns the
/// multi-index that was changed.
pub fn perturb_epsilon(report: &mut CertificateReport, family: &SwitchedFamily, factor: f64) -> Result<MultiIndex, CertifyError> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(CertifyError::BadParameter(format!("perturbation factor {factor} must be positive")));
    }
    let clf = report.clf()?;
    let tri = report.triangularization.as_ref().ok_or(CertifyError::NotCertified)?;
    let scheme = report.scheme.ok_or(CertifyError::NotCertified)?;
    let basis = clf.basis();
    let mut data = Vec::with_capacity(family.len());
    for f in family.subsystems() {
        data.push(SubsystemData::new(f.transformed(&tri.p, &tri.p_inv)?.0, basis)?);
    }
    let bounds = epsilon_bounds(&data, &scheme, clf.epsilon())?;
    let j = (1..basis.len())
        .find(|&j| bounds[j] > 0.0)
        .ok_or_else(|| CertifyError::Inconsistent("no coupled monomial to perturb".into()))?;
    report.epsilon[j - 1].value = factor * bounds[j];
    Ok(basis.alpha(j).clone())
}

/// Runs the whole pipeline: solvability, triangularization, Koopman
/// matrices, scheme condition, radius, ε recursion, convergence and boundary
/// evidence.
pub fn certify(family: &SwitchedFamily, opts: &CertifyOptions) -> Result<CertificateReport, CertifyError> {
    let n = family.dim();
    let jac = family.jacobians();
    let algebra = liealg::close_under_bracket(&jac, opts.lie_tol)?;
    let solvability = liealg::is_solvable(&algebra, opts.lie_tol);
    let mut report = CertificateReport {
        outcome: Outcome::Unsolvable,
        message: String::new(),
        n,
        truncation_degree: opts.degree,
        subsystems: family.len(),
        algebra_dim: algebra.dim(),
        solvability: solvability.clone(),
        triangularization: None,
        scheme: None,
        exact_degree: None,
        condition: None,
        rho_requested: opts.rho_request,
        rho_certified: None,
        epsilon: Vec::new(),
        convergence: None,
        invariance_evidence: Vec::new(),
        warnings: Vec::new(),
    };
    if let Some(r) = opts.rho_request {
        if !(r > 0.0 && r <= 1.0) {
            return Err(CertifyError::BadParameter(format!("requested ρ = {r} must lie in (0, 1]")));
        }
    }
    if opts.degree < 1 {
        return Err(CertifyError::BadParameter("truncation degree must be at least 1".into()));
    }

    let tri = liealg::simultaneous_triangularize(&jac, opts.lie_tol);
    let tri = match (solvability.solvable, tri) {
        (true, Ok(t)) => t,
        (false, Ok(_)) => {
            report.message = format!(
                "Jacobian Lie algebra is not solvable (derived dimensions {:?}), although a common flag was found numerically; the verdicts disagree",
                solvability.derived_dims
            );
            return Ok(report);
        }
        (true, Err(e)) => {
            report.message = format!("Jacobian Lie algebra tested solvable but triangularization failed: {e}");
            return Ok(report);
        }
        (false, Err(_)) => {
            report.message = format!(
                "Jacobian Lie algebra is not solvable (derived dimensions {:?}); no common invariant flag exists",
                solvability.derived_dims
            );
            return Ok(report);
        }
    };
    if tri.cond > 1e8 {
        report.warnings.push(format!("triangularizing basis is ill-conditioned: cond(P) = {:e}", tri.cond));
    }
    report.triangularization = Some(tri.clone());
    if let Err(e) = tri.check_hurwitz() {
        report.outcome = Outcome::ConditionFailed;
        report.message = format!("Jacobians are not Hurwitz in the common flag: {e}");
        return Ok(report);
    }

    let basis = MultiIndexBasis::new(n, opts.degree)?;
    let mut data = Vec::with_capacity(family.len());
    for (i, f) in family.subsystems().iter().enumerate() {
        let (fh, kept) = f.transformed(&tri.p, &tri.p_inv)?;
        if !kept {
            report.warnings.push(format!(
                "subsystem {}: tail ℓ¹ norms cannot be carried through a non-monomial change of basis and were dropped",
                i + 1
            ));
        }
        if fh.tail_l1().is_none() && fh.degree() > opts.degree {
            report.warnings.push(format!(
                "subsystem {}: field degree {} exceeds the truncation and no tail norms were supplied; column sums are truncated",
                i + 1,
                fh.degree()
            ));
        }
        data.push(SubsystemData::new(fh, &basis)?);
    }
    report.exact_degree = data.iter().map(|s| s.matrix.exact_degree()).min();
    for (i, s) in data.iter().enumerate() {
        if !s.matrix.verify_triangular(0.0) {
            return Err(CertifyError::Inconsistent(format!("Koopman matrix of subsystem {} is not upper triangular", i + 1)));
        }
    }

    let (scheme, condition, rho) = match opts.scheme {
        SchemeChoice::Poly { xi } => {
            let scheme = WeightScheme::Polynomial { xi: xi.unwrap_or(DEFAULT_POLY_XI) };
            scheme.validate()?;
            let c = check_poly_condition(&data);
            let rho = opts.rho_request.unwrap_or(1.0);
            (scheme, c, rho)
        }
        SchemeChoice::Dd { xi, kappa } => {
            let t_list: Vec<CMat> = data.iter().map(|s| s.field.jacobian_at_origin()).collect();
            let xi_min = dominance_xi_min(&t_list);
            let xi = xi.unwrap_or_else(|| (1.01 * xi_min).max(1e-6));
            if xi >= 1.0 {
                let scheme = WeightScheme::DiagonalDominance { xi: xi.min(0.999_999), kappa: 1e-6 };
                report.scheme = Some(scheme);
                report.outcome = Outcome::ConditionFailed;
                report.message = format!(
                    "Jacobians are not diagonally dominant enough: the off-diagonal inequalities need ξ > {xi_min}, but ξ must be below 1"
                );
                return Ok(report);
            }
            let kappa = kappa.unwrap_or(0.98 * (1.0 - xi));
            let scheme = WeightScheme::DiagonalDominance { xi, kappa };
            scheme.validate()?;
            let rho = match opts.rho_request {
                Some(r) => r,
                None => {
                    if check_dd_condition(&data, xi, kappa, 1.0).pass {
                        1.0
                    } else {
                        let (mut lo, mut hi) = (0.0f64, 1.0f64);
                        for _ in 0..40 {
                            let mid = 0.5 * (lo + hi);
                            if check_dd_condition(&data, xi, kappa, mid).pass {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        lo
                    }
                }
            };
            let c = check_dd_condition(&data, xi, kappa, rho.max(f64::MIN_POSITIVE));
            (scheme, c, rho)
        }
    };
    report.scheme = Some(scheme);
    let pass = condition.pass && rho > 0.0;
    report.condition = Some(condition.clone());
    if !pass {
        report.outcome = Outcome::ConditionFailed;
        report.message = match scheme {
            WeightScheme::Polynomial { .. } => format!(
                "polynomial-scheme condition fails: sup K̂²|⟨L e_k, e_j⟩|²/(|Re λ_j||Re λ_k|) ≈ {} (computed {}), needs < 1",
                condition.extrapolated_sup, condition.computed_sup
            ),
            WeightScheme::DiagonalDominance { .. } => {
                if condition.dominance.as_ref().is_some_and(|d| !d.holds) {
                    "diagonal-dominance condition fails: the Jacobian off-diagonal inequalities do not hold for the chosen ξ".to_string()
                } else {
                    format!(
                        "diagonal-dominance condition fails: cross-degree ratio ≈ {} must stay below 1/ρ² = {}",
                        condition.extrapolated_sup, condition.threshold
                    )
                }
            }
        };
        return Ok(report);
    }

    let eps = match epsilon_sequence(&data, &scheme, opts.eta) {
        Ok(e) => e,
        Err(CertifyError::Unbounded { alpha }) => {
            report.outcome = Outcome::Divergent;
            report.message = format!("ε recursion is unbounded over the truncation (at {alpha:?}); certificate refused");
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.epsilon = (1..basis.len()).map(|k| EpsilonEntry { alpha: basis.alpha(k).clone(), value: eps[k] }).collect();
    let conv = convergence_check(&eps, &basis, rho);
    report.convergence = Some(conv.clone());
    if !conv.convergent {
        report.outcome = Outcome::Divergent;
        report.message = format!(
            "Lyapunov series Σ|α(k)|ε_k ρ^(2|α(k)|) diverges at ρ = {rho}: ε grows by {} per degree",
            conv.ratio
        );
        return Ok(report);
    }
    report.rho_certified = Some(rho);

    for (i, s) in data.iter().enumerate() {
        let inv = s.field.boundary_invariance_check(rho, opts.invariance_samples, opts.invariance_margin)?;
        if !inv.holds {
            report.warnings.push(format!(
                "subsystem {}: sampled boundary of the radius-{rho} polydisk is not strictly inward (max Re(F_l z̄_l) = {})",
                i + 1,
                inv.worst_value
            ));
        }
        report.invariance_evidence.push(inv);
    }
    report.outcome = Outcome::Certified;
    report.message = format!("GUAS certified on the polydisk of radius {rho} in the triangular coordinates");
    Ok(report)
}
