//! Built-in switched families used by the examples, the CLI generators and
//! the test-suite.

use crate::multiindex::MultiIndex;
use crate::vectorfield::{FieldError, PolyVectorField, SwitchedFamily};
use crate::C64;

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `F(z) = a·z` in `n` variables.
pub fn diagonal_linear(n: usize, a: f64) -> PolyVectorField {
    PolyVectorField::from_terms(n, (0..n).map(|l| (l, MultiIndex::unit(n, l), r(a)))).expect("valid linear field")
}

/// Polynomial pair on the bidisk:
///
/// ```text
/// F¹(z) = (−a z₁, −a z₂)
/// F²(z) = (−a z₁ + b(z₁² − z₁z₂²), −a z₂ + (b/2) z₁z₂)
/// ```
///
/// Certifiable on the whole bidisk by the polynomial scheme when `a > 3b`.
pub fn example1(a: f64, b: f64) -> Result<SwitchedFamily, FieldError> {
    let f1 = diagonal_linear(2, -a);
    let f2 = PolyVectorField::from_terms(2, vec![
        (0, MultiIndex::from([1, 0]), r(-a)),
        (0, MultiIndex::from([2, 0]), r(b)),
        (0, MultiIndex::from([1, 2]), r(-b)),
        (1, MultiIndex::from([0, 1]), r(-a)),
        (1, MultiIndex::from([1, 1]), r(b / 2.0)),
    ])?;
    SwitchedFamily::new(vec![f1, f2])
}

/// Taylor coefficient of `x^{2p}` in `sin² x`: `(−1)^{p+1} 2^{2p−1}/(2p)!`.
pub fn sin2_coefficient(p: u32) -> f64 {
    let mut fact = 1.0;
    for i in 1..=(2 * p) {
        fact *= i as f64;
    }
    let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
    sign * 2f64.powi(2 * p as i32 - 1) / fact
}

/// Smallest admissible `μ` for [`example2`].
pub const EXAMPLE2_MU_MIN: f64 = 12.0 / 5.0;

/// Closed-form radius `ρ(μ) = (1 + (cosh 2 + 1)/(2μ))⁻¹` below which the
/// analytic pair of [`example2`] is certified.
pub fn example2_radius(mu: f64) -> f64 {
    1.0 / (1.0 + (2f64.cosh() + 1.0) / (2.0 * mu))
}

/// The complexified analytic pair
///
/// ```text
/// F¹(z) = (−z₁ + μ⁻¹ sin²(z₁) z₁² z₂, −z₂)
/// F²(z) = (−z₁ + μ⁻¹ cos²(z₁) z₁² z₂, −z₂)
/// ```
///
/// truncated to total degree `degree`, with exact ℓ¹ tail norms
/// `1 + (cosh 2 ∓ 1)/(2μ)` on the first component and `1` on the second.
pub fn example2(mu: f64, degree: u32) -> Result<SwitchedFamily, FieldError> {
    let lin = |t: &mut Vec<(usize, MultiIndex, C64)>| {
        t.push((0, MultiIndex::from([1, 0]), r(-1.0)));
        t.push((1, MultiIndex::from([0, 1]), r(-1.0)));
    };
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    lin(&mut t1);
    lin(&mut t2);
    if degree >= 3 {
        t2.push((0, MultiIndex::from([2, 1]), r(1.0 / mu)));
    }
    let mut p = 1;
    while 2 * p + 3 <= degree {
        let c = sin2_coefficient(p) / mu;
        t1.push((0, MultiIndex::from([2 * p + 2, 1]), r(c)));
        t2.push((0, MultiIndex::from([2 * p + 2, 1]), r(-c)));
        p += 1;
    }
    let ch = 2f64.cosh();
    let f1 = PolyVectorField::from_terms(2, t1)?.with_tail_l1(vec![1.0 + (ch - 1.0) / (2.0 * mu), 1.0])?;
    let f2 = PolyVectorField::from_terms(2, t2)?.with_tail_l1(vec![1.0 + (ch + 1.0) / (2.0 * mu), 1.0])?;
    SwitchedFamily::new(vec![f1, f2])
}

/// Hurwitz pair whose Jacobians `−I + E`, `−I + Eᵀ` generate `gl₂`, which is
/// not solvable.
pub fn sl2_family() -> SwitchedFamily {
    let f1 = PolyVectorField::from_terms(2, vec![
        (0, MultiIndex::from([1, 0]), r(-1.0)),
        (0, MultiIndex::from([0, 1]), r(1.0)),
        (1, MultiIndex::from([0, 1]), r(-1.0)),
    ])
    .expect("valid field");
    let f2 = PolyVectorField::from_terms(2, vec![
        (0, MultiIndex::from([1, 0]), r(-1.0)),
        (1, MultiIndex::from([1, 0]), r(1.0)),
        (1, MultiIndex::from([0, 1]), r(-1.0)),
    ])
    .expect("valid field");
    SwitchedFamily::new(vec![f1, f2]).expect("valid family")
}

/// Linear field `(−z₁ + c z₂, −z₂)` whose Lyapunov weights are genuinely
/// coupled: `|z₁|² + ε|z₂|²` decreases only when `ε > c²/4`.
pub fn coupled_linear(c: f64) -> SwitchedFamily {
    let f = PolyVectorField::from_terms(2, vec![
        (0, MultiIndex::from([1, 0]), r(-1.0)),
        (0, MultiIndex::from([0, 1]), r(c)),
        (1, MultiIndex::from([0, 1]), r(-1.0)),
    ])
    .expect("valid field");
    SwitchedFamily::new(vec![f]).expect("valid family")
}

/// Scalar polynomial field `Σ a_l z^l` given `a_1, a_2, …`.
pub fn scalar(coeffs: &[f64]) -> Result<PolyVectorField, FieldError> {
    PolyVectorField::from_terms(1, coeffs.iter().enumerate().map(|(i, &c)| (0, MultiIndex::new(vec![i as u32 + 1]), r(c))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin2_series_matches_libm() {
        let x: f64 = 0.7;
        let s: f64 = (1..20).map(|p| sin2_coefficient(p) * x.powi(2 * p as i32)).sum();
        assert!((s - x.sin().powi(2)).abs() < 1e-15);
    }

    #[test]
    fn example2_tails_bound_the_truncation() {
        let fam = example2(2.4, 30).unwrap();
        for f in fam.subsystems() {
            let t = f.tail_l1().unwrap();
            assert!(f.stored_l1(0) <= t[0]);
            // the series converges fast: the truncation is within 1e-15 of the tail
            assert!(t[0] - f.stored_l1(0) < 1e-14);
        }
    }

    #[test]
    fn example2_radius_at_lower_bound() {
        assert!((example2_radius(EXAMPLE2_MU_MIN) - 0.50198).abs() < 5e-6);
        assert!((example2_radius(3.0) - 0.5575).abs() < 5e-5);
    }
}
