// Sparse multivariate complex polynomials keyed by exponent vector.

use std::collections::BTreeMap;

use crate::multiindex::MultiIndex;
use crate::C64;

pub(crate) type Poly = BTreeMap<MultiIndex, C64>;

pub(crate) fn add_scaled(acc: &mut Poly, p: &Poly, s: C64) {
    for (a, c) in p {
        *acc.entry(a.clone()).or_insert(C64::new(0.0, 0.0)) += c * s;
    }
}

pub(crate) fn mul(p: &Poly, q: &Poly) -> Poly {
    let mut out = Poly::new();
    for (a, x) in p {
        for (b, y) in q {
            *out.entry(a.checked_add(b)).or_insert(C64::new(0.0, 0.0)) += x * y;
        }
    }
    out
}

/// ∂p/∂z_m.
pub(crate) fn deriv(p: &Poly, m: usize) -> Poly {
    let mut out = Poly::new();
    for (a, c) in p {
        if let Some(lo) = a.lowered(m) {
            *out.entry(lo).or_insert(C64::new(0.0, 0.0)) += c * a.get(m) as f64;
        }
    }
    out
}

pub(crate) fn drop_zeros(p: &mut Poly) {
    p.retain(|_, c| *c != C64::new(0.0, 0.0));
}

/// Monomial powers `z_m^e` for `e ≤ max_exp[m]`.
pub(crate) fn power_table(z: &[C64], max_exp: &[u32]) -> Vec<Vec<C64>> {
    z.iter()
        .zip(max_exp)
        .map(|(&zm, &e)| {
            let mut row = Vec::with_capacity(e as usize + 1);
            let mut acc = C64::new(1.0, 0.0);
            row.push(acc);
            for _ in 0..e {
                acc *= zm;
                row.push(acc);
            }
            row
        })
        .collect()
}

pub(crate) fn monomial(pows: &[Vec<C64>], a: &[u32]) -> C64 {
    let mut v = C64::new(1.0, 0.0);
    for (m, &e) in a.iter().enumerate() {
        if e > 0 {
            v *= pows[m][e as usize];
        }
    }
    v
}
