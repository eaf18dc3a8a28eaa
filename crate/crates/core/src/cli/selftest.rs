//! Small seeded property suites run by `koopman-clf selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::koopman::{self, EntryFault, KoopmanMatrix};
use crate::multiindex::{graded_cmp, MultiIndex, MultiIndexBasis};
use crate::vectorfield::PolyVectorField;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn random_field(rng: &mut ChaCha8Rng, n: usize, degree: u32, upper: bool) -> PolyVectorField {
    let basis = MultiIndexBasis::new(n, degree).expect("n ≥ 1");
    let mut terms = Vec::new();
    for l in 0..n {
        for a in basis.table().iter().skip(1) {
            if upper && a.total_degree() == 1 && (0..l).any(|m| a.get(m) == 1) {
                continue;
            }
            if rng.random_bool(0.6) {
                let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                terms.push((l, a.clone(), c));
            }
        }
    }
    PolyVectorField::from_terms(n, terms).expect("valid random field")
}

fn build(f: &PolyVectorField, b: &MultiIndexBasis, fault: EntryFault) -> KoopmanMatrix {
    koopman::build_matrix_faulty(f, b, fault).expect("matching dimensions")
}

/// Graded order: strictly sorted table, index round trip, counts.
pub fn lex_order_suite() -> SuiteResult {
    let mut res = SuiteResult { name: "graded-lex order".into(), cases: 0, failures: 0, first_failure: None };
    for n in 1..=3usize {
        for nn in 0..=5u32 {
            res.cases += 1;
            let b = MultiIndexBasis::new(n, nn).expect("n ≥ 1");
            let expected: f64 = (0..=nn).map(|d| crate::multiindex::monomials_of_degree(n, d)).sum();
            let sorted = b.table().windows(2).all(|w| graded_cmp(&w[0], &w[1]).is_lt());
            let round = b.table().iter().enumerate().all(|(k, a)| b.index_of(a).ok().flatten() == Some(k));
            let zero_first = b.alpha(0) == &MultiIndex::zero(n);
            if !(sorted && round && zero_first && b.len() as f64 == expected) {
                res.failures += 1;
                res.first_failure.get_or_insert(format!("n = {n}, N = {nn}"));
            }
        }
    }
    res
}

/// `K_{[F,G]} = K_G K_F − K_F K_G` entrywise on random quadratic pairs.
pub fn bracket_suite(seed: u64, cases: usize, fault: EntryFault) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = MultiIndexBasis::new(2, 6).expect("n ≥ 1");
    let mut res = SuiteResult { name: "bracket identity".into(), cases, failures: 0, first_failure: None };
    for case in 0..cases {
        let f = random_field(&mut rng, 2, 2, false);
        let g = random_field(&mut rng, 2, 2, false);
        let br = f.lie_bracket(&g).expect("same dimension");
        let kf = build(&f, &b, fault).dense();
        let kg = build(&g, &b, fault).dense();
        let kb = build(&br, &b, fault).dense();
        let err = (&kg * &kf - &kf * &kg - &kb).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if err > 1e-10 {
            res.failures += 1;
            res.first_failure.get_or_insert(format!("case {case}: max deviation {err:e}"));
        }
    }
    res
}

/// Upper-triangular Jacobians give exactly upper-triangular Koopman
/// matrices with the predicted diagonal.
pub fn triangularity_suite(seed: u64, cases: usize, fault: EntryFault) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    let mut res = SuiteResult { name: "triangularity".into(), cases, failures: 0, first_failure: None };
    for case in 0..cases {
        let n = 2 + case % 2;
        let f = random_field(&mut rng, n, 3, true);
        let b = MultiIndexBasis::new(n, 4).expect("n ≥ 1");
        let k = build(&f, &b, fault);
        let jac = f.jacobian_at_origin();
        let lt: Vec<C64> = (0..n).map(|l| jac[(l, l)]).collect();
        let diag_ok = k.diagonal_eigenvalues(&lt).is_ok();
        if !(k.verify_triangular(0.0) && diag_ok) {
            res.failures += 1;
            res.first_failure.get_or_insert(format!("case {case}: n = {n}, subdiagonal {:e}, diagonal ok: {diag_ok}", k.max_subdiagonal()));
        }
    }
    res
}

pub fn run_all(seed: u64, fault: EntryFault) -> Vec<SuiteResult> {
    vec![lex_order_suite(), bracket_suite(seed, 20, fault), triangularity_suite(seed, 20, fault)]
}
