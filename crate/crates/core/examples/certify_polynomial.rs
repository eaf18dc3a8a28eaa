//! Certificate for the polynomial pair on the whole bidisk, including the
//! per-degree condition values and the Lyapunov weights.
//!
//!     cargo run --example certify_polynomial [b]

use koopman_clf::certificate::{certify, CertifyOptions, SchemeChoice};
use koopman_clf::{systems, C64};

fn main() {
    let b: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let fam = systems::example1(1.0, b).expect("valid parameters");
    let report = certify(&fam, &CertifyOptions::new(12, SchemeChoice::Poly { xi: None })).unwrap();
    println!("b = {b}: {:?} — {}", report.outcome, report.message);

    let c = report.condition.as_ref().unwrap();
    println!("sup Q (computed) = {}, limsup estimate = {}", c.computed_sup, c.extrapolated_sup);
    for (d, q) in c.by_degree.iter().enumerate().skip(1) {
        println!("  degree {:>2}: {q:.6}", d + 1);
    }
    if let Some(a) = &c.argmax {
        println!("attained at j = {:?}, k = {:?} (subsystem {})", a.j, a.k, a.subsystem);
    }
    if !report.is_certified() {
        return;
    }
    println!("first weights:");
    for e in report.epsilon.iter().take(8) {
        println!("  ε{:?} = {:.6e}", e.alpha, e.value);
    }
    let conv = report.convergence.as_ref().unwrap();
    println!("Σ|α|ε ρ^2|α| ≈ {} + tail ≤ {} (growth {:.4} per degree)", conv.partial_sum, conv.tail_bound, conv.ratio);

    let clf = report.clf().unwrap();
    for r in [0.1, 0.5, 0.9] {
        let (v, tail) = clf.evaluate(&[C64::new(r, 0.0), C64::new(0.0, r)]).unwrap();
        println!("V(({r}, {r}i)) = {v:.6} (+ tail ≤ {tail:.2e})");
    }
}
