//! Randomly switched trajectories: a single traced run, a full audit of a
//! certificate, and a deliberately broken certificate that the audit flags.
//!
//!     cargo run --release --example switched_audit

use koopman_clf::certificate::{certify, perturb_epsilon, CertifyOptions, SchemeChoice};
use koopman_clf::switchsim::{audit_certificate, integrate_switched, random_signal, AuditOptions};
use koopman_clf::{systems, C64};

fn main() {
    let fam = systems::example1(1.0, 0.3).expect("valid parameters");
    let report = certify(&fam, &CertifyOptions::new(12, SchemeChoice::Poly { xi: None })).unwrap();
    let clf = report.clf().unwrap();

    let sig = random_signal(fam.len(), 20.0, 0.1, 1.0, 7).unwrap();
    println!("signal: {} segments, first {:?}", sig.segments.len(), &sig.segments[..3]);
    let run = integrate_switched(&fam, &sig, &[C64::new(0.5, 0.0), C64::new(0.5, 0.0)], 0.01, Some(&clf)).unwrap();
    println!("final ‖z‖∞ = {:.3e}, max relative V increase {:e}", run.final_norm, run.max_v_increase);
    for i in (0..run.times.len()).step_by(run.times.len() / 5) {
        println!("  t = {:>5.2}  V = {:.4e}  active {}", run.times[i], run.v_values[i], run.active[i]);
    }

    let opts = AuditOptions { trials: 20, points: 20, ..Default::default() };
    let audit = audit_certificate(&report, &fam, &opts).unwrap();
    println!("\naudit: {} runs, pass {}, converged {:.0}%", audit.runs, audit.pass, 100.0 * audit.converged_fraction);
    println!("  {}", audit.scope);

    let ctl = systems::coupled_linear(0.9);
    let mut bad = certify(&ctl, &CertifyOptions::new(6, SchemeChoice::Dd { xi: None, kappa: None })).unwrap();
    let alpha = perturb_epsilon(&mut bad, &ctl, 0.01).unwrap();
    let audit = audit_certificate(&bad, &ctl, &AuditOptions { trials: 10, points: 20, horizon: 10.0, ..Default::default() }).unwrap();
    println!("\nε{alpha:?} pushed below its bound: pass {}, max relative V increase {:.3e}", audit.pass, audit.max_v_increase);
}
