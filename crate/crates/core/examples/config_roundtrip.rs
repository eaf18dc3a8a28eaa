//! Builds a config for the analytic pair, reads it back, and certifies it —
//! the same path the command-line `analyze` takes.
//!
//!     cargo run --example config_roundtrip

use koopman_clf::certificate::{certify, CertifyOptions, SchemeChoice};
use koopman_clf::cli::SystemConfig;
use koopman_clf::systems;

fn main() {
    let fam = systems::example2(3.0, 12).expect("valid parameters");
    let cfg = SystemConfig::from_family(&fam, 12, SchemeChoice::Dd { xi: None, kappa: None });
    let text = cfg.to_json();
    println!("{} bytes of JSON, {} coefficients in subsystem 1", text.len(), cfg.subsystems[0].coefficients.len());

    let back = SystemConfig::from_json(&text).unwrap();
    assert_eq!(back.family().unwrap(), fam);
    let report = certify(&back.family().unwrap(), &CertifyOptions::new(back.truncation_degree, back.scheme)).unwrap();
    println!("{:?}: ρ = {:?}", report.outcome, report.rho_certified);
    for inv in &report.invariance_evidence {
        println!("  boundary samples {}: max Re(F_l z̄_l) = {:.4e} on face {}", inv.samples, inv.worst_value, inv.worst_face);
    }
    let json = serde_json::to_string(&report).unwrap();
    println!("report: {} bytes", json.len());
}
