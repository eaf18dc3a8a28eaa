//! Certified radius of the analytic sin²/cos² pair against its closed form.
//!
//!     cargo run --release --example radius_curve

use koopman_clf::certificate::{certify, CertifyOptions, SchemeChoice};
use koopman_clf::systems::{example2, example2_radius, EXAMPLE2_MU_MIN};

fn main() {
    println!("{:>6} {:>10} {:>10} {:>7}", "mu", "closed", "pipeline", "ratio");
    for i in 0..10 {
        let mu = EXAMPLE2_MU_MIN + i as f64 * 1.2;
        let fam = example2(mu, 20).expect("valid parameters");
        let r = certify(&fam, &CertifyOptions::new(20, SchemeChoice::Dd { xi: None, kappa: None })).unwrap();
        let closed = example2_radius(mu);
        let rho = r.rho_certified.unwrap_or(f64::NAN);
        println!("{mu:>6.2} {closed:>10.6} {rho:>10.6} {:>7.4}", rho / closed);
    }
}
