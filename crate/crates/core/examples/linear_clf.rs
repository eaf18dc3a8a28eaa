//! Quadratic common Lyapunov function for a switched linear system with a
//! common invariant flag, checked along exact trajectories.
//!
//!     cargo run --example linear_clf

use koopman_clf::liealg::{linear_clf, simultaneous_triangularize, DEFAULT_ETA, DEFAULT_TOL};
use koopman_clf::linalg::expm;
use koopman_clf::{re, CMat};
use nalgebra::DVector;

fn main() {
    let a1 = CMat::from_row_slice(2, 2, &[re(-1.0), re(4.0), re(0.0), re(-1.0)]);
    let a2 = CMat::from_row_slice(2, 2, &[re(-2.0), re(-1.0), re(0.0), re(-0.5)]);
    let tri = simultaneous_triangularize(&[a1.clone(), a2.clone()], DEFAULT_TOL).unwrap();
    let clf = linear_clf(&tri, DEFAULT_ETA).unwrap();
    println!("ε = {:?}", clf.epsilon);

    // switch every 0.3 time units, sample V every 0.1
    let steps = [expm(&(&a1 * re(0.1))), expm(&(&a2 * re(0.1)))];
    let mut x = DVector::from_vec(vec![re(0.3), re(1.0)]);
    let mut v = clf.evaluate(x.as_slice());
    let mut monotone = true;
    for k in 0..60 {
        x = &steps[(k / 3) % 2] * x;
        let w = clf.evaluate(x.as_slice());
        monotone &= w < v;
        v = w;
        if k % 10 == 9 {
            println!("t = {:.1}: V = {v:.3e}", (k + 1) as f64 * 0.1);
        }
    }
    println!("V strictly decreasing: {monotone}");
}
