//! Lie-algebraic test of the Jacobians and a common triangularizing basis.
//!
//!     cargo run --example triangularize

use koopman_clf::liealg::{close_under_bracket, is_solvable, simultaneous_triangularize, DEFAULT_TOL};
use koopman_clf::{re, systems, CMat, C64};

fn main() {
    // two upper-triangular matrices hidden behind a change of basis
    let t1 = CMat::from_row_slice(3, 3, &[re(-1.0), re(2.0), re(0.5), re(0.0), re(-2.0), re(1.0), re(0.0), re(0.0), re(-0.5)]);
    let t2 = CMat::from_row_slice(3, 3, &[re(-3.0), re(0.0), re(1.0), re(0.0), re(-1.0), C64::new(0.0, 1.0), re(0.0), re(0.0), re(-2.0)]);
    let s = CMat::from_row_slice(3, 3, &[re(1.0), re(1.0), re(0.0), re(0.0), re(1.0), re(1.0), re(1.0), re(0.0), re(2.0)]);
    let si = s.clone().try_inverse().unwrap();
    let a = vec![&s * &t1 * &si, &s * &t2 * &si];

    let g = close_under_bracket(&a, DEFAULT_TOL).unwrap();
    let sol = is_solvable(&g, DEFAULT_TOL);
    println!("generated algebra: dimension {}, derived series {:?}, solvable {}", g.dim(), sol.derived_dims, sol.solvable);

    let tri = simultaneous_triangularize(&a, DEFAULT_TOL).unwrap();
    println!("residual {:e}, cond(P) {:.3}", tri.residual, tri.cond);
    for (i, t) in tri.t_list.iter().enumerate() {
        println!("T{} diagonal: {:?}", i + 1, (0..3).map(|j| t[(j, j)]).collect::<Vec<_>>());
    }

    let sl2 = systems::sl2_family().jacobians();
    let g = close_under_bracket(&sl2, DEFAULT_TOL).unwrap();
    let sol = is_solvable(&g, DEFAULT_TOL);
    println!("\n−I+E, −I+Eᵀ: dimension {}, derived series {:?}, solvable {}", g.dim(), sol.derived_dims, sol.solvable);
    println!("triangularization: {}", simultaneous_triangularize(&sl2, DEFAULT_TOL).err().map_or("found".into(), |e| e.to_string()));
}
