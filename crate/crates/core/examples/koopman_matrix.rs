//! Koopman generator matrices in the monomial basis: sparsity, triangular
//! structure and the bracket identity `K_[F,G] = K_G K_F − K_F K_G`.
//!
//!     cargo run --example koopman_matrix

use koopman_clf::koopman::build_matrix;
use koopman_clf::{systems, MultiIndexBasis};

fn main() {
    let fam = systems::example1(1.0, 0.3).expect("valid parameters");
    let (f1, f2) = (fam.get(0), fam.get(1));
    let basis = MultiIndexBasis::new(2, 4).unwrap();
    let k2 = build_matrix(f2, &basis).unwrap();

    println!("F2 has {} terms, Koopman matrix {}×{} with {} nonzeros", f2.term_count(), k2.size(), k2.size(), k2.nnz());
    println!("upper triangular: {}", k2.verify_triangular(0.0));
    for (k, j, v) in k2.entries().filter(|(k, _, _)| *k >= 1 && *k <= 3) {
        println!("  ⟨L e_{k}, e_{j}⟩ = {v}   ({:?} → {:?})", basis.alpha(k), basis.alpha(j));
    }

    let br = f1.lie_bracket(f2).unwrap();
    let kf = build_matrix(f1, &basis).unwrap().dense();
    let kg = k2.dense();
    let kb = build_matrix(&br, &basis).unwrap().dense();
    let dev = (&kg * &kf - &kf * &kg - kb).iter().map(|c| c.norm()).fold(0.0, f64::max);
    println!("[F1, F2] has {} terms; bracket identity deviation {dev:e}", br.term_count());

    println!("\nfirst rows as CSV:");
    for line in k2.to_csv().lines().take(4) {
        println!("{line}");
    }
}
