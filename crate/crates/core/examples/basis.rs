//! Graded monomial basis: enumeration order, lookup and sizes.
//!
//!     cargo run --example basis

use koopman_clf::multiindex::monomials_of_degree;
use koopman_clf::{MultiIndex, MultiIndexBasis};

fn main() {
    let b = MultiIndexBasis::new(2, 3).expect("n ≥ 1");
    println!("n = 2, N = 3: {} monomials", b.len());
    for (k, a) in b.table().iter().enumerate() {
        println!("  e_{k:<2} = z^{a:?}  (degree {})", a.total_degree());
    }

    let a = MultiIndex::from([1, 2]);
    println!("index of {a:?}: {:?}", b.index_of(&a).unwrap());
    println!("index of (4,0): {:?}", b.index_of(&MultiIndex::from([4, 0])).unwrap());

    for n in 1..=4 {
        let sizes: Vec<f64> = (0..=6).map(|d| monomials_of_degree(n, d)).collect();
        println!("n = {n}: monomials per degree {sizes:?}");
    }
}
