//! Radical-inverse (Halton) sequences for seed-free sampling.

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Radical inverse of `index` in `base`, a point of `[0, 1)`.
pub fn radical_inverse(mut index: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % b) as f64;
        index /= b;
        f *= inv;
    }
    r
}

/// Coordinate `dim` of the `index`-th Halton point (bases are the first primes).
pub fn halton(index: u64, dim: usize) -> f64 {
    radical_inverse(index, PRIMES[dim % PRIMES.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_two_prefix() {
        let got: Vec<f64> = (1..=4).map(|i| radical_inverse(i, 2)).collect();
        assert_eq!(got, vec![0.5, 0.25, 0.75, 0.125]);
    }

    #[test]
    fn base_three_prefix() {
        let got: Vec<f64> = (1..=3).map(|i| radical_inverse(i, 3)).collect();
        assert!((got[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((got[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((got[2] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn stays_in_unit_interval() {
        for i in 0..2000 {
            for d in 0..6 {
                let h = halton(i, d);
                assert!((0.0..1.0).contains(&h));
            }
        }
    }
}
