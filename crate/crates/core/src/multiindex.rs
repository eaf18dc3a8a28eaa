//! Monomial basis of the Hardy space on the polydisk.
//!
//! Monomials `z^α` are enumerated in graded order: lower total degree first,
//! and within one degree the multi-index with the larger exponent at the
//! first differing coordinate comes first. For `n = 2, N = 2` this gives
//!
//! ```text
//! (0,0) (1,0) (0,1) (2,0) (1,1) (0,2)
//! ```
//!
//! Linear indices are 0-based; index 0 is always the constant monomial.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BasisError {
    #[error("basis dimension must be at least 1")]
    ZeroDimension,
    #[error("multi-index has dimension {got}, basis has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Exponent vector `α ∈ ℕⁿ` of a monomial.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Unit multi-index `e_l` (0-based component).
    pub fn unit(dim: usize, l: usize) -> Self {
        let mut e = vec![0; dim];
        e[l] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `|α| = α₁ + … + αₙ`.
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn get(&self, l: usize) -> u32 {
        self.0[l]
    }

    pub fn checked_add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - e_l`, or `None` when `α_l = 0`.
    pub fn lowered(&self, l: usize) -> Option<MultiIndex> {
        let mut e = self.0.clone();
        e[l] = e[l].checked_sub(1)?;
        Some(MultiIndex(e))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl From<&[u32]> for MultiIndex {
    fn from(v: &[u32]) -> Self {
        MultiIndex(v.to_vec())
    }
}

impl<const N: usize> From<[u32; N]> for MultiIndex {
    fn from(v: [u32; N]) -> Self {
        MultiIndex(v.to_vec())
    }
}

/// Graded lexicographic comparison used to order the monomial basis.
pub fn graded_cmp(a: &MultiIndex, b: &MultiIndex) -> Ordering {
    a.total_degree().cmp(&b.total_degree()).then_with(|| {
        for (x, y) in a.0.iter().zip(&b.0) {
            if x != y {
                // larger exponent first
                return y.cmp(x);
            }
        }
        Ordering::Equal
    })
}

/// `(γ − α)_l = (γ₁−α₁, …, γ_l−α_l+1, …, γₙ−αₙ)`, the exponent of the
/// coefficient of `F_l` that maps `z^α` onto `z^γ` under `F·∇`.
///
/// Returns `None` when any entry would be negative. `l` is 0-based.
pub fn shift_index(alpha: &MultiIndex, l: usize, gamma: &MultiIndex) -> Option<MultiIndex> {
    assert_eq!(alpha.dim(), gamma.dim(), "shift_index dimension mismatch");
    assert!(l < alpha.dim(), "component index out of range");
    let mut out = Vec::with_capacity(alpha.dim());
    for i in 0..alpha.dim() {
        let mut v = gamma.0[i] as i64 - alpha.0[i] as i64;
        if i == l {
            v += 1;
        }
        if v < 0 {
            return None;
        }
        out.push(v as u32);
    }
    Some(MultiIndex(out))
}

/// Number of monomials of total degree exactly `d` in `n` variables.
pub fn monomials_of_degree(n: usize, d: u32) -> f64 {
    binomial(d as f64 + n as f64 - 1.0, n.saturating_sub(1) as f64)
}

fn binomial(top: f64, k: f64) -> f64 {
    let mut r = 1.0;
    let k = k as u64;
    for i in 0..k {
        r *= (top - i as f64) / (i as f64 + 1.0);
    }
    r
}

/// All multi-indices of total degree `≤ N` in graded order.
#[derive(Debug, Clone)]
pub struct MultiIndexBasis {
    dim: usize,
    max_degree: u32,
    table: Vec<MultiIndex>,
    inverse: HashMap<MultiIndex, usize>,
    // degree_start[d] = first linear index of degree d; one extra sentinel
    degree_start: Vec<usize>,
}

impl MultiIndexBasis {
    pub fn new(dim: usize, max_degree: u32) -> Result<Self, BasisError> {
        if dim == 0 {
            return Err(BasisError::ZeroDimension);
        }
        let mut table = Vec::new();
        let mut degree_start = Vec::with_capacity(max_degree as usize + 2);
        let mut scratch = vec![0u32; dim];
        for d in 0..=max_degree {
            degree_start.push(table.len());
            push_compositions(d, 0, &mut scratch, &mut table);
        }
        degree_start.push(table.len());
        let inverse = table.iter().cloned().enumerate().map(|(k, a)| (a, k)).collect();
        Ok(MultiIndexBasis {
            dim,
            max_degree,
            table,
            inverse,
            degree_start,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Number of monomials, constant included: `C(N+n, n)`.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &[MultiIndex] {
        &self.table
    }

    pub fn alpha(&self, k: usize) -> &MultiIndex {
        &self.table[k]
    }

    pub fn degree(&self, k: usize) -> u32 {
        self.table[k].total_degree()
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Result<Option<usize>, BasisError> {
        if alpha.dim() != self.dim {
            return Err(BasisError::DimensionMismatch {
                expected: self.dim,
                got: alpha.dim(),
            });
        }
        Ok(self.inverse.get(alpha).copied())
    }

    /// Linear index range of monomials with total degree `d`.
    pub fn degree_range(&self, d: u32) -> std::ops::Range<usize> {
        if d > self.max_degree {
            return self.table.len()..self.table.len();
        }
        self.degree_start[d as usize]..self.degree_start[d as usize + 1]
    }
}

// Fills scratch[pos..] with every composition of `remaining`, first slot
// largest first.
fn push_compositions(remaining: u32, pos: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos == scratch.len() - 1 {
        scratch[pos] = remaining;
        out.push(MultiIndex(scratch.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        scratch[pos] = v;
        push_compositions(remaining - v, pos + 1, scratch, out);
    }
    scratch[pos] = 0;
}
