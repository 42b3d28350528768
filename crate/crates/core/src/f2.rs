//! Linear algebra over GF(2): bit vectors and subspaces in reduced row echelon form.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::SplitRng;

/// A vector over GF(2). Index 0 is the leftmost bit when rendered.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitVec {
    bits: Vec<bool>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec { bits: alloc::vec![false; len] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BitVec { bits: bits.to_vec() }
    }

    /// Low `len` bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        let bits = (0..len).map(|i| (value >> (len - 1 - i)) & 1 == 1).collect();
        BitVec { bits }
    }

    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(index, true);
        v
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<bool>>>()
            .map(|bits| BitVec { bits })
    }

    pub fn random(len: usize, rng: &mut SplitRng) -> Self {
        BitVec { bits: (0..len).map(|_| rng.bit()).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, b: bool) {
        self.bits[i] = b;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn push(&mut self, b: bool) {
        self.bits.push(b);
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|b| !b)
    }

    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn first_one(&self) -> Option<usize> {
        self.bits.iter().position(|b| *b)
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        assert_eq!(self.len(), other.len(), "length mismatch in xor");
        BitVec { bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a ^ b).collect() }
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len(), other.len(), "length mismatch in xor");
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a ^= *b;
        }
    }

    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len(), other.len(), "length mismatch in dot");
        self.bits.iter().zip(&other.bits).fold(false, |acc, (a, b)| acc ^ (*a & *b))
    }

    /// Value with bit 0 as the most significant bit. Panics above 64 bits.
    pub fn to_u64(&self) -> u64 {
        assert!(self.len() <= 64, "bit vector too long for u64");
        self.bits.iter().fold(0u64, |acc, b| (acc << 1) | (*b as u64))
    }

    pub fn concat(&self, other: &BitVec) -> BitVec {
        let mut bits = self.bits.clone();
        bits.extend_from_slice(&other.bits);
        BitVec { bits }
    }

    pub fn slice(&self, start: usize, end: usize) -> BitVec {
        BitVec { bits: self.bits[start..end].to_vec() }
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    /// Packs the bits MSB-first into bytes; the last byte is zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = alloc::vec![0u8; self.len().div_ceil(8)];
        for (i, b) in self.bits.iter().enumerate() {
            if *b {
                out[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({})", self.to_bit_string())
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}

impl FromIterator<bool> for BitVec {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitVec { bits: iter.into_iter().collect() }
    }
}

/// A linear subspace of GF(2)^d stored as a basis in reduced row echelon form.
///
/// Pivots increase strictly from row to row, and every pivot column is zero in
/// all other rows, so two equal subspaces always have identical bases.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<BitVec>,
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Subspace { ambient_dim, basis: Vec::new() }
    }

    pub fn full(ambient_dim: usize) -> Self {
        let basis = (0..ambient_dim).map(|i| BitVec::unit(ambient_dim, i)).collect();
        Subspace { ambient_dim, basis }
    }

    /// Span of arbitrary generators; dependent generators are dropped.
    pub fn span(ambient_dim: usize, generators: &[BitVec]) -> Self {
        let mut s = Subspace::zero(ambient_dim);
        for g in generators {
            s = s.extend_by(g);
        }
        s
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[BitVec] {
        &self.basis
    }

    pub fn pivots(&self) -> Vec<usize> {
        self.basis.iter().map(|r| r.first_one().expect("zero basis row")).collect()
    }

    /// Reduces `v` against the basis; the result is zero iff `v` is in the span.
    pub fn reduce(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.ambient_dim, "vector length differs from ambient dimension");
        let mut r = v.clone();
        for row in &self.basis {
            let p = row.first_one().expect("zero basis row");
            if r.get(p) {
                r.xor_assign(row);
            }
        }
        r
    }

    pub fn contains(&self, v: &BitVec) -> bool {
        self.reduce(v).is_zero()
    }

    /// Span of this subspace together with `v`, re-normalised to RREF.
    pub fn extend_by(&self, v: &BitVec) -> Subspace {
        let r = self.reduce(v);
        let Some(p) = r.first_one() else {
            return self.clone();
        };
        let mut basis: Vec<BitVec> = self
            .basis
            .iter()
            .map(|row| if row.get(p) { row.xor(&r) } else { row.clone() })
            .collect();
        let at = basis.iter().position(|row| row.first_one().unwrap() > p).unwrap_or(basis.len());
        basis.insert(at, r);
        Subspace { ambient_dim: self.ambient_dim, basis }
    }

    /// All w with w·v = 0 for every v in the subspace.
    pub fn orthogonal_complement(&self) -> Subspace {
        let pivots = self.pivots();
        let mut out = Vec::new();
        for free in (0..self.ambient_dim).filter(|c| !pivots.contains(c)) {
            let mut w = BitVec::unit(self.ambient_dim, free);
            for (row, &p) in self.basis.iter().zip(&pivots) {
                if row.get(free) {
                    w.set(p, true);
                }
            }
            out.push(w);
        }
        Subspace::span(self.ambient_dim, &out)
    }

    /// Every element, in lexicographic order. Intended for small dimensions.
    pub fn elements(&self) -> Vec<BitVec> {
        assert!(self.dim() <= 24, "subspace too large to enumerate");
        let mut out: Vec<BitVec> = (0u64..1 << self.dim())
            .map(|mask| {
                let mut v = BitVec::zeros(self.ambient_dim);
                for (k, row) in self.basis.iter().enumerate() {
                    if (mask >> k) & 1 == 1 {
                        v.xor_assign(row);
                    }
                }
                v
            })
            .collect();
        out.sort();
        out
    }

    /// Uniformly random element of the subspace.
    pub fn random_element(&self, rng: &mut SplitRng) -> BitVec {
        let mut v = BitVec::zeros(self.ambient_dim);
        for row in &self.basis {
            if rng.bit() {
                v.xor_assign(row);
            }
        }
        v
    }

    /// Whether `self` is a subspace of `other`.
    pub fn is_subspace_of(&self, other: &Subspace) -> bool {
        self.ambient_dim == other.ambient_dim && self.basis.iter().all(|r| other.contains(r))
    }
}

/// Uniformly random subspace of the given dimension (rejection sampling on generators).
pub fn random_subspace(ambient_dim: usize, dim: usize, rng: &mut SplitRng) -> Subspace {
    assert!(dim <= ambient_dim, "dimension exceeds ambient dimension");
    let mut s = Subspace::zero(ambient_dim);
    while s.dim() < dim {
        let v = BitVec::random(ambient_dim, rng);
        if !s.contains(&v) {
            s = s.extend_by(&v);
        }
    }
    s
}

/// Uniformly random element of `outer \ inner`. Panics if `inner` is not a proper subspace of `outer`.
pub fn sample_coset_complement(inner: &Subspace, outer: &Subspace, rng: &mut SplitRng) -> BitVec {
    assert!(inner.is_subspace_of(outer), "inner is not contained in outer");
    assert!(inner.dim() < outer.dim(), "inner equals outer; complement is empty");
    loop {
        let v = outer.random_element(rng);
        if !inner.contains(&v) {
            return v;
        }
    }
}

/// Lexicographically least element of `outer \ inner`.
pub fn least_coset_complement(inner: &Subspace, outer: &Subspace) -> BitVec {
    assert!(inner.is_subspace_of(outer), "inner is not contained in outer");
    outer
        .elements()
        .into_iter()
        .find(|v| !inner.contains(v))
        .expect("inner equals outer; complement is empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn brute_span(d: usize, gens: &[BitVec]) -> BTreeSet<BitVec> {
        let mut set = BTreeSet::new();
        set.insert(BitVec::zeros(d));
        for g in gens {
            let current: Vec<BitVec> = set.iter().cloned().collect();
            for v in current {
                set.insert(v.xor(g));
            }
        }
        set
    }

    #[test]
    fn bit_string_round_trip() {
        let v = BitVec::parse("10110").unwrap();
        assert_eq!(v.to_bit_string(), "10110");
        assert_eq!(v.to_u64(), 0b10110);
        assert_eq!(BitVec::from_u64(0b10110, 5), v);
        assert_eq!(v.to_bytes(), alloc::vec![0b1011_0000]);
        assert!(BitVec::parse("10a").is_none());
    }

    #[test]
    fn rref_is_canonical() {
        let a = Subspace::span(4, &[BitVec::parse("1100").unwrap(), BitVec::parse("0110").unwrap()]);
        let b = Subspace::span(4, &[BitVec::parse("1010").unwrap(), BitVec::parse("1100").unwrap()]);
        assert_eq!(a, b);
        assert_eq!(a.basis()[0].to_bit_string(), "1010");
        assert_eq!(a.basis()[1].to_bit_string(), "0110");
    }

    #[test]
    fn complement_matches_enumeration() {
        let mut rng = SplitRng::new(3);
        for d in 1..=6 {
            for k in 0..=d {
                let s = random_subspace(d, k, &mut rng);
                let perp = s.orthogonal_complement();
                assert_eq!(perp.dim(), d - k);
                let members = s.elements();
                for w in 0u64..1 << d {
                    let w = BitVec::from_u64(w, d);
                    let orth = members.iter().all(|v| !v.dot(&w));
                    assert_eq!(orth, perp.contains(&w));
                }
            }
        }
    }

    #[test]
    fn contains_matches_enumeration() {
        let mut rng = SplitRng::new(5);
        for _ in 0..50 {
            let gens: Vec<BitVec> = (0..3).map(|_| BitVec::random(5, &mut rng)).collect();
            let s = Subspace::span(5, &gens);
            let set = brute_span(5, &gens);
            assert_eq!(s.elements().len(), set.len());
            for w in 0u64..32 {
                let w = BitVec::from_u64(w, 5);
                assert_eq!(s.contains(&w), set.contains(&w));
            }
        }
    }

    #[test]
    fn random_subspace_is_roughly_uniform() {
        // GF(2)^3 has 7 one-dimensional subspaces.
        let mut rng = SplitRng::new(11);
        let mut counts = alloc::collections::BTreeMap::new();
        let n = 7000;
        for _ in 0..n {
            *counts.entry(random_subspace(3, 1, &mut rng).basis()[0].clone()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        for c in counts.values() {
            assert!((*c as f64 - 1000.0).abs() < 4.0 * (1000.0f64 * 6.0 / 7.0).sqrt());
        }
    }

    #[test]
    fn coset_complement_avoids_inner() {
        let mut rng = SplitRng::new(1);
        let outer = Subspace::full(5);
        let inner = random_subspace(5, 2, &mut rng);
        for _ in 0..100 {
            let v = sample_coset_complement(&inner, &outer, &mut rng);
            assert!(!inner.contains(&v));
        }
        let least = least_coset_complement(&inner, &outer);
        assert!(!inner.contains(&least));
        for v in outer.elements() {
            if v < least {
                assert!(inner.contains(&v));
            }
        }
    }

    #[test]
    fn frozen_subspace_for_seed() {
        let mut rng = SplitRng::new(2024);
        let s = random_subspace(5, 2, &mut rng);
        assert_eq!(s.dim(), 2);
        let again = random_subspace(5, 2, &mut SplitRng::new(2024));
        assert_eq!(s, again);
    }
}
