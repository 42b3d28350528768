//! Dense state-vector simulator.
//!
//! Qubit 0 is the most significant bit of the basis index, so the basis
//! label `q0 q1 ... q(n-1)` reads left to right.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use num_complex::Complex64;

use crate::f2::BitVec;
use crate::rng::SplitRng;

pub type C64 = Complex64;

/// Default qubit limit for dense states.
pub const DEFAULT_CAP: usize = 22;

const NORM_TOL: f64 = 1e-9;
const DUMP_CUTOFF: f64 = 1e-12;

pub(crate) const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("state needs {requested} qubits but the cap is {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("amplitude vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state is not normalised (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("qubit {qubit} out of range for a {n}-qubit state")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("qubit list contains a duplicate")]
    DuplicateQubit,
    #[error("projection onto a zero-probability outcome")]
    ZeroProbability,
}

/// A 2x2 complex matrix in row-major order.
pub type Mat2 = [[C64; 2]; 2];

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub mod gates {
    use super::*;

    pub fn x() -> Mat2 {
        [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
    }
    pub fn z() -> Mat2 {
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
    }
    pub fn h() -> Mat2 {
        let s = FRAC_1_SQRT_2;
        [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]]
    }
    pub fn phase(theta: f64) -> Mat2 {
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), C64::from_polar(1.0, theta)]]
    }
    pub fn s() -> Mat2 {
        [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 1.0)]]
    }
    pub fn t() -> Mat2 {
        phase(core::f64::consts::FRAC_PI_4)
    }
}

/// Pure state on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
    cap: usize,
}

impl StateVector {
    /// `|0...0>` on `n` qubits under the default cap.
    pub fn zero(n: usize) -> Result<Self, StateError> {
        Self::zero_with_cap(n, DEFAULT_CAP)
    }

    pub fn zero_with_cap(n: usize, cap: usize) -> Result<Self, StateError> {
        Self::basis_with_cap(n, 0, cap)
    }

    pub fn basis(n: usize, index: u64) -> Result<Self, StateError> {
        Self::basis_with_cap(n, index, DEFAULT_CAP)
    }

    pub fn basis_with_cap(n: usize, index: u64, cap: usize) -> Result<Self, StateError> {
        if n > cap {
            return Err(StateError::CapExceeded { requested: n, cap });
        }
        let mut amps = alloc::vec![C64::new(0.0, 0.0); 1 << n];
        amps[index as usize] = C64::new(1.0, 0.0);
        Ok(StateVector { n, amps, cap })
    }

    pub fn from_bits(bits: &BitVec) -> Result<Self, StateError> {
        Self::basis(bits.len(), bits.to_u64())
    }

    /// Wraps an amplitude vector; it must be normalised to within 1e-9.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, StateError> {
        Self::from_amplitudes_with_cap(amps, DEFAULT_CAP)
    }

    pub fn from_amplitudes_with_cap(amps: Vec<C64>, cap: usize) -> Result<Self, StateError> {
        let s = Self::from_unnormalized(amps, cap)?;
        let ns = s.norm_sqr();
        if (ns - 1.0).abs() > NORM_TOL {
            return Err(StateError::NotNormalized(ns));
        }
        Ok(s)
    }

    /// Wraps an amplitude vector without checking its norm.
    pub fn from_unnormalized(amps: Vec<C64>, cap: usize) -> Result<Self, StateError> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(StateError::BadLength(len));
        }
        let n = len.trailing_zeros() as usize;
        if n > cap {
            return Err(StateError::CapExceeded { requested: n, cap });
        }
        Ok(StateVector { n, amps, cap })
    }

    /// Haar-random state.
    pub fn random(n: usize, rng: &mut SplitRng) -> Result<Self, StateError> {
        if n > DEFAULT_CAP {
            return Err(StateError::CapExceeded { requested: n, cap: DEFAULT_CAP });
        }
        let mut amps: Vec<C64> = (0..1usize << n).map(|_| C64::new(rng.gaussian(), rng.gaussian())).collect();
        let norm = libm::sqrt(amps.iter().map(|a| a.norm_sqr()).sum::<f64>());
        for a in &mut amps {
            *a /= norm;
        }
        Ok(StateVector { n, amps, cap: DEFAULT_CAP })
    }

    /// Tensor product of independent Haar-random single-qubit states.
    pub fn random_product(n: usize, rng: &mut SplitRng) -> Result<Self, StateError> {
        let mut s = Self::zero(0)?;
        for _ in 0..n {
            s = s.tensor(&Self::random(1, rng)?)?;
        }
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn set_cap(&mut self, cap: usize) -> Result<(), StateError> {
        if self.n > cap {
            return Err(StateError::CapExceeded { requested: self.n, cap });
        }
        self.cap = cap;
        Ok(())
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, index: u64) -> C64 {
        self.amps[index as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> f64 {
        let ns = self.norm_sqr();
        if ns > 0.0 {
            let inv = 1.0 / libm::sqrt(ns);
            for a in &mut self.amps {
                *a *= inv;
            }
        }
        ns
    }

    pub fn scale(&mut self, factor: C64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    #[inline]
    fn mask(&self, q: usize) -> usize {
        1usize << (self.n - 1 - q)
    }

    /// Value of qubit `q` in basis index `index`.
    #[inline]
    pub fn bit_of(&self, index: usize, q: usize) -> bool {
        index & self.mask(q) != 0
    }

    /// Bits of `qubits` (in that order) in basis index `index`.
    pub fn bits_of(&self, index: usize, qubits: &[usize]) -> BitVec {
        qubits.iter().map(|&q| self.bit_of(index, q)).collect()
    }

    pub fn check_qubits(&self, qubits: &[usize]) -> Result<(), StateError> {
        for (k, &q) in qubits.iter().enumerate() {
            if q >= self.n {
                return Err(StateError::QubitOutOfRange { qubit: q, n: self.n });
            }
            if qubits[..k].contains(&q) {
                return Err(StateError::DuplicateQubit);
            }
        }
        Ok(())
    }

    pub fn tensor(&self, other: &StateVector) -> Result<StateVector, StateError> {
        let n = self.n + other.n;
        let cap = self.cap.max(other.cap);
        if n > cap {
            return Err(StateError::CapExceeded { requested: n, cap });
        }
        let mut amps = Vec::with_capacity(1 << n);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(StateVector { n, amps, cap })
    }

    /// Reorders qubits so that new qubit `k` is old qubit `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<StateVector, StateError> {
        if order.len() != self.n {
            return Err(StateError::QubitOutOfRange { qubit: order.len(), n: self.n });
        }
        self.check_qubits(order)?;
        let mut amps = alloc::vec![C64::new(0.0, 0.0); self.amps.len()];
        for (old, a) in self.amps.iter().enumerate() {
            let mut new = 0usize;
            for &q in order {
                new = (new << 1) | self.bit_of(old, q) as usize;
            }
            amps[new] = *a;
        }
        Ok(StateVector { n: self.n, amps, cap: self.cap })
    }

    pub fn apply_1q(&mut self, q: usize, m: &Mat2) {
        assert!(q < self.n, "qubit {q} out of range");
        let bit = self.mask(q);
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Applies `m` to `target` on the subspace where every control is 1.
    pub fn apply_controlled_1q(&mut self, controls: &[usize], target: usize, m: &Mat2) {
        assert!(target < self.n && controls.iter().all(|&q| q < self.n && q != target));
        let bit = self.mask(target);
        let cmask = controls.iter().fold(0usize, |acc, &q| acc | self.mask(q));
        for i in 0..self.amps.len() {
            if i & bit == 0 && i & cmask == cmask {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn h(&mut self, q: usize) {
        let s = FRAC_1_SQRT_2;
        let bit = self.mask(q);
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = (a0 + a1) * s;
                self.amps[i | bit] = (a0 - a1) * s;
            }
        }
    }

    pub fn x(&mut self, q: usize) {
        let bit = self.mask(q);
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                self.amps.swap(i, i | bit);
            }
        }
    }

    pub fn z(&mut self, q: usize) {
        self.phase_on_one(q, C64::new(-1.0, 0.0));
    }

    /// Multiplies amplitudes with qubit `q` set by `phase`.
    pub fn phase_on_one(&mut self, q: usize, phase: C64) {
        let bit = self.mask(q);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a *= phase;
            }
        }
    }

    pub fn s(&mut self, q: usize) {
        self.phase_on_one(q, C64::new(0.0, 1.0));
    }

    pub fn t(&mut self, q: usize) {
        self.phase_on_one(q, C64::from_polar(1.0, core::f64::consts::FRAC_PI_4));
    }

    pub fn cnot(&mut self, control: usize, target: usize) {
        assert!(control != target, "CNOT control equals target");
        let cb = self.mask(control);
        let tb = self.mask(target);
        for i in 0..self.amps.len() {
            if i & cb != 0 && i & tb == 0 {
                self.amps.swap(i, i | tb);
            }
        }
    }

    pub fn swap(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let ab = self.mask(a);
        let bb = self.mask(b);
        for i in 0..self.amps.len() {
            if i & ab != 0 && i & bb == 0 {
                self.amps.swap(i, (i & !ab) | bb);
            }
        }
    }

    /// Applies `X^x Z^z` (Z first) to qubit `q`.
    pub fn pauli(&mut self, q: usize, z: bool, x: bool) {
        if z {
            self.z(q);
        }
        if x {
            self.x(q);
        }
    }

    /// Applies `(X^x Z^z)^dagger = Z^z X^x` to qubit `q`.
    pub fn pauli_dagger(&mut self, q: usize, z: bool, x: bool) {
        if x {
            self.x(q);
        }
        if z {
            self.z(q);
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        assert_eq!(self.n, other.n, "inner product of states with different widths");
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Probability distribution of the joint value of `qubits`, keyed by a classifier.
    pub fn distribution_by<K: Ord + Clone>(&self, classify: &impl Fn(usize) -> K) -> BTreeMap<K, f64> {
        let mut out = BTreeMap::new();
        for (i, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p > 0.0 {
                *out.entry(classify(i)).or_insert(0.0) += p;
            }
        }
        out
    }

    /// Zeroes every amplitude whose class differs from `keep`; returns the kept weight.
    /// The state is renormalised when that weight is positive.
    pub fn project_by<K: PartialEq>(&mut self, classify: &impl Fn(usize) -> K, keep: &K, renormalize: bool) -> f64 {
        let mut weight = 0.0;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if classify(i) == *keep {
                weight += a.norm_sqr();
            } else {
                *a = C64::new(0.0, 0.0);
            }
        }
        if renormalize && weight > 0.0 {
            let inv = 1.0 / libm::sqrt(weight);
            for a in &mut self.amps {
                *a *= inv;
            }
        }
        weight
    }

    /// Samples from a keyed distribution by inverse CDF over the sorted keys.
    pub fn sample_by<K: Ord + Clone>(&mut self, classify: &impl Fn(usize) -> K, rng: &mut SplitRng) -> K {
        let dist = self.distribution_by(classify);
        let key = sample_sorted(&dist, rng);
        self.project_by(classify, &key, true);
        key
    }

    /// Standard-basis measurement of `qubits`, jointly, collapsing the state.
    pub fn measure(&mut self, qubits: &[usize], rng: &mut SplitRng) -> Result<BitVec, StateError> {
        self.check_qubits(qubits)?;
        let masks = self.masks(qubits);
        Ok(self.sample_by(&|i| bits_by_masks(i, &masks), rng))
    }

    fn masks(&self, qubits: &[usize]) -> Vec<usize> {
        qubits.iter().map(|&q| self.mask(q)).collect()
    }

    /// Projects `qubits` onto `outcome`; returns its probability. Renormalises when positive.
    pub fn project(&mut self, qubits: &[usize], outcome: &BitVec) -> Result<f64, StateError> {
        self.check_qubits(qubits)?;
        let n = self.n;
        let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n - 1 - q)).collect();
        let want: Vec<bool> = outcome.iter().collect();
        Ok(self.project_by(&|i| masks.iter().zip(&want).all(|(m, w)| (i & m != 0) == *w), &true, true))
    }

    pub fn outcome_distribution(&self, qubits: &[usize]) -> Result<BTreeMap<BitVec, f64>, StateError> {
        self.check_qubits(qubits)?;
        let masks = self.masks(qubits);
        Ok(self.distribution_by(&|i| bits_by_masks(i, &masks)))
    }

    /// Reduced density matrix on `keep` (in that order), row-major.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix, StateError> {
        self.check_qubits(keep)?;
        let rest: Vec<usize> = (0..self.n).filter(|q| !keep.contains(q)).collect();
        let ordered = self.permute(&[keep, &rest].concat())?;
        let dk = 1usize << keep.len();
        let dr = 1usize << rest.len();
        let mut data = alloc::vec![C64::new(0.0, 0.0); dk * dk];
        for a in 0..dk {
            for b in 0..dk {
                let mut acc = C64::new(0.0, 0.0);
                for e in 0..dr {
                    acc += ordered.amps[a * dr + e] * ordered.amps[b * dr + e].conj();
                }
                data[a * dk + b] = acc;
            }
        }
        Ok(DensityMatrix { dim: dk, data })
    }

    /// Text dump: one `bitstring re im` line per amplitude with modulus at least 1e-12.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() >= DUMP_CUTOFF {
                let label = BitVec::from_u64(i as u64, self.n);
                let _ = writeln!(out, "{} {:.15e} {:.15e}", label, a.re, a.im);
            }
        }
        out
    }
}

fn bits_by_masks(i: usize, masks: &[usize]) -> BitVec {
    masks.iter().map(|m| i & m != 0).collect()
}

/// Draws a key by inverse CDF over a sorted distribution. Weights need not be normalised.
pub fn sample_sorted<K: Ord + Clone>(dist: &BTreeMap<K, f64>, rng: &mut SplitRng) -> K {
    let total: f64 = dist.values().sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (k, p) in dist {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(k);
        if u < acc {
            return k.clone();
        }
    }
    last.expect("sampling from an empty distribution").clone()
}

/// `|<a|b>|^2`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm_sqr()
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<C64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scaled(&self, f: f64) -> DensityMatrix {
        DensityMatrix { dim: self.dim, data: self.data.iter().map(|x| x * f).collect() }
    }

    pub fn add(&mut self, other: &DensityMatrix) {
        assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Largest entrywise modulus of the difference.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Fidelity `<psi|rho|psi>` against a pure state.
    pub fn fidelity_with(&self, psi: &StateVector) -> f64 {
        assert_eq!(self.dim, psi.amplitudes().len());
        let v = psi.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..self.dim {
            for b in 0..self.dim {
                acc += v[a].conj() * self.data[a * self.dim + b] * v[b];
            }
        }
        acc.re
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn big_endian_labelling() {
        let mut s = StateVector::zero(3).unwrap();
        s.x(0);
        assert!(close(s.amplitude(0b100), c(1.0, 0.0)));
        assert_eq!(s.dump(), "100 1.000000000000000e0 0.000000000000000e0\n");
    }

    #[test]
    fn bell_state_and_measurement() {
        let mut s = StateVector::zero(2).unwrap();
        s.h(0);
        s.cnot(0, 1);
        let d = s.outcome_distribution(&[0, 1]).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[&BitVec::parse("00").unwrap()] - 0.5).abs() < 1e-12);
        let mut rng = SplitRng::new(1);
        let out = s.clone().measure(&[0, 1], &mut rng).unwrap();
        assert!(out.get(0) == out.get(1));
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(StateVector::zero(23), Err(StateError::CapExceeded { .. })));
        let a = StateVector::zero_with_cap(2, 2).unwrap();
        assert!(a.tensor(&StateVector::zero_with_cap(1, 2).unwrap()).is_err());
    }

    #[test]
    fn rejects_unnormalised_input() {
        let amps = alloc::vec![c(1.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(StateVector::from_amplitudes(amps), Err(StateError::NotNormalized(_))));
    }

    #[test]
    fn swap_and_permute_agree() {
        let mut rng = SplitRng::new(4);
        let s = StateVector::random(3, &mut rng).unwrap();
        let mut a = s.clone();
        a.swap(0, 2);
        let b = s.permute(&[2, 1, 0]).unwrap();
        assert!((fidelity(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gate_identities() {
        let mut rng = SplitRng::new(8);
        let s = StateVector::random(2, &mut rng).unwrap();
        let mut a = s.clone();
        a.h(0);
        a.z(0);
        a.h(0);
        let mut b = s.clone();
        b.x(0);
        assert!((fidelity(&a, &b) - 1.0).abs() < 1e-12);
        let mut t = s.clone();
        t.t(1);
        t.t(1);
        let mut ss = s.clone();
        ss.s(1);
        assert!(t.amplitudes().iter().zip(ss.amplitudes()).all(|(x, y)| close(*x, *y)));
        let mut g = s.clone();
        g.apply_1q(1, &gates::t());
        let mut t1 = s.clone();
        t1.t(1);
        assert!(g.amplitudes().iter().zip(t1.amplitudes()).all(|(x, y)| close(*x, *y)));
    }

    #[test]
    fn reduced_density_of_bell_is_mixed() {
        let mut s = StateVector::zero(2).unwrap();
        s.h(0);
        s.cnot(0, 1);
        let rho = s.reduced_density(&[1]).unwrap();
        assert!(close(rho.data[0], c(0.5, 0.0)));
        assert!(close(rho.data[1], c(0.0, 0.0)));
        assert!(close(rho.trace(), c(1.0, 0.0)));
    }

    #[test]
    fn sampling_is_inverse_cdf() {
        let mut d = BTreeMap::new();
        d.insert(0u8, 0.25);
        d.insert(1u8, 0.75);
        let mut counts = [0usize; 2];
        let mut rng = SplitRng::new(3);
        for _ in 0..4000 {
            counts[sample_sorted(&d, &mut rng) as usize] += 1;
        }
        assert!((counts[0] as f64 - 1000.0).abs() < 3.0 * (4000.0f64 * 0.25 * 0.75).sqrt());
    }
}
