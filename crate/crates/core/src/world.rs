//! Sparse simulator over a product of independent factors.
//!
//! Each factor is a pure state on a list of qubits, stored as sorted
//! `(key, amplitude)` pairs where bit `k` of the key is the factor's `k`-th
//! qubit. Factors merge when a gate or measurement spans them and can be
//! split again once a group of qubits is unentangled from the rest.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{Gate, GateKind};
use crate::f2::BitVec;
use crate::rng::SplitRng;
use crate::statevec::{sample_sorted, StateError, StateVector, C64, FRAC_1_SQRT_2};

pub type QubitId = usize;

/// Amplitudes below this modulus are dropped.
const DROP: f64 = 1e-13;
/// Tolerance of the product-state test.
const SPLIT_TOL: f64 = 1e-9;

/// Hard limit imposed by 64-bit keys.
pub const MAX_FACTOR_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("merged factor would have {requested} qubits, limit is {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("unknown qubit {0}")]
    UnknownQubit(QubitId),
    #[error("qubits are entangled with the rest of the world")]
    NotSeparable,
    #[error("operation not supported by the factored simulator: {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Clone, Debug)]
struct Factor {
    qubits: Vec<QubitId>,
    amps: Vec<(u64, C64)>,
}

impl Factor {
    fn normalize(&mut self) -> f64 {
        let ns: f64 = self.amps.iter().map(|(_, a)| a.norm_sqr()).sum();
        if ns > 0.0 {
            let inv = 1.0 / libm::sqrt(ns);
            for (_, a) in &mut self.amps {
                *a *= inv;
            }
        }
        ns
    }

    fn settle(&mut self, mut entries: Vec<(u64, C64)>) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut out: Vec<(u64, C64)> = Vec::with_capacity(entries.len());
        for (k, a) in entries {
            match out.last_mut() {
                Some(last) if last.0 == k => last.1 += a,
                _ => out.push((k, a)),
            }
        }
        out.retain(|e| e.1.norm() >= DROP);
        self.amps = out;
    }
}

/// Factored pure state of every qubit allocated so far.
#[derive(Clone, Debug)]
pub struct World {
    factors: Vec<Option<Factor>>,
    /// `(factor, position)` of each qubit.
    loc: Vec<(usize, usize)>,
    cap: usize,
}

impl World {
    pub fn new(cap: usize) -> World {
        World { factors: Vec::new(), loc: Vec::new(), cap: cap.min(MAX_FACTOR_WIDTH) }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn num_qubits(&self) -> usize {
        self.loc.len()
    }

    /// Widths of the live factors.
    pub fn factor_widths(&self) -> Vec<usize> {
        self.factors.iter().flatten().map(|f| f.qubits.len()).collect()
    }

    /// Number of stored amplitudes in the largest factor.
    pub fn max_entries(&self) -> usize {
        self.factors.iter().flatten().map(|f| f.amps.len()).max().unwrap_or(0)
    }

    fn push_factor(&mut self, n: usize, amps: Vec<(u64, C64)>) -> Result<Vec<QubitId>, WorldError> {
        if n > self.cap {
            return Err(WorldError::CapExceeded { requested: n, cap: self.cap });
        }
        let fid = self.factors.len();
        let ids: Vec<QubitId> = (self.loc.len()..self.loc.len() + n).collect();
        for (pos, _) in ids.iter().enumerate() {
            self.loc.push((fid, pos));
        }
        let mut f = Factor { qubits: ids.clone(), amps: Vec::new() };
        f.settle(amps);
        self.factors.push(Some(f));
        Ok(ids)
    }

    /// Adds `n` qubits in `|0>`, each its own factor.
    pub fn alloc(&mut self, n: usize) -> Vec<QubitId> {
        (0..n).flat_map(|_| self.push_factor(1, vec![(0, C64::new(1.0, 0.0))]).unwrap()).collect()
    }

    /// Adds a sparse state as one factor; bit `k` of each key is the `k`-th returned id.
    pub fn add_entries(&mut self, n: usize, entries: Vec<(u64, C64)>) -> Result<Vec<QubitId>, WorldError> {
        self.push_factor(n, entries)
    }

    /// Adds a dense state as one factor; qubit `k` of `s` becomes the `k`-th returned id.
    pub fn add_state(&mut self, s: &StateVector) -> Result<Vec<QubitId>, WorldError> {
        let n = s.num_qubits();
        let amps = s
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() >= DROP)
            .map(|(idx, a)| {
                let key = (0..n).fold(0u64, |acc, k| acc | ((s.bit_of(idx, k) as u64) << k));
                (key, *a)
            })
            .collect();
        self.push_factor(n, amps)
    }

    fn factor(&self, q: QubitId) -> Result<usize, WorldError> {
        self.loc.get(q).map(|l| l.0).ok_or(WorldError::UnknownQubit(q))
    }

    fn bit(&self, q: QubitId) -> u64 {
        1u64 << self.loc[q].1
    }

    /// Merges the factors holding `qs` into one and returns its index.
    pub fn merge(&mut self, qs: &[QubitId]) -> Result<usize, WorldError> {
        let mut fids: Vec<usize> = qs.iter().map(|&q| self.factor(q)).collect::<Result<_, _>>()?;
        fids.sort_unstable();
        fids.dedup();
        let target = fids[0];
        let width: usize = fids.iter().map(|&f| self.factors[f].as_ref().unwrap().qubits.len()).sum();
        if width > self.cap {
            return Err(WorldError::CapExceeded { requested: width, cap: self.cap });
        }
        for &other in &fids[1..] {
            let b = self.factors[other].take().unwrap();
            let a = self.factors[target].as_mut().unwrap();
            let shift = a.qubits.len();
            let mut amps = Vec::with_capacity(a.amps.len() * b.amps.len());
            for &(kb, ab) in &b.amps {
                for &(ka, aa) in &a.amps {
                    amps.push((ka | (kb << shift), aa * ab));
                }
            }
            for (pos, &q) in b.qubits.iter().enumerate() {
                self.loc[q] = (target, shift + pos);
            }
            a.qubits.extend(&b.qubits);
            a.settle(amps);
        }
        Ok(target)
    }

    fn map_keys(&mut self, fid: usize, f: impl Fn(u64) -> u64) {
        let fac = self.factors[fid].as_mut().unwrap();
        for e in &mut fac.amps {
            e.0 = f(e.0);
        }
        fac.amps.sort_unstable_by_key(|e| e.0);
    }

    pub fn x(&mut self, q: QubitId) {
        let (fid, b) = (self.loc[q].0, self.bit(q));
        self.map_keys(fid, |k| k ^ b);
    }

    fn phase(&mut self, q: QubitId, ph: C64) {
        let (fid, b) = (self.loc[q].0, self.bit(q));
        for e in &mut self.factors[fid].as_mut().unwrap().amps {
            if e.0 & b != 0 {
                e.1 *= ph;
            }
        }
    }

    pub fn z(&mut self, q: QubitId) {
        self.phase(q, C64::new(-1.0, 0.0));
    }

    pub fn s(&mut self, q: QubitId) {
        self.phase(q, C64::new(0.0, 1.0));
    }

    pub fn t(&mut self, q: QubitId) {
        self.phase(q, C64::from_polar(1.0, core::f64::consts::FRAC_PI_4));
    }

    pub fn h(&mut self, q: QubitId) {
        let (fid, b) = (self.loc[q].0, self.bit(q));
        let fac = self.factors[fid].as_mut().unwrap();
        let mut out = Vec::with_capacity(fac.amps.len() * 2);
        for &(k, a) in &fac.amps {
            let a = a * FRAC_1_SQRT_2;
            out.push((k & !b, a));
            out.push((k | b, if k & b != 0 { -a } else { a }));
        }
        fac.settle(out);
    }

    /// `X^x Z^z` (Z first).
    pub fn pauli(&mut self, q: QubitId, z: bool, x: bool) {
        if z {
            self.z(q);
        }
        if x {
            self.x(q);
        }
    }

    /// `Z^z X^x`, the inverse of [`World::pauli`].
    pub fn pauli_dagger(&mut self, q: QubitId, z: bool, x: bool) {
        if x {
            self.x(q);
        }
        if z {
            self.z(q);
        }
    }

    pub fn cnot(&mut self, c: QubitId, t: QubitId) -> Result<(), WorldError> {
        let fid = self.merge(&[c, t])?;
        let (cb, tb) = (self.bit(c), self.bit(t));
        self.map_keys(fid, |k| if k & cb != 0 { k ^ tb } else { k });
        Ok(())
    }

    pub fn swap(&mut self, a: QubitId, b: QubitId) {
        // relabel instead of moving amplitudes
        self.loc.swap(a, b);
        for q in [a, b] {
            let (fid, pos) = self.loc[q];
            self.factors[fid].as_mut().unwrap().qubits[pos] = q;
        }
    }

    /// Applies a plain circuit gate on world qubits.
    pub fn gate(&mut self, g: &Gate, map: &impl Fn(usize) -> QubitId) -> Result<(), WorldError> {
        if !g.controls.is_empty() {
            return Err(WorldError::Unsupported("quantum-controlled gates"));
        }
        let w: Vec<QubitId> = g.wires.iter().map(|&x| map(x)).collect();
        match g.kind {
            GateKind::X => self.x(w[0]),
            GateKind::Z => self.z(w[0]),
            GateKind::H => self.h(w[0]),
            GateKind::S => self.s(w[0]),
            GateKind::T => self.t(w[0]),
            GateKind::Cnot => self.cnot(w[0], w[1])?,
            GateKind::Swap => self.swap(w[0], w[1]),
        }
        Ok(())
    }

    /// Factor index and key masks of `qs`, all of which must share one factor.
    pub fn locate(&self, qs: &[QubitId]) -> Result<(usize, Vec<u64>), WorldError> {
        let fid = self.factor(qs[0])?;
        let mut masks = Vec::with_capacity(qs.len());
        for &q in qs {
            if self.factor(q)? != fid {
                return Err(WorldError::NotSeparable);
            }
            masks.push(self.bit(q));
        }
        Ok((fid, masks))
    }

    pub fn factor_of(&self, q: QubitId) -> Result<usize, WorldError> {
        self.factor(q)
    }

    pub fn factor_qubits(&self, fid: usize) -> &[QubitId] {
        &self.factors[fid].as_ref().unwrap().qubits
    }

    pub fn factor_entries(&self, fid: usize) -> &[(u64, C64)] {
        &self.factors[fid].as_ref().unwrap().amps
    }

    /// Key mask of a qubit inside its factor.
    pub fn mask_of(&self, q: QubitId) -> u64 {
        self.bit(q)
    }

    pub fn distribution_by<K: Ord + Clone>(&self, fid: usize, classify: &impl Fn(u64) -> K) -> BTreeMap<K, f64> {
        let mut out = BTreeMap::new();
        for &(k, a) in self.factor_entries(fid) {
            *out.entry(classify(k)).or_insert(0.0) += a.norm_sqr();
        }
        out
    }

    /// Keeps entries whose class is `keep`; returns their weight and renormalises when positive.
    pub fn project_by<K: PartialEq>(&mut self, fid: usize, classify: &impl Fn(u64) -> K, keep: &K) -> f64 {
        let fac = self.factors[fid].as_mut().unwrap();
        fac.amps.retain(|(k, _)| classify(*k) == *keep);
        fac.normalize()
    }

    /// Joint standard-basis measurement of `qs`.
    pub fn measure(&mut self, qs: &[QubitId], rng: &mut SplitRng) -> Result<BitVec, WorldError> {
        let dist = self.measure_distribution(qs)?;
        let out = sample_sorted(&dist, rng);
        self.project(qs, &out)?;
        Ok(out)
    }

    pub fn measure_distribution(&mut self, qs: &[QubitId]) -> Result<BTreeMap<BitVec, f64>, WorldError> {
        let fid = self.merge(qs)?;
        let masks: Vec<u64> = qs.iter().map(|&q| self.bit(q)).collect();
        Ok(self.distribution_by(fid, &|k| masks.iter().map(|m| k & m != 0).collect::<BitVec>()))
    }

    pub fn project(&mut self, qs: &[QubitId], outcome: &BitVec) -> Result<f64, WorldError> {
        let fid = self.merge(qs)?;
        let masks: Vec<u64> = qs.iter().map(|&q| self.bit(q)).collect();
        let want: Vec<bool> = outcome.iter().collect();
        Ok(self.project_by(fid, &|k| masks.iter().zip(&want).all(|(m, w)| (k & m != 0) == *w), &true))
    }

    /// Splits `group` off its factor when the state is a product across the cut.
    pub fn try_split(&mut self, group: &[QubitId]) -> Result<bool, WorldError> {
        let (fid, _) = self.locate(group)?;
        let fac = self.factors[fid].as_ref().unwrap();
        if fac.qubits.len() == group.len() {
            return Ok(true);
        }
        let gpos: Vec<usize> = group.iter().map(|&q| self.loc[q].1).collect();
        let rpos: Vec<usize> = (0..fac.qubits.len()).filter(|p| !gpos.contains(p)).collect();
        let compress = |k: u64, pos: &[usize]| pos.iter().enumerate().fold(0u64, |acc, (i, &p)| acc | (((k >> p) & 1) << i));
        let mut rows: BTreeMap<u64, BTreeMap<u64, C64>> = BTreeMap::new();
        for &(k, a) in &fac.amps {
            rows.entry(compress(k, &gpos)).or_default().insert(compress(k, &rpos), a);
        }
        let row_norm = |r: &BTreeMap<u64, C64>| r.values().map(|a| a.norm_sqr()).sum::<f64>();
        let (_, r0) = rows
            .iter()
            .max_by(|a, b| row_norm(a.1).partial_cmp(&row_norm(b.1)).unwrap())
            .ok_or(WorldError::NotSeparable)?;
        let n0 = libm::sqrt(row_norm(r0));
        let (&piv, &pa) = r0.iter().max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap()).unwrap();
        let mut coeffs: Vec<(u64, C64)> = Vec::new();
        for (&g, row) in &rows {
            let ratio = row.get(&piv).copied().unwrap_or(C64::new(0.0, 0.0)) / pa;
            for (c, a) in row {
                let want = r0.get(c).copied().unwrap_or(C64::new(0.0, 0.0)) * ratio;
                if (a - want).norm() > SPLIT_TOL {
                    return Ok(false);
                }
            }
            for (c, a0) in r0 {
                if !row.contains_key(c) && (a0 * ratio).norm() > SPLIT_TOL {
                    return Ok(false);
                }
            }
            coeffs.push((g, ratio * n0));
        }
        let rest: Vec<(u64, C64)> = r0.iter().map(|(&c, &a)| (c, a / n0)).collect();
        let rest_qubits: Vec<QubitId> = rpos.iter().map(|&p| fac.qubits[p]).collect();
        let group_qubits: Vec<QubitId> = gpos.iter().map(|&p| fac.qubits[p]).collect();
        let mut rest_f = Factor { qubits: rest_qubits, amps: Vec::new() };
        rest_f.settle(rest);
        rest_f.normalize();
        let mut group_f = Factor { qubits: group_qubits, amps: Vec::new() };
        group_f.settle(coeffs);
        group_f.normalize();
        for (pos, &q) in rest_f.qubits.iter().enumerate() {
            self.loc[q] = (fid, pos);
        }
        let gid = self.factors.len();
        for (pos, &q) in group_f.qubits.iter().enumerate() {
            self.loc[q] = (gid, pos);
        }
        self.factors[fid] = Some(rest_f);
        self.factors.push(Some(group_f));
        Ok(true)
    }

    /// Dense state of `qs` (in that order), which must be unentangled from everything else.
    pub fn state_of(&mut self, qs: &[QubitId]) -> Result<StateVector, WorldError> {
        let fid = self.merge(qs)?;
        if !self.try_split(qs)? {
            return Err(WorldError::NotSeparable);
        }
        let fid = self.factor(qs[0]).unwrap_or(fid);
        let n = qs.len();
        let mut amps = vec![C64::new(0.0, 0.0); 1usize << n];
        let masks: Vec<u64> = qs.iter().map(|&q| self.bit(q)).collect();
        for &(k, a) in self.factor_entries(fid) {
            let idx = masks.iter().fold(0usize, |acc, m| (acc << 1) | (k & m != 0) as usize);
            amps[idx] += a;
        }
        Ok(StateVector::from_unnormalized(amps, n.max(crate::statevec::DEFAULT_CAP))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::fidelity;

    #[test]
    fn matches_dense_simulation() {
        let mut rng = SplitRng::new(12);
        let psi = StateVector::random(3, &mut rng).unwrap();
        let mut w = World::new(40);
        let a = w.add_state(&psi).unwrap();
        let b = w.alloc(2);
        let mut dense = psi.tensor(&StateVector::zero(2).unwrap()).unwrap();
        let ops: [(u8, usize, usize); 8] = [(0, 0, 3), (1, 3, 0), (2, 4, 0), (0, 3, 4), (3, 1, 0), (4, 2, 0), (1, 4, 0), (0, 2, 1)];
        let ids: Vec<QubitId> = a.iter().chain(&b).copied().collect();
        for (op, p, q) in ops {
            match op {
                0 => {
                    w.cnot(ids[p], ids[q]).unwrap();
                    dense.cnot(p, q);
                }
                1 => {
                    w.h(ids[p]);
                    dense.h(p);
                }
                2 => {
                    w.x(ids[p]);
                    dense.x(p);
                }
                3 => {
                    w.t(ids[p]);
                    dense.t(p);
                }
                _ => {
                    w.s(ids[p]);
                    dense.s(p);
                }
            }
        }
        let got = w.state_of(&ids).unwrap();
        assert!((fidelity(&got, &dense) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_detects_products() {
        let mut w = World::new(10);
        let q = w.alloc(3);
        w.h(q[0]);
        w.cnot(q[0], q[1]).unwrap();
        w.h(q[2]);
        w.cnot(q[1], q[2]).unwrap();
        w.cnot(q[1], q[2]).unwrap();
        assert!(!w.try_split(&[q[0]]).unwrap());
        assert!(w.try_split(&[q[2]]).unwrap());
        assert_ne!(w.factor_of(q[2]).unwrap(), w.factor_of(q[0]).unwrap());
        let mut rng = SplitRng::new(1);
        let m = w.measure(&[q[0]], &mut rng).unwrap();
        assert!(w.try_split(&[q[0]]).unwrap());
        let s1 = w.state_of(&[q[1]]).unwrap();
        assert!((s1.amplitude(m.get(0) as u64).norm() - 1.0).abs() < 1e-12);
        let s2 = w.state_of(&[q[2]]).unwrap();
        assert!((s2.amplitude(1).re - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cap_applies_to_merges() {
        let mut w = World::new(2);
        let q = w.alloc(3);
        w.cnot(q[0], q[1]).unwrap();
        assert!(matches!(w.cnot(q[1], q[2]), Err(WorldError::CapExceeded { .. })));
    }

    #[test]
    fn swap_relabels() {
        let mut w = World::new(10);
        let q = w.alloc(2);
        w.x(q[0]);
        w.swap(q[0], q[1]);
        let s = w.state_of(&[q[0], q[1]]).unwrap();
        assert!((s.amplitude(0b01).re - 1.0).abs() < 1e-12);
    }
}
