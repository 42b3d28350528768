//! Quantum one-time pad teleportation.
//!
//! The outcome of a send is a Pauli key `(z, x)`: the receiver's half then
//! holds `X^x Z^z |psi>`, and [`recv`] applies the inverse Pauli.

use alloc::vec::Vec;

use crate::f2::BitVec;
use crate::rng::SplitRng;
use crate::statevec::{StateError, StateVector};

/// Pauli `X^x Z^z` on a register, one bit pair per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pauli {
    pub z: BitVec,
    pub x: BitVec,
}

impl Pauli {
    pub fn identity(n: usize) -> Pauli {
        Pauli { z: BitVec::zeros(n), x: BitVec::zeros(n) }
    }

    pub fn width(&self) -> usize {
        self.z.len()
    }

    /// The `z || x` label.
    pub fn label(&self) -> BitVec {
        self.z.concat(&self.x)
    }

    /// Splits a `z || x` label.
    pub fn from_label(label: &BitVec) -> Pauli {
        assert!(label.len() % 2 == 0, "Pauli label must have even length");
        let n = label.len() / 2;
        Pauli { z: label.slice(0, n), x: label.slice(n, 2 * n) }
    }

    /// Every Pauli on `n` qubits, ordered by label.
    pub fn all(n: usize) -> Vec<Pauli> {
        (0u64..1 << (2 * n)).map(|v| Pauli::from_label(&BitVec::from_u64(v, 2 * n))).collect()
    }

    pub fn apply(&self, s: &mut StateVector, qubits: &[usize]) {
        assert_eq!(qubits.len(), self.width());
        for (k, &q) in qubits.iter().enumerate() {
            s.pauli(q, self.z.get(k), self.x.get(k));
        }
    }

    pub fn apply_dagger(&self, s: &mut StateVector, qubits: &[usize]) {
        assert_eq!(qubits.len(), self.width());
        for (k, &q) in qubits.iter().enumerate() {
            s.pauli_dagger(q, self.z.get(k), self.x.get(k));
        }
    }
}

/// Prepares `|Phi+>` on each pair `(left[k], right[k])`, which must start in `|00>`.
pub fn prepare_epr(s: &mut StateVector, left: &[usize], right: &[usize]) {
    for (&l, &r) in left.iter().zip(right) {
        s.h(l);
        s.cnot(l, r);
    }
}

/// `n` EPR pairs as a fresh state laid out `[left..., right...]`.
pub fn epr_pairs(n: usize) -> Result<StateVector, StateError> {
    let mut s = StateVector::zero(2 * n)?;
    let left: Vec<usize> = (0..n).collect();
    let right: Vec<usize> = (n..2 * n).collect();
    prepare_epr(&mut s, &left, &right);
    Ok(s)
}

/// The coherent part of a send: `CNOT(M_k -> L_k)` then `H(M_k)`.
pub fn tp_unitary(s: &mut StateVector, msg: &[usize], left: &[usize]) {
    for (&m, &l) in msg.iter().zip(left) {
        s.cnot(m, l);
        s.h(m);
    }
}

/// Inverse of [`tp_unitary`].
pub fn tp_unitary_dagger(s: &mut StateVector, msg: &[usize], left: &[usize]) {
    for (&m, &l) in msg.iter().zip(left).rev() {
        s.h(m);
        s.cnot(m, l);
    }
}

/// Teleports `msg` through the pairs whose sender halves are `left`.
/// Measures `msg` then `left`; the result is the Pauli key `(z, x)`.
pub fn send(s: &mut StateVector, msg: &[usize], left: &[usize], rng: &mut SplitRng) -> Result<Pauli, StateError> {
    s.check_qubits(&[msg, left].concat())?;
    tp_unitary(s, msg, left);
    let z = s.measure(msg, rng)?;
    let x = s.measure(left, rng)?;
    Ok(Pauli { z, x })
}

/// Post-selected send: projects onto the given key and returns its probability.
pub fn send_forced(s: &mut StateVector, msg: &[usize], left: &[usize], key: &Pauli) -> Result<f64, StateError> {
    s.check_qubits(&[msg, left].concat())?;
    tp_unitary(s, msg, left);
    let pz = s.project(msg, &key.z)?;
    let px = s.project(left, &key.x)?;
    Ok(pz * px)
}

/// Undoes the key on the receiver halves.
pub fn recv(s: &mut StateVector, key: &Pauli, right: &[usize]) {
    key.apply_dagger(s, right);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn teleports_every_branch() {
        let mut rng = SplitRng::new(21);
        for _ in 0..5 {
            let psi = StateVector::random(2, &mut rng).unwrap();
            // layout: [msg0, ref, left0, right0]
            let joint = psi.tensor(&epr_pairs(1).unwrap()).unwrap();
            for key in Pauli::all(1) {
                let mut s = joint.clone();
                let p = send_forced(&mut s, &[0], &[2], &key).unwrap();
                assert!((p - 0.25).abs() < 1e-12);
                recv(&mut s, &key, &[3]);
                let got = s.reduced_density(&[3, 1]).unwrap();
                assert!((got.fidelity_with(&psi) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn label_round_trip() {
        let p = Pauli { z: BitVec::parse("10").unwrap(), x: BitVec::parse("01").unwrap() };
        assert_eq!(p.label().to_bit_string(), "1001");
        assert_eq!(Pauli::from_label(&p.label()), p);
        assert_eq!(Pauli::all(2).len(), 16);
    }
}
