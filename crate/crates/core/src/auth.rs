//! Coset authentication of qubits.
//!
//! A key holds a subspace `S` of dimension `lambda` in `GF(2)^(2 lambda + 1)`,
//! a vector `Delta` outside `S` and a Pauli pad `(x_i, z_i)` per logical
//! qubit. Logical `|b>` becomes `X^x Z^z |S + b Delta>` on a block of
//! `p = 2 lambda + 1` qubits. Blocks are laid out in place of the logical
//! qubit they encode.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::f2::{least_coset_complement, random_subspace, sample_coset_complement, BitVec, Subspace};
use crate::rng::SplitRng;
use crate::statevec::{StateError, StateVector, C64};
use crate::teleport::Pauli;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuthError {
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Decoded bits, or the rejection symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    pub bits: BitVec,
    pub bot: bool,
}

impl Word {
    pub fn ok(bits: BitVec) -> Word {
        Word { bits, bot: false }
    }

    pub fn bottom(len: usize) -> Word {
        Word { bits: BitVec::zeros(len), bot: true }
    }

    pub fn is_bot(&self) -> bool {
        self.bot
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuthKey {
    pub lambda: usize,
    pub n: usize,
    pub s: Subspace,
    pub delta: BitVec,
    pub x: Vec<BitVec>,
    pub z: Vec<BitVec>,
    s_delta: Subspace,
    s_hat: Subspace,
    delta_hat: BitVec,
}

impl AuthKey {
    /// Assembles and validates a key.
    pub fn new(lambda: usize, s: Subspace, delta: BitVec, x: Vec<BitVec>, z: Vec<BitVec>) -> Result<AuthKey, AuthError> {
        let p = 2 * lambda + 1;
        if lambda == 0 {
            return Err(AuthError::InvalidKey("lambda must be positive".into()));
        }
        if s.ambient_dim() != p || s.dim() != lambda {
            return Err(AuthError::InvalidKey(format!(
                "S must have dimension {lambda} in GF(2)^{p}, got {} in GF(2)^{}",
                s.dim(),
                s.ambient_dim()
            )));
        }
        if delta.len() != p || s.contains(&delta) {
            return Err(AuthError::InvalidKey("Delta must lie outside S".into()));
        }
        if x.len() != z.len() || x.iter().chain(&z).any(|v| v.len() != p) {
            return Err(AuthError::InvalidKey("pads must be p-bit vectors, one x and one z per qubit".into()));
        }
        let s_delta = s.extend_by(&delta);
        let s_hat = s_delta.orthogonal_complement();
        let delta_hat = least_coset_complement(&s_hat, &s.orthogonal_complement());
        Ok(AuthKey { lambda, n: x.len(), s, delta, x, z, s_delta, s_hat, delta_hat })
    }

    pub fn p(&self) -> usize {
        2 * self.lambda + 1
    }

    /// `S + Delta` span.
    pub fn s_delta(&self) -> &Subspace {
        &self.s_delta
    }

    /// `(S_Delta)^perp`.
    pub fn s_hat(&self) -> &Subspace {
        &self.s_hat
    }

    /// Fixed representative of `S^perp` outside `(S_Delta)^perp`.
    pub fn delta_hat(&self) -> &BitVec {
        &self.delta_hat
    }

    /// Encoding of logical `|b>` on block `block`, as `(p-bit value, amplitude)` pairs.
    pub fn block_encoding(&self, block: usize, b: bool) -> Vec<(u64, C64)> {
        let elems = self.s.elements();
        let amp = 1.0 / libm::sqrt(elems.len() as f64);
        elems
            .into_iter()
            .map(|s| {
                let mut v = s;
                if b {
                    v.xor_assign(&self.delta);
                }
                let sign = if self.z[block].dot(&v) { -amp } else { amp };
                v.xor_assign(&self.x[block]);
                (v.to_u64(), C64::new(sign, 0.0))
            })
            .collect()
    }

    /// Decoding table of one block: index is the block's bit string.
    pub fn block_table(&self, theta: bool, pad: &BitVec) -> Vec<Option<bool>> {
        let p = self.p();
        (0u64..1 << p)
            .map(|v| {
                let c = BitVec::from_u64(v, p).xor(pad);
                let (sub, rep) = if theta { (&self.s_hat, &self.delta_hat) } else { (&self.s, &self.delta) };
                if sub.contains(&c) {
                    Some(false)
                } else if sub.contains(&c.xor(rep)) {
                    Some(true)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Samples a key for `n` logical qubits.
pub fn keygen(lambda: usize, n: usize, rng: &mut SplitRng) -> AuthKey {
    let p = 2 * lambda + 1;
    let s = random_subspace(p, lambda, rng);
    let delta = sample_coset_complement(&s, &Subspace::full(p), rng);
    let x = (0..n).map(|_| BitVec::random(p, rng)).collect();
    let z = (0..n).map(|_| BitVec::random(p, rng)).collect();
    AuthKey::new(lambda, s, delta, x, z).expect("sampled key is valid")
}

/// Encodes the listed qubits of `state`, logical qubit `k` with block `blocks[k]`.
///
/// Each encoded qubit is replaced in place by `p` qubits.
pub fn enc_blocks(key: &AuthKey, state: &StateVector, wires: &[(usize, usize)]) -> Result<StateVector, AuthError> {
    let n = state.num_qubits();
    state.check_qubits(&wires.iter().map(|w| w.0).collect::<Vec<_>>())?;
    if let Some(&(_, b)) = wires.iter().find(|w| w.1 >= key.n) {
        return Err(AuthError::Length(format!("block {b} not in key of {} blocks", key.n)));
    }
    let p = key.p();
    let new_n = n + wires.len() * (p - 1);
    if new_n > state.cap() {
        return Err(StateError::CapExceeded { requested: new_n, cap: state.cap() }.into());
    }
    let block_of: BTreeMap<usize, usize> = wires.iter().copied().collect();
    let tables: BTreeMap<usize, [Vec<(u64, C64)>; 2]> = wires
        .iter()
        .map(|&(_, b)| (b, [key.block_encoding(b, false), key.block_encoding(b, true)]))
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); 1usize << new_n];
    for (idx, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let mut partial: Vec<(usize, C64)> = vec![(0, *amp)];
        for q in 0..n {
            let bit = state.bit_of(idx, q);
            match block_of.get(&q) {
                None => {
                    for e in &mut partial {
                        e.0 = (e.0 << 1) | bit as usize;
                    }
                }
                Some(b) => {
                    let enc = &tables[b][bit as usize];
                    partial = partial
                        .iter()
                        .flat_map(|&(i, a)| enc.iter().map(move |&(v, c)| ((i << p) | v as usize, a * c)))
                        .collect();
                }
            }
        }
        for (i, a) in partial {
            out[i] += a;
        }
    }
    Ok(StateVector::from_unnormalized(out, state.cap())?)
}

/// Encodes qubits `0..key.n` of `state` with blocks `0..key.n`.
pub fn enc(key: &AuthKey, state: &StateVector) -> Result<StateVector, AuthError> {
    let wires: Vec<(usize, usize)> = (0..key.n).map(|k| (k, k)).collect();
    enc_blocks(key, state, &wires)
}

/// Transversal lift of a logical frame: each `theta_i` repeats over block `i`
/// and each logical CNOT becomes `p` physical CNOTs.
pub fn eval_lift(lambda: usize, theta: &BitVec, cnots: &[(usize, usize)]) -> (BitVec, Vec<(usize, usize)>) {
    let p = 2 * lambda + 1;
    let t: BitVec = theta.iter().flat_map(|b| core::iter::repeat_n(b, p)).collect();
    let g = cnots.iter().flat_map(|&(a, b)| (0..p).map(move |k| (a * p + k, b * p + k))).collect();
    (t, g)
}

/// Pads after transporting them through the logical CNOTs.
pub fn frame_pads(key: &AuthKey, cnots: &[(usize, usize)]) -> Result<(Vec<BitVec>, Vec<BitVec>), AuthError> {
    let mut z = key.z.clone();
    let mut x = key.x.clone();
    for &(a, b) in cnots {
        if a >= key.n || b >= key.n || a == b {
            return Err(AuthError::Length(format!("CNOT ({a}, {b}) outside {} blocks", key.n)));
        }
        let za = z[a].xor(&z[b]);
        z[a] = za;
        let xb = x[a].xor(&x[b]);
        x[b] = xb;
    }
    Ok((z, x))
}

/// Per-block decoding tables for the frame `(theta, G)`.
pub fn frame_tables(key: &AuthKey, theta: &BitVec, cnots: &[(usize, usize)]) -> Result<Vec<Vec<Option<bool>>>, AuthError> {
    if theta.len() != key.n {
        return Err(AuthError::Length(format!("theta has {} bits for {} blocks", theta.len(), key.n)));
    }
    let (z, x) = frame_pads(key, cnots)?;
    Ok((0..key.n)
        .map(|i| {
            let th = theta.get(i);
            key.block_table(th, if th { &z[i] } else { &x[i] })
        })
        .collect())
}

/// Decodes a measured string in the frame `(theta, G)`.
pub fn dec(key: &AuthKey, theta: &BitVec, cnots: &[(usize, usize)], c: &BitVec) -> Result<Word, AuthError> {
    let p = key.p();
    if c.len() != key.n * p {
        return Err(AuthError::Length(format!("string has {} bits, key needs {}", c.len(), key.n * p)));
    }
    let tables = frame_tables(key, theta, cnots)?;
    let mut bits = BitVec::zeros(key.n);
    for (i, table) in tables.iter().enumerate() {
        match table[c.slice(i * p, (i + 1) * p).to_u64() as usize] {
            Some(b) => bits.set(i, b),
            None => return Ok(Word::bottom(key.n)),
        }
    }
    Ok(Word::ok(bits))
}

pub fn ver(key: &AuthKey, theta: &BitVec, cnots: &[(usize, usize)], c: &BitVec) -> Result<bool, AuthError> {
    Ok(!dec(key, theta, cnots, c)?.is_bot())
}

/// Key under which `Enc_k(P psi)` and `Enc_k'(psi)` agree up to a global phase.
pub fn pauli_key_update(key: &AuthKey, pauli: &Pauli) -> Result<AuthKey, AuthError> {
    if pauli.width() != key.n {
        return Err(AuthError::Length(format!("Pauli on {} qubits, key has {}", pauli.width(), key.n)));
    }
    let zero = BitVec::zeros(key.p());
    let x = (0..key.n)
        .map(|i| key.x[i].xor(if pauli.x.get(i) { &key.delta } else { &zero }))
        .collect();
    let z = (0..key.n)
        .map(|i| key.z[i].xor(if pauli.z.get(i) { &key.delta_hat } else { &zero }))
        .collect();
    AuthKey::new(key.lambda, key.s.clone(), key.delta.clone(), x, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::fidelity;

    #[test]
    fn delta_hat_properties() {
        let mut rng = SplitRng::new(3);
        for lambda in 1..=3 {
            let k = keygen(lambda, 1, &mut rng);
            let s_perp = k.s.orthogonal_complement();
            assert!(s_perp.contains(k.delta_hat()));
            assert!(!k.s_hat().contains(k.delta_hat()));
            assert_eq!(k.s_hat().dim(), lambda);
            assert!(k.delta.dot(k.delta_hat()));
        }
    }

    #[test]
    fn encoding_is_an_isometry() {
        let mut rng = SplitRng::new(4);
        let k = keygen(1, 2, &mut rng);
        let psi = StateVector::random(3, &mut rng).unwrap();
        let e = enc(&k, &psi).unwrap();
        assert_eq!(e.num_qubits(), 7);
        assert!((e.norm_sqr() - 1.0).abs() < 1e-12);
        let phi = StateVector::random(3, &mut rng).unwrap();
        let f = enc(&k, &phi).unwrap();
        assert!((e.inner(&f) - psi.inner(&phi)).norm() < 1e-12);
    }

    #[test]
    fn honest_strings_verify() {
        let mut rng = SplitRng::new(5);
        let k = keygen(2, 1, &mut rng);
        for b in [false, true] {
            for (v, _) in k.block_encoding(0, b) {
                let c = BitVec::from_u64(v, 5);
                let w = dec(&k, &BitVec::zeros(1), &[], &c).unwrap();
                assert_eq!(w, Word::ok(BitVec::from_bools(&[b])));
            }
        }
        let invalid = (0u64..32).filter(|&v| dec(&k, &BitVec::zeros(1), &[], &BitVec::from_u64(v, 5)).unwrap().is_bot());
        assert_eq!(invalid.count(), 32 - 8);
    }

    #[test]
    fn key_update_matches_pauli() {
        let mut rng = SplitRng::new(6);
        let k = keygen(1, 1, &mut rng);
        let psi = StateVector::random(1, &mut rng).unwrap();
        for p in Pauli::all(1) {
            let kp = pauli_key_update(&k, &p).unwrap();
            let mut ppsi = psi.clone();
            p.apply(&mut ppsi, &[0]);
            let f = fidelity(&enc(&kp, &psi).unwrap(), &enc(&k, &ppsi).unwrap());
            assert!((f - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_keys() {
        let s = Subspace::span(3, &[BitVec::parse("100").unwrap()]);
        let d = BitVec::parse("100").unwrap();
        assert!(AuthKey::new(1, s, d, vec![], vec![]).is_err());
    }
}
