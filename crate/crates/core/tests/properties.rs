use plmforge_core::auth::{dec, enc, eval_lift, keygen, pauli_key_update, ver};
use plmforge_core::circuit::{direct_weighted_marginals, Circuit, GateKind};
use plmforge_core::f2::{least_coset_complement, random_subspace, BitVec, Subspace};
use plmforge_core::plm::{compile, plm_weighted_marginals};
use plmforge_core::rng::SplitRng;
use plmforge_core::statevec::{fidelity, StateVector};
use plmforge_core::teleport::Pauli;
use plmforge_core::world::World;
use proptest::prelude::*;

fn bits(n: usize) -> impl Strategy<Value = BitVec> {
    proptest::collection::vec(any::<bool>(), n).prop_map(|v| BitVec::from_bools(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn span_is_canonical(gens in proptest::collection::vec(bits(6), 0..6), perm_seed in any::<u64>()) {
        let a = Subspace::span(6, &gens);
        let mut shuffled = gens.clone();
        let mut rng = SplitRng::new(perm_seed);
        for k in (1..shuffled.len()).rev() {
            let j = rng.below(k + 1);
            shuffled.swap(k, j);
        }
        if shuffled.len() >= 2 {
            let extra = shuffled[0].xor(&shuffled[1]);
            shuffled.push(extra);
        }
        prop_assert_eq!(&a, &Subspace::span(6, &shuffled));
        for g in &gens {
            prop_assert!(a.contains(g));
        }
    }

    #[test]
    fn complement_dimension_and_orthogonality(n in 1usize..8, seed in any::<u64>()) {
        let mut rng = SplitRng::new(seed);
        let k = rng.below(n + 1);
        let s = random_subspace(n, k, &mut rng);
        let c = s.orthogonal_complement();
        prop_assert_eq!(c.dim(), n - k);
        for a in s.basis() {
            for b in c.basis() {
                prop_assert!(!a.dot(b));
            }
        }
        prop_assert_eq!(c.orthogonal_complement(), s);
    }

    #[test]
    fn least_complement_is_outside_inner(seed in any::<u64>()) {
        let mut rng = SplitRng::new(seed);
        let outer = random_subspace(5, 3, &mut rng);
        let inner = Subspace::span(5, &outer.basis()[..2]);
        let v = least_coset_complement(&inner, &outer);
        prop_assert!(outer.contains(&v));
        prop_assert!(!inner.contains(&v));
        let smaller = outer.elements().into_iter().filter(|e| !inner.contains(e)).min().unwrap();
        prop_assert_eq!(v, smaller);
    }

    #[test]
    fn encoding_preserves_inner_products(lambda in 1usize..3, n in 1usize..3, seed in any::<u64>()) {
        let mut rng = SplitRng::new(seed);
        let key = keygen(lambda, n, &mut rng);
        let a = StateVector::random(n, &mut rng).unwrap();
        let b = StateVector::random(n, &mut rng).unwrap();
        let (ea, eb) = (enc(&key, &a).unwrap(), enc(&key, &b).unwrap());
        prop_assert!((ea.inner(&eb) - a.inner(&b)).norm() < 1e-10);
    }

    #[test]
    fn honest_support_decodes_in_any_frame(lambda in 1usize..3, seed in any::<u64>(), theta in bits(2), basis in 0u64..4) {
        let mut rng = SplitRng::new(seed);
        let key = keygen(lambda, 2, &mut rng);
        let cnots: Vec<(usize, usize)> = (0..rng.below(4)).map(|_| if rng.bit() { (0, 1) } else { (1, 0) }).collect();
        let logical = StateVector::basis(2, basis).unwrap();
        let mut s = enc(&key, &logical).unwrap();
        let (t, g) = eval_lift(lambda, &theta, &cnots);
        for &(a, b) in &g {
            s.cnot(a, b);
        }
        for q in 0..t.len() {
            if t.get(q) {
                s.h(q);
            }
        }
        let mut plain = BitVec::from_u64(basis, 2);
        for &(a, b) in &cnots {
            let v = plain.get(b) ^ plain.get(a);
            plain.set(b, v);
        }
        let p = 2 * lambda + 1;
        for (idx, amp) in s.amplitudes().iter().enumerate() {
            if amp.norm_sqr() < 1e-20 {
                continue;
            }
            let c = BitVec::from_u64(idx as u64, 2 * p);
            let w = dec(&key, &theta, &cnots, &c).unwrap();
            prop_assert!(!w.bot);
            for i in 0..2 {
                if !theta.get(i) {
                    prop_assert_eq!(w.bits.get(i), plain.get(i));
                }
            }
        }
    }

    #[test]
    fn key_update_keeps_verification(lambda in 1usize..3, seed in any::<u64>(), z in any::<bool>(), x in any::<bool>(), th in any::<bool>()) {
        let mut rng = SplitRng::new(seed);
        let key = keygen(lambda, 1, &mut rng);
        let pauli = Pauli { z: BitVec::from_bools(&[z]), x: BitVec::from_bools(&[x]) };
        let updated = pauli_key_update(&key, &pauli).unwrap();
        let theta = BitVec::from_bools(&[th]);
        for _ in 0..32 {
            let c = BitVec::random(2 * lambda + 1, &mut rng);
            prop_assert_eq!(ver(&key, &theta, &[], &c).unwrap(), ver(&updated, &theta, &[], &c).unwrap());
        }
    }

    #[test]
    fn world_agrees_with_dense(ops in proptest::collection::vec((0u8..6, 0usize..4, 0usize..4), 0..24), seed in any::<u64>()) {
        let mut rng = SplitRng::new(seed);
        let psi = StateVector::random_product(4, &mut rng).unwrap();
        let mut dense = psi.clone();
        let mut w = World::new(8);
        let ids: Vec<usize> = (0..4).flat_map(|q| {
            let single = psi_qubit(&psi, q);
            w.add_state(&single).unwrap()
        }).collect();
        for (op, a, b) in ops {
            match op {
                0 => { w.h(ids[a]); dense.h(a); }
                1 => { w.t(ids[a]); dense.t(a); }
                2 => { w.s(ids[a]); dense.s(a); }
                3 => { w.x(ids[a]); dense.x(a); }
                4 if a != b => { w.cnot(ids[a], ids[b]).unwrap(); dense.cnot(a, b); }
                5 if a != b => { w.swap(ids[a], ids[b]); dense.swap(a, b); }
                _ => {}
            }
        }
        let got = w.state_of(&ids).unwrap();
        prop_assert!((fidelity(&got, &dense) - 1.0).abs() < 1e-9);
    }
}

/// Single-qubit marginal of a product state.
fn psi_qubit(psi: &StateVector, q: usize) -> StateVector {
    let rho = psi.reduced_density(&[q]).unwrap();
    let (a, b) = (rho.data[0], rho.data[2]);
    if a.re > 1e-12 {
        let s = a.re.sqrt();
        StateVector::from_amplitudes(vec![a / s, b / s]).unwrap()
    } else {
        StateVector::basis(1, 1).unwrap()
    }
}

fn circuit_from(ops: &[(u8, usize)], n: usize) -> Circuit {
    let mut c = Circuit::new(n, 0, 0);
    for &(op, w) in ops {
        let w = w % n;
        match op {
            0 => c.gate(GateKind::H, &[w]),
            1 => c.gate(GateKind::T, &[w]),
            2 => c.gate(GateKind::S, &[w]),
            3 => c.gate(GateKind::X, &[w]),
            _ if n > 1 => c.gate(GateKind::Cnot, &[w, (w + 1) % n]),
            _ => c.gate(GateKind::Z, &[w]),
        };
    }
    c.final_measure = (0..n).collect();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn compiled_programs_match_direct_runs(ops in proptest::collection::vec((0u8..5, 0usize..2), 1..4), n in 1usize..3, seed in any::<u64>()) {
        let mut rng = SplitRng::new(seed);
        let q = circuit_from(&ops, n);
        let p = compile(&q).unwrap();
        // S compiles to two T gadgets; wide programs are too slow to simulate densely.
        prop_assume!(p.width() <= 12);
        let input = StateVector::random(n + 1, &mut rng).unwrap();
        let none = BitVec::zeros(0);
        let want = direct_weighted_marginals(&q, &input, None, &none, &[n]).unwrap();
        let got = plm_weighted_marginals(&p, &none, &input, None).unwrap();
        for (y, (pw, rw)) in &want {
            let (pg, rg) = got.get(y).cloned().unwrap_or((0.0, rw.scaled(0.0)));
            prop_assert!((pw - pg).abs() < 1e-9);
            prop_assert!(rw.max_abs_diff(&rg) < 1e-9);
        }
    }
}
