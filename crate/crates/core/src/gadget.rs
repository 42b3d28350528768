//! Magic-state gadgets for H, CNOT and T.
//!
//! Each gadget consumes its input wires and a magic state and leaves the gate
//! applied on fresh output wires, up to a Pauli correction. Every measurement
//! is a classical function of the measured bits after a cumulative Clifford
//! frame (CNOTs followed by Hadamards), which is the form the PLM compiler
//! emits. Local wire numbering puts the inputs first, then the magic wires.

use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{Circuit, GateKind};
use crate::f2::BitVec;
use crate::func::Expr;
use crate::rng::SplitRng;
use crate::statevec::{StateError, StateVector, FRAC_1_SQRT_2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GadgetKind {
    H,
    Cnot,
    T,
}

impl GadgetKind {
    pub fn name(self) -> &'static str {
        match self {
            GadgetKind::H => "H",
            GadgetKind::Cnot => "CNOT",
            GadgetKind::T => "T",
        }
    }
}

/// Leaf of a gadget-local expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Local {
    /// Bit of a local wire.
    Wire(usize),
    /// Outcome of an earlier step of the same gadget.
    Outcome(usize),
    /// Incoming X-frame bit of an input wire.
    FrameX(usize),
    /// Incoming Z-frame bit of an input wire.
    FrameZ(usize),
}

pub type LocalExpr = Expr<Local>;

fn w(k: usize) -> LocalExpr {
    Expr::Var(Local::Wire(k))
}
fn o(k: usize) -> LocalExpr {
    Expr::Var(Local::Outcome(k))
}
fn fx(k: usize) -> LocalExpr {
    Expr::Var(Local::FrameX(k))
}
fn fz(k: usize) -> LocalExpr {
    Expr::Var(Local::FrameZ(k))
}

/// One measurement: extend the frame, then measure a one-bit function.
#[derive(Clone, Debug, PartialEq)]
pub struct GadgetStep {
    pub cnots: Vec<(usize, usize)>,
    pub hadamards: Vec<usize>,
    pub measure: LocalExpr,
}

/// Pauli correction `X^x Z^z` on one output wire.
#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub z: LocalExpr,
    pub x: LocalExpr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gadget {
    pub kind: GadgetKind,
    pub n_in: usize,
    pub n_magic: usize,
    /// Prepares the magic state on `n_magic` wires from `|0...0>`.
    pub magic_prep: Circuit,
    pub steps: Vec<GadgetStep>,
    /// Local wires measured by the gadget, in the order of its deterministic basis.
    pub measured: Vec<usize>,
    pub outputs: Vec<usize>,
    pub corrections: Vec<Correction>,
}

impl Gadget {
    pub fn n_local(&self) -> usize {
        self.n_in + self.n_magic
    }

    pub fn magic_state(&self) -> Result<StateVector, StateError> {
        let mut s = StateVector::zero(self.n_magic)?;
        let map: Vec<usize> = (0..self.n_magic).collect();
        crate::circuit::apply_circuit(&mut s, &self.magic_prep, &map, &BitVec::zeros(0), None)
            .map_err(|_| StateError::ZeroProbability)?;
        Ok(s)
    }
}

pub fn gadget(kind: GadgetKind) -> Gadget {
    match kind {
        GadgetKind::H => {
            // i=0 | j=1 k=2
            let mut prep = Circuit::new(2, 0, 0);
            prep.gate(GateKind::H, &[0]).gate(GateKind::Cnot, &[0, 1]).gate(GateKind::H, &[1]);
            Gadget {
                kind,
                n_in: 1,
                n_magic: 2,
                magic_prep: prep,
                steps: vec![
                    GadgetStep { cnots: vec![(0, 1)], hadamards: vec![0], measure: w(0) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: w(1) },
                ],
                measured: vec![0, 1],
                outputs: vec![2],
                corrections: vec![Correction {
                    z: Expr::xor2(fx(0), o(1)),
                    x: Expr::xor2(fz(0), o(0)),
                }],
            }
        }
        GadgetKind::Cnot => {
            // i=0 j=1 | k=2 l=3 m=4 s=5, pairs (k,m) and (l,s)
            let mut prep = Circuit::new(4, 0, 0);
            prep.gate(GateKind::H, &[0])
                .gate(GateKind::Cnot, &[0, 2])
                .gate(GateKind::H, &[1])
                .gate(GateKind::Cnot, &[1, 3]);
            Gadget {
                kind,
                n_in: 2,
                n_magic: 4,
                magic_prep: prep,
                steps: vec![
                    GadgetStep { cnots: vec![(0, 1), (0, 2), (1, 3)], hadamards: vec![0, 1], measure: w(0) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: w(1) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: w(2) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: w(3) },
                ],
                measured: vec![0, 1, 2, 3],
                outputs: vec![4, 5],
                corrections: vec![
                    Correction { z: Expr::xor_all(vec![fz(0), fz(1), o(0)]), x: Expr::xor2(fx(0), o(2)) },
                    Correction { z: Expr::xor2(fz(1), o(1)), x: Expr::xor_all(vec![fx(0), fx(1), o(3)]) },
                ],
            }
        }
        GadgetKind::T => {
            // i=0 | j=1 (T|+>) k=2 (S^dagger|+>) l=3 m=4 (EPR)
            let mut prep = Circuit::new(4, 0, 0);
            prep.gate(GateKind::H, &[0]).gate(GateKind::T, &[0]).gate(GateKind::H, &[1]);
            for _ in 0..3 {
                prep.gate(GateKind::S, &[1]);
            }
            prep.gate(GateKind::H, &[2]).gate(GateKind::Cnot, &[2, 3]);
            let sel = t_selector_local();
            let par = Expr::xor2(w(1), w(2));
            Gadget {
                kind,
                n_in: 1,
                n_magic: 4,
                magic_prep: prep,
                steps: vec![
                    GadgetStep { cnots: vec![(1, 0)], hadamards: vec![], measure: w(0) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: Expr::mux(sel.clone(), par.clone(), w(2)) },
                    GadgetStep { cnots: vec![(1, 3)], hadamards: vec![1, 2], measure: Expr::mux(sel.clone(), par, w(1)) },
                    GadgetStep { cnots: vec![], hadamards: vec![], measure: w(3) },
                ],
                measured: vec![0, 1, 2, 3],
                outputs: vec![4],
                corrections: vec![Correction {
                    z: Expr::xor_all(vec![fz(0), Expr::and(sel, o(1)), o(2)]),
                    x: Expr::xor_all(vec![fx(0), o(0), o(3)]),
                }],
            }
        }
    }
}

/// The T gadget's branch selector: first outcome XOR incoming X-frame bit.
pub fn t_selector_local() -> LocalExpr {
    Expr::xor2(o(0), fx(0))
}

/// Incoming Pauli frame on the gadget inputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub z: Vec<bool>,
    pub x: Vec<bool>,
}

impl Frame {
    pub fn zero(n: usize) -> Frame {
        Frame { z: vec![false; n], x: vec![false; n] }
    }
}

/// Chooses measurement outcomes: by sampling or by post-selection.
pub enum Outcomes<'a> {
    Sample(&'a mut SplitRng),
    Forced(&'a BitVec),
}

pub(crate) fn eval_local(e: &LocalExpr, bits: &impl Fn(usize) -> bool, outcomes: &[bool], frame: &Frame) -> bool {
    e.eval(&|l: &Local| match *l {
        Local::Wire(k) => bits(k),
        Local::Outcome(k) => outcomes[k],
        Local::FrameX(k) => frame.x[k],
        Local::FrameZ(k) => frame.z[k],
    })
}

/// Runs the measurement steps of `g` on `s`.
///
/// `qubit_of[k]` gives the state qubit of local wire `k` (`None` for wires
/// the steps never touch). Returns the outcomes and the product of branch
/// probabilities; with forced outcomes the state is left renormalised.
pub fn run_steps(
    g: &Gadget,
    s: &mut StateVector,
    qubit_of: &[Option<usize>],
    frame: &Frame,
    mut choose: Outcomes<'_>,
) -> Result<(BitVec, f64), StateError> {
    let q = |k: usize| qubit_of[k].expect("gadget step touches an unmapped wire");
    let mut cnots: Vec<(usize, usize)> = Vec::new();
    let mut had: Vec<usize> = Vec::new();
    let mut outs: Vec<bool> = Vec::new();
    let mut prob = 1.0;
    for step in &g.steps {
        cnots.extend(step.cnots.iter().map(|&(a, b)| (q(a), q(b))));
        had.extend(step.hadamards.iter().map(|&a| q(a)));
        for &(a, b) in &cnots {
            s.cnot(a, b);
        }
        for &h in &had {
            s.h(h);
        }
        let n = s.num_qubits();
        let classify = |idx: usize| {
            eval_local(&step.measure, &|k| idx & (1usize << (n - 1 - q(k))) != 0, &outs, frame)
        };
        let bit = match &mut choose {
            Outcomes::Sample(rng) => s.sample_by(&classify, rng),
            Outcomes::Forced(want) => {
                let b = want.get(outs.len());
                prob *= s.project_by(&classify, &b, true);
                b
            }
        };
        outs.push(bit);
        for &h in had.iter().rev() {
            s.h(h);
        }
        for &(a, b) in cnots.iter().rev() {
            s.cnot(a, b);
        }
    }
    Ok((BitVec::from_bools(&outs), prob))
}

/// Pauli corrections `(z, x)` for each output wire.
pub fn corrections(g: &Gadget, outcomes: &BitVec, frame: &Frame) -> Vec<(bool, bool)> {
    let outs: Vec<bool> = outcomes.iter().collect();
    let none = |_: usize| -> bool { unreachable!("corrections never read wires") };
    g.corrections
        .iter()
        .map(|c| (eval_local(&c.z, &none, &outs, frame), eval_local(&c.x, &none, &outs, frame)))
        .collect()
}

/// Applies `g` to `inputs` of `s` in one branch, then undoes the Pauli correction.
///
/// The magic state is appended to `s`; the result lists the output qubits.
/// With a non-zero `frame` the inputs are taken to hold `X^x Z^z` times the
/// logical state, and the corrected outputs hold the gate applied to it.
pub fn apply_gadget(
    g: &Gadget,
    s: &StateVector,
    inputs: &[usize],
    frame: &Frame,
    choose: Outcomes<'_>,
) -> Result<GadgetRun, StateError> {
    assert_eq!(inputs.len(), g.n_in);
    let n0 = s.num_qubits();
    let mut st = s.tensor(&g.magic_state()?)?;
    let qubit_of: Vec<Option<usize>> =
        (0..g.n_local()).map(|k| Some(if k < g.n_in { inputs[k] } else { n0 + k - g.n_in })).collect();
    let (outcomes, probability) = run_steps(g, &mut st, &qubit_of, frame, choose)?;
    let outputs: Vec<usize> = g.outputs.iter().map(|&k| qubit_of[k].unwrap()).collect();
    for (&qb, (z, x)) in outputs.iter().zip(corrections(g, &outcomes, frame)) {
        st.pauli_dagger(qb, z, x);
    }
    Ok(GadgetRun { state: st, outcomes, probability, outputs })
}

#[derive(Clone, Debug)]
pub struct GadgetRun {
    pub state: StateVector,
    pub outcomes: BitVec,
    pub probability: f64,
    pub outputs: Vec<usize>,
}

/// `(I ⊗ X^b Z^a)|Phi+>` on two qubits.
fn bell(a: bool, b: bool) -> StateVector {
    let mut s = StateVector::zero(2).unwrap();
    s.h(0);
    s.cnot(0, 1);
    s.pauli(1, a, b);
    s
}

/// Deterministic-outcome basis state of a gadget, on its `measured` wires.
///
/// Measuring it with the gadget's steps yields `labels` with certainty. For
/// the T gadget `selector` is the value of the branch selector.
pub fn basis_state(kind: GadgetKind, labels: &BitVec, selector: bool) -> StateVector {
    let c = |k: usize| labels.get(k);
    match kind {
        GadgetKind::H => {
            assert_eq!(labels.len(), 2);
            bell(c(0), c(1))
        }
        GadgetKind::Cnot => {
            assert_eq!(labels.len(), 4);
            // [i, k, j, l] -> [i, j, k, l]
            let pair = bell(c(0), c(2)).tensor(&bell(c(1), c(3))).unwrap();
            let mut s = pair.permute(&[0, 2, 1, 3]).unwrap();
            s.cnot(0, 1);
            s
        }
        GadgetKind::T => {
            assert_eq!(labels.len(), 4);
            let tail = if selector {
                let a = BitVec::from_bools(&[false, c(1), c(3)]).to_u64();
                let b = BitVec::from_bools(&[true, !c(1), !c(3)]).to_u64();
                let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 8];
                amps[a as usize] = num_complex::Complex64::new(FRAC_1_SQRT_2, 0.0);
                amps[b as usize] = num_complex::Complex64::new(if c(2) { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 }, 0.0);
                StateVector::from_amplitudes(amps).unwrap()
            } else {
                // [j, l, k] -> [j, k, l]
                let s = bell(c(2), c(3)).tensor(&StateVector::basis(1, c(1) as u64).unwrap()).unwrap();
                s.permute(&[0, 2, 1]).unwrap()
            };
            let mut s = StateVector::basis(1, c(0) as u64).unwrap().tensor(&tail).unwrap();
            s.cnot(1, 0);
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevec::fidelity;

    fn ideal(kind: GadgetKind, psi: &StateVector, inputs: &[usize]) -> StateVector {
        let mut s = psi.clone();
        match kind {
            GadgetKind::H => s.h(inputs[0]),
            GadgetKind::T => s.t(inputs[0]),
            GadgetKind::Cnot => s.cnot(inputs[0], inputs[1]),
        }
        s
    }

    fn check_all_branches(kind: GadgetKind, frame: &Frame, seed: u64) {
        let g = gadget(kind);
        let mut rng = SplitRng::new(seed);
        // logical input plus one reference qubit
        let psi = StateVector::random(g.n_in + 1, &mut rng).unwrap();
        let inputs: Vec<usize> = (0..g.n_in).collect();
        let mut noisy = psi.clone();
        for (k, &q) in inputs.iter().enumerate() {
            noisy.pauli(q, frame.z[k], frame.x[k]);
        }
        let want = ideal(kind, &psi, &inputs);
        let steps = g.steps.len();
        let mut total = 0.0;
        for v in 0u64..1 << steps {
            let labels = BitVec::from_u64(v, steps);
            let run = apply_gadget(&g, &noisy, &inputs, frame, Outcomes::Forced(&labels)).unwrap();
            total += run.probability;
            if run.probability < 1e-12 {
                continue;
            }
            let mut keep = run.outputs.clone();
            keep.push(g.n_in);
            let rho = run.state.reduced_density(&keep).unwrap();
            assert!(
                rho.fidelity_with(&want) > 1.0 - 1e-10,
                "{kind:?} branch {labels} frame {frame:?}"
            );
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gadgets_are_correct_on_every_branch() {
        for kind in [GadgetKind::H, GadgetKind::Cnot, GadgetKind::T] {
            let n_in = gadget(kind).n_in;
            for f in 0u64..1 << (2 * n_in) {
                let bits = BitVec::from_u64(f, 2 * n_in);
                let frame = Frame {
                    z: (0..n_in).map(|k| bits.get(k)).collect(),
                    x: (0..n_in).map(|k| bits.get(n_in + k)).collect(),
                };
                check_all_branches(kind, &frame, 100 + f);
            }
        }
    }

    #[test]
    fn h_magic_state_matches_definition() {
        let s = gadget(GadgetKind::H).magic_state().unwrap();
        let a = s.amplitudes();
        for (k, sign) in [1.0, 1.0, 1.0, -1.0].iter().enumerate() {
            assert!((a[k].re - 0.5 * sign).abs() < 1e-12 && a[k].im.abs() < 1e-12);
        }
    }

    #[test]
    fn bases_are_deterministic_and_orthonormal() {
        for kind in [GadgetKind::H, GadgetKind::Cnot, GadgetKind::T] {
            let g = gadget(kind);
            let m = g.measured.len();
            let frames: Vec<bool> = if kind == GadgetKind::T { vec![false, true] } else { vec![false] };
            for fxb in frames {
                let mut frame = Frame::zero(g.n_in);
                frame.x[0] = fxb;
                let states: Vec<StateVector> = (0u64..1 << m)
                    .map(|v| {
                        let lab = BitVec::from_u64(v, m);
                        basis_state(kind, &lab, lab.get(0) ^ fxb)
                    })
                    .collect();
                for (v, st) in states.iter().enumerate() {
                    let lab = BitVec::from_u64(v as u64, m);
                    let mut s = st.clone();
                    let mut qubit_of = vec![None; g.n_local()];
                    for (pos, &k) in g.measured.iter().enumerate() {
                        qubit_of[k] = Some(pos);
                    }
                    let (_, p) = run_steps(&g, &mut s, &qubit_of, &frame, Outcomes::Forced(&lab)).unwrap();
                    assert!((p - 1.0).abs() < 1e-10, "{kind:?} {lab}");
                    for (u, other) in states.iter().enumerate() {
                        let ip = fidelity(st, other);
                        let want = if u == v { 1.0 } else { 0.0 };
                        assert!((ip - want).abs() < 1e-10);
                    }
                }
            }
        }
    }
}
