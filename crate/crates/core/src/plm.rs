//! Programs of projective measurements: compilation, execution and checks.
//!
//! A program acts on `V = [circuit inputs][circuit aux][magic wires]`. Its
//! `j`-th instruction measures the one-bit function `f_j(i, r_<j)` of `V`
//! after the frame `H^theta_j G_j`, where `G_j` is a prefix of one growing
//! list of CNOTs. The classical output is `g(i, r)`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::circuit::{apply_circuit, Circuit, CircuitError, Gate, GateKind, Op};
use crate::f2::BitVec;
use crate::func::{BitExpr, ClassicalFn, Expr, FnError, Var};
use crate::gadget::{basis_state, gadget, GadgetKind, Local};
use crate::rng::SplitRng;
use crate::statevec::{sample_sorted, DensityMatrix, StateError, StateVector, C64};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlmError {
    #[error("cannot compile: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Function(#[from] FnError),
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    /// One-bit measurement function over `Select`, `Input` and `Outcome` leaves.
    pub f: ClassicalFn,
    pub theta: BitVec,
    /// Length of the CNOT prefix forming `G_j`.
    pub cnots: usize,
}

/// Where a gadget's measured wires and outcomes sit in a compiled program.
#[derive(Clone, Debug, PartialEq)]
pub struct GadgetRecord {
    pub kind: GadgetKind,
    /// V wires of the gadget's measured wires, in basis order.
    pub wires: Vec<usize>,
    /// Index of the gadget's first instruction.
    pub first: usize,
    /// Branch selector of a T gadget.
    pub selector: Option<BitExpr>,
}

/// Pauli frame of one circuit wire at the end of the program.
#[derive(Clone, Debug, PartialEq)]
pub struct WireFrame {
    pub wire: usize,
    pub z: BitExpr,
    pub x: BitExpr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlmProgram {
    pub n_in: usize,
    pub n_aux: usize,
    pub n_plm: usize,
    pub n_c: usize,
    /// Prepares the magic-state register on `n_plm` wires.
    pub aux_prep: Circuit,
    pub cnots: Vec<(usize, usize)>,
    pub instructions: Vec<Instruction>,
    pub g: ClassicalFn,
    pub h: Vec<WireFrame>,
    pub gadgets: Vec<GadgetRecord>,
    /// `(wire, instruction)` for the closing standard-basis measurements.
    pub finals: Vec<(usize, usize)>,
}

impl PlmProgram {
    pub fn width(&self) -> usize {
        self.n_in + self.n_aux + self.n_plm
    }

    pub fn t(&self) -> usize {
        self.instructions.len()
    }

    pub fn n_out(&self) -> usize {
        self.g.out_width()
    }

    pub fn g_of(&self, j: usize) -> &[(usize, usize)] {
        &self.cnots[..self.instructions[j].cnots]
    }

    /// The magic-state register `|psi_PLM>`.
    pub fn plm_state(&self) -> Result<StateVector, PlmError> {
        let mut s = StateVector::zero(self.n_plm)?;
        let map: Vec<usize> = (0..self.n_plm).collect();
        apply_circuit(&mut s, &self.aux_prep, &map, &BitVec::zeros(0), None)?;
        Ok(s)
    }

    /// Structural invariants: frame prefixes grow, widths agree, functions are in range.
    pub fn validate(&self) -> Result<(), PlmError> {
        let v = self.width();
        let mut last = 0;
        for (j, ins) in self.instructions.iter().enumerate() {
            if ins.theta.len() != v {
                return Err(PlmError::Malformed(format!("instruction {j} theta has width {}", ins.theta.len())));
            }
            if ins.cnots < last || ins.cnots > self.cnots.len() {
                return Err(PlmError::Malformed(format!("instruction {j} does not extend the previous frame")));
            }
            last = ins.cnots;
            if ins.f.out_width() != 1 {
                return Err(PlmError::Malformed(format!("instruction {j} measures {} bits", ins.f.out_width())));
            }
            ins.f.specialize(&BitVec::zeros(self.n_c), &BitVec::zeros(j))?;
            if ins.f.reads().iter().any(|&w| w >= v) {
                return Err(PlmError::Malformed(format!("instruction {j} reads outside V")));
            }
        }
        for &(a, b) in &self.cnots {
            if a >= v || b >= v || a == b {
                return Err(PlmError::Malformed(format!("bad CNOT ({a}, {b})")));
            }
        }
        self.g.specialize(&BitVec::zeros(self.n_c), &BitVec::zeros(self.t()))?;
        if !self.g.is_register_only() && !self.g.reads().is_empty() {
            return Err(PlmError::Malformed("g reads the register".into()));
        }
        if self.aux_prep.width() != self.n_plm {
            return Err(PlmError::Malformed("aux_prep width differs from magic register".into()));
        }
        Ok(())
    }
}

fn leaf_bind(
    e: &crate::gadget::LocalExpr,
    wires: &[usize],
    e0: usize,
    frames: &[(BitExpr, BitExpr)],
) -> BitExpr {
    e.bind(&|l: &Local| match *l {
        Local::Wire(k) => BitExpr::select(wires[k]),
        Local::Outcome(k) => BitExpr::outcome(e0 + k),
        Local::FrameX(k) => frames[k].1.clone(),
        Local::FrameZ(k) => frames[k].0.clone(),
    })
}

struct Compiler {
    width: usize,
    n_plm: usize,
    prep: Vec<Gate>,
    cnots: Vec<(usize, usize)>,
    theta: Vec<usize>,
    pending: Vec<(ClassicalFn, Vec<usize>, usize)>,
    frame: BTreeMap<usize, (BitExpr, BitExpr)>,
    remap: Vec<usize>,
    gadgets: Vec<GadgetRecord>,
}

impl Compiler {
    fn emit(&mut self, f: BitExpr) -> usize {
        self.pending.push((ClassicalFn::single(f), self.theta.clone(), self.cnots.len()));
        self.pending.len() - 1
    }

    fn frame_of(&self, v: usize) -> (BitExpr, BitExpr) {
        self.frame.get(&v).cloned().unwrap_or((Expr::Const(false), Expr::Const(false)))
    }

    fn apply_gadget(&mut self, kind: GadgetKind, circuit_wires: &[usize]) {
        let g = gadget(kind);
        let base = self.width + self.n_plm;
        let mut wires: Vec<usize> = circuit_wires.iter().map(|&w| self.remap[w]).collect();
        wires.extend(base..base + g.n_magic);
        let plm0 = self.n_plm;
        for gate in g.magic_prep.gates() {
            let mut gg = gate.clone();
            gg.wires = gg.wires.iter().map(|&k| plm0 + k).collect();
            self.prep.push(gg);
        }
        self.n_plm += g.n_magic;
        let frames: Vec<(BitExpr, BitExpr)> = wires[..g.n_in].iter().map(|&v| self.frame_of(v)).collect();
        let e0 = self.pending.len();
        for step in &g.steps {
            self.cnots.extend(step.cnots.iter().map(|&(a, b)| (wires[a], wires[b])));
            for &h in &step.hadamards {
                if !self.theta.contains(&wires[h]) {
                    self.theta.push(wires[h]);
                }
            }
            let f = leaf_bind(&step.measure, &wires, e0, &frames);
            self.emit(f);
        }
        for &v in &wires[..g.n_in] {
            self.frame.remove(&v);
        }
        for (k, &out) in g.outputs.iter().enumerate() {
            let c = &g.corrections[k];
            let z = leaf_bind(&c.z, &wires, e0, &frames);
            let x = leaf_bind(&c.x, &wires, e0, &frames);
            self.frame.insert(wires[out], (z, x));
            self.remap[circuit_wires[k]] = wires[out];
        }
        let selector = if kind == GadgetKind::T {
            Some(leaf_bind(&crate::gadget::t_selector_local(), &wires, e0, &frames))
        } else {
            None
        };
        self.gadgets.push(GadgetRecord {
            kind,
            wires: g.measured.iter().map(|&k| wires[k]).collect(),
            first: e0,
            selector,
        });
    }

    fn flip(&mut self, w: usize, z: bool, by: BitExpr) {
        let v = self.remap[w];
        let (fz, fx) = self.frame_of(v);
        let upd = if z { (Expr::xor2(fz, by), fx) } else { (fz, Expr::xor2(fx, by)) };
        self.frame.insert(v, upd);
    }
}

/// Compiles a circuit with classical output into a program of projective measurements.
///
/// Supported gates: H, CNOT and T through gadgets, S as two T gadgets, SWAP
/// by relabelling wires, X and Z as frame updates, and classically
/// controlled X and Z as input-dependent frame updates. Every wire is
/// measured at the end; `g` reports the circuit's `measure` wires.
pub fn compile(q: &Circuit) -> Result<PlmProgram, PlmError> {
    q.validate()?;
    let width = q.width();
    let mut c = Compiler {
        width,
        n_plm: 0,
        prep: Vec::new(),
        cnots: Vec::new(),
        theta: Vec::new(),
        pending: Vec::new(),
        frame: BTreeMap::new(),
        remap: (0..width).collect(),
        gadgets: Vec::new(),
    };
    for op in &q.ops {
        let g = match op {
            Op::Gate(g) => g,
            Op::Oracle { .. } => return Err(PlmError::Unsupported("oracle calls; rewrite them first".into())),
        };
        if !g.controls.is_empty() {
            return Err(PlmError::Unsupported(format!("quantum-controlled {}", g.kind.name())));
        }
        if let Some(bit) = g.cond {
            match g.kind {
                GateKind::X => c.flip(g.wires[0], false, BitExpr::input(bit)),
                GateKind::Z => c.flip(g.wires[0], true, BitExpr::input(bit)),
                k => return Err(PlmError::Unsupported(format!("classically controlled {}", k.name()))),
            }
            continue;
        }
        match g.kind {
            GateKind::X => c.flip(g.wires[0], false, Expr::Const(true)),
            GateKind::Z => c.flip(g.wires[0], true, Expr::Const(true)),
            GateKind::H => c.apply_gadget(GadgetKind::H, &g.wires),
            GateKind::Cnot => c.apply_gadget(GadgetKind::Cnot, &g.wires),
            GateKind::T => c.apply_gadget(GadgetKind::T, &g.wires),
            GateKind::S => {
                c.apply_gadget(GadgetKind::T, &g.wires);
                c.apply_gadget(GadgetKind::T, &g.wires);
            }
            GateKind::Swap => c.remap.swap(g.wires[0], g.wires[1]),
        }
    }
    let h: Vec<WireFrame> = (0..width)
        .map(|w| {
            let v = c.remap[w];
            let (z, x) = c.frame_of(v);
            WireFrame { wire: v, z, x }
        })
        .collect();
    let mut finals = Vec::new();
    for w in 0..width {
        let v = c.remap[w];
        let j = c.emit(BitExpr::select(v));
        finals.push((v, j));
    }
    let outputs = q
        .final_measure
        .iter()
        .map(|&w| {
            let (_, j) = finals[w];
            Expr::xor2(BitExpr::outcome(j), h[w].x.clone())
        })
        .collect();
    let total = width + c.n_plm;
    let instructions = c
        .pending
        .into_iter()
        .map(|(f, th, cn)| {
            let mut theta = BitVec::zeros(total);
            for w in th {
                theta.set(w, true);
            }
            Instruction { f, theta, cnots: cn }
        })
        .collect();
    let mut aux_prep = Circuit::new(c.n_plm, 0, 0);
    for g in c.prep {
        aux_prep.push(g);
    }
    let p = PlmProgram {
        n_in: q.n_q,
        n_aux: q.n_aux,
        n_plm: c.n_plm,
        n_c: q.n_c,
        aux_prep,
        cnots: c.cnots,
        instructions,
        g: ClassicalFn::new(outputs),
        h,
        gadgets: c.gadgets,
        finals,
    };
    debug_assert_eq!(p.t(), p.width());
    Ok(p)
}

/// State of `V` in a measurement frame `H^theta G`, moved incrementally.
#[derive(Clone, Debug)]
pub struct Framed {
    pub state: StateVector,
    /// Physical qubit of each V wire.
    pub map: Vec<usize>,
    theta: Vec<bool>,
    g_len: usize,
}

impl Framed {
    pub fn new(state: StateVector, map: Vec<usize>) -> Framed {
        let v = map.len();
        Framed { state, map, theta: vec![false; v], g_len: 0 }
    }

    /// Moves from the current frame to that of instruction `j`.
    pub fn enter(&mut self, p: &PlmProgram, j: usize) {
        let ins = &p.instructions[j];
        let dg = &p.cnots[self.g_len..ins.cnots];
        let mut touched = vec![false; self.map.len()];
        for &(a, b) in dg {
            touched[a] = true;
            touched[b] = true;
        }
        for w in 0..self.map.len() {
            if self.theta[w] && (touched[w] || !ins.theta.get(w)) {
                self.state.h(self.map[w]);
            }
        }
        for &(a, b) in dg {
            self.state.cnot(self.map[a], self.map[b]);
        }
        for w in 0..self.map.len() {
            if ins.theta.get(w) && (touched[w] || !self.theta[w]) {
                self.state.h(self.map[w]);
            }
        }
        self.theta = ins.theta.iter().collect();
        self.g_len = ins.cnots;
    }

    /// Returns to the computational frame.
    pub fn exit(&mut self, p: &PlmProgram) {
        for w in 0..self.map.len() {
            if self.theta[w] {
                self.state.h(self.map[w]);
            }
        }
        for &(a, b) in p.cnots[..self.g_len].iter().rev() {
            self.state.cnot(self.map[a], self.map[b]);
        }
        self.theta = vec![false; self.map.len()];
        self.g_len = 0;
    }

    fn classifier<'a>(&'a self, f: &'a ClassicalFn) -> impl Fn(usize) -> bool + 'a {
        let n = self.state.num_qubits();
        move |idx: usize| {
            f.outputs[0].eval(&|l: &Var| match *l {
                Var::Select(w) => idx & (1usize << (n - 1 - self.map[w])) != 0,
                _ => unreachable!("function was specialised"),
            })
        }
    }

    /// Outcome distribution of instruction `j` (the frame must already be entered).
    pub fn distribution(&self, f: &ClassicalFn) -> BTreeMap<bool, f64> {
        self.state.distribution_by(&self.classifier(f))
    }

    pub fn project(&mut self, f: &ClassicalFn, b: bool, renormalize: bool) -> f64 {
        let n = self.state.num_qubits();
        let map = self.map.clone();
        let cls = move |idx: usize| {
            f.outputs[0].eval(&|l: &Var| match *l {
                Var::Select(w) => idx & (1usize << (n - 1 - map[w])) != 0,
                _ => unreachable!("function was specialised"),
            })
        };
        self.state.project_by(&cls, &b, renormalize)
    }
}

/// Builds `input ⊗ aux ⊗ |psi_PLM>`; qubits of `input` past `n_in` are a reference.
pub fn prepare_v(p: &PlmProgram, input: &StateVector, aux: Option<&StateVector>) -> Result<Framed, PlmError> {
    if input.num_qubits() < p.n_in {
        return Err(PlmError::Malformed(format!("input has {} qubits, program needs {}", input.num_qubits(), p.n_in)));
    }
    let aux_state = match aux {
        Some(a) if a.num_qubits() == p.n_aux => a.clone(),
        Some(a) => return Err(PlmError::Malformed(format!("aux state has {} qubits, program needs {}", a.num_qubits(), p.n_aux))),
        None => StateVector::zero(p.n_aux)?,
    };
    let r = input.num_qubits() - p.n_in;
    let state = input.tensor(&aux_state)?.tensor(&p.plm_state()?)?;
    let map = (0..p.width()).map(|w| if w < p.n_in { w } else { w + r }).collect();
    Ok(Framed::new(state, map))
}

/// Runs the program once with sampled outcomes; returns `g(i, r)`, `r` and the final state.
pub fn execute_plm(
    p: &PlmProgram,
    i: &BitVec,
    input: &StateVector,
    aux_override: Option<&StateVector>,
    rng: &mut SplitRng,
) -> Result<(BitVec, BitVec, StateVector), PlmError> {
    let mut fr = prepare_v(p, input, aux_override)?;
    let r = run_instructions(p, i, &mut fr, rng)?;
    let y = p.g.eval(&BitVec::zeros(0), i, &r)?;
    Ok((y, r, fr.state))
}

/// Measures every instruction on a prepared `V` state, leaving it in the computational frame.
pub fn run_instructions(p: &PlmProgram, i: &BitVec, fr: &mut Framed, rng: &mut SplitRng) -> Result<BitVec, PlmError> {
    if i.len() != p.n_c {
        return Err(PlmError::Malformed(format!("classical input has {} bits, program needs {}", i.len(), p.n_c)));
    }
    let mut r = BitVec::zeros(0);
    for j in 0..p.t() {
        let f = p.instructions[j].f.specialize(i, &r)?;
        fr.enter(p, j);
        let dist = fr.distribution(&f);
        let b = sample_sorted(&dist, rng);
        fr.project(&f, b, true);
        r.push(b);
    }
    fr.exit(p);
    Ok(r)
}

/// Visits every outcome string `r` reachable with probability above `prune`.
///
/// The callback receives `r`, its probability and the normalised
/// post-measurement state in the computational frame.
pub fn for_each_branch(
    p: &PlmProgram,
    i: &BitVec,
    start: Framed,
    prune: f64,
    visit: &mut dyn FnMut(&BitVec, f64, &Framed) -> Result<(), PlmError>,
) -> Result<(), PlmError> {
    fn rec(
        p: &PlmProgram,
        i: &BitVec,
        mut fr: Framed,
        r: &mut BitVec,
        prob: f64,
        prune: f64,
        visit: &mut dyn FnMut(&BitVec, f64, &Framed) -> Result<(), PlmError>,
    ) -> Result<(), PlmError> {
        let j = r.len();
        if j == p.t() {
            fr.exit(p);
            return visit(r, prob, &fr);
        }
        let f = p.instructions[j].f.specialize(i, r)?;
        fr.enter(p, j);
        let dist = fr.distribution(&f);
        let live: Vec<(bool, f64)> = dist.into_iter().filter(|(_, q)| prob * q > prune).collect();
        let n_live = live.len();
        let mut fr_opt = Some(fr);
        for (k, (b, q)) in live.into_iter().enumerate() {
            let mut branch = if k + 1 == n_live { fr_opt.take().unwrap() } else { fr_opt.as_ref().unwrap().clone() };
            branch.project(&f, b, true);
            r.push(b);
            rec(p, i, branch, r, prob * q, prune, visit)?;
            let len = r.len();
            *r = r.slice(0, len - 1);
        }
        Ok(())
    }
    if i.len() != p.n_c {
        return Err(PlmError::Malformed(format!("classical input has {} bits, program needs {}", i.len(), p.n_c)));
    }
    let mut r = BitVec::zeros(0);
    rec(p, i, start, &mut r, 1.0, prune, visit)
}

/// Output distribution with the probability-weighted reduced state of the
/// reference qubits (those of `input` past `n_in`) for each output.
pub fn plm_weighted_marginals(
    p: &PlmProgram,
    i: &BitVec,
    input: &StateVector,
    aux: Option<&StateVector>,
) -> Result<BTreeMap<BitVec, (f64, DensityMatrix)>, PlmError> {
    let fr = prepare_v(p, input, aux)?;
    let reference: Vec<usize> = (p.n_in..input.num_qubits()).collect();
    let mut out: BTreeMap<BitVec, (f64, DensityMatrix)> = BTreeMap::new();
    for_each_branch(p, i, fr, 1e-14, &mut |r, prob, fr| {
        let y = p.g.eval(&BitVec::zeros(0), i, r)?;
        let rho = fr.state.reduced_density(&reference)?.scaled(prob);
        match out.get_mut(&y) {
            Some((q, acc)) => {
                *q += prob;
                acc.add(&rho);
            }
            None => {
                out.insert(y, (prob, rho));
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// The deterministic-outcome state `|Phi_{i,r}>` on `V`.
pub fn phi_basis_state(p: &PlmProgram, i: &BitVec, r: &BitVec) -> Result<StateVector, PlmError> {
    if r.len() != p.t() {
        return Err(PlmError::Malformed(format!("r has {} bits, program has {} instructions", r.len(), p.t())));
    }
    let mut s = StateVector::zero(0)?;
    let mut order: Vec<usize> = Vec::new();
    for gr in &p.gadgets {
        let labels = r.slice(gr.first, gr.first + gr.wires.len());
        let sel = match &gr.selector {
            Some(e) => ClassicalFn::single(e.clone()).eval(&BitVec::zeros(0), i, r)?.get(0),
            None => false,
        };
        s = s.tensor(&basis_state(gr.kind, &labels, sel))?;
        order.extend(&gr.wires);
    }
    for &(v, j) in &p.finals {
        s = s.tensor(&StateVector::basis(1, r.get(j) as u64)?)?;
        order.push(v);
    }
    // qubit k of `s` holds V wire order[k]
    let mut inv = vec![0; order.len()];
    for (k, &v) in order.iter().enumerate() {
        inv[v] = k;
    }
    Ok(s.permute(&inv)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    /// Largest 2-norm deviation seen.
    pub max_deviation: f64,
    pub cases: usize,
}

/// Checks `Pi_{r_t} ... Pi_{r_1} = |Phi_{i,r}><Phi_{i,r}|` on random states of `V`.
///
/// All `r` are checked when `t <= 10`; otherwise 64 random strings.
pub fn projectivity_check(p: &PlmProgram, i: &BitVec, states: usize, rng: &mut SplitRng) -> Result<CheckReport, PlmError> {
    let v = p.width();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let map: Vec<usize> = (0..v).collect();
    for _ in 0..states {
        let psi = StateVector::random(v, rng)?;
        let mut check = |r: &BitVec, fr: &Framed| -> Result<(), PlmError> {
            let phi = phi_basis_state(p, i, r)?;
            let ov = phi.inner(&psi);
            let d: f64 = libm::sqrt(
                fr.state.amplitudes().iter().zip(phi.amplitudes()).map(|(a, b)| (a - b * ov).norm_sqr()).sum::<f64>(),
            );
            worst = worst.max(d);
            cases += 1;
            Ok(())
        };
        if p.t() <= 10 {
            exhaustive_products(p, i, Framed::new(psi.clone(), map.clone()), &mut check)?;
        } else {
            for _ in 0..64 {
                let r = BitVec::random(p.t(), rng);
                let mut fr = Framed::new(psi.clone(), map.clone());
                for j in 0..p.t() {
                    let f = p.instructions[j].f.specialize(i, &r.slice(0, j))?;
                    fr.enter(p, j);
                    fr.project(&f, r.get(j), false);
                }
                fr.exit(p);
                check(&r, &fr)?;
            }
        }
    }
    Ok(CheckReport { max_deviation: worst, cases })
}

/// Applies every unnormalised projector product `Pi_{r_t} ... Pi_{r_1}`.
fn exhaustive_products(
    p: &PlmProgram,
    i: &BitVec,
    start: Framed,
    visit: &mut dyn FnMut(&BitVec, &Framed) -> Result<(), PlmError>,
) -> Result<(), PlmError> {
    fn rec(
        p: &PlmProgram,
        i: &BitVec,
        mut fr: Framed,
        r: &mut BitVec,
        visit: &mut dyn FnMut(&BitVec, &Framed) -> Result<(), PlmError>,
    ) -> Result<(), PlmError> {
        let j = r.len();
        if j == p.t() {
            fr.exit(p);
            return visit(r, &fr);
        }
        let f = p.instructions[j].f.specialize(i, r)?;
        fr.enter(p, j);
        for b in [false, true] {
            let mut br = fr.clone();
            br.project(&f, b, false);
            r.push(b);
            rec(p, i, br, r, visit)?;
            *r = r.slice(0, r.len() - 1);
        }
        Ok(())
    }
    let mut r = BitVec::zeros(0);
    rec(p, i, start, &mut r, visit)
}

/// Checks that the output projectors of the program match those of the circuit:
/// `sum_y X^y ⊗ sum_{r: g(i,r)=y} |Phi_r><Phi_r| (I ⊗ |psi_PLM>)` equals
/// `sum_y X^y ⊗ U^dagger (|y><y| ⊗ I) U ⊗ |psi_PLM>`, on random states of
/// `Y ⊗ (inputs, aux)`. Needs `t <= 16`.
pub fn output_projector_identity_check(
    p: &PlmProgram,
    q: &Circuit,
    i: &BitVec,
    states: usize,
    rng: &mut SplitRng,
) -> Result<CheckReport, PlmError> {
    if p.t() > 16 {
        return Err(PlmError::Unsupported(format!("{} instructions is too many to enumerate", p.t())));
    }
    let ny = p.n_out();
    let nin = p.n_in + p.n_aux;
    let v = p.width();
    let dy = 1usize << ny;
    let dv = 1usize << v;
    let din = 1usize << nin;
    let plm = p.plm_state()?;
    let phis: Vec<(usize, StateVector)> = (0u64..1 << p.t())
        .map(|rv| {
            let r = BitVec::from_u64(rv, p.t());
            let y = p.g.eval(&BitVec::zeros(0), i, &r)?.to_u64() as usize;
            Ok((y, phi_basis_state(p, i, &r)?))
        })
        .collect::<Result<_, PlmError>>()?;
    let inv = q.inverse_unitary_part()?;
    let qmap: Vec<usize> = (0..q.width()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let chi = StateVector::random(ny + nin, rng)?;
        let slice = |a: usize| -> Vec<C64> { chi.amplitudes()[a * din..(a + 1) * din].to_vec() };
        let mut lhs = vec![C64::new(0.0, 0.0); dy * dv];
        let mut rhs = vec![C64::new(0.0, 0.0); dy * dv];
        for a in 0..dy {
            let chia = StateVector::from_unnormalized(slice(a), 64)?;
            let full = chia.tensor(&plm)?;
            for (y, phi) in &phis {
                let ov = phi.inner(&full);
                let row = (a ^ y) * dv;
                for (k, amp) in phi.amplitudes().iter().enumerate() {
                    lhs[row + k] += amp * ov;
                }
            }
            let mut u = chia.clone();
            apply_circuit(&mut u, &q.unitary_part(), &qmap, i, None)?;
            let meas: Vec<usize> = q.final_measure.clone();
            for y in 0..dy {
                let mut proj = u.clone();
                let yb = BitVec::from_u64(y as u64, ny);
                proj.project_by(
                    &|idx: usize| meas.iter().enumerate().all(|(k, &w)| ((idx >> (nin - 1 - w)) & 1 == 1) == yb.get(k)),
                    &true,
                    false,
                );
                apply_circuit(&mut proj, &inv, &qmap, i, None)?;
                let back = proj.tensor(&plm)?;
                let row = (a ^ y) * dv;
                for (k, amp) in back.amplitudes().iter().enumerate() {
                    rhs[row + k] += amp;
                }
            }
        }
        let d: f64 = libm::sqrt(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>());
        worst = worst.max(d);
    }
    Ok(CheckReport { max_deviation: worst, cases: states })
}

impl Circuit {
    /// The same circuit without its final measurement.
    pub fn unitary_part(&self) -> Circuit {
        let mut c = self.clone();
        c.final_measure.clear();
        c
    }

    /// Inverse of [`Circuit::unitary_part`].
    pub fn inverse_unitary_part(&self) -> Result<Circuit, CircuitError> {
        self.unitary_part().inverse()
    }
}

/// Wraps a unitary `q` on `n` inputs for obfuscation.
///
/// The result has inputs `[V_in (n), V_out (n)]`, the auxiliary wires of `q`,
/// and `2n` classical input bits `z || x`. It undoes the input teleportation
/// key with `cX`/`cZ`, runs `q`, then teleports `V_in` through `V_out` and
/// measures both (`2n` output bits, `z` first).
pub fn wrap_for_obfuscation(q: &Circuit, n: usize) -> Result<Circuit, PlmError> {
    q.validate()?;
    if q.n_q != n {
        return Err(PlmError::Unsupported(format!("circuit has {} inputs, expected {n}", q.n_q)));
    }
    if !q.final_measure.is_empty() || q.n_c > 0 || q.oracle_calls() > 0 {
        return Err(PlmError::Unsupported("only plain unitary circuits can be wrapped".into()));
    }
    let mut c = Circuit::new(2 * n, 2 * n, q.n_aux);
    for w in 0..n {
        c.push(Gate::new(GateKind::X, &[w]).conditioned(n + w));
        c.push(Gate::new(GateKind::Z, &[w]).conditioned(w));
    }
    let map = |w: usize| if w < n { w } else { w + n };
    for g in q.gates() {
        let mut gg = g.clone();
        gg.wires = gg.wires.iter().map(|&w| map(w)).collect();
        gg.controls = gg.controls.iter().map(|&w| map(w)).collect();
        c.push(gg);
    }
    for w in 0..n {
        c.gate(GateKind::Cnot, &[w, n + w]);
        c.gate(GateKind::H, &[w]);
    }
    c.final_measure = (0..2 * n).collect();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::direct_weighted_marginals;

    fn compare(q: &Circuit, input: &StateVector, i: &BitVec) -> f64 {
        let p = compile(q).unwrap();
        let reference: Vec<usize> = (q.n_q..input.num_qubits()).collect();
        let want = direct_weighted_marginals(q, input, None, i, &reference).unwrap();
        let got = plm_weighted_marginals(&p, i, input, None).unwrap();
        let mut worst: f64 = 0.0;
        for (y, (pw, rw)) in &want {
            let (pg, rg) = got.get(y).cloned().unwrap_or((0.0, rw.scaled(0.0)));
            worst = worst.max((pw - pg).abs()).max(rw.max_abs_diff(&rg));
        }
        for (y, (pg, _)) in &got {
            if !want.contains_key(y) {
                worst = worst.max(*pg);
            }
        }
        worst
    }

    #[test]
    fn instruction_counts() {
        let q = Circuit::parse("qubits 1\nH 0\nmeasure 0\n").unwrap();
        let p = compile(&q).unwrap();
        assert_eq!(p.t(), 3);
        assert_eq!(p.n_plm, 2);
        let id = compile(&Circuit::parse("qubits 1\nmeasure 0\n").unwrap()).unwrap();
        assert_eq!(id.t(), 1);
        assert_eq!(id.g, ClassicalFn::single(BitExpr::outcome(0)));
        let t = compile(&Circuit::parse("qubits 1\nT 0\nmeasure 0\n").unwrap()).unwrap();
        assert_eq!(t.t(), 5);
        t.validate().unwrap();
    }

    #[test]
    fn h_then_measure_is_fair() {
        let q = Circuit::parse("qubits 1\nH 0\nmeasure 0\n").unwrap();
        let p = compile(&q).unwrap();
        let input = StateVector::zero(1).unwrap();
        let m = plm_weighted_marginals(&p, &BitVec::zeros(0), &input, None).unwrap();
        for (_, (pr, _)) in m {
            assert!((pr - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_simulation() {
        let circuits = [
            "qubits 1\nT 0\nH 0\nmeasure 0\n",
            "qubits 1\nH 0\nT 0\nH 0\nmeasure 0\n",
            "qubits 2\nH 0\nCNOT 0 1\nT 1\nmeasure 0 1\n",
            "qubits 1\ncin 1\nH 0\ncX 0 @0\nT 0\nmeasure 0\n",
            "qubits 2\ncin 2\ncX 0 @1\nCNOT 0 1\ncZ 1 @0\nmeasure 1\n",
            "qubits 1\nS 0\nH 0\nmeasure 0\n",
            "qubits 2\nSWAP 0 1\nH 1\nX 0\nmeasure 0 1\n",
        ];
        let mut rng = SplitRng::new(77);
        for text in circuits {
            let q = Circuit::parse(text).unwrap();
            for iv in 0u64..1 << q.n_c {
                let i = BitVec::from_u64(iv, q.n_c);
                let input = StateVector::random(q.n_q + 1, &mut rng).unwrap();
                let d = compare(&q, &input, &i);
                assert!(d < 1e-9, "{text} i={i} deviation {d}");
            }
        }
    }

    #[test]
    fn projectivity_and_output_identity() {
        let mut rng = SplitRng::new(5);
        for text in ["qubits 1\nH 0\nmeasure 0\n", "qubits 1\ncin 1\ncX 0 @0\nT 0\nmeasure 0\n", "qubits 2\nCNOT 0 1\nmeasure 0 1\n"] {
            let q = Circuit::parse(text).unwrap();
            let p = compile(&q).unwrap();
            for iv in 0u64..1 << q.n_c {
                let i = BitVec::from_u64(iv, q.n_c);
                let rep = projectivity_check(&p, &i, 2, &mut rng).unwrap();
                assert!(rep.max_deviation < 1e-8, "{text}: {rep:?}");
                let rep = output_projector_identity_check(&p, &q, &i, 2, &mut rng).unwrap();
                assert!(rep.max_deviation < 1e-8, "{text}: {rep:?}");
            }
        }
    }

    #[test]
    fn phi_states_are_deterministic() {
        let q = Circuit::parse("qubits 1\ncin 1\ncX 0 @0\nT 0\nH 0\nmeasure 0\n").unwrap();
        let p = compile(&q).unwrap();
        let mut rng = SplitRng::new(9);
        for iv in 0..2 {
            let i = BitVec::from_u64(iv, 1);
            for _ in 0..10 {
                let r = BitVec::random(p.t(), &mut rng);
                let phi = phi_basis_state(&p, &i, &r).unwrap();
                let map: Vec<usize> = (0..p.width()).collect();
                let mut fr = Framed::new(phi, map);
                let got = run_instructions(&p, &i, &mut fr, &mut rng).unwrap();
                assert_eq!(got, r);
            }
        }
    }

    #[test]
    fn unsupported_gates_are_rejected() {
        let q = Circuit::parse("qubits 1\ncin 1\ncH 0 @0\nmeasure 0\n").unwrap();
        assert!(matches!(compile(&q), Err(PlmError::Unsupported(_))));
        let q = Circuit::parse("qubits 2\nH 0 ctrl 1\nmeasure 0\n").unwrap();
        assert!(matches!(compile(&q), Err(PlmError::Unsupported(_))));
    }

    #[test]
    fn wrapped_identity_teleports_back() {
        let q = Circuit::new(1, 0, 0);
        let w = wrap_for_obfuscation(&q, 1).unwrap();
        assert_eq!(w.n_c, 2);
        assert_eq!(w.final_measure, vec![0, 1]);
        compile(&w).unwrap().validate().unwrap();
    }
}
