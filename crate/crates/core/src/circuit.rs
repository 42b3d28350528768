//! Circuit representation, the `.qc` text format, direct simulation and
//! oracle-program rewriting.
//!
//! Wires `0..n_q` carry the input, wires `n_q..n_q+n_aux` carry an auxiliary
//! state. Gates may be classically controlled by a bit of the classical input
//! (`@k`) and quantum controlled by further wires (`ctrl a b`).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::f2::BitVec;
use crate::rng::SplitRng;
use crate::statevec::{fidelity, gates, DensityMatrix, StateError, StateVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GateKind {
    X,
    Z,
    H,
    S,
    T,
    Cnot,
    Swap,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Cnot | GateKind::Swap => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::T => "T",
            GateKind::Cnot => "CNOT",
            GateKind::Swap => "SWAP",
        }
    }

    pub fn from_name(s: &str) -> Option<GateKind> {
        Some(match s {
            "X" => GateKind::X,
            "Z" => GateKind::Z,
            "H" => GateKind::H,
            "S" => GateKind::S,
            "T" => GateKind::T,
            "CNOT" => GateKind::Cnot,
            "SWAP" => GateKind::Swap,
            _ => return None,
        })
    }

    /// Number of repetitions of this gate that give its inverse.
    fn inverse_power(self) -> usize {
        match self {
            GateKind::S => 3,
            GateKind::T => 7,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gate {
    pub kind: GateKind,
    pub wires: Vec<usize>,
    /// Classical input bit that must be 1 for the gate to act.
    pub cond: Option<usize>,
    /// Quantum control wires.
    pub controls: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, wires: &[usize]) -> Gate {
        assert_eq!(wires.len(), kind.arity(), "wrong number of wires for {}", kind.name());
        Gate { kind, wires: wires.to_vec(), cond: None, controls: Vec::new() }
    }

    pub fn conditioned(mut self, bit: usize) -> Gate {
        self.cond = Some(bit);
        self
    }

    pub fn controlled_by(mut self, wire: usize) -> Gate {
        self.controls.push(wire);
        self
    }

    fn remapped(&self, map: &impl Fn(usize) -> usize) -> Gate {
        Gate {
            kind: self.kind,
            wires: self.wires.iter().map(|&w| map(w)).collect(),
            cond: self.cond,
            controls: self.controls.iter().map(|&w| map(w)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Gate(Gate),
    /// Call to the oracle unitary on the listed wires.
    Oracle { wires: Vec<usize>, dagger: bool },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CircuitError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("wire {wire} out of range ({width} wires)")]
    WireOutOfRange { wire: usize, width: usize },
    #[error("gate uses wire {0} more than once")]
    RepeatedWire(usize),
    #[error("classical bit {bit} out of range ({width} bits)")]
    ClassicalBitOutOfRange { bit: usize, width: usize },
    #[error("oracle call on {got} wires, oracle acts on {want}")]
    OracleWidth { got: usize, want: usize },
    #[error("circuit contains oracle calls but no oracle was supplied")]
    MissingOracle,
    #[error("operation not supported here: {0}")]
    Unsupported(String),
    #[error("classical input has {got} bits, circuit expects {want}")]
    ClassicalInputWidth { got: usize, want: usize },
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Circuit {
    pub n_q: usize,
    pub n_c: usize,
    pub n_aux: usize,
    pub ops: Vec<Op>,
    pub final_measure: Vec<usize>,
}

impl Circuit {
    pub fn new(n_q: usize, n_c: usize, n_aux: usize) -> Circuit {
        Circuit { n_q, n_c, n_aux, ops: Vec::new(), final_measure: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.n_q + self.n_aux
    }

    pub fn push(&mut self, g: Gate) -> &mut Self {
        self.ops.push(Op::Gate(g));
        self
    }

    pub fn gate(&mut self, kind: GateKind, wires: &[usize]) -> &mut Self {
        self.push(Gate::new(kind, wires))
    }

    pub fn oracle(&mut self, wires: &[usize], dagger: bool) -> &mut Self {
        self.ops.push(Op::Oracle { wires: wires.to_vec(), dagger });
        self
    }

    pub fn measure(&mut self, wires: &[usize]) -> &mut Self {
        self.final_measure = wires.to_vec();
        self
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.ops.iter().filter_map(|op| match op {
            Op::Gate(g) => Some(g),
            Op::Oracle { .. } => None,
        })
    }

    pub fn oracle_calls(&self) -> usize {
        self.ops.iter().filter(|op| matches!(op, Op::Oracle { .. })).count()
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        let width = self.width();
        let check = |w: usize| {
            if w >= width {
                Err(CircuitError::WireOutOfRange { wire: w, width })
            } else {
                Ok(())
            }
        };
        for op in &self.ops {
            let used: Vec<usize> = match op {
                Op::Gate(g) => {
                    if let Some(b) = g.cond {
                        if b >= self.n_c {
                            return Err(CircuitError::ClassicalBitOutOfRange { bit: b, width: self.n_c });
                        }
                    }
                    g.wires.iter().chain(&g.controls).copied().collect()
                }
                Op::Oracle { wires, .. } => wires.clone(),
            };
            for (k, &w) in used.iter().enumerate() {
                check(w)?;
                if used[..k].contains(&w) {
                    return Err(CircuitError::RepeatedWire(w));
                }
            }
        }
        for (k, &w) in self.final_measure.iter().enumerate() {
            check(w)?;
            if self.final_measure[..k].contains(&w) {
                return Err(CircuitError::RepeatedWire(w));
            }
        }
        Ok(())
    }

    /// Inverse of the unitary part. Oracle calls swap with their adjoints.
    pub fn inverse(&self) -> Result<Circuit, CircuitError> {
        if !self.final_measure.is_empty() {
            return Err(CircuitError::Unsupported("inverse of a circuit with measurements".into()));
        }
        let mut out = Circuit::new(self.n_q, self.n_c, self.n_aux);
        for op in self.ops.iter().rev() {
            match op {
                Op::Gate(g) => {
                    for _ in 0..g.kind.inverse_power() {
                        out.ops.push(Op::Gate(g.clone()));
                    }
                }
                Op::Oracle { wires, dagger } => out.ops.push(Op::Oracle { wires: wires.clone(), dagger: !dagger }),
            }
        }
        Ok(out)
    }

    /// Parses the `.qc` text format.
    pub fn parse(text: &str) -> Result<Circuit, CircuitError> {
        let mut c = Circuit::default();
        let mut seen_gate = false;
        for (ln, raw) in text.lines().enumerate() {
            let line = ln + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: &str| CircuitError::Parse { line, msg: msg.to_string() };
            let toks: Vec<&str> = body.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("expected an integer, found `{s}`")));
            match toks[0] {
                "qubits" | "cin" | "aux" => {
                    if seen_gate {
                        return Err(err("header after the first operation"));
                    }
                    if toks.len() != 2 {
                        return Err(err("header takes one integer"));
                    }
                    let v = num(toks[1])?;
                    match toks[0] {
                        "qubits" => c.n_q = v,
                        "cin" => c.n_c = v,
                        _ => c.n_aux = v,
                    }
                }
                "measure" => {
                    if !c.final_measure.is_empty() {
                        return Err(err("more than one measure line"));
                    }
                    c.final_measure = toks[1..].iter().map(|t| num(t)).collect::<Result<_, _>>()?;
                    if c.final_measure.is_empty() {
                        return Err(err("measure needs at least one wire"));
                    }
                }
                "U" | "Udag" => {
                    seen_gate = true;
                    let wires = toks[1..].iter().map(|t| num(t)).collect::<Result<Vec<_>, _>>()?;
                    c.ops.push(Op::Oracle { wires, dagger: toks[0] == "Udag" });
                }
                name => {
                    seen_gate = true;
                    if !c.final_measure.is_empty() {
                        return Err(err("operation after measure"));
                    }
                    let (kind, classical) = match GateKind::from_name(name) {
                        Some(k) => (k, false),
                        None => match name.strip_prefix('c').and_then(GateKind::from_name) {
                            Some(k) => (k, true),
                            None => return Err(err(&format!("unknown gate `{name}`"))),
                        },
                    };
                    let mut wires = Vec::new();
                    let mut cond = None;
                    let mut controls = Vec::new();
                    let mut in_ctrl = false;
                    for t in &toks[1..] {
                        if *t == "ctrl" {
                            in_ctrl = true;
                        } else if let Some(b) = t.strip_prefix('@') {
                            if in_ctrl || cond.is_some() {
                                return Err(err("misplaced classical control"));
                            }
                            cond = Some(num(b)?);
                        } else if in_ctrl {
                            controls.push(num(t)?);
                        } else {
                            if cond.is_some() {
                                return Err(err("wire after classical control"));
                            }
                            wires.push(num(t)?);
                        }
                    }
                    if wires.len() != kind.arity() {
                        return Err(err(&format!("{} takes {} wire(s)", kind.name(), kind.arity())));
                    }
                    if classical != cond.is_some() {
                        return Err(err("classically controlled gates are written `cGATE wires @k`"));
                    }
                    if in_ctrl && controls.is_empty() {
                        return Err(err("ctrl needs at least one wire"));
                    }
                    c.ops.push(Op::Gate(Gate { kind, wires, cond, controls }));
                }
            }
        }
        c.validate().map_err(|e| CircuitError::Parse { line: 0, msg: e.to_string() })?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "qubits {}", self.n_q);
        if self.n_c > 0 {
            let _ = writeln!(out, "cin {}", self.n_c);
        }
        if self.n_aux > 0 {
            let _ = writeln!(out, "aux {}", self.n_aux);
        }
        for op in &self.ops {
            match op {
                Op::Gate(g) => {
                    if g.cond.is_some() {
                        out.push('c');
                    }
                    out.push_str(g.kind.name());
                    for w in &g.wires {
                        let _ = write!(out, " {w}");
                    }
                    if let Some(b) = g.cond {
                        let _ = write!(out, " @{b}");
                    }
                    if !g.controls.is_empty() {
                        out.push_str(" ctrl");
                        for w in &g.controls {
                            let _ = write!(out, " {w}");
                        }
                    }
                    out.push('\n');
                }
                Op::Oracle { wires, dagger } => {
                    out.push_str(if *dagger { "Udag" } else { "U" });
                    for w in wires {
                        let _ = write!(out, " {w}");
                    }
                    out.push('\n');
                }
            }
        }
        if !self.final_measure.is_empty() {
            out.push_str("measure");
            for w in &self.final_measure {
                let _ = write!(out, " {w}");
            }
            out.push('\n');
        }
        out
    }
}

/// Applies one gate to physical qubits of `s`, ignoring any classical condition.
pub fn apply_gate(s: &mut StateVector, g: &Gate, map: &impl Fn(usize) -> usize) {
    let w: Vec<usize> = g.wires.iter().map(|&x| map(x)).collect();
    let ctrl: Vec<usize> = g.controls.iter().map(|&x| map(x)).collect();
    if ctrl.is_empty() {
        match g.kind {
            GateKind::X => s.x(w[0]),
            GateKind::Z => s.z(w[0]),
            GateKind::H => s.h(w[0]),
            GateKind::S => s.s(w[0]),
            GateKind::T => s.t(w[0]),
            GateKind::Cnot => s.cnot(w[0], w[1]),
            GateKind::Swap => s.swap(w[0], w[1]),
        }
        return;
    }
    let one = |kind: GateKind| match kind {
        GateKind::X => gates::x(),
        GateKind::Z => gates::z(),
        GateKind::H => gates::h(),
        GateKind::S => gates::s(),
        _ => gates::t(),
    };
    match g.kind {
        GateKind::Cnot => {
            let mut c2 = ctrl.clone();
            c2.push(w[0]);
            s.apply_controlled_1q(&c2, w[1], &gates::x());
        }
        GateKind::Swap => {
            let mut ca = ctrl.clone();
            ca.push(w[0]);
            let mut cb = ctrl.clone();
            cb.push(w[1]);
            s.apply_controlled_1q(&cb, w[0], &gates::x());
            s.apply_controlled_1q(&ca, w[1], &gates::x());
            s.apply_controlled_1q(&cb, w[0], &gates::x());
        }
        k => s.apply_controlled_1q(&ctrl, w[0], &one(k)),
    }
}

/// How oracle calls are realised during direct simulation.
pub type OracleFn<'a> = dyn Fn(&mut StateVector, &[usize], bool) -> Result<(), CircuitError> + 'a;

/// Oracle that runs `inner` on the called wires with a fresh copy of its auxiliary state.
///
/// The auxiliary register is appended, used and then traced out, so this is
/// exact only when `inner` returns its auxiliary state unentangled.
pub fn circuit_oracle<'a>(inner: &'a Circuit, inner_aux: Option<&'a StateVector>) -> impl Fn(&mut StateVector, &[usize], bool) -> Result<(), CircuitError> + 'a {
    move |s: &mut StateVector, wires: &[usize], dagger: bool| {
        if wires.len() != inner.n_q {
            return Err(CircuitError::OracleWidth { got: wires.len(), want: inner.n_q });
        }
        let body = if dagger { inner.inverse()? } else { inner.clone() };
        let aux = match inner_aux {
            Some(a) => a.clone(),
            None => StateVector::zero(inner.n_aux)?,
        };
        let n0 = s.num_qubits();
        let mut joint = s.tensor(&aux)?;
        let map = |w: usize| if w < inner.n_q { wires[w] } else { n0 + (w - inner.n_q) };
        for g in body.gates() {
            apply_gate(&mut joint, g, &map);
        }
        let aux_qubits: Vec<usize> = (n0..n0 + inner.n_aux).collect();
        *s = split_off_product(&joint, &aux_qubits)?;
        Ok(())
    }
}

/// Drops `drop` qubits assuming the state is a product across the cut.
fn split_off_product(s: &StateVector, drop: &[usize]) -> Result<StateVector, CircuitError> {
    let keep: Vec<usize> = (0..s.num_qubits()).filter(|q| !drop.contains(q)).collect();
    let ordered = s.permute(&[keep.as_slice(), drop].concat())?;
    let dk = 1usize << keep.len();
    let dr = 1usize << drop.len();
    let amps = ordered.amplitudes();
    let best = (0..dr)
        .max_by(|&a, &b| {
            let na: f64 = (0..dk).map(|k| amps[k * dr + a].norm_sqr()).sum();
            let nb: f64 = (0..dk).map(|k| amps[k * dr + b].norm_sqr()).sum();
            na.partial_cmp(&nb).unwrap()
        })
        .unwrap();
    let v: Vec<_> = (0..dk).map(|k| amps[k * dr + best]).collect();
    let mut out = StateVector::from_unnormalized(v, s.cap())?;
    out.normalize();
    Ok(out)
}

/// Physical layout used for direct runs: input wires, then reference qubits,
/// then the auxiliary register.
pub struct Prepared {
    pub state: StateVector,
    pub wire_map: Vec<usize>,
    pub reference: Vec<usize>,
}

/// Builds `input ⊗ aux`. Qubits of `input` beyond `n_q` are a reference register.
pub fn prepare(c: &Circuit, input: &StateVector, aux: Option<&StateVector>) -> Result<Prepared, CircuitError> {
    if input.num_qubits() < c.n_q {
        return Err(CircuitError::Unsupported(format!(
            "input has {} qubits, circuit needs {}",
            input.num_qubits(),
            c.n_q
        )));
    }
    let aux_state = match aux {
        Some(a) if a.num_qubits() == c.n_aux => a.clone(),
        Some(a) => {
            return Err(CircuitError::Unsupported(format!(
                "auxiliary state has {} qubits, circuit needs {}",
                a.num_qubits(),
                c.n_aux
            )))
        }
        None => StateVector::zero(c.n_aux)?,
    };
    let r = input.num_qubits() - c.n_q;
    let state = input.tensor(&aux_state)?;
    let wire_map = (0..c.width()).map(|w| if w < c.n_q { w } else { w + r }).collect();
    let reference = (c.n_q..c.n_q + r).collect();
    Ok(Prepared { state, wire_map, reference })
}

/// Applies every operation of `c` to `s` under `wire_map`.
pub fn apply_circuit(
    s: &mut StateVector,
    c: &Circuit,
    wire_map: &[usize],
    cin: &BitVec,
    oracle: Option<&OracleFn<'_>>,
) -> Result<(), CircuitError> {
    if cin.len() != c.n_c {
        return Err(CircuitError::ClassicalInputWidth { got: cin.len(), want: c.n_c });
    }
    for op in &c.ops {
        match op {
            Op::Gate(g) => {
                if g.cond.is_none_or(|b| cin.get(b)) {
                    apply_gate(s, g, &|w| wire_map[w]);
                }
            }
            Op::Oracle { wires, dagger } => {
                let f = oracle.ok_or(CircuitError::MissingOracle)?;
                let phys: Vec<usize> = wires.iter().map(|&w| wire_map[w]).collect();
                f(s, &phys, *dagger)?;
            }
        }
    }
    Ok(())
}

/// One measurement branch of a direct run.
#[derive(Clone, Debug)]
pub struct DirectBranch {
    pub outcome: BitVec,
    pub probability: f64,
    pub state: StateVector,
}

/// Runs `c` and returns every final-measurement branch with positive probability.
/// Post-measurement states use the [`prepare`] layout.
pub fn direct_branches(
    c: &Circuit,
    input: &StateVector,
    aux: Option<&StateVector>,
    cin: &BitVec,
    oracle: Option<&OracleFn<'_>>,
) -> Result<(Prepared, Vec<DirectBranch>), CircuitError> {
    c.validate()?;
    let mut p = prepare(c, input, aux)?;
    apply_circuit(&mut p.state, c, &p.wire_map, cin, oracle)?;
    let qubits: Vec<usize> = c.final_measure.iter().map(|&w| p.wire_map[w]).collect();
    let dist = p.state.outcome_distribution(&qubits)?;
    let mut branches = Vec::new();
    for (y, prob) in dist {
        if prob < 1e-15 {
            continue;
        }
        let mut st = p.state.clone();
        st.project(&qubits, &y)?;
        branches.push(DirectBranch { outcome: y, probability: prob, state: st });
    }
    Ok((p, branches))
}

/// Samples one run of `c`; returns the outcome and the post-measurement state.
pub fn run_direct(
    c: &Circuit,
    input: &StateVector,
    aux: Option<&StateVector>,
    cin: &BitVec,
    oracle: Option<&OracleFn<'_>>,
    rng: &mut SplitRng,
) -> Result<(BitVec, StateVector), CircuitError> {
    c.validate()?;
    let mut p = prepare(c, input, aux)?;
    apply_circuit(&mut p.state, c, &p.wire_map, cin, oracle)?;
    let qubits: Vec<usize> = c.final_measure.iter().map(|&w| p.wire_map[w]).collect();
    let y = p.state.measure(&qubits, rng)?;
    Ok((y, p.state))
}

/// Outcome distribution of `c` with the reduced state of chosen qubits per outcome,
/// weighted by probability. `keep` indexes the [`prepare`] layout.
pub fn direct_weighted_marginals(
    c: &Circuit,
    input: &StateVector,
    aux: Option<&StateVector>,
    cin: &BitVec,
    keep: &[usize],
) -> Result<BTreeMap<BitVec, (f64, DensityMatrix)>, CircuitError> {
    let (_, branches) = direct_branches(c, input, aux, cin, None)?;
    let mut out = BTreeMap::new();
    for b in branches {
        let rho = b.state.reduced_density(keep)?.scaled(b.probability);
        out.insert(b.outcome, (b.probability, rho));
    }
    Ok(out)
}

/// Compares two oracle-free, measurement-free circuits on random states of all wires.
/// Returns the worst fidelity seen.
pub fn unitary_equivalent_up_to_phase(
    a: &Circuit,
    b: &Circuit,
    trials: usize,
    rng: &mut SplitRng,
) -> Result<f64, CircuitError> {
    if a.width() != b.width() || a.n_q != b.n_q {
        return Err(CircuitError::Unsupported("circuits have different widths".into()));
    }
    if a.n_c != 0 || b.n_c != 0 {
        return Err(CircuitError::Unsupported("classical inputs in equivalence check".into()));
    }
    let mut worst: f64 = 1.0;
    let map: Vec<usize> = (0..a.width()).collect();
    let empty = BitVec::zeros(0);
    for _ in 0..trials {
        let s = StateVector::random(a.width(), rng)?;
        let mut sa = s.clone();
        let mut sb = s;
        apply_circuit(&mut sa, a, &map, &empty, None)?;
        apply_circuit(&mut sb, b, &map, &empty, None)?;
        worst = worst.min(fidelity(&sa, &sb));
    }
    Ok(worst)
}

/// Replaces each oracle call by gates of `inner` using a single call-free swap trick.
///
/// The result adds registers `E` (the auxiliary wires of `inner`) and `B`
/// (one fresh zero wire per oracle input) after the auxiliary wires of `outer`.
/// A call `U` on `R` becomes `SWAP(B,R)`, `inner` on `(B,E)`, `SWAP(B,R)`,
/// `inner^dagger` on `(B,E)`; a call `Udag` runs the same pieces in the other order.
pub fn rewrite_oracle_program(outer: &Circuit, inner: &Circuit) -> Result<Circuit, CircuitError> {
    outer.validate()?;
    inner.validate()?;
    if inner.oracle_calls() > 0 || !inner.final_measure.is_empty() || inner.n_c > 0 {
        return Err(CircuitError::Unsupported("inner circuit must be a plain unitary circuit".into()));
    }
    let n = inner.n_q;
    let e0 = outer.width();
    let b0 = e0 + inner.n_aux;
    let mut out = Circuit::new(outer.n_q, outer.n_c, outer.n_aux + inner.n_aux + n);
    out.final_measure = outer.final_measure.clone();
    let to_be = |w: usize| if w < n { b0 + w } else { e0 + (w - n) };
    let fwd: Vec<Gate> = inner.gates().map(|g| g.remapped(&to_be)).collect();
    let inv_circ = inner.inverse()?;
    let bwd: Vec<Gate> = inv_circ.gates().map(|g| g.remapped(&to_be)).collect();
    for op in &outer.ops {
        match op {
            Op::Gate(g) => out.ops.push(Op::Gate(g.clone())),
            Op::Oracle { wires, dagger } => {
                if wires.len() != n {
                    return Err(CircuitError::OracleWidth { got: wires.len(), want: n });
                }
                let swaps: Vec<Gate> =
                    wires.iter().enumerate().map(|(k, &r)| Gate::new(GateKind::Swap, &[b0 + k, r])).collect();
                let (first, second) = if *dagger { (&bwd, &fwd) } else { (&fwd, &bwd) };
                if *dagger {
                    out.ops.extend(second.iter().cloned().map(Op::Gate));
                    out.ops.extend(swaps.iter().cloned().map(Op::Gate));
                    out.ops.extend(first.iter().cloned().map(Op::Gate));
                    out.ops.extend(swaps.iter().cloned().map(Op::Gate));
                } else {
                    out.ops.extend(swaps.iter().cloned().map(Op::Gate));
                    out.ops.extend(first.iter().cloned().map(Op::Gate));
                    out.ops.extend(swaps.iter().cloned().map(Op::Gate));
                    out.ops.extend(second.iter().cloned().map(Op::Gate));
                }
            }
        }
    }
    Ok(out)
}

/// Auxiliary state for a circuit produced by [`rewrite_oracle_program`].
pub fn rewritten_aux_state(
    outer: &Circuit,
    outer_aux: Option<&StateVector>,
    inner: &Circuit,
    inner_aux: Option<&StateVector>,
) -> Result<StateVector, CircuitError> {
    let a = match outer_aux {
        Some(s) => s.clone(),
        None => StateVector::zero(outer.n_aux)?,
    };
    let e = match inner_aux {
        Some(s) => s.clone(),
        None => StateVector::zero(inner.n_aux)?,
    };
    Ok(a.tensor(&e)?.tensor(&StateVector::zero(inner.n_q)?)?)
}

/// Worst fidelity between `outer` run with `inner` as its oracle and the rewritten
/// circuit, over `trials` random inputs entangled with one reference qubit.
///
/// The rewritten run is reduced to the input, reference and outer auxiliary
/// wires before comparison.
pub fn rewrite_fidelity(
    outer: &Circuit,
    outer_aux: Option<&StateVector>,
    inner: &Circuit,
    inner_aux: Option<&StateVector>,
    trials: usize,
    rng: &mut SplitRng,
) -> Result<f64, CircuitError> {
    if outer.n_c != 0 {
        return Err(CircuitError::Unsupported("classical inputs in rewrite check".into()));
    }
    let rewritten = rewrite_oracle_program(outer, inner)?;
    let aux = rewritten_aux_state(outer, outer_aux, inner, inner_aux)?;
    let oracle = circuit_oracle(inner, inner_aux);
    let empty = BitVec::zeros(0);
    let mut worst: f64 = 1.0;
    for _ in 0..trials {
        let input = StateVector::random(outer.n_q + 1, rng)?;
        let mut want = prepare(outer, &input, outer_aux)?;
        apply_circuit(&mut want.state, outer, &want.wire_map, &empty, Some(&oracle))?;
        let mut got = prepare(&rewritten, &input, Some(&aux))?;
        apply_circuit(&mut got.state, &rewritten, &got.wire_map, &empty, None)?;
        let keep: Vec<usize> = (0..want.state.num_qubits()).collect();
        let rho = got.state.reduced_density(&keep)?;
        worst = worst.min(rho.fidelity_with(&want.state));
    }
    Ok(worst)
}

/// Controlled `U^dagger A U` built from controlled swaps.
///
/// `inner` is `U` on `n` wires; `a` acts on `n + d` wires. The result has
/// inputs `[control, B (n), D (d)]` and auxiliary wires `[C (n), E]`, where `C`
/// starts and ends in `|0>` and `E` is the auxiliary register of `inner`.
/// With the control at 1 it applies `U^dagger A U` to `(B, D)`; at 0 it is the identity.
pub fn ctrl_swap_sandwich(inner: &Circuit, a: &Circuit) -> Result<Circuit, CircuitError> {
    inner.validate()?;
    a.validate()?;
    if inner.oracle_calls() > 0 || a.oracle_calls() > 0 || inner.n_c > 0 || a.n_c > 0 {
        return Err(CircuitError::Unsupported("sandwich pieces must be plain unitary circuits".into()));
    }
    if a.n_aux > 0 || !a.final_measure.is_empty() || !inner.final_measure.is_empty() {
        return Err(CircuitError::Unsupported("sandwich pieces must be measurement-free".into()));
    }
    let n = inner.n_q;
    if a.n_q < n {
        return Err(CircuitError::OracleWidth { got: a.n_q, want: n });
    }
    let d = a.n_q - n;
    let ctrl = 0;
    let b0 = 1;
    let d0 = 1 + n;
    let c0 = 1 + n + d;
    let e0 = c0 + n;
    let mut out = Circuit::new(1 + n + d, 0, n + inner.n_aux);
    let on_b = |w: usize| if w < n { b0 + w } else { e0 + (w - n) };
    let u: Vec<Gate> = inner.gates().map(|g| g.remapped(&on_b).controlled_by(ctrl)).collect();
    let inv = inner.inverse()?;
    let udag: Vec<Gate> = inv.gates().map(|g| g.remapped(&on_b).controlled_by(ctrl)).collect();
    let swaps: Vec<Gate> =
        (0..n).map(|k| Gate::new(GateKind::Swap, &[b0 + k, c0 + k]).controlled_by(ctrl)).collect();
    let on_cd = |w: usize| if w < n { c0 + w } else { d0 + (w - n) };
    let a_gates: Vec<Gate> = a.gates().map(|g| g.remapped(&on_cd).controlled_by(ctrl)).collect();
    let block = |out: &mut Circuit| {
        out.ops.extend(u.iter().cloned().map(Op::Gate));
        out.ops.extend(swaps.iter().cloned().map(Op::Gate));
        out.ops.extend(udag.iter().cloned().map(Op::Gate));
    };
    block(&mut out);
    out.ops.extend(a_gates.into_iter().map(Op::Gate));
    block(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_round_trip() {
        let text = "qubits 2\ncin 1\naux 1\nH 0\nCNOT 0 1\ncX 1 @0\nT 2 ctrl 0\nU 0 1\nUdag 1 0\nmeasure 0 1\n";
        let c = Circuit::parse(text).unwrap();
        assert_eq!(c.to_text(), text);
        assert_eq!(Circuit::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = Circuit::parse("qubits 1\nFOO 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        assert!(Circuit::parse("qubits 1\nCNOT 0\n").is_err());
        assert!(Circuit::parse("qubits 1\ncX 0\n").is_err());
        assert!(Circuit::parse("qubits 1\nH 3\n").is_err());
    }

    #[test]
    fn inverse_undoes_circuit() {
        let c = Circuit::parse("qubits 2\nH 0\nT 0\nCNOT 0 1\nS 1\nSWAP 0 1\n").unwrap();
        let mut both = c.clone();
        both.ops.extend(c.inverse().unwrap().ops);
        let id = Circuit::new(2, 0, 0);
        let f = unitary_equivalent_up_to_phase(&both, &id, 5, &mut SplitRng::new(1)).unwrap();
        assert!(f > 1.0 - 1e-12);
    }

    #[test]
    fn classical_control_follows_input() {
        let c = Circuit::parse("qubits 1\ncin 1\ncX 0 @0\nmeasure 0\n").unwrap();
        let input = StateVector::zero(1).unwrap();
        for b in [false, true] {
            let (_, br) = direct_branches(&c, &input, None, &BitVec::from_bools(&[b]), None).unwrap();
            assert_eq!(br.len(), 1);
            assert_eq!(br[0].outcome.get(0), b);
        }
    }

    #[test]
    fn controlled_swap_is_fredkin() {
        let c = Circuit::parse("qubits 3\nSWAP 1 2 ctrl 0\n").unwrap();
        let map = [0, 1, 2];
        for idx in 0u64..8 {
            let mut s = StateVector::basis(3, idx).unwrap();
            apply_circuit(&mut s, &c, &map, &BitVec::zeros(0), None).unwrap();
            let expect = if idx & 4 != 0 { (idx & 4) | ((idx & 1) << 1) | ((idx >> 1) & 1) } else { idx };
            assert!((s.amplitude(expect).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rewriting_matches_oracle_semantics() {
        let mut rng = SplitRng::new(3);
        let inner = Circuit::parse("qubits 1\naux 1\nCNOT 0 1\nT 0\nCNOT 0 1\nH 0\n").unwrap();
        for text in [
            "qubits 1\nU 0\n",
            "qubits 1\nU 0\nUdag 0\n",
            "qubits 2\naux 1\nH 1\nU 0\nCNOT 0 2\nUdag 1\nS 0\nU 1\n",
        ] {
            let outer = Circuit::parse(text).unwrap();
            let f = rewrite_fidelity(&outer, None, &inner, None, 10, &mut rng).unwrap();
            assert!(f > 1.0 - 1e-9, "{text}: {f}");
        }
    }

    #[test]
    fn rewriting_u_then_udag_is_identity() {
        let inner = Circuit::parse("qubits 2\nH 0\nCNOT 0 1\nT 1\n").unwrap();
        let outer = Circuit::parse("qubits 2\nU 0 1\nUdag 0 1\n").unwrap();
        let rewritten = rewrite_oracle_program(&outer, &inner).unwrap();
        let aux = rewritten_aux_state(&outer, None, &inner, None).unwrap();
        let mut rng = SplitRng::new(4);
        let map: Vec<usize> = (0..rewritten.width()).collect();
        for _ in 0..10 {
            let input = StateVector::random(2, &mut rng).unwrap();
            let mut s = input.tensor(&aux).unwrap();
            apply_circuit(&mut s, &rewritten, &map, &BitVec::zeros(0), None).unwrap();
            let rho = s.reduced_density(&[0, 1]).unwrap();
            assert!(rho.fidelity_with(&input) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn rewriting_rejects_width_mismatch() {
        let inner = Circuit::parse("qubits 2\nH 0\n").unwrap();
        let outer = Circuit::parse("qubits 1\nU 0\n").unwrap();
        assert!(matches!(rewrite_oracle_program(&outer, &inner), Err(CircuitError::OracleWidth { .. })));
    }
}
