//! Self-test suites. Each case reports a metric that passes when it is at most its tolerance.

use std::collections::BTreeMap;

use plmforge_core::auth::{dec, enc, eval_lift, keygen, pauli_key_update, ver, AuthKey};
use plmforge_core::circuit::{
    apply_circuit, ctrl_swap_sandwich, direct_weighted_marginals, rewrite_fidelity, Circuit, GateKind,
};
use plmforge_core::f2::{least_coset_complement, random_subspace, BitVec, Subspace};
use plmforge_core::func::{BitExpr, ClassicalFn, Expr};
use plmforge_core::gadget::{apply_gadget, basis_state, gadget, run_steps, Frame, GadgetKind, Outcomes};
use plmforge_core::obf::{qeval, qobf, sim_package, EvalOptions, ObfError, ObfParams};
use plmforge_core::plm::{compile, output_projector_identity_check, plm_weighted_marginals, projectivity_check};
use plmforge_core::rng::SplitRng;
use plmforge_core::statevec::{fidelity, StateVector, C64};
use plmforge_core::teleport::{epr_pairs, recv, send, send_forced, Pauli};
use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub name: String,
    pub metric: f64,
    pub tolerance: f64,
}

impl Case {
    pub fn new(name: impl Into<String>, metric: f64, tolerance: f64) -> Case {
        Case { name: name.into(), metric, tolerance }
    }

    /// NaN metrics fail.
    pub fn pass(&self) -> bool {
        self.metric <= self.tolerance
    }

    fn failed(name: impl Into<String>) -> Case {
        Case::new(name, f64::INFINITY, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    F2,
    Statevec,
    Gadgets,
    Plm,
    Auth,
    Teleport,
    E2e,
    SimEquiv,
}

impl Suite {
    pub const ALL: [Suite; 8] =
        [Suite::F2, Suite::Statevec, Suite::Gadgets, Suite::Plm, Suite::Auth, Suite::Teleport, Suite::E2e, Suite::SimEquiv];

    pub fn name(self) -> &'static str {
        match self {
            Suite::F2 => "f2",
            Suite::Statevec => "statevec",
            Suite::Gadgets => "gadgets",
            Suite::Plm => "plm",
            Suite::Auth => "auth",
            Suite::Teleport => "teleport",
            Suite::E2e => "e2e",
            Suite::SimEquiv => "sim-equiv",
        }
    }

    pub fn from_name(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Numbered acceptance criteria covered by the suite.
    pub fn criteria(self) -> &'static [u32] {
        match self {
            Suite::F2 | Suite::Statevec => &[],
            Suite::Gadgets => &[1, 2],
            Suite::Plm => &[3, 4, 10],
            Suite::Auth => &[5, 6],
            Suite::Teleport => &[7],
            Suite::E2e => &[8],
            Suite::SimEquiv => &[9],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    pub seed: u64,
    pub params: ObfParams,
}

impl Config {
    pub fn new(seed: u64) -> Config {
        Config { seed, params: ObfParams::default() }
    }

    fn rng(&self, stream: u64) -> SplitRng {
        SplitRng::new(self.seed).child(stream)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Obf(#[from] ObfError),
    #[error("{0}")]
    Other(String),
}

macro_rules! impl_from_other {
    ($($t:ty),*) => {$(
        impl From<$t> for SuiteError {
            fn from(e: $t) -> Self {
                SuiteError::Other(e.to_string())
            }
        }
    )*};
}

impl_from_other!(
    plmforge_core::statevec::StateError,
    plmforge_core::circuit::CircuitError,
    plmforge_core::plm::PlmError,
    plmforge_core::auth::AuthError
);

type Result<T> = std::result::Result<T, SuiteError>;

/// Runs one numbered criterion. Internal errors become a single failing case.
pub fn criterion(n: u32, cfg: &Config) -> Vec<Case> {
    let out = match n {
        1 => gadget_correctness(cfg),
        2 => deterministic_bases(cfg),
        3 => compiler_distributions(cfg),
        4 => projectivity(cfg),
        5 => auth_diagram(cfg),
        6 => key_update(cfg),
        7 => teleportation(cfg),
        8 => end_to_end(cfg),
        9 => sim_equivalence(cfg),
        10 => rewriting(cfg),
        _ => Err(SuiteError::Other(format!("no criterion {n}"))),
    };
    out.unwrap_or_else(|e| vec![Case::failed(format!("c{n}/error: {e}"))])
}

pub fn run_suite(suite: Suite, cfg: &Config) -> Vec<Case> {
    let mut cases = match suite {
        Suite::F2 => f2_cases(cfg),
        Suite::Statevec => statevec_cases(cfg),
        _ => suite.criteria().iter().flat_map(|&n| criterion(n, cfg)).collect(),
    };
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    cases
}

fn metric_json(m: f64) -> Value {
    if m.is_finite() {
        json!(m)
    } else {
        Value::Null
    }
}

pub fn report_json(suite: Suite, seed: u64, cases: &[Case], wall_ms: Option<u128>) -> Value {
    let cs: Vec<Value> = cases
        .iter()
        .map(|c| json!({"name": c.name, "pass": c.pass(), "metric": metric_json(c.metric), "tolerance": c.tolerance}))
        .collect();
    json!({"suite": suite.name(), "seed": seed, "cases": cs, "wall_ms": wall_ms})
}

fn worst(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

fn ideal_gate(kind: GadgetKind, s: &mut StateVector, inputs: &[usize]) {
    match kind {
        GadgetKind::H => s.h(inputs[0]),
        GadgetKind::T => s.t(inputs[0]),
        GadgetKind::Cnot => s.cnot(inputs[0], inputs[1]),
    }
}

const KINDS: [GadgetKind; 3] = [GadgetKind::H, GadgetKind::Cnot, GadgetKind::T];

fn gadget_correctness(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(1);
    let mut cases = Vec::new();
    for kind in KINDS {
        let g = gadget(kind);
        let inputs: Vec<usize> = (0..g.n_in).collect();
        let steps = g.steps.len();
        let mut infid: f64 = 0.0;
        let mut mass: f64 = 0.0;
        for trial in 0..100u64 {
            let psi = StateVector::random(g.n_in + 1, &mut rng)?;
            let fbits = BitVec::from_u64(trial % (1 << (2 * g.n_in)), 2 * g.n_in);
            let frame = Frame {
                z: (0..g.n_in).map(|k| fbits.get(k)).collect(),
                x: (0..g.n_in).map(|k| fbits.get(g.n_in + k)).collect(),
            };
            let mut noisy = psi.clone();
            for k in 0..g.n_in {
                noisy.pauli(k, frame.z[k], frame.x[k]);
            }
            let mut want = psi;
            ideal_gate(kind, &mut want, &inputs);
            let mut total = 0.0;
            for v in 0u64..1 << steps {
                let labels = BitVec::from_u64(v, steps);
                let run = apply_gadget(&g, &noisy, &inputs, &frame, Outcomes::Forced(&labels))?;
                total += run.probability;
                if run.probability < 1e-12 {
                    continue;
                }
                let mut keep = run.outputs.clone();
                keep.push(g.n_in);
                let rho = run.state.reduced_density(&keep)?;
                infid = infid.max(1.0 - rho.fidelity_with(&want));
            }
            mass = mass.max((total - 1.0).abs());
        }
        cases.push(Case::new(format!("c1/{}/infidelity", kind.name()), infid, 1e-10));
        cases.push(Case::new(format!("c1/{}/branch-mass", kind.name()), mass, 1e-10));
    }
    Ok(cases)
}

fn deterministic_bases(_cfg: &Config) -> Result<Vec<Case>> {
    let mut cases = Vec::new();
    for kind in KINDS {
        let g = gadget(kind);
        let m = g.measured.len();
        let frames: &[bool] = if kind == GadgetKind::T { &[false, true] } else { &[false] };
        let mut det: f64 = 0.0;
        let mut complete: f64 = 0.0;
        for &fxb in frames {
            let mut frame = Frame::zero(g.n_in);
            frame.x[0] = fxb;
            let states: Vec<StateVector> = (0u64..1 << m)
                .map(|v| {
                    let lab = BitVec::from_u64(v, m);
                    basis_state(kind, &lab, lab.get(0) ^ fxb)
                })
                .collect();
            let mut qubit_of = vec![None; g.n_local()];
            for (pos, &k) in g.measured.iter().enumerate() {
                qubit_of[k] = Some(pos);
            }
            for (v, st) in states.iter().enumerate() {
                let lab = BitVec::from_u64(v as u64, m);
                let mut s = st.clone();
                let (_, p) = run_steps(&g, &mut s, &qubit_of, &frame, Outcomes::Forced(&lab))?;
                det = det.max((p - 1.0).abs());
            }
            let d = 1usize << m;
            for a in 0..d {
                for b in 0..d {
                    let sum: C64 = states.iter().map(|s| s.amplitudes()[a] * s.amplitudes()[b].conj()).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    complete = complete.max((sum - C64::new(want, 0.0)).norm());
                }
            }
            for (u, a) in states.iter().enumerate() {
                for (v, b) in states.iter().enumerate() {
                    let want = if u == v { 1.0 } else { 0.0 };
                    complete = complete.max((a.inner(b).norm() - want).abs());
                }
            }
        }
        let count = frames.len() << m;
        cases.push(Case::new(format!("c2/{}/deterministic-{count}", kind.name()), det, 1e-10));
        cases.push(Case::new(format!("c2/{}/orthonormal-complete", kind.name()), complete, 1e-10));
    }
    Ok(cases)
}

/// Circuits with one T gate and a classically controlled gate each.
pub const COMPILER_CIRCUITS: [(&str, &str); 6] = [
    ("h-t-cx", "qubits 1\ncin 1\nH 0\nT 0\ncX 0 @0\nmeasure 0\n"),
    ("cz-t-h", "qubits 1\ncin 1\ncZ 0 @0\nT 0\nH 0\nmeasure 0\n"),
    ("cz-t-cx", "qubits 1\ncin 2\ncZ 0 @1\nT 0\ncX 0 @0\nmeasure 0\n"),
    ("t-cnot-cx", "qubits 2\ncin 1\nT 0\nCNOT 0 1\ncX 1 @0\nmeasure 0 1\n"),
    ("cx-t-cnot", "qubits 2\ncin 1\ncX 0 @0\nT 0\nCNOT 0 1\nmeasure 0 1\n"),
    ("cx-t-cz", "qubits 2\ncin 2\ncX 0 @0\nT 1\ncZ 1 @1\nmeasure 0 1\n"),
];

fn all_inputs(n: usize) -> impl Iterator<Item = BitVec> {
    (0u64..1 << n).map(move |v| BitVec::from_u64(v, n))
}

fn compiler_distributions(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(3);
    let mut cases = Vec::new();
    for (name, text) in COMPILER_CIRCUITS {
        let q = Circuit::parse(text)?;
        let p = compile(&q)?;
        let mut dist: f64 = 0.0;
        let mut reference: f64 = 0.0;
        for i in all_inputs(q.n_c) {
            // Inputs entangled with one reference qubit.
            let input = StateVector::random(q.n_q + 1, &mut rng)?;
            let want = direct_weighted_marginals(&q, &input, None, &i, &[q.n_q])?;
            let got = plm_weighted_marginals(&p, &i, &input, None)?;
            for y in want.keys().chain(got.keys()) {
                let (pw, rw) = want.get(y).map(|(a, b)| (*a, Some(b))).unwrap_or((0.0, None));
                let (pg, rg) = got.get(y).map(|(a, b)| (*a, Some(b))).unwrap_or((0.0, None));
                dist = dist.max((pw - pg).abs());
                let diff = match (rw, rg) {
                    (Some(a), Some(b)) => a.max_abs_diff(b),
                    (Some(a), None) | (None, Some(a)) => a.trace().norm(),
                    (None, None) => 0.0,
                };
                reference = reference.max(diff);
            }
        }
        cases.push(Case::new(format!("c3/{name}/distribution"), dist, 1e-9));
        cases.push(Case::new(format!("c3/{name}/reference-state"), reference, 1e-9));
    }
    Ok(cases)
}

fn projectivity(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(4);
    let mut cases = Vec::new();
    let extra = [("h", "qubits 1\nH 0\nmeasure 0\n"), ("cnot", "qubits 2\nCNOT 0 1\nmeasure 0 1\n")];
    for (name, text) in COMPILER_CIRCUITS.iter().chain(extra.iter()) {
        let q = Circuit::parse(text)?;
        let p = compile(&q)?;
        if p.t() > 10 {
            continue;
        }
        let mut proj: f64 = 0.0;
        let mut ident: f64 = 0.0;
        for i in all_inputs(q.n_c) {
            proj = proj.max(projectivity_check(&p, &i, 2, &mut rng)?.max_deviation);
            ident = ident.max(output_projector_identity_check(&p, &q, &i, 2, &mut rng)?.max_deviation);
        }
        cases.push(Case::new(format!("c4/{name}/projectivity"), proj, 1e-8));
        cases.push(Case::new(format!("c4/{name}/output-projectors"), ident, 1e-8));
    }
    Ok(cases)
}

fn random_expr(n: usize, depth: usize, rng: &mut SplitRng) -> BitExpr {
    if depth == 0 || rng.below(3) == 0 {
        return BitExpr::select(rng.below(n));
    }
    match rng.below(3) {
        0 => Expr::xor2(random_expr(n, depth - 1, rng), random_expr(n, depth - 1, rng)),
        1 => Expr::and(random_expr(n, depth - 1, rng), random_expr(n, depth - 1, rng)),
        _ => Expr::mux(random_expr(n, depth - 1, rng), random_expr(n, depth - 1, rng), random_expr(n, depth - 1, rng)),
    }
}

/// Projective measurement of a classical function of the first `nbits` qubits
/// in the frame `(theta, cnots)`. Returns each outcome with its probability and
/// normalised post-measurement state in the original frame.
fn frame_measure<K: Ord + Clone>(
    s: &StateVector,
    theta: &BitVec,
    cnots: &[(usize, usize)],
    nbits: usize,
    classify: impl Fn(&BitVec) -> K,
) -> BTreeMap<K, (f64, StateVector)> {
    let mut t = s.clone();
    for &(a, b) in cnots {
        t.cnot(a, b);
    }
    for q in (0..theta.len()).filter(|&q| theta.get(q)) {
        t.h(q);
    }
    let qubits: Vec<usize> = (0..nbits).collect();
    let key = |idx: usize| classify(&t.bits_of(idx, &qubits));
    let dist = t.distribution_by(&key);
    let mut out = BTreeMap::new();
    for (k, p) in dist {
        if p < 1e-14 {
            continue;
        }
        let mut u = t.clone();
        u.project_by(&|idx| classify(&t.bits_of(idx, &qubits)), &k, true);
        for q in (0..theta.len()).filter(|&q| theta.get(q)) {
            u.h(q);
        }
        for &(a, b) in cnots.iter().rev() {
            u.cnot(a, b);
        }
        out.insert(k, (p, u));
    }
    out
}

fn random_cnots(n: usize, rng: &mut SplitRng) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    (0..rng.below(4))
        .map(|_| {
            let a = rng.below(n);
            let b = (a + 1 + rng.below(n - 1)) % n;
            (a, b)
        })
        .collect()
}

fn auth_diagram(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(5);
    let mut cases = Vec::new();
    for lambda in 1..=2 {
        for n in 1..=2 {
            let (mut dist, mut post, mut accept): (f64, f64, f64) = (0.0, 0.0, 0.0);
            for _ in 0..20 {
                let key = keygen(lambda, n, &mut rng);
                let theta = BitVec::random(n, &mut rng);
                let cnots = random_cnots(n, &mut rng);
                let f = ClassicalFn::single(random_expr(n, 2, &mut rng));
                let psi = StateVector::random(n + 1, &mut rng)?;
                let none = BitVec::zeros(0);
                let eval = |v: &BitVec| f.eval(v, &none, &none).map(|b| b.get(0)).unwrap_or(false);
                let plain = frame_measure(&psi, &theta, &cnots, n, |v| Some(eval(v)));
                let (t, g) = eval_lift(lambda, &theta, &cnots);
                let cipher_in = enc(&key, &psi)?;
                let decode = |c: &BitVec| -> Option<bool> {
                    let w = dec(&key, &theta, &cnots, c).ok()?;
                    (!w.bot).then(|| eval(&w.bits))
                };
                let cipher = frame_measure(&cipher_in, &t, &g, n * key.p(), decode);
                for k in plain.keys().chain(cipher.keys()) {
                    let a = plain.get(k).map_or(0.0, |x| x.0);
                    let b = cipher.get(k).map_or(0.0, |x| x.0);
                    dist = dist.max((a - b).abs());
                }
                for (k, (_, ps)) in &plain {
                    let fid = match cipher.get(k) {
                        Some((_, cs)) => fidelity(&enc(&key, ps)?, cs),
                        None => 0.0,
                    };
                    post = post.max(1.0 - fid);
                }
                let ok: f64 = cipher.iter().filter(|(k, _)| k.is_some()).map(|(_, v)| v.0).sum();
                accept = accept.max((1.0 - ok).abs());
            }
            let tag = format!("lambda{lambda}-n{n}");
            cases.push(Case::new(format!("c5/{tag}/distribution"), dist, 1e-9));
            cases.push(Case::new(format!("c5/{tag}/post-state"), post, 1e-9));
            cases.push(Case::new(format!("c5/{tag}/ver-rejection"), accept, 1e-12));
        }
    }
    Ok(cases)
}

fn ver_mismatches(a: &AuthKey, b: &AuthKey, strings: &[BitVec]) -> Result<usize> {
    let mut bad = 0;
    for th in [false, true] {
        let theta = BitVec::from_bools(&[th]);
        for c in strings {
            if ver(a, &theta, &[], c)? != ver(b, &theta, &[], c)? {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

fn key_update(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(6);
    let mut cases = Vec::new();
    let phases = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
    for lambda in 1..=2 {
        let key = keygen(lambda, 1, &mut rng);
        let p = key.p();
        let strings: Vec<BitVec> = if lambda == 1 {
            (0u64..1 << p).map(|v| BitVec::from_u64(v, p)).collect()
        } else {
            (0..1000).map(|_| BitVec::random(p, &mut rng)).collect()
        };
        let mut infid: f64 = 0.0;
        let mut mismatches = 0;
        let mut count = 0;
        for pauli in Pauli::all(1) {
            let updated = pauli_key_update(&key, &pauli)?;
            for phase in phases {
                let psi = StateVector::random(2, &mut rng)?;
                let mut moved = psi.clone();
                pauli.apply(&mut moved, &[0]);
                moved.scale(phase);
                let f = fidelity(&enc(&key, &moved)?, &enc(&updated, &psi)?);
                infid = infid.max((1.0 - f).abs());
                count += 1;
            }
            mismatches += ver_mismatches(&key, &updated, &strings)?;
        }
        cases.push(Case::new(format!("c6/lambda{lambda}/encoding-{count}-paulis"), infid, 1e-10));
        let how = if lambda == 1 { "exhaustive" } else { "sampled" };
        cases.push(Case::new(format!("c6/lambda{lambda}/ver-{how}-mismatches"), mismatches as f64, 0.0));
    }
    Ok(cases)
}

fn teleportation(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(7);
    let mut cases = Vec::new();
    for n in 1..=2usize {
        let msg: Vec<usize> = (0..n).collect();
        let left: Vec<usize> = (n + 1..2 * n + 1).collect();
        let right: Vec<usize> = (2 * n + 1..3 * n + 1).collect();
        let mut infid: f64 = 0.0;
        let mut prob: f64 = 0.0;
        for _ in 0..10 {
            let psi = StateVector::random(n + 1, &mut rng)?;
            let joint = psi.tensor(&epr_pairs(n)?)?;
            for key in Pauli::all(n) {
                let mut s = joint.clone();
                let pr = send_forced(&mut s, &msg, &left, &key)?;
                prob = prob.max((pr - 1.0 / (1 << (2 * n)) as f64).abs());
                recv(&mut s, &key, &right);
                let mut keep = right.clone();
                keep.push(n);
                infid = infid.max(1.0 - s.reduced_density(&keep)?.fidelity_with(&psi));
            }
        }
        cases.push(Case::new(format!("c7/n{n}/round-trip-infidelity"), infid, 1e-10));
        cases.push(Case::new(format!("c7/n{n}/branch-probability"), prob, 1e-12));
    }
    let runs = 10_000usize;
    let psi = StateVector::random(2, &mut rng)?;
    let joint = psi.tensor(&epr_pairs(1)?)?;
    let mut counts = [0usize; 4];
    for _ in 0..runs {
        let mut s = joint.clone();
        let key = send(&mut s, &[0], &[2], &mut rng)?;
        counts[key.label().to_u64() as usize] += 1;
    }
    let (mean, sigma) = (runs as f64 / 4.0, (runs as f64 * 0.25 * 0.75).sqrt());
    let z = worst(counts.iter().map(|&c| (c as f64 - mean).abs() / sigma));
    cases.push(Case::new("c7/n1/uniformity-sigmas", z, 3.0));
    Ok(cases)
}

/// Single-qubit programs for the end-to-end criteria.
pub const E2E_PROGRAMS: [(&str, &[GateKind]); 8] = [
    ("I", &[]),
    ("X", &[GateKind::X]),
    ("Z", &[GateKind::Z]),
    ("H", &[GateKind::H]),
    ("S", &[GateKind::S]),
    ("T", &[GateKind::T]),
    ("HT", &[GateKind::H, GateKind::T]),
    ("TH", &[GateKind::T, GateKind::H]),
];

pub fn program(gates: &[GateKind]) -> Circuit {
    let mut c = Circuit::new(1, 0, 0);
    for &g in gates {
        c.gate(g, &[0]);
    }
    c
}

/// `U` applied to the first qubits of `input`; the rest are a reference.
pub fn ideal_output(q: &Circuit, input: &StateVector) -> Result<StateVector> {
    let mut s = input.clone();
    let map: Vec<usize> = (0..q.width()).collect();
    apply_circuit(&mut s, q, &map, &BitVec::zeros(0), None)?;
    Ok(s)
}

fn is_rejection(e: &ObfError) -> bool {
    matches!(e, ObfError::Rejected { .. })
}

fn end_to_end(cfg: &Config) -> Result<Vec<Case>> {
    let params = ObfParams { lambda: 1, ..cfg.params.clone() };
    let mut cases = Vec::new();
    for (k, (name, gates)) in E2E_PROGRAMS.iter().enumerate() {
        let mut rng = cfg.rng(800 + k as u64);
        let q = program(gates);
        let mut infid: f64 = 0.0;
        let mut bots = 0usize;
        for trial in 0..50 {
            // The last input is entangled with a reference qubit.
            let input =
                if trial == 49 { StateVector::random(2, &mut rng)? } else { StateVector::random(1, &mut rng)? };
            let mut pkg = qobf(&q, None, &params, &mut rng)?;
            match qeval(&mut pkg, &input, &EvalOptions::default(), &mut rng) {
                Ok(ev) => {
                    bots += ev.transcript.responses.iter().filter(|w| w.bot).count();
                    infid = infid.max(1.0 - fidelity(&ev.output, &ideal_output(&q, &input)?));
                }
                Err(e) if is_rejection(&e) => {
                    bots += 1;
                    infid = 1.0;
                }
                Err(e) => return Err(e.into()),
            }
        }
        cases.push(Case::new(format!("c8/{name}/infidelity"), infid, 1e-3));
        cases.push(Case::new(format!("c8/{name}/bottom-events"), bots as f64, 0.0));
    }
    Ok(cases)
}

fn tv<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    0.5 * keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

fn accumulate<K: Ord + Clone>(acc: &mut BTreeMap<K, f64>, d: &BTreeMap<K, f64>, w: f64) {
    for (k, v) in d {
        *acc.entry(k.clone()).or_insert(0.0) += v * w;
    }
}

/// Trials per program for the real-versus-simulated comparison.
pub const SIM_TRIALS: usize = 200;

fn sim_equivalence(cfg: &Config) -> Result<Vec<Case>> {
    let params = ObfParams { lambda: 1, ..cfg.params.clone() };
    let opts = EvalOptions { tail: 2, ..Default::default() };
    let w = 1.0 / SIM_TRIALS as f64;
    let mut cases = Vec::new();
    for (k, (name, gates)) in E2E_PROGRAMS.iter().enumerate() {
        let mut rng = cfg.rng(900 + k as u64);
        let q = program(gates);
        let mut infid: f64 = 0.0;
        let (mut real_in, mut sim_in) = (BTreeMap::new(), BTreeMap::new());
        let (mut real_out, mut sim_out) = (BTreeMap::new(), BTreeMap::new());
        for _ in 0..SIM_TRIALS {
            let input = StateVector::random(2, &mut rng)?;
            let mut real = qobf(&q, None, &params, &mut rng)?;
            let mut sim = sim_package(&real.public, &q, None, &params, &mut rng)?;
            let a = qeval(&mut real, &input, &opts, &mut rng)?;
            let b = qeval(&mut sim, &input, &opts, &mut rng)?;
            infid = infid.max(1.0 - fidelity(&a.output, &b.output));
            accumulate(&mut real_in, &a.transcript.input_distribution, w);
            accumulate(&mut sim_in, &b.transcript.input_distribution, w);
            accumulate(&mut real_out, &a.transcript.final_distribution, w);
            accumulate(&mut sim_out, &b.transcript.final_distribution, w);
        }
        cases.push(Case::new(format!("c9/{name}/output-infidelity"), infid, 1e-2));
        cases.push(Case::new(format!("c9/{name}/input-key-tv"), tv(&real_in, &sim_in), 0.05));
        cases.push(Case::new(format!("c9/{name}/final-label-tv"), tv(&real_out, &sim_out), 0.05));
    }
    Ok(cases)
}

/// Outer programs with at most three oracle calls.
pub const REWRITE_OUTERS: [(&str, &str); 5] = [
    ("single-call", "qubits 1\nU 0\n"),
    ("u-then-udag", "qubits 1\nU 0\nUdag 0\n"),
    ("alternating-3", "qubits 1\nU 0\nUdag 0\nU 0\n"),
    ("two-wires", "qubits 2\nH 1\nU 0\nCNOT 0 1\nUdag 1\nS 0\nU 1\n"),
    ("with-aux", "qubits 1\naux 1\nH 1\nCNOT 1 0\nU 1\nT 0\nUdag 0\n"),
];

/// Exact single-wire programs: H, and T computed through one auxiliary wire.
pub const REWRITE_INNERS: [(&str, &str); 2] =
    [("h", "qubits 1\nH 0\n"), ("aux-t-h", "qubits 1\naux 1\nCNOT 0 1\nT 0\nCNOT 0 1\nH 0\n")];

fn rewriting(cfg: &Config) -> Result<Vec<Case>> {
    let mut rng = cfg.rng(10);
    let mut cases = Vec::new();
    for (iname, itext) in REWRITE_INNERS {
        let inner = Circuit::parse(itext)?;
        for (oname, otext) in REWRITE_OUTERS {
            let outer = Circuit::parse(otext)?;
            let f = rewrite_fidelity(&outer, None, &inner, None, 50, &mut rng)?;
            cases.push(Case::new(format!("c10/{iname}/{oname}"), 1.0 - f, 1e-9));
        }
    }
    // U followed by U-dagger against the empty circuit.
    let inner = Circuit::parse("qubits 2\nH 0\nCNOT 0 1\nT 1\n")?;
    let outer = Circuit::parse("qubits 2\nU 0 1\nUdag 0 1\n")?;
    let rewritten = plmforge_core::circuit::rewrite_oracle_program(&outer, &inner)?;
    let aux = plmforge_core::circuit::rewritten_aux_state(&outer, None, &inner, None)?;
    let map: Vec<usize> = (0..rewritten.width()).collect();
    let mut infid: f64 = 0.0;
    for _ in 0..50 {
        let input = StateVector::random(3, &mut rng)?;
        let mut s = input.clone();
        s = s.tensor(&aux)?;
        let shifted: Vec<usize> = map.iter().map(|&w| if w < 2 { w } else { w + 1 }).collect();
        apply_circuit(&mut s, &rewritten, &shifted, &BitVec::zeros(0), None)?;
        infid = infid.max(1.0 - s.reduced_density(&[0, 1, 2])?.fidelity_with(&input));
    }
    cases.push(Case::new("c10/identity/u-udag", infid, 1e-9));
    cases.push(sandwich_case(&mut rng)?);
    Ok(cases)
}

/// Controlled `U^dagger A U` with the control off is the identity, and with it on
/// matches the direct product.
fn sandwich_case(rng: &mut SplitRng) -> Result<Case> {
    let u = Circuit::parse("qubits 1\naux 1\nCNOT 0 1\nT 0\nCNOT 0 1\nH 0\n")?;
    let a = Circuit::parse("qubits 2\nCNOT 0 1\nS 1\n")?;
    let c = ctrl_swap_sandwich(&u, &a)?;
    // The auxiliary-wire program above computes H T on its input.
    let ht = Circuit::parse("qubits 2\nT 0\nH 0\n")?;
    let mut direct = ht.clone();
    direct.ops.extend(a.ops.iter().cloned());
    direct.ops.extend(ht.inverse()?.ops);
    let zero = StateVector::zero(c.n_aux)?;
    let map: Vec<usize> = (0..c.width()).collect();
    let none = BitVec::zeros(0);
    let mut dev: f64 = 0.0;
    for ctrl in [false, true] {
        for _ in 0..20 {
            let target = StateVector::random(2, rng)?;
            let mut s = StateVector::basis(1, ctrl as u64)?.tensor(&target)?.tensor(&zero)?;
            apply_circuit(&mut s, &c, &map, &none, None)?;
            let mut want = target.clone();
            if ctrl {
                apply_circuit(&mut want, &direct, &[0, 1], &none, None)?;
            }
            dev = dev.max(1.0 - s.reduced_density(&[1, 2])?.fidelity_with(&want));
        }
    }
    Ok(Case::new("c10/sandwich/controlled-conjugation", dev, 1e-10))
}

fn f2_cases(cfg: &Config) -> Vec<Case> {
    let mut rng = cfg.rng(11);
    let mut canon = 0usize;
    let mut comp = 0usize;
    let mut least = 0usize;
    for d in 1..=7usize {
        for _ in 0..10 {
            let k = rng.below(d + 1);
            let s = random_subspace(d, k, &mut rng);
            let mut gens: Vec<BitVec> = s.basis().to_vec();
            gens.push(s.random_element(&mut rng));
            gens.reverse();
            if Subspace::span(d, &gens) != s {
                canon += 1;
            }
            let brute: Vec<BitVec> = (0u64..1 << d)
                .map(|v| BitVec::from_u64(v, d))
                .filter(|v| s.basis().iter().all(|b| !b.dot(v)))
                .collect();
            let c = s.orthogonal_complement();
            if c.dim() != d - k || brute.len() != 1 << (d - k) || brute.iter().any(|v| !c.contains(v)) {
                comp += 1;
            }
            if k < d {
                let outer = s.extend_by(&(0u64..1 << d).map(|v| BitVec::from_u64(v, d)).find(|v| !s.contains(v)).unwrap());
                let want = outer.elements().into_iter().filter(|e| !s.contains(e)).min().unwrap();
                if least_coset_complement(&s, &outer) != want {
                    least += 1;
                }
            }
        }
    }
    let mut cases = vec![
        Case::new("f2/span-canonical-mismatches", canon as f64, 0.0),
        Case::new("f2/complement-brute-force-mismatches", comp as f64, 0.0),
        Case::new("f2/least-coset-complement-mismatches", least as f64, 0.0),
    ];
    cases.sort_by(|a, b| a.name.cmp(&b.name));
    cases
}

fn statevec_cases(cfg: &Config) -> Vec<Case> {
    let run = || -> Result<Vec<Case>> {
        let mut rng = cfg.rng(12);
        let (mut hzh, mut tt, mut norm, mut trace): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..20 {
            let psi = StateVector::random(3, &mut rng)?;
            let mut a = psi.clone();
            a.h(1);
            a.z(1);
            a.h(1);
            let mut b = psi.clone();
            b.x(1);
            hzh = hzh.max(1.0 - fidelity(&a, &b));
            let mut a = psi.clone();
            a.t(2);
            a.t(2);
            let mut b = psi.clone();
            b.s(2);
            tt = tt.max((a.inner(&b) - C64::new(1.0, 0.0)).norm());
            let mut s = psi.clone();
            for k in 0..10 {
                match rng.below(4) {
                    0 => s.h(k % 3),
                    1 => s.t(k % 3),
                    2 => s.cnot(k % 3, (k + 1) % 3),
                    _ => s.swap(k % 3, (k + 2) % 3),
                }
            }
            norm = norm.max((s.norm_sqr() - 1.0).abs());
            trace = trace.max((s.reduced_density(&[0, 2])?.trace() - C64::new(1.0, 0.0)).norm());
        }
        Ok(vec![
            Case::new("statevec/hzh-is-x", hzh, 1e-12),
            Case::new("statevec/norm-preserved", norm, 1e-12),
            Case::new("statevec/reduced-trace", trace, 1e-12),
            Case::new("statevec/t-squared-is-s", tt, 1e-12),
        ])
    };
    run().unwrap_or_else(|e| vec![Case::failed(format!("statevec/error: {e}"))])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("nope"), None);
    }

    #[test]
    fn nan_and_infinite_metrics_fail() {
        assert!(!Case::new("a", f64::NAN, 1.0).pass());
        assert!(!Case::failed("b").pass());
        assert!(Case::new("c", 0.5, 0.5).pass());
        let v = report_json(Suite::F2, 7, &[Case::failed("x")], None);
        assert_eq!(v["cases"][0]["metric"], Value::Null);
        assert_eq!(v["wall_ms"], Value::Null);
    }

    #[test]
    fn frame_measure_matches_plain_probabilities() {
        let mut rng = SplitRng::new(1);
        let psi = StateVector::random(2, &mut rng).unwrap();
        let d = frame_measure(&psi, &BitVec::zeros(2), &[], 2, |v| v.get(0));
        let direct = psi.outcome_distribution(&[0]).unwrap();
        for (b, (p, _)) in d {
            assert!((p - direct[&BitVec::from_bools(&[b])]).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_of_disjoint_supports_is_one() {
        let a: BTreeMap<u8, f64> = [(0, 1.0)].into();
        let b: BTreeMap<u8, f64> = [(1, 1.0)].into();
        assert!((tv(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(tv(&a, &a), 0.0);
    }
}
