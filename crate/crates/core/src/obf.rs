//! Obfuscation of unitary circuits and honest evaluation of the result.
//!
//! A package holds an authenticated register `V~` (input and output teleport
//! halves, auxiliary state and magic states), the public halves of both
//! teleport channels, a one-shot signing token and a query oracle. The
//! evaluator teleports its input in, signs the teleport key, walks the public
//! measurement frames querying the oracle once per instruction, and receives
//! the output with the key returned by the last query.
//!
//! Oracle queries act on the simulated world directly: the response
//! distribution is the one obtained by applying the oracle coherently into a
//! fresh output register and measuring it.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::auth::{enc_blocks, frame_tables, keygen, AuthError, AuthKey, Word};
use crate::circuit::{apply_gate, Circuit, CircuitError};
use crate::crypto::{bits_field, encode_tuple, token_gen, PrfKey, Signature, TokenError, TokenHandle, VerificationKey};
use crate::f2::BitVec;
use crate::func::{BitExpr, Var};
use crate::plm::{compile, wrap_for_obfuscation, PlmError, PlmProgram};
use crate::rng::SplitRng;
use crate::statevec::{sample_sorted, StateError, StateVector, C64};
use crate::teleport::epr_pairs;
use crate::world::{QubitId, World, WorldError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObfError {
    #[error(transparent)]
    Plm(#[from] PlmError),
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("oracle rejected query {step}")]
    Rejected { step: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Parameters of an obfuscation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObfParams {
    pub lambda: usize,
    /// Label length in bits.
    pub kappa: usize,
    /// Largest factor the world simulator may build.
    pub cap: usize,
}

impl Default for ObfParams {
    fn default() -> Self {
        ObfParams { lambda: 1, kappa: 32, cap: 40 }
    }
}

/// What the evaluator knows about the compiled program.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicProgram {
    pub lambda: usize,
    /// Logical input width.
    pub n: usize,
    /// Number of blocks in `V~`.
    pub width: usize,
    pub thetas: Vec<BitVec>,
    pub cnots: Vec<(usize, usize)>,
    /// Length of the CNOT prefix used by each instruction.
    pub prefix: Vec<usize>,
}

impl PublicProgram {
    pub fn from_plm(p: &PlmProgram, lambda: usize, n: usize) -> PublicProgram {
        PublicProgram {
            lambda,
            n,
            width: p.width(),
            thetas: p.instructions.iter().map(|ins| ins.theta.clone()).collect(),
            cnots: p.cnots.clone(),
            prefix: p.instructions.iter().map(|ins| ins.cnots).collect(),
        }
    }

    pub fn t(&self) -> usize {
        self.thetas.len()
    }

    /// Block size `2 lambda + 1`.
    pub fn p(&self) -> usize {
        2 * self.lambda + 1
    }

    pub fn g_of(&self, j: usize) -> &[(usize, usize)] {
        &self.cnots[..self.prefix[j]]
    }
}

/// One oracle query.
#[derive(Clone, Copy, Debug)]
pub struct Query<'a> {
    pub j: usize,
    pub i: &'a BitVec,
    pub sig: &'a Signature,
    pub labels: &'a [Word],
}

/// How the oracle resolves its output.
pub enum Choice<'a> {
    Sample(&'a mut SplitRng),
    /// Condition on a given value.
    Forced(&'a Word),
    /// Only report the distribution; the world may be left merged but is not projected.
    Peek,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Response {
    pub value: Option<Word>,
    pub probability: f64,
    pub distribution: BTreeMap<Word, f64>,
}

pub trait QueryOracle {
    fn respond(&self, world: &mut World, vt: &[QubitId], q: &Query<'_>, choice: Choice<'_>) -> Result<Response, ObfError>;

    /// Secret state, for debugging only.
    fn insecure_dump(&self) -> String;
}

/// Bits of a word as written into an output register: `bot` first.
pub fn word_bits(w: &Word) -> BitVec {
    let mut out = BitVec::from_bools(&[w.bot]);
    for b in w.bits.iter() {
        out.push(b && !w.bot);
    }
    out
}

fn label(prf: &PrfKey, j: usize, r: bool, i: &BitVec, sig: &Signature) -> BitVec {
    prf.eval(&encode_tuple(&[&(j as u32).to_be_bytes(), &[r as u8], &bits_field(i), &sig.0]))
}

fn resolve(dist: BTreeMap<Word, f64>, choice: Choice<'_>) -> Response {
    let value = match choice {
        Choice::Sample(rng) => Some(sample_sorted(&dist, rng)),
        Choice::Forced(w) => Some(w.clone()),
        Choice::Peek => None,
    };
    let probability = value.as_ref().map_or(0.0, |v| dist.get(v).copied().unwrap_or(0.0));
    Response { value, probability, distribution: dist }
}

fn with_bottom(mut dist: BTreeMap<Word, f64>, width: usize) -> BTreeMap<Word, f64> {
    let rest = 1.0 - dist.values().sum::<f64>();
    if rest > 1e-12 {
        dist.insert(Word::bottom(width), rest);
    }
    dist
}

fn deterministic(w: Word) -> BTreeMap<Word, f64> {
    BTreeMap::from([(w, 1.0)])
}

struct BlockView {
    block: usize,
    /// Key bit of each physical qubit, most significant first.
    pos: Vec<u32>,
}

struct Group {
    fid: usize,
    views: Vec<BlockView>,
    relevant: bool,
}

fn block<'a>(vt: &'a [QubitId], p: usize, b: usize) -> &'a [QubitId] {
    &vt[b * p..(b + 1) * p]
}

/// Factors of the world holding `V~`, with the blocks `reads` gathered in one.
fn groups(world: &mut World, vt: &[QubitId], p: usize, reads: &[usize]) -> Result<Vec<Group>, ObfError> {
    let width = vt.len() / p;
    for b in 0..width {
        world.merge(block(vt, p, b))?;
    }
    let rel = if reads.is_empty() {
        None
    } else {
        let qs: Vec<QubitId> = reads.iter().map(|&w| vt[w * p]).collect();
        Some(world.merge(&qs)?)
    };
    let mut by: BTreeMap<usize, Vec<BlockView>> = BTreeMap::new();
    for b in 0..width {
        let fid = world.factor_of(vt[b * p])?;
        let pos = block(vt, p, b).iter().map(|&q| world.mask_of(q).trailing_zeros()).collect();
        by.entry(fid).or_default().push(BlockView { block: b, pos });
    }
    Ok(by.into_iter().map(|(fid, views)| Group { fid, views, relevant: Some(fid) == rel }).collect())
}

/// Decoded value of `f` on one factor entry, `None` when some block fails to verify.
fn classify(k: u64, views: &[BlockView], tables: &[Vec<Option<bool>>], f: Option<&BitExpr>) -> Option<bool> {
    let mut bits: Vec<(usize, bool)> = Vec::with_capacity(views.len());
    for v in views {
        let val = v.pos.iter().fold(0usize, |acc, &p| (acc << 1) | ((k >> p) & 1) as usize);
        bits.push((v.block, tables[v.block][val]?));
    }
    Some(match f {
        None => false,
        Some(e) => e.eval(&|l: &Var| match *l {
            Var::Select(w) => bits[bits.binary_search_by_key(&w, |x| x.0).expect("read block is in the relevant factor")].1,
            _ => unreachable!("function was specialised"),
        }),
    })
}

/// Probabilities that every block verifies and `f` takes each value.
fn decode_probs(world: &World, gs: &[Group], tables: &[Vec<Option<bool>>], f: &BitExpr) -> [f64; 2] {
    let mut other = 1.0;
    let mut rel = None;
    for g in gs {
        if g.relevant {
            let d = world.distribution_by(g.fid, &|k| classify(k, &g.views, tables, Some(f)));
            rel = Some([d.get(&Some(false)).copied().unwrap_or(0.0), d.get(&Some(true)).copied().unwrap_or(0.0)]);
        } else {
            let d = world.distribution_by(g.fid, &|k| classify(k, &g.views, tables, None));
            other *= d.get(&Some(false)).copied().unwrap_or(0.0);
        }
    }
    match rel {
        Some([a, b]) => [a * other, b * other],
        None => {
            let c = f.eval(&|_| unreachable!("constant function"));
            if c {
                [0.0, other]
            } else {
                [other, 0.0]
            }
        }
    }
}

/// Projects onto "every block verifies and `f` lies in `allowed`".
fn collapse(world: &mut World, gs: &[Group], tables: &[Vec<Option<bool>>], f: &BitExpr, allowed: [bool; 2]) {
    for g in gs {
        let fe = if g.relevant { Some(f) } else { None };
        let keep = |k: u64| match classify(k, &g.views, tables, fe) {
            None => false,
            Some(b) => !g.relevant || allowed[b as usize],
        };
        world.project_by(g.fid, &keep, &true);
    }
}

/// The oracle of an honest obfuscation.
pub struct RealOracle {
    key: AuthKey,
    prf: PrfKey,
    vk: VerificationKey,
    program: PlmProgram,
    tables: Vec<Vec<Vec<Option<bool>>>>,
}

impl RealOracle {
    pub fn new(key: AuthKey, prf: PrfKey, vk: VerificationKey, program: PlmProgram) -> Result<RealOracle, ObfError> {
        if key.n != program.width() {
            return Err(ObfError::Params(format!("key has {} blocks, program width is {}", key.n, program.width())));
        }
        let tables = (0..program.t())
            .map(|j| frame_tables(&key, &program.instructions[j].theta, program.g_of(j)))
            .collect::<Result<_, _>>()?;
        Ok(RealOracle { key, prf, vk, program, tables })
    }

    pub fn key(&self) -> &AuthKey {
        &self.key
    }

    fn out_width(&self, j: usize) -> usize {
        if j + 1 == self.program.t() {
            self.program.n_out()
        } else {
            self.prf.kappa()
        }
    }

    /// Outcomes encoded by earlier labels, if the query is well formed.
    fn recover(&self, q: &Query<'_>) -> Option<BitVec> {
        if q.j >= self.program.t() || q.labels.len() != q.j || !self.vk.verify(q.i, q.sig) {
            return None;
        }
        let mut r = BitVec::zeros(0);
        for (idx, l) in q.labels.iter().enumerate() {
            if l.bot {
                return None;
            }
            let m0 = label(&self.prf, idx, false, q.i, q.sig) == l.bits;
            let m1 = label(&self.prf, idx, true, q.i, q.sig) == l.bits;
            if m0 == m1 {
                return None;
            }
            r.push(m1);
        }
        Some(r)
    }

    fn value(&self, q: &Query<'_>, r: &BitVec, b: bool) -> Result<Word, ObfError> {
        if q.j + 1 == self.program.t() {
            let mut rr = r.clone();
            rr.push(b);
            Ok(Word::ok(self.program.g.eval(&BitVec::zeros(0), q.i, &rr).map_err(PlmError::from)?))
        } else {
            Ok(Word::ok(label(&self.prf, q.j, b, q.i, q.sig)))
        }
    }

    /// The oracle as a classical function of a measured `V~` string.
    pub fn classical(&self, q: &Query<'_>, v: &BitVec) -> Result<Word, ObfError> {
        let bot = Word::bottom(self.out_width(q.j.min(self.program.t().saturating_sub(1))));
        let Some(r) = self.recover(q) else { return Ok(bot) };
        let ins = &self.program.instructions[q.j];
        let w = crate::auth::dec(&self.key, &ins.theta, self.program.g_of(q.j), v)?;
        if w.bot {
            return Ok(bot);
        }
        let f = ins.f.specialize(q.i, &r).map_err(PlmError::from)?;
        let b = f.eval(&w.bits, &BitVec::zeros(0), &BitVec::zeros(0)).map_err(PlmError::from)?.get(0);
        self.value(q, &r, b)
    }
}

impl QueryOracle for RealOracle {
    fn respond(&self, world: &mut World, vt: &[QubitId], q: &Query<'_>, choice: Choice<'_>) -> Result<Response, ObfError> {
        let p = self.key.p();
        let Some(r) = self.recover(q) else {
            let w = self.out_width(q.j.min(self.program.t().saturating_sub(1)));
            return Ok(resolve(deterministic(Word::bottom(w)), choice));
        };
        let f = self.program.instructions[q.j].f.specialize(q.i, &r).map_err(PlmError::from)?;
        let e = &f.outputs[0];
        let tables = &self.tables[q.j];
        let gs = groups(world, vt, p, &f.reads())?;
        let probs = decode_probs(world, &gs, tables, e);
        let values = [self.value(q, &r, false)?, self.value(q, &r, true)?];
        let mut dist = BTreeMap::new();
        for b in 0..2 {
            if probs[b] > 0.0 {
                *dist.entry(values[b].clone()).or_insert(0.0) += probs[b];
            }
        }
        let resp = resolve(with_bottom(dist, self.out_width(q.j)), choice);
        if let Some(v) = &resp.value {
            if !v.bot && resp.probability > 0.0 {
                collapse(world, &gs, tables, e, [values[0] == *v, values[1] == *v]);
            }
        }
        Ok(resp)
    }

    fn insecure_dump(&self) -> String {
        let basis: Vec<String> = self.key.s.basis().iter().map(|b| b.to_bit_string()).collect();
        let mut s = format!("lambda {}\nS {}\nDelta {}\n", self.key.lambda, basis.join(" "), self.key.delta.to_bit_string());
        for b in 0..self.key.n {
            s += &format!("block {b} x {} z {}\n", self.key.x[b].to_bit_string(), self.key.z[b].to_bit_string());
        }
        s
    }
}

/// Oracle of the simulated package: checks everything the real oracle checks
/// but answers with labels of all-zero outcomes and runs the black box on the last query.
pub struct SimOracle {
    key: AuthKey,
    prf: PrfKey,
    vk: VerificationKey,
    n: usize,
    t: usize,
    u: Circuit,
    u_inv: Circuit,
    s_in: Vec<QubitId>,
    s_out: Vec<QubitId>,
    s_aux: Vec<QubitId>,
    tables: Vec<Vec<Vec<Option<bool>>>>,
}

impl SimOracle {
    fn checks(&self, q: &Query<'_>) -> bool {
        q.j < self.t
            && q.labels.len() == q.j
            && self.vk.verify(q.i, q.sig)
            && q.labels.iter().enumerate().all(|(idx, l)| *l == Word::ok(label(&self.prf, idx, false, q.i, q.sig)))
    }

    fn wire(&self, w: usize) -> QubitId {
        if w < self.n {
            self.s_in[w]
        } else {
            self.s_aux[w - self.n]
        }
    }

    fn forward(&self, world: &mut World, i: &BitVec) -> Result<(), ObfError> {
        for k in 0..self.n {
            world.pauli_dagger(self.s_in[k], i.get(k), i.get(self.n + k));
        }
        for g in self.u.gates() {
            world.gate(g, &|w| self.wire(w))?;
        }
        for k in 0..self.n {
            world.cnot(self.s_in[k], self.s_out[k])?;
            world.h(self.s_in[k]);
        }
        Ok(())
    }

    fn backward(&self, world: &mut World, i: &BitVec) -> Result<(), ObfError> {
        for k in 0..self.n {
            world.h(self.s_in[k]);
            world.cnot(self.s_in[k], self.s_out[k])?;
        }
        for g in self.u_inv.gates() {
            world.gate(g, &|w| self.wire(w))?;
        }
        for k in 0..self.n {
            world.pauli(self.s_in[k], i.get(k), i.get(self.n + k));
        }
        Ok(())
    }
}

impl QueryOracle for SimOracle {
    fn respond(&self, world: &mut World, vt: &[QubitId], q: &Query<'_>, choice: Choice<'_>) -> Result<Response, ObfError> {
        let last = q.j + 1 == self.t;
        let width = if last { 2 * self.n } else { self.prf.kappa() };
        if !self.checks(q) {
            return Ok(resolve(deterministic(Word::bottom(width)), choice));
        }
        let tables = &self.tables[q.j];
        let gs = groups(world, vt, self.key.p(), &[])?;
        let valid = decode_probs(world, &gs, tables, &BitExpr::Const(false))[0];
        let never = BitExpr::Const(false);
        if !last {
            let v = Word::ok(label(&self.prf, q.j, false, q.i, q.sig));
            let mut dist = BTreeMap::new();
            if valid > 0.0 {
                dist.insert(v.clone(), valid);
            }
            let resp = resolve(with_bottom(dist, width), choice);
            if resp.value.as_ref() == Some(&v) && resp.probability > 0.0 {
                collapse(world, &gs, tables, &never, [true, false]);
            }
            return Ok(resp);
        }
        let regs: Vec<QubitId> = self.s_in.iter().chain(&self.s_out).copied().collect();
        self.forward(world, q.i)?;
        let y = world.measure_distribution(&regs)?;
        let dist: BTreeMap<Word, f64> = y.into_iter().map(|(b, pr)| (Word::ok(b), pr * valid)).filter(|e| e.1 > 0.0).collect();
        let resp = resolve(with_bottom(dist, width), choice);
        if let Some(v) = &resp.value {
            if !v.bot && resp.probability > 0.0 {
                collapse(world, &gs, tables, &never, [true, false]);
                world.project(&regs, &v.bits)?;
            }
        }
        self.backward(world, q.i)?;
        Ok(resp)
    }

    fn insecure_dump(&self) -> String {
        format!("simulated oracle, lambda {}, {} blocks\n", self.key.lambda, self.key.n)
    }
}

/// An obfuscated program ready for one evaluation.
pub struct Package {
    pub public: PublicProgram,
    pub world: World,
    /// Physical qubits of `V~`, block `b` at `[b p, (b + 1) p)`.
    pub vtilde: Vec<QubitId>,
    pub in_pub: Vec<QubitId>,
    pub out_pub: Vec<QubitId>,
    pub token: TokenHandle,
    pub oracle: Box<dyn QueryOracle>,
}

fn bell() -> StateVector {
    epr_pairs(1).expect("two qubits fit")
}

fn check_params(params: &ObfParams) -> Result<(), ObfError> {
    if params.lambda == 0 || params.kappa == 0 {
        return Err(ObfError::Params("lambda and kappa must be positive".into()));
    }
    Ok(())
}

fn check_unitary(q: &Circuit) -> Result<(), ObfError> {
    q.validate()?;
    if q.n_c > 0 || !q.final_measure.is_empty() || q.oracle_calls() > 0 || q.gates().any(|g| g.cond.is_some() || !g.controls.is_empty()) {
        return Err(ObfError::Params("expected a plain unitary circuit".into()));
    }
    Ok(())
}

/// Encodes `state` with block `first + k` on qubit `k` and adds it to the world.
fn add_encoded(world: &mut World, key: &AuthKey, state: &StateVector, first: usize, vt: &mut [QubitId]) -> Result<(), ObfError> {
    let p = key.p();
    let k = state.num_qubits();
    let mut s = state.clone();
    s.set_cap(s.cap().max(k * p))?;
    let wires: Vec<(usize, usize)> = (0..k).map(|w| (w, first + w)).collect();
    let ids = world.add_state(&enc_blocks(key, &s, &wires)?)?;
    vt[first * p..(first + k) * p].copy_from_slice(&ids);
    Ok(())
}

/// Adds `Enc(|psi_PLM>)`, one connected piece of the preparation circuit at a time.
fn add_magic(world: &mut World, key: &AuthKey, prog: &PlmProgram, vt: &mut [QubitId]) -> Result<(), ObfError> {
    let m = prog.n_plm;
    let mut parent: Vec<usize> = (0..m).collect();
    fn root(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for g in prog.aux_prep.gates() {
        for w in g.wires.iter().chain(&g.controls).skip(1) {
            let (a, b) = (root(&mut parent, g.wires[0]), root(&mut parent, *w));
            parent[a] = b;
        }
    }
    let mut pieces: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for w in 0..m {
        let r = root(&mut parent, w);
        pieces.entry(r).or_default().push(w);
    }
    let base = prog.n_in + prog.n_aux;
    let p = key.p();
    for wires in pieces.values() {
        let local = |w: usize| wires.iter().position(|&x| x == w).expect("gate stays in its piece");
        let mut s = StateVector::zero(wires.len())?;
        for g in prog.aux_prep.gates() {
            if wires.contains(&g.wires[0]) {
                apply_gate(&mut s, g, &local);
            }
        }
        s.set_cap(s.cap().max(wires.len() * p))?;
        let map: Vec<(usize, usize)> = wires.iter().enumerate().map(|(k, &w)| (k, base + w)).collect();
        let ids = world.add_state(&enc_blocks(key, &s, &map)?)?;
        for (k, &w) in wires.iter().enumerate() {
            vt[(base + w) * p..(base + w + 1) * p].copy_from_slice(&ids[k * p..(k + 1) * p]);
        }
    }
    Ok(())
}

/// Obfuscates a unitary circuit whose auxiliary wires start in `psi_aux` (default `|0...0>`).
pub fn qobf(q: &Circuit, psi_aux: Option<&StateVector>, params: &ObfParams, rng: &mut SplitRng) -> Result<Package, ObfError> {
    check_params(params)?;
    check_unitary(q)?;
    let n = q.n_q;
    let prog = compile(&wrap_for_obfuscation(q, n)?)?;
    let width = prog.width();
    let p = 2 * params.lambda + 1;
    let key = keygen(params.lambda, width, rng);
    let prf = PrfKey::generate(params.kappa, rng);
    let (vk, token) = token_gen(2 * n, rng);
    let mut world = World::new(params.cap);
    let mut vt = vec![usize::MAX; width * p];
    let mut in_pub = Vec::with_capacity(n);
    let mut out_pub = Vec::with_capacity(n);
    for k in 0..n {
        let ids = world.add_state(&enc_blocks(&key, &bell(), &[(1, k)])?)?;
        in_pub.push(ids[0]);
        vt[k * p..(k + 1) * p].copy_from_slice(&ids[1..]);
    }
    for k in 0..n {
        let b = n + k;
        let ids = world.add_state(&enc_blocks(&key, &bell(), &[(0, b)])?)?;
        vt[b * p..(b + 1) * p].copy_from_slice(&ids[..p]);
        out_pub.push(ids[p]);
    }
    if q.n_aux > 0 {
        let aux = aux_state(q, psi_aux)?;
        add_encoded(&mut world, &key, &aux, 2 * n, &mut vt)?;
    }
    add_magic(&mut world, &key, &prog, &mut vt)?;
    let public = PublicProgram::from_plm(&prog, params.lambda, n);
    let oracle = RealOracle::new(key, prf, vk, prog)?;
    Ok(Package { public, world, vtilde: vt, in_pub, out_pub, token, oracle: Box::new(oracle) })
}

fn aux_state(q: &Circuit, psi_aux: Option<&StateVector>) -> Result<StateVector, ObfError> {
    match psi_aux {
        Some(a) if a.num_qubits() == q.n_aux => Ok(a.clone()),
        Some(a) => Err(ObfError::Params(format!("aux state has {} qubits, circuit needs {}", a.num_qubits(), q.n_aux))),
        None => Ok(StateVector::zero(q.n_aux)?),
    }
}

/// A package built from public data and black-box access to `u` only.
pub fn sim_package(
    public: &PublicProgram,
    u: &Circuit,
    psi_aux: Option<&StateVector>,
    params: &ObfParams,
    rng: &mut SplitRng,
) -> Result<Package, ObfError> {
    check_params(params)?;
    check_unitary(u)?;
    let n = public.n;
    if u.n_q != n || params.lambda != public.lambda {
        return Err(ObfError::Params("black box does not match the public program".into()));
    }
    let p = public.p();
    let key = keygen(public.lambda, public.width, rng);
    let prf = PrfKey::generate(params.kappa, rng);
    let (vk, token) = token_gen(2 * n, rng);
    let mut world = World::new(params.cap);
    let mut vt = Vec::with_capacity(public.width * p);
    for b in 0..public.width {
        let entries = key
            .block_encoding(b, false)
            .into_iter()
            .map(|(v, a)| ((0..p).fold(0u64, |acc, k| acc | (((v >> (p - 1 - k)) & 1) << k)), a))
            .collect();
        vt.extend(world.add_entries(p, entries)?);
    }
    let (mut in_pub, mut s_in, mut s_out, mut out_pub) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let ids = world.add_state(&bell())?;
        in_pub.push(ids[0]);
        s_in.push(ids[1]);
    }
    for _ in 0..n {
        let ids = world.add_state(&bell())?;
        s_out.push(ids[0]);
        out_pub.push(ids[1]);
    }
    let s_aux = if u.n_aux > 0 { world.add_state(&aux_state(u, psi_aux)?)? } else { Vec::new() };
    let tables = (0..public.t())
        .map(|j| frame_tables(&key, &public.thetas[j], public.g_of(j)))
        .collect::<Result<_, _>>()?;
    let oracle = SimOracle { key, prf, vk, n, t: public.t(), u: u.clone(), u_inv: u.inverse()?, s_in, s_out, s_aux, tables };
    Ok(Package { public: public.clone(), world, vtilde: vt, in_pub, out_pub, token, oracle: Box::new(oracle) })
}

/// Measurement frame of the evaluator, moved incrementally.
#[derive(Clone, Debug)]
struct WorldFrame {
    theta: Vec<bool>,
    g_len: usize,
}

impl WorldFrame {
    fn new(width: usize) -> WorldFrame {
        WorldFrame { theta: vec![false; width], g_len: 0 }
    }

    fn enter(&mut self, world: &mut World, vt: &[QubitId], public: &PublicProgram, j: usize) -> Result<(), ObfError> {
        let p = public.p();
        let theta = &public.thetas[j];
        let dg = &public.cnots[self.g_len..public.prefix[j]];
        let mut touched = vec![false; public.width];
        for &(a, b) in dg {
            touched[a] = true;
            touched[b] = true;
        }
        let h_block = |world: &mut World, w: usize| block(vt, p, w).iter().for_each(|&q| world.h(q));
        for w in 0..public.width {
            if self.theta[w] && (touched[w] || !theta.get(w)) {
                h_block(world, w);
            }
        }
        for &(a, b) in dg {
            for k in 0..p {
                world.cnot(vt[a * p + k], vt[b * p + k])?;
            }
        }
        for w in 0..public.width {
            if theta.get(w) && (touched[w] || !self.theta[w]) {
                h_block(world, w);
            }
        }
        self.theta = theta.iter().collect();
        self.g_len = public.prefix[j];
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Number of final queries whose joint outcome is enumerated exactly.
    pub tail: usize,
    /// Branches below this probability are skipped during enumeration.
    pub prune: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { tail: 0, prune: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    /// Key of the input teleportation, `z || x`.
    pub input_key: BitVec,
    pub input_distribution: BTreeMap<BitVec, f64>,
    pub responses: Vec<Word>,
    /// Distribution of the last response given the history before the tail.
    pub final_distribution: BTreeMap<Word, f64>,
    pub max_factor_width: usize,
    /// Most amplitudes stored in one factor at any frame.
    pub max_factor_entries: usize,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Output qubits followed by the input's reference qubits.
    pub output: StateVector,
    pub transcript: Transcript,
}

struct Ctx<'a> {
    oracle: &'a dyn QueryOracle,
    vt: &'a [QubitId],
    public: &'a PublicProgram,
    key: &'a BitVec,
    sig: &'a Signature,
    prune: f64,
}

fn tail_distribution(
    ctx: &Ctx<'_>,
    world: &World,
    frame: &WorldFrame,
    j: usize,
    labels: &[Word],
    weight: f64,
    out: &mut BTreeMap<Word, f64>,
) -> Result<(), ObfError> {
    let q = Query { j, i: ctx.key, sig: ctx.sig, labels };
    let resp = ctx.oracle.respond(&mut world.clone(), ctx.vt, &q, Choice::Peek)?;
    for (v, pr) in resp.distribution {
        if pr <= ctx.prune {
            continue;
        }
        if v.bot || j + 1 == ctx.public.t() {
            *out.entry(v).or_insert(0.0) += weight * pr;
            continue;
        }
        let mut w = world.clone();
        ctx.oracle.respond(&mut w, ctx.vt, &q, Choice::Forced(&v))?;
        let mut fr = frame.clone();
        fr.enter(&mut w, ctx.vt, ctx.public, j + 1)?;
        let mut l = labels.to_vec();
        l.push(v);
        tail_distribution(ctx, &w, &fr, j + 1, &l, weight * pr, out)?;
    }
    Ok(())
}

/// Splits blocks off their factors where possible.
fn isolate(world: &mut World, vt: &[QubitId], p: usize) -> Result<(), ObfError> {
    for b in 0..vt.len() / p {
        let qs = block(vt, p, b);
        if world.factor_qubits(world.factor_of(qs[0])?).len() > p {
            world.try_split(qs)?;
        }
    }
    Ok(())
}

/// Honest evaluation; qubits of `input` past the first `n` are a reference that is carried along.
pub fn qeval(pkg: &mut Package, input: &StateVector, opts: &EvalOptions, rng: &mut SplitRng) -> Result<Evaluation, ObfError> {
    let Package { public, world, vtilde, in_pub, out_pub, token, oracle } = pkg;
    let n = public.n;
    let p = public.p();
    if input.num_qubits() < n {
        return Err(ObfError::Params(format!("input has {} qubits, program needs {n}", input.num_qubits())));
    }
    let ids = world.add_state(input)?;
    let (inputs, reference) = ids.split_at(n);
    for k in 0..n {
        world.cnot(inputs[k], in_pub[k])?;
        world.h(inputs[k]);
    }
    let sent: Vec<QubitId> = inputs.iter().chain(in_pub.iter()).copied().collect();
    let input_distribution = world.measure_distribution(&sent)?;
    let key = sample_sorted(&input_distribution, rng);
    world.project(&sent, &key)?;
    for &q in &sent {
        world.try_split(&[q])?;
    }
    let sig = token.sign(&key)?;

    let t = public.t();
    let ctx = Ctx { oracle: oracle.as_ref(), vt: vtilde, public, key: &key, sig: &sig, prune: opts.prune };
    let tail_start = if opts.tail == 0 { t } else { t.saturating_sub(opts.tail) };
    let mut frame = WorldFrame::new(public.width);
    let mut labels: Vec<Word> = Vec::with_capacity(t);
    let mut final_distribution = BTreeMap::new();
    let mut max_factor_width = 0;
    let mut max_factor_entries = 0;
    for j in 0..t {
        frame.enter(world, vtilde, public, j)?;
        isolate(world, vtilde, p)?;
        max_factor_width = max_factor_width.max(world.factor_widths().into_iter().max().unwrap_or(0));
        max_factor_entries = max_factor_entries.max(world.max_entries());
        if j == tail_start {
            tail_distribution(&ctx, world, &frame, j, &labels, 1.0, &mut final_distribution)?;
        }
        let q = Query { j, i: &key, sig: &sig, labels: &labels };
        let resp = oracle.respond(world, vtilde, &q, Choice::Sample(rng))?;
        let v = resp.value.expect("sampled");
        if j + 1 == t && opts.tail == 0 {
            final_distribution = resp.distribution;
        }
        if v.bot {
            return Err(ObfError::Rejected { step: j });
        }
        labels.push(v);
        isolate(world, vtilde, p)?;
    }
    let y = &labels[t - 1].bits;
    for k in 0..n {
        world.pauli_dagger(out_pub[k], y.get(k), y.get(n + k));
    }
    let keep: Vec<QubitId> = out_pub.iter().chain(reference).copied().collect();
    let output = world.state_of(&keep)?;
    Ok(Evaluation {
        output,
        transcript: Transcript { input_key: key, input_distribution, responses: labels, final_distribution, max_factor_width, max_factor_entries },
    })
}

/// Applies `|v>|y> -> |v>|y xor F(v)>` to a dense state.
pub fn coherent_oracle_apply(
    s: &StateVector,
    input: &[usize],
    output: &[usize],
    f: &impl Fn(&BitVec) -> BitVec,
) -> Result<StateVector, ObfError> {
    let n = s.num_qubits();
    s.check_qubits(&input.iter().chain(output).copied().collect::<Vec<_>>())?;
    let mut amps = vec![C64::new(0.0, 0.0); s.amplitudes().len()];
    for (idx, a) in s.amplitudes().iter().enumerate() {
        if a.norm_sqr() == 0.0 {
            continue;
        }
        let y = f(&s.bits_of(idx, input));
        if y.len() != output.len() {
            return Err(ObfError::Params(format!("oracle returned {} bits for a {}-qubit register", y.len(), output.len())));
        }
        let mut to = idx;
        for (k, &q) in output.iter().enumerate() {
            if y.get(k) {
                to ^= 1 << (n - 1 - q);
            }
        }
        amps[to] += a;
    }
    Ok(StateVector::from_amplitudes_with_cap(amps, s.cap())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::statevec::fidelity;

    fn single(kind: GateKind) -> Circuit {
        let mut c = Circuit::new(1, 0, 0);
        c.gate(kind, &[0]);
        c
    }

    fn ideal(q: &Circuit, input: &StateVector) -> StateVector {
        let mut s = input.clone();
        for g in q.gates() {
            apply_gate(&mut s, g, &|w| w);
        }
        s
    }

    #[test]
    fn honest_evaluation_applies_the_circuit() {
        let mut rng = SplitRng::new(21);
        for kind in [GateKind::H, GateKind::T, GateKind::X, GateKind::S] {
            let q = single(kind);
            let input = StateVector::random(2, &mut rng).unwrap();
            let mut pkg = qobf(&q, None, &ObfParams { kappa: 16, ..Default::default() }, &mut rng).unwrap();
            let ev = qeval(&mut pkg, &input, &EvalOptions::default(), &mut rng).unwrap();
            let f = fidelity(&ev.output, &ideal(&q, &input));
            assert!(f > 1.0 - 1e-9, "{kind:?}: fidelity {f}");
            assert_eq!(ev.transcript.responses.len(), pkg.public.t());
            for pr in ev.transcript.input_distribution.values() {
                assert!((pr - 0.25).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn simulated_package_gives_same_output() {
        let mut rng = SplitRng::new(22);
        let mut q = Circuit::new(1, 0, 0);
        q.gate(GateKind::H, &[0]).gate(GateKind::T, &[0]);
        let params = ObfParams { kappa: 16, ..Default::default() };
        let real = qobf(&q, None, &params, &mut rng).unwrap();
        let mut sim = sim_package(&real.public, &q, None, &params, &mut rng).unwrap();
        let input = StateVector::random(2, &mut rng).unwrap();
        let ev = qeval(&mut sim, &input, &EvalOptions { tail: 2, ..Default::default() }, &mut rng).unwrap();
        assert!(fidelity(&ev.output, &ideal(&q, &input)) > 1.0 - 1e-9);
        let total: f64 = ev.transcript.final_distribution.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(ev.transcript.final_distribution.len(), 4);
    }

    #[test]
    fn token_is_single_use_and_forgeries_are_rejected() {
        let mut rng = SplitRng::new(23);
        let q = single(GateKind::Z);
        let mut pkg = qobf(&q, None, &ObfParams::default(), &mut rng).unwrap();
        let input = StateVector::random(1, &mut rng).unwrap();
        qeval(&mut pkg, &input, &EvalOptions::default(), &mut rng).unwrap();
        assert!(matches!(qeval(&mut pkg, &input, &EvalOptions::default(), &mut rng), Err(ObfError::Token(TokenError::Spent))));

        let mut pkg = qobf(&q, None, &ObfParams::default(), &mut rng).unwrap();
        let i = BitVec::zeros(2);
        let forged = Signature([0u8; 32]);
        let q0 = Query { j: 0, i: &i, sig: &forged, labels: &[] };
        let r = pkg.oracle.respond(&mut pkg.world, &pkg.vtilde, &q0, Choice::Peek).unwrap();
        assert_eq!(r.distribution.len(), 1);
        assert!(r.distribution.keys().next().unwrap().bot);
    }

    /// World-level responses agree with coherent application of the classical oracle.
    #[test]
    fn world_queries_match_coherent_oracle() {
        let mut rng = SplitRng::new(24);
        let q = single(GateKind::H);
        let prog = compile(&q).unwrap();
        let key = keygen(1, prog.width(), &mut rng);
        let prf = PrfKey::generate(3, &mut rng);
        let (vk, mut token) = token_gen(0, &mut rng);
        let i = BitVec::zeros(0);
        let sig = token.sign(&i).unwrap();
        let public = PublicProgram::from_plm(&prog, 1, 1);
        let oracle = RealOracle::new(key.clone(), prf, vk, prog.clone()).unwrap();

        let mut world = World::new(40);
        let mut vt = vec![0; prog.width() * 3];
        let input = StateVector::random(2, &mut rng).unwrap();
        let ids = world.add_state(&enc_blocks(&key, &input, &[(0, 0)]).unwrap()).unwrap();
        vt[..3].copy_from_slice(&ids[..3]);
        let reference = ids[3];
        add_magic(&mut world, &key, &prog, &mut vt).unwrap();
        // tamper with one physical qubit so that rejection has weight
        world.h(vt[4]);

        let mut frame = WorldFrame::new(public.width);
        let mut labels: Vec<Word> = Vec::new();
        for j in 0..public.t() {
            frame.enter(&mut world, &vt, &public, j).unwrap();
            let q = Query { j, i: &i, sig: &sig, labels: &labels };
            let all: Vec<QubitId> = vt.iter().copied().chain([reference]).collect();
            let dense = world.clone().state_of(&all).unwrap().clone();
            let mut wide = dense.tensor(&StateVector::zero(4).unwrap()).unwrap();
            wide.set_cap(30).unwrap();
            let outs: Vec<usize> = (all.len()..all.len() + 4).collect();
            let width = vt.len();
            let applied = coherent_oracle_apply(&wide, &(0..width).collect::<Vec<_>>(), &outs, &|v| {
                let mut w = word_bits(&oracle.classical(&q, v).unwrap());
                while w.len() < 4 {
                    w.push(false);
                }
                w
            })
            .unwrap();
            let want = applied.outcome_distribution(&outs).unwrap();
            let resp = oracle.respond(&mut world.clone(), &vt, &q, Choice::Peek).unwrap();
            for (w, pr) in &resp.distribution {
                let mut bits = word_bits(w);
                while bits.len() < 4 {
                    bits.push(false);
                }
                let d = want.get(&bits).copied().unwrap_or(0.0);
                assert!((d - pr).abs() < 1e-9, "step {j}: {pr} vs {d}");
            }
            let total: f64 = want.values().sum();
            assert!((total - 1.0).abs() < 1e-9);
            let Some((pick, _)) = resp.distribution.iter().find(|(w, _)| !w.bot) else { break };
            let pick = pick.clone();
            oracle.respond(&mut world, &vt, &q, Choice::Forced(&pick)).unwrap();
            labels.push(pick);
        }
    }

    #[test]
    fn coherent_apply_is_a_permutation() {
        let mut rng = SplitRng::new(25);
        let s = StateVector::random(3, &mut rng).unwrap();
        let f = |v: &BitVec| BitVec::from_bools(&[v.get(0) ^ v.get(1)]);
        let once = coherent_oracle_apply(&s, &[0, 1], &[2], &f).unwrap();
        let twice = coherent_oracle_apply(&once, &[0, 1], &[2], &f).unwrap();
        assert!((fidelity(&twice, &s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn honest_first_query_is_a_label_and_repeats() {
        let mut rng = SplitRng::new(27);
        let mut pkg = qobf(&single(GateKind::T), None, &ObfParams::default(), &mut rng).unwrap();
        let i = BitVec::parse("10").unwrap();
        let sig = pkg.token.sign(&i).unwrap();
        let mut frame = WorldFrame::new(pkg.public.width);
        frame.enter(&mut pkg.world, &pkg.vtilde, &pkg.public, 0).unwrap();
        let q = Query { j: 0, i: &i, sig: &sig, labels: &[] };
        let a = pkg.oracle.respond(&mut pkg.world.clone(), &pkg.vtilde, &q, Choice::Peek).unwrap();
        let b = pkg.oracle.respond(&mut pkg.world.clone(), &pkg.vtilde, &q, Choice::Peek).unwrap();
        assert_eq!(a.distribution.keys().collect::<Vec<_>>(), b.distribution.keys().collect::<Vec<_>>());
        assert!((a.distribution.values().sum::<f64>() - 1.0).abs() < 1e-12);
        for w in a.distribution.keys() {
            assert!(!w.bot);
            assert_eq!(w.bits.len(), 32);
        }
    }

    #[test]
    fn auxiliary_wires_are_encoded_too() {
        let mut rng = SplitRng::new(26);
        let mut q = Circuit::new(1, 0, 1);
        q.gate(GateKind::Cnot, &[0, 1]).gate(GateKind::Z, &[1]).gate(GateKind::Cnot, &[0, 1]);
        let input = StateVector::random(2, &mut rng).unwrap();
        let mut pkg = qobf(&q, None, &ObfParams::default(), &mut rng).unwrap();
        let ev = qeval(&mut pkg, &input, &EvalOptions::default(), &mut rng).unwrap();
        assert!(fidelity(&ev.output, &ideal(&single(GateKind::Z), &input)) > 1.0 - 1e-9);
    }
}
