//! JSON forms of subspaces, circuits, classical functions, PLM programs and keys.
//!
//! Bit strings are ASCII `0`/`1`. Expressions are nested arrays such as
//! `["xor", ["select", 3], ["r", 1]]`; constants are JSON booleans and a
//! multi-output function is `["tuple", e0, e1, …]`.

use plmforge_core::auth::AuthKey;
use plmforge_core::circuit::{Circuit, Gate, GateKind, Op};
use plmforge_core::f2::{BitVec, Subspace};
use plmforge_core::func::{BitExpr, ClassicalFn, Expr, Var};
use plmforge_core::gadget::GadgetKind;
use plmforge_core::plm::{GadgetRecord, Instruction, PlmProgram, WireFrame};
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, FormatError>;

fn shape(msg: impl Into<String>) -> FormatError {
    FormatError::Shape(msg.into())
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| shape(format!("missing field `{key}`")))
}

fn as_usize(v: &Value, what: &str) -> Result<usize> {
    v.as_u64().map(|x| x as usize).ok_or_else(|| shape(format!("`{what}` must be a non-negative integer")))
}

fn usize_field(v: &Value, key: &str) -> Result<usize> {
    as_usize(field(v, key)?, key)
}

fn array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| shape(format!("`{what}` must be an array")))
}

fn usize_list(v: &Value, what: &str) -> Result<Vec<usize>> {
    array(v, what)?.iter().map(|x| as_usize(x, what)).collect()
}

fn pairs(v: &Value, what: &str) -> Result<Vec<(usize, usize)>> {
    array(v, what)?
        .iter()
        .map(|p| match usize_list(p, what)?.as_slice() {
            [a, b] => Ok((*a, *b)),
            _ => Err(shape(format!("`{what}` entries must be pairs"))),
        })
        .collect()
}

fn pairs_json(ps: &[(usize, usize)]) -> Value {
    Value::Array(ps.iter().map(|&(a, b)| json!([a, b])).collect())
}

pub fn bits_to_json(b: &BitVec) -> Value {
    Value::String(b.to_bit_string())
}

pub fn bits_from_json(v: &Value, what: &str) -> Result<BitVec> {
    v.as_str().and_then(BitVec::parse).ok_or_else(|| shape(format!("`{what}` must be a 0/1 string")))
}

pub fn subspace_to_json(s: &Subspace) -> Value {
    json!({
        "ambient_dim": s.ambient_dim(),
        "basis": s.basis().iter().map(bits_to_json).collect::<Vec<_>>(),
    })
}

pub fn subspace_from_json(v: &Value) -> Result<Subspace> {
    let d = usize_field(v, "ambient_dim")?;
    let basis: Vec<BitVec> =
        array(field(v, "basis")?, "basis")?.iter().map(|b| bits_from_json(b, "basis")).collect::<Result<_>>()?;
    if let Some(b) = basis.iter().find(|b| b.len() != d) {
        return Err(FormatError::Invalid(format!("basis vector {} has length {}, expected {d}", b.to_bit_string(), b.len())));
    }
    let s = Subspace::span(d, &basis);
    if s.dim() != basis.len() {
        return Err(FormatError::Invalid("basis vectors are linearly dependent".into()));
    }
    Ok(s)
}

fn gate_to_json(g: &Gate) -> Value {
    let mut m = serde_json::Map::new();
    m.insert("gate".into(), json!(g.kind.name()));
    m.insert("wires".into(), json!(g.wires));
    if let Some(b) = g.cond {
        m.insert("cond".into(), json!(b));
    }
    if !g.controls.is_empty() {
        m.insert("controls".into(), json!(g.controls));
    }
    Value::Object(m)
}

pub fn circuit_to_json(c: &Circuit) -> Value {
    let ops: Vec<Value> = c
        .ops
        .iter()
        .map(|op| match op {
            Op::Gate(g) => gate_to_json(g),
            Op::Oracle { wires, dagger } => json!({"gate": if *dagger { "Udag" } else { "U" }, "wires": wires}),
        })
        .collect();
    json!({
        "n_q": c.n_q,
        "n_c": c.n_c,
        "aux_wires": c.n_aux,
        "gates": ops,
        "final_measure": c.final_measure,
    })
}

pub fn circuit_from_json(v: &Value) -> Result<Circuit> {
    let mut c = Circuit::new(usize_field(v, "n_q")?, usize_field(v, "n_c")?, usize_field(v, "aux_wires")?);
    for g in array(field(v, "gates")?, "gates")? {
        let name = field(g, "gate")?.as_str().ok_or_else(|| shape("`gate` must be a string"))?;
        let wires = usize_list(field(g, "wires")?, "wires")?;
        match name {
            "U" | "Udag" => {
                c.ops.push(Op::Oracle { wires, dagger: name == "Udag" });
                continue;
            }
            _ => {}
        }
        let kind = GateKind::from_name(name).ok_or_else(|| FormatError::Invalid(format!("unknown gate `{name}`")))?;
        if wires.len() != kind.arity() {
            return Err(FormatError::Invalid(format!("{name} takes {} wires, got {}", kind.arity(), wires.len())));
        }
        let mut gate = Gate::new(kind, &wires);
        if let Some(b) = g.get("cond") {
            gate = gate.conditioned(as_usize(b, "cond")?);
        }
        if let Some(cs) = g.get("controls") {
            for w in usize_list(cs, "controls")? {
                gate = gate.controlled_by(w);
            }
        }
        c.ops.push(Op::Gate(gate));
    }
    c.final_measure = usize_list(field(v, "final_measure")?, "final_measure")?;
    c.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(c)
}

pub fn expr_to_json(e: &BitExpr) -> Value {
    match e {
        Expr::Const(b) => json!(b),
        Expr::Var(Var::Select(k)) => json!(["select", k]),
        Expr::Var(Var::Input(k)) => json!(["input", k]),
        Expr::Var(Var::Outcome(k)) => json!(["r", k]),
        Expr::Xor(items) => {
            let mut v = vec![json!("xor")];
            v.extend(items.iter().map(expr_to_json));
            Value::Array(v)
        }
        Expr::And(a, b) => json!(["and", expr_to_json(a), expr_to_json(b)]),
        Expr::Mux(c, a, b) => json!(["mux", expr_to_json(c), expr_to_json(a), expr_to_json(b)]),
    }
}

pub fn expr_from_json(v: &Value) -> Result<BitExpr> {
    if let Some(b) = v.as_bool() {
        return Ok(Expr::Const(b));
    }
    let items = array(v, "expression")?;
    let (head, rest) = items.split_first().ok_or_else(|| shape("empty expression"))?;
    let op = head.as_str().ok_or_else(|| shape("expression head must be a string"))?;
    let args = |n: usize| -> Result<Vec<BitExpr>> {
        if rest.len() != n {
            return Err(shape(format!("`{op}` takes {n} arguments, got {}", rest.len())));
        }
        rest.iter().map(expr_from_json).collect()
    };
    let leaf = |f: fn(usize) -> Var| -> Result<BitExpr> {
        match rest {
            [k] => Ok(Expr::Var(f(as_usize(k, op)?))),
            _ => Err(shape(format!("`{op}` takes one index"))),
        }
    };
    match op {
        "select" => leaf(Var::Select),
        "input" => leaf(Var::Input),
        "r" => leaf(Var::Outcome),
        "xor" => Ok(Expr::Xor(rest.iter().map(expr_from_json).collect::<Result<_>>()?)),
        "and" => {
            let mut a = args(2)?;
            let b = a.pop().unwrap();
            Ok(Expr::And(Box::new(a.pop().unwrap()), Box::new(b)))
        }
        "mux" => {
            let mut a = args(3)?;
            let e = a.pop().unwrap();
            let t = a.pop().unwrap();
            Ok(Expr::Mux(Box::new(a.pop().unwrap()), Box::new(t), Box::new(e)))
        }
        other => Err(FormatError::Invalid(format!("unknown expression operator `{other}`"))),
    }
}

/// Single-output functions serialize as the bare expression.
pub fn fn_to_json(f: &ClassicalFn) -> Value {
    match f.outputs.as_slice() {
        [e] => expr_to_json(e),
        es => {
            let mut v = vec![json!("tuple")];
            v.extend(es.iter().map(expr_to_json));
            Value::Array(v)
        }
    }
}

pub fn fn_from_json(v: &Value) -> Result<ClassicalFn> {
    if let Some(items) = v.as_array() {
        if items.first().and_then(Value::as_str) == Some("tuple") {
            return Ok(ClassicalFn::new(items[1..].iter().map(expr_from_json).collect::<Result<_>>()?));
        }
    }
    Ok(ClassicalFn::single(expr_from_json(v)?))
}

fn gadget_kind(name: &str) -> Result<GadgetKind> {
    [GadgetKind::H, GadgetKind::Cnot, GadgetKind::T]
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| FormatError::Invalid(format!("unknown gadget `{name}`")))
}

pub fn plm_to_json(p: &PlmProgram) -> Value {
    let instructions: Vec<Value> = p
        .instructions
        .iter()
        .map(|ins| {
            json!({
                "f": fn_to_json(&ins.f),
                "theta": bits_to_json(&ins.theta),
                "cnots": pairs_json(&p.cnots[..ins.cnots]),
            })
        })
        .collect();
    let gadgets: Vec<Value> = p
        .gadgets
        .iter()
        .map(|g| {
            json!({
                "kind": g.kind.name(),
                "wires": g.wires,
                "first": g.first,
                "selector": g.selector.as_ref().map(expr_to_json),
            })
        })
        .collect();
    let h: Vec<Value> =
        p.h.iter().map(|w| json!({"wire": w.wire, "z": expr_to_json(&w.z), "x": expr_to_json(&w.x)})).collect();
    json!({
        "widths": {"n_in": p.n_in, "n_aux": p.n_aux, "n_plm": p.n_plm, "n_c": p.n_c},
        "t": p.t(),
        "aux_prep": circuit_to_json(&p.aux_prep),
        "instructions": instructions,
        "g": fn_to_json(&p.g),
        "h": h,
        "gadgets": gadgets,
        "finals": pairs_json(&p.finals),
    })
}

pub fn plm_from_json(v: &Value) -> Result<PlmProgram> {
    let w = field(v, "widths")?;
    let mut cnots: Vec<(usize, usize)> = Vec::new();
    let mut instructions = Vec::new();
    for ins in array(field(v, "instructions")?, "instructions")? {
        let prefix = pairs(field(ins, "cnots")?, "cnots")?;
        let common = prefix.len().min(cnots.len());
        if prefix[..common] != cnots[..common] {
            return Err(FormatError::Invalid("instruction CNOT lists are not prefixes of one sequence".into()));
        }
        if prefix.len() > cnots.len() {
            cnots = prefix.clone();
        }
        instructions.push(Instruction {
            f: fn_from_json(field(ins, "f")?)?,
            theta: bits_from_json(field(ins, "theta")?, "theta")?,
            cnots: prefix.len(),
        });
    }
    if usize_field(v, "t")? != instructions.len() {
        return Err(FormatError::Invalid("`t` does not match the instruction count".into()));
    }
    let h = array(field(v, "h")?, "h")?
        .iter()
        .map(|e| {
            Ok(WireFrame {
                wire: usize_field(e, "wire")?,
                z: expr_from_json(field(e, "z")?)?,
                x: expr_from_json(field(e, "x")?)?,
            })
        })
        .collect::<Result<_>>()?;
    let gadgets = match v.get("gadgets") {
        None => Vec::new(),
        Some(gs) => array(gs, "gadgets")?
            .iter()
            .map(|g| {
                let kind = gadget_kind(field(g, "kind")?.as_str().ok_or_else(|| shape("`kind` must be a string"))?)?;
                let selector = match g.get("selector") {
                    None | Some(Value::Null) => None,
                    Some(e) => Some(expr_from_json(e)?),
                };
                Ok(GadgetRecord {
                    kind,
                    wires: usize_list(field(g, "wires")?, "wires")?,
                    first: usize_field(g, "first")?,
                    selector,
                })
            })
            .collect::<Result<_>>()?,
    };
    let finals = match v.get("finals") {
        None => Vec::new(),
        Some(f) => pairs(f, "finals")?,
    };
    let p = PlmProgram {
        n_in: usize_field(w, "n_in")?,
        n_aux: usize_field(w, "n_aux")?,
        n_plm: usize_field(w, "n_plm")?,
        n_c: usize_field(w, "n_c")?,
        aux_prep: circuit_from_json(field(v, "aux_prep")?)?,
        cnots,
        instructions,
        g: fn_from_json(field(v, "g")?)?,
        h,
        gadgets,
        finals,
    };
    p.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(p)
}

pub fn key_to_json(k: &AuthKey) -> Value {
    json!({
        "lambda": k.lambda,
        "n": k.n,
        "S": subspace_to_json(&k.s),
        "Delta": bits_to_json(&k.delta),
        "x": k.x.iter().map(bits_to_json).collect::<Vec<_>>(),
        "z": k.z.iter().map(bits_to_json).collect::<Vec<_>>(),
    })
}

pub fn key_from_json(v: &Value) -> Result<AuthKey> {
    let lambda = usize_field(v, "lambda")?;
    let n = usize_field(v, "n")?;
    let list = |key: &str| -> Result<Vec<BitVec>> {
        array(field(v, key)?, key)?.iter().map(|b| bits_from_json(b, key)).collect()
    };
    let (x, z) = (list("x")?, list("z")?);
    if x.len() != n || z.len() != n {
        return Err(FormatError::Invalid(format!("key lists must have n = {n} entries")));
    }
    let s = subspace_from_json(field(v, "S")?)?;
    let delta = bits_from_json(field(v, "Delta")?, "Delta")?;
    AuthKey::new(lambda, s, delta, x, z).map_err(|e| FormatError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use plmforge_core::auth::keygen;
    use plmforge_core::plm::compile;
    use plmforge_core::rng::SplitRng;

    #[test]
    fn subspace_round_trip_and_rejects_dependent_basis() {
        let s = Subspace::span(4, &[BitVec::parse("1100").unwrap(), BitVec::parse("0110").unwrap()]);
        assert_eq!(subspace_from_json(&subspace_to_json(&s)).unwrap(), s);
        let bad = json!({"ambient_dim": 2, "basis": ["11", "11"]});
        assert!(matches!(subspace_from_json(&bad), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn expression_syntax() {
        let v = json!(["xor", ["select", 3], ["r", 1], true]);
        let e = expr_from_json(&v).unwrap();
        assert_eq!(expr_to_json(&e), v);
        let m = json!(["mux", ["input", 0], ["and", ["select", 0], false], ["select", 1]]);
        assert_eq!(expr_to_json(&expr_from_json(&m).unwrap()), m);
        assert!(expr_from_json(&json!(["nand", 1])).is_err());
        assert!(expr_from_json(&json!(["and", ["select", 0]])).is_err());
    }

    #[test]
    fn tuple_functions_round_trip() {
        let f = ClassicalFn::new(vec![BitExpr::select(0), BitExpr::outcome(2)]);
        let v = fn_to_json(&f);
        assert_eq!(v, json!(["tuple", ["select", 0], ["r", 2]]));
        assert_eq!(fn_from_json(&v).unwrap(), f);
    }

    #[test]
    fn circuit_round_trip() {
        let c = Circuit::parse("qubits 2\ncin 1\naux 1\nH 0\ncX 1 @0\nT 2 ctrl 0\nU 0 1\nUdag 1 0\nmeasure 0 1\n").unwrap();
        assert_eq!(circuit_from_json(&circuit_to_json(&c)).unwrap(), c);
    }

    #[test]
    fn plm_round_trip() {
        let q = Circuit::parse("qubits 2\ncin 1\nH 0\nT 0\nCNOT 0 1\ncZ 1 @0\nmeasure 0 1\n").unwrap();
        let p = compile(&q).unwrap();
        let text = serde_json::to_string(&plm_to_json(&p)).unwrap();
        let back = plm_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn key_round_trip() {
        let k = keygen(2, 2, &mut SplitRng::new(5));
        assert_eq!(key_from_json(&key_to_json(&k)).unwrap(), k);
        let mut v = key_to_json(&k);
        v["Delta"] = json!("000000000");
        assert!(key_from_json(&v).is_err());
    }
}
