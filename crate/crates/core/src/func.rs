//! Classical Boolean functions used as measurement selectors and output maps.
//!
//! A [`ClassicalFn`] is a tuple of expressions over three kinds of inputs:
//! bits of the measured register (`v`), bits of the classical input (`i`)
//! and previously observed outcomes (`r`). All indices are zero based.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::f2::BitVec;

/// Boolean expression generic over its leaf type.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr<L> {
    Var(L),
    Const(bool),
    Xor(Vec<Expr<L>>),
    And(Box<Expr<L>>, Box<Expr<L>>),
    /// `Mux(c, a, b)` is `a` when `c` holds and `b` otherwise.
    Mux(Box<Expr<L>>, Box<Expr<L>>, Box<Expr<L>>),
}

impl<L: Clone> Expr<L> {
    pub fn var(l: L) -> Self {
        Expr::Var(l)
    }

    pub fn xor2(a: Expr<L>, b: Expr<L>) -> Self {
        Expr::Xor(alloc::vec![a, b]).simplify()
    }

    pub fn xor_all(items: Vec<Expr<L>>) -> Self {
        Expr::Xor(items).simplify()
    }

    pub fn and(a: Expr<L>, b: Expr<L>) -> Self {
        Expr::And(Box::new(a), Box::new(b)).simplify()
    }

    pub fn mux(c: Expr<L>, a: Expr<L>, b: Expr<L>) -> Self {
        Expr::Mux(Box::new(c), Box::new(a), Box::new(b)).simplify()
    }

    pub fn eval(&self, leaf: &impl Fn(&L) -> bool) -> bool {
        match self {
            Expr::Var(l) => leaf(l),
            Expr::Const(b) => *b,
            Expr::Xor(items) => items.iter().fold(false, |acc, e| acc ^ e.eval(leaf)),
            Expr::And(a, b) => a.eval(leaf) && b.eval(leaf),
            Expr::Mux(c, a, b) => {
                if c.eval(leaf) {
                    a.eval(leaf)
                } else {
                    b.eval(leaf)
                }
            }
        }
    }

    /// Replaces every leaf by an expression over a new leaf type.
    pub fn bind<M: Clone>(&self, f: &impl Fn(&L) -> Expr<M>) -> Expr<M> {
        match self {
            Expr::Var(l) => f(l),
            Expr::Const(b) => Expr::Const(*b),
            Expr::Xor(items) => Expr::Xor(items.iter().map(|e| e.bind(f)).collect()),
            Expr::And(a, b) => Expr::And(Box::new(a.bind(f)), Box::new(b.bind(f))),
            Expr::Mux(c, a, b) => Expr::Mux(Box::new(c.bind(f)), Box::new(a.bind(f)), Box::new(b.bind(f))),
        }
        .simplify()
    }

    /// Constant folding and flattening of nested XORs.
    pub fn simplify(self) -> Self {
        match self {
            Expr::Xor(items) => {
                let mut parity = false;
                let mut rest = Vec::new();
                for e in items {
                    match e.simplify() {
                        Expr::Const(b) => parity ^= b,
                        Expr::Xor(inner) => {
                            for x in inner {
                                match x {
                                    Expr::Const(b) => parity ^= b,
                                    other => rest.push(other),
                                }
                            }
                        }
                        other => rest.push(other),
                    }
                }
                if parity {
                    rest.push(Expr::Const(true));
                }
                match rest.len() {
                    0 => Expr::Const(false),
                    1 => rest.pop().unwrap(),
                    _ => Expr::Xor(rest),
                }
            }
            Expr::And(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(false), _) | (_, Expr::Const(false)) => Expr::Const(false),
                (Expr::Const(true), e) | (e, Expr::Const(true)) => e,
                (a, b) => Expr::And(Box::new(a), Box::new(b)),
            },
            Expr::Mux(c, a, b) => match c.simplify() {
                Expr::Const(true) => a.simplify(),
                Expr::Const(false) => b.simplify(),
                c => Expr::Mux(Box::new(c), Box::new(a.simplify()), Box::new(b.simplify())),
            },
            e => e,
        }
    }

    pub fn leaves(&self, out: &mut Vec<L>) {
        match self {
            Expr::Var(l) => out.push(l.clone()),
            Expr::Const(_) => {}
            Expr::Xor(items) => items.iter().for_each(|e| e.leaves(out)),
            Expr::And(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
            Expr::Mux(c, a, b) => {
                c.leaves(out);
                a.leaves(out);
                b.leaves(out);
            }
        }
    }
}

/// Leaf of a [`ClassicalFn`] expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Bit of the measured register.
    Select(usize),
    /// Bit of the classical input.
    Input(usize),
    /// Earlier measurement outcome.
    Outcome(usize),
}

pub type BitExpr = Expr<Var>;

impl BitExpr {
    pub fn select(w: usize) -> Self {
        Expr::Var(Var::Select(w))
    }

    pub fn input(k: usize) -> Self {
        Expr::Var(Var::Input(k))
    }

    pub fn outcome(k: usize) -> Self {
        Expr::Var(Var::Outcome(k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FnError {
    #[error("register bit {index} out of range (width {width})")]
    SelectOutOfRange { index: usize, width: usize },
    #[error("classical input bit {index} out of range (width {width})")]
    InputOutOfRange { index: usize, width: usize },
    #[error("outcome r{index} not yet available ({available} known)")]
    OutcomeUnavailable { index: usize, available: usize },
}

/// Multi-output classical function.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ClassicalFn {
    pub outputs: Vec<BitExpr>,
}

impl ClassicalFn {
    pub fn new(outputs: Vec<BitExpr>) -> Self {
        ClassicalFn { outputs }
    }

    pub fn single(e: BitExpr) -> Self {
        ClassicalFn { outputs: alloc::vec![e] }
    }

    pub fn out_width(&self) -> usize {
        self.outputs.len()
    }

    fn check(&self, v: usize, i: usize, r: usize) -> Result<(), FnError> {
        let mut leaves = Vec::new();
        for e in &self.outputs {
            e.leaves(&mut leaves);
        }
        for l in leaves {
            match l {
                Var::Select(k) if k >= v => return Err(FnError::SelectOutOfRange { index: k, width: v }),
                Var::Input(k) if k >= i => return Err(FnError::InputOutOfRange { index: k, width: i }),
                Var::Outcome(k) if k >= r => return Err(FnError::OutcomeUnavailable { index: k, available: r }),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn eval(&self, v: &BitVec, i: &BitVec, r: &BitVec) -> Result<BitVec, FnError> {
        self.check(v.len(), i.len(), r.len())?;
        Ok(self.eval_unchecked(&|l| match *l {
            Var::Select(k) => v.get(k),
            Var::Input(k) => i.get(k),
            Var::Outcome(k) => r.get(k),
        }))
    }

    pub fn eval_unchecked(&self, leaf: &impl Fn(&Var) -> bool) -> BitVec {
        self.outputs.iter().map(|e| e.eval(leaf)).collect()
    }

    /// Substitutes known classical input and outcomes, leaving only register reads.
    pub fn specialize(&self, i: &BitVec, r: &BitVec) -> Result<ClassicalFn, FnError> {
        self.check(usize::MAX, i.len(), r.len())?;
        Ok(ClassicalFn {
            outputs: self
                .outputs
                .iter()
                .map(|e| {
                    e.bind(&|l: &Var| match *l {
                        Var::Select(k) => BitExpr::select(k),
                        Var::Input(k) => Expr::Const(i.get(k)),
                        Var::Outcome(k) => Expr::Const(r.get(k)),
                    })
                })
                .collect(),
        })
    }

    /// Register bits the function reads, sorted.
    pub fn reads(&self) -> Vec<usize> {
        let mut leaves = Vec::new();
        for e in &self.outputs {
            e.leaves(&mut leaves);
        }
        let set: BTreeSet<usize> = leaves
            .into_iter()
            .filter_map(|l| match l {
                Var::Select(k) => Some(k),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }

    /// Whether the function reads nothing from the classical input or outcomes.
    pub fn is_register_only(&self) -> bool {
        let mut leaves = Vec::new();
        for e in &self.outputs {
            e.leaves(&mut leaves);
        }
        leaves.iter().all(|l| matches!(l, Var::Select(_)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(s: &str) -> BitVec {
        BitVec::parse(s).unwrap()
    }

    #[test]
    fn eval_basic_ops() {
        let f = ClassicalFn::new(alloc::vec![
            Expr::xor2(BitExpr::select(0), BitExpr::input(1)),
            Expr::and(BitExpr::select(1), BitExpr::outcome(0)),
            Expr::mux(BitExpr::outcome(0), BitExpr::select(0), BitExpr::select(1)),
        ]);
        assert_eq!(f.eval(&bv("10"), &bv("01"), &bv("1")).unwrap(), bv("001"));
        assert_eq!(f.eval(&bv("01"), &bv("00"), &bv("0")).unwrap(), bv("001"));
        assert_eq!(f.eval(&bv("01"), &bv("00"), &bv("1")).unwrap(), bv("010"));
    }

    #[test]
    fn out_of_range_is_reported() {
        let f = ClassicalFn::single(BitExpr::outcome(2));
        assert_eq!(
            f.eval(&bv("0"), &bv(""), &bv("01")),
            Err(FnError::OutcomeUnavailable { index: 2, available: 2 })
        );
    }

    #[test]
    fn specialize_folds_constants() {
        let f = ClassicalFn::single(Expr::mux(
            Expr::xor2(BitExpr::outcome(0), BitExpr::input(0)),
            Expr::xor2(BitExpr::select(1), BitExpr::select(2)),
            BitExpr::select(2),
        ));
        let g = f.specialize(&bv("1"), &bv("1")).unwrap();
        assert_eq!(g.outputs[0], BitExpr::select(2));
        assert_eq!(g.reads(), alloc::vec![2]);
        assert!(g.is_register_only());
        let h = f.specialize(&bv("0"), &bv("1")).unwrap();
        assert_eq!(h.reads(), alloc::vec![1, 2]);
    }

    #[test]
    fn xor_flattening_cancels_constants() {
        let e = Expr::xor_all(alloc::vec![
            Expr::Const(true),
            Expr::xor2(BitExpr::select(0), Expr::Const(true)),
        ]);
        assert_eq!(e, BitExpr::select(0));
    }
}
