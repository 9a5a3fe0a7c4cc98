//! Symbolic integer and boolean expressions.
//!
//! Variable references carry a [`Marker`] telling which point in time they
//! denote: the value at the current point of program text, the value at the
//! start of the enclosing operation expression, or its final value.

mod eval;
mod poly;
mod print;
mod subst;

use std::collections::BTreeSet;

use num_bigint::BigInt;
use serde::Serialize;

pub(crate) use eval::{random_valuation, sample_rng};
pub use eval::{equiv_bool, equiv_expr, evaluate, evaluate_bool, EvalError, Evaluated, Evaluator, Value, Valuation};
pub use poly::{normalize, normalize_bool};
pub use print::{BoolDisplay, MathDisplay, PrintMode};
pub use subst::{substitute, substitute_bool, Binding};

/// Default number of random stores used by the equivalence oracle.
pub const DEFAULT_EQUIV_SAMPLES: usize = 64;
/// Inclusive range of integers drawn by the equivalence oracle.
pub const SAMPLE_RANGE: (i64, i64) = (-100, 100);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Marker {
    /// Plain occurrence in program text.
    Current,
    /// Read-before: value at the start of the enclosing expression.
    Initial,
    /// Read-after: value once the enclosing expression has finished.
    Final,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct VarRef {
    pub name: String,
    pub marker: Marker,
}

impl VarRef {
    pub fn new(name: impl Into<String>, marker: Marker) -> Self {
        VarRef {
            name: name.into(),
            marker,
        }
    }

    pub fn current(name: impl Into<String>) -> Self {
        VarRef::new(name, Marker::Current)
    }

    pub fn initial(name: impl Into<String>) -> Self {
        VarRef::new(name, Marker::Initial)
    }

    pub fn final_(name: impl Into<String>) -> Self {
        VarRef::new(name, Marker::Final)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MathExpr {
    Int(BigInt),
    /// The value of an uninitialized variable; one global symbol.
    Psi,
    Var(VarRef),
    /// Address of a variable. The operand is a name, never a value.
    AddressOf(String),
    /// `depth` dereferences of `ptr`, each read at time `at`.
    Deref {
        ptr: Box<MathExpr>,
        depth: u32,
        at: Marker,
    },
    Neg(Box<MathExpr>),
    Bin(ArithOp, Box<MathExpr>, Box<MathExpr>),
    /// Opaque function application (`abs`, `max`, `g`, registered functions).
    Apply(String, Vec<MathExpr>),
    /// Element read; the array operand is a `Var` or an `Update` chain.
    Index(Box<MathExpr>, Box<MathExpr>),
    /// Inclusive element range `A[lo..hi]`, valid as an aggregate argument.
    Slice(Box<MathExpr>, Box<MathExpr>, Box<MathExpr>),
    /// Array value equal to `array` except at `index`, which holds `value`.
    Update {
        array: Box<MathExpr>,
        index: Box<MathExpr>,
        value: Box<MathExpr>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoolExpr {
    True,
    False,
    Cmp(CmpOp, MathExpr, MathExpr),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
    Pred(String, Vec<MathExpr>),
}

impl MathExpr {
    pub fn int(v: i64) -> Self {
        MathExpr::Int(BigInt::from(v))
    }

    pub fn var(name: &str, marker: Marker) -> Self {
        MathExpr::Var(VarRef::new(name, marker))
    }

    pub fn cur(name: &str) -> Self {
        MathExpr::var(name, Marker::Current)
    }

    pub fn init(name: &str) -> Self {
        MathExpr::var(name, Marker::Initial)
    }

    pub fn fin(name: &str) -> Self {
        MathExpr::var(name, Marker::Final)
    }

    pub fn addr(name: &str) -> Self {
        MathExpr::AddressOf(name.to_string())
    }

    pub fn deref(ptr: MathExpr, depth: u32, at: Marker) -> Self {
        MathExpr::Deref {
            ptr: Box::new(ptr),
            depth,
            at,
        }
    }

    pub fn bin(op: ArithOp, l: MathExpr, r: MathExpr) -> Self {
        MathExpr::Bin(op, Box::new(l), Box::new(r))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(l: MathExpr, r: MathExpr) -> Self {
        MathExpr::bin(ArithOp::Add, l, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(l: MathExpr, r: MathExpr) -> Self {
        MathExpr::bin(ArithOp::Sub, l, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn mul(l: MathExpr, r: MathExpr) -> Self {
        MathExpr::bin(ArithOp::Mul, l, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: MathExpr) -> Self {
        MathExpr::Neg(Box::new(e))
    }

    pub fn index(array: MathExpr, idx: MathExpr) -> Self {
        MathExpr::Index(Box::new(array), Box::new(idx))
    }

    pub fn as_int(&self) -> Option<&BigInt> {
        match self {
            MathExpr::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_psi(&self) -> bool {
        matches!(self, MathExpr::Psi)
    }

    /// Visits `self` and every subexpression, parents first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a MathExpr)) {
        f(self);
        match self {
            MathExpr::Int(_) | MathExpr::Psi | MathExpr::Var(_) | MathExpr::AddressOf(_) => {}
            MathExpr::Deref { ptr, .. } => ptr.walk(f),
            MathExpr::Neg(e) => e.walk(f),
            MathExpr::Bin(_, l, r) | MathExpr::Index(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            MathExpr::Apply(_, args) => args.iter().for_each(|a| a.walk(f)),
            MathExpr::Slice(a, l, h) => {
                a.walk(f);
                l.walk(f);
                h.walk(f);
            }
            MathExpr::Update {
                array,
                index,
                value,
            } => {
                array.walk(f);
                index.walk(f);
                value.walk(f);
            }
        }
    }

    /// All variable references, including dereference points.
    pub fn var_refs(&self) -> BTreeSet<VarRef> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| {
            if let MathExpr::Var(r) = e {
                out.insert(r.clone());
            }
        });
        out
    }

    pub fn markers(&self) -> BTreeSet<Marker> {
        let mut out = BTreeSet::new();
        self.walk(&mut |e| match e {
            MathExpr::Var(r) => {
                out.insert(r.marker);
            }
            MathExpr::Deref { at, .. } => {
                out.insert(*at);
            }
            _ => {}
        });
        out
    }

    pub fn contains_psi(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= e.is_psi());
        found
    }

    pub fn contains_deref(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, MathExpr::Deref { .. }));
        found
    }

    /// True when an address appears as an operand of `+`, `-`, `*` or negation.
    pub fn has_address_arithmetic(&self) -> bool {
        fn is_addr(e: &MathExpr) -> bool {
            matches!(e, MathExpr::AddressOf(_))
        }
        let mut found = false;
        self.walk(&mut |e| match e {
            MathExpr::Bin(_, l, r) => found |= is_addr(l) || is_addr(r),
            MathExpr::Neg(x) => found |= is_addr(x),
            _ => {}
        });
        found
    }

    /// Rewrites every marker (on references and dereference points) through `f`.
    pub fn map_markers(&self, f: &dyn Fn(Marker) -> Marker) -> MathExpr {
        let m = |e: &MathExpr| Box::new(e.map_markers(f));
        match self {
            MathExpr::Int(_) | MathExpr::Psi | MathExpr::AddressOf(_) => self.clone(),
            MathExpr::Var(r) => MathExpr::Var(VarRef::new(r.name.clone(), f(r.marker))),
            MathExpr::Deref { ptr, depth, at } => MathExpr::Deref {
                ptr: m(ptr),
                depth: *depth,
                at: f(*at),
            },
            MathExpr::Neg(e) => MathExpr::Neg(m(e)),
            MathExpr::Bin(op, l, r) => MathExpr::Bin(*op, m(l), m(r)),
            MathExpr::Apply(n, args) => {
                MathExpr::Apply(n.clone(), args.iter().map(|a| a.map_markers(f)).collect())
            }
            MathExpr::Index(a, i) => MathExpr::Index(m(a), m(i)),
            MathExpr::Slice(a, l, h) => MathExpr::Slice(m(a), m(l), m(h)),
            MathExpr::Update {
                array,
                index,
                value,
            } => MathExpr::Update {
                array: m(array),
                index: m(index),
                value: m(value),
            },
        }
    }

    /// Program-text occurrences become read-before references.
    pub fn to_initial(&self) -> MathExpr {
        self.map_markers(&|mk| if mk == Marker::Current { Marker::Initial } else { mk })
    }
}

impl From<i64> for MathExpr {
    fn from(v: i64) -> Self {
        MathExpr::int(v)
    }
}

impl BoolExpr {
    pub fn cmp(op: CmpOp, l: MathExpr, r: MathExpr) -> Self {
        BoolExpr::Cmp(op, l, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(b: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(b))
    }

    /// Conjunction that flattens nested `And` and drops `True`.
    pub fn and_all(parts: impl IntoIterator<Item = BoolExpr>) -> BoolExpr {
        let mut out = Vec::new();
        for p in parts {
            match p {
                BoolExpr::True => {}
                BoolExpr::And(xs) => out.extend(xs),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => BoolExpr::True,
            1 => out.pop().unwrap(),
            _ => BoolExpr::And(out),
        }
    }

    /// Disjunction that flattens nested `Or` and drops `False`.
    pub fn or_all(parts: impl IntoIterator<Item = BoolExpr>) -> BoolExpr {
        let mut out = Vec::new();
        for p in parts {
            match p {
                BoolExpr::False => {}
                BoolExpr::Or(xs) => out.extend(xs),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => BoolExpr::False,
            1 => out.pop().unwrap(),
            _ => BoolExpr::Or(out),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, BoolExpr::True)
    }

    pub fn is_false(&self) -> bool {
        matches!(self, BoolExpr::False)
    }

    pub fn for_each_math<'a>(&'a self, f: &mut dyn FnMut(&'a MathExpr)) {
        match self {
            BoolExpr::True | BoolExpr::False => {}
            BoolExpr::Cmp(_, l, r) => {
                f(l);
                f(r);
            }
            BoolExpr::Not(b) => b.for_each_math(f),
            BoolExpr::And(xs) | BoolExpr::Or(xs) => xs.iter().for_each(|x| x.for_each_math(f)),
            BoolExpr::Pred(_, args) => args.iter().for_each(f),
        }
    }

    pub fn var_refs(&self) -> BTreeSet<VarRef> {
        let mut out = BTreeSet::new();
        self.for_each_math(&mut |e| out.extend(e.var_refs()));
        out
    }

    pub fn markers(&self) -> BTreeSet<Marker> {
        let mut out = BTreeSet::new();
        self.for_each_math(&mut |e| out.extend(e.markers()));
        out
    }

    pub fn map_math(&self, f: &dyn Fn(&MathExpr) -> MathExpr) -> BoolExpr {
        match self {
            BoolExpr::True | BoolExpr::False => self.clone(),
            BoolExpr::Cmp(op, l, r) => BoolExpr::Cmp(*op, f(l), f(r)),
            BoolExpr::Not(b) => BoolExpr::Not(Box::new(b.map_math(f))),
            BoolExpr::And(xs) => BoolExpr::And(xs.iter().map(|x| x.map_math(f)).collect()),
            BoolExpr::Or(xs) => BoolExpr::Or(xs.iter().map(|x| x.map_math(f)).collect()),
            BoolExpr::Pred(n, args) => BoolExpr::Pred(n.clone(), args.iter().map(f).collect()),
        }
    }

    pub fn map_markers(&self, f: &dyn Fn(Marker) -> Marker) -> BoolExpr {
        self.map_math(&|e| e.map_markers(f))
    }

    pub fn to_initial(&self) -> BoolExpr {
        self.map_math(&|e| e.to_initial())
    }

    /// Top-level conjuncts (a non-conjunction is its own single conjunct).
    pub fn conjuncts(&self) -> Vec<BoolExpr> {
        match self {
            BoolExpr::True => Vec::new(),
            BoolExpr::And(xs) => xs.iter().flat_map(|x| x.conjuncts()).collect(),
            other => vec![other.clone()],
        }
    }
}
