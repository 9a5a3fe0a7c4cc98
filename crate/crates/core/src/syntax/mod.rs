//! Operation-expression programs: AST, parser, static validation and printer.

mod lexer;
mod parser;
mod print;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::expr::{BoolExpr, Marker, MathExpr};

pub use parser::{parse, parse_bool, parse_csp_text, parse_math, parse_sem_bool, CspText, SpText};
pub use print::pretty_print;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VarType {
    Int,
    /// Pointer to int (`1`) or pointer to pointer to int (`2`).
    Ptr(u8),
    /// Int array; length is `None` when inferred from an undeclared program.
    Array(Option<usize>),
}

impl VarType {
    pub fn pointer_depth(self) -> u8 {
        match self {
            VarType::Ptr(d) => d,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Decl {
    pub name: String,
    pub ty: VarType,
}

/// Declared variables of a program, `V`.
pub type VarSet = BTreeMap<String, VarType>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Var(String),
    Elem(String, MathExpr),
    /// `*p` (`depth` 1) or `**p` (`depth` 2).
    Deref(String, u32),
}

impl Target {
    pub fn base(&self) -> &str {
        match self {
            Target::Var(n) | Target::Elem(n, _) | Target::Deref(n, _) => n,
        }
    }

    /// Token used by [`written_vars`]: the variable name, or `*p` for an
    /// indirect target whose pointee is only known after pointer resolution.
    pub fn written_token(&self) -> String {
        match self {
            Target::Var(n) | Target::Elem(n, _) => n.clone(),
            Target::Deref(n, d) => format!("{}{n}", "*".repeat(*d as usize)),
        }
    }
}

/// A single write `v!(e)`, optionally conditional `v!(e)[b]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WriteOp {
    pub target: Target,
    pub payload: MathExpr,
    pub guard: Option<BoolExpr>,
}

/// Writes joined by `,`: a simple term, a conditional chain on one
/// variable, or a simultaneous term over distinct variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub writes: Vec<WriteOp>,
}

impl Term {
    pub fn has_deref_target(&self) -> bool {
        self.writes
            .iter()
            .any(|w| matches!(w.target, Target::Deref(..)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoopCount {
    Literal(u64),
    Symbolic(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum UntilKind {
    /// Only final values: repeat-until that may exit before the first pass.
    FinalOnly,
    /// Final and read-before values: the body runs at least once.
    FinalAndInitial,
}

/// Loop exit condition over per-iteration final (`x'`) and read-before
/// (`~x`) values; plain names denote values at loop entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemBool {
    pub cond: BoolExpr,
    pub kind: UntilKind,
}

impl SemBool {
    pub fn new(cond: BoolExpr) -> Self {
        let kind = if cond.markers().contains(&Marker::Initial) {
            UntilKind::FinalAndInitial
        } else {
            UntilKind::FinalOnly
        };
        SemBool { cond, kind }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CallKind {
    ByName,
    /// The call's value is written into the named variable.
    ByValueInto(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OENode {
    Skip,
    Term(Term),
    /// Two or more items joined by `;`.
    Seq(Vec<OENode>),
    Guarded(Box<OENode>, BoolExpr),
    LoopCount(Box<OENode>, LoopCount),
    LoopUntil(Box<OENode>, SemBool),
    /// `skip^{until b}`: waits until an external event makes `b` true.
    WaitLoop(SemBool),
    Par(Box<OENode>, Box<OENode>),
    Call {
        name: String,
        args: Vec<MathExpr>,
        kind: CallKind,
    },
}

impl OENode {
    pub fn seq(mut items: Vec<OENode>) -> OENode {
        match items.len() {
            0 => OENode::Skip,
            1 => items.pop().unwrap(),
            _ => OENode::Seq(items),
        }
    }

    /// Visits every node, parents first.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a OENode)) {
        f(self);
        match self {
            OENode::Seq(items) => items.iter().for_each(|i| i.walk(f)),
            OENode::Guarded(b, _) | OENode::LoopCount(b, _) | OENode::LoopUntil(b, _) => b.walk(f),
            OENode::Par(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            OENode::Skip | OENode::Term(_) | OENode::WaitLoop(_) | OENode::Call { .. } => {}
        }
    }

    pub fn has_deref_target(&self) -> bool {
        let mut found = false;
        self.walk(&mut |n| {
            if let OENode::Term(t) = n {
                found |= t.has_deref_target();
            }
        });
        found
    }

    pub fn has_loops(&self) -> bool {
        let mut found = false;
        self.walk(&mut |n| {
            found |= matches!(
                n,
                OENode::LoopCount(..) | OENode::LoopUntil(..) | OENode::WaitLoop(_)
            )
        });
        found
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub body: OENode,
}

impl Program {
    pub fn vars(&self) -> VarSet {
        self.decls.iter().map(|d| (d.name.clone(), d.ty)).collect()
    }
}

/// Variables syntactically targeted anywhere in `n`. Indirect targets
/// contribute `*p` tokens; a call by name may write any variable argument.
pub fn written_vars(n: &OENode) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    n.walk(&mut |node| match node {
        OENode::Term(t) => out.extend(t.writes.iter().map(|w| w.target.written_token())),
        OENode::Call { args, kind, .. } => {
            match kind {
                CallKind::ByName => out.extend(args.iter().filter_map(|a| match a {
                    MathExpr::Var(r) => Some(r.name.clone()),
                    _ => None,
                })),
                CallKind::ByValueInto(t) => {
                    out.insert(t.clone());
                }
            }
        }
        _ => {}
    });
    out
}

/// Variables read anywhere in `n` (payloads, guards, indices, loop
/// conditions, call arguments). Reads through a pointer add a `*p` token.
pub fn read_vars(n: &OENode) -> BTreeSet<String> {
    fn math(e: &MathExpr, out: &mut BTreeSet<String>) {
        e.walk(&mut |x| match x {
            MathExpr::Var(r) => {
                out.insert(r.name.clone());
            }
            MathExpr::Deref { ptr, depth, .. } => {
                if let MathExpr::Var(r) = ptr.as_ref() {
                    out.insert(format!("{}{}", "*".repeat(*depth as usize), r.name));
                }
            }
            _ => {}
        });
    }
    fn boolean(b: &BoolExpr, out: &mut BTreeSet<String>) {
        b.for_each_math(&mut |e| math(e, out));
    }
    let mut out = BTreeSet::new();
    n.walk(&mut |node| match node {
        OENode::Term(t) => {
            for w in &t.writes {
                math(&w.payload, &mut out);
                if let Some(g) = &w.guard {
                    boolean(g, &mut out);
                }
                match &w.target {
                    Target::Elem(_, idx) => math(idx, &mut out),
                    Target::Deref(p, _) => {
                        out.insert(p.clone());
                    }
                    Target::Var(_) => {}
                }
            }
        }
        OENode::Guarded(_, g) => boolean(g, &mut out),
        OENode::LoopCount(_, LoopCount::Symbolic(n)) => {
            out.insert(n.clone());
        }
        OENode::LoopUntil(_, c) | OENode::WaitLoop(c) => boolean(&c.cond, &mut out),
        OENode::Call { args, .. } => args.iter().for_each(|a| math(a, &mut out)),
        _ => {}
    });
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("variable `{var}` is written more than once in one term without guards on every write")]
    DuplicateUnguardedTarget { var: String },
    #[error("{line}:{col}: undeclared variable `{name}`")]
    UndeclaredVariable { name: String, line: usize, col: usize },
    #[error("variable `{0}` declared twice")]
    DuplicateDeclaration(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("arithmetic on an address: {0}")]
    IllegalAddressArithmetic(String),
    #[error("{line}:{col}: {message}")]
    Marker {
        line: usize,
        col: usize,
        message: String,
    },
}

impl ParseError {
    pub(crate) fn syntax(pos: (usize, usize), expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError::Syntax {
            line: pos.0,
            col: pos.1,
            expected: expected.into(),
            found: found.into(),
        }
    }
}
