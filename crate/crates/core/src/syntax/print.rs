use std::fmt::Write;

use super::{CallKind, Decl, LoopCount, OENode, Program, Target, Term, VarType, WriteOp};

/// Renders a program in concrete syntax; `parse` reads it back unchanged.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        out.push_str(&decl(d));
        out.push('\n');
    }
    out.push_str(&node(&p.body));
    out
}

fn decl(d: &Decl) -> String {
    let ty = match d.ty {
        VarType::Int => "int".to_string(),
        VarType::Ptr(1) => "ptr int".to_string(),
        VarType::Ptr(_) => "ptr ptr int".to_string(),
        VarType::Array(Some(n)) => format!("int[{n}]"),
        VarType::Array(None) => "int[]".to_string(),
    };
    format!("var {}: {ty};", d.name)
}

/// Sequence-level rendering.
pub(crate) fn node(n: &OENode) -> String {
    match n {
        OENode::Seq(items) => items
            .iter()
            .map(|i| match i {
                OENode::Seq(_) => format!("({})", node(i)),
                other => node(other),
            })
            .collect::<Vec<_>>()
            .join("; "),
        OENode::Skip => "skip".into(),
        OENode::Term(t) => term(t),
        OENode::Guarded(body, g) => format!("{}[{g}]", operand(body)),
        OENode::LoopCount(body, LoopCount::Literal(k)) => format!("{}^{k}", operand(body)),
        OENode::LoopCount(body, LoopCount::Symbolic(k)) => format!("{}^{k}", operand(body)),
        OENode::LoopUntil(body, c) => format!("{}^{{until {}}}", operand(body), c.cond),
        OENode::WaitLoop(c) => format!("skip^{{until {}}}", c.cond),
        OENode::Par(l, r) => format!("({} || {})", node(l), node(r)),
        OENode::Call { name, args, kind } => {
            let args = args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
            match kind {
                CallKind::ByName => format!("call {name}({args})"),
                CallKind::ByValueInto(t) => format!("{t}!({name}({args}))"),
            }
        }
    }
}

/// Rendering of a node that receives a postfix `[b]` or `^...`.
fn operand(n: &OENode) -> String {
    match n {
        OENode::Skip
        | OENode::Call {
            kind: CallKind::ByName,
            ..
        }
        | OENode::Par(..)
        | OENode::Guarded(..)
        | OENode::LoopCount(..)
        | OENode::LoopUntil(..)
        | OENode::WaitLoop(_) => node(n),
        _ => format!("({})", node(n)),
    }
}

fn term(t: &Term) -> String {
    t.writes.iter().map(write_op).collect::<Vec<_>>().join(", ")
}

fn write_op(w: &WriteOp) -> String {
    let mut s = match &w.target {
        Target::Var(v) => v.clone(),
        Target::Elem(a, i) => format!("{a}[{i}]"),
        Target::Deref(p, d) => format!("{}{p}", "*".repeat(*d as usize)),
    };
    let _ = write!(s, "!({})", w.payload);
    if let Some(g) = &w.guard {
        let _ = write!(s, "[{g}]");
    }
    s
}
