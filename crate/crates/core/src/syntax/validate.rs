use std::collections::{BTreeMap, BTreeSet};

use super::{Decl, LoopCount, OENode, ParseError, Program, Target, VarSet, VarType};
use crate::expr::{BoolExpr, MathExpr};

type Positions = BTreeMap<String, (usize, usize)>;

/// Static checks on a parsed program. A program without declarations gets
/// its variable set inferred from usage.
pub(crate) fn validate(program: &Program, first_use: &Positions) -> Result<Program, ParseError> {
    let mut program = program.clone();
    let mut seen = BTreeSet::new();
    for d in &program.decls {
        if !seen.insert(d.name.clone()) {
            return Err(ParseError::DuplicateDeclaration(d.name.clone()));
        }
    }
    if program.decls.is_empty() {
        program.decls = infer_decls(&program.body);
    }
    let vars = program.vars();
    let mut err = None;
    program.body.walk(&mut |n| {
        if err.is_none() {
            if let Err(e) = check_node(n, &vars, first_use) {
                err = Some(e);
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(program),
    }
}

fn undeclared(name: &str, first_use: &Positions) -> ParseError {
    let (line, col) = first_use.get(name).copied().unwrap_or((0, 0));
    ParseError::UndeclaredVariable {
        name: name.to_string(),
        line,
        col,
    }
}

fn lookup(name: &str, vars: &VarSet, first_use: &Positions) -> Result<VarType, ParseError> {
    vars.get(name).copied().ok_or_else(|| undeclared(name, first_use))
}

fn check_node(n: &OENode, vars: &VarSet, pos: &Positions) -> Result<(), ParseError> {
    match n {
        OENode::Term(t) => {
            let mut groups: BTreeMap<&Target, (usize, bool)> = BTreeMap::new();
            for w in &t.writes {
                let g = groups.entry(&w.target).or_insert((0, true));
                g.0 += 1;
                g.1 &= w.guard.is_some();
                check_target(&w.target, vars, pos)?;
                check_math(&w.payload, vars, pos)?;
                if let Some(g) = &w.guard {
                    check_bool(g, vars, pos)?;
                }
            }
            if let Some((t, _)) = groups.iter().find(|(_, (n, all))| *n > 1 && !*all) {
                return Err(ParseError::DuplicateUnguardedTarget {
                    var: t.written_token(),
                });
            }
            Ok(())
        }
        OENode::Guarded(_, g) => check_bool(g, vars, pos),
        OENode::LoopCount(_, LoopCount::Symbolic(k)) => lookup(k, vars, pos).map(|_| ()),
        OENode::LoopUntil(_, c) | OENode::WaitLoop(c) => check_bool(&c.cond, vars, pos),
        OENode::Call { args, .. } => args.iter().try_for_each(|a| check_math(a, vars, pos)),
        _ => Ok(()),
    }
}

fn check_target(t: &Target, vars: &VarSet, pos: &Positions) -> Result<(), ParseError> {
    let ty = lookup(t.base(), vars, pos)?;
    match (t, ty) {
        (Target::Var(_), VarType::Array(_)) => Err(ParseError::Type(format!(
            "array `{}` can only be written element by element",
            t.base()
        ))),
        (Target::Elem(_, idx), VarType::Array(_)) => check_math(idx, vars, pos),
        (Target::Elem(..), _) => Err(ParseError::Type(format!("`{}` is not an array", t.base()))),
        (Target::Deref(_, d), _) if *d > 2 => Err(ParseError::Type(format!(
            "`{}` dereferences more than twice",
            t.written_token()
        ))),
        (Target::Deref(_, d), ty) if ty.pointer_depth() < *d as u8 => Err(ParseError::Type(format!(
            "`{}` dereferences a non-pointer",
            t.written_token()
        ))),
        _ => Ok(()),
    }
}

fn check_bool(b: &BoolExpr, vars: &VarSet, pos: &Positions) -> Result<(), ParseError> {
    let mut res = Ok(());
    b.for_each_math(&mut |e| {
        if res.is_ok() {
            res = check_math(e, vars, pos);
        }
    });
    res
}

fn check_math(e: &MathExpr, vars: &VarSet, pos: &Positions) -> Result<(), ParseError> {
    let mut res = Ok(());
    let is_pointer = |x: &MathExpr| match x {
        MathExpr::AddressOf(_) => true,
        MathExpr::Var(r) => vars.get(&r.name).is_some_and(|t| matches!(t, VarType::Ptr(_))),
        MathExpr::Deref { ptr, depth, .. } => match ptr.as_ref() {
            MathExpr::Var(r) => vars
                .get(&r.name)
                .is_some_and(|t| t.pointer_depth() > *depth as u8),
            _ => false,
        },
        _ => false,
    };
    e.walk(&mut |x| {
        if res.is_err() {
            return;
        }
        res = match x {
            MathExpr::Var(r) => lookup(&r.name, vars, pos).map(|_| ()),
            MathExpr::AddressOf(n) => lookup(n, vars, pos).map(|_| ()),
            MathExpr::Deref { ptr, depth, .. } => match ptr.as_ref() {
                _ if *depth > 2 => Err(ParseError::Type(format!("`{x}` dereferences more than twice"))),
                MathExpr::Var(r) => match lookup(&r.name, vars, pos) {
                    Ok(t) if t.pointer_depth() < *depth as u8 => Err(ParseError::Type(format!(
                        "`{x}` dereferences a non-pointer"
                    ))),
                    other => other.map(|_| ()),
                },
                _ => Ok(()),
            },
            MathExpr::Index(a, _) | MathExpr::Slice(a, ..) => match a.as_ref() {
                MathExpr::Var(r) => match lookup(&r.name, vars, pos) {
                    Ok(VarType::Array(_)) => Ok(()),
                    Ok(_) => Err(ParseError::Type(format!("`{}` is not an array", r.name))),
                    Err(e) => Err(e),
                },
                _ => Ok(()),
            },
            MathExpr::Bin(_, l, r) if is_pointer(l) || is_pointer(r) => {
                Err(ParseError::IllegalAddressArithmetic(x.to_string()))
            }
            MathExpr::Neg(v) if is_pointer(v) => Err(ParseError::IllegalAddressArithmetic(x.to_string())),
            _ => Ok(()),
        };
    });
    res
}

/// Declarations inferred from usage: indexed names are arrays, names that
/// are dereferenced or hold addresses are pointers, the rest are ints.
fn infer_decls(body: &OENode) -> Vec<Decl> {
    let mut types: BTreeMap<String, VarType> = BTreeMap::new();
    let mut addr_of: Vec<(String, String)> = Vec::new();
    let bump = |types: &mut BTreeMap<String, VarType>, name: &str, ty: VarType| {
        let slot = types.entry(name.to_string()).or_insert(VarType::Int);
        *slot = match (*slot, ty) {
            (VarType::Array(_), _) | (_, VarType::Array(_)) => VarType::Array(None),
            (VarType::Ptr(a), VarType::Ptr(b)) => VarType::Ptr(a.max(b)),
            (VarType::Int, t) | (t, VarType::Int) => t,
        };
    };
    let math = |types: &mut BTreeMap<String, VarType>, e: &MathExpr| {
        e.walk(&mut |x| match x {
            MathExpr::Var(r) => bump(types, &r.name, VarType::Int),
            MathExpr::AddressOf(n) => bump(types, n, VarType::Int),
            MathExpr::Deref { ptr, depth, .. } => {
                if let MathExpr::Var(r) = ptr.as_ref() {
                    bump(types, &r.name, VarType::Ptr((*depth).min(2) as u8));
                }
            }
            MathExpr::Index(a, _) | MathExpr::Slice(a, ..) => {
                if let MathExpr::Var(r) = a.as_ref() {
                    bump(types, &r.name, VarType::Array(None));
                }
            }
            _ => {}
        });
    };
    body.walk(&mut |n| match n {
        OENode::Term(t) => {
            for w in &t.writes {
                match &w.target {
                    Target::Var(v) => {
                        bump(&mut types, v, VarType::Int);
                        if let MathExpr::AddressOf(a) = &w.payload {
                            addr_of.push((v.clone(), a.clone()));
                        }
                    }
                    Target::Elem(a, i) => {
                        bump(&mut types, a, VarType::Array(None));
                        math(&mut types, i);
                    }
                    Target::Deref(p, d) => bump(&mut types, p, VarType::Ptr((*d).min(2) as u8)),
                }
                math(&mut types, &w.payload);
                if let Some(g) = &w.guard {
                    g.for_each_math(&mut |e| math(&mut types, e));
                }
            }
        }
        OENode::Guarded(_, g) => g.for_each_math(&mut |e| math(&mut types, e)),
        OENode::LoopCount(_, LoopCount::Symbolic(k)) => bump(&mut types, k, VarType::Int),
        OENode::LoopUntil(_, c) | OENode::WaitLoop(c) => {
            c.cond.for_each_math(&mut |e| math(&mut types, e))
        }
        OENode::Call { args, .. } => args.iter().for_each(|a| math(&mut types, a)),
        _ => {}
    });
    // `p!(&a)` makes `p` a pointer one level above `a`.
    for _ in 0..2 {
        for (p, a) in &addr_of {
            let inner = types.get(a).map_or(0, |t| t.pointer_depth());
            bump(&mut types, p, VarType::Ptr((inner + 1).min(2)));
        }
    }
    types.into_iter().map(|(name, ty)| Decl { name, ty }).collect()
}
