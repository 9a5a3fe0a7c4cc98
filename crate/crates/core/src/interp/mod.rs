//! Concrete interpreter for OE programs, and the harness that checks
//! symbolic semantics against it.

mod diff;
mod fuzz;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::diag::{extend_unique, push_unique, Diagnostic};
use crate::expr::{BoolExpr, EvalError, Evaluator, Marker, MathExpr, Valuation, Value, VarRef};
use crate::funcsem::Registry;
use crate::syntax::{
    CallKind, LoopCount, OENode, Program, SemBool, Target, Term, UntilKind, VarSet, VarType,
};

pub use diff::{differential_check, differential_check_csp, CheckOptions, CheckReport, Mismatch};
pub use fuzz::{fuzz_programs, fuzz_programs_with, minimize, FuzzOptions};

pub const DEFAULT_LOOP_CAP: usize = 10_000;

/// Concrete state: every variable holds an int, an address, psi, or (for
/// arrays) a sequence of ints.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Store {
    pub vals: BTreeMap<String, Value>,
}

impl Store {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vals.get(name)
    }

    pub fn set(&mut self, name: &str, v: Value) {
        self.vals.insert(name.to_string(), v);
    }

    /// Fills in every declared variable missing from the store with psi.
    pub fn covering(&self, vars: &VarSet) -> Store {
        let mut out = self.clone();
        for v in vars.keys() {
            out.vals.entry(v.clone()).or_insert(Value::Psi);
        }
        out
    }
}

impl fmt::Display for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.vals.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(", "))
    }
}

impl Valuation for Store {
    fn lookup(&self, r: &VarRef) -> Option<Value> {
        self.vals.get(&r.name).cloned()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("bad store literal: {0}")]
pub struct StoreParseError(pub String);

/// `x=1,y=-2,A=[3,1,2],p=&a,q=psi`
impl FromStr for Store {
    type Err = StoreParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut vals = BTreeMap::new();
        let mut rest = s.trim();
        while !rest.is_empty() {
            let (name, after) = rest
                .split_once('=')
                .ok_or_else(|| StoreParseError(format!("missing `=` in `{rest}`")))?;
            let name = name.trim().to_string();
            let after = after.trim_start();
            let (val_text, tail) = if let Some(inner) = after.strip_prefix('[') {
                let end = inner
                    .find(']')
                    .ok_or_else(|| StoreParseError(format!("unclosed `[` for `{name}`")))?;
                (&after[..end + 2], &inner[end + 1..])
            } else {
                match after.find(',') {
                    Some(i) => (&after[..i], &after[i..]),
                    None => (after, ""),
                }
            };
            let val_text = val_text.trim();
            let value = if let Some(inner) = val_text.strip_prefix('[') {
                let inner = inner.trim_end_matches(']');
                let xs = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|x| !x.is_empty())
                    .map(|x| x.parse::<i64>().map_err(|_| StoreParseError(format!("`{x}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                Value::Array(xs)
            } else if let Some(a) = val_text.strip_prefix('&') {
                Value::Addr(a.trim().to_string())
            } else if val_text == "psi" {
                Value::Psi
            } else {
                Value::Int(
                    val_text
                        .parse()
                        .map_err(|_| StoreParseError(format!("`{val_text}` for `{name}`")))?,
                )
            };
            if name.is_empty() {
                return Err(StoreParseError("empty variable name".into()));
            }
            vals.insert(name, value);
            rest = tail.trim_start().trim_start_matches(',').trim_start();
        }
        Ok(Store { vals })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InterpError {
    #[error("guard overlap on `{target}`: {guards} all hold at {store}")]
    GuardOverlap {
        target: String,
        guards: String,
        store: String,
    },
    #[error("loop did not finish within {cap} iterations")]
    Divergence { cap: usize },
    #[error("parallel branches disagree: {0}")]
    CooperativeParallelUnsupported(String),
    #[error("cannot execute call to `{0}`")]
    UnsupportedCall(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub loop_cap: usize,
    pub registry: Option<&'a Registry>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            loop_cap: DEFAULT_LOOP_CAP,
            registry: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunResult {
    #[serde(rename = "store")]
    pub final_store: Store,
    pub diagnostics: Vec<Diagnostic>,
    /// Iterations per loop, numbered in program order.
    pub iterations: BTreeMap<usize, usize>,
}

/// Reads plain and read-before references from one store, final
/// references from another, and loop-entry values from a third.
pub(crate) struct Frames<'a> {
    pub current: &'a Store,
    pub initial: &'a Store,
    pub final_: &'a Store,
    pub registry: Option<&'a Registry>,
}

impl Valuation for Frames<'_> {
    fn lookup(&self, r: &VarRef) -> Option<Value> {
        let s = match r.marker {
            Marker::Current => self.current,
            Marker::Initial => self.initial,
            Marker::Final => self.final_,
        };
        s.vals.get(&r.name).cloned()
    }

    fn call(&self, name: &str, args: &[Value]) -> Option<Result<Value, EvalError>> {
        self.registry?.call_value(name, args)
    }
}

struct Machine<'a> {
    vars: &'a VarSet,
    opts: RunOptions<'a>,
    diagnostics: Vec<Diagnostic>,
    iterations: BTreeMap<usize, usize>,
    loop_ids: BTreeMap<*const OENode, usize>,
}

impl Machine<'_> {
    fn eval(&mut self, e: &MathExpr, s: &Store) -> Result<Value, InterpError> {
        let frames = Frames {
            current: s,
            initial: s,
            final_: s,
            registry: self.opts.registry,
        };
        let mut ev = Evaluator::new(&frames);
        let v = ev.math(e);
        extend_unique(&mut self.diagnostics, ev.diagnostics);
        Ok(v?)
    }

    fn eval_bool(&mut self, b: &BoolExpr, frames: &Frames) -> Result<bool, InterpError> {
        let mut ev = Evaluator::new(frames);
        let v = ev.boolean(b);
        extend_unique(&mut self.diagnostics, ev.diagnostics);
        Ok(v?)
    }

    fn test(&mut self, b: &BoolExpr, s: &Store) -> Result<bool, InterpError> {
        let frames = Frames {
            current: s,
            initial: s,
            final_: s,
            registry: self.opts.registry,
        };
        self.eval_bool(b, &frames)
    }

    fn slot(&mut self, t: &Target, s: &Store) -> Result<(String, Option<usize>), InterpError> {
        match t {
            Target::Var(v) => Ok((v.clone(), None)),
            Target::Elem(a, idx) => {
                let i = match self.eval(idx, s)? {
                    Value::Int(i) => i,
                    other => return Err(EvalError::TypeMismatch(format!("index {other}")).into()),
                };
                let len = match s.get(a) {
                    Some(Value::Array(xs)) => xs.len(),
                    _ => return Err(EvalError::TypeMismatch(format!("`{a}` is not an array")).into()),
                };
                match usize::try_from(i) {
                    Ok(k) if k < len => Ok((a.clone(), Some(k))),
                    _ => Err(EvalError::IndexOutOfBounds {
                        array: a.clone(),
                        index: i,
                        len,
                    }
                    .into()),
                }
            }
            Target::Deref(p, d) => {
                let mut cur = p.clone();
                for _ in 0..*d {
                    cur = match s.get(&cur) {
                        Some(Value::Addr(a)) => a.clone(),
                        Some(other) => return Err(EvalError::WrongAddress(format!("{cur} = {other}")).into()),
                        None => return Err(EvalError::UnknownVariable(cur).into()),
                    };
                }
                Ok((cur, None))
            }
        }
    }

    fn term(&mut self, t: &Term, s: &mut Store) -> Result<(), InterpError> {
        // evaluate everything against the state before the term
        let mut planned: Vec<(Target, bool, Value, (String, Option<usize>))> = Vec::new();
        for w in &t.writes {
            let fire = match &w.guard {
                Some(g) => self.test(g, s)?,
                None => true,
            };
            let (value, slot) = if fire {
                (self.eval(&w.payload, s)?, self.slot(&w.target, s)?)
            } else {
                (Value::Psi, (String::new(), None))
            };
            planned.push((w.target.clone(), fire, value, slot));
        }
        let mut by_target: BTreeMap<&Target, Vec<usize>> = BTreeMap::new();
        for (i, (tg, fire, ..)) in planned.iter().enumerate() {
            if *fire {
                by_target.entry(tg).or_default().push(i);
            }
        }
        for (tg, hits) in &by_target {
            if hits.len() > 1 {
                let guards = hits
                    .iter()
                    .filter_map(|i| t.writes[*i].guard.as_ref().map(|g| format!("`{g}`")))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(InterpError::GuardOverlap {
                    target: tg.written_token(),
                    guards,
                    store: s.to_string(),
                });
            }
        }
        let firing: Vec<&crate::syntax::WriteOp> = planned
            .iter()
            .zip(&t.writes)
            .filter(|((_, fire, ..), _)| *fire)
            .map(|(_, w)| w)
            .collect();
        let fired = Term {
            writes: firing.into_iter().cloned().collect(),
        };
        extend_unique(
            &mut self.diagnostics,
            crate::pointers::wrong_address_writes(&fired, self.vars),
        );
        for (_, fire, value, (name, idx)) in planned {
            if !fire {
                continue;
            }
            match idx {
                None => s.set(&name, value),
                Some(k) => {
                    let x = match value {
                        Value::Int(x) => x,
                        other => {
                            return Err(EvalError::TypeMismatch(format!("array element {other}")).into())
                        }
                    };
                    if let Some(Value::Array(xs)) = s.vals.get_mut(&name) {
                        xs[k] = x;
                    }
                }
            }
        }
        Ok(())
    }

    fn count_iteration(&mut self, n: &OENode) -> Result<(), InterpError> {
        let id = self.loop_ids.get(&(n as *const OENode)).copied().unwrap_or(0);
        let c = self.iterations.entry(id).or_insert(0);
        *c += 1;
        if *c > self.opts.loop_cap {
            return Err(InterpError::Divergence {
                cap: self.opts.loop_cap,
            });
        }
        Ok(())
    }

    fn until_holds(&mut self, c: &SemBool, entry: &Store, before: &Store, after: &Store) -> Result<bool, InterpError> {
        let frames = Frames {
            current: entry,
            initial: before,
            final_: after,
            registry: self.opts.registry,
        };
        self.eval_bool(&c.cond, &frames)
    }

    fn exec(&mut self, n: &OENode, s: &mut Store) -> Result<(), InterpError> {
        match n {
            OENode::Skip => Ok(()),
            OENode::Term(t) => self.term(t, s),
            OENode::Seq(items) => items.iter().try_for_each(|i| self.exec(i, s)),
            OENode::Guarded(body, g) => {
                if self.test(g, s)? {
                    self.exec(body, s)?;
                }
                Ok(())
            }
            OENode::LoopCount(body, count) => {
                let k = match count {
                    LoopCount::Literal(k) => *k as i64,
                    LoopCount::Symbolic(name) => match s.get(name) {
                        Some(Value::Int(k)) => *k,
                        Some(other) => {
                            return Err(EvalError::TypeMismatch(format!("loop count {other}")).into())
                        }
                        None => return Err(EvalError::UnknownVariable(name.clone()).into()),
                    },
                };
                for _ in 0..k.max(0) {
                    self.count_iteration(n)?;
                    self.exec(body, s)?;
                }
                Ok(())
            }
            OENode::LoopUntil(body, cond) => {
                let entry = s.clone();
                if cond.kind == UntilKind::FinalOnly && self.until_holds(cond, &entry, &entry, &entry)? {
                    return Ok(());
                }
                loop {
                    self.count_iteration(n)?;
                    let before = s.clone();
                    self.exec(body, s)?;
                    if self.until_holds(cond, &entry, &before, s)? {
                        return Ok(());
                    }
                }
            }
            OENode::WaitLoop(cond) => {
                let entry = s.clone();
                if self.until_holds(cond, &entry, &entry, &entry)? {
                    Ok(())
                } else {
                    Err(InterpError::Divergence {
                        cap: self.opts.loop_cap,
                    })
                }
            }
            OENode::Par(l, r) => {
                let mut a = s.clone();
                self.exec(l, &mut a)?;
                self.exec(r, &mut a)?;
                let mut b = s.clone();
                self.exec(r, &mut b)?;
                self.exec(l, &mut b)?;
                if a != b {
                    return Err(InterpError::CooperativeParallelUnsupported(format!(
                        "left-first gives {a}, right-first gives {b}"
                    )));
                }
                *s = a;
                Ok(())
            }
            OENode::Call { name, args, kind } => {
                let reg = self
                    .opts
                    .registry
                    .ok_or_else(|| InterpError::UnsupportedCall(name.clone()))?;
                match kind {
                    CallKind::ByName => reg.run_call(name, args, s),
                    CallKind::ByValueInto(t) => {
                        let e = MathExpr::Apply(name.clone(), args.clone());
                        let v = self.eval(&e, s)?;
                        s.set(t, v);
                        Ok(())
                    }
                }
            }
        }
    }
}

/// Runs `p` from `s0`. Declared variables missing from `s0` start as psi.
pub fn run(p: &Program, s0: &Store, opts: &RunOptions) -> Result<RunResult, InterpError> {
    run_node(&p.body, &p.vars(), s0, opts)
}

pub fn run_node(n: &OENode, vars: &VarSet, s0: &Store, opts: &RunOptions) -> Result<RunResult, InterpError> {
    let mut loop_ids = BTreeMap::new();
    n.walk(&mut |x| {
        if matches!(x, OENode::LoopCount(..) | OENode::LoopUntil(..) | OENode::WaitLoop(_)) {
            let id = loop_ids.len();
            loop_ids.insert(x as *const OENode, id);
        }
    });
    let mut m = Machine {
        vars,
        opts: *opts,
        diagnostics: Vec::new(),
        iterations: BTreeMap::new(),
        loop_ids,
    };
    let mut s = s0.covering(vars);
    for (v, t) in vars {
        if let (VarType::Array(Some(n)), Some(Value::Psi)) = (t, s.get(v)) {
            // an unset array starts as psi elements; model as zeros with a finding
            let n = *n;
            s.set(v, Value::Array(vec![0; n]));
            push_unique(&mut m.diagnostics, Diagnostic::uninitialized(v));
        }
    }
    m.exec(n, &mut s)?;
    Ok(RunResult {
        final_store: s,
        diagnostics: m.diagnostics,
        iterations: m.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn run_src(src: &str, store: &str) -> Result<RunResult, InterpError> {
        run(&parse(src).unwrap(), &store.parse().unwrap(), &RunOptions::default())
    }

    #[test]
    fn store_literal() {
        let s: Store = "x=1, y=-2,A=[3,1,2],p=&a,q=psi".parse().unwrap();
        assert_eq!(s.to_string(), "A=[3,1,2], p=&a, q=psi, x=1, y=-2");
        assert!("x".parse::<Store>().is_err());
    }

    #[test]
    fn swap_runs() {
        let r = run_src("x!(x+y); y!(x-y); x!(x-y)", "x=2,y=1").unwrap();
        assert_eq!(r.final_store.to_string(), "x=1, y=2");
    }

    #[test]
    fn simultaneous_reads_pre_state() {
        let r = run_src("x!(y), y!(x)", "x=1,y=2").unwrap();
        assert_eq!(r.final_store.to_string(), "x=2, y=1");
    }

    #[test]
    fn overlapping_guards_abort() {
        let e = run_src("x!(1)[y>0], x!(2)[y>-1]", "x=0,y=1").unwrap_err();
        assert!(matches!(e, InterpError::GuardOverlap { .. }));
    }

    #[test]
    fn unset_variable_reads_psi() {
        let r = run_src("x!(y+1)", "x=0").unwrap();
        assert_eq!(r.final_store.get("x"), Some(&Value::Psi));
        assert_eq!(r.diagnostics, vec![Diagnostic::uninitialized("y")]);
    }

    #[test]
    fn loops() {
        let r = run_src("x!(0); (x!(x+1))^{until x' = 3}", "x=9").unwrap();
        assert_eq!(r.final_store.get("x"), Some(&Value::Int(3)));
        assert_eq!(r.iterations[&0], 3);
        let r = run_src("(x!(x+1))^4", "x=0").unwrap();
        assert_eq!(r.final_store.get("x"), Some(&Value::Int(4)));
        let e = run_src("(x!(x+1))^{until x' = 0}", "x=1").unwrap_err();
        assert_eq!(e, InterpError::Divergence { cap: DEFAULT_LOOP_CAP });
        let e = run_src("skip^{until b = 1}", "b=0").unwrap_err();
        assert!(matches!(e, InterpError::Divergence { .. }));
    }
}
