//! Named function definitions: call-by-name splices, call-by-value reads
//! and recursive value definitions.

mod hanoi;

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::expr::{
    normalize, substitute, substitute_bool, ArithOp, Binding, BoolExpr, EvalError, Evaluator, Marker,
    MathExpr, Value, VarRef,
};
use crate::interp::{Frames, InterpError, Store};
use crate::semantics::{Branch, Csp, SemError, Sp};
use crate::syntax::{parse_bool, parse_csp_text, parse_math, parse_sem_bool, ParseError, SpText, VarSet};

pub use hanoi::{hanoi_moves_parallel, hanoi_nth_move, hanoi_sequence, Move, Pole, MAX_HANOI_DISKS};

pub const DEFAULT_FUEL: u64 = 1_000_000;
/// Nesting limit for recursive unfolding; deeper calls would exhaust the stack.
pub const MAX_RECURSION_DEPTH: usize = 20_000;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FuncError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{name}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("`{0}` is not a value definition")]
    NotAValue(String),
    #[error("fuel exhausted after {0} unfoldings")]
    FuelExhausted(u64),
    #[error("recursion deeper than {0}")]
    RecursionTooDeep(usize),
    #[error("no branch of `{name}` applies to ({args})")]
    NoBranchApplies { name: String, args: String },
    #[error("more than one branch of `{name}` applies to ({args})")]
    OverlappingBranches { name: String, args: String },
    #[error("`{0}` cannot be evaluated on integers")]
    Unsupported(String),
    #[error("recursive calls of `{0}` must decrease an argument by a positive constant")]
    NotWellFounded(String),
    #[error("registry line {line}: {message}")]
    Registry { line: usize, message: String },
    #[error("hanoi with {0} disks is outside 1..=20")]
    SizeLimit(u32),
    #[error("move {n} is outside 1..={max}")]
    OutOfRange { n: u64, max: u64 },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FunctionKind {
    /// `f(params) = e1 when g1 (+) e2 when g2 ...`, guards over the params.
    Value { cases: Vec<(BoolExpr, MathExpr)> },
    /// Semantic template over the params: read-before refs are arguments on
    /// entry, read-after refs are arguments on exit.
    Splice { branches: Vec<SpText>, writes: BTreeSet<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub kind: FunctionKind,
}

impl FunctionDef {
    /// The value cases as a CSP over a pseudo variable `result`.
    pub fn as_csp(&self) -> Option<Csp> {
        let FunctionKind::Value { cases } = &self.kind else {
            return None;
        };
        let branches = cases
            .iter()
            .map(|(g, e)| {
                let mut sp = Sp::default();
                sp.final_eqs.insert("result".into(), e.to_initial());
                Branch {
                    guard: g.to_initial(),
                    sp,
                }
            })
            .collect();
        Some(Csp { branches })
    }

    fn check_arity(&self, found: usize) -> Result<(), FuncError> {
        if found != self.params.len() {
            return Err(FuncError::ArityMismatch {
                name: self.name.clone(),
                expected: self.params.len(),
                found,
            });
        }
        Ok(())
    }
}

/// Read-only table of function definitions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Registry {
    defs: BTreeMap<String, FunctionDef>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn get(&self, name: &str) -> Option<&FunctionDef> {
        self.defs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.defs.keys().map(String::as_str)
    }

    pub fn insert(&mut self, def: FunctionDef) -> Result<(), FuncError> {
        if let FunctionKind::Value { cases } = &def.kind {
            check_decreasing(&def.name, &def.params, cases)?;
        }
        self.defs.insert(def.name.clone(), def);
        Ok(())
    }

    /// Parses a declarations file, one `fn` per line; `#` starts a comment.
    pub fn load(text: &str) -> Result<Registry, FuncError> {
        let mut reg = Registry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |message: String| FuncError::Registry { line: i + 1, message };
            let def = parse_def(line).map_err(|e| match e {
                FuncError::Registry { message, .. } => at(message),
                other => at(other.to_string()),
            })?;
            reg.insert(def).map_err(|e| at(e.to_string()))?;
        }
        Ok(reg)
    }

    /// Instantiates a splice definition at a call site.
    pub fn splice(&self, name: &str, args: &[MathExpr], vars: &VarSet) -> Result<Csp, SemError> {
        let def = self
            .defs
            .get(name)
            .ok_or_else(|| SemError::UnknownFunction(name.into()))?;
        if args.len() != def.params.len() {
            return Err(SemError::ArityMismatch {
                name: name.into(),
                expected: def.params.len(),
                found: args.len(),
            });
        }
        let FunctionKind::Splice { branches, writes } = &def.kind else {
            // A value definition called by name has no effect on the state.
            return Ok(Csp::identity(vars));
        };
        let mut binding = Binding::new();
        let mut renamed = BTreeMap::new();
        for (p, a) in def.params.iter().zip(args) {
            let init = a.to_initial();
            binding.insert(VarRef::initial(p.clone()), init.clone());
            binding.insert(VarRef::current(p.clone()), init);
            match a {
                MathExpr::Var(r) => {
                    binding.insert(VarRef::final_(p.clone()), MathExpr::fin(&r.name));
                    renamed.insert(p.clone(), r.name.clone());
                }
                _ if writes.contains(p) => {
                    return Err(SemError::NonVariableArgument {
                        name: name.into(),
                        param: p.clone(),
                    })
                }
                _ => {}
            }
        }
        let written: BTreeSet<&String> = writes.iter().filter_map(|p| renamed.get(p)).collect();
        let mut out = Vec::new();
        for b in branches {
            let mut sp = Sp::default();
            for v in vars.keys().filter(|v| !written.contains(v)) {
                sp.final_eqs.insert(v.clone(), MathExpr::init(v));
            }
            for (p, e) in &b.eqs {
                let target = renamed.get(p).cloned().unwrap_or_else(|| p.clone());
                sp.final_eqs.insert(target, substitute(e, &binding));
            }
            for r in &b.residuals {
                sp.add_residual(&substitute_bool(r, &binding));
            }
            out.push(Branch {
                guard: substitute_bool(&b.guard, &binding),
                sp,
            });
        }
        Ok(Csp { branches: out })
    }

    /// Concrete value of a value definition, for the evaluator.
    pub fn call_value(&self, name: &str, args: &[Value]) -> Option<Result<Value, EvalError>> {
        let def = self.defs.get(name)?;
        if !matches!(def.kind, FunctionKind::Value { .. }) {
            return None;
        }
        let failed = |reason: String| EvalError::CallFailed {
            name: name.into(),
            reason,
        };
        let mut ints = Vec::with_capacity(args.len());
        for a in args {
            match a {
                Value::Int(i) => ints.push(BigInt::from(*i)),
                other => return Some(Err(EvalError::TypeMismatch(format!("argument {other} to `{name}`")))),
            }
        }
        Some(match self.unfold(name, &ints, DEFAULT_FUEL) {
            Ok(v) => v.to_i64().map(Value::Int).ok_or(EvalError::Overflow),
            Err(e) => Err(failed(e.to_string())),
        })
    }

    /// Executes a by-name call on a concrete store. Equations are evaluated
    /// directly; a written array whose only description is `sorted(A')`
    /// is sorted. The residuals are checked afterwards.
    pub fn run_call(&self, name: &str, args: &[MathExpr], s: &mut Store) -> Result<(), InterpError> {
        let unsupported = || InterpError::UnsupportedCall(name.to_string());
        let vars: VarSet = s
            .vals
            .keys()
            .map(|k| (k.clone(), crate::syntax::VarType::Int))
            .collect();
        let csp = self.splice(name, args, &vars).map_err(|_| unsupported())?;
        let before = s.clone();
        let frames = Frames {
            current: &before,
            initial: &before,
            final_: &before,
            registry: Some(self),
        };
        let mut chosen = None;
        for b in &csp.branches {
            if Evaluator::new(&frames).boolean(&b.guard)? {
                chosen = Some(b);
                break;
            }
        }
        let Some(b) = chosen else {
            return Err(unsupported());
        };
        let mut after = before.clone();
        for (v, e) in &b.sp.final_eqs {
            after.set(v, Evaluator::new(&frames).math(e)?);
        }
        for v in vars.keys().filter(|v| !b.sp.final_eqs.contains_key(*v)) {
            let sorts = b.sp.residuals.iter().any(|r| {
                matches!(r, BoolExpr::Pred(p, a) if p == "sorted" && a.as_slice() == [MathExpr::fin(v)])
            });
            match after.get(v).cloned() {
                Some(Value::Array(mut xs)) if sorts => {
                    xs.sort_unstable();
                    after.set(v, Value::Array(xs));
                }
                _ => return Err(unsupported()),
            }
        }
        let check = Frames {
            current: &before,
            initial: &before,
            final_: &after,
            registry: Some(self),
        };
        for r in &b.sp.residuals {
            if !Evaluator::new(&check).boolean(r)? {
                return Err(unsupported());
            }
        }
        *s = after;
        Ok(())
    }

    /// Evaluates a recursive value definition with memoization. `fuel`
    /// bounds the number of distinct unfoldings.
    pub fn unfold(&self, name: &str, args: &[BigInt], fuel: u64) -> Result<BigInt, FuncError> {
        let u = Unfolder {
            reg: self,
            memo: RefCell::new(HashMap::new()),
            fuel: RefCell::new(fuel),
            start: fuel,
        };
        u.call(name, args, 0)
    }
}

/// `unfoldRecursive` with a single integer argument.
pub fn unfold_recursive(reg: &Registry, name: &str, arg: i64, fuel: u64) -> Result<BigInt, FuncError> {
    reg.unfold(name, &[BigInt::from(arg)], fuel)
}

struct Unfolder<'a> {
    reg: &'a Registry,
    memo: RefCell<HashMap<(String, Vec<BigInt>), BigInt>>,
    fuel: RefCell<u64>,
    start: u64,
}

impl Unfolder<'_> {
    fn call(&self, name: &str, args: &[BigInt], depth: usize) -> Result<BigInt, FuncError> {
        let key = (name.to_string(), args.to_vec());
        if let Some(v) = self.memo.borrow().get(&key) {
            return Ok(v.clone());
        }
        if depth > MAX_RECURSION_DEPTH {
            return Err(FuncError::RecursionTooDeep(MAX_RECURSION_DEPTH));
        }
        let def = self
            .reg
            .get(name)
            .ok_or_else(|| FuncError::UnknownFunction(name.into()))?;
        def.check_arity(args.len())?;
        let FunctionKind::Value { cases } = &def.kind else {
            return Err(FuncError::NotAValue(name.into()));
        };
        {
            let mut fuel = self.fuel.borrow_mut();
            if *fuel == 0 {
                return Err(FuncError::FuelExhausted(self.start));
            }
            *fuel -= 1;
        }
        let env: BTreeMap<&str, &BigInt> = def.params.iter().map(String::as_str).zip(args).collect();
        let show = || args.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
        let mut hit = None;
        for (g, e) in cases {
            if self.test(g, &env, depth)? {
                if hit.is_some() {
                    return Err(FuncError::OverlappingBranches {
                        name: name.into(),
                        args: show(),
                    });
                }
                hit = Some(e);
            }
        }
        let e = hit.ok_or_else(|| FuncError::NoBranchApplies {
            name: name.into(),
            args: show(),
        })?;
        let v = self.eval(e, &env, depth)?;
        self.memo.borrow_mut().insert(key, v.clone());
        Ok(v)
    }

    fn eval(&self, e: &MathExpr, env: &BTreeMap<&str, &BigInt>, depth: usize) -> Result<BigInt, FuncError> {
        Ok(match e {
            MathExpr::Int(i) => i.clone(),
            MathExpr::Var(r) => (*env
                .get(r.name.as_str())
                .ok_or_else(|| FuncError::Unsupported(r.name.clone()))?)
            .clone(),
            MathExpr::Neg(a) => -self.eval(a, env, depth)?,
            MathExpr::Bin(op, a, b) => {
                let (a, b) = (self.eval(a, env, depth)?, self.eval(b, env, depth)?);
                match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                }
            }
            MathExpr::Apply(f, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.eval(a, env, depth))
                    .collect::<Result<Vec<_>, _>>()?;
                match (f.as_str(), vals.as_slice()) {
                    ("abs", [x]) => x.abs(),
                    ("max", [_, ..]) => vals.iter().max().cloned().unwrap_or_else(BigInt::zero),
                    ("min", [_, ..]) => vals.iter().min().cloned().unwrap_or_else(BigInt::zero),
                    _ => self.call(f, &vals, depth + 1)?,
                }
            }
            other => return Err(FuncError::Unsupported(other.sem())),
        })
    }

    fn test(&self, b: &BoolExpr, env: &BTreeMap<&str, &BigInt>, depth: usize) -> Result<bool, FuncError> {
        Ok(match b {
            BoolExpr::True => true,
            BoolExpr::False => false,
            BoolExpr::Cmp(op, l, r) => op.holds(self.eval(l, env, depth)?.cmp(&self.eval(r, env, depth)?)),
            BoolExpr::Not(a) => !self.test(a, env, depth)?,
            BoolExpr::And(xs) => {
                for x in xs {
                    if !self.test(x, env, depth)? {
                        return Ok(false);
                    }
                }
                true
            }
            BoolExpr::Or(xs) => {
                for x in xs {
                    if self.test(x, env, depth)? {
                        return Ok(true);
                    }
                }
                false
            }
            BoolExpr::Pred(p, _) => return Err(FuncError::Unsupported(p.clone())),
        })
    }
}

/// Every recursive call must lower some argument by a positive constant.
fn check_decreasing(name: &str, params: &[String], cases: &[(BoolExpr, MathExpr)]) -> Result<(), FuncError> {
    let mut ok = true;
    for (_, e) in cases {
        e.walk(&mut |sub| {
            if let MathExpr::Apply(f, args) = sub {
                if f == name {
                    let drops = params.iter().zip(args).any(|(p, a)| {
                        let diff = normalize(&MathExpr::sub(MathExpr::cur(p), a.clone()));
                        matches!(diff.as_int(), Some(d) if d.is_positive())
                    });
                    ok &= drops && args.len() == params.len();
                }
            }
        });
    }
    if ok {
        Ok(())
    } else {
        Err(FuncError::NotWellFounded(name.into()))
    }
}

fn reg_err(message: impl Into<String>) -> FuncError {
    FuncError::Registry {
        line: 0,
        message: message.into(),
    }
}

fn quoted(text: &str) -> Result<(&str, &str), FuncError> {
    let rest = text
        .trim_start()
        .strip_prefix('"')
        .ok_or_else(|| reg_err("expected a quoted string"))?;
    let end = rest.find('"').ok_or_else(|| reg_err("unterminated string"))?;
    Ok((&rest[..end], &rest[end + 1..]))
}

fn parse_def(line: &str) -> Result<FunctionDef, FuncError> {
    let rest = line
        .strip_prefix("fn ")
        .ok_or_else(|| reg_err("expected `fn`"))?
        .trim_start();
    let open = rest.find('(').ok_or_else(|| reg_err("expected `(`"))?;
    let close = rest.find(')').ok_or_else(|| reg_err("expected `)`"))?;
    let name = rest[..open].trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(reg_err(format!("bad function name `{name}`")));
    }
    let params: Vec<String> = rest[open + 1..close]
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    let body = rest[close + 1..].trim();
    let kind = if let Some(cases) = body.strip_prefix('=') {
        let mut out = Vec::new();
        for case in cases.split("(+)") {
            let (e, g) = match case.split_once(" when ") {
                Some((e, g)) => (parse_math(e.trim())?, parse_bool(g.trim())?),
                None => (parse_math(case.trim())?, BoolExpr::True),
            };
            out.push((g, e));
        }
        FunctionKind::Value { cases: out }
    } else if let Some(tail) = body.strip_prefix("residual") {
        let (text, tail) = quoted(tail)?;
        let residual = parse_sem_bool(text)?;
        let writes = parse_writes(tail)?;
        FunctionKind::Splice {
            branches: vec![SpText {
                guard: BoolExpr::True,
                eqs: Vec::new(),
                residuals: vec![residual],
            }],
            writes,
        }
    } else if let Some(tail) = body.strip_prefix("splice") {
        let (text, tail) = quoted(tail)?;
        let csp = parse_csp_text(text)?;
        let mut writes = parse_writes(tail)?;
        for b in &csp.branches {
            writes.extend(b.eqs.iter().map(|(v, _)| v.clone()));
            for r in &b.residuals {
                writes.extend(
                    r.var_refs()
                        .into_iter()
                        .filter(|r| r.marker == Marker::Final)
                        .map(|r| r.name),
                );
            }
        }
        FunctionKind::Splice {
            branches: csp.branches,
            writes,
        }
    } else {
        return Err(reg_err("expected `=`, `residual` or `splice`"));
    };
    Ok(FunctionDef { name, params, kind })
}

fn parse_writes(tail: &str) -> Result<BTreeSet<String>, FuncError> {
    let tail = tail.trim();
    if tail.is_empty() {
        return Ok(BTreeSet::new());
    }
    let inner = tail
        .strip_prefix("writes")
        .map(str::trim)
        .and_then(|t| t.strip_prefix('{'))
        .and_then(|t| t.strip_suffix('}'))
        .ok_or_else(|| reg_err("expected `writes {...}`"))?;
    Ok(inner
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECLS: &str = "\
# recursive values
fn factorial(N) = 1 when N = 1 (+) N * factorial(N - 1) when N > 1
fn fibonacci(N) = 0 when N = 0 (+) 1 when N = 1 (+) fibonacci(N - 1) + fibonacci(N - 2) when N >= 2
fn quicksort(A) residual \"perm(A', A) && sorted(A')\" writes {A}
fn swap(x, y) splice \"x' = y & y' = x\"
";

    #[test]
    fn loads_and_unfolds() {
        let reg = Registry::load(DECLS).unwrap();
        assert_eq!(reg.names().count(), 4);
        assert_eq!(unfold_recursive(&reg, "factorial", 5, DEFAULT_FUEL).unwrap(), BigInt::from(120));
        assert_eq!(unfold_recursive(&reg, "fibonacci", 10, DEFAULT_FUEL).unwrap(), BigInt::from(55));
        assert!(matches!(
            unfold_recursive(&reg, "factorial", -1, DEFAULT_FUEL),
            Err(FuncError::NoBranchApplies { .. })
        ));
        assert!(matches!(
            unfold_recursive(&reg, "fibonacci", 60, 10),
            Err(FuncError::FuelExhausted(10))
        ));
    }

    #[test]
    fn non_decreasing_recursion_rejected() {
        let err = Registry::load("fn loop(N) = loop(N) when N > 0 (+) 0 when N <= 0").unwrap_err();
        assert!(err.to_string().contains("decrease"), "{err}");
    }

    #[test]
    fn splice_renames_arguments() {
        let reg = Registry::load(DECLS).unwrap();
        let vars: VarSet = [("a", crate::syntax::VarType::Int), ("b", crate::syntax::VarType::Int)]
            .into_iter()
            .map(|(k, t)| (k.to_string(), t))
            .collect();
        let c = reg.splice("swap", &[MathExpr::cur("a"), MathExpr::cur("b")], &vars).unwrap();
        assert_eq!(c.render(), "a' = b & b' = a");
        let e = reg.splice("swap", &[MathExpr::cur("a")], &vars).unwrap_err();
        assert!(matches!(e, SemError::ArityMismatch { expected: 2, found: 1, .. }));
    }
}
