use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::poly::{normalize, normalize_bool};
use super::{ArithOp, BoolExpr, MathExpr, VarRef, SAMPLE_RANGE};
use crate::diag::{push_unique, Diagnostic};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Addr(String),
    Psi,
    Array(Vec<i64>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Addr(n) => write!(f, "&{n}"),
            Value::Psi => write!(f, "psi"),
            Value::Array(xs) => {
                let parts: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("arithmetic on an address: {0}")]
    IllegalAddressArithmetic(String),
    #[error("comparison involving psi (uninitialized value): {0}")]
    PsiInComparison(String),
    #[error("integer overflow")]
    Overflow,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("index {index} out of bounds for `{array}` of length {len}")]
    IndexOutOfBounds { array: String, index: i64, len: usize },
    #[error("dereference of a value that is not an address: {0}")]
    WrongAddress(String),
    #[error("call to `{name}` failed: {reason}")]
    CallFailed { name: String, reason: String },
    #[error("`{0}` is undefined on an empty range")]
    EmptyRange(String),
}

/// Source of variable values for concrete evaluation.
pub trait Valuation {
    fn lookup(&self, r: &VarRef) -> Option<Value>;

    /// Concrete meaning of a function that is not built in.
    fn call(&self, _name: &str, _args: &[Value]) -> Option<Result<Value, EvalError>> {
        None
    }
}

/// A plain name-to-value map ignores markers.
impl Valuation for BTreeMap<String, Value> {
    fn lookup(&self, r: &VarRef) -> Option<Value> {
        self.get(&r.name).cloned()
    }
}

/// Every reference, whatever its marker, is looked up by `VarRef`.
impl Valuation for BTreeMap<VarRef, Value> {
    fn lookup(&self, r: &VarRef) -> Option<Value> {
        self.get(r).cloned()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluated<T> {
    pub value: T,
    pub diagnostics: Vec<Diagnostic>,
}

/// Concrete evaluator. By default psi propagates through arithmetic and
/// unknown functions are errors; the equivalence oracle switches both to
/// pseudo-random interpretations.
pub struct Evaluator<'a> {
    env: &'a dyn Valuation,
    psi: Option<i64>,
    opaque_seed: Option<u64>,
    pub diagnostics: Vec<Diagnostic>,
}

const BUILTIN_FUNCTIONS: &[&str] = &["abs", "max", "min", "sum", "len"];

impl<'a> Evaluator<'a> {
    pub fn new(env: &'a dyn Valuation) -> Self {
        Evaluator {
            env,
            psi: None,
            opaque_seed: None,
            diagnostics: Vec::new(),
        }
    }

    /// Treat psi as an ordinary unknown with value `psi`, and give functions,
    /// arrays and dereferences without a concrete meaning deterministic
    /// pseudo-random values derived from `seed`.
    pub fn symbolic_sampling(env: &'a dyn Valuation, psi: i64, seed: u64) -> Self {
        Evaluator {
            env,
            psi: Some(psi),
            opaque_seed: Some(seed),
            diagnostics: Vec::new(),
        }
    }

    fn pseudo(&self, tag: &str, parts: &[i64]) -> Option<i64> {
        let seed = self.opaque_seed?;
        let mut h = splitmix(seed ^ fnv(tag.as_bytes()));
        for p in parts {
            h = splitmix(h ^ (*p as u64));
        }
        let span = (SAMPLE_RANGE.1 - SAMPLE_RANGE.0 + 1) as u64;
        Some(SAMPLE_RANGE.0 + (h % span) as i64)
    }

    pub fn math(&mut self, e: &MathExpr) -> Result<Value, EvalError> {
        match e {
            MathExpr::Int(v) => v.to_i64().map(Value::Int).ok_or(EvalError::Overflow),
            MathExpr::Psi => Ok(self.psi.map(Value::Int).unwrap_or(Value::Psi)),
            MathExpr::Var(r) => self.read(r),
            MathExpr::AddressOf(n) => Ok(Value::Addr(n.clone())),
            MathExpr::Deref { ptr, depth, at } => {
                let mut v = self.math(ptr)?;
                for _ in 0..*depth {
                    v = match v {
                        Value::Addr(name) => self.read(&VarRef::new(name, *at))?,
                        Value::Int(x) => match self.pseudo("deref", &[x, *at as i64]) {
                            Some(p) => Value::Int(p),
                            None => return Err(EvalError::WrongAddress(x.to_string())),
                        },
                        other => return Err(EvalError::WrongAddress(other.to_string())),
                    };
                }
                Ok(v)
            }
            MathExpr::Neg(x) => {
                let before = self.diagnostics.len();
                let v = self.math(x)?;
                self.arith(None, v, Value::Int(0), before, "negation")
                    .map(|v| match v {
                        Value::Int(x) => x.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
                        other => Ok(other),
                    })?
            }
            MathExpr::Bin(op, l, r) => {
                let before = self.diagnostics.len();
                let lv = self.math(l)?;
                let rv = self.math(r)?;
                self.arith(Some(*op), lv, rv, before, "arithmetic")
            }
            MathExpr::Apply(name, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.math(a))
                    .collect::<Result<Vec<_>, _>>()?;
                self.apply(name, &vals)
            }
            MathExpr::Index(arr, idx) => {
                let j = self.int(idx, "index")?;
                self.read_element(arr, j)
            }
            MathExpr::Slice(arr, lo, hi) => {
                let lo = self.int(lo, "slice bound")?;
                let hi = self.int(hi, "slice bound")?;
                let mut out = Vec::new();
                let mut i = lo;
                while i <= hi {
                    match self.read_element(arr, i)? {
                        Value::Int(v) => out.push(v),
                        other => {
                            return Err(EvalError::TypeMismatch(format!("slice element {other}")))
                        }
                    }
                    i += 1;
                }
                Ok(Value::Array(out))
            }
            MathExpr::Update {
                array,
                index,
                value,
            } => {
                let base = self.math(array)?;
                let k = self.int(index, "index")?;
                let v = self.int(value, "array element")?;
                match base {
                    Value::Array(mut xs) => {
                        let len = xs.len();
                        let slot = usize::try_from(k)
                            .ok()
                            .and_then(|k| xs.get_mut(k))
                            .ok_or(EvalError::IndexOutOfBounds {
                                array: "array".into(),
                                index: k,
                                len,
                            })?;
                        *slot = v;
                        Ok(Value::Array(xs))
                    }
                    other => Err(EvalError::TypeMismatch(format!("update of non-array {other}"))),
                }
            }
        }
    }

    fn read(&mut self, r: &VarRef) -> Result<Value, EvalError> {
        let v = self
            .env
            .lookup(r)
            .ok_or_else(|| EvalError::UnknownVariable(r.name.clone()))?;
        if v == Value::Psi {
            if let Some(p) = self.psi {
                return Ok(Value::Int(p));
            }
            push_unique(&mut self.diagnostics, Diagnostic::uninitialized(&r.name));
        }
        Ok(v)
    }

    fn int(&mut self, e: &MathExpr, what: &str) -> Result<i64, EvalError> {
        match self.math(e)? {
            Value::Int(v) => Ok(v),
            Value::Psi => Err(EvalError::PsiInComparison(format!("psi used as {what}"))),
            Value::Addr(a) => Err(EvalError::IllegalAddressArithmetic(format!("&{a} used as {what}"))),
            other => Err(EvalError::TypeMismatch(format!("{other} used as {what}"))),
        }
    }

    fn read_element(&mut self, arr: &MathExpr, j: i64) -> Result<Value, EvalError> {
        match arr {
            MathExpr::Update {
                array,
                index,
                value,
            } => {
                if self.int(index, "index")? == j {
                    self.math(value)
                } else {
                    self.read_element(array, j)
                }
            }
            other => {
                let name = match other {
                    MathExpr::Var(r) => r.name.clone(),
                    _ => "array".to_string(),
                };
                match self.math(other)? {
                    Value::Array(xs) => usize::try_from(j)
                        .ok()
                        .and_then(|k| xs.get(k).copied())
                        .map(Value::Int)
                        .ok_or(EvalError::IndexOutOfBounds {
                            array: name,
                            index: j,
                            len: xs.len(),
                        }),
                    Value::Int(x) => match self.pseudo(&format!("elem:{name}"), &[x, j]) {
                        Some(p) => Ok(Value::Int(p)),
                        None => Err(EvalError::TypeMismatch(format!("`{name}` is not an array"))),
                    },
                    other => Err(EvalError::TypeMismatch(format!("indexing {other}"))),
                }
            }
        }
    }

    fn arith(
        &mut self,
        op: Option<ArithOp>,
        l: Value,
        r: Value,
        diags_before: usize,
        what: &str,
    ) -> Result<Value, EvalError> {
        match (&l, &r) {
            (Value::Addr(a), _) | (_, Value::Addr(a)) => Err(EvalError::IllegalAddressArithmetic(
                format!("&{a} in {what}"),
            )),
            (Value::Array(_), _) | (_, Value::Array(_)) => {
                Err(EvalError::TypeMismatch(format!("array in {what}")))
            }
            (Value::Psi, _) | (_, Value::Psi) => {
                // a psi read from a variable was already reported by `read`
                if self.diagnostics.len() == diags_before {
                    push_unique(&mut self.diagnostics, Diagnostic::uninitialized("psi"));
                }
                Ok(Value::Psi)
            }
            (Value::Int(a), Value::Int(b)) => {
                let out = match op {
                    None => Some(*a),
                    Some(ArithOp::Add) => a.checked_add(*b),
                    Some(ArithOp::Sub) => a.checked_sub(*b),
                    Some(ArithOp::Mul) => a.checked_mul(*b),
                };
                out.map(Value::Int).ok_or(EvalError::Overflow)
            }
        }
    }

    fn apply(&mut self, name: &str, args: &[Value]) -> Result<Value, EvalError> {
        if args.iter().any(|a| *a == Value::Psi) {
            push_unique(&mut self.diagnostics, Diagnostic::uninitialized("psi"));
            return Ok(Value::Psi);
        }
        if BUILTIN_FUNCTIONS.contains(&name) {
            return builtin(name, args);
        }
        if let Some(res) = self.env.call(name, args) {
            return res;
        }
        let ints: Vec<i64> = args.iter().flat_map(flatten_value).collect();
        match self.pseudo(&format!("fn:{name}"), &ints) {
            Some(v) => Ok(Value::Int(v)),
            None => Err(EvalError::UnknownFunction(name.to_string())),
        }
    }

    pub fn boolean(&mut self, b: &BoolExpr) -> Result<bool, EvalError> {
        match b {
            BoolExpr::True => Ok(true),
            BoolExpr::False => Ok(false),
            BoolExpr::Not(x) => Ok(!self.boolean(x)?),
            BoolExpr::And(xs) => {
                for x in xs {
                    if !self.boolean(x)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            BoolExpr::Or(xs) => {
                for x in xs {
                    if self.boolean(x)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            BoolExpr::Cmp(op, l, r) => {
                let lv = self.math(l)?;
                let rv = self.math(r)?;
                use super::CmpOp::{Eq, Ne};
                match (&lv, &rv) {
                    (Value::Int(a), Value::Int(b)) => Ok(op.holds(a.cmp(b))),
                    (Value::Psi, _) | (_, Value::Psi) => Err(EvalError::PsiInComparison(format!(
                        "{lv} {} {rv}",
                        op.symbol()
                    ))),
                    (Value::Addr(_), Value::Addr(_)) | (Value::Array(_), Value::Array(_))
                        if matches!(op, Eq | Ne) =>
                    {
                        Ok(op.holds(if lv == rv {
                            std::cmp::Ordering::Equal
                        } else {
                            std::cmp::Ordering::Less
                        }))
                    }
                    (Value::Addr(_), Value::Addr(_)) => Err(EvalError::IllegalAddressArithmetic(
                        format!("ordering comparison {lv} {} {rv}", op.symbol()),
                    )),
                    _ => Err(EvalError::TypeMismatch(format!("{lv} {} {rv}", op.symbol()))),
                }
            }
            BoolExpr::Pred(name, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.math(a))
                    .collect::<Result<Vec<_>, _>>()?;
                self.predicate(name, &vals)
            }
        }
    }

    fn predicate(&mut self, name: &str, args: &[Value]) -> Result<bool, EvalError> {
        if args.iter().any(|a| *a == Value::Psi) {
            return Err(EvalError::PsiInComparison(format!("{name}(psi)")));
        }
        match (name, args) {
            ("even", [Value::Int(v)]) => return Ok(v % 2 == 0),
            ("odd", [Value::Int(v)]) => return Ok(v % 2 != 0),
            ("sorted", [Value::Array(xs)]) => return Ok(xs.windows(2).all(|w| w[0] <= w[1])),
            ("perm", [Value::Array(a), Value::Array(b)]) => {
                let (mut a, mut b) = (a.clone(), b.clone());
                a.sort_unstable();
                b.sort_unstable();
                return Ok(a == b);
            }
            _ => {}
        }
        if let Some(res) = self.env.call(name, args) {
            return match res? {
                Value::Int(v) => Ok(v != 0),
                other => Err(EvalError::TypeMismatch(format!("predicate `{name}` returned {other}"))),
            };
        }
        let ints: Vec<i64> = args.iter().flat_map(flatten_value).collect();
        match self.pseudo(&format!("pred:{name}"), &ints) {
            Some(v) => Ok(v >= 0),
            None => Err(EvalError::UnknownFunction(name.to_string())),
        }
    }
}

fn flatten_value(v: &Value) -> Vec<i64> {
    match v {
        Value::Int(x) => vec![*x],
        Value::Array(xs) => xs.clone(),
        Value::Addr(n) => vec![fnv(n.as_bytes()) as i64],
        Value::Psi => vec![i64::MIN],
    }
}

fn builtin(name: &str, args: &[Value]) -> Result<Value, EvalError> {
    let ints: Vec<i64> = match args {
        [Value::Array(xs)] => xs.clone(),
        _ => args
            .iter()
            .map(|a| match a {
                Value::Int(v) => Ok(*v),
                other => Err(EvalError::TypeMismatch(format!("`{name}` applied to {other}"))),
            })
            .collect::<Result<_, _>>()?,
    };
    let empty = || EvalError::EmptyRange(name.to_string());
    let v = match name {
        "abs" => match ints.as_slice() {
            [x] => x.checked_abs().ok_or(EvalError::Overflow)?,
            _ => return Err(EvalError::TypeMismatch("abs takes one argument".into())),
        },
        "max" => *ints.iter().max().ok_or_else(empty)?,
        "min" => *ints.iter().min().ok_or_else(empty)?,
        "sum" => ints
            .iter()
            .try_fold(0i64, |acc, x| acc.checked_add(*x))
            .ok_or(EvalError::Overflow)?,
        "len" => ints.len() as i64,
        _ => unreachable!(),
    };
    Ok(Value::Int(v))
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Concrete value of `e` with the diagnostics raised while computing it.
pub fn evaluate(e: &MathExpr, env: &dyn Valuation) -> Result<Evaluated<Value>, EvalError> {
    let mut ev = Evaluator::new(env);
    let value = ev.math(e)?;
    Ok(Evaluated {
        value,
        diagnostics: ev.diagnostics,
    })
}

pub fn evaluate_bool(b: &BoolExpr, env: &dyn Valuation) -> Result<Evaluated<bool>, EvalError> {
    let mut ev = Evaluator::new(env);
    let value = ev.boolean(b)?;
    Ok(Evaluated {
        value,
        diagnostics: ev.diagnostics,
    })
}

/// Per-sample generator; sample `i` of a run is independent of how many
/// samples precede it.
pub(crate) fn sample_rng(seed: u64, i: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(i as u64 + 1)))
}

pub(crate) fn random_valuation(refs: &BTreeSet<VarRef>, rng: &mut ChaCha8Rng) -> (BTreeMap<VarRef, Value>, i64) {
    let env = refs
        .iter()
        .map(|r| (r.clone(), Value::Int(rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1))))
        .collect();
    (env, rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1))
}

/// Probabilistic equality oracle for test code: structural equality of normal
/// forms, or agreement on `samples` random integer stores drawn from
/// [`SAMPLE_RANGE`]. Distinct marked references are independent unknowns.
pub fn equiv_expr(a: &MathExpr, b: &MathExpr, samples: usize, seed: u64) -> bool {
    if normalize(a) == normalize(b) {
        return true;
    }
    let mut refs = a.var_refs();
    refs.extend(b.var_refs());
    (0..samples).all(|i| {
        let mut rng = sample_rng(seed, i);
        let (env, psi) = random_valuation(&refs, &mut rng);
        let opaque = rng.gen();
        let va = Evaluator::symbolic_sampling(&env, psi, opaque).math(a);
        let vb = Evaluator::symbolic_sampling(&env, psi, opaque).math(b);
        match (va, vb) {
            (Ok(x), Ok(y)) => x == y,
            (Err(_), Err(_)) => true,
            _ => false,
        }
    })
}

pub fn equiv_bool(a: &BoolExpr, b: &BoolExpr, samples: usize, seed: u64) -> bool {
    if normalize_bool(a) == normalize_bool(b) {
        return true;
    }
    let mut refs = a.var_refs();
    refs.extend(b.var_refs());
    (0..samples).all(|i| {
        let mut rng = sample_rng(seed, i);
        let (env, psi) = random_valuation(&refs, &mut rng);
        let opaque = rng.gen();
        let va = Evaluator::symbolic_sampling(&env, psi, opaque).boolean(a);
        let vb = Evaluator::symbolic_sampling(&env, psi, opaque).boolean(b);
        match (va, vb) {
            (Ok(x), Ok(y)) => x == y,
            (Err(_), Err(_)) => true,
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diag::DiagnosticKind;
    use crate::expr::CmpOp;

    fn store(pairs: &[(&str, Value)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn integer_arithmetic() {
        let s = store(&[("x", Value::Int(2)), ("y", Value::Int(1))]);
        let e = MathExpr::add(MathExpr::cur("x"), MathExpr::cur("y"));
        assert_eq!(evaluate(&e, &s).unwrap().value, Value::Int(3));
    }

    #[test]
    fn addresses_compare_by_name() {
        let s = store(&[]);
        let b = BoolExpr::cmp(CmpOp::Eq, MathExpr::addr("a"), MathExpr::addr("a"));
        assert!(evaluate_bool(&b, &s).unwrap().value);
        let lt = BoolExpr::cmp(CmpOp::Lt, MathExpr::addr("a"), MathExpr::addr("b"));
        assert!(matches!(
            evaluate_bool(&lt, &s),
            Err(EvalError::IllegalAddressArithmetic(_))
        ));
    }

    #[test]
    fn psi_propagates_with_one_diagnostic() {
        let s = store(&[]);
        let e = MathExpr::sub(MathExpr::int(10), MathExpr::Psi);
        let out = evaluate(&e, &s).unwrap();
        assert_eq!(out.value, Value::Psi);
        assert_eq!(out.diagnostics.len(), 1);
        assert_eq!(out.diagnostics[0].kind, DiagnosticKind::UninitializedRead);
    }

    #[test]
    fn psi_read_from_variable_names_the_variable() {
        let s = store(&[("a", Value::Psi)]);
        let e = MathExpr::sub(MathExpr::int(10), MathExpr::cur("a"));
        let out = evaluate(&e, &s).unwrap();
        assert_eq!(out.diagnostics, vec![Diagnostic::uninitialized("a")]);
    }

    #[test]
    fn error_paths() {
        let s = store(&[("p", Value::Addr("a".into())), ("q", Value::Psi)]);
        assert_eq!(
            evaluate(&MathExpr::cur("zz"), &s).unwrap_err(),
            EvalError::UnknownVariable("zz".into())
        );
        let bad = MathExpr::add(MathExpr::cur("p"), MathExpr::int(1));
        assert!(matches!(
            evaluate(&bad, &s),
            Err(EvalError::IllegalAddressArithmetic(_))
        ));
        let cmp = BoolExpr::cmp(CmpOp::Gt, MathExpr::cur("q"), MathExpr::int(0));
        assert!(matches!(evaluate_bool(&cmp, &s), Err(EvalError::PsiInComparison(_))));
        let big = MathExpr::mul(MathExpr::int(i64::MAX), MathExpr::int(2));
        assert_eq!(evaluate(&big, &s).unwrap_err(), EvalError::Overflow);
    }

    #[test]
    fn aggregates_over_slices() {
        let s = store(&[("A", Value::Array(vec![3, 9, 2])), ("i", Value::Int(1))]);
        let slice = MathExpr::Slice(
            Box::new(MathExpr::cur("A")),
            Box::new(MathExpr::int(0)),
            Box::new(MathExpr::cur("i")),
        );
        let e = MathExpr::Apply("max".into(), vec![slice]);
        assert_eq!(evaluate(&e, &s).unwrap().value, Value::Int(9));
        let sum = MathExpr::Apply("sum".into(), vec![MathExpr::cur("A")]);
        assert_eq!(evaluate(&sum, &s).unwrap().value, Value::Int(14));
    }

    #[test]
    fn equivalence_oracle() {
        let x = MathExpr::cur("x");
        let y = MathExpr::cur("y");
        assert!(equiv_expr(
            &MathExpr::sub(MathExpr::add(x.clone(), y.clone()), y),
            &x,
            64,
            7
        ));
        assert!(equiv_expr(
            &MathExpr::mul(x.clone(), x.clone()),
            &MathExpr::mul(x.clone(), x.clone()),
            64,
            7
        ));
        assert!(!equiv_expr(&MathExpr::add(x.clone(), MathExpr::int(1)), &x, 64, 7));
    }

    #[test]
    fn equivalence_sees_through_opaque_functions() {
        let g = |e: MathExpr| MathExpr::Apply("g".into(), vec![e]);
        let x = MathExpr::cur("x");
        let a = g(MathExpr::add(x.clone(), MathExpr::int(0)));
        assert!(equiv_expr(&a, &g(x.clone()), 16, 1));
        assert!(!equiv_expr(&g(x.clone()), &g(MathExpr::add(x, MathExpr::int(1))), 16, 1));
    }
}
