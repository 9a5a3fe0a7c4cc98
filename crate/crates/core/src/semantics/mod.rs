//! Semantic predicates and the semantics of single terms.
//!
//! An [`Sp`] lists, for each variable, an equation `v' = e` where `e` is over
//! read-before values, plus relational residuals that have no such
//! equation. A [`Csp`] is an exclusive choice of guarded SPs.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::diag::{extend_unique, Diagnostic, DiagnosticKind};
use crate::expr::{
    normalize, normalize_bool, random_valuation, sample_rng, BoolExpr, EvalError, Evaluator,
    MathExpr, Value, VarRef,
};
use crate::syntax::{ParseError, Target, Term, VarSet};

pub const DEFAULT_BRANCH_BUDGET: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SemError {
    #[error("guard `{0}` appears twice in one conditional term")]
    OverlapStaticallyTrue(String),
    #[error("branch budget of {0} exceeded")]
    BranchBudgetExceeded(usize),
    #[error("write to `{0}` uses an index that is not a constant")]
    SymbolicIndexUnsupported(String),
    #[error("`{0}` is known only through a residual and is written again")]
    RelationalRelayUnsupported(String),
    #[error("parallel branches are not independent: {0}")]
    CooperativeParallelUnsupported(String),
    #[error("loop count `{0}` is symbolic; supply an invariant")]
    SymbolicLoopCount(String),
    #[error("cannot resolve pointer `{0}`")]
    UnresolvedPointer(String),
    #[error("`{0}` does not hold an address")]
    WrongAddress(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("argument for written parameter `{param}` of `{name}` must be a variable")]
    NonVariableArgument { name: String, param: String },
    #[error("`{name}` expects {expected} arguments, got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("invariant violated at {witness}: {reason}")]
    InvariantViolated { witness: String, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Semantic predicate: `v' = e_v` for each listed `v`, and residuals.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sp {
    pub final_eqs: BTreeMap<String, MathExpr>,
    pub residuals: Vec<BoolExpr>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Sp {
    pub fn identity(vars: &VarSet) -> Sp {
        complete(&Sp::default(), vars)
    }

    pub fn is_complete(&self, vars: &VarSet) -> bool {
        vars.keys().all(|v| self.final_eqs.contains_key(v))
    }

    /// Adds residual conjuncts, skipping duplicates.
    pub fn add_residual(&mut self, b: &BoolExpr) {
        for c in b.conjuncts() {
            if !self.residuals.contains(&c) {
                self.residuals.push(c);
            }
        }
    }

    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .final_eqs
            .iter()
            .map(|(v, e)| format!("{v}' = {}", e.sem()))
            .collect();
        parts.extend(self.residuals.iter().map(|r| r.sem()));
        if parts.is_empty() {
            "true".into()
        } else {
            parts.join(" & ")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Branch {
    /// Over read-before values.
    pub guard: BoolExpr,
    pub sp: Sp,
}

/// Conditional semantic predicate: at most one guard holds in any state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Csp {
    pub branches: Vec<Branch>,
}

/// `;`-joined CSPs awaiting reduction.
pub type SemFormula = Vec<Csp>;

#[derive(Serialize)]
struct BranchJson {
    guard: String,
    #[serde(rename = "finalEqs")]
    final_eqs: BTreeMap<String, String>,
    residuals: Vec<String>,
}

#[derive(Serialize)]
struct CspJson {
    branches: Vec<BranchJson>,
    diagnostics: Vec<Diagnostic>,
}

impl Csp {
    pub fn single(sp: Sp) -> Csp {
        Csp {
            branches: vec![Branch {
                guard: BoolExpr::True,
                sp,
            }],
        }
    }

    pub fn identity(vars: &VarSet) -> Csp {
        Csp::single(Sp::identity(vars))
    }

    /// Union of branch diagnostics, without repeats.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for b in &self.branches {
            extend_unique(&mut out, b.sp.diagnostics.iter().cloned());
        }
        out
    }

    pub fn add_diagnostics(&mut self, ds: &[Diagnostic]) {
        for b in &mut self.branches {
            extend_unique(&mut b.sp.diagnostics, ds.iter().cloned());
        }
    }

    pub fn render(&self) -> String {
        self.branches
            .iter()
            .map(|b| {
                if b.guard.is_true() {
                    b.sp.render()
                } else {
                    format!("{} when {}", b.sp.render(), b.guard.sem())
                }
            })
            .collect::<Vec<_>>()
            .join(" (+) ")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = CspJson {
            branches: self
                .branches
                .iter()
                .map(|b| BranchJson {
                    guard: b.guard.sem(),
                    final_eqs: b.sp.final_eqs.iter().map(|(v, e)| (v.clone(), e.sem())).collect(),
                    residuals: b.sp.residuals.iter().map(|r| r.sem()).collect(),
                })
                .collect(),
            diagnostics: self.diagnostics(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }
}

/// Adds `v' = v` for every variable without an equation.
pub fn complete(sp: &Sp, vars: &VarSet) -> Sp {
    let mut out = sp.clone();
    for v in vars.keys() {
        out.final_eqs
            .entry(v.clone())
            .or_insert_with(|| MathExpr::init(v));
    }
    out
}

pub fn complete_csp(c: &Csp, vars: &VarSet) -> Csp {
    Csp {
        branches: c
            .branches
            .iter()
            .map(|b| Branch {
                guard: b.guard.clone(),
                sp: complete(&b.sp, vars),
            })
            .collect(),
    }
}

enum Effect {
    Set(String, MathExpr),
    Elem(String, MathExpr, MathExpr),
}

/// Semantics of one term: every target contributes its alternatives
/// (one per guard plus the unguarded else case), and the alternatives of
/// distinct targets combine by cross product.
pub fn term_sem(t: &Term, vars: &VarSet, budget: usize) -> Result<Csp, SemError> {
    let mut groups: Vec<(&Target, Vec<&crate::syntax::WriteOp>)> = Vec::new();
    for w in &t.writes {
        match groups.iter_mut().find(|(tg, _)| **tg == w.target) {
            Some((_, ws)) => ws.push(w),
            None => groups.push((&w.target, vec![w])),
        }
    }
    let mut combos: Vec<(BoolExpr, Vec<Effect>)> = vec![(BoolExpr::True, Vec::new())];
    for (target, writes) in groups {
        let mut alts: Vec<(BoolExpr, Option<&crate::syntax::WriteOp>)> = Vec::new();
        if writes.len() == 1 && writes[0].guard.is_none() {
            alts.push((BoolExpr::True, Some(writes[0])));
        } else {
            let mut guards = Vec::new();
            for w in &writes {
                let g = normalize_bool(&w.guard.clone().unwrap_or(BoolExpr::True).to_initial());
                if !g.is_false() && guards.contains(&g) {
                    return Err(SemError::OverlapStaticallyTrue(g.sem()));
                }
                guards.push(g.clone());
                alts.push((g, Some(w)));
            }
            alts.push((normalize_bool(&BoolExpr::not(BoolExpr::or_all(guards))), None));
        }
        let mut next = Vec::new();
        for (g0, effects) in &combos {
            for (g1, w) in &alts {
                let guard = normalize_bool(&BoolExpr::and_all([g0.clone(), g1.clone()]));
                if guard.is_false() {
                    continue;
                }
                let mut effs: Vec<Effect> = effects
                    .iter()
                    .map(|e| match e {
                        Effect::Set(v, x) => Effect::Set(v.clone(), x.clone()),
                        Effect::Elem(a, i, x) => Effect::Elem(a.clone(), i.clone(), x.clone()),
                    })
                    .collect();
                if let Some(w) = w {
                    effs.push(effect(target, &w.payload)?);
                }
                next.push((guard, effs));
                if next.len() > budget {
                    return Err(SemError::BranchBudgetExceeded(budget));
                }
            }
        }
        combos = next;
    }
    let mut diags = crate::pointers::wrong_address_writes(t, vars);
    if t.writes.iter().any(|w| !w.payload.is_psi() && w.payload.contains_psi()) {
        diags.push(Diagnostic::uninitialized("psi"));
    }
    let branches = combos
        .into_iter()
        .map(|(guard, effects)| {
            let mut sp = Sp::default();
            for e in effects {
                match e {
                    Effect::Set(v, x) => {
                        sp.final_eqs.insert(v, x);
                    }
                    Effect::Elem(a, i, x) => {
                        let base = sp
                            .final_eqs
                            .remove(&a)
                            .unwrap_or_else(|| MathExpr::init(&a));
                        sp.final_eqs.insert(
                            a,
                            MathExpr::Update {
                                array: Box::new(base),
                                index: Box::new(i),
                                value: Box::new(x),
                            },
                        );
                    }
                }
            }
            sp.diagnostics = diags.clone();
            Branch {
                guard,
                sp: complete(&sp, vars),
            }
        })
        .collect();
    Ok(Csp { branches })
}

fn effect(target: &Target, payload: &MathExpr) -> Result<Effect, SemError> {
    let value = normalize(&payload.to_initial());
    match target {
        Target::Var(v) => Ok(Effect::Set(v.clone(), value)),
        Target::Elem(a, idx) => {
            let i = normalize(&idx.to_initial());
            if i.as_int().is_none() {
                return Err(SemError::SymbolicIndexUnsupported(a.clone()));
            }
            Ok(Effect::Elem(a.clone(), i, value))
        }
        Target::Deref(..) => Err(SemError::UnresolvedPointer(target.written_token())),
    }
}

/// Looks for a state in which two guards hold at once. An empty result
/// means no overlap was found in `samples` random states.
pub fn check_exclusivity(c: &Csp, samples: usize, seed: u64) -> Vec<Diagnostic> {
    let mut refs = std::collections::BTreeSet::new();
    for b in &c.branches {
        refs.extend(b.guard.var_refs());
    }
    for i in 0..samples {
        let mut rng = sample_rng(seed, i);
        let (env, psi) = random_valuation(&refs, &mut rng);
        let opaque = rng.gen();
        let hits: Vec<&Branch> = c
            .branches
            .iter()
            .filter(|b| {
                Evaluator::symbolic_sampling(&env, psi, opaque)
                    .boolean(&b.guard)
                    .unwrap_or(false)
            })
            .collect();
        if hits.len() >= 2 {
            return vec![Diagnostic::new(
                DiagnosticKind::GuardOverlap,
                format!("{} / {}", hits[0].guard.sem(), hits[1].guard.sem()),
                format!(
                    "guards `{}` and `{}` both hold at {}",
                    hits[0].guard.sem(),
                    hits[1].guard.sem(),
                    render_env(&env)
                ),
            )];
        }
    }
    Vec::new()
}

pub(crate) fn render_env(env: &BTreeMap<VarRef, Value>) -> String {
    env.iter()
        .map(|(r, v)| format!("{}={v}", r.name))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Probabilistic equality of two CSPs: in every sampled read-before state
/// the selected branches (if any) give equal final values and carry the
/// same residuals.
pub fn equiv_csp(a: &Csp, b: &Csp, samples: usize, seed: u64) -> bool {
    let mut refs = std::collections::BTreeSet::new();
    for c in [a, b] {
        for br in &c.branches {
            refs.extend(br.guard.var_refs());
            for e in br.sp.final_eqs.values() {
                refs.extend(e.var_refs());
            }
            for r in &br.sp.residuals {
                refs.extend(r.var_refs());
            }
        }
    }
    (0..samples).all(|i| {
        let mut rng = sample_rng(seed, i);
        let (env, psi) = random_valuation(&refs, &mut rng);
        let opaque: u64 = rng.gen();
        let pick = |c: &Csp| -> Option<Branch> {
            c.branches
                .iter()
                .find(|br| {
                    Evaluator::symbolic_sampling(&env, psi, opaque)
                        .boolean(&br.guard)
                        .unwrap_or(false)
                })
                .cloned()
        };
        match (pick(a), pick(b)) {
            (None, None) => true,
            (Some(x), Some(y)) => {
                let keys_match = x.sp.final_eqs.keys().eq(y.sp.final_eqs.keys());
                let mut rx: Vec<_> = x.sp.residuals.iter().map(normalize_bool).collect();
                let mut ry: Vec<_> = y.sp.residuals.iter().map(normalize_bool).collect();
                rx.sort();
                ry.sort();
                keys_match
                    && rx == ry
                    && x.sp.final_eqs.iter().all(|(v, ex)| {
                        let ey = &y.sp.final_eqs[v];
                        let vx = Evaluator::symbolic_sampling(&env, psi, opaque).math(ex);
                        let vy = Evaluator::symbolic_sampling(&env, psi, opaque).math(ey);
                        match (vx, vy) {
                            (Ok(p), Ok(q)) => p == q,
                            (Err(_), Err(_)) => true,
                            _ => false,
                        }
                    })
            }
            _ => false,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse, OENode};

    fn term_of(src: &str) -> (Term, VarSet) {
        let p = parse(src).unwrap();
        let vars = p.vars();
        match p.body {
            OENode::Term(t) => (t, vars),
            other => panic!("not a term: {other:?}"),
        }
    }

    #[test]
    fn skip_like_identity() {
        let vars: VarSet = [("x".to_string(), crate::syntax::VarType::Int)].into();
        assert_eq!(Csp::identity(&vars).render(), "x' = x");
    }

    #[test]
    fn sign_term_has_else_branch() {
        let (t, v) = term_of("x!(1)[y>0], x!(0)[y=0], x!(-1)[y<0]");
        let c = term_sem(&t, &v, DEFAULT_BRANCH_BUDGET).unwrap();
        assert_eq!(c.branches.len(), 4);
        assert_eq!(
            c.render(),
            "x' = 1 & y' = y when y > 0 (+) x' = 0 & y' = y when y = 0 (+) \
             x' = -1 & y' = y when y < 0 (+) x' = x & y' = y when !(y > 0 || y = 0 || y < 0)"
        );
        assert!(check_exclusivity(&c, 100, 1).is_empty());
    }

    #[test]
    fn simultaneous_constants() {
        let (t, v) = term_of("x!(2), y!(1)");
        assert_eq!(term_sem(&t, &v, 256).unwrap().render(), "x' = 2 & y' = 1");
    }

    #[test]
    fn identical_guards_rejected() {
        let (t, v) = term_of("x!(1)[y>0], x!(2)[y>0]");
        assert!(matches!(
            term_sem(&t, &v, 256),
            Err(SemError::OverlapStaticallyTrue(_))
        ));
    }

    #[test]
    fn overlap_witness() {
        let (t, v) = term_of("x!(1)[x>0], x!(2)[x>1]");
        let d = check_exclusivity(&term_sem(&t, &v, 256).unwrap(), 100, 3);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::GuardOverlap);
    }

    #[test]
    fn budget_enforced() {
        let (t, v) = term_of("a!(1)[z>0], b!(1)[z>1], c!(1)[z>2], d!(1)[z>3]");
        assert!(term_sem(&t, &v, 256).is_ok());
        assert_eq!(
            term_sem(&t, &v, 8),
            Err(SemError::BranchBudgetExceeded(8))
        );
    }
}
