//! Reduction of semantic formulas: completion, relay, association,
//! substitution and distribution over branches, and the semantics of
//! sequences, guards, loops and independent parallel composition.

mod loops;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::diag::{extend_unique, push_unique, Diagnostic};
use crate::expr::{
    normalize_bool, substitute, substitute_bool, Binding, BoolExpr, Marker, MathExpr, VarRef,
};
use crate::funcsem::Registry;
use crate::par;
use crate::pointers::{resolve_term, PointsToEnv};
use crate::semantics::{complete, term_sem, Branch, Csp, SemError, Sp, DEFAULT_BRANCH_BUDGET};
use crate::syntax::{read_vars, written_vars, CallKind, LoopCount, OENode, Program, VarSet};

pub use loops::{
    loop_count_sem, loop_invariant_sem, loop_until_sem, wait_loop_sem, LoopOutcome, LoopSpec,
};

pub const DEFAULT_UNROLL_CAP: usize = 64;

/// Association used to fold a formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum Strategy {
    /// `((p1; p2); p3); …`
    #[default]
    LeftFold,
    /// Balanced halves, reduced concurrently when `parallel` is enabled.
    PairwiseTree,
}

#[derive(Clone, Copy)]
pub struct SemOptions<'a> {
    pub strategy: Strategy,
    pub branch_budget: usize,
    pub unroll_cap: usize,
    pub registry: Option<&'a Registry>,
}

impl Default for SemOptions<'_> {
    fn default() -> Self {
        SemOptions {
            strategy: Strategy::LeftFold,
            branch_budget: DEFAULT_BRANCH_BUDGET,
            unroll_cap: DEFAULT_UNROLL_CAP,
            registry: None,
        }
    }
}

/// One rule application.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub rule: String,
    pub before: String,
    pub after: String,
}

impl TraceStep {
    pub fn render(&self) -> String {
        format!("[{}] {}  =>  {}", self.rule, self.before, self.after)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub csp: Csp,
    pub trace: Trace,
}

fn is_identity(v: &str, e: &MathExpr) -> bool {
    matches!(e, MathExpr::Var(r) if r.name == v && r.marker == Marker::Initial)
}

/// Names read at the start of `b` (guard, non-copy equations, residuals).
fn branch_reads(b: &Branch) -> Vec<&MathExpr> {
    let mut out = Vec::new();
    b.guard.for_each_math(&mut |e| out.push(e));
    for (v, e) in &b.sp.final_eqs {
        if !is_identity(v, e) {
            out.push(e);
        }
    }
    for r in &b.sp.residuals {
        r.for_each_math(&mut |e| out.push(e));
    }
    out
}

/// UninitializedRead / WrongAddress findings for `q` reading the state
/// left by `p`.
fn uninitialized_reads(p: &Branch, q: &Branch) -> Vec<Diagnostic> {
    let eqs = &p.sp.final_eqs;
    let mut out = Vec::new();
    for e in branch_reads(q) {
        e.walk(&mut |x| match x {
            MathExpr::Var(r) if r.marker == Marker::Initial => {
                if eqs.get(&r.name).is_some_and(|e| e.contains_psi()) {
                    push_unique(&mut out, Diagnostic::uninitialized(&r.name));
                }
            }
            MathExpr::Deref { ptr, depth, at: Marker::Initial } => {
                if let MathExpr::Var(r) = ptr.as_ref() {
                    let mut cur = r.name.clone();
                    for _ in 0..*depth {
                        match eqs.get(&cur) {
                            Some(MathExpr::AddressOf(a)) => cur = a.clone(),
                            Some(MathExpr::Psi) => {
                                push_unique(&mut out, Diagnostic::wrong_address(&cur));
                                return;
                            }
                            _ => return,
                        }
                    }
                    if eqs.get(&cur).is_some_and(|e| e.contains_psi()) {
                        push_unique(&mut out, Diagnostic::uninitialized(&cur));
                    }
                }
            }
            _ => {}
        });
    }
    out
}

fn relay_branch(p: &Branch, q: &Branch) -> Result<Option<Branch>, SemError> {
    let mut binding = Binding::new();
    for (v, e) in &p.sp.final_eqs {
        binding.insert(VarRef::initial(v), e.clone());
    }
    // variables `p` describes only relationally
    let mut mentioned: BTreeSet<String> = q.sp.final_eqs.keys().cloned().collect();
    q.guard.for_each_math(&mut |e| mentioned.extend(e.var_refs().into_iter().map(|r| r.name)));
    for e in q.sp.final_eqs.values() {
        mentioned.extend(e.var_refs().into_iter().map(|r| r.name));
    }
    for r in &q.sp.residuals {
        mentioned.extend(r.var_refs().into_iter().map(|r| r.name));
    }
    let mut relational = BTreeSet::new();
    for v in mentioned {
        if p.sp.final_eqs.contains_key(&v) {
            continue;
        }
        let writes_eq = q.sp.final_eqs.get(&v).is_some_and(|e| !is_identity(&v, e));
        let writes_rel = !q.sp.final_eqs.contains_key(&v)
            && q.sp.residuals.iter().any(|r| r.var_refs().contains(&VarRef::final_(&v)));
        if writes_eq || writes_rel {
            return Err(SemError::RelationalRelayUnsupported(v));
        }
        binding.insert(VarRef::initial(&v), MathExpr::fin(&v));
        relational.insert(v);
    }
    let guard = normalize_bool(&BoolExpr::and_all([
        p.guard.clone(),
        substitute_bool(&q.guard, &binding),
    ]));
    if guard.is_false() {
        return Ok(None);
    }
    let mut sp = Sp {
        residuals: p.sp.residuals.clone(),
        diagnostics: p.sp.diagnostics.clone(),
        ..Sp::default()
    };
    for (v, e) in &q.sp.final_eqs {
        if relational.contains(v) && is_identity(v, e) {
            continue;
        }
        let e = substitute(e, &binding);
        if e.markers().contains(&Marker::Final) {
            sp.add_residual(&BoolExpr::cmp(crate::expr::CmpOp::Eq, MathExpr::fin(v), e));
        } else {
            sp.final_eqs.insert(v.clone(), e);
        }
    }
    for r in &q.sp.residuals {
        sp.add_residual(&substitute_bool(r, &binding));
    }
    extend_unique(&mut sp.diagnostics, q.sp.diagnostics.iter().cloned());
    extend_unique(&mut sp.diagnostics, uninitialized_reads(p, q));
    Ok(Some(Branch { guard, sp }))
}

/// `p; q`: every pair of branches, with `q`'s read-before values replaced
/// by `p`'s final values. Pairs whose guard folds to false are dropped.
pub fn relay(p: &Csp, q: &Csp, budget: usize) -> Result<Csp, SemError> {
    let mut branches = Vec::new();
    for bp in &p.branches {
        for bq in &q.branches {
            if let Some(b) = relay_branch(bp, bq)? {
                branches.push(b);
                if branches.len() > budget {
                    return Err(SemError::BranchBudgetExceeded(budget));
                }
            }
        }
    }
    Ok(Csp { branches })
}

fn rule_name(p: &Csp, q: &Csp) -> &'static str {
    if p.branches.len() > 1 || q.branches.len() > 1 {
        "distribution+relay"
    } else {
        "relay"
    }
}

fn relay_traced(p: &Csp, q: &Csp, budget: usize, trace: &mut Vec<TraceStep>) -> Result<Csp, SemError> {
    let out = relay(p, q, budget)?;
    trace.push(TraceStep {
        rule: rule_name(p, q).into(),
        before: format!("({}) ; ({})", p.render(), q.render()),
        after: out.render(),
    });
    Ok(out)
}

fn reduce_tree(f: &[Csp], budget: usize) -> Result<(Csp, Vec<TraceStep>), SemError> {
    if f.len() == 1 {
        return Ok((f[0].clone(), Vec::new()));
    }
    let mid = f.len() / 2;
    let (l, r) = par::join(|| reduce_tree(&f[..mid], budget), || reduce_tree(&f[mid..], budget));
    let (l, mut trace) = l?;
    let (r, rt) = r?;
    trace.extend(rt);
    let out = relay_traced(&l, &r, budget, &mut trace)?;
    Ok((out, trace))
}

/// Folds `;` over the steps of a formula.
pub fn reduce(f: &[Csp], strategy: Strategy, budget: usize) -> Result<Reduction, SemError> {
    let Some(first) = f.first() else {
        return Err(SemError::Eval(crate::expr::EvalError::TypeMismatch(
            "empty semantic formula".into(),
        )));
    };
    let (csp, steps) = match strategy {
        Strategy::LeftFold => {
            let mut steps = Vec::new();
            let mut acc = first.clone();
            for q in &f[1..] {
                acc = relay_traced(&acc, q, budget, &mut steps)?;
            }
            (acc, steps)
        }
        Strategy::PairwiseTree => reduce_tree(f, budget)?,
    };
    Ok(Reduction {
        csp,
        trace: Trace { steps },
    })
}

/// `(p)[b]`: `p`'s branches under `b`, and the identity under `!b`.
pub fn guard_csp(body: &Csp, g: &BoolExpr, vars: &VarSet) -> Csp {
    let g = normalize_bool(&g.to_initial());
    let mut branches: Vec<Branch> = body
        .branches
        .iter()
        .filter_map(|b| {
            let guard = normalize_bool(&BoolExpr::and_all([g.clone(), b.guard.clone()]));
            (!guard.is_false()).then(|| Branch {
                guard,
                sp: b.sp.clone(),
            })
        })
        .collect();
    let not_g = normalize_bool(&BoolExpr::not(g));
    if !not_g.is_false() {
        branches.push(Branch {
            guard: not_g,
            sp: Sp::identity(vars),
        });
    }
    Csp { branches }
}

/// Conjunction of independent parallel branches.
pub fn par_sem(
    l: &OENode,
    r: &OENode,
    lc: &Csp,
    rc: &Csp,
    budget: usize,
) -> Result<Csp, SemError> {
    let (wl, wr) = (written_vars(l), written_vars(r));
    let (rl, rr) = (read_vars(l), read_vars(r));
    let shared: Vec<&String> = wl
        .intersection(&wr)
        .chain(wl.intersection(&rr))
        .chain(wr.intersection(&rl))
        .collect();
    if let Some(v) = shared.first() {
        return Err(SemError::CooperativeParallelUnsupported(format!(
            "`{v}` is shared by both sides"
        )));
    }
    if let Some(v) = wl.iter().chain(&wr).find(|v| v.starts_with('*')) {
        return Err(SemError::CooperativeParallelUnsupported(format!(
            "indirect write `{v}`"
        )));
    }
    let mut branches = Vec::new();
    for bl in &lc.branches {
        for br in &rc.branches {
            let guard = normalize_bool(&BoolExpr::and_all([bl.guard.clone(), br.guard.clone()]));
            if guard.is_false() {
                continue;
            }
            let mut sp = bl.sp.clone();
            for v in &wr {
                match br.sp.final_eqs.get(v) {
                    Some(e) => {
                        sp.final_eqs.insert(v.clone(), e.clone());
                    }
                    None => {
                        sp.final_eqs.remove(v);
                    }
                }
            }
            for res in &br.sp.residuals {
                sp.add_residual(res);
            }
            extend_unique(&mut sp.diagnostics, br.sp.diagnostics.iter().cloned());
            branches.push(Branch { guard, sp });
            if branches.len() > budget {
                return Err(SemError::BranchBudgetExceeded(budget));
            }
        }
    }
    Ok(Csp { branches })
}

fn needs_prefix(n: &OENode) -> bool {
    let mut found = false;
    n.walk(&mut |x| {
        found |= matches!(x, OENode::LoopUntil(..))
            || matches!(x, OENode::Term(t) if t.has_deref_target())
    });
    found
}

struct Ctx<'a, 'o> {
    vars: &'a VarSet,
    opts: &'a SemOptions<'o>,
    trace: Vec<TraceStep>,
}

impl Ctx<'_, '_> {
    fn budget(&self) -> usize {
        self.opts.branch_budget
    }

    fn relay(&mut self, p: &Csp, q: &Csp) -> Result<Csp, SemError> {
        let b = self.budget();
        relay_traced(p, q, b, &mut self.trace)
    }

    fn node(&mut self, n: &OENode) -> Result<Csp, SemError> {
        match n {
            OENode::Skip => Ok(Csp::identity(self.vars)),
            OENode::Term(t) if t.has_deref_target() => {
                let id = Csp::identity(self.vars);
                self.exec(id, n)
            }
            OENode::Term(t) => term_sem(t, self.vars, self.budget()),
            OENode::Seq(items) => {
                if needs_prefix(n) {
                    let id = Csp::identity(self.vars);
                    return self.exec(id, n);
                }
                let steps = items
                    .iter()
                    .map(|i| self.node(i))
                    .collect::<Result<Vec<_>, _>>()?;
                let red = reduce(&steps, self.opts.strategy, self.budget())?;
                self.trace.extend(red.trace.steps);
                Ok(red.csp)
            }
            OENode::Guarded(body, g) => {
                if needs_prefix(body) {
                    let id = Csp::identity(self.vars);
                    return self.exec(id, n);
                }
                let b = self.node(body)?;
                let out = guard_csp(&b, g, self.vars);
                self.trace.push(TraceStep {
                    rule: "guard".into(),
                    before: format!("({})[{}]", b.render(), g.sem()),
                    after: out.render(),
                });
                Ok(out)
            }
            OENode::LoopCount(body, LoopCount::Literal(k)) => {
                if needs_prefix(body) {
                    let id = Csp::identity(self.vars);
                    return self.exec(id, n);
                }
                let b = self.node(body)?;
                loop_count_sem(&b, *k, self.vars, self.opts.strategy, self.budget())
            }
            OENode::LoopCount(_, LoopCount::Symbolic(s)) => Err(SemError::SymbolicLoopCount(s.clone())),
            OENode::LoopUntil(..) => {
                let id = Csp::identity(self.vars);
                self.exec(id, n)
            }
            OENode::WaitLoop(c) => Ok(wait_loop_sem(c, self.vars)),
            OENode::Par(l, r) => {
                let lc = self.node(l)?;
                let rc = self.node(r)?;
                par_sem(l, r, &lc, &rc, self.budget())
            }
            OENode::Call { name, args, kind } => match kind {
                CallKind::ByName => match self.opts.registry {
                    Some(reg) => reg.splice(name, args, self.vars),
                    None => Err(SemError::UnknownFunction(name.clone())),
                },
                CallKind::ByValueInto(t) => {
                    let mut sp = Sp::default();
                    let args = args.iter().map(|a| a.to_initial()).collect();
                    sp.final_eqs.insert(t.clone(), MathExpr::Apply(name.clone(), args));
                    Ok(Csp::single(complete(&sp, self.vars)))
                }
            },
        }
    }

    /// `acc; n`, for nodes whose meaning depends on the state before them
    /// (indirect targets, loops that must close).
    fn exec(&mut self, acc: Csp, n: &OENode) -> Result<Csp, SemError> {
        if !needs_prefix(n) {
            let c = self.node(n)?;
            return self.relay(&acc, &c);
        }
        match n {
            OENode::Seq(items) => items.iter().try_fold(acc, |a, i| self.exec(a, i)),
            OENode::Term(t) => {
                let mut branches = Vec::new();
                for b in &acc.branches {
                    let env = PointsToEnv::from_eqs(&b.sp.final_eqs, self.vars);
                    let resolved = resolve_term(t, &env)?;
                    let c = term_sem(&resolved, self.vars, self.budget())?;
                    let single = Csp {
                        branches: vec![b.clone()],
                    };
                    branches.extend(self.relay(&single, &c)?.branches);
                }
                Ok(Csp { branches })
            }
            OENode::Guarded(body, g) => {
                let g = g.to_initial();
                let mut branches = Vec::new();
                for b in &acc.branches {
                    let binding: Binding = b
                        .sp
                        .final_eqs
                        .iter()
                        .map(|(v, e)| (VarRef::initial(v), e.clone()))
                        .collect();
                    let gb = substitute_bool(&g, &binding);
                    let on = normalize_bool(&BoolExpr::and_all([b.guard.clone(), gb.clone()]));
                    if !on.is_false() {
                        let start = Csp {
                            branches: vec![Branch {
                                guard: on,
                                sp: b.sp.clone(),
                            }],
                        };
                        branches.extend(self.exec(start, body)?.branches);
                    }
                    let off = normalize_bool(&BoolExpr::and_all([
                        b.guard.clone(),
                        BoolExpr::not(gb),
                    ]));
                    if !off.is_false() {
                        branches.push(Branch {
                            guard: off,
                            sp: b.sp.clone(),
                        });
                    }
                }
                Ok(Csp { branches })
            }
            OENode::LoopCount(body, LoopCount::Literal(k)) => {
                (0..*k).try_fold(acc, |a, _| self.exec(a, body))
            }
            OENode::LoopCount(_, LoopCount::Symbolic(s)) => Err(SemError::SymbolicLoopCount(s.clone())),
            OENode::LoopUntil(body, cond) => {
                let b = self.node(body)?;
                let out = loop_until_sem(&acc, &b, cond, self.opts.unroll_cap, self.budget())?;
                let csp = out.into_csp();
                self.trace.push(TraceStep {
                    rule: "loop-until".into(),
                    before: format!("({}) ; ({})^{{until {}}}", acc.render(), b.render(), cond.cond),
                    after: csp.render(),
                });
                Ok(csp)
            }
            _ => {
                let c = self.node(n)?;
                self.relay(&acc, &c)
            }
        }
    }
}

/// Semantics of an OE node over the variable set `vars`.
pub fn node_sem(n: &OENode, vars: &VarSet, opts: &SemOptions) -> Result<Reduction, SemError> {
    let mut ctx = Ctx {
        vars,
        opts,
        trace: Vec::new(),
    };
    let csp = ctx.node(n)?;
    Ok(Reduction {
        csp,
        trace: Trace { steps: ctx.trace },
    })
}

pub fn program_sem(p: &Program, opts: &SemOptions) -> Result<Reduction, SemError> {
    node_sem(&p.body, &p.vars(), opts)
}
