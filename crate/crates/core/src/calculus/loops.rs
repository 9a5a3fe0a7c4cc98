use std::collections::BTreeMap;

use rand::Rng;

use super::{node_sem, reduce, SemOptions, Strategy};
use crate::diag::{Diagnostic, DiagnosticKind};
use crate::expr::{
    normalize_bool, substitute_bool, Binding, BoolExpr, CmpOp, Evaluator, Marker, MathExpr,
    Value, VarRef, SAMPLE_RANGE,
};
use crate::interp::{run_node, Frames, InterpError, RunOptions, Store};
use crate::semantics::{Branch, Csp, SemError, Sp};
use crate::syntax::{written_vars, LoopCount, OENode, Program, SemBool, UntilKind, VarType};

/// `(p)^N` for a literal `N`.
pub fn loop_count_sem(
    body: &Csp,
    n: u64,
    vars: &crate::syntax::VarSet,
    strategy: Strategy,
    budget: usize,
) -> Result<Csp, SemError> {
    match n {
        0 => Ok(Csp::identity(vars)),
        1 => Ok(body.clone()),
        _ => {
            let copies = vec![body.clone(); n as usize];
            Ok(reduce(&copies, strategy, budget)?.csp)
        }
    }
}

/// Result of symbolically unrolling a repeat-until loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LoopOutcome {
    /// Every path left the loop within the unroll cap.
    Closed(Csp),
    /// Some paths were still iterating at the cap. `exits` holds the paths
    /// that did leave, `pending` those that did not.
    DivergencePartial {
        exits: Csp,
        pending: Csp,
        diagnostic: Diagnostic,
    },
}

impl LoopOutcome {
    /// Exits and pending paths together; pending paths carry the
    /// Divergence diagnostic.
    pub fn into_csp(self) -> Csp {
        match self {
            LoopOutcome::Closed(c) => c,
            LoopOutcome::DivergencePartial {
                mut exits,
                mut pending,
                diagnostic,
            } => {
                pending.add_diagnostics(&[diagnostic]);
                exits.branches.extend(pending.branches);
                exits
            }
        }
    }
}

fn eq_binding(eqs: &BTreeMap<String, MathExpr>, marker: Marker) -> Binding {
    eqs.iter()
        .map(|(v, e)| (VarRef::new(v.clone(), marker), e.clone()))
        .collect()
}

/// Repeat-until semantics by unrolling from `entry` (the state before the
/// loop). After each pass the exit condition is read with final values from
/// the current pass, read-before values from the previous one and plain
/// names from loop entry; a condition that does not fold splits the path.
pub fn loop_until_sem(
    entry: &Csp,
    body: &Csp,
    cond: &SemBool,
    cap: usize,
    budget: usize,
) -> Result<LoopOutcome, SemError> {
    let mut exits = Vec::new();
    let mut pending = Vec::new();
    let mut stopped_by_budget = false;
    for e0 in &entry.branches {
        let at_entry = eq_binding(&e0.sp.final_eqs, Marker::Current);
        let cond_at = |prev: &Sp, now: &Sp| {
            let mut b = at_entry.clone();
            b.extend(eq_binding(&prev.final_eqs, Marker::Initial));
            b.extend(eq_binding(&now.final_eqs, Marker::Final));
            substitute_bool(&cond.cond, &b)
        };
        let mut live: Vec<Branch> = Vec::new();
        let split = |b: Branch, c: BoolExpr, exits: &mut Vec<Branch>, live: &mut Vec<Branch>| {
            let c = normalize_bool(&c);
            let out = normalize_bool(&BoolExpr::and_all([b.guard.clone(), c.clone()]));
            let stay = normalize_bool(&BoolExpr::and_all([b.guard.clone(), BoolExpr::not(c)]));
            if !out.is_false() {
                exits.push(Branch {
                    guard: out,
                    sp: b.sp.clone(),
                });
            }
            if !stay.is_false() {
                live.push(Branch { guard: stay, sp: b.sp });
            }
        };
        if cond.kind == UntilKind::FinalOnly {
            let c = cond_at(&e0.sp, &e0.sp);
            split(e0.clone(), c, &mut exits, &mut live);
        } else {
            live.push(e0.clone());
        }
        for _ in 0..cap {
            if live.is_empty() {
                break;
            }
            let mark = exits.len();
            let mut next = Vec::new();
            for b in &live {
                for nb in super::relay(&Csp { branches: vec![b.clone()] }, body, budget)?.branches {
                    let c = cond_at(&b.sp, &nb.sp);
                    split(nb, c, &mut exits, &mut next);
                }
            }
            if exits.len() + next.len() > budget {
                // Undo this pass and report the loop as open.
                exits.truncate(mark);
                stopped_by_budget = true;
                break;
            }
            live = next;
        }
        pending.extend(live);
    }
    let exits = Csp { branches: exits };
    if pending.is_empty() {
        return Ok(LoopOutcome::Closed(exits));
    }
    Ok(LoopOutcome::DivergencePartial {
        exits,
        pending: Csp { branches: pending },
        diagnostic: Diagnostic::new(
            DiagnosticKind::Divergence,
            cond.cond.to_string(),
            if stopped_by_budget {
                format!("loop `until {}` did not close within the budget of {budget} branches", cond.cond)
            } else {
                format!("loop `until {}` did not close within {cap} unrollings", cond.cond)
            },
        ),
    })
}

/// `skip^{until b}`: nothing changes; the loop is left once an external
/// event makes `b` true.
pub fn wait_loop_sem(cond: &SemBool, vars: &crate::syntax::VarSet) -> Csp {
    let now = normalize_bool(&cond.cond.map_markers(&|_| Marker::Initial));
    let mut c = Csp::identity(vars);
    if now.is_true() {
        return c;
    }
    c.branches[0].sp.add_residual(&now);
    c.add_diagnostics(&[Diagnostic::new(
        DiagnosticKind::ExternalWait,
        now.sem(),
        format!("blocks until an external event makes `{}` true", now.sem()),
    )]);
    c
}

/// A user-supplied loop invariant `h` and termination condition `k`, both
/// over final values (`x'`) and values before the loop (plain names).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopSpec {
    pub invariant: BoolExpr,
    pub termination: BoolExpr,
    /// Values pinned in every sampled store (sizes, bounds).
    pub fixed: BTreeMap<String, Value>,
}

impl LoopSpec {
    pub fn parse(invariant: &str, termination: &str) -> Result<LoopSpec, SemError> {
        Ok(LoopSpec {
            invariant: crate::syntax::parse_sem_bool(invariant)?,
            termination: crate::syntax::parse_sem_bool(termination)?,
            fixed: BTreeMap::new(),
        })
    }

    pub fn with_fixed(mut self, name: &str, v: Value) -> Self {
        self.fixed.insert(name.to_string(), v);
        self
    }
}

fn holds(b: &BoolExpr, before: &Store, now: &Store) -> Result<bool, SemError> {
    let frames = Frames {
        current: before,
        initial: before,
        final_: now,
        registry: None,
    };
    Ok(Evaluator::new(&frames).boolean(b)?)
}

fn interp_err(e: InterpError) -> SemError {
    match e {
        InterpError::Eval(e) => SemError::Eval(e),
        other => SemError::InvariantViolated {
            witness: String::new(),
            reason: other.to_string(),
        },
    }
}

/// Semantics of the loop ending `p` from its invariant: `h && k`, once the
/// invariant has survived every iteration of concrete runs from `samples`
/// random stores. Termination is assumed, not proved.
pub fn loop_invariant_sem(
    p: &Program,
    spec: &LoopSpec,
    samples: usize,
    seed: u64,
) -> Result<Csp, SemError> {
    let (prefix, lp) = match &p.body {
        OENode::Seq(items) => (
            OENode::seq(items[..items.len() - 1].to_vec()),
            items[items.len() - 1].clone(),
        ),
        other => (OENode::Skip, other.clone()),
    };
    let (body, until) = match &lp {
        OENode::LoopUntil(b, c) => ((**b).clone(), Some(c.clone())),
        OENode::LoopCount(b, LoopCount::Symbolic(_)) => ((**b).clone(), None),
        _ => {
            return Err(SemError::InvariantViolated {
                witness: String::new(),
                reason: "program does not end in an until-loop or a loop with symbolic count".into(),
            })
        }
    };
    let vars = p.vars();
    let opts = RunOptions::default();
    for i in 0..samples {
        let mut rng = crate::expr::sample_rng(seed, i);
        let mut s0 = Store::default();
        for (v, t) in &vars {
            let val = match (spec.fixed.get(v), t) {
                (Some(x), _) => x.clone(),
                (None, VarType::Int) => Value::Int(rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1)),
                (None, VarType::Array(n)) => Value::Array(
                    (0..n.unwrap_or(5))
                        .map(|_| rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1))
                        .collect(),
                ),
                (None, VarType::Ptr(_)) => Value::Psi,
            };
            s0.set(v, val);
        }
        let witness = |s: &Store, reason: String| SemError::InvariantViolated {
            witness: s.to_string(),
            reason,
        };
        let entry = run_node(&prefix, &vars, &s0, &opts).map_err(interp_err)?.final_store;
        if !holds(&spec.invariant, &entry, &entry)? {
            return Err(witness(&s0, "invariant does not hold on loop entry".into()));
        }
        let mut cur = entry.clone();
        let mut iterations = 0usize;
        let rounds = match &lp {
            OENode::LoopCount(_, LoopCount::Symbolic(n)) => match entry.get(n) {
                Some(Value::Int(k)) => Some((*k).max(0) as usize),
                _ => Some(0),
            },
            _ => None,
        };
        let check_until = |c: &SemBool, before: &Store, after: &Store| -> Result<bool, SemError> {
            let frames = Frames {
                current: &entry,
                initial: before,
                final_: after,
                registry: None,
            };
            Ok(Evaluator::new(&frames).boolean(&c.cond)?)
        };
        let mut done = match (&until, rounds) {
            (Some(c), _) if c.kind == UntilKind::FinalOnly => check_until(c, &cur, &cur)?,
            (None, Some(0)) => true,
            _ => false,
        };
        while !done {
            iterations += 1;
            if iterations > opts.loop_cap {
                return Err(witness(&s0, "loop did not terminate".into()));
            }
            let before = cur.clone();
            cur = run_node(&body, &vars, &before, &opts).map_err(interp_err)?.final_store;
            if !holds(&spec.invariant, &entry, &cur)? {
                return Err(witness(
                    &s0,
                    format!("invariant `{}` fails after iteration {iterations}", spec.invariant.sem()),
                ));
            }
            done = match (&until, rounds) {
                (Some(c), _) => check_until(c, &before, &cur)?,
                (None, Some(k)) => iterations >= k,
                (None, None) => true,
            };
        }
        if !holds(&spec.termination, &entry, &cur)? {
            return Err(witness(
                &s0,
                format!("termination condition `{}` is false at exit", spec.termination.sem()),
            ));
        }
    }
    // h && k with k's defining equalities substituted into h
    let mut binding = Binding::new();
    for c in spec.termination.conjuncts() {
        if let BoolExpr::Cmp(CmpOp::Eq, MathExpr::Var(r), rhs) = &c {
            if r.marker == Marker::Final && !rhs.markers().contains(&Marker::Final) {
                binding.insert(r.clone(), rhs.clone());
            }
        }
    }
    let mut sp = Sp::default();
    let mut assumptions = Vec::new();
    for c in spec.invariant.conjuncts() {
        let c = substitute_bool(&c, &binding);
        if c.is_true() {
            continue;
        }
        if c.markers().contains(&Marker::Final) {
            sp.add_residual(&c);
        } else {
            assumptions.push(c.sem());
        }
    }
    for c in spec.termination.conjuncts() {
        sp.add_residual(&normalize_bool(&c));
    }
    let written = written_vars(&p.body);
    let loop_written = written_vars(&lp);
    let prefix_sem = node_sem(&prefix, &vars, &SemOptions::default())?.csp;
    for v in vars.keys() {
        if !written.contains(v) {
            sp.final_eqs.insert(v.clone(), MathExpr::init(v));
        } else if !loop_written.contains(v) && prefix_sem.branches.len() == 1 {
            if let Some(e) = prefix_sem.branches[0].sp.final_eqs.get(v) {
                sp.final_eqs.insert(v.clone(), e.clone());
            }
        }
    }
    let mut message = "invariant-derived, termination assumed".to_string();
    if !assumptions.is_empty() {
        message.push_str(&format!("; assumes {}", assumptions.join(" && ")));
    }
    sp.diagnostics
        .push(Diagnostic::new(DiagnosticKind::AssumedTermination, "loop", message));
    Ok(Csp::single(sp))
}
