use std::collections::BTreeMap;

use oesem::calculus::{
    loop_count_sem, loop_invariant_sem, node_sem, program_sem, reduce, relay, LoopSpec, SemOptions, Strategy,
};
use oesem::diag::DiagnosticKind;
use oesem::expr::{Evaluator, Marker, Valuation, Value, VarRef};
use oesem::interp::{run, RunOptions, Store};
use oesem::semantics::{term_sem, Csp, SemError, DEFAULT_BRANCH_BUDGET};
use oesem::syntax::{parse, OENode};

struct Pre<'a>(&'a BTreeMap<String, i64>);

impl Valuation for Pre<'_> {
    fn lookup(&self, r: &VarRef) -> Option<Value> {
        (r.marker != Marker::Final)
            .then(|| self.0.get(&r.name).copied().map(Value::Int))
            .flatten()
    }
}

/// Final values predicted by the one branch whose guard holds.
fn predict(c: &Csp, pre: &[(&str, i64)]) -> BTreeMap<String, i64> {
    let env: BTreeMap<String, i64> = pre.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let val = Pre(&env);
    let live: Vec<_> = c
        .branches
        .iter()
        .filter(|b| Evaluator::new(&val).boolean(&b.guard).unwrap())
        .collect();
    assert_eq!(live.len(), 1, "exactly one guard must hold in {}", c.render());
    live[0]
        .sp
        .final_eqs
        .iter()
        .map(|(v, e)| (v.clone(), Evaluator::new(&val).math(e).unwrap().as_int().unwrap()))
        .collect()
}

fn sem(src: &str) -> Csp {
    program_sem(&parse(src).unwrap(), &SemOptions::default()).unwrap().csp
}

#[test]
fn swap_reduces_to_exchange() {
    let c = sem("var x: int; var y: int; x!(x+y); y!(x-y); x!(x-y)");
    assert_eq!(c.render(), "x' = y & y' = x");
}

#[test]
fn two_step_relay() {
    let vars = parse("var x: int; var y: int; skip").unwrap().vars();
    let p = parse("var x: int; var y: int; x!(x+y)").unwrap();
    let q = parse("var x: int; var y: int; y!(x-y)").unwrap();
    let OENode::Term(tp) = &p.body else { unreachable!() };
    let OENode::Term(tq) = &q.body else { unreachable!() };
    let cp = term_sem(tp, &vars, DEFAULT_BRANCH_BUDGET).unwrap();
    let cq = term_sem(tq, &vars, DEFAULT_BRANCH_BUDGET).unwrap();
    let r = relay(&cp, &cq, DEFAULT_BRANCH_BUDGET).unwrap();
    assert_eq!(r.render(), "x' = x + y & y' = x");
    let id = Csp::identity(&vars);
    assert_eq!(relay(&id, &cq, DEFAULT_BRANCH_BUDGET).unwrap(), cq);
}

#[test]
fn guarded_swap_sorts() {
    let c = sem("var x: int; var y: int; (x!(x+y); y!(x-y); x!(x-y))[x > y]");
    assert_eq!(c.render(), "x' = y & y' = x when x > y (+) x' = x & y' = y when !(x > y)");
}

#[test]
fn constant_prefix_prunes_false_branch() {
    let c = sem("var x: int; var y: int; x!(2), y!(1); (x!(x+y); y!(x-y); x!(x-y))[x > y]");
    assert_eq!(c.branches.len(), 1);
    assert_eq!(c.render(), "x' = 1 & y' = 2");
}

#[test]
fn trace_records_each_step() {
    let p = parse("var x: int; var y: int; x!(x+y); y!(x-y); x!(x-y)").unwrap();
    let r = program_sem(&p, &SemOptions::default()).unwrap();
    assert_eq!(r.trace.steps.len(), 2);
    assert!(r.trace.steps.iter().all(|s| s.rule == "relay"));
    assert_eq!(r.trace.steps[1].after, "x' = y & y' = x");
}

#[test]
fn parallel_independent_writes_conjoin() {
    assert_eq!(sem("var x: int; var y: int; (x!(1) || y!(2))").render(), "x' = 1 & y' = 2");
    let p = parse("var x: int; var y: int; (x!(y) || y!(x))").unwrap();
    assert!(matches!(
        program_sem(&p, &SemOptions::default()),
        Err(SemError::CooperativeParallelUnsupported(_))
    ));
}

#[test]
fn skip_is_identity() {
    assert_eq!(sem("var x: int; skip").render(), "x' = x");
}

#[test]
fn fibonacci_powers() {
    let p = parse("var i: int; var j: int; i!(i+j); j!(i+j)").unwrap();
    let body = program_sem(&p, &SemOptions::default()).unwrap().csp;
    let vars = p.vars();
    let once = loop_count_sem(&body, 1, &vars, Strategy::LeftFold, DEFAULT_BRANCH_BUDGET).unwrap();
    assert_eq!(once.render(), "i' = i + j & j' = i + 2*j");
    let zero = loop_count_sem(&body, 0, &vars, Strategy::LeftFold, DEFAULT_BRANCH_BUDGET).unwrap();
    assert_eq!(zero, Csp::identity(&vars));

    // Oracle: iterate the two-register update by hand.
    for n in 1..=10u64 {
        let c = loop_count_sem(&body, n, &vars, Strategy::PairwiseTree, DEFAULT_BRANCH_BUDGET).unwrap();
        for (i0, j0) in [(0i64, 1i64), (3, -2), (7, 5)] {
            let (mut i, mut j) = (i0, j0);
            for _ in 0..n {
                i += j;
                j += i;
            }
            let got = predict(&c, &[("i", i0), ("j", j0)]);
            assert_eq!((got["i"], got["j"]), (i, j), "n = {n}");
        }
    }
    let twice = loop_count_sem(&body, 2, &vars, Strategy::LeftFold, DEFAULT_BRANCH_BUDGET).unwrap();
    assert_eq!(twice.render(), "i' = 2*i + 3*j & j' = 3*i + 5*j");
}

#[test]
fn until_loop_closes_from_constant_prefix() {
    let src = "var x: int; x!(0); (x!(x+1))^{until x' = 3}";
    let c = sem(src);
    assert_eq!(c.render(), "x' = 3");
    let r = run(&parse(src).unwrap(), &Store::default(), &RunOptions::default()).unwrap();
    assert_eq!(r.final_store.get("x"), Some(&Value::Int(3)));
}

#[test]
fn opaque_iteration_is_partial() {
    let p = parse("var x: int; var a: int; var d: int; x!(a); (x!(g(x)))^{until abs(x' - ~x) <= d}").unwrap();
    let opts = SemOptions {
        unroll_cap: 8,
        ..Default::default()
    };
    let c = program_sem(&p, &opts).unwrap().csp;
    let diags = c.diagnostics();
    assert!(diags.iter().any(|d| d.kind == DiagnosticKind::Divergence));
    // One exit branch per unrolling plus the branch still looping.
    assert_eq!(c.branches.len(), 9);
}

#[test]
fn wait_loop_keeps_state() {
    let c = sem("var button: int; (skip)^{until button = 1}");
    assert_eq!(c.render(), "button' = button & button = 1");
    assert!(c.diagnostics().iter().any(|d| d.kind == DiagnosticKind::ExternalWait));
    assert_eq!(sem("var b: int; (skip)^{until true}").render(), "b' = b");
}

#[test]
fn strategies_agree_on_trees() {
    let p = parse("var x: int; var y: int; x!(x+1); y!(y*x); x!(x-y)[x > 0]; y!(2); x!(x+y)").unwrap();
    let OENode::Seq(items) = &p.body else { unreachable!() };
    let vars = p.vars();
    let opts = SemOptions::default();
    let f: Vec<Csp> = items.iter().map(|n| node_sem(n, &vars, &opts).unwrap().csp).collect();
    let a = reduce(&f, Strategy::LeftFold, DEFAULT_BRANCH_BUDGET).unwrap();
    let b = reduce(&f, Strategy::PairwiseTree, DEFAULT_BRANCH_BUDGET).unwrap();
    assert!(oesem::semantics::equiv_csp(&a.csp, &b.csp, 200, 7));
}

const MAX_LOOP: &str = "var A: int[6]; var N: int; var i: int; var m: int; \
    m!(A[0]), i!(1); (m!(A[i])[A[i] > m], i!(i+1))^{until !(i' < N)}";

#[test]
fn invariant_mode_max_loop() {
    let p = parse(MAX_LOOP).unwrap();
    let spec = LoopSpec::parse("m' = max(A[0..i'-1]) && 1 <= i' && i' <= N", "i' = N")
        .unwrap()
        .with_fixed("N", Value::Int(6));
    let c = loop_invariant_sem(&p, &spec, 50, 1).unwrap();
    let r = c.render();
    assert!(r.contains("m' = max(A[0..N - 1])"), "{r}");
    assert!(r.contains("i' = N"), "{r}");
    assert!(c.diagnostics().iter().any(|d| d.kind == DiagnosticKind::AssumedTermination));
}

#[test]
fn false_invariant_has_witness() {
    let p = parse(MAX_LOOP).unwrap();
    let spec = LoopSpec::parse("m' = A[0] && 1 <= i' && i' <= N", "i' = N")
        .unwrap()
        .with_fixed("N", Value::Int(6));
    match loop_invariant_sem(&p, &spec, 50, 1) {
        Err(SemError::InvariantViolated { witness, .. }) => assert!(witness.contains("A="), "{witness}"),
        other => panic!("expected a violation, got {other:?}"),
    }
}

#[test]
fn fib_loop_false_invariant() {
    let p = parse("var i: int; var j: int; var N: int; (i!(i+j); j!(i+j))^N").unwrap();
    let spec = LoopSpec::parse("i' = i", "true").unwrap().with_fixed("N", Value::Int(3));
    assert!(matches!(
        loop_invariant_sem(&p, &spec, 20, 3),
        Err(SemError::InvariantViolated { .. })
    ));
}

#[test]
fn branch_budget_reports_error() {
    let src = "var x: int; var y: int; var z: int; \
        (x!(1)[y > 0], x!(2)[y < 0]); (y!(1)[z > 0], y!(2)[z < 0]); (z!(1)[x > 0], z!(2)[x < 0])";
    let p = parse(src).unwrap();
    let opts = SemOptions {
        branch_budget: 4,
        ..Default::default()
    };
    assert!(matches!(program_sem(&p, &opts), Err(SemError::BranchBudgetExceeded(4))));
}
