use oesem::expr::{BoolExpr, CmpOp, MathExpr};
use oesem::syntax::{
    parse, pretty_print, written_vars, Decl, LoopCount, OENode, ParseError, Program, SemBool, Target, Term,
    VarType, WriteOp,
};
use proptest::prelude::*;

const VARS: [&str; 3] = ["x", "y", "z"];

#[test]
fn swap_is_three_single_write_terms() {
    let p = parse("var x: int; var y: int; x!(x+y); y!(x-y); x!(x-y)").unwrap();
    let OENode::Seq(items) = &p.body else {
        panic!("expected a sequence, got {:?}", p.body);
    };
    assert_eq!(items.len(), 3);
    for item in items {
        assert!(matches!(item, OENode::Term(t) if t.writes.len() == 1));
    }
    let w: Vec<String> = written_vars(&p.body).into_iter().collect();
    assert_eq!(w, ["x", "y"]);
}

#[test]
fn sign_chain_is_one_term() {
    let p = parse("var x: int; var y: int; x!(1)[y>0], x!(0)[y=0], x!(-1)[y<0]").unwrap();
    match &p.body {
        OENode::Term(t) => {
            assert_eq!(t.writes.len(), 3);
            assert!(t.writes.iter().all(|w| w.target == Target::Var("x".into()) && w.guard.is_some()));
        }
        other => panic!("expected a term, got {other:?}"),
    }
}

#[test]
fn skip_and_written_vars() {
    let p = parse("skip").unwrap();
    assert_eq!(p.body, OENode::Skip);
    assert!(written_vars(&p.body).is_empty());
    assert_eq!(pretty_print(&p).trim(), "skip");
    let par = parse("var x: int; var y: int; (x!(1) || y!(2))").unwrap();
    assert_eq!(written_vars(&par.body).len(), 2);
}

#[test]
fn duplicate_unguarded_target_rejected() {
    let e = parse("var x: int; x!(1), x!(2)").unwrap_err();
    assert!(matches!(e, ParseError::DuplicateUnguardedTarget { ref var } if var == "x"), "{e}");
}

#[test]
fn type_errors() {
    for src in [
        "var x: int; *x!(1)",
        "var p: ptr int; var a: int; a!(p + 1)",
        "var x: int; x!(y)",
        "var x: int; var x: int; skip",
        "var x: int; (x!(x+1))^{until x > 3}",
    ] {
        assert!(parse(src).is_err(), "{src} should be rejected");
    }
}

#[test]
fn fixed_round_trips() {
    for src in [
        "var x: int; var y: int; x!(x+y); y!(x-y); x!(x-y)",
        "var x: int; var y: int; x!(1)[y>0], x!(0)[y=0], x!(-1)[y<0]",
        "var x: int; var y: int; (x!(y), y!(x))[x > y]",
        "var A: int[6]; var N: int; var i: int; var m: int; m!(A[0]), i!(1); (m!(A[i])[A[i] > m], i!(i+1))^{until !(i' < N)}",
        "var a: int; var b: ptr int; var c: ptr ptr int; a!(12); b!(&a); c!(&b); a!(**c + 1)",
        "var b: int; (skip)^{until b = 1}",
        "var x: int; (x!(x * 2))^3",
    ] {
        let p = parse(src).unwrap();
        let printed = pretty_print(&p);
        assert_eq!(parse(&printed).unwrap(), p, "{printed}");
    }
}

fn var() -> impl Strategy<Value = String> {
    prop::sample::select(VARS.to_vec()).prop_map(str::to_string)
}

fn math() -> impl Strategy<Value = MathExpr> {
    let leaf = prop_oneof![
        (0i64..20).prop_map(MathExpr::int),
        var().prop_map(|v| MathExpr::cur(&v)),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| MathExpr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| MathExpr::sub(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| MathExpr::mul(a, b)),
        ]
    })
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge])
}

fn boolean() -> impl Strategy<Value = BoolExpr> {
    let leaf = (cmp_op(), math(), math()).prop_map(|(op, a, b)| BoolExpr::Cmp(op, a, b));
    leaf.prop_recursive(2, 6, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|b| BoolExpr::Not(Box::new(b))),
            prop::collection::vec(inner.clone(), 2..3).prop_map(BoolExpr::And),
            prop::collection::vec(inner, 2..3).prop_map(BoolExpr::Or),
        ]
    })
}

/// A term writing distinct variables; each write may carry a guard.
fn term() -> impl Strategy<Value = OENode> {
    prop::collection::vec((math(), prop::option::of(boolean())), 1..=3).prop_map(|ws| {
        let writes = ws
            .into_iter()
            .zip(VARS)
            .map(|((payload, guard), v)| WriteOp {
                target: Target::Var(v.to_string()),
                payload,
                guard,
            })
            .collect();
        OENode::Term(Term { writes })
    })
}

fn node() -> impl Strategy<Value = OENode> {
    let leaf = prop_oneof![1 => Just(OENode::Skip), 4 => term()];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(OENode::Seq),
            (inner.clone(), boolean()).prop_map(|(n, b)| OENode::Guarded(Box::new(n), b)),
            (inner.clone(), 0u64..4).prop_map(|(n, k)| OENode::LoopCount(Box::new(n), LoopCount::Literal(k))),
            (inner, var(), 0i64..9).prop_map(|(n, v, k)| {
                let cond = BoolExpr::cmp(CmpOp::Ge, MathExpr::fin(&v), MathExpr::int(k));
                match n {
                    // `(skip)^{until b}` is the wait loop.
                    OENode::Skip => OENode::WaitLoop(SemBool::new(cond)),
                    n => OENode::LoopUntil(Box::new(n), SemBool::new(cond)),
                }
            }),
        ]
    })
}

fn program(body: OENode) -> Program {
    let decls = VARS
        .iter()
        .map(|v| Decl {
            name: v.to_string(),
            ty: VarType::Int,
        })
        .collect();
    Program { decls, body }
}

/// Sequences nested directly in sequences are not distinguishable in text.
fn flatten(n: OENode) -> OENode {
    match n {
        OENode::Seq(items) => {
            let mut out = Vec::new();
            for i in items.into_iter().map(flatten) {
                match i {
                    OENode::Seq(inner) => out.extend(inner),
                    other => out.push(other),
                }
            }
            OENode::Seq(out)
        }
        OENode::Guarded(b, g) => OENode::Guarded(Box::new(flatten(*b)), g),
        OENode::LoopCount(b, c) => OENode::LoopCount(Box::new(flatten(*b)), c),
        OENode::LoopUntil(b, c) => OENode::LoopUntil(Box::new(flatten(*b)), c),
        other => other,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, rng_seed: proptest::test_runner::RngSeed::Fixed(0x0e5e), ..ProptestConfig::with_cases(1000) })]

    #[test]
    fn print_then_parse_is_identity(body in node()) {
        let p = program(body);
        let text = pretty_print(&p);
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(program(flatten(back.body)), program(flatten(p.body)), "{}", text);
    }

    #[test]
    fn unguarded_duplicates_always_rejected(
        v in var(),
        a in math(),
        b in math(),
        g in prop::option::of(boolean()),
        extra in prop::option::of(math()),
    ) {
        let mut parts = vec![format!("{v}!({})", a.display(oesem::expr::PrintMode::Program))];
        if let Some(e) = &extra {
            let other = VARS.iter().find(|o| **o != v).unwrap();
            parts.push(format!("{other}!({})", e.display(oesem::expr::PrintMode::Program)));
        }
        let guard = g.map(|g| format!("[{}]", g.display(oesem::expr::PrintMode::Program))).unwrap_or_default();
        parts.push(format!("{v}!({}){guard}", b.display(oesem::expr::PrintMode::Program)));
        let src = format!("var x: int; var y: int; var z: int; {}", parts.join(", "));
        let is_dup_error = matches!(parse(&src), Err(ParseError::DuplicateUnguardedTarget { .. }));
        prop_assert!(is_dup_error, "{}", src);
    }

    #[test]
    fn fully_guarded_chains_accepted(v in var(), a in math(), b in math(), g1 in boolean(), g2 in boolean()) {
        use oesem::expr::PrintMode::Program as P;
        let src = format!(
            "var x: int; var y: int; var z: int; {v}!({})[{}], {v}!({})[{}]",
            a.display(P), g1.display(P), b.display(P), g2.display(P)
        );
        let parsed = parse(&src);
        prop_assert!(parsed.is_ok(), "{}: {:?}", src, parsed.err());
    }
}
