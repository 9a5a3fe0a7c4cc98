use oesem::calculus::{program_sem, SemOptions};
use oesem::diag::DiagnosticKind;
use oesem::expr::{substitute, Binding, Evaluator, Marker, MathExpr, Value, VarRef};
use oesem::interp::{differential_check, run, CheckOptions, RunOptions, Store};
use oesem::pointers::{resolve_deref, PointsTo, PointsToEnv};
use oesem::semantics::{Csp, SemError};
use oesem::syntax::parse;

const EX1: &str = "var a: int; var b: ptr int; var c: ptr ptr int; a!(12); b!(&a); c!(&b)";
const EX2: &str = "var a: int; var d: ptr int; a!(psi); d!(&a); *d!(10-*d); d!(10-*d)";

fn sem(src: &str) -> Csp {
    program_sem(&parse(src).unwrap(), &SemOptions::default()).unwrap().csp
}

/// Final values as a binding for read-after references.
fn finals(c: &Csp) -> Binding {
    c.branches[0]
        .sp
        .final_eqs
        .iter()
        .map(|(v, e)| (VarRef::final_(v.clone()), e.clone()))
        .collect()
}

#[test]
fn resolves_links() {
    let env = PointsToEnv::default()
        .with("b", PointsTo::Addr("a".into()))
        .with("c", PointsTo::Addr("b".into()))
        .with("d", PointsTo::Psi)
        .with("u", PointsTo::Unknown);
    assert_eq!(resolve_deref(&env, "b", 1).unwrap(), "a");
    assert_eq!(resolve_deref(&env, "c", 2).unwrap(), "a");
    assert_eq!(resolve_deref(&env, "c", 1).unwrap(), "b");
    assert!(matches!(resolve_deref(&env, "d", 1), Err(SemError::WrongAddress(_))));
    assert!(matches!(resolve_deref(&env, "u", 1), Err(SemError::UnresolvedPointer(_))));
}

#[test]
fn chain_of_addresses() {
    let c = sem(EX1);
    assert_eq!(c.render(), "a' = 12 & b' = &a & c' = &b");
    assert!(c.diagnostics().is_empty());

    let binding = finals(&c);
    let value = |e: MathExpr| substitute(&e, &binding);
    assert_eq!(value(MathExpr::fin("a")), MathExpr::int(12));
    assert_eq!(value(MathExpr::fin("b")), MathExpr::addr("a"));
    assert_eq!(value(MathExpr::deref(MathExpr::fin("c"), 2, Marker::Final)), MathExpr::int(12));
    assert_eq!(value(MathExpr::deref(MathExpr::fin("b"), 1, Marker::Final)), MathExpr::int(12));

    // Without a's value, **c' is a' itself.
    let mut partial = binding.clone();
    partial.remove(&VarRef::final_("a"));
    assert_eq!(
        substitute(&MathExpr::deref(MathExpr::fin("c"), 2, Marker::Final), &partial),
        MathExpr::fin("a")
    );
}

#[test]
fn chain_of_addresses_runs() {
    let p = parse(EX1).unwrap();
    let r = run(&p, &Store::default(), &RunOptions::default()).unwrap();
    let s = &r.final_store;
    assert_eq!(s.get("a"), Some(&Value::Int(12)));
    assert_eq!(s.get("b"), Some(&Value::Addr("a".into())));
    let cc = Evaluator::new(s).math(&MathExpr::deref(MathExpr::cur("c"), 2, Marker::Current));
    assert_eq!(cc.unwrap(), Value::Int(12));
}

#[test]
fn uninitialized_pointer_example() {
    let c = sem(EX2);
    assert_eq!(c.render(), "a' = 10 - psi & d' = psi");
    let kinds: Vec<DiagnosticKind> = c.diagnostics().iter().map(|d| d.kind).collect();
    assert_eq!(kinds.len(), 2, "{:?}", c.diagnostics());
    assert!(kinds.contains(&DiagnosticKind::UninitializedRead));
    assert!(kinds.contains(&DiagnosticKind::WrongAddress));

    let r = run(&parse(EX2).unwrap(), &Store::default(), &RunOptions::default()).unwrap();
    let mut concrete: Vec<DiagnosticKind> = r.diagnostics.iter().map(|d| d.kind).collect();
    let mut symbolic = kinds;
    concrete.sort_by_key(|k| format!("{k:?}"));
    symbolic.sort_by_key(|k| format!("{k:?}"));
    assert_eq!(concrete, symbolic);
}

#[test]
fn equal_addresses_are_equal_values() {
    let c = sem("var a: int; var p: ptr int; var q: ptr int; p!(&a); q!(&a)");
    let eqs = &c.branches[0].sp.final_eqs;
    assert_eq!(eqs["p"], eqs["q"]);
}

#[test]
fn write_through_pointer_hits_pointee() {
    let src = "var a: int; var b: int; var p: ptr int; p!(&a); *p!(5); b!(*p + 1)";
    assert_eq!(sem(src), sem("var a: int; var b: int; var p: ptr int; p!(&a); a!(5); b!(6)"));
    let report = differential_check(&parse(src).unwrap(), &CheckOptions::default()).unwrap();
    assert!(report.mismatches.is_empty(), "{}", report.render());
}

#[test]
fn unresolved_target_is_an_error() {
    let p = parse("var a: int; var p: ptr int; *p!(1)").unwrap();
    assert!(program_sem(&p, &SemOptions::default()).is_err());
}

#[test]
fn deeper_than_two_rejected() {
    assert!(parse("var a: int; var p: ptr int; a!(***p)").is_err());
}
