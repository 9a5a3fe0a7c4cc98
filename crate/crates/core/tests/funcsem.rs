use num_bigint::BigInt;
use oesem::calculus::{loop_count_sem, program_sem, SemOptions, Strategy};
use oesem::expr::{substitute, Binding, MathExpr, VarRef};
use oesem::funcsem::{
    hanoi_moves_parallel, hanoi_nth_move, hanoi_sequence, unfold_recursive, FuncError, Move, Pole, Registry,
    DEFAULT_FUEL,
};
use oesem::interp::{run, RunOptions, Store};
use oesem::semantics::{check_exclusivity, SemError, DEFAULT_BRANCH_BUDGET};
use oesem::syntax::parse;

const DECLS: &str = "\
fn factorial(N) = 1 when N = 1 (+) N * factorial(N - 1) when N > 1
fn fibonacci(N) = 0 when N = 0 (+) 1 when N = 1 (+) fibonacci(N - 1) + fibonacci(N - 2) when N >= 2
fn quicksort(A) residual \"perm(A', A) && sorted(A')\" writes {A}
fn bump(x, k) splice \"x' = x + k\"
";

fn registry() -> Registry {
    Registry::load(DECLS).unwrap()
}

/// Recursive generator written independently of the library.
fn towers(n: u32, a: Pole, b: Pole, c: Pole, out: &mut Vec<Move>) {
    if n == 0 {
        return;
    }
    towers(n - 1, a, c, b, out);
    out.push(Move { from: a, to: c });
    towers(n - 1, b, a, c, out);
}

#[test]
fn factorial_matches_product() {
    let reg = registry();
    let mut product = BigInt::from(1);
    for n in 1..=20i64 {
        product *= n;
        assert_eq!(unfold_recursive(&reg, "factorial", n, DEFAULT_FUEL).unwrap(), product);
    }
    assert_eq!(unfold_recursive(&reg, "factorial", 1, DEFAULT_FUEL).unwrap(), BigInt::from(1));
    assert!(matches!(
        unfold_recursive(&reg, "factorial", -1, DEFAULT_FUEL),
        Err(FuncError::NoBranchApplies { .. })
    ));
}

#[test]
fn fibonacci_matches_two_registers() {
    let reg = registry();
    let (mut a, mut b) = (BigInt::from(0), BigInt::from(1));
    for n in 0..=90i64 {
        assert_eq!(unfold_recursive(&reg, "fibonacci", n, DEFAULT_FUEL).unwrap(), a, "n = {n}");
        let next = &a + &b;
        a = std::mem::replace(&mut b, next);
    }
}

/// Each pass of the loop body advances the pair by two Fibonacci steps,
/// so N passes from (0, 1) leave Fib(2N) in `i`.
#[test]
fn loop_form_advances_two_steps() {
    let reg = registry();
    let p = parse("var i: int; var j: int; i!(i+j); j!(i+j)").unwrap();
    let body = program_sem(&p, &SemOptions::default()).unwrap().csp;
    for n in 1..=10u64 {
        let c = loop_count_sem(&body, n, &p.vars(), Strategy::PairwiseTree, DEFAULT_BRANCH_BUDGET).unwrap();
        let prog = parse(&format!("var i: int; var j: int; i!(0), j!(1); (i!(i+j); j!(i+j))^{n}")).unwrap();
        let concrete = run(&prog, &Store::default(), &RunOptions::default()).unwrap();
        let i = concrete.final_store.get("i").unwrap().as_int().unwrap();
        assert_eq!(BigInt::from(i), unfold_recursive(&reg, "fibonacci", 2 * n as i64, DEFAULT_FUEL).unwrap());
        let start: Binding = [("i", 0), ("j", 1)]
            .into_iter()
            .map(|(v, x)| (VarRef::initial(v), MathExpr::int(x)))
            .collect();
        let predicted = substitute(&c.branches[0].sp.final_eqs["i"], &start);
        assert_eq!(predicted, MathExpr::int(i));
    }
}

#[test]
fn recursive_guards_are_exclusive() {
    let reg = registry();
    for name in ["factorial", "fibonacci"] {
        let csp = reg.get(name).unwrap().as_csp().unwrap();
        assert!(check_exclusivity(&csp, 500, 11).is_empty(), "{name}");
    }
}

#[test]
fn fuel_and_arity() {
    let reg = registry();
    assert!(matches!(reg.unfold("fibonacci", &[BigInt::from(40)], 5), Err(FuncError::FuelExhausted(5))));
    assert!(matches!(
        reg.unfold("factorial", &[], DEFAULT_FUEL),
        Err(FuncError::ArityMismatch { expected: 1, found: 0, .. })
    ));
    assert!(matches!(reg.unfold("nope", &[], DEFAULT_FUEL), Err(FuncError::UnknownFunction(_))));
    assert!(Registry::load("fn broken(N) = N when").is_err());
}

#[test]
fn quicksort_then_last_is_maximum() {
    let reg = registry();
    let p = parse("var A: int[5]; var m: int; var N: int; call quicksort(A); m!(A[N-1])").unwrap();
    let opts = SemOptions {
        registry: Some(&reg),
        ..Default::default()
    };
    let c = program_sem(&p, &opts).unwrap().csp;
    assert_eq!(c.render(), "N' = N & perm(A', A) & sorted(A') & m' = A'[N - 1]");
}

#[test]
fn splice_substitutes_value_arguments() {
    let reg = registry();
    let p = parse("var y: int; var z: int; call bump(y, z + 1)").unwrap();
    let opts = SemOptions {
        registry: Some(&reg),
        ..Default::default()
    };
    assert_eq!(program_sem(&p, &opts).unwrap().csp.render(), "y' = y + z + 1 & z' = z");
    let bad = parse("var y: int; call bump(y + 1, 2)").unwrap();
    assert!(matches!(program_sem(&bad, &opts), Err(SemError::NonVariableArgument { .. })));
    let unknown = parse("var y: int; call missing(y)").unwrap();
    assert!(matches!(program_sem(&unknown, &opts), Err(SemError::UnknownFunction(_))));
}

#[test]
fn call_by_value_reads() {
    let reg = registry();
    let opts = RunOptions {
        registry: Some(&reg),
        ..Default::default()
    };
    let p = parse("var n: int; var f: int; f!(factorial(n) + 1)").unwrap();
    let s: Store = "n=5".parse().unwrap();
    let r = run(&p, &s, &opts).unwrap();
    assert_eq!(r.final_store.to_string(), "f=121, n=5");
    let sum = parse("var A: int[4]; var m: int; m!(sum(A))").unwrap();
    let r = run(&sum, &"A=[1,2,3,4]".parse().unwrap(), &RunOptions::default()).unwrap();
    assert_eq!(r.final_store.get("m").unwrap().as_int(), Some(10));
}

#[test]
fn hanoi_lengths_and_agreement() {
    for n in 1..=16 {
        assert_eq!(hanoi_sequence(n).unwrap().len(), (1usize << n) - 1);
    }
    for n in 1..=10 {
        let mut oracle = Vec::new();
        towers(n, Pole::A, Pole::B, Pole::C, &mut oracle);
        assert_eq!(hanoi_sequence(n).unwrap(), oracle);
        for (k, m) in oracle.iter().enumerate() {
            assert_eq!(hanoi_nth_move(n, k as u64 + 1).unwrap(), *m, "n = {n}, k = {}", k + 1);
        }
        assert_eq!(hanoi_moves_parallel(n, true).unwrap(), oracle);
        assert_eq!(hanoi_moves_parallel(n, false).unwrap(), oracle);
    }
    assert_eq!(hanoi_sequence(1).unwrap(), [Move { from: Pole::A, to: Pole::C }]);
    assert_eq!(hanoi_nth_move(4, 10).unwrap().to_string(), "B -> A");
    assert!(matches!(hanoi_nth_move(4, 0), Err(FuncError::OutOfRange { .. })));
    assert!(matches!(hanoi_sequence(0), Err(FuncError::SizeLimit(0))));
}
