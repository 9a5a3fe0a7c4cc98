use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oesem::calculus::{node_sem, reduce, SemOptions, Strategy};
use oesem::interp::{differential_check, fuzz_programs, CheckOptions};
use oesem::semantics::{Csp, DEFAULT_BRANCH_BUDGET};
use oesem::syntax::{parse, OENode};

/// A chain of `n` swaps and bumps over three variables, one step in eight guarded.
fn chain(n: usize) -> Vec<Csp> {
    let mut src = String::from("var x: int; var y: int; var z: int; ");
    for k in 0..n {
        if k > 0 {
            src.push_str("; ");
        }
        match k % 8 {
            1 => src.push_str(&format!("z!(z + {k})[x > y]")),
            k if k % 2 == 0 => src.push_str("x!(y), y!(x)"),
            _ => src.push_str("y!(y - z)"),
        }
    }
    let p = parse(&src).unwrap();
    let vars = p.vars();
    let OENode::Seq(items) = p.body else { unreachable!() };
    items
        .iter()
        .map(|n| node_sem(n, &vars, &SemOptions::default()).unwrap().csp)
        .collect()
}

fn strategies(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduce");
    for n in [8, 16, 32] {
        let f = chain(n);
        for (name, s) in [("left_fold", Strategy::LeftFold), ("pairwise_tree", Strategy::PairwiseTree)] {
            g.bench_with_input(BenchmarkId::new(name, n), &f, |b, f| {
                b.iter(|| reduce(f, s, DEFAULT_BRANCH_BUDGET).unwrap())
            });
        }
    }
    g.finish();
}

fn differential(c: &mut Criterion) {
    let programs = fuzz_programs(20, 3, 11);
    let mut g = c.benchmark_group("differential_check");
    for parallel in [false, true] {
        let opts = CheckOptions {
            parallel,
            samples: 200,
            ..Default::default()
        };
        let name = if parallel { "parallel" } else { "sequential" };
        g.bench_function(name, |b| {
            b.iter(|| {
                for p in &programs {
                    differential_check(p, &opts).unwrap();
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, strategies, differential);
criterion_main!(benches);
