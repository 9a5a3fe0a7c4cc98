use rand::Rng;
use serde::Serialize;

use super::{run, Frames, InterpError, RunOptions, Store};
use crate::calculus::{program_sem, SemOptions};
use crate::diag::DiagnosticKind;
use crate::expr::{EvalError, Evaluator, Value, SAMPLE_RANGE};
use crate::funcsem::Registry;
use crate::par;
use crate::semantics::{Csp, SemError};
use crate::syntax::{Program, VarType};

/// Array length used when a declaration leaves it open.
const DEFAULT_ARRAY_LEN: usize = 5;

#[derive(Clone, Copy)]
pub struct CheckOptions<'a> {
    pub samples: usize,
    pub seed: u64,
    /// Spread samples over worker threads (no effect without `parallel`).
    pub parallel: bool,
    pub loop_cap: usize,
    pub registry: Option<&'a Registry>,
    pub sem: SemOptions<'a>,
}

impl Default for CheckOptions<'_> {
    fn default() -> Self {
        CheckOptions {
            samples: 100,
            seed: 0,
            parallel: true,
            loop_cap: super::DEFAULT_LOOP_CAP,
            registry: None,
            sem: SemOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub store: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub samples: usize,
    pub checked: usize,
    /// Samples the interpreter could not finish (overflow, psi in a
    /// comparison, divergence, guard overlap).
    pub skipped: usize,
    pub mismatches: Vec<Mismatch>,
    /// Set when the whole program was skipped.
    pub note: Option<String>,
}

impl CheckReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "samples: {}, checked: {}, skipped: {}, mismatches: {}",
            self.samples,
            self.checked,
            self.skipped,
            self.mismatches.len()
        );
        if let Some(n) = &self.note {
            out.push_str(&format!("\nnote: {n}"));
        }
        for m in &self.mismatches {
            out.push_str(&format!("\n  at {}: {}", m.store, m.reason));
        }
        out
    }
}

/// A random initial store for `p`: ints from the sample range, arrays of
/// their declared length, pointers left unset.
pub(crate) fn random_store(p: &Program, seed: u64, i: usize) -> Store {
    let mut rng = crate::expr::sample_rng(seed, i);
    let mut s = Store::default();
    for (v, t) in p.vars() {
        let val = match t {
            VarType::Int => Value::Int(rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1)),
            VarType::Array(n) => Value::Array(
                (0..n.unwrap_or(DEFAULT_ARRAY_LEN))
                    .map(|_| rng.gen_range(SAMPLE_RANGE.0..=SAMPLE_RANGE.1))
                    .collect(),
            ),
            VarType::Ptr(_) => Value::Psi,
        };
        s.set(&v, val);
    }
    s
}

enum Outcome {
    Ok,
    Skipped,
    Mismatch(Mismatch),
}

fn check_one(p: &Program, csp: &Csp, s0: &Store, opts: &CheckOptions) -> Outcome {
    let run_opts = RunOptions {
        loop_cap: opts.loop_cap,
        registry: opts.registry,
    };
    let fin = match run(p, s0, &run_opts) {
        Ok(r) => r.final_store,
        Err(InterpError::Eval(_) | InterpError::Divergence { .. } | InterpError::GuardOverlap { .. }) => {
            return Outcome::Skipped
        }
        Err(e) => {
            return Outcome::Mismatch(Mismatch {
                store: s0.to_string(),
                reason: format!("interpreter failed: {e}"),
            })
        }
    };
    let frames = Frames {
        current: s0,
        initial: s0,
        final_: &fin,
        registry: opts.registry,
    };
    let mut hits = Vec::new();
    for b in &csp.branches {
        match Evaluator::new(&frames).boolean(&b.guard) {
            Ok(true) => hits.push(b),
            Ok(false) => {}
            Err(EvalError::Overflow | EvalError::PsiInComparison(_)) => return Outcome::Skipped,
            Err(e) => {
                return Outcome::Mismatch(Mismatch {
                    store: s0.to_string(),
                    reason: format!("guard `{}` failed: {e}", b.guard.sem()),
                })
            }
        }
    }
    let mismatch = |reason: String| {
        Outcome::Mismatch(Mismatch {
            store: s0.to_string(),
            reason,
        })
    };
    if hits.len() != 1 {
        return mismatch(format!("{} guards hold", hits.len()));
    }
    let b = hits[0];
    for (v, e) in &b.sp.final_eqs {
        let expected = match Evaluator::new(&frames).math(e) {
            Ok(x) => x,
            Err(EvalError::Overflow) => return Outcome::Skipped,
            Err(err) => return mismatch(format!("{v}' = {} failed: {err}", e.sem())),
        };
        let actual = fin.get(v).cloned().unwrap_or(Value::Psi);
        if expected != actual {
            return mismatch(format!("{v}' = {} predicts {expected}, run gives {actual}", e.sem()));
        }
    }
    for r in &b.sp.residuals {
        match Evaluator::new(&frames).boolean(r) {
            Ok(true) => {}
            Ok(false) => return mismatch(format!("residual `{}` is false", r.sem())),
            Err(EvalError::Overflow) => return Outcome::Skipped,
            Err(err) => return mismatch(format!("residual `{}` failed: {err}", r.sem())),
        }
    }
    Outcome::Ok
}

/// Compares a given CSP with concrete runs of `p` on random stores.
pub fn differential_check_csp(p: &Program, csp: &Csp, opts: &CheckOptions) -> CheckReport {
    let outcomes = par::map_indexed(opts.samples, opts.parallel, |i| {
        check_one(p, csp, &random_store(p, opts.seed, i), opts)
    });
    let mut report = CheckReport {
        samples: opts.samples,
        ..CheckReport::default()
    };
    for o in outcomes {
        match o {
            Outcome::Ok => report.checked += 1,
            Outcome::Skipped => report.skipped += 1,
            Outcome::Mismatch(m) => {
                report.checked += 1;
                report.mismatches.push(m);
            }
        }
    }
    report
}

/// Reduces `p` and checks the result against the interpreter. Programs
/// whose loops did not close symbolically are skipped.
pub fn differential_check(p: &Program, opts: &CheckOptions) -> Result<CheckReport, SemError> {
    let mut sem = opts.sem;
    sem.registry = sem.registry.or(opts.registry);
    let red = program_sem(p, &sem)?;
    if red
        .csp
        .diagnostics()
        .iter()
        .any(|d| matches!(d.kind, DiagnosticKind::Divergence | DiagnosticKind::ExternalWait))
    {
        return Ok(CheckReport {
            samples: opts.samples,
            skipped: opts.samples,
            note: Some("semantics is partial (loop did not close); nothing to compare".into()),
            ..CheckReport::default()
        });
    }
    Ok(differential_check_csp(p, &red.csp, opts))
}
