//! Addresses, `*` and `&`: resolving indirect write targets per branch and
//! flagging writes of non-addresses into pointers.

use std::collections::BTreeMap;

use crate::diag::Diagnostic;
use crate::expr::{normalize, MathExpr};
use crate::semantics::{term_sem, Csp, SemError};
use crate::syntax::{Target, Term, VarSet, VarType, WriteOp};

/// What a pointer variable is known to hold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointsTo {
    Addr(String),
    Psi,
    Unknown,
}

/// Per-branch knowledge of pointer values.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PointsToEnv {
    pub known: BTreeMap<String, PointsTo>,
}

impl PointsToEnv {
    /// Reads pointer values off a branch's final equations.
    pub fn from_eqs(eqs: &BTreeMap<String, MathExpr>, vars: &VarSet) -> Self {
        let known = vars
            .iter()
            .filter(|(_, t)| matches!(t, VarType::Ptr(_)))
            .map(|(v, _)| {
                let pt = match eqs.get(v).map(normalize) {
                    Some(MathExpr::AddressOf(a)) => PointsTo::Addr(a),
                    Some(MathExpr::Psi) => PointsTo::Psi,
                    _ => PointsTo::Unknown,
                };
                (v.clone(), pt)
            })
            .collect();
        PointsToEnv { known }
    }

    pub fn with(mut self, name: &str, pt: PointsTo) -> Self {
        self.known.insert(name.to_string(), pt);
        self
    }
}

/// Follows `depth` links starting at pointer `name`.
pub fn resolve_deref(env: &PointsToEnv, name: &str, depth: u32) -> Result<String, SemError> {
    let mut cur = name.to_string();
    for _ in 0..depth {
        cur = match env.known.get(&cur) {
            Some(PointsTo::Addr(a)) => a.clone(),
            Some(PointsTo::Psi) => return Err(SemError::WrongAddress(cur)),
            _ => return Err(SemError::UnresolvedPointer(cur)),
        };
    }
    Ok(cur)
}

/// Whether `e` can denote an address for a pointer of type `ty`: `&v`, a
/// pointer variable, a dereference that still yields a pointer, or psi.
pub fn is_pointer_form(e: &MathExpr, vars: &VarSet) -> bool {
    match e {
        MathExpr::AddressOf(_) | MathExpr::Psi => true,
        MathExpr::Var(r) => matches!(vars.get(&r.name), Some(VarType::Ptr(_))),
        MathExpr::Deref { ptr, depth, .. } => match ptr.as_ref() {
            MathExpr::Var(r) => vars
                .get(&r.name)
                .is_some_and(|t| t.pointer_depth() > *depth as u8),
            _ => false,
        },
        _ => false,
    }
}

/// WrongAddress findings for writes of non-addresses into pointers.
pub fn wrong_address_writes(t: &Term, vars: &VarSet) -> Vec<Diagnostic> {
    t.writes
        .iter()
        .filter_map(|w| match &w.target {
            Target::Var(v)
                if matches!(vars.get(v), Some(VarType::Ptr(_)))
                    && !is_pointer_form(&w.payload, vars) =>
            {
                Some(Diagnostic::wrong_address(v))
            }
            _ => None,
        })
        .collect()
}

/// Replaces indirect targets by the variables they point to in `env`.
pub fn resolve_term(t: &Term, env: &PointsToEnv) -> Result<Term, SemError> {
    let writes = t
        .writes
        .iter()
        .map(|w| {
            let target = match &w.target {
                Target::Deref(p, d) => Target::Var(resolve_deref(env, p, *d)?),
                other => other.clone(),
            };
            Ok(WriteOp {
                target,
                payload: w.payload.clone(),
                guard: w.guard.clone(),
            })
        })
        .collect::<Result<Vec<_>, SemError>>()?;
    Ok(Term { writes })
}

/// Semantics of a term whose targets may go through pointers, together
/// with the pointer knowledge after it (taken from its single branch, or
/// `Unknown` for pointers whose value depends on the branch).
pub fn pointer_term_sem(
    t: &Term,
    env: &PointsToEnv,
    vars: &VarSet,
    budget: usize,
) -> Result<(Csp, PointsToEnv), SemError> {
    let resolved = resolve_term(t, env)?;
    let csp = term_sem(&resolved, vars, budget)?;
    let mut after = env.clone();
    for (p, pt) in after.known.iter_mut() {
        let vals: Vec<PointsTo> = csp
            .branches
            .iter()
            .map(|b| match b.sp.final_eqs.get(p).map(normalize) {
                Some(MathExpr::AddressOf(a)) => PointsTo::Addr(a),
                Some(MathExpr::Psi) => PointsTo::Psi,
                Some(MathExpr::Var(r)) if r.name == *p => pt.clone(),
                _ => PointsTo::Unknown,
            })
            .collect();
        *pt = match vals.split_first() {
            Some((first, rest)) if rest.iter().all(|v| v == first) => first.clone(),
            _ => PointsTo::Unknown,
        };
    }
    Ok((csp, after))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn follows_links() {
        let env = PointsToEnv::default()
            .with("b", PointsTo::Addr("a".into()))
            .with("c", PointsTo::Addr("b".into()))
            .with("d", PointsTo::Psi);
        assert_eq!(resolve_deref(&env, "b", 1).unwrap(), "a");
        assert_eq!(resolve_deref(&env, "c", 2).unwrap(), "a");
        assert_eq!(resolve_deref(&env, "d", 1), Err(SemError::WrongAddress("d".into())));
        assert_eq!(
            resolve_deref(&env, "e", 1),
            Err(SemError::UnresolvedPointer("e".into()))
        );
    }
}
