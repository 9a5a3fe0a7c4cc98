use std::collections::BTreeMap;

use super::poly::{normalize, normalize_bool, resolve_deref};
use super::{BoolExpr, MathExpr, VarRef};

/// Simultaneous replacement of marked references.
pub type Binding = BTreeMap<VarRef, MathExpr>;

/// Replaces every reference bound in `binding` and re-normalizes.
///
/// Replacement is simultaneous: bound values are not themselves rewritten.
/// A dereference whose pointer becomes `&v` reads `v` at the dereference's own
/// time marker, and that read goes through the binding as well.
pub fn substitute(e: &MathExpr, binding: &Binding) -> MathExpr {
    normalize(&subst_raw(e, binding))
}

pub fn substitute_bool(b: &BoolExpr, binding: &Binding) -> BoolExpr {
    normalize_bool(&b.map_math(&|e| subst_raw(e, binding)))
}

fn subst_raw(e: &MathExpr, binding: &Binding) -> MathExpr {
    if binding.is_empty() {
        return e.clone();
    }
    let s = |x: &MathExpr| Box::new(subst_raw(x, binding));
    match e {
        MathExpr::Int(_) | MathExpr::Psi | MathExpr::AddressOf(_) => e.clone(),
        MathExpr::Var(r) => binding.get(r).cloned().unwrap_or_else(|| e.clone()),
        MathExpr::Deref { ptr, depth, at } => {
            let ptr = normalize(&subst_raw(ptr, binding));
            let lookup = |r: &VarRef| subst_raw(&MathExpr::Var(r.clone()), binding);
            resolve_deref(ptr, *depth, *at, &lookup)
        }
        MathExpr::Neg(x) => MathExpr::Neg(s(x)),
        MathExpr::Bin(op, l, r) => MathExpr::Bin(*op, s(l), s(r)),
        MathExpr::Apply(n, args) => {
            MathExpr::Apply(n.clone(), args.iter().map(|a| subst_raw(a, binding)).collect())
        }
        MathExpr::Index(a, i) => MathExpr::Index(s(a), s(i)),
        MathExpr::Slice(a, l, h) => MathExpr::Slice(s(a), s(l), s(h)),
        MathExpr::Update {
            array,
            index,
            value,
        } => MathExpr::Update {
            array: s(array),
            index: s(index),
            value: s(value),
        },
    }
}
