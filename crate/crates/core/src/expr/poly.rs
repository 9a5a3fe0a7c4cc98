//! Polynomial normal form.
//!
//! `+ - *` trees are expanded into a sum of monomials with integer
//! coefficients. Everything else (function applications, element reads,
//! unresolved dereferences, addresses) becomes an opaque atom whose own
//! arguments are normalized first.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{ArithOp, BoolExpr, CmpOp, Marker, MathExpr, VarRef};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Atom {
    Var(VarRef),
    Psi,
    Opaque(MathExpr),
}

/// Atoms with their degrees, sorted by atom.
type Monomial = Vec<(Atom, u32)>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Poly {
    terms: BTreeMap<Monomial, BigInt>,
}

impl Poly {
    fn constant(c: BigInt) -> Poly {
        let mut p = Poly::default();
        if !c.is_zero() {
            p.terms.insert(Vec::new(), c);
        }
        p
    }

    fn atom(a: Atom) -> Poly {
        let mut p = Poly::default();
        p.terms.insert(vec![(a, 1)], BigInt::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    fn add(mut self, other: Poly) -> Poly {
        for (m, c) in other.terms {
            self.add_term(m, c);
        }
        self
    }

    fn neg(self) -> Poly {
        Poly {
            terms: self.terms.into_iter().map(|(m, c)| (m, -c)).collect(),
        }
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(mul_monomials(m1, m2), c1 * c2);
            }
        }
        out
    }
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<Atom, u32> = BTreeMap::new();
    for (atom, d) in a.iter().chain(b.iter()) {
        *map.entry(atom.clone()).or_insert(0) += d;
    }
    map.into_iter().collect()
}

/// Canonical form of `e`. Idempotent; two expressions that are equal as
/// polynomials over their atoms normalize to the same tree.
pub fn normalize(e: &MathExpr) -> MathExpr {
    from_poly(to_poly(e))
}

fn to_poly(e: &MathExpr) -> Poly {
    match e {
        MathExpr::Int(v) => Poly::constant(v.clone()),
        MathExpr::Psi => Poly::atom(Atom::Psi),
        MathExpr::Var(r) => Poly::atom(Atom::Var(r.clone())),
        MathExpr::Neg(x) => to_poly(x).neg(),
        MathExpr::Bin(op, l, r) => {
            let (pl, pr) = (to_poly(l), to_poly(r));
            match op {
                ArithOp::Add => pl.add(pr),
                ArithOp::Sub => pl.add(pr.neg()),
                ArithOp::Mul => pl.mul(&pr),
            }
        }
        other => match normalize_opaque(other) {
            Resolved::Expr(x) => to_poly(&x),
            Resolved::Atom(x) => Poly::atom(Atom::Opaque(x)),
        },
    }
}

enum Resolved {
    /// Reduced to something that should be re-expanded.
    Expr(MathExpr),
    Atom(MathExpr),
}

fn normalize_opaque(e: &MathExpr) -> Resolved {
    match e {
        MathExpr::AddressOf(_) => Resolved::Atom(e.clone()),
        MathExpr::Deref { ptr, depth, at } => {
            match resolve_deref(normalize(ptr), *depth, *at, &|r| MathExpr::Var(r.clone())) {
                x @ MathExpr::Deref { .. } => Resolved::Atom(x),
                x => Resolved::Expr(x),
            }
        }
        MathExpr::Apply(name, args) => {
            Resolved::Atom(MathExpr::Apply(name.clone(), args.iter().map(normalize).collect()))
        }
        MathExpr::Index(arr, idx) => {
            let arr = normalize(arr);
            let idx = normalize(idx);
            match read_element(arr, idx) {
                x @ MathExpr::Index(..) => Resolved::Atom(x),
                x => Resolved::Expr(x),
            }
        }
        MathExpr::Slice(a, l, h) => Resolved::Atom(MathExpr::Slice(
            Box::new(normalize(a)),
            Box::new(normalize(l)),
            Box::new(normalize(h)),
        )),
        MathExpr::Update {
            array,
            index,
            value,
        } => Resolved::Atom(MathExpr::Update {
            array: Box::new(normalize(array)),
            index: Box::new(normalize(index)),
            value: Box::new(normalize(value)),
        }),
        _ => unreachable!("arithmetic handled by to_poly"),
    }
}

/// Follows `*&v = v` cancellations. `lookup` yields the value of `v` at time
/// `at`; for plain normalization that is just the reference itself.
pub(crate) fn resolve_deref(
    mut ptr: MathExpr,
    mut depth: u32,
    at: Marker,
    lookup: &dyn Fn(&VarRef) -> MathExpr,
) -> MathExpr {
    while depth > 0 {
        match ptr {
            MathExpr::AddressOf(name) => {
                ptr = normalize(&lookup(&VarRef::new(name, at)));
                depth -= 1;
            }
            MathExpr::Deref {
                ptr: inner,
                depth: d,
                at: inner_at,
            } if inner_at == at => {
                ptr = *inner;
                depth += d;
            }
            _ => break,
        }
    }
    if depth == 0 {
        ptr
    } else {
        MathExpr::Deref {
            ptr: Box::new(ptr),
            depth,
            at,
        }
    }
}

/// Element read through a chain of updates with constant indices.
fn read_element(arr: MathExpr, idx: MathExpr) -> MathExpr {
    let mut cur = arr;
    loop {
        match cur {
            MathExpr::Update {
                array,
                index,
                value,
            } => match (index.as_int(), idx.as_int()) {
                (Some(k), Some(j)) if k == j => return *value,
                (Some(_), Some(_)) => cur = *array,
                _ => {
                    return MathExpr::Index(
                        Box::new(MathExpr::Update {
                            array,
                            index,
                            value,
                        }),
                        Box::new(idx),
                    )
                }
            },
            other => return MathExpr::Index(Box::new(other), Box::new(idx)),
        }
    }
}

fn atom_expr(a: &Atom) -> MathExpr {
    match a {
        Atom::Var(r) => MathExpr::Var(r.clone()),
        Atom::Psi => MathExpr::Psi,
        Atom::Opaque(e) => e.clone(),
    }
}

/// Product of atoms for a monomial, times `coef` when it is not 1.
fn monomial_expr(m: &Monomial, coef: &BigInt) -> MathExpr {
    let mut factors: Vec<MathExpr> = Vec::new();
    if m.is_empty() || !coef.is_one() {
        factors.push(MathExpr::Int(coef.clone()));
    }
    for (atom, d) in m {
        for _ in 0..*d {
            factors.push(atom_expr(atom));
        }
    }
    let mut it = factors.into_iter();
    let first = it.next().expect("monomial has a factor");
    it.fold(first, MathExpr::mul)
}

fn from_poly(p: Poly) -> MathExpr {
    // Positive terms first, then negative ones; within each group the constant
    // goes last. Gives `10 - psi`, `x + 1`, `y - x`.
    let mut ordered: Vec<(&Monomial, &BigInt)> = Vec::new();
    for negative in [false, true] {
        let group = p
            .terms
            .iter()
            .filter(|(_, c)| c.is_negative() == negative);
        let (consts, rest): (Vec<_>, Vec<_>) = group.partition(|(m, _)| m.is_empty());
        ordered.extend(rest);
        ordered.extend(consts);
    }
    let mut acc: Option<MathExpr> = None;
    for (m, c) in ordered {
        let mag = c.abs();
        acc = Some(match acc {
            None if c.is_negative() && m.is_empty() => MathExpr::Int(c.clone()),
            None if c.is_negative() => MathExpr::neg(monomial_expr(m, &mag)),
            None => monomial_expr(m, c),
            Some(a) if c.is_negative() => MathExpr::sub(a, monomial_expr(m, &mag)),
            Some(a) => MathExpr::add(a, monomial_expr(m, c)),
        });
    }
    acc.unwrap_or_else(|| MathExpr::Int(BigInt::zero()))
}

/// Canonical form of a boolean expression: math operands normalized,
/// comparisons between constants folded, `&&`/`||` flattened with units
/// dropped and duplicates removed.
pub fn normalize_bool(b: &BoolExpr) -> BoolExpr {
    match b {
        BoolExpr::True | BoolExpr::False => b.clone(),
        BoolExpr::Cmp(op, l, r) => {
            let (l, r) = (normalize(l), normalize(r));
            fold_cmp(*op, &l, &r).unwrap_or(BoolExpr::Cmp(*op, l, r))
        }
        BoolExpr::Not(x) => match normalize_bool(x) {
            BoolExpr::True => BoolExpr::False,
            BoolExpr::False => BoolExpr::True,
            BoolExpr::Not(y) => *y,
            y => BoolExpr::Not(Box::new(y)),
        },
        BoolExpr::And(xs) => {
            let mut out: Vec<BoolExpr> = Vec::new();
            for x in xs {
                match normalize_bool(x) {
                    BoolExpr::False => return BoolExpr::False,
                    y => {
                        for c in y.conjuncts() {
                            if !out.contains(&c) {
                                out.push(c);
                            }
                        }
                    }
                }
            }
            if has_complementary(&out) {
                return BoolExpr::False;
            }
            BoolExpr::and_all(out)
        }
        BoolExpr::Or(xs) => {
            let mut out: Vec<BoolExpr> = Vec::new();
            for x in xs {
                match normalize_bool(x) {
                    BoolExpr::True => return BoolExpr::True,
                    BoolExpr::False => {}
                    BoolExpr::Or(ys) => {
                        for y in ys {
                            if !out.contains(&y) {
                                out.push(y);
                            }
                        }
                    }
                    y => {
                        if !out.contains(&y) {
                            out.push(y);
                        }
                    }
                }
            }
            if has_complementary(&out) {
                return BoolExpr::True;
            }
            BoolExpr::or_all(out)
        }
        BoolExpr::Pred(name, args) => {
            let args: Vec<MathExpr> = args.iter().map(normalize).collect();
            if let (Some(v), 1) = (args.first().and_then(|a| a.as_int()), args.len()) {
                let even = (v % 2u8).is_zero();
                match name.as_str() {
                    "even" => return if even { BoolExpr::True } else { BoolExpr::False },
                    "odd" => return if even { BoolExpr::False } else { BoolExpr::True },
                    _ => {}
                }
            }
            BoolExpr::Pred(name.clone(), args)
        }
    }
}

fn has_complementary(xs: &[BoolExpr]) -> bool {
    xs.iter().any(|x| match x {
        BoolExpr::Not(inner) => xs.contains(inner),
        _ => false,
    })
}

fn fold_cmp(op: CmpOp, l: &MathExpr, r: &MathExpr) -> Option<BoolExpr> {
    let truth = |t: bool| if t { BoolExpr::True } else { BoolExpr::False };
    if let (MathExpr::AddressOf(a), MathExpr::AddressOf(b)) = (l, r) {
        // distinct names never share an address
        return match op {
            CmpOp::Eq => Some(truth(a == b)),
            CmpOp::Ne => Some(truth(a != b)),
            _ => None,
        };
    }
    let diff = normalize(&MathExpr::sub(l.clone(), r.clone()));
    diff.as_int()
        .map(|d| truth(op.holds(d.cmp(&BigInt::zero()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> MathExpr {
        MathExpr::cur("x")
    }
    fn y() -> MathExpr {
        MathExpr::cur("y")
    }

    #[test]
    fn swap_reduction_step_collapses() {
        // (x+y) - ((x+y) - y) -> y
        let s = MathExpr::add(x(), y());
        let e = MathExpr::sub(s.clone(), MathExpr::sub(s, y()));
        assert_eq!(normalize(&e), y());
    }

    #[test]
    fn psi_cancels_as_free_symbol() {
        let e = MathExpr::sub(MathExpr::int(10), MathExpr::sub(MathExpr::int(10), MathExpr::Psi));
        assert_eq!(normalize(&e), MathExpr::Psi);
        let ten_minus_psi = normalize(&MathExpr::sub(MathExpr::int(10), MathExpr::Psi));
        assert_eq!(ten_minus_psi, MathExpr::sub(MathExpr::int(10), MathExpr::Psi));
    }

    #[test]
    fn additive_identity() {
        assert_eq!(normalize(&MathExpr::add(x(), MathExpr::int(0))), x());
    }

    #[test]
    fn collects_coefficients() {
        let i = || MathExpr::cur("i");
        let j = || MathExpr::cur("j");
        // (i + j) + (i + 2j) * 1
        let two_j = MathExpr::mul(MathExpr::int(2), j());
        let e = MathExpr::add(
            MathExpr::add(i(), j()),
            MathExpr::mul(MathExpr::add(i(), two_j), MathExpr::int(1)),
        );
        let expected = MathExpr::add(
            MathExpr::mul(MathExpr::int(2), i()),
            MathExpr::mul(MathExpr::int(3), j()),
        );
        assert_eq!(normalize(&e), expected);
    }

    #[test]
    fn deref_of_address_cancels() {
        let e = MathExpr::deref(MathExpr::addr("a"), 1, Marker::Initial);
        assert_eq!(normalize(&e), MathExpr::init("a"));
        let e2 = MathExpr::deref(MathExpr::addr("b"), 2, Marker::Current);
        assert_eq!(normalize(&e2), MathExpr::deref(MathExpr::cur("b"), 1, Marker::Current));
    }

    #[test]
    fn element_read_through_updates() {
        let a = MathExpr::init("A");
        let upd = MathExpr::Update {
            array: Box::new(a.clone()),
            index: Box::new(MathExpr::int(0)),
            value: Box::new(MathExpr::int(5)),
        };
        assert_eq!(normalize(&MathExpr::index(upd.clone(), MathExpr::int(0))), MathExpr::int(5));
        assert_eq!(
            normalize(&MathExpr::index(upd, MathExpr::int(1))),
            MathExpr::index(a, MathExpr::int(1))
        );
    }

    #[test]
    fn bool_folding() {
        let gt = BoolExpr::cmp(CmpOp::Gt, MathExpr::int(2), MathExpr::int(1));
        assert_eq!(normalize_bool(&gt), BoolExpr::True);
        let ngt = BoolExpr::not(gt);
        assert_eq!(normalize_bool(&ngt), BoolExpr::False);
        let same = BoolExpr::cmp(CmpOp::Eq, MathExpr::addr("a"), MathExpr::addr("a"));
        assert_eq!(normalize_bool(&same), BoolExpr::True);
        let c = BoolExpr::cmp(CmpOp::Gt, x(), y());
        let contra = BoolExpr::and_all([c.clone(), BoolExpr::not(c.clone())]);
        assert_eq!(normalize_bool(&contra), BoolExpr::False);
        let taut = BoolExpr::or_all([c.clone(), BoolExpr::not(c)]);
        assert_eq!(normalize_bool(&taut), BoolExpr::True);
    }
}
