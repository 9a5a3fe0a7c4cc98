use std::fmt;

use super::{ArithOp, BoolExpr, Marker, MathExpr, VarRef};

/// How markers are spelled.
///
/// In program text a plain name is the current value, `~v` the read-before
/// value and `v'` the final value. In semantic predicates every right-hand
/// side is over initial values, so read-before references print bare.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrintMode {
    Program,
    Semantic,
}

pub struct MathDisplay<'a> {
    expr: &'a MathExpr,
    mode: PrintMode,
}

pub struct BoolDisplay<'a> {
    expr: &'a BoolExpr,
    mode: PrintMode,
}

impl MathExpr {
    pub fn display(&self, mode: PrintMode) -> MathDisplay<'_> {
        MathDisplay { expr: self, mode }
    }

    /// Rendering used inside semantic predicates.
    pub fn sem(&self) -> String {
        self.display(PrintMode::Semantic).to_string()
    }
}

impl BoolExpr {
    pub fn display(&self, mode: PrintMode) -> BoolDisplay<'_> {
        BoolDisplay { expr: self, mode }
    }

    pub fn sem(&self) -> String {
        self.display(PrintMode::Semantic).to_string()
    }
}

impl fmt::Display for MathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_math(f, self, PrintMode::Program, 0)
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bool(f, self, PrintMode::Program, 0)
    }
}

impl fmt::Display for MathDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_math(f, self.expr, self.mode, 0)
    }
}

impl fmt::Display for BoolDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_bool(f, self.expr, self.mode, 0)
    }
}

pub(crate) fn write_ref(f: &mut fmt::Formatter<'_>, r: &VarRef, mode: PrintMode) -> fmt::Result {
    match (r.marker, mode) {
        (Marker::Final, _) => write!(f, "{}'", r.name),
        (Marker::Initial, PrintMode::Program) => write!(f, "~{}", r.name),
        _ => write!(f, "{}", r.name),
    }
}

// Precedence levels: 1 sum, 2 product, 3 unary, 4 atom.
fn write_math(f: &mut fmt::Formatter<'_>, e: &MathExpr, mode: PrintMode, ctx: u8) -> fmt::Result {
    let level = match e {
        MathExpr::Bin(ArithOp::Add | ArithOp::Sub, ..) => 1,
        MathExpr::Bin(ArithOp::Mul, ..) => 2,
        MathExpr::Neg(_) | MathExpr::Deref { .. } => 3,
        MathExpr::Int(v) if v.sign() == num_bigint::Sign::Minus => 3,
        _ => 4,
    };
    let paren = level < ctx;
    if paren {
        f.write_str("(")?;
    }
    match e {
        MathExpr::Int(v) => write!(f, "{v}")?,
        MathExpr::Psi => f.write_str("psi")?,
        MathExpr::Var(r) => write_ref(f, r, mode)?,
        MathExpr::AddressOf(n) => write!(f, "&{n}")?,
        MathExpr::Deref { ptr, depth, at } => {
            for _ in 0..*depth {
                f.write_str("*")?;
            }
            match ptr.as_ref() {
                MathExpr::Var(r) if r.marker == *at => write_ref(f, r, mode)?,
                other => {
                    f.write_str("(")?;
                    write_math(f, other, mode, 0)?;
                    f.write_str(")")?;
                }
            }
        }
        MathExpr::Neg(x) => {
            f.write_str("-")?;
            // `--x` would read as two prefix minus signs anyway, but keep it explicit
            let inner = if matches!(**x, MathExpr::Neg(_)) { 4 } else { 3 };
            write_math(f, x, mode, inner)?;
        }
        MathExpr::Bin(op, l, r) => {
            let (sym, ll, rl) = match op {
                ArithOp::Add => (" + ", 1, 2),
                ArithOp::Sub => (" - ", 1, 2),
                ArithOp::Mul => ("*", 2, 3),
            };
            write_math(f, l, mode, ll)?;
            f.write_str(sym)?;
            write_math(f, r, mode, rl)?;
        }
        MathExpr::Apply(name, args) => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_math(f, a, mode, 0)?;
            }
            f.write_str(")")?;
        }
        MathExpr::Index(arr, idx) => {
            write_math(f, arr, mode, 4)?;
            f.write_str("[")?;
            write_math(f, idx, mode, 0)?;
            f.write_str("]")?;
        }
        MathExpr::Slice(arr, lo, hi) => {
            write_math(f, arr, mode, 4)?;
            f.write_str("[")?;
            write_math(f, lo, mode, 0)?;
            f.write_str("..")?;
            write_math(f, hi, mode, 0)?;
            f.write_str("]")?;
        }
        MathExpr::Update {
            array,
            index,
            value,
        } => {
            f.write_str("upd(")?;
            write_math(f, array, mode, 0)?;
            f.write_str(", ")?;
            write_math(f, index, mode, 0)?;
            f.write_str(", ")?;
            write_math(f, value, mode, 0)?;
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

// Precedence levels: 1 or, 2 and, 3 not, 4 atom.
fn write_bool(f: &mut fmt::Formatter<'_>, b: &BoolExpr, mode: PrintMode, ctx: u8) -> fmt::Result {
    let level = match b {
        BoolExpr::Or(xs) if xs.len() > 1 => 1,
        BoolExpr::And(xs) if xs.len() > 1 => 2,
        BoolExpr::Not(_) => 3,
        _ => 4,
    };
    let paren = level < ctx;
    if paren {
        f.write_str("(")?;
    }
    match b {
        BoolExpr::True => f.write_str("true")?,
        BoolExpr::False => f.write_str("false")?,
        BoolExpr::Cmp(op, l, r) => {
            write_math(f, l, mode, 0)?;
            write!(f, " {} ", op.symbol())?;
            write_math(f, r, mode, 0)?;
        }
        BoolExpr::Not(x) => {
            f.write_str("!")?;
            let inner = match **x {
                BoolExpr::Cmp(..) => 5,
                _ => 3,
            };
            write_bool(f, x, mode, inner)?;
        }
        BoolExpr::And(xs) | BoolExpr::Or(xs) => {
            let (sym, sub) = if matches!(b, BoolExpr::And(_)) {
                (" && ", 3)
            } else {
                (" || ", 2)
            };
            if xs.is_empty() {
                f.write_str(if matches!(b, BoolExpr::And(_)) { "true" } else { "false" })?;
            }
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(sym)?;
                }
                write_bool(f, x, mode, sub)?;
            }
        }
        BoolExpr::Pred(name, args) => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_math(f, a, mode, 0)?;
            }
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CmpOp;

    #[test]
    fn markers_by_mode() {
        let e = MathExpr::sub(MathExpr::fin("x"), MathExpr::init("x"));
        assert_eq!(e.display(PrintMode::Program).to_string(), "x' - ~x");
        assert_eq!(e.sem(), "x' - x");
    }

    #[test]
    fn parenthesizes_by_precedence() {
        let x = MathExpr::cur("x");
        let y = MathExpr::cur("y");
        let e = MathExpr::mul(MathExpr::add(x.clone(), y.clone()), MathExpr::neg(y.clone()));
        assert_eq!(e.to_string(), "(x + y)*-y");
        let e2 = MathExpr::sub(x.clone(), MathExpr::sub(y.clone(), x.clone()));
        assert_eq!(e2.to_string(), "x - (y - x)");
        let b = BoolExpr::not(BoolExpr::cmp(CmpOp::Gt, x, y));
        assert_eq!(b.to_string(), "!(x > y)");
    }
}
