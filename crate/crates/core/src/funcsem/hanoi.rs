use std::fmt;

use serde::Serialize;

use super::FuncError;
use crate::par;

pub const MAX_HANOI_DISKS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Pole {
    A,
    B,
    C,
}

impl fmt::Display for Pole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pole::A => "A",
            Pole::B => "B",
            Pole::C => "C",
        })
    }
}

/// Move the top disk of `from` onto `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Move {
    pub from: Pole,
    pub to: Pole,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

fn check_disks(n: u32) -> Result<u64, FuncError> {
    if !(1..=MAX_HANOI_DISKS).contains(&n) {
        return Err(FuncError::SizeLimit(n));
    }
    Ok((1u64 << n) - 1)
}

/// Moves for `n` disks from A to C via B, in order.
pub fn hanoi_sequence(n: u32) -> Result<Vec<Move>, FuncError> {
    let len = check_disks(n)?;
    let mut out = Vec::with_capacity(len as usize);
    // Explicit stack: (disks, from, via, to, expanded)
    let mut stack = vec![(n, Pole::A, Pole::B, Pole::C, false)];
    while let Some((k, a, b, c, expanded)) = stack.pop() {
        if k == 1 || expanded {
            out.push(Move { from: a, to: c });
            continue;
        }
        stack.push((k - 1, b, a, c, false));
        stack.push((k, a, b, c, true));
        stack.push((k - 1, a, c, b, false));
    }
    Ok(out)
}

/// The `k`-th move (1-based) without generating the others.
pub fn hanoi_nth_move(n: u32, k: u64) -> Result<Move, FuncError> {
    let max = check_disks(n)?;
    if k == 0 || k > max {
        return Err(FuncError::OutOfRange { n: k, max });
    }
    let t = k.trailing_zeros();
    let m = (k >> (t + 1)) % 3;
    let mut triple = if (n - t) % 2 == 1 {
        (Pole::A, Pole::B, Pole::C)
    } else {
        (Pole::A, Pole::C, Pole::B)
    };
    for _ in 0..m {
        triple = (triple.2, triple.0, triple.1);
    }
    Ok(Move {
        from: triple.0,
        to: triple.2,
    })
}

/// Every move computed independently from its index.
pub fn hanoi_moves_parallel(n: u32, parallel: bool) -> Result<Vec<Move>, FuncError> {
    let len = check_disks(n)?;
    par::map_indexed(len as usize, parallel, |i| hanoi_nth_move(n, i as u64 + 1))
        .into_iter()
        .collect()
}
