use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::expr::{BoolExpr, CmpOp, MathExpr};
use crate::syntax::{
    parse, pretty_print, Decl, LoopCount, OENode, Program, Target, Term, VarType, WriteOp,
};

const NAMES: [&str; 4] = ["x", "y", "z", "w"];

#[derive(Clone, Copy, Debug)]
pub struct FuzzOptions {
    pub count: usize,
    /// Maximum guard nesting.
    pub depth: usize,
    pub seed: u64,
    /// Allow bounded `^N` loops.
    pub loops: bool,
    /// Allow `(p || q)` of independent writes.
    pub parallel: bool,
}

/// Loop-free programs over 2 to 4 int variables.
pub fn fuzz_programs(count: usize, depth: usize, seed: u64) -> Vec<Program> {
    fuzz_programs_with(&FuzzOptions {
        count,
        depth,
        seed,
        loops: false,
        parallel: true,
    })
}

pub fn fuzz_programs_with(opts: &FuzzOptions) -> Vec<Program> {
    (0..opts.count)
        .map(|i| {
            let mut g = Gen {
                rng: crate::expr::sample_rng(opts.seed ^ 0x6f65_6675_7a7a, i),
                vars: Vec::new(),
                opts: *opts,
            };
            let nvars = g.rng.gen_range(2..=4);
            g.vars = NAMES[..nvars].to_vec();
            let body = g.seq(opts.depth);
            let decls = g
                .vars
                .iter()
                .map(|v| Decl {
                    name: v.to_string(),
                    ty: VarType::Int,
                })
                .collect();
            let p = Program { decls, body };
            parse(&pretty_print(&p)).expect("generated programs are valid")
        })
        .collect()
}

struct Gen {
    rng: ChaCha8Rng,
    vars: Vec<&'static str>,
    opts: FuzzOptions,
}

impl Gen {
    fn var(&mut self) -> &'static str {
        self.vars.choose(&mut self.rng).copied().expect("nonempty")
    }

    fn math(&mut self, depth: usize, allowed: &[&'static str]) -> MathExpr {
        let leaf = depth == 0 || self.rng.gen_bool(0.4);
        if leaf {
            return if self.rng.gen_bool(0.65) && !allowed.is_empty() {
                MathExpr::cur(allowed.choose(&mut self.rng).expect("nonempty"))
            } else {
                MathExpr::int(self.rng.gen_range(0..=5))
            };
        }
        let l = self.math(depth - 1, allowed);
        let r = self.math(depth - 1, allowed);
        match self.rng.gen_range(0..7) {
            0 | 1 | 2 => MathExpr::add(l, r),
            3 | 4 => MathExpr::sub(l, r),
            5 => MathExpr::mul(l, r),
            _ => MathExpr::neg(l),
        }
    }

    fn cmp(&mut self, allowed: &[&'static str]) -> BoolExpr {
        let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
            .choose(&mut self.rng)
            .expect("nonempty");
        let l = self.math(1, allowed);
        let r = self.math(1, allowed);
        BoolExpr::cmp(op, l, r)
    }

    fn guard(&mut self) -> BoolExpr {
        let vars = self.vars.clone();
        match self.rng.gen_range(0..6) {
            0 => BoolExpr::not(self.cmp(&vars)),
            1 => BoolExpr::And(vec![self.cmp(&vars), self.cmp(&vars)]),
            2 => BoolExpr::Or(vec![self.cmp(&vars), self.cmp(&vars)]),
            3 => BoolExpr::Pred("even".into(), vec![self.math(1, &vars)]),
            _ => self.cmp(&vars),
        }
    }

    /// A term: plain writes to distinct variables, or one conditional chain
    /// with exclusive guards `b1`, `!b1 && b2`, ...
    fn term(&mut self, depth: usize) -> Term {
        let vars = self.vars.clone();
        if depth > 0 && self.rng.gen_bool(0.35) {
            let v = self.var();
            let n = self.rng.gen_range(1..=3);
            let mut prev: Vec<BoolExpr> = Vec::new();
            let mut writes = Vec::new();
            for _ in 0..n {
                let b = self.guard();
                let mut parts: Vec<BoolExpr> = prev.iter().map(|p| BoolExpr::not(p.clone())).collect();
                parts.push(b.clone());
                let g = if parts.len() == 1 {
                    parts.pop().unwrap()
                } else {
                    BoolExpr::And(parts)
                };
                prev.push(b);
                writes.push(WriteOp {
                    target: Target::Var(v.to_string()),
                    payload: self.math(2, &vars),
                    guard: Some(g),
                });
            }
            return Term { writes };
        }
        let mut targets = vars.clone();
        targets.shuffle(&mut self.rng);
        let k = self.rng.gen_range(1..=targets.len().min(3));
        let writes = targets[..k]
            .iter()
            .map(|t| WriteOp {
                target: Target::Var(t.to_string()),
                payload: self.math(2, &vars),
                guard: None,
            })
            .collect();
        Term { writes }
    }

    fn item(&mut self, depth: usize) -> OENode {
        let roll = self.rng.gen_range(0..10);
        if depth > 0 && roll < 2 {
            let body = self.seq(depth - 1);
            let g = self.guard();
            return OENode::Guarded(Box::new(body), g);
        }
        if depth > 0 && roll == 2 && self.opts.loops {
            let body = self.seq(depth - 1);
            let k = self.rng.gen_range(0..=3);
            return OENode::LoopCount(Box::new(body), LoopCount::Literal(k));
        }
        if roll == 3 && self.opts.parallel && self.vars.len() >= 3 {
            let mut vs = self.vars.clone();
            vs.shuffle(&mut self.rng);
            let (a, b) = (vs[0], vs[1]);
            let rest: Vec<&'static str> = vs[2..].to_vec();
            let mut la = rest.clone();
            la.push(a);
            let mut lb = rest;
            lb.push(b);
            let l = OENode::Term(Term {
                writes: vec![WriteOp {
                    target: Target::Var(a.to_string()),
                    payload: self.math(2, &la),
                    guard: None,
                }],
            });
            let r = OENode::Term(Term {
                writes: vec![WriteOp {
                    target: Target::Var(b.to_string()),
                    payload: self.math(2, &lb),
                    guard: None,
                }],
            });
            return OENode::Par(Box::new(l), Box::new(r));
        }
        if roll == 4 {
            return OENode::Skip;
        }
        OENode::Term(self.term(depth))
    }

    fn seq(&mut self, depth: usize) -> OENode {
        let n = self.rng.gen_range(1..=4);
        OENode::seq((0..n).map(|_| self.item(depth)).collect())
    }
}

/// Greedily shrinks `p` while `still_fails` keeps returning true.
pub fn minimize(p: &Program, still_fails: &dyn Fn(&Program) -> bool) -> Program {
    let mut best = p.clone();
    loop {
        let candidates = shrink(&best.body);
        let next = candidates.into_iter().find_map(|body| {
            let cand = Program {
                decls: best.decls.clone(),
                body,
            };
            let text = pretty_print(&cand);
            let reparsed = parse(&text).ok()?;
            still_fails(&reparsed).then_some(reparsed)
        });
        match next {
            Some(n) => best = n,
            None => return best,
        }
    }
}

/// Strictly smaller variants of a node.
fn shrink(n: &OENode) -> Vec<OENode> {
    let mut out = Vec::new();
    match n {
        OENode::Seq(items) => {
            for i in 0..items.len() {
                let mut rest = items.clone();
                rest.remove(i);
                out.push(OENode::seq(rest));
            }
            for (i, it) in items.iter().enumerate() {
                for s in shrink(it) {
                    let mut v = items.clone();
                    v[i] = s;
                    out.push(OENode::seq(v));
                }
            }
        }
        OENode::Term(t) if t.writes.len() > 1 => {
            for i in 0..t.writes.len() {
                let mut w = t.writes.clone();
                w.remove(i);
                out.push(OENode::Term(Term { writes: w }));
            }
        }
        OENode::Term(_) => out.push(OENode::Skip),
        OENode::Guarded(body, _) | OENode::LoopCount(body, _) | OENode::LoopUntil(body, _) => {
            out.push((**body).clone());
            out.push(OENode::Skip);
        }
        OENode::Par(l, r) => {
            out.push((**l).clone());
            out.push((**r).clone());
        }
        _ => {}
    }
    out
}
