use std::collections::BTreeMap;

use super::lexer::{lex, Tok, Token};
use super::validate::validate;
use super::{
    CallKind, Decl, LoopCount, OENode, ParseError, Program, SemBool, Target, Term, VarType, WriteOp,
};
use crate::expr::{BoolExpr, CmpOp, Marker, MathExpr, VarRef};

const KEYWORDS: &[&str] = &[
    "var", "int", "ptr", "skip", "call", "until", "psi", "true", "false", "when",
];

/// How marked references are read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RefMode {
    /// Program text: only plain names.
    Program,
    /// Loop conditions and free-standing expressions: `~x`, `x'` allowed,
    /// plain names are current values.
    Marked,
    /// Semantic predicates: plain names are read-before values.
    Semantic,
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    mode: RefMode,
    pub(crate) first_use: BTreeMap<String, (usize, usize)>,
}

type PResult<T> = Result<T, ParseError>;

/// Parses and validates an OE program.
pub fn parse(text: &str) -> PResult<Program> {
    let mut p = Parser::new(text, RefMode::Program)?;
    let program = p.program()?;
    validate(&program, &p.first_use)
}

/// A free-standing math expression; `~x` and `x'` are accepted.
pub fn parse_math(text: &str) -> PResult<MathExpr> {
    let mut p = Parser::new(text, RefMode::Marked)?;
    let e = p.mexpr()?;
    p.expect_eof()?;
    Ok(e)
}

/// A free-standing boolean expression; `~x` and `x'` are accepted.
pub fn parse_bool(text: &str) -> PResult<BoolExpr> {
    let mut p = Parser::new(text, RefMode::Marked)?;
    let e = p.bexpr()?;
    p.expect_eof()?;
    Ok(e)
}

/// A boolean over semantic functions: plain names are initial values.
pub fn parse_sem_bool(text: &str) -> PResult<BoolExpr> {
    let mut p = Parser::new(text, RefMode::Semantic)?;
    let e = p.bexpr()?;
    p.expect_eof()?;
    Ok(e)
}

/// One branch of a rendered conditional semantic predicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpText {
    pub guard: BoolExpr,
    pub eqs: Vec<(String, MathExpr)>,
    pub residuals: Vec<BoolExpr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CspText {
    pub branches: Vec<SpText>,
}

/// Parses the text rendering of a conditional semantic predicate:
/// `x' = y & y' = x when x > y (+) x' = x & y' = y when !(x > y)`.
pub fn parse_csp_text(text: &str) -> PResult<CspText> {
    let mut p = Parser::new(text, RefMode::Semantic)?;
    let mut branches = vec![p.sp_branch()?];
    while p.eat_tok(&Tok::XorSep) {
        branches.push(p.sp_branch()?);
    }
    p.expect_eof()?;
    Ok(CspText { branches })
}

impl Parser {
    fn new(text: &str, mode: RefMode) -> PResult<Self> {
        Ok(Parser {
            toks: lex(text)?,
            pos: 0,
            mode,
            first_use: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_tok(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::syntax(self.here(), expected, self.peek().describe()))
    }

    fn expect(&mut self, s: &str) -> PResult<()> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.err(&format!("`{s}`"))
        }
    }

    fn expect_eof(&mut self) -> PResult<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.err("end of input")
        }
    }

    fn name(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let pos = self.here();
                self.first_use.entry(s.clone()).or_insert(pos);
                self.bump();
                Ok(s)
            }
            _ => self.err("a name"),
        }
    }

    fn is_name(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
    }

    // ---- programs ----

    fn program(&mut self) -> PResult<Program> {
        let mut decls = Vec::new();
        while self.is_kw("var") {
            decls.push(self.decl()?);
        }
        let body = if *self.peek() == Tok::Eof {
            OENode::Skip
        } else {
            self.seq()?
        };
        self.expect_eof()?;
        Ok(Program { decls, body })
    }

    fn decl(&mut self) -> PResult<Decl> {
        self.expect_kw("var")?;
        let name = self.name()?;
        self.expect(":")?;
        let ty = if self.eat_kw("int") {
            if self.eat("[") {
                if self.eat("]") {
                    self.expect(";")?;
                    return Ok(Decl {
                        name,
                        ty: VarType::Array(None),
                    });
                }
                let n = match self.bump() {
                    Tok::Int(v) => usize::try_from(v).map_err(|_| {
                        ParseError::Type(format!("array length of `{name}` is too large"))
                    })?,
                    _ => return self.err("an array length"),
                };
                self.expect("]")?;
                VarType::Array(Some(n))
            } else {
                VarType::Int
            }
        } else if self.eat_kw("ptr") {
            if self.eat_kw("ptr") {
                self.expect_kw("int")?;
                VarType::Ptr(2)
            } else {
                self.expect_kw("int")?;
                VarType::Ptr(1)
            }
        } else {
            return self.err("a type (`int`, `ptr int`, `ptr ptr int`, `int[N]`)");
        };
        self.expect(";")?;
        Ok(Decl { name, ty })
    }

    fn seq(&mut self) -> PResult<OENode> {
        let mut items = vec![self.item()?];
        while self.eat(";") {
            if matches!(self.peek(), Tok::Eof) || self.is_sym(")") || self.is_sym("||") {
                break;
            }
            items.push(self.item()?);
        }
        Ok(OENode::seq(items))
    }

    fn item(&mut self) -> PResult<OENode> {
        let mut node = self.atom()?;
        loop {
            if self.eat("^") {
                node = self.power(node)?;
            } else if self.is_sym("[") {
                self.bump();
                let g = self.bexpr()?;
                self.expect("]")?;
                node = OENode::Guarded(Box::new(node), g);
            } else {
                return Ok(node);
            }
        }
    }

    fn power(&mut self, body: OENode) -> PResult<OENode> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                let n = u64::try_from(v)
                    .map_err(|_| ParseError::Type("loop count is too large".into()))?;
                Ok(OENode::LoopCount(Box::new(body), LoopCount::Literal(n)))
            }
            Tok::Sym("{") => {
                self.bump();
                self.expect_kw("until")?;
                let pos = self.here();
                let saved = self.mode;
                self.mode = RefMode::Marked;
                let cond = self.bexpr();
                self.mode = saved;
                let cond = SemBool::new(cond?);
                self.expect("}")?;
                if body == OENode::Skip {
                    return Ok(OENode::WaitLoop(cond));
                }
                if !cond.cond.markers().contains(&Marker::Final) {
                    return Err(ParseError::Marker {
                        line: pos.0,
                        col: pos.1,
                        message: "an until-condition must mention at least one final value `x'`"
                            .into(),
                    });
                }
                Ok(OENode::LoopUntil(Box::new(body), cond))
            }
            _ if self.is_name() => {
                let n = self.name()?;
                Ok(OENode::LoopCount(Box::new(body), LoopCount::Symbolic(n)))
            }
            _ => self.err("a loop count or `{until ...}`"),
        }
    }

    fn atom(&mut self) -> PResult<OENode> {
        if self.eat_kw("skip") {
            return Ok(OENode::Skip);
        }
        if self.eat_kw("call") {
            let name = match self.bump() {
                Tok::Ident(s) => s,
                _ => return self.err("a function name"),
            };
            self.expect("(")?;
            let args = self.args()?;
            return Ok(OENode::Call {
                name,
                args,
                kind: CallKind::ByName,
            });
        }
        if self.eat("(") {
            let inner = self.seq()?;
            if self.eat("||") {
                let right = self.seq()?;
                self.expect(")")?;
                return Ok(OENode::Par(Box::new(inner), Box::new(right)));
            }
            self.expect(")")?;
            return Ok(inner);
        }
        if self.is_sym("*") || self.is_name() {
            return self.term().map(OENode::Term);
        }
        self.err("a term, `skip`, `call` or `(`")
    }

    fn term(&mut self) -> PResult<Term> {
        let mut writes = vec![self.simple()?];
        while self.eat(",") {
            writes.push(self.simple()?);
        }
        Ok(Term { writes })
    }

    fn simple(&mut self) -> PResult<WriteOp> {
        let target = if self.is_sym("*") {
            let mut depth = 0;
            while self.eat("*") {
                depth += 1;
            }
            Target::Deref(self.name()?, depth)
        } else {
            let name = self.name()?;
            if self.eat("[") {
                let idx = self.mexpr()?;
                self.expect("]")?;
                Target::Elem(name, idx)
            } else {
                Target::Var(name)
            }
        };
        self.expect("!")?;
        self.expect("(")?;
        let payload = self.mexpr()?;
        self.expect(")")?;
        let guard = if self.eat("[") {
            let g = self.bexpr()?;
            self.expect("]")?;
            Some(g)
        } else {
            None
        };
        Ok(WriteOp {
            target,
            payload,
            guard,
        })
    }

    // ---- expressions ----

    fn default_marker(&self) -> Marker {
        match self.mode {
            RefMode::Semantic => Marker::Initial,
            _ => Marker::Current,
        }
    }

    fn var_ref(&mut self) -> PResult<VarRef> {
        let pos = self.here();
        let tilde = self.eat("~");
        let name = self.name()?;
        let prime = self.eat("'");
        let marker = match (tilde, prime) {
            (true, true) => {
                return Err(ParseError::Marker {
                    line: pos.0,
                    col: pos.1,
                    message: format!("`~{name}'` combines two markers"),
                })
            }
            (true, false) => Marker::Initial,
            (false, true) => Marker::Final,
            (false, false) => self.default_marker(),
        };
        if self.mode == RefMode::Program && (tilde || prime) {
            return Err(ParseError::Marker {
                line: pos.0,
                col: pos.1,
                message: format!(
                    "markers on `{name}` are only allowed inside `^{{until ...}}` conditions"
                ),
            });
        }
        Ok(VarRef::new(name, marker))
    }

    pub(crate) fn mexpr(&mut self) -> PResult<MathExpr> {
        let mut acc = self.product()?;
        loop {
            if self.eat("+") {
                acc = MathExpr::add(acc, self.product()?);
            } else if self.eat("-") {
                acc = MathExpr::sub(acc, self.product()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> PResult<MathExpr> {
        let mut acc = self.unary()?;
        while self.eat("*") {
            acc = MathExpr::mul(acc, self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> PResult<MathExpr> {
        if self.eat("-") {
            return Ok(MathExpr::neg(self.unary()?));
        }
        if self.is_sym("*") {
            let mut depth = 0;
            while self.eat("*") {
                depth += 1;
            }
            if self.eat("(") {
                let inner = self.mexpr()?;
                self.expect(")")?;
                return Ok(MathExpr::deref(inner, depth, self.default_marker()));
            }
            let r = self.var_ref()?;
            let at = r.marker;
            return Ok(MathExpr::deref(MathExpr::Var(r), depth, at));
        }
        if self.is_sym("&") {
            let pos = self.here();
            self.bump();
            if !self.is_name() {
                return self.err("a variable name after `&`");
            }
            let name = self.name()?;
            if self.is_sym("'") {
                return Err(ParseError::Marker {
                    line: pos.0,
                    col: pos.1,
                    message: format!(
                        "`&{name}'` is illegal: the operand of `&` is a variable name, not a value"
                    ),
                });
            }
            return Ok(MathExpr::AddressOf(name));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<MathExpr> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(MathExpr::Int(v))
            }
            Tok::Ident(s) if s == "psi" => {
                self.bump();
                Ok(MathExpr::Psi)
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.mexpr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(s)
                if !KEYWORDS.contains(&s.as_str()) && *self.peek_at(1) == Tok::Sym("(") =>
            {
                self.bump();
                self.bump();
                Ok(MathExpr::Apply(s, self.args()?))
            }
            Tok::Sym("~") | Tok::Ident(_) => {
                let r = self.var_ref()?;
                let base = MathExpr::Var(r);
                if self.eat("[") {
                    let idx = self.mexpr()?;
                    if self.eat("..") {
                        let hi = self.mexpr()?;
                        self.expect("]")?;
                        return Ok(MathExpr::Slice(Box::new(base), Box::new(idx), Box::new(hi)));
                    }
                    self.expect("]")?;
                    return Ok(MathExpr::index(base, idx));
                }
                Ok(base)
            }
            _ => self.err("an expression"),
        }
    }

    /// Arguments after the opening parenthesis, through the closing one.
    fn args(&mut self) -> PResult<Vec<MathExpr>> {
        let mut args = Vec::new();
        if self.eat(")") {
            return Ok(args);
        }
        loop {
            args.push(self.mexpr()?);
            if self.eat(")") {
                return Ok(args);
            }
            self.expect(",")?;
        }
    }

    pub(crate) fn bexpr(&mut self) -> PResult<BoolExpr> {
        let first = self.band()?;
        if !self.is_sym("||") {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.eat("||") {
            parts.push(self.band()?);
        }
        Ok(BoolExpr::Or(parts))
    }

    fn band(&mut self) -> PResult<BoolExpr> {
        let first = self.bnot()?;
        if !self.is_sym("&&") {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.eat("&&") {
            parts.push(self.bnot()?);
        }
        Ok(BoolExpr::And(parts))
    }

    fn bnot(&mut self) -> PResult<BoolExpr> {
        if self.eat("!") {
            return Ok(BoolExpr::not(self.bnot()?));
        }
        self.batom()
    }

    fn batom(&mut self) -> PResult<BoolExpr> {
        if self.eat_kw("true") {
            return Ok(BoolExpr::True);
        }
        if self.eat_kw("false") {
            return Ok(BoolExpr::False);
        }
        if self.is_sym("(") {
            // `(b)` or a comparison whose left operand is parenthesized
            let saved = (self.pos, self.first_use.clone());
            self.bump();
            if let Ok(b) = self.bexpr() {
                if self.eat(")") && !self.at_cmp_or_arith() {
                    return Ok(b);
                }
            }
            self.pos = saved.0;
            self.first_use = saved.1;
        }
        let lhs = self.mexpr()?;
        if let Some(op) = self.cmp_op() {
            self.bump();
            let rhs = self.mexpr()?;
            return Ok(BoolExpr::Cmp(op, lhs, rhs));
        }
        match lhs {
            MathExpr::Apply(name, args) => Ok(BoolExpr::Pred(name, args)),
            _ => self.err("a comparison operator"),
        }
    }

    fn cmp_op(&self) -> Option<CmpOp> {
        match self.peek() {
            Tok::Sym("=") => Some(CmpOp::Eq),
            Tok::Sym("!=") => Some(CmpOp::Ne),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            _ => None,
        }
    }

    fn at_cmp_or_arith(&self) -> bool {
        self.cmp_op().is_some() || self.is_sym("+") || self.is_sym("-") || self.is_sym("*")
    }

    // ---- rendered predicates ----

    fn sp_branch(&mut self) -> PResult<SpText> {
        let mut eqs = Vec::new();
        let mut residuals = Vec::new();
        if !self.eat_kw("true") {
            loop {
                match self.bnot()? {
                    BoolExpr::Cmp(CmpOp::Eq, MathExpr::Var(r), rhs)
                        if r.marker == Marker::Final && !rhs.markers().contains(&Marker::Final) =>
                    {
                        eqs.push((r.name, rhs))
                    }
                    other => residuals.push(other),
                }
                if !self.eat("&") {
                    break;
                }
            }
        }
        let guard = if self.eat_kw("when") {
            self.bexpr()?
        } else {
            BoolExpr::True
        };
        Ok(SpText {
            guard,
            eqs,
            residuals,
        })
    }
}
