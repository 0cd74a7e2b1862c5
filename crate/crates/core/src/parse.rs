//! Recursive-descent parser for the concrete formula and program syntax.
//!
//! ```text
//! formula  := equiv
//! equiv    := implies ("<->" equiv)?
//! implies  := or ("->" implies)?
//! or       := and ("|" and)*
//! and      := unary ("&" unary)*
//! unary    := "!" unary | ("\forall" | "\exists") var "."? unary
//!           | "[" program "]" unary | "<" program ">" unary
//!           | "true" | "false" | term cmp term | "(" formula ")"
//! program  := seq ("++" program)?
//! seq      := atom (";" atom)* ";"?
//! atom     := "{" ode "}" "*"? | "{" program "}" "*"? | "?" unary
//!           | ident ":=" ("*" | term)
//! ```
//!
//! Post-state variables are written `x_post`. Inside `<...>` a bare `>` closes
//! the modality; parenthesize comparisons that need it.

use crate::ast::{CmpOp, Formula, Program, Term, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Forall,
    Exists,
    Prime,
    Plus,
    PlusPlus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Lt,
    Le,
    EqTok,
    Ge,
    Gt,
    Neq,
    And,
    Or,
    Arrow,
    DArrow,
    Bang,
    Comma,
    Semi,
    Assign,
    Question,
    Dot,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| Error::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let peek = |k: usize| chars.get(i + k).copied().unwrap_or('\0');
        let (tok, len) = if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            (Tok::Ident(chars[i..j].iter().collect()), j - i)
        } else if c.is_ascii_digit() || (c == '.' && peek(1).is_ascii_digit()) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '.' {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| err(line, col, format!("bad number `{text}`")))?;
            (Tok::Num(v), j - i)
        } else if c == '\\' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_ascii_alphabetic() {
                j += 1;
            }
            let word: String = chars[i + 1..j].iter().collect();
            match word.as_str() {
                "forall" => (Tok::Forall, j - i),
                "exists" => (Tok::Exists, j - i),
                _ => return Err(err(line, col, format!("unknown operator `\\{word}`"))),
            }
        } else {
            match (c, peek(1), peek(2)) {
                ('<', '-', '>') => (Tok::DArrow, 3),
                ('<', '=', _) => (Tok::Le, 2),
                ('<', _, _) => (Tok::Lt, 1),
                ('>', '=', _) => (Tok::Ge, 2),
                ('>', _, _) => (Tok::Gt, 1),
                ('-', '>', _) => (Tok::Arrow, 2),
                ('-', _, _) => (Tok::Minus, 1),
                ('+', '+', _) => (Tok::PlusPlus, 2),
                ('+', _, _) => (Tok::Plus, 1),
                ('!', '=', _) => (Tok::Neq, 2),
                ('!', _, _) => (Tok::Bang, 1),
                (':', '=', _) => (Tok::Assign, 2),
                ('=', _, _) => (Tok::EqTok, 1),
                ('*', _, _) => (Tok::Star, 1),
                ('/', _, _) => (Tok::Slash, 1),
                ('^', _, _) => (Tok::Caret, 1),
                ('(', _, _) => (Tok::LParen, 1),
                (')', _, _) => (Tok::RParen, 1),
                ('[', _, _) => (Tok::LBracket, 1),
                (']', _, _) => (Tok::RBracket, 1),
                ('{', _, _) => (Tok::LBrace, 1),
                ('}', _, _) => (Tok::RBrace, 1),
                ('&', _, _) => (Tok::And, 1),
                ('|', _, _) => (Tok::Or, 1),
                (',', _, _) => (Tok::Comma, 1),
                (';', _, _) => (Tok::Semi, 1),
                ('?', _, _) => (Tok::Question, 1),
                ('.', _, _) => (Tok::Dot, 1),
                ('\'', _, _) => (Tok::Prime, 1),
                _ => return Err(err(line, col, format!("unknown operator `{c}`"))),
            }
        };
        out.push(Token { tok, line: start_line, col: start_col });
        i += len;
        col += len;
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Inside `<...>` at bracket depth zero, `>` closes the modality.
    no_gt: bool,
}

const POST_SUFFIX: &str = "_post";

fn make_var(name: &str) -> Var {
    match name.strip_suffix(POST_SUFFIX) {
        Some(base) if !base.is_empty() => Var::post(base),
        _ => Var::pre(name),
    }
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0, no_gt: false })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn expect_eof(&self) -> Result<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.error(format!("unexpected trailing input {:?}", self.peek()))
        }
    }

    fn with_gt<T>(&mut self, allow: bool, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let saved = self.no_gt;
        self.no_gt = !allow;
        let r = f(self);
        self.no_gt = saved;
        r
    }

    // ---- formulas ----

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.implies()?;
        if *self.peek() == Tok::DArrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::equiv(lhs, rhs));
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::Forall | Tok::Exists => {
                let is_all = self.bump() == Tok::Forall;
                let v = match self.bump() {
                    Tok::Ident(name) => make_var(&name),
                    _ => return self.error("expected variable after quantifier"),
                };
                if *self.peek() == Tok::Dot {
                    self.bump();
                }
                let body = self.unary()?;
                Ok(if is_all { Formula::forall(v, body) } else { Formula::exists(v, body) })
            }
            Tok::LBracket => {
                self.bump();
                let p = self.with_gt(true, |s| s.program())?;
                self.expect(Tok::RBracket, "`]`")?;
                let body = self.unary()?;
                Ok(Formula::boxed(p, body))
            }
            Tok::Lt => {
                self.bump();
                let p = self.with_gt(false, |s| s.program())?;
                self.expect(Tok::Gt, "`>` closing diamond")?;
                let body = self.unary()?;
                Ok(Formula::diamond(p, body))
            }
            Tok::Ident(ref w) if w == "true" => {
                self.bump();
                Ok(Formula::True)
            }
            Tok::Ident(ref w) if w == "false" => {
                self.bump();
                Ok(Formula::False)
            }
            Tok::LParen => {
                let start = self.pos;
                match self.comparison() {
                    Ok(f) => Ok(f),
                    Err(e1) => {
                        let far1 = self.pos;
                        self.pos = start;
                        self.bump();
                        let inner = self.with_gt(true, |s| {
                            let f = s.formula()?;
                            s.expect(Tok::RParen, "`)`")?;
                            Ok(f)
                        });
                        match inner {
                            Ok(f) => Ok(f),
                            Err(e2) => {
                                let far2 = self.pos;
                                Err(if far1 > far2 { e1 } else { e2 })
                            }
                        }
                    }
                }
            }
            _ => self.comparison(),
        }
    }

    fn cmp_op(&mut self) -> Option<(CmpOp, bool)> {
        let r = match self.peek() {
            Tok::Lt => (CmpOp::Lt, false),
            Tok::Le => (CmpOp::Le, false),
            Tok::EqTok => (CmpOp::Eq, false),
            Tok::Neq => (CmpOp::Eq, true),
            Tok::Ge if !self.no_gt => (CmpOp::Ge, false),
            Tok::Gt if !self.no_gt => (CmpOp::Gt, false),
            _ => return None,
        };
        self.bump();
        Some(r)
    }

    fn comparison(&mut self) -> Result<Formula> {
        let lhs = self.term()?;
        let Some((op, negated)) = self.cmp_op() else {
            return self.error(format!("expected comparison operator, found {:?}", self.peek()));
        };
        let rhs = self.term()?;
        let f = Formula::cmp(op, lhs, rhs);
        Ok(if negated { Formula::not(f) } else { f })
    }

    // ---- terms ----

    fn term(&mut self) -> Result<Term> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Term::add(lhs, self.product()?);
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Term::sub(lhs, self.product()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Term> {
        let mut lhs = self.signed()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Term::mul(lhs, self.signed()?);
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Term::div(lhs, self.signed()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn signed(&mut self) -> Result<Term> {
        if *self.peek() == Tok::Minus {
            if let Tok::Num(v) = *self.peek_at(1) {
                if *self.peek_at(2) != Tok::Caret {
                    self.bump();
                    self.bump();
                    return Ok(Term::Num(-v));
                }
            }
            self.bump();
            return Ok(Term::neg(self.signed()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Term> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let (neg, paren) = match self.peek() {
            Tok::LParen => {
                self.bump();
                let neg = *self.peek() == Tok::Minus;
                if neg {
                    self.bump();
                }
                (neg, true)
            }
            Tok::Minus => {
                self.bump();
                (true, false)
            }
            _ => (false, false),
        };
        let n = match self.bump() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            _ => return self.error("exponent must be an integer literal"),
        };
        if paren {
            self.expect(Tok::RParen, "`)`")?;
        }
        Ok(Term::pow(base, if neg { -n } else { n }))
    }

    fn atom(&mut self) -> Result<Term> {
        match self.bump() {
            Tok::Num(v) => Ok(Term::Num(v)),
            Tok::LParen => {
                let t = self.with_gt(true, |s| s.term())?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Tok::Ident(name) => {
                if *self.peek() != Tok::LParen {
                    if name == "true" || name == "false" {
                        return self.error(format!("`{name}` is not a term"));
                    }
                    return Ok(Term::Var(make_var(&name)));
                }
                self.bump();
                let args = self.with_gt(true, |s| {
                    let mut args = Vec::new();
                    if *s.peek() != Tok::RParen {
                        args.push(s.term()?);
                        while *s.peek() == Tok::Comma {
                            s.bump();
                            args.push(s.term()?);
                        }
                    }
                    s.expect(Tok::RParen, "`)`")?;
                    Ok(args)
                })?;
                match name.as_str() {
                    "min" | "max" => {
                        if args.len() != 2 {
                            return self.error(format!("`{name}` takes two arguments"));
                        }
                        let mut it = args.into_iter();
                        let (a, b) = (it.next().unwrap(), it.next().unwrap());
                        Ok(if name == "min" { Term::min(a, b) } else { Term::max(a, b) })
                    }
                    _ => Ok(Term::Func(name, args)),
                }
            }
            other => {
                self.pos -= 1;
                self.error(format!("expected term, found {other:?}"))
            }
        }
    }

    // ---- programs ----

    fn program(&mut self) -> Result<Program> {
        let lhs = self.sequence()?;
        if *self.peek() == Tok::PlusPlus {
            self.bump();
            let rhs = self.program()?;
            return Ok(Program::choice(lhs, rhs));
        }
        Ok(lhs)
    }

    fn ends_program(&self) -> bool {
        matches!(
            self.peek(),
            Tok::RBrace | Tok::RParen | Tok::RBracket | Tok::Gt | Tok::Eof | Tok::PlusPlus
        )
    }

    fn sequence(&mut self) -> Result<Program> {
        let first = self.statement()?;
        if *self.peek() == Tok::Semi {
            self.bump();
            if self.ends_program() {
                return Ok(first);
            }
            let rest = self.sequence()?;
            return Ok(Program::seq(first, rest));
        }
        Ok(first)
    }

    fn statement(&mut self) -> Result<Program> {
        match self.peek().clone() {
            Tok::LBrace => {
                self.bump();
                let is_ode = matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Prime;
                let body = self.with_gt(true, |s| {
                    let p = if is_ode { s.ode()? } else { s.program()? };
                    s.expect(Tok::RBrace, "`}`")?;
                    Ok(p)
                })?;
                if *self.peek() == Tok::Star {
                    self.bump();
                    return Ok(Program::repeat(body));
                }
                Ok(body)
            }
            Tok::Question => {
                self.bump();
                Ok(Program::Test(self.unary()?))
            }
            Tok::Ident(name) => {
                self.bump();
                self.expect(Tok::Assign, "`:=`")?;
                if *self.peek() == Tok::Star {
                    self.bump();
                    return Ok(Program::AssignAny(name));
                }
                Ok(Program::Assign(name, self.term()?))
            }
            other => self.error(format!("expected program statement, found {other:?}")),
        }
    }

    fn ode(&mut self) -> Result<Program> {
        let mut eqs = Vec::new();
        loop {
            let name = match self.bump() {
                Tok::Ident(n) => n,
                _ => return self.error("expected ODE variable"),
            };
            self.expect(Tok::Prime, "`'`")?;
            self.expect(Tok::EqTok, "`=`")?;
            let rhs = self.term()?;
            if eqs.iter().any(|(n, _): &(String, Term)| *n == name) {
                return self.error(format!("duplicate ODE variable `{name}`"));
            }
            eqs.push((name, rhs));
            if *self.peek() == Tok::Comma {
                self.bump();
                continue;
            }
            break;
        }
        let domain = if *self.peek() == Tok::And {
            self.bump();
            self.formula()?
        } else {
            Formula::True
        };
        Ok(Program::Ode(eqs, domain))
    }
}

pub fn parse_formula(src: &str) -> Result<Formula> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.expect_eof()?;
    Ok(f)
}

pub fn parse_term(src: &str) -> Result<Term> {
    let mut p = Parser::new(src)?;
    let t = p.term()?;
    p.expect_eof()?;
    Ok(t)
}

pub fn parse_program(src: &str) -> Result<Program> {
    let mut p = Parser::new(src)?;
    let prog = p.program()?;
    p.expect_eof()?;
    Ok(prog)
}
