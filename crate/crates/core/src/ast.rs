//! Abstract syntax for terms, formulas and hybrid programs.

use serde::{Deserialize, Serialize};

/// A variable reference. `post` marks the post-state copy `x⁺` (written `x_post`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub name: String,
    pub post: bool,
}

impl Var {
    pub fn pre(name: impl Into<String>) -> Self {
        Var { name: name.into(), post: false }
    }

    pub fn post(name: impl Into<String>) -> Self {
        Var { name: name.into(), post: true }
    }

    pub fn to_post(&self) -> Self {
        Var::post(self.name.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Term {
    Var(Var),
    Num(f64),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Div(Box<Term>, Box<Term>),
    Pow(Box<Term>, i32),
    Neg(Box<Term>),
    Min(Box<Term>, Box<Term>),
    Max(Box<Term>, Box<Term>),
    /// Opaque function symbol such as `sin(theta)`.
    Func(String, Vec<Term>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    /// The operator obtained by swapping the two sides.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Gt => CmpOp::Lt,
        }
    }

    /// Logical negation, if expressible as a single comparison.
    pub fn negate(self) -> Option<CmpOp> {
        match self {
            CmpOp::Lt => Some(CmpOp::Ge),
            CmpOp::Le => Some(CmpOp::Gt),
            CmpOp::Eq => None,
            CmpOp::Ge => Some(CmpOp::Lt),
            CmpOp::Gt => Some(CmpOp::Le),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Cmp(CmpOp, Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Equiv(Box<Formula>, Box<Formula>),
    Forall(Var, Box<Formula>),
    Exists(Var, Box<Formula>),
    Box(Box<Program>, Box<Formula>),
    Diamond(Box<Program>, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Program {
    Assign(String, Term),
    AssignAny(String),
    Test(Formula),
    Ode(Vec<(String, Term)>, Formula),
    Seq(Box<Program>, Box<Program>),
    Choice(Box<Program>, Box<Program>),
    Loop(Box<Program>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Var::pre(name))
    }

    pub fn post_var(name: &str) -> Term {
        Term::Var(Var::post(name))
    }

    pub fn num(v: f64) -> Term {
        Term::Num(v)
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Term, b: Term) -> Term {
        Term::Div(Box::new(a), Box::new(b))
    }

    pub fn neg(a: Term) -> Term {
        Term::Neg(Box::new(a))
    }

    pub fn pow(a: Term, n: i32) -> Term {
        Term::Pow(Box::new(a), n)
    }

    pub fn min(a: Term, b: Term) -> Term {
        Term::Min(Box::new(a), Box::new(b))
    }

    pub fn max(a: Term, b: Term) -> Term {
        Term::Max(Box::new(a), Box::new(b))
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Term::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl Formula {
    pub fn cmp(op: CmpOp, a: Term, b: Term) -> Formula {
        Formula::Cmp(op, a, b)
    }

    pub fn eq(a: Term, b: Term) -> Formula {
        Formula::Cmp(CmpOp::Eq, a, b)
    }

    pub fn le(a: Term, b: Term) -> Formula {
        Formula::Cmp(CmpOp::Le, a, b)
    }

    pub fn lt(a: Term, b: Term) -> Formula {
        Formula::Cmp(CmpOp::Lt, a, b)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn equiv(a: Formula, b: Formula) -> Formula {
        Formula::Equiv(Box::new(a), Box::new(b))
    }

    pub fn forall(v: Var, f: Formula) -> Formula {
        Formula::Forall(v, Box::new(f))
    }

    pub fn exists(v: Var, f: Formula) -> Formula {
        Formula::Exists(v, Box::new(f))
    }

    pub fn diamond(p: Program, f: Formula) -> Formula {
        Formula::Diamond(Box::new(p), Box::new(f))
    }

    pub fn boxed(p: Program, f: Formula) -> Formula {
        Formula::Box(Box::new(p), Box::new(f))
    }

    /// Conjunction of a list; `True` when empty. Left-nested.
    pub fn conj(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = parts.into_iter();
        match it.next() {
            None => Formula::True,
            Some(first) => it.fold(first, Formula::and),
        }
    }

    /// Disjunction of a list; `False` when empty. Left-nested.
    pub fn disj(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut it = parts.into_iter();
        match it.next() {
            None => Formula::False,
            Some(first) => it.fold(first, Formula::or),
        }
    }

    /// `lo <= x & x <= hi`.
    pub fn between(lo: Term, x: Term, hi: Term) -> Formula {
        Formula::and(Formula::le(lo, x.clone()), Formula::le(x, hi))
    }

    /// Flattens nested conjunctions into a list.
    pub fn conjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::And(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    /// Flattens nested disjunctions into a list.
    pub fn disjuncts(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        fn go<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
            match f {
                Formula::Or(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn has_modality(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) => false,
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => a.has_modality(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                a.has_modality() || b.has_modality()
            }
            Formula::Box(..) | Formula::Diamond(..) => true,
        }
    }

    pub fn has_quantifier(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) => false,
            Formula::Not(a) => a.has_quantifier(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                a.has_quantifier() || b.has_quantifier()
            }
            Formula::Forall(..) | Formula::Exists(..) => true,
            Formula::Box(_, a) | Formula::Diamond(_, a) => a.has_quantifier(),
        }
    }

    /// Number of quantifier binders.
    pub fn quantifier_count(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Cmp(..) => 0,
            Formula::Not(a) | Formula::Box(_, a) | Formula::Diamond(_, a) => a.quantifier_count(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                a.quantifier_count() + b.quantifier_count()
            }
            Formula::Forall(_, a) | Formula::Exists(_, a) => 1 + a.quantifier_count(),
        }
    }

    /// Number of AST nodes, counting terms.
    pub fn size(&self) -> usize {
        match self {
            Formula::True | Formula::False => 1,
            Formula::Cmp(_, a, b) => 1 + a.size() + b.size(),
            Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => 1 + a.size(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                1 + a.size() + b.size()
            }
            Formula::Box(_, a) | Formula::Diamond(_, a) => 2 + a.size(),
        }
    }
}

impl Term {
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Num(_) => 1,
            Term::Add(a, b)
            | Term::Sub(a, b)
            | Term::Mul(a, b)
            | Term::Div(a, b)
            | Term::Min(a, b)
            | Term::Max(a, b) => 1 + a.size() + b.size(),
            Term::Pow(a, _) | Term::Neg(a) => 1 + a.size(),
            Term::Func(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }
}

impl Program {
    pub fn assign(x: &str, e: Term) -> Program {
        Program::Assign(x.to_string(), e)
    }

    pub fn assign_any(x: &str) -> Program {
        Program::AssignAny(x.to_string())
    }

    pub fn test(f: Formula) -> Program {
        Program::Test(f)
    }

    pub fn seq(a: Program, b: Program) -> Program {
        Program::Seq(Box::new(a), Box::new(b))
    }

    pub fn choice(a: Program, b: Program) -> Program {
        Program::Choice(Box::new(a), Box::new(b))
    }

    pub fn repeat(a: Program) -> Program {
        Program::Loop(Box::new(a))
    }

    /// Right-nested sequence of the given statements. Panics on an empty list.
    pub fn seq_all(parts: Vec<Program>) -> Program {
        let mut it = parts.into_iter().rev();
        let last = it.next().expect("seq_all needs at least one program");
        it.fold(last, |acc, p| Program::seq(p, acc))
    }

    /// Flattens nested sequential composition into its statements.
    pub fn statements(&self) -> Vec<&Program> {
        let mut out = Vec::new();
        fn go<'a>(p: &'a Program, out: &mut Vec<&'a Program>) {
            match p {
                Program::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }

    pub fn has_ode(&self) -> bool {
        match self {
            Program::Ode(..) => true,
            Program::Seq(a, b) | Program::Choice(a, b) => a.has_ode() || b.has_ode(),
            Program::Loop(a) => a.has_ode(),
            _ => false,
        }
    }

    pub fn has_loop(&self) -> bool {
        match self {
            Program::Loop(_) => true,
            Program::Seq(a, b) | Program::Choice(a, b) => a.has_loop() || b.has_loop(),
            _ => false,
        }
    }

    pub fn ode_count(&self) -> usize {
        match self {
            Program::Ode(..) => 1,
            Program::Seq(a, b) | Program::Choice(a, b) => a.ode_count() + b.ode_count(),
            Program::Loop(a) => a.ode_count(),
            _ => 0,
        }
    }

    /// Strips a top-level loop, returning the body.
    pub fn loop_body(&self) -> &Program {
        match self {
            Program::Loop(b) => b,
            other => other,
        }
    }
}
