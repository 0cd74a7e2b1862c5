//! Printing in the concrete syntax accepted by [`crate::parse`].

use std::fmt::{self, Display, Formatter};

use crate::ast::{Formula, Program, Term, Var};

impl Display for Var {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if self.post {
            write!(f, "{}_post", self.name)
        } else {
            f.write_str(&self.name)
        }
    }
}

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Add(..) | Term::Sub(..) => 1,
        Term::Mul(..) | Term::Div(..) => 2,
        Term::Neg(_) => 3,
        Term::Num(v) if v.is_sign_negative() => 5,
        Term::Pow(..) => 4,
        _ => 5,
    }
}

fn write_term(t: &Term, min: u8, f: &mut Formatter<'_>) -> fmt::Result {
    if term_prec(t) < min {
        f.write_str("(")?;
        write_term(t, 0, f)?;
        return f.write_str(")");
    }
    match t {
        Term::Var(v) => write!(f, "{v}"),
        Term::Num(v) if v.is_sign_negative() => write!(f, "(-{})", -v),
        Term::Num(v) => write!(f, "{v}"),
        Term::Add(a, b) => {
            write_term(a, 1, f)?;
            f.write_str(" + ")?;
            write_term(b, 2, f)
        }
        Term::Sub(a, b) => {
            write_term(a, 1, f)?;
            f.write_str(" - ")?;
            write_term(b, 2, f)
        }
        Term::Mul(a, b) => {
            write_term(a, 2, f)?;
            f.write_str("*")?;
            write_term(b, 3, f)
        }
        Term::Div(a, b) => {
            write_term(a, 2, f)?;
            f.write_str("/")?;
            write_term(b, 3, f)
        }
        Term::Neg(a) => match **a {
            Term::Var(_) | Term::Func(..) => write!(f, "-{a}"),
            _ => {
                f.write_str("-(")?;
                write_term(a, 0, f)?;
                f.write_str(")")
            }
        },
        Term::Pow(a, n) => {
            match **a {
                Term::Var(_) | Term::Func(..) | Term::Min(..) | Term::Max(..) => write_term(a, 0, f)?,
                Term::Num(v) if !v.is_sign_negative() => write_term(a, 0, f)?,
                _ => {
                    f.write_str("(")?;
                    write_term(a, 0, f)?;
                    f.write_str(")")?;
                }
            }
            if *n < 0 {
                write!(f, "^(-{})", -(*n as i64))
            } else {
                write!(f, "^{n}")
            }
        }
        Term::Min(a, b) => write!(f, "min({a}, {b})"),
        Term::Max(a, b) => write!(f, "max({a}, {b})"),
        Term::Func(name, args) => {
            write!(f, "{name}(")?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")
        }
    }
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_term(self, 0, f)
    }
}

fn formula_prec(g: &Formula) -> u8 {
    match g {
        Formula::Equiv(..) => 1,
        Formula::Implies(..) => 2,
        Formula::Or(..) => 3,
        Formula::And(..) => 4,
        Formula::Not(_)
        | Formula::Forall(..)
        | Formula::Exists(..)
        | Formula::Box(..)
        | Formula::Diamond(..) => 5,
        Formula::True | Formula::False | Formula::Cmp(..) => 6,
    }
}

fn write_formula(g: &Formula, min: u8, f: &mut Formatter<'_>) -> fmt::Result {
    if formula_prec(g) < min {
        f.write_str("(")?;
        write_formula(g, 0, f)?;
        return f.write_str(")");
    }
    match g {
        Formula::True => f.write_str("true"),
        Formula::False => f.write_str("false"),
        Formula::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
        Formula::Not(a) => {
            f.write_str("!")?;
            write_formula(a, 5, f)
        }
        Formula::And(a, b) => {
            write_formula(a, 4, f)?;
            f.write_str(" & ")?;
            write_formula(b, 5, f)
        }
        Formula::Or(a, b) => {
            write_formula(a, 3, f)?;
            f.write_str(" | ")?;
            write_formula(b, 4, f)
        }
        Formula::Implies(a, b) => {
            write_formula(a, 3, f)?;
            f.write_str(" -> ")?;
            write_formula(b, 2, f)
        }
        Formula::Equiv(a, b) => {
            write_formula(a, 2, f)?;
            f.write_str(" <-> ")?;
            write_formula(b, 1, f)
        }
        Formula::Forall(v, a) => write!(f, "\\forall {v} ({a})"),
        Formula::Exists(v, a) => write!(f, "\\exists {v} ({a})"),
        Formula::Box(p, a) => write!(f, "[{p}]({a})"),
        Formula::Diamond(p, a) => write!(f, "<{p}>({a})"),
    }
}

impl Display for Formula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_formula(self, 0, f)
    }
}

fn write_program(p: &Program, f: &mut Formatter<'_>) -> fmt::Result {
    match p {
        Program::Assign(x, e) => write!(f, "{x} := {e}"),
        Program::AssignAny(x) => write!(f, "{x} := *"),
        Program::Test(h) => write!(f, "?({h})"),
        Program::Ode(eqs, dom) => {
            f.write_str("{")?;
            for (i, (x, e)) in eqs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}' = {e}")?;
            }
            if *dom != Formula::True {
                write!(f, " & {dom}")?;
            }
            f.write_str("}")
        }
        Program::Seq(a, b) => {
            if matches!(**a, Program::Seq(..) | Program::Choice(..)) {
                write!(f, "{{{a}}}")?;
            } else {
                write_program(a, f)?;
            }
            f.write_str("; ")?;
            if matches!(**b, Program::Choice(..)) {
                write!(f, "{{{b}}}")
            } else {
                write_program(b, f)
            }
        }
        Program::Choice(a, b) => {
            if matches!(**a, Program::Choice(..)) {
                write!(f, "{{{a}}}")?;
            } else {
                write_program(a, f)?;
            }
            f.write_str(" ++ ")?;
            write_program(b, f)
        }
        Program::Loop(a) => write!(f, "{{{a}}}*"),
    }
}

impl Display for Program {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_program(self, f)
    }
}
