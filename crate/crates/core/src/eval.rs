//! Numeric evaluation of terms and quantifier-free formulas.

use crate::ast::{CmpOp, Formula, Term, Var};
use crate::error::{Error, Result};
use crate::state::{State, TransitionPair};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Source of variable values.
pub trait Valuation {
    fn value(&self, v: &Var) -> Result<f64>;
}

impl Valuation for State {
    fn value(&self, v: &Var) -> Result<f64> {
        if v.post {
            return Err(Error::Undeclared(v.to_string()));
        }
        self.get(&v.name)
    }
}

impl Valuation for TransitionPair {
    fn value(&self, v: &Var) -> Result<f64> {
        if v.post {
            self.post.get(&v.name).map_err(|_| Error::Undeclared(v.to_string()))
        } else {
            self.pre.get(&v.name)
        }
    }
}

/// Local bindings layered over a base valuation; later bindings shadow earlier ones.
pub struct Overlay<'a> {
    base: &'a dyn Valuation,
    bindings: Vec<(Var, f64)>,
}

impl<'a> Overlay<'a> {
    pub fn new(base: &'a dyn Valuation) -> Self {
        Overlay { base, bindings: Vec::new() }
    }

    pub fn push(&mut self, v: Var, x: f64) {
        self.bindings.push((v, x));
    }

    pub fn pop(&mut self) {
        self.bindings.pop();
    }

    pub fn set_last(&mut self, x: f64) {
        if let Some(last) = self.bindings.last_mut() {
            last.1 = x;
        }
    }

    pub fn bindings(&self) -> &[(Var, f64)] {
        &self.bindings
    }
}

impl Valuation for Overlay<'_> {
    fn value(&self, v: &Var) -> Result<f64> {
        match self.bindings.iter().rev().find(|(b, _)| b == v) {
            Some((_, x)) => Ok(*x),
            None => self.base.value(v),
        }
    }
}

pub fn apply_builtin(name: &str, args: &[f64]) -> Result<f64> {
    let unary = |f: fn(f64) -> f64| match args {
        [a] => Ok(f(*a)),
        _ => Err(Error::UnknownFunction(format!("{name}/{}", args.len()))),
    };
    match name {
        "sin" => unary(f64::sin),
        "cos" => unary(f64::cos),
        "tan" => unary(f64::tan),
        "exp" => unary(f64::exp),
        "ln" => unary(f64::ln),
        "sqrt" => unary(f64::sqrt),
        "abs" => unary(f64::abs),
        _ => Err(Error::UnknownFunction(name.to_string())),
    }
}

pub fn eval_term(t: &Term, val: &dyn Valuation) -> Result<f64> {
    Ok(match t {
        Term::Var(v) => val.value(v)?,
        Term::Num(c) => *c,
        Term::Add(a, b) => eval_term(a, val)? + eval_term(b, val)?,
        Term::Sub(a, b) => eval_term(a, val)? - eval_term(b, val)?,
        Term::Mul(a, b) => eval_term(a, val)? * eval_term(b, val)?,
        Term::Div(a, b) => {
            let d = eval_term(b, val)?;
            if d == 0.0 {
                return Err(Error::DivisionByZero);
            }
            eval_term(a, val)? / d
        }
        Term::Pow(a, n) => {
            let x = eval_term(a, val)?;
            if *n < 0 && x == 0.0 {
                return Err(Error::DivisionByZero);
            }
            x.powi(*n)
        }
        Term::Neg(a) => -eval_term(a, val)?,
        Term::Min(a, b) => eval_term(a, val)?.min(eval_term(b, val)?),
        Term::Max(a, b) => eval_term(a, val)?.max(eval_term(b, val)?),
        Term::Func(name, args) => {
            let xs = args.iter().map(|a| eval_term(a, val)).collect::<Result<Vec<_>>>()?;
            apply_builtin(name, &xs)?
        }
    })
}

pub fn compare(op: CmpOp, a: f64, b: f64, tol: f64) -> bool {
    match op {
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Eq => (a - b).abs() <= tol,
        CmpOp::Ge => a >= b,
        CmpOp::Gt => a > b,
    }
}

/// Evaluates a quantifier-free, modality-free formula. `tol` applies to `=` only.
pub fn eval_formula(f: &Formula, val: &dyn Valuation, tol: f64) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, a, b) => compare(*op, eval_term(a, val)?, eval_term(b, val)?, tol),
        Formula::Not(a) => !eval_formula(a, val, tol)?,
        Formula::And(a, b) => eval_formula(a, val, tol)? && eval_formula(b, val, tol)?,
        Formula::Or(a, b) => eval_formula(a, val, tol)? || eval_formula(b, val, tol)?,
        Formula::Implies(a, b) => !eval_formula(a, val, tol)? || eval_formula(b, val, tol)?,
        Formula::Equiv(a, b) => eval_formula(a, val, tol)? == eval_formula(b, val, tol)?,
        Formula::Forall(..) | Formula::Exists(..) | Formula::Box(..) | Formula::Diamond(..) => {
            return Err(Error::NotQuantifierFree(f.to_string()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    fn pair(pre: &[(&str, f64)], post: &[(&str, f64)]) -> TransitionPair {
        TransitionPair::new(State::from_pairs(pre.iter().copied()), State::from_pairs(post.iter().copied())).unwrap()
    }

    #[test]
    fn two_branch_monitor_on_pairs() {
        let f = parse_formula("(a_post = a + 1 & b_post = b) | (a_post = a & b_post <= 3)").unwrap();
        let ok = pair(&[("a", 2.0), ("b", 3.0)], &[("a", 3.0), ("b", 3.0)]);
        assert!(eval_formula(&f, &ok, DEFAULT_TOL).unwrap());
        let bad = pair(&[("a", 2.0), ("b", 3.0)], &[("a", 2.0), ("b", 4.0)]);
        assert!(!eval_formula(&f, &bad, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn identity_transition() {
        let f = parse_formula("x_post = x").unwrap();
        let s = State::from_pairs([("x", 0.3)]);
        assert!(eval_formula(&f, &TransitionPair::identity(s), 0.0).unwrap());
    }

    #[test]
    fn errors() {
        let s = State::from_pairs([("x", 0.0)]);
        let div = parse_formula("1/x > 0").unwrap();
        assert_eq!(eval_formula(&div, &s, 0.0), Err(Error::DivisionByZero));
        let undeclared = parse_formula("y > 0").unwrap();
        assert!(matches!(eval_formula(&undeclared, &s, 0.0), Err(Error::Undeclared(_))));
        let quant = parse_formula("\\exists y (y > x)").unwrap();
        assert!(matches!(eval_formula(&quant, &s, 0.0), Err(Error::NotQuantifierFree(_))));
    }

    #[test]
    fn tolerance_applies_to_equality_only() {
        let s = State::from_pairs([("x", 1.0 + 1e-10)]);
        assert!(eval_formula(&parse_formula("x = 1").unwrap(), &s, 1e-9).unwrap());
        assert!(!eval_formula(&parse_formula("x = 1").unwrap(), &s, 0.0).unwrap());
        assert!(!eval_formula(&parse_formula("x < 1").unwrap(), &s, 1e-9).unwrap());
    }

    #[test]
    fn builtins() {
        let s = State::from_pairs([("th", 0.0)]);
        assert!(eval_formula(&parse_formula("cos(th) = 1 & sin(th) = 0").unwrap(), &s, 0.0).unwrap());
        let bad = parse_formula("foo(th) = 0").unwrap();
        assert!(matches!(eval_formula(&bad, &s, 0.0), Err(Error::UnknownFunction(_))));
    }
}
