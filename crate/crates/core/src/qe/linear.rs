//! Decomposition of a term as `a*x + b` with `a`, `b` free of `x`.

use crate::ast::{Term, Var};
use crate::error::{Error, Result};
use crate::simplify::simplify_term;
use crate::vars::term_mentions;

/// Coefficient and remainder; `None` stands for zero.
type Lin = (Option<Term>, Term);

fn add_opt(a: Option<Term>, b: Option<Term>) -> Option<Term> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(Term::add(a, b)),
    }
}

fn go(t: &Term, x: &Var) -> Result<Lin> {
    if !term_mentions(t, x) {
        return Ok((None, t.clone()));
    }
    let nonlinear = || Error::Nonlinear(x.to_string());
    Ok(match t {
        Term::Var(_) => (Some(Term::num(1.0)), Term::num(0.0)),
        Term::Add(a, b) => {
            let (ca, ra) = go(a, x)?;
            let (cb, rb) = go(b, x)?;
            (add_opt(ca, cb), Term::add(ra, rb))
        }
        Term::Sub(a, b) => {
            let (ca, ra) = go(a, x)?;
            let (cb, rb) = go(b, x)?;
            (add_opt(ca, cb.map(Term::neg)), Term::sub(ra, rb))
        }
        Term::Neg(a) => {
            let (c, r) = go(a, x)?;
            (c.map(Term::neg), Term::neg(r))
        }
        Term::Mul(a, b) => match (term_mentions(a, x), term_mentions(b, x)) {
            (true, true) => return Err(nonlinear()),
            (true, false) => {
                let (c, r) = go(a, x)?;
                (c.map(|c| Term::mul(c, (**b).clone())), Term::mul(r, (**b).clone()))
            }
            _ => {
                let (c, r) = go(b, x)?;
                (c.map(|c| Term::mul((**a).clone(), c)), Term::mul((**a).clone(), r))
            }
        },
        Term::Div(a, b) => {
            if term_mentions(b, x) {
                return Err(nonlinear());
            }
            let (c, r) = go(a, x)?;
            (c.map(|c| Term::div(c, (**b).clone())), Term::div(r, (**b).clone()))
        }
        Term::Pow(a, 1) => go(a, x)?,
        Term::Pow(_, 0) => (None, Term::num(1.0)),
        Term::Pow(..) | Term::Min(..) | Term::Max(..) | Term::Func(..) => return Err(nonlinear()),
        Term::Num(_) => unreachable!(),
    })
}

/// Returns `(a, b)` with `t = a*x + b`, both simplified. Errors when `t` is not linear in `x`.
pub fn decompose(t: &Term, x: &Var) -> Result<(Term, Term)> {
    let (c, r) = go(t, x)?;
    let a = simplify_term(&c.unwrap_or(Term::num(0.0)));
    let b = simplify_term(&r);
    if term_mentions(&a, x) || term_mentions(&b, x) {
        return Err(Error::Nonlinear(x.to_string()));
    }
    Ok((a, b))
}
