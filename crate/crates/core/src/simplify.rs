//! Local algebraic and propositional simplification. Truth-preserving at tolerance zero.

use std::collections::BTreeMap;

use crate::ast::{CmpOp, Formula, Term};
use crate::eval::{apply_builtin, compare};
use crate::vars::occurs_free;

fn is_num(t: &Term, c: f64) -> bool {
    matches!(t, Term::Num(v) if *v == c)
}

pub fn simplify_term(t: &Term) -> Term {
    match t {
        Term::Var(_) | Term::Num(_) => t.clone(),
        Term::Add(a, b) => {
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) => Term::Num(x + y),
                _ if is_num(&a, 0.0) => b,
                _ if is_num(&b, 0.0) => a,
                (_, Term::Num(y)) if *y < 0.0 => Term::sub(a, Term::Num(-y)),
                (_, Term::Neg(inner)) => Term::sub(a, (**inner).clone()),
                _ => Term::add(a, b),
            }
        }
        Term::Sub(a, b) => {
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) => Term::Num(x - y),
                _ if is_num(&b, 0.0) => a,
                _ if is_num(&a, 0.0) => simplify_term(&Term::neg(b)),
                _ if a == b => Term::Num(0.0),
                (_, Term::Neg(inner)) => Term::add(a, (**inner).clone()),
                _ => Term::sub(a, b),
            }
        }
        Term::Mul(a, b) => {
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) => Term::Num(x * y),
                _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Term::Num(0.0),
                _ if is_num(&a, 1.0) => b,
                _ if is_num(&b, 1.0) => a,
                _ if is_num(&a, -1.0) => simplify_term(&Term::neg(b)),
                _ if is_num(&b, -1.0) => simplify_term(&Term::neg(a)),
                _ => Term::mul(a, b),
            }
        }
        Term::Div(a, b) => {
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) if *y != 0.0 => Term::Num(x / y),
                _ if is_num(&b, 1.0) => a,
                _ if is_num(&b, -1.0) => simplify_term(&Term::neg(a)),
                _ => Term::div(a, b),
            }
        }
        Term::Pow(a, n) => {
            let a = simplify_term(a);
            match (&a, *n) {
                (_, 1) => a,
                (Term::Num(x), n) if n >= 0 || *x != 0.0 => Term::Num(x.powi(n)),
                (_, 0) => Term::Num(1.0),
                _ => Term::pow(a, *n),
            }
        }
        Term::Neg(a) => match simplify_term(a) {
            Term::Num(x) => Term::Num(-x),
            Term::Neg(inner) => *inner,
            Term::Sub(x, y) => Term::Sub(y, x),
            other => Term::neg(other),
        },
        Term::Min(a, b) | Term::Max(a, b) => {
            let is_min = matches!(t, Term::Min(..));
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) => Term::Num(if is_min { x.min(*y) } else { x.max(*y) }),
                _ if a == b => a,
                _ if is_min => Term::min(a, b),
                _ => Term::max(a, b),
            }
        }
        Term::Func(name, args) => {
            let args: Vec<Term> = args.iter().map(simplify_term).collect();
            let nums: Option<Vec<f64>> = args.iter().map(Term::as_num).collect();
            match nums.and_then(|xs| apply_builtin(name, &xs).ok()).filter(|v| v.is_finite()) {
                Some(v) => Term::Num(v),
                None => Term::Func(name.clone(), args),
            }
        }
    }
}

/// Linear combination of opaque subterms (keyed by printed form) plus a constant.
fn linear_form(t: &Term, scale: f64, acc: &mut BTreeMap<String, f64>, constant: &mut f64) {
    match t {
        Term::Num(c) => *constant += scale * c,
        Term::Add(a, b) => {
            linear_form(a, scale, acc, constant);
            linear_form(b, scale, acc, constant);
        }
        Term::Sub(a, b) => {
            linear_form(a, scale, acc, constant);
            linear_form(b, -scale, acc, constant);
        }
        Term::Neg(a) => linear_form(a, -scale, acc, constant),
        Term::Mul(a, b) if a.as_num().is_some() => linear_form(b, scale * a.as_num().unwrap(), acc, constant),
        Term::Mul(a, b) if b.as_num().is_some() => linear_form(a, scale * b.as_num().unwrap(), acc, constant),
        other => *acc.entry(other.to_string()).or_insert(0.0) += scale,
    }
}

/// `a - b` when it reduces to a constant by linear cancellation.
fn constant_difference(a: &Term, b: &Term) -> Option<f64> {
    let mut acc = BTreeMap::new();
    let mut c = 0.0;
    linear_form(a, 1.0, &mut acc, &mut c);
    linear_form(b, -1.0, &mut acc, &mut c);
    acc.values().all(|k| *k == 0.0).then_some(c)
}

fn dedup(parts: Vec<Formula>) -> Vec<Formula> {
    let mut out: Vec<Formula> = Vec::with_capacity(parts.len());
    for p in parts {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

pub fn simplify(f: &Formula) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, a, b) => {
            let (a, b) = (simplify_term(a), simplify_term(b));
            match (&a, &b) {
                (Term::Num(x), Term::Num(y)) => {
                    if compare(*op, *x, *y, 0.0) {
                        Formula::True
                    } else {
                        Formula::False
                    }
                }
                _ if a == b => match op {
                    CmpOp::Le | CmpOp::Eq | CmpOp::Ge => Formula::True,
                    CmpOp::Lt | CmpOp::Gt => Formula::False,
                },
                _ => match constant_difference(&a, &b) {
                    Some(d) if compare(*op, d, 0.0, 0.0) => Formula::True,
                    Some(_) => Formula::False,
                    None => Formula::Cmp(*op, a, b),
                },
            }
        }
        Formula::Not(a) => match simplify(a) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::not(other),
        },
        Formula::And(..) => {
            let mut parts = Vec::new();
            for c in f.conjuncts() {
                match simplify(c) {
                    Formula::True => {}
                    Formula::False => return Formula::False,
                    Formula::And(..) => {
                        let s = simplify(c);
                        parts.extend(s.conjuncts().into_iter().cloned());
                    }
                    other => parts.push(other),
                }
            }
            Formula::conj(dedup(parts))
        }
        Formula::Or(..) => {
            let mut parts = Vec::new();
            for d in f.disjuncts() {
                match simplify(d) {
                    Formula::False => {}
                    Formula::True => return Formula::True,
                    Formula::Or(..) => {
                        let s = simplify(d);
                        parts.extend(s.disjuncts().into_iter().cloned());
                    }
                    other => parts.push(other),
                }
            }
            Formula::disj(dedup(parts))
        }
        Formula::Implies(a, b) => match (simplify(a), simplify(b)) {
            (Formula::True, b) => b,
            (Formula::False, _) | (_, Formula::True) => Formula::True,
            (a, Formula::False) => simplify(&Formula::not(a)),
            (a, b) if a == b => Formula::True,
            (a, b) => Formula::implies(a, b),
        },
        Formula::Equiv(a, b) => match (simplify(a), simplify(b)) {
            (Formula::True, x) | (x, Formula::True) => x,
            (Formula::False, x) | (x, Formula::False) => simplify(&Formula::not(x)),
            (a, b) if a == b => Formula::True,
            (a, b) => Formula::equiv(a, b),
        },
        Formula::Forall(v, a) | Formula::Exists(v, a) => {
            let body = simplify(a);
            if !occurs_free(&body, v) {
                return body;
            }
            if matches!(f, Formula::Forall(..)) {
                Formula::forall(v.clone(), body)
            } else {
                Formula::exists(v.clone(), body)
            }
        }
        Formula::Box(p, a) => Formula::boxed((**p).clone(), simplify(a)),
        Formula::Diamond(p, a) => Formula::diamond((**p).clone(), simplify(a)),
    }
}
