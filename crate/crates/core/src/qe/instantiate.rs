//! Instantiation of `\exists x (... & x_post = x ...)` by `x ↦ x_post`, and the
//! more general one-point rule `\exists x (... & x = e ...)` ≡ `(...)[x ↦ e]`.

use std::collections::BTreeSet;

use crate::ast::{CmpOp, Formula, Term, Var};
use crate::error::Result;
use crate::simplify::simplify;
use crate::vars::{substitute, term_mentions, term_vars};

use super::{Method, Tracer};

/// Whether `x_post = x` (either orientation) is a conjunct of `body`, looking through
/// conjunctions and existentials over other variables.
fn has_post_equation(body: &Formula, x: &Var) -> bool {
    let post = Term::Var(x.to_post());
    let pre = Term::Var(x.clone());
    match body {
        Formula::Cmp(CmpOp::Eq, a, b) => (*a == post && *b == pre) || (*a == pre && *b == post),
        Formula::And(a, b) => has_post_equation(a, x) || has_post_equation(b, x),
        Formula::Exists(w, a) => *w != *x && *w != x.to_post() && has_post_equation(a, x),
        _ => false,
    }
}

/// Terms `e` with `x = e` a conjunct of `body` (through conjunctions and
/// existentials over other variables) such that `e` mentions neither `x` nor a
/// variable bound on the way to the equation.
fn definitions(body: &Formula, x: &Var, bound: &mut Vec<Var>, out: &mut Vec<Term>) {
    match body {
        Formula::Cmp(CmpOp::Eq, a, b) => {
            let target = Term::Var(x.clone());
            for (l, r) in [(a, b), (b, a)] {
                if *l == target && !term_mentions(r, x) {
                    let vs: BTreeSet<Var> = term_vars(r);
                    if bound.iter().all(|w| !vs.contains(w)) {
                        out.push(r.clone());
                    }
                }
            }
        }
        Formula::And(a, b) => {
            definitions(a, x, bound, out);
            definitions(b, x, bound, out);
        }
        Formula::Exists(w, a) if w != x => {
            bound.push(w.clone());
            definitions(a, x, bound, out);
            bound.pop();
        }
        _ => {}
    }
}

/// The preferred definition of `x` in `body`: a post-state variable, then any
/// variable, then the smallest term.
fn best_definition(body: &Formula, x: &Var) -> Option<Term> {
    let mut defs = Vec::new();
    definitions(body, x, &mut Vec::new(), &mut defs);
    defs.into_iter().min_by_key(|t| match t {
        Term::Var(v) if v.post => (0, 0),
        Term::Var(_) => (1, 0),
        other => (2, other.size()),
    })
}

pub fn instantiate_post_states(f: &Formula) -> Result<Formula> {
    instantiate_traced(f, &mut Tracer::default())
}

pub(crate) fn instantiate_traced(f: &Formula, tr: &mut Tracer) -> Result<Formula> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Cmp(..) => f.clone(),
        Formula::Not(a) => Formula::not(instantiate_traced(a, tr)?),
        Formula::And(a, b) => Formula::and(instantiate_traced(a, tr)?, instantiate_traced(b, tr)?),
        Formula::Or(a, b) => Formula::or(instantiate_traced(a, tr)?, instantiate_traced(b, tr)?),
        Formula::Implies(a, b) => Formula::implies(instantiate_traced(a, tr)?, instantiate_traced(b, tr)?),
        Formula::Equiv(a, b) => Formula::equiv(instantiate_traced(a, tr)?, instantiate_traced(b, tr)?),
        Formula::Forall(v, a) => Formula::forall(v.clone(), instantiate_traced(a, tr)?),
        Formula::Exists(v, a) => {
            let body = instantiate_traced(a, tr)?;
            if !v.post && has_post_equation(&body, v) {
                tr.method(v, Method::PostInstantiation);
                let out = simplify(&substitute(&body, v, &Term::Var(v.to_post()))?);
                tr.step_formula("instantiate-post", &out);
                out
            } else if let Some(e) = best_definition(&body, v) {
                match substitute(&body, v, &e) {
                    Ok(g) => {
                        tr.method(v, Method::OnePoint);
                        let out = simplify(&g);
                        tr.step_formula("one-point", &out);
                        out
                    }
                    Err(_) => Formula::exists(v.clone(), body),
                }
            } else {
                Formula::exists(v.clone(), body)
            }
        }
        Formula::Box(..) | Formula::Diamond(..) => f.clone(),
    })
}
