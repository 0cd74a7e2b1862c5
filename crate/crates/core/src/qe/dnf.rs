//! Negation and disjunctive normal forms, and the quantifier-distribution rewrites
//! `\exists x (p | q) <-> \exists x p | \exists x q` and
//! `\exists x (p & q(x)) <-> p & \exists x q(x)` for `x` not free in `p`.

use crate::ast::{CmpOp, Formula, Var};
use crate::simplify::simplify;
use crate::vars::occurs_free;

use super::{Method, Tracer};

/// Upper bound on the number of disjuncts produced by distribution.
pub const DNF_CAP: usize = 256;

/// Negation normal form. `!(a = b)` is kept as a literal.
pub fn nnf(f: &Formula) -> Formula {
    match f {
        Formula::And(a, b) => Formula::and(nnf(a), nnf(b)),
        Formula::Or(a, b) => Formula::or(nnf(a), nnf(b)),
        Formula::Implies(a, b) => Formula::or(neg_nnf(a), nnf(b)),
        Formula::Equiv(a, b) => Formula::or(
            Formula::and(nnf(a), nnf(b)),
            Formula::and(neg_nnf(a), neg_nnf(b)),
        ),
        Formula::Forall(v, a) => Formula::forall(v.clone(), nnf(a)),
        Formula::Exists(v, a) => Formula::exists(v.clone(), nnf(a)),
        Formula::Not(a) => neg_nnf(a),
        _ => f.clone(),
    }
}

/// Negation normal form of `!f`.
pub fn neg_nnf(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        Formula::Cmp(op, a, b) => match op.negate() {
            Some(n) => Formula::Cmp(n, a.clone(), b.clone()),
            None => Formula::not(f.clone()),
        },
        Formula::Not(a) => nnf(a),
        Formula::And(a, b) => Formula::or(neg_nnf(a), neg_nnf(b)),
        Formula::Or(a, b) => Formula::and(neg_nnf(a), neg_nnf(b)),
        Formula::Implies(a, b) => Formula::and(nnf(a), neg_nnf(b)),
        Formula::Equiv(a, b) => Formula::or(
            Formula::and(nnf(a), neg_nnf(b)),
            Formula::and(neg_nnf(a), nnf(b)),
        ),
        Formula::Forall(v, a) => Formula::exists(v.clone(), neg_nnf(a)),
        Formula::Exists(v, a) => Formula::forall(v.clone(), neg_nnf(a)),
        Formula::Box(..) | Formula::Diamond(..) => Formula::not(f.clone()),
    }
}

/// Replaces `!(a = b)` by `a < b | a > b`.
pub fn expand_neq(f: &Formula) -> Formula {
    match f {
        Formula::Not(inner) => match &**inner {
            Formula::Cmp(CmpOp::Eq, a, b) => Formula::or(
                Formula::Cmp(CmpOp::Lt, a.clone(), b.clone()),
                Formula::Cmp(CmpOp::Gt, a.clone(), b.clone()),
            ),
            _ => Formula::not(expand_neq(inner)),
        },
        Formula::And(a, b) => Formula::and(expand_neq(a), expand_neq(b)),
        Formula::Or(a, b) => Formula::or(expand_neq(a), expand_neq(b)),
        Formula::Implies(a, b) => Formula::implies(expand_neq(a), expand_neq(b)),
        Formula::Equiv(a, b) => Formula::equiv(expand_neq(a), expand_neq(b)),
        Formula::Forall(v, a) => Formula::forall(v.clone(), expand_neq(a)),
        Formula::Exists(v, a) => Formula::exists(v.clone(), expand_neq(a)),
        _ => f.clone(),
    }
}

/// Disjunctive normal form of an NNF formula, treating quantified subformulas as literals.
/// `None` when more than [`DNF_CAP`] disjuncts would be produced.
pub fn dnf_clauses(f: &Formula) -> Option<Vec<Vec<Formula>>> {
    match f {
        Formula::True => Some(vec![vec![]]),
        Formula::False => Some(vec![]),
        Formula::Or(a, b) => {
            let mut l = dnf_clauses(a)?;
            l.extend(dnf_clauses(b)?);
            (l.len() <= DNF_CAP).then_some(l)
        }
        Formula::And(a, b) => {
            let l = dnf_clauses(a)?;
            let r = dnf_clauses(b)?;
            if l.len() * r.len() > DNF_CAP {
                return None;
            }
            let mut out = Vec::with_capacity(l.len() * r.len());
            for x in &l {
                for y in &r {
                    let mut c = x.clone();
                    c.extend(y.iter().cloned());
                    out.push(c);
                }
            }
            Some(out)
        }
        other => Some(vec![vec![other.clone()]]),
    }
}

pub fn from_clauses(clauses: Vec<Vec<Formula>>) -> Formula {
    Formula::disj(clauses.into_iter().map(Formula::conj))
}

pub fn dnf_preprocess(f: &Formula) -> Formula {
    dnf_traced(f, &mut Tracer::default())
}

pub(crate) fn dnf_traced(f: &Formula, tr: &mut Tracer) -> Formula {
    let g = pre(&nnf(f), tr);
    simplify(&g)
}

fn pre(f: &Formula, tr: &mut Tracer) -> Formula {
    match f {
        Formula::And(a, b) => Formula::and(pre(a, tr), pre(b, tr)),
        Formula::Or(a, b) => Formula::or(pre(a, tr), pre(b, tr)),
        Formula::Exists(v, a) => distribute_exists(v, &pre(a, tr), tr),
        Formula::Forall(v, a) => {
            let dual = distribute_exists(v, &neg_nnf(&pre(a, tr)), tr);
            neg_nnf(&dual)
        }
        other => other.clone(),
    }
}

fn distribute_exists(v: &Var, body: &Formula, tr: &mut Tracer) -> Formula {
    let Some(clauses) = dnf_clauses(body) else {
        tr.note("dnf-cap", &format!("kept \\exists {v} undistributed"));
        return Formula::exists(v.clone(), body.clone());
    };
    if clauses.len() > 1 {
        tr.method(v, Method::DistributeOverDisjuncts);
        tr.note("distribute-exists", &format!("\\exists {v} over {} disjuncts", clauses.len()));
    }
    let mut out = Vec::with_capacity(clauses.len());
    for clause in clauses {
        let (indep, dep): (Vec<Formula>, Vec<Formula>) = clause.into_iter().partition(|c| !occurs_free(c, v));
        if !indep.is_empty() && !dep.is_empty() {
            tr.method(v, Method::PullIndependent);
            tr.note("pull-independent", &format!("pulled {} conjuncts out of \\exists {v}", indep.len()));
        }
        let mut parts = indep;
        if !dep.is_empty() {
            parts.push(Formula::exists(v.clone(), Formula::conj(dep)));
        }
        out.push(Formula::conj(parts));
    }
    Formula::disj(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    #[test]
    fn pulls_independent_disjunct() {
        let f = parse_formula("\\exists x (p > 0 | x > q)").unwrap();
        assert_eq!(dnf_preprocess(&f), parse_formula("p > 0 | \\exists x (x > q)").unwrap());
    }

    #[test]
    fn splits_over_branches() {
        let f = parse_formula("\\exists v (v >= 0 & (a > 0 | v < b))").unwrap();
        let g = dnf_preprocess(&f);
        assert_eq!(g, parse_formula("a > 0 & \\exists v (v >= 0) | \\exists v (v >= 0 & v < b)").unwrap());
    }

    #[test]
    fn universal_dual() {
        let f = parse_formula("\\forall x (x < a | b > 0)").unwrap();
        assert_eq!(dnf_preprocess(&f), parse_formula("b > 0 | \\forall x (x < a)").unwrap());
    }

    #[test]
    fn nnf_keeps_disequality() {
        let f = parse_formula("!(x = 1 | y < 2)").unwrap();
        assert_eq!(nnf(&f), parse_formula("!(x = 1) & y >= 2").unwrap());
    }
}
