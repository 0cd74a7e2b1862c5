//! Fourier–Motzkin elimination of a single existential over linear constraints.

use crate::ast::{CmpOp, Formula, Term, Var};
use crate::error::{Error, Result};
use crate::simplify::{simplify, simplify_term};
use crate::vars::{occurs_free, substitute};

use super::dnf::{dnf_clauses, expand_neq, neg_nnf, nnf};
use super::linear::decompose;

struct Bound {
    term: Term,
    strict: bool,
}

/// Splits `lhs op rhs` into `x op' bound` form; `None` if `x` cancels out.
fn solve_for(op: CmpOp, lhs: &Term, rhs: &Term, x: &Var) -> Result<Option<(CmpOp, Term)>> {
    let (a, b) = decompose(&Term::sub(lhs.clone(), rhs.clone()), x)?;
    let Some(c) = a.as_num() else {
        return Err(Error::SignAmbiguous(x.to_string()));
    };
    if c == 0.0 {
        return Ok(None);
    }
    let bound = simplify_term(&Term::div(Term::neg(b), Term::num(c)));
    let op = if c < 0.0 { op.flip() } else { op };
    Ok(Some((op, bound)))
}

/// `\exists x (conjunction of literals)` with every literal linear in `x`.
pub fn eliminate_conjunction(x: &Var, literals: &[Formula]) -> Result<Formula> {
    let mut pass = Vec::new();
    let mut lower: Vec<Bound> = Vec::new();
    let mut upper: Vec<Bound> = Vec::new();
    for (i, lit) in literals.iter().enumerate() {
        if !occurs_free(lit, x) {
            pass.push(lit.clone());
            continue;
        }
        let Formula::Cmp(op, l, r) = lit else {
            return Err(Error::Nonlinear(format!("{x} in non-atomic `{lit}`")));
        };
        let Some((op, bound)) = solve_for(*op, l, r, x)? else {
            pass.push(simplify(&substitute(lit, x, &Term::num(0.0))?));
            continue;
        };
        match op {
            CmpOp::Eq => {
                let mut rest = Vec::with_capacity(literals.len());
                rest.push(Formula::eq(bound.clone(), bound.clone()));
                for (j, other) in literals.iter().enumerate() {
                    if j != i {
                        rest.push(substitute(other, x, &bound)?);
                    }
                }
                return Ok(simplify(&Formula::conj(rest)));
            }
            CmpOp::Lt => upper.push(Bound { term: bound, strict: true }),
            CmpOp::Le => upper.push(Bound { term: bound, strict: false }),
            CmpOp::Gt => lower.push(Bound { term: bound, strict: true }),
            CmpOp::Ge => lower.push(Bound { term: bound, strict: false }),
        }
    }
    for lo in &lower {
        for hi in &upper {
            let op = if lo.strict || hi.strict { CmpOp::Lt } else { CmpOp::Le };
            pass.push(Formula::Cmp(op, lo.term.clone(), hi.term.clone()));
        }
    }
    Ok(simplify(&Formula::conj(pass)))
}

/// Eliminates `\exists x body` for quantifier-free `body`.
pub fn eliminate_exists(x: &Var, body: &Formula) -> Result<Formula> {
    if body.has_quantifier() || body.has_modality() {
        return Err(Error::NotQuantifierFree(body.to_string()));
    }
    let clauses = dnf_clauses(&nnf(&expand_neq(&nnf(body))))
        .ok_or_else(|| Error::Nonlinear(format!("{x}: disjunctive form too large")))?;
    let mut out = Vec::with_capacity(clauses.len());
    for clause in clauses {
        out.push(eliminate_conjunction(x, &clause)?);
    }
    Ok(simplify(&Formula::disj(out)))
}

/// Eliminates `\forall x body` as `!\exists x !body`.
pub fn eliminate_forall(x: &Var, body: &Formula) -> Result<Formula> {
    let inner = eliminate_exists(x, &neg_nnf(body))?;
    Ok(simplify(&neg_nnf(&inner)))
}

/// Applies [`eliminate_exists`] to `\exists x body`; convenience entry for single quantifiers.
pub fn fourier_motzkin(f: &Formula) -> Result<Formula> {
    match f {
        Formula::Exists(x, body) => eliminate_exists(x, body),
        Formula::Forall(x, body) => eliminate_forall(x, body),
        other => Ok(other.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    #[test]
    fn interval_nonemptiness() {
        let f = parse_formula("\\exists x (x >= l & x <= u)").unwrap();
        assert_eq!(fourier_motzkin(&f).unwrap(), parse_formula("l <= u").unwrap());
    }

    #[test]
    fn band_against_threshold() {
        let f = parse_formula("\\exists v (vh - D <= v & v <= vh + D & v > c)").unwrap();
        let g = fourier_motzkin(&f).unwrap();
        assert_eq!(g, parse_formula("vh - D <= vh + D & c < vh + D").unwrap());
    }

    #[test]
    fn equality_substitution() {
        let f = parse_formula("\\exists x (2*x = y & x < 3)").unwrap();
        assert_eq!(fourier_motzkin(&f).unwrap(), parse_formula("y/2 < 3").unwrap());
    }

    #[test]
    fn sign_ambiguous_and_nonlinear() {
        let f = parse_formula("\\exists x (a*x > 1)").unwrap();
        assert!(matches!(fourier_motzkin(&f), Err(Error::SignAmbiguous(_))));
        let g = parse_formula("\\exists x (x^2 > 1)").unwrap();
        assert!(matches!(fourier_motzkin(&g), Err(Error::Nonlinear(_))));
    }

    #[test]
    fn universal() {
        let f = parse_formula("\\forall y (y >= a - 1 & y <= a + 1 -> y > c)").unwrap();
        assert_eq!(fourier_motzkin(&f).unwrap(), parse_formula("a - 1 > c").unwrap());
    }
}
