use crate::ast::{Formula, Program, Var};
use crate::error::{Error, Result};
use crate::vars::substitute;

use super::Tracer;

/// Rewrites `<p>G` structurally, innermost modality first.
pub fn eliminate_modalities(f: &Formula) -> Result<Formula> {
    eliminate_traced(f, &mut Tracer::default())
}

pub(crate) fn eliminate_traced(f: &Formula, tr: &mut Tracer) -> Result<Formula> {
    Ok(match f {
        Formula::True | Formula::False | Formula::Cmp(..) => f.clone(),
        Formula::Not(a) => Formula::not(eliminate_traced(a, tr)?),
        Formula::And(a, b) => Formula::and(eliminate_traced(a, tr)?, eliminate_traced(b, tr)?),
        Formula::Or(a, b) => Formula::or(eliminate_traced(a, tr)?, eliminate_traced(b, tr)?),
        Formula::Implies(a, b) => Formula::implies(eliminate_traced(a, tr)?, eliminate_traced(b, tr)?),
        Formula::Equiv(a, b) => Formula::equiv(eliminate_traced(a, tr)?, eliminate_traced(b, tr)?),
        Formula::Forall(v, a) => Formula::forall(v.clone(), eliminate_traced(a, tr)?),
        Formula::Exists(v, a) => Formula::exists(v.clone(), eliminate_traced(a, tr)?),
        Formula::Box(..) => return Err(Error::BoxModality),
        Formula::Diamond(p, g) => {
            let g = eliminate_traced(g, tr)?;
            diamond(p, g, tr)?
        }
    })
}

fn diamond(p: &Program, g: Formula, tr: &mut Tracer) -> Result<Formula> {
    Ok(match p {
        Program::Choice(a, b) => {
            tr.step("diamond-choice", p);
            Formula::or(diamond(a, g.clone(), tr)?, diamond(b, g, tr)?)
        }
        Program::Seq(a, b) => {
            let inner = diamond(b, g, tr)?;
            diamond(a, inner, tr)?
        }
        Program::Assign(x, e) => {
            tr.step("diamond-assign", p);
            substitute(&g, &Var::pre(x.clone()), e)?
        }
        Program::AssignAny(x) => {
            tr.step("diamond-nondet-assign", p);
            Formula::exists(Var::pre(x.clone()), g)
        }
        Program::Test(h) => {
            tr.step("diamond-test", p);
            let h = eliminate_traced(h, tr)?;
            match h {
                Formula::True => g,
                h => Formula::and(h, g),
            }
        }
        Program::Ode(..) => return Err(Error::RawOde),
        Program::Loop(_) => return Err(Error::LoopUnsupported),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    #[test]
    fn two_branch_program() {
        let f = parse_formula("<a := a + 1 ++ b := *; ?b <= 3>(a_post = a & b_post = b)").unwrap();
        let g = eliminate_modalities(&f).unwrap();
        let expected =
            parse_formula("(a_post = a + 1 & b_post = b) | \\exists b (b <= 3 & (a_post = a & b_post = b))").unwrap();
        assert_eq!(g, expected);
    }

    #[test]
    fn trivial_test() {
        let f = parse_formula("<?true>x > 0").unwrap();
        assert_eq!(eliminate_modalities(&f).unwrap(), parse_formula("x > 0").unwrap());
    }

    #[test]
    fn rejects_odes_boxes_loops() {
        assert_eq!(eliminate_modalities(&parse_formula("<{x' = 1}>true").unwrap()), Err(Error::RawOde));
        assert_eq!(eliminate_modalities(&parse_formula("[x := 1]true").unwrap()), Err(Error::BoxModality));
        assert_eq!(eliminate_modalities(&parse_formula("<{x := 1}*>true").unwrap()), Err(Error::LoopUnsupported));
    }
}
