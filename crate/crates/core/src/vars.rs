//! Static variable analysis and capture-avoiding substitution.

use std::collections::BTreeSet;

use crate::ast::{Formula, Program, Term, Var};
use crate::error::{Error, Result};

pub fn term_vars(t: &Term) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    collect_term(t, &mut out);
    out
}

fn collect_term(t: &Term, out: &mut BTreeSet<Var>) {
    match t {
        Term::Var(v) => {
            out.insert(v.clone());
        }
        Term::Num(_) => {}
        Term::Add(a, b)
        | Term::Sub(a, b)
        | Term::Mul(a, b)
        | Term::Div(a, b)
        | Term::Min(a, b)
        | Term::Max(a, b) => {
            collect_term(a, out);
            collect_term(b, out);
        }
        Term::Pow(a, _) | Term::Neg(a) => collect_term(a, out),
        Term::Func(_, args) => args.iter().for_each(|a| collect_term(a, out)),
    }
}

pub fn term_mentions(t: &Term, v: &Var) -> bool {
    match t {
        Term::Var(w) => w == v,
        Term::Num(_) => false,
        Term::Add(a, b)
        | Term::Sub(a, b)
        | Term::Mul(a, b)
        | Term::Div(a, b)
        | Term::Min(a, b)
        | Term::Max(a, b) => term_mentions(a, v) || term_mentions(b, v),
        Term::Pow(a, _) | Term::Neg(a) => term_mentions(a, v),
        Term::Func(_, args) => args.iter().any(|a| term_mentions(a, v)),
    }
}

/// Free variables; plain and post-state copies are distinct entries.
pub fn free_vars(f: &Formula) -> BTreeSet<Var> {
    match f {
        Formula::True | Formula::False => BTreeSet::new(),
        Formula::Cmp(_, a, b) => {
            let mut s = term_vars(a);
            collect_term(b, &mut s);
            s
        }
        Formula::Not(a) => free_vars(a),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
            let mut s = free_vars(a);
            s.extend(free_vars(b));
            s
        }
        Formula::Forall(v, a) | Formula::Exists(v, a) => {
            let mut s = free_vars(a);
            s.remove(v);
            s
        }
        Formula::Box(p, a) | Formula::Diamond(p, a) => {
            let mbv = must_bound_vars(p);
            let mut s = program_free_vars(p);
            s.extend(free_vars(a).into_iter().filter(|v| v.post || !mbv.contains(&v.name)));
            s
        }
    }
}

pub fn free_var_names(f: &Formula) -> BTreeSet<String> {
    free_vars(f).into_iter().map(|v| v.to_string()).collect()
}

/// Whether `v` occurs free in `f`.
pub fn occurs_free(f: &Formula, v: &Var) -> bool {
    match f {
        Formula::True | Formula::False => false,
        Formula::Cmp(_, a, b) => term_mentions(a, v) || term_mentions(b, v),
        Formula::Not(a) => occurs_free(a, v),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
            occurs_free(a, v) || occurs_free(b, v)
        }
        Formula::Forall(w, a) | Formula::Exists(w, a) => w != v && occurs_free(a, v),
        Formula::Box(..) | Formula::Diamond(..) => free_vars(f).contains(v),
    }
}

/// Variables that some run of `p` may write.
pub fn bound_vars(p: &Program) -> BTreeSet<String> {
    match p {
        Program::Assign(x, _) | Program::AssignAny(x) => BTreeSet::from([x.clone()]),
        Program::Test(_) => BTreeSet::new(),
        Program::Ode(eqs, _) => eqs.iter().map(|(x, _)| x.clone()).collect(),
        Program::Seq(a, b) | Program::Choice(a, b) => {
            let mut s = bound_vars(a);
            s.extend(bound_vars(b));
            s
        }
        Program::Loop(a) => bound_vars(a),
    }
}

/// Variables that every run of `p` writes.
pub fn must_bound_vars(p: &Program) -> BTreeSet<String> {
    match p {
        Program::Assign(x, _) | Program::AssignAny(x) => BTreeSet::from([x.clone()]),
        Program::Test(_) | Program::Loop(_) => BTreeSet::new(),
        Program::Ode(eqs, _) => eqs.iter().map(|(x, _)| x.clone()).collect(),
        Program::Seq(a, b) => {
            let mut s = must_bound_vars(a);
            s.extend(must_bound_vars(b));
            s
        }
        Program::Choice(a, b) => must_bound_vars(a).intersection(&must_bound_vars(b)).cloned().collect(),
    }
}

/// Variables whose initial value may influence `p`.
pub fn program_free_vars(p: &Program) -> BTreeSet<Var> {
    match p {
        Program::Assign(_, e) => term_vars(e),
        Program::AssignAny(_) => BTreeSet::new(),
        Program::Test(h) => free_vars(h),
        Program::Ode(eqs, dom) => {
            let mut s = free_vars(dom);
            for (x, e) in eqs {
                s.insert(Var::pre(x.clone()));
                collect_term(e, &mut s);
            }
            s
        }
        Program::Seq(a, b) => {
            let mbv = must_bound_vars(a);
            let mut s = program_free_vars(a);
            s.extend(program_free_vars(b).into_iter().filter(|v| v.post || !mbv.contains(&v.name)));
            s
        }
        Program::Choice(a, b) => {
            let mut s = program_free_vars(a);
            s.extend(program_free_vars(b));
            s
        }
        Program::Loop(a) => program_free_vars(a),
    }
}

/// Every variable name mentioned anywhere in `p`, plain or post.
pub fn program_names(p: &Program) -> BTreeSet<String> {
    let mut s: BTreeSet<String> = bound_vars(p);
    fn walk(p: &Program, s: &mut BTreeSet<String>) {
        match p {
            Program::Assign(_, e) => s.extend(term_vars(e).into_iter().map(|v| v.name)),
            Program::AssignAny(_) => {}
            Program::Test(h) => s.extend(formula_names(h)),
            Program::Ode(eqs, dom) => {
                s.extend(formula_names(dom));
                for (_, e) in eqs {
                    s.extend(term_vars(e).into_iter().map(|v| v.name));
                }
            }
            Program::Seq(a, b) | Program::Choice(a, b) => {
                walk(a, s);
                walk(b, s);
            }
            Program::Loop(a) => walk(a, s),
        }
    }
    walk(p, &mut s);
    s
}

/// Every variable name mentioned in `f`, including bound ones.
pub fn formula_names(f: &Formula) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    fn walk(f: &Formula, s: &mut BTreeSet<String>) {
        match f {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                s.extend(term_vars(a).into_iter().map(|v| v.name));
                s.extend(term_vars(b).into_iter().map(|v| v.name));
            }
            Formula::Not(a) => walk(a, s),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
                walk(a, s);
                walk(b, s);
            }
            Formula::Forall(v, a) | Formula::Exists(v, a) => {
                s.insert(v.name.clone());
                walk(a, s);
            }
            Formula::Box(p, a) | Formula::Diamond(p, a) => {
                s.extend(program_names(p));
                walk(a, s);
            }
        }
    }
    walk(f, &mut s);
    s
}

/// `base` if unused, else `base_1`, `base_2`, ...
pub fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(base) {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}_{i}")).find(|n| !avoid.contains(n)).unwrap()
}

pub fn subst_term(t: &Term, x: &Var, e: &Term) -> Term {
    match t {
        Term::Var(v) if v == x => e.clone(),
        Term::Var(_) | Term::Num(_) => t.clone(),
        Term::Add(a, b) => Term::add(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Sub(a, b) => Term::sub(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Mul(a, b) => Term::mul(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Div(a, b) => Term::div(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Min(a, b) => Term::min(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Max(a, b) => Term::max(subst_term(a, x, e), subst_term(b, x, e)),
        Term::Pow(a, n) => Term::pow(subst_term(a, x, e), *n),
        Term::Neg(a) => Term::neg(subst_term(a, x, e)),
        Term::Func(name, args) => Term::Func(name.clone(), args.iter().map(|a| subst_term(a, x, e)).collect()),
    }
}

/// `f[x ↦ e]`, renaming binders that would capture variables of `e`.
/// Modalities are rejected; eliminate them first.
pub fn substitute(f: &Formula, x: &Var, e: &Term) -> Result<Formula> {
    let evars = term_vars(e);
    subst_inner(f, x, e, &evars)
}

fn subst_inner(f: &Formula, x: &Var, e: &Term, evars: &BTreeSet<Var>) -> Result<Formula> {
    Ok(match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Cmp(op, a, b) => Formula::Cmp(*op, subst_term(a, x, e), subst_term(b, x, e)),
        Formula::Not(a) => Formula::not(subst_inner(a, x, e, evars)?),
        Formula::And(a, b) => Formula::and(subst_inner(a, x, e, evars)?, subst_inner(b, x, e, evars)?),
        Formula::Or(a, b) => Formula::or(subst_inner(a, x, e, evars)?, subst_inner(b, x, e, evars)?),
        Formula::Implies(a, b) => Formula::implies(subst_inner(a, x, e, evars)?, subst_inner(b, x, e, evars)?),
        Formula::Equiv(a, b) => Formula::equiv(subst_inner(a, x, e, evars)?, subst_inner(b, x, e, evars)?),
        Formula::Forall(v, a) | Formula::Exists(v, a) => {
            let is_all = matches!(f, Formula::Forall(..));
            let rebuild = |v: Var, body: Formula| {
                if is_all {
                    Formula::forall(v, body)
                } else {
                    Formula::exists(v, body)
                }
            };
            if v == x || !occurs_free(a, x) {
                return Ok(f.clone());
            }
            if evars.contains(v) {
                let mut avoid = formula_names(a);
                avoid.extend(evars.iter().map(|w| w.name.clone()));
                avoid.insert(x.name.clone());
                let fresh = Var { name: fresh_name(&v.name, &avoid), post: v.post };
                let renamed = subst_inner(a, v, &Term::Var(fresh.clone()), &BTreeSet::from([fresh.clone()]))?;
                rebuild(fresh, subst_inner(&renamed, x, e, evars)?)
            } else {
                rebuild(v.clone(), subst_inner(a, x, e, evars)?)
            }
        }
        Formula::Box(..) | Formula::Diamond(..) => {
            return Err(Error::NormalForm(format!("substitution into modality `{f}`")))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_formula, parse_program};

    fn names(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn bound_vars_of_programs() {
        assert_eq!(bound_vars(&parse_program("x := x + 1").unwrap()), names(&["x"]));
        let plant = parse_program(
            "t := 0; {x' = -vo + vi*cos(theta) + w*y, y' = vi*sin(theta) - w*x, theta' = -w, t' = 1 & t <= eps}; ?t = eps",
        )
        .unwrap();
        assert_eq!(bound_vars(&plant), names(&["t", "theta", "x", "y"]));
        assert_eq!(bound_vars(&parse_program("?true").unwrap()), BTreeSet::new());
    }

    #[test]
    fn free_vars_distinguish_post() {
        let f = parse_formula("x_post = x").unwrap();
        assert_eq!(free_var_names(&f), names(&["x", "x_post"]));
        let g = parse_formula("\\exists y (y > x)").unwrap();
        assert_eq!(free_var_names(&g), names(&["x"]));
        let h = parse_formula("<x := 1; y := x>(y > z)").unwrap();
        assert_eq!(free_var_names(&h), names(&["z"]));
    }

    #[test]
    fn must_bound_of_choice_is_intersection() {
        let p = parse_program("a := 1; b := 2 ++ a := 3").unwrap();
        assert_eq!(must_bound_vars(&p), names(&["a"]));
    }

    #[test]
    fn substitution_avoids_capture() {
        let f = parse_formula("\\exists y (y > x)").unwrap();
        let g = substitute(&f, &Var::pre("x"), &Term::var("y")).unwrap();
        match &g {
            Formula::Exists(v, body) => {
                assert_ne!(v.name, "y");
                assert!(occurs_free(body, &Var::pre("y")));
            }
            other => panic!("unexpected {other}"),
        }
        let shadow = parse_formula("\\exists x (x > 0)").unwrap();
        assert_eq!(substitute(&shadow, &Var::pre("x"), &Term::num(1.0)).unwrap(), shadow);
    }

    #[test]
    fn fresh_names_skip_used() {
        assert_eq!(fresh_name("x", &names(&["y"])), "x");
        assert_eq!(fresh_name("x", &names(&["x", "x_1"])), "x_2");
    }
}
