use hsmon_core::ast::{CmpOp, Formula, Term, Var};
use hsmon_core::qe::dnf::{dnf_preprocess, expand_neq, neg_nnf, nnf};
use hsmon_core::qe::fm::eliminate_exists;
use hsmon_core::qe::{decide, instantiate_post_states, synthesize, WitnessConfig};
use hsmon_core::{eval_formula, State, TransitionPair};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Eq), Just(CmpOp::Ge), Just(CmpOp::Gt)]
}

fn small() -> impl Strategy<Value = f64> {
    (-6i32..=6).prop_map(f64::from)
}

/// `a*x + b*y + c*z op d` with small integer coefficients.
fn linear_atom() -> impl Strategy<Value = Formula> {
    (small(), small(), small(), op(), small()).prop_map(|(a, b, c, op, d)| {
        let lhs = Term::add(
            Term::add(Term::mul(Term::num(a), Term::var("x")), Term::mul(Term::num(b), Term::var("y"))),
            Term::mul(Term::num(c), Term::var("z")),
        );
        Formula::cmp(op, lhs, Term::num(d))
    })
}

fn nonlinear_atom() -> impl Strategy<Value = Formula> {
    (small(), op(), small()).prop_map(|(a, op, d)| {
        Formula::cmp(op, Term::add(Term::mul(Term::var("x"), Term::var("y")), Term::mul(Term::num(a), Term::var("z"))), Term::num(d))
    })
}

fn qf() -> impl Strategy<Value = Formula> {
    prop_oneof![3 => linear_atom(), 1 => nonlinear_atom()].prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Formula::equiv(a, b)),
        ]
    })
}

/// Continuous coordinates, so that boundary ties have probability zero.
fn point() -> impl Strategy<Value = State> {
    (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y, z)| State::from_pairs([("x", x), ("y", y), ("z", z)]))
}

/// Witness search needs a bounded range for the quantified variable.
fn boxed(mut lits: Vec<Formula>) -> Formula {
    lits.push(Formula::between(Term::num(-50.0), Term::var("x"), Term::num(50.0)));
    Formula::conj(lits)
}

fn pair() -> impl Strategy<Value = TransitionPair> {
    (point(), point()).prop_map(|(a, b)| TransitionPair::new(a, b).unwrap())
}

fn cfg() -> WitnessConfig {
    WitnessConfig::default().with_tol(TOL)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn normal_forms_preserve_truth(f in qf(), s in point()) {
        let truth = eval_formula(&f, &s, TOL).unwrap();
        prop_assert_eq!(eval_formula(&nnf(&f), &s, TOL).unwrap(), truth);
        prop_assert_eq!(eval_formula(&neg_nnf(&f), &s, TOL).unwrap(), !truth);
        prop_assert_eq!(eval_formula(&expand_neq(&nnf(&f)), &s, TOL).unwrap(), truth);
        prop_assert_eq!(eval_formula(&dnf_preprocess(&f), &s, TOL).unwrap(), truth);
    }

    #[test]
    fn fourier_motzkin_agrees_with_witness_search(
        lits in prop::collection::vec(linear_atom(), 1..5),
        s in point(),
    ) {
        let body = boxed(lits);
        let x = Var::pre("x");
        let quantified = Formula::exists(x.clone(), body.clone());
        let eliminated = eliminate_exists(&x, &body).unwrap();
        prop_assert!(!eliminated.has_quantifier());
        let by_fm = eval_formula(&eliminated, &s, TOL).unwrap();
        let by_search = decide(&quantified, &s, &cfg()).unwrap();
        prop_assert_eq!(by_fm, by_search, "{} vs {}", quantified, eliminated);
    }

    #[test]
    fn post_state_instantiation_is_sound(phi in qf(), p in pair()) {
        // \exists x (phi & x_post = x) is phi with x replaced by x_post.
        let x = Var::pre("x");
        let f = Formula::exists(
            x.clone(),
            Formula::and(phi, Formula::eq(Term::Var(x.to_post()), Term::Var(x.clone()))),
        );
        let g = instantiate_post_states(&f).unwrap();
        prop_assert!(!g.has_quantifier(), "{} kept quantifiers", g);
        prop_assert_eq!(decide(&g, &p, &cfg()).unwrap(), decide(&f, &p, &cfg()).unwrap(), "{} -> {}", f, g);
    }

    #[test]
    fn defined_variables_are_eliminated_soundly(phi in qf(), a in small(), b in small(), s in point()) {
        // \exists x (x = a*y + b & phi) is phi at x = a*y + b.
        let x = Var::pre("x");
        let def = Term::add(Term::mul(Term::num(a), Term::var("y")), Term::num(b));
        let f = Formula::exists(x.clone(), Formula::and(Formula::eq(Term::var("x"), def), phi));
        let report = synthesize(&f).unwrap();
        prop_assert_eq!(report.residual_quantifiers, 0, "{}", report.output);
        prop_assert_eq!(
            eval_formula(&report.output, &s, TOL).unwrap(),
            decide(&f, &s, &cfg()).unwrap(),
            "{} -> {}", f, report.output
        );
    }

    #[test]
    fn synthesis_preserves_truth_of_linear_existentials(
        lits in prop::collection::vec(linear_atom(), 1..4),
        s in point(),
    ) {
        let f = Formula::exists(Var::pre("x"), boxed(lits));
        let report = synthesize(&f).unwrap();
        prop_assert_eq!(report.residual_quantifiers, 0);
        prop_assert_eq!(eval_formula(&report.output, &s, TOL).unwrap(), decide(&f, &s, &cfg()).unwrap());
    }
}
