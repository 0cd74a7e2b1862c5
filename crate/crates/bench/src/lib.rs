//! Shared fixtures for the kernel benchmarks.

use std::path::PathBuf;

use hsmon_core::ast::{CmpOp, Formula, Term, Var};
use hsmon_core::{parse_term, run_evaluation, EvalOptions, Scenario, State, TransitionPair};

pub fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.hp"));
    Scenario::load(path).expect("scenario loads")
}

/// Consecutive recorded states of a short simulation, as transition pairs.
pub fn recorded_pairs(s: &Scenario, runs: usize, steps: usize) -> Vec<TransitionPair> {
    let opts = EvalOptions { runs, steps, ..EvalOptions::from_scenario(s) };
    let (_, trace) = run_evaluation(s, &opts).expect("simulation runs");
    let mut out = Vec::new();
    for run in trace.runs() {
        let rows = trace.run(run);
        for w in rows.windows(2) {
            if let Ok(p) = TransitionPair::new(w[0].state.clone(), w[1].state.clone()) {
                out.push(p);
            }
        }
    }
    out
}

/// `\exists x` over a box and `n` linear constraints in `x`, `y`, `z`.
pub fn linear_existential(n: usize) -> (Var, Formula) {
    let x = Var::pre("x");
    let mut lits = vec![Formula::between(Term::num(-50.0), Term::var("x"), Term::num(50.0))];
    for i in 0..n {
        let k = i as f64;
        let lhs = Term::add(
            Term::add(Term::mul(Term::num(1.0 + k), Term::var("x")), Term::mul(Term::num(k - 2.0), Term::var("y"))),
            Term::mul(Term::num(3.0 - k), Term::var("z")),
        );
        let op = if i % 2 == 0 { CmpOp::Le } else { CmpOp::Ge };
        lits.push(Formula::cmp(op, lhs, Term::num(k - 1.0)));
    }
    (x, Formula::conj(lits))
}

pub fn point() -> State {
    State::from_pairs([("x", 0.5), ("y", -1.25), ("z", 2.0)])
}

/// Straight-flight relative dynamics with a turning ownship.
pub fn flight_ode() -> (Vec<(String, Term)>, State) {
    let eqs = [
        ("x", "-1 + cos(theta) + w*y"),
        ("y", "sin(theta) - w*x"),
        ("theta", "-w"),
        ("t", "1"),
    ]
    .into_iter()
    .map(|(v, e)| (v.to_string(), parse_term(e).expect("term parses")))
    .collect();
    let start = State::from_pairs([("x", 4.0), ("y", -3.0), ("theta", 0.7), ("w", 1.0), ("t", 0.0)]);
    (eqs, start)
}
