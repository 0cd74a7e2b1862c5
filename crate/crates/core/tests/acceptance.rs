//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use hsmon_core::ast::{CmpOp, Formula, Program, Term, Var};
use hsmon_core::estimator::{contains_truth, update, Estimate};
use hsmon_core::evaluation::{default_drift, episode_seed, prepare};
use hsmon_core::monitor::variation_bounds;
use hsmon_core::program::overapproximate_plant;
use hsmon_core::qe::dnf::{dnf_preprocess, expand_neq, neg_nnf, nnf};
use hsmon_core::qe::fm::eliminate_exists;
use hsmon_core::qe::modal::eliminate_modalities;
use hsmon_core::qe::{decide, instantiate_post_states, synthesize, WitnessConfig};
use hsmon_core::sandbox::{ControllerMode, FallbackReason, InjectionPlan, InvariantCheck};
use hsmon_core::sim::{check_run_compatibility, run_program_rng, RunConfig, RunOutcome};
use hsmon_core::simplify::simplify;
use hsmon_core::{eval_formula, parse_formula, run_evaluation, EvalOptions, Scenario, State, TransitionPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const TOL: f64 = 1e-9;
const SYNTH_BUDGET: Duration = Duration::from_secs(1);
const EVAL_BUDGET: Duration = Duration::from_secs(120);
const SANDBOX_BUDGET: Duration = Duration::from_secs(300);
const VARIATION_BUDGET: Duration = Duration::from_secs(60);
const SENSOR_PRECISION: (f64, f64) = (0.84, 1.0);
const SENSOR_RECALL: (f64, f64) = (0.83, 1.0);
const SHORT_SENSOR_RECALL: (f64, f64) = (0.6, 1.0);
const ADVERSARIAL_EPISODES: usize = 10_000;
const ADVERSARIAL_STEPS: usize = 10;
const SPIKE_EPISODES: usize = 250;
const SENSOR_TRACES: usize = 1_000;
const ESTIMATOR_SEQUENCES: usize = 10_000;
const ORACLE_PAIRS: usize = 1_000;
const REWRITE_VALUATIONS: usize = 1_000;
const FM_INSTANCES: usize = 1_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(format!("{}/../../scenarios/{name}.hp", env!("CARGO_MANIFEST_DIR"))).expect("scenario loads")
}

fn within(x: Option<f64>, (lo, hi): (f64, f64)) -> bool {
    x.is_some_and(|v| lo <= v && v <= hi)
}

fn fmt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into())
}

fn two_branch_synthesis() -> Outcome {
    let start = Instant::now();
    let s = scenario("two_branch");
    let m = s.monitor("exact").unwrap();
    let reference = parse_formula("(a_post = a + 1 & b_post = b) | (a_post = a & b_post <= 3)").unwrap();
    let mut disagreements = 0;
    let grid: Vec<f64> = (-1..=5).map(f64::from).collect();
    for &a in &grid {
        for &b in &grid {
            for &a1 in &grid {
                for &b1 in &grid {
                    let pair = TransitionPair::new(State::from_pairs([("a", a), ("b", b)]), State::from_pairs([("a", a1), ("b", b1)])).unwrap();
                    if eval_formula(&m.formula, &pair, TOL).unwrap() != eval_formula(&reference, &pair, TOL).unwrap() {
                        disagreements += 1;
                    }
                }
            }
        }
    }
    let took = start.elapsed();
    Outcome {
        pass: disagreements == 0 && took < SYNTH_BUDGET,
        detail: format!("{} over 2401 grid points, {disagreements} disagreements, {took:.2?} (budget {SYNTH_BUDGET:?})", m.formula),
    }
}

fn full_evaluation(name: &str, runs: usize, steps: usize) -> hsmon_core::PRReport {
    let s = scenario(name);
    let opts = EvalOptions { runs, steps, ..EvalOptions::from_scenario(&s) };
    run_evaluation(&s, &opts).unwrap().0
}

fn exact_and_disturbance_monitors() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["watertank", "watertank_actuator", "flight", "flight_actuator"] {
        let start = Instant::now();
        let r = full_evaluation(name, 100, 50);
        let took = start.elapsed();
        let ok = r.precision == Some(1.0) && r.recall == Some(1.0) && took < EVAL_BUDGET;
        pass &= ok;
        parts.push(format!("{name} [{}] P={} R={} in {took:.2?}", r.monitor, fmt(r.precision), fmt(r.recall)));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn sensor_monitors() -> Outcome {
    let start = Instant::now();
    let tank = full_evaluation("watertank_sensor", 100, 50);
    let tank_time = start.elapsed();
    let start = Instant::now();
    let flight = full_evaluation("flight_sensor", 5, 15);
    let flight_time = start.elapsed();
    let pass = within(tank.precision, SENSOR_PRECISION)
        && within(tank.recall, SENSOR_RECALL)
        && within(flight.recall, SHORT_SENSOR_RECALL)
        && tank_time < EVAL_BUDGET
        && flight_time < EVAL_BUDGET;
    Outcome {
        pass,
        detail: format!(
            "watertank_sensor 100x50 P={} (want {:?}) R={} (want {:?}) in {tank_time:.2?}; flight_sensor 5x15 P={} R={} (want {:?}) in {flight_time:.2?}",
            fmt(tank.precision),
            SENSOR_PRECISION,
            fmt(tank.recall),
            SENSOR_RECALL,
            fmt(flight.precision),
            fmt(flight.recall),
            SHORT_SENSOR_RECALL
        ),
    }
}

const SANDBOXED: [&str; 4] = ["watertank", "watertank_actuator", "flight", "flight_actuator"];

fn sandbox_keeps_invariant() -> Outcome {
    let start = Instant::now();
    let per = ADVERSARIAL_EPISODES / SANDBOXED.len();
    let mut parts = Vec::new();
    let mut pass = true;
    for name in SANDBOXED {
        let s = scenario(name);
        let sb = prepare(&s, &s.model_kind, 0)
            .unwrap()
            .with_controller(ControllerMode::Adversarial)
            .with_invariant_check(InvariantCheck::Strict);
        let (violations, errors, fallbacks): (usize, usize, usize) = (0..per)
            .into_par_iter()
            .map(|run| {
                let seed = episode_seed(0xAD5, run);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let st = s.sample_start(&mut rng).unwrap();
                match sb.run_episode(run, st, ADVERSARIAL_STEPS, seed) {
                    Ok((_, outs)) => (
                        outs.iter().filter(|o| !o.invariant_after).count(),
                        0,
                        outs.iter().filter(|o| o.fallback_reason.is_some()).count(),
                    ),
                    Err(_) => (0, 1, 0),
                }
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));

        let spiked = sb.clone().with_controller(ControllerMode::Model).with_invariant_check(InvariantCheck::Record);
        let (mut caught, mut missed, mut unrecovered) = (0, 0, 0);
        for run in 0..SPIKE_EPISODES {
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(0x5B1, run));
            let at = rng.gen_range(2..=6);
            let sb = spiked.clone().with_plan(InjectionPlan::Scripted(BTreeMap::from([(at, 0.3)])));
            let st = s.sample_start(&mut rng).unwrap();
            let (_, outs) = sb.run_episode(run, st, at + 3, rng.gen()).unwrap();
            let Some(hit) = outs.get(at - 1) else { continue };
            if hit.injection_in_model || !hit.invariant_after {
                continue;
            }
            if hit.model_verdict == Some(false) && outs.get(at).and_then(|o| o.fallback_reason) == Some(FallbackReason::ModelViolation) {
                caught += 1;
            } else {
                missed += 1;
            }
            if outs[at..].iter().any(|o| !o.invariant_after || o.model_verdict != Some(true)) {
                unrecovered += 1;
            }
        }
        let ok = violations == 0 && errors == 0 && missed == 0 && unrecovered == 0 && caught > 0;
        pass &= ok;
        parts.push(format!(
            "{name}: {per} adversarial episodes, {fallbacks} fallbacks, {violations} invariant violations, {errors} entry errors; spikes caught {caught}, missed {missed}, unrecovered {unrecovered}"
        ));
    }
    let took = start.elapsed();
    pass &= took < SANDBOX_BUDGET;
    parts.push(format!("{took:.2?}"));
    Outcome { pass, detail: parts.join("; ") }
}

fn variation_bounds_on_sensor_traces() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, runs, steps) in [("watertank_sensor", SENSOR_TRACES / 2, 30), ("flight_sensor", SENSOR_TRACES / 2, 10)] {
        let s = scenario(name);
        let m = s.nf.measurement.clone().unwrap();
        let opts = EvalOptions { runs, steps, ..EvalOptions::from_scenario(&s) };
        let (_, trace) = run_evaluation(&s, &opts).unwrap();
        let rep = variation_bounds(&trace, &m.measured, s.delta().unwrap()).unwrap();
        pass &= rep.holds();
        parts.push(format!(
            "{name}: {runs} traces, {} satisfied steps, max step deviation {:.4} (bound {:.4}), max cumulative ratio {:.4}",
            rep.steps_checked,
            rep.max_step_deviation,
            2.0 * s.delta().unwrap(),
            rep.max_cumulative_ratio
        ));
    }
    let took = start.elapsed();
    pass &= took < VARIATION_BUDGET;
    parts.push(format!("{took:.2?}"));
    Outcome { pass, detail: parts.join("; ") }
}

fn drift_detection() -> Outcome {
    let a = default_drift().unwrap();
    let b = default_drift().unwrap();
    let pass = a.first_pairwise_violation == Some(8) && a.first_rolling_violation == Some(7) && a == b;
    Outcome {
        pass,
        detail: format!(
            "pairwise first violation {:?}, rolling first violation {:?}, repeat identical {}",
            a.first_pairwise_violation,
            a.first_rolling_violation,
            a == b
        ),
    }
}

fn estimator_sequences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE57);
    let (mut grew, mut invalid, mut lost, mut rejected, mut steps) = (0, 0, 0, 0, 0);
    for _ in 0..ESTIMATOR_SEQUENCES {
        let delta = rng.gen_range(0.01..1.0);
        let mut y: f64 = rng.gen_range(-10.0..10.0);
        let mut yh = y + rng.gen_range(-delta..=delta);
        let mut est = Estimate::full(delta);
        for _ in 0..rng.gen_range(1..60) {
            let effect = rng.gen_range(-1.0..1.0);
            y += effect;
            let next_yh = y + rng.gen_range(-delta..=delta);
            steps += 1;
            let Ok(next) = update(yh, next_yh, effect, delta, est) else {
                rejected += 1;
                break;
            };
            grew += usize::from(next.width() > est.width() + 1e-12);
            invalid += usize::from(!next.is_valid(delta));
            lost += usize::from(!contains_truth(&next, next_yh, y));
            est = next;
            yh = next_yh;
        }
    }
    Outcome {
        pass: grew + invalid + lost + rejected == 0,
        detail: format!(
            "{ESTIMATOR_SEQUENCES} sequences, {steps} updates: widened {grew}, out of range {invalid}, truth lost {lost}, rejected {rejected}"
        ),
    }
}

fn perturb(rng: &mut ChaCha8Rng, s: &State, names: &[&str]) -> State {
    let mut out = s.clone();
    if rng.gen_bool(0.5) {
        let v = names[rng.gen_range(0..names.len())];
        let mag = rng.gen_range(1e-3..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        out.set(v, out.get(v).unwrap() + mag);
    }
    out
}

fn oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0AC);
    let mut parts = Vec::new();
    let mut pass = true;

    let s = scenario("two_branch");
    let m = s.monitor("exact").unwrap();
    let cfg = RunConfig { sampler: [("b".to_string(), (-3.0, 6.0))].into(), ..RunConfig::default() };
    let (mut agree, mut positive) = (0, 0);
    for _ in 0..ORACLE_PAIRS {
        let pre = State::from_pairs([("a", f64::from(rng.gen_range(-3..6))), ("b", f64::from(rng.gen_range(-3..6)))]);
        let post = match rng.gen_bool(0.5) {
            true => State::from_pairs([("a", f64::from(rng.gen_range(-3..6))), ("b", f64::from(rng.gen_range(-3..6)))]),
            false => match run_program_rng(s.body(), &pre, &cfg, &mut rng).unwrap() {
                RunOutcome::Done(p, _) => p,
                RunOutcome::Blocked => pre.clone(),
            },
        };
        let pair = TransitionPair::new(pre, post).unwrap();
        let oracle = check_run_compatibility(s.body(), &pair, &cfg);
        positive += usize::from(oracle);
        agree += usize::from(m.check(&pair).unwrap().satisfied == oracle);
    }
    pass &= agree == ORACLE_PAIRS;
    parts.push(format!("two_branch: {agree}/{ORACLE_PAIRS} agree ({positive} compatible)"));

    let s = scenario("flight");
    let m = s.monitor("exact").unwrap();
    let over = overapproximate_plant(s.body(), s.diff_invariants.as_ref().unwrap()).unwrap();
    let cfg = s.run_config(0);
    let (mut agree, mut positive) = (0, 0);
    for _ in 0..ORACLE_PAIRS {
        let pre = s.sample_start(&mut rng).unwrap();
        let post = match run_program_rng(s.body(), &pre, &cfg, &mut rng).unwrap() {
            RunOutcome::Done(p, _) => p,
            RunOutcome::Blocked => pre.clone(),
        };
        let post = perturb(&mut rng, &post, &["x", "y", "theta", "w", "t"]);
        let pair = TransitionPair::new(pre, post).unwrap();
        let oracle = check_run_compatibility(&over, &pair, &cfg);
        positive += usize::from(oracle);
        agree += usize::from(m.check(&pair).unwrap().satisfied == oracle);
    }
    pass &= agree == ORACLE_PAIRS;
    parts.push(format!("flight: {agree}/{ORACLE_PAIRS} agree ({positive} compatible)"));
    Outcome { pass, detail: parts.join("; ") }
}

const VARS: [&str; 3] = ["x", "y", "z"];

fn rand_num(rng: &mut ChaCha8Rng) -> f64 {
    f64::from(rng.gen_range(-6..=6))
}

fn rand_op(rng: &mut ChaCha8Rng) -> CmpOp {
    [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt][rng.gen_range(0..5)]
}

fn linear_atom(rng: &mut ChaCha8Rng) -> Formula {
    let mut lhs = Term::num(0.0);
    for v in VARS {
        lhs = Term::add(lhs, Term::mul(Term::num(rand_num(rng)), Term::var(v)));
    }
    Formula::cmp(rand_op(rng), lhs, Term::num(rand_num(rng)))
}

fn atom(rng: &mut ChaCha8Rng) -> Formula {
    if rng.gen_bool(0.75) {
        linear_atom(rng)
    } else {
        let lhs = Term::add(Term::mul(Term::var("x"), Term::var("y")), Term::mul(Term::num(rand_num(rng)), Term::var("z")));
        Formula::cmp(rand_op(rng), lhs, Term::num(rand_num(rng)))
    }
}

fn quantifier_free(rng: &mut ChaCha8Rng, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        return atom(rng);
    }
    let (a, b) = (quantifier_free(rng, depth - 1), quantifier_free(rng, depth - 1));
    match rng.gen_range(0..5) {
        0 => Formula::not(a),
        1 => Formula::and(a, b),
        2 => Formula::or(a, b),
        3 => Formula::implies(a, b),
        _ => Formula::equiv(a, b),
    }
}

fn boxed(f: Formula, v: &str) -> Formula {
    Formula::and(Formula::between(Term::num(-50.0), Term::var(v), Term::num(50.0)), f)
}

fn point(rng: &mut ChaCha8Rng) -> State {
    State::from_pairs(VARS.map(|v| (v, rng.gen_range(-5.0..5.0))))
}

fn pair_point(rng: &mut ChaCha8Rng) -> TransitionPair {
    TransitionPair::new(point(rng), point(rng)).unwrap()
}

fn small_program(rng: &mut ChaCha8Rng, depth: u32) -> Program {
    let v = VARS[rng.gen_range(0..3)];
    if depth == 0 || rng.gen_bool(0.3) {
        return match rng.gen_range(0..3) {
            0 => Program::test(linear_atom(rng)),
            _ => Program::assign(v, Term::add(Term::var(VARS[rng.gen_range(0..3)]), Term::num(rand_num(rng)))),
        };
    }
    let (a, b) = (small_program(rng, depth - 1), small_program(rng, depth - 1));
    if rng.gen_bool(0.5) {
        Program::seq(a, b)
    } else {
        Program::choice(a, b)
    }
}

/// Reference semantics of `<p>g` for loop-free programs of assignments and tests.
fn diamond_holds(stmts: &[&Program], st: State, g: &Formula) -> bool {
    let Some((first, rest)) = stmts.split_first() else {
        return eval_formula(g, &st, TOL).unwrap();
    };
    match first {
        Program::Assign(x, e) => {
            let v = hsmon_core::eval_term(e, &st).unwrap();
            diamond_holds(rest, st.with(x.clone(), v), g)
        }
        Program::Test(h) => eval_formula(h, &st, TOL).unwrap() && diamond_holds(rest, st, g),
        Program::Choice(a, b) => [a, b].iter().any(|branch| {
            let mut next = branch.statements();
            next.extend_from_slice(rest);
            diamond_holds(&next, st.clone(), g)
        }),
        other => panic!("unsupported statement {other}"),
    }
}

fn rewrites_and_elimination() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9E1);
    let cfg = WitnessConfig::default().with_tol(TOL);
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    let mut check = |rule: &'static str, ok: bool| {
        if !ok {
            *failures.entry(rule).or_default() += 1;
        }
    };
    for _ in 0..REWRITE_VALUATIONS {
        let f = quantifier_free(&mut rng, 3);
        let s = point(&mut rng);
        let truth = eval_formula(&f, &s, TOL).unwrap();
        check("nnf", eval_formula(&nnf(&f), &s, TOL).unwrap() == truth);
        check("negated nnf", eval_formula(&neg_nnf(&f), &s, TOL).unwrap() != truth);
        check("expand !=", eval_formula(&expand_neq(&nnf(&f)), &s, TOL).unwrap() == truth);
        check("simplify", eval_formula(&simplify(&f), &s, TOL).unwrap() == truth);
        check("dnf", eval_formula(&dnf_preprocess(&f), &s, TOL).unwrap() == truth);

        let x = Var::pre("x");
        let q = Formula::exists(x.clone(), boxed(f.clone(), "x"));
        check("distribute and pull", decide(&dnf_preprocess(&q), &s, &cfg).unwrap() == decide(&q, &s, &cfg).unwrap());

        let p = pair_point(&mut rng);
        let inst = Formula::exists(x.clone(), Formula::and(f.clone(), Formula::eq(Term::Var(x.to_post()), Term::var("x"))));
        let g = instantiate_post_states(&inst).unwrap();
        check("post instantiation", !g.has_quantifier() && decide(&g, &p, &cfg).unwrap() == decide(&inst, &p, &cfg).unwrap());

        let def = Term::add(Term::mul(Term::num(rand_num(&mut rng)), Term::var("y")), Term::num(rand_num(&mut rng)));
        let one = Formula::exists(x.clone(), Formula::and(Formula::eq(Term::var("x"), def), f.clone()));
        let r = synthesize(&one).unwrap();
        check("one-point", r.residual_quantifiers == 0 && eval_formula(&r.output, &s, TOL).unwrap() == decide(&one, &s, &cfg).unwrap());

        let prog = small_program(&mut rng, 3);
        let post = atom(&mut rng);
        let modal = eliminate_modalities(&Formula::diamond(prog.clone(), post.clone())).unwrap();
        check("modalities", eval_formula(&modal, &s, TOL).unwrap() == diamond_holds(&prog.statements(), s.clone(), &post));
    }
    let rule_failures: usize = failures.values().sum();

    let mut fm_disagree = 0;
    for _ in 0..FM_INSTANCES {
        let n = rng.gen_range(1..5);
        let lits: Vec<Formula> = (0..n).map(|_| linear_atom(&mut rng)).collect();
        let body = boxed(Formula::conj(lits), "x");
        let x = Var::pre("x");
        let s = point(&mut rng);
        let by_fm = eval_formula(&eliminate_exists(&x, &body).unwrap(), &s, TOL).unwrap();
        let by_search = decide(&Formula::exists(x, body), &s, &cfg).unwrap();
        fm_disagree += usize::from(by_fm != by_search);
    }
    Outcome {
        pass: rule_failures == 0 && fm_disagree == 0,
        detail: format!(
            "10 rules on {REWRITE_VALUATIONS} valuations, failures {failures:?}; Fourier-Motzkin vs witness search on {FM_INSTANCES} instances, {fm_disagree} disagreements"
        ),
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "two-branch monitor synthesis", two_branch_synthesis),
        (2, "exact and disturbance monitors", exact_and_disturbance_monitors),
        (3, "sensor monitors", sensor_monitors),
        (4, "sandbox keeps the invariant", sandbox_keeps_invariant),
        (5, "variation bounds on sensor traces", variation_bounds_on_sensor_traces),
        (6, "velocity drift detection", drift_detection),
        (7, "estimator non-divergence and containment", estimator_sequences),
        (8, "exact monitor vs run oracle", oracle_agreement),
        (9, "rewrite rules and quantifier elimination", rewrites_and_elimination),
    ];
    let mut failed = 0;
    for (n, title, run) in criteria {
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n}: {status} {title}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
