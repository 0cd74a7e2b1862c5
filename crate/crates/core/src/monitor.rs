//! Model and control monitors: construction of the characterizing formula,
//! synthesis to arithmetic, and evaluation on transition pairs.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ast::{Formula, Program, Term, Var};
use crate::error::{Error, Result};
use crate::estimator::{self, Estimate, EstimatorSpec, LOWER_VAR, UPPER_VAR};
use crate::eval::{eval_term, DEFAULT_TOL};
use crate::program::{overapproximate_plant, recognize_normal_form, upsilon_plus, NfKind, NormalFormInfo};
use crate::qe::{decide_with_witness, synthesize, SynthesisReport, WitnessConfig};
use crate::simplify::simplify_term;
use crate::state::{State, TransitionPair};
use crate::trace::Trace;
use crate::vars::{bound_vars, free_vars, program_names, substitute};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MonitorKind {
    /// `<p>Υ⁺`.
    Exact,
    /// `<p>Υ⁺` with the disturbed actuation left out of `Υ⁺`.
    Disturbance { actuated: String, delta: Term },
    /// `\exists y (yhat - D <= y <= yhat + D & <p>Υ⁺)` with `y` left out of `Υ⁺`.
    Pairwise { measured: String, measurement: String, delta: Term },
    /// Like `Pairwise` over `[yhat + est_l, yhat + est_u]`, followed by the estimator update.
    Rolling(EstimatorSpec),
    /// `<ctrl>Υ⁺` over the controller alone.
    ControlOnly,
}

impl MonitorKind {
    pub fn name(&self) -> &'static str {
        match self {
            MonitorKind::Exact => "exact",
            MonitorKind::Disturbance { .. } => "disturbance",
            MonitorKind::Pairwise { .. } => "pairwise",
            MonitorKind::Rolling(_) => "rolling",
            MonitorKind::ControlOnly => "control",
        }
    }

    /// The kind matching the recognized shape of `p`; `Exact` for plain programs.
    pub fn for_program(p: &Program) -> Result<MonitorKind> {
        let nf = recognize_normal_form(p)?;
        Ok(match nf.kind {
            NfKind::Plain => MonitorKind::Exact,
            NfKind::Disturbance => {
                let d = nf.disturbance.expect("disturbance info");
                MonitorKind::Disturbance { actuated: d.actuated, delta: d.delta }
            }
            NfKind::Measurement => {
                let m = nf.measurement.expect("measurement info");
                MonitorKind::Pairwise { measured: m.measured, measurement: m.measurement, delta: m.delta }
            }
        })
    }
}

/// Inputs to [`build_monitor`] beyond the program and kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorOptions {
    /// Variables that are never observed: left out of `Υ⁺` and existentially quantified if read.
    pub unobservable: BTreeSet<String>,
    /// Differential invariant `R(x, x_0)` used to replace the plant ODE.
    pub diff_invariants: Option<Formula>,
}

impl MonitorOptions {
    pub fn unobservable<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.unobservable.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn diff_invariants(mut self, r: Formula) -> Self {
        self.diff_invariants = Some(r);
        self
    }
}

fn check_nf(nf: &NormalFormInfo, kind: &MonitorKind) -> Result<()> {
    let mismatch = |what: &str| Err(Error::NormalForm(what.to_string()));
    match kind {
        MonitorKind::Disturbance { actuated, delta } => match &nf.disturbance {
            Some(d) if d.actuated == *actuated && simplify_eq(&d.delta, delta) => Ok(()),
            Some(d) => mismatch(&format!("program disturbs `{}` by {}, monitor expects `{actuated}` by {delta}", d.actuated, d.delta)),
            None => mismatch("disturbance monitor needs a program in disturbance normal form"),
        },
        MonitorKind::Pairwise { measured, measurement, delta } => match &nf.measurement {
            Some(m) if m.measured == *measured && m.measurement == *measurement && simplify_eq(&m.delta, delta) => Ok(()),
            Some(m) => mismatch(&format!("program measures `{}` as `{}`", m.measured, m.measurement)),
            None => mismatch("pairwise monitor needs a program in measurement normal form"),
        },
        MonitorKind::Rolling(spec) => match &nf.measurement {
            Some(m) if m.measured == spec.measured && m.measurement == spec.measurement && simplify_eq(&m.delta, &spec.delta) => Ok(()),
            Some(m) => mismatch(&format!("program measures `{}` as `{}`", m.measured, m.measurement)),
            None => mismatch("rolling monitor needs a program in measurement normal form"),
        },
        MonitorKind::Exact | MonitorKind::ControlOnly => Ok(()),
    }
}

fn simplify_eq(a: &Term, b: &Term) -> bool {
    simplify_term(a) == simplify_term(b)
}

/// Existentially closes the unobservable pre-state variables still free in `f`.
fn close_unobservable(f: Formula, unobservable: &BTreeSet<String>) -> Formula {
    let free = free_vars(&f);
    let mut out = f;
    for name in unobservable.iter().rev() {
        let v = Var::pre(name.clone());
        if free.contains(&v) {
            out = Formula::exists(v, out);
        }
    }
    out
}

/// The monitor characterization of loop body `p` as a formula with one diamond.
pub fn build_monitor(p: &Program, kind: &MonitorKind, opts: &MonitorOptions) -> Result<Formula> {
    let body = p.loop_body();
    let nf = recognize_normal_form(body)?;
    check_nf(&nf, kind)?;
    let prog = |q: &Program| -> Result<Program> {
        match (&opts.diff_invariants, q.ode_count()) {
            (_, 0) => Ok(q.clone()),
            (Some(r), _) => overapproximate_plant(q, r),
            (None, _) => Ok(q.clone()),
        }
    };
    if *kind == MonitorKind::ControlOnly {
        let ctrl = nf.ctrl;
        let ups = upsilon_plus(&ctrl, &opts.unobservable);
        return Ok(close_unobservable(Formula::diamond(ctrl, ups), &opts.unobservable));
    }
    let alpha = prog(body)?;
    let ghosts: BTreeSet<String> = bound_vars(&alpha).difference(&bound_vars(body)).cloned().collect();
    let mut exclude: BTreeSet<String> = opts.unobservable.union(&ghosts).cloned().collect();
    match kind {
        MonitorKind::Exact | MonitorKind::ControlOnly => {
            let ups = upsilon_plus(&alpha, &exclude);
            Ok(close_unobservable(Formula::diamond(alpha, ups), &opts.unobservable))
        }
        MonitorKind::Disturbance { actuated, .. } => {
            exclude.insert(actuated.clone());
            let ups = upsilon_plus(&alpha, &exclude);
            Ok(close_unobservable(Formula::diamond(alpha, ups), &opts.unobservable))
        }
        MonitorKind::Pairwise { measured, measurement, delta } => {
            exclude.insert(measured.clone());
            let ups = upsilon_plus(&alpha, &exclude);
            let yh = Term::var(measurement);
            let band = Formula::between(Term::sub(yh.clone(), delta.clone()), Term::var(measured), Term::add(yh, delta.clone()));
            let inner = Formula::exists(Var::pre(measured.clone()), Formula::and(band, Formula::diamond(alpha, ups)));
            let rest: BTreeSet<String> = opts.unobservable.iter().filter(|u| *u != measured).cloned().collect();
            Ok(close_unobservable(inner, &rest))
        }
        MonitorKind::Rolling(spec) => {
            exclude.insert(spec.measured.clone());
            let ups = upsilon_plus(&alpha, &exclude);
            let names = program_names(&alpha);
            for fresh in [spec.prev_measured(), spec.prev_measurement(), LOWER_VAR.to_string(), UPPER_VAR.to_string()] {
                if names.contains(&fresh) {
                    return Err(Error::NotFresh(fresh));
                }
            }
            let extended = Program::seq_all(vec![spec.recall_program(), alpha, spec.update_program()]);
            let yh = Term::var(&spec.measurement);
            let band = Formula::between(
                Term::add(yh.clone(), Term::var(LOWER_VAR)),
                Term::var(&spec.measured),
                Term::add(yh, Term::var(UPPER_VAR)),
            );
            let inner = Formula::exists(Var::pre(spec.measured.clone()), Formula::and(band, Formula::diamond(extended, ups)));
            let rest: BTreeSet<String> = opts.unobservable.iter().filter(|u| **u != spec.measured).cloned().collect();
            Ok(close_unobservable(inner, &rest))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub satisfied: bool,
    /// Values chosen for the existentials, when satisfied.
    pub witness: Vec<(String, f64)>,
    #[serde(skip)]
    pub evaluated_formula: Arc<Formula>,
    pub elapsed: Duration,
}

/// Evaluates a synthesized monitor on `pair`.
pub fn evaluate(monitor: &Arc<Formula>, pair: &TransitionPair, cfg: &WitnessConfig) -> Result<Verdict> {
    let start = Instant::now();
    let (satisfied, wit) = match decide_with_witness(monitor, pair, cfg) {
        Err(Error::DivisionByZero) => (false, Vec::new()),
        other => other?,
    };
    Ok(Verdict {
        satisfied,
        witness: wit.into_iter().map(|(v, x)| (v.to_string(), x)).collect(),
        evaluated_formula: Arc::clone(monitor),
        elapsed: start.elapsed(),
    })
}

/// A built and synthesized monitor ready for evaluation.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub kind: MonitorKind,
    pub characterization: Formula,
    pub report: SynthesisReport,
    pub formula: Arc<Formula>,
    pub witness: WitnessConfig,
}

impl Monitor {
    pub fn new(p: &Program, kind: MonitorKind, opts: &MonitorOptions) -> Result<Monitor> {
        let characterization = build_monitor(p, &kind, opts)?;
        let report = synthesize(&characterization)?;
        let formula = Arc::new(report.output.clone());
        Ok(Monitor { kind, characterization, report, formula, witness: WitnessConfig::default() })
    }

    /// Monitor for an already arithmetic condition.
    pub fn from_formula(kind: MonitorKind, f: Formula) -> Monitor {
        let report = SynthesisReport {
            input: f.clone(),
            output: f.clone(),
            residual_quantifiers: f.quantifier_count(),
            methods: Vec::new(),
            trace: Vec::new(),
        };
        Monitor { kind, characterization: f.clone(), report, formula: Arc::new(f), witness: WitnessConfig::default() }
    }

    pub fn with_witness(mut self, cfg: WitnessConfig) -> Self {
        self.witness = cfg;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.witness.tol = tol;
        self
    }

    pub fn check(&self, pair: &TransitionPair) -> Result<Verdict> {
        evaluate(&self.formula, pair, &self.witness)
    }
}

/// A rolling-estimator monitor together with the estimate it carries between steps.
#[derive(Debug, Clone)]
pub struct RollingMonitor {
    pub monitor: Monitor,
    pub spec: EstimatorSpec,
    pub delta: f64,
    pub estimate: Estimate,
}

impl RollingMonitor {
    pub fn new(p: &Program, spec: EstimatorSpec, opts: &MonitorOptions) -> Result<RollingMonitor> {
        let delta = eval_term(&spec.delta, &State::new())?;
        let monitor = Monitor::new(p, MonitorKind::Rolling(spec.clone()), opts)?;
        Ok(RollingMonitor { monitor, spec, delta, estimate: Estimate::full(delta) })
    }

    pub fn reset(&mut self) {
        self.estimate = Estimate::full(self.delta);
    }

    /// Checks `pair` against the current estimate and advances the estimate.
    /// A violation resets the estimate to `[-D, D]` around the new measurement.
    pub fn check(&mut self, pair: &TransitionPair) -> Result<Verdict> {
        let (verdict, est) = self.check_from(pair, self.estimate)?;
        self.estimate = est;
        Ok(verdict)
    }

    /// Stateless form of [`RollingMonitor::check`]: the verdict and the next estimate.
    pub fn check_from(&self, pair: &TransitionPair, est: Estimate) -> Result<(Verdict, Estimate)> {
        let with = |s: &State| s.clone().with(LOWER_VAR, est.l).with(UPPER_VAR, est.u);
        let extended = TransitionPair::new(with(&pair.pre), with(&pair.post))?;
        let mut verdict = self.monitor.check(&extended)?;
        if !verdict.satisfied {
            return Ok((verdict, Estimate::full(self.delta)));
        }
        let yh0 = pair.pre.get(&self.spec.measurement)?;
        let yh = pair.post.get(&self.spec.measurement)?;
        let effect = eval_term(&self.spec.effect, &pair.post)?;
        match estimator::update(yh0, yh, effect, self.delta, est) {
            Ok(next) => Ok((verdict, next)),
            Err(Error::HistoryInconsistent { .. }) => {
                verdict.satisfied = false;
                Ok((verdict, Estimate::full(self.delta)))
            }
            Err(e) => Err(e),
        }
    }
}

/// `\forall y (yhat + l <= y & y <= yhat + u -> inv)`; for `l = u` the instance `inv[y ↦ yhat + l]`.
pub fn contraction_formula(inv: &Formula, y: &str, yhat: &str, l: &Term, u: &Term) -> Result<Formula> {
    let yv = Var::pre(y);
    let lo = Term::add(Term::var(yhat), l.clone());
    let hi = Term::add(Term::var(yhat), u.clone());
    if simplify_eq(l, u) {
        let point = simplify_term(&lo);
        return substitute(inv, &yv, &point);
    }
    Ok(Formula::forall(yv, Formula::implies(Formula::between(lo, Term::var(y), hi), inv.clone())))
}

/// Outcome of checking the single-step and cumulative variation bounds on a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationReport {
    pub steps_checked: usize,
    pub max_step_deviation: f64,
    /// Largest ratio of cumulative deviation to its bound `2Δ(n+1)`.
    pub max_cumulative_ratio: f64,
    /// `(run, step)` of the first violated single-step bound.
    pub first_step_violation: Option<(usize, usize)>,
    pub first_cumulative_violation: Option<(usize, usize)>,
    /// `(run, step)` where the measurement left `[y - Δ, y + Δ]` around the ground truth.
    pub first_sensor_fault: Option<(usize, usize)>,
}

impl VariationReport {
    pub fn holds(&self) -> bool {
        self.first_step_violation.is_none() && self.first_cumulative_violation.is_none()
    }
}

const VARIATION_SLACK: f64 = 1e-9;

/// Checks `|yhat_i - (yhat_{i-1} + e_i)| <= 2Δ` on every monitor-satisfied step and
/// `|yhat_n - (yhat_0 + Σ e_i)| <= 2Δ(n+1)` along every run of satisfied steps.
pub fn variation_bounds(trace: &Trace, y: &str, delta: f64) -> Result<VariationReport> {
    let mut rep = VariationReport {
        steps_checked: 0,
        max_step_deviation: 0.0,
        max_cumulative_ratio: 0.0,
        first_step_violation: None,
        first_cumulative_violation: None,
        first_sensor_fault: None,
    };
    let missing = |what: &str, run: usize, step: usize| Error::Trace(format!("missing {what} for `{y}` at run {run} step {step}"));
    for run in trace.runs() {
        let rows = trace.run(run);
        let mut anchor: Option<(f64, f64, usize)> = None;
        for (i, row) in rows.iter().enumerate() {
            let yh = *row.measured.get(y).ok_or_else(|| missing("measurement", run, row.step))?;
            let truth = row.state.try_get(y).ok_or_else(|| missing("ground truth", run, row.step))?;
            if (yh - truth).abs() > delta + VARIATION_SLACK && rep.first_sensor_fault.is_none() {
                rep.first_sensor_fault = Some((run, row.step));
            }
            if i == 0 || row.verdict != Some(true) {
                anchor = Some((yh, 0.0, 0));
                continue;
            }
            let e = *row.effect.get(y).ok_or_else(|| missing("plant effect", run, row.step))?;
            let prev = *rows[i - 1].measured.get(y).ok_or_else(|| missing("measurement", run, rows[i - 1].step))?;
            let dev = (yh - prev - e).abs();
            rep.steps_checked += 1;
            rep.max_step_deviation = rep.max_step_deviation.max(dev);
            if dev > 2.0 * delta + VARIATION_SLACK && rep.first_step_violation.is_none() {
                rep.first_step_violation = Some((run, row.step));
            }
            let (y0, sum, n) = anchor.expect("anchored at first row");
            let (sum, n) = (sum + e, n + 1);
            anchor = Some((y0, sum, n));
            let bound = 2.0 * delta * (n as f64 + 1.0);
            let cum = (yh - y0 - sum).abs();
            if bound > 0.0 {
                rep.max_cumulative_ratio = rep.max_cumulative_ratio.max(cum / bound);
            }
            if cum > bound + VARIATION_SLACK && rep.first_cumulative_violation.is_none() {
                rep.first_cumulative_violation = Some((run, row.step));
            }
        }
    }
    Ok(rep)
}

/// Default equality tolerance used by monitors unless a scenario overrides it.
pub const MONITOR_TOL: f64 = DEFAULT_TOL;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_formula, parse_program};
    use crate::qe::fourier_motzkin;

    fn pair(pre: &[(&str, f64)], post: &[(&str, f64)]) -> TransitionPair {
        TransitionPair::new(State::from_pairs(pre.iter().copied()), State::from_pairs(post.iter().copied())).unwrap()
    }

    #[test]
    fn two_branch_exact() {
        let p = parse_program("a := a + 1 ++ b := *; ?b <= 3").unwrap();
        let m = Monitor::new(&p, MonitorKind::Exact, &MonitorOptions::default()).unwrap();
        assert!(m.check(&pair(&[("a", 2.0), ("b", 3.0)], &[("a", 3.0), ("b", 3.0)])).unwrap().satisfied);
        assert!(!m.check(&pair(&[("a", 2.0), ("b", 3.0)], &[("a", 2.0), ("b", 4.0)])).unwrap().satisfied);
        let id = TransitionPair::identity(State::from_pairs([("a", 0.0), ("b", -1.0)]));
        assert!(m.check(&id).unwrap().satisfied);
    }

    fn velocity() -> Program {
        parse_program("t := 0; {t' = 1 & t <= 1}; ?t = 1; vh := *; ?(v - 0.1 <= vh & vh <= v + 0.1)").unwrap()
    }

    fn velocity_opts() -> MonitorOptions {
        MonitorOptions::default().unobservable(["v"]).diff_invariants(parse_formula("t >= t_0").unwrap())
    }

    #[test]
    fn pairwise_reduces_to_step_bound() {
        let kind = MonitorKind::Pairwise { measured: "v".into(), measurement: "vh".into(), delta: Term::num(0.1) };
        let m = Monitor::new(&velocity(), kind, &velocity_opts()).unwrap();
        assert_eq!(m.report.residual_quantifiers, 0);
        let step = |a: f64, b: f64| pair(&[("t", 1.0), ("vh", a)], &[("t", 1.0), ("vh", b)]);
        assert!(m.check(&step(0.5, 0.69)).unwrap().satisfied);
        assert!(!m.check(&step(0.5, 0.71)).unwrap().satisfied);
    }

    #[test]
    fn rolling_detects_drift() {
        let spec = EstimatorSpec::new("v", "vh", Term::num(0.1), Term::num(0.0));
        let mut m = RollingMonitor::new(&velocity(), spec, &velocity_opts()).unwrap();
        let seq = [0.55, 0.45, 0.52, 0.48, 0.59, 0.41, 0.55, 0.7, 0.95];
        let mut first = None;
        for k in 1..seq.len() {
            let v = m.check(&pair(&[("t", 1.0), ("vh", seq[k - 1])], &[("t", 1.0), ("vh", seq[k])])).unwrap();
            if !v.satisfied && first.is_none() {
                first = Some(k);
            }
        }
        assert_eq!(first, Some(7));
    }

    #[test]
    fn disturbance_mismatch_rejected() {
        let p = parse_program("u := 1; w := *; ?(u - 0.1 <= w & w <= u + 0.1); {x' = w}").unwrap();
        let kind = MonitorKind::Disturbance { actuated: "u".into(), delta: Term::num(0.1) };
        assert!(matches!(build_monitor(&p, &kind, &MonitorOptions::default()), Err(Error::NormalForm(_))));
        let ok = MonitorKind::for_program(&p).unwrap();
        assert_eq!(ok, MonitorKind::Disturbance { actuated: "w".into(), delta: Term::num(0.1) });
    }

    #[test]
    fn contraction_instances() {
        let inv = parse_formula("y > c").unwrap();
        let f = contraction_formula(&inv, "y", "yh", &Term::num(-0.1), &Term::num(0.1)).unwrap();
        let g = fourier_motzkin(&f).unwrap();
        assert_eq!(g, parse_formula("yh - 0.1 > c").unwrap());
        let point = contraction_formula(&inv, "y", "yh", &Term::num(0.0), &Term::num(0.0)).unwrap();
        assert_eq!(point, parse_formula("yh > c").unwrap());
    }
}
