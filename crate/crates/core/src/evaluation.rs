//! Precision/recall evaluation of model monitors over simulated episodes, and the
//! scripted drift scenario contrasting pairwise and rolling monitors.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::Estimate;
use crate::monitor::RollingMonitor;
use crate::sandbox::{InvariantCheck, Sandbox, StepOutcome, FALLBACK_SAMPLES};
use crate::scenario::Scenario;
use crate::state::{State, TransitionPair};
use crate::trace::{Action, Trace, TraceRow};

pub const SEED_ENV: &str = "HSMON_SEED";

/// Step counts and the derived precision and recall. A step is conformant when
/// every injected disturbance and noise stayed within the modeled bounds and the
/// applied control decision is one the model's controller could have made.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PRReport {
    pub scenario: String,
    pub monitor: String,
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub checked_steps: usize,
    /// Conformant steps without alarm.
    pub true_nonalarms: usize,
    pub all_nonalarms: usize,
    /// Conformant steps with alarm.
    pub false_alarms: usize,
    pub true_alarms: usize,
    pub missed_violations: usize,
    pub fallback_steps: usize,
    pub halted_runs: usize,
    pub invariant_violations: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl PRReport {
    fn add(&mut self, o: &StepOutcome) {
        if o.action == Action::FallbackEngaged {
            self.fallback_steps += 1;
        }
        if !o.invariant_after {
            self.invariant_violations += 1;
        }
        if let Some(v) = o.model_verdict {
            self.classify(o.conformant, v);
        }
    }

    fn classify(&mut self, conformant: bool, satisfied: bool) {
        self.checked_steps += 1;
        match (conformant, satisfied) {
            (true, true) => {
                self.true_nonalarms += 1;
                self.all_nonalarms += 1;
            }
            (false, true) => {
                self.missed_violations += 1;
                self.all_nonalarms += 1;
            }
            (true, false) => self.false_alarms += 1,
            (false, false) => self.true_alarms += 1,
        }
    }

    fn merge(&mut self, o: &PRReport) {
        self.checked_steps += o.checked_steps;
        self.true_nonalarms += o.true_nonalarms;
        self.all_nonalarms += o.all_nonalarms;
        self.false_alarms += o.false_alarms;
        self.true_alarms += o.true_alarms;
        self.missed_violations += o.missed_violations;
        self.fallback_steps += o.fallback_steps;
        self.halted_runs += o.halted_runs;
        self.invariant_violations += o.invariant_violations;
    }

    fn finish(&mut self) {
        let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
        self.precision = ratio(self.true_nonalarms, self.all_nonalarms);
        self.recall = ratio(self.true_nonalarms, self.true_nonalarms + self.false_alarms);
    }

    pub fn summary(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into());
        format!(
            "{} [{}] runs={} steps={} seed={}: P={} R={} (true non-alarms {}, non-alarms {}, false alarms {}, true alarms {}, fallback steps {}, halted runs {})",
            self.scenario,
            self.monitor,
            self.runs,
            self.steps,
            self.seed,
            f(self.precision),
            f(self.recall),
            self.true_nonalarms,
            self.all_nonalarms,
            self.false_alarms,
            self.true_alarms,
            self.fallback_steps,
            self.halted_runs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    /// Model monitor kind; the scenario's default if `None`.
    pub kind: Option<String>,
}

impl EvalOptions {
    pub fn from_scenario(s: &Scenario) -> EvalOptions {
        EvalOptions { runs: s.episodes.runs, steps: s.episodes.steps, seed: s.episodes.seed, kind: None }
    }

    /// Replaces the seed by `HSMON_SEED` when set.
    pub fn with_env_seed(mut self) -> Result<EvalOptions> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::Scenario(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(self)
    }
}

/// Seed for run `run`: the base seed with the run index mixed in.
pub fn episode_seed(seed: u64, run: usize) -> u64 {
    seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Audits the scenario, validates its fallback, and builds the sandbox.
pub fn prepare(s: &Scenario, kind: &str, seed: u64) -> Result<Sandbox> {
    s.audit(FALLBACK_SAMPLES, seed)?;
    let sb = Sandbox::new(s, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xFA11_BAC4);
    let states: Vec<State> = (0..FALLBACK_SAMPLES)
        .map(|_| s.sample_state(&mut rng, &s.invariant))
        .collect::<Result<_>>()?;
    sb.validate_fallback(&states, seed)?;
    Ok(sb)
}

/// Runs `opts.runs` episodes in parallel and aggregates precision and recall.
pub fn run_evaluation(s: &Scenario, opts: &EvalOptions) -> Result<(PRReport, Trace)> {
    if opts.runs == 0 || opts.steps == 0 {
        return Err(Error::Scenario("runs and steps must be positive".into()));
    }
    let kind = opts.kind.clone().unwrap_or_else(|| s.model_kind.clone());
    let sb = prepare(s, &kind, opts.seed)?.with_invariant_check(InvariantCheck::Record);
    let per_run: Vec<(PRReport, Trace)> = (0..opts.runs)
        .into_par_iter()
        .map(|run| -> Result<(PRReport, Trace)> {
            let seed = episode_seed(opts.seed, run);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = s.sample_start(&mut rng)?;
            let (trace, outcomes) = sb.run_episode(run, start, opts.steps, seed.wrapping_add(1))?;
            let mut rep = PRReport::default();
            for o in &outcomes {
                rep.add(o);
            }
            if outcomes.last().is_some_and(|o| o.action == Action::Halted) {
                rep.halted_runs += 1;
            }
            Ok((rep, trace))
        })
        .collect::<Result<_>>()?;
    let mut report = PRReport {
        scenario: s.name.clone(),
        monitor: kind,
        runs: opts.runs,
        steps: opts.steps,
        seed: opts.seed,
        ..PRReport::default()
    };
    let mut trace = Trace::default();
    for (r, t) in per_run {
        report.merge(&r);
        trace.rows.extend(t.rows);
    }
    report.finish();
    Ok((report, trace))
}

/// Recomputes step counts, precision and recall from the labels stored in a trace.
pub fn report_from_trace(trace: &Trace) -> PRReport {
    let mut rep = PRReport { runs: trace.runs().len(), ..PRReport::default() };
    for run in trace.runs() {
        let rows = trace.run(run);
        rep.steps = rep.steps.max(rows.iter().filter(|r| r.action != Action::Start).count());
        if rows.last().is_some_and(|r| r.action == Action::Halted) {
            rep.halted_runs += 1;
        }
    }
    for r in &trace.rows {
        if r.action == Action::FallbackEngaged {
            rep.fallback_steps += 1;
        }
        if let Some(v) = r.verdict {
            rep.classify(r.conformant, v);
        }
    }
    rep.finish();
    rep
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub monitor: String,
    pub checked: usize,
    pub violations: usize,
    /// First violated row per run, as `(run, step)`.
    pub first_violations: Vec<(usize, usize)>,
    #[serde(skip)]
    pub trace: Trace,
}

/// Re-evaluates the model monitor of kind `kind` on consecutive rows of each run
/// and stores the new verdicts in a copy of the trace. Rolling monitors start each
/// run from the uninformed estimate.
pub fn replay_trace(s: &Scenario, kind: &str, trace: &Trace) -> Result<ReplayReport> {
    let stateless = if kind == "rolling" { None } else { Some(s.monitor(kind)?) };
    let rolling = if kind == "rolling" { Some(s.rolling_monitor()?) } else { None };
    let mut rep = ReplayReport { monitor: kind.to_string(), checked: 0, violations: 0, first_violations: Vec::new(), trace: Trace::default() };
    for run in trace.runs() {
        let mut rows: Vec<TraceRow> = trace.run(run).into_iter().cloned().collect();
        rows.sort_by_key(|r| r.step);
        let mut est = rolling.as_ref().map(|m| Estimate::full(m.delta));
        let mut flagged = false;
        for i in 0..rows.len() {
            if i == 0 || rows[i].action == Action::Halted {
                rows[i].verdict = None;
                rows[i].estimate = est;
                continue;
            }
            let pair = TransitionPair::new(rows[i - 1].state.clone(), rows[i].state.clone())?;
            let ok = match (&stateless, &rolling) {
                (Some(m), _) => m.check(&pair)?.satisfied,
                (None, Some(m)) => {
                    let (v, next) = m.check_from(&pair, est.expect("rolling estimate"))?;
                    est = Some(next);
                    v.satisfied
                }
                (None, None) => unreachable!(),
            };
            rep.checked += 1;
            if !ok {
                rep.violations += 1;
                if !flagged {
                    rep.first_violations.push((run, rows[i].step));
                    flagged = true;
                }
            }
            rows[i].verdict = Some(ok);
            rows[i].estimate = est;
        }
        rep.trace.rows.extend(rows);
    }
    Ok(rep)
}

/// The constant-velocity measurement model used by the drift scenario.
pub const VELOCITY_SCENARIO: &str = include_str!("../../../scenarios/velocity.hp");

/// Measurements around a true value of 0.5 with `Δ = 0.1`: in-band noise up to
/// step 5, drift at steps 6 and 7, and a jump of more than `2Δ` at step 8.
pub const DRIFT_MEASUREMENTS: [f64; 9] = [0.55, 0.45, 0.52, 0.48, 0.59, 0.41, 0.55, 0.7, 0.95];

/// The first eight measurements with the drift at steps 6 and 7 halved.
pub const HALVED_DRIFT_MEASUREMENTS: [f64; 8] = [0.55, 0.45, 0.52, 0.48, 0.59, 0.41, 0.525, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftOutcome {
    pub measurements: Vec<f64>,
    /// Verdicts for the transitions into steps `1..`.
    pub pairwise: Vec<bool>,
    pub rolling: Vec<bool>,
    /// Rolling estimate after each step, starting with the initial one.
    pub estimates: Vec<Estimate>,
    pub first_pairwise_violation: Option<usize>,
    pub first_rolling_violation: Option<usize>,
    #[serde(skip)]
    pub trace: Trace,
}

/// Runs both monitors over `measurements` taken at unit intervals.
pub fn drift_scenario(measurements: &[f64]) -> Result<DriftOutcome> {
    let s = Scenario::from_toml(VELOCITY_SCENARIO)?;
    let pairwise = s.monitor("pairwise")?;
    let mut rolling: RollingMonitor = s.rolling_monitor()?;
    let m = s.nf.measurement.clone().ok_or_else(|| Error::Scenario("velocity model has no measurement".into()))?;
    let state = |yh: f64| {
        let mut st = State::new();
        for v in s.state_vars() {
            st.set(v, 0.0);
        }
        st.set(m.clock.clone(), 1.0);
        st.set(m.measurement.clone(), yh);
        st.set(m.measured.clone(), 0.5);
        st
    };
    let mut out = DriftOutcome {
        measurements: measurements.to_vec(),
        pairwise: Vec::new(),
        rolling: Vec::new(),
        estimates: vec![rolling.estimate],
        first_pairwise_violation: None,
        first_rolling_violation: None,
        trace: Trace::default(),
    };
    let row = |i: usize, yh: f64, est: Estimate, verdict: Option<bool>| TraceRow {
        run: 0,
        step: i,
        time: i as f64,
        state: state(yh),
        measured: [(m.measured.clone(), yh)].into(),
        effect: [(m.measured.clone(), 0.0)].into(),
        estimate: Some(est),
        conformant: true,
        action: if i == 0 { Action::Start } else { Action::PassThrough },
        verdict,
    };
    if let Some(&y0) = measurements.first() {
        out.trace.rows.push(row(0, y0, rolling.estimate, None));
    }
    for i in 1..measurements.len() {
        let pair = TransitionPair::new(state(measurements[i - 1]), state(measurements[i]))?;
        let p = pairwise.check(&pair)?.satisfied;
        let r = rolling.check(&pair)?.satisfied;
        if !p && out.first_pairwise_violation.is_none() {
            out.first_pairwise_violation = Some(i);
        }
        if !r && out.first_rolling_violation.is_none() {
            out.first_rolling_violation = Some(i);
        }
        out.pairwise.push(p);
        out.rolling.push(r);
        out.estimates.push(rolling.estimate);
        out.trace.rows.push(row(i, measurements[i], rolling.estimate, Some(r)));
    }
    Ok(out)
}

/// The drift scenario over [`DRIFT_MEASUREMENTS`].
pub fn default_drift() -> Result<DriftOutcome> {
    drift_scenario(&DRIFT_MEASUREMENTS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_detection_steps() {
        let o = default_drift().unwrap();
        assert_eq!(o.first_pairwise_violation, Some(8));
        assert_eq!(o.first_rolling_violation, Some(7));
        assert!(o.pairwise[..7].iter().all(|&v| v));
    }

    #[test]
    fn halved_drift_is_accepted() {
        let o = drift_scenario(&HALVED_DRIFT_MEASUREMENTS).unwrap();
        assert_eq!(o.first_pairwise_violation, None);
        assert_eq!(o.first_rolling_violation, None);
    }

    #[test]
    fn replay_reproduces_recorded_verdicts() {
        let s = Scenario::from_toml(VELOCITY_SCENARIO).unwrap();
        let o = drift_scenario(&DRIFT_MEASUREMENTS).unwrap();
        let t = o.trace.clone();
        let rep = replay_trace(&s, "pairwise", &t).unwrap();
        assert_eq!(rep.checked, 8);
        assert_eq!(rep.first_violations, vec![(0, 8)]);
        let rolled = replay_trace(&s, "rolling", &t).unwrap();
        assert_eq!(rolled.first_violations, vec![(0, 7)]);
        let pr = report_from_trace(&rolled.trace);
        assert_eq!(pr.checked_steps, 8);
        assert_eq!(pr.false_alarms, 2);
    }

    #[test]
    fn report_ratios() {
        let mut r = PRReport { true_nonalarms: 8, all_nonalarms: 10, false_alarms: 2, ..PRReport::default() };
        r.finish();
        assert_eq!(r.precision, Some(0.8));
        assert_eq!(r.recall, Some(0.8));
        let mut empty = PRReport::default();
        empty.finish();
        assert_eq!(empty.precision, None);
    }
}
