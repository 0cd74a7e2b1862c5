//! Runtime loop with fallback: an untrusted controller proposes, the control
//! monitor vets the proposal, the plant advances under injected disturbance and
//! sensor noise, and the model monitor checks the completed transition.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ast::{Formula, Program};
use crate::error::{Error, Result};
use crate::estimator::Estimate;
use crate::eval::eval_term;
use crate::monitor::{Monitor, RollingMonitor};
use crate::program::{NfKind, NormalFormInfo};
use crate::qe::{decide, WitnessConfig};
use crate::scenario::{NoiseConfig, PerturbStage, Scenario};
use crate::sim::{clock_bound, run_program_rng, RunConfig, RunOutcome};
use crate::state::{State, TransitionPair};
use crate::trace::{Action, Trace, TraceRow};
use crate::vars::bound_vars;

pub const FALLBACK_SAMPLES: usize = 1000;

/// Source of control decisions.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerMode {
    /// Runs the model's own controller.
    Model,
    /// Draws every controller variable from its sampler interval, rounded to an
    /// integer half of the time. No guard is consulted.
    Adversarial,
    /// Decisions in order; an exhausted script is an error.
    Scripted(VecDeque<BTreeMap<String, f64>>),
}

/// What to do when the invariant fails at step entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvariantCheck {
    Strict,
    Record,
}

/// How out-of-model perturbations are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectionPlan {
    /// Per the scenario's `[noise]` section.
    Random,
    /// Signed excess beyond the modeled bound at the listed steps only.
    Scripted(BTreeMap<usize, f64>),
}

#[derive(Debug, Clone)]
pub enum ModelMonitor {
    Stateless(Monitor),
    Rolling(RollingMonitor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackReason {
    ModelViolation,
    ControlViolation,
    Blocked,
}

#[derive(Debug, Clone)]
pub struct Sandbox {
    pub nf: NormalFormInfo,
    pub ctrl: Program,
    /// Plant as executed by the simulator: the ODE domain is reduced to its clock bound.
    pub truth_plant: Program,
    pub fallback: Program,
    pub invariant: Formula,
    pub safety: Formula,
    pub control_monitor: Monitor,
    pub model_monitor: ModelMonitor,
    pub controller: ControllerMode,
    pub invariant_check: InvariantCheck,
    pub plan: InjectionPlan,
    pub noise: NoiseConfig,
    pub run_cfg: RunConfig,
    pub delta: f64,
    witness: WitnessConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub state: State,
    pub step: usize,
    pub time: f64,
    pub prev_model_violated: bool,
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub step: usize,
    /// Controller output before vetting; `None` if the controller was blocked.
    pub proposed: Option<State>,
    /// Control monitor on the proposal; `None` if not consulted.
    pub control_verdict: Option<bool>,
    /// Model monitor verdict of the previous physics step.
    pub prev_model_verdict: Option<bool>,
    pub fallback_reason: Option<FallbackReason>,
    pub action: Action,
    /// Whether the applied decision passes the control monitor.
    pub decision_in_model: bool,
    pub injection_in_model: bool,
    pub conformant: bool,
    pub model_verdict: Option<bool>,
    pub invariant_at_entry: bool,
    pub invariant_after: bool,
    pub safe_after: bool,
    pub post: State,
    pub measured: BTreeMap<String, f64>,
    pub effect: BTreeMap<String, f64>,
    pub estimate: Option<Estimate>,
    pub duration: f64,
}

fn strip_domain(p: &Program) -> Program {
    match p {
        Program::Ode(eqs, dom) => match clock_bound(eqs, dom) {
            Some((c, eps)) => Program::Ode(eqs.clone(), Formula::le(crate::ast::Term::var(&c), eps)),
            None => p.clone(),
        },
        Program::Seq(a, b) => Program::seq(strip_domain(a), strip_domain(b)),
        Program::Choice(a, b) => Program::choice(strip_domain(a), strip_domain(b)),
        Program::Loop(a) => Program::repeat(strip_domain(a)),
        other => other.clone(),
    }
}

impl Sandbox {
    /// Sandbox for `scenario` with the model monitor named `kind`.
    pub fn new(scenario: &Scenario, kind: &str) -> Result<Sandbox> {
        let model_monitor = if kind == "rolling" {
            ModelMonitor::Rolling(scenario.rolling_monitor()?)
        } else {
            ModelMonitor::Stateless(scenario.monitor(kind)?)
        };
        let control_monitor = scenario.control_monitor()?;
        Ok(Sandbox {
            nf: scenario.nf.clone(),
            ctrl: scenario.nf.ctrl.clone(),
            truth_plant: strip_domain(&scenario.nf.plant),
            fallback: scenario.fallback.clone(),
            invariant: scenario.invariant.clone(),
            safety: scenario.safety.clone(),
            control_monitor,
            model_monitor,
            controller: ControllerMode::Model,
            invariant_check: InvariantCheck::Strict,
            plan: InjectionPlan::Random,
            noise: scenario.noise.clone(),
            run_cfg: scenario.run_config(scenario.episodes.seed),
            delta: scenario.delta().unwrap_or(0.0),
            witness: scenario.witness_config(),
        })
    }

    pub fn with_controller(mut self, c: ControllerMode) -> Self {
        self.controller = c;
        self
    }

    pub fn with_invariant_check(mut self, c: InvariantCheck) -> Self {
        self.invariant_check = c;
        self
    }

    pub fn with_plan(mut self, plan: InjectionPlan) -> Self {
        self.plan = plan;
        self
    }

    /// Runs the fallback from each state and requires every output to pass the
    /// control monitor.
    pub fn validate_fallback(&self, states: &[State], seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in states {
            match run_program_rng(&self.fallback, s, &self.run_cfg, &mut rng)? {
                RunOutcome::Blocked => {
                    return Err(Error::InvalidFallback(format!("fallback is blocked in {s:?}")));
                }
                RunOutcome::Done(out, _) => {
                    let pair = TransitionPair::new(s.clone(), out.clone())?;
                    if !self.control_monitor.check(&pair)?.satisfied {
                        return Err(Error::InvalidFallback(format!("output {out:?} from {s:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn begin(&self, start: State) -> EpisodeState {
        let estimate = match &self.model_monitor {
            ModelMonitor::Rolling(m) => Some(Estimate::full(m.delta)),
            ModelMonitor::Stateless(_) => None,
        };
        EpisodeState { state: start, step: 0, time: 0.0, prev_model_violated: false, estimate }
    }

    fn propose(&self, st: &State, script: &mut VecDeque<BTreeMap<String, f64>>, rng: &mut ChaCha8Rng) -> Result<Option<State>> {
        match &self.controller {
            ControllerMode::Model => Ok(run_program_rng(&self.ctrl, st, &self.run_cfg, rng)?.state().cloned()),
            ControllerMode::Adversarial => {
                let mut out = st.clone();
                for x in bound_vars(&self.ctrl) {
                    let (lo, hi) = self.run_cfg.sampler.get(&x).copied().unwrap_or(self.run_cfg.default_interval);
                    let mut v = rng.gen_range(lo..=hi);
                    if rng.gen_bool(0.5) {
                        v = v.round().clamp(lo.ceil(), hi.floor().max(lo.ceil()));
                    }
                    out.set(x, v);
                }
                Ok(Some(out))
            }
            ControllerMode::Scripted(_) => {
                let decision = script
                    .pop_front()
                    .ok_or_else(|| Error::ScriptExhausted("controller decision".into()))?;
                let mut out = st.clone();
                for (k, v) in decision {
                    out.set(k, v);
                }
                Ok(Some(out))
            }
        }
    }

    fn control_ok(&self, pre: &State, post: &State) -> Result<bool> {
        Ok(self.control_monitor.check(&TransitionPair::new(pre.clone(), post.clone())?)?.satisfied)
    }

    fn excess_for(&self, step: usize, rng: &mut ChaCha8Rng) -> Option<f64> {
        match &self.plan {
            InjectionPlan::Scripted(spikes) => spikes.get(&step).copied(),
            InjectionPlan::Random => {
                let p = self.noise.out_of_model_probability;
                if p > 0.0 && rng.gen_bool(p) {
                    let (lo, hi) = self.noise.excess;
                    let mag = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                    Some(if rng.gen_bool(0.5) { mag } else { -mag })
                } else {
                    None
                }
            }
        }
    }

    /// Plant evolution from the post-controller state `mu` with `excess` (signed,
    /// beyond the modeled bound) injected, or in-model noise only.
    fn physics(&self, mu: &State, excess: Option<f64>, rng: &mut ChaCha8Rng) -> Result<Option<(State, BTreeMap<String, f64>, f64)>> {
        let mut pre = mu.clone();
        if let Some(d) = &self.nf.disturbance {
            let u = mu.get(&d.commanded)?;
            let delta = eval_term(&d.delta, mu)?;
            let actual = match excess {
                Some(e) => u + e.signum() * delta + e,
                None if delta > 0.0 => u + rng.gen_range(-delta..=delta) * self.noise.disturbance_scale,
                None => u,
            };
            pre.set(d.actuated.clone(), actual);
        }
        let restore = match (&self.noise.perturb, excess, self.noise.stage) {
            (Some(w), Some(e), PerturbStage::Actuation) if self.nf.disturbance.is_none() => {
                let orig = pre.get(w)?;
                pre.set(w.clone(), orig + e);
                Some((w.clone(), orig))
            }
            _ => None,
        };
        let (mut post, effect) = match run_program_rng(&self.truth_plant, &pre, &self.run_cfg, rng)? {
            RunOutcome::Done(s, e) => (s, e),
            RunOutcome::Blocked => return Ok(None),
        };
        if let Some((w, orig)) = restore {
            post.set(w, orig);
        }
        if let (Some(y), Some(e), PerturbStage::Plant) = (&self.noise.perturb, excess, self.noise.stage) {
            post.set(y.clone(), post.get(y)? + e);
        }
        let mut effects = BTreeMap::new();
        if let Some(m) = &self.nf.measurement {
            let delta = eval_term(&m.delta, &post)?;
            let n = if delta > 0.0 { rng.gen_range(-delta..=delta) * self.noise.sensor_scale } else { 0.0 };
            let y = post.get(&m.measured)?;
            post.set(m.measurement.clone(), y + n);
            effects.insert(m.measured.clone(), effect.delta.get(&m.measured).copied().unwrap_or(0.0));
        }
        Ok(Some((post, effects, effect.duration)))
    }

    fn holds(&self, f: &Formula, s: &State) -> Result<bool> {
        decide(f, s, &self.witness)
    }

    /// One controller decision and one plant step from `ep`.
    pub fn step(
        &self,
        ep: &mut EpisodeState,
        script: &mut VecDeque<BTreeMap<String, f64>>,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepOutcome> {
        let current = ep.state.clone();
        let step = ep.step + 1;
        let invariant_at_entry = self.holds(&self.invariant, &current)?;
        if !invariant_at_entry && self.invariant_check == InvariantCheck::Strict {
            return Err(Error::InvariantAtEntry(step));
        }
        let prev_model_verdict = (ep.step > 0).then_some(!ep.prev_model_violated);
        let proposed = self.propose(&current, script, rng)?;
        let control_verdict = match &proposed {
            Some(mu) => Some(self.control_ok(&current, mu)?),
            None => None,
        };
        let reason = if ep.prev_model_violated {
            Some(FallbackReason::ModelViolation)
        } else if proposed.is_none() {
            Some(FallbackReason::Blocked)
        } else if control_verdict == Some(false) {
            Some(FallbackReason::ControlViolation)
        } else {
            None
        };
        let halted = |ep: &EpisodeState| StepOutcome {
            step,
            proposed: proposed.clone(),
            control_verdict,
            prev_model_verdict,
            fallback_reason: reason,
            action: Action::Halted,
            decision_in_model: false,
            injection_in_model: true,
            conformant: false,
            model_verdict: None,
            invariant_at_entry,
            invariant_after: invariant_at_entry,
            safe_after: self.holds(&self.safety, &ep.state).unwrap_or(false),
            post: ep.state.clone(),
            measured: BTreeMap::new(),
            effect: BTreeMap::new(),
            estimate: ep.estimate,
            duration: 0.0,
        };
        let (mu, action, decision_in_model) = match reason {
            None => (proposed.clone().expect("proposal"), Action::PassThrough, true),
            Some(_) => match run_program_rng(&self.fallback, &current, &self.run_cfg, rng)? {
                RunOutcome::Done(s, _) => {
                    let ok = self.control_ok(&current, &s)?;
                    (s, Action::FallbackEngaged, ok)
                }
                RunOutcome::Blocked => return Ok(halted(ep)),
            },
        };

        let mut excess = self.excess_for(step, rng);
        let mut outcome = None;
        // Out-of-model injections are kept inside the invariant: try the opposite
        // sign, then give up on the injection for this step.
        for attempt in 0..3 {
            let e = match attempt {
                0 => excess,
                1 => excess.map(|e| -e),
                _ => None,
            };
            if attempt > 0 && excess.is_none() {
                break;
            }
            let Some(res) = self.physics(&mu, e, rng)? else { continue };
            if e.is_some() && matches!(self.plan, InjectionPlan::Random) && !self.holds(&self.invariant, &res.0)? {
                continue;
            }
            excess = e;
            outcome = Some(res);
            break;
        }
        let Some((post, measured_effect, duration)) = outcome else { return Ok(halted(ep)) };
        let injection_in_model = excess.is_none();

        let pair = TransitionPair::new(current.clone(), post.clone())?;
        let (verdict, estimate) = match &self.model_monitor {
            ModelMonitor::Stateless(m) => (m.check(&pair)?.satisfied, None),
            ModelMonitor::Rolling(m) => {
                let est = ep.estimate.unwrap_or(Estimate::full(m.delta));
                let (v, next) = m.check_from(&pair, est)?;
                (v.satisfied, Some(next))
            }
        };
        let mut measured = BTreeMap::new();
        if let Some(m) = &self.nf.measurement {
            measured.insert(m.measured.clone(), post.get(&m.measurement)?);
        }
        let out = StepOutcome {
            step,
            proposed,
            control_verdict,
            prev_model_verdict,
            fallback_reason: reason,
            action,
            decision_in_model,
            injection_in_model,
            conformant: injection_in_model && decision_in_model,
            model_verdict: Some(verdict),
            invariant_at_entry,
            invariant_after: self.holds(&self.invariant, &post)?,
            safe_after: self.holds(&self.safety, &post)?,
            post: post.clone(),
            measured,
            effect: measured_effect,
            estimate,
            duration,
        };
        ep.state = post;
        ep.step = step;
        ep.time += duration;
        ep.prev_model_violated = !verdict;
        ep.estimate = estimate;
        Ok(out)
    }

    /// Runs up to `steps` steps from `start`, stopping early if the loop halts.
    pub fn run_episode(&self, run: usize, start: State, steps: usize, seed: u64) -> Result<(Trace, Vec<StepOutcome>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut script = match &self.controller {
            ControllerMode::Scripted(s) => s.clone(),
            _ => VecDeque::new(),
        };
        let mut ep = self.begin(start);
        let mut rows = vec![self.start_row(run, &ep)?];
        let mut outcomes = Vec::with_capacity(steps);
        for _ in 0..steps {
            let o = self.step(&mut ep, &mut script, &mut rng)?;
            rows.push(TraceRow {
                run,
                step: o.step,
                time: ep.time,
                state: o.post.clone(),
                measured: o.measured.clone(),
                effect: o.effect.clone(),
                estimate: o.estimate,
                conformant: o.conformant,
                action: o.action,
                verdict: o.model_verdict,
            });
            let stop = o.action == Action::Halted;
            outcomes.push(o);
            if stop {
                break;
            }
        }
        Ok((Trace { rows }, outcomes))
    }

    fn start_row(&self, run: usize, ep: &EpisodeState) -> Result<TraceRow> {
        let mut measured = BTreeMap::new();
        if let Some(m) = &self.nf.measurement {
            measured.insert(m.measured.clone(), ep.state.get(&m.measurement)?);
        }
        Ok(TraceRow {
            run,
            step: 0,
            time: 0.0,
            state: ep.state.clone(),
            measured,
            effect: BTreeMap::new(),
            estimate: ep.estimate,
            conformant: true,
            action: Action::Start,
            verdict: None,
        })
    }

    pub fn kind(&self) -> NfKind {
        self.nf.kind
    }
}
