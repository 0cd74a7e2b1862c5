//! Scenario files: a hybrid-program model together with its monitors, fallback,
//! noise injection and episode parameters.
//!
//! A scenario is a TOML document. Model sections (`program`, `invariant`,
//! `diff_invariants`, `safety`, `assumptions`) are strings in the concrete
//! syntax and may use names from `[definitions]`, which are expanded textually
//! before parsing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::ast::{Formula, Program, Term};
use crate::error::{Error, Result};
use crate::estimator::EstimatorSpec;
use crate::eval::{eval_term, DEFAULT_TOL};
use crate::monitor::{Monitor, MonitorKind, MonitorOptions, RollingMonitor};
use crate::parse::{parse_formula, parse_program, parse_term};
use crate::program::{recognize_normal_form, NfKind, NormalFormInfo};
use crate::qe::{decide, WitnessConfig};
use crate::sim::RunConfig;
use crate::state::State;
use crate::vars::{bound_vars, formula_names, program_names};

const MAX_EXPANSION_DEPTH: usize = 16;
const START_TRIES: usize = 100_000;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    program: String,
    invariant: String,
    #[serde(default)]
    diff_invariants: Option<String>,
    #[serde(default)]
    safety: Option<String>,
    #[serde(default)]
    assumptions: Option<String>,
    #[serde(default)]
    unobservable: Vec<String>,
    #[serde(default)]
    definitions: BTreeMap<String, toml::Value>,
    #[serde(default)]
    fallback: Option<RawFallback>,
    #[serde(default)]
    monitors: RawMonitors,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    start: BTreeMap<String, toml::Value>,
    #[serde(default)]
    sampler: BTreeMap<String, toml::Value>,
    #[serde(default)]
    episodes: RawEpisodes,
    #[serde(default)]
    expectations: RawExpectations,
}

#[derive(Debug, Deserialize)]
struct RawFallback {
    #[serde(rename = "use")]
    active: String,
    #[serde(flatten)]
    programs: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitors {
    model: Option<String>,
    tolerance: Option<f64>,
    grid: Option<usize>,
    estimator_effect: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNoise {
    out_of_model_probability: f64,
    perturb: Option<String>,
    stage: Option<String>,
    excess: Option<toml::Value>,
    sensor_scale: f64,
    disturbance_scale: f64,
}

impl Default for RawNoise {
    fn default() -> Self {
        RawNoise {
            out_of_model_probability: 0.0,
            perturb: None,
            stage: None,
            excess: None,
            sensor_scale: 1.0,
            disturbance_scale: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEpisodes {
    runs: usize,
    steps: usize,
    seed: u64,
    ode_step: Option<f64>,
}

impl Default for RawEpisodes {
    fn default() -> Self {
        RawEpisodes { runs: 100, steps: 50, seed: 0, ode_step: None }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpectations {
    precision: Option<[f64; 2]>,
    recall: Option<[f64; 2]>,
}

/// Where an out-of-model perturbation is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbStage {
    /// Added to an actuated variable for the duration of the plant.
    Actuation,
    /// Added to a state variable after the plant has run.
    Plant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub out_of_model_probability: f64,
    pub perturb: Option<String>,
    pub stage: PerturbStage,
    /// Magnitude of an out-of-model perturbation beyond the modeled bound.
    pub excess: (f64, f64),
    /// Multiplier on in-band sensor noise; 0 gives exact measurements.
    pub sensor_scale: f64,
    /// Multiplier on in-band actuator disturbance.
    pub disturbance_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartValue {
    Fixed(f64),
    Range(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub runs: usize,
    pub steps: usize,
    pub seed: u64,
    pub ode_step: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expectations {
    pub precision: Option<(f64, f64)>,
    pub recall: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    /// Numeric definitions after expansion.
    pub constants: BTreeMap<String, f64>,
    pub program: Program,
    pub nf: NormalFormInfo,
    pub invariant: Formula,
    pub diff_invariants: Option<Formula>,
    pub safety: Formula,
    pub assumptions: Formula,
    pub unobservable: BTreeSet<String>,
    pub fallback_name: String,
    pub fallback: Program,
    pub model_kind: String,
    pub estimator_effect: Option<Term>,
    pub tolerance: f64,
    pub grid: usize,
    pub noise: NoiseConfig,
    pub start: BTreeMap<String, StartValue>,
    pub sampler: BTreeMap<String, (f64, f64)>,
    pub episodes: EpisodeConfig,
    pub expectations: Expectations,
}

fn scenario_err(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn expand_once(src: &str, defs: &BTreeMap<String, String>) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.extend(&chars[start..i]);
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let keyword = start > 0 && chars[start - 1] == '\\';
            match defs.get(&word) {
                Some(rep) if !keyword => {
                    out.push('(');
                    out.push_str(rep);
                    out.push(')');
                }
                _ => out.push_str(&word),
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

/// Replaces every whole identifier named in `defs` by its parenthesized
/// definition, repeatedly, until nothing changes.
pub fn expand_definitions(src: &str, defs: &BTreeMap<String, String>) -> Result<String> {
    let mut cur = src.to_string();
    for _ in 0..MAX_EXPANSION_DEPTH {
        let next = expand_once(&cur, defs);
        if next == cur {
            return Ok(cur);
        }
        cur = next;
    }
    Err(scenario_err("definitions do not expand to a fixpoint (recursive definition?)"))
}

fn pair_of(v: &toml::Value, what: &str) -> Result<(f64, f64)> {
    let arr = v.as_array().ok_or_else(|| scenario_err(format!("{what}: expected [lo, hi]")))?;
    if arr.len() != 2 {
        return Err(scenario_err(format!("{what}: expected [lo, hi]")));
    }
    let lo = num_of(&arr[0], what)?;
    let hi = num_of(&arr[1], what)?;
    if lo > hi {
        return Err(scenario_err(format!("{what}: empty interval [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn num_of(v: &toml::Value, what: &str) -> Result<f64> {
    match v {
        toml::Value::Float(x) => Ok(*x),
        toml::Value::Integer(n) => Ok(*n as f64),
        _ => Err(scenario_err(format!("{what}: expected a number"))),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        Scenario::load_with(path, &BTreeMap::new())
    }

    /// Loads with numeric `[definitions]` entries replaced by `overrides`.
    pub fn load_with(path: impl AsRef<Path>, overrides: &BTreeMap<String, f64>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| scenario_err(format!("{}: {e}", path.display())))?;
        Scenario::from_toml_with(&text, overrides)
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        Scenario::from_toml_with(text, &BTreeMap::new())
    }

    pub fn from_toml_with(text: &str, overrides: &BTreeMap<String, f64>) -> Result<Scenario> {
        let mut raw: RawScenario = toml::from_str(text).map_err(|e| scenario_err(e.to_string()))?;
        for (k, v) in overrides {
            match raw.definitions.get_mut(k) {
                Some(slot @ (toml::Value::Float(_) | toml::Value::Integer(_))) => *slot = toml::Value::Float(*v),
                Some(_) => return Err(scenario_err(format!("definition `{k}` is not numeric and cannot be overridden"))),
                None => return Err(scenario_err(format!("no definition `{k}` to override"))),
            }
        }
        let mut macros = BTreeMap::new();
        for (k, v) in &raw.definitions {
            let rep = match v {
                toml::Value::Float(x) => format!("{x:?}"),
                toml::Value::Integer(n) => n.to_string(),
                toml::Value::String(s) => s.clone(),
                _ => return Err(scenario_err(format!("definition `{k}` must be a number or a string"))),
            };
            macros.insert(k.clone(), rep);
        }
        let expand = |s: &str| expand_definitions(s, &macros);
        let formula = |s: &str| -> Result<Formula> { parse_formula(&expand(s)?) };

        let mut constants = BTreeMap::new();
        for k in macros.keys() {
            if let Ok(t) = parse_term(&expand(k)?) {
                if let Ok(x) = eval_term(&t, &State::new()) {
                    constants.insert(k.clone(), x);
                }
            }
        }

        let program = parse_program(&expand(&raw.program)?)?;
        let nf = recognize_normal_form(&program)?;
        let invariant = formula(&raw.invariant)?;
        let diff_invariants = raw.diff_invariants.as_deref().map(formula).transpose()?;
        let safety = raw.safety.as_deref().map(formula).transpose()?.unwrap_or(Formula::True);
        let assumptions = raw.assumptions.as_deref().map(formula).transpose()?.unwrap_or(Formula::True);

        let (fallback_name, fallback) = match &raw.fallback {
            Some(fb) => {
                let src = fb
                    .programs
                    .get(&fb.active)
                    .ok_or_else(|| scenario_err(format!("fallback `{}` is not defined", fb.active)))?;
                (fb.active.clone(), parse_program(&expand(src)?)?)
            }
            None => return Err(scenario_err("missing [fallback] section")),
        };

        let unobservable: BTreeSet<String> = raw.unobservable.iter().cloned().collect();
        let names = program_names(&program);
        for u in &unobservable {
            if !names.contains(u) {
                return Err(scenario_err(format!("unobservable variable `{u}` does not occur in the program")));
            }
        }

        let kind = match raw.monitors.model.as_deref() {
            Some(k) => k.to_string(),
            None => match nf.kind {
                NfKind::Plain => "exact".into(),
                NfKind::Disturbance => "disturbance".into(),
                NfKind::Measurement => "pairwise".into(),
            },
        };
        if !["exact", "disturbance", "pairwise", "rolling"].contains(&kind.as_str()) {
            return Err(scenario_err(format!("unknown monitor kind `{kind}`")));
        }
        let estimator_effect = raw.monitors.estimator_effect.as_deref().map(|s| parse_term(&expand(s)?)).transpose()?;

        let stage = match raw.noise.stage.as_deref() {
            None | Some("plant") => PerturbStage::Plant,
            Some("actuation") => PerturbStage::Actuation,
            Some(other) => return Err(scenario_err(format!("unknown noise stage `{other}`"))),
        };
        let excess = raw.noise.excess.as_ref().map(|v| pair_of(v, "noise.excess")).transpose()?.unwrap_or((0.0, 0.0));
        let p_out = raw.noise.out_of_model_probability;
        if !(0.0..=1.0).contains(&p_out) {
            return Err(scenario_err("noise.out_of_model_probability must lie in [0, 1]"));
        }
        if p_out > 0.0 && nf.kind != NfKind::Disturbance && raw.noise.perturb.is_none() {
            return Err(scenario_err("out-of-model noise needs `noise.perturb`"));
        }
        let noise = NoiseConfig {
            out_of_model_probability: p_out,
            perturb: raw.noise.perturb.clone(),
            stage,
            excess,
            sensor_scale: raw.noise.sensor_scale,
            disturbance_scale: raw.noise.disturbance_scale,
        };

        let mut start = BTreeMap::new();
        for (k, v) in &raw.start {
            let sv = match v {
                toml::Value::Array(_) => {
                    let (lo, hi) = pair_of(v, &format!("start.{k}"))?;
                    StartValue::Range(lo, hi)
                }
                toml::Value::String(s) => StartValue::Fixed(eval_term(&parse_term(&expand(s)?)?, &State::new())?),
                other => StartValue::Fixed(num_of(other, &format!("start.{k}"))?),
            };
            start.insert(k.clone(), sv);
        }
        let mut sampler = BTreeMap::new();
        for (k, v) in &raw.sampler {
            sampler.insert(k.clone(), pair_of(v, &format!("sampler.{k}"))?);
        }

        let mut state_names: BTreeSet<String> = names.clone();
        state_names.extend(formula_names(&invariant));
        for k in start.keys() {
            if !state_names.contains(k) {
                return Err(scenario_err(format!("start value for unknown variable `{k}`")));
            }
        }

        let episodes = EpisodeConfig {
            runs: raw.episodes.runs,
            steps: raw.episodes.steps,
            seed: raw.episodes.seed,
            ode_step: raw.episodes.ode_step.unwrap_or(0.01),
        };
        let expectations = Expectations {
            precision: raw.expectations.precision.map(|[a, b]| (a, b)),
            recall: raw.expectations.recall.map(|[a, b]| (a, b)),
        };

        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            constants,
            program,
            nf,
            invariant,
            diff_invariants,
            safety,
            assumptions,
            unobservable,
            fallback_name,
            fallback,
            model_kind: kind,
            estimator_effect,
            tolerance: raw.monitors.tolerance.unwrap_or(DEFAULT_TOL),
            grid: raw.monitors.grid.unwrap_or(crate::qe::witness::DEFAULT_GRID),
            noise,
            start,
            sampler,
            episodes,
            expectations,
        })
    }

    /// Loop body of the model.
    pub fn body(&self) -> &Program {
        self.program.loop_body()
    }

    /// Numeric value of the modeled bound Δ, if the model has one.
    pub fn delta(&self) -> Option<f64> {
        self.nf.delta().and_then(|d| eval_term(d, &State::new()).ok())
    }

    pub fn monitor_options(&self) -> MonitorOptions {
        let mut opts = MonitorOptions::default().unobservable(self.unobservable.iter().cloned());
        if let Some(r) = &self.diff_invariants {
            opts = opts.diff_invariants(r.clone());
        }
        opts
    }

    pub fn witness_config(&self) -> WitnessConfig {
        WitnessConfig::default().with_grid(self.grid).with_tol(self.tolerance)
    }

    /// The monitor kind named `name` for this model.
    pub fn kind(&self, name: &str) -> Result<MonitorKind> {
        let meas = || self.nf.measurement.clone().ok_or_else(|| scenario_err(format!("`{name}` monitor needs a measurement model")));
        Ok(match name {
            "exact" => MonitorKind::Exact,
            "control" => MonitorKind::ControlOnly,
            "disturbance" => {
                let d = self.nf.disturbance.clone().ok_or_else(|| scenario_err("`disturbance` monitor needs a disturbance model"))?;
                MonitorKind::Disturbance { actuated: d.actuated, delta: d.delta }
            }
            "pairwise" => {
                let m = meas()?;
                MonitorKind::Pairwise { measured: m.measured, measurement: m.measurement, delta: m.delta }
            }
            "rolling" => MonitorKind::Rolling(self.estimator_spec()?),
            other => return Err(scenario_err(format!("unknown monitor kind `{other}`"))),
        })
    }

    pub fn estimator_spec(&self) -> Result<EstimatorSpec> {
        let m = self.nf.measurement.clone().ok_or_else(|| scenario_err("estimator needs a measurement model"))?;
        let effect = self.estimator_effect.clone().unwrap_or(Term::num(0.0));
        Ok(EstimatorSpec::new(&m.measured, &m.measurement, m.delta, effect))
    }

    pub fn monitor(&self, name: &str) -> Result<Monitor> {
        let kind = self.kind(name)?;
        Ok(Monitor::new(&self.program, kind, &self.monitor_options())?.with_witness(self.witness_config()))
    }

    pub fn control_monitor(&self) -> Result<Monitor> {
        self.monitor("control")
    }

    pub fn rolling_monitor(&self) -> Result<RollingMonitor> {
        let mut m = RollingMonitor::new(&self.program, self.estimator_spec()?, &self.monitor_options())?;
        m.monitor = m.monitor.with_witness(self.witness_config());
        Ok(m)
    }

    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            ode_step: self.episodes.ode_step,
            seed,
            sampler: self.sampler.clone(),
            tol: self.tolerance,
            grid: self.grid,
            ..RunConfig::default()
        }
    }

    /// Every variable a simulated state carries.
    pub fn state_vars(&self) -> BTreeSet<String> {
        let mut names = program_names(&self.program);
        names.extend(program_names(&self.fallback));
        names.extend(bound_vars(&self.fallback));
        names.extend(formula_names(&self.invariant));
        names.extend(formula_names(&self.safety));
        names.extend(formula_names(&self.assumptions));
        names.retain(|n| !self.constants.contains_key(n));
        names
    }

    fn sample_box(&self, rng: &mut ChaCha8Rng) -> Result<State> {
        let mut s = State::new();
        for name in self.state_vars() {
            let v = match self.start.get(&name) {
                Some(StartValue::Fixed(x)) => *x,
                Some(StartValue::Range(lo, hi)) => rng.gen_range(*lo..=*hi),
                None => 0.0,
            };
            s.set(name, v);
        }
        if let Some(m) = &self.nf.measurement {
            let d = eval_term(&m.delta, &State::new())?;
            let y = s.get(&m.measured)?;
            let n = if d > 0.0 { rng.gen_range(-d..=d) * self.noise.sensor_scale } else { 0.0 };
            s.set(m.measurement.clone(), y + n);
            s.set(m.clock.clone(), eval_term(&m.duration, &s)?);
        } else if let Some(Program::Ode(eqs, dom)) = &self.nf.ode {
            if let Some((c, eps)) = crate::sim::clock_bound(eqs, dom) {
                if !self.start.contains_key(&c) {
                    s.set(c, eval_term(&eps, &s)?);
                }
            }
        }
        Ok(s)
    }

    /// Truth of `f` at `s`; quantifiers are decided by witness search.
    pub fn holds(&self, f: &Formula, s: &State) -> Result<bool> {
        decide(f, s, &self.witness_config())
    }

    /// A start state from the `[start]` box satisfying `require`.
    pub fn sample_state(&self, rng: &mut ChaCha8Rng, require: &Formula) -> Result<State> {
        for _ in 0..START_TRIES {
            let s = self.sample_box(rng)?;
            if self.holds(require, &s)? {
                return Ok(s);
            }
        }
        Err(scenario_err(format!("no start state satisfying {require} found in the [start] box")))
    }

    /// A start state satisfying the assumptions and the invariant.
    pub fn sample_start(&self, rng: &mut ChaCha8Rng) -> Result<State> {
        let req = Formula::and(self.assumptions.clone(), self.invariant.clone());
        self.sample_state(rng, &req)
    }

    /// Checks `A ⇒ η` and `η ⇒ S` on `n` sampled states.
    pub fn audit(&self, n: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut found_assumed = 0;
        for _ in 0..n {
            let s = self.sample_box(&mut rng)?;
            let a = self.holds(&self.assumptions, &s)?;
            let inv = self.holds(&self.invariant, &s)?;
            let safe = self.holds(&self.safety, &s)?;
            if a {
                found_assumed += 1;
            }
            if a && !inv {
                return Err(scenario_err(format!("audit: assumptions hold but the invariant fails at {s:?}")));
            }
            if inv && !safe {
                return Err(scenario_err(format!("audit: invariant holds but safety fails at {s:?}")));
            }
        }
        if n > 0 && found_assumed == 0 {
            return Err(scenario_err("audit: no sampled start state satisfies the assumptions"));
        }
        Ok(())
    }
}
