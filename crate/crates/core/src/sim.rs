//! Sampled execution of hybrid programs and a brute-force run-compatibility oracle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ast::{CmpOp, Formula, Program, Term, Var};
use crate::error::{Error, Result};
use crate::eval::{eval_term, Valuation, DEFAULT_TOL};
use crate::qe::linear::decompose;
use crate::qe::witness::{decide, WitnessConfig};
use crate::state::{State, TransitionPair};
use crate::vars::{bound_vars, term_mentions, term_vars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChoicePolicy {
    /// Uniform coin flips and uniform samples; scripted entries are consumed first.
    Random,
    /// Every nondeterministic decision must come from the script.
    Scripted,
}

/// Queued answers to nondeterministic decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    /// `true` takes the left branch of a choice.
    pub choices: VecDeque<bool>,
    pub assigns: BTreeMap<String, VecDeque<f64>>,
    pub stop_times: VecDeque<f64>,
    pub loop_counts: VecDeque<usize>,
}

impl Script {
    pub fn assign(mut self, x: &str, v: f64) -> Self {
        self.assigns.entry(x.to_string()).or_default().push_back(v);
        self
    }

    pub fn choose(mut self, left: bool) -> Self {
        self.choices.push_back(left);
        self
    }

    pub fn stop_at(mut self, t: f64) -> Self {
        self.stop_times.push_back(t);
        self
    }

    pub fn loops(mut self, n: usize) -> Self {
        self.loop_counts.push_back(n);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub ode_step: f64,
    pub seed: u64,
    pub policy: ChoicePolicy,
    /// Sampling interval for `x := *`, per variable.
    pub sampler: BTreeMap<String, (f64, f64)>,
    /// Interval for variables without an entry in `sampler`.
    pub default_interval: (f64, f64),
    /// Longest evolution for ODEs without a clock bound.
    pub horizon: f64,
    pub max_loop: usize,
    pub tol: f64,
    pub grid: usize,
    pub script: Script,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ode_step: 0.01,
            seed: 0,
            policy: ChoicePolicy::Random,
            sampler: BTreeMap::new(),
            default_interval: (-10.0, 10.0),
            horizon: 1.0,
            max_loop: 3,
            tol: DEFAULT_TOL,
            grid: crate::qe::witness::DEFAULT_GRID,
            script: Script::default(),
        }
    }
}

impl RunConfig {
    pub fn scripted(script: Script) -> Self {
        RunConfig { policy: ChoicePolicy::Scripted, script, ..RunConfig::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.ode_step = h;
        self
    }

    fn witness(&self) -> WitnessConfig {
        WitnessConfig::default().with_grid(self.grid).with_tol(self.tol)
    }
}

/// Accumulated `z - z0` over the ODE segments of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantEffect {
    pub delta: BTreeMap<String, f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Done(State, PlantEffect),
    Blocked,
}

impl RunOutcome {
    pub fn state(&self) -> Option<&State> {
        match self {
            RunOutcome::Done(s, _) => Some(s),
            RunOutcome::Blocked => None,
        }
    }
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    rng: &'a mut ChaCha8Rng,
    script: Script,
    effect: PlantEffect,
}

/// Values of ODE variables layered over the frozen rest of the state.
struct OdeEnv<'a> {
    base: &'a State,
    names: &'a [String],
    vals: &'a [f64],
}

impl Valuation for OdeEnv<'_> {
    fn value(&self, v: &Var) -> Result<f64> {
        if !v.post {
            if let Some(i) = self.names.iter().position(|n| *n == v.name) {
                return Ok(self.vals[i]);
            }
        }
        self.base.value(v)
    }
}

fn linear_bounds(x: &str, guard: &Formula, st: &State) -> (f64, f64) {
    let xv = Var::pre(x);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in guard.conjuncts() {
        let Formula::Cmp(op, l, r) = c else { continue };
        if !term_mentions(l, &xv) && !term_mentions(r, &xv) {
            continue;
        }
        let Ok((a, b)) = decompose(&Term::sub(l.clone(), r.clone()), &xv) else { continue };
        let (Ok(a), Ok(b)) = (eval_term(&a, st), eval_term(&b, st)) else { continue };
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            continue;
        }
        let bound = -b / a;
        match if a < 0.0 { op.flip() } else { *op } {
            CmpOp::Eq => {
                lo = lo.max(bound);
                hi = hi.min(bound);
            }
            CmpOp::Lt | CmpOp::Le => hi = hi.min(bound),
            CmpOp::Gt | CmpOp::Ge => lo = lo.max(bound),
        }
    }
    (lo, hi)
}

/// The first test after `stmts[i]` that is not preceded by anything but `_ := *`.
fn following_guard<'p>(stmts: &[&'p Program], i: usize) -> Option<&'p Formula> {
    for s in &stmts[i + 1..] {
        match s {
            Program::AssignAny(_) => continue,
            Program::Test(h) => return Some(h),
            _ => return None,
        }
    }
    None
}

/// Clock variable `c` with `c' = 1` and bound `c <= e` in the domain.
pub fn clock_bound(eqs: &[(String, Term)], dom: &Formula) -> Option<(String, Term)> {
    for c in dom.conjuncts() {
        if let Formula::Cmp(CmpOp::Le, Term::Var(v), e) = c {
            if !v.post && eqs.iter().any(|(x, r)| *x == v.name && *r == Term::Num(1.0)) {
                return Some((v.name.clone(), e.clone()));
            }
        }
    }
    None
}

/// Integrates `eqs` for `duration` from `st` with RK4, checking `dom` after every step.
/// Returns the final state and the elapsed time (shorter if the domain is left).
pub fn integrate(
    eqs: &[(String, Term)],
    dom: &Formula,
    st: &State,
    duration: f64,
    h: f64,
    wcfg: &WitnessConfig,
) -> Result<Option<(State, f64)>> {
    if !decide(dom, st, wcfg)? {
        return Ok(None);
    }
    let names: Vec<String> = eqs.iter().map(|(x, _)| x.clone()).collect();
    let start: Vec<f64> = names.iter().map(|n| st.get(n)).collect::<Result<_>>()?;
    let ode_vars: BTreeSet<Var> = names.iter().map(|n| Var::pre(n.clone())).collect();
    // Right-hand sides that do not depend on ODE variables are integrated exactly.
    let constant: Vec<Option<f64>> = eqs
        .iter()
        .map(|(_, e)| {
            if term_vars(e).is_disjoint(&ode_vars) {
                eval_term(e, st).ok()
            } else {
                None
            }
        })
        .collect();
    let rhs = |vals: &[f64], out: &mut [f64]| -> Result<()> {
        let env = OdeEnv { base: st, names: &names, vals };
        for (i, (_, e)) in eqs.iter().enumerate() {
            out[i] = eval_term(e, &env)?;
        }
        Ok(())
    };
    let n = names.len();
    let mut cur = start.clone();
    let mut elapsed = 0.0;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let steps = if duration <= 0.0 { 0 } else { (duration / h - 1e-9).ceil().max(1.0) as usize };
    let mut state = st.clone();
    for k in 0..steps {
        let next_elapsed = if k + 1 == steps { duration } else { (k + 1) as f64 * h };
        let dt = next_elapsed - elapsed;
        rhs(&cur, &mut k1)?;
        for i in 0..n {
            tmp[i] = cur[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = cur[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = cur[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4)?;
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = match constant[i] {
                Some(c) => start[i] + c * next_elapsed,
                None => cur[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]),
            };
            if !next[i].is_finite() {
                return Err(Error::Divergence(names[i].clone()));
            }
        }
        let mut candidate = state.clone();
        for (i, name) in names.iter().enumerate() {
            candidate.set(name.clone(), next[i]);
        }
        if !decide(dom, &candidate, wcfg)? {
            break;
        }
        state = candidate;
        cur = next;
        elapsed = next_elapsed;
    }
    Ok(Some((state, elapsed)))
}

impl Runner<'_> {
    fn sample(&mut self, x: &str, lo: f64, hi: f64) -> Result<Option<f64>> {
        if let Some(v) = self.script.assigns.get_mut(x).and_then(VecDeque::pop_front) {
            return Ok(Some(v));
        }
        if self.cfg.policy == ChoicePolicy::Scripted {
            return Err(Error::ScriptExhausted(format!("value for `{x}`")));
        }
        let (clo, chi) = self.cfg.sampler.get(x).copied().unwrap_or(self.cfg.default_interval);
        let (lo, hi) = (lo.max(clo), hi.min(chi));
        if lo > hi {
            return Ok(None);
        }
        Ok(Some(if lo == hi { lo } else { self.rng.gen_range(lo..=hi) }))
    }

    fn choose(&mut self) -> Result<bool> {
        if let Some(c) = self.script.choices.pop_front() {
            return Ok(c);
        }
        if self.cfg.policy == ChoicePolicy::Scripted {
            return Err(Error::ScriptExhausted("choice".into()));
        }
        Ok(self.rng.gen_bool(0.5))
    }

    fn test(&self, h: &Formula, st: &State) -> Result<bool> {
        match decide(h, st, &self.cfg.witness()) {
            Err(Error::DivisionByZero) => Ok(false),
            other => other,
        }
    }

    fn exec(&mut self, p: &Program, st: State) -> Result<Option<State>> {
        let stmts = p.statements();
        let mut st = st;
        for (i, s) in stmts.iter().enumerate() {
            match s {
                Program::Assign(x, e) => {
                    let v = eval_term(e, &st)?;
                    st.set(x.clone(), v);
                }
                Program::AssignAny(x) => {
                    let (lo, hi) = match following_guard(&stmts, i) {
                        Some(g) => linear_bounds(x, g, &st),
                        None => (f64::NEG_INFINITY, f64::INFINITY),
                    };
                    match self.sample(x, lo, hi)? {
                        Some(v) => st.set(x.clone(), v),
                        None => return Ok(None),
                    }
                }
                Program::Test(h) => {
                    if !self.test(h, &st)? {
                        return Ok(None);
                    }
                }
                Program::Ode(eqs, dom) => match self.ode(eqs, dom, &st)? {
                    Some(next) => st = next,
                    None => return Ok(None),
                },
                Program::Choice(a, b) => {
                    let left = self.choose()?;
                    let (first, second) = if left { (a, b) } else { (b, a) };
                    let saved = (self.script.clone(), self.effect.clone());
                    match self.exec(first, st.clone())? {
                        Some(next) => st = next,
                        None if self.cfg.policy == ChoicePolicy::Random => {
                            (self.script, self.effect) = saved;
                            match self.exec(second, st.clone())? {
                                Some(next) => st = next,
                                None => return Ok(None),
                            }
                        }
                        None => return Ok(None),
                    }
                }
                Program::Loop(body) => {
                    let n = match self.script.loop_counts.pop_front() {
                        Some(n) => n,
                        None if self.cfg.policy == ChoicePolicy::Scripted => {
                            return Err(Error::ScriptExhausted("loop count".into()))
                        }
                        None => self.rng.gen_range(0..=self.cfg.max_loop),
                    };
                    for _ in 0..n {
                        match self.exec(body, st)? {
                            Some(next) => st = next,
                            None => return Ok(None),
                        }
                    }
                }
                Program::Seq(..) => unreachable!("statements are flattened"),
            }
        }
        Ok(Some(st))
    }

    fn ode(&mut self, eqs: &[(String, Term)], dom: &Formula, st: &State) -> Result<Option<State>> {
        let duration = if let Some(t) = self.script.stop_times.pop_front() {
            t
        } else if let Some((c, bound)) = clock_bound(eqs, dom) {
            (eval_term(&bound, st)? - st.get(&c)?).max(0.0)
        } else if self.cfg.policy == ChoicePolicy::Scripted {
            return Err(Error::ScriptExhausted("ODE stop time".into()));
        } else {
            self.rng.gen_range(0.0..=self.cfg.horizon)
        };
        let Some((end, elapsed)) = integrate(eqs, dom, st, duration, self.cfg.ode_step, &self.cfg.witness())? else {
            return Ok(None);
        };
        for (x, _) in eqs {
            *self.effect.delta.entry(x.clone()).or_insert(0.0) += end.get(x)? - st.get(x)?;
        }
        self.effect.duration += elapsed;
        Ok(Some(end))
    }
}

/// One sampled run drawing randomness from `rng`.
pub fn run_program_rng(p: &Program, start: &State, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<RunOutcome> {
    let mut runner = Runner { cfg, rng, script: cfg.script.clone(), effect: PlantEffect::default() };
    Ok(match runner.exec(p, start.clone())? {
        Some(s) => RunOutcome::Done(s, runner.effect),
        None => RunOutcome::Blocked,
    })
}

/// One sampled run, seeded from `cfg.seed`.
pub fn run_program(p: &Program, start: &State, cfg: &RunConfig) -> Result<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_program_rng(p, start, cfg, &mut rng)
}

const RETRIES: usize = 64;

/// `n` independent end states; blocked runs are retried.
pub fn reachable_samples(p: &Program, start: &State, n: usize, cfg: &RunConfig) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
        for _ in 0..RETRIES {
            if let RunOutcome::Done(s, _) = run_program_rng(p, start, cfg, &mut rng)? {
                out.push(s);
                break;
            }
        }
    }
    if out.is_empty() {
        return Err(Error::AllBlocked);
    }
    Ok(out)
}

const ORACLE_TOL: f64 = 1e-6;

/// Brute-force search for a run of loop-free `p` from `pair.pre` that ends within
/// tolerance of `pair.post` on `BV(p)`. A test oracle only.
pub fn check_run_compatibility(p: &Program, pair: &TransitionPair, cfg: &RunConfig) -> bool {
    let names: BTreeSet<String> = bound_vars(p);
    check_run_compatibility_on(p, pair, cfg, &names)
}

/// As [`check_run_compatibility`], comparing only `names`.
pub fn check_run_compatibility_on(p: &Program, pair: &TransitionPair, cfg: &RunConfig, names: &BTreeSet<String>) -> bool {
    let oracle = Oracle { cfg, target: &pair.post, names };
    let stmts = p.statements();
    oracle.explore(&stmts, pair.pre.clone())
}

struct Oracle<'a> {
    cfg: &'a RunConfig,
    target: &'a State,
    names: &'a BTreeSet<String>,
}

impl Oracle<'_> {
    fn matches(&self, st: &State) -> bool {
        self.names.iter().all(|n| match (st.try_get(n), self.target.try_get(n)) {
            (Some(a), Some(b)) => (a - b).abs() <= ORACLE_TOL,
            _ => true,
        })
    }

    fn wcfg(&self) -> WitnessConfig {
        WitnessConfig::default().with_grid(self.cfg.grid).with_tol(ORACLE_TOL)
    }

    fn explore(&self, stmts: &[&Program], st: State) -> bool {
        let Some((first, rest)) = stmts.split_first() else {
            return self.matches(&st);
        };
        match first {
            Program::Assign(x, e) => match eval_term(e, &st) {
                Ok(v) => self.explore(rest, st.with(x.clone(), v)),
                Err(_) => false,
            },
            Program::AssignAny(x) => {
                let mut cands: Vec<f64> = Vec::new();
                if let Some(v) = self.target.try_get(x) {
                    cands.push(v);
                    // A compared variable that is never rebound can only end at its target.
                    if self.names.contains(x) && !rest.iter().any(|p| bound_vars(p).contains(x)) {
                        return self.explore(rest, st.with(x.clone(), v));
                    }
                }
                let (mut lo, mut hi) = self.cfg.sampler.get(x).copied().unwrap_or(self.cfg.default_interval);
                if let Some(g) = following_guard(stmts, 0) {
                    let (glo, ghi) = linear_bounds(x, g, &st);
                    cands.extend([glo, ghi].into_iter().filter(|v| v.is_finite()));
                    lo = lo.max(glo);
                    hi = hi.min(ghi);
                }
                if lo <= hi {
                    let k = self.cfg.grid.max(2);
                    cands.extend((0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64));
                }
                cands.iter().any(|v| self.explore(rest, st.clone().with(x.clone(), *v)))
            }
            Program::Test(h) => decide(h, &st, &self.wcfg()).unwrap_or(false) && self.explore(rest, st),
            Program::Choice(a, b) => {
                let mut left: Vec<&Program> = a.statements();
                left.extend_from_slice(rest);
                let mut right: Vec<&Program> = b.statements();
                right.extend_from_slice(rest);
                self.explore(&left, st.clone()) || self.explore(&right, st)
            }
            Program::Loop(body) => {
                let mut cur = vec![st];
                for _ in 0..=self.cfg.max_loop {
                    if cur.iter().any(|s| self.explore(rest, s.clone())) {
                        return true;
                    }
                    // Deterministic bodies only: advance each state by one iteration.
                    let mut next = Vec::new();
                    for s in cur {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                        if let Ok(RunOutcome::Done(n, _)) = run_program_rng(body, &s, self.cfg, &mut rng) {
                            next.push(n);
                        }
                    }
                    cur = next;
                }
                false
            }
            Program::Ode(eqs, dom) => self.ode_candidates(eqs, dom, &st).into_iter().any(|s| self.explore(rest, s)),
            Program::Seq(..) => unreachable!("statements are flattened"),
        }
    }

    /// End states at which some ODE variable crosses its target value, plus the
    /// clock-bounded endpoint and the zero-duration state.
    fn ode_candidates(&self, eqs: &[(String, Term)], dom: &Formula, st: &State) -> Vec<State> {
        let wcfg = self.wcfg();
        let h = self.cfg.ode_step;
        let horizon = match clock_bound(eqs, dom) {
            Some((c, bound)) => match (eval_term(&bound, st), st.get(&c)) {
                (Ok(b), Ok(c)) => (b - c).max(0.0),
                _ => return Vec::new(),
            },
            None => self.cfg.horizon,
        };
        let at = |t: f64| -> Option<(State, f64)> { integrate(eqs, dom, st, t, h, &wcfg).ok().flatten() };
        let mut out = vec![];
        let Some((s0, _)) = at(0.0) else { return out };
        out.push(s0);
        if let Some((end, _)) = at(horizon) {
            out.push(end);
        }
        let tracked: Vec<(&String, f64)> =
            eqs.iter().filter_map(|(x, _)| self.target.try_get(x).map(|v| (x, v))).collect();
        let steps = (horizon / h).ceil().max(1.0) as usize;
        let mut cur = st.clone();
        let mut t = 0.0;
        for k in 1..=steps {
            let t_next = (k as f64 * h).min(horizon);
            let Some((next, reached)) = integrate(eqs, dom, &cur, t_next - t, h, &wcfg).ok().flatten() else { break };
            if reached < t_next - t - 1e-12 {
                break;
            }
            for (x, target) in &tracked {
                let (Ok(a), Ok(b)) = (cur.get(x), next.get(x)) else { continue };
                if (a - target) * (b - target) <= 0.0 {
                    let (mut lo, mut hi) = (t, t_next);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        let Some((sm, _)) = at(mid) else { break };
                        let ym = sm.get(x).unwrap_or(f64::NAN) - target;
                        if (a - target) * ym <= 0.0 {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    if let Some((s, _)) = at(hi) {
                        out.push(s);
                    }
                }
            }
            cur = next;
            t = t_next;
        }
        out
    }
}
