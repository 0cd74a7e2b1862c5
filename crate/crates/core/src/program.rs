//! Normal-form recognition and structural program transformations.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::ast::{CmpOp, Formula, Program, Term, Var};
use crate::error::{Error, Result};
use crate::vars::{bound_vars, program_names};

pub const GHOST_SUFFIX: &str = "_0";

/// `lo <= v & v <= hi` written as `center - delta <= v & v <= center + delta`.
pub fn band(v: &str, center: Term, delta: Term) -> Formula {
    Formula::between(Term::sub(center.clone(), delta.clone()), Term::var(v), Term::add(center, delta))
}

/// `v :∈ [center ± delta]` desugared to `v := *; ?band`.
pub fn assign_in_band(v: &str, center: Term, delta: Term) -> Program {
    Program::seq(Program::assign_any(v), Program::test(band(v, center, delta)))
}

/// `clock := 0; {eqs, clock' = 1 & dom & clock <= eps}; ?clock = eps`.
pub fn plant_dur(clock: &str, eps: Term, mut eqs: Vec<(String, Term)>, dom: Formula) -> Program {
    eqs.push((clock.to_string(), Term::num(1.0)));
    let bound = Formula::le(Term::var(clock), eps.clone());
    let dom = if dom == Formula::True { bound } else { Formula::and(dom, bound) };
    Program::seq_all(vec![
        Program::assign(clock, Term::num(0.0)),
        Program::Ode(eqs, dom),
        Program::test(Formula::eq(Term::var(clock), eps)),
    ])
}

/// Matches `c - d <= v & v <= c + d` (or `c <= v & v <= c` for a zero band).
pub fn match_band(test: &Formula, v: &str) -> Option<(Term, Term)> {
    let Formula::And(lo_f, hi_f) = test else { return None };
    let (Formula::Cmp(CmpOp::Le, lo, x1), Formula::Cmp(CmpOp::Le, x2, hi)) = (&**lo_f, &**hi_f) else {
        return None;
    };
    let target = Term::var(v);
    if *x1 != target || *x2 != target {
        return None;
    }
    match (lo, hi) {
        (Term::Sub(c1, d1), Term::Add(c2, d2)) if c1 == c2 && d1 == d2 => Some(((**c1).clone(), (**d1).clone())),
        _ if lo == hi => Some((lo.clone(), Term::num(0.0))),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NfKind {
    Disturbance,
    Measurement,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisturbanceInfo {
    /// The disturbed actuation ŭ.
    pub actuated: String,
    /// The commanded variable u.
    pub commanded: String,
    pub delta: Term,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementInfo {
    pub measured: String,
    pub measurement: String,
    pub delta: Term,
    pub duration: Term,
    pub clock: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalFormInfo {
    pub kind: NfKind,
    pub ctrl: Program,
    /// Everything after the controller (and after the actuation band for the disturbance form),
    /// excluding the trailing measurement for the measurement form.
    pub plant: Program,
    pub ode: Option<Program>,
    pub disturbance: Option<DisturbanceInfo>,
    pub measurement: Option<MeasurementInfo>,
}

impl NormalFormInfo {
    pub fn delta(&self) -> Option<&Term> {
        self.disturbance
            .as_ref()
            .map(|d| &d.delta)
            .or(self.measurement.as_ref().map(|m| &m.delta))
    }
}

fn seq_or_skip(parts: &[&Program]) -> Program {
    if parts.is_empty() {
        Program::test(Formula::True)
    } else {
        Program::seq_all(parts.iter().map(|p| (*p).clone()).collect())
    }
}

/// Locates `clock := 0; ODE; ?clock = eps` around the ODE at `k`.
fn clock_around(stmts: &[&Program], k: usize) -> Option<(String, Term)> {
    let Program::Ode(eqs, dom) = stmts[k] else { return None };
    if k == 0 || k + 1 >= stmts.len() {
        return None;
    }
    let Program::Assign(c, Term::Num(z)) = stmts[k - 1] else { return None };
    if *z != 0.0 || !eqs.iter().any(|(x, e)| x == c && *e == Term::Num(1.0)) {
        return None;
    }
    let Program::Test(Formula::Cmp(CmpOp::Eq, Term::Var(cv), eps)) = stmts[k + 1] else { return None };
    if cv.post || cv.name != *c {
        return None;
    }
    let has_bound = dom
        .conjuncts()
        .iter()
        .any(|f| **f == Formula::le(Term::var(c), eps.clone()));
    has_bound.then(|| (c.clone(), eps.clone()))
}

fn top_level_ode(stmts: &[&Program]) -> Option<usize> {
    stmts.iter().position(|s| matches!(s, Program::Ode(..)))
}

fn match_disturbance(stmts: &[&Program]) -> Option<NormalFormInfo> {
    for i in 0..stmts.len().saturating_sub(1) {
        let Program::AssignAny(v) = stmts[i] else { continue };
        let Program::Test(t) = stmts[i + 1] else { continue };
        let Some((center, delta)) = match_band(t, v) else { continue };
        let Term::Var(u) = &center else { continue };
        if u.post || u.name == *v {
            continue;
        }
        let ctrl = &stmts[..i];
        let rest = &stmts[i + 2..];
        if ctrl.iter().any(|s| s.has_ode()) || rest.iter().map(|s| s.ode_count()).sum::<usize>() != 1 {
            continue;
        }
        let ode = rest.iter().find(|s| matches!(s, Program::Ode(..))).map(|s| (*s).clone());
        return Some(NormalFormInfo {
            kind: NfKind::Disturbance,
            ctrl: seq_or_skip(ctrl),
            plant: seq_or_skip(rest),
            ode,
            disturbance: Some(DisturbanceInfo { actuated: v.clone(), commanded: u.name.clone(), delta }),
            measurement: None,
        });
    }
    None
}

fn match_measurement(stmts: &[&Program]) -> Result<Option<NormalFormInfo>> {
    let n = stmts.len();
    if n < 5 {
        return Ok(None);
    }
    let (Program::AssignAny(yh), Program::Test(t)) = (stmts[n - 2], stmts[n - 1]) else { return Ok(None) };
    let Some((Term::Var(y), delta)) = match_band(t, yh) else { return Ok(None) };
    if y.post {
        return Ok(None);
    }
    let k = n - 4;
    let Some((clock, duration)) = clock_around(stmts, k) else { return Ok(None) };
    let ctrl = &stmts[..k - 1];
    if ctrl.iter().any(|s| s.has_ode()) {
        return Ok(None);
    }
    let ctrl = seq_or_skip(ctrl);
    if bound_vars(&ctrl).contains(&y.name) {
        return Err(Error::NormalForm(format!("measured variable `{}` is written by the controller", y.name)));
    }
    Ok(Some(NormalFormInfo {
        kind: NfKind::Measurement,
        ctrl,
        plant: seq_or_skip(&stmts[k - 1..=k + 1]),
        ode: Some(stmts[k].clone()),
        disturbance: None,
        measurement: Some(MeasurementInfo {
            measured: y.name.clone(),
            measurement: yh.clone(),
            delta,
            duration,
            clock,
        }),
    }))
}

/// Identifies the disturbance or measurement shape of a loop body.
pub fn recognize_normal_form(p: &Program) -> Result<NormalFormInfo> {
    let body = p.loop_body();
    let stmts = body.statements();
    let dist = match_disturbance(&stmts);
    let meas = match_measurement(&stmts)?;
    match (dist, meas) {
        (Some(_), Some(_)) => Err(Error::NormalForm("program matches both disturbance and measurement shapes".into())),
        (Some(d), None) => Ok(d),
        (None, Some(m)) => Ok(m),
        (None, None) => {
            let (ctrl, plant, ode) = match top_level_ode(&stmts) {
                Some(k) => {
                    let start = if clock_around(&stmts, k).is_some() { k - 1 } else { k };
                    (seq_or_skip(&stmts[..start]), seq_or_skip(&stmts[start..]), Some(stmts[k].clone()))
                }
                None => (body.clone(), Program::test(Formula::True), None),
            };
            Ok(NormalFormInfo { kind: NfKind::Plain, ctrl, plant, ode, disturbance: None, measurement: None })
        }
    }
}

fn replace_ode(p: &Program, with: &Program) -> Program {
    match p {
        Program::Ode(..) => with.clone(),
        Program::Seq(a, b) => Program::seq(replace_ode(a, with), replace_ode(b, with)),
        Program::Choice(a, b) => Program::choice(replace_ode(a, with), replace_ode(b, with)),
        Program::Loop(a) => Program::repeat(replace_ode(a, with)),
        other => other.clone(),
    }
}

fn find_ode(p: &Program) -> Option<&Program> {
    match p {
        Program::Ode(..) => Some(p),
        Program::Seq(a, b) | Program::Choice(a, b) => find_ode(a).or_else(|| find_ode(b)),
        Program::Loop(a) => find_ode(a),
        _ => None,
    }
}

/// Replaces the single ODE `{x' = f & Q}` by `x_0 := x; ?Q; x := *; ?(Q & R)`.
pub fn overapproximate_plant(p: &Program, diff_invariants: &Formula) -> Result<Program> {
    let count = p.ode_count();
    if count != 1 {
        return Err(Error::OdeCount(count));
    }
    let Some(Program::Ode(eqs, dom)) = find_ode(p) else { unreachable!() };
    let names = program_names(p);
    let mut parts = Vec::new();
    for (x, _) in eqs {
        let ghost = format!("{x}{GHOST_SUFFIX}");
        if names.contains(&ghost) {
            return Err(Error::NotFresh(ghost));
        }
        parts.push(Program::assign(&ghost, Term::var(x)));
    }
    if *dom != Formula::True {
        parts.push(Program::test(dom.clone()));
    }
    parts.extend(eqs.iter().map(|(x, _)| Program::assign_any(x)));
    let guard = match (dom, diff_invariants) {
        (Formula::True, r) => r.clone(),
        (q, Formula::True) => q.clone(),
        (q, r) => Formula::and(q.clone(), r.clone()),
    };
    parts.push(Program::test(guard));
    Ok(replace_ode(p, &Program::seq_all(parts)))
}

/// Rewrites `measure; ctrl; plant` into `ctrl; plant; measure`.
pub fn measurement_rollover(p: &Program) -> Result<Program> {
    let stmts = p.statements();
    if stmts.len() < 3 {
        return Err(Error::NormalForm("expected a leading measurement followed by ctrl and plant".into()));
    }
    let (Program::AssignAny(yh), Program::Test(t)) = (stmts[0], stmts[1]) else {
        return Err(Error::NormalForm("program does not start with a measurement".into()));
    };
    if match_band(t, yh).is_none() {
        return Err(Error::NormalForm("program does not start with a measurement band".into()));
    }
    let mut parts: Vec<Program> = stmts[2..].iter().map(|s| (*s).clone()).collect();
    if bound_vars(&Program::seq_all(parts.clone())).contains(yh) {
        return Err(Error::NormalForm(format!("measurement `{yh}` is also bound after the measurement")));
    }
    parts.push(stmts[0].clone());
    parts.push(stmts[1].clone());
    Ok(Program::seq_all(parts))
}

/// Conjunction of `x_post = x` over `BV(p) \ exclude`.
pub fn upsilon_plus(p: &Program, exclude: &BTreeSet<String>) -> Formula {
    Formula::conj(
        bound_vars(p)
            .into_iter()
            .filter(|x| !exclude.contains(x))
            .map(|x| Formula::eq(Term::Var(Var::post(x.clone())), Term::Var(Var::pre(x)))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_formula, parse_program};

    #[test]
    fn recognizes_disturbance_form() {
        let p = parse_program(
            "{wp := 0 ++ wp := 1}; w := *; ?(wp - D <= w & w <= wp + D); \
             t := 0; {x' = w*y, y' = -w*x, t' = 1 & t <= eps}; ?t = eps",
        )
        .unwrap();
        let nf = recognize_normal_form(&Program::repeat(p)).unwrap();
        assert_eq!(nf.kind, NfKind::Disturbance);
        let d = nf.disturbance.unwrap();
        assert_eq!((d.actuated.as_str(), d.commanded.as_str()), ("w", "wp"));
        assert_eq!(d.delta, Term::var("D"));
    }

    #[test]
    fn zero_width_band() {
        let p = parse_program("u := 1; v := *; ?(u <= v & v <= u); {x' = v}").unwrap();
        let nf = recognize_normal_form(&p).unwrap();
        assert_eq!(nf.kind, NfKind::Disturbance);
        assert_eq!(nf.delta(), Some(&Term::num(0.0)));
    }

    #[test]
    fn recognizes_measurement_form() {
        let p = parse_program(
            "f := *; ?(-1 <= f & f <= 1); t := 0; {x' = f, t' = 1 & x >= 0 & t <= eps}; ?t = eps; \
             xm := *; ?(x - D <= xm & xm <= x + D)",
        )
        .unwrap();
        let nf = recognize_normal_form(&p).unwrap();
        assert_eq!(nf.kind, NfKind::Measurement);
        let m = nf.measurement.unwrap();
        assert_eq!((m.measured.as_str(), m.measurement.as_str(), m.clock.as_str()), ("x", "xm", "t"));
        assert_eq!(m.duration, Term::var("eps"));
    }

    #[test]
    fn ambiguous_shape_rejected() {
        let p = parse_program(
            "fd := *; ?(f - D <= fd & fd <= f + D); t := 0; {x' = fd, t' = 1 & t <= 1}; ?t = 1; \
             xm := *; ?(x - D <= xm & xm <= x + D)",
        )
        .unwrap();
        assert!(matches!(recognize_normal_form(&p), Err(Error::NormalForm(_))));
    }

    #[test]
    fn measured_variable_written_by_ctrl() {
        let p = parse_program(
            "x := 0; t := 0; {x' = 1, t' = 1 & t <= 1}; ?t = 1; xm := *; ?(x - D <= xm & xm <= x + D)",
        )
        .unwrap();
        assert!(matches!(recognize_normal_form(&p), Err(Error::NormalForm(_))));
    }

    #[test]
    fn plain_program_splits_before_clock() {
        let p = parse_program("f := 1; t := 0; {x' = f, t' = 1 & t <= 1}; ?t = 1").unwrap();
        let nf = recognize_normal_form(&p).unwrap();
        assert_eq!(nf.kind, NfKind::Plain);
        assert_eq!(nf.ctrl, parse_program("f := 1").unwrap());
    }

    #[test]
    fn overapproximation_shapes() {
        let p = parse_program("{x' = x^2}").unwrap();
        let r = parse_formula("x >= x_0").unwrap();
        assert_eq!(
            overapproximate_plant(&p, &r).unwrap(),
            parse_program("x_0 := x; x := *; ?x >= x_0").unwrap()
        );
        let q = parse_program("{x' = 1 & x <= 5}").unwrap();
        assert_eq!(
            overapproximate_plant(&q, &Formula::True).unwrap(),
            parse_program("x_0 := x; ?x <= 5; x := *; ?x <= 5").unwrap()
        );
    }

    #[test]
    fn overapproximation_errors() {
        let two = parse_program("{x' = 1}; {x' = 2}").unwrap();
        assert_eq!(overapproximate_plant(&two, &Formula::True), Err(Error::OdeCount(2)));
        let clash = parse_program("x_0 := 1; {x' = 1}").unwrap();
        assert!(matches!(overapproximate_plant(&clash, &Formula::True), Err(Error::NotFresh(_))));
    }

    #[test]
    fn rollover() {
        let p = parse_program("yh := *; ?(y - D <= yh & yh <= y + D); u := yh; {y' = u}").unwrap();
        let q = measurement_rollover(&p).unwrap();
        assert_eq!(q, parse_program("u := yh; {y' = u}; yh := *; ?(y - D <= yh & yh <= y + D)").unwrap());
        assert!(measurement_rollover(&q).is_err());
        let rebinding = parse_program("yh := *; ?(y - D <= yh & yh <= y + D); yh := 0; {y' = 1}").unwrap();
        assert!(measurement_rollover(&rebinding).is_err());
    }

    #[test]
    fn upsilon() {
        let p = parse_program("a := a + 1 ++ b := *; ?b <= 3").unwrap();
        assert_eq!(upsilon_plus(&p, &BTreeSet::new()), parse_formula("a_post = a & b_post = b").unwrap());
        assert_eq!(upsilon_plus(&parse_program("?true").unwrap(), &BTreeSet::new()), Formula::True);
        let ex = BTreeSet::from(["a".to_string()]);
        assert_eq!(upsilon_plus(&p, &ex), parse_formula("b_post = b").unwrap());
    }
}
