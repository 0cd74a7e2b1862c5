//! Bounded witness search for formulas that keep quantifiers after synthesis.
//!
//! For each quantifier the search interval comes from explicit bounds or from the
//! linear atoms among the body's top-level conjuncts (for `\forall`, the conjuncts of
//! the negated body). Candidates are the interval endpoints, a uniform grid, roots of
//! every atom that depends on the quantified variable (sign-change scan plus
//! bisection), and midpoints between neighbouring candidates. In one dimension with
//! finitely many sign changes per atom this decides the formula exactly.

use std::collections::BTreeMap;

use crate::ast::{CmpOp, Formula, Term, Var};
use crate::error::{Error, Result};
use crate::eval::{compare, eval_term, Overlay, Valuation, DEFAULT_TOL};
use crate::vars::term_mentions;

use super::dnf::neg_nnf;
use super::linear::decompose;

pub const DEFAULT_GRID: usize = 101;
const BISECT_ITERS: usize = 60;

#[derive(Debug, Clone)]
pub struct WitnessConfig {
    pub grid: usize,
    pub tol: f64,
    /// Overrides the derived interval for a quantified variable.
    pub bounds: BTreeMap<Var, (f64, f64)>,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig { grid: DEFAULT_GRID, tol: DEFAULT_TOL, bounds: BTreeMap::new() }
    }
}

impl WitnessConfig {
    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid.max(2);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_bound(mut self, v: Var, lo: f64, hi: f64) -> Self {
        self.bounds.insert(v, (lo, hi));
        self
    }
}

/// Truth value of `f`, which may contain quantifiers but no modalities.
pub fn decide(f: &Formula, val: &dyn Valuation, cfg: &WitnessConfig) -> Result<bool> {
    let mut env = Overlay::new(val);
    eval(f, &mut env, cfg, &mut None)
}

/// Like [`decide`], also returning the witnesses chosen for top-level existentials.
pub fn decide_with_witness(f: &Formula, val: &dyn Valuation, cfg: &WitnessConfig) -> Result<(bool, Vec<(Var, f64)>)> {
    let mut env = Overlay::new(val);
    let mut witness = Some(Vec::new());
    let ok = eval(f, &mut env, cfg, &mut witness)?;
    Ok((ok, if ok { witness.unwrap_or_default() } else { Vec::new() }))
}

/// `f = \exists x1 ... \exists xk G`: true iff a candidate assignment satisfies `G`.
pub fn witness_search(
    f: &Formula,
    pair: &dyn Valuation,
    bounds: &BTreeMap<Var, (f64, f64)>,
    grid: usize,
    tol: f64,
) -> Result<bool> {
    let cfg = WitnessConfig { grid: grid.max(2), tol, bounds: bounds.clone() };
    decide(f, pair, &cfg)
}

fn eval(f: &Formula, env: &mut Overlay<'_>, cfg: &WitnessConfig, wit: &mut Option<Vec<(Var, f64)>>) -> Result<bool> {
    Ok(match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Cmp(op, a, b) => compare(*op, eval_term(a, env)?, eval_term(b, env)?, cfg.tol),
        Formula::Not(a) => !eval(a, env, cfg, &mut None)?,
        Formula::And(a, b) => eval(a, env, cfg, wit)? && eval(b, env, cfg, wit)?,
        Formula::Or(a, b) => {
            let mut left = wit.as_ref().map(|_| Vec::new());
            if eval(a, env, cfg, &mut left)? {
                if let (Some(w), Some(l)) = (wit.as_mut(), left) {
                    w.extend(l);
                }
                true
            } else {
                eval(b, env, cfg, wit)?
            }
        }
        Formula::Implies(a, b) => !eval(a, env, cfg, &mut None)? || eval(b, env, cfg, &mut None)?,
        Formula::Equiv(a, b) => eval(a, env, cfg, &mut None)? == eval(b, env, cfg, &mut None)?,
        Formula::Exists(x, body) => match search(x, body, env, cfg, wit.is_some())? {
            Some((v, inner)) => {
                if let Some(w) = wit.as_mut() {
                    w.push((x.clone(), v));
                    w.extend(inner);
                }
                true
            }
            None => false,
        },
        Formula::Forall(x, body) => {
            let negated = neg_nnf(body);
            search(x, &negated, env, cfg, false)?.is_none()
        }
        Formula::Box(..) | Formula::Diamond(..) => return Err(Error::NotQuantifierFree(f.to_string())),
    })
}

/// Finds `v` with `body[x ↦ v]` true.
fn search(
    x: &Var,
    body: &Formula,
    env: &mut Overlay<'_>,
    cfg: &WitnessConfig,
    want_witness: bool,
) -> Result<Option<(f64, Vec<(Var, f64)>)>> {
    let (lo, hi) = match cfg.bounds.get(x) {
        Some(b) => *b,
        None => derived_bounds(x, body, env, cfg.tol)?,
    };
    if lo > hi {
        return Ok(None);
    }
    let mut atoms = Vec::new();
    collect_atoms(body, &mut atoms);

    let mut roots = Vec::new();
    let grid: Vec<f64> = if hi > lo {
        (0..cfg.grid).map(|i| lo + (hi - lo) * i as f64 / (cfg.grid - 1) as f64).collect()
    } else {
        vec![lo]
    };
    env.push(x.clone(), lo);
    for (l, r) in &atoms {
        if !term_mentions(l, x) && !term_mentions(r, x) {
            continue;
        }
        let diff = Term::sub((*l).clone(), (*r).clone());
        if let Ok((a, b)) = decompose(&diff, x) {
            if let (Ok(a), Ok(b)) = (eval_term(&a, env), eval_term(&b, env)) {
                if a != 0.0 && a.is_finite() && b.is_finite() {
                    let r = -b / a;
                    if r >= lo && r <= hi {
                        roots.push(r);
                    }
                    continue;
                }
            }
        }
        let g = |v: f64, env: &mut Overlay<'_>| -> Option<f64> {
            env.set_last(v);
            eval_term(&diff, env).ok().filter(|y| y.is_finite())
        };
        let mut prev: Option<(f64, f64)> = None;
        for &p in &grid {
            let Some(y) = g(p, env) else {
                prev = None;
                continue;
            };
            if y == 0.0 {
                roots.push(p);
            } else if let Some((q, yq)) = prev {
                if yq != 0.0 && (yq < 0.0) != (y < 0.0) {
                    let (mut a, mut b, mut ya) = (q, p, yq);
                    for _ in 0..BISECT_ITERS {
                        let m = 0.5 * (a + b);
                        match g(m, env) {
                            Some(ym) if (ym < 0.0) == (ya < 0.0) && ym != 0.0 => {
                                a = m;
                                ya = ym;
                            }
                            Some(_) => b = m,
                            None => break,
                        }
                    }
                    roots.push(a);
                    roots.push(b);
                }
            }
            prev = Some((p, y));
        }
    }

    let mut all: Vec<f64> = roots.iter().copied().chain([lo, hi]).chain(grid.iter().copied()).collect();
    all.sort_by(|a, b| a.total_cmp(b));
    all.dedup();
    let mids: Vec<f64> = all.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();

    let ordered = roots.into_iter().chain([lo, hi]).chain(grid).chain(mids);
    let mut result = None;
    for v in ordered {
        env.set_last(v);
        let mut inner = if want_witness { Some(Vec::new()) } else { None };
        match eval(body, env, cfg, &mut inner) {
            Ok(true) => {
                result = Some((v, inner.unwrap_or_default()));
                break;
            }
            Ok(false) | Err(Error::DivisionByZero) | Err(Error::UnknownFunction(_)) => {}
            Err(e) => {
                env.pop();
                return Err(e);
            }
        }
    }
    env.pop();
    Ok(result)
}

fn collect_atoms<'a>(f: &'a Formula, out: &mut Vec<(&'a Term, &'a Term)>) {
    match f {
        Formula::Cmp(_, a, b) => out.push((a, b)),
        Formula::Not(a) | Formula::Forall(_, a) | Formula::Exists(_, a) => collect_atoms(a, out),
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) | Formula::Equiv(a, b) => {
            collect_atoms(a, out);
            collect_atoms(b, out);
        }
        _ => {}
    }
}

/// Interval from linear atoms among the top-level conjuncts of `body`. Equalities
/// are widened by the comparison tolerance, matching how they are evaluated.
fn derived_bounds(x: &Var, body: &Formula, env: &mut Overlay<'_>, tol: f64) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in body.conjuncts() {
        let Formula::Cmp(op, l, r) = c else { continue };
        if !term_mentions(l, x) && !term_mentions(r, x) {
            continue;
        }
        let Ok((a, b)) = decompose(&Term::sub(l.clone(), r.clone()), x) else { continue };
        let (Ok(a), Ok(b)) = (eval_term(&a, env), eval_term(&b, env)) else { continue };
        if a == 0.0 || !a.is_finite() || !b.is_finite() {
            continue;
        }
        let bound = -b / a;
        let slack = tol / a.abs();
        let op = if a < 0.0 { op.flip() } else { *op };
        match op {
            CmpOp::Eq => {
                lo = lo.max(bound - slack);
                hi = hi.min(bound + slack);
            }
            CmpOp::Lt | CmpOp::Le => hi = hi.min(bound),
            CmpOp::Gt | CmpOp::Ge => lo = lo.max(bound),
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Unbounded(x.to_string()));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;
    use crate::state::State;

    #[test]
    fn point_in_interval() {
        let f = parse_formula("\\exists v (v = 0.5)").unwrap();
        let bounds = BTreeMap::from([(Var::pre("v"), (0.4, 0.6))]);
        assert!(witness_search(&f, &State::new(), &bounds, 101, 1e-3).unwrap());
    }

    #[test]
    fn derives_bounds_from_band() {
        let f = parse_formula("\\exists v (vh - 0.1 <= v & v <= vh + 0.1 & v*v > 0.3)").unwrap();
        let ok = State::from_pairs([("vh", 0.5)]);
        assert!(decide(&f, &ok, &WitnessConfig::default()).unwrap());
        let bad = State::from_pairs([("vh", 0.4)]);
        assert!(!decide(&f, &bad, &WitnessConfig::default()).unwrap());
    }

    #[test]
    fn unbounded_is_error() {
        let f = parse_formula("\\exists v (v > 0)").unwrap();
        assert!(matches!(decide(&f, &State::new(), &WitnessConfig::default()), Err(Error::Unbounded(_))));
    }

    #[test]
    fn universal_via_counterexample() {
        let f = parse_formula("\\forall v (v >= a - 0.1 & v <= a + 0.1 -> v > 1)").unwrap();
        assert!(decide(&f, &State::from_pairs([("a", 1.2)]), &WitnessConfig::default()).unwrap());
        assert!(!decide(&f, &State::from_pairs([("a", 1.1)]), &WitnessConfig::default()).unwrap());
    }

    #[test]
    fn finds_narrow_nonlinear_witness() {
        // Only v in a tiny window around the root of v^3 = 0.2 satisfies both atoms.
        let f = parse_formula("\\exists v (0 <= v & v <= 1 & v^3 >= 0.2 & v^3 <= 0.2000001)").unwrap();
        let (ok, w) = decide_with_witness(&f, &State::new(), &WitnessConfig::default()).unwrap();
        assert!(ok);
        assert!((w[0].1.powi(3) - 0.2).abs() < 1e-6);
    }

    #[test]
    fn nested_quantifiers() {
        let f = parse_formula("\\exists x (0 <= x & x <= 1 & \\exists y (x <= y & y <= x + 0.1 & y = 1.05))").unwrap();
        assert!(decide(&f, &State::new(), &WitnessConfig::default()).unwrap());
    }
}
