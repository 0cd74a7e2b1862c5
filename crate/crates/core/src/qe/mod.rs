//! Turning monitor characterizations into executable arithmetic.
//!
//! [`synthesize`] runs modality elimination, simplification, post-state
//! instantiation, DNF preprocessing and Fourier–Motzkin in that order. Quantifiers
//! that survive are decided at runtime by [`witness::decide`].

pub mod dnf;
pub mod fm;
pub mod linear;
pub mod modal;
pub mod instantiate;
pub mod witness;

use serde::Serialize;

use crate::ast::{Formula, Program, Var};
use crate::error::Result;
use crate::simplify::simplify;

pub use dnf::dnf_preprocess;
pub use fm::fourier_motzkin;
pub use modal::eliminate_modalities;
pub use instantiate::instantiate_post_states;
pub use witness::{decide, decide_with_witness, witness_search, WitnessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PostInstantiation,
    OnePoint,
    DistributeOverDisjuncts,
    PullIndependent,
    FourierMotzkin,
    WitnessSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRecord {
    pub var: String,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleStep {
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Default)]
pub(crate) struct Tracer {
    steps: Vec<RuleStep>,
    methods: Vec<MethodRecord>,
}

impl Tracer {
    pub(crate) fn step(&mut self, rule: &str, p: &Program) {
        self.note(rule, &p.to_string());
    }

    pub(crate) fn step_formula(&mut self, rule: &str, f: &Formula) {
        self.note(rule, &f.to_string());
    }

    pub(crate) fn note(&mut self, rule: &str, detail: &str) {
        self.steps.push(RuleStep { rule: rule.to_string(), detail: detail.to_string() });
    }

    pub(crate) fn method(&mut self, v: &Var, method: Method) {
        self.methods.push(MethodRecord { var: v.to_string(), method });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    #[serde(serialize_with = "display")]
    pub input: Formula,
    #[serde(serialize_with = "display")]
    pub output: Formula,
    pub residual_quantifiers: usize,
    pub methods: Vec<MethodRecord>,
    pub trace: Vec<RuleStep>,
}

fn display<S: serde::Serializer>(f: &Formula, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(f)
}

impl SynthesisReport {
    /// One JSON object per rule application.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.trace {
            out.push_str(&serde_json::to_string(step).expect("rule step serializes"));
            out.push('\n');
        }
        for m in &self.methods {
            out.push_str(&serde_json::to_string(m).expect("method record serializes"));
            out.push('\n');
        }
        out
    }
}

fn fm_all(f: &Formula, tr: &mut Tracer) -> Formula {
    match f {
        Formula::Not(a) => Formula::not(fm_all(a, tr)),
        Formula::And(a, b) => Formula::and(fm_all(a, tr), fm_all(b, tr)),
        Formula::Or(a, b) => Formula::or(fm_all(a, tr), fm_all(b, tr)),
        Formula::Implies(a, b) => Formula::implies(fm_all(a, tr), fm_all(b, tr)),
        Formula::Equiv(a, b) => Formula::equiv(fm_all(a, tr), fm_all(b, tr)),
        Formula::Exists(x, a) | Formula::Forall(x, a) => {
            let is_all = matches!(f, Formula::Forall(..));
            let body = simplify(&fm_all(a, tr));
            let attempt = if body.has_quantifier() {
                None
            } else if is_all {
                Some(fm::eliminate_forall(x, &body))
            } else {
                Some(fm::eliminate_exists(x, &body))
            };
            match attempt {
                Some(Ok(r)) => {
                    tr.method(x, Method::FourierMotzkin);
                    tr.step_formula("fourier-motzkin", &r);
                    r
                }
                other => {
                    let why = match other {
                        Some(Err(e)) => e.to_string(),
                        _ => "body keeps quantifiers".to_string(),
                    };
                    tr.method(x, Method::WitnessSearch);
                    tr.note("witness-search", &format!("{x}: {why}"));
                    if is_all {
                        Formula::forall(x.clone(), body)
                    } else {
                        Formula::exists(x.clone(), body)
                    }
                }
            }
        }
        other => other.clone(),
    }
}

/// Full pipeline from `<p>G`-style characterizations to arithmetic.
pub fn synthesize(f: &Formula) -> Result<SynthesisReport> {
    let mut tr = Tracer::default();
    let g = modal::eliminate_traced(f, &mut tr)?;
    let g = simplify(&g);
    tr.step_formula("modalities-eliminated", &g);
    let g = instantiate::instantiate_traced(&g, &mut tr)?;
    let g = dnf::dnf_traced(&g, &mut tr);
    let g = instantiate::instantiate_traced(&g, &mut tr)?;
    let g = simplify(&fm_all(&g, &mut tr));
    tr.step_formula("result", &g);
    Ok(SynthesisReport {
        input: f.clone(),
        residual_quantifiers: g.quantifier_count(),
        output: g,
        methods: tr.methods,
        trace: tr.steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    #[test]
    fn two_branch_synthesis() {
        let f = parse_formula("<a := a + 1 ++ b := *; ?b <= 3>(a_post = a & b_post = b)").unwrap();
        let r = synthesize(&f).unwrap();
        assert_eq!(r.output, parse_formula("a_post = a + 1 & b_post = b | b_post <= 3 & a_post = a").unwrap());
        assert_eq!(r.residual_quantifiers, 0);
        assert!(r.methods.iter().any(|m| m.method == Method::PostInstantiation));
        assert!(r.trace_jsonl().lines().count() >= 3);
    }

    #[test]
    fn defers_sign_ambiguous() {
        let f = parse_formula("\\exists w (0 <= w & w <= 1 & x_post = x + w*t)").unwrap();
        let r = synthesize(&f).unwrap();
        assert_eq!(r.residual_quantifiers, 1);
        assert!(r.methods.iter().any(|m| m.method == Method::WitnessSearch));
    }
}
