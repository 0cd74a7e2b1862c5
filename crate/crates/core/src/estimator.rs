//! Set-membership rolling estimators for the deviation between a measurement and
//! the true value it measures.

use serde::{Deserialize, Serialize};

use crate::ast::{Formula, Program, Term};
use crate::error::{Error, Result};

/// Slack below which `l > u` is treated as rounding and collapsed.
pub const COLLAPSE_SLACK: f64 = 1e-12;
pub const CONTAINS_TOL: f64 = 1e-9;

pub const LOWER_VAR: &str = "est_l";
pub const UPPER_VAR: &str = "est_u";
pub const PREV_SUFFIX: &str = "_prev";

/// True value lies in `[yhat + l, yhat + u]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub l: f64,
    pub u: f64,
}

impl Estimate {
    pub fn new(l: f64, u: f64) -> Self {
        Estimate { l, u }
    }

    /// The uninformed estimate `[-delta, delta]`.
    pub fn full(delta: f64) -> Self {
        Estimate { l: -delta, u: delta }
    }

    pub fn width(&self) -> f64 {
        self.u - self.l
    }

    pub fn is_valid(&self, delta: f64) -> bool {
        self.l <= self.u && self.l >= -delta - CONTAINS_TOL && self.u <= delta + CONTAINS_TOL
    }
}

/// Estimator for measured variable `measured` observed through `measurement`.
/// `effect` is the modeled plant effect on `measured` over one step, as a term
/// over observable variables of the post state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub measured: String,
    pub measurement: String,
    pub delta: Term,
    pub effect: Term,
}

impl EstimatorSpec {
    pub fn new(measured: &str, measurement: &str, delta: Term, effect: Term) -> Self {
        EstimatorSpec { measured: measured.into(), measurement: measurement.into(), delta, effect }
    }

    pub fn prev_measured(&self) -> String {
        format!("{}{PREV_SUFFIX}", self.measured)
    }

    pub fn prev_measurement(&self) -> String {
        format!("{}{PREV_SUFFIX}", self.measurement)
    }

    /// `yhat_prev - yhat + bound + (y - y_prev)`.
    fn shifted(&self, bound: &str) -> Term {
        Term::add(
            Term::add(Term::sub(Term::var(&self.prev_measurement()), Term::var(&self.measurement)), Term::var(bound)),
            Term::sub(Term::var(&self.measured), Term::var(&self.prev_measured())),
        )
    }

    /// `y_prev := y; yhat_prev := yhat`.
    pub fn recall_program(&self) -> Program {
        Program::seq(
            Program::assign(&self.prev_measured(), Term::var(&self.measured)),
            Program::assign(&self.prev_measurement(), Term::var(&self.measurement)),
        )
    }

    /// `est_l := max(-D, ..); est_u := min(D, ..); ?est_l <= est_u`.
    pub fn update_program(&self) -> Program {
        Program::seq_all(vec![
            Program::assign(LOWER_VAR, Term::max(Term::neg(self.delta.clone()), self.shifted(LOWER_VAR))),
            Program::assign(UPPER_VAR, Term::min(self.delta.clone(), self.shifted(UPPER_VAR))),
            Program::test(Formula::le(Term::var(LOWER_VAR), Term::var(UPPER_VAR))),
        ])
    }
}

/// Incorporates measurement `yhat` after `yhat0`, given the plant effect on the
/// true value over the step.
pub fn update(yhat0: f64, yhat: f64, effect: f64, delta: f64, est0: Estimate) -> Result<Estimate> {
    let shift = yhat0 - yhat + effect;
    let l = (-delta).max(shift + est0.l);
    let u = delta.min(shift + est0.u);
    if l > u + COLLAPSE_SLACK {
        return Err(Error::HistoryInconsistent { l, u });
    }
    if l > u {
        let m = 0.5 * (l + u);
        return Ok(Estimate { l: m, u: m });
    }
    Ok(Estimate { l, u })
}

pub fn contains_truth(est: &Estimate, yhat: f64, y: f64) -> bool {
    y >= yhat + est.l - CONTAINS_TOL && y <= yhat + est.u + CONTAINS_TOL
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_measurement_keeps_estimate() {
        let e = update(0.5, 0.5, 0.0, 0.1, Estimate::full(0.1)).unwrap();
        assert_eq!(e, Estimate::new(-0.1, 0.1));
    }

    #[test]
    fn upward_step_tightens_upper_bound() {
        let e = update(0.45, 0.55, 0.0, 0.1, Estimate::full(0.1)).unwrap();
        assert!((e.l + 0.1).abs() < 1e-12);
        assert!(e.u.abs() < 1e-12);
        assert!(contains_truth(&e, 0.55, 0.5));
        assert!(!contains_truth(&e, 0.55, 0.56));
    }

    #[test]
    fn steady_drift_exhausts_history() {
        let mut est = Estimate::full(0.1);
        let mut prev = 0.5;
        let mut failed_at = None;
        for k in 1..10 {
            let yhat = 0.5 + 0.05 * k as f64;
            match update(prev, yhat, 0.0, 0.1, est) {
                Ok(e) => est = e,
                Err(Error::HistoryInconsistent { .. }) => {
                    failed_at = Some(k);
                    break;
                }
                Err(e) => panic!("{e}"),
            }
            prev = yhat;
        }
        assert_eq!(failed_at, Some(5));
    }

    #[test]
    fn update_program_shape() {
        let spec = EstimatorSpec::new("vi", "vih", Term::num(0.1), Term::num(0.0));
        let p = spec.update_program();
        assert_eq!(
            p.to_string(),
            "est_l := max(-(0.1), vih_prev - vih + est_l + (vi - vi_prev)); est_u := min(0.1, vih_prev - vih + est_u + (vi - vi_prev)); ?(est_l <= est_u)"
        );
    }
}
