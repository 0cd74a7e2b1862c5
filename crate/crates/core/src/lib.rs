//! Runtime model monitors for hybrid programs with actuator disturbance and
//! sensor uncertainty.

pub mod ast;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod eval;
pub mod monitor;
pub mod parse;
pub mod print;
pub mod program;
pub mod qe;
pub mod sandbox;
pub mod scenario;
pub mod sim;
pub mod simplify;
pub mod state;
pub mod trace;
pub mod vars;

pub use ast::{CmpOp, Formula, Program, Term, Var};
pub use error::{Error, Result};
pub use eval::{eval_formula, eval_term, Valuation, DEFAULT_TOL};
pub use parse::{parse_formula, parse_program, parse_term};
pub use state::{State, TransitionPair};
pub use estimator::{Estimate, EstimatorSpec};
pub use evaluation::{run_evaluation, EvalOptions, PRReport};
pub use monitor::{Monitor, MonitorKind, RollingMonitor, Verdict};
pub use qe::SynthesisReport;
pub use sandbox::Sandbox;
pub use scenario::Scenario;
pub use trace::{Action, Trace, TraceRow};
