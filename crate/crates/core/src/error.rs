use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("division by zero")]
    DivisionByZero,

    #[error("undeclared variable `{0}`")]
    Undeclared(String),

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("formula is not quantifier-free: {0}")]
    NotQuantifierFree(String),

    #[error("raw differential equation in monitor construction; overapproximate the plant first")]
    RawOde,

    #[error("box modality not supported in monitor synthesis")]
    BoxModality,

    #[error("loop not supported here; analyze the loop body")]
    LoopUnsupported,

    #[error("constraint is nonlinear in `{0}`")]
    Nonlinear(String),

    #[error("coefficient of `{0}` has undetermined sign")]
    SignAmbiguous(String),

    #[error("quantified variable `{0}` has no finite bounds")]
    Unbounded(String),

    #[error("normal form mismatch: {0}")]
    NormalForm(String),

    #[error("ghost variable `{0}` is not fresh")]
    NotFresh(String),

    #[error("expected exactly one differential equation, found {0}")]
    OdeCount(usize),

    #[error("integrator diverged (non-finite value for `{0}`)")]
    Divergence(String),

    #[error("scripted nondeterminism exhausted: {0}")]
    ScriptExhausted(String),

    #[error("every sampled run was blocked")]
    AllBlocked,

    #[error("estimate is inconsistent with the measurement history: l={l} > u={u}")]
    HistoryInconsistent { l: f64, u: f64 },

    #[error("invariant does not hold at step entry (step {0})")]
    InvariantAtEntry(usize),

    #[error("fallback violates the control monitor: {0}")]
    InvalidFallback(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
