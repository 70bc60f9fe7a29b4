use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FtemError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// An argument is outside the domain where the function is defined
    /// (negative density under a fractional power, `v <= 0` for the nullcline map).
    #[error("domain error: {0}")]
    Domain(String),

    /// The linearization does not exist at the requested point.
    #[error("jacobian is singular at v = 0 with q < 1; the harvesting term is non-Lipschitz there")]
    SingularJacobian,

    #[error("point ({u}, {v}) is not an equilibrium: residual {residual:e}")]
    NotEquilibrium { u: f64, v: f64, residual: f64 },

    #[error("no saddle-node bifurcation in q on [{q_lo}, {q_hi}]: the fold function keeps one sign")]
    NoBifurcation { q_lo: f64, q_hi: f64 },

    #[error("jacobian is not rank deficient at the supplied point (det = {det:e})")]
    NotRankDeficient { det: f64 },

    #[error("no boundary collision of an interior branch found for q in (0, 1)")]
    CollisionNotFound,

    #[error("root bracket [{lo}, {hi}] does not contain a sign change")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("maximum number of steps ({max_steps}) exceeded at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("equilibrium has no stable direction (eigenvalues {0})")]
    NoStableDirection(String),

    #[error("fixed time step {dt:e} exceeds the stability limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("numerical instability at t = {t}: {detail}")]
    Instability { t: f64, detail: String },
}

pub type Result<T> = std::result::Result<T, FtemError>;

impl FtemError {
    /// True for errors caused by the caller's inputs rather than by the
    /// numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, FtemError::InvalidParams(_))
    }
}
