//! Stiff integration of delay differential equations with one constant delay.
//!
//! The integrator is a three-stage Radau IIA collocation method (order 5) with
//! step-size control, simplified Newton iterations and the collocation
//! polynomial as dense output. Delayed states are read from the dense output of
//! earlier steps, or from the constant history before the start time.

mod solver;
mod trajectory;

pub use solver::integrate;
pub use trajectory::{SolveStats, Trajectory};

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidInput(String),
    #[error("t = {t} is outside the trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("step size underflow after t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("Newton iteration failed to converge after t = {t}")]
    NewtonFailure { t: f64 },
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFinite { t: f64 },
    #[error("step limit of {limit} exceeded at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("solution magnitude exceeded {limit:e} at t = {t}")]
    Diverged { t: f64, limit: f64 },
}

/// Right-hand side `dx/dt = f(t, x(t), x(t - delay))`.
pub trait DelayRhs: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], x_delayed: &[f64], dx: &mut [f64]);

    /// Optional analytic Jacobian with respect to `x`. Returns `false` when not
    /// provided, in which case finite differences are used.
    fn jacobian(&self, _t: f64, _x: &[f64], _x_delayed: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }
}

/// Adapter turning a closure into a [`DelayRhs`].
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F> FnRhs<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnRhs { dim, f }
    }
}

impl<F> DelayRhs for FnRhs<F>
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], x_delayed: &[f64], dx: &mut [f64]) {
        (self.f)(t, x, x_delayed, dx)
    }
}

/// A delay problem: right-hand side, delay, constant pre-history and known
/// derivative discontinuities of the forcing.
pub struct DdeSystem<R> {
    pub rhs: R,
    pub delay: f64,
    pub history: Vec<f64>,
    pub breakpoints: Vec<f64>,
}

impl<R: DelayRhs> DdeSystem<R> {
    pub fn new(rhs: R, delay: f64, history: Vec<f64>) -> Self {
        DdeSystem { rhs, delay, history, breakpoints: Vec::new() }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    pub fn dim(&self) -> usize {
        self.rhs.dim()
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let n = self.rhs.dim();
        if n == 0 {
            return Err(SolveError::InvalidInput("dimension must be at least 1".into()));
        }
        if !(self.delay > 0.0 && self.delay.is_finite()) {
            return Err(SolveError::InvalidInput(format!("delay must be positive, got {}", self.delay)));
        }
        if self.history.len() != n {
            return Err(SolveError::InvalidInput(format!(
                "history has {} entries, expected {n}",
                self.history.len()
            )));
        }
        if self.history.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::InvalidInput("history must be finite".into()));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolveError::InvalidInput("breakpoints must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// One entry per state, or a single entry applied to every state.
    pub abs_tol: Vec<f64>,
    pub max_step: f64,
    pub initial_step: f64,
    pub max_steps: usize,
    /// Abort with [`SolveError::Diverged`] once any state exceeds this magnitude.
    pub divergence_limit: Option<f64>,
    /// Number of delay multiples `t0 + k*delay` forced into the mesh. `None`
    /// tracks every multiple inside the span.
    pub delay_breakpoint_order: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-8,
            abs_tol: vec![1e-10],
            max_step: f64::INFINITY,
            initial_step: 1e-3,
            max_steps: 1_000_000,
            divergence_limit: None,
            delay_breakpoint_order: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        SolverConfig { rel_tol, abs_tol: vec![abs_tol], ..Default::default() }
    }

    pub fn validate(&self, dim: usize) -> Result<(), SolveError> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(SolveError::InvalidInput(format!("rel_tol must lie in (0, 1e-2], got {}", self.rel_tol)));
        }
        if !(self.abs_tol.len() == 1 || self.abs_tol.len() == dim) {
            return Err(SolveError::InvalidInput(format!(
                "abs_tol must have 1 or {dim} entries, got {}",
                self.abs_tol.len()
            )));
        }
        if self.abs_tol.iter().any(|a| !(*a > 0.0)) {
            return Err(SolveError::InvalidInput("abs_tol entries must be positive".into()));
        }
        if !(self.max_step > 0.0) || !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(SolveError::InvalidInput("max_step and initial_step must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(SolveError::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn abs_tol_for(&self, i: usize) -> f64 {
        if self.abs_tol.len() == 1 {
            self.abs_tol[0]
        } else {
            self.abs_tol[i]
        }
    }
}
