//! Ready-made integrations of the two models: the homogeneous reduced system
//! after a constant perturbation, and both models driven by a forcing model
//! from an equilibrium start.

use serde::{Deserialize, Serialize};

use crate::dde::{integrate, DdeSystem, SolveError, SolverConfig, Trajectory};
use crate::models::{self, FullModel, ParameterSet, ReducedModel};
use crate::models::SubjectBaseline;
use crate::signal::{self, ForcingModel, SignalError, VmProfile};

/// Initial perturbation and horizon of a homogeneous run. The run ends at
/// `max(horizon, horizon_per_delay * D_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousSetup {
    /// Constant `T_s` history; `H` starts at zero.
    pub perturbation: f64,
    pub horizon: f64,
    pub horizon_per_delay: f64,
}

impl Default for HomogeneousSetup {
    fn default() -> Self {
        HomogeneousSetup { perturbation: 1.0, horizon: 120.0, horizon_per_delay: 0.0 }
    }
}

impl HomogeneousSetup {
    pub fn end_time(&self, d_s: f64) -> f64 {
        self.horizon.max(self.horizon_per_delay * d_s)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.perturbation.is_finite() && self.perturbation != 0.0) {
            return Err(SolveError::InvalidInput("perturbation must be finite and nonzero".into()));
        }
        if !(self.horizon > 0.0 && self.horizon_per_delay >= 0.0) {
            return Err(SolveError::InvalidInput("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Solver settings used for forced runs unless overridden.
pub fn forced_solver() -> SolverConfig {
    SolverConfig { rel_tol: 1e-8, abs_tol: vec![1e-10], delay_breakpoint_order: Some(8), ..Default::default() }
}

/// Solver settings used for homogeneous runs unless overridden. The absolute
/// tolerance is tiny so that decaying solutions keep their relative accuracy.
pub fn homogeneous_solver() -> SolverConfig {
    SolverConfig { rel_tol: 1e-9, abs_tol: vec![1e-30], delay_breakpoint_order: Some(8), ..Default::default() }
}

/// Reduced model without forcing, from `T_s = perturbation`, `H = 0`.
pub fn homogeneous(p: &ParameterSet, setup: &HomogeneousSetup, solver: &SolverConfig) -> Result<Trajectory, SolveError> {
    setup.validate()?;
    let sys = DdeSystem::new(ReducedModel::homogeneous(*p), p.d_s, vec![setup.perturbation, 0.0]);
    integrate(&sys, (0.0, setup.end_time(p.d_s)), solver)
}

fn strain_breakpoints(p: &ParameterSet, span: (f64, f64)) -> Vec<f64> {
    [p.t_s, p.t_e].into_iter().filter(|&b| b > span.0 && b < span.1).collect()
}

/// Reduced model driven by `fm` over its whole span, starting from the
/// equilibrium for the forcing at the first instant.
pub fn reduced_forced(p: &ParameterSet, fm: &ForcingModel, solver: &SolverConfig) -> Result<Trajectory, SolveError> {
    let span = fm.span;
    let (f, g) = fm.terms_unchecked(span.0, p);
    let history = models::reduced_equilibrium(f, g, p).to_vec();
    let sys = DdeSystem::new(ReducedModel::forced(*p, fm.with_params(*p)), p.d_s, history)
        .with_breakpoints(strain_breakpoints(p, span));
    integrate(&sys, span, solver)
}

/// Five-state model with the surrogate as systolic pressure, starting from the
/// equilibrium for the pressure at the first instant.
pub fn full_forced(p: &ParameterSet, fm: &ForcingModel, solver: &SolverConfig) -> Result<Trajectory, SolveError> {
    let span = fm.span;
    let history = models::full_equilibrium(fm.surrogate.eval(span.0), p).to_vec();
    let surrogate = fm.surrogate.clone();
    let model = FullModel::new(*p, move |t| surrogate.eval(t));
    let sys = DdeSystem::new(model, p.d_s, history).with_breakpoints(strain_breakpoints(p, span));
    integrate(&sys, span, solver)
}

/// Sample spacing of synthetic maneuver records (s).
pub const SYNTH_DT: f64 = 0.01;

/// Forcing model fitted to a synthetic maneuver with the strain window of `p`,
/// preprocessed like measured data.
pub fn synthetic_forcing(base: &SubjectBaseline, p: &ParameterSet, profile: &VmProfile) -> Result<ForcingModel, SignalError> {
    let sbp = signal::synth_vm(base, p.t_s, p.t_e, profile, SYNTH_DT)?;
    let ing = signal::prepare_envelope(
        sbp,
        *base,
        *p,
        signal::DEFAULT_PRE_EXTENSION,
        signal::DEFAULT_POST_EXTENSION,
    )?;
    Ok(ing.forcing)
}
