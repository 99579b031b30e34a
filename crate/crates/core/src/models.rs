//! Baroreflex model family: constitutive relations, the five-state model, the
//! reduced two-state model, nominal and subject-derived parameters, and the
//! steady-state initialization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dde::DelayRhs;
use crate::signal::ForcingModel;

/// Thoracic pressure during the breath hold (mmHg).
pub const THORACIC_PRESSURE: f64 = 40.0;
/// Resting parasympathetic outflow used as initial value and history.
pub const T_P0: f64 = 0.8;
/// Resting sympathetic outflow used as initial value and history.
pub const T_S0: f64 = 0.2;

/// Indices into the five-state vector.
pub mod full_index {
    pub const EPS_BC: usize = 0;
    pub const EPS_BA: usize = 1;
    pub const T_P: usize = 2;
    pub const T_S: usize = 3;
    pub const H: usize = 4;
}

/// Indices into the two-state vector.
pub mod reduced_index {
    pub const T_S: usize = 0;
    pub const H: usize = 1;
}

pub const FULL_STATE_NAMES: [&str; 5] = ["eps_bc", "eps_ba", "T_p", "T_s", "H"];
pub const REDUCED_STATE_NAMES: [&str; 2] = ["T_s", "H"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter {name} = {value} is invalid: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("cannot derive parameters: log argument {arg} from gain {gain} is not positive")]
    Derivation { gain: &'static str, arg: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown subject {0} (expected 1, 2 or 3)")]
    UnknownSubject(u32),
}

/// Model constants plus the sympathetic delay and the breath-hold window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub a: f64,
    pub b: f64,
    pub k_b: f64,
    pub k_p: f64,
    pub k_s: f64,
    pub tau_b: f64,
    pub tau_p: f64,
    pub tau_s: f64,
    pub tau_h: f64,
    pub q_w: f64,
    pub q_p: f64,
    pub q_s: f64,
    pub s_w: f64,
    pub s_p: f64,
    pub s_s: f64,
    pub h_i: f64,
    pub h_p: f64,
    pub h_s: f64,
    pub d_s: f64,
    pub t_s: f64,
    pub t_e: f64,
}

/// Canonical names, in file order, with an ASCII alias for the Greek ones.
const NAMES: [(&str, &str); 21] = [
    ("A", "A"),
    ("B", "B"),
    ("K_b", "K_b"),
    ("K_p", "K_p"),
    ("K_s", "K_s"),
    ("τ_b", "tau_b"),
    ("τ_p", "tau_p"),
    ("τ_s", "tau_s"),
    ("τ_H", "tau_H"),
    ("q_w", "q_w"),
    ("q_p", "q_p"),
    ("q_s", "q_s"),
    ("s_w", "s_w"),
    ("s_p", "s_p"),
    ("s_s", "s_s"),
    ("H_I", "H_I"),
    ("H_p", "H_p"),
    ("H_s", "H_s"),
    ("D_s", "D_s"),
    ("t_s", "t_s"),
    ("t_e", "t_e"),
];

impl ParameterSet {
    /// Literature values with the wall-strain half-saturation at `p_bar`.
    /// The breath hold defaults to 20–35 s.
    pub fn nominal(p_bar: f64) -> Self {
        ParameterSet {
            a: 5.0,
            b: 0.5,
            k_b: 0.1,
            k_p: 5.0,
            k_s: 5.0,
            tau_b: 0.9,
            tau_p: 1.8,
            tau_s: 10.0,
            tau_h: 0.5,
            q_w: 0.04,
            q_p: 10.0,
            q_s: 10.0,
            s_w: p_bar,
            s_p: 0.55,
            s_s: 0.06,
            h_i: 100.0,
            h_p: 0.22,
            h_s: 0.37,
            d_s: 3.0,
            t_s: 20.0,
            t_e: 35.0,
        }
    }

    /// Nominal values with `s_p`, `s_s`, `H_p`, `H_s` computed from the subject
    /// baseline so that the model starts at rest.
    pub fn for_subject(base: &SubjectBaseline) -> Result<Self, ModelError> {
        let mut p = Self::nominal(base.p_bar);
        p.apply_derived(derive_parameters(base, &p)?);
        Ok(p)
    }

    pub fn apply_derived(&mut self, d: DerivedParameters) {
        self.s_p = d.s_p;
        self.s_s = d.s_s;
        self.h_p = d.h_p;
        self.h_s = d.h_s;
    }

    fn values(&self) -> [f64; 21] {
        [
            self.a, self.b, self.k_b, self.k_p, self.k_s, self.tau_b, self.tau_p, self.tau_s, self.tau_h,
            self.q_w, self.q_p, self.q_s, self.s_w, self.s_p, self.s_s, self.h_i, self.h_p, self.h_s,
            self.d_s, self.t_s, self.t_e,
        ]
    }

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        let idx = NAMES.iter().position(|(g, a)| *g == key || *a == key)?;
        Some(match idx {
            0 => &mut self.a,
            1 => &mut self.b,
            2 => &mut self.k_b,
            3 => &mut self.k_p,
            4 => &mut self.k_s,
            5 => &mut self.tau_b,
            6 => &mut self.tau_p,
            7 => &mut self.tau_s,
            8 => &mut self.tau_h,
            9 => &mut self.q_w,
            10 => &mut self.q_p,
            11 => &mut self.q_s,
            12 => &mut self.s_w,
            13 => &mut self.s_p,
            14 => &mut self.s_s,
            15 => &mut self.h_i,
            16 => &mut self.h_p,
            17 => &mut self.h_s,
            18 => &mut self.d_s,
            19 => &mut self.t_s,
            _ => &mut self.t_e,
        })
    }

    /// Reads a parameter by its table name (`τ_s` or `tau_s`).
    pub fn get(&self, key: &str) -> Option<f64> {
        let idx = NAMES.iter().position(|(g, a)| *g == key || *a == key)?;
        Some(self.values()[idx])
    }

    /// Sets a parameter by its table name (`τ_s` or `tau_s`).
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ModelError> {
        match self.slot(key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(ModelError::Parse { line: 0, message: format!("unknown parameter `{key}`") }),
        }
    }

    /// Applies `name = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_file(mut self, text: &str) -> Result<Self, ModelError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| ModelError::Parse { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `name = value`, got `{line}`")))?;
            let key = key.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("`{}` is not a number", value.trim())))?;
            let slot = self.slot(key).ok_or_else(|| parse_err(format!("unknown parameter `{key}`")))?;
            *slot = value;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for ((name, _), v) in NAMES.iter().zip(self.values()) {
            if !v.is_finite() {
                return Err(ModelError::InvalidParameter { name, value: v, reason: "must be finite" });
            }
            if *name == "B" {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::InvalidParameter { name, value: v, reason: "must lie in [0, 1]" });
                }
            } else if v <= 0.0 {
                return Err(ModelError::InvalidParameter { name, value: v, reason: "must be positive" });
            }
        }
        if self.a <= 1.0 {
            return Err(ModelError::InvalidParameter { name: "A", value: self.a, reason: "must exceed 1" });
        }
        if self.t_e <= self.t_s {
            return Err(ModelError::InvalidParameter { name: "t_e", value: self.t_e, reason: "must exceed t_s" });
        }
        Ok(())
    }
}

impl fmt::Display for ParameterSet {
    /// Parameter-file format, loadable with [`ParameterSet::apply_file`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((_, ascii), v) in NAMES.iter().zip(self.values()) {
            writeln!(f, "{ascii} = {v}")?;
        }
        Ok(())
    }
}

impl FromStr for ParameterSet {
    type Err = ModelError;

    /// Parses a complete parameter file; every name must be present.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = ParameterSet::nominal(f64::NAN);
        let mut seen = [false; 21];
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some((key, _)) = line.split_once('=') {
                if let Some(idx) = NAMES.iter().position(|(g, a)| *g == key.trim() || *a == key.trim()) {
                    seen[idx] = true;
                } else {
                    return Err(ModelError::Parse { line: i + 1, message: format!("unknown parameter `{}`", key.trim()) });
                }
            }
        }
        if let Some(idx) = seen.iter().position(|s| !s) {
            return Err(ModelError::Parse { line: 0, message: format!("missing parameter `{}`", NAMES[idx].1) });
        }
        p = p.apply_file(s)?;
        Ok(p)
    }
}

/// Resting values measured for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectBaseline {
    #[serde(rename = "P_bar")]
    pub p_bar: f64,
    #[serde(rename = "H_bar")]
    pub h_bar: f64,
    pub age: f64,
}

impl SubjectBaseline {
    pub fn new(p_bar: f64, h_bar: f64, age: f64) -> Result<Self, ModelError> {
        for (name, v) in [("P_bar", p_bar), ("H_bar", h_bar), ("age", age)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value: v, reason: "must be positive" });
            }
        }
        Ok(SubjectBaseline { p_bar, h_bar, age })
    }

    /// The three recorded subjects: two controls and one POTS patient.
    pub fn subject(id: u32) -> Result<Self, ModelError> {
        match id {
            1 => Ok(SubjectBaseline { p_bar: 149.0, h_bar: 98.0, age: 21.0 }),
            2 => Ok(SubjectBaseline { p_bar: 117.0, h_bar: 87.0, age: 27.0 }),
            3 => Ok(SubjectBaseline { p_bar: 83.0, h_bar: 94.0, age: 57.0 }),
            other => Err(ModelError::UnknownSubject(other)),
        }
    }
}

/// Age-predicted maximal heart rate (bpm), 208 − 0.7·age.
pub fn max_heart_rate(age: f64) -> f64 {
    208.0 - 0.7 * age
}

pub fn thoracic_pressure(t: f64, p: &ParameterSet) -> f64 {
    if t >= p.t_s && t <= p.t_e {
        THORACIC_PRESSURE
    } else {
        0.0
    }
}

pub fn wall_strain(pressure: f64, p: &ParameterSet) -> f64 {
    let e = (-p.q_w * (pressure - p.s_w)).exp();
    if e.is_infinite() {
        return 0.0;
    }
    1.0 - ((1.0 + e) / (p.a + e)).sqrt()
}

pub fn neural_drive(eps_wc: f64, eps_bc: f64, eps_wa: f64, eps_ba: f64, p: &ParameterSet) -> f64 {
    p.b * (eps_wc - eps_bc) + (1.0 - p.b) * (eps_wa - eps_ba)
}

/// Logistic `1 / (1 + e^x)`, evaluated without overflow.
fn logistic_neg(x: f64) -> f64 {
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Parasympathetic and sympathetic efferent activations for neural drive `n`.
pub fn efferent_sigmoids(n: f64, p: &ParameterSet) -> (f64, f64) {
    let g_p = logistic_neg(-p.q_p * (n - p.s_p));
    let g_s = logistic_neg(p.q_s * (n - p.s_s));
    (g_p, g_s)
}

/// Resting neural drive: both baroreceptor strains at their fixed point with
/// SBP equal to the half-saturation pressure.
pub fn resting_drive(p: &ParameterSet, p_bar: f64) -> f64 {
    (1.0 - p.k_b) * wall_strain(p_bar, p)
}

/// Neural drive of the reduced model: aortic pathway only, strain at its fixed point.
pub fn reduced_drive(aortic_pressure: f64, p: &ParameterSet) -> f64 {
    (1.0 - p.k_b) * wall_strain(aortic_pressure, p)
}

/// Forcing terms `(f, g)` of the reduced model for a given aortic pressure.
pub fn forcing_terms(aortic_pressure: f64, p: &ParameterSet) -> (f64, f64) {
    let n = reduced_drive(aortic_pressure, p);
    let (g_p, g_s) = efferent_sigmoids(n, p);
    let f = p.k_s / p.tau_s * g_s;
    let g = p.h_i / p.tau_h * (1.0 - p.h_p * p.k_p * g_p);
    (f, g)
}

/// Five-state right-hand side with SBP value `sbp` at time `t`.
pub fn full_rhs(t: f64, x: &[f64; 5], x_del: &[f64; 5], p: &ParameterSet, sbp: f64) -> [f64; 5] {
    use full_index::*;
    let p_c = sbp;
    let p_a = sbp - thoracic_pressure(t, p);
    let eps_wc = wall_strain(p_c, p);
    let eps_wa = wall_strain(p_a, p);
    let n = neural_drive(eps_wc, x[EPS_BC], eps_wa, x[EPS_BA], p);
    let (g_p, g_s) = efferent_sigmoids(n, p);
    let h_tilde = p.h_i * (1.0 - p.h_p * x[T_P] + p.h_s * x[T_S]);
    [
        (-x[EPS_BC] + p.k_b * eps_wc) / p.tau_b,
        (-x[EPS_BA] + p.k_b * eps_wa) / p.tau_b,
        (-x[T_P] + p.k_p * g_p) / p.tau_p,
        (-x_del[T_S] + p.k_s * g_s) / p.tau_s,
        (-x[H] + h_tilde) / p.tau_h,
    ]
}

/// Two-state right-hand side. Without forcing this is the homogeneous system.
pub fn reduced_rhs(t: f64, x: &[f64; 2], x_del: &[f64; 2], p: &ParameterSet, forcing: Option<&ForcingModel>) -> [f64; 2] {
    use reduced_index::*;
    let (f, g) = match forcing {
        Some(fm) => fm.terms_unchecked(t, p),
        None => (0.0, 0.0),
    };
    [
        -x_del[T_S] / p.tau_s + f,
        -x[H] / p.tau_h + p.h_i * p.h_s / p.tau_h * x[T_S] + g,
    ]
}

/// Parameters computed from the subject baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParameters {
    pub s_p: f64,
    pub s_s: f64,
    pub h_p: f64,
    pub h_s: f64,
}

/// Half-saturation values and heart-rate gains that make the resting state an
/// equilibrium, using the age-predicted maximal heart rate.
pub fn derive_parameters(base: &SubjectBaseline, p: &ParameterSet) -> Result<DerivedParameters, ModelError> {
    derive_parameters_with(base, p, max_heart_rate(base.age))
}

/// As [`derive_parameters`] with an explicit maximal heart rate (bpm).
pub fn derive_parameters_with(
    base: &SubjectBaseline,
    p: &ParameterSet,
    h_max: f64,
) -> Result<DerivedParameters, ModelError> {
    if !(p.h_i > 0.0) {
        return Err(ModelError::InvalidParameter { name: "H_I", value: p.h_i, reason: "must be positive" });
    }
    let n_bar = resting_drive(p, base.p_bar);
    let arg_p = p.k_p / T_P0 - 1.0;
    if !(arg_p > 0.0) {
        return Err(ModelError::Derivation { gain: "K_p", arg: arg_p });
    }
    let arg_s = p.k_s / T_S0 - 1.0;
    if !(arg_s > 0.0) {
        return Err(ModelError::Derivation { gain: "K_s", arg: arg_s });
    }
    let s_p = n_bar + arg_p.ln() / p.q_p;
    let s_s = n_bar - arg_s.ln() / p.q_s;
    let h_s = (h_max / p.h_i - 1.0) / p.k_s;
    let h_p = (1.0 - base.h_bar / p.h_i + h_s * T_S0) / T_P0;
    Ok(DerivedParameters { s_p, s_s, h_p, h_s })
}

/// How the baroreceptor strains are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StrainInit {
    /// Fixed point of the strain equations, `K_b · ε_w(P̄)`.
    #[default]
    SteadyState,
    /// The unscaled wall strain at the half-saturation pressure, `1 − sqrt(2/(A+1))`.
    Unscaled,
}

/// Resting five-state vector (also the constant history).
pub fn initial_state(p: &ParameterSet, base: &SubjectBaseline, strain: StrainInit) -> [f64; 5] {
    let eps = match strain {
        StrainInit::SteadyState => p.k_b * wall_strain(base.p_bar, p),
        StrainInit::Unscaled => 1.0 - (2.0 / (p.a + 1.0)).sqrt(),
    };
    [eps, eps, T_P0, T_S0, base.h_bar]
}

/// Fixed point of the five-state model for a constant pressure outside the strain.
pub fn full_equilibrium(sbp: f64, p: &ParameterSet) -> [f64; 5] {
    let eps_w = wall_strain(sbp, p);
    let (g_p, g_s) = efferent_sigmoids((1.0 - p.k_b) * eps_w, p);
    let (t_p, t_s) = (p.k_p * g_p, p.k_s * g_s);
    let h = p.h_i * (1.0 - p.h_p * t_p + p.h_s * t_s);
    [p.k_b * eps_w, p.k_b * eps_w, t_p, t_s, h]
}

/// Fixed point of the reduced model for constant forcing terms `(f, g)`.
pub fn reduced_equilibrium(f: f64, g: f64, p: &ParameterSet) -> [f64; 2] {
    let t_s = p.tau_s * f;
    [t_s, p.h_i * p.h_s * t_s + p.tau_h * g]
}

/// Projection of a five-state vector onto `(T_s, H)`.
pub fn reduce_state(x: &[f64; 5]) -> [f64; 2] {
    [x[full_index::T_S], x[full_index::H]]
}

/// The five-state model driven by an SBP signal.
pub struct FullModel<S> {
    pub params: ParameterSet,
    pub sbp: S,
}

impl<S: Fn(f64) -> f64 + Send + Sync> FullModel<S> {
    pub fn new(params: ParameterSet, sbp: S) -> Self {
        FullModel { params, sbp }
    }
}

impl<S: Fn(f64) -> f64 + Send + Sync> DelayRhs for FullModel<S> {
    fn dim(&self) -> usize {
        5
    }

    fn eval(&self, t: f64, x: &[f64], x_delayed: &[f64], dx: &mut [f64]) {
        let x: &[f64; 5] = x.try_into().expect("five states");
        let xd: &[f64; 5] = x_delayed.try_into().expect("five states");
        dx.copy_from_slice(&full_rhs(t, x, xd, &self.params, (self.sbp)(t)));
    }
}

/// The reduced two-state model, optionally forced.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub params: ParameterSet,
    pub forcing: Option<ForcingModel>,
}

impl ReducedModel {
    pub fn homogeneous(params: ParameterSet) -> Self {
        ReducedModel { params, forcing: None }
    }

    pub fn forced(params: ParameterSet, forcing: ForcingModel) -> Self {
        ReducedModel { params, forcing: Some(forcing) }
    }
}

impl DelayRhs for ReducedModel {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, t: f64, x: &[f64], x_delayed: &[f64], dx: &mut [f64]) {
        let x: &[f64; 2] = x.try_into().expect("two states");
        let xd: &[f64; 2] = x_delayed.try_into().expect("two states");
        dx.copy_from_slice(&reduced_rhs(t, x, xd, &self.params, self.forcing.as_ref()));
    }

    fn jacobian(&self, _t: f64, _x: &[f64], _x_delayed: &[f64], jac: &mut nalgebra::DMatrix<f64>) -> bool {
        // the reduced model is linear in the current state
        let p = &self.params;
        jac[(0, 0)] = 0.0;
        jac[(0, 1)] = 0.0;
        jac[(1, 0)] = p.h_i * p.h_s / p.tau_h;
        jac[(1, 1)] = -1.0 / p.tau_h;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal() -> ParameterSet {
        ParameterSet::nominal(120.0)
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let base = SubjectBaseline::subject(1).unwrap();
        let p = ParameterSet::for_subject(&base).unwrap();
        let x = full_equilibrium(base.p_bar, &p);
        let dx = full_rhs(0.0, &x, &x, &p, base.p_bar);
        assert!(dx.iter().all(|v| v.abs() < 1e-12), "{dx:?}");
        let x0 = initial_state(&p, &base, StrainInit::SteadyState);
        for (a, b) in x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
        let (f, g) = forcing_terms(base.p_bar - 3.0, &p);
        let y = reduced_equilibrium(f, g, &p);
        let dy = [-y[0] / p.tau_s + f, -y[1] / p.tau_h + p.h_i * p.h_s / p.tau_h * y[0] + g];
        assert!(dy.iter().all(|v| v.abs() < 1e-12), "{dy:?}");
    }

    #[test]
    fn thoracic_pressure_window_is_inclusive() {
        let p = nominal();
        assert_eq!(thoracic_pressure(0.5 * (p.t_s + p.t_e), &p), 40.0);
        assert_eq!(thoracic_pressure(p.t_s - 0.001, &p), 0.0);
        assert_eq!(thoracic_pressure(p.t_s, &p), 40.0);
        assert_eq!(thoracic_pressure(p.t_e, &p), 40.0);
        assert_eq!(thoracic_pressure(p.t_e + 1e-9, &p), 0.0);
    }

    #[test]
    fn wall_strain_reference_values() {
        let p = nominal();
        let expect = 1.0 - (1.0f64 / 3.0).sqrt();
        assert!((wall_strain(120.0, &p) - expect).abs() < 1e-15);
        assert!((wall_strain(1e6, &p) - (1.0 - (1.0 / p.a).sqrt())).abs() < 1e-12);
        assert!(wall_strain(-1e6, &p).abs() < 1e-12);
        assert!((expect - 0.42265).abs() < 1e-5);
    }

    #[test]
    fn neural_drive_examples() {
        let mut p = nominal();
        p.b = 0.0;
        assert_eq!(neural_drive(0.9, 0.1, 0.4, 0.05, &p), 0.4 - 0.05);
        p.b = 1.0;
        assert_eq!(neural_drive(0.3, 0.3, 0.4, 0.05, &p), 0.0);
        p.b = 0.5;
        assert!((neural_drive(0.4, 0.04, 0.4, 0.04, &p) - 0.36).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_half_saturation_and_nominal_value() {
        let p = nominal();
        let (gp, _) = efferent_sigmoids(p.s_p, &p);
        let (_, gs) = efferent_sigmoids(p.s_s, &p);
        assert_eq!(gp, 0.5);
        assert_eq!(gs, 0.5);
        let (_, gs) = efferent_sigmoids(0.38038, &p);
        let oracle = 1.0 / (1.0 + (3.2038f64).exp());
        assert!((gs - oracle).abs() < 1e-12);
        assert!((gs - 0.0390).abs() < 5e-5);
        // saturation without overflow
        let (gp, gs) = efferent_sigmoids(1e6, &p);
        assert_eq!((gp, gs), (1.0, 0.0));
    }

    #[test]
    fn derived_parameters_match_hand_values() {
        let p = nominal();
        let base = SubjectBaseline::new(120.0, 90.0, 30.0).unwrap();
        let d = derive_parameters(&base, &p).unwrap();
        let n_bar = 0.9 * (1.0 - (1.0f64 / 3.0).sqrt());
        assert!((d.s_p - (n_bar + 5.25f64.ln() / 10.0)).abs() < 1e-14);
        assert!((d.s_s - (n_bar - 24f64.ln() / 10.0)).abs() < 1e-14);
        assert!((d.s_p - 0.546).abs() < 5e-4);
        assert!((d.s_s - 0.0626).abs() < 5e-4);
        let h_max = 208.0 - 21.0;
        assert!((d.h_s - (h_max / 100.0 - 1.0) / 5.0).abs() < 1e-14);
        assert!((d.h_p - (1.0 - 0.9 + d.h_s * 0.2) / 0.8).abs() < 1e-14);
    }

    #[test]
    fn derivation_edge_cases() {
        let base = SubjectBaseline::new(120.0, 90.0, 30.0).unwrap();
        let mut p = nominal();
        p.k_p = 2.0 * T_P0;
        let d = derive_parameters(&base, &p).unwrap();
        assert!((d.s_p - resting_drive(&p, 120.0)).abs() < 1e-15);
        let d = derive_parameters_with(&base, &nominal(), 100.0).unwrap();
        assert_eq!(d.h_s, 0.0);
        let mut p = nominal();
        p.k_p = T_P0;
        assert!(matches!(derive_parameters(&base, &p), Err(ModelError::Derivation { gain: "K_p", .. })));
        let mut p = nominal();
        p.k_s = 0.1;
        assert!(matches!(derive_parameters(&base, &p), Err(ModelError::Derivation { gain: "K_s", .. })));
    }

    #[test]
    fn baseline_state_is_an_equilibrium() {
        for id in 1..=3 {
            let base = SubjectBaseline::subject(id).unwrap();
            let p = ParameterSet::for_subject(&base).unwrap();
            let x0 = initial_state(&p, &base, StrainInit::SteadyState);
            let d = full_rhs(0.0, &x0, &x0, &p, base.p_bar);
            for v in d {
                assert!(v.abs() < 1e-9, "subject {id}: {d:?}");
            }
            assert_eq!(x0[full_index::H], base.h_bar);
            assert_eq!(x0[full_index::T_S], 0.2);
        }
        let p = nominal();
        let base = SubjectBaseline::new(120.0, 90.0, 30.0).unwrap();
        let x0 = initial_state(&p, &base, StrainInit::SteadyState);
        assert!((x0[0] - 0.042265).abs() < 1e-6);
        let lit = initial_state(&p, &base, StrainInit::Unscaled);
        assert!((lit[0] - 0.42265).abs() < 1e-5);
    }

    #[test]
    fn rhs_rows_vanish_at_their_targets() {
        let p = nominal();
        let mut x = [0.04, 0.05, 0.0, 0.3, 0.0];
        let eps_wc = wall_strain(130.0, &p);
        let eps_wa = wall_strain(130.0, &p);
        let n = neural_drive(eps_wc, x[0], eps_wa, x[1], &p);
        let (gp, _) = efferent_sigmoids(n, &p);
        x[2] = p.k_p * gp;
        x[4] = p.h_i * (1.0 - p.h_p * x[2] + p.h_s * x[3]);
        let d = full_rhs(0.0, &x, &x, &p, 130.0);
        assert!(d[2].abs() < 1e-14);
        assert!(d[4].abs() < 1e-12);
    }

    #[test]
    fn homogeneous_reduced_examples() {
        let mut p = nominal();
        assert_eq!(reduced_rhs(0.0, &[0.0, 0.0], &[0.0, 0.0], &p, None), [0.0, 0.0]);
        p.tau_s = 1.0;
        assert_eq!(reduced_rhs(0.0, &[0.0, 0.0], &[1.0, 0.0], &p, None)[0], -1.0);
    }

    #[test]
    fn parameter_file_round_trip_and_errors() {
        let p = ParameterSet::for_subject(&SubjectBaseline::subject(2).unwrap()).unwrap();
        let text = p.to_string();
        let back: ParameterSet = text.parse().unwrap();
        assert_eq!(back, p);

        let over = nominal().apply_file("# comment\nτ_s = 7.5  # inline\nD_s=9.2\n\n").unwrap();
        assert_eq!((over.tau_s, over.d_s), (7.5, 9.2));
        assert!(nominal().apply_file("tau_x = 1").is_err());
        assert!(nominal().apply_file("tau_s 1").is_err());
        assert!(nominal().apply_file("tau_s = fast").is_err());
        assert!(nominal().apply_file("tau_s = -1").is_err());
        assert!(nominal().apply_file("B = 1.5").is_err());
        assert!(nominal().apply_file("t_e = 10").is_err());
        assert!("A = 5".parse::<ParameterSet>().is_err());
    }

    #[test]
    fn subjects_table() {
        let s1 = SubjectBaseline::subject(1).unwrap();
        assert_eq!((s1.p_bar, s1.h_bar, s1.age), (149.0, 98.0, 21.0));
        assert!(SubjectBaseline::subject(4).is_err());
        assert!(SubjectBaseline::new(-1.0, 80.0, 20.0).is_err());
    }
}
