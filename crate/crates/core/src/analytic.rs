//! Stability of the homogeneous reduced system.
//!
//! The linear sympathetic equation `τ_s T_s'(t) = −T_s(t − D_s)` has
//! characteristic equation `τ_s λ + e^{−λ D_s} = 0`. Its dominant root is
//! `λ = W₀(−D_s/τ_s) / D_s`, with `W₀` the principal Lambert W branch.
//! Roots are real for `e D_s ≤ τ_s` and cross the imaginary axis at
//! `D_s = (π/2) τ_s`.

use std::f64::consts::{E, FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ParameterSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("D_s and tau_s must be positive (got {d_s}, {tau_s})")]
    InvalidInput { d_s: f64, tau_s: f64 },
    #[error("characteristic residual {residual:e} at D_s = {d_s}, tau_s = {tau_s} exceeds tolerance")]
    Residual { d_s: f64, tau_s: f64, residual: f64 },
    #[error("no sign change on (0, pi/D_s) for D_s = {d_s}, tau_s = {tau_s}; roots are real")]
    NoBracket { d_s: f64, tau_s: f64 },
    #[error("tau_H * lambda + 1 vanishes; the explicit heart-rate solution is singular")]
    Resonance,
}

/// Behaviour region in the `(D_s, τ_s)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionClass {
    OverdampedSink,
    CriticallyDampedSink,
    StableFocus,
    LimitCycle,
    Unstable,
}

impl RegionClass {
    pub const ALL: [RegionClass; 5] = [
        RegionClass::OverdampedSink,
        RegionClass::CriticallyDampedSink,
        RegionClass::StableFocus,
        RegionClass::LimitCycle,
        RegionClass::Unstable,
    ];

    /// Integer code 0–4 in declaration order.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_sink(self) -> bool {
        matches!(self, RegionClass::OverdampedSink | RegionClass::CriticallyDampedSink)
    }

    /// Position along sink → focus → limit cycle → unstable, merging the two sinks.
    pub fn rank(self) -> u8 {
        match self {
            RegionClass::OverdampedSink | RegionClass::CriticallyDampedSink => 0,
            RegionClass::StableFocus => 1,
            RegionClass::LimitCycle => 2,
            RegionClass::Unstable => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionClass::OverdampedSink => "OverdampedSink",
            RegionClass::CriticallyDampedSink => "CriticallyDampedSink",
            RegionClass::StableFocus => "StableFocus",
            RegionClass::LimitCycle => "LimitCycle",
            RegionClass::Unstable => "Unstable",
        }
    }
}

impl fmt::Display for RegionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegionClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RegionClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown region class `{s}`"))
    }
}

/// Characteristic root `α ± iβ`, with `β ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexRoot {
    pub alpha: f64,
    pub beta: f64,
}

impl ComplexRoot {
    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.alpha, self.beta)
    }
}

const INV_E: f64 = 1.0 / E;

/// Series of `W₀` about the branch point in `p = sqrt(2(e z + 1))`.
fn branch_series(p: Complex64) -> Complex64 {
    const C: [f64; 7] = [
        -1.0,
        1.0,
        -1.0 / 3.0,
        11.0 / 72.0,
        -43.0 / 540.0,
        769.0 / 17280.0,
        -221.0 / 8505.0,
    ];
    C.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * p + c)
}

fn halley_real(z: f64, mut w: f64) -> f64 {
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let dw = f / denom;
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

fn halley_complex(z: Complex64, mut w: Complex64) -> Complex64 {
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (wp1 * 2.0);
        if denom.norm() == 0.0 || !denom.is_finite() {
            break;
        }
        let dw = f / denom;
        w -= dw;
        if dw.norm() <= 4.0 * f64::EPSILON * w.norm().max(1e-300) {
            break;
        }
    }
    w
}

fn lambert_w0_real(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let q = E * z + 1.0;
    if q <= 0.0 {
        return -1.0;
    }
    let guess = if z < -0.25 {
        branch_series(Complex64::new((2.0 * q).sqrt(), 0.0)).re
    } else if z < 3.0 {
        z.ln_1p()
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    if z < -0.3 && q < 1e-6 {
        // the series is already exact to rounding here
        return guess;
    }
    halley_real(z, guess)
}

/// Principal branch of the Lambert W function.
///
/// The branch cut lies along `(−∞, −1/e)`; points on the cut take the value
/// continuous from above, so `Im W₀(x) ∈ (0, π)` for real `x < −1/e`.
pub fn lambert_w0(z: Complex64) -> Complex64 {
    // a signed zero imaginary part is read as +0 so the cut is closed from above
    let z = Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im });
    if z.im == 0.0 && z.re >= -INV_E {
        return Complex64::new(lambert_w0_real(z.re), 0.0);
    }
    if z.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let q = z * E + 1.0;
    let guess = if q.norm() < 0.6 {
        branch_series((q * 2.0).sqrt())
    } else if z.re > -1.0 && z.re < 1.5 && z.im.abs() < 1.0 && z.re > -2.5 * z.im.abs() - 0.2 {
        (z + 1.0).ln()
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    halley_complex(z, guess)
}

fn check_positive(d_s: f64, tau_s: f64) -> Result<(), AnalyticError> {
    if d_s > 0.0 && tau_s > 0.0 && d_s.is_finite() && tau_s.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::InvalidInput { d_s, tau_s })
    }
}

/// `|τ_s λ + e^{−λ D_s}|`.
pub fn characteristic_residual(d_s: f64, tau_s: f64, lambda: Complex64) -> f64 {
    (lambda * tau_s + (-lambda * d_s).exp()).norm()
}

/// Dominant characteristic root from the principal Lambert branch.
pub fn principal_root(d_s: f64, tau_s: f64) -> Result<ComplexRoot, AnalyticError> {
    check_positive(d_s, tau_s)?;
    let z = -d_s / tau_s;
    let w = lambert_w0(Complex64::new(z, 0.0));
    let lambda = w / d_s;
    let residual = characteristic_residual(d_s, tau_s, lambda);
    if !(residual < 1e-10) {
        return Err(AnalyticError::Residual { d_s, tau_s, residual });
    }
    Ok(ComplexRoot { alpha: lambda.re, beta: lambda.im.abs() })
}

/// Imaginary-part residual after eliminating `α = −β cot(D_s β)`, written in
/// `u = D_s β ∈ (0, π)`.
fn oracle_residual(u: f64, d_s: f64, tau_s: f64) -> f64 {
    let u_cot = u * u.cos() / u.sin();
    u / d_s * tau_s - u_cot.exp() * u.sin()
}

/// Complex root computed independently of the Lambert function, by bisection
/// on `β τ_s − e^{D_s β cot(D_s β)} sin(D_s β) = 0` over `β ∈ (0, π/D_s)`.
pub fn complex_root_oracle(d_s: f64, tau_s: f64) -> Result<ComplexRoot, AnalyticError> {
    check_positive(d_s, tau_s)?;
    // the residual behaves like u (τ_s/D_s − e) near 0 and tends to π τ_s/D_s at π
    if !(E * d_s > tau_s) {
        return Err(AnalyticError::NoBracket { d_s, tau_s });
    }
    let (mut lo, mut hi) = (0.0f64, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if oracle_residual(mid, d_s, tau_s) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    let beta = u / d_s;
    let alpha = -beta * u.cos() / u.sin();
    Ok(ComplexRoot { alpha, beta })
}

/// Region of `(D_s, τ_s)` from the two analytic boundaries, with a relative
/// tolerance `tol · τ_s` on each boundary.
pub fn classify_homogeneous(d_s: f64, tau_s: f64, tol: f64) -> RegionClass {
    let band = tol * tau_s;
    if (E * d_s - tau_s).abs() <= band {
        RegionClass::CriticallyDampedSink
    } else if E * d_s < tau_s {
        RegionClass::OverdampedSink
    } else if (d_s - FRAC_PI_2 * tau_s).abs() <= band {
        RegionClass::LimitCycle
    } else if d_s < FRAC_PI_2 * tau_s {
        RegionClass::StableFocus
    } else {
        RegionClass::Unstable
    }
}

/// Default boundary tolerance for [`classify_homogeneous`].
pub const BOUNDARY_TOL: f64 = 1e-12;

/// `τ_s` on the transcritical line for a given delay.
pub fn transcritical_tau(d_s: f64) -> f64 {
    E * d_s
}

/// `τ_s` on the Hopf line for a given delay.
pub fn hopf_tau(d_s: f64) -> f64 {
    d_s / FRAC_PI_2
}

/// Heart rate of the homogeneous system when `T_s(t) = T_s0 e^{λt}`:
/// `H(t) = c T_s0 e^{λt} + (H0 − c T_s0) e^{−t/τ_H}` with
/// `c = H_I H_s / (τ_H λ + 1)`. For complex roots the real part is returned,
/// which is the solution for the real sympathetic trajectory `Re(T_s0 e^{λt})`.
pub fn h_explicit(t: f64, root: &ComplexRoot, p: &ParameterSet, t_s0: f64, h0: f64) -> Result<f64, AnalyticError> {
    let lambda = root.as_complex();
    let denom = lambda * p.tau_h + 1.0;
    if denom.norm() < 1e-12 {
        return Err(AnalyticError::Resonance);
    }
    let c = p.h_i * p.h_s / denom * t_s0;
    let h = c * (lambda * t).exp() + (-c + h0) * (-t / p.tau_h).exp();
    Ok(h.re)
}
