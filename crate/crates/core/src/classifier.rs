//! Behaviour classification of a single trajectory component from the trend
//! of its oscillation amplitudes.
//!
//! Extrema are located on a uniform resampling of the dense output, close
//! pairs are thinned, maxima and minima are paired into amplitudes and a
//! least-squares line through the amplitudes (against their index) decides
//! between a decaying spiral, a limit cycle and an expanding spiral.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::RegionClass;
use crate::dde::{SolveError, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory ends at {t_end}, before the analysis window starts at {t_cut}")]
    Window { t_cut: f64, t_end: f64 },
    #[error("component {index} out of range for a {dim}-dimensional trajectory")]
    Component { index: usize, dim: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Upper slope threshold; steeper growth is an expanding spiral.
    pub eta1: f64,
    /// Lower slope threshold; steeper decay is a decaying spiral.
    pub eta2: f64,
    /// Minimum r² for a limit cycle.
    pub mu: f64,
    /// Extrema closer than this (s) to the previous kept one are dropped.
    pub min_extrema_sep: f64,
    /// Max/min pairs closer than this in value are ignored.
    pub amp_floor: f64,
    pub resample_dt: f64,
    /// Start of the analysis window (s).
    pub t_cut: f64,
    /// End of the analysis window (s); the trajectory end when unset.
    pub t_stop: Option<f64>,
    /// Divide amplitudes by the first one before regressing.
    pub normalize: bool,
    /// Amplitude sets whose spread is below this fraction of their largest
    /// magnitude count as constant (r² = 1).
    pub flat_rel_tol: f64,
    /// The component diverged once it exceeds this multiple of its initial
    /// magnitude.
    pub divergence_factor: f64,
}

/// Refinement tolerance for extremum times (s).
pub const EXTREMUM_TIME_TOL: f64 = 1e-6;

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            eta1: 0.5,
            eta2: -1e-2,
            mu: 0.8,
            min_extrema_sep: 0.1,
            amp_floor: 1e-8,
            resample_dt: 0.01,
            t_cut: 37.0,
            t_stop: None,
            normalize: false,
            flat_rel_tol: 1e-6,
            divergence_factor: 1e6,
        }
    }
}

impl ClassifierConfig {
    /// Defaults with the window starting two seconds after the strain ends.
    pub fn after_strain(t_e: f64) -> Self {
        ClassifierConfig { t_cut: t_e + 2.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::InvalidConfig(m.to_string()));
        if !(self.eta2 < 0.0 && self.eta1 > 0.0) {
            return bad("need eta2 < 0 < eta1");
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad("mu must lie in (0, 1)");
        }
        if !(self.min_extrema_sep > 0.0 && self.amp_floor > 0.0 && self.resample_dt > 0.0) {
            return bad("min_extrema_sep, amp_floor and resample_dt must be positive");
        }
        if !self.t_cut.is_finite() {
            return bad("t_cut must be finite");
        }
        if self.t_stop.is_some_and(|t| !(t > self.t_cut)) {
            return bad("t_stop must exceed t_cut");
        }
        if !(self.flat_rel_tol >= 0.0 && self.divergence_factor > 1.0) {
            return bad("flat_rel_tol must be non-negative and divergence_factor above 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BehaviorClass {
    Sink,
    SpiralIn,
    LimitCycle,
    SpiralOut,
}

impl BehaviorClass {
    pub const ALL: [BehaviorClass; 4] =
        [BehaviorClass::Sink, BehaviorClass::SpiralIn, BehaviorClass::LimitCycle, BehaviorClass::SpiralOut];

    /// Region reported in maps. A numeric sink cannot be subclassified, so it
    /// maps to the overdamped sink.
    pub fn region(self) -> RegionClass {
        match self {
            BehaviorClass::Sink => RegionClass::OverdampedSink,
            BehaviorClass::SpiralIn => RegionClass::StableFocus,
            BehaviorClass::LimitCycle => RegionClass::LimitCycle,
            BehaviorClass::SpiralOut => RegionClass::Unstable,
        }
    }

    /// Whether a region class is the one this behaviour reports (either sink
    /// subclass matches a sink).
    pub fn matches(self, region: RegionClass) -> bool {
        match self {
            BehaviorClass::Sink => region.is_sink(),
            other => other.region() == region,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BehaviorClass::Sink => "Sink",
            BehaviorClass::SpiralIn => "SpiralIn",
            BehaviorClass::LimitCycle => "LimitCycle",
            BehaviorClass::SpiralOut => "SpiralOut",
        }
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviorClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown behaviour class `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub maxima: Vec<Extremum>,
    pub minima: Vec<Extremum>,
}

impl Extrema {
    pub fn len(&self) -> usize {
        self.maxima.len() + self.minima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Least-squares line `amplitude = intercept + slope * index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub intercept: f64,
    pub slope: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: BehaviorClass,
    pub extrema: Extrema,
    pub amplitudes: Vec<f64>,
    pub regression: Option<Regression>,
    /// Set when the divergence guard decided the class.
    pub diverged: bool,
}

impl Classification {
    pub fn n_extrema(&self) -> usize {
        self.extrema.len()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Max,
    Min,
}

/// Extrema of `f` on `[from, to]`: central differences on a grid of spacing
/// `cfg.resample_dt`, sign changes refined by bisection, then thinned so that
/// consecutive extrema are at least `cfg.min_extrema_sep` apart.
pub fn extrema_of(f: impl Fn(f64) -> f64, from: f64, to: f64, cfg: &ClassifierConfig) -> Extrema {
    let dt = cfg.resample_dt;
    let n = ((to - from) / dt).floor() as usize + 1;
    if n < 4 {
        return Extrema::default();
    }
    let at = |t: f64| f(t.clamp(from, to));
    let grad = |t: f64| (at(t + dt) - at(t - dt)) / (2.0 * dt);
    let ts: Vec<f64> = (0..n).map(|k| (from + k as f64 * dt).min(to)).collect();
    let xs: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    let g: Vec<f64> = (1..n - 1).map(|k| (xs[k + 1] - xs[k - 1]) / (2.0 * dt)).collect();

    let mut found: Vec<(Kind, Extremum)> = Vec::new();
    for k in 0..g.len() - 1 {
        let kind = if g[k] > 0.0 && g[k + 1] <= 0.0 {
            Kind::Max
        } else if g[k] < 0.0 && g[k + 1] >= 0.0 {
            Kind::Min
        } else {
            continue;
        };
        let (mut lo, mut hi) = (ts[k + 1], ts[k + 2]);
        let rising = kind == Kind::Max;
        while hi - lo > EXTREMUM_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            if (grad(mid) > 0.0) == rising && grad(mid) != 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        found.push((kind, Extremum { t, value: at(t) }));
    }

    let mut out = Extrema::default();
    let mut last: Option<f64> = None;
    for (kind, e) in found {
        if last.is_some_and(|t| e.t - t < cfg.min_extrema_sep) {
            continue;
        }
        last = Some(e.t);
        match kind {
            Kind::Max => out.maxima.push(e),
            Kind::Min => out.minima.push(e),
        }
    }
    out
}

/// Extrema of one trajectory component after `cfg.t_cut`.
pub fn find_extrema(traj: &Trajectory, component: usize, cfg: &ClassifierConfig) -> Result<Extrema, ClassifyError> {
    let (from, to) = window(traj, component, cfg)?;
    Ok(extrema_of(|t| component_at(traj, component, t), from, to, cfg))
}

fn component_at(traj: &Trajectory, i: usize, t: f64) -> f64 {
    let mut buf = [0.0; 8];
    let mut heap;
    let out = if traj.dim() <= buf.len() {
        &mut buf[..traj.dim()]
    } else {
        heap = vec![0.0; traj.dim()];
        &mut heap[..]
    };
    traj.eval_into(t.clamp(traj.t_start(), traj.t_end()), out).expect("time clamped into span");
    out[i]
}

fn window(traj: &Trajectory, component: usize, cfg: &ClassifierConfig) -> Result<(f64, f64), ClassifyError> {
    if component >= traj.dim() {
        return Err(ClassifyError::Component { index: component, dim: traj.dim() });
    }
    let from = cfg.t_cut.max(traj.t_start());
    let to = cfg.t_stop.map_or(traj.t_end(), |t| t.min(traj.t_end()));
    if to <= from {
        return Err(ClassifyError::Window { t_cut: cfg.t_cut, t_end: to });
    }
    Ok((from, to))
}

/// Pairs the i-th maximum with the i-th minimum and returns `M - m` for the
/// pairs whose values differ by at least `amp_floor`.
pub fn amplitudes(extrema: &Extrema, amp_floor: f64) -> Vec<f64> {
    extrema
        .maxima
        .iter()
        .zip(&extrema.minima)
        .map(|(mx, mn)| mx.value - mn.value)
        .filter(|a| a.abs() >= amp_floor)
        .collect()
}

/// Ordinary least squares of amplitude against its 1-based index. Returns
/// `None` for fewer than two amplitudes. Constant amplitudes fit perfectly,
/// so r² is 1 when the total sum of squares vanishes.
pub fn amplitude_regression(amps: &[f64]) -> Option<Regression> {
    let n = amps.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let x_mean = (nf + 1.0) / 2.0;
    let y_mean = amps.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (i, &y) in amps.iter().enumerate() {
        let dx = (i + 1) as f64 - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = amps
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let r = y - intercept - slope * (i + 1) as f64;
                r * r
            })
            .sum();
        1.0 - ss_res / syy
    };
    Some(Regression { intercept, slope, r2 })
}

/// Decision rule on the amplitude vector alone.
pub fn classify_amplitudes(amps: &[f64], cfg: &ClassifierConfig) -> (BehaviorClass, Option<Regression>) {
    match amps.len() {
        0 => return (BehaviorClass::Sink, None),
        1 => return (BehaviorClass::SpiralIn, None),
        _ => {}
    }
    let scaled: Vec<f64>;
    let amps = if cfg.normalize && amps[0] != 0.0 {
        scaled = amps.iter().map(|a| a / amps[0]).collect();
        &scaled[..]
    } else {
        amps
    };
    let mut reg = amplitude_regression(amps).expect("at least two amplitudes");
    let lo = amps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = amps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= cfg.flat_rel_tol * lo.abs().max(hi.abs()) {
        reg.r2 = 1.0;
    }
    let class = if reg.slope > cfg.eta1 {
        BehaviorClass::SpiralOut
    } else if reg.slope >= cfg.eta2 && reg.r2 > cfg.mu {
        BehaviorClass::LimitCycle
    } else {
        BehaviorClass::SpiralIn
    };
    (class, Some(reg))
}

/// Classifies one component of a trajectory over `[cfg.t_cut, t_end]`.
///
/// A component that turns non-finite or grows beyond `divergence_factor`
/// times its initial magnitude (1 if it starts at zero) is an expanding spiral
/// regardless of the window.
pub fn classify_trajectory(
    traj: &Trajectory,
    component: usize,
    cfg: &ClassifierConfig,
) -> Result<Classification, ClassifyError> {
    cfg.validate()?;
    if component >= traj.dim() {
        return Err(ClassifyError::Component { index: component, dim: traj.dim() });
    }
    let x0 = traj.state(0)[component].abs();
    let limit = cfg.divergence_factor * if x0 > 0.0 { x0 } else { 1.0 };
    if traj.states().any(|s| !s[component].is_finite() || s[component].abs() > limit) {
        return Ok(Classification {
            class: BehaviorClass::SpiralOut,
            extrema: Extrema::default(),
            amplitudes: Vec::new(),
            regression: None,
            diverged: true,
        });
    }
    let extrema = find_extrema(traj, component, cfg)?;
    let amplitudes = amplitudes(&extrema, cfg.amp_floor);
    let (class, regression) = classify_amplitudes(&amplitudes, cfg);
    Ok(Classification { class, extrema, amplitudes, regression, diverged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn sampled(f: impl Fn(f64) -> f64, t1: f64) -> Trajectory {
        let mesh: Vec<f64> = (0..=(t1 * 100.0) as usize).map(|k| k as f64 * 0.01).collect();
        let states = mesh.iter().map(|&t| vec![f(t)]).collect();
        Trajectory::from_samples(mesh, states).unwrap()
    }

    fn cfg_from(t_cut: f64) -> ClassifierConfig {
        ClassifierConfig { t_cut, ..Default::default() }
    }

    #[test]
    fn extrema_of_damped_sine() {
        let cfg = cfg_from(0.0);
        let ex = extrema_of(|t| (-t).exp() * t.sin(), 0.0, 20.0, &cfg);
        assert!(ex.len() >= 5);
        let mut all: Vec<f64> = ex.maxima.iter().chain(&ex.minima).map(|e| e.t).collect();
        all.sort_by(f64::total_cmp);
        for (k, t) in all.iter().enumerate() {
            assert!((t - (FRAC_PI_4 + k as f64 * PI)).abs() < 1e-3, "extremum {k} at {t}");
        }
        assert!((ex.maxima[0].t - FRAC_PI_4).abs() < 1e-3);
    }

    #[test]
    fn monotone_signal_has_no_extrema() {
        let ex = extrema_of(|t| (-t).exp(), 0.0, 20.0, &cfg_from(0.0));
        assert!(ex.is_empty());
    }

    #[test]
    fn close_extrema_drop_the_later() {
        // maximum at 1.0, minimum at 1.05
        let f = |t: f64| (t - 1.0).powi(3) / 3.0 - 0.025 * (t - 1.0).powi(2);
        let cfg = ClassifierConfig { resample_dt: 0.001, ..cfg_from(0.0) };
        let all = extrema_of(f, 0.9, 1.15, &ClassifierConfig { min_extrema_sep: 0.01, ..cfg.clone() });
        assert_eq!(all.len(), 2);
        let thinned = extrema_of(f, 0.9, 1.15, &cfg);
        assert_eq!(thinned.len(), 1);
        assert_eq!(thinned.minima.len(), 0);
        assert!((thinned.maxima[0].t - all.maxima[0].t).abs() < 1e-12);
    }

    #[test]
    fn regression_examples() {
        let r = amplitude_regression(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((r.slope, r.r2), (0.0, 1.0));
        let r = amplitude_regression(&[3.0, 2.0, 1.0]).unwrap();
        assert!((r.slope + 1.0).abs() < 1e-14 && (r.r2 - 1.0).abs() < 1e-14);
        let r = amplitude_regression(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!((r.slope - 0.6).abs() < 1e-14 && (r.r2 - 0.9).abs() < 1e-14);
        assert!(amplitude_regression(&[1.0]).is_none());
    }

    #[test]
    fn amplitude_rules() {
        let cfg = ClassifierConfig::default();
        assert_eq!(classify_amplitudes(&[], &cfg).0, BehaviorClass::Sink);
        assert_eq!(classify_amplitudes(&[0.4], &cfg).0, BehaviorClass::SpiralIn);
        assert_eq!(classify_amplitudes(&[0.3; 6], &cfg).0, BehaviorClass::LimitCycle);
        let growing = [0.1, 0.2, 0.4, 0.8, 1.6];
        let (c, r) = classify_amplitudes(&growing, &cfg);
        assert!((r.unwrap().slope - 0.36).abs() < 1e-12);
        assert_eq!(c, BehaviorClass::LimitCycle);
        let big: Vec<f64> = growing.iter().map(|a| a * 10.0).collect();
        assert_eq!(classify_amplitudes(&big, &cfg).0, BehaviorClass::SpiralOut);
        // normalising removes the scale dependence
        let norm = ClassifierConfig { normalize: true, ..cfg.clone() };
        assert_eq!(classify_amplitudes(&growing, &norm).0, classify_amplitudes(&big, &norm).0);
    }

    #[test]
    fn pairing_truncates_and_floors() {
        let e = |t, value| Extremum { t, value };
        let ex = Extrema {
            maxima: vec![e(1.0, 1.0), e(3.0, 1e-9), e(5.0, 0.5)],
            minima: vec![e(2.0, -1.0), e(4.0, 0.0)],
        };
        assert_eq!(amplitudes(&ex, 1e-8), vec![2.0]);
    }

    #[test]
    fn canonical_signals() {
        let cfg = cfg_from(5.0);
        let class = |f: &dyn Fn(f64) -> f64| classify_trajectory(&sampled(f, 120.0), 0, &cfg).unwrap().class;
        assert_eq!(class(&|t| (-t / 3.0).exp()), BehaviorClass::Sink);
        assert_eq!(class(&|t| (-0.05 * t).exp() * (2.0 * t).sin()), BehaviorClass::SpiralIn);
        assert_eq!(class(&|t| 0.3 * (2.0 * t).sin()), BehaviorClass::LimitCycle);
        assert_eq!(class(&|t| (0.05 * t).exp() * (2.0 * t).sin()), BehaviorClass::SpiralOut);
    }

    #[test]
    fn divergence_guard() {
        let traj = sampled(|t| (0.2 * t).exp(), 80.0);
        let c = classify_trajectory(&traj, 0, &cfg_from(0.0)).unwrap();
        assert!(c.diverged);
        assert_eq!(c.class, BehaviorClass::SpiralOut);
        let nan = Trajectory::from_samples(vec![0.0, 1.0, 2.0], vec![vec![1.0], vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(classify_trajectory(&nan, 0, &cfg_from(0.0)).unwrap().diverged);
    }

    #[test]
    fn window_and_component_errors() {
        let traj = sampled(|t| t.sin(), 10.0);
        assert!(matches!(classify_trajectory(&traj, 0, &cfg_from(37.0)), Err(ClassifyError::Window { .. })));
        assert!(matches!(classify_trajectory(&traj, 1, &cfg_from(0.0)), Err(ClassifyError::Component { .. })));
        let bad = ClassifierConfig { eta2: 0.1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ClassifyError::InvalidConfig(_))));
    }

    #[test]
    fn class_names_round_trip() {
        for c in BehaviorClass::ALL {
            assert_eq!(c.name().parse::<BehaviorClass>().unwrap(), c);
            assert!(c.matches(c.region()));
        }
        assert!(BehaviorClass::Sink.matches(RegionClass::CriticallyDampedSink));
        assert!(!BehaviorClass::SpiralIn.matches(RegionClass::LimitCycle));
    }
}
