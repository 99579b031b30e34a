//! Pressure-data preprocessing and the forcing of the reduced model.
//!
//! The pipeline is: systolic envelope from beat maxima, one-second centred
//! moving mean, constant baseline extension at both ends, and a degree-10
//! least-squares polynomial. The polynomial is frozen inside a
//! [`ForcingModel`], which evaluates the forcing terms of the reduced model.

use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{self, DerivedParameters, ParameterSet, SubjectBaseline};

/// Minimum spacing between accepted beat maxima (240 bpm).
pub const MIN_PEAK_SEPARATION: f64 = 0.25;
pub const SMOOTHING_WINDOW: f64 = 1.0;
pub const DEFAULT_PRE_EXTENSION: f64 = 30.0;
pub const DEFAULT_POST_EXTENSION: f64 = 60.0;
pub const SURROGATE_DEGREE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("found {0} beat maxima, need at least 2")]
    TooFewMaxima(usize),
    #[error("polynomial fit failed: {0}")]
    Fit(String),
    #[error("t = {t} is outside the forcing span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Sampled pressure (mmHg) on a strictly increasing time grid (s).
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSeries {
    t: Vec<f64>,
    p: Vec<f64>,
}

impl PressureSeries {
    pub fn new(t: Vec<f64>, p: Vec<f64>) -> Result<Self, SignalError> {
        if t.len() != p.len() {
            return Err(SignalError::InvalidSeries("time and pressure lengths differ".into()));
        }
        if t.is_empty() {
            return Err(SignalError::InvalidSeries("empty series".into()));
        }
        if t.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidSeries("non-finite sample".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SignalError::InvalidSeries("time must be strictly increasing".into()));
        }
        Ok(PressureSeries { t, p })
    }

    /// Samples `f` on `[from, to]` with spacing `dt`.
    pub fn sample(from: f64, to: f64, dt: f64, f: impl Fn(f64) -> f64) -> Result<Self, SignalError> {
        if !(dt > 0.0 && to > from) {
            return Err(SignalError::InvalidSeries("need dt > 0 and to > from".into()));
        }
        let n = ((to - from) / dt + 1e-9).floor() as usize + 1;
        let t: Vec<f64> = (0..n).map(|k| from + k as f64 * dt).collect();
        let p = t.iter().map(|&s| f(s)).collect();
        Self::new(t, p)
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t[0], *self.t.last().unwrap())
    }

    /// Reads two-column `t,P` CSV; a non-numeric first line is taken as header.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, SignalError> {
        let mut t = Vec::new();
        let mut p = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SignalError::Parse { line: i + 1, message: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 2 => {
                    t.push(v[0]);
                    p.push(v[1]);
                }
                Err(_) if i == 0 => continue,
                _ => {
                    return Err(SignalError::Parse { line: i + 1, message: format!("expected two numbers, got `{line}`") })
                }
            }
        }
        Self::new(t, p)
    }

    /// Linear interpolation, holding the end values outside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        linear_hold(&self.t, &self.p, t)
    }
}

fn linear_hold(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return vs[0];
    }
    let last = ts.len() - 1;
    if t >= ts[last] {
        return vs[last];
    }
    let k = ts.partition_point(|&s| s <= t) - 1;
    let u = (t - ts[k]) / (ts[k + 1] - ts[k]);
    vs[k] + u * (vs[k + 1] - vs[k])
}

/// Systolic envelope: strict three-point maxima, thinned to at least
/// [`MIN_PEAK_SEPARATION`] apart (taller peaks win), linearly interpolated on
/// the input grid and held constant before the first and after the last peak.
pub fn extract_sbp(raw: &PressureSeries) -> Result<PressureSeries, SignalError> {
    let (t, p) = (&raw.t, &raw.p);
    let mut candidates: Vec<usize> = (1..p.len().saturating_sub(1))
        .filter(|&i| p[i] > p[i - 1] && p[i] > p[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        if kept.iter().all(|&k| (t[k] - t[c]).abs() >= MIN_PEAK_SEPARATION) {
            kept.push(c);
        }
    }
    if kept.len() < 2 {
        return Err(SignalError::TooFewMaxima(kept.len()));
    }
    kept.sort_unstable();
    let pt: Vec<f64> = kept.iter().map(|&k| t[k]).collect();
    let pv: Vec<f64> = kept.iter().map(|&k| p[k]).collect();
    let sbp = t.iter().map(|&s| linear_hold(&pt, &pv, s)).collect();
    PressureSeries::new(t.clone(), sbp)
}

/// Centred moving average over `window` seconds. Near the ends the window is
/// clipped to the record, so it holds fewer samples there.
pub fn moving_mean(s: &PressureSeries, window: f64) -> PressureSeries {
    assert!(window > 0.0, "window must be positive");
    let (t0, t1) = s.span();
    let mut prefix = Vec::with_capacity(s.len() + 1);
    prefix.push(0.0);
    for v in &s.p {
        prefix.push(prefix.last().unwrap() + v);
    }
    let eps = 1e-12 * (t1 - t0).abs().max(1.0);
    let half = 0.5 * window;
    let p = s
        .t
        .iter()
        .map(|&t| {
            let lo = s.t.partition_point(|&u| u < t - half - eps);
            let hi = s.t.partition_point(|&u| u <= t + half + eps);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    PressureSeries { t: s.t.clone(), p }
}

/// Prepends the first value for `pre` seconds and appends the last value for
/// `post` seconds, at the mean sample spacing of the input.
pub fn extend_baseline(s: &PressureSeries, pre: f64, post: f64) -> PressureSeries {
    assert!(pre >= 0.0 && post >= 0.0, "extensions must be non-negative");
    if s.len() < 2 {
        return s.clone();
    }
    let (t0, t1) = s.span();
    let dt = (t1 - t0) / (s.len() - 1) as f64;
    let n_pre = (pre / dt).round() as usize;
    let n_post = (post / dt).round() as usize;
    let mut t = Vec::with_capacity(s.len() + n_pre + n_post);
    let mut p = Vec::with_capacity(t.capacity());
    for k in (1..=n_pre).rev() {
        t.push(t0 - k as f64 * dt);
        p.push(s.p[0]);
    }
    t.extend_from_slice(&s.t);
    p.extend_from_slice(&s.p);
    let last = *s.p.last().unwrap();
    for k in 1..=n_post {
        t.push(t1 + k as f64 * dt);
        p.push(last);
    }
    PressureSeries { t, p }
}

/// Affine map `x = scale * t + shift` taking the fitted span onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub scale: f64,
    pub shift: f64,
}

impl TimeMap {
    pub fn onto_unit(t_min: f64, t_max: f64) -> Self {
        let scale = 2.0 / (t_max - t_min);
        TimeMap { scale, shift: -(t_max + t_min) / (t_max - t_min) }
    }

    pub fn apply(&self, t: f64) -> f64 {
        self.scale * t + self.shift
    }
}

/// Polynomial in the rescaled time variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub coeffs: Vec<f64>,
    pub t_map: TimeMap,
}

impl PolynomialFit {
    pub fn eval(&self, t: f64) -> f64 {
        let x = self.t_map.apply(t);
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Time derivative.
    pub fn eval_derivative(&self, t: f64) -> f64 {
        let x = self.t_map.apply(t);
        let dpdx = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c);
        dpdx * self.t_map.scale
    }
}

/// Least-squares polynomial of the given degree, fitted in time rescaled to `[-1, 1]`.
pub fn fit_polynomial(s: &PressureSeries, degree: usize) -> Result<PolynomialFit, SignalError> {
    let m = s.len();
    if m < degree + 1 {
        return Err(SignalError::Fit(format!("{m} samples cannot determine a degree-{degree} polynomial")));
    }
    let (t0, t1) = s.span();
    if !(t1 > t0) {
        return Err(SignalError::Fit("all samples share one time".into()));
    }
    let t_map = TimeMap::onto_unit(t0, t1);
    let design = DMatrix::from_fn(m, degree + 1, |i, k| t_map.apply(s.t[i]).powi(k as i32));
    let rhs = DVector::from_column_slice(&s.p);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(SignalError::Fit("rank-deficient design".into()));
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|e| SignalError::Fit(e.to_string()))?;
    Ok(PolynomialFit { coeffs: sol.iter().copied().collect(), t_map })
}

/// Frozen SBP surrogate plus the parameters that turn it into the forcing of
/// the reduced model.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingModel {
    pub surrogate: PolynomialFit,
    pub span: (f64, f64),
    /// Part of the span covered by recorded data rather than the flat extensions.
    pub record: (f64, f64),
    pub baseline: SubjectBaseline,
    pub params: ParameterSet,
}

/// JSON layout of a persisted [`ForcingModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingFile {
    pub coeffs: Vec<f64>,
    pub t_map: TimeMap,
    pub span: [f64; 2],
    pub baseline: SubjectBaseline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedFile {
    pub s_p: f64,
    pub s_s: f64,
    #[serde(rename = "H_p")]
    pub h_p: f64,
    #[serde(rename = "H_s")]
    pub h_s: f64,
}

impl From<DerivedParameters> for DerivedFile {
    fn from(d: DerivedParameters) -> Self {
        DerivedFile { s_p: d.s_p, s_s: d.s_s, h_p: d.h_p, h_s: d.h_s }
    }
}

impl ForcingModel {
    /// Fits the degree-10 surrogate to an already preprocessed series.
    pub fn fit(series: &PressureSeries, baseline: SubjectBaseline, params: ParameterSet) -> Result<Self, SignalError> {
        let surrogate = fit_polynomial(series, SURROGATE_DEGREE)?;
        Ok(ForcingModel { surrogate, span: series.span(), record: series.span(), baseline, params })
    }

    /// A surrogate that is identically `level` on `span`.
    pub fn constant(level: f64, span: (f64, f64), baseline: SubjectBaseline, params: ParameterSet) -> Self {
        let mut coeffs = vec![0.0; SURROGATE_DEGREE + 1];
        coeffs[0] = level;
        ForcingModel {
            surrogate: PolynomialFit { coeffs, t_map: TimeMap::onto_unit(span.0, span.1) },
            span,
            record: span,
            baseline,
            params,
        }
    }

    pub fn with_params(&self, params: ParameterSet) -> Self {
        ForcingModel { params, ..self.clone() }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.span.0 && t <= self.span.1
    }

    fn check(&self, t: f64) -> Result<(), SignalError> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(SignalError::OutOfSpan { t, start: self.span.0, end: self.span.1 })
        }
    }

    pub fn sbp(&self, t: f64) -> Result<f64, SignalError> {
        self.check(t)?;
        Ok(self.surrogate.eval(t))
    }

    /// Aortic pressure: surrogate minus thoracic pressure.
    pub fn aortic_pressure(&self, t: f64, p: &ParameterSet) -> f64 {
        self.surrogate.eval(t) - models::thoracic_pressure(t, p)
    }

    /// Sympathetic forcing `f(t)` (1/s).
    pub fn forcing_f(&self, t: f64) -> Result<f64, SignalError> {
        self.check(t)?;
        Ok(self.terms_unchecked(t, &self.params).0)
    }

    /// Heart-rate forcing `g(t)` (bpm/s).
    pub fn forcing_g(&self, t: f64) -> Result<f64, SignalError> {
        self.check(t)?;
        Ok(self.terms_unchecked(t, &self.params).1)
    }

    /// `(f, g)` at `t` for parameters `p`, without the span check.
    pub fn terms_unchecked(&self, t: f64, p: &ParameterSet) -> (f64, f64) {
        models::forcing_terms(self.aortic_pressure(t, p), p)
    }

    /// Diagnostics about the surrogate, such as non-positive pressure on the span.
    pub fn warnings(&self) -> Vec<String> {
        let (a, b) = self.span;
        let n = 2000;
        let min = (0..=n)
            .map(|k| self.surrogate.eval(a + (b - a) * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            vec![format!("surrogate pressure reaches {min:.3} mmHg on its span")]
        } else {
            Vec::new()
        }
    }

    pub fn to_file(&self) -> ForcingFile {
        let derived = models::derive_parameters(&self.baseline, &self.params).ok().map(DerivedFile::from);
        ForcingFile {
            coeffs: self.surrogate.coeffs.clone(),
            t_map: self.surrogate.t_map,
            span: [self.span.0, self.span.1],
            baseline: self.baseline,
            record: Some([self.record.0, self.record.1]),
            derived,
        }
    }

    /// Rebuilds a model from its file form; `params` supplies everything the
    /// file does not store.
    pub fn from_file(file: &ForcingFile, params: ParameterSet) -> Result<Self, SignalError> {
        if file.coeffs.len() != SURROGATE_DEGREE + 1 {
            return Err(SignalError::Fit(format!("expected {} coefficients, got {}", SURROGATE_DEGREE + 1, file.coeffs.len())));
        }
        if !(file.span[1] > file.span[0]) || file.coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SignalError::Fit("invalid span or coefficients".into()));
        }
        let span = (file.span[0], file.span[1]);
        let record = file.record.map_or(span, |r| (r[0].max(span.0), r[1].min(span.1)));
        Ok(ForcingModel {
            surrogate: PolynomialFit { coeffs: file.coeffs.clone(), t_map: file.t_map },
            span,
            record,
            baseline: file.baseline,
            params,
        })
    }

    /// `t,sbp,f,g` trace on a uniform grid.
    pub fn write_trace<W: std::io::Write>(&self, mut w: W, dt: f64) -> std::io::Result<()> {
        writeln!(w, "t,sbp,f,g")?;
        let (a, b) = self.span;
        let n = ((b - a) / dt + 1e-9).floor() as usize;
        for k in 0..=n {
            let t = (a + k as f64 * dt).min(b);
            let (f, g) = self.terms_unchecked(t, &self.params);
            writeln!(w, "{t:.16e},{:.16e},{f:.16e},{g:.16e}", self.surrogate.eval(t))?;
        }
        Ok(())
    }
}

/// Processed series and the forcing model fitted to it.
pub struct Ingested {
    pub sbp: PressureSeries,
    pub smoothed: PressureSeries,
    pub extended: PressureSeries,
    pub forcing: ForcingModel,
}

/// Full preprocessing of a raw pulsatile pressure record.
pub fn ingest(
    raw: &PressureSeries,
    baseline: SubjectBaseline,
    params: ParameterSet,
    pre: f64,
    post: f64,
) -> Result<Ingested, SignalError> {
    let sbp = extract_sbp(raw)?;
    prepare_envelope(sbp, baseline, params, pre, post)
}

/// Preprocessing for a series that already is a systolic envelope.
pub fn prepare_envelope(
    sbp: PressureSeries,
    baseline: SubjectBaseline,
    params: ParameterSet,
    pre: f64,
    post: f64,
) -> Result<Ingested, SignalError> {
    let smoothed = moving_mean(&sbp, SMOOTHING_WINDOW);
    let extended = extend_baseline(&smoothed, pre, post);
    let mut forcing = ForcingModel::fit(&extended, baseline, params)?;
    forcing.record = smoothed.span();
    Ok(Ingested { sbp, smoothed, extended, forcing })
}

/// Amplitudes (mmHg) of the synthetic maneuver; all zero gives a flat record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VmProfile {
    /// Phase I rise at the start of the strain.
    pub rise: f64,
    /// Early phase II fall below baseline; recovery in late phase II follows.
    pub drop: f64,
    /// Phase III dip right after release.
    pub dip: f64,
    /// Phase IV overshoot above baseline.
    pub overshoot: f64,
}

impl Default for VmProfile {
    fn default() -> Self {
        VmProfile { rise: 6.0, drop: 20.0, dip: 6.0, overshoot: 18.0 }
    }
}

impl VmProfile {
    pub fn flat() -> Self {
        VmProfile { rise: 0.0, drop: 0.0, dip: 0.0, overshoot: 0.0 }
    }
}

/// `cos²` bump of half-width `w` centred at `c`; C¹ with compact support.
fn bump(t: f64, c: f64, w: f64) -> f64 {
    let u = (t - c) / w;
    if u.abs() < 1.0 {
        let v = (std::f64::consts::FRAC_PI_2 * u).cos();
        v * v
    } else {
        0.0
    }
}

/// Systolic pressure of a synthetic maneuver at time `t`.
pub fn synth_vm_value(t: f64, p_bar: f64, t_s: f64, t_e: f64, profile: &VmProfile) -> f64 {
    let hold = t_e - t_s;
    p_bar + profile.rise * bump(t, t_s + 1.0, 4.0) - profile.drop * bump(t, t_s + 0.4 * hold, 10.0)
        - profile.dip * bump(t, t_e + 1.5, 4.0)
        + profile.overshoot * bump(t, t_e + 8.0, 12.0)
}

/// Synthetic systolic record on `[0, t_e + 30]` sampled every `dt` seconds.
pub fn synth_vm(base: &SubjectBaseline, t_s: f64, t_e: f64, profile: &VmProfile, dt: f64) -> Result<PressureSeries, SignalError> {
    if !(t_e > t_s) {
        return Err(SignalError::InvalidSeries("t_e must exceed t_s".into()));
    }
    PressureSeries::sample(0.0, t_e + 30.0, dt, |t| synth_vm_value(t, base.p_bar, t_s, t_e, profile))
}

/// Pulsatile pressure whose beat maxima follow [`synth_vm_value`]; used to
/// exercise the full ingestion path.
pub fn synth_pulsatile(
    base: &SubjectBaseline,
    t_s: f64,
    t_e: f64,
    profile: &VmProfile,
    heart_rate_bpm: f64,
    dt: f64,
) -> Result<PressureSeries, SignalError> {
    let pulse = 40.0;
    let f = heart_rate_bpm / 60.0;
    PressureSeries::sample(0.0, t_e + 30.0, dt, |t| {
        let env = synth_vm_value(t, base.p_bar, t_s, t_e, profile);
        let phase = (2.0 * std::f64::consts::PI * f * t).sin();
        env - pulse * 0.5 * (1.0 - phase)
    })
}
