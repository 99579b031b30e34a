//! Region maps over the `(D_s, τ_s)` plane.
//!
//! Every cell integrates the reduced model with the cell's delay and time
//! constant and classifies `T_s`. Cells are independent and evaluated on a
//! dedicated thread pool; results come back in grid order, so the map does not
//! depend on the worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytic::{self, RegionClass};
use crate::classifier::{self, BehaviorClass, ClassifierConfig, ClassifyError};
use crate::dde::{SolveError, SolverConfig};
use crate::models::{self, reduced_index, ParameterSet};
use crate::signal::ForcingModel;
use crate::simulate::{self, HomogeneousSetup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("cell (D_s = {d_s}, tau_s = {tau_s}): {message}")]
    Cell { d_s: f64, tau_s: f64, message: String },
}

/// Evenly spaced values `lo, ..., hi`; a single point when `n == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn points(lo: f64, hi: f64, n: usize) -> Result<Self, SweepError> {
        let a = Axis { lo, hi, n };
        a.validate()?;
        Ok(a)
    }

    /// Axis from `lo` to `hi` with spacing close to `step`: `hi - lo` must be
    /// within 1% of a step of a whole number of steps, and the points are
    /// spread evenly over exactly `[lo, hi]`.
    pub fn by_step(lo: f64, hi: f64, step: f64) -> Result<Self, SweepError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(SweepError::Grid(format!("step must be positive, got {step}")));
        }
        if !(hi > lo) {
            return Err(SweepError::Grid(format!("need hi > lo, got {lo}..{hi}")));
        }
        if lo < step {
            return Err(SweepError::Grid(format!("lower bound {lo} is below the step {step}")));
        }
        let cells = (hi - lo) / step;
        if (cells - cells.round()).abs() > 1e-2 {
            return Err(SweepError::Grid(format!("{lo}..{hi} is not a whole number of steps {step}")));
        }
        Self::points(lo, hi, cells.round() as usize + 1)
    }

    pub fn single(v: f64) -> Result<Self, SweepError> {
        Self::points(v, v, 1)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.lo > 0.0 && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(SweepError::Grid("axis bounds must be positive and finite".into()));
        }
        match self.n {
            0 => Err(SweepError::Grid("axis needs at least one point".into())),
            1 if self.hi != self.lo => Err(SweepError::Grid("a single-point axis needs lo == hi".into())),
            n if n > 1 && !(self.hi > self.lo) => Err(SweepError::Grid("need hi > lo".into())),
            _ => Ok(()),
        }
    }

    pub fn step(&self) -> f64 {
        if self.n > 1 {
            (self.hi - self.lo) / (self.n - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.value(i)).collect()
    }
}

impl FromStr for Axis {
    type Err = SweepError;

    /// `lo:hi:step` or a single value.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| SweepError::Grid(format!("bad number `{t}`")));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [v] => Axis::single(num(v)?),
            [lo, hi, step] => Axis::by_step(num(lo)?, num(hi)?, num(step)?),
            _ => Err(SweepError::Grid(format!("expected `lo:hi:step` or a value, got `{s}`"))),
        }
    }
}

/// Grid over delay (columns) and time constant (rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: Axis,
    pub tau: Axis,
}

impl GridSpec {
    /// `n × n` points on `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self, SweepError> {
        Ok(GridSpec { d: Axis::points(lo, hi, n)?, tau: Axis::points(lo, hi, n)? })
    }

    pub fn cells(&self) -> usize {
        self.d.n * self.tau.n
    }

    /// Flat index of cell `(i, j)`: column `i` in `D_s`, row `j` in `τ_s`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.tau.n + j
    }

    pub fn coords(&self, k: usize) -> (f64, f64) {
        (self.d.value(k / self.tau.n), self.tau.value(k % self.tau.n))
    }
}

impl FromStr for GridSpec {
    type Err = SweepError;

    /// `<D axis> x <tau axis>`, each axis as accepted by [`Axis::from_str`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (d, tau) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| SweepError::Grid(format!("expected `<D axis> x <tau axis>`, got `{s}`")))?;
        Ok(GridSpec { d: d.trim().parse()?, tau: tau.trim().parse()? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    Homogeneous,
    Nonhomogeneous,
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Homogeneous => "homogeneous",
            SweepMode::Nonhomogeneous => "nonhomogeneous",
        })
    }
}

/// What drives each cell.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)] // built once per sweep
pub enum SweepInput {
    Homogeneous(HomogeneousSetup),
    Forced(ForcingModel),
}

impl SweepInput {
    pub fn mode(&self) -> SweepMode {
        match self {
            SweepInput::Homogeneous(_) => SweepMode::Homogeneous,
            SweepInput::Forced(_) => SweepMode::Nonhomogeneous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub classifier: ClassifierConfig,
    pub solver: SolverConfig,
    pub workers: usize,
}

impl SweepConfig {
    /// Homogeneous runs have no maneuver, so the window starts at zero.
    pub fn homogeneous() -> Self {
        SweepConfig {
            classifier: ClassifierConfig { t_cut: 0.0, ..Default::default() },
            solver: simulate::homogeneous_solver(),
            workers: 1,
        }
    }

    /// Forced runs are classified over the recovery: from two seconds after
    /// the strain ends to the end of the recorded data. The flat extensions
    /// only stabilise the fit, and the surrogate ripples there.
    pub fn forced(fm: &ForcingModel) -> Self {
        let mut classifier = ClassifierConfig::after_strain(fm.params.t_e);
        if fm.record.1 > classifier.t_cut {
            classifier.t_stop = Some(fm.record.1);
        }
        SweepConfig { classifier, solver: simulate::forced_solver(), workers: 1 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Perturbation and horizon of the homogeneous sweep. The perturbation is far
/// above the amplitude floor so that foci close to the transcritical line,
/// which decay by many orders of magnitude per oscillation, remain visible;
/// the horizon grows with the delay so that their slow oscillations complete.
pub fn homogeneous_sweep_setup() -> HomogeneousSetup {
    HomogeneousSetup { perturbation: 1e8, horizon: 120.0, horizon_per_delay: 80.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// Stopped by the divergence guard.
    Diverged,
    /// The integrator failed; the cell is recorded as unstable.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the grid, mode, forcing and every configuration value.
    pub config_hash: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub grid: GridSpec,
    pub mode: SweepMode,
    /// Cell classes in [`GridSpec::index`] order.
    pub classes: Vec<RegionClass>,
    pub status: Vec<CellStatus>,
    pub provenance: Provenance,
}

impl RegionMap {
    /// Map filled from the analytic classification.
    pub fn analytic(grid: GridSpec) -> Self {
        let classes = (0..grid.cells())
            .map(|k| {
                let (d, tau) = grid.coords(k);
                analytic::classify_homogeneous(d, tau, analytic::BOUNDARY_TOL)
            })
            .collect();
        RegionMap {
            grid,
            mode: SweepMode::Homogeneous,
            classes,
            status: vec![CellStatus::Ok; grid.cells()],
            provenance: Provenance { config_hash: config_hash(&format!("analytic {grid:?}")), created_unix: now() },
        }
    }

    pub fn class(&self, i: usize, j: usize) -> RegionClass {
        self.classes[self.grid.index(i, j)]
    }

    /// Classes of column `i`, by increasing `τ_s`.
    pub fn column(&self, i: usize) -> &[RegionClass] {
        let n = self.grid.tau.n;
        &self.classes[i * n..(i + 1) * n]
    }

    /// `D_s,tau_s,class_code`, one row per cell in grid order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "D_s,tau_s,class_code")?;
        for (k, c) in self.classes.iter().enumerate() {
            let (d, tau) = self.grid.coords(k);
            writeln!(w, "{d},{tau},{}", c.code())?;
        }
        Ok(())
    }

    /// Plain graymap: one pixel per cell, `D_s` to the right, `τ_s` upwards,
    /// gray level `code * 255 / 4`.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let (nd, nt) = (self.grid.d.n, self.grid.tau.n);
        writeln!(w, "P2")?;
        writeln!(w, "{nd} {nt}")?;
        writeln!(w, "255")?;
        for j in (0..nt).rev() {
            let mut line = String::new();
            for i in 0..nd {
                let px = (self.class(i, j).code() as u32 * 255 / 4).to_string();
                if !line.is_empty() && line.len() + 1 + px.len() > 70 {
                    writeln!(w, "{line}")?;
                    line.clear();
                }
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(&px);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn failed_cells(&self) -> usize {
        self.status.iter().filter(|s| **s == CellStatus::Failed).count()
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn sweep_hash(grid: &GridSpec, p: &ParameterSet, input: &SweepInput, cfg: &SweepConfig) -> String {
    // Debug output of f64 round-trips, so this is a faithful fingerprint
    let input = match input {
        SweepInput::Homogeneous(s) => format!("{s:?}"),
        SweepInput::Forced(fm) => format!("{:?} {:?} {:?}", fm.surrogate, fm.span, fm.baseline),
    };
    config_hash(&format!("{grid:?}|{p:?}|{input}|{:?}|{:?}", cfg.classifier, cfg.solver))
}

/// Classifies one `(D_s, τ_s)` point.
pub fn classify_cell(
    d_s: f64,
    tau_s: f64,
    params: &ParameterSet,
    input: &SweepInput,
    cfg: &SweepConfig,
) -> Result<(RegionClass, CellStatus), SweepError> {
    let cell_err = |message: String| SweepError::Cell { d_s, tau_s, message };
    let mut p = *params;
    p.d_s = d_s;
    p.tau_s = tau_s;
    // stop integrating once the states are far beyond the divergence guard
    let mut solver = cfg.solver.clone();
    let scale = match input {
        SweepInput::Homogeneous(setup) => setup.perturbation.abs(),
        SweepInput::Forced(fm) => {
            let (f, g) = fm.terms_unchecked(fm.span.0, &p);
            models::reduced_equilibrium(f, g, &p).iter().fold(1.0f64, |m, v| m.max(v.abs()))
        }
    };
    solver.divergence_limit.get_or_insert(cfg.classifier.divergence_factor * scale);
    let traj = match input {
        SweepInput::Homogeneous(setup) => simulate::homogeneous(&p, setup, &solver),
        SweepInput::Forced(fm) => simulate::reduced_forced(&p, fm, &solver),
    };
    let traj = match traj {
        Ok(t) => t,
        Err(SolveError::Diverged { .. }) => return Ok((RegionClass::Unstable, CellStatus::Diverged)),
        Err(e @ (SolveError::InvalidInput(_) | SolveError::OutOfRange { .. })) => return Err(cell_err(e.to_string())),
        Err(_) => return Ok((RegionClass::Unstable, CellStatus::Failed)),
    };
    let c = classifier::classify_trajectory(&traj, reduced_index::T_S, &cfg.classifier)
        .map_err(|e: ClassifyError| cell_err(e.to_string()))?;
    let status = if c.diverged { CellStatus::Diverged } else { CellStatus::Ok };
    let region = match (c.class, input) {
        (BehaviorClass::Sink, SweepInput::Homogeneous(_)) => {
            let exact = analytic::classify_homogeneous(d_s, tau_s, analytic::BOUNDARY_TOL);
            if exact.is_sink() {
                exact
            } else {
                RegionClass::OverdampedSink
            }
        }
        (class, _) => class.region(),
    };
    Ok((region, status))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, SweepError> {
    if workers == 0 {
        return Err(SweepError::Config("worker count must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SweepError::Config(format!("cannot start worker pool: {e}")))
}

fn classify_points(
    points: &[(f64, f64)],
    params: &ParameterSet,
    input: &SweepInput,
    cfg: &SweepConfig,
) -> Result<Vec<(RegionClass, CellStatus)>, SweepError> {
    pool(cfg.workers)?.install(|| {
        points.par_iter().map(|&(d, tau)| classify_cell(d, tau, params, input, cfg)).collect()
    })
}

/// Evaluates every grid cell with `cfg.workers` threads.
pub fn run_sweep(
    grid: &GridSpec,
    params: &ParameterSet,
    input: &SweepInput,
    cfg: &SweepConfig,
) -> Result<RegionMap, SweepError> {
    grid.d.validate()?;
    grid.tau.validate()?;
    cfg.classifier.validate().map_err(|e| SweepError::Config(e.to_string()))?;
    cfg.solver.validate(2).map_err(|e| SweepError::Config(e.to_string()))?;
    let points: Vec<(f64, f64)> = (0..grid.cells()).map(|k| grid.coords(k)).collect();
    let results = classify_points(&points, params, input, cfg)?;
    let (classes, status) = results.into_iter().unzip();
    Ok(RegionMap {
        grid: *grid,
        mode: input.mode(),
        classes,
        status,
        provenance: Provenance { config_hash: sweep_hash(grid, params, input, cfg), created_unix: now() },
    })
}

/// Signed boundary offset of one column, in `τ_s` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnDeviation {
    pub d_s: f64,
    pub deviation: i64,
}

/// Agreement of one numeric boundary with an analytic line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    /// Columns in which the line crosses the grid.
    pub columns: Vec<ColumnDeviation>,
    /// Columns in which the line lies outside the `τ_s` range.
    pub uncovered: usize,
    pub mean_abs: f64,
    pub mean_signed: f64,
    pub max_abs: i64,
    pub within_one: f64,
}

impl LineReport {
    fn new(columns: Vec<ColumnDeviation>, uncovered: usize) -> Self {
        let n = columns.len().max(1) as f64;
        let abs = || columns.iter().map(|c| c.deviation.abs());
        LineReport {
            mean_abs: abs().sum::<i64>() as f64 / n,
            mean_signed: columns.iter().map(|c| c.deviation).sum::<i64>() as f64 / n,
            max_abs: abs().max().unwrap_or(0),
            within_one: if columns.is_empty() { 1.0 } else { abs().filter(|&d| d <= 1).count() as f64 / n },
            uncovered,
            columns,
        }
    }
}

/// Numeric boundaries against the two analytic lines.
///
/// For the transcritical line the deviation of a column is the number of
/// numeric sink cells minus the number of analytic sink cells, so a positive
/// value means the sink region is larger than predicted. For the Hopf line it
/// is the same count for cells at or beyond the limit cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub transcritical: LineReport,
    pub hopf: LineReport,
    pub notes: Vec<String>,
}

pub fn compare_maps(map: &RegionMap) -> BoundaryReport {
    let grid = &map.grid;
    let mut trans = Vec::new();
    let mut hopf = Vec::new();
    let (mut trans_out, mut hopf_out) = (0, 0);
    for i in 0..grid.d.n {
        let d = grid.d.value(i);
        let exact: Vec<RegionClass> = grid
            .tau
            .values()
            .into_iter()
            .map(|tau| analytic::classify_homogeneous(d, tau, analytic::BOUNDARY_TOL))
            .collect();
        let numeric = map.column(i);
        let count = |v: &[RegionClass], pred: fn(&RegionClass) -> bool| v.iter().filter(|c| pred(c)).count() as i64;
        let sink = |c: &RegionClass| c.is_sink();
        let unstable = |c: &RegionClass| c.rank() >= 2;
        let crosses = |pred: fn(&RegionClass) -> bool| {
            let k = count(&exact, pred);
            k > 0 && k < exact.len() as i64
        };
        if crosses(sink) {
            trans.push(ColumnDeviation { d_s: d, deviation: count(numeric, sink) - count(&exact, sink) });
        } else {
            trans_out += 1;
        }
        if crosses(unstable) {
            hopf.push(ColumnDeviation { d_s: d, deviation: count(numeric, unstable) - count(&exact, unstable) });
        } else {
            hopf_out += 1;
        }
    }
    let mut notes = Vec::new();
    if trans_out > 0 {
        notes.push(format!("transcritical line outside the grid in {trans_out} of {} columns", grid.d.n));
    }
    if hopf_out > 0 {
        notes.push(format!("Hopf line outside the grid in {hopf_out} of {} columns", grid.d.n));
    }
    BoundaryReport { transcritical: LineReport::new(trans, trans_out), hopf: LineReport::new(hopf, hopf_out), notes }
}

/// Cells `(i, j)` where the class rank increases from row `j` to the larger
/// time constant in row `j + 1`, i.e. where decreasing `τ_s` steps backwards
/// through sink, focus, limit cycle, unstable.
pub fn monotone_violations(map: &RegionMap) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..map.grid.d.n {
        let col = map.column(i);
        for j in 0..col.len().saturating_sub(1) {
            if col[j + 1].rank() > col[j].rank() {
                out.push((i, j));
            }
        }
    }
    out
}

/// A class change located on a finer `τ_s` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedTransition {
    pub d_s: f64,
    /// Coarse rows between which the class changed.
    pub coarse: (f64, f64),
    /// Midpoints of the fine intervals where the class changes.
    pub tau_s: Vec<f64>,
}

/// Re-evaluates a three-cell band around every class change of every column
/// at `factor` times the resolution.
pub fn refine_boundaries(
    map: &RegionMap,
    params: &ParameterSet,
    input: &SweepInput,
    cfg: &SweepConfig,
    factor: usize,
) -> Result<Vec<RefinedTransition>, SweepError> {
    if factor < 2 {
        return Err(SweepError::Config("refinement factor must be at least 2".into()));
    }
    let grid = &map.grid;
    let mut bands = Vec::new();
    for i in 0..grid.d.n {
        let col = map.column(i);
        for j in 0..col.len().saturating_sub(1) {
            if col[j].rank() != col[j + 1].rank() {
                let lo = grid.tau.value(j.saturating_sub(1));
                let hi = grid.tau.value((j + 2).min(grid.tau.n - 1));
                bands.push((i, j, lo, hi));
            }
        }
    }
    let mut points = Vec::new();
    let mut offsets = Vec::new();
    for &(i, _, lo, hi) in &bands {
        let n = factor * ((hi - lo) / grid.tau.step()).round().max(1.0) as usize;
        offsets.push((points.len(), n + 1));
        points.extend((0..=n).map(|k| (grid.d.value(i), lo + (hi - lo) * k as f64 / n as f64)));
    }
    let classes = classify_points(&points, params, input, cfg)?;
    Ok(bands
        .iter()
        .zip(offsets)
        .map(|(&(i, j, _, _), (start, len))| {
            let pts = &points[start..start + len];
            let cls = &classes[start..start + len];
            let tau_s = (0..len - 1)
                .filter(|&k| cls[k].0.rank() != cls[k + 1].0.rank())
                .map(|k| 0.5 * (pts[k].1 + pts[k + 1].1))
                .collect();
            RefinedTransition { d_s: grid.d.value(i), coarse: (grid.tau.value(j), grid.tau.value(j + 1)), tau_s }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn axis_parsing() {
        let a: Axis = "0.1:10:0.04975".parse().unwrap();
        assert_eq!(a.n, 200);
        assert_eq!(a.value(199), 10.0);
        assert!((a.value(1) - (0.1 + 9.9 / 199.0)).abs() < 1e-14);
        assert_eq!("2.5".parse::<Axis>().unwrap(), Axis { lo: 2.5, hi: 2.5, n: 1 });
        assert!("0.01:1:0.1".parse::<Axis>().is_err());
        assert!("1:0.5:0.1".parse::<Axis>().is_err());
        assert!("1:2".parse::<Axis>().is_err());
        assert!("1:2:0.3".parse::<Axis>().is_err());
        let g: GridSpec = "1:2:0.5 x 3".parse().unwrap();
        assert_eq!((g.d.n, g.tau.n), (3, 1));
        assert_eq!(g.coords(g.index(2, 0)), (2.0, 3.0));
    }

    #[test]
    fn analytic_map_has_zero_deviation() {
        let grid = GridSpec::square(0.1, 10.0, 40).unwrap();
        let map = RegionMap::analytic(grid);
        let r = compare_maps(&map);
        assert!(r.transcritical.columns.iter().chain(&r.hopf.columns).all(|c| c.deviation == 0));
        assert_eq!(r.transcritical.within_one, 1.0);
        assert!(!r.transcritical.columns.is_empty() && !r.hopf.columns.is_empty());
        assert!(r.transcritical.uncovered > 0);
        assert!(monotone_violations(&map).is_empty());
    }

    #[test]
    fn deviations_are_signed_cell_counts() {
        let grid = GridSpec::square(0.1, 10.0, 40).unwrap();
        let mut map = RegionMap::analytic(grid);
        // widen the sink by one cell in the first column
        let col = map.column(0).to_vec();
        let j = col.iter().position(|c| c.is_sink()).unwrap();
        let k = grid.index(0, j - 1);
        map.classes[k] = RegionClass::OverdampedSink;
        let r = compare_maps(&map);
        assert_eq!(r.transcritical.columns[0].deviation, 1);
        assert_eq!(r.transcritical.max_abs, 1);
        map.classes[grid.index(0, j)] = RegionClass::Unstable;
        assert!(!monotone_violations(&map).is_empty());
    }

    #[test]
    fn single_cell_sink() {
        let grid: GridSpec = format!("1 x {}", 2.0 * E).parse().unwrap();
        let p = ParameterSet::nominal(120.0);
        let input = SweepInput::Homogeneous(HomogeneousSetup::default());
        let map = run_sweep(&grid, &p, &input, &SweepConfig::homogeneous()).unwrap();
        assert_eq!(map.classes, vec![RegionClass::OverdampedSink]);
        assert_eq!(map.status, vec![CellStatus::Ok]);
        assert_eq!(map.provenance.config_hash.len(), 64);
    }

    #[test]
    fn worker_count_does_not_change_the_map() {
        let grid: GridSpec = "0.5:2.5:0.5 x 0.5:3.5:0.5".parse().unwrap();
        let p = ParameterSet::nominal(120.0);
        let input = SweepInput::Homogeneous(HomogeneousSetup::default());
        let serial = run_sweep(&grid, &p, &input, &SweepConfig::homogeneous()).unwrap();
        let parallel = run_sweep(&grid, &p, &input, &SweepConfig::homogeneous().with_workers(3)).unwrap();
        assert_eq!(serial.classes, parallel.classes);
        assert_eq!(serial.provenance.config_hash, parallel.provenance.config_hash);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        serial.write_csv(&mut a).unwrap();
        parallel.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pgm_layout() {
        let grid: GridSpec = "1:2:1 x 0.5:1.5:0.5".parse().unwrap();
        let mut map = RegionMap::analytic(grid);
        map.classes = vec![
            RegionClass::Unstable,
            RegionClass::StableFocus,
            RegionClass::OverdampedSink,
            RegionClass::LimitCycle,
            RegionClass::CriticallyDampedSink,
            RegionClass::OverdampedSink,
        ];
        let mut out = Vec::new();
        map.write_pgm(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "P2\n2 3\n255\n0 0\n127 63\n255 191\n");
    }

    #[test]
    fn zero_workers_rejected() {
        let grid: GridSpec = "1 x 1".parse().unwrap();
        let p = ParameterSet::nominal(120.0);
        let input = SweepInput::Homogeneous(HomogeneousSetup::default());
        let err = run_sweep(&grid, &p, &input, &SweepConfig::homogeneous().with_workers(0)).unwrap_err();
        assert!(matches!(err, SweepError::Config(_)));
    }
}
