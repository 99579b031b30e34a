use std::io::{BufRead, Write};

use super::SolveError;

/// Collocation nodes of the three-stage Radau IIA scheme, with the step start prepended.
pub(crate) const RADAU_NODES: [f64; 4] = [
    0.0,
    (4.0 - 2.449_489_742_783_178) / 10.0,
    (4.0 + 2.449_489_742_783_178) / 10.0,
    1.0,
];

#[derive(Debug, Clone, PartialEq)]
enum Dense {
    /// Per step, the two interior stage values (at c1 and c2); together with the
    /// end-point states they define the cubic collocation polynomial.
    Collocation { stages: Vec<f64> },
    /// Local cubic Lagrange interpolation through the four nearest samples.
    Samples,
}

/// Time mesh, states, and a continuous interpolant for one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    mesh: Vec<f64>,
    states: Vec<f64>,
    dense: Dense,
    stats: SolveStats,
}

/// Counters collected while integrating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub newton_failures: usize,
}

#[inline]
pub(crate) fn lagrange_weights(nodes: &[f64; 4], s: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for (j, wj) in w.iter_mut().enumerate() {
        for (m, &nm) in nodes.iter().enumerate() {
            if m != j {
                *wj *= (s - nm) / (nodes[j] - nm);
            }
        }
    }
    w
}

impl Trajectory {
    pub(crate) fn start(t0: f64, x0: &[f64]) -> Self {
        Trajectory {
            dim: x0.len(),
            mesh: vec![t0],
            states: x0.to_vec(),
            dense: Dense::Collocation { stages: Vec::new() },
            stats: SolveStats::default(),
        }
    }

    /// Appends one accepted collocation step ending at `t_end`.
    pub(crate) fn push_step(&mut self, t_end: f64, y1: &[f64], y2: &[f64], y_end: &[f64]) {
        debug_assert!(t_end > *self.mesh.last().unwrap());
        if let Dense::Collocation { stages } = &mut self.dense {
            stages.extend_from_slice(y1);
            stages.extend_from_slice(y2);
        }
        self.mesh.push(t_end);
        self.states.extend_from_slice(y_end);
    }

    pub(crate) fn stats_mut(&mut self) -> &mut SolveStats {
        &mut self.stats
    }

    /// Builds a trajectory from sampled data. The interpolant is a local cubic
    /// through the nearest four samples, so it reproduces every sample exactly.
    pub fn from_samples(mesh: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        if mesh.is_empty() || mesh.len() != states.len() {
            return Err(SolveError::InvalidInput(
                "mesh and states must be non-empty and of equal length".into(),
            ));
        }
        let dim = states[0].len();
        if dim == 0 || states.iter().any(|s| s.len() != dim) {
            return Err(SolveError::InvalidInput("ragged state rows".into()));
        }
        if mesh.windows(2).any(|w| !(w[1] > w[0])) || mesh.iter().any(|t| !t.is_finite()) {
            return Err(SolveError::InvalidInput("mesh must be finite and strictly increasing".into()));
        }
        Ok(Trajectory {
            dim,
            mesh,
            states: states.into_iter().flatten().collect(),
            dense: Dense::Samples,
            stats: SolveStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn t_start(&self) -> f64 {
        self.mesh[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.mesh.last().unwrap()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }

    /// Values of one component at every mesh point.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|s| s[i]).collect()
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.mesh.partition_point(|&m| m <= t);
        k.saturating_sub(1).min(self.mesh.len().saturating_sub(2))
    }

    /// Evaluates the dense output at `t` into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<(), SolveError> {
        let (t0, t1) = (self.t_start(), self.t_end());
        if !(t >= t0 && t <= t1) {
            return Err(SolveError::OutOfRange { t, start: t0, end: t1 });
        }
        let d = self.dim;
        if self.mesh.len() == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let k = self.segment(t);
        let (a, b) = (self.mesh[k], self.mesh[k + 1]);
        if t == a {
            out.copy_from_slice(self.state(k));
            return Ok(());
        }
        if t == b {
            out.copy_from_slice(self.state(k + 1));
            return Ok(());
        }
        match &self.dense {
            Dense::Collocation { stages } => {
                let s = (t - a) / (b - a);
                let w = lagrange_weights(&RADAU_NODES, s);
                let y0 = self.state(k);
                let y3 = self.state(k + 1);
                let y1 = &stages[2 * k * d..(2 * k + 1) * d];
                let y2 = &stages[(2 * k + 1) * d..(2 * k + 2) * d];
                for i in 0..d {
                    out[i] = w[0] * y0[i] + w[1] * y1[i] + w[2] * y2[i] + w[3] * y3[i];
                }
            }
            Dense::Samples => {
                let n = self.mesh.len();
                if n < 4 {
                    // linear between the bracketing samples
                    let s = (t - a) / (b - a);
                    let (y0, y1) = (self.state(k), self.state(k + 1));
                    for i in 0..d {
                        out[i] = y0[i] + s * (y1[i] - y0[i]);
                    }
                } else {
                    let lo = k.saturating_sub(1).min(n - 4);
                    let nodes = [self.mesh[lo], self.mesh[lo + 1], self.mesh[lo + 2], self.mesh[lo + 3]];
                    let w = lagrange_weights(&nodes, t);
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = (0..4).map(|j| w[j] * self.states[(lo + j) * d + i]).sum();
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense output at `t`.
    pub fn dense_eval(&self, t: f64) -> Result<Vec<f64>, SolveError> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Evaluates the last step's interpolant at `s = (t - start) / h` beyond the
    /// final mesh point (used for predictor extrapolation).
    pub(crate) fn extrapolate_last(&self, t: f64, out: &mut [f64]) -> bool {
        let Dense::Collocation { stages } = &self.dense else {
            return false;
        };
        let n = self.mesh.len();
        if n < 2 {
            return false;
        }
        let k = n - 2;
        let d = self.dim;
        let (a, b) = (self.mesh[k], self.mesh[k + 1]);
        let w = lagrange_weights(&RADAU_NODES, (t - a) / (b - a));
        let y0 = self.state(k);
        let y3 = self.state(k + 1);
        let y1 = &stages[2 * k * d..(2 * k + 1) * d];
        let y2 = &stages[(2 * k + 1) * d..(2 * k + 2) * d];
        for i in 0..d {
            out[i] = w[0] * y0[i] + w[1] * y1[i] + w[2] * y2[i] + w[3] * y3[i];
        }
        true
    }

    /// Uniform resampling of one component on `[from, to]` with spacing `dt`
    /// (the last sample is clamped to `to`).
    pub fn resample_component(&self, i: usize, from: f64, to: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>), SolveError> {
        let n = ((to - from) / dt).floor() as usize + 1;
        let mut ts = Vec::with_capacity(n + 1);
        let mut xs = Vec::with_capacity(n + 1);
        let mut buf = vec![0.0; self.dim];
        for k in 0..n {
            let t = (from + k as f64 * dt).min(to);
            self.eval_into(t, &mut buf)?;
            ts.push(t);
            xs.push(buf[i]);
        }
        Ok((ts, xs))
    }

    /// Writes `t,<names...>` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W, names: &[&str]) -> std::io::Result<()> {
        write!(w, "t")?;
        for i in 0..self.dim {
            match names.get(i) {
                Some(n) => write!(w, ",{n}")?,
                None => write!(w, ",x{i}")?,
            }
        }
        writeln!(w)?;
        for (k, t) in self.mesh.iter().enumerate() {
            write!(w, "{t:.16e}")?;
            for v in self.state(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the CSV layout produced by [`Trajectory::write_csv`]. Returns the
    /// column names alongside the trajectory.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Vec<String>, Self), SolveError> {
        let mut lines = r.lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            _ => return Err(SolveError::InvalidInput("empty trajectory file".into())),
        };
        let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(SolveError::InvalidInput("header must start with `t`".into()));
        }
        let mut mesh = Vec::new();
        let mut states = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| SolveError::InvalidInput(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| SolveError::InvalidInput(format!("line {}: {e}", ln + 2)))?;
            if vals.len() != cols.len() {
                return Err(SolveError::InvalidInput(format!("line {}: expected {} columns", ln + 2, cols.len())));
            }
            mesh.push(vals[0]);
            states.push(vals[1..].to_vec());
        }
        let traj = Trajectory::from_samples(mesh, states)?;
        Ok((cols[1..].to_vec(), traj))
    }
}
