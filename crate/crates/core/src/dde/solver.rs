use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::trajectory::{lagrange_weights, Trajectory, RADAU_NODES};
use super::{DdeSystem, DelayRhs, SolveError, SolverConfig};

const SQ6: f64 = 2.449_489_742_783_178;
const C: [f64; 3] = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
const A: [[f64; 3]; 3] = [
    [
        11.0 / 45.0 - 7.0 * SQ6 / 360.0,
        37.0 / 225.0 - 169.0 * SQ6 / 1800.0,
        -2.0 / 225.0 + SQ6 / 75.0,
    ],
    [
        37.0 / 225.0 + 169.0 * SQ6 / 1800.0,
        11.0 / 45.0 + 7.0 * SQ6 / 360.0,
        -2.0 / 225.0 - SQ6 / 75.0,
    ],
    [4.0 / 9.0 - SQ6 / 36.0, 4.0 / 9.0 + SQ6 / 36.0, 1.0 / 9.0],
];
/// Real eigenvalue of the inverse Butcher matrix, used by the embedded error estimate.
const GAMMA: f64 = 3.637_834_252_744_496;
const DD: [f64; 3] = [-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0];

const MAX_NEWTON: usize = 7;
const SAFETY: f64 = 0.9;
const MAX_SHRINK: f64 = 5.0;
const MAX_GROW: f64 = 8.0;
const THETA_REUSE: f64 = 0.001;
const MAX_OVERLAP_ITERS: usize = 10;
const MAX_SINGULAR: usize = 5;

enum StageOutcome {
    Converged { iters: usize },
    Failed { shrink: f64 },
}

struct Stepper<'a, R: DelayRhs> {
    sys: &'a DdeSystem<R>,
    n: usize,
    t0: f64,
    rtol: f64,
    atol: Vec<f64>,
    fnewt: f64,
    traj: Trajectory,
    jac: DMatrix<f64>,
    newton_lu: Option<LU<f64, Dyn, Dyn>>,
    err_lu: Option<LU<f64, Dyn, Dyn>>,
    faccon: f64,
    theta: f64,
    rhs_evals: usize,
}

impl<'a, R: DelayRhs> Stepper<'a, R> {
    fn rhs(&mut self, t: f64, x: &[f64], xd: &[f64], dx: &mut [f64]) -> Result<(), SolveError> {
        self.rhs_evals += 1;
        self.sys.rhs.eval(t, x, xd, dx);
        if dx.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SolveError::NonFinite { t })
        }
    }

    /// Delayed state for `td` not later than the last accepted mesh point.
    fn past_state(&self, td: f64, out: &mut [f64]) {
        if td < self.t0 {
            out.copy_from_slice(&self.sys.history);
        } else {
            // td lies inside the accepted part of the trajectory by construction
            self.traj
                .eval_into(td.min(self.traj.t_end()), out)
                .expect("delayed time inside trajectory");
        }
    }

    fn newton_scale(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.atol[i] + self.rtol * y[i].abs()).collect()
    }

    fn compute_jacobian(&mut self, t: f64, y: &[f64], xd: &[f64], f0: &[f64]) -> Result<(), SolveError> {
        if self.sys.rhs.jacobian(t, y, xd, &mut self.jac) {
            return Ok(());
        }
        let n = self.n;
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let delta = (f64::EPSILON * y[j].abs().max(1e-5)).sqrt();
            yp[j] = y[j] + delta;
            self.rhs(t, &yp, xd, &mut fp)?;
            for i in 0..n {
                self.jac[(i, j)] = (fp[i] - f0[i]) / delta;
            }
            yp[j] = y[j];
        }
        Ok(())
    }

    fn factorize(&mut self, h: f64) {
        let n = self.n;
        let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
        for bi in 0..3 {
            for bj in 0..3 {
                let c = h * A[bi][bj];
                for i in 0..n {
                    for j in 0..n {
                        m[(bi * n + i, bj * n + j)] -= c * self.jac[(i, j)];
                    }
                }
            }
        }
        self.newton_lu = Some(m.lu());
        let mut e = -self.jac.clone();
        for i in 0..n {
            e[(i, i)] += GAMMA / h;
        }
        self.err_lu = Some(e.lu());
    }

    /// Fills the delayed argument of each stage. Stages whose delayed time falls
    /// inside the current step read the current collocation polynomial.
    fn stage_delays(&self, t: f64, h: f64, y: &[f64], z: &[f64], xd: &mut [f64], overlap_only: bool) -> bool {
        let n = self.n;
        let mut overlap = false;
        for s in 0..3 {
            let td = t + C[s] * h - self.sys.delay;
            let out = &mut xd[s * n..(s + 1) * n];
            if td > t {
                overlap = true;
                let w = lagrange_weights(&RADAU_NODES, (td - t) / h);
                for i in 0..n {
                    out[i] = y[i] + w[1] * z[i] + w[2] * z[n + i] + w[3] * z[2 * n + i];
                }
            } else if !overlap_only {
                self.past_state(td, out);
            }
        }
        overlap
    }

    fn newton(&mut self, t: f64, h: f64, y: &[f64], z: &mut [f64], xd: &[f64]) -> Result<StageOutcome, SolveError> {
        let n = self.n;
        let scal = self.newton_scale(y);
        let mut f = vec![0.0; 3 * n];
        let mut x = vec![0.0; n];
        let mut b = DVector::<f64>::zeros(3 * n);
        self.faccon = self.faccon.max(f64::EPSILON).powf(0.8);
        self.theta = THETA_REUSE;
        let mut dyn_old = 0.0;
        let mut thq_old = 0.0;
        for iter in 1..=MAX_NEWTON {
            for s in 0..3 {
                for i in 0..n {
                    x[i] = y[i] + z[s * n + i];
                }
                let mut fs = vec![0.0; n];
                self.rhs(t + C[s] * h, &x, &xd[s * n..(s + 1) * n], &mut fs)?;
                f[s * n..(s + 1) * n].copy_from_slice(&fs);
            }
            for s in 0..3 {
                for i in 0..n {
                    let hf = h * (A[s][0] * f[i] + A[s][1] * f[n + i] + A[s][2] * f[2 * n + i]);
                    b[s * n + i] = hf - z[s * n + i];
                }
            }
            let dz = match self.newton_lu.as_ref().and_then(|lu| lu.solve(&b)) {
                Some(v) if v.iter().all(|v| v.is_finite()) => v,
                _ => return Ok(StageOutcome::Failed { shrink: 0.5 }),
            };
            let dyno = (dz
                .iter()
                .enumerate()
                .map(|(k, v)| (v / scal[k % n]).powi(2))
                .sum::<f64>()
                / (3 * n) as f64)
                .sqrt();
            if iter > 1 {
                let thq = dyno / dyn_old;
                self.theta = if iter == 2 { thq } else { (thq * thq_old).sqrt() };
                thq_old = thq;
                if self.theta < 0.99 {
                    self.faccon = self.theta / (1.0 - self.theta);
                    let remaining = (MAX_NEWTON - iter) as i32;
                    let dyth = self.faccon * dyno * self.theta.powi(remaining) / self.fnewt;
                    if dyth >= 1.0 {
                        let qnewt = dyth.clamp(1e-4, 20.0);
                        let shrink = 0.8 * qnewt.powf(-1.0 / (4.0 + remaining as f64));
                        return Ok(StageOutcome::Failed { shrink });
                    }
                } else {
                    return Ok(StageOutcome::Failed { shrink: 0.5 });
                }
            }
            dyn_old = dyno.max(f64::EPSILON);
            for (zk, dk) in z.iter_mut().zip(dz.iter()) {
                *zk += dk;
            }
            if self.faccon * dyno <= self.fnewt {
                return Ok(StageOutcome::Converged { iters: iter });
            }
        }
        Ok(StageOutcome::Failed { shrink: 0.5 })
    }

    fn solve_stages(&mut self, t: f64, h: f64, y: &[f64], z: &mut [f64]) -> Result<StageOutcome, SolveError> {
        let n = self.n;
        let mut xd = vec![0.0; 3 * n];
        if !self.stage_delays(t, h, y, z, &mut xd, false) {
            return self.newton(t, h, y, z, &xd);
        }
        let scal = self.newton_scale(y);
        let mut total = 0;
        for _ in 0..MAX_OVERLAP_ITERS {
            match self.newton(t, h, y, z, &xd)? {
                StageOutcome::Converged { iters } => total += iters,
                failed => return Ok(failed),
            }
            let prev = xd.clone();
            self.stage_delays(t, h, y, z, &mut xd, true);
            let change = (xd
                .iter()
                .zip(&prev)
                .enumerate()
                .map(|(k, (a, b))| ((a - b) / scal[k % n]).powi(2))
                .sum::<f64>()
                / (3 * n) as f64)
                .sqrt();
            if change <= self.fnewt {
                return Ok(StageOutcome::Converged { iters: total.min(MAX_NEWTON) });
            }
        }
        Ok(StageOutcome::Failed { shrink: 0.5 })
    }

    #[allow(clippy::too_many_arguments)]
    fn error_norm(
        &mut self,
        t: f64,
        h: f64,
        y: &[f64],
        y_new: &[f64],
        z: &[f64],
        f0: &[f64],
        xd0: &[f64],
        refine: bool,
    ) -> Result<f64, SolveError> {
        let n = self.n;
        let scal: Vec<f64> = (0..n)
            .map(|i| self.atol[i] + self.rtol * y[i].abs().max(y_new[i].abs()))
            .collect();
        let corr: Vec<f64> = (0..n)
            .map(|i| (DD[0] * z[i] + DD[1] * z[n + i] + DD[2] * z[2 * n + i]) / h)
            .collect();
        let lu = self.err_lu.as_ref().expect("error matrix factorized");
        let rhs = DVector::from_iterator(n, (0..n).map(|i| f0[i] + corr[i]));
        let mut e = lu.solve(&rhs).unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
        let norm = |e: &DVector<f64>| {
            ((0..n).map(|i| (e[i] / scal[i]).powi(2)).sum::<f64>() / n as f64).sqrt()
        };
        let mut err = norm(&e);
        if err >= 1.0 && refine && err.is_finite() {
            let x: Vec<f64> = (0..n).map(|i| y[i] + e[i]).collect();
            let mut fx = vec![0.0; n];
            self.sys.rhs.eval(t, &x, xd0, &mut fx);
            self.rhs_evals += 1;
            if fx.iter().all(|v| v.is_finite()) {
                let rhs = DVector::from_iterator(n, (0..n).map(|i| fx[i] + corr[i]));
                let lu = self.err_lu.as_ref().expect("error matrix factorized");
                e = lu.solve(&rhs).unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
                err = norm(&e);
            }
        }
        Ok(if err.is_finite() { err.max(1e-10) } else { f64::INFINITY })
    }
}

fn build_stops(sys_delay: f64, breakpoints: &[f64], t0: f64, tf: f64, order: Option<usize>) -> Vec<f64> {
    let mut stops = Vec::new();
    let max_k = order.unwrap_or(usize::MAX);
    let mut k = 1usize;
    while k <= max_k {
        let s = t0 + k as f64 * sys_delay;
        if s >= tf {
            break;
        }
        stops.push(s);
        k += 1;
    }
    for &b in breakpoints {
        if b > t0 && b < tf {
            stops.push(b);
        }
        for k in 1..=5 {
            let s = b + k as f64 * sys_delay;
            if s > t0 && s < tf {
                stops.push(s);
            }
        }
    }
    stops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::with_capacity(stops.len() + 1);
    let close = |a: f64, b: f64| (b - a).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    for s in stops {
        match out.last() {
            Some(&last) if close(last, s) => {}
            _ if close(s, t0) => {}
            _ => out.push(s),
        }
    }
    while matches!(out.last(), Some(&last) if close(last, tf)) {
        out.pop();
    }
    out.push(tf);
    out
}

/// Integrates `sys` over `span = (t0, tf)`.
///
/// The mesh contains `t0`, `tf`, every multiple `t0 + k*delay` inside the
/// span (limited by [`SolverConfig::delay_breakpoint_order`]), every user
/// breakpoint and its first five delay images.
pub fn integrate<R: DelayRhs>(
    sys: &DdeSystem<R>,
    span: (f64, f64),
    cfg: &SolverConfig,
) -> Result<Trajectory, SolveError> {
    sys.validate()?;
    let n = sys.dim();
    cfg.validate(n)?;
    let (t0, tf) = span;
    if !(t0.is_finite() && tf.is_finite() && tf > t0) {
        return Err(SolveError::InvalidInput(format!("invalid span [{t0}, {tf}]")));
    }

    // Tolerances are mapped the same way as in classical Radau5 codes, so that
    // the requested rel_tol corresponds to the observed global error.
    let rtol = 0.1 * cfg.rel_tol.powf(2.0 / 3.0);
    let atol: Vec<f64> = (0..n).map(|i| rtol * cfg.abs_tol_for(i) / cfg.rel_tol).collect();
    let fnewt = (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt()));

    let mut st = Stepper {
        sys,
        n,
        t0,
        rtol,
        atol,
        fnewt,
        traj: Trajectory::start(t0, &sys.history),
        jac: DMatrix::zeros(n, n),
        newton_lu: None,
        err_lu: None,
        faccon: 1.0,
        theta: THETA_REUSE,
        rhs_evals: 0,
    };

    let stops = build_stops(sys.delay, &sys.breakpoints, t0, tf, cfg.delay_breakpoint_order);
    let mut next_stop = 0usize;

    let mut t = t0;
    let mut y = sys.history.clone();
    let mut xd0 = vec![0.0; n];
    let mut f0 = vec![0.0; n];
    st.past_state(t0 - sys.delay, &mut xd0);
    st.rhs(t, &y, &xd0, &mut f0)?;

    let mut h = cfg.initial_step.min(cfg.max_step).min(tf - t0);
    let mut first = true;
    let mut rejected = false;
    let mut restart_predictor = true;
    let mut need_jac = true;
    let mut jac_fresh = false;
    let mut lu_h = f64::NAN;
    let mut n_singular = 0usize;
    let mut steps = 0usize;
    let mut n_rejected = 0usize;
    let mut n_newton_fail = 0usize;
    let mut z = vec![0.0; 3 * n];

    while t < tf {
        if steps >= cfg.max_steps {
            return Err(SolveError::TooManySteps { t, limit: cfg.max_steps });
        }
        let stop = stops[next_stop];
        let remaining = stop - t;
        let mut hh = h.min(cfg.max_step);
        let mut hits = false;
        if remaining <= 1.0001 * hh {
            hh = remaining;
            hits = true;
        } else if remaining - hh < 0.05 * hh {
            hh = 0.5 * remaining;
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if hh < h_min {
            return Err(if n_newton_fail > 0 && rejected {
                SolveError::NewtonFailure { t }
            } else {
                SolveError::StepSizeUnderflow { t, h: hh }
            });
        }

        if need_jac {
            st.compute_jacobian(t, &y, &xd0, &f0)?;
            need_jac = false;
            jac_fresh = true;
            lu_h = f64::NAN;
        }
        if hh != lu_h {
            st.factorize(hh);
            lu_h = hh;
        }

        if restart_predictor {
            z.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let mut buf = vec![0.0; n];
            for s in 0..3 {
                st.traj.extrapolate_last(t + C[s] * hh, &mut buf);
                for i in 0..n {
                    z[s * n + i] = buf[i] - y[i];
                }
            }
        }

        let iters = match st.solve_stages(t, hh, &y, &mut z)? {
            StageOutcome::Converged { iters } => {
                n_singular = 0;
                iters
            }
            StageOutcome::Failed { shrink } => {
                n_newton_fail += 1;
                n_rejected += 1;
                if st.newton_lu.as_ref().map(|lu| !lu.is_invertible()).unwrap_or(false) {
                    n_singular += 1;
                    if n_singular > MAX_SINGULAR {
                        return Err(SolveError::NewtonFailure { t });
                    }
                }
                h = hh * shrink;
                rejected = true;
                restart_predictor = true;
                if !jac_fresh {
                    need_jac = true;
                }
                continue;
            }
        };

        let y_new: Vec<f64> = (0..n).map(|i| y[i] + z[2 * n + i]).collect();
        let err = st.error_norm(t, hh, &y, &y_new, &z, &f0, &xd0, first || rejected)?;
        let fac = SAFETY.min(SAFETY * (1 + 2 * MAX_NEWTON) as f64 / (iters + 2 * MAX_NEWTON) as f64);
        let quot = (err.powf(0.25) / fac).clamp(1.0 / MAX_GROW, MAX_SHRINK);
        let mut h_new = hh / quot;

        if err < 1.0 {
            steps += 1;
            first = false;
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(SolveError::NonFinite { t: t + hh });
            }
            let y1: Vec<f64> = (0..n).map(|i| y[i] + z[i]).collect();
            let y2: Vec<f64> = (0..n).map(|i| y[i] + z[n + i]).collect();
            let t_new = if hits { stop } else { t + hh };
            st.traj.push_step(t_new, &y1, &y2, &y_new);
            t = t_new;
            y = y_new;
            if let Some(limit) = cfg.divergence_limit {
                if y.iter().any(|v| v.abs() > limit) {
                    return Err(SolveError::Diverged { t, limit });
                }
            }
            if hits {
                next_stop += 1;
            }
            restart_predictor = hits;
            if t < tf {
                st.past_state(t - sys.delay, &mut xd0);
                st.rhs(t, &y, &xd0, &mut f0)?;
            }
            if rejected {
                h_new = h_new.min(hh);
            }
            rejected = false;
            if hits && h > hh {
                // the step was shortened to land on a breakpoint
                h_new = h_new.max(h.min(h_new * MAX_GROW));
            }
            h_new = h_new.min(cfg.max_step);
            jac_fresh = false;
            if st.theta <= THETA_REUSE {
                let ratio = h_new / hh;
                if (1.0..=1.2).contains(&ratio) {
                    h_new = hh;
                }
            } else {
                need_jac = true;
            }
            h = h_new;
        } else {
            n_rejected += 1;
            rejected = true;
            restart_predictor = true;
            h = if first { 0.1 * hh } else { h_new };
            if !jac_fresh {
                need_jac = true;
            }
        }
    }

    let stats = st.traj.stats_mut();
    stats.accepted = steps;
    stats.rejected = n_rejected;
    stats.newton_failures = n_newton_fail;
    stats.rhs_evals = st.rhs_evals;
    Ok(st.traj)
}
