use std::path::PathBuf;

use anyhow::anyhow;
use baroreflex::models::{FULL_STATE_NAMES, REDUCED_STATE_NAMES};
use baroreflex::simulate::{self, HomogeneousSetup};
use clap::Args;

use crate::common::{self, CmdResult, Failure, ForcingArgs, Mode, ModelKind, ParamArgs};

/// Integrates one model and writes `trajectory.csv` (plus `forcing.csv` for
/// forced runs).
#[derive(Debug, Args)]
pub struct Opts {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    forcing: ForcingArgs,
    #[arg(long, value_enum, default_value = "reduced")]
    model: ModelKind,
    #[arg(long, value_enum, default_value = "nonhomo")]
    mode: Mode,
    /// Constant T_s history of a homogeneous run.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    perturbation: f64,
    /// End time of a homogeneous run (s).
    #[arg(long, default_value_t = 120.0)]
    horizon: f64,
    /// Sample spacing of the forcing trace (s).
    #[arg(long, default_value_t = 0.1)]
    trace_dt: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn run(opts: &Opts) -> CmdResult {
    common::ensure_dir(&opts.out)?;
    let (traj, names): (_, &[&str]) = match opts.mode {
        Mode::Homo => {
            if opts.model == ModelKind::Full {
                return Err(Failure::input(anyhow!("homogeneous runs use the reduced model")));
            }
            if opts.forcing.is_given() {
                return Err(Failure::input(anyhow!("homogeneous runs take no forcing")));
            }
            let p = opts.params.resolve(&opts.params.baseline()?)?;
            let setup = HomogeneousSetup { perturbation: opts.perturbation, horizon: opts.horizon, horizon_per_delay: 0.0 };
            (simulate::homogeneous(&p, &setup, &simulate::homogeneous_solver())?, &REDUCED_STATE_NAMES)
        }
        Mode::Nonhomo => {
            if !(opts.trace_dt > 0.0) {
                return Err(Failure::input(anyhow!("--trace-dt must be positive")));
            }
            let (fm, p) = opts.forcing.build(&opts.params)?;
            for w in fm.warnings() {
                eprintln!("warning: {w}");
            }
            common::write_file(&opts.out, "forcing.csv", |w| fm.write_trace(w, opts.trace_dt))?;
            let solver = simulate::forced_solver();
            match opts.model {
                ModelKind::Reduced => (simulate::reduced_forced(&p, &fm, &solver)?, &REDUCED_STATE_NAMES),
                ModelKind::Full => (simulate::full_forced(&p, &fm, &solver)?, &FULL_STATE_NAMES),
            }
        }
    };
    let path = common::write_file(&opts.out, "trajectory.csv", |w| traj.write_csv(w, names))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
