use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use baroreflex::classifier::{self, ClassifierConfig};
use baroreflex::dde::Trajectory;
use clap::Args;
use serde_json::json;

use crate::common::{CmdResult, Failure};

/// Classifies one component of a trajectory CSV and prints the result as JSON.
#[derive(Debug, Args)]
pub struct Opts {
    /// Trajectory CSV as written by `simulate`.
    trajectory: PathBuf,
    /// Column to classify.
    #[arg(long, default_value = "T_s")]
    component: String,
    /// Start of the analysis window (s). Defaults to two seconds after the strain.
    #[arg(long)]
    t_cut: Option<f64>,
    /// End of the analysis window (s). Defaults to the end of the trajectory.
    #[arg(long)]
    t_stop: Option<f64>,
    /// End of the strain (s), used for the default window start.
    #[arg(long, default_value_t = 35.0)]
    t_e: f64,
    /// Divide amplitudes by the first one before the regression.
    #[arg(long)]
    normalize: bool,
}

pub fn run(opts: &Opts) -> CmdResult {
    let file = File::open(&opts.trajectory)
        .with_context(|| format!("cannot open {}", opts.trajectory.display()))
        .map_err(Failure::input)?;
    let (names, traj) = Trajectory::read_csv(BufReader::new(file))
        .map_err(|e| Failure::input(e).context(format!("in {}", opts.trajectory.display())))?;
    let component = names
        .iter()
        .position(|n| *n == opts.component)
        .ok_or_else(|| Failure::input(anyhow!("no column `{}` (have {})", opts.component, names.join(", "))))?;
    let mut cfg = ClassifierConfig::after_strain(opts.t_e);
    if let Some(t) = opts.t_cut {
        cfg.t_cut = t;
    }
    cfg.t_stop = opts.t_stop;
    cfg.normalize = opts.normalize;
    let c = classifier::classify_trajectory(&traj, component, &cfg)?;
    let out = json!({
        "class": c.class.name(),
        "n_extrema": c.n_extrema(),
        "amplitudes": c.amplitudes,
        "slope": c.regression.map(|r| r.slope),
        "r2": c.regression.map(|r| r.r2),
        "diverged": c.diverged,
    });
    println!("{out}");
    Ok(())
}
