use std::f64::consts::{E, FRAC_PI_2};

use anyhow::anyhow;
use baroreflex::analytic;
use baroreflex::sweep::GridSpec;
use clap::Args;
use serde_json::json;

use crate::common::{CmdResult, Failure};

/// Dominant characteristic root and region for `(D_s, tau_s)`, one JSON line
/// per point.
#[derive(Debug, Args)]
pub struct Opts {
    #[arg(long = "d-s", requires = "tau_s", conflicts_with = "grid", allow_negative_numbers = true)]
    d_s: Option<f64>,
    #[arg(long = "tau-s", requires = "d_s", allow_negative_numbers = true)]
    tau_s: Option<f64>,
    /// Every point of `lo:hi:step x lo:hi:step` instead of a single one.
    #[arg(long)]
    grid: Option<String>,
}

fn point(d_s: f64, tau_s: f64) -> CmdResult<serde_json::Value> {
    let root = analytic::principal_root(d_s, tau_s)?;
    let class = analytic::classify_homogeneous(d_s, tau_s, analytic::BOUNDARY_TOL);
    Ok(json!({
        "D_s": d_s,
        "tau_s": tau_s,
        "lambda": { "re": root.alpha, "im": root.beta },
        "class": class.name(),
        "boundaries": {
            "transcritical": { "tau_s": analytic::transcritical_tau(d_s), "D_s": tau_s / E },
            "hopf": { "tau_s": analytic::hopf_tau(d_s), "D_s": FRAC_PI_2 * tau_s },
        },
    }))
}

pub fn run(opts: &Opts) -> CmdResult {
    let points = match (opts.d_s, opts.tau_s, &opts.grid) {
        (Some(d), Some(tau), None) => vec![(d, tau)],
        (None, None, Some(g)) => {
            let grid: GridSpec = g.parse()?;
            (0..grid.cells()).map(|k| grid.coords(k)).collect()
        }
        _ => return Err(Failure::input(anyhow!("give --d-s and --tau-s, or --grid"))),
    };
    for (d, tau) in points {
        println!("{}", point(d, tau)?);
    }
    Ok(())
}
