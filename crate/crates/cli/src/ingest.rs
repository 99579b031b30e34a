use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;

use crate::common::{self, CmdResult, Failure, ForcingArgs, ParamArgs};

/// Builds the forcing model from a pressure record and writes `forcing.json`
/// and its `forcing.csv` trace.
#[derive(Debug, Args)]
pub struct Opts {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    forcing: ForcingArgs,
    /// Sample spacing of the trace (s).
    #[arg(long, default_value_t = 0.1)]
    trace_dt: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn run(opts: &Opts) -> CmdResult {
    if opts.forcing.forcing.is_some() {
        return Err(Failure::input(anyhow!("ingest reads --data or --synth, not --forcing")));
    }
    if !(opts.trace_dt > 0.0) {
        return Err(Failure::input(anyhow!("--trace-dt must be positive")));
    }
    let (fm, _) = opts.forcing.build(&opts.params)?;
    for w in fm.warnings() {
        eprintln!("warning: {w}");
    }
    common::ensure_dir(&opts.out)?;
    let json = serde_json::to_string_pretty(&fm.to_file()).map_err(Failure::numerical)?;
    let path = common::write_file(&opts.out, "forcing.json", |w| {
        use std::io::Write;
        writeln!(w, "{json}")
    })?;
    common::write_file(&opts.out, "forcing.csv", |w| fm.write_trace(w, opts.trace_dt))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
