use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use baroreflex::analytic::AnalyticError;
use baroreflex::classifier::ClassifyError;
use baroreflex::dde::SolveError;
use baroreflex::models::{self, ModelError, ParameterSet, SubjectBaseline};
use baroreflex::signal::{self, ForcingFile, ForcingModel, PressureSeries, SignalError, VmProfile};
use baroreflex::simulate;
use baroreflex::sweep::SweepError;
use clap::{Args, ValueEnum};

/// Error plus the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Numerical,
    Input,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Numerical => 1,
            FailureKind::Input => 2,
        }
    }
}

impl Failure {
    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Failure { kind: FailureKind::Input, error: error.into() }
    }

    pub fn numerical(error: impl Into<anyhow::Error>) -> Self {
        Failure { kind: FailureKind::Numerical, error: error.into() }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Failure { kind: self.kind, error: self.error.context(msg) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::InvalidInput(_) => Failure::input(e),
            _ => Failure::numerical(e),
        }
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Solve(inner) => inner.into(),
            other => Failure::input(other),
        }
    }
}

impl From<AnalyticError> for Failure {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::InvalidInput { .. } => Failure::input(e),
            _ => Failure::numerical(e),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        Failure::input(e)
    }
}

impl From<SignalError> for Failure {
    fn from(e: SignalError) -> Self {
        Failure::input(e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::input(e)
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Full,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Homo,
    Nonhomo,
}

/// Subject baseline and parameter overrides.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Parameter file with `name = value` lines applied over the nominal set.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Subject whose baseline (P_bar, H_bar, age) sets the derived parameters.
    #[arg(long, default_value_t = 1)]
    pub subject: u32,
    /// Single override `name=value`, applied after the parameter file.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub overrides: Vec<String>,
}

impl ParamArgs {
    pub fn baseline(&self) -> CmdResult<SubjectBaseline> {
        Ok(SubjectBaseline::subject(self.subject)?)
    }

    /// Nominal values, then the file, then `--set`; s_p, s_s, H_p and H_s are
    /// always derived from `base`.
    pub fn resolve(&self, base: &SubjectBaseline) -> CmdResult<ParameterSet> {
        let mut p = ParameterSet::nominal(base.p_bar);
        if let Some(path) = &self.params {
            let text = read_to_string(path)?;
            p = p.apply_file(&text).map_err(|e| Failure::input(e).context(format!("in {}", path.display())))?;
        }
        for item in &self.overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Failure::input(anyhow!("expected NAME=VALUE, got `{item}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Failure::input(anyhow!("`{}` is not a number", value.trim())))?;
            p.set(key.trim(), value)?;
        }
        p.apply_derived(models::derive_parameters(base, &p)?);
        p.validate()?;
        Ok(p)
    }
}

/// Where the forcing comes from.
#[derive(Debug, Clone, Args)]
pub struct ForcingArgs {
    /// Pressure record, CSV `t,P` (pulsatile unless `--envelope`).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["synth", "forcing"])]
    pub data: Option<PathBuf>,
    /// Use a synthetic maneuver record.
    #[arg(long, conflicts_with = "forcing")]
    pub synth: bool,
    /// Forcing model JSON written by `ingest`.
    #[arg(long, value_name = "FILE")]
    pub forcing: Option<PathBuf>,
    /// The data file already holds the systolic envelope.
    #[arg(long)]
    pub envelope: bool,
    /// Seconds of baseline prepended before the fit.
    #[arg(long, default_value_t = signal::DEFAULT_PRE_EXTENSION)]
    pub pre: f64,
    /// Seconds of baseline appended after the fit.
    #[arg(long, default_value_t = signal::DEFAULT_POST_EXTENSION)]
    pub post: f64,
}

impl ForcingArgs {
    pub fn is_given(&self) -> bool {
        self.data.is_some() || self.synth || self.forcing.is_some()
    }

    /// Builds the forcing model and the parameters that go with it. A forcing
    /// file brings its own baseline.
    pub fn build(&self, params: &ParamArgs) -> CmdResult<(ForcingModel, ParameterSet)> {
        if !(self.pre >= 0.0 && self.post >= 0.0) {
            return Err(Failure::input(anyhow!("--pre and --post must be non-negative")));
        }
        if let Some(path) = &self.forcing {
            let file: ForcingFile = read_json(path)?;
            let p = params.resolve(&file.baseline)?;
            let fm = ForcingModel::from_file(&file, p).map_err(|e| Failure::input(e).context(format!("in {}", path.display())))?;
            return Ok((fm, p));
        }
        let base = params.baseline()?;
        let p = params.resolve(&base)?;
        if self.synth {
            let sbp = signal::synth_vm(&base, p.t_s, p.t_e, &VmProfile::default(), simulate::SYNTH_DT)?;
            let ing = signal::prepare_envelope(sbp, base, p, self.pre, self.post)?;
            return Ok((ing.forcing, p));
        }
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Failure::input(anyhow!("a forcing source is required: --data, --synth or --forcing")))?;
        let series = read_series(path)?;
        let ing = if self.envelope {
            signal::prepare_envelope(series, base, p, self.pre, self.post)?
        } else {
            signal::ingest(&series, base, p, self.pre, self.post)?
        };
        Ok((ing.forcing, p))
    }
}

pub fn read_to_string(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(Failure::input)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CmdResult<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display())).map_err(Failure::input)
}

pub fn read_series(path: &Path) -> CmdResult<PressureSeries> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display())).map_err(Failure::input)?;
    PressureSeries::read_csv(BufReader::new(f)).map_err(|e| Failure::input(e).context(format!("in {}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(Failure::input)
}

/// Creates `dir/name` and hands a buffered writer to `write`.
pub fn write_file(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> CmdResult<PathBuf> {
    let path = dir.join(name);
    let io = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()
    };
    io().with_context(|| format!("cannot write {}", path.display())).map_err(Failure::input)?;
    Ok(path)
}
