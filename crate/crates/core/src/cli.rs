//! Command-line front end.
//!
//! Values are resolved with precedence flag > `BITEULER_*` environment
//! variable > TOML config file > built-in default. Exit codes: 0 on success,
//! 1 on usage or runtime errors, 2 when a requested assertion fails.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::brownian::generate_path;
use crate::diagnostics::StoppingProbability;
use crate::error::Error;
use crate::experiments::{
    divergence_comparison, fit_rate, moment_sweep, stopping_sweep, strong_error_with, ConvergenceConfig,
    DivergenceReport, MomentReport, Reference, BATCHES,
};
use crate::models::{catalog, catalog_entry, check_conditions, BallSampler, ModelCatalogEntry};
use crate::schemes::{run_path, SchemeKind};
use crate::taming::{verify_taming_bounds, TamingParams, TamingReport};
use crate::types::{ErrorTable, GridSpec, RateFit, SchemeRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Convergence,
    Divergence,
    Moments,
    TamingCheck,
    CheckConditions,
    Catalog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("assertion failed: {0}")]
    Assertion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Run(_) => 1,
            CliError::Assertion(_) => 2,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "biteuler", version, about = "Stopped increment-tamed Euler schemes for SDEs")]
struct Args {
    /// simulate | convergence | divergence | moments | taming-check | check-conditions | catalog
    #[arg(value_enum, env = "BITEULER_COMMAND")]
    command: Option<Command>,
    /// TOML config file with [run], [model], [output] and [checks] sections.
    #[arg(long, env = "BITEULER_CONFIG")]
    config: Option<PathBuf>,
    /// Catalog model id.
    #[arg(long, env = "BITEULER_MODEL")]
    model: Option<String>,
    /// Model parameter override, repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE", env = "BITEULER_PARAM", value_delimiter = ',')]
    params: Vec<String>,
    /// Initial state, comma separated.
    #[arg(long, env = "BITEULER_X0", value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long, env = "BITEULER_SCHEME")]
    scheme: Option<SchemeKind>,
    /// Schemes compared by `divergence`.
    #[arg(long, env = "BITEULER_SCHEMES", value_delimiter = ',')]
    schemes: Option<Vec<SchemeKind>>,
    /// Time horizon.
    #[arg(long = "T", env = "BITEULER_T")]
    horizon: Option<f64>,
    /// Step counts, comma separated.
    #[arg(long = "Ns", env = "BITEULER_NS", value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Step count for `simulate`.
    #[arg(long = "N", env = "BITEULER_N")]
    n: Option<usize>,
    /// Number of Monte Carlo paths (or paths dumped by `simulate`).
    #[arg(long = "M", env = "BITEULER_M")]
    paths: Option<usize>,
    /// Error exponent.
    #[arg(long = "r", env = "BITEULER_R")]
    r: Option<f64>,
    #[arg(long, env = "BITEULER_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "BITEULER_THREADS")]
    threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, env = "BITEULER_OUTPUT")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, env = "BITEULER_FORMAT")]
    format: Option<Format>,
    /// Reference grid size for a fine-grid reference.
    #[arg(long = "N-ref", env = "BITEULER_N_REF")]
    n_ref: Option<usize>,
    /// `exact` or `fine:<scheme>`.
    #[arg(long, env = "BITEULER_REFERENCE")]
    reference: Option<Reference>,
    /// Fail with exit code 2 when the command's checks do not hold.
    #[arg(long, action = ArgAction::SetTrue, env = "BITEULER_ASSERT",
          value_parser = clap::builder::FalseyValueParser::new())]
    assert: bool,
    /// Accepted slope band `lo,hi` for `convergence`.
    #[arg(long = "rate-band", env = "BITEULER_RATE_BAND", value_delimiter = ',')]
    rate_band: Option<Vec<f64>>,
    /// Step size for `taming-check`.
    #[arg(long = "h", env = "BITEULER_H")]
    h: Option<f64>,
    /// Noise dimension for `taming-check`.
    #[arg(long = "m", env = "BITEULER_NOISE_DIM")]
    m: Option<usize>,
    /// Sample count for `taming-check`.
    #[arg(long, env = "BITEULER_SAMPLES")]
    samples: Option<usize>,
    /// Ball radius for `check-conditions`.
    #[arg(long, env = "BITEULER_RADIUS")]
    radius: Option<f64>,
    /// Sample points for `check-conditions`.
    #[arg(long, env = "BITEULER_POINTS")]
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    checks: ChecksSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    command: Option<Command>,
    scheme: Option<String>,
    schemes: Option<Vec<String>>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    #[serde(rename = "Ns")]
    ns: Option<Vec<usize>>,
    #[serde(rename = "N")]
    n: Option<usize>,
    #[serde(rename = "M")]
    paths: Option<usize>,
    r: Option<f64>,
    seed: Option<u64>,
    threads: Option<usize>,
    #[serde(rename = "N_ref")]
    n_ref: Option<usize>,
    reference: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    id: Option<String>,
    x0: Option<Vec<f64>>,
    params: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    path: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChecksSection {
    assert: Option<bool>,
    rate_band: Option<[f64; 2]>,
    h: Option<f64>,
    m: Option<usize>,
    samples: Option<usize>,
    radius: Option<f64>,
    points: Option<usize>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub model: Option<String>,
    pub params: Vec<(String, f64)>,
    pub x0: Option<Vec<f64>>,
    pub scheme: SchemeKind,
    pub schemes: Vec<SchemeKind>,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub n: usize,
    /// Path count; each command has its own default when absent.
    pub paths: Option<usize>,
    pub r: f64,
    pub seed: u64,
    pub threads: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub n_ref: Option<usize>,
    pub reference: Option<Reference>,
    pub assert: bool,
    pub rate_band: Option<(f64, f64)>,
    pub h: f64,
    pub m: usize,
    pub samples: usize,
    pub radius: f64,
    pub points: usize,
}

pub const DEFAULT_NS: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];
pub const DEFAULT_PATHS: usize = 1000;

/// Parses command-line arguments (program name first), reading the file named by `--config`.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(args).map_err(|e| usage(e.to_string()))?;
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            parse_file(&text)?
        }
        None => FileConfig::default(),
    };
    resolve(args, file)
}

fn parse_file(text: &str) -> Result<FileConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Run(Error::Config(e.to_string())))
}

fn parse_scheme(s: &str) -> Result<SchemeKind, CliError> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn resolve(a: Args, f: FileConfig) -> Result<RunConfig, CliError> {
    let command = a.command.or(f.run.command).ok_or_else(|| usage("missing command"))?;

    let mut params: BTreeMap<String, f64> = f.model.params.unwrap_or_default();
    for kv in &a.params {
        let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--param expects KEY=VALUE, got '{kv}'")))?;
        let v: f64 = v.trim().parse().map_err(|_| usage(format!("--param {k}: '{v}' is not a number")))?;
        params.insert(k.trim().to_string(), v);
    }

    let scheme = match (a.scheme, f.run.scheme) {
        (Some(s), _) => s,
        (None, Some(s)) => parse_scheme(&s)?,
        (None, None) => SchemeKind::StoppedBit,
    };
    let schemes = match (a.schemes, f.run.schemes) {
        (Some(s), _) => s,
        (None, Some(s)) => s.iter().map(|x| parse_scheme(x)).collect::<Result<_, _>>()?,
        (None, None) => SchemeKind::ALL.to_vec(),
    };
    let reference = match (a.reference, f.run.reference) {
        (Some(r), _) => Some(r),
        (None, Some(r)) => Some(r.parse().map_err(|e: Error| usage(e.to_string()))?),
        (None, None) => None,
    };
    let rate_band = match (a.rate_band, f.checks.rate_band) {
        (Some(v), _) => match v[..] {
            [lo, hi] => Some((lo, hi)),
            _ => return Err(usage("--rate-band expects two values lo,hi")),
        },
        (None, Some([lo, hi])) => Some((lo, hi)),
        (None, None) => None,
    };

    let cfg = RunConfig {
        command,
        model: a.model.or(f.model.id),
        params: params.into_iter().collect(),
        x0: a.x0.or(f.model.x0),
        scheme,
        schemes,
        horizon: a.horizon.or(f.run.horizon).unwrap_or(1.0),
        ns: a.ns.or(f.run.ns).unwrap_or_else(|| DEFAULT_NS.to_vec()),
        n: a.n.or(f.run.n).unwrap_or(64),
        paths: a.paths.or(f.run.paths),
        r: a.r.or(f.run.r).unwrap_or(2.0),
        seed: a.seed.or(f.run.seed).unwrap_or(0),
        threads: a.threads.or(f.run.threads).unwrap_or(0),
        output: a.output.or(f.output.path),
        format: a.format.or(f.output.format).unwrap_or_default(),
        n_ref: a.n_ref.or(f.run.n_ref),
        reference,
        assert: a.assert || f.checks.assert.unwrap_or(false),
        rate_band,
        h: a.h.or(f.checks.h).unwrap_or(0.01),
        m: a.m.or(f.checks.m).unwrap_or(1),
        samples: a.samples.or(f.checks.samples).unwrap_or(100_000),
        radius: a.radius.or(f.checks.radius).unwrap_or(10.0),
        points: a.points.or(f.checks.points).unwrap_or(10_000),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(format!("{name} must be positive, got {v}")))
            }
        };
        positive("T", self.horizon)?;
        positive("h", self.h)?;
        positive("radius", self.radius)?;
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(usage(format!("r must be >= 1, got {}", self.r)));
        }
        for (name, v) in [("N", self.n), ("m", self.m), ("samples", self.samples), ("points", self.points)] {
            if v == 0 {
                return Err(usage(format!("{name} must be positive")));
            }
        }
        if self.paths == Some(0) || self.n_ref == Some(0) || self.ns.contains(&0) || self.ns.is_empty() {
            return Err(usage("M, N_ref and every entry of Ns must be positive"));
        }
        if let Some((lo, hi)) = self.rate_band {
            if !(lo <= hi) {
                return Err(usage(format!("rate band [{lo}, {hi}] is empty")));
            }
        }
        let needs_model = !matches!(self.command, Command::TamingCheck | Command::Catalog);
        if needs_model && self.model.is_none() {
            return Err(usage("--model is required"));
        }
        Ok(())
    }

    fn entry(&self) -> Result<ModelCatalogEntry, CliError> {
        let id = self.model.as_deref().ok_or_else(|| usage("--model is required"))?;
        Ok(catalog_entry(id, &self.params, self.horizon)?)
    }

    /// Convergence settings with defaults filled in: exact reference when the
    /// model has a closed form, else `fine:<scheme>` on `8 max(Ns)` steps.
    pub fn convergence_config(&self, has_exact: bool) -> ConvergenceConfig {
        let reference =
            self.reference.unwrap_or(if has_exact { Reference::Exact } else { Reference::FineGrid(self.scheme) });
        let max = self.ns.iter().copied().max().unwrap_or(1);
        let n_ref = self.n_ref.unwrap_or(match reference {
            Reference::Exact => max,
            Reference::FineGrid(_) => 8 * max,
        });
        ConvergenceConfig {
            model: self.model.clone().unwrap_or_default(),
            params: self.params.clone(),
            scheme: self.scheme,
            r: self.r,
            horizon: self.horizon,
            ns: self.ns.clone(),
            n_ref,
            paths: self.paths.unwrap_or(DEFAULT_PATHS),
            seed: self.seed,
            reference,
            x0: self.x0.clone(),
        }
    }
}

/// CSV header for error tables.
pub const ERROR_TABLE_HEADER: &str = "scheme,model,r,N,M,seed,sup_error,std_error,overflow_fraction";

/// Error table as CSV; floats use shortest round-trip formatting.
pub fn error_table_csv(table: &ErrorTable) -> String {
    let mut s = String::from(ERROR_TABLE_HEADER);
    s.push('\n');
    for row in &table.rows {
        let _ = writeln!(
            s,
            "{},{},{:?},{},{},{},{:?},{:?},{:?}",
            table.scheme,
            table.model,
            table.r,
            row.n,
            row.paths,
            row.seed,
            row.sup_error,
            row.std_error,
            row.overflow_fraction
        );
    }
    s
}

/// Sidecar contents for a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSidecar {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl From<&RateFit> for RateSidecar {
    fn from(f: &RateFit) -> Self {
        RateSidecar { slope: f.slope, intercept: f.intercept, residual: f.residual }
    }
}

/// Path of the rate-fit sidecar written next to `output`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".rate.json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub table: ErrorTable,
    pub rate_fit: Option<RateFit>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Run(Error::Config(format!("cannot write {}: {e}", p.display()))))?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(Error::from)?;
            out.flush().map_err(Error::from)?;
        }
    }
    Ok(())
}

/// Parses, runs and reports; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    // help and version go through clap directly so they exit 0
    if let Err(e) = Args::try_parse_from(&args) {
        use clap::error::ErrorKind;
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            return 0;
        }
    }
    match parse_config(&args).and_then(|cfg| execute(&cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("biteuler: {e}");
            e.exit_code()
        }
    }
}

/// Runs a resolved configuration on a pool of `cfg.threads` workers.
pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Convergence => convergence(cfg),
        Command::Divergence => divergence(cfg),
        Command::Moments => moments(cfg),
        Command::TamingCheck => taming_check(cfg),
        Command::CheckConditions => conditions(cfg),
        Command::Catalog => list_catalog(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let entry = cfg.entry()?;
    let x0 = cfg.x0.clone().unwrap_or(entry.default_x0);
    let grid = GridSpec::new(cfg.horizon, cfg.n)?;
    let runs: Vec<SchemeRun> = (0..cfg.paths.unwrap_or(1))
        .map(|i| {
            let path = generate_path(cfg.horizon, cfg.n, entry.model.m, cfg.seed, i as u64)?;
            run_path(cfg.scheme, &entry.model, &grid, &x0, &path)
        })
        .collect::<Result<_, Error>>()?;
    let text = match cfg.format {
        Format::Json => to_json(&runs)?,
        Format::Csv => {
            let d = entry.model.d;
            let mut s = String::from("scheme,model,path,k,t");
            for j in 0..d {
                let _ = write!(s, ",y{j}");
            }
            s.push('\n');
            for (i, run) in runs.iter().enumerate() {
                for k in 0..=grid.steps {
                    let _ = write!(s, "{},{},{i},{k},{:?}", cfg.scheme, entry.id, grid.point(k));
                    for v in run.state(k) {
                        let _ = write!(s, ",{v:?}");
                    }
                    s.push('\n');
                }
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())
}

fn convergence(cfg: &RunConfig) -> Result<(), CliError> {
    let entry = cfg.entry()?;
    let config = cfg.convergence_config(entry.model.exact_solution.is_some());
    config.validate_strict()?;
    let x0 = config.x0.clone().unwrap_or(entry.default_x0);
    let table = strong_error_with(&entry.model, &x0, &config)?;
    let fit = fit_rate(&table);
    match cfg.format {
        Format::Json => {
            let report = ConvergenceReport { table: table.clone(), rate_fit: fit.as_ref().ok().cloned() };
            emit(&to_json(&report)?, cfg.output.as_deref())?;
        }
        Format::Csv => {
            emit(&error_table_csv(&table), cfg.output.as_deref())?;
            if let Ok(fit) = &fit {
                let side = to_json(&RateSidecar::from(fit))?;
                match &cfg.output {
                    Some(p) => emit(&side, Some(&sidecar_path(p)))?,
                    None => eprint!("{side}"),
                }
            }
        }
    }
    if cfg.assert {
        if let Some(row) = table.rows.iter().find(|r| r.overflow_fraction > 0.0) {
            return Err(CliError::Assertion(format!("overflow fraction {} at N = {}", row.overflow_fraction, row.n)));
        }
    }
    if let Some((lo, hi)) = cfg.rate_band {
        let fit = fit?;
        if !(fit.slope >= lo && fit.slope <= hi) {
            return Err(CliError::Assertion(format!("fitted slope {} outside [{lo}, {hi}]", fit.slope)));
        }
    }
    Ok(())
}

fn divergence(cfg: &RunConfig) -> Result<(), CliError> {
    let entry = cfg.entry()?;
    let x0 = cfg.x0.clone().unwrap_or(entry.default_x0);
    let report: DivergenceReport = divergence_comparison(
        &entry.model,
        &cfg.schemes,
        &cfg.ns,
        cfg.paths.unwrap_or(DEFAULT_PATHS),
        &x0,
        cfg.horizon,
        cfg.seed,
    )?;
    let text = match cfg.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from(
                "scheme,model,N,M,seed,overflow_fraction,explosion_fraction,second_moment,second_moment_se\n",
            );
            for r in &report.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{:?},{:?},{:?},{:?}",
                    r.scheme,
                    report.model,
                    r.n,
                    report.paths,
                    report.seed,
                    r.overflow_fraction,
                    r.explosion_fraction,
                    r.second_moment,
                    r.second_moment_se
                );
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())?;
    if cfg.assert {
        if report.rows_for(SchemeKind::StoppedBit).any(|r| r.explosion_fraction > 0.0) {
            return Err(CliError::Assertion("the stopped scheme exploded".into()));
        }
        if cfg.schemes.contains(&SchemeKind::EulerMaruyama)
            && !report.rows_for(SchemeKind::EulerMaruyama).any(|r| r.explosion_fraction > 0.0)
        {
            return Err(CliError::Assertion("Euler-Maruyama never exploded".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsOutput {
    pub moments: MomentReport,
    pub stopping: Vec<StoppingProbability>,
}

/// Largest accepted `max/min` ratio of `E[U(Y_T)]` across `N`.
pub const FLATNESS_LIMIT: f64 = 1.25;

fn moments(cfg: &RunConfig) -> Result<(), CliError> {
    let entry = cfg.entry()?;
    let spec = entry.model.lyapunov.clone().ok_or_else(|| Error::NoLyapunov(entry.model.name.clone()))?;
    let x0 = cfg.x0.clone().unwrap_or(entry.default_x0);
    let paths = cfg.paths.unwrap_or(DEFAULT_PATHS).max(BATCHES);
    let moments = moment_sweep(&entry.model, &spec, &cfg.ns, paths, &x0, cfg.horizon, cfg.seed)?;
    let stopping = stopping_sweep(&entry.model, &spec, &cfg.ns, paths, &x0, cfg.horizon, cfg.seed)?;
    let out = MomentsOutput { moments, stopping };
    let text = match cfg.format {
        Format::Json => to_json(&out)?,
        Format::Csv => {
            let mut s = String::from(
                "model,N,M,seed,mean_u,mean_u_se,exp_moment,exp_moment_se,exp_moment_bound,epsilon_n,\
                 moment_bound,within_bound,claim_applies,stop_probability,stop_std_error,stop_bound\n",
            );
            let m = &out.moments;
            for (r, sp) in m.rows.iter().zip(&out.stopping) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{:?},{:?},{:?}",
                    m.model,
                    r.n,
                    m.paths,
                    m.seed,
                    r.mean_u,
                    r.mean_u_se,
                    r.exp_moment,
                    r.exp_moment_se,
                    r.exp_moment_bound,
                    r.epsilon_n,
                    r.moment_bound,
                    r.within_bound,
                    r.claim_applies,
                    sp.estimate,
                    sp.std_error,
                    sp.bound
                );
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())?;
    if cfg.assert {
        let m = &out.moments;
        if !(m.flatness_ratio <= FLATNESS_LIMIT) {
            return Err(CliError::Assertion(format!("moment ratio {} above {FLATNESS_LIMIT}", m.flatness_ratio)));
        }
        if !m.bounds_hold() {
            return Err(CliError::Assertion("a moment estimate exceeds its bound".into()));
        }
    }
    Ok(())
}

fn taming_check(cfg: &RunConfig) -> Result<(), CliError> {
    let params = TamingParams::new(cfg.h, cfg.m)?;
    let report: TamingReport = verify_taming_bounds(&params, cfg.samples, cfg.seed)?;
    let text = match cfg.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("h,m,samples,seed,quantity,estimate,std_error,bound,pass\n");
            for (name, b) in
                [("sup_norm", &report.sup_norm), ("jacobian", &report.jacobian), ("laplacian", &report.laplacian)]
            {
                let _ = writeln!(
                    s,
                    "{:?},{},{},{},{name},{:?},{:?},{:?},{}",
                    report.h, report.m, report.samples, report.seed, b.estimate, b.std_error, b.bound, b.pass
                );
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())?;
    if cfg.assert && !report.all_pass() {
        return Err(CliError::Assertion("a taming bound failed".into()));
    }
    Ok(())
}

fn conditions(cfg: &RunConfig) -> Result<(), CliError> {
    let entry = cfg.entry()?;
    let spec = entry.model.lyapunov.clone().ok_or_else(|| Error::NoLyapunov(entry.model.name.clone()))?;
    let sampler = BallSampler::new(cfg.radius, cfg.seed);
    let report = check_conditions(&entry.model, &spec, cfg.horizon, &sampler, cfg.points)?;
    let text = match cfg.format {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("model,condition,checked,violations,min_margin\n");
            for c in &report.summaries {
                let cond = serde_json::to_value(c.condition).map_err(Error::from)?;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:?}",
                    entry.id,
                    cond.as_str().unwrap_or_default(),
                    c.checked,
                    c.violations,
                    c.min_margin
                );
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())?;
    if cfg.assert && !report.passed() {
        return Err(CliError::Assertion(format!("{} condition violations", report.total_violations())));
    }
    Ok(())
}

fn list_catalog(cfg: &RunConfig) -> Result<(), CliError> {
    let info = catalog();
    let text = match cfg.format {
        Format::Json => to_json(&info)?,
        Format::Csv => {
            let mut s = String::from("id,dimension,noise_dimension,exact_solution,lyapunov,params,default_x0\n");
            for e in &info {
                let params: Vec<String> = e.params.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
                let x0: Vec<String> = e.default_x0.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    e.id,
                    e.dimension,
                    e.noise_dimension,
                    e.exact_solution,
                    e.lyapunov,
                    params.join(";"),
                    x0.join(";")
                );
            }
            s
        }
    };
    emit(&text, cfg.output.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ErrorRow;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut v = vec!["biteuler"];
        v.extend_from_slice(args);
        let a = Args::try_parse_from(v).map_err(|e| usage(e.to_string()))?;
        resolve(a, FileConfig::default())
    }

    #[test]
    fn parses_example_invocation() {
        let c = parse(&[
            "convergence",
            "--model",
            "ginzburg-landau",
            "--scheme",
            "bit",
            "--Ns",
            "16,32,64,128",
            "--M",
            "1000",
            "--seed",
            "42",
        ])
        .unwrap();
        assert_eq!(c.command, Command::Convergence);
        assert_eq!(c.model.as_deref(), Some("ginzburg-landau"));
        assert_eq!(c.scheme, SchemeKind::StoppedBit);
        assert_eq!(c.ns, vec![16, 32, 64, 128]);
        assert_eq!(c.paths, Some(1000));
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn missing_model_is_usage_error() {
        let e = parse(&["convergence", "--Ns", "16,32"]).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(matches!(e, CliError::Usage(_)));
    }

    #[test]
    fn unknown_command_rejected() {
        assert!(matches!(parse(&["frobnicate"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn flag_overrides_file() {
        let f = parse_file("[run]\nN = 64\n[model]\nid = \"gbm\"\n").unwrap();
        let a = Args::try_parse_from(["biteuler", "simulate", "--N", "128"]).unwrap();
        let c = resolve(a, f).unwrap();
        assert_eq!(c.n, 128);
        assert_eq!(c.model.as_deref(), Some("gbm"));
        let f = parse_file("[run]\nN = 64\n[model]\nid = \"gbm\"\n").unwrap();
        let a = Args::try_parse_from(["biteuler", "simulate"]).unwrap();
        assert_eq!(resolve(a, f).unwrap().n, 64);
    }

    #[test]
    fn unknown_file_key_and_type_mismatch_rejected() {
        assert!(parse_file("[run]\nbogus = 1\n").is_err());
        assert!(parse_file("[bogus]\nx = 1\n").is_err());
        assert!(parse_file("[run]\nN = \"many\"\n").is_err());
    }

    #[test]
    fn params_and_x0() {
        let c = parse(&["simulate", "--model", "vdp", "--param", "a=2", "--param", "sigma0=0.1", "--x0", "-1,0.5"])
            .unwrap();
        assert_eq!(c.params, vec![("a".into(), 2.0), ("sigma0".into(), 0.1)]);
        assert_eq!(c.x0, Some(vec![-1.0, 0.5]));
    }

    #[test]
    fn nonpositive_values_rejected() {
        assert!(parse(&["simulate", "--model", "gbm", "--T", "0"]).is_err());
        assert!(parse(&["simulate", "--model", "gbm", "--N", "0"]).is_err());
        assert!(parse(&["simulate", "--model", "gbm", "--r", "0.5"]).is_err());
    }

    fn table(rows: usize) -> ErrorTable {
        ErrorTable {
            scheme: "bit".into(),
            model: "gbm".into(),
            r: 2.0,
            horizon: 1.0,
            rows: (0..rows)
                .map(|i| ErrorRow {
                    n: 16 << i,
                    paths: 100,
                    sup_error: 0.1 / (i + 1) as f64,
                    per_gridpoint_errors: Some(vec![0.0, 0.05, 0.1 / 3.0]),
                    std_error: 1e-3,
                    seed: 7,
                    overflow_fraction: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(error_table_csv(&table(0)), format!("{ERROR_TABLE_HEADER}\n"));
    }

    #[test]
    fn one_row_table() {
        assert_eq!(error_table_csv(&table(1)), format!("{ERROR_TABLE_HEADER}\nbit,gbm,2.0,16,100,7,0.1,0.001,0.0\n"));
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let report = ConvergenceReport { table: table(3), rate_fit: None };
        let back: ConvergenceReport = serde_json::from_str(&to_json(&report).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/t.csv")), PathBuf::from("out/t.csv.rate.json"));
    }
}
