//! `oamcavity` command-line front end.
//!
//! Exit codes: 0 ok, 2 bad config or arguments, 3 unresolved
//! multistability, 4 numerical failure, 5 estimate out of range,
//! 6 calibration fingerprint mismatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use oamcavity::oam_meter::{self, CalibrationCurve, EstimateOptions, OamError};
use oamcavity::oracle::{self, BareDetunings, MeanFieldState, OracleError, OracleSettings};
use oamcavity::params::ConfigError;
use oamcavity::pipeline::{self, PipelineError};
use oamcavity::response::{self, ResponseError};
use oamcavity::spectrum::{self, SpectrumError};
use oamcavity::steady_state::SteadyError;
use oamcavity::{derive_params, parse_config, solve_steady, Detuning2Spec, SystemConfig};
use rayon::prelude::*;
use serde::Serialize;

pub mod manifest;

use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MULTISTABLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_RANGE: i32 = 5;
pub const EXIT_FINGERPRINT: i32 = 6;

#[derive(Parser, Debug)]
#[command(name = "oamcavity", version, about = "Double-cavity rotational optomechanics: spectra, calibration and OAM estimation")]
pub struct Cli {
    /// Worker threads for sweeps and calibration (default: logical CPUs)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON system configuration (built-in reference point when absent)
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Steady-state branch to use when the system is multistable
    #[arg(long)]
    pub branch: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Probe transmission T(x), x = (Ω − ω_φ)/ω_φ, as CSV
    Spectrum {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
        x_lo: f64,
        #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
        x_hi: f64,
        #[arg(long, default_value_t = 2001)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Valley position against l1 over an integer range
    Calibrate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, allow_hyphen_values = true)]
        l_min: i64,
        #[arg(long, allow_hyphen_values = true)]
        l_max: i64,
        /// Calibration JSON; a CSV with the same stem is written alongside
        #[arg(long)]
        out: PathBuf,
    },
    /// Invert a measured valley position into a charge estimate
    Estimate {
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        /// Current configuration, checked against the calibration fingerprint
        #[arg(long)]
        config: Option<PathBuf>,
        /// Accept a calibration built for different parameters
        #[arg(long)]
        force: bool,
        /// Ambiguity radius in units of the valley fwhm
        #[arg(long, default_value_t = 0.5)]
        ambiguity_fraction: f64,
    },
    /// One-dimensional parameter sweep
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Number of points (ignored for the l1 axis, which visits every integer)
        #[arg(long, default_value_t = 11)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Observable::Valley)]
        observable: Observable,
        /// Probe detuning x for the transmission observable
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        at_x: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the linear response with the time-domain integration
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Mechanical quality factor used for the comparison
        #[arg(long, default_value_t = 2e3)]
        quality_factor: f64,
        /// Probe amplitude as a fraction of the drive-1 amplitude
        #[arg(long, default_value_t = 1e-3)]
        probe_ratio: f64,
        /// Half-width of the probed x range
        #[arg(long, default_value_t = 0.02)]
        span: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and print the steady state, listing every root
    Steady {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Drive-2 power [W]
    P2,
    /// Effective cavity-2 detuning in units of ω_φ
    Delta2,
    /// Charge l1
    L1,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Valley position x*
    Valley,
    /// Transmission at --at-x
    T,
    /// Normalized effective detuning (Δ1 − ω_φ)/ω_φ
    Detuning,
    /// |x*(l1 + 1) − x*(l1)|
    Shift,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<SteadyError> for Failure {
    fn from(e: SteadyError) -> Self {
        let code = match e {
            SteadyError::Multistable { .. } => EXIT_MULTISTABLE,
            SteadyError::BranchOutOfRange { .. } => EXIT_CONFIG,
            SteadyError::NoConvergence { .. } => EXIT_NUMERIC,
        };
        let hint = if code == EXIT_MULTISTABLE { " (--branch)" } else { "" };
        Failure::new(code, format!("{e}{hint}"))
    }
}

impl From<SpectrumError> for Failure {
    fn from(e: SpectrumError) -> Self {
        let code = match e {
            SpectrumError::InvalidRange(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<ResponseError> for Failure {
    fn from(e: ResponseError) -> Self {
        Failure::new(EXIT_NUMERIC, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::new(EXIT_NUMERIC, e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(e) => e.into(),
            PipelineError::Steady(e) => e.into(),
            PipelineError::Spectrum(e) => e.into(),
        }
    }
}

impl From<OamError> for Failure {
    fn from(e: OamError) -> Self {
        let code = match e {
            OamError::InvalidRange { .. } => EXIT_CONFIG,
            OamError::OutOfRange { .. } => EXIT_RANGE,
            OamError::FingerprintMismatch { .. } => EXIT_FINGERPRINT,
            OamError::TooManyFailures { .. } | OamError::EmptyCurve | OamError::ModelNotInvertible => EXIT_NUMERIC,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_NUMERIC, format!("{}: {e}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<SystemConfig, Failure> {
    match path {
        None => Ok(SystemConfig::baseline()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::config(format!("{}: {e}", p.display())))
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

struct Context {
    argv: Vec<String>,
    subcommand: &'static str,
}

impl Context {
    fn manifest(&self, cfg: Option<(&Option<PathBuf>, &SystemConfig)>, outputs: &[&Path]) -> RunManifest {
        RunManifest::new(
            self.subcommand,
            &self.argv,
            cfg.and_then(|(p, _)| p.as_deref()),
            cfg.map(|(_, c)| c.clone()),
            outputs,
        )
    }

    fn finish(&self, manifest: RunManifest, primary: &Path) -> Result<(), Failure> {
        write(&manifest::manifest_path(primary), &manifest.to_json())
    }
}

fn cmd_spectrum(ctx: &Context, cfg: &ConfigArgs, x_lo: f64, x_hi: f64, n: usize, out: &Path) -> Result<(), Failure> {
    let config = load_config(cfg.config.as_deref())?;
    if n < 3 || !(x_lo < x_hi) {
        return Err(Failure::config(format!("need n >= 3 and x_lo < x_hi (got n = {n}, [{x_lo}, {x_hi}])")));
    }
    let (params, steady) = pipeline::resolve_state(&config, cfg.branch)?;
    let sp = spectrum::sample_spectrum(&params, &steady, x_lo, x_hi, n)?;
    write(out, &sp.to_csv())?;
    ctx.finish(ctx.manifest(Some((&cfg.config, &config)), &[out]), out)?;
    println!("wrote {} points to {}", n, out.display());
    Ok(())
}

fn cmd_calibrate(ctx: &Context, cfg: &ConfigArgs, l_min: i64, l_max: i64, out: &Path) -> Result<(), Failure> {
    let config = load_config(cfg.config.as_deref())?;
    if l_min > l_max {
        return Err(Failure::config(format!("l_min {l_min} exceeds l_max {l_max}")));
    }
    // root numbering is not stable across charges, so one index cannot
    // pick "the same" branch for every entry
    if cfg.branch.is_some() {
        return Err(Failure::config("calibrate needs a monostable system; --branch is not accepted"));
    }
    let curve = oam_meter::build_calibration(&config, l_min, l_max)?;
    let csv_path = out.with_extension("csv");
    write(out, &curve.to_json())?;
    write(&csv_path, &curve.to_csv())?;
    ctx.finish(ctx.manifest(Some((&cfg.config, &config)), &[out, &csv_path]), out)?;
    println!("{} entries written to {}", curve.entries.len(), out.display());
    match curve.lin_fit {
        Some(f) => println!(
            "x* = {:.6e} * l1 + {:.6e}  (r^2 = {:.9}), monotone: {}",
            f.slope, f.intercept, f.r_squared, curve.monotone
        ),
        None => eprintln!("warning: linear fit undefined for a single-point or constant curve"),
    }
    if let Some(f) = curve.first_failure() {
        eprintln!("warning: {} charges failed; first at l1 = {}: {}", curve.failures.len(), f.l1, f.reason);
    }
    Ok(())
}

fn cmd_estimate(
    calibration: &Path,
    x: f64,
    config: Option<&Path>,
    force: bool,
    ambiguity_fraction: f64,
) -> Result<(), Failure> {
    let text = fs::read_to_string(calibration).map_err(|e| Failure::config(format!("{}: {e}", calibration.display())))?;
    let curve = CalibrationCurve::from_json(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", calibration.display())))?;
    if let Some(path) = config {
        let current = load_config(Some(path))?;
        oam_meter::check_fingerprint(&curve, &current, force)?;
    }
    if !(ambiguity_fraction >= 0.0) {
        return Err(Failure::config("ambiguity fraction must be non-negative"));
    }
    let est = oam_meter::estimate_oam_with(
        &curve,
        x,
        EstimateOptions {
            ambiguity_fwhm_fraction: ambiguity_fraction,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&est).expect("estimate serializes"));
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    axis: f64,
    value: Option<f64>,
    error: Option<String>,
}

fn axis_values(axis: Axis, from: f64, to: f64, points: usize) -> Result<Vec<f64>, Failure> {
    if !(from.is_finite() && to.is_finite()) || from > to {
        return Err(Failure::config(format!("empty axis range [{from}, {to}]")));
    }
    match axis {
        Axis::L1 => {
            if from.fract() != 0.0 || to.fract() != 0.0 {
                return Err(Failure::config("l1 axis bounds must be integers"));
            }
            Ok((from as i64..=to as i64).map(|l| l as f64).collect())
        }
        _ => match points {
            0 => Err(Failure::config("empty axis range: --points must be at least 1")),
            1 => Ok(vec![from]),
            n => Ok((0..n).map(|i| from + (to - from) * (i as f64 / (n - 1) as f64)).collect()),
        },
    }
}

fn sweep_point(
    base: &SystemConfig,
    axis: Axis,
    v: f64,
    observable: Observable,
    at_x: f64,
    branch: Option<usize>,
) -> Result<f64, Failure> {
    let mut c = base.clone();
    match axis {
        Axis::P2 => c.drive2_power_w = v,
        Axis::Delta2 => c.detuning2 = Detuning2Spec::EffectiveRadS(v * c.rotation_frequency_rad_s),
        Axis::L1 => c.charge1 = v as i64,
    }
    let violations = oamcavity::validate(&c);
    if !violations.is_empty() {
        return Err(ConfigError::Invalid(violations).into());
    }
    match observable {
        Observable::Valley => Ok(pipeline::locate_valley(&c, branch)?.valley.x_star),
        Observable::T => {
            let (p, s) = pipeline::resolve_state(&c, branch)?;
            Ok(response::transmission_at_x(&p, &s, at_x)?)
        }
        Observable::Detuning => {
            let (p, s) = pipeline::resolve_state(&c, branch)?;
            Ok(s.normalized_delta1(&p))
        }
        Observable::Shift => {
            let a = pipeline::locate_valley(&c, branch)?.valley.x_star;
            c.charge1 += 1;
            let b = pipeline::locate_valley(&c, branch)?.valley.x_star;
            Ok((b - a).abs())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    ctx: &Context,
    cfg: &ConfigArgs,
    axis: Axis,
    from: f64,
    to: f64,
    points: usize,
    observable: Observable,
    at_x: f64,
    out: &Path,
) -> Result<(), Failure> {
    let config = load_config(cfg.config.as_deref())?;
    let values = axis_values(axis, from, to, points)?;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| match sweep_point(&config, axis, v, observable, at_x, cfg.branch) {
            Ok(value) => SweepRow {
                axis: v,
                value: Some(value),
                error: None,
            },
            Err(f) => SweepRow {
                axis: v,
                value: None,
                error: Some(f.message),
            },
        })
        .collect();
    let axis_name = match axis {
        Axis::P2 => "p2_w",
        Axis::Delta2 => "d2_over_omega",
        Axis::L1 => "l1",
    };
    let obs_name = match observable {
        Observable::Valley => "x_star",
        Observable::T => "T",
        Observable::Detuning => "delta1_normalized",
        Observable::Shift => "d",
    };
    let mut csv = format!("{axis_name},{obs_name},valid\n");
    for r in &rows {
        let axis_field = if axis == Axis::L1 {
            format!("{}", r.axis as i64)
        } else {
            format!("{:.16e}", r.axis)
        };
        match r.value {
            Some(v) => csv.push_str(&format!("{axis_field},{v:.16e},1\n")),
            None => csv.push_str(&format!("{axis_field},NaN,0\n")),
        }
    }
    write(out, &csv)?;
    ctx.finish(ctx.manifest(Some((&cfg.config, &config)), &[out]), out)?;
    let invalid: Vec<&SweepRow> = rows.iter().filter(|r| r.value.is_none()).collect();
    println!("{} points written to {} ({} invalid)", rows.len(), out.display(), invalid.len());
    for r in invalid.iter().take(5) {
        eprintln!("  {} = {}: {}", axis_name, r.axis, r.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationPoint {
    x: f64,
    relative_deviation: Option<f64>,
    t_oracle: Option<f64>,
    t_linear: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct ValidationReport {
    quality_factor: f64,
    probe_ratio: f64,
    relaxed_fixed_point_deviation: f64,
    relaxed_from: &'static str,
    points: Vec<ValidationPoint>,
    max_relative_deviation: Option<f64>,
    passed: bool,
}

const VALIDATE_LIMIT: f64 = 1e-3;

#[allow(clippy::too_many_arguments)]
fn cmd_validate(
    ctx: &Context,
    cfg: &ConfigArgs,
    n: usize,
    quality_factor: f64,
    probe_ratio: f64,
    span: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let mut config = load_config(cfg.config.as_deref())?;
    if n == 0 || !(probe_ratio > 0.0) || !(span >= 0.0) {
        return Err(Failure::config("need n >= 1, probe ratio > 0 and span >= 0"));
    }
    config.quality_factor = quality_factor;
    config.probe_power_w = probe_ratio * probe_ratio * config.drive1_power_w;
    let params = derive_params(&config)?;
    let steady = solve_steady(&params)?.resolve(cfg.branch)?;
    let bare = BareDetunings::from_steady(&params, &steady);

    let deviation = |s: &MeanFieldState| {
        let scale = steady.c1s.norm().max(steady.c2s.norm()).max(f64::MIN_POSITIVE);
        let dc = (s.c1 - steady.c1s).norm().max((s.c2 - steady.c2s).norm()) / scale;
        let dphi = if steady.phi_s != 0.0 {
            (s.phi - steady.phi_s).abs() / steady.phi_s.abs()
        } else {
            s.phi.abs()
        };
        dc.max(dphi)
    };
    let mut settings = OracleSettings::default();
    let empty = oracle::relax(&params, &bare, &settings)?;
    let mut relaxed_from = "empty cavity";
    let mut fixed_point = deviation(&empty);
    if fixed_point > 1e-6 {
        // the empty cavity found another fixed point; follow the selected one
        settings.initial = Some(MeanFieldState::from_steady(&steady));
        relaxed_from = "selected steady state";
        fixed_point = deviation(&oracle::relax(&params, &bare, &settings)?);
        eprintln!("note: relaxation from the empty cavity reached a different fixed point; restarting from the selected root");
    }

    let xs: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -span + 2.0 * span * (i as f64 / (n - 1) as f64)).collect()
    };
    let points: Vec<ValidationPoint> = xs
        .par_iter()
        .map(|&x| {
            let omega = params.omega_phi * (1.0 + x);
            let lin = match response::sideband_response(&params, &steady, omega) {
                Ok(r) => r,
                Err(e) => {
                    return ValidationPoint {
                        x,
                        relative_deviation: None,
                        t_oracle: None,
                        t_linear: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            };
            let t_linear = response::transmission(&params, lin.c1_plus, params.eps_p);
            match oracle::transmission_oracle_with(&params, &bare, omega, params.eps_p, &settings) {
                Ok(o) => ValidationPoint {
                    x,
                    relative_deviation: Some((o.demod.c1_plus_est - lin.c1_plus).norm() / lin.c1_plus.norm()),
                    t_oracle: Some(o.t),
                    t_linear,
                    error: None,
                },
                Err(e) => ValidationPoint {
                    x,
                    relative_deviation: None,
                    t_oracle: None,
                    t_linear,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let all_ok = points.iter().all(|p| p.relative_deviation.is_some());
    let max_dev = points
        .iter()
        .filter_map(|p| p.relative_deviation)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let passed = all_ok && max_dev.is_some_and(|d| d <= VALIDATE_LIMIT);
    let report = ValidationReport {
        quality_factor,
        probe_ratio,
        relaxed_fixed_point_deviation: fixed_point,
        relaxed_from,
        points,
        max_relative_deviation: max_dev,
        passed,
    };
    for p in &report.points {
        match (&p.relative_deviation, &p.error) {
            (Some(d), _) => println!("x = {:+.5e}  |dc1+|/|c1+| = {d:.3e}", p.x),
            (None, Some(e)) => println!("x = {:+.5e}  failed: {e}", p.x),
            _ => {}
        }
    }
    println!("relaxed fixed point deviation ({relaxed_from}): {fixed_point:.3e}");
    match max_dev {
        Some(d) => println!("max relative deviation: {d:.3e} (limit {VALIDATE_LIMIT:e})"),
        None => println!("max relative deviation: undefined"),
    }
    if let Some(path) = out {
        write(path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        ctx.finish(ctx.manifest(Some((&cfg.config, &config)), &[path]), path)?;
    }
    if passed {
        println!("PASS");
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_NUMERIC,
            "linearised response and time-domain integration disagree (linearisation breakdown)",
        ))
    }
}

fn cmd_steady(ctx: &Context, cfg: &ConfigArgs, out: Option<&Path>) -> Result<(), Failure> {
    let config = load_config(cfg.config.as_deref())?;
    let params = derive_params(&config)?;
    let report = solve_steady(&params)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = out {
        write(path, &json)?;
        ctx.finish(ctx.manifest(Some((&cfg.config, &config)), &[path]), path)?;
    }
    report.resolve(cfg.branch)?;
    Ok(())
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), Failure> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Failure::config("--jobs must be at least 1"));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let subcommand = match &cli.command {
        Command::Spectrum { .. } => "spectrum",
        Command::Calibrate { .. } => "calibrate",
        Command::Estimate { .. } => "estimate",
        Command::Sweep { .. } => "sweep",
        Command::Validate { .. } => "validate",
        Command::Steady { .. } => "steady",
    };
    let ctx = Context { argv, subcommand };
    match &cli.command {
        Command::Spectrum { cfg, x_lo, x_hi, n, out } => cmd_spectrum(&ctx, cfg, *x_lo, *x_hi, *n, out),
        Command::Calibrate { cfg, l_min, l_max, out } => cmd_calibrate(&ctx, cfg, *l_min, *l_max, out),
        Command::Estimate {
            calibration,
            x,
            config,
            force,
            ambiguity_fraction,
        } => cmd_estimate(calibration, *x, config.as_deref(), *force, *ambiguity_fraction),
        Command::Sweep {
            cfg,
            axis,
            from,
            to,
            points,
            observable,
            at_x,
            out,
        } => cmd_sweep(&ctx, cfg, *axis, *from, *to, *points, *observable, *at_x, out),
        Command::Validate {
            cfg,
            n,
            quality_factor,
            probe_ratio,
            span,
            out,
        } => cmd_validate(&ctx, cfg, *n, *quality_factor, *probe_ratio, *span, out.as_deref()),
        Command::Steady { cfg, out } => cmd_steady(&ctx, cfg, out.as_deref()),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli, argv) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
