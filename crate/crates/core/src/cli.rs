//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 instability refusal,
//! 4 numerical error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, FeedbackSpec, RunConfig};
use crate::error::{Error, Result};
use crate::model::{NoiseModel, SteadyState};
use crate::optimize::{band_objective, tune_feedback, BandObjective, TuneOptions};
use crate::oracle::{
    compare_to_analytic, estimate_spectra, simulate, write_trajectory, CompareOptions, Comparison, EstimatedSpectra,
    Trajectory, TrajectoryConfig, Window,
};
use crate::response::FeedbackLaw;
use crate::spectra::{
    evaluate_grid, evaluate_point, optimal_spectrum, phase_spectrum, resonant_fast_path, to_decibels, GridPolicy,
    SpectrumPoint,
};
use crate::stability::{is_stable, select_branch, StabilityReport, Verdict};
use crate::table::{write_manifest, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const PRESETS: [(&str, &str); 5] = [
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig2b", include_str!("../presets/fig2b.toml")),
    ("fig3a", include_str!("../presets/fig3a.toml")),
    ("fig3b", include_str!("../presets/fig3b.toml")),
    ("oracle_single", include_str!("../presets/oracle_single.toml")),
];

/// Text of a built-in preset.
pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

#[derive(Debug, Parser)]
#[command(
    name = "squeezelab",
    version,
    about = "Ponderomotive squeezing spectra with homodyne feedback"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in configuration: fig2, fig2b, fig3a, fig3b, oracle_single.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output data file; the manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// on, off, or a TOML file holding a [feedback] table.
    #[arg(long)]
    pub feedback: Option<String>,
    /// Proceed even if the configuration is not stable.
    #[arg(long)]
    pub force: bool,
    /// Oracle seed, overriding the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// lo,hi,points[,linear|log|log_refined] in rad/s (points per decade
    /// for log_refined).
    #[arg(long)]
    pub grid: Option<String>,
    /// lo,hi in rad/s.
    #[arg(long)]
    pub band: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[value(alias = "p_in")]
    Pin,
    #[value(alias = "T")]
    Temperature,
    #[value(alias = "gain_scale")]
    GainScale,
    Theta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quadrature and optimal spectra on the configured grid.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Noise versus homodyne phase at one frequency.
    PhaseScan {
        #[command(flatten)]
        common: Common,
        /// Frequency, rad/s.
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Band objective and low-frequency figure of merit along one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// lo,hi,count
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        /// Logarithmic spacing.
        #[arg(long)]
        log: bool,
    },
    /// Search θ and the gain scale for the lowest band-mean S_opt.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Time-domain simulation compared with the analytic spectra.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Write the raw trajectory here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Characteristic roots and verdict.
    Stability {
        #[command(flatten)]
        common: Common,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) | Error::Normalization { .. } => EXIT_CONFIG,
        Error::Unstable(_) => EXIT_UNSTABLE,
        _ => EXIT_NUMERICAL,
    }
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Prepared {
    cfg: RunConfig,
    feedback_spec: FeedbackSpec,
    steady: SteadyState,
    feedback: FeedbackLaw,
}

fn parse_list(text: &str, what: &str) -> Result<Vec<String>> {
    let parts: Vec<String> = text.split(',').map(|s| s.trim().to_string()).collect();
    if parts.iter().any(String::is_empty) {
        return Err(Error::Config(format!("--{what}: empty field in \"{text}\"")));
    }
    Ok(parts)
}

fn parse_number(text: &str, what: &str) -> Result<f64> {
    text.parse()
        .map_err(|_| Error::Config(format!("--{what}: \"{text}\" is not a number")))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), _) => config::load(path)?,
        (None, Some(name)) => {
            let text = preset(name).ok_or_else(|| {
                Error::Config(format!(
                    "unknown preset \"{name}\" (available: {})",
                    preset_names().collect::<Vec<_>>().join(", ")
                ))
            })?;
            config::parse(text)?
        }
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if let Some(g) = &common.grid {
        let parts = parse_list(g, "grid")?;
        if !(3..=4).contains(&parts.len()) {
            return Err(Error::Config("--grid expects lo,hi,points[,spacing]".into()));
        }
        cfg.grid.lo = parse_number(&parts[0], "grid")?;
        cfg.grid.hi = parse_number(&parts[1], "grid")?;
        let n: usize = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("--grid: \"{}\" is not a count", parts[2])))?;
        if let Some(spacing) = parts.get(3) {
            cfg.grid.policy = match spacing.as_str() {
                "linear" => GridPolicy::Linear,
                "log" => GridPolicy::Log,
                "log_refined" => GridPolicy::LogRefined,
                other => return Err(Error::Config(format!("--grid: unknown spacing \"{other}\""))),
            };
        }
        cfg.grid.points = n;
        cfg.grid.points_per_decade = n;
    }
    if let Some(b) = &common.band {
        let parts = parse_list(b, "band")?;
        if parts.len() != 2 {
            return Err(Error::Config("--band expects lo,hi".into()));
        }
        cfg.band.lo = parse_number(&parts[0], "band")?;
        cfg.band.hi = parse_number(&parts[1], "band")?;
    }
    if let Some(seed) = common.seed {
        cfg.oracle.seed = seed;
    }
    Ok(cfg)
}

fn prepare(common: &Common) -> Result<Prepared> {
    let cfg = load_config(common)?;
    let feedback_spec = match common.feedback.as_deref() {
        None => cfg.feedback.clone(),
        Some("off") => FeedbackSpec::Off,
        Some("on") if cfg.feedback.is_off() => FeedbackSpec::ClosedForm,
        Some("on") => cfg.feedback.clone(),
        Some(path) => config::load_feedback(Path::new(path))?,
    };
    let steady = select_branch(&cfg.params, cfg.branch)?;
    let feedback = feedback_spec.resolve(&steady, &cfg.params.detection);
    feedback
        .validate(cfg.params.modes.len())
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(Prepared {
        cfg,
        feedback_spec,
        steady,
        feedback,
    })
}

fn gate(p: &Prepared, force: bool) -> Result<StabilityReport> {
    let report = is_stable(&p.cfg.params, &p.steady, &p.feedback)?;
    match report.verdict {
        Verdict::Stable => {}
        Verdict::Marginal => eprintln!(
            "warning: configuration is marginally stable (max Im ω = {:e} s⁻¹)",
            report.max_im
        ),
        Verdict::Unstable if force => eprintln!("warning: configuration is unstable, continuing because of --force"),
        Verdict::Unstable => {
            let worst = report.worst_root().unwrap_or_default();
            return Err(Error::Unstable(format!(
                "worst root ω = {:e} {:+e}i s⁻¹ (use --force to override)",
                worst.re, worst.im
            )));
        }
    }
    Ok(report)
}

fn out_path(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

#[derive(Serialize)]
struct BaseManifest<'a, T: Serialize> {
    config: &'a RunConfig,
    feedback_spec: &'a FeedbackSpec,
    feedback: &'a FeedbackLaw,
    steady_state: &'a SteadyState,
    stability: Option<&'a StabilityReport>,
    #[serde(flatten)]
    extra: T,
}

fn manifest<T: Serialize>(
    p: &Prepared,
    stability: Option<&StabilityReport>,
    data: &Path,
    command: &str,
    start: Instant,
    extra: T,
) -> Result<()> {
    write_manifest(
        data,
        command,
        start.elapsed().as_secs_f64(),
        BaseManifest {
            config: &p.cfg,
            feedback_spec: &p.feedback_spec,
            feedback: &p.feedback,
            steady_state: &p.steady,
            stability,
            extra,
        },
    )?;
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Spectrum { common } => run_spectrum(&common),
        Command::PhaseScan { common, omega, points } => run_phase_scan(&common, omega, points),
        Command::Sweep {
            common,
            axis,
            range,
            log,
        } => run_sweep(&common, axis, &range, log),
        Command::Optimize { common, budget } => run_optimize(&common, budget),
        Command::Oracle { common, dump } => run_oracle(&common, dump.as_deref()),
        Command::Stability { common } => run_stability(&common),
    }
}

pub fn run_spectrum(common: &Common) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let report = gate(&p, common.force)?;
    let grid = p.cfg.grid.build(&p.cfg.params.modes)?;
    let pts = evaluate_grid(&p.cfg.params, &p.steady, &p.feedback, &NoiseModel::vacuum(), &grid)?;

    let mut t = Table::new(&[
        "omega_rad_per_s",
        "S_X",
        "S_Y",
        "S_XY",
        "S_r",
        "S_opt",
        "S_opt_dB",
        "phi_opt_rad",
    ]);
    t.comment("squeezelab spectrum");
    t.comment("omega in rad/s; spectra in units where shot noise = 1/2; S_r blank off resonance");
    for pt in &pts {
        t.push(vec![
            Some(pt.omega),
            Some(pt.s_x),
            Some(pt.s_y),
            Some(pt.s_xy),
            pt.s_r,
            Some(pt.s_opt),
            to_decibels(pt.s_opt).ok(),
            Some(pt.phi_opt),
        ]);
    }
    let out = out_path(common, "spectrum.csv");
    t.write(&out)?;
    manifest(
        &p,
        Some(&report),
        &out,
        "spectrum",
        start,
        serde_json::json!({ "grid": grid }),
    )?;
    let best = pts.iter().map(|q| q.s_opt).fold(f64::INFINITY, f64::min);
    println!(
        "wrote {} points to {} (min S_opt = {:.4e}, {:.2} dB)",
        pts.len(),
        out.display(),
        best,
        to_decibels(best).unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Uniform φ grid over [−π/2, π/2] plus φ_opt and a log-spaced cluster
/// around it, so the narrow dip is resolved.
pub fn phase_points(points: usize, phi_opt: f64, half_width: f64) -> Vec<f64> {
    use std::f64::consts::FRAC_PI_2;
    let n = points.max(2);
    let mut phis: Vec<f64> = (0..n)
        .map(|i| -FRAC_PI_2 + std::f64::consts::PI * i as f64 / (n - 1) as f64)
        .collect();
    phis.push(phi_opt);
    let w = if half_width.is_finite() && half_width > 0.0 {
        half_width
    } else {
        1e-3
    };
    for k in -40..=40 {
        let d = w * 10f64.powf(k as f64 / 20.0);
        phis.push(phi_opt + d);
        phis.push(phi_opt - d);
    }
    phis.retain(|p| (-FRAC_PI_2..=FRAC_PI_2).contains(p));
    phis.sort_by(|a, b| a.total_cmp(b));
    phis.dedup();
    phis
}

pub fn run_phase_scan(common: &Common, omega: Option<f64>, points: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let report = gate(&p, common.force)?;
    let omega = omega.unwrap_or(p.cfg.phase_scan.omega);
    let points = points.unwrap_or(p.cfg.phase_scan.points);
    if !(omega > 0.0) {
        return Err(Error::Config(format!("phase-scan frequency must be > 0, got {omega}")));
    }
    let pt = evaluate_point(&p.cfg.params, &p.steady, &p.feedback, &NoiseModel::vacuum(), omega)?;
    let q = pt.quadratures();
    let (s_opt, phi_opt) = optimal_spectrum(&q);
    let s_max = q.s_x + q.s_y - s_opt;
    let phis = phase_points(points, phi_opt, (s_opt / s_max).sqrt());

    let mut t = Table::new(&["phi_rad", "S_phi", "S_phi_dB"]);
    t.comment("squeezelab phase-scan");
    t.comment(format!("omega_rad_per_s = {omega:e}"));
    t.comment(format!("S_opt = {s_opt:e}, phi_opt_rad = {phi_opt:e}"));
    let mut min = (f64::INFINITY, 0.0);
    for phi in &phis {
        let s = phase_spectrum(&q, *phi);
        if s < min.0 {
            min = (s, *phi);
        }
        t.push(vec![Some(*phi), Some(s), to_decibels(s).ok()]);
    }
    let out = out_path(common, "phase_scan.csv");
    t.write(&out)?;
    manifest(
        &p,
        Some(&report),
        &out,
        "phase-scan",
        start,
        serde_json::json!({ "omega": omega, "s_opt": s_opt, "phi_opt": phi_opt, "points": phis.len() }),
    )?;
    println!(
        "dip {:.2} dB at φ = {:.6e} rad (φ_opt = {:.6e}); wrote {}",
        to_decibels(min.0).unwrap_or(f64::NAN),
        min.1,
        phi_opt,
        out.display()
    );
    Ok(())
}

fn sweep_values(range: &str, log: bool) -> Result<Vec<f64>> {
    let parts = parse_list(range, "range")?;
    if parts.len() != 3 {
        return Err(Error::Config("--range expects lo,hi,count".into()));
    }
    let lo = parse_number(&parts[0], "range")?;
    let hi = parse_number(&parts[1], "range")?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| Error::Config(format!("--range: \"{}\" is not a count", parts[2])))?;
    if n == 0 {
        return Err(Error::Config("--range count must be ≥ 1".into()));
    }
    if log && !(lo > 0.0 && hi > 0.0) {
        return Err(Error::Config("--log needs a positive range".into()));
    }
    Ok((0..n)
        .map(|i| {
            let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect())
}

type SweepRow = (bool, Option<f64>, Option<f64>, f64);

/// One sweep row: (refused, band objective, 2S_XY²/S_r at the band's low
/// edge, max Im ω).
fn sweep_point(p: &Prepared, axis: Axis, value: f64) -> Result<SweepRow> {
    let mut params = p.cfg.params.clone();
    let mut spec = p.feedback_spec.clone();
    match axis {
        Axis::Pin => params.drive.input_power = value,
        Axis::Temperature => params.bath.temperature = value,
        Axis::GainScale => spec = FeedbackSpec::Scaled { gain_scale: value },
        Axis::Theta => params.detection.phase = value,
    }
    params.validate().map_err(|e| Error::Config(e.to_string()))?;
    let steady = select_branch(&params, p.cfg.branch)?;
    let fb = spec.resolve(&steady, &params.detection);
    let report = is_stable(&params, &steady, &fb)?;
    if !report.is_stable() {
        return Ok((true, None, None, report.max_im));
    }
    let band = BandObjective::new(p.cfg.band.lo, p.cfg.band.hi, p.cfg.band.weight)?;
    let obj = band_objective(&params, &steady, &fb, &band)?;
    let fom = if steady.is_resonant(params.cavity.kappa) {
        let r = resonant_fast_path(&params, &steady, &fb, band.lo)?;
        Some(2.0 * r.s_xy * r.s_xy / r.s_r)
    } else {
        None
    };
    Ok((false, Some(obj), fom, report.max_im))
}

pub fn run_sweep(common: &Common, axis: Axis, range: &str, log: bool) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let values = sweep_values(range, log)?;
    let rows: Vec<Result<SweepRow>> = values.par_iter().map(|v| sweep_point(&p, axis, *v)).collect();

    let mut t = Table::new(&[
        "value",
        "refused",
        "band_objective",
        "figure_of_merit",
        "max_im_rad_per_s",
    ]);
    t.comment(format!(
        "squeezelab sweep, axis = {}",
        axis.to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default()
    ));
    t.comment(format!(
        "band [{:e}, {:e}] rad/s; figure_of_merit = 2 S_XY^2 / S_r at the band's low edge",
        p.cfg.band.lo, p.cfg.band.hi
    ));
    let mut refused = 0;
    for (v, row) in values.iter().zip(rows) {
        let (r, obj, fom, max_im) = row?;
        refused += r as usize;
        t.push(vec![Some(*v), Some(if r { 1.0 } else { 0.0 }), obj, fom, Some(max_im)]);
    }
    let out = out_path(common, "sweep.csv");
    t.write(&out)?;
    manifest(
        &p,
        None,
        &out,
        "sweep",
        start,
        serde_json::json!({ "axis": axis, "values": values, "band": p.cfg.band }),
    )?;
    println!(
        "wrote {} sweep rows ({} refused) to {}",
        values.len(),
        refused,
        out.display()
    );
    Ok(())
}

pub fn run_optimize(common: &Common, budget: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let band = BandObjective::new(p.cfg.band.lo, p.cfg.band.hi, p.cfg.band.weight)?;
    let mut options = TuneOptions::default();
    if let Some(b) = budget {
        options.budget = b;
    }
    let result = tune_feedback(&p.cfg.params, &p.steady, &band, &options)?;

    let mut t = Table::new(&["theta_rad", "gain_scale", "objective"]);
    t.comment("squeezelab optimize trace; objective blank for candidates that are not stable");
    for e in &result.trace {
        t.push(vec![Some(e.theta), Some(e.gain_scale), e.objective]);
    }
    let out = out_path(common, "optimize.csv");
    t.write(&out)?;
    let mut tuned = p.cfg.params.clone();
    tuned.detection.phase = result.theta;
    let report = is_stable(&tuned, &p.steady, &result.feedback)?;
    manifest(
        &p,
        Some(&report),
        &out,
        "optimize",
        start,
        serde_json::json!({
            "band": p.cfg.band,
            "theta": result.theta,
            "gain_scale": result.gain_scale,
            "closed_form_scale": crate::optimize::closed_form_scale(&p.cfg.params.detection),
            "objective": result.objective,
            "initial_objective": result.initial_objective,
            "evaluations": result.trace.len(),
            "budget_exhausted": result.budget_exhausted,
            "notice": result.notice,
        }),
    )?;
    if let Some(n) = &result.notice {
        eprintln!("notice: {n}");
    }
    println!(
        "θ = {:.4e} rad, c = {:.4e} (closed form {:.4e}), objective {:.6e} (initial {:.6e})",
        result.theta,
        result.gain_scale,
        crate::optimize::closed_form_scale(&p.cfg.params.detection),
        result.objective,
        result.initial_objective
    );
    Ok(())
}

pub fn trajectory_config(cfg: &RunConfig) -> TrajectoryConfig {
    let o = &cfg.oracle;
    let base = TrajectoryConfig::suggested(&cfg.params, o.seed, o.record_stride);
    TrajectoryConfig {
        dt: o.dt.unwrap_or(base.dt),
        duration: o.duration.unwrap_or(base.duration),
        burn_in: o.burn_in.unwrap_or(base.burn_in),
        ..base
    }
}

/// Simulated trajectory, its Welch spectra and the comparison with the
/// analytic curves at the same frequencies.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub trajectory_config: TrajectoryConfig,
    pub trajectory: Trajectory,
    pub estimate: EstimatedSpectra,
    pub analytic: Vec<SpectrumPoint>,
    pub s_x: Comparison,
    pub s_y: Comparison,
    pub s_xy: Comparison,
}

pub fn oracle_run(cfg: &RunConfig, steady: &SteadyState, feedback: &FeedbackLaw, force: bool) -> Result<OracleRun> {
    let tcfg = trajectory_config(cfg);
    let traj = simulate(&cfg.params, steady, feedback, &tcfg, force)?;
    let o = &cfg.oracle;
    let x = traj
        .column("X_d")
        .ok_or_else(|| Error::Numerical("missing X_d".into()))?;
    let y = traj
        .column("Y_d")
        .ok_or_else(|| Error::Numerical("missing Y_d".into()))?;
    let est = estimate_spectra(x, y, traj.sample_interval, Window::Hann, o.segment_length, o.overlap)?;

    let analytic: Vec<SpectrumPoint> = est
        .frequencies
        .par_iter()
        .map(|w| evaluate_point(&cfg.params, steady, feedback, &NoiseModel::vacuum(), *w))
        .collect::<Result<_>>()?;
    let opts = CompareOptions {
        lo: o.band_lo,
        hi: o.band_hi,
        tolerance: o.tolerance,
        sub_bands: o.sub_bands,
        notches: cfg
            .params
            .modes
            .iter()
            .map(|m| (m.omega, o.notch_gammas * m.gamma))
            .collect(),
    };
    let curve = |f: fn(&SpectrumPoint) -> f64| -> Vec<(f64, f64)> {
        est.frequencies.iter().copied().zip(analytic.iter().map(f)).collect()
    };
    let s_x = compare_to_analytic(&est.frequencies, &est.s_x, &curve(|a| a.s_x), &opts)?;
    let s_y = compare_to_analytic(&est.frequencies, &est.s_y, &curve(|a| a.s_y), &opts)?;
    let s_xy = compare_to_analytic(&est.frequencies, &est.s_xy, &curve(|a| a.s_xy), &opts)?;
    Ok(OracleRun {
        trajectory_config: tcfg,
        trajectory: traj,
        estimate: est,
        analytic,
        s_x,
        s_y,
        s_xy,
    })
}

pub fn run_oracle(common: &Common, dump: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let report = gate(&p, common.force)?;
    let run = oracle_run(&p.cfg, &p.steady, &p.feedback, common.force)?;
    if let Some(path) = dump {
        write_trajectory(path, &run.trajectory)?;
    }
    let o = &p.cfg.oracle;
    let (est, analytic) = (&run.estimate, &run.analytic);
    let (cmp_x, cmp_y, cmp_xy) = (&run.s_x, &run.s_y, &run.s_xy);
    let tcfg = &run.trajectory_config;
    let traj = &run.trajectory;

    let mut t = Table::new(&[
        "omega_rad_per_s",
        "S_X_est",
        "S_X_se",
        "S_Y_est",
        "S_Y_se",
        "S_XY_est",
        "S_XY_se",
        "S_X_analytic",
        "S_Y_analytic",
        "S_XY_analytic",
    ]);
    t.comment(format!(
        "squeezelab oracle; {} Welch segments of {} samples, sample interval {:e} s",
        est.segment_count, o.segment_length, traj.sample_interval
    ));
    for (i, a) in analytic.iter().enumerate() {
        t.push(vec![
            Some(est.frequencies[i]),
            Some(est.s_x[i]),
            Some(est.se_x[i]),
            Some(est.s_y[i]),
            Some(est.se_y[i]),
            Some(est.s_xy[i]),
            Some(est.se_xy[i]),
            Some(a.s_x),
            Some(a.s_y),
            Some(a.s_xy),
        ]);
    }
    let out = out_path(common, "oracle.csv");
    t.write(&out)?;
    manifest(
        &p,
        Some(&report),
        &out,
        "oracle",
        start,
        serde_json::json!({
            "trajectory": tcfg,
            "segment_count": est.segment_count,
            "comparison": { "S_X": cmp_x, "S_Y": cmp_y, "S_XY": cmp_xy },
        }),
    )?;
    let verdict = |c: &Comparison| if c.pass { "pass" } else { "FAIL" };
    println!(
        "oracle vs analytic on [{:e}, {:e}] rad/s at {:.0}%: S_X {} ({:.2}%), S_Y {} ({:.2}%), S_XY {} ({:.2}%)",
        o.band_lo,
        o.band_hi,
        100.0 * o.tolerance,
        verdict(cmp_x),
        100.0 * cmp_x.max_deviation,
        verdict(cmp_y),
        100.0 * cmp_y.max_deviation,
        verdict(cmp_xy),
        100.0 * cmp_xy.max_deviation
    );
    Ok(())
}

pub fn run_stability(common: &Common) -> Result<()> {
    let start = Instant::now();
    let p = prepare(common)?;
    let report = is_stable(&p.cfg.params, &p.steady, &p.feedback)?;
    let mut t = Table::new(&["re_omega_rad_per_s", "im_omega_rad_per_s"]);
    t.comment(format!("squeezelab stability; verdict {:?}", report.verdict));
    for r in &report.roots {
        t.push(vec![Some(r.re), Some(r.im)]);
    }
    let out = out_path(common, "stability.csv");
    t.write(&out)?;
    manifest(&p, Some(&report), &out, "stability", start, serde_json::json!({}))?;
    println!(
        "{:?}: max Im ω = {:e} s⁻¹ over {} roots (threshold {:e})",
        report.verdict,
        report.max_im,
        report.roots.len(),
        report.margin_threshold
    );
    Ok(())
}
