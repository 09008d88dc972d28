//! Feedback design: the closed-form proportional law and a derivative-free
//! search over (θ, c) with g_j = c·G_j.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::model::{DetectionParams, NoiseModel, SteadyState, SystemParams};
use crate::response::FeedbackLaw;
use crate::spectra::{evaluate_grid, FrequencyGrid};
use crate::stability::is_stable;

/// g_j = 2r√η cosθ·G_j. With r = 0 there is no light to feed back and the
/// law is Off, together with a notice.
pub fn closed_form_gains(steady: &SteadyState, detection: &DetectionParams) -> (FeedbackLaw, Option<String>) {
    let scale = closed_form_scale(detection);
    if detection.reflection() == 0.0 {
        return (
            FeedbackLaw::Off,
            Some("t = 1: no light reaches the feedback detector, feedback disabled".into()),
        );
    }
    // cos(π/2) evaluates to ~6e-17; treat it as the exact zero it represents.
    let cos = detection.phase.cos();
    let cos = if cos.abs() <= f64::EPSILON { 0.0 } else { cos };
    (
        FeedbackLaw::proportional_to_coupling(scale * cos, &steady.coupling),
        None,
    )
}

/// 2r√η.
pub fn closed_form_scale(detection: &DetectionParams) -> f64 {
    2.0 * detection.reflection() * detection.efficiency.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandWeight {
    #[default]
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandObjective {
    pub lo: f64,
    pub hi: f64,
    pub weight: BandWeight,
    pub points_per_decade: usize,
}

pub const DEFAULT_POINTS_PER_DECADE: usize = 2000;

impl BandObjective {
    pub fn new(lo: f64, hi: f64, weight: BandWeight) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Parameter(format!(
                "band must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            lo,
            hi,
            weight,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
        })
    }

    pub fn with_density(mut self, points_per_decade: usize) -> Self {
        self.points_per_decade = points_per_decade;
        self
    }
}

/// Weighted mean of S_opt over the band (trapezoid in ω or ln ω).
/// Refuses configurations that are not Stable.
pub fn band_objective(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    band: &BandObjective,
) -> Result<f64> {
    let report = is_stable(params, steady, feedback)?;
    if !report.is_stable() {
        return Err(Error::Unstable(format!(
            "band objective refused, max Im ω = {:e} s⁻¹",
            report.max_im
        )));
    }
    band_mean(params, steady, feedback, band)
}

fn band_mean(params: &SystemParams, steady: &SteadyState, feedback: &FeedbackLaw, band: &BandObjective) -> Result<f64> {
    let grid = FrequencyGrid::log_refined(band.lo, band.hi, band.points_per_decade, &params.modes)?;
    let pts = evaluate_grid(params, steady, feedback, &NoiseModel::vacuum(), &grid)?;
    let x: Vec<f64> = match band.weight {
        BandWeight::Uniform => grid.points.clone(),
        BandWeight::LogUniform => grid.points.iter().map(|w| w.ln()).collect(),
    };
    let mut integral = 0.0;
    for i in 1..pts.len() {
        integral += 0.5 * (pts[i].s_opt + pts[i - 1].s_opt) * (x[i] - x[i - 1]);
    }
    Ok(integral / (x[x.len() - 1] - x[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub theta: f64,
    pub gain_scale: f64,
    /// None for candidates rejected as not Stable.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub theta: f64,
    pub gain_scale: f64,
    pub feedback: FeedbackLaw,
    pub objective: f64,
    /// Objective at the closed-form initializer (θ = 0, c = 2r√η).
    pub initial_objective: f64,
    pub trace: Vec<TraceEntry>,
    pub budget_exhausted: bool,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Upper end of the gain-scale range, in units of 2r√η.
    pub c_max_factor: f64,
    /// Relative objective difference treated as a tie.
    pub tie_tolerance: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            budget: 1000,
            c_max_factor: 10.0,
            tie_tolerance: 1e-9,
        }
    }
}

struct Evaluator<'a> {
    params: &'a SystemParams,
    steady: &'a SteadyState,
    band: &'a BandObjective,
    budget: usize,
    trace: Vec<TraceEntry>,
    exhausted: bool,
}

impl Evaluator<'_> {
    fn eval(&mut self, theta: f64, c: f64) -> Result<f64> {
        if let Some(e) = self.trace.iter().find(|e| e.theta == theta && e.gain_scale == c) {
            return Ok(e.objective.unwrap_or(f64::INFINITY));
        }
        if self.trace.len() >= self.budget {
            self.exhausted = true;
            return Ok(f64::INFINITY);
        }
        let mut p = self.params.clone();
        p.detection.phase = theta;
        let fb = FeedbackLaw::proportional_to_coupling(c, &self.steady.coupling);
        let value = if is_stable(&p, self.steady, &fb)?.is_stable() {
            Some(band_mean(&p, self.steady, &fb, self.band)?)
        } else {
            None
        };
        self.trace.push(TraceEntry {
            theta,
            gain_scale: c,
            objective: value,
        });
        Ok(value.unwrap_or(f64::INFINITY))
    }

    /// Golden-section search of f along one coordinate on [a, b]; returns
    /// the best (x, f) seen including the incumbent.
    #[allow(clippy::too_many_arguments)]
    fn golden(
        &mut self,
        mut a: f64,
        mut b: f64,
        tol: f64,
        incumbent: (f64, f64),
        along_theta: bool,
        other: f64,
    ) -> Result<(f64, f64)> {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut best = incumbent;
        let f = |ev: &mut Self, x: f64| -> Result<f64> {
            if along_theta {
                ev.eval(x, other)
            } else {
                ev.eval(other, x)
            }
        };
        let mut x1 = b - INV_PHI * (b - a);
        let mut x2 = a + INV_PHI * (b - a);
        let mut f1 = f(self, x1)?;
        let mut f2 = f(self, x2)?;
        while b - a > tol && !self.exhausted {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - INV_PHI * (b - a);
                f1 = f(self, x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + INV_PHI * (b - a);
                f2 = f(self, x2)?;
            }
        }
        for (x, fx) in [(x1, f1), (x2, f2)] {
            if fx < best.1 {
                best = (x, fx);
            }
        }
        Ok(best)
    }
}

/// Coordinate descent over θ ∈ [−π/2, π/2] and c ∈ [0, c_max] from several
/// deterministic starts, beginning with the closed-form point (0, 2r√η).
pub fn tune_feedback(
    params: &SystemParams,
    steady: &SteadyState,
    band: &BandObjective,
    options: &TuneOptions,
) -> Result<TuneResult> {
    let c0 = closed_form_scale(&params.detection);
    if c0 == 0.0 {
        let mut p = params.clone();
        p.detection.phase = 0.0;
        let value = band_objective(&p, steady, &FeedbackLaw::Off, band)?;
        return Ok(TuneResult {
            theta: 0.0,
            gain_scale: 0.0,
            feedback: FeedbackLaw::Off,
            objective: value,
            initial_objective: value,
            trace: vec![TraceEntry {
                theta: 0.0,
                gain_scale: 0.0,
                objective: Some(value),
            }],
            budget_exhausted: false,
            notice: Some("r√η = 0: feedback has no effect, returning feedback off".into()),
        });
    }
    let c_max = options.c_max_factor * c0;
    let starts = [(0.0, c0), (0.0, 0.0), (0.3, c0), (-0.3, c0), (0.0, 3.0 * c0)];
    let per_start = (options.budget / starts.len()).max(4);

    let runs: Vec<Result<(Vec<TraceEntry>, bool)>> = starts
        .par_iter()
        .map(|&(theta0, c_start)| {
            let mut ev = Evaluator {
                params,
                steady,
                band,
                budget: per_start,
                trace: Vec::new(),
                exhausted: false,
            };
            let mut theta = theta0;
            let mut c = c_start;
            let mut fx = ev.eval(theta, c)?;
            let (tol_theta, tol_c) = (1e-4, 1e-4 * c0);
            let mut w_theta = 0.5;
            let mut w_c = c0;
            while !ev.exhausted {
                let (nc, fc) = ev.golden((c - w_c).max(0.0), (c + w_c).min(c_max), tol_c, (c, fx), false, theta)?;
                let (nt, ft) = ev.golden(
                    (theta - w_theta).max(-FRAC_PI_2),
                    (theta + w_theta).min(FRAC_PI_2),
                    tol_theta,
                    (theta, fc),
                    true,
                    nc,
                )?;
                let (dc, dt) = ((nc - c).abs(), (nt - theta).abs());
                (theta, c, fx) = (nt, nc, ft);
                if dc <= 2.0 * tol_c && dt <= 2.0 * tol_theta {
                    break;
                }
                w_c = (4.0 * dc).max(8.0 * tol_c);
                w_theta = (4.0 * dt).max(8.0 * tol_theta);
            }
            Ok((ev.trace, ev.exhausted))
        })
        .collect();

    let mut trace = Vec::new();
    let mut run_of = Vec::new();
    let mut run_exhausted = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        let (t, e) = run?;
        run_of.extend(std::iter::repeat_n(k, t.len()));
        trace.extend(t);
        run_exhausted.push(e);
    }
    let initial_objective = trace[0]
        .objective
        .ok_or_else(|| Error::Unstable("closed-form feedback initializer is not stable".into()))?;

    let best = trace.iter().filter_map(|e| e.objective).fold(f64::INFINITY, f64::min);
    let (chosen_at, chosen) = trace
        .iter()
        .enumerate()
        .filter(|(_, e)| {
            e.objective
                .is_some_and(|v| v <= best + options.tie_tolerance * best.abs())
        })
        .min_by(|(_, a), (_, b)| {
            a.gain_scale
                .abs()
                .total_cmp(&b.gain_scale.abs())
                .then(a.theta.abs().total_cmp(&b.theta.abs()))
        })
        .map(|(i, e)| (i, *e))
        .ok_or_else(|| Error::Numerical("no stable candidate found".into()))?;
    // Only the descent that produced the answer decides whether it is
    // unconverged; other starts may stall in regions that lost anyway.
    let exhausted = run_exhausted[run_of[chosen_at]];

    Ok(TuneResult {
        theta: chosen.theta,
        gain_scale: chosen.gain_scale,
        feedback: if chosen.gain_scale == 0.0 {
            FeedbackLaw::Off
        } else {
            FeedbackLaw::proportional_to_coupling(chosen.gain_scale, &steady.coupling)
        },
        objective: chosen.objective.unwrap_or(best),
        initial_objective,
        trace,
        budget_exhausted: exhausted,
        notice: exhausted.then(|| "search budget exhausted, returning best found".to_string()),
    })
}
