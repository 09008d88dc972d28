//! Output quadrature noise spectra of the transmitted mode d.
//!
//! Normalization: vacuum (shot noise) reads 1/2. The cross spectrum S_XY is
//! the fully symmetrized, real correlation spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MechanicalMode, NoiseModel, SteadyState, SystemParams, CODATA};
use crate::response::{lambda_big_g, lambda_small_g, transfer_coefficients, FeedbackLaw};

/// Shot-noise level.
pub const SHOT_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpectra {
    pub s_x: f64,
    pub s_y: f64,
    pub s_xy: f64,
}

/// coth(ħω/2k_BT), with the small-argument expansion 1/x + x/3 below 1e-6
/// and the T → 0 limit sign(ω).
pub fn thermal_factor(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return omega.signum();
    }
    let x = CODATA.hbar * omega / (2.0 * CODATA.k_b * temperature);
    if x.abs() < 1e-6 {
        1.0 / x + x / 3.0
    } else {
        1.0 / x.tanh()
    }
}

/// coth(ħω/2k_BT)·Im λ_G(ω): the thermal force spectrum seen through the
/// couplings. Non-negative, with a finite limit as ω → 0.
pub fn thermal_drive(steady: &SteadyState, modes: &[MechanicalMode], temperature: f64, omega: f64) -> f64 {
    thermal_factor(omega, temperature) * lambda_big_g(steady, modes, omega).im
}

/// S_X, S_Y and S_XY from the twelve transfer coefficients and arbitrary
/// input-noise spectra. Does not check stability.
pub fn quadrature_spectra(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    noise: &NoiseModel,
    omega: f64,
) -> Result<QuadratureSpectra> {
    let resp = transfer_coefficients(
        steady,
        &params.modes,
        params.cavity.kappa,
        &params.detection,
        feedback,
        omega,
    )?;
    let thermal = thermal_factor(omega, params.bath.temperature) * resp.lambda_big_g.im;
    let (ax, ay, axy) = (noise.a_x.at(omega), noise.a_y.at(omega), noise.a_xy.at(omega));
    let (bx, by, bxy) = (noise.b_x.at(omega), noise.b_y.at(omega), noise.b_xy.at(omega));
    let v = noise.v_theta.at(omega);

    let s = &resp.sigma;
    let m = &resp.mu;
    let cross = |a: num_complex::Complex64, b: num_complex::Complex64| (a * b.conj()).re;

    let s_x = s[0].norm_sqr() * ax
        + s[1].norm_sqr() * ay
        + 2.0 * cross(s[0], s[1]) * axy
        + s[2].norm_sqr() * bx
        + s[3].norm_sqr() * by
        + 2.0 * cross(s[2], s[3]) * bxy
        + s[4].norm_sqr() * v
        + s[5].norm_sqr() * thermal;
    let s_y = m[0].norm_sqr() * ax
        + m[1].norm_sqr() * ay
        + 2.0 * cross(m[0], m[1]) * axy
        + m[2].norm_sqr() * bx
        + m[3].norm_sqr() * by
        + 2.0 * cross(m[2], m[3]) * bxy
        + m[4].norm_sqr() * v
        + m[5].norm_sqr() * thermal;
    let s_xy = cross(s[0], m[0]) * ax
        + cross(s[1], m[1]) * ay
        + (cross(s[0], m[1]) + cross(s[1], m[0])) * axy
        + cross(s[2], m[2]) * bx
        + cross(s[3], m[3]) * by
        + (cross(s[2], m[3]) + cross(s[3], m[2])) * bxy
        + cross(s[4], m[4]) * v
        + cross(s[5], m[5]) * thermal;
    Ok(QuadratureSpectra { s_x, s_y, s_xy })
}

/// The four additive pieces of the residual spectrum at resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTerms {
    /// 2(r/t)²·S_XY², vacuum leaking in through the output beam splitter.
    pub beam_splitter: f64,
    /// Brownian force contribution.
    pub thermal: f64,
    /// Contribution of the dissipative (imaginary) part of the response.
    pub imaginary_response: f64,
    /// Vacuum noise injected by the loop, including its interference with
    /// the intracavity fluctuations; may be negative.
    pub feedback_injection: f64,
}

impl ResidualTerms {
    pub fn total(&self) -> f64 {
        self.beam_splitter + self.thermal + self.imaginary_response + self.feedback_injection
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantSpectra {
    pub s_xy: f64,
    pub s_r: f64,
    pub s_y: f64,
    pub terms: ResidualTerms,
}

/// Closed forms valid for Δ = 0 and vacuum inputs: S_XY, the residual S_r
/// and S_Y = 2S_XY² + 1/2 + S_r. S_X is exactly 1/2 in this case.
pub fn resonant_fast_path(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    omega: f64,
) -> Result<ResonantSpectra> {
    let kappa = params.cavity.kappa;
    if !steady.is_resonant(kappa) {
        return Err(Error::Precondition(format!(
            "resonant closed forms need Δ = 0, got Δ = {:e} rad/s",
            steady.detuning
        )));
    }
    let det = &params.detection;
    let t = det.transmission;
    let r = det.reflection();
    let se = det.efficiency.sqrt();
    let (sin_t, cos_t) = det.phase.sin_cos();

    let lam_big = lambda_big_g(steady, &params.modes, omega);
    let lam_small = lambda_small_g(steady, &params.modes, feedback, omega);
    let minus = num_complex::Complex64::new(kappa, -omega);
    let plus = num_complex::Complex64::new(kappa, omega);
    let cav = minus + r * se * sin_t * lam_small;
    let ratio = lam_big / (plus * cav);
    let k2w2 = kappa * kappa + omega * omega;

    let s_xy = kappa * t * t * ratio.re;
    let coth = thermal_factor(omega, params.bath.temperature);
    let terms = ResidualTerms {
        beam_splitter: 2.0 * r * r / (t * t) * s_xy * s_xy,
        thermal: 2.0 * kappa * t * t * lam_big.im * coth / cav.norm_sqr(),
        imaginary_response: 2.0 * kappa * kappa * t * t * ratio.im * ratio.im,
        feedback_injection: t * t / 2.0
            * (lam_small.norm_sqr() * k2w2 - 4.0 * kappa * r * se * cos_t * (lam_big.conj() * lam_small * plus).re)
            / (k2w2 * cav.norm_sqr()),
    };
    let s_r = terms.total();
    Ok(ResonantSpectra {
        s_xy,
        s_r,
        s_y: 2.0 * s_xy * s_xy + SHOT_NOISE + s_r,
        terms,
    })
}

/// S_X·S_Y − S_XY², with the rounding error of S_XY² compensated.
fn determinant(q: &QuadratureSpectra) -> f64 {
    let w = q.s_xy * q.s_xy;
    let err = (-q.s_xy).mul_add(q.s_xy, w);
    q.s_x.mul_add(q.s_y, -w) + err
}

/// Noise of the quadrature at field phase φ,
/// (S_X+S_Y)/2 + cos2φ(S_X−S_Y)/2 + sin2φ·S_XY.
pub fn phase_spectrum(q: &QuadratureSpectra, phi: f64) -> f64 {
    // Evaluated on the principal axes, S_opt·cos²δ + S_max·sin²δ with
    // δ = φ − φ_opt, so a deep minimum keeps full relative precision.
    let (s_opt, phi_opt) = optimal_spectrum(q);
    let s_max = 0.5 * (q.s_x + q.s_y + principal_spread(q));
    let (s, c) = (phi - phi_opt).sin_cos();
    s_opt * c * c + s_max * s * s
}

fn principal_spread(q: &QuadratureSpectra) -> f64 {
    (q.s_x - q.s_y).hypot(2.0 * q.s_xy)
}

/// Minimum over φ of the quadrature noise and the phase attaining it.
pub fn optimal_spectrum(q: &QuadratureSpectra) -> (f64, f64) {
    let diff = q.s_x - q.s_y;
    let s_opt = 2.0 * determinant(q) / (q.s_x + q.s_y + principal_spread(q));
    let phi = if diff == 0.0 && q.s_xy == 0.0 {
        0.0
    } else {
        0.5 * (-2.0 * q.s_xy).atan2(-diff)
    };
    (s_opt, phi)
}

/// Width of the phase interval with sub-shot-noise noise, arctan|1/S_XY|.
pub fn squeezing_phase_window(q: &QuadratureSpectra) -> f64 {
    if q.s_xy == 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        (1.0 / q.s_xy).abs().atan()
    }
}

/// 10·log10(S / (1/2)).
pub fn to_decibels(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "spectrum value must be > 0 for dB conversion, got {s}"
        )));
    }
    Ok(10.0 * (s / SHOT_NOISE).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub omega: f64,
    pub s_x: f64,
    pub s_y: f64,
    pub s_xy: f64,
    pub s_opt: f64,
    pub phi_opt: f64,
    /// Residual spectrum, only on the resonant vacuum-input path.
    pub s_r: Option<f64>,
    /// S_X·S_Y − S_XY² − 1/4.
    pub heisenberg_margin: f64,
}

impl SpectrumPoint {
    pub fn quadratures(&self) -> QuadratureSpectra {
        QuadratureSpectra {
            s_x: self.s_x,
            s_y: self.s_y,
            s_xy: self.s_xy,
        }
    }
}

pub fn evaluate_point(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    noise: &NoiseModel,
    omega: f64,
) -> Result<SpectrumPoint> {
    let q = quadrature_spectra(params, steady, feedback, noise, omega)?;
    let s_r = if steady.is_resonant(params.cavity.kappa) && noise.is_vacuum() {
        Some(resonant_fast_path(params, steady, feedback, omega)?.s_r)
    } else {
        None
    };
    let (s_opt, phi_opt) = optimal_spectrum(&q);
    Ok(SpectrumPoint {
        omega,
        s_x: q.s_x,
        s_y: q.s_y,
        s_xy: q.s_xy,
        s_opt,
        phi_opt,
        s_r,
        heisenberg_margin: determinant(&q) - 0.25,
    })
}

/// Evaluate every grid point in parallel; output stays in grid order.
pub fn evaluate_grid(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    noise: &NoiseModel,
    grid: &FrequencyGrid,
) -> Result<Vec<SpectrumPoint>> {
    grid.points
        .par_iter()
        .map(|&w| evaluate_point(params, steady, feedback, noise, w))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPolicy {
    Linear,
    Log,
    LogRefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
    pub policy: GridPolicy,
}

/// Linear points per refined resonance window.
pub const RESONANCE_POINTS: usize = 41;
/// Half-width of a refined resonance window, in units of γ_j.
pub const RESONANCE_HALF_WIDTH: f64 = 5.0;

impl FrequencyGrid {
    fn check_band(lo: f64, hi: f64, n: usize) -> Result<()> {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Parameter(format!(
                "frequency band must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        if n < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 points, got {n}")));
        }
        Ok(())
    }

    pub fn linear(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::check_band(lo, hi, n)?;
        let step = (hi - lo) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        points[n - 1] = hi;
        Ok(Self {
            points,
            policy: GridPolicy::Linear,
        })
    }

    pub fn log(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::check_band(lo, hi, n)?;
        let (a, b) = (lo.ln(), hi.ln());
        let mut points: Vec<f64> = (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect();
        points[0] = lo;
        points[n - 1] = hi;
        Ok(Self {
            points,
            policy: GridPolicy::Log,
        })
    }

    /// Log spacing at `points_per_decade`, plus 41 linear points across
    /// ω_j ± 5γ_j for every mode overlapping the band.
    pub fn log_refined(lo: f64, hi: f64, points_per_decade: usize, modes: &[MechanicalMode]) -> Result<Self> {
        let n = ((points_per_decade as f64) * (hi / lo).log10()).ceil() as usize + 1;
        let mut points = Self::log(lo, hi, n.max(2))?.points;
        for m in modes {
            let a = (m.omega - RESONANCE_HALF_WIDTH * m.gamma).max(lo);
            let b = (m.omega + RESONANCE_HALF_WIDTH * m.gamma).min(hi);
            if a >= b {
                continue;
            }
            let step = 2.0 * RESONANCE_HALF_WIDTH * m.gamma / (RESONANCE_POINTS - 1) as f64;
            let start = m.omega - RESONANCE_HALF_WIDTH * m.gamma;
            points.extend(
                (0..RESONANCE_POINTS)
                    .map(|i| start + step * i as f64)
                    .filter(|w| *w >= a && *w <= b),
            );
        }
        points.sort_by(|a, b| a.total_cmp(b));
        points.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs());
        Self::from_points(points, GridPolicy::LogRefined)
    }

    pub fn from_points(points: Vec<f64>, policy: GridPolicy) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("frequency grid is empty".into()));
        }
        if points.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Parameter("grid frequencies must be finite and > 0".into()));
        }
        if points.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Parameter("grid frequencies must be strictly increasing".into()));
        }
        Ok(Self { points, policy })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
