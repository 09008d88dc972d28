//! Frequency-domain response of the linearized cavity + resonator + loop.
//!
//! Everything is evaluated with rates divided by κ and converted back at the
//! boundary. Frequencies are sideband frequencies relative to the laser.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectionParams, MechanicalMode, SteadyState};
use crate::poly::Poly;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Rational transfer function g(ω) = N(s)/M(s), s = −iω, real coefficients
/// in ascending powers of s and physical units (g in rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFilter {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalFilter {
    /// Single-pole low-pass `gain / (1 + s/bandwidth)`.
    pub fn low_pass(gain: f64, bandwidth: f64) -> Self {
        Self {
            numerator: vec![gain],
            denominator: vec![1.0, 1.0 / bandwidth],
        }
    }

    pub fn at(&self, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, -omega);
        Poly(self.numerator.clone()).eval(s) / Poly(self.denominator.clone()).eval(s)
    }

    pub fn validate(&self) -> Result<()> {
        let den = Poly(self.denominator.clone());
        if self.denominator.iter().all(|c| *c == 0.0) {
            return Err(Error::Parameter("feedback filter denominator is zero".into()));
        }
        if self.numerator.iter().chain(&self.denominator).any(|c| !c.is_finite()) {
            return Err(Error::Parameter("feedback filter coefficients must be finite".into()));
        }
        // Re s < 0  ⇔  Im ω < 0.
        for root in den.roots()? {
            if root.re >= 0.0 {
                return Err(Error::Parameter(format!(
                    "feedback filter has a non-causal or unstable pole at s = {root}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackLaw {
    #[default]
    Off,
    /// Frequency-independent gains g_j, rad/s.
    Proportional {
        gains: Vec<f64>,
    },
    RationalPerMode {
        filters: Vec<RationalFilter>,
    },
}

impl FeedbackLaw {
    /// g_j = scale·G_j for every mode.
    pub fn proportional_to_coupling(scale: f64, coupling: &[f64]) -> Self {
        FeedbackLaw::Proportional {
            gains: coupling.iter().map(|g| scale * g).collect(),
        }
    }

    pub fn is_off(&self) -> bool {
        match self {
            FeedbackLaw::Off => true,
            FeedbackLaw::Proportional { gains } => gains.iter().all(|g| *g == 0.0),
            FeedbackLaw::RationalPerMode { .. } => false,
        }
    }

    pub fn gain_at(&self, mode: usize, omega: f64) -> Complex64 {
        match self {
            FeedbackLaw::Off => Complex64::new(0.0, 0.0),
            FeedbackLaw::Proportional { gains } => Complex64::new(gains[mode], 0.0),
            FeedbackLaw::RationalPerMode { filters } => filters[mode].at(omega),
        }
    }

    pub fn validate(&self, mode_count: usize) -> Result<()> {
        match self {
            FeedbackLaw::Off => Ok(()),
            FeedbackLaw::Proportional { gains } => {
                if gains.len() != mode_count {
                    return Err(Error::Parameter(format!(
                        "proportional feedback has {} gains for {mode_count} modes",
                        gains.len()
                    )));
                }
                if gains.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Parameter("feedback gains must be finite".into()));
                }
                Ok(())
            }
            FeedbackLaw::RationalPerMode { filters } => {
                if filters.len() != mode_count {
                    return Err(Error::Parameter(format!(
                        "rational feedback has {} filters for {mode_count} modes",
                        filters.len()
                    )));
                }
                filters.iter().try_for_each(RationalFilter::validate)
            }
        }
    }
}

/// χ_j(ω) = ω_j / (ω_j² − ω² − iωγ_j), in s.
pub fn susceptibility(mode: &MechanicalMode, omega: f64) -> Complex64 {
    mode.omega / Complex64::new(mode.omega * mode.omega - omega * omega, -omega * mode.gamma)
}

/// λ_G(ω) = Σ_j G_j² χ_j(ω), rad/s.
pub fn lambda_big_g(steady: &SteadyState, modes: &[MechanicalMode], omega: f64) -> Complex64 {
    modes
        .iter()
        .zip(&steady.coupling)
        .map(|(m, g)| g * g * susceptibility(m, omega))
        .sum()
}

/// λ_g(ω) = Σ_j G_j χ_j(ω) g_j(ω), rad/s.
pub fn lambda_small_g(steady: &SteadyState, modes: &[MechanicalMode], feedback: &FeedbackLaw, omega: f64) -> Complex64 {
    if matches!(feedback, FeedbackLaw::Off) {
        return Complex64::new(0.0, 0.0);
    }
    modes
        .iter()
        .zip(&steady.coupling)
        .enumerate()
        .map(|(j, (m, g))| g * susceptibility(m, omega) * feedback.gain_at(j, omega))
        .sum()
}

/// All response functions at one sideband frequency.
///
/// σ_k and μ_k are the weights of (X_a,in, Y_a,in, X_b,in, Y_b,in, θ_v,in,
/// Σ_j G_j χ_j ξ_j) in the output quadratures X_d and Y_d.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseAt {
    pub omega: f64,
    pub chi: Vec<Complex64>,
    pub lambda_big_g: Complex64,
    pub lambda_small_g: Complex64,
    pub denominator: Complex64,
    pub sigma: [Complex64; 6],
    pub mu: [Complex64; 6],
}

/// Evaluate D(ω) and the twelve output coefficients.
pub fn transfer_coefficients(
    steady: &SteadyState,
    modes: &[MechanicalMode],
    kappa: f64,
    detection: &DetectionParams,
    feedback: &FeedbackLaw,
    omega: f64,
) -> Result<ResponseAt> {
    let chi: Vec<Complex64> = modes.iter().map(|m| susceptibility(m, omega)).collect();
    let lam_big = lambda_big_g(steady, modes, omega);
    let lam_small = lambda_small_g(steady, modes, feedback, omega);

    let t = detection.transmission;
    let r = detection.reflection();
    let se = detection.efficiency.sqrt();
    let sl = (1.0 - detection.efficiency).max(0.0).sqrt();
    let (sin_t, cos_t) = detection.phase.sin_cos();

    // Scaled quantities: w = ω/κ, d = Δ/κ, lG = λ_G/κ, lg = λ_g/κ.
    let w = omega / kappa;
    let d = steady.detuning / kappa;
    let lg_big = lam_big / kappa;
    let lg = lam_small / kappa;
    let minus = Complex64::new(1.0, -w); // (κ − iω)/κ
    let plus = Complex64::new(1.0, w); // (κ + iω)/κ

    let cav = minus + r * se * sin_t * lg;
    let den = minus * cav + d * (d - lg_big + r * se * cos_t * lg);
    if den.norm() < 1e-14 {
        return Err(Error::SingularResponse {
            omega,
            magnitude: den.norm() * kappa * kappa,
        });
    }
    let inv = 1.0 / den;
    let root_kappa = kappa.sqrt();

    let sigma = [
        t * inv * (plus * cav - d * (d - lg_big)),
        t * d * inv * (2.0 + r * se * sin_t * lg),
        -inv * (d * se * cos_t * lg + r * minus * cav + r * (d * d - d * lg_big)),
        -inv * (t * t * d * se * sin_t * lg),
        -t * d * inv * sl * lg,
        t * d * inv * std::f64::consts::SQRT_2 / root_kappa,
    ];
    let mu = [
        -t * inv * (2.0 * d - 2.0 * lg_big + plus * r * se * cos_t * lg),
        t * inv * (1.0 + w * w - d * (d - lg_big + r * se * cos_t * lg)),
        -inv * t * t * (minus * se * cos_t * lg),
        -inv * (minus * se * sin_t * lg + r * (minus * minus + d * d - d * lg_big + d * r * se * cos_t * lg)),
        -t * inv * (minus * sl * lg),
        t * inv * minus * std::f64::consts::SQRT_2 / root_kappa,
    ];

    let denominator = den * kappa * kappa;
    let check = (kappa - I * omega) * (kappa - I * omega + r * se * sin_t * lam_small)
        + steady.detuning * (steady.detuning - lam_big + r * se * cos_t * lam_small);
    debug_assert!(
        (check - denominator).norm() <= 1e-9 * (check.norm() + kappa * kappa),
        "D(ω) assembly mismatch: {check} vs {denominator}"
    );

    Ok(ResponseAt {
        omega,
        chi,
        lambda_big_g: lam_big,
        lambda_small_g: lam_small,
        denominator,
        sigma,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(omega: f64) -> MechanicalMode {
        MechanicalMode::with_quality_factor(omega, 1e4, 1e-10, 1.0)
    }

    fn steady(coupling: Vec<f64>, detuning: f64) -> SteadyState {
        let n = coupling.len();
        SteadyState {
            alpha_s: 1.0,
            intensity: 1.0,
            detuning,
            bare_detuning: detuning,
            displacement: vec![0.0; n],
            bare_coupling: coupling.clone(),
            coupling,
            branch_count: 1,
        }
    }

    fn detection(t: f64, theta: f64) -> DetectionParams {
        DetectionParams {
            transmission: t,
            efficiency: 1.0,
            phase: theta,
        }
    }

    #[test]
    fn susceptibility_limits() {
        let m = mode(3e5);
        assert!((susceptibility(&m, 0.0) - 1.0 / 3e5).norm() < 1e-20);
        let on_res = susceptibility(&m, 3e5);
        let expect = Complex64::new(0.0, 1e4 / 3e5);
        assert!((on_res - expect).norm() < 1e-12 * expect.norm());
        let far = susceptibility(&m, 3e7);
        let asym = -3e5 / (3e7f64 * 3e7);
        assert!((far.re / asym - 1.0).abs() < 0.02);
    }

    #[test]
    fn lambda_big_g_on_resonance() {
        let m = mode(3e5);
        let s = steady(vec![2e5], 0.0);
        let l = lambda_big_g(&s, &[m], 3e5);
        let expect_im = 4e10 * 1e4 / 3e5;
        assert!((l.im / expect_im - 1.0).abs() < 1e-12);
        let low = lambda_big_g(&s, &[m], 10.0);
        let approx = 10.0 * 4e10 / (9e10 * 1e4);
        assert!((low.im / approx - 1.0).abs() < 1e-6);
        assert_eq!(
            lambda_big_g(&steady(vec![0.0], 0.0), &[m], 1e3),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn lambda_small_g_identities() {
        let modes = [mode(2e5), mode(4e5)];
        let s = steady(vec![1e5, 3e5], 0.0);
        assert_eq!(
            lambda_small_g(&s, &modes, &FeedbackLaw::Off, 123.0),
            Complex64::new(0.0, 0.0)
        );
        let c = 0.37;
        let fb = FeedbackLaw::proportional_to_coupling(c, &s.coupling);
        for w in [1.0, 5e4, 2e5, 7e5] {
            let lhs = lambda_small_g(&s, &modes, &fb, w);
            let rhs = c * lambda_big_g(&s, &modes, w);
            assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm());
        }
        let single = steady(vec![1e5], 0.0);
        let fb = FeedbackLaw::Proportional { gains: vec![50.0] };
        let v = lambda_small_g(&single, &modes[..1], &fb, 0.0);
        assert!((v.re - 50.0 * 1e5 / 2e5).abs() < 1e-12);
    }

    #[test]
    fn resonant_feedback_off_coefficients() {
        let modes = [mode(3e5)];
        let s = steady(vec![4e7], 0.0);
        let det = detection(0.99, 0.3);
        let kappa = 1e6;
        for w in [1e3, 1e5, 3e5, 2e6] {
            let resp = transfer_coefficients(&s, &modes, kappa, &det, &FeedbackLaw::Off, w).unwrap();
            let s1 = 0.99 * Complex64::new(kappa, w) / Complex64::new(kappa, -w);
            assert!((resp.sigma[0] - s1).norm() < 1e-14);
            assert!((resp.sigma[2] + det.reflection()).norm() < 1e-14);
            for k in [1, 3, 4, 5] {
                assert_eq!(resp.sigma[k].norm(), 0.0);
            }
            let unit = resp.sigma[0].norm_sqr() + resp.sigma[2].norm_sqr();
            assert!((unit - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_denominator_is_reported() {
        // Static instability: D(0) = κ² + Δ² − Δ λ_G(0) = 0.
        let m = mode(3e5);
        let kappa = 1e6;
        let delta = 2e6;
        let lam0 = (kappa * kappa + delta * delta) / delta;
        let g = (lam0 * m.omega).sqrt();
        let s = steady(vec![g], delta);
        let err = transfer_coefficients(&s, &[m], kappa, &detection(1.0, 0.0), &FeedbackLaw::Off, 0.0);
        assert!(matches!(err, Err(Error::SingularResponse { .. })));
    }

    #[test]
    fn rational_filter_validation() {
        assert!(RationalFilter::low_pass(2.0, 1e5).validate().is_ok());
        let unstable = RationalFilter {
            numerator: vec![1.0],
            denominator: vec![-1.0, 1e-5],
        };
        assert!(unstable.validate().is_err());
        let lp = RationalFilter::low_pass(2.0, 1e5);
        assert!((lp.at(0.0) - 2.0).norm() < 1e-15);
        assert!((lp.at(1e5).norm() - 2.0 / 2f64.sqrt()).abs() < 1e-12);
        let law = FeedbackLaw::Proportional { gains: vec![1.0] };
        assert!(law.validate(2).is_err());
    }
}
