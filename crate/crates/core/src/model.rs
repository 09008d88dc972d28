//! Physical parameters of the cavity, drive, mechanical resonator, bath and
//! detection chain, plus the semiclassical steady state around which the
//! fluctuation dynamics are linearized.
//!
//! All frequencies and rates are angular (rad/s). The cavity resonance
//! frequency is approximated by the laser frequency wherever it enters a
//! coupling constant; the relative error is `|Δ₀|/ω₀`, below 1e-8 for every
//! configuration this crate targets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Speed of light, m/s.
    pub c: f64,
}

/// CODATA 2018 exact/recommended values.
pub const CODATA: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    k_b: 1.380_649e-23,
    c: 299_792_458.0,
};

/// How the configured detuning is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetuningReference {
    /// The configured value is the bare detuning Δ₀ = ω_c − ω₀.
    #[default]
    Bare,
    /// The configured value is the effective detuning Δ after the static
    /// radiation-pressure shift (laser locked relative to the shifted cavity).
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Cavity length L, m.
    pub length: f64,
    /// Amplitude decay rate κ, rad/s.
    pub kappa: f64,
    /// Detuning in rad/s; see [`DetuningReference`].
    pub detuning: f64,
    pub detuning_reference: DetuningReference,
    /// Laser angular frequency ω₀, rad/s.
    pub laser_omega: f64,
}

impl CavityParams {
    pub fn from_wavelength(length: f64, kappa: f64, detuning: f64, wavelength: f64) -> Self {
        Self {
            length,
            kappa,
            detuning,
            detuning_reference: DetuningReference::Bare,
            laser_omega: 2.0 * std::f64::consts::PI * CODATA.c / wavelength,
        }
    }

    /// Finesse πc/(2κL).
    pub fn finesse(&self) -> f64 {
        std::f64::consts::PI * CODATA.c / (2.0 * self.kappa * self.length)
    }

    fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(Error::Parameter(format!(
                "cavity length must be > 0, got {}",
                self.length
            )));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Parameter(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.laser_omega > 0.0) {
            return Err(Error::Parameter(format!(
                "laser angular frequency must be > 0, got {}",
                self.laser_omega
            )));
        }
        if !self.detuning.is_finite() {
            return Err(Error::Parameter("detuning must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Input power, W.
    pub input_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalMode {
    /// Resonance ω_j, rad/s.
    pub omega: f64,
    /// Damping γ_j, rad/s.
    pub gamma: f64,
    /// Effective mass, kg.
    pub mass: f64,
    /// Overlap c_j between the optical spot and the mode shape, in [-1, 1].
    pub overlap: f64,
}

impl MechanicalMode {
    pub fn with_quality_factor(omega: f64, quality_factor: f64, mass: f64, overlap: f64) -> Self {
        Self {
            omega,
            gamma: omega / quality_factor,
            mass,
            overlap,
        }
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega / self.gamma
    }

    /// Bose occupation at temperature `t`.
    pub fn thermal_occupation(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let x = CODATA.hbar * self.omega / (CODATA.k_b * t);
        1.0 / x.exp_m1()
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Parameter(format!("mode {index}: {what} must be > 0, got {v}")));
        if !(self.omega > 0.0) {
            return bad("omega", self.omega);
        }
        if !(self.gamma > 0.0) {
            return bad("gamma", self.gamma);
        }
        if !(self.mass > 0.0) {
            return bad("mass", self.mass);
        }
        if !(self.overlap.abs() <= 1.0) {
            return Err(Error::Parameter(format!(
                "mode {index}: overlap must lie in [-1, 1], got {}",
                self.overlap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathParams {
    /// Reservoir temperature, K.
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Amplitude transmission t of the output beam splitter.
    pub transmission: f64,
    /// Homodyne quantum efficiency η.
    pub efficiency: f64,
    /// Homodyne phase θ of the in-loop detector, rad.
    pub phase: f64,
}

impl DetectionParams {
    /// Amplitude reflection r = √(1 − t²).
    pub fn reflection(&self) -> f64 {
        (1.0 - self.transmission * self.transmission).max(0.0).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::Parameter(format!(
                "beam-splitter transmission must lie in (0, 1], got {}",
                self.transmission
            )));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Parameter(format!(
                "homodyne efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        if !self.phase.is_finite() {
            return Err(Error::Parameter("homodyne phase must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub cavity: CavityParams,
    pub drive: DriveParams,
    pub modes: Vec<MechanicalMode>,
    pub bath: BathParams,
    pub detection: DetectionParams,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        if !(self.drive.input_power >= 0.0) {
            return Err(Error::Parameter(format!(
                "input power must be >= 0, got {}",
                self.drive.input_power
            )));
        }
        for (i, m) in self.modes.iter().enumerate() {
            m.validate(i)?;
        }
        if !(self.bath.temperature >= 0.0) {
            return Err(Error::Parameter(format!(
                "temperature must be >= 0, got {}",
                self.bath.temperature
            )));
        }
        self.detection.validate()
    }

    /// Drive amplitude E for this configuration.
    pub fn drive_amplitude(&self) -> Result<f64> {
        drive_amplitude(self.drive.input_power, self.cavity.kappa, self.cavity.laser_omega)
    }

    pub fn bare_couplings(&self) -> Vec<f64> {
        self.modes.iter().map(|m| bare_coupling(m, &self.cavity)).collect()
    }

    /// Kerr-like frequency pull per unit intracavity intensity, β = Σ_j (G₀ʲ)²/ω_j.
    pub fn intensity_pull(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let g0 = bare_coupling(m, &self.cavity);
                g0 * g0 / m.omega
            })
            .sum()
    }

    /// Bare detuning Δ₀ implied by the configured detuning and its reference.
    pub fn bare_detuning(&self) -> Result<f64> {
        match self.cavity.detuning_reference {
            DetuningReference::Bare => Ok(self.cavity.detuning),
            DetuningReference::Effective => {
                let e = self.drive_amplitude()?;
                let k = self.cavity.kappa;
                let d = self.cavity.detuning;
                Ok(d + self.intensity_pull() * e * e / (k * k + d * d))
            }
        }
    }

    pub fn min_mechanical_damping(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.gamma).reduce(f64::min)
    }
}

/// E = √(2 P κ / (ħ ω₀)).
pub fn drive_amplitude(input_power: f64, kappa: f64, laser_omega: f64) -> Result<f64> {
    if !(kappa > 0.0) || !(laser_omega > 0.0) {
        return Err(Error::Parameter(format!(
            "kappa and laser frequency must be > 0 (kappa = {kappa}, omega0 = {laser_omega})"
        )));
    }
    if !(input_power >= 0.0) {
        return Err(Error::Parameter(format!("input power must be >= 0, got {input_power}")));
    }
    Ok((2.0 * input_power * kappa / (CODATA.hbar * laser_omega)).sqrt())
}

/// Single-photon coupling G₀ʲ = (ω₀ c_j / L)·√(ħ/(m_j ω_j)).
pub fn bare_coupling(mode: &MechanicalMode, cavity: &CavityParams) -> f64 {
    cavity.laser_omega * mode.overlap / cavity.length * (CODATA.hbar / (mode.mass * mode.omega)).sqrt()
}

/// Effective coupling written directly in terms of the input power and the
/// effective detuning.
pub fn effective_coupling_from_power(
    mode: &MechanicalMode,
    cavity: &CavityParams,
    input_power: f64,
    detuning: f64,
) -> f64 {
    let k = cavity.kappa;
    2.0 * cavity.laser_omega * mode.overlap / cavity.length
        * (input_power * k / (mode.mass * mode.omega * cavity.laser_omega * (k * k + detuning * detuning))).sqrt()
}

/// Scalar field sampled on a rectangular grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl SampledField {
    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                values.push(f(ix, iy));
            }
        }
        Self { nx, ny, values }
    }
}

/// Overlap c_j = Σ v_opt²·u_jx·dA between the normalized optical intensity
/// profile and the axial mode shape, both sampled on the same grid.
pub fn overlap_integral(field_sq: &SampledField, mode_shape: &SampledField, cell_area: f64) -> Result<f64> {
    if field_sq.nx != mode_shape.nx
        || field_sq.ny != mode_shape.ny
        || field_sq.values.len() != field_sq.nx * field_sq.ny
        || mode_shape.values.len() != mode_shape.nx * mode_shape.ny
    {
        return Err(Error::Parameter(format!(
            "grids are not congruent ({}x{} vs {}x{})",
            field_sq.nx, field_sq.ny, mode_shape.nx, mode_shape.ny
        )));
    }
    if !(cell_area > 0.0) {
        return Err(Error::Parameter(format!("cell area must be > 0, got {cell_area}")));
    }
    let c: f64 = field_sq
        .values
        .iter()
        .zip(&mode_shape.values)
        .map(|(v, u)| v * u)
        .sum::<f64>()
        * cell_area;
    if c.abs() > 1.0 + 1e-6 {
        return Err(Error::Normalization { value: c });
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Intracavity amplitude α_s, real and non-negative.
    pub alpha_s: f64,
    /// |α_s|².
    pub intensity: f64,
    /// Effective detuning Δ, rad/s.
    pub detuning: f64,
    /// Bare detuning Δ₀ this branch was solved for, rad/s.
    pub bare_detuning: f64,
    /// Static displacement q_sʲ per mode.
    pub displacement: Vec<f64>,
    /// Bare couplings G₀ʲ, rad/s.
    pub bare_coupling: Vec<f64>,
    /// Effective couplings G_j = √2 G₀ʲ α_s, rad/s.
    pub coupling: Vec<f64>,
    /// Number of coexisting steady-state branches.
    pub branch_count: usize,
}

impl SteadyState {
    fn from_intensity(params: &SystemParams, bare_detuning: f64, intensity: f64, branch_count: usize) -> Self {
        let g0 = params.bare_couplings();
        let beta = params.intensity_pull();
        let alpha_s = intensity.sqrt();
        Self {
            alpha_s,
            intensity,
            detuning: bare_detuning - beta * intensity,
            bare_detuning,
            displacement: g0
                .iter()
                .zip(&params.modes)
                .map(|(g, m)| g * intensity / m.omega)
                .collect(),
            coupling: g0.iter().map(|g| g * alpha_s * std::f64::consts::SQRT_2).collect(),
            bare_coupling: g0,
            branch_count,
        }
    }

    pub fn is_resonant(&self, kappa: f64) -> bool {
        self.detuning.abs() <= RESONANCE_TOLERANCE * kappa
    }
}

/// |Δ|/κ below which a configuration is treated as exactly resonant.
pub const RESONANCE_TOLERANCE: f64 = 1e-12;

/// All positive real solutions I of I·(κ² + (Δ₀ − βI)²) = E², ascending.
///
/// With an effective detuning reference the branch that realises the
/// requested Δ is rebuilt from the exact relation I = E²/(κ² + Δ²) so that
/// Δ is reproduced without cancellation error.
pub fn solve_steady_state(params: &SystemParams) -> Result<Vec<SteadyState>> {
    params.validate()?;
    let e = params.drive_amplitude()?;
    let kappa = params.cavity.kappa;
    let delta0 = params.bare_detuning()?;

    if e == 0.0 {
        return Ok(vec![SteadyState::from_intensity(params, delta0, 0.0, 1)]);
    }

    // Work in x = I / I₀ with I₀ = E²/κ²: b²x³ − 2d₀b x² + (1 + d₀²)x − 1 = 0.
    let i0 = e * e / (kappa * kappa);
    let d0 = delta0 / kappa;
    let b = params.intensity_pull() * i0 / kappa;
    let roots = intensity_roots(d0, b)?;
    let count = roots.len();

    let mut branches: Vec<SteadyState> = roots
        .iter()
        .map(|&x| SteadyState::from_intensity(params, delta0, x * i0, count))
        .collect();

    if params.cavity.detuning_reference == DetuningReference::Effective {
        let d = params.cavity.detuning;
        let target = e * e / (kappa * kappa + d * d);
        let (idx, _) = branches
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (s.intensity - target).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Numerical("no steady-state branch found".into()))?;
        let mut exact = SteadyState::from_intensity(params, delta0, target, count);
        exact.detuning = d;
        branches[idx] = exact;
    }
    Ok(branches)
}

/// Positive roots of b²x³ − 2d₀b x² + (1 + d₀²)x − 1, polished and merged.
fn intensity_roots(d0: f64, b: f64) -> Result<Vec<f64>> {
    let lin = 1.0 + d0 * d0;
    if b == 0.0 {
        return Ok(vec![1.0 / lin]);
    }
    let a3 = b * b;
    let a2 = -2.0 * d0 * b;
    let f = |x: f64| ((a3 * x + a2) * x + lin) * x - 1.0;
    let df = |x: f64| (3.0 * a3 * x + 2.0 * a2) * x + lin;
    let scale = |x: f64| ((a3 * x).abs() * x * x + (a2 * x).abs() * x + lin * x.abs() + 1.0).max(1.0);

    let mut roots: Vec<f64> = real_cubic_roots(a2 / a3, lin / a3, -1.0 / a3)
        .into_iter()
        .filter(|x| *x > 0.0)
        .map(|mut x| {
            for _ in 0..4 {
                let d = df(x);
                if d == 0.0 {
                    break;
                }
                let next = x - f(x) / d;
                if next > 0.0 && f(next).abs() < f(x).abs() {
                    x = next;
                } else {
                    break;
                }
            }
            x
        })
        .collect();
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-8 * a.abs().max(b.abs()));

    for &x in &roots {
        let rel = f(x).abs() / scale(x);
        // Near a turning point (double root) the residual is limited by √ε
        // conditioning, not by the polish.
        if rel > 1e-10 && df(x).abs() > 1e-6 * scale(x) / x {
            return Err(Error::Numerical(format!(
                "steady-state root x = {x} has relative residual {rel:e}"
            )));
        }
    }
    if roots.is_empty() {
        return Err(Error::Numerical("steady-state cubic has no positive root".into()));
    }
    Ok(roots)
}

/// Real roots of x³ + a x² + b x + c = 0 (trigonometric form when three are
/// real, Cardano otherwise).
pub fn real_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if p == 0.0 && q == 0.0 {
        return vec![-shift];
    }
    if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        vec![u + v - shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}

/// A two-sided input-noise spectral density, S(ω).
#[derive(Clone)]
pub enum InputSpectrum {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl InputSpectrum {
    pub fn at(&self, omega: f64) -> f64 {
        match self {
            InputSpectrum::Constant(v) => *v,
            InputSpectrum::Function(f) => f(omega),
        }
    }

    fn constant_value(&self) -> Option<f64> {
        match self {
            InputSpectrum::Constant(v) => Some(*v),
            InputSpectrum::Function(_) => None,
        }
    }
}

impl std::fmt::Debug for InputSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputSpectrum::Constant(v) => write!(f, "Constant({v})"),
            InputSpectrum::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// Spectra of the optical inputs: cavity input a_in, beam-splitter vacuum
/// port b_in and the detector loss port v_in (θ quadrature only).
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub a_x: InputSpectrum,
    pub a_y: InputSpectrum,
    pub a_xy: InputSpectrum,
    pub b_x: InputSpectrum,
    pub b_y: InputSpectrum,
    pub b_xy: InputSpectrum,
    pub v_theta: InputSpectrum,
}

impl NoiseModel {
    pub fn vacuum() -> Self {
        Self {
            a_x: InputSpectrum::Constant(0.5),
            a_y: InputSpectrum::Constant(0.5),
            a_xy: InputSpectrum::Constant(0.0),
            b_x: InputSpectrum::Constant(0.5),
            b_y: InputSpectrum::Constant(0.5),
            b_xy: InputSpectrum::Constant(0.0),
            v_theta: InputSpectrum::Constant(0.5),
        }
    }

    pub fn is_vacuum(&self) -> bool {
        let diag = [&self.a_x, &self.a_y, &self.b_x, &self.b_y, &self.v_theta];
        let cross = [&self.a_xy, &self.b_xy];
        diag.iter().all(|s| s.constant_value() == Some(0.5)) && cross.iter().all(|s| s.constant_value() == Some(0.0))
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::vacuum()
    }
}
