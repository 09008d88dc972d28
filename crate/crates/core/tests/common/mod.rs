#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use squeezelab::model::{
    BathParams, CavityParams, DetectionParams, DetuningReference, DriveParams, MechanicalMode, SteadyState,
    SystemParams, CODATA,
};
use squeezelab::response::FeedbackLaw;
use squeezelab::stability::{select_branch, BranchChoice};

pub fn params(
    modes: Vec<MechanicalMode>,
    detuning: f64,
    t: f64,
    eta: f64,
    theta: f64,
    temperature: f64,
) -> SystemParams {
    let mut cavity = CavityParams::from_wavelength(0.06, 1e6, detuning, 1064e-9);
    cavity.detuning_reference = DetuningReference::Effective;
    SystemParams {
        cavity,
        drive: DriveParams { input_power: 0.03 },
        modes,
        bath: BathParams { temperature },
        detection: DetectionParams {
            transmission: t,
            efficiency: eta,
            phase: theta,
        },
    }
}

pub fn ladder(count: usize, lo: f64, hi: f64, q: f64) -> Vec<MechanicalMode> {
    (0..count)
        .map(|j| {
            let w = if count == 1 {
                lo
            } else {
                lo + (hi - lo) * j as f64 / (count - 1) as f64
            };
            MechanicalMode::with_quality_factor(w, q, 1e-10, 1.0)
        })
        .collect()
}

pub fn steady(p: &SystemParams) -> SteadyState {
    select_branch(p, BranchChoice::Auto).expect("steady state")
}

/// Quadrature spectra from a direct solve of the linearized Langevin
/// equations at one frequency, with time derivatives replaced by −iω.
///
/// Unknowns (q_j, p_j, X, Y). Sources (X_in, Y_in, X_b, Y_b, v, ξ_j) with
/// two-sided densities 1/2 for the optical vacua and
/// γ_j (ω/ω_j) coth(ħω/2k_BT) for the thermal forces.
pub fn direct_spectra(p: &SystemParams, st: &SteadyState, fb: &FeedbackLaw, omega: f64) -> (f64, f64, f64) {
    let n = p.modes.len();
    let dim = 2 * n + 2;
    let (ix, iy) = (2 * n, 2 * n + 1);
    let sources = 5 + n;
    let kappa = p.cavity.kappa;
    let d = &p.detection;
    let t = d.transmission;
    let r = (1.0 - t * t).max(0.0).sqrt();
    let se = d.efficiency.sqrt();
    let sl = (1.0 - d.efficiency).max(0.0).sqrt();
    let (sn, cs) = d.phase.sin_cos();
    let rk = (2.0 * kappa).sqrt();
    let zero = Complex64::new(0.0, 0.0);
    let iw = Complex64::new(0.0, -omega);

    let mut m = DMatrix::<Complex64>::from_element(dim, dim, zero);
    let mut b = DMatrix::<Complex64>::from_element(dim, sources, zero);
    for i in 0..dim {
        m[(i, i)] = iw;
    }
    // Cavity: Ẋ = −κX + ΔY + √(2κ)X_in, Ẏ = −κY − ΔX + Σ G q + √(2κ)Y_in.
    m[(ix, ix)] += kappa;
    m[(ix, iy)] -= st.detuning;
    m[(iy, iy)] += kappa;
    m[(iy, ix)] += st.detuning;
    b[(ix, 0)] = rk.into();
    b[(iy, 1)] = rk.into();
    for (j, mode) in p.modes.iter().enumerate() {
        let (q, pm) = (j, n + j);
        let g = fb.gain_at(j, omega);
        m[(q, pm)] -= mode.omega;
        m[(pm, q)] += mode.omega;
        m[(pm, pm)] += mode.gamma;
        m[(iy, q)] -= st.coupling[j];
        // Force G X − g·h/√(2κ), h the reflected-port homodyne current
        // h = √η[cosθ(rX_out + tX_b) + sinθ(rY_out + tY_b)] + √(1−η)v,
        // X_out = √(2κ)X − X_in.
        m[(pm, ix)] -= st.coupling[j];
        m[(pm, ix)] += g * se * cs * r;
        m[(pm, iy)] += g * se * sn * r;
        b[(pm, 0)] = g * se * cs * r / rk;
        b[(pm, 1)] = g * se * sn * r / rk;
        b[(pm, 2)] = -g * se * cs * t / rk;
        b[(pm, 3)] = -g * se * sn * t / rk;
        b[(pm, 4)] = -g * sl / rk;
        b[(pm, 5 + j)] = Complex64::new(1.0, 0.0);
    }
    let lu = m.lu();
    let mut hx = vec![zero; sources];
    let mut hy = vec![zero; sources];
    for k in 0..sources {
        let col: DVector<Complex64> = b.column(k).into_owned();
        let z = lu.solve(&col).expect("regular system");
        // Detected port: X_d = t X_out − r X_b.
        hx[k] = t * rk * z[ix];
        hy[k] = t * rk * z[iy];
    }
    hx[0] -= t;
    hy[1] -= t;
    hx[2] -= r;
    hy[3] -= r;

    let mut density = vec![0.5; 5];
    for mode in &p.modes {
        let coth = if p.bath.temperature > 0.0 {
            1.0 / (CODATA.hbar * omega / (2.0 * CODATA.k_b * p.bath.temperature)).tanh()
        } else {
            1.0
        };
        density.push(mode.gamma * omega / mode.omega * coth);
    }
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for k in 0..sources {
        sx += density[k] * hx[k].norm_sqr();
        sy += density[k] * hy[k].norm_sqr();
        sxy += density[k] * (hx[k] * hy[k].conj()).re;
    }
    (sx, sy, sxy)
}
