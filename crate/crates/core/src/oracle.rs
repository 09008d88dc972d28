//! Time-domain check of the analytic spectra: exact-propagator integration
//! of the linearized Langevin equations with an instantaneous proportional
//! loop, followed by Welch spectral estimation.
//!
//! Noise conventions match the analytic path: every vacuum quadrature is
//! white with ⟨w(t)w(t')⟩ = δ(t−t')/2, the Brownian force has intensity
//! γ_j(2n̄_j + 1).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SteadyState, SystemParams, CODATA};
use crate::response::FeedbackLaw;
use crate::stability::is_stable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThermalModel {
    #[default]
    Markovian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Recorded duration after burn-in, s.
    pub duration: f64,
    /// Discarded initial transient, s.
    pub burn_in: f64,
    pub seed: u64,
    pub thermal_model: ThermalModel,
    /// Steps per recorded sample; outputs are averaged over each block.
    pub record_stride: usize,
}

/// Largest dt·max(ω_j, κ, |Δ|) accepted.
pub const RESOLUTION_GUARD: f64 = 0.05;
/// Smallest duration·min(γ_j, κ) accepted.
pub const MIXING_GUARD: f64 = 100.0;
/// Block mean-square growth, relative to the early reference, that counts
/// as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

impl TrajectoryConfig {
    /// dt at 80% of the resolution guard, the shortest admissible duration
    /// and a burn-in of ten slowest relaxation times.
    pub fn suggested(params: &SystemParams, seed: u64, record_stride: usize) -> Self {
        let (fast, slow) = rates(params);
        Self {
            dt: 0.8 * RESOLUTION_GUARD / fast,
            duration: MIXING_GUARD / slow,
            burn_in: 10.0 / slow,
            seed,
            thermal_model: ThermalModel::Markovian,
            record_stride,
        }
    }

    pub fn sample_interval(&self) -> f64 {
        self.dt * self.record_stride as f64
    }

    pub fn validate(&self, params: &SystemParams) -> Result<()> {
        let (fast, slow) = rates(params);
        if !(self.dt > 0.0) || self.record_stride == 0 {
            return Err(Error::Parameter("dt and record_stride must be positive".into()));
        }
        if self.dt * fast >= RESOLUTION_GUARD {
            return Err(Error::Parameter(format!(
                "dt = {:e} s violates dt·max(ω_j, κ, |Δ|) < {RESOLUTION_GUARD} (max rate {fast:e} s⁻¹)",
                self.dt
            )));
        }
        if self.duration * slow < MIXING_GUARD {
            return Err(Error::Parameter(format!(
                "duration = {:e} s is shorter than {MIXING_GUARD}/min(γ_j, κ) = {:e} s",
                self.duration,
                MIXING_GUARD / slow
            )));
        }
        if !(self.burn_in >= 0.0) {
            return Err(Error::Parameter("burn-in must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// (max(ω_j, κ, |Δ|), min(γ_j, κ)).
fn rates(params: &SystemParams) -> (f64, f64) {
    let k = params.cavity.kappa;
    let fast = params
        .modes
        .iter()
        .map(|m| m.omega)
        .fold(k.max(params.cavity.detuning.abs()), f64::max);
    let slow = params.modes.iter().map(|m| m.gamma).fold(k, f64::min);
    (fast, slow)
}

/// Drift A and noise loading B (unit-intensity Wiener inputs) of the state
/// (q_1..q_N, p_1..p_N, X, Y, I_X, I_Y), where I_X, I_Y integrate the
/// transmitted output quadratures.
pub fn linear_system(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = params.modes.len();
    let gains: Vec<f64> = match feedback {
        FeedbackLaw::Off => vec![0.0; n],
        FeedbackLaw::Proportional { gains } => {
            feedback.validate(n)?;
            gains.clone()
        }
        FeedbackLaw::RationalPerMode { .. } => {
            return Err(Error::Precondition(
                "the time-domain oracle supports only instantaneous proportional feedback".into(),
            ))
        }
    };
    let kappa = params.cavity.kappa;
    let delta = steady.detuning;
    let det = &params.detection;
    let (t, r) = (det.transmission, det.reflection());
    let se = det.efficiency.sqrt();
    let sl = (1.0 - det.efficiency).max(0.0).sqrt();
    let (sin_t, cos_t) = det.phase.sin_cos();
    let rk = (2.0 * kappa).sqrt();
    let vac = 0.5f64.sqrt();

    let dim = 2 * n + 4;
    let (ix, iy) = (2 * n, 2 * n + 1);
    let (jx, jy) = (2 * n + 2, 2 * n + 3);
    let noise = 5 + n;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DMatrix::<f64>::zeros(dim, noise);

    for (j, m) in params.modes.iter().enumerate() {
        let (q, p) = (j, n + j);
        let g_big = steady.coupling[j];
        let g = gains[j];
        a[(q, p)] = m.omega;
        a[(p, q)] = -m.omega;
        a[(p, p)] = -m.gamma;
        a[(p, ix)] = g_big - g * r * se * cos_t;
        a[(p, iy)] = -g * r * se * sin_t;
        a[(iy, q)] = g_big;

        // Homodyne record noise fed back through −g θ_s/√(2κ).
        let k = g / rk * vac;
        b[(p, 0)] = k * se * r * cos_t;
        b[(p, 1)] = k * se * r * sin_t;
        b[(p, 2)] = -k * se * t * cos_t;
        b[(p, 3)] = -k * se * t * sin_t;
        b[(p, 4)] = -k * sl;
        let nbar2 = if params.bath.temperature > 0.0 {
            1.0 / (CODATA.hbar * m.omega / (2.0 * CODATA.k_b * params.bath.temperature)).tanh()
        } else {
            1.0
        };
        b[(p, 5 + j)] = (m.gamma * nbar2).sqrt();
    }
    a[(ix, ix)] = -kappa;
    a[(ix, iy)] = delta;
    a[(iy, iy)] = -kappa;
    a[(iy, ix)] = -delta;
    b[(ix, 0)] = rk * vac;
    b[(iy, 1)] = rk * vac;

    a[(jx, ix)] = t * rk;
    a[(jy, iy)] = t * rk;
    b[(jx, 0)] = -t * vac;
    b[(jx, 2)] = -r * vac;
    b[(jy, 1)] = -t * vac;
    b[(jy, 3)] = -r * vac;
    Ok((a, b))
}

/// Exact one-step transition Φ = e^{A dt} and noise covariance
/// Q = ∫₀^dt e^{As} B Bᵀ e^{Aᵀs} ds, via the block exponential of
/// [[−A, BBᵀ], [0, Aᵀ]]·dt.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(-a * dt));
    m.view_mut((0, n), (n, n)).copy_from(&(b * b.transpose() * dt));
    m.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * dt));
    let e = m.exp();
    let phi = e.view((n, n), (n, n)).transpose();
    let q = &phi * e.view((0, n), (n, n));
    let q = (&q + q.transpose()) * 0.5;
    (phi, q)
}

/// L with L Lᵀ = Q, negative round-off eigenvalues clamped to zero.
fn noise_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(q.clone());
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Spacing of recorded samples, s.
    pub sample_interval: f64,
    pub columns: Vec<String>,
    /// Column-major samples, one vector per column.
    pub data: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.data[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn column_names(n: usize) -> Vec<String> {
    let mut c: Vec<String> = (0..n).map(|j| format!("q{j}")).collect();
    c.extend((0..n).map(|j| format!("p{j}")));
    c.extend(["X_a", "Y_a", "X_d", "Y_d"].map(String::from));
    c
}

/// Integrate one trajectory. Mechanical and intracavity components are
/// sampled at block ends; X_d, Y_d are block averages of the output.
pub fn simulate(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    cfg: &TrajectoryConfig,
    force: bool,
) -> Result<Trajectory> {
    params.validate()?;
    cfg.validate(params)?;
    let report = is_stable(params, steady, feedback)?;
    if !report.is_stable() && !force {
        return Err(Error::Unstable(format!(
            "refusing to integrate: max Im ω = {:e} s⁻¹",
            report.max_im
        )));
    }
    let (a, b) = linear_system(params, steady, feedback)?;
    let (phi, q) = discretize(&a, &b, cfg.dt);
    let l = noise_factor(&q);
    let dim = a.nrows();
    let n_state = dim - 2;
    // Row-major copies for the inner loop.
    let phi_rm: Vec<f64> = phi.transpose().iter().copied().collect();
    let l_rm: Vec<f64> = l.transpose().iter().copied().collect();

    let stride = cfg.record_stride;
    let tau = cfg.sample_interval();
    let burn_blocks = (cfg.burn_in / tau).ceil() as usize;
    let rec_blocks = (cfg.duration / tau).ceil() as usize;
    let reference_blocks = 16usize.min(burn_blocks + rec_blocks);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut z = vec![0.0; dim];
    let mut next = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let mut sq = vec![0.0; n_state];
    let mut reference = vec![0.0; n_state];
    let mut data = vec![Vec::with_capacity(rec_blocks); dim];

    for block in 0..burn_blocks + rec_blocks {
        sq.iter_mut().for_each(|s| *s = 0.0);
        for _ in 0..stride {
            for wi in w.iter_mut() {
                *wi = StandardNormal.sample(&mut rng);
            }
            for i in 0..dim {
                let pr = &phi_rm[i * dim..(i + 1) * dim];
                let lr = &l_rm[i * dim..(i + 1) * dim];
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += pr[k] * z[k] + lr[k] * w[k];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut z, &mut next);
            for (s, v) in sq.iter_mut().zip(&z) {
                *s += v * v;
            }
        }
        let time = (block + 1) as f64 * tau;
        for (c, s) in sq.iter().enumerate() {
            let ms = s / stride as f64;
            if !ms.is_finite() {
                return Err(Error::Divergence { time, component: c });
            }
            if block < reference_blocks {
                reference[c] += ms / reference_blocks as f64;
            } else if ms > DIVERGENCE_FACTOR * reference[c].max(f64::MIN_POSITIVE) {
                return Err(Error::Divergence { time, component: c });
            }
        }
        if block >= burn_blocks {
            for c in 0..n_state {
                data[c].push(z[c]);
            }
            data[n_state].push(z[n_state] / tau);
            data[n_state + 1].push(z[n_state + 1] / tau);
        }
        z[n_state] = 0.0;
        z[n_state + 1] = 0.0;
    }

    Ok(Trajectory {
        sample_interval: tau,
        columns: column_names(params.modes.len()),
        data,
    })
}

/// Independent trajectories for several seeds, integrated in parallel.
pub fn simulate_batch(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    cfg: &TrajectoryConfig,
    seeds: &[u64],
    force: bool,
) -> Vec<Result<Trajectory>> {
    seeds
        .par_iter()
        .map(|&seed| simulate(params, steady, feedback, &TrajectoryConfig { seed, ..*cfg }, force))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedSpectra {
    /// Positive FFT-grid frequencies, rad/s.
    pub frequencies: Vec<f64>,
    pub s_x: Vec<f64>,
    pub s_y: Vec<f64>,
    pub s_xy: Vec<f64>,
    pub se_x: Vec<f64>,
    pub se_y: Vec<f64>,
    pub se_xy: Vec<f64>,
    pub segment_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
}

/// Welch estimate of S_X, S_Y and the symmetrized S_XY from samples spaced
/// `interval` apart. Normalized so a white sequence of variance D/interval
/// reads D; standard errors are the segment spread over √K.
pub fn estimate_spectra(
    x: &[f64],
    y: &[f64],
    interval: f64,
    window: Window,
    segment_length: usize,
    overlap: f64,
) -> Result<EstimatedSpectra> {
    if x.len() != y.len() {
        return Err(Error::Parameter("X and Y series differ in length".into()));
    }
    if segment_length < 8 || !(0.0..1.0).contains(&overlap) {
        return Err(Error::Parameter(
            "segment length must be ≥ 8 and overlap in [0, 1)".into(),
        ));
    }
    if x.len() < 4 * segment_length {
        return Err(Error::Parameter(format!(
            "series of {} samples is shorter than 4 segments of {segment_length}",
            x.len()
        )));
    }
    let hop = ((segment_length as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let starts: Vec<usize> = (0..=(x.len() - segment_length)).step_by(hop).collect();
    let k = starts.len();
    let win: Vec<f64> = match window {
        Window::Hann => (0..segment_length)
            .map(|i| {
                let s = (std::f64::consts::PI * i as f64 / segment_length as f64).sin();
                s * s
            })
            .collect(),
    };
    let u: f64 = win.iter().map(|w| w * w).sum();
    let norm = interval / u;
    let bins = segment_length / 2;

    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_length);
    // Per segment: [P_xx, P_yy, Re P_xy].
    let per_segment: Vec<[Vec<f64>; 3]> = starts
        .par_iter()
        .map(|&s0| {
            let transform = |v: &[f64]| {
                let mean = v[s0..s0 + segment_length].iter().sum::<f64>() / segment_length as f64;
                let mut buf: Vec<Complex<f64>> = (0..segment_length)
                    .map(|i| Complex::new((v[s0 + i] - mean) * win[i], 0.0))
                    .collect();
                fft.process(&mut buf);
                buf
            };
            let fx = transform(x);
            let fy = transform(y);
            let mut px = Vec::with_capacity(bins);
            let mut py = Vec::with_capacity(bins);
            let mut pxy = Vec::with_capacity(bins);
            for i in 1..bins {
                px.push(norm * fx[i].norm_sqr());
                py.push(norm * fy[i].norm_sqr());
                pxy.push(norm * (fx[i] * fy[i].conj()).re);
            }
            [px, py, pxy]
        })
        .collect();

    let stats = |c: usize| {
        let mut mean = vec![0.0; bins - 1];
        let mut m2 = vec![0.0; bins - 1];
        for seg in &per_segment {
            for (i, v) in seg[c].iter().enumerate() {
                mean[i] += v;
                m2[i] += v * v;
            }
        }
        let kf = k as f64;
        let se: Vec<f64> = mean
            .iter()
            .zip(&m2)
            .map(|(s, s2)| {
                let mu = s / kf;
                ((s2 / kf - mu * mu).max(0.0) * kf / (kf - 1.0)).sqrt() / kf.sqrt()
            })
            .collect();
        (mean.into_iter().map(|s| s / kf).collect::<Vec<_>>(), se)
    };
    let (s_x, se_x) = stats(0);
    let (s_y, se_y) = stats(1);
    let (s_xy, se_xy) = stats(2);
    let df = 2.0 * std::f64::consts::PI / (segment_length as f64 * interval);
    Ok(EstimatedSpectra {
        frequencies: (1..bins).map(|i| i as f64 * df).collect(),
        s_x,
        s_y,
        s_xy,
        se_x,
        se_y,
        se_xy,
        segment_count: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubBand {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub estimate: f64,
    pub analytic: f64,
    pub relative_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sub_bands: Vec<SubBand>,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub lo: f64,
    pub hi: f64,
    pub tolerance: f64,
    /// Log-spaced sub-bands over [lo, hi].
    pub sub_bands: usize,
    /// (centre, half-width) intervals excluded from the comparison, rad/s.
    pub notches: Vec<(f64, f64)>,
}

/// Compare an estimate with an analytic curve over log-spaced sub-bands.
/// Within each sub-band the bin-averaged estimate and the analytic curve
/// (linearly interpolated onto the same bins) must agree to `tolerance`
/// relative. `analytic` is a list of (ω, value) sorted by ω.
pub fn compare_to_analytic(
    frequencies: &[f64],
    estimate: &[f64],
    analytic: &[(f64, f64)],
    opts: &CompareOptions,
) -> Result<Comparison> {
    if frequencies.len() != estimate.len() {
        return Err(Error::Parameter("frequency and estimate lengths differ".into()));
    }
    if !(opts.lo > 0.0 && opts.hi > opts.lo) || opts.sub_bands == 0 {
        return Err(Error::Parameter(
            "comparison band must satisfy 0 < lo < hi with ≥ 1 sub-band".into(),
        ));
    }
    let (a_lo, a_hi) = match (analytic.first(), analytic.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Error::Parameter("analytic curve is empty".into())),
    };
    let lo = opts.lo.max(a_lo);
    let hi = opts.hi.min(a_hi);
    if lo >= hi || !frequencies.iter().any(|w| *w >= lo && *w <= hi) {
        return Err(Error::Parameter(
            "estimate and analytic curve have no common support in the band".into(),
        ));
    }
    let interp = |w: f64| {
        let i = analytic.partition_point(|p| p.0 < w).clamp(1, analytic.len() - 1);
        let (w0, v0) = analytic[i - 1];
        let (w1, v1) = analytic[i];
        if w1 == w0 {
            v0
        } else {
            v0 + (v1 - v0) * (w - w0) / (w1 - w0)
        }
    };
    let notched = |w: f64| opts.notches.iter().any(|(c, h)| (w - c).abs() <= *h);
    let ratio = hi / lo;
    let mut sub_bands = Vec::with_capacity(opts.sub_bands);
    for b in 0..opts.sub_bands {
        let s_lo = lo * ratio.powf(b as f64 / opts.sub_bands as f64);
        let s_hi = lo * ratio.powf((b + 1) as f64 / opts.sub_bands as f64);
        let (mut est, mut ana, mut count) = (0.0, 0.0, 0usize);
        for (w, e) in frequencies.iter().zip(estimate) {
            let inside = *w >= s_lo && (*w < s_hi || (b + 1 == opts.sub_bands && *w <= s_hi));
            if inside && !notched(*w) {
                est += e;
                ana += interp(*w);
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let (est, ana) = (est / count as f64, ana / count as f64);
        let dev = if ana == 0.0 {
            if est == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((est - ana) / ana).abs()
        };
        sub_bands.push(SubBand {
            lo: s_lo,
            hi: s_hi,
            bins: count,
            estimate: est,
            analytic: ana,
            relative_deviation: dev,
            pass: dev <= opts.tolerance,
        });
    }
    if sub_bands.is_empty() {
        return Err(Error::Parameter(
            "no estimator bins left in the band after notching".into(),
        ));
    }
    let max_deviation = sub_bands.iter().map(|s| s.relative_deviation).fold(0.0, f64::max);
    Ok(Comparison {
        pass: sub_bands.iter().all(|s| s.pass),
        sub_bands,
        max_deviation,
        tolerance: opts.tolerance,
    })
}

const DUMP_MAGIC: &[u8; 8] = b"SQZTRAJ1";

/// Binary dump: magic "SQZTRAJ1", u32 column count, u64 row count, f64
/// sample interval, then per column a u32 byte length and UTF-8 name,
/// then rows of f64. All integers and floats little-endian.
pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&(traj.columns.len() as u32).to_le_bytes())?;
    out.write_all(&(traj.len() as u64).to_le_bytes())?;
    out.write_all(&traj.sample_interval.to_le_bytes())?;
    for name in &traj.columns {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
    }
    for row in 0..traj.len() {
        for col in &traj.data {
            out.write_all(&col[row].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = || Error::Parameter(format!("{} is not a trajectory dump", path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(pos..pos + n).ok_or_else(bad)?;
        pos += n;
        Ok(s)
    };
    if take(8)? != DUMP_MAGIC {
        return Err(bad());
    }
    let ncol = u32::from_le_bytes(take(4)?.try_into().map_err(|_| bad())?) as usize;
    let nrow = u64::from_le_bytes(take(8)?.try_into().map_err(|_| bad())?) as usize;
    let sample_interval = f64::from_le_bytes(take(8)?.try_into().map_err(|_| bad())?);
    let mut columns = Vec::with_capacity(ncol);
    for _ in 0..ncol {
        let len = u32::from_le_bytes(take(4)?.try_into().map_err(|_| bad())?) as usize;
        columns.push(String::from_utf8(take(len)?.to_vec()).map_err(|_| bad())?);
    }
    let mut data = vec![Vec::with_capacity(nrow); ncol];
    for _ in 0..nrow {
        for col in data.iter_mut() {
            col.push(f64::from_le_bytes(take(8)?.try_into().map_err(|_| bad())?));
        }
    }
    Ok(Trajectory {
        sample_interval,
        columns,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Normal;

    #[test]
    fn van_loan_scalar_ou() {
        // dx = −a x dt + b dW: Φ = e^{−a dt}, Q = b²(1 − e^{−2a dt})/2a.
        let a = DMatrix::from_element(1, 1, -3.0);
        let b = DMatrix::from_element(1, 1, 2.0);
        let (phi, q) = discretize(&a, &b, 0.1);
        assert!((phi[(0, 0)] - (-0.3f64).exp()).abs() < 1e-14);
        let exact = 4.0 * (1.0 - (-0.6f64).exp()) / 6.0;
        assert!((q[(0, 0)] - exact).abs() < 1e-14);
    }

    #[test]
    fn welch_white_noise_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tau = 1e-3;
        let d: f64 = 0.5;
        let dist = Normal::new(0.0, (d / tau).sqrt()).unwrap();
        let x: Vec<f64> = (0..1 << 16).map(|_| dist.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..1 << 16).map(|_| dist.sample(&mut rng)).collect();
        let est = estimate_spectra(&x, &y, tau, Window::Hann, 1024, 0.5).unwrap();
        let mean = est.s_x.iter().sum::<f64>() / est.s_x.len() as f64;
        assert!((mean - d).abs() < 0.01, "{mean}");
        let xy = est.s_xy.iter().sum::<f64>() / est.s_xy.len() as f64;
        assert!(xy.abs() < 0.01);
        assert!(estimate_spectra(&x[..100], &y[..100], tau, Window::Hann, 64, 0.0).is_err());
    }

    #[test]
    fn welch_sine_peak() {
        let tau = 1e-3;
        let f0 = 2.0 * std::f64::consts::PI * 125.0;
        let x: Vec<f64> = (0..1 << 14).map(|i| (f0 * i as f64 * tau).sin()).collect();
        let est = estimate_spectra(&x, &x, tau, Window::Hann, 1024, 0.5).unwrap();
        let (imax, _) = est.s_x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let df = est.frequencies[0];
        assert!((est.frequencies[imax] - f0).abs() <= df);
        let far = est.s_x[imax + 10] / est.s_x[imax];
        assert!(far < 1e-6);
    }

    #[test]
    fn comparison_identity_and_offset() {
        let f: Vec<f64> = (1..1000).map(|i| i as f64 * 100.0).collect();
        let v: Vec<f64> = f.iter().map(|w| 1.0 + w / 1e5).collect();
        let curve: Vec<(f64, f64)> = f.iter().copied().zip(v.iter().copied()).collect();
        let opts = CompareOptions {
            lo: 1e3,
            hi: 9e4,
            tolerance: 0.1,
            sub_bands: 8,
            notches: vec![],
        };
        let c = compare_to_analytic(&f, &v, &curve, &opts).unwrap();
        assert!(c.pass);
        assert_eq!(c.max_deviation, 0.0);
        let shifted: Vec<(f64, f64)> = curve.iter().map(|(w, v)| (*w, v * 1.2)).collect();
        assert!(!compare_to_analytic(&f, &v, &shifted, &opts).unwrap().pass);
        let disjoint = vec![(1e7, 1.0), (2e7, 1.0)];
        assert!(compare_to_analytic(&f, &v, &disjoint, &opts).is_err());
    }
}
