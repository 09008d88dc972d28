//! Dynamical stability from the zeros of D(ω).
//!
//! The characteristic polynomial is assembled in s̃ = s/κ with s = −iω, so a
//! root s̃ corresponds to ω = iκs̃ and Im ω = κ·Re s̃.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{solve_steady_state, DetuningReference, SteadyState, SystemParams};
use crate::poly::Poly;
use crate::response::{FeedbackLaw, RationalFilter};

/// Largest characteristic-polynomial degree accepted.
pub const MAX_DEGREE: usize = 200;
/// Default marginality band, in units of κ.
pub const MARGIN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Zeros of D(ω) as complex frequencies ω, s⁻¹.
    #[serde(with = "complex_pairs")]
    pub roots: Vec<Complex64>,
    pub max_im: f64,
    pub verdict: Verdict,
    pub margin_threshold: f64,
    /// Largest Im ω from the reduced resonant equation, when Δ = 0.
    pub reduced_max_im: Option<f64>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.verdict == Verdict::Stable
    }

    /// Root with the largest imaginary part.
    pub fn worst_root(&self) -> Option<Complex64> {
        self.roots.iter().copied().max_by(|a, b| a.im.total_cmp(&b.im))
    }
}

mod complex_pairs {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

pub fn classify(max_im: f64, threshold: f64) -> Verdict {
    if max_im < -threshold {
        Verdict::Stable
    } else if max_im > threshold {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    }
}

/// Per-mode numerator and denominator of g̃_j(s̃) = g_j/κ.
fn scaled_gains(feedback: &FeedbackLaw, kappa: f64, n: usize) -> Vec<(Poly, Poly)> {
    let rescale = |c: &[f64], extra: f64| {
        Poly(
            c.iter()
                .enumerate()
                .map(|(k, v)| v * kappa.powi(k as i32) * extra)
                .collect(),
        )
    };
    (0..n)
        .map(|j| match feedback {
            FeedbackLaw::Off => (Poly::constant(0.0), Poly::constant(1.0)),
            FeedbackLaw::Proportional { gains } => (Poly::constant(gains[j] / kappa), Poly::constant(1.0)),
            FeedbackLaw::RationalPerMode { filters } => (
                rescale(&filters[j].numerator, 1.0 / kappa),
                rescale(&filters[j].denominator, 1.0),
            ),
        })
        .collect()
}

/// The pieces of κ⁻²D·Π P̃_j·Π M̃_j sharing the mode products.
struct Assembly {
    /// Q = Π P̃_j M̃_j.
    q: Poly,
    /// Σ_j G̃_j² ω̃_j Q / P̃_j.
    big: Poly,
    /// Σ_j G̃_j ω̃_j Ñ_j Q / (P̃_j M̃_j).
    small: Poly,
}

fn assemble(params: &SystemParams, steady: &SteadyState, feedback: &FeedbackLaw) -> Result<Assembly> {
    let kappa = params.cavity.kappa;
    let n = params.modes.len();
    feedback.validate(n)?;
    let gains = scaled_gains(feedback, kappa, n);
    let degree = 2 + 2 * n + gains.iter().map(|(_, m)| m.degree()).sum::<usize>();
    if degree > MAX_DEGREE {
        return Err(Error::Resource(format!(
            "characteristic polynomial degree {degree} exceeds the limit of {MAX_DEGREE}"
        )));
    }

    let factors: Vec<Poly> = params
        .modes
        .iter()
        .zip(&gains)
        .map(|(m, (_, den))| {
            let w = m.omega / kappa;
            Poly(vec![w * w, m.gamma / kappa, 1.0]).mul(den)
        })
        .collect();
    // prefix[j] = Π_{k<j}, suffix[j] = Π_{k≥j}
    let mut prefix = vec![Poly::constant(1.0)];
    for f in &factors {
        let next = prefix.last().map(|p| p.mul(f)).unwrap_or_else(|| f.clone());
        prefix.push(next);
    }
    let mut suffix = vec![Poly::constant(1.0); n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1].mul(&factors[j]);
    }

    let mut big = Poly::constant(0.0);
    let mut small = Poly::constant(0.0);
    for (j, m) in params.modes.iter().enumerate() {
        let others = prefix[j].mul(&suffix[j + 1]);
        let gt = steady.coupling[j] / kappa;
        let wt = m.omega / kappa;
        let (num, den) = &gains[j];
        big = big.add(&others.mul(den).scale(gt * gt * wt));
        small = small.add(&others.mul(num).scale(gt * wt));
    }
    Ok(Assembly {
        q: prefix.pop().unwrap_or_else(|| Poly::constant(1.0)),
        big,
        small,
    })
}

fn loop_factors(params: &SystemParams) -> (f64, f64) {
    let det = &params.detection;
    let k = det.reflection() * det.efficiency.sqrt();
    let (s, c) = det.phase.sin_cos();
    (k * s, k * c)
}

/// κ⁻²·D(ω)·Π_j P̃_j(s̃)·Π_j M̃_j(s̃) in ascending powers of s̃ = −iω/κ.
pub fn characteristic_polynomial(params: &SystemParams, steady: &SteadyState, feedback: &FeedbackLaw) -> Result<Poly> {
    let a = assemble(params, steady, feedback)?;
    let (ks, kc) = loop_factors(params);
    let d = steady.detuning / params.cavity.kappa;
    let one_plus = Poly(vec![1.0, 1.0]);
    let optical = Poly(vec![1.0 + d * d, 2.0, 1.0]).mul(&a.q);
    let loop_sin = one_plus.mul(&a.small).scale(ks);
    let spring = a.big.scale(-d).add(&a.small.scale(d * kc));
    Ok(optical.add(&loop_sin).add(&spring))
}

/// (1 + s̃)Q + r√η sinθ·Σ G̃ω̃Ñ Q/(P̃M̃): the polynomial left after removing
/// the (κ + s) factor at Δ = 0.
pub fn reduced_resonant_polynomial(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
) -> Result<Poly> {
    let a = assemble(params, steady, feedback)?;
    let (ks, _) = loop_factors(params);
    Ok(Poly(vec![1.0, 1.0]).mul(&a.q).add(&a.small.scale(ks)))
}

fn max_im(roots: &[Complex64]) -> f64 {
    roots.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_stable(params: &SystemParams, steady: &SteadyState, feedback: &FeedbackLaw) -> Result<StabilityReport> {
    is_stable_with_threshold(params, steady, feedback, MARGIN_THRESHOLD)
}

/// Controllable canonical realization of N(s)/M(s): ż = Az + e_m·u,
/// y = c·z + d·u.
struct Realization {
    a: DMatrix<f64>,
    c: Vec<f64>,
    d: f64,
}

impl Realization {
    fn static_gain(d: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            c: Vec::new(),
            d,
        }
    }

    fn order(&self) -> usize {
        self.c.len()
    }
}

fn realize(filter: &RationalFilter) -> Result<Realization> {
    let m = Poly(filter.denominator.clone()).degree();
    let lead = filter.denominator[m];
    if filter.numerator.iter().any(|c| *c != 0.0) && Poly(filter.numerator.clone()).degree() > m {
        return Err(Error::Parameter(
            "feedback filter must be proper (deg N ≤ deg M)".into(),
        ));
    }
    let den: Vec<f64> = filter.denominator[..m].iter().map(|c| c / lead).collect();
    let mut num: Vec<f64> = filter.numerator.iter().map(|c| c / lead).collect();
    num.resize(m + 1, 0.0);
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 1..m {
        a[(i - 1, i)] = 1.0;
    }
    for (k, v) in den.iter().enumerate() {
        a[(m - 1, k)] = -v;
    }
    Ok(Realization {
        a,
        c: (0..m).map(|k| num[k] - num[m] * den[k]).collect(),
        d: num[m],
    })
}

/// Drift matrix of (q_j, p_j, X, Y, filter states) in s⁻¹; its eigenvalues
/// λ are the zeros of D at ω = iλ.
pub fn drift_matrix(params: &SystemParams, steady: &SteadyState, feedback: &FeedbackLaw) -> Result<DMatrix<f64>> {
    let n = params.modes.len();
    feedback.validate(n)?;
    let realizations: Vec<Realization> = match feedback {
        FeedbackLaw::Off => (0..n).map(|_| Realization::static_gain(0.0)).collect(),
        FeedbackLaw::Proportional { gains } => gains.iter().map(|g| Realization::static_gain(*g)).collect(),
        FeedbackLaw::RationalPerMode { filters } => filters.iter().map(realize).collect::<Result<_>>()?,
    };
    let extra: usize = realizations.iter().map(Realization::order).sum();
    let dim = 2 * n + 2 + extra;
    if dim > MAX_DEGREE {
        return Err(Error::Resource(format!(
            "characteristic polynomial degree {dim} exceeds the limit of {MAX_DEGREE}"
        )));
    }
    let (ks, kc) = loop_factors(params);
    let kappa = params.cavity.kappa;
    let (ix, iy) = (2 * n, 2 * n + 1);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    a[(ix, ix)] = -kappa;
    a[(iy, iy)] = -kappa;
    a[(ix, iy)] = steady.detuning;
    a[(iy, ix)] = -steady.detuning;
    let mut next = 2 * n + 2;
    for (j, m) in params.modes.iter().enumerate() {
        let (q, p) = (j, n + j);
        a[(q, p)] = m.omega;
        a[(p, q)] = -m.omega;
        a[(p, p)] = -m.gamma;
        a[(p, ix)] = steady.coupling[j];
        a[(iy, q)] = steady.coupling[j];
        // Force −g(s)·u with u = r√η(cosθ X + sinθ Y).
        let f = &realizations[j];
        a[(p, ix)] -= f.d * kc;
        a[(p, iy)] -= f.d * ks;
        let order = f.order();
        for r in 0..order {
            for c in 0..order {
                a[(next + r, next + c)] = f.a[(r, c)];
            }
            a[(p, next + r)] -= f.c[r];
        }
        if order > 0 {
            a[(next + order - 1, ix)] = kc;
            a[(next + order - 1, iy)] = ks;
        }
        next += order;
    }
    Ok(a)
}

fn eigen_omegas(a: DMatrix<f64>) -> Result<Vec<Complex64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let ev = a.complex_eigenvalues();
    let roots: Vec<Complex64> = ev.iter().map(|l| Complex64::new(-l.im, l.re)).collect();
    if roots.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite characteristic root".into()));
    }
    Ok(roots)
}

/// Locate every zero of D(ω) and classify. `threshold` is in units of κ.
///
/// The zeros are taken as eigenvalues of the drift matrix rather than from
/// the expanded polynomial, whose coefficients lose the closely spaced,
/// lightly damped mechanical roots once there are more than a few modes.
pub fn is_stable_with_threshold(
    params: &SystemParams,
    steady: &SteadyState,
    feedback: &FeedbackLaw,
    threshold: f64,
) -> Result<StabilityReport> {
    let kappa = params.cavity.kappa;
    let a = drift_matrix(params, steady, feedback)?;
    let roots = eigen_omegas(a.clone())?;
    let top = max_im(&roots);

    let reduced_max_im = if steady.is_resonant(kappa) {
        // X decouples at Δ = 0: drop it and restore its root −iκ.
        let n = params.modes.len();
        let mut r = eigen_omegas(a.remove_row(2 * n).remove_column(2 * n))?;
        r.push(Complex64::new(0.0, -kappa));
        let m = max_im(&r);
        let tol = 1e-6 * kappa;
        if (m - top).abs() > tol && classify(m, threshold * kappa) != classify(top, threshold * kappa) {
            return Err(Error::Numerical(format!(
                "root finder inconsistent with reduced resonant condition: max Im ω {top:e} vs {m:e}"
            )));
        }
        Some(m)
    } else {
        None
    };

    Ok(StabilityReport {
        roots,
        max_im: top,
        verdict: classify(top, threshold * kappa),
        margin_threshold: threshold * kappa,
        reduced_max_im,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum BranchChoice {
    /// The branch realising the requested effective detuning, otherwise the
    /// lowest-intensity branch that is stable without feedback.
    #[default]
    Auto,
    Index(usize),
}

/// Pick the steady state to linearize around.
pub fn select_branch(params: &SystemParams, choice: BranchChoice) -> Result<SteadyState> {
    let mut branches = solve_steady_state(params)?;
    match choice {
        BranchChoice::Index(i) => {
            let count = branches.len();
            if i >= count {
                return Err(Error::Parameter(format!(
                    "branch index {i} out of range ({count} branches)"
                )));
            }
            Ok(branches.swap_remove(i))
        }
        BranchChoice::Auto => {
            if params.cavity.detuning_reference == DetuningReference::Effective {
                let target = params.cavity.detuning;
                if let Some(b) = branches.iter().find(|b| b.detuning == target) {
                    return Ok(b.clone());
                }
            }
            for b in &branches {
                if is_stable(params, b, &FeedbackLaw::Off)?.is_stable() {
                    return Ok(b.clone());
                }
            }
            Err(Error::Unstable(
                "no steady-state branch is stable without feedback".into(),
            ))
        }
    }
}
