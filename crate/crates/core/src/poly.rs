//! Real-coefficient polynomials in ascending order, `c[0] + c[1] s + ...`.

use nalgebra::{linalg::balancing::balance_parlett_reinsch, DMatrix, Schur};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(vec![]);
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).copied().unwrap_or(0.0) + other.0.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * k).collect())
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.0.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c)
    }

    fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for c in self.0.iter().rev() {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    /// Σ |c_k| |s|^k, the natural scale for judging a residual at `s`.
    fn magnitude_at(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.0.iter().rev().fold(0.0, |acc, c| acc * r + c.abs())
    }

    /// All complex roots, via eigenvalues of the balanced companion matrix
    /// followed by a guarded Newton polish on the polynomial itself.
    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let deg = self.degree();
        if deg == 0 {
            if self.0.first().is_none_or(|c| *c == 0.0) {
                return Err(Error::Numerical("roots of the zero polynomial are undefined".into()));
            }
            return Ok(vec![]);
        }
        let coeffs = &self.0[..=deg];
        let zeros_at_origin = coeffs.iter().position(|c| *c != 0.0).unwrap_or(0);
        let reduced = &coeffs[zeros_at_origin..];
        let n = reduced.len() - 1;
        let lead = reduced[n];

        let mut roots = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
        if n > 0 {
            let mut companion = DMatrix::<f64>::zeros(n, n);
            for i in 1..n {
                companion[(i, i - 1)] = 1.0;
            }
            for i in 0..n {
                companion[(i, n - 1)] = -reduced[i] / lead;
            }
            balance_parlett_reinsch(&mut companion);
            let schur = Schur::try_new(companion, f64::EPSILON, 100 * n.max(10)).ok_or_else(|| {
                Error::Numerical(format!("companion-matrix eigenvalues did not converge (degree {n})"))
            })?;
            let eig = schur.complex_eigenvalues();
            let reduced_poly = Poly(reduced.to_vec());
            for z in eig.iter() {
                roots.push(reduced_poly.polish(*z));
            }
        }
        Ok(roots)
    }

    fn polish(&self, mut z: Complex64) -> Complex64 {
        let (mut p, _) = self.eval_with_derivative(z);
        for _ in 0..6 {
            let (_, dp) = self.eval_with_derivative(z);
            if dp.norm() == 0.0 {
                break;
            }
            let cand = z - p / dp;
            let (pc, _) = self.eval_with_derivative(cand);
            if pc.norm() < p.norm() {
                z = cand;
                p = pc;
            } else {
                break;
            }
            if p.norm() <= 4.0 * f64::EPSILON * self.magnitude_at(z) {
                break;
            }
        }
        z
    }
}
