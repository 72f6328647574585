//! Uniform cubic B-splines with an integrated squared second-derivative
//! penalty, and a penalized least-squares smoother with GCV.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::golden_section;

/// Cubic B-spline basis on `[lo, hi]` with equally spaced knots extending
/// three intervals past each end.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    lo: f64,
    hi: f64,
    dim: usize,
    h: f64,
}

impl BSplineBasis {
    pub fn uniform(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if dim < 4 || !(hi > lo) {
            return Err(Error::InvalidConfig(alloc::format!(
                "cubic basis needs dim >= 4 and hi > lo (got dim {dim}, [{lo}, {hi}])"
            )));
        }
        Ok(BSplineBasis {
            lo,
            hi,
            dim,
            h: (hi - lo) / (dim - 3) as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Knot span of `x` (clamped to the domain) and the local coordinate in `[0, 1]`.
    fn span(&self, x: f64) -> (usize, f64) {
        let s = ((x.clamp(self.lo, self.hi) - self.lo) / self.h).max(0.0);
        let k = (libm::floor(s) as usize).min(self.dim - 4);
        (k, s - k as f64)
    }

    /// Values of the four nonzero functions at `x`, starting at basis index `k`.
    pub fn eval_local(&self, x: f64) -> (usize, [f64; 4]) {
        let (k, u) = self.span(x);
        let v = 1.0 - u;
        (
            k,
            [
                v * v * v / 6.0,
                (3.0 * u * u * u - 6.0 * u * u + 4.0) / 6.0,
                (-3.0 * u * u * u + 3.0 * u * u + 3.0 * u + 1.0) / 6.0,
                u * u * u / 6.0,
            ],
        )
    }

    /// Basis matrix at the given points, one row per point.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(xs.len(), self.dim);
        for (i, &x) in xs.iter().enumerate() {
            let (k, vals) = self.eval_local(x);
            for (j, v) in vals.iter().enumerate() {
                b[(i, k + j)] = *v;
            }
        }
        b
    }

    /// `S[i][j] = integral over [lo, hi] of B_i''(x) B_j''(x) dx`, exact.
    pub fn penalty(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.dim, self.dim);
        // Second derivatives (times h^2) of the four local pieces at u = 0 and u = 1.
        let at0 = [1.0, -2.0, 1.0, 0.0];
        let at1 = [0.0, 1.0, -2.0, 1.0];
        let scale = 1.0 / (self.h * self.h * self.h);
        for k in 0..self.dim - 3 {
            for a in 0..4 {
                for b in 0..4 {
                    let integral = (at0[a] * at0[b] + at1[a] * at1[b]) / 3.0
                        + (at0[a] * at1[b] + at1[a] * at0[b]) / 6.0;
                    s[(k + a, k + b)] += scale * integral;
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Smoothed {
    pub values: Vec<f64>,
    pub lambda: f64,
    pub edf: f64,
    pub gcv: f64,
}

/// Penalized regression-spline smoother for functions sampled at fixed points.
#[derive(Debug, Clone)]
pub struct PenalizedSmoother {
    basis: DMatrix<f64>,
    btb: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

/// Search range for the GCV smoothing parameter, in log10 units.
const LOG_LAMBDA_RANGE: (f64, f64) = (-6.0, 14.0);

impl PenalizedSmoother {
    pub fn new(points: &[f64], basis_dim: usize) -> Result<Self> {
        let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let basis = BSplineBasis::uniform(lo, hi, basis_dim)?;
        let b = basis.design(points);
        Ok(PenalizedSmoother {
            btb: b.tr_mul(&b),
            basis: b,
            penalty: basis.penalty(),
        })
    }

    fn system(&self, lambda: f64) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        (&self.btb + &self.penalty * lambda).cholesky()
    }

    /// Fitted values at fixed `lambda`, with effective degrees of freedom.
    fn fit(&self, y: &[f64], lambda: f64) -> Option<(Vec<f64>, f64)> {
        let chol = self.system(lambda)?;
        let y = DVector::from_column_slice(y);
        let coef = chol.solve(&self.basis.tr_mul(&y));
        let fitted = &self.basis * coef;
        let edf = chol.solve(&self.btb).trace();
        Some((fitted.iter().copied().collect(), edf))
    }

    fn gcv(&self, y: &[f64], lambda: f64) -> f64 {
        let Some((fitted, edf)) = self.fit(y, lambda) else {
            return f64::INFINITY;
        };
        let n = y.len() as f64;
        let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
        let denom = n - edf;
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        n * rss / (denom * denom)
    }

    /// Smooths `y`, choosing lambda by generalized cross-validation when none is given.
    pub fn smooth(&self, y: &[f64], lambda: Option<f64>) -> Smoothed {
        let lambda = lambda.unwrap_or_else(|| self.select_lambda(y));
        let (values, edf) = self
            .fit(y, lambda)
            .unwrap_or_else(|| (y.to_vec(), y.len() as f64));
        Smoothed {
            gcv: self.gcv(y, lambda),
            values,
            lambda,
            edf,
        }
    }

    pub fn select_lambda(&self, y: &[f64]) -> f64 {
        let (lo, hi) = LOG_LAMBDA_RANGE;
        let steps = 80;
        let grid: Vec<f64> = (0..=steps)
            .map(|k| lo + (hi - lo) * k as f64 / steps as f64)
            .collect();
        let scores: Vec<f64> = grid
            .iter()
            .map(|&l| self.gcv(y, libm::pow(10.0, l)))
            .collect();
        let best = (0..scores.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap_or(0);
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(steps)];
        let (l, v) = golden_section(&mut |l| self.gcv(y, libm::pow(10.0, l)), a, b, 1e-6);
        if v <= scores[best] {
            libm::pow(10.0, l)
        } else {
            libm::pow(10.0, grid[best])
        }
    }
}

/// Grid of equally spaced points `0..n` scaled to `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let b = BSplineBasis::uniform(0.0, 200.0, 10).unwrap();
        let d = b.design(&linspace(0.0, 200.0, 41));
        for i in 0..41 {
            let s: f64 = d.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn penalty_annihilates_affine_coefficients() {
        // Coefficients of an affine function in a uniform basis are affine in the index.
        let b = BSplineBasis::uniform(0.0, 200.0, 10).unwrap();
        let s = b.penalty();
        let c = DVector::from_fn(10, |i, _| 2.0 - 0.3 * i as f64);
        assert!((&s * &c).norm() < 1e-12);
    }

    #[test]
    fn penalty_matches_quadrature() {
        let b = BSplineBasis::uniform(0.0, 10.0, 7).unwrap();
        let s = b.penalty();
        // Midpoint rule on second derivatives computed by central differences.
        let n = 20000;
        let dx = 10.0 / n as f64;
        let eps = 1e-4;
        let mut q = DMatrix::<f64>::zeros(7, 7);
        for k in 0..n {
            let x = (k as f64 + 0.5) * dx;
            let xs = [x - eps, x, x + eps];
            let d = b.design(&xs);
            let dd: Vec<f64> = (0..7)
                .map(|j| (d[(0, j)] - 2.0 * d[(1, j)] + d[(2, j)]) / (eps * eps))
                .collect();
            for i in 0..7 {
                for j in 0..7 {
                    q[(i, j)] += dd[i] * dd[j] * dx;
                }
            }
        }
        assert!((&q - &s).amax() < 1e-3 * s.amax());
    }
}
