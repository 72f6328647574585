//! Dense linear-algebra helpers on top of nalgebra.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition bound below which a column-scaled Gram matrix counts as singular.
const RANK_TOLERANCE: f64 = 1e-12;

/// Fails when the columns of `x` are (numerically) linearly dependent.
pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::RankDeficient(format!("{n} rows for {p} columns")));
    }
    let norms: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::RankDeficient(format!("column {j} is identically zero")));
    }
    let scaled = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / norms[j]);
    let gram = scaled.tr_mul(&scaled);
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > RANK_TOLERANCE * max) {
        return Err(Error::RankDeficient(format!(
            "scaled Gram eigenvalue ratio {:.3e}",
            min / max
        )));
    }
    Ok(())
}

/// Least-squares solver for a fixed design, reusable across responses.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl OlsSolver {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        check_full_rank(x)?;
        let qr = x.clone().qr();
        Ok(OlsSolver {
            q: qr.q(),
            r: qr.r(),
        })
    }

    pub fn n_coefficients(&self) -> usize {
        self.r.ncols()
    }

    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        let qty = self.q.tr_mul(&y);
        let beta = self
            .r
            .solve_upper_triangular(&qty)
            .expect("full-rank R has a nonzero diagonal");
        beta.iter().copied().collect()
    }
}

/// Ordinary least squares of `y` on the columns of `x`.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    Ok(OlsSolver::new(x)?.solve(y))
}

/// Eigenpairs of a symmetric matrix, eigenvalues in nonincreasing order and
/// eigenvectors as matching columns.
pub fn symmetric_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| {
        eig.eigenvectors[(i, order[j])]
    });
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_coefficients() {
        let x = DMatrix::from_fn(20, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * 7) % 5) as f64,
        });
        let beta = [1.5, -0.25, 2.0];
        let y: Vec<f64> = (0..20)
            .map(|i| (0..3).map(|j| x[(i, j)] * beta[j]).sum())
            .collect();
        let b = ols(&x, &y).unwrap();
        for (a, e) in b.iter().zip(beta) {
            assert!((a - e).abs() < 1e-10);
        }
    }

    #[test]
    fn collinear_columns_rejected() {
        let x = DMatrix::from_fn(10, 2, |_, _| 1.0);
        assert!(matches!(check_full_rank(&x), Err(Error::RankDeficient(_))));
    }
}
