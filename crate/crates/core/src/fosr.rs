//! Two-step function-on-scalar regression: ordinary least squares at every
//! grid point, then penalized spline smoothing of each coefficient function.
//! Uncertainty comes from resampling subjects.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::linalg::{check_full_rank, OlsSolver};
use crate::pca::Band;
use crate::rng::{substream, uniform_index, ReplicateRunner, MAX_ATTEMPTS};
use crate::spline::PenalizedSmoother;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFunction {
    pub name: String,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FosrOptions {
    pub basis_dim: usize,
    /// Fixed smoothing parameter; chosen by GCV per function when `None`.
    pub lambda: Option<f64>,
    /// Cap on redraws of degenerate resamples across the whole bootstrap.
    pub max_replacements: u64,
}

impl Default for FosrOptions {
    fn default() -> Self {
        FosrOptions {
            basis_dim: 10,
            lambda: None,
            max_replacements: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FosrFit {
    pub grid_days: Vec<f64>,
    pub coefficients: Vec<CoefficientFunction>,
    /// Pointwise 95% percentile bands per coefficient; empty without replicates.
    pub bands: Vec<Band>,
    pub replicates: usize,
    pub seed: u64,
    /// Resamples discarded because a covariate level was missing.
    pub replacements: usize,
}

fn check_profiles<R: AsRef<[f64]>>(profiles: &[R], n_rows: usize) -> Result<usize> {
    if profiles.len() != n_rows {
        return Err(Error::LengthMismatch {
            left: n_rows,
            right: profiles.len(),
        });
    }
    let t = profiles.first().map_or(0, |p| p.as_ref().len());
    for p in profiles {
        let p = p.as_ref();
        if p.len() != t {
            return Err(Error::LengthMismatch { left: t, right: p.len() });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("functional outcome"));
        }
    }
    Ok(t)
}

/// OLS coefficients at each grid point; `result[j][t]` is coefficient `j` at point `t`.
pub fn pointwise_fit<R: AsRef<[f64]>>(profiles: &[R], x: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::TooFewRows { needed: p, found: n });
    }
    let t = check_profiles(profiles, n)?;
    let solver = OlsSolver::new(x)?;
    let mut out = alloc::vec![alloc::vec![0.0; t]; p];
    let mut slice = alloc::vec![0.0; n];
    for k in 0..t {
        for (s, row) in slice.iter_mut().zip(profiles) {
            *s = row.as_ref()[k];
        }
        for (j, b) in solver.solve(&slice).into_iter().enumerate() {
            out[j][k] = b;
        }
    }
    Ok(out)
}

/// Penalized cubic-spline smoothing of one raw coefficient function.
pub fn smooth_coefficient(raw: &[f64], grid_days: &[f64], basis_dim: usize, lambda: Option<f64>) -> Result<crate::spline::Smoothed> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw coefficient function"));
    }
    Ok(PenalizedSmoother::new(grid_days, basis_dim)?.smooth(raw, lambda))
}

fn smooth_all(raw: Vec<Vec<f64>>, smoother: &PenalizedSmoother, columns: &[&str], lambda: Option<f64>) -> Vec<CoefficientFunction> {
    raw.into_iter()
        .zip(columns)
        .map(|(r, name)| {
            let s = smoother.smooth(&r, lambda);
            CoefficientFunction {
                name: String::from(*name),
                raw: r,
                smoothed: s.values,
                lambda: s.lambda,
            }
        })
        .collect()
}

/// Point estimate plus subject-bootstrap bands; every replicate is refit end to end.
pub fn fit_fosr<R: AsRef<[f64]> + Sync, X: ReplicateRunner>(
    profiles: &[R],
    design: &Design,
    grid_days: &[f64],
    options: &FosrOptions,
    replicates: usize,
    seed: u64,
    runner: &X,
) -> Result<FosrFit> {
    let n_subjects = design.groups.n_subjects();
    if n_subjects < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            found: n_subjects,
        });
    }
    let t = check_profiles(profiles, design.x.nrows())?;
    if t != grid_days.len() {
        return Err(Error::LengthMismatch {
            left: grid_days.len(),
            right: t,
        });
    }
    let smoother = PenalizedSmoother::new(grid_days, options.basis_dim)?;
    let raw = pointwise_fit(profiles, &design.x)?;
    let coefficients = smooth_all(raw, &smoother, &design.columns, options.lambda);

    let by_subject = design.groups.rows_by_subject();
    let p = design.x.ncols();
    let per_replicate_cap = options.max_replacements.min(MAX_ATTEMPTS);
    let fits: Vec<Result<(Vec<Vec<f64>>, usize)>> = runner.run(replicates, |b| {
        for attempt in 0..per_replicate_cap {
            let mut rng = substream(seed, b as u64, attempt);
            let rows: Vec<usize> = (0..n_subjects)
                .flat_map(|_| by_subject[uniform_index(&mut rng, n_subjects)].iter().copied())
                .collect();
            let x = DMatrix::from_fn(rows.len(), p, |i, j| design.x[(rows[i], j)]);
            if check_full_rank(&x).is_err() {
                continue;
            }
            let ys: Vec<&[f64]> = rows.iter().map(|&r| profiles[r].as_ref()).collect();
            let raw = pointwise_fit(&ys, &x)?;
            let smoothed = smooth_all(raw, &smoother, &design.columns, options.lambda)
                .into_iter()
                .map(|c| c.smoothed)
                .collect();
            return Ok((smoothed, attempt as usize));
        }
        Err(Error::ImpossibleResampling(alloc::format!(
            "replicate {b} found no resample with every covariate level in {per_replicate_cap} draws"
        )))
    });

    let mut curves: Vec<Vec<Vec<f64>>> = alloc::vec![Vec::with_capacity(replicates); p];
    let mut replacements = 0;
    for f in fits {
        let (smoothed, redraws) = f?;
        replacements += redraws;
        for (j, c) in smoothed.into_iter().enumerate() {
            curves[j].push(c);
        }
    }
    let bands = if replicates == 0 {
        Vec::new()
    } else {
        curves.iter().map(|c| Band::from_replicates(c, 0.95)).collect()
    };
    Ok(FosrFit {
        grid_days: grid_days.to_vec(),
        coefficients,
        bands,
        replicates,
        seed,
        replacements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceFlags {
    pub name: String,
    /// Grid indices where the band excludes 0.
    pub significant_points: Vec<usize>,
    pub anywhere: bool,
    pub everywhere: bool,
}

pub fn band_significance(name: &str, band: &Band) -> SignificanceFlags {
    let significant_points: Vec<usize> = band
        .lower
        .iter()
        .zip(&band.upper)
        .enumerate()
        .filter(|(_, (lo, hi))| **lo > 0.0 || **hi < 0.0)
        .map(|(k, _)| k)
        .collect();
    SignificanceFlags {
        name: String::from(name),
        anywhere: !significant_points.is_empty(),
        everywhere: !band.lower.is_empty() && significant_points.len() == band.lower.len(),
        significant_points,
    }
}

/// Per-coefficient grid points whose pointwise band excludes zero.
pub fn significance_summary(fit: &FosrFit) -> Vec<SignificanceFlags> {
    fit.coefficients
        .iter()
        .zip(&fit.bands)
        .map(|(c, b)| band_significance(&c.name, b))
        .collect()
}
