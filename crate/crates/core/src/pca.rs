//! Principal components of concatenated voxel profiles.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_desc;
use crate::rng::{substream, uniform_index, ReplicateRunner};
use crate::stats::percentile_interval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub n_rows: usize,
    pub mean_curve: Vec<f64>,
    /// All eigenvalues of the sample covariance, nonincreasing, clamped at 0.
    pub eigenvalues: Vec<f64>,
    pub variance_explained: Vec<f64>,
    /// Retained unit eigenvectors, `eigenvectors[k]` belonging to `eigenvalues[k]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean_curve.len()
    }

    pub fn retained(&self) -> usize {
        self.eigenvectors.len()
    }

    /// Score of `profile` on component `k` (1-based).
    pub fn score(&self, profile: &[f64], k: usize) -> Result<f64> {
        if k == 0 || k > self.retained() {
            return Err(Error::ComponentOutOfRange {
                k,
                available: self.retained(),
            });
        }
        Ok(project(profile, &self.mean_curve, &self.eigenvectors[k - 1]))
    }
}

fn project(profile: &[f64], mean: &[f64], phi: &[f64]) -> f64 {
    profile
        .iter()
        .zip(mean)
        .zip(phi)
        .map(|((x, m), p)| (x - m) * p)
        .sum()
}

fn check_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: rows.len(),
        });
    }
    let d = rows[0].as_ref().len();
    for r in rows {
        let r = r.as_ref();
        if r.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("profile matrix"));
        }
    }
    Ok(d)
}

fn column_means<R: AsRef<[f64]>>(rows: &[R], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Accumulates the upper triangle of `sum (x - center)(x - center)^T` into `acc`.
fn accumulate_cross(acc: &mut [f64], sum: &mut [f64], row: &[f64], center: &[f64], buf: &mut [f64]) {
    let d = center.len();
    for ((b, x), c) in buf.iter_mut().zip(row).zip(center) {
        *b = x - c;
    }
    for i in 0..d {
        sum[i] += buf[i];
        let bi = buf[i];
        if bi == 0.0 {
            continue;
        }
        let out = &mut acc[i * d + i..i * d + d];
        for (o, bj) in out.iter_mut().zip(&buf[i..]) {
            *o += bi * bj;
        }
    }
}

fn symmetric_from_upper(upper: &[f64], d: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        upper[a * d + b] * scale
    })
}

fn model_from_covariance(cov: DMatrix<f64>, mean: Vec<f64>, n_rows: usize, retain: usize) -> PcaModel {
    let d = mean.len();
    let (values, vectors) = symmetric_eigen_desc(cov);
    let eigenvalues: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let variance_explained = eigenvalues
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    let eigenvectors = (0..retain.min(d))
        .map(|k| vectors.column(k).iter().copied().collect())
        .collect();
    PcaModel {
        n_rows,
        mean_curve: mean,
        eigenvalues,
        variance_explained,
        eigenvectors,
    }
}

/// PCA of the rows: column means removed, eigendecomposition of the sample
/// covariance (`n - 1` denominator). `retain = None` keeps every component.
pub fn fit_pca<R: AsRef<[f64]>>(rows: &[R], retain: Option<usize>) -> Result<PcaModel> {
    let d = check_rows(rows)?;
    let mean = column_means(rows, d);
    let mut acc = vec![0.0; d * d];
    let mut sum = vec![0.0; d];
    let mut buf = vec![0.0; d];
    for r in rows {
        accumulate_cross(&mut acc, &mut sum, r.as_ref(), &mean, &mut buf);
    }
    let n = rows.len();
    let cov = symmetric_from_upper(&acc, d, 1.0 / (n - 1) as f64);
    Ok(model_from_covariance(cov, mean, n, retain.unwrap_or(d)))
}

/// Mean of the second quarter of the vector: the T1 block of a FLAIR, T1, T2, PD concatenation.
pub fn t1_block_mean(phi: &[f64]) -> f64 {
    let block = phi.len() / 4;
    phi[block..2 * block].iter().sum::<f64>() / block as f64
}

/// Flips the first component so its T1 block has positive mean (ties keep the sign).
pub fn orient_pc1(mut model: PcaModel) -> Result<PcaModel> {
    let Some(pc1) = model.eigenvectors.first_mut() else {
        return Err(Error::ComponentOutOfRange { k: 1, available: 0 });
    };
    if t1_block_mean(pc1) < 0.0 {
        pc1.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(model)
}

/// Pointwise 95% percentile band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Band {
    pub fn from_replicates(replicates: &[Vec<f64>], level: f64) -> Band {
        let d = replicates.first().map_or(0, Vec::len);
        let mut column = vec![0.0; replicates.len()];
        let (mut lower, mut upper) = (vec![0.0; d], vec![0.0; d]);
        for j in 0..d {
            for (c, r) in column.iter_mut().zip(replicates) {
                *c = r[j];
            }
            (lower[j], upper[j]) = percentile_interval(&column, level);
        }
        Band { lower, upper }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBands {
    pub mean: Band,
    pub pc1: Band,
    pub variance_explained_1: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBootstrap {
    pub replicates: usize,
    pub seed: u64,
    pub mean_curves: Vec<Vec<f64>>,
    /// First components, each sign-aligned with the reference.
    pub pc1_curves: Vec<Vec<f64>>,
    pub variance_explained_1: Vec<f64>,
    /// `None` when no replicates were drawn.
    pub bands: Option<PcaBands>,
}

struct SubjectMoments {
    n: usize,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

/// Resamples subjects with replacement `replicates` times, refits the PCA on the
/// pooled voxels of each resample and reports percentile bands for the mean
/// curve, the first component and its share of variance.
pub fn bootstrap_pca<R: AsRef<[f64]> + Sync, X: ReplicateRunner>(
    rows: &[R],
    subject_of_row: &[usize],
    reference: &PcaModel,
    replicates: usize,
    seed: u64,
    runner: &X,
) -> Result<PcaBootstrap> {
    let d = check_rows(rows)?;
    let n_subjects = subject_of_row.iter().max().map_or(0, |m| m + 1);
    if n_subjects < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            found: n_subjects,
        });
    }
    if reference.eigenvectors.is_empty() {
        return Err(Error::ComponentOutOfRange { k: 1, available: 0 });
    }
    let center = &reference.mean_curve;
    let mut moments: Vec<SubjectMoments> = (0..n_subjects)
        .map(|_| SubjectMoments {
            n: 0,
            sum: vec![0.0; d],
            cross: vec![0.0; d * d],
        })
        .collect();
    let mut buf = vec![0.0; d];
    for (r, &s) in rows.iter().zip(subject_of_row) {
        let m = &mut moments[s];
        m.n += 1;
        accumulate_cross(&mut m.cross, &mut m.sum, r.as_ref(), center, &mut buf);
    }
    let ref_pc1 = &reference.eigenvectors[0];

    let fits: Vec<(Vec<f64>, Vec<f64>, f64)> = runner.run(replicates, |b| {
        let mut attempt = 0;
        loop {
            let mut rng = substream(seed, b as u64, attempt);
            let mut n = 0usize;
            let mut sum = vec![0.0; d];
            let mut cross = vec![0.0; d * d];
            for _ in 0..n_subjects {
                let m = &moments[uniform_index(&mut rng, n_subjects)];
                n += m.n;
                sum.iter_mut().zip(&m.sum).for_each(|(a, v)| *a += v);
                cross.iter_mut().zip(&m.cross).for_each(|(a, v)| *a += v);
            }
            if n < 2 {
                attempt += 1;
                continue;
            }
            let nf = n as f64;
            for i in 0..d {
                for j in i..d {
                    cross[i * d + j] -= sum[i] * sum[j] / nf;
                }
            }
            let cov = symmetric_from_upper(&cross, d, 1.0 / (nf - 1.0));
            let mean: Vec<f64> = center.iter().zip(&sum).map(|(c, s)| c + s / nf).collect();
            let model = model_from_covariance(cov, mean, n, 1);
            let mut pc1 = model.eigenvectors.into_iter().next().expect("one component");
            let dot: f64 = pc1.iter().zip(ref_pc1).map(|(a, b)| a * b).sum();
            if dot < 0.0 {
                pc1.iter_mut().for_each(|v| *v = -*v);
            }
            return (model.mean_curve, pc1, model.variance_explained[0]);
        }
    });

    let mut out = PcaBootstrap {
        replicates,
        seed,
        mean_curves: Vec::with_capacity(replicates),
        pc1_curves: Vec::with_capacity(replicates),
        variance_explained_1: Vec::with_capacity(replicates),
        bands: None,
    };
    for (m, p, v) in fits {
        out.mean_curves.push(m);
        out.pc1_curves.push(p);
        out.variance_explained_1.push(v);
    }
    if replicates > 0 {
        out.bands = Some(PcaBands {
            mean: Band::from_replicates(&out.mean_curves, 0.95),
            pc1: Band::from_replicates(&out.pc1_curves, 0.95),
            variance_explained_1: percentile_interval(&out.variance_explained_1, 0.95),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, f: impl Fn(usize) -> f64) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(f).collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn constant_rows_have_no_variance() {
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0]; 5];
        let m = fit_pca(&rows, None).unwrap();
        assert!(m.eigenvalues.iter().all(|&v| v == 0.0));
        assert_eq!(m.score(&rows[0], 1).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_rows_recover_direction() {
        let v = unit(8, |i| (i as f64 - 3.5) * 0.3 + 1.0);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| v.iter().map(|x| x * (i as f64 * 0.7 - 2.0)).collect())
            .collect();
        let m = fit_pca(&rows, None).unwrap();
        let cos: f64 = m.eigenvectors[0].iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!(libm::fabs(cos) > 1.0 - 1e-8);
        assert!((m.variance_explained[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scores_of_synthetic_profiles() {
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..8).map(|j| libm::sin((i * 3 + j * j) as f64)).collect())
            .collect();
        let m = fit_pca(&rows, None).unwrap();
        let phi1 = &m.eigenvectors[0];
        let phi2 = &m.eigenvectors[1];
        let p: Vec<f64> = (0..8).map(|j| m.mean_curve[j] + 3.0 * phi1[j]).collect();
        assert!((m.score(&p, 1).unwrap() - 3.0).abs() < 1e-12);
        let p: Vec<f64> = (0..8)
            .map(|j| m.mean_curve[j] + 2.0 * phi1[j] + 5.0 * phi2[j])
            .collect();
        assert!((m.score(&p, 1).unwrap() - 2.0).abs() < 1e-12);
        assert!(m.score(&m.mean_curve, 3).unwrap().abs() < 1e-15);
        assert!(matches!(m.score(&p, 9), Err(Error::ComponentOutOfRange { .. })));
        assert!(matches!(m.score(&p, 0), Err(Error::ComponentOutOfRange { .. })));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            fit_pca(&[vec![1.0, 2.0]], None),
            Err(Error::TooFewRows { .. })
        ));
        assert!(matches!(
            fit_pca(&[vec![1.0, f64::NAN], vec![0.0, 0.0]], None),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn orientation_flips_on_negative_t1_block() {
        let mut phi = vec![0.0; 8];
        phi[2] = -0.6;
        phi[3] = -0.8;
        let m = PcaModel {
            n_rows: 2,
            mean_curve: vec![0.0; 8],
            eigenvalues: vec![1.0; 8],
            variance_explained: vec![0.125; 8],
            eigenvectors: vec![phi.clone()],
        };
        let o = orient_pc1(m.clone()).unwrap();
        assert!(t1_block_mean(&o.eigenvectors[0]) > 0.0);
        assert_eq!(orient_pc1(o.clone()).unwrap(), o);
        let mut pos = m;
        pos.eigenvectors[0] = phi.iter().map(|v| -v).collect();
        assert_eq!(orient_pc1(pos.clone()).unwrap(), pos);
    }
}
