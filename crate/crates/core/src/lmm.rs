//! Linear mixed model with nested random intercepts (subject, lesion within
//! subject), fitted by profiled (restricted) maximum likelihood.
//!
//! For `y = X b + u_subject + u_lesion + e`, the marginal covariance of one
//! subject is `s2 * (I + t_l^2 Z_l Z_l' + t_s^2 1 1')`. Its inverse and log
//! determinant have closed forms in the per-lesion sums of `X` and `y`, so one
//! deviance evaluation costs `O(lesions * p^2)` regardless of voxel count.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{Covariate, Design, Grouping};
use crate::error::{Error, Result};
use crate::linalg::check_full_rank;
use crate::optimize::{nelder_mead, newton_polish, NelderMeadOptions};
use crate::rng::{substream, ReplicateRunner};
use crate::stats::{percentile_interval, two_sided_p};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Reml,
    Ml,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomEffects {
    #[default]
    SubjectAndLesion,
    SubjectOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmmOptions {
    pub method: Method,
    pub random_effects: RandomEffects,
    /// Relative deviance tolerance of the optimizer.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            method: Method::Reml,
            random_effects: RandomEffects::SubjectAndLesion,
            tolerance: 1e-8,
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    pub columns: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma2_subject: f64,
    pub sigma2_lesion: f64,
    pub sigma2_residual: f64,
    /// Covariance of the fixed effects, row-major `p x p`.
    pub beta_covariance: Vec<Vec<f64>>,
    /// Log-likelihood, restricted when `method` is REML.
    pub log_likelihood: f64,
    pub method: Method,
    pub random_effects: RandomEffects,
    /// Relative standard deviations `(subject, lesion)` at the optimum.
    pub theta: [f64; 2],
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub n_obs: usize,
    pub n_subjects: usize,
    pub n_lesions: usize,
}

impl LmmFit {
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.beta.len())
            .map(|j| libm::sqrt(self.beta_covariance[j][j].max(0.0)))
            .collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<(f64, f64)> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some((self.beta[j], libm::sqrt(self.beta_covariance[j][j].max(0.0))))
    }
}

/// Precomputed design-side sufficient statistics; reusable for many responses.
#[derive(Debug, Clone)]
pub struct LmmProblem {
    n: usize,
    p: usize,
    columns: Vec<String>,
    /// Row-major copy of the design.
    x: Vec<f64>,
    xtx: DMatrix<f64>,
    /// Cluster of each row: a lesion, or the whole subject without lesion effects.
    row_cluster: Vec<usize>,
    cluster_n: Vec<f64>,
    /// `p` sums per cluster, flattened.
    cluster_sx: Vec<f64>,
    subject_clusters: Vec<Vec<usize>>,
    random_effects: RandomEffects,
    n_lesions: usize,
}

/// Response-side sufficient statistics.
#[derive(Debug, Clone)]
pub struct ResponseStats {
    xty: DVector<f64>,
    yty: f64,
    cluster_sy: Vec<f64>,
}

struct Profiled {
    deviance: f64,
    beta: DVector<f64>,
    xtwx: DMatrix<f64>,
    r2: f64,
}

impl LmmProblem {
    pub fn new(design: &Design, random_effects: RandomEffects) -> Result<Self> {
        let (n, p) = design.x.shape();
        let groups: &Grouping = &design.groups;
        if groups.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: groups.len(),
            });
        }
        if groups.n_subjects() < 2 {
            return Err(Error::TooFewSubjects {
                needed: 2,
                found: groups.n_subjects(),
            });
        }
        if design.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        check_full_rank(&design.x)?;
        if n <= p {
            return Err(Error::TooFewRows {
                needed: p + 1,
                found: n,
            });
        }
        let (row_cluster, n_clusters) = match random_effects {
            RandomEffects::SubjectAndLesion => (groups.lesion.clone(), groups.n_lesions),
            RandomEffects::SubjectOnly => (groups.subject.clone(), groups.n_subjects()),
        };
        let mut cluster_subject = vec![usize::MAX; n_clusters];
        let mut cluster_n = vec![0.0; n_clusters];
        let mut cluster_sx = vec![0.0; n_clusters * p];
        let mut x = Vec::with_capacity(n * p);
        for i in 0..n {
            let c = row_cluster[i];
            let s = groups.subject[i];
            if cluster_subject[c] == usize::MAX {
                cluster_subject[c] = s;
            } else if cluster_subject[c] != s {
                return Err(Error::InvalidConfig(String::from(
                    "lesions must be nested within subjects",
                )));
            }
            cluster_n[c] += 1.0;
            for j in 0..p {
                let v = design.x[(i, j)];
                x.push(v);
                cluster_sx[c * p + j] += v;
            }
        }
        let mut subject_clusters = vec![Vec::new(); groups.n_subjects()];
        for (c, &s) in cluster_subject.iter().enumerate() {
            subject_clusters[s].push(c);
        }
        Ok(LmmProblem {
            n,
            p,
            columns: design.columns.iter().map(|c| String::from(*c)).collect(),
            x,
            xtx: design.x.tr_mul(&design.x),
            row_cluster,
            cluster_n,
            cluster_sx,
            subject_clusters,
            random_effects,
            n_lesions: groups.n_lesions,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn response_stats(&self, y: &[f64]) -> Result<ResponseStats> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                left: self.n,
                right: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("outcome"));
        }
        let p = self.p;
        let mut xty = DVector::zeros(p);
        let mut yty = 0.0;
        let mut cluster_sy = vec![0.0; self.cluster_n.len()];
        for (i, &yi) in y.iter().enumerate() {
            let row = &self.x[i * p..(i + 1) * p];
            for j in 0..p {
                xty[j] += row[j] * yi;
            }
            yty += yi * yi;
            cluster_sy[self.row_cluster[i]] += yi;
        }
        Ok(ResponseStats {
            xty,
            yty,
            cluster_sy,
        })
    }

    /// Linear predictor `X b` for each row.
    pub fn predict(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .chunks_exact(self.p)
            .map(|r| r.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn profile(&self, stats: &ResponseStats, theta: [f64; 2], method: Method) -> Option<Profiled> {
        let p = self.p;
        let a = theta[1] * theta[1];
        let b = theta[0] * theta[0];
        let mut m = self.xtx.clone();
        let mut v = stats.xty.clone();
        let mut q = stats.yty;
        let mut logdet = 0.0;
        let mut g = DVector::zeros(p);
        for clusters in &self.subject_clusters {
            g.fill(0.0);
            let (mut gy, mut s) = (0.0, 0.0);
            for &c in clusters {
                let nl = self.cluster_n[c];
                let sx = DVector::from_column_slice(&self.cluster_sx[c * p..(c + 1) * p]);
                let sy = stats.cluster_sy[c];
                let d = 1.0 + nl * a;
                if a > 0.0 {
                    let w = a / d;
                    m.ger(-w, &sx, &sx, 1.0);
                    v.axpy(-w * sy, &sx, 1.0);
                    q -= w * sy * sy;
                    logdet += libm::log(d);
                }
                g.axpy(1.0 / d, &sx, 1.0);
                gy += sy / d;
                s += nl / d;
            }
            if b > 0.0 {
                let e = 1.0 + b * s;
                let w = b / e;
                m.ger(-w, &g, &g, 1.0);
                v.axpy(-w * gy, &g, 1.0);
                q -= w * gy * gy;
                logdet += libm::log(e);
            }
        }
        let chol = m.clone().cholesky()?;
        let beta = chol.solve(&v);
        let r2 = (q - v.dot(&beta)).max(0.0);
        let n = self.n as f64;
        let deviance = match method {
            Method::Ml => logdet + n * (1.0 + LN_2PI + libm::log(r2 / n)),
            Method::Reml => {
                let logdet_m: f64 = 2.0 * chol.l().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
                let dof = n - p as f64;
                logdet + logdet_m + dof * (1.0 + LN_2PI + libm::log(r2 / dof))
            }
        };
        Some(Profiled {
            deviance,
            beta,
            xtwx: m,
            r2,
        })
    }

    /// Profiled deviance (`-2` times the (restricted) log-likelihood) at `theta`.
    pub fn deviance(&self, stats: &ResponseStats, theta: [f64; 2], method: Method) -> f64 {
        self.profile(stats, theta, method)
            .map_or(f64::INFINITY, |p| p.deviance)
    }

    fn theta_of(&self, x: &[f64]) -> [f64; 2] {
        match self.random_effects {
            RandomEffects::SubjectAndLesion => [x[0].abs(), x[1].abs()],
            RandomEffects::SubjectOnly => [x[0].abs(), 0.0],
        }
    }

    /// Fit with the relative standard deviations held at `theta`.
    pub fn fit_at(&self, stats: &ResponseStats, theta: [f64; 2], method: Method) -> Result<LmmFit> {
        let prof = self
            .profile(stats, theta, method)
            .ok_or_else(|| Error::RankDeficient(String::from("weighted cross-product is singular")))?;
        Ok(self.assemble(prof, theta, method, true, 0, 1))
    }

    fn assemble(&self, prof: Profiled, theta: [f64; 2], method: Method, converged: bool, iterations: usize, evaluations: usize) -> LmmFit {
        let p = self.p;
        let denom = match method {
            Method::Reml => (self.n - p) as f64,
            Method::Ml => self.n as f64,
        };
        let sigma2 = prof.r2 / denom;
        let inv = prof
            .xtwx
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
        LmmFit {
            columns: self.columns.clone(),
            beta: prof.beta.iter().copied().collect(),
            sigma2_subject: theta[0] * theta[0] * sigma2,
            sigma2_lesion: theta[1] * theta[1] * sigma2,
            sigma2_residual: sigma2,
            beta_covariance: (0..p)
                .map(|i| (0..p).map(|j| sigma2 * inv[(i, j)]).collect())
                .collect(),
            log_likelihood: -0.5 * prof.deviance,
            method,
            random_effects: self.random_effects,
            theta,
            converged,
            iterations,
            evaluations,
            n_obs: self.n,
            n_subjects: self.subject_clusters.len(),
            n_lesions: match self.random_effects {
                RandomEffects::SubjectAndLesion => self.n_lesions,
                RandomEffects::SubjectOnly => 0,
            },
        }
    }

    /// Maximizes the (restricted) likelihood over the variance ratios.
    /// `start` skips the initial grid scan.
    pub fn fit(&self, stats: &ResponseStats, options: &LmmOptions, start: Option<[f64; 2]>) -> Result<LmmFit> {
        let method = options.method;
        let at_zero = self
            .profile(stats, [0.0, 0.0], method)
            .ok_or_else(|| Error::RankDeficient(String::from("cross-product is singular")))?;
        if at_zero.r2 <= 1e-24 * stats.yty.max(1.0) {
            // Exact fit: no residual variation left to apportion.
            let mut exact = at_zero;
            exact.r2 = 0.0;
            return Ok(self.assemble(exact, [0.0, 0.0], method, true, 0, 1));
        }
        let dims = match self.random_effects {
            RandomEffects::SubjectAndLesion => 2,
            RandomEffects::SubjectOnly => 1,
        };
        let mut evaluations = 1;
        let mut objective = |x: &[f64]| {
            evaluations += 1;
            self.deviance(stats, self.theta_of(x), method)
        };
        let start: Vec<f64> = match start {
            Some(t) => t[..dims].to_vec(),
            None => {
                let grid = [0.0, 0.05, 0.15, 0.4, 1.0, 2.5, 6.0];
                let mut best = (f64::INFINITY, vec![0.0; dims]);
                let mut point = vec![0.0; dims];
                let total = grid.len().pow(dims as u32);
                for k in 0..total {
                    let mut r = k;
                    for d in point.iter_mut() {
                        *d = grid[r % grid.len()];
                        r /= grid.len();
                    }
                    let v = objective(&point);
                    if v < best.0 {
                        best = (v, point.clone());
                    }
                }
                best.1
            }
        };
        let nm = NelderMeadOptions {
            initial_step: 0.2,
            f_tol: options.tolerance * 1e-4,
            x_tol: 1e-7,
            max_iterations: options.max_iterations,
        };
        let found = nelder_mead(&mut objective, &start, &nm);
        if !found.converged {
            return Err(Error::NotConverged {
                iterations: found.iterations,
            });
        }
        let iterations = found.iterations;
        let polished = newton_polish(&mut objective, found, 8);
        let theta = self.theta_of(&polished.x);
        let prof = self
            .profile(stats, theta, method)
            .ok_or_else(|| Error::RankDeficient(String::from("weighted cross-product is singular")))?;
        Ok(self.assemble(prof, theta, method, true, iterations, evaluations))
    }
}

/// Fits the nested random-intercept model of `y` on the design.
pub fn fit_lmm(design: &Design, y: &[f64], options: &LmmOptions) -> Result<LmmFit> {
    let problem = LmmProblem::new(design, options.random_effects)?;
    let stats = problem.response_stats(y)?;
    problem.fit(&stats, options, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// Normal-approximation 95% interval.
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Parametric-bootstrap percentile 95% interval, when available.
    pub boot_lower: Option<f64>,
    pub boot_upper: Option<f64>,
}

impl CoefficientRow {
    pub fn significant_normal(&self) -> bool {
        self.p_value < 0.05
    }

    pub fn significant_bootstrap(&self) -> Option<bool> {
        Some(self.boot_lower? > 0.0 || self.boot_upper? < 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
}

impl CoefficientTable {
    pub fn row(&self, name: &str) -> Option<&CoefficientRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn attach_bootstrap(&mut self, boot: &BootstrapResult) {
        if boot.ci.is_empty() {
            return;
        }
        for (row, &(lo, hi)) in self.rows.iter_mut().zip(&boot.ci) {
            row.boot_lower = Some(lo);
            row.boot_upper = Some(hi);
        }
    }
}

/// 97.5% standard-normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Wald statistics with two-sided p-values from the standard normal.
pub fn normal_approx_inference(fit: &LmmFit) -> CoefficientTable {
    let se = fit.std_errors();
    let rows = fit
        .columns
        .iter()
        .zip(&fit.beta)
        .zip(se)
        .map(|((name, &estimate), std_error)| {
            let t_value = if std_error > 0.0 {
                estimate / std_error
            } else if estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(estimate)
            };
            CoefficientRow {
                name: name.clone(),
                estimate,
                std_error,
                t_value,
                p_value: two_sided_p(t_value),
                ci_lower: estimate - Z_975 * std_error,
                ci_upper: estimate + Z_975 * std_error,
                boot_lower: None,
                boot_upper: None,
            }
        })
        .collect();
    CoefficientTable { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub seed: u64,
    pub betas: Vec<Vec<f64>>,
    /// Percentile 95% interval per coefficient (empty when `replicates == 0`).
    pub ci: Vec<(f64, f64)>,
    /// Replicates that were redrawn after a failed refit.
    pub redraws: usize,
}

/// Maximum refit attempts per bootstrap replicate.
pub const MAX_REFIT_ATTEMPTS: u64 = 10;

/// Parametric bootstrap: keeps `X b`, redraws subject intercepts, lesion
/// intercepts and noise from the fitted variances, and refits.
pub fn parametric_bootstrap<X: ReplicateRunner>(
    problem: &LmmProblem,
    groups: &Grouping,
    fit: &LmmFit,
    options: &LmmOptions,
    replicates: usize,
    seed: u64,
    runner: &X,
) -> Result<BootstrapResult> {
    let mean = problem.predict(&fit.beta);
    let sd_subject = libm::sqrt(fit.sigma2_subject);
    let sd_lesion = libm::sqrt(fit.sigma2_lesion);
    let sd_residual = libm::sqrt(fit.sigma2_residual);
    let deterministic = sd_subject == 0.0 && sd_lesion == 0.0 && sd_residual == 0.0;

    let results: Vec<Result<(Vec<f64>, usize)>> = runner.run(replicates, |b| {
        if deterministic {
            return Ok((fit.beta.clone(), 0));
        }
        let mut last = Error::NotConverged { iterations: 0 };
        for attempt in 0..MAX_REFIT_ATTEMPTS {
            let mut rng = substream(seed, b as u64, attempt);
            let mut draw = |sd: f64| -> f64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            };
            let u_subject: Vec<f64> = (0..groups.n_subjects()).map(|_| draw(sd_subject)).collect();
            let u_lesion: Vec<f64> = (0..groups.n_lesions).map(|_| draw(sd_lesion)).collect();
            let y: Vec<f64> = mean
                .iter()
                .enumerate()
                .map(|(i, m)| m + u_subject[groups.subject[i]] + u_lesion[groups.lesion[i]] + draw(sd_residual))
                .collect();
            let refit = problem
                .response_stats(&y)
                .and_then(|s| problem.fit(&s, options, Some(fit.theta)));
            match refit {
                Ok(f) => return Ok((f.beta, attempt as usize)),
                Err(e) => last = e,
            }
        }
        Err(last)
    });

    let mut betas = Vec::with_capacity(replicates);
    let mut redraws = 0;
    for r in results {
        let (beta, attempts) = r?;
        redraws += attempts;
        betas.push(beta);
    }
    let ci = if replicates == 0 {
        Vec::new()
    } else {
        (0..fit.beta.len())
            .map(|j| {
                let col: Vec<f64> = betas.iter().map(|b| b[j]).collect();
                percentile_interval(&col, 0.95)
            })
            .collect()
    };
    Ok(BootstrapResult {
        replicates,
        seed,
        betas,
        ci,
        redraws,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateFit {
    pub covariate: Covariate,
    pub fit: Result<LmmFit>,
}

/// One intercept-plus-covariate model per covariate, same random effects.
pub fn fit_univariate_models(design: &Design, y: &[f64], covariates: &[Covariate], options: &LmmOptions) -> Vec<UnivariateFit> {
    covariates
        .iter()
        .map(|&c| UnivariateFit {
            covariate: c,
            fit: design.univariate(c).and_then(|d| fit_lmm(&d, y, options)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::COLUMN_NAMES;
    use crate::rng::{seeded, Sequential};

    fn toy_design(n_subjects: usize, lesions: usize, voxels: usize) -> Design {
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let names: Vec<String> = (0..n_subjects).map(|s| alloc::format!("s{s}")).collect();
        for s in 0..n_subjects {
            for l in 0..lesions {
                for v in 0..voxels {
                    labels.push((names[s].as_str(), l as u32));
                    data.extend_from_slice(&[1.0, (v % 4) as f64 + 1.0, (s % 2) as f64]);
                }
            }
        }
        let n = labels.len();
        Design {
            x: DMatrix::from_row_slice(n, 3, &data),
            columns: alloc::vec![COLUMN_NAMES[0], COLUMN_NAMES[2], COLUMN_NAMES[7]],
            groups: Grouping::from_labels(labels),
        }
    }

    #[test]
    fn exact_fit_recovers_beta() {
        let d = toy_design(4, 3, 5);
        let beta = [2.0, -1.5, 0.75];
        let y: Vec<f64> = (0..d.x.nrows())
            .map(|i| (0..3).map(|j| d.x[(i, j)] * beta[j]).sum())
            .collect();
        let fit = fit_lmm(&d, &y, &LmmOptions::default()).unwrap();
        for (a, b) in fit.beta.iter().zip(beta) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(fit.sigma2_subject <= 1e-8 && fit.sigma2_lesion <= 1e-8 && fit.sigma2_residual <= 1e-8);
    }

    #[test]
    fn zero_variance_bootstrap_is_degenerate() {
        let d = toy_design(4, 3, 5);
        let y: Vec<f64> = (0..d.x.nrows()).map(|i| 1.0 + d.x[(i, 1)]).collect();
        let options = LmmOptions::default();
        let problem = LmmProblem::new(&d, options.random_effects).unwrap();
        let fit = fit_lmm(&d, &y, &options).unwrap();
        let boot = parametric_bootstrap(&problem, &d.groups, &fit, &options, 5, 3, &Sequential).unwrap();
        assert!(boot.betas.iter().all(|b| *b == fit.beta));
        assert!(boot.ci.iter().zip(&fit.beta).all(|(c, b)| c.0 == *b && c.1 == *b));
    }

    #[test]
    fn too_few_subjects() {
        let d = toy_design(1, 3, 5);
        let y = vec![0.0; d.x.nrows()];
        assert!(matches!(
            fit_lmm(&d, &y, &LmmOptions::default()),
            Err(Error::TooFewSubjects { .. })
        ));
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let mut d = toy_design(4, 2, 3);
        for i in 0..d.x.nrows() {
            d.x[(i, 2)] = 1.0;
        }
        let y: Vec<f64> = (0..d.x.nrows()).map(|i| i as f64).collect();
        let uni = fit_univariate_models(&d, &y, &[Covariate::Treatment], &LmmOptions::default());
        assert!(matches!(uni[0].fit, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn wald_table_values() {
        let mut rng = seeded(5);
        let d = toy_design(6, 3, 6);
        let y: Vec<f64> = (0..d.x.nrows())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let fit = fit_lmm(&d, &y, &LmmOptions::default()).unwrap();
        let mut zero = fit.clone();
        zero.beta[1] = 0.0;
        assert_eq!(normal_approx_inference(&zero).rows[1].p_value, 1.0);
        let mut edge = fit.clone();
        let se = edge.std_errors()[1];
        edge.beta[1] = 1.96 * se;
        assert!((normal_approx_inference(&edge).rows[1].p_value - 0.05).abs() < 1e-3);
    }
}
