//! Monte-Carlo datasets drawn directly at the regression level, for checking
//! estimator calibration without volumetric data.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{build_design_from_covariates, Design, HingeMode, N_COLUMNS};
use crate::error::{Error, Result};
use crate::profile::IncidenceCovariates;
use crate::rng::{seeded, uniform01, uniform_index};

/// Reference effects on the PC-score scale, in design column order.
pub const REFERENCE_BETA: [f64; N_COLUMNS] = [8.89, 2.15, -9.39, -0.21, -0.10, 4.26, 1.16, 5.39];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterShape {
    pub n_subjects: usize,
    pub lesions_min: usize,
    pub lesions_max: usize,
    pub voxels_min: usize,
    pub voxels_max: usize,
}

impl Default for ClusterShape {
    fn default() -> Self {
        ClusterShape {
            n_subjects: 34,
            lesions_min: 8,
            lesions_max: 12,
            voxels_min: 120,
            voxels_max: 180,
        }
    }
}

impl ClusterShape {
    fn validate(&self) -> Result<()> {
        if self.n_subjects < 2
            || self.lesions_min == 0
            || self.lesions_min > self.lesions_max
            || self.voxels_min == 0
            || self.voxels_min > self.voxels_max
        {
            return Err(Error::InvalidConfig(alloc::format!("degenerate cluster shape {self:?}")));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn between(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    lo + uniform_index(rng, hi - lo + 1)
}

/// Covariates with the structure of the clinical data: subject-level
/// subtype and sex, lesion-level age, steroids and treatment, voxel-level
/// distance. Returns `(subject, lesion, covariates)` per row.
fn covariate_rows(shape: &ClusterShape, rng: &mut ChaCha8Rng) -> Vec<(usize, u32, IncidenceCovariates)> {
    let mut rows = Vec::new();
    for s in 0..shape.n_subjects {
        let spms = uniform01(rng) < 0.3;
        let male = uniform01(rng) < 0.35;
        let treated = uniform01(rng) < 0.5;
        let age0 = 20.0 + 35.0 * uniform01(rng);
        let n_lesions = between(rng, shape.lesions_min, shape.lesions_max);
        for l in 0..n_lesions {
            let age = age0 + 3.0 * uniform01(rng);
            let steroids = uniform01(rng) < 0.15;
            let treatment = treated || uniform01(rng) < 0.1;
            let n_voxels = between(rng, shape.voxels_min, shape.voxels_max);
            for _ in 0..n_voxels {
                let distance_mm = libm::sqrt(1.0 + uniform_index(rng, 20) as f64);
                rows.push((
                    s,
                    l as u32 + 1,
                    IncidenceCovariates {
                        spms,
                        distance_mm,
                        age,
                        steroids,
                        male,
                        treatment,
                    },
                ));
            }
        }
    }
    rows
}

fn subject_names(n: usize) -> Vec<alloc::string::String> {
    (0..n).map(|s| alloc::format!("S{:03}", s + 1)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedSimConfig {
    pub shape: ClusterShape,
    pub beta: [f64; N_COLUMNS],
    pub sigma_subject: f64,
    pub sigma_lesion: f64,
    pub sigma_residual: f64,
    pub hinge_mode: HingeMode,
}

impl Default for MixedSimConfig {
    fn default() -> Self {
        MixedSimConfig {
            shape: ClusterShape::default(),
            beta: REFERENCE_BETA,
            sigma_subject: 5.0,
            sigma_lesion: 5.0,
            sigma_residual: 20.0,
            hinge_mode: HingeMode::PaperLiteral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedSimData {
    pub design: Design,
    pub y: Vec<f64>,
}

/// Scalar outcomes `X beta + b_subject + b_lesion + e`.
pub fn simulate_mixed(config: &MixedSimConfig, seed: u64) -> Result<MixedSimData> {
    config.shape.validate()?;
    let mut rng = seeded(seed);
    let rows = covariate_rows(&config.shape, &mut rng);
    let names = subject_names(config.shape.n_subjects);
    let design = build_design_from_covariates(
        rows.iter().map(|(s, l, c)| (names[*s].as_str(), *l, c)),
        config.hinge_mode,
    )?;
    let subject_effects: Vec<f64> = (0..design.groups.n_subjects())
        .map(|_| config.sigma_subject * normal(&mut rng))
        .collect();
    let lesion_effects: Vec<f64> = (0..design.groups.n_lesions)
        .map(|_| config.sigma_lesion * normal(&mut rng))
        .collect();
    let y = (0..design.x.nrows())
        .map(|i| {
            let fixed: f64 = (0..N_COLUMNS).map(|j| design.x[(i, j)] * config.beta[j]).sum();
            fixed
                + subject_effects[design.groups.subject[i]]
                + lesion_effects[design.groups.lesion[i]]
                + config.sigma_residual * normal(&mut rng)
        })
        .collect();
    Ok(MixedSimData { design, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalSimConfig {
    pub shape: ClusterShape,
    /// Constant-in-time effect of distance on the outcome.
    pub distance_effect: f64,
    pub sigma_subject: f64,
    pub sigma_lesion: f64,
    pub sigma_voxel: f64,
    pub noise_sd: f64,
    pub end_day: f64,
    pub n_points: usize,
    pub hinge_mode: HingeMode,
}

impl Default for FunctionalSimConfig {
    fn default() -> Self {
        FunctionalSimConfig {
            shape: ClusterShape {
                n_subjects: 30,
                lesions_min: 3,
                lesions_max: 6,
                voxels_min: 15,
                voxels_max: 30,
            },
            distance_effect: 0.5,
            sigma_subject: 0.5,
            sigma_lesion: 0.5,
            sigma_voxel: 0.5,
            noise_sd: 1.0,
            end_day: 200.0,
            n_points: 41,
            hinge_mode: HingeMode::PaperLiteral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSimData {
    pub design: Design,
    pub grid_days: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
}

/// Functional outcomes with a decaying mean, a constant distance effect and
/// no effect of any other covariate.
pub fn simulate_functional(config: &FunctionalSimConfig, seed: u64) -> Result<FunctionalSimData> {
    config.shape.validate()?;
    if config.n_points < 2 {
        return Err(Error::InvalidConfig("functional outcome needs two or more points".into()));
    }
    let mut rng = seeded(seed);
    let rows = covariate_rows(&config.shape, &mut rng);
    let names = subject_names(config.shape.n_subjects);
    let design = build_design_from_covariates(
        rows.iter().map(|(s, l, c)| (names[*s].as_str(), *l, c)),
        config.hinge_mode,
    )?;
    let grid_days = crate::spline::linspace(0.0, config.end_day, config.n_points);
    let mean: Vec<f64> = grid_days.iter().map(|t| 1.0 + 4.0 * libm::exp(-t / 50.0)).collect();
    let subject_effects: Vec<f64> = (0..design.groups.n_subjects())
        .map(|_| config.sigma_subject * normal(&mut rng))
        .collect();
    let lesion_effects: Vec<f64> = (0..design.groups.n_lesions)
        .map(|_| config.sigma_lesion * normal(&mut rng))
        .collect();
    let profiles = rows
        .iter()
        .enumerate()
        .map(|(i, (_, _, c))| {
            let offset = config.distance_effect * c.distance_mm
                + subject_effects[design.groups.subject[i]]
                + lesion_effects[design.groups.lesion[i]]
                + config.sigma_voxel * normal(&mut rng);
            mean.iter().map(|m| m + offset + config.noise_sd * normal(&mut rng)).collect()
        })
        .collect();
    Ok(FunctionalSimData {
        design,
        grid_days,
        profiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_config() {
        let c = MixedSimConfig::default();
        let d = simulate_mixed(&c, 3).unwrap();
        assert_eq!(d.design.groups.n_subjects(), 34);
        let per_lesion = d.y.len() as f64 / d.design.groups.n_lesions as f64;
        assert!((120.0..=180.0).contains(&per_lesion));
        assert_eq!(d, simulate_mixed(&c, 3).unwrap());
        let f = simulate_functional(&FunctionalSimConfig::default(), 3).unwrap();
        assert_eq!(f.profiles.len(), f.design.x.nrows());
        assert_eq!(f.grid_days.len(), 41);
    }
}
