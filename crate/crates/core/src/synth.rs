//! Synthetic cohorts with known ground truth.
//!
//! Lesion voxels follow `plateau * (1 - r * (1 - exp(-t / tau)))` after
//! incidence, with recovery fraction `r = logistic(eta)` and
//! `eta = x'beta + b_subject + b_lesion + e_voxel`. Reference tissue is a
//! fixed slab at the bottom of the grid where lesions are never placed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{ClinicalCovariates, Cohort, PerSequence, Sequence, Sex, StudyVisit, Subtype, SubjectRecord};
use crate::components::filter_small_components;
use crate::design::{design_row, HingeMode, N_COLUMNS};
use crate::distance::distance_to_boundary;
use crate::error::{Error, Result};
use crate::profile::IncidenceCovariates;
use crate::rng::{seeded, uniform01, uniform_index};
use crate::volume::{Dims, Mask, Volume};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub dims: Dims,
    /// Depth in z of the reference-tissue slab.
    pub reference_slab: usize,
    pub follow_up_days: i64,
    pub mean_gap_days: f64,
    /// Gaps are drawn uniformly within `mean_gap_days +/- gap_jitter_days`.
    pub gap_jitter_days: f64,
    /// Minimum follow-up after incidence for a lesion to be placed at a visit.
    pub min_follow_up_days: i64,
    pub lesions_min: usize,
    pub lesions_max: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub edema_thickness: f64,
    pub baseline_lesions: usize,
    /// Sub-threshold clusters added to each incidence mask.
    pub spurious_per_visit: usize,
    /// Coefficients of the recovery linear predictor, in design column order.
    pub beta: [f64; N_COLUMNS],
    pub sigma_subject: f64,
    pub sigma_lesion: f64,
    pub sigma_voxel: f64,
    /// Standard deviation of per-visit intensity noise, in reference units.
    pub noise_sd: f64,
    /// Amplitude of the fixed checkerboard pattern inside the reference slab.
    pub texture: f64,
    /// Signal at incidence in reference units; negative for hypointensity.
    pub plateau: PerSequence<f64>,
    pub tau_days: f64,
    pub edema_fraction: f64,
    pub edema_tau_days: f64,
    /// Days after incidence during which lesion voxels stay in the presence mask.
    pub persist_days: i64,
    pub reference_mean: PerSequence<f64>,
    pub reference_scale: PerSequence<f64>,
    pub age_min: f64,
    pub age_max: f64,
    pub p_spms: f64,
    pub p_male: f64,
    pub p_treated: f64,
    pub p_treatment_start: f64,
    pub p_steroids: f64,
    pub hinge_mode: HingeMode,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 34,
            dims: Dims::new(32, 32, 20),
            reference_slab: 2,
            follow_up_days: 520,
            mean_gap_days: 37.0,
            gap_jitter_days: 10.0,
            min_follow_up_days: 200,
            lesions_min: 2,
            lesions_max: 4,
            radius_min: 2.0,
            radius_max: 3.2,
            edema_thickness: 1.0,
            baseline_lesions: 1,
            spurious_per_visit: 1,
            beta: [1.5, -0.4, -0.35, -0.03, -0.01, 0.5, 0.1, 0.9],
            sigma_subject: 0.3,
            sigma_lesion: 0.3,
            sigma_voxel: 0.3,
            noise_sd: 1.0,
            texture: 0.5,
            plateau: PerSequence([6.0, -4.0, 6.0, 4.0]),
            tau_days: 60.0,
            edema_fraction: 0.6,
            edema_tau_days: 10.0,
            persist_days: 60,
            reference_mean: PerSequence([100.0, 80.0, 90.0, 70.0]),
            reference_scale: PerSequence([8.0, 6.0, 7.0, 5.0]),
            age_min: 20.0,
            age_max: 55.0,
            p_spms: 0.3,
            p_male: 0.35,
            p_treated: 0.5,
            p_treatment_start: 0.3,
            p_steroids: 0.15,
            hinge_mode: HingeMode::PaperLiteral,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_subjects == 0 {
            return bad("synthetic cohort needs at least one subject".into());
        }
        for (name, v) in [
            ("sigma_subject", self.sigma_subject),
            ("sigma_lesion", self.sigma_lesion),
            ("sigma_voxel", self.sigma_voxel),
            ("noise_sd", self.noise_sd),
            ("texture", self.texture),
            ("gap_jitter_days", self.gap_jitter_days),
            ("edema_thickness", self.edema_thickness),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.noise_sd == 0.0 && self.texture == 0.0 {
            return bad("reference tissue needs noise_sd or texture > 0".into());
        }
        if !(self.mean_gap_days - self.gap_jitter_days >= 1.0) {
            return bad("every visit gap must be at least one day".into());
        }
        if self.lesions_min > self.lesions_max {
            return bad("lesions_min exceeds lesions_max".into());
        }
        if !(self.radius_min > 0.0 && self.radius_min <= self.radius_max) {
            return bad("lesion radii must satisfy 0 < radius_min <= radius_max".into());
        }
        if !(self.tau_days > 0.0 && self.edema_tau_days > 0.0) {
            return bad("time constants must be positive".into());
        }
        if self.reference_slab == 0 || self.reference_slab + 2 >= self.dims.nz {
            return bad(format!("reference slab {} does not fit grid {}", self.reference_slab, self.dims));
        }
        if self.follow_up_days < self.min_follow_up_days + self.mean_gap_days as i64 {
            return bad("follow-up too short for any lesion to meet the inclusion horizon".into());
        }
        if self.reference_scale.0.iter().any(|s| !(*s > 0.0)) {
            return bad("reference scales must be positive".into());
        }
        for p in [self.p_spms, self.p_male, self.p_treated, self.p_treatment_start, self.p_steroids] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        if !(self.age_min <= self.age_max) {
            return bad("age_min exceeds age_max".into());
        }
        Ok(())
    }
}

/// Generating quantities of one lesion-tissue voxel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueVoxel {
    pub subject_id: String,
    /// Generation order of the lesion within its subject, from 0.
    pub lesion: u32,
    pub voxel_index: usize,
    pub incidence_day: i64,
    pub covariates: IncidenceCovariates,
    pub eta: f64,
    pub recovery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub seed: u64,
    pub beta: [f64; N_COLUMNS],
    pub sigma_subject: f64,
    pub sigma_lesion: f64,
    pub sigma_voxel: f64,
    pub subject_effects: Vec<f64>,
    pub lesion_effects: Vec<Vec<f64>>,
    pub voxels: Vec<TrueVoxel>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    uniform01(rng) < p
}

fn visit_days(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<i64> {
    let mut days = vec![0i64];
    while *days.last().unwrap_or(&0) < config.follow_up_days {
        let gap = uniform(
            rng,
            config.mean_gap_days - config.gap_jitter_days,
            config.mean_gap_days + config.gap_jitter_days,
        );
        let gap = (libm::round(gap) as i64).max(1);
        days.push(days.last().unwrap_or(&0) + gap);
    }
    days
}

struct Sphere {
    core: Vec<usize>,
    shell: Vec<usize>,
}

/// Voxels reserved so far, grown by a margin so that separate structures
/// never touch under 26-connectivity.
struct Occupancy {
    dims: Dims,
    taken: Mask,
}

impl Occupancy {
    fn new(dims: Dims) -> Self {
        Occupancy {
            dims,
            taken: Mask::empty(dims),
        }
    }

    fn is_free(&self, voxels: &[usize], margin: i64) -> bool {
        voxels.iter().all(|&i| {
            let [x, y, z] = self.dims.coords(i);
            let (x, y, z) = (x as i64, y as i64, z as i64);
            (-margin..=margin).all(|dz| {
                (-margin..=margin).all(|dy| {
                    (-margin..=margin).all(|dx| {
                        self.dims
                            .checked_index(x + dx, y + dy, z + dz)
                            .is_none_or(|j| !self.taken.contains(j))
                    })
                })
            })
        })
    }

    fn claim(&mut self, voxels: &[usize]) {
        for &i in voxels {
            self.taken.set(i, true);
        }
    }
}

const PLACEMENT_TRIES: usize = 2000;

fn place_sphere(config: &SynthConfig, rng: &mut ChaCha8Rng, occ: &mut Occupancy, radius: f64, shell: f64) -> Result<Sphere> {
    let d = config.dims;
    let reach = libm::ceil(radius + shell) as usize;
    let z_lo = config.reference_slab + 1 + reach;
    if 2 * reach >= d.nx || 2 * reach >= d.ny || z_lo + reach >= d.nz {
        return Err(Error::InvalidConfig(format!("lesion radius {radius} does not fit grid {d}")));
    }
    for _ in 0..PLACEMENT_TRIES {
        let c = [
            reach + uniform_index(rng, d.nx - 2 * reach),
            reach + uniform_index(rng, d.ny - 2 * reach),
            z_lo + uniform_index(rng, d.nz - reach - z_lo),
        ];
        let mut sphere = Sphere {
            core: Vec::new(),
            shell: Vec::new(),
        };
        for z in c[2] - reach..=c[2] + reach {
            for y in c[1] - reach..=c[1] + reach {
                for x in c[0] - reach..=c[0] + reach {
                    let r2 = [x as f64 - c[0] as f64, y as f64 - c[1] as f64, z as f64 - c[2] as f64]
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>();
                    let r = libm::sqrt(r2);
                    if r <= radius {
                        sphere.core.push(d.index(x, y, z));
                    } else if r <= radius + shell {
                        sphere.shell.push(d.index(x, y, z));
                    }
                }
            }
        }
        let all: Vec<usize> = sphere.core.iter().chain(&sphere.shell).copied().collect();
        if occ.is_free(&all, 2) {
            occ.claim(&all);
            return Ok(sphere);
        }
    }
    Err(Error::InvalidConfig(format!("could not place a lesion of radius {radius} in grid {d}")))
}

/// Small cube in the lesion region, clear of every reserved voxel.
fn place_spurious(config: &SynthConfig, rng: &mut ChaCha8Rng, occ: &Occupancy) -> Option<Vec<usize>> {
    let d = config.dims;
    let z_lo = config.reference_slab + 1;
    for _ in 0..PLACEMENT_TRIES {
        let (x, y, z) = (
            uniform_index(rng, d.nx - 1),
            uniform_index(rng, d.ny - 1),
            z_lo + uniform_index(rng, d.nz - 1 - z_lo),
        );
        let cube: Vec<usize> = (0..8).map(|k| d.index(x + (k & 1), y + ((k >> 1) & 1), z + (k >> 2))).collect();
        if occ.is_free(&cube, 2) {
            return Some(cube);
        }
    }
    None
}

struct Lesion {
    sphere: Sphere,
    visit: usize,
    recovery: Vec<f64>,
}

fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-eta))
}

/// Generates a cohort and the quantities it was generated from. The same
/// config and seed always give bit-identical output.
pub fn synth_cohort(config: &SynthConfig, seed: u64) -> Result<(Cohort, SynthGroundTruth)> {
    config.validate()?;
    let mut rng = seeded(seed);
    let d = config.dims;
    let mut subjects = Vec::with_capacity(config.n_subjects);
    let mut truth = SynthGroundTruth {
        seed,
        beta: config.beta,
        sigma_subject: config.sigma_subject,
        sigma_lesion: config.sigma_lesion,
        sigma_voxel: config.sigma_voxel,
        subject_effects: Vec::new(),
        lesion_effects: Vec::new(),
        voxels: Vec::new(),
    };
    let slab: Vec<usize> = (0..d.nx * d.ny * config.reference_slab).collect();
    let reference = Mask::from_indices(d, slab.iter().copied());
    let texture: Vec<f64> = (0..d.len())
        .map(|i| {
            if i >= slab.len() {
                return 0.0;
            }
            let [x, y, z] = d.coords(i);
            if (x + y + z) % 2 == 0 {
                config.texture
            } else {
                -config.texture
            }
        })
        .collect();

    for s in 0..config.n_subjects {
        let subject_id = format!("S{:03}", s + 1);
        let days = visit_days(config, &mut rng);
        let age0 = uniform(&mut rng, config.age_min, config.age_max);
        let sex = if bernoulli(&mut rng, config.p_male) { Sex::Male } else { Sex::Female };
        let subtype = if bernoulli(&mut rng, config.p_spms) { Subtype::Spms } else { Subtype::Rrms };
        let treatment_from = if bernoulli(&mut rng, config.p_treated) {
            Some(0)
        } else if bernoulli(&mut rng, config.p_treatment_start) {
            Some(days[1 + uniform_index(&mut rng, days.len() - 1)])
        } else {
            None
        };
        let covariates: Vec<ClinicalCovariates> = days
            .iter()
            .map(|&day| ClinicalCovariates {
                subtype,
                on_steroids: bernoulli(&mut rng, config.p_steroids),
                on_treatment: treatment_from.is_some_and(|t| day >= t),
                age: age0 + day as f64 / 365.25,
            })
            .collect();
        let b_subject = config.sigma_subject * normal(&mut rng);
        truth.subject_effects.push(b_subject);

        let mut occ = Occupancy::new(d);
        let mut baseline = Vec::new();
        for _ in 0..config.baseline_lesions {
            let r = uniform(&mut rng, config.radius_min, config.radius_max);
            baseline.extend(place_sphere(config, &mut rng, &mut occ, r, 0.0)?.core);
        }
        let last = *days.last().unwrap_or(&0);
        let eligible: Vec<usize> = (1..days.len())
            .filter(|&k| days[k] + config.min_follow_up_days <= last)
            .collect();
        let n_lesions = config.lesions_min + uniform_index(&mut rng, config.lesions_max - config.lesions_min + 1);
        let mut lesions = Vec::with_capacity(n_lesions);
        let mut lesion_effects = Vec::with_capacity(n_lesions);
        for _ in 0..n_lesions {
            let r = uniform(&mut rng, config.radius_min, config.radius_max);
            let sphere = place_sphere(config, &mut rng, &mut occ, r, config.edema_thickness)?;
            let visit = eligible[uniform_index(&mut rng, eligible.len())];
            lesion_effects.push(config.sigma_lesion * normal(&mut rng));
            lesions.push(Lesion {
                sphere,
                visit,
                recovery: Vec::new(),
            });
        }

        let mut sublime: Vec<Option<Mask>> = vec![None];
        for (k, _) in days.iter().enumerate().skip(1) {
            let mut m = Mask::empty(d);
            for l in lesions.iter().filter(|l| l.visit == k) {
                for &i in l.sphere.core.iter().chain(&l.sphere.shell) {
                    m.set(i, true);
                }
            }
            for _ in 0..config.spurious_per_visit {
                if let Some(cube) = place_spurious(config, &mut rng, &occ) {
                    for i in cube {
                        m.set(i, true);
                    }
                }
            }
            sublime.push(Some(m));
        }

        for (l, lesion) in lesions.iter_mut().enumerate() {
            let k = lesion.visit;
            let filtered = filter_small_components(sublime[k].as_ref().expect("follow-up visit"), 27);
            let dist = distance_to_boundary(&filtered);
            let visit_cov = &covariates[k];
            for &i in &lesion.sphere.core {
                let cov = IncidenceCovariates {
                    spms: subtype == Subtype::Spms,
                    distance_mm: dist.at(i),
                    age: visit_cov.age,
                    steroids: visit_cov.on_steroids,
                    male: sex == Sex::Male,
                    treatment: visit_cov.on_treatment,
                };
                let x = design_row(&cov, config.hinge_mode);
                let fixed: f64 = x.iter().zip(&config.beta).map(|(a, b)| a * b).sum();
                let eta = fixed + b_subject + lesion_effects[l] + config.sigma_voxel * normal(&mut rng);
                let r = logistic(eta);
                lesion.recovery.push(r);
                truth.voxels.push(TrueVoxel {
                    subject_id: subject_id.clone(),
                    lesion: l as u32,
                    voxel_index: i,
                    incidence_day: days[k],
                    covariates: cov,
                    eta,
                    recovery: r,
                });
            }
        }
        truth.lesion_effects.push(lesion_effects);

        let mut visits = Vec::with_capacity(days.len());
        for (k, &day) in days.iter().enumerate() {
            let mut signal = vec![[0.0f64; 4]; d.len()];
            let mut oasis = Mask::from_indices(d, baseline.iter().copied());
            for &i in &baseline {
                for s in Sequence::ALL {
                    signal[i][s.index()] = 0.7 * config.plateau[s];
                }
            }
            for lesion in &lesions {
                let t = day - days[lesion.visit];
                if t < 0 {
                    continue;
                }
                let t = t as f64;
                for (&i, &r) in lesion.sphere.core.iter().zip(&lesion.recovery) {
                    let frac = 1.0 - r * (1.0 - libm::exp(-t / config.tau_days));
                    for s in Sequence::ALL {
                        signal[i][s.index()] = config.plateau[s] * frac;
                    }
                    if t <= config.persist_days as f64 || frac >= 0.5 {
                        oasis.set(i, true);
                    }
                }
                let fade = config.edema_fraction * libm::exp(-t / config.edema_tau_days);
                for &i in &lesion.sphere.shell {
                    for s in Sequence::ALL {
                        signal[i][s.index()] = config.plateau[s] * fade;
                    }
                }
            }
            let mut volumes = Vec::with_capacity(4);
            for s in Sequence::ALL {
                let data: Vec<f32> = (0..d.len())
                    .map(|i| {
                        let z = texture[i] + config.noise_sd * normal(&mut rng) + signal[i][s.index()];
                        (config.reference_mean[s] + config.reference_scale[s] * z) as f32
                    })
                    .collect();
                volumes.push(Volume::new(d, data)?);
            }
            let [flair, t1, t2, pd]: [Volume; 4] = volumes.try_into().map_err(|_| Error::InvalidConfig("volume count".into()))?;
            visits.push(StudyVisit {
                day,
                volumes: PerSequence([flair, t1, t2, pd]),
                nawm_mask: reference.clone(),
                sublime_mask: sublime[k].take(),
                oasis_mask: oasis,
                covariates: covariates[k],
            });
        }
        subjects.push(SubjectRecord {
            subject_id,
            sex,
            age_at_baseline: age0,
            visits,
        });
    }
    Ok((Cohort::new(String::from(MANIFEST_VERSION), subjects)?, truth))
}
