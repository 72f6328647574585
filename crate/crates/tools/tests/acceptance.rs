//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p lesion-tools --test acceptance [-- <filter>]`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use lesion_core::agreement::{cohen_kappa, LesionKey, RatingRecord};
use lesion_core::cohort::{ClinicalCovariates, PerSequence, Sequence, Sex, StudyVisit, Subtype, SubjectRecord};
use lesion_core::design::{Design, Grouping};
use lesion_core::distance::distance_to_boundary;
use lesion_core::events::{extract_subject_events, EventConfig};
use lesion_core::fosr::{fit_fosr, pointwise_fit, significance_summary, smooth_coefficient, FosrOptions};
use lesion_core::linalg::ols;
use lesion_core::lmm::{fit_lmm, normal_approx_inference, parametric_bootstrap, LmmOptions, LmmProblem, RandomEffects};
use lesion_core::pca::{bootstrap_pca, fit_pca};
use lesion_core::profile::{extract_subject_profiles, normalize_study, ProfileGrid};
use lesion_core::rng::{seeded, uniform01, uniform_index, Sequential, StreamRng};
use lesion_core::simulate::{simulate_functional, simulate_mixed, FunctionalSimConfig, MixedSimConfig, REFERENCE_BETA};
use lesion_core::synth::{synth_cohort, SynthConfig};
use lesion_core::volume::{Dims, Mask, Volume};
use lesion_tools::config::RunConfig;
use lesion_tools::ledger::{LedgerEntry, LedgerWriter};
use lesion_tools::manifest::write_cohort;
use lesion_tools::pipeline::{self, artifacts};
use lesion_tools::runner::Parallel;
use nalgebra::DMatrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn normal(rng: &mut StreamRng) -> f64 {
    let u1 = 1.0 - uniform01(rng);
    let u2 = uniform01(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn tempdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("temporary directory")
}

// ---------------------------------------------------------------- normalization

fn quantize(v: &Volume) -> Volume {
    let data = v.data().iter().map(|x| (x * 16.0).round() / 16.0).collect();
    Volume::new(v.dims(), data).unwrap()
}

fn affine(v: &Volume, a: f32, b: f32) -> Volume {
    Volume::new(v.dims(), v.data().iter().map(|x| a * x + b).collect()).unwrap()
}

fn normalization() -> Outcome {
    let mut worst_mean = 0.0f64;
    let mut worst_sd = 0.0f64;
    let mut worst_affine = 0.0f64;
    let mut studies = 0;
    for seed in 1..=3 {
        let (cohort, _) = synth_cohort(&SynthConfig::default(), seed).unwrap();
        for subject in &cohort.subjects {
            for visit in &subject.visits {
                let n = normalize_study(visit).unwrap();
                studies += 1;
                for s in Sequence::ALL {
                    let vals: Vec<f64> = visit.nawm_mask.indices().map(|i| n.values[s][i]).collect();
                    let m = vals.iter().sum::<f64>() / vals.len() as f64;
                    let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
                    worst_mean = worst_mean.max(m.abs());
                    worst_sd = worst_sd.max((sd - 1.0).abs());
                }
            }
        }
        // Affine invariance on exactly representable intensities.
        for visit in cohort.subjects.iter().take(4).flat_map(|s| s.visits.iter().take(3)) {
            let mut base = visit.clone();
            base.volumes = PerSequence::from_fn(|s| quantize(&visit.volumes[s]));
            let reference = normalize_study(&base).unwrap();
            for (a, b, sign) in [(3.0f32, -50.0f32, 1.0), (0.5, 7.0, 1.0), (-2.0, 4.0, -1.0)] {
                let mut moved = base.clone();
                moved.volumes = PerSequence::from_fn(|s| affine(&base.volumes[s], a, b));
                let n = normalize_study(&moved).unwrap();
                for s in Sequence::ALL {
                    for (x, y) in reference.values[s].iter().zip(&n.values[s]) {
                        worst_affine = worst_affine.max((sign * x - y).abs());
                    }
                }
            }
        }
    }
    outcome(
        worst_mean < 1e-10 && worst_sd < 1e-10 && worst_affine < 1e-10,
        format!(
            "{studies} studies; max |NAWM mean| {worst_mean:.1e}, max |sd - 1| {worst_sd:.1e}, max affine deviation {worst_affine:.1e}"
        ),
    )
}

// ------------------------------------------------------------ distance transform

/// Nearest background voxel centre by exhaustive search; the grid is
/// surrounded by one layer of background.
fn brute_force_distance(mask: &Mask) -> Vec<f64> {
    let d = mask.dims();
    let (nx, ny, nz) = (d.nx as i64, d.ny as i64, d.nz as i64);
    let mut background = Vec::new();
    for z in -1..=nz {
        for y in -1..=ny {
            for x in -1..=nx {
                let inside = x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
                if !inside || !mask.get(x as usize, y as usize, z as usize) {
                    background.push([x, y, z]);
                }
            }
        }
    }
    (0..d.len())
        .map(|i| {
            if !mask.contains(i) {
                return 0.0;
            }
            let [x, y, z] = d.coords(i).map(|c| c as i64);
            let best = background
                .iter()
                .map(|b| (b[0] - x).pow(2) + (b[1] - y).pow(2) + (b[2] - z).pow(2))
                .min()
                .unwrap();
            (best as f64).sqrt()
        })
        .collect()
}

fn random_mask(rng: &mut StreamRng) -> Mask {
    let dims = Dims::new(1 + uniform_index(rng, 12), 1 + uniform_index(rng, 12), 1 + uniform_index(rng, 12));
    let density = uniform01(rng);
    let data = (0..dims.len()).map(|_| uniform01(rng) < density).collect();
    Mask::from_bools(dims, data).unwrap()
}

fn distance_transform() -> Outcome {
    let mut rng = seeded(20_240_611);
    let mut mismatches = 0;
    let mut voxels = 0;
    for k in 0..200 {
        let mask = if k == 0 {
            Mask::from_bools(Dims::new(12, 12, 12), vec![true; 1728]).unwrap()
        } else {
            random_mask(&mut rng)
        };
        let fast = distance_to_boundary(&mask);
        let slow = brute_force_distance(&mask);
        voxels += slow.len();
        mismatches += fast.values.iter().zip(&slow).filter(|(a, b)| a != b).count();
    }
    outcome(
        mismatches == 0,
        format!("200 masks, {voxels} voxels, {mismatches} differ from exhaustive search"),
    )
}

// ---------------------------------------------------------------- threshold rules

struct RuleCase {
    name: &'static str,
    /// Voxels detected as incident at the first follow-up visit.
    component: Vec<[usize; 3]>,
    /// Present in the baseline presence mask.
    at_baseline: bool,
    /// Follow-up visits after the incidence visit: (days after incidence, voxel present).
    later: Vec<(i64, bool)>,
    /// (event detected, lesion tissue, profile included) for the first component voxel.
    expect: (bool, bool, bool),
}

fn cube(n: usize) -> Vec<[usize; 3]> {
    let mut v = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                v.push([4 + x, 4 + y, 4 + z]);
            }
        }
    }
    v
}

fn cube_minus(n: usize, drop: usize) -> Vec<[usize; 3]> {
    let mut v = cube(n);
    v.truncate(v.len() - drop);
    v
}

fn cube_plus(n: usize, extra: usize) -> Vec<[usize; 3]> {
    let mut v = cube(n);
    for k in 0..extra {
        v.push([4 + k, 4, 4 + n]);
    }
    v
}

/// 27 voxels touching only at corners, one 26-connected component.
fn diagonal_chain() -> Vec<[usize; 3]> {
    (0..27).map(|k| [1 + k, 2 + k % 2, 2 + k % 2]).collect()
}

/// 13 + 14 voxels separated by an empty plane.
fn split_component() -> Vec<[usize; 3]> {
    let mut v: Vec<[usize; 3]> = cube(3).into_iter().take(13).collect();
    v.extend(cube(3).into_iter().take(14).map(|[x, y, z]| [x, y, z + 5]));
    v
}

fn rule_cases() -> Vec<RuleCase> {
    let long = |gap: i64| vec![(gap, true), (200, true)];
    vec![
        RuleCase { name: "27 voxels, persists, 200 days", component: cube(3), at_baseline: false, later: long(30), expect: (true, true, true) },
        RuleCase { name: "26 voxels removed", component: cube_minus(3, 1), at_baseline: false, later: long(30), expect: (false, false, false) },
        RuleCase { name: "28 voxels kept", component: cube_plus(3, 1), at_baseline: false, later: long(30), expect: (true, true, true) },
        RuleCase { name: "64 voxels kept", component: cube(4), at_baseline: false, later: long(30), expect: (true, true, true) },
        RuleCase { name: "corner-connected 27 kept", component: diagonal_chain(), at_baseline: false, later: long(30), expect: (true, true, true) },
        RuleCase { name: "13 + 14 split removed", component: split_component(), at_baseline: false, later: long(30), expect: (false, false, false) },
        RuleCase { name: "present at +40 is lesion", component: cube(3), at_baseline: false, later: long(40), expect: (true, true, true) },
        RuleCase { name: "first visit at +41 is edema", component: cube(3), at_baseline: false, later: long(41), expect: (true, false, false) },
        RuleCase { name: "absent +30, present +60 is edema", component: cube(3), at_baseline: false, later: vec![(30, false), (60, true), (200, true)], expect: (true, false, false) },
        RuleCase { name: "absent +10, present +35 is lesion", component: cube(3), at_baseline: false, later: vec![(10, false), (35, true), (200, true)], expect: (true, true, true) },
        RuleCase { name: "absent at every later visit is edema", component: cube(3), at_baseline: false, later: vec![(20, false), (200, false)], expect: (true, false, false) },
        RuleCase { name: "follow-up 199 days excluded", component: cube(3), at_baseline: false, later: vec![(30, true), (199, true)], expect: (true, true, false) },
        RuleCase { name: "follow-up exactly 200 days included", component: cube(3), at_baseline: false, later: vec![(30, true), (200, true)], expect: (true, true, true) },
        RuleCase { name: "follow-up 260 days included", component: cube(3), at_baseline: false, later: vec![(30, true), (260, true)], expect: (true, true, true) },
        RuleCase { name: "follow-up 150 days excluded", component: cube(3), at_baseline: false, later: vec![(40, true), (150, true)], expect: (true, true, false) },
        RuleCase { name: "no later visit", component: cube(3), at_baseline: false, later: vec![], expect: (true, false, false) },
        RuleCase { name: "present at baseline excluded", component: cube(3), at_baseline: true, later: long(30), expect: (false, false, false) },
        RuleCase { name: "edema with long follow-up excluded", component: cube(3), at_baseline: false, later: vec![(45, true), (240, true)], expect: (true, false, false) },
        RuleCase { name: "lesion with 195-day follow-up excluded", component: cube(3), at_baseline: false, later: vec![(20, true), (195, true)], expect: (true, true, false) },
        RuleCase { name: "lesion re-detected later keeps first day", component: cube(3), at_baseline: false, later: vec![(25, true), (200, true)], expect: (true, true, true) },
    ]
}

fn case_subject(case: &RuleCase) -> (SubjectRecord, usize, i64) {
    let dims = Dims::new(32, 16, 16);
    let comp = Mask::from_indices(dims, case.component.iter().map(|v| dims.index(v[0], v[1], v[2])));
    let nawm = Mask::from_indices(dims, (0..dims.len()).filter(|&i| dims.coords(i)[0] == 0));
    let empty = Mask::empty(dims);
    let incidence = 100i64;
    let volume = |day: i64| {
        PerSequence::from_fn(|s| {
            let data = (0..dims.len())
                .map(|i| 100.0 + ((i * 7 + s.index() * 3) % 11) as f32 + (day % 13) as f32)
                .collect();
            Volume::new(dims, data).unwrap()
        })
    };
    let covariates = ClinicalCovariates {
        subtype: Subtype::Rrms,
        on_steroids: false,
        on_treatment: false,
        age: 40.0,
    };
    let visit = |day: i64, sublime: Option<Mask>, oasis: Mask| StudyVisit {
        day,
        volumes: volume(day),
        nawm_mask: nawm.clone(),
        sublime_mask: sublime,
        oasis_mask: oasis,
        covariates,
    };
    let mut visits = vec![
        visit(0, None, if case.at_baseline { comp.clone() } else { empty.clone() }),
        visit(incidence, Some(comp.clone()), comp.clone()),
    ];
    for (k, &(gap, present)) in case.later.iter().enumerate() {
        let oasis = if present { comp.clone() } else { empty.clone() };
        // The last case re-detects the component at its first later visit.
        let sublime = if case.name.contains("re-detected") && k == 0 { comp.clone() } else { empty.clone() };
        visits.push(visit(incidence + gap, Some(sublime), oasis));
    }
    let probe = dims.index(case.component[0][0], case.component[0][1], case.component[0][2]);
    (
        SubjectRecord {
            subject_id: "S001".into(),
            sex: Sex::Female,
            age_at_baseline: 40.0,
            visits,
        },
        probe,
        incidence,
    )
}

fn threshold_rules() -> Outcome {
    let cases = rule_cases();
    let config = EventConfig::default();
    let grid = ProfileGrid::default();
    let mut failures = Vec::new();
    for case in &cases {
        let (subject, probe, incidence) = case_subject(case);
        let events = extract_subject_events(&subject, &config).unwrap();
        let event = events.iter().find(|e| e.voxel_index == probe);
        let (profiles, _) = extract_subject_profiles(&subject, &events, &grid, 200).unwrap();
        let got = (
            event.is_some(),
            event.is_some_and(|e| e.is_lesion_tissue),
            profiles.iter().any(|p| p.key.voxel_id == probe as u64),
        );
        let day_ok = event.is_none_or(|e| e.incidence_day == incidence);
        if got != case.expect || !day_ok {
            failures.push(format!("{}: got {got:?}, expected {:?}", case.name, case.expect));
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} cases match the hand-enumerated table", cases.len())
        } else {
            failures.join("; ")
        },
    )
}

// ---------------------------------------------------------------------- PCA

fn random_rows(rng: &mut StreamRng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // Correlated rows with a decaying spectrum.
    let basis: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..d).map(|_| 0.3 * normal(rng)).collect();
            for (k, b) in basis.iter().enumerate() {
                let a = normal(rng) * 3.0 / (k + 1) as f64;
                row.iter_mut().zip(b).for_each(|(r, v)| *r += a * v);
            }
            row
        })
        .collect()
}

fn pca() -> Outcome {
    let d = 164;
    let mut rng = seeded(7);
    let rows = random_rows(&mut rng, 2000, d);
    let model = fit_pca(&rows, None).unwrap();

    let mut ortho = 0.0f64;
    for j in 0..d {
        for k in j..d {
            let dot: f64 = model.eigenvectors[j].iter().zip(&model.eigenvectors[k]).map(|(a, b)| a * b).sum();
            ortho = ortho.max((dot - if j == k { 1.0 } else { 0.0 }).abs());
        }
    }

    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut recon = 0.0f64;
    for r in rows.iter().take(200) {
        let mut x = model.mean_curve.clone();
        for k in 1..=d {
            let s = model.score(r, k).unwrap();
            x.iter_mut().zip(&model.eigenvectors[k - 1]).for_each(|(xi, p)| *xi += s * p);
        }
        recon = recon.max(x.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }

    let mut var_err = 0.0f64;
    for k in 1..=5 {
        let s: Vec<f64> = rows.iter().map(|r| model.score(r, k).unwrap()).collect();
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        var_err = var_err.max((v - model.eigenvalues[k - 1]).abs() / model.eigenvalues[k - 1]);
    }

    let v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
    let mean: Vec<f64> = (0..d).map(|j| (j as f64 / 20.0).sin()).collect();
    let rank1: Vec<Vec<f64>> = (0..500)
        .map(|_| {
            let a = normal(&mut rng);
            mean.iter().zip(&v).map(|(m, vi)| m + a * vi).collect()
        })
        .collect();
    let m1 = fit_pca(&rank1, Some(1)).unwrap();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = m1.eigenvectors[0].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs() / norm;

    let subjects: Vec<usize> = (0..rows.len()).map(|i| i % 34).collect();
    let b1 = bootstrap_pca(&rows, &subjects, &model, 50, 11, &Sequential).unwrap();
    let b2 = bootstrap_pca(&rows, &subjects, &model, 50, 11, &Parallel).unwrap();
    let deterministic = b1 == b2;

    // Full-size timing: 50,000 x 164 fit, scores and a 1000-replicate bootstrap.
    let t = Instant::now();
    let big = random_rows(&mut rng, 50_000, d);
    let big_subjects: Vec<usize> = (0..big.len()).map(|i| i % 34).collect();
    let bm = fit_pca(&big, Some(10)).unwrap();
    let _scores: Vec<f64> = big.iter().map(|r| bm.score(r, 1).unwrap()).collect();
    let bb = bootstrap_pca(&big, &big_subjects, &bm, 1000, 3, &Parallel).unwrap();
    let big_secs = t.elapsed().as_secs_f64();

    outcome(
        ortho < 1e-8 && recon < 1e-6 && cos > 1.0 - 1e-8 && var_err < 1e-6 && deterministic && bb.replicates == 1000 && big_secs < 60.0,
        format!(
            "orthonormality {ortho:.1e}, reconstruction {recon:.1e}, rank-1 |cos| 1-{:.1e}, score variance {var_err:.1e}, bootstrap deterministic {deterministic}, 50000x164 with B=1000 in {big_secs:.1}s",
            1.0 - cos
        ),
    )
}

// ------------------------------------------------------------ mixed model oracle

fn intercept_design(labels: &[(String, u32)]) -> Design {
    Design {
        x: DMatrix::from_element(labels.len(), 1, 1.0),
        columns: vec!["Intercept"],
        groups: Grouping::from_labels(labels.iter().map(|(s, l)| (s.as_str(), *l))),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Balanced one-way and two-level nested layouts against the ANOVA
/// closed form, which coincides with REML when every component is positive.
fn lmm_oracle() -> Outcome {
    let mut rng = seeded(99);
    let mut worst = 0.0f64;

    // One-way: a groups of n.
    let (a, n) = (12usize, 7usize);
    let mut labels = Vec::new();
    let mut y = Vec::new();
    for g in 0..a {
        let u = 3.0 * normal(&mut rng);
        for _ in 0..n {
            labels.push((format!("S{g:02}"), 1));
            y.push(10.0 + u + normal(&mut rng));
        }
    }
    let design = intercept_design(&labels);
    let fit = fit_lmm(
        &design,
        &y,
        &LmmOptions {
            random_effects: RandomEffects::SubjectOnly,
            ..LmmOptions::default()
        },
    )
    .unwrap();
    let grand = y.iter().sum::<f64>() / y.len() as f64;
    let means: Vec<f64> = (0..a).map(|g| y[g * n..(g + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let msb = n as f64 * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a - 1) as f64;
    let msw = (0..a)
        .map(|g| y[g * n..(g + 1) * n].iter().map(|v| (v - means[g]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (a * (n - 1)) as f64;
    let se_mu = (msb / (a * n) as f64).sqrt();
    worst = worst
        .max(rel(fit.beta[0], grand))
        .max(rel(fit.sigma2_residual, msw))
        .max(rel(fit.sigma2_subject, (msb - msw) / n as f64))
        .max(rel(fit.std_errors()[0], se_mu));

    // Nested: s subjects, m lesions each, n voxels per lesion.
    let (s, m, n) = (10usize, 4usize, 6usize);
    let mut labels = Vec::new();
    let mut y = Vec::new();
    for i in 0..s {
        let u = 2.0 * normal(&mut rng);
        for l in 0..m {
            let v = 1.5 * normal(&mut rng);
            for _ in 0..n {
                labels.push((format!("S{i:02}"), l as u32 + 1));
                y.push(5.0 + u + v + normal(&mut rng));
            }
        }
    }
    let design = intercept_design(&labels);
    let fit = fit_lmm(&design, &y, &LmmOptions::default()).unwrap();
    let grand = y.iter().sum::<f64>() / y.len() as f64;
    let lesion_mean = |i: usize, l: usize| y[(i * m + l) * n..(i * m + l + 1) * n].iter().sum::<f64>() / n as f64;
    let subject_mean = |i: usize| y[i * m * n..(i + 1) * m * n].iter().sum::<f64>() / (m * n) as f64;
    let ms_subject = (m * n) as f64 * (0..s).map(|i| (subject_mean(i) - grand).powi(2)).sum::<f64>() / (s - 1) as f64;
    let ms_lesion = n as f64
        * (0..s)
            .flat_map(|i| (0..m).map(move |l| (i, l)))
            .map(|(i, l)| (lesion_mean(i, l) - subject_mean(i)).powi(2))
            .sum::<f64>()
        / (s * (m - 1)) as f64;
    let ms_error = (0..s)
        .flat_map(|i| (0..m).map(move |l| (i, l)))
        .map(|(i, l)| {
            let lm = lesion_mean(i, l);
            y[(i * m + l) * n..(i * m + l + 1) * n].iter().map(|v| (v - lm).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / (s * m * (n - 1)) as f64;
    worst = worst
        .max(rel(fit.beta[0], grand))
        .max(rel(fit.sigma2_residual, ms_error))
        .max(rel(fit.sigma2_lesion, (ms_lesion - ms_error) / n as f64))
        .max(rel(fit.sigma2_subject, (ms_subject - ms_lesion) / (m * n) as f64))
        .max(rel(fit.std_errors()[0], (ms_subject / (s * m * n) as f64).sqrt()));

    outcome(worst < 1e-6, format!("max relative deviation from closed form {worst:.1e}"))
}

const LMM_RUNS: usize = 100;
const LMM_BOOTSTRAP: usize = 1000;

fn lmm_coverage() -> Outcome {
    let config = MixedSimConfig::default();
    let truth = REFERENCE_BETA[2];
    let options = LmmOptions::default();
    let (mut normal_cover, mut boot_cover) = (0, 0);
    let mut estimates = Vec::new();
    for run in 0..LMM_RUNS {
        let data = simulate_mixed(&config, 10_000 + run as u64).unwrap();
        let fit = fit_lmm(&data.design, &data.y, &options).unwrap();
        let problem = LmmProblem::new(&data.design, options.random_effects).unwrap();
        let boot = parametric_bootstrap(&problem, &data.design.groups, &fit, &options, LMM_BOOTSTRAP, 500 + run as u64, &Parallel)
            .unwrap();
        let mut table = normal_approx_inference(&fit);
        table.attach_bootstrap(&boot);
        let row = table.row("Distance").unwrap();
        estimates.push(row.estimate);
        if row.ci_lower <= truth && truth <= row.ci_upper {
            normal_cover += 1;
        }
        if row.boot_lower.unwrap() <= truth && truth <= row.boot_upper.unwrap() {
            boot_cover += 1;
        }
    }
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    let boot_rate = boot_cover as f64 / LMM_RUNS as f64;
    outcome(
        normal_cover >= 90 && (0.90..=0.99).contains(&boot_rate),
        format!(
            "{LMM_RUNS} cohorts, B={LMM_BOOTSTRAP}: normal CI covers Distance={truth} in {normal_cover}/{LMM_RUNS}, bootstrap CI in {boot_cover}/{LMM_RUNS}; mean estimate {mean:.3}"
        ),
    )
}

// ---------------------------------------------------------------------- FoSR

/// Least squares through the normal equations and Gauss-Jordan elimination.
fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..x.nrows() {
        for j in 0..p {
            for k in 0..p {
                a[j][k] += x[(i, j)] * x[(i, k)];
            }
            a[j][p] += x[(i, j)] * y[i];
        }
    }
    for c in 0..p {
        let pivot = (c..p).max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs())).unwrap();
        a.swap(c, pivot);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let row_c = a[c].clone();
                a[r].iter_mut().zip(&row_c).for_each(|(v, w)| *v -= f * w);
            }
        }
    }
    a.iter().map(|r| r[p]).collect()
}

fn fosr_pointwise_and_invariance() -> Outcome {
    let data = simulate_functional(&FunctionalSimConfig::default(), 5).unwrap();
    let raw = pointwise_fit(&data.profiles, &data.design.x).unwrap();
    let t = data.grid_days.len();
    let mut bit_identical = true;
    let mut oracle_err = 0.0f64;
    for k in 0..t {
        let column: Vec<f64> = data.profiles.iter().map(|p| p[k]).collect();
        let direct = ols(&data.design.x, &column).unwrap();
        let independent = normal_equations(&data.design.x, &column);
        for (j, b) in direct.iter().enumerate() {
            bit_identical &= raw[j][k].to_bits() == b.to_bits();
            oracle_err = oracle_err.max((raw[j][k] - independent[j]).abs() / independent[j].abs().max(1.0));
        }
    }

    let mut invariance = 0.0f64;
    for (c0, c1) in [(2.5, 0.0), (-1.0, 0.03), (0.0, -0.2)] {
        let f: Vec<f64> = data.grid_days.iter().map(|d| c0 + c1 * d).collect();
        for lambda in [None, Some(1e-3), Some(1.0), Some(1e4), Some(1e10)] {
            let s = smooth_coefficient(&f, &data.grid_days, 10, lambda).unwrap();
            invariance = invariance.max(s.values.iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    outcome(
        bit_identical && oracle_err < 1e-8 && invariance < 1e-8,
        format!(
            "pointwise fit bit-identical to per-slice OLS: {bit_identical}; normal-equation oracle {oracle_err:.1e}; affine invariance {invariance:.1e}"
        ),
    )
}

fn fosr_detection() -> Outcome {
    let runs = 20;
    let config = FunctionalSimConfig::default();
    let options = FosrOptions::default();
    let mut distance_full = 0;
    let (mut null_points, mut null_clear) = (0usize, 0usize);
    for run in 0..runs {
        let data = simulate_functional(&config, 700 + run as u64).unwrap();
        let fit = fit_fosr(&data.profiles, &data.design, &data.grid_days, &options, 200, 900 + run as u64, &Parallel).unwrap();
        for f in significance_summary(&fit) {
            match f.name.as_str() {
                "Intercept" => {}
                "Distance" => distance_full += usize::from(f.everywhere),
                _ => {
                    null_points += data.grid_days.len();
                    null_clear += data.grid_days.len() - f.significant_points.len();
                }
            }
        }
    }
    let clear = null_clear as f64 / null_points as f64;
    outcome(
        distance_full == runs && clear >= 0.9,
        format!(
            "{runs} runs, B=200: distance significant at all 41 points in {distance_full}/{runs}; null covariates non-significant at {:.1}% of points",
            100.0 * clear
        ),
    )
}

// ---------------------------------------------------------------- agreement

fn oracle_kappa(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let mut table = [[0.0f64; 4]; 4];
    for (x, y) in a.iter().zip(b) {
        table[*x as usize - 1][*y as usize - 1] += 1.0;
    }
    let po = (0..4).map(|k| table[k][k]).sum::<f64>() / n;
    let pe = (0..4)
        .map(|k| table[k].iter().sum::<f64>() * (0..4).map(|r| table[r][k]).sum::<f64>())
        .sum::<f64>()
        / (n * n);
    (po - pe) / (1.0 - pe)
}

fn agreement() -> Outcome {
    let fixture = cohen_kappa(&[1, 2, 3, 4, 4], &[1, 2, 3, 4, 3]).unwrap();
    let fixture_err = (fixture - 0.56 / 0.76).abs();

    let mut rng = seeded(31);
    let mut invariance = 0.0f64;
    let mut oracle = 0.0f64;
    for _ in 0..500 {
        let n = 5 + uniform_index(&mut rng, 60);
        let a: Vec<u8> = (0..n).map(|_| 1 + uniform_index(&mut rng, 4) as u8).collect();
        let b: Vec<u8> = a
            .iter()
            .map(|&x| if uniform01(&mut rng) < 0.6 { x } else { 1 + uniform_index(&mut rng, 4) as u8 })
            .collect();
        let Ok(k) = cohen_kappa(&a, &b) else { continue };
        oracle = oracle.max((k - oracle_kappa(&a, &b)).abs());
        invariance = invariance.max((k - cohen_kappa(&b, &a).unwrap()).abs());
        let mut perm = [1u8, 2, 3, 4];
        lesion_core::rng::shuffle(&mut rng, &mut perm);
        let relabel = |v: &[u8]| v.iter().map(|&x| perm[x as usize - 1]).collect::<Vec<u8>>();
        invariance = invariance.max((k - cohen_kappa(&relabel(&a), &relabel(&b)).unwrap()).abs());
        let mut order: Vec<usize> = (0..n).collect();
        lesion_core::rng::shuffle(&mut rng, &mut order);
        let pa: Vec<u8> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<u8> = order.iter().map(|&i| b[i]).collect();
        invariance = invariance.max((k - cohen_kappa(&pa, &pb).unwrap()).abs());
    }

    let a: Vec<u8> = (0..10_000).map(|_| 1 + uniform_index(&mut rng, 4) as u8).collect();
    let b: Vec<u8> = (0..10_000).map(|_| 1 + uniform_index(&mut rng, 4) as u8).collect();
    let independent = cohen_kappa(&a, &b).unwrap();
    outcome(
        fixture_err < 1e-12 && oracle < 1e-12 && invariance < 1e-12 && independent.abs() < 0.05,
        format!(
            "fixture error {fixture_err:.1e}; oracle {oracle:.1e}; symmetry/relabeling/permutation {invariance:.1e}; independent raters n=10000 kappa {independent:.4}"
        ),
    )
}

// ---------------------------------------------------------------- end to end

fn pipeline_config(dir: &Path, manifest: &Path, seed: u64) -> RunConfig {
    let mut config = RunConfig::default();
    config.seed = seed;
    config.input.manifest = Some(manifest.to_path_buf());
    config.output_dir = dir.join("out");
    config.pca.bootstrap = 50;
    config.lmm.bootstrap = 200;
    config.lmm.univariate = false;
    config.fosr.bootstrap = 50;
    config.trial.ledger = dir.join("ratings.jsonl");
    config
}

fn end_to_end() -> Outcome {
    let seeds = 20u64;
    let mut positive = 0;
    let mut orientation = 0;
    let mut lines = Vec::new();
    for seed in 1..=seeds {
        let dir = tempdir();
        let (cohort, _) = synth_cohort(&SynthConfig::default(), seed).unwrap();
        let manifest = write_cohort(&cohort, &dir.path().join("cohort")).unwrap();
        let config = pipeline_config(dir.path(), &manifest, seed);
        let out = &config.output_dir;
        let profiles = pipeline::stage_profiles(&config, out).unwrap();
        let pca = pipeline::stage_pca(&config, &profiles.profiles, out, &Parallel).unwrap();
        let lmm = pipeline::stage_lmm(&config, &profiles.profiles, &pca.scores, out, &Parallel).unwrap();
        pipeline::write_run_manifest(&config, out, &["profiles", "pca", "lmm"]).unwrap();
        lesion_tools::report::write_report(out).unwrap();
        assert!(out.join(artifacts::REPORT).exists());

        let row = lmm.table.row("Treatment").unwrap();
        let significant = row.p_value < 0.05 && row.boot_lower.unwrap() > 0.0;
        if row.estimate > 0.0 && significant {
            positive += 1;
        }
        let (mut t, mut u) = (Vec::new(), Vec::new());
        for (p, s) in profiles.profiles.iter().zip(&pca.scores) {
            if p.covariates.treatment { t.push(*s) } else { u.push(*s) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        if mean(&t) > mean(&u) {
            orientation += 1;
        }
        lines.push(format!("{:.2}", row.estimate));
    }
    outcome(
        positive == seeds && orientation == seeds,
        format!(
            "treatment positive and significant in {positive}/{seeds} seeds, treated voxels score higher in {orientation}/{seeds}; estimates [{}]",
            lines.join(", ")
        ),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Deterministic simulated ratings for every lesion with panels.
fn write_ratings(index: &lesion_tools::panels::PanelIndex, path: &Path) {
    let mut writer = LedgerWriter::open(path).unwrap();
    let mut rng = seeded(5);
    for rater in ["rater1", "rater2"] {
        for (k, lesion) in index.lesions.iter().enumerate() {
            for is_repeat in [false, k % 4 == 0] {
                let r = 1 + uniform_index(&mut rng, 4) as u8;
                let record = RatingRecord {
                    rater_id: rater.into(),
                    case_id: format!("{rater}-{k}-{is_repeat}"),
                    lesion: LesionKey {
                        subject_id: lesion.subject_id.clone(),
                        lesion_id: lesion.lesion_id,
                    },
                    is_repeat,
                    segmentation_rating: r,
                    pc_rating: if uniform01(&mut rng) < 0.7 { r } else { 1 + uniform_index(&mut rng, 4) as u8 },
                    timestamp: "2024-01-01T00:00:00Z".into(),
                };
                writer.append(&LedgerEntry { record, amends: false }).unwrap();
                if k % 4 != 0 {
                    break;
                }
            }
        }
    }
}

fn determinism() -> Outcome {
    let dir = tempdir();
    let (cohort, _) = synth_cohort(&SynthConfig::default(), 42).unwrap();
    let manifest = write_cohort(&cohort, &dir.path().join("cohort")).unwrap();
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let mut config = pipeline_config(dir.path(), &manifest, 42);
        config.output_dir = dir.path().join(format!("run{run}"));
        config.lmm.univariate = true;
        if run == 0 {
            // The first pass renders panels so a ledger can be simulated over them.
            let out = &config.output_dir;
            pipeline::stage_profiles(&config, out).unwrap();
            let p = pipeline::read_stage_profiles(&config, out).unwrap();
            pipeline::stage_pca(&config, &p, out, &Parallel).unwrap();
            let index = pipeline::stage_panels(&config, out).unwrap();
            write_ratings(&index, &config.trial.ledger);
            fs::remove_dir_all(out).unwrap();
        }
        pipeline::run_pipeline(&config, &Parallel).unwrap();
        snapshots.push(files_under(&config.output_dir));
    }
    let (a, b) = (&snapshots[0], &snapshots[1]);
    let differing: Vec<String> = a
        .iter()
        .filter(|(k, v)| b.get(*k) != Some(v))
        .map(|(k, _)| k.display().to_string())
        .chain(b.keys().filter(|k| !a.contains_key(*k)).map(|k| k.display().to_string()))
        .collect();
    let has_agreement = a.contains_key(Path::new(artifacts::AGREEMENT_JSON));
    outcome(
        differing.is_empty() && has_agreement && a.len() > 20,
        format!(
            "{} artifacts per run (including panels and agreement), {} differ{}",
            a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    )
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "normalization", limit: Duration::from_secs(10), run: normalization },
        Criterion { name: "distance-transform", limit: Duration::from_secs(30), run: distance_transform },
        Criterion { name: "threshold-rules", limit: Duration::from_secs(1), run: threshold_rules },
        Criterion { name: "pca", limit: Duration::from_secs(60), run: pca },
        Criterion { name: "mixed-model-oracle", limit: Duration::from_secs(60), run: lmm_oracle },
        Criterion { name: "mixed-model-coverage", limit: Duration::from_secs(30 * 60), run: lmm_coverage },
        Criterion { name: "fosr-pointwise-smoothing", limit: Duration::from_secs(60), run: fosr_pointwise_and_invariance },
        Criterion { name: "fosr-detection", limit: Duration::from_secs(20 * 60), run: fosr_detection },
        Criterion { name: "agreement", limit: Duration::from_secs(30), run: agreement },
        Criterion { name: "end-to-end", limit: Duration::from_secs(10 * 60), run: end_to_end },
        Criterion { name: "determinism", limit: Duration::from_secs(10 * 60), run: determinism },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| c.name.contains(f.as_str()))) {
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let o = result.unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let in_time = elapsed <= c.limit;
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {}: {} [{:.1}s, limit {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            o.detail,
            elapsed.as_secs_f64(),
            c.limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
