use std::collections::BTreeSet;

use lesion_core::panel::{select_slice, ScoreScale, FLAT_SCALE_BOUND};
use lesion_core::synth::{synth_cohort, SynthConfig};
use lesion_core::trial::{schedule_trial, REPEAT_AFTER};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn schedule_invariants(n in 1usize..80, frac in 0.0..=1.0f64, seed in any::<u64>()) {
        let repeats = ((n as f64) * frac) as usize;
        let s = schedule_trial("rater", n, repeats, seed).unwrap();
        prop_assert_eq!(s.len(), n + repeats);
        let originals: BTreeSet<usize> = s.cases.iter().filter(|c| !c.is_repeat).map(|c| c.lesion).collect();
        prop_assert_eq!(originals.len(), n);
        let repeated: Vec<usize> = s.cases.iter().filter(|c| c.is_repeat).map(|c| c.lesion).collect();
        prop_assert_eq!(repeated.iter().collect::<BTreeSet<_>>().len(), repeats);
        for (k, c) in s.cases.iter().enumerate() {
            if c.is_repeat {
                let first = s.cases.iter().position(|o| o.lesion == c.lesion).unwrap();
                prop_assert!(first < k);
                prop_assert!(k >= REPEAT_AFTER.min(n));
            }
        }
        let ids: BTreeSet<&str> = s.cases.iter().map(|c| c.case_id.as_str()).collect();
        prop_assert_eq!(ids.len(), s.len());
        prop_assert_eq!(&s, &schedule_trial("rater", n, repeats, seed).unwrap());
    }
}

#[test]
fn schedule_rejects_impossible_requests() {
    assert!(schedule_trial("r", 0, 0, 1).is_err());
    assert!(schedule_trial("r", 5, 6, 1).is_err());
}

#[test]
fn raters_see_different_orders() {
    let a = schedule_trial("a", 50, 10, 4).unwrap();
    let b = schedule_trial("b", 50, 10, 4).unwrap();
    let order = |s: &lesion_core::trial::TrialSchedule| s.cases.iter().map(|c| c.lesion).collect::<Vec<_>>();
    assert_ne!(order(&a), order(&b));
}

#[test]
fn slice_with_most_voxels() {
    let mut voxels = Vec::new();
    for (z, count) in [(10, 3), (11, 5), (12, 4)] {
        for k in 0..count {
            voxels.push([k, 0, z]);
        }
    }
    assert_eq!(select_slice(&voxels).unwrap(), 11);
    assert_eq!(select_slice(&[[0, 0, 4], [0, 0, 2]]).unwrap(), 2);
    assert!(select_slice(&[]).is_err());
}

#[test]
fn score_scale_is_symmetric() {
    let s = ScoreScale::from_scores(&[-2.0, 0.5, 1.0]).unwrap();
    assert_eq!(s.bound, 2.0);
    assert_eq!(s.colour(0.0), [255, 255, 255]);
    assert_eq!(s.colour(2.0), [255, 0, 0]);
    assert_eq!(s.colour(-5.0), [0, 0, 255]);
    assert_eq!(ScoreScale::from_scores(&[0.0, 0.0]).unwrap().bound, FLAT_SCALE_BOUND);
}

#[test]
fn synthetic_cohort_is_reproducible() {
    let config = SynthConfig {
        n_subjects: 3,
        ..SynthConfig::default()
    };
    let (c1, t1) = synth_cohort(&config, 11).unwrap();
    let (c2, t2) = synth_cohort(&config, 11).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(t1, t2);
    let (c3, _) = synth_cohort(&config, 12).unwrap();
    assert_ne!(c1, c3);
    assert_eq!(c1.subjects.len(), 3);
    assert!(lesion_core::cohort::validate_cohort(&c1).is_valid());
}
