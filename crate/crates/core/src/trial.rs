//! Presentation order for a blinded rating trial.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, shuffle, uniform_index};

pub const DEFAULT_REPEATS: usize = 47;
/// Repeats are only placed after this many cases have been presented.
pub const REPEAT_AFTER: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCase {
    pub case_id: String,
    /// Index into the lesion list the trial was scheduled from.
    pub lesion: usize,
    pub is_repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub rater_id: String,
    pub cases: Vec<TrialCase>,
}

impl TrialSchedule {
    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn case(&self, case_id: &str) -> Option<&TrialCase> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

/// FNV-1a, used to give every rater an independent stream.
pub fn rater_salt(rater_id: &str) -> u64 {
    rater_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Shuffled originals with `repeats` randomly chosen lesions presented a
/// second time, each inserted uniformly at random after both its original
/// and the first [`REPEAT_AFTER`] cases.
pub fn schedule_trial(rater_id: &str, n_lesions: usize, repeats: usize, seed: u64) -> Result<TrialSchedule> {
    if n_lesions == 0 {
        return Err(Error::InvalidConfig(String::from("trial has no lesions")));
    }
    if repeats > n_lesions {
        return Err(Error::InvalidConfig(format!(
            "cannot repeat {repeats} of {n_lesions} lesions"
        )));
    }
    let stream = derive_seed(seed, rater_salt(rater_id));
    let mut rng = seeded(stream);
    let mut order: Vec<(usize, bool)> = (0..n_lesions).map(|l| (l, false)).collect();
    shuffle(&mut rng, &mut order);
    let mut chosen: Vec<usize> = (0..n_lesions).collect();
    shuffle(&mut rng, &mut chosen);
    chosen.truncate(repeats);
    for lesion in chosen {
        let original = order
            .iter()
            .position(|&(l, r)| l == lesion && !r)
            .unwrap_or(0);
        let lo = (original + 1).max(REPEAT_AFTER.min(order.len()));
        let at = lo + uniform_index(&mut rng, order.len() - lo + 1);
        order.insert(at, (lesion, true));
    }
    let cases = order
        .into_iter()
        .enumerate()
        .map(|(k, (lesion, is_repeat))| TrialCase {
            case_id: format!("{:016x}", derive_seed(stream, k as u64)),
            lesion,
            is_repeat,
        })
        .collect();
    Ok(TrialSchedule {
        rater_id: String::from(rater_id),
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeats_follow_originals() {
        let s = schedule_trial("r1", 25, 5, 9).unwrap();
        assert_eq!(s.len(), 30);
        for (k, c) in s.cases.iter().enumerate() {
            if c.is_repeat {
                assert!(k >= REPEAT_AFTER);
                let o = s.cases.iter().position(|x| x.lesion == c.lesion && !x.is_repeat).unwrap();
                assert!(o < k);
            }
        }
        assert_eq!(s.cases.iter().filter(|c| c.is_repeat).count(), 5);
    }

    #[test]
    fn ids_are_unique_and_rater_specific() {
        let a = schedule_trial("a", 60, 47, 1).unwrap();
        let b = schedule_trial("b", 60, 47, 1).unwrap();
        let mut ids: Vec<&str> = a.cases.iter().chain(&b.cases).map(|c| c.case_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 214);
        assert_eq!(a, schedule_trial("a", 60, 47, 1).unwrap());
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(schedule_trial("a", 3, 4, 0).is_err());
        assert!(schedule_trial("a", 0, 0, 0).is_err());
    }
}
