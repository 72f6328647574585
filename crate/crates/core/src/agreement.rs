//! Rating summaries and unweighted Cohen's kappa, with subject-level bootstrap.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, uniform_index, ReplicateRunner};
use crate::stats::{median, percentile_interval};

pub const CATEGORIES: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingKind {
    Segmentation,
    Pc,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LesionKey {
    pub subject_id: String,
    pub lesion_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub case_id: String,
    pub lesion: LesionKey,
    pub is_repeat: bool,
    pub segmentation_rating: u8,
    pub pc_rating: u8,
    pub timestamp: String,
}

impl RatingRecord {
    pub fn rating(&self, kind: RatingKind) -> u8 {
        match kind {
            RatingKind::Segmentation => self.segmentation_rating,
            RatingKind::Pc => self.pc_rating,
        }
    }
}

pub fn check_rating(r: u8) -> Result<u8> {
    if (1..=CATEGORIES).contains(&r) {
        Ok(r)
    } else {
        Err(Error::RatingOutOfRange(r))
    }
}

/// Unweighted kappa over categories 1..=4, computed from integer counts so
/// that it is exactly symmetric and invariant to case order.
pub fn cohen_kappa(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyRatings);
    }
    let mut ca = [0u64; CATEGORIES as usize];
    let mut cb = [0u64; CATEGORIES as usize];
    let mut agree = 0u64;
    for (&x, &y) in a.iter().zip(b) {
        ca[check_rating(x)? as usize - 1] += 1;
        cb[check_rating(y)? as usize - 1] += 1;
        agree += u64::from(x == y);
    }
    let n = a.len() as u64;
    let chance: u64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    if chance == n * n {
        return Err(Error::UndefinedKappa);
    }
    Ok(((n * agree) as i128 - chance as i128) as f64 / (n * n - chance) as f64)
}

fn kappa_of_pairs(pairs: &[(u8, u8)]) -> Result<f64> {
    let (a, b): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
    cohen_kappa(&a, &b)
}

fn records_of<'a>(records: &'a [RatingRecord], rater: &str) -> impl Iterator<Item = &'a RatingRecord> {
    let rater = String::from(rater);
    records.iter().filter(move |r| r.rater_id == rater)
}

/// Original-presentation record per lesion for one rater.
fn originals<'a>(records: &'a [RatingRecord], rater: &str) -> Result<BTreeMap<&'a LesionKey, &'a RatingRecord>> {
    let mut out = BTreeMap::new();
    for r in records_of(records, rater).filter(|r| !r.is_repeat) {
        if out.insert(&r.lesion, r).is_some() {
            return Err(Error::DuplicateRating {
                rater: String::from(rater),
                case: format!("{}/{}", r.lesion.subject_id, r.lesion.lesion_id),
            });
        }
    }
    Ok(out)
}

/// (original, repeat) record pairs for one rater.
pub fn repeat_pairs<'a>(records: &'a [RatingRecord], rater: &str) -> Result<Vec<(&'a RatingRecord, &'a RatingRecord)>> {
    let orig = originals(records, rater)?;
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for r in records_of(records, rater).filter(|r| r.is_repeat) {
        if !seen.insert(&r.lesion) {
            return Err(Error::UnmatchedRepeats(format!(
                "lesion {}/{} repeated more than once for rater {rater}",
                r.lesion.subject_id, r.lesion.lesion_id
            )));
        }
        let o = orig.get(&r.lesion).ok_or_else(|| {
            Error::UnmatchedRepeats(format!(
                "repeat of lesion {}/{} has no original for rater {rater}",
                r.lesion.subject_id, r.lesion.lesion_id
            ))
        })?;
        pairs.push((*o, r));
    }
    pairs.sort_by(|a, b| a.0.lesion.cmp(&b.0.lesion));
    Ok(pairs)
}

/// Kappa between original and repeat ratings of the same rater.
pub fn within_rater_kappa(records: &[RatingRecord], rater: &str, kind: RatingKind) -> Result<f64> {
    let pairs = repeat_pairs(records, rater)?;
    if pairs.is_empty() {
        return Err(Error::UnmatchedRepeats(format!("rater {rater} has no repeated lesions")));
    }
    let v: Vec<(u8, u8)> = pairs.iter().map(|(o, r)| (o.rating(kind), r.rating(kind))).collect();
    kappa_of_pairs(&v)
}

/// Kappa between a rater's segmentation and PC ratings over original presentations.
pub fn segmentation_vs_pc_kappa(records: &[RatingRecord], rater: &str) -> Result<f64> {
    let v: Vec<(u8, u8)> = originals(records, rater)?
        .values()
        .map(|r| (r.segmentation_rating, r.pc_rating))
        .collect();
    kappa_of_pairs(&v)
}

/// Rating pairs of two raters on shared lesions; repeats are paired with
/// repeats when `include_repeats` is set.
fn between_pairs<'a>(
    records: &'a [RatingRecord],
    a: &str,
    b: &str,
    include_repeats: bool,
) -> Result<Vec<(&'a RatingRecord, &'a RatingRecord)>> {
    let oa = originals(records, a)?;
    let ob = originals(records, b)?;
    let mut pairs: Vec<_> = oa
        .iter()
        .filter_map(|(k, ra)| ob.get(k).map(|rb| (*ra, *rb)))
        .collect();
    if include_repeats {
        let ra: BTreeMap<_, _> = repeat_pairs(records, a)?.into_iter().map(|(o, r)| (&o.lesion, r)).collect();
        for (o, rb) in repeat_pairs(records, b)? {
            if let Some(x) = ra.get(&o.lesion) {
                pairs.push((*x, rb));
            }
        }
    }
    Ok(pairs)
}

pub fn between_rater_kappa(records: &[RatingRecord], a: &str, b: &str, kind: RatingKind, include_repeats: bool) -> Result<f64> {
    let v: Vec<(u8, u8)> = between_pairs(records, a, b, include_repeats)?
        .iter()
        .map(|(x, y)| (x.rating(kind), y.rating(kind)))
        .collect();
    kappa_of_pairs(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Median,
    WithinRater,
    BetweenRater,
    SegmentationVsPc,
}

/// One cell of the agreement table; `None` marks an undefined statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub kind: StatisticKind,
    pub rating: Option<RatingKind>,
    pub raters: Vec<String>,
    pub n: usize,
    pub estimate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub statistics: Vec<Statistic>,
    pub n_subjects: usize,
    pub replicates: usize,
    pub seed: u64,
    pub redraws: usize,
    pub include_repeats_between: bool,
}

impl AgreementReport {
    pub fn find(&self, kind: StatisticKind, rating: Option<RatingKind>, raters: &[&str]) -> Option<&Statistic> {
        self.statistics
            .iter()
            .find(|s| s.kind == kind && s.rating == rating && s.raters.iter().map(String::as_str).eq(raters.iter().copied()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sample {
    Rating(u8),
    Pair(u8, u8),
}

/// Per-subject contributions to each statistic, in a fixed statistic order.
struct Layout {
    cells: Vec<(StatisticKind, Option<RatingKind>, Vec<String>)>,
    /// `by_subject[s][cell]` lists that subject's samples for the cell.
    by_subject: Vec<Vec<Vec<Sample>>>,
}

fn layout(records: &[RatingRecord], include_repeats: bool) -> Result<Layout> {
    for r in records {
        check_rating(r.segmentation_rating)?;
        check_rating(r.pc_rating)?;
    }
    let raters: Vec<String> = records
        .iter()
        .map(|r| r.rater_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let subjects: Vec<&str> = records
        .iter()
        .map(|r| r.lesion.subject_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let subject_index = |id: &str| subjects.binary_search(&id).unwrap_or(0);
    let kinds = [RatingKind::Segmentation, RatingKind::Pc];

    let mut cells = Vec::new();
    let mut columns: Vec<Vec<(usize, Sample)>> = Vec::new();
    for rater in &raters {
        let orig = originals(records, rater)?;
        for kind in kinds {
            cells.push((StatisticKind::Median, Some(kind), alloc::vec![rater.clone()]));
            columns.push(
                orig.values()
                    .map(|r| (subject_index(&r.lesion.subject_id), Sample::Rating(r.rating(kind))))
                    .collect(),
            );
        }
        let reps = repeat_pairs(records, rater)?;
        for kind in kinds {
            cells.push((StatisticKind::WithinRater, Some(kind), alloc::vec![rater.clone()]));
            columns.push(
                reps.iter()
                    .map(|(o, r)| (subject_index(&o.lesion.subject_id), Sample::Pair(o.rating(kind), r.rating(kind))))
                    .collect(),
            );
        }
        cells.push((StatisticKind::SegmentationVsPc, None, alloc::vec![rater.clone()]));
        columns.push(
            orig.values()
                .map(|r| (subject_index(&r.lesion.subject_id), Sample::Pair(r.segmentation_rating, r.pc_rating)))
                .collect(),
        );
    }
    for (i, a) in raters.iter().enumerate() {
        for b in &raters[i + 1..] {
            let pairs = between_pairs(records, a, b, include_repeats)?;
            for kind in kinds {
                cells.push((StatisticKind::BetweenRater, Some(kind), alloc::vec![a.clone(), b.clone()]));
                columns.push(
                    pairs
                        .iter()
                        .map(|(x, y)| (subject_index(&x.lesion.subject_id), Sample::Pair(x.rating(kind), y.rating(kind))))
                        .collect(),
                );
            }
        }
    }
    let mut by_subject = alloc::vec![alloc::vec![Vec::new(); cells.len()]; subjects.len()];
    for (c, col) in columns.into_iter().enumerate() {
        for (s, sample) in col {
            by_subject[s][c].push(sample);
        }
    }
    Ok(Layout { cells, by_subject })
}

fn evaluate(kind: StatisticKind, samples: &[Sample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    match kind {
        StatisticKind::Median => {
            let v: Vec<f64> = samples
                .iter()
                .filter_map(|s| match s {
                    Sample::Rating(r) => Some(f64::from(*r)),
                    Sample::Pair(..) => None,
                })
                .collect();
            Some(median(&v))
        }
        _ => {
            let pairs: Vec<(u8, u8)> = samples
                .iter()
                .filter_map(|s| match s {
                    Sample::Pair(a, b) => Some((*a, *b)),
                    Sample::Rating(_) => None,
                })
                .collect();
            kappa_of_pairs(&pairs).ok()
        }
    }
}

fn evaluate_all(layout: &Layout, subjects: &[usize]) -> Vec<Option<f64>> {
    (0..layout.cells.len())
        .map(|c| {
            let samples: Vec<Sample> = subjects
                .iter()
                .flat_map(|&s| layout.by_subject[s][c].iter().copied())
                .collect();
            evaluate(layout.cells[c].0, &samples)
        })
        .collect()
}

pub const MAX_REDRAWS_PER_REPLICATE: u64 = 1000;

/// Medians and kappas with percentile intervals from resampling subjects.
/// Replicates in which a statistic defined on the full data becomes
/// undefined are redrawn.
pub fn bootstrap_agreement<X: ReplicateRunner>(
    records: &[RatingRecord],
    replicates: usize,
    seed: u64,
    include_repeats_between: bool,
    runner: &X,
) -> Result<AgreementReport> {
    if records.is_empty() {
        return Err(Error::EmptyRatings);
    }
    let layout = layout(records, include_repeats_between)?;
    let n_subjects = layout.by_subject.len();
    if n_subjects < 2 {
        return Err(Error::TooFewSubjects {
            needed: 2,
            found: n_subjects,
        });
    }
    let all: Vec<usize> = (0..n_subjects).collect();
    let full = evaluate_all(&layout, &all);

    let draws: Vec<Result<(Vec<Option<f64>>, u64)>> = runner.run(replicates, |b| {
        for attempt in 0..MAX_REDRAWS_PER_REPLICATE {
            let mut rng = substream(seed, b as u64, attempt);
            let pick: Vec<usize> = (0..n_subjects).map(|_| uniform_index(&mut rng, n_subjects)).collect();
            let values = evaluate_all(&layout, &pick);
            if full.iter().zip(&values).all(|(f, v)| f.is_none() || v.is_some()) {
                return Ok((values, attempt));
            }
        }
        Err(Error::ImpossibleResampling(format!(
            "agreement replicate {b} kept producing undefined kappas"
        )))
    });
    let mut per_cell: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(replicates); layout.cells.len()];
    let mut redraws = 0;
    for d in draws {
        let (values, attempts) = d?;
        redraws += attempts as usize;
        for (c, v) in values.into_iter().enumerate() {
            if let Some(v) = v {
                per_cell[c].push(v);
            }
        }
    }
    let statistics = layout
        .cells
        .iter()
        .enumerate()
        .map(|(c, (kind, rating, raters))| {
            let n = layout.by_subject.iter().map(|s| s[c].len()).sum();
            let (lower, upper) = if full[c].is_some() && !per_cell[c].is_empty() {
                let (lo, hi) = percentile_interval(&per_cell[c], 0.95);
                (Some(lo), Some(hi))
            } else {
                (None, None)
            };
            Statistic {
                kind: *kind,
                rating: *rating,
                raters: raters.clone(),
                n,
                estimate: full[c],
                lower,
                upper,
            }
        })
        .collect();
    Ok(AgreementReport {
        statistics,
        n_subjects,
        replicates,
        seed,
        redraws,
        include_repeats_between,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Sequential;
    use alloc::vec;

    fn record(rater: &str, subject: &str, lesion: u32, repeat: bool, seg: u8, pc: u8) -> RatingRecord {
        RatingRecord {
            rater_id: rater.into(),
            case_id: format!("{rater}-{subject}-{lesion}-{repeat}"),
            lesion: LesionKey {
                subject_id: subject.into(),
                lesion_id: lesion,
            },
            is_repeat: repeat,
            segmentation_rating: seg,
            pc_rating: pc,
            timestamp: String::new(),
        }
    }

    #[test]
    fn hand_fixture() {
        let k = cohen_kappa(&[1, 2, 3, 4, 4], &[1, 2, 3, 4, 3]).unwrap();
        assert!((k - 0.56 / 0.76).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_invalid() {
        assert_eq!(cohen_kappa(&[4, 4], &[4, 4]), Err(Error::UndefinedKappa));
        assert_eq!(cohen_kappa(&[], &[]), Err(Error::EmptyRatings));
        assert_eq!(cohen_kappa(&[5], &[1]), Err(Error::RatingOutOfRange(5)));
        assert_eq!(cohen_kappa(&[1, 2], &[2, 1]).unwrap(), -1.0);
    }

    #[test]
    fn within_rater_uses_repeats_only() {
        let mut recs = vec![
            record("a", "s1", 1, false, 4, 4),
            record("a", "s1", 2, false, 3, 2),
            record("a", "s2", 1, false, 1, 1),
        ];
        assert!(matches!(within_rater_kappa(&recs, "a", RatingKind::Pc), Err(Error::UnmatchedRepeats(_))));
        recs.push(record("a", "s1", 1, true, 4, 4));
        recs.push(record("a", "s2", 1, true, 1, 1));
        assert_eq!(within_rater_kappa(&recs, "a", RatingKind::Pc).unwrap(), 1.0);
        recs.push(record("a", "s3", 9, true, 1, 1));
        assert!(matches!(within_rater_kappa(&recs, "a", RatingKind::Pc), Err(Error::UnmatchedRepeats(_))));
    }

    #[test]
    fn all_fours_report() {
        let recs: Vec<RatingRecord> = (0..6)
            .flat_map(|s| {
                let subj = format!("s{s}");
                ["a", "b"].map(|r| record(r, &subj, 1, false, 4, 4))
            })
            .collect();
        let rep = bootstrap_agreement(&recs, 50, 3, false, &Sequential).unwrap();
        let m = rep.find(StatisticKind::Median, Some(RatingKind::Segmentation), &["a"]).unwrap();
        assert_eq!((m.estimate, m.lower, m.upper), (Some(4.0), Some(4.0), Some(4.0)));
        let k = rep.find(StatisticKind::BetweenRater, Some(RatingKind::Pc), &["a", "b"]).unwrap();
        assert_eq!((k.estimate, k.lower), (None, None));
        assert_eq!(rep.redraws, 0);
    }

    #[test]
    fn median_of_three() {
        let recs = vec![
            record("a", "s1", 1, false, 3, 3),
            record("a", "s2", 1, false, 4, 4),
            record("a", "s3", 1, false, 4, 4),
        ];
        let rep = bootstrap_agreement(&recs, 10, 1, false, &Sequential).unwrap();
        let m = rep.find(StatisticKind::Median, Some(RatingKind::Pc), &["a"]).unwrap();
        assert_eq!(m.estimate, Some(4.0));
    }
}
