//! Voxel profile extraction: reference-tissue normalization, alignment to
//! incidence, interpolation onto the day grid and four-sequence concatenation.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, PerSequence, Sequence, StudyVisit, Subtype, SubjectRecord, Sex};
use crate::design::AGE_CENTER;
use crate::error::{Error, Result};
use crate::events::{extract_subject_events, EventConfig, IncidenceEvent};
use crate::volume::{Dims, Mask, Volume};

/// Regular grid of days since incidence, `0, step, ..., end_day`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub end_day: i64,
    pub step: i64,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        ProfileGrid {
            end_day: 200,
            step: 5,
        }
    }
}

impl ProfileGrid {
    pub fn new(end_day: i64, step: i64) -> Result<Self> {
        if end_day <= 0 || step <= 0 || end_day % step != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "grid step {step} must be positive and divide end day {end_day}"
            )));
        }
        Ok(ProfileGrid { end_day, step })
    }

    pub fn len(&self) -> usize {
        (self.end_day / self.step) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len() as i64).map(move |k| k * self.step)
    }
}

/// Mean and sample standard deviation of one sequence over the reference tissue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mean: f64,
    pub sd: f64,
}

impl ReferenceStats {
    #[inline]
    pub fn normalize(&self, raw: f64) -> f64 {
        (raw - self.mean) / self.sd
    }
}

pub fn reference_stats(volume: &Volume, reference: &Mask, sequence: Sequence) -> Result<ReferenceStats> {
    let data = volume.data();
    let n = reference.count();
    if n == 0 {
        return Err(Error::EmptyReferenceMask);
    }
    let mean = reference.indices().map(|i| data[i] as f64).sum::<f64>() / n as f64;
    if n < 2 {
        return Err(Error::ZeroReferenceVariance(sequence));
    }
    let ss: f64 = reference
        .indices()
        .map(|i| {
            let d = data[i] as f64 - mean;
            d * d
        })
        .sum();
    let sd = libm::sqrt(ss / (n - 1) as f64);
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::ZeroReferenceVariance(sequence));
    }
    Ok(ReferenceStats { mean, sd })
}

/// A visit with every sequence expressed in reference-tissue standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedStudy {
    pub day: i64,
    pub dims: Dims,
    pub values: PerSequence<Vec<f64>>,
    pub reference: PerSequence<ReferenceStats>,
}

pub fn normalize_study(visit: &StudyVisit) -> Result<NormalizedStudy> {
    let reference =
        PerSequence::try_from_fn(|s| reference_stats(&visit.volumes[s], &visit.nawm_mask, s))?;
    let values = PerSequence::from_fn(|s| {
        let r = reference[s];
        visit.volumes[s]
            .data()
            .iter()
            .map(|&v| r.normalize(v as f64))
            .collect()
    });
    Ok(NormalizedStudy {
        day: visit.day,
        dims: visit.dims(),
        values,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoxelKey {
    pub subject_id: String,
    pub lesion_id: u32,
    pub voxel_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSeries {
    pub key: VoxelKey,
    pub sequence: Sequence,
    pub incidence_day: i64,
    /// `(days since incidence, normalized value)`, one per visit, increasing in time.
    pub points: Vec<(i64, f64)>,
}

impl AlignedSeries {
    pub fn last_day(&self) -> Option<i64> {
        self.points.last().map(|p| p.0)
    }
}

pub fn voxel_key(event: &IncidenceEvent) -> VoxelKey {
    VoxelKey {
        subject_id: event.subject_id.clone(),
        lesion_id: event.lesion_id,
        voxel_id: event.voxel_index as u64,
    }
}

/// Series of every sequence at the event voxel, timed relative to incidence.
pub fn align_voxel(event: &IncidenceEvent, studies: &[NormalizedStudy]) -> PerSequence<AlignedSeries> {
    let key = voxel_key(event);
    PerSequence::from_fn(|s| AlignedSeries {
        key: key.clone(),
        sequence: s,
        incidence_day: event.incidence_day,
        points: studies
            .iter()
            .map(|st| (st.day - event.incidence_day, st.values[s][event.voxel_index]))
            .collect(),
    })
}

/// True when the series has a visit at least `horizon` days after incidence.
pub fn meets_inclusion(series: &AlignedSeries, horizon: i64) -> bool {
    series.last_day().is_some_and(|d| d >= horizon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolatedProfile {
    pub key: VoxelKey,
    pub sequence: Sequence,
    pub values: Vec<f64>,
}

/// Piecewise-linear interpolation of the series onto the grid; never extrapolates.
pub fn interpolate_profile(series: &AlignedSeries, grid: &ProfileGrid) -> Result<InterpolatedProfile> {
    let last = series.last_day().unwrap_or(i64::MIN);
    if last < grid.end_day {
        return Err(Error::InclusionNotMet {
            last_day: last,
            horizon: grid.end_day,
        });
    }
    if !series.points.iter().any(|p| p.0 == 0) {
        return Err(Error::MissingIncidenceObservation);
    }
    let pts = &series.points;
    let mut k = 0;
    let values = grid
        .days()
        .map(|g| {
            while pts[k + 1].0 <= g {
                k += 1;
                if k + 1 == pts.len() {
                    break;
                }
            }
            let (t0, v0) = pts[k];
            if t0 == g || k + 1 == pts.len() {
                return v0;
            }
            let (t1, v1) = pts[k + 1];
            v0 + (v1 - v0) * ((g - t0) as f64 / (t1 - t0) as f64)
        })
        .collect();
    Ok(InterpolatedProfile {
        key: series.key.clone(),
        sequence: series.sequence,
        values,
    })
}

/// Covariates of a voxel at the visit of its incidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidenceCovariates {
    pub spms: bool,
    pub distance_mm: f64,
    /// Age in years at incidence.
    pub age: f64,
    pub steroids: bool,
    pub male: bool,
    pub treatment: bool,
}

impl IncidenceCovariates {
    pub fn centered_age(&self) -> f64 {
        self.age - AGE_CENTER
    }

    pub fn at_visit(subject: &SubjectRecord, visit: &StudyVisit, distance_mm: f64) -> Self {
        IncidenceCovariates {
            spms: visit.covariates.subtype == Subtype::Spms,
            distance_mm,
            age: visit.covariates.age,
            steroids: visit.covariates.on_steroids,
            male: subject.sex == Sex::Male,
            treatment: visit.covariates.on_treatment,
        }
    }
}

/// Four interpolated profiles concatenated in FLAIR, T1, T2, PD order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcatProfile {
    pub key: VoxelKey,
    pub values: Vec<f64>,
    pub covariates: IncidenceCovariates,
}

pub fn concatenate(profiles: &[InterpolatedProfile], covariates: IncidenceCovariates) -> Result<ConcatProfile> {
    let mut values = Vec::new();
    let mut key = None;
    for s in Sequence::ALL {
        let p = profiles
            .iter()
            .find(|p| p.sequence == s)
            .ok_or(Error::MissingSequence(s))?;
        key.get_or_insert_with(|| p.key.clone());
        values.extend_from_slice(&p.values);
    }
    Ok(ConcatProfile {
        key: key.expect("four profiles present"),
        values,
        covariates,
    })
}

/// Inclusion, interpolation and concatenation of one voxel's aligned series.
/// Returns `None` when some sequence lacks a visit at or beyond `horizon`
/// (never earlier than the end of the grid).
pub fn build_profile(
    series: &PerSequence<AlignedSeries>,
    covariates: IncidenceCovariates,
    grid: &ProfileGrid,
    horizon: i64,
) -> Result<Option<ConcatProfile>> {
    if !series.0.iter().all(|s| meets_inclusion(s, horizon.max(grid.end_day))) {
        return Ok(None);
    }
    let interp = series
        .0
        .iter()
        .map(|s| interpolate_profile(s, grid))
        .collect::<Result<Vec<_>>>()?;
    concatenate(&interp, covariates).map(Some)
}

/// Counts from one extraction pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionCounts {
    pub events: usize,
    pub lesion_tissue: usize,
    pub included: usize,
}

/// Profiles of every lesion-tissue event of a subject that meets inclusion.
pub fn extract_subject_profiles(
    subject: &SubjectRecord,
    events: &[IncidenceEvent],
    grid: &ProfileGrid,
    horizon: i64,
) -> Result<(Vec<ConcatProfile>, ExtractionCounts)> {
    let mut counts = ExtractionCounts {
        events: events.len(),
        ..Default::default()
    };
    let tissue: Vec<&IncidenceEvent> = events.iter().filter(|e| e.is_lesion_tissue).collect();
    counts.lesion_tissue = tissue.len();
    if tissue.is_empty() {
        return Ok((Vec::new(), counts));
    }
    let studies = subject
        .visits
        .iter()
        .map(normalize_study)
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for e in tissue {
        let visit = subject
            .visits
            .iter()
            .find(|v| v.day == e.incidence_day)
            .expect("incidence day is a visit day");
        let covariates = IncidenceCovariates::at_visit(subject, visit, e.distance_mm);
        if let Some(p) = build_profile(&align_voxel(e, &studies), covariates, grid, horizon)? {
            out.push(p);
        }
    }
    counts.included = out.len();
    Ok((out, counts))
}

/// Events and included profiles for every subject of a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortProfiles {
    pub events: Vec<IncidenceEvent>,
    pub profiles: Vec<ConcatProfile>,
    pub counts: ExtractionCounts,
}

pub fn extract_cohort_profiles(cohort: &Cohort, config: &EventConfig, grid: &ProfileGrid, horizon: i64) -> Result<CohortProfiles> {
    let mut out = CohortProfiles {
        events: Vec::new(),
        profiles: Vec::new(),
        counts: ExtractionCounts::default(),
    };
    for subject in &cohort.subjects {
        let events = extract_subject_events(subject, config)?;
        let (profiles, c) = extract_subject_profiles(subject, &events, grid, horizon)?;
        out.counts.events += c.events;
        out.counts.lesion_tissue += c.lesion_tissue;
        out.counts.included += c.included;
        out.events.extend(events);
        out.profiles.extend(profiles);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(points: Vec<(i64, f64)>) -> AlignedSeries {
        AlignedSeries {
            key: VoxelKey {
                subject_id: String::from("s"),
                lesion_id: 1,
                voxel_id: 0,
            },
            sequence: Sequence::Flair,
            incidence_day: 0,
            points,
        }
    }

    #[test]
    fn grid_has_41_points() {
        let g = ProfileGrid::default();
        assert_eq!(g.len(), 41);
        assert_eq!(g.days().last(), Some(200));
        assert!(ProfileGrid::new(200, 7).is_err());
    }

    #[test]
    fn normalization_formula() {
        let r = ReferenceStats { mean: 70.0, sd: 5.0 };
        assert_eq!(r.normalize(80.0), 2.0);
    }

    #[test]
    fn constant_reference_is_rejected() {
        let dims = Dims::new(2, 2, 1);
        let vol = Volume::filled(dims, 3.0);
        let m = Mask::from_indices(dims, 0..4);
        assert_eq!(
            reference_stats(&vol, &m, Sequence::T2),
            Err(Error::ZeroReferenceVariance(Sequence::T2))
        );
        assert_eq!(
            reference_stats(&vol, &Mask::empty(dims), Sequence::T2),
            Err(Error::EmptyReferenceMask)
        );
    }

    #[test]
    fn inclusion_threshold() {
        assert!(!meets_inclusion(&series(vec![(0, 1.0), (195, 1.0)]), 200));
        assert!(meets_inclusion(&series(vec![(0, 1.0), (200, 1.0)]), 200));
        assert!(!meets_inclusion(&series(vec![(0, 1.0)]), 200));
    }

    #[test]
    fn interpolation_examples() {
        let g = ProfileGrid::default();
        let p = interpolate_profile(&series(vec![(0, 2.0), (200, 4.0)]), &g).unwrap();
        assert_eq!(p.values[20], 3.0);
        let p = interpolate_profile(&series(vec![(-30, 9.0), (0, 1.0), (50, 7.1), (210, 0.0)]), &g)
            .unwrap();
        assert_eq!(p.values[10], 7.1);
        assert_eq!(p.values[0], 1.0);
        let p = interpolate_profile(&series(vec![(0, 1.0), (60, 4.0), (210, 4.0)]), &g).unwrap();
        assert_eq!(p.values[6], 2.5);
        assert_eq!(p.values[40], 4.0);
        assert!(matches!(
            interpolate_profile(&series(vec![(0, 1.0), (195, 1.0)]), &g),
            Err(Error::InclusionNotMet { .. })
        ));
        assert_eq!(
            interpolate_profile(&series(vec![(3, 1.0), (200, 1.0)]), &g),
            Err(Error::MissingIncidenceObservation)
        );
    }

    #[test]
    fn concatenation_order() {
        let cov = IncidenceCovariates {
            spms: false,
            distance_mm: 1.0,
            age: 36.0,
            steroids: false,
            male: false,
            treatment: false,
        };
        let key = VoxelKey { subject_id: String::from("s"), lesion_id: 1, voxel_id: 3 };
        let profiles: Vec<InterpolatedProfile> = [Sequence::Pd, Sequence::T2, Sequence::Flair, Sequence::T1]
            .iter()
            .map(|&s| InterpolatedProfile {
                key: key.clone(),
                sequence: s,
                values: vec![if s == Sequence::Flair { 1.0 } else { 0.0 }; 41],
            })
            .collect();
        let c = concatenate(&profiles, cov).unwrap();
        assert_eq!(c.values.len(), 164);
        assert!(c.values[..41].iter().all(|&v| v == 1.0));
        assert!(c.values[41..].iter().all(|&v| v == 0.0));
        assert_eq!(c.covariates.centered_age(), 0.0);
        assert_eq!(
            concatenate(&profiles[..3], cov),
            Err(Error::MissingSequence(Sequence::T1))
        );
    }
}
