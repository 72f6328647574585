//! Cohort data model: subjects, their study visits, per-sequence volumes,
//! segmentation masks and clinical covariates.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, Mask, Volume};

/// MRI sequence. The declaration order is the concatenation order of profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sequence {
    #[serde(rename = "FLAIR")]
    Flair,
    #[serde(rename = "T1")]
    T1,
    #[serde(rename = "T2")]
    T2,
    #[serde(rename = "PD")]
    Pd,
}

impl Sequence {
    pub const ALL: [Sequence; 4] = [Sequence::Flair, Sequence::T1, Sequence::T2, Sequence::Pd];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            Sequence::Flair => "FLAIR",
            Sequence::T1 => "T1",
            Sequence::T2 => "T2",
            Sequence::Pd => "PD",
        }
    }

    pub fn parse(name: &str) -> Option<Sequence> {
        Sequence::ALL
            .into_iter()
            .find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per sequence, indexable by [`Sequence`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSequence<T>(pub [T; 4]);

impl<T> PerSequence<T> {
    pub fn from_fn(mut f: impl FnMut(Sequence) -> T) -> Self {
        PerSequence(Sequence::ALL.map(&mut f))
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Sequence) -> Result<T, E>) -> Result<Self, E> {
        let [a, b, c, d] = Sequence::ALL;
        Ok(PerSequence([f(a)?, f(b)?, f(c)?, f(d)?]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sequence, &T)> {
        Sequence::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(Sequence, &T) -> U) -> PerSequence<U> {
        PerSequence::from_fn(|s| f(s, &self.0[s.index()]))
    }
}

impl<T> Index<Sequence> for PerSequence<T> {
    type Output = T;
    fn index(&self, s: Sequence) -> &T {
        &self.0[s.index()]
    }
}

impl<T> IndexMut<Sequence> for PerSequence<T> {
    fn index_mut(&mut self, s: Sequence) -> &mut T {
        &mut self.0[s.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subtype {
    #[serde(rename = "RRMS")]
    Rrms,
    #[serde(rename = "SPMS")]
    Spms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalCovariates {
    pub subtype: Subtype,
    pub on_steroids: bool,
    pub on_treatment: bool,
    /// Age in years at this visit.
    pub age: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyVisit {
    /// Days since the subject's baseline visit.
    pub day: i64,
    pub volumes: PerSequence<Volume>,
    pub nawm_mask: Mask,
    /// New/enlarging lesion voxels relative to the previous visit; absent at baseline.
    pub sublime_mask: Option<Mask>,
    /// Cross-sectional lesion presence.
    pub oasis_mask: Mask,
    pub covariates: ClinicalCovariates,
}

impl StudyVisit {
    pub fn dims(&self) -> Dims {
        self.volumes[Sequence::Flair].dims()
    }

    /// First grid whose dims disagree with the FLAIR volume, by name.
    pub fn dimension_mismatch(&self) -> Option<(String, Dims)> {
        let reference = self.dims();
        for (s, v) in self.volumes.iter() {
            if v.dims() != reference {
                return Some((String::from(s.name()), v.dims()));
            }
        }
        let masks = [
            ("nawm", Some(&self.nawm_mask)),
            ("sublime", self.sublime_mask.as_ref()),
            ("oasis", Some(&self.oasis_mask)),
        ];
        masks.into_iter().find_map(|(name, m)| match m {
            Some(m) if m.dims() != reference => Some((String::from(name), m.dims())),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub sex: Sex,
    pub age_at_baseline: f64,
    pub visits: Vec<StudyVisit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub manifest_version: String,
    pub subjects: Vec<SubjectRecord>,
}

impl Cohort {
    /// Builds a cohort, rejecting duplicate ids, non-increasing visit days and
    /// grids that disagree within a visit.
    pub fn new(manifest_version: String, subjects: Vec<SubjectRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &subjects {
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(s.subject_id.clone()));
            }
            for pair in s.visits.windows(2) {
                if pair[1].day <= pair[0].day {
                    return Err(Error::NonMonotoneDays {
                        subject: s.subject_id.clone(),
                        previous: pair[0].day,
                        next: pair[1].day,
                    });
                }
            }
            for v in &s.visits {
                if let Some((what, found)) = v.dimension_mismatch() {
                    return Err(Error::DimensionMismatch {
                        context: format!("subject {} day {} {}", s.subject_id, v.day, what),
                        expected: v.dims(),
                        found,
                    });
                }
            }
        }
        Ok(Cohort {
            manifest_version,
            subjects,
        })
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    DuplicateSubject,
    TooFewVisits,
    BaselineNotZero,
    NonMonotoneDays,
    DimensionMismatch,
    NonFiniteIntensity,
    MissingIncidenceMask,
    BaselineIncidenceMask,
    AgeInconsistent,
    EmptyReferenceMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub subject_id: String,
    pub visit_day: Option<i64>,
    pub sequence: Option<Sequence>,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {}", self.subject_id)?;
        if let Some(day) = self.visit_day {
            write!(f, ", day {day}")?;
        }
        if let Some(seq) = self.sequence {
            write!(f, ", {seq}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(
        &mut self,
        kind: IssueKind,
        subject: &str,
        day: Option<i64>,
        sequence: Option<Sequence>,
        message: String,
    ) {
        self.issues.push(ValidationIssue {
            kind,
            subject_id: String::from(subject),
            visit_day: day,
            sequence,
            message,
        });
    }
}

/// Tolerance on age drift between visits, in years.
const AGE_TOLERANCE: f64 = 1.0 / 365.25;

/// Checks every cohort invariant and reports each violation; never fails.
pub fn validate_cohort(cohort: &Cohort) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for s in &cohort.subjects {
        let id = s.subject_id.as_str();
        if !seen.insert(id) {
            report.push(
                IssueKind::DuplicateSubject,
                id,
                None,
                None,
                String::from("subject id appears more than once"),
            );
        }
        if s.visits.len() < 2 {
            report.push(
                IssueKind::TooFewVisits,
                id,
                None,
                None,
                format!("{} visit(s), need at least 2", s.visits.len()),
            );
        }
        if let Some(first) = s.visits.first() {
            if first.day != 0 {
                report.push(
                    IssueKind::BaselineNotZero,
                    id,
                    Some(first.day),
                    None,
                    String::from("baseline visit must be at day 0"),
                );
            }
        }
        for pair in s.visits.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.day <= a.day {
                report.push(
                    IssueKind::NonMonotoneDays,
                    id,
                    Some(b.day),
                    None,
                    format!("visit day {} does not follow {}", b.day, a.day),
                );
            }
            let expected = (b.day - a.day) as f64 / 365.25;
            let observed = b.covariates.age - a.covariates.age;
            if libm::fabs(observed - expected) > AGE_TOLERANCE + 1e-12 {
                report.push(
                    IssueKind::AgeInconsistent,
                    id,
                    Some(b.day),
                    None,
                    format!(
                        "age changes by {observed:.4} years over {} days (expected {expected:.4})",
                        b.day - a.day
                    ),
                );
            }
        }
        for (k, v) in s.visits.iter().enumerate() {
            if let Some((what, found)) = v.dimension_mismatch() {
                report.push(
                    IssueKind::DimensionMismatch,
                    id,
                    Some(v.day),
                    Sequence::parse(&what),
                    format!("{what} grid is {found}, FLAIR grid is {}", v.dims()),
                );
            }
            for (seq, vol) in v.volumes.iter() {
                if let Some(i) = vol.first_non_finite() {
                    let [x, y, z] = vol.dims().coords(i);
                    report.push(
                        IssueKind::NonFiniteIntensity,
                        id,
                        Some(v.day),
                        Some(seq),
                        format!("non-finite intensity at voxel ({x}, {y}, {z})"),
                    );
                }
            }
            if v.nawm_mask.is_empty() {
                report.push(
                    IssueKind::EmptyReferenceMask,
                    id,
                    Some(v.day),
                    None,
                    String::from("NAWM mask is empty"),
                );
            }
            match (k == 0, v.sublime_mask.is_some()) {
                (false, false) => report.push(
                    IssueKind::MissingIncidenceMask,
                    id,
                    Some(v.day),
                    None,
                    String::from("non-baseline visit lacks an incidence mask"),
                ),
                (true, true) => report.push(
                    IssueKind::BaselineIncidenceMask,
                    id,
                    Some(v.day),
                    None,
                    String::from("baseline visit carries an incidence mask"),
                ),
                _ => {}
            }
        }
    }
    report
}
