//! Covariate coding shared by the mixed model, function-on-scalar regression
//! and the synthetic generator.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{ConcatProfile, IncidenceCovariates};

/// Age (years) subtracted before entering the model.
pub const AGE_CENTER: f64 = 36.0;
/// Knot of the age hinge, in centered years.
pub const HINGE_KNOT: f64 = 4.0;

/// Definition of the `(Age - 4)+` column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HingeMode {
    /// `age * 1(age > 4)`, discontinuous at the knot.
    #[default]
    PaperLiteral,
    /// `(age - 4) * 1(age > 4)`.
    Standard,
}

pub fn hinge(centered_age: f64, mode: HingeMode) -> f64 {
    if centered_age <= HINGE_KNOT {
        return 0.0;
    }
    match mode {
        HingeMode::PaperLiteral => centered_age,
        HingeMode::Standard => centered_age - HINGE_KNOT,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Covariate {
    Spms,
    Distance,
    Age,
    AgeHinge,
    Steroids,
    Male,
    Treatment,
}

impl Covariate {
    pub const ALL: [Covariate; 7] = [
        Covariate::Spms,
        Covariate::Distance,
        Covariate::Age,
        Covariate::AgeHinge,
        Covariate::Steroids,
        Covariate::Male,
        Covariate::Treatment,
    ];

    /// Column of this covariate in the full design (column 0 is the intercept).
    pub const fn column(self) -> usize {
        self as usize + 1
    }

    pub const fn name(self) -> &'static str {
        COLUMN_NAMES[self.column()]
    }

    pub const fn is_binary(self) -> bool {
        matches!(
            self,
            Covariate::Spms | Covariate::Steroids | Covariate::Male | Covariate::Treatment
        )
    }
}

pub const N_COLUMNS: usize = 8;

pub const COLUMN_NAMES: [&str; N_COLUMNS] = [
    "Intercept",
    "SPMS",
    "Distance",
    "Age",
    "(Age-4)+",
    "Steroids",
    "Male",
    "Treatment",
];

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn design_row(c: &IncidenceCovariates, mode: HingeMode) -> [f64; N_COLUMNS] {
    let age = c.centered_age();
    [
        1.0,
        indicator(c.spms),
        c.distance_mm,
        age,
        hinge(age, mode),
        indicator(c.steroids),
        indicator(c.male),
        indicator(c.treatment),
    ]
}

/// Subject and nested lesion membership of each row, as dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub subject: Vec<usize>,
    /// Lesion index per row; lesions are numbered globally, each inside one subject.
    pub lesion: Vec<usize>,
    pub subject_names: Vec<String>,
    pub n_lesions: usize,
}

impl Grouping {
    /// Builds dense indices from `(subject, lesion)` labels in order of first appearance.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = (&'a str, u32)>) -> Self {
        let mut subjects: BTreeMap<&str, usize> = BTreeMap::new();
        let mut lesions: BTreeMap<(usize, u32), usize> = BTreeMap::new();
        let mut subject_names = Vec::new();
        let (mut subject, mut lesion) = (Vec::new(), Vec::new());
        for (s, l) in labels {
            let next = subjects.len();
            let si = *subjects.entry(s).or_insert_with(|| {
                subject_names.push(String::from(s));
                next
            });
            let next = lesions.len();
            let li = *lesions.entry((si, l)).or_insert(next);
            subject.push(si);
            lesion.push(li);
        }
        Grouping {
            subject,
            lesion,
            subject_names,
            n_lesions: lesions.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.subject.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subject.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_names.len()
    }

    /// Row indices of each subject, in row order.
    pub fn rows_by_subject(&self) -> Vec<Vec<usize>> {
        let mut out = alloc::vec![Vec::new(); self.n_subjects()];
        for (r, &s) in self.subject.iter().enumerate() {
            out[s].push(r);
        }
        out
    }

    /// Subset of rows, re-indexed densely. Repeated subjects in `rows`
    /// become distinct groups when `subject_copy` distinguishes them.
    pub fn subset(&self, rows: &[usize], subject_copy: &[usize]) -> Grouping {
        let labels: Vec<(usize, usize)> = rows
            .iter()
            .zip(subject_copy)
            .map(|(&r, &copy)| (copy, self.lesion[r]))
            .collect();
        let mut subjects: BTreeMap<usize, usize> = BTreeMap::new();
        let mut lesions: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut subject_names = Vec::new();
        let (mut subject, mut lesion) = (Vec::new(), Vec::new());
        for (&r, &(copy, l)) in rows.iter().zip(&labels) {
            let next = subjects.len();
            let si = *subjects.entry(copy).or_insert_with(|| {
                subject_names.push(self.subject_names[self.subject[r]].clone());
                next
            });
            let next = lesions.len();
            let li = *lesions.entry((copy, l)).or_insert(next);
            subject.push(si);
            lesion.push(li);
        }
        Grouping {
            subject,
            lesion,
            subject_names,
            n_lesions: lesions.len(),
        }
    }
}

/// Design matrix with grouping for a set of voxel profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub columns: Vec<&'static str>,
    pub groups: Grouping,
}

impl Design {
    /// Intercept plus a single covariate, same grouping.
    pub fn univariate(&self, covariate: Covariate) -> Result<Design> {
        let n = self.x.nrows();
        let c = self
            .columns
            .iter()
            .position(|name| *name == covariate.name())
            .ok_or_else(|| {
                Error::InvalidConfig(alloc::format!("design has no column {}", covariate.name()))
            })?;
        Ok(Design {
            x: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { self.x[(i, c)] }),
            columns: alloc::vec![COLUMN_NAMES[0], covariate.name()],
            groups: self.groups.clone(),
        })
    }
}

pub fn build_design_from_covariates<'a>(
    rows: impl IntoIterator<Item = (&'a str, u32, &'a IncidenceCovariates)>,
    mode: HingeMode,
) -> Result<Design> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (s, l, c) in rows {
        let row = design_row(c, mode);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariates"));
        }
        labels.push((s, l));
        data.extend_from_slice(&row);
    }
    let n = labels.len();
    Ok(Design {
        x: DMatrix::from_row_slice(n, N_COLUMNS, &data),
        columns: COLUMN_NAMES.to_vec(),
        groups: Grouping::from_labels(labels),
    })
}

pub fn build_design(profiles: &[ConcatProfile], mode: HingeMode) -> Result<Design> {
    build_design_from_covariates(
        profiles
            .iter()
            .map(|p| (p.key.subject_id.as_str(), p.key.lesion_id, &p.covariates)),
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_modes() {
        assert_eq!(hinge(0.0, HingeMode::PaperLiteral), 0.0);
        assert_eq!(hinge(6.0, HingeMode::PaperLiteral), 6.0);
        assert_eq!(hinge(6.0, HingeMode::Standard), 2.0);
        assert_eq!(hinge(3.0, HingeMode::PaperLiteral), 0.0);
        assert_eq!(hinge(3.0, HingeMode::Standard), 0.0);
        assert_eq!(hinge(4.0, HingeMode::PaperLiteral), 0.0);
    }

    #[test]
    fn rows_center_age() {
        let c = IncidenceCovariates {
            spms: true,
            distance_mm: 2.0,
            age: 42.0,
            steroids: false,
            male: true,
            treatment: true,
        };
        assert_eq!(
            design_row(&c, HingeMode::Standard),
            [1.0, 1.0, 2.0, 6.0, 2.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn grouping_is_nested() {
        let g = Grouping::from_labels([("a", 1), ("a", 2), ("b", 1), ("a", 1)]);
        assert_eq!(g.subject, [0, 0, 1, 0]);
        assert_eq!(g.lesion, [0, 1, 2, 0]);
        assert_eq!(g.n_lesions, 3);
        let sub = g.subset(&[2, 2, 0], &[0, 1, 2]);
        assert_eq!(sub.subject, [0, 1, 2]);
        assert_eq!(sub.n_lesions, 3);
    }
}
