//! JSON cohort manifests referencing per-visit volume and mask files.

use std::fs;
use std::path::{Path, PathBuf};

use lesion_core::cohort::{ClinicalCovariates, Cohort, PerSequence, Sequence, Sex, StudyVisit, SubjectRecord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModuleContext, Result};
use crate::volume_io::{read_mask, read_volume, write_mask, write_volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: String,
    pub subjects: Vec<ManifestSubject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestSubject {
    pub subject_id: String,
    pub sex: Sex,
    pub age_at_baseline: f64,
    pub visits: Vec<ManifestVisit>,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVisit {
    pub day: i64,
    pub covariates: ClinicalCovariates,
    pub volumes: VolumePaths,
    pub nawm_mask: PathBuf,
    #[serde(default)]
    pub sublime_mask: Option<PathBuf>,
    pub oasis_mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumePaths {
    #[serde(rename = "FLAIR")]
    pub flair: PathBuf,
    #[serde(rename = "T1")]
    pub t1: PathBuf,
    #[serde(rename = "T2")]
    pub t2: PathBuf,
    #[serde(rename = "PD")]
    pub pd: PathBuf,
}

impl VolumePaths {
    pub fn get(&self, s: Sequence) -> &Path {
        match s {
            Sequence::Flair => &self.flair,
            Sequence::T1 => &self.t1,
            Sequence::T2 => &self.t2,
            Sequence::Pd => &self.pd,
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

/// Reads the manifest and every file it references, then checks the cohort
/// invariants (unique ids, increasing days, matching grids).
pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    let raw = load_cohort_unchecked(manifest_path)?;
    Cohort::new(raw.manifest_version, raw.subjects).module("cohort-model")
}

/// Reads every referenced file without checking cohort invariants.
pub fn load_cohort_unchecked(manifest_path: &Path) -> Result<Cohort> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for s in manifest.subjects {
        let mut visits = Vec::with_capacity(s.visits.len());
        for v in s.visits {
            let volumes = PerSequence::try_from_fn(|seq| read_volume(&base.join(v.volumes.get(seq))))?;
            visits.push(StudyVisit {
                day: v.day,
                volumes,
                nawm_mask: read_mask(&base.join(&v.nawm_mask))?,
                sublime_mask: v.sublime_mask.map(|p| read_mask(&base.join(p))).transpose()?,
                oasis_mask: read_mask(&base.join(&v.oasis_mask))?,
                covariates: v.covariates,
            });
        }
        subjects.push(SubjectRecord {
            subject_id: s.subject_id,
            sex: s.sex,
            age_at_baseline: s.age_at_baseline,
            visits,
        });
    }
    Ok(Cohort {
        manifest_version: manifest.manifest_version,
        subjects,
    })
}

/// Writes every volume and mask under `dir` and returns the manifest path.
pub fn write_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    let mut manifest = Manifest {
        manifest_version: cohort.manifest_version.clone(),
        subjects: Vec::with_capacity(cohort.subjects.len()),
    };
    for s in &cohort.subjects {
        let sub_dir = PathBuf::from(&s.subject_id);
        fs::create_dir_all(dir.join(&sub_dir)).map_err(Error::io(dir.join(&sub_dir)))?;
        let mut visits = Vec::with_capacity(s.visits.len());
        for v in &s.visits {
            let stem = format!("day{:05}", v.day);
            let file = |name: &str| sub_dir.join(format!("{stem}_{name}"));
            let volume_path = |seq: Sequence| file(&format!("{}.lpv", seq.name()));
            for (seq, vol) in v.volumes.iter() {
                write_volume(&dir.join(volume_path(seq)), vol)?;
            }
            let nawm = file("nawm.lpm");
            write_mask(&dir.join(&nawm), &v.nawm_mask)?;
            let oasis = file("oasis.lpm");
            write_mask(&dir.join(&oasis), &v.oasis_mask)?;
            let sublime = match &v.sublime_mask {
                Some(m) => {
                    let p = file("sublime.lpm");
                    write_mask(&dir.join(&p), m)?;
                    Some(p)
                }
                None => None,
            };
            visits.push(ManifestVisit {
                day: v.day,
                covariates: v.covariates,
                volumes: VolumePaths {
                    flair: volume_path(Sequence::Flair),
                    t1: volume_path(Sequence::T1),
                    t2: volume_path(Sequence::T2),
                    pd: volume_path(Sequence::Pd),
                },
                nawm_mask: nawm,
                sublime_mask: sublime,
                oasis_mask: oasis,
            });
        }
        manifest.subjects.push(ManifestSubject {
            subject_id: s.subject_id.clone(),
            sex: s.sex,
            age_at_baseline: s.age_at_baseline,
            visits,
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(Error::json(&path))?;
    fs::write(&path, text + "\n").map_err(Error::io(&path))?;
    Ok(path)
}
