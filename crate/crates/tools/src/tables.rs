//! CSV tables exchanged between pipeline stages.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use lesion_core::cohort::Sequence;
use lesion_core::events::IncidenceEvent;
use lesion_core::profile::{ConcatProfile, IncidenceCovariates, ProfileGrid, VoxelKey};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    for r in rows {
        w.serialize(r).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    r.deserialize().map(|row| row.map_err(Error::csv(path))).collect()
}

/// Writes a header plus rows of pre-formatted cells.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::csv(path))?;
    w.write_record(header).map_err(Error::csv(path))?;
    for r in rows {
        w.write_record(r).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub subject_id: String,
    pub lesion_id: u32,
    pub voxel_id: u64,
    pub sequence: Sequence,
    pub aligned_day: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub subject_id: String,
    pub lesion_id: u32,
    pub voxel_id: u64,
    pub spms: u8,
    pub distance_mm: f64,
    pub age: f64,
    pub steroids: u8,
    pub male: u8,
    pub treatment: u8,
}

impl CovariateRow {
    fn from_profile(p: &ConcatProfile) -> Self {
        let c = &p.covariates;
        CovariateRow {
            subject_id: p.key.subject_id.clone(),
            lesion_id: p.key.lesion_id,
            voxel_id: p.key.voxel_id,
            spms: flag(c.spms),
            distance_mm: c.distance_mm,
            age: c.age,
            steroids: flag(c.steroids),
            male: flag(c.male),
            treatment: flag(c.treatment),
        }
    }

    fn key(&self) -> VoxelKey {
        VoxelKey {
            subject_id: self.subject_id.clone(),
            lesion_id: self.lesion_id,
            voxel_id: self.voxel_id,
        }
    }

    fn covariates(&self, path: &Path) -> Result<IncidenceCovariates> {
        let b = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::format(path, format!("{name} must be 0 or 1, got {v}"))),
        };
        Ok(IncidenceCovariates {
            spms: b(self.spms, "spms")?,
            distance_mm: self.distance_mm,
            age: self.age,
            steroids: b(self.steroids, "steroids")?,
            male: b(self.male, "male")?,
            treatment: b(self.treatment, "treatment")?,
        })
    }
}

/// Long-format interpolated profiles plus the per-voxel covariate table.
pub fn write_profile_tables(profile_path: &Path, covariate_path: &Path, profiles: &[ConcatProfile], grid: &ProfileGrid) -> Result<()> {
    let days: Vec<i64> = grid.days().collect();
    let t = days.len();
    write_rows(
        profile_path,
        profiles.iter().flat_map(|p| {
            let days = &days;
            Sequence::ALL.into_iter().flat_map(move |s| {
                days.iter().enumerate().map(move |(k, &day)| ProfileRow {
                    subject_id: p.key.subject_id.clone(),
                    lesion_id: p.key.lesion_id,
                    voxel_id: p.key.voxel_id,
                    sequence: s,
                    aligned_day: day,
                    value: p.values[s.index() * t + k],
                })
            })
        }),
    )?;
    write_rows(covariate_path, profiles.iter().map(CovariateRow::from_profile))
}

/// Reads the two profile tables back into concatenated profiles, in the
/// order voxels first appear in the covariate table.
pub fn read_profile_tables(profile_path: &Path, covariate_path: &Path, grid: &ProfileGrid) -> Result<Vec<ConcatProfile>> {
    let days: Vec<i64> = grid.days().collect();
    let t = days.len();
    let covs: Vec<CovariateRow> = read_rows(covariate_path)?;
    let mut index: HashMap<VoxelKey, usize> = HashMap::with_capacity(covs.len());
    let mut profiles = Vec::with_capacity(covs.len());
    for row in &covs {
        let key = row.key();
        if index.insert(key.clone(), profiles.len()).is_some() {
            return Err(Error::format(covariate_path, format!("duplicate voxel {key:?}")));
        }
        profiles.push(ConcatProfile {
            key,
            values: vec![f64::NAN; 4 * t],
            covariates: row.covariates(covariate_path)?,
        });
    }
    let mut filled = vec![0usize; profiles.len()];
    let rows: Vec<ProfileRow> = read_rows(profile_path)?;
    for r in rows {
        let key = VoxelKey {
            subject_id: r.subject_id,
            lesion_id: r.lesion_id,
            voxel_id: r.voxel_id,
        };
        let &p = index
            .get(&key)
            .ok_or_else(|| Error::format(profile_path, format!("voxel {key:?} has no covariates")))?;
        let k = days
            .binary_search(&r.aligned_day)
            .map_err(|_| Error::format(profile_path, format!("day {} is not on the grid", r.aligned_day)))?;
        let slot = &mut profiles[p].values[r.sequence.index() * t + k];
        if !slot.is_nan() {
            return Err(Error::format(profile_path, format!("duplicate value for {key:?}")));
        }
        if !r.value.is_finite() {
            return Err(Error::format(profile_path, format!("non-finite value for {key:?}")));
        }
        *slot = r.value;
        filled[p] += 1;
    }
    if let Some(p) = filled.iter().position(|&n| n != 4 * t) {
        return Err(Error::format(
            profile_path,
            format!("voxel {:?} has {} of {} values", profiles[p].key, filled[p], 4 * t),
        ));
    }
    Ok(profiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub subject_id: String,
    pub lesion_id: u32,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub incidence_day: i64,
    pub distance_mm: f64,
    pub is_lesion_tissue: u8,
}

pub fn write_events(path: &Path, events: &[IncidenceEvent]) -> Result<()> {
    write_rows(
        path,
        events.iter().map(|e| EventRow {
            subject_id: e.subject_id.clone(),
            lesion_id: e.lesion_id,
            x: e.voxel[0],
            y: e.voxel[1],
            z: e.voxel[2],
            incidence_day: e.incidence_day,
            distance_mm: e.distance_mm,
            is_lesion_tissue: flag(e.is_lesion_tissue),
        }),
    )
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub subject_id: String,
    pub lesion_id: u32,
    pub voxel_id: u64,
    pub score_pc1: f64,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(Error::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}
