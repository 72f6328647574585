//! Per-voxel lesion incidence events derived from incidence/presence masks.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::{StudyVisit, SubjectRecord};
use crate::components::{filter_small_components, label_components};
use crate::distance::distance_to_boundary;
use crate::error::{Error, Result};
use crate::volume::{Dims, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidenceEvent {
    pub subject_id: String,
    pub voxel: [usize; 3],
    /// Linear voxel index in the subject grid.
    pub voxel_index: usize,
    pub incidence_day: i64,
    /// Lesion label, dense from 1 within a subject; 0 until labeled.
    pub lesion_id: u32,
    pub distance_mm: f64,
    pub is_lesion_tissue: bool,
}

/// The masks of one visit as seen by event extraction.
#[derive(Debug, Clone, Copy)]
pub struct VisitMasks<'a> {
    pub day: i64,
    pub sublime: Option<&'a Mask>,
    pub oasis: &'a Mask,
}

impl<'a> From<&'a StudyVisit> for VisitMasks<'a> {
    fn from(v: &'a StudyVisit) -> Self {
        VisitMasks {
            day: v.day,
            sublime: v.sublime_mask.as_ref(),
            oasis: &v.oasis_mask,
        }
    }
}

/// Which visits may confirm persistence of an incident voxel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PersistenceRule {
    /// Any visit inside the window whose presence mask contains the voxel.
    #[default]
    AnyVisitInWindow,
    /// Only the first visit after incidence, and only if it falls in the window.
    NextVisitOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub min_component_voxels: usize,
    pub edema_window_days: i64,
    pub persistence: PersistenceRule,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            min_component_voxels: 27,
            edema_window_days: 40,
            persistence: PersistenceRule::AnyVisitInWindow,
        }
    }
}

/// One event per voxel at its first incidence detection. Voxels present in
/// the baseline presence mask are excluded. Events are ordered by incidence
/// day, then voxel index.
pub fn detect_incidence(subject_id: &str, visits: &[VisitMasks<'_>]) -> Result<Vec<IncidenceEvent>> {
    let Some(baseline) = visits.first() else {
        return Ok(Vec::new());
    };
    let dims = baseline.oasis.dims();
    let mut claimed = baseline.oasis.clone();
    let mut events = Vec::new();
    for v in &visits[1..] {
        let sublime = v.sublime.ok_or_else(|| Error::MissingIncidenceMask {
            subject: String::from(subject_id),
            day: v.day,
        })?;
        for i in sublime.indices() {
            if claimed.contains(i) {
                continue;
            }
            claimed.set(i, true);
            events.push(IncidenceEvent {
                subject_id: String::from(subject_id),
                voxel: dims.coords(i),
                voxel_index: i,
                incidence_day: v.day,
                lesion_id: 0,
                distance_mm: 0.0,
                is_lesion_tissue: false,
            });
        }
    }
    Ok(events)
}

/// Marks events whose voxel persists in a presence mask within
/// `(incidence_day, incidence_day + window_days]`; the rest are edema.
pub fn exclude_edema(
    events: &mut [IncidenceEvent],
    visits: &[VisitMasks<'_>],
    window_days: i64,
    rule: PersistenceRule,
) {
    for e in events.iter_mut() {
        let mut later = visits.iter().filter(|v| v.day > e.incidence_day);
        let in_window = |v: &&VisitMasks<'_>| v.day <= e.incidence_day + window_days;
        e.is_lesion_tissue = match rule {
            PersistenceRule::AnyVisitInWindow => later
                .take_while(in_window)
                .any(|v| v.oasis.contains(e.voxel_index)),
            PersistenceRule::NextVisitOnly => later
                .next()
                .filter(in_window)
                .is_some_and(|v| v.oasis.contains(e.voxel_index)),
        };
    }
}

/// Labels each event by the 26-connected component of the union of all of
/// the subject's event voxels.
pub fn label_lesions(events: &mut [IncidenceEvent], dims: Dims) {
    let union = Mask::from_indices(dims, events.iter().map(|e| e.voxel_index));
    let comps = label_components(&union);
    for e in events.iter_mut() {
        e.lesion_id = comps.labels[e.voxel_index];
    }
}

/// Full event extraction for one subject: size filtering of incidence masks,
/// first-detection events, distance to the incidence-mask boundary, edema
/// exclusion and lesion labeling.
pub fn extract_subject_events(subject: &SubjectRecord, config: &EventConfig) -> Result<Vec<IncidenceEvent>> {
    let Some(first) = subject.visits.first() else {
        return Ok(Vec::new());
    };
    let dims = first.dims();
    let filtered: Vec<Option<Mask>> = subject
        .visits
        .iter()
        .map(|v| {
            v.sublime_mask
                .as_ref()
                .map(|m| filter_small_components(m, config.min_component_voxels))
        })
        .collect();
    let views: Vec<VisitMasks<'_>> = subject
        .visits
        .iter()
        .zip(&filtered)
        .map(|(v, f)| VisitMasks {
            day: v.day,
            sublime: f.as_ref(),
            oasis: &v.oasis_mask,
        })
        .collect();
    let mut events = detect_incidence(&subject.subject_id, &views)?;

    let mut by_day: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (k, e) in events.iter().enumerate() {
        by_day.entry(e.incidence_day).or_default().push(k);
    }
    for (day, members) in by_day {
        let view = views.iter().find(|v| v.day == day).expect("event day is a visit day");
        let map = distance_to_boundary(view.sublime.expect("incidence visit has a mask"));
        for k in members {
            events[k].distance_mm = map.at(events[k].voxel_index);
        }
    }

    exclude_edema(&mut events, &views, config.edema_window_days, config.persistence);
    label_lesions(&mut events, dims);
    Ok(events)
}
