//! PNG review panels for each scored lesion.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use lesion_core::agreement::LesionKey;
use lesion_core::cohort::{Cohort, Sequence, SubjectRecord};
use lesion_core::panel::{select_slice, slice_box, BoundingBox, PanelItem, ScoreScale, Window, BOX_PADDING};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModuleContext, Result};
use crate::tables::{write_json, EventRow, ScoreRow};

/// Pixels per voxel for cropped boxes and for full slices.
pub const BOX_ZOOM: u32 = 8;
pub const SLICE_ZOOM: u32 = 4;
const GAP: u32 = 2;
const SCALE_BAR_WIDTH: u32 = 16;
const OVERLAY_ALPHA: f64 = 0.6;
const LESION_COLOUR: [u8; 3] = [230, 40, 40];
const EDEMA_COLOUR: [u8; 3] = [60, 120, 255];
const BOX_COLOUR: [u8; 3] = [255, 220, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlay {
    None,
    BoxOutline,
    Segmentation,
    Score,
    ScoreOverGrey,
}

/// One tile inside a panel image; tiles are laid out in rows then columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub row: usize,
    pub column: usize,
    pub visit_day: i64,
    pub sequence: Option<Sequence>,
    pub overlay: Overlay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelImage {
    pub item: PanelItem,
    pub file: String,
    pub tiles: Vec<Tile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelBundle {
    pub lesion: LesionKey,
    pub slice_z: usize,
    pub bounding_box: BoundingBox,
    pub images: Vec<PanelImage>,
    pub score_lower: f64,
    pub score_upper: f64,
}

impl PanelBundle {
    pub fn image(&self, file: &str) -> Option<&PanelImage> {
        self.images.iter().find(|i| i.file == file)
    }
}

/// A voxel of the lesion as drawn on the panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelVoxel {
    pub voxel: [usize; 3],
    pub incidence_day: i64,
    pub is_lesion_tissue: bool,
    pub score: Option<f64>,
}

pub fn bundle_dir_name(lesion: &LesionKey) -> String {
    format!("{}_L{:03}", lesion.subject_id, lesion.lesion_id)
}

pub const BUNDLE_FILE: &str = "bundle.json";
pub const INDEX_FILE: &str = "index.json";

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Canvas {
        Canvas {
            img: RgbImage::from_pixel(width.max(1), height.max(1), Rgb([0, 0, 0])),
        }
    }

    fn block(&mut self, x: u32, y: u32, zoom: u32, colour: [u8; 3]) {
        for dy in 0..zoom {
            for dx in 0..zoom {
                self.img.put_pixel(x + dx, y + dy, Rgb(colour));
            }
        }
    }

    /// Two-pixel rectangle drawn inside the given corners.
    fn outline(&mut self, x0: u32, y0: u32, x1: u32, y1: u32, colour: [u8; 3]) {
        for t in 0..2 {
            for x in x0..=x1 {
                self.img.put_pixel(x, y0 + t, Rgb(colour));
                self.img.put_pixel(x, y1 - t, Rgb(colour));
            }
            for y in y0..=y1 {
                self.img.put_pixel(x0 + t, y, Rgb(colour));
                self.img.put_pixel(x1 - t, y, Rgb(colour));
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        self.img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn blend(base: u8, over: [u8; 3], alpha: f64) -> [u8; 3] {
    over.map(|c| (f64::from(base) * (1.0 - alpha) + f64::from(c) * alpha).round() as u8)
}

fn grid_offset(index: usize, extent: u32) -> u32 {
    index as u32 * (extent + GAP)
}

struct LesionView<'a> {
    subject: &'a SubjectRecord,
    windows: &'a [[Window; 4]],
    voxels: &'a [PanelVoxel],
    z: usize,
    bbox: BoundingBox,
    scale: ScoreScale,
}

impl LesionView<'_> {
    fn grey(&self, visit: usize, s: Sequence, x: usize, y: usize) -> u8 {
        let v = &self.subject.visits[visit];
        self.windows[visit][s.index()].grey(f64::from(v.volumes[s].get(x, y, self.z)))
    }

    fn on_slice(&self) -> impl Iterator<Item = &PanelVoxel> + '_ {
        self.voxels.iter().filter(move |v| v.voxel[2] == self.z)
    }

    fn box_size(&self) -> (u32, u32) {
        (self.bbox.width() as u32 * BOX_ZOOM, self.bbox.height() as u32 * BOX_ZOOM)
    }

    fn draw_grey_box(&self, c: &mut Canvas, ox: u32, oy: u32, visit: usize, s: Sequence) {
        for y in self.bbox.y0..=self.bbox.y1 {
            for x in self.bbox.x0..=self.bbox.x1 {
                let g = self.grey(visit, s, x, y);
                c.block(ox + (x - self.bbox.x0) as u32 * BOX_ZOOM, oy + (y - self.bbox.y0) as u32 * BOX_ZOOM, BOX_ZOOM, [g; 3]);
            }
        }
    }

    fn box_pixel(&self, v: &PanelVoxel, ox: u32, oy: u32) -> (u32, u32) {
        (
            ox + (v.voxel[0] - self.bbox.x0) as u32 * BOX_ZOOM,
            oy + (v.voxel[1] - self.bbox.y0) as u32 * BOX_ZOOM,
        )
    }

    fn full_slice(&self, incidence_visit: usize) -> (Canvas, Vec<Tile>) {
        let dims = self.subject.visits[0].dims();
        let (w, h) = (dims.nx as u32 * SLICE_ZOOM, dims.ny as u32 * SLICE_ZOOM);
        let mut c = Canvas::new(4 * w + 3 * GAP, h);
        let mut tiles = Vec::new();
        for (col, s) in Sequence::ALL.into_iter().enumerate() {
            let ox = grid_offset(col, w);
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let g = self.grey(incidence_visit, s, x, y);
                    c.block(ox + x as u32 * SLICE_ZOOM, y as u32 * SLICE_ZOOM, SLICE_ZOOM, [g; 3]);
                }
            }
            c.outline(
                ox + self.bbox.x0 as u32 * SLICE_ZOOM,
                self.bbox.y0 as u32 * SLICE_ZOOM,
                ox + (self.bbox.x1 as u32 + 1) * SLICE_ZOOM - 1,
                (self.bbox.y1 as u32 + 1) * SLICE_ZOOM - 1,
                BOX_COLOUR,
            );
            tiles.push(Tile {
                row: 0,
                column: col,
                visit_day: self.subject.visits[incidence_visit].day,
                sequence: Some(s),
                overlay: Overlay::BoxOutline,
            });
        }
        (c, tiles)
    }

    /// Sequences by row, visits by column; `score` overlays scores after incidence.
    fn longitudinal(&self, score: bool) -> (Canvas, Vec<Tile>) {
        let (w, h) = self.box_size();
        let n = self.subject.visits.len();
        let mut c = Canvas::new(n as u32 * (w + GAP) - GAP, 4 * (h + GAP) - GAP);
        let mut tiles = Vec::new();
        for (row, s) in Sequence::ALL.into_iter().enumerate() {
            for (col, visit) in self.subject.visits.iter().enumerate() {
                let (ox, oy) = (grid_offset(col, w), grid_offset(row, h));
                self.draw_grey_box(&mut c, ox, oy, col, s);
                if score {
                    for v in self.on_slice().filter(|v| v.incidence_day <= visit.day) {
                        if let Some(sc) = v.score {
                            let (px, py) = self.box_pixel(v, ox, oy);
                            let g = self.grey(col, s, v.voxel[0], v.voxel[1]);
                            c.block(px, py, BOX_ZOOM, blend(g, self.scale.colour(sc), OVERLAY_ALPHA));
                        }
                    }
                }
                tiles.push(Tile {
                    row,
                    column: col,
                    visit_day: visit.day,
                    sequence: Some(s),
                    overlay: if score { Overlay::ScoreOverGrey } else { Overlay::None },
                });
            }
        }
        (c, tiles)
    }

    fn segmentation(&self) -> (Canvas, Vec<Tile>) {
        let (w, h) = self.box_size();
        let n = self.subject.visits.len();
        let mut c = Canvas::new(n as u32 * (w + GAP) - GAP, h);
        let mut tiles = Vec::new();
        let dims = self.subject.visits[0].dims();
        for (col, visit) in self.subject.visits.iter().enumerate() {
            let ox = grid_offset(col, w);
            self.draw_grey_box(&mut c, ox, 0, col, Sequence::Flair);
            for v in self.on_slice() {
                let i = dims.index(v.voxel[0], v.voxel[1], v.voxel[2]);
                let shown = v.incidence_day == visit.day || (v.incidence_day < visit.day && visit.oasis_mask.contains(i));
                if shown {
                    let (px, py) = self.box_pixel(v, ox, 0);
                    c.block(px, py, BOX_ZOOM, if v.is_lesion_tissue { LESION_COLOUR } else { EDEMA_COLOUR });
                }
            }
            tiles.push(Tile {
                row: 0,
                column: col,
                visit_day: visit.day,
                sequence: Some(Sequence::Flair),
                overlay: Overlay::Segmentation,
            });
        }
        (c, tiles)
    }

    /// Scores on black at each voxel's incidence, with a vertical scale bar.
    fn score_map(&self, incidence_visit: usize) -> (Canvas, Vec<Tile>) {
        let (w, h) = self.box_size();
        let bar_x = w + 4 * GAP;
        let mut c = Canvas::new(bar_x + SCALE_BAR_WIDTH, h);
        for v in self.on_slice() {
            if let Some(sc) = v.score {
                let (px, py) = self.box_pixel(v, 0, 0);
                c.block(px, py, BOX_ZOOM, self.scale.colour(sc));
            }
        }
        for y in 0..h {
            let t = 1.0 - 2.0 * (f64::from(y) + 0.5) / f64::from(h);
            let colour = self.scale.colour(t * self.scale.bound);
            for x in bar_x..bar_x + SCALE_BAR_WIDTH {
                c.img.put_pixel(x, y, Rgb(colour));
            }
        }
        let tiles = vec![Tile {
            row: 0,
            column: 0,
            visit_day: self.subject.visits[incidence_visit].day,
            sequence: None,
            overlay: Overlay::Score,
        }];
        (c, tiles)
    }
}

/// Per-visit, per-sequence grey windows of one subject.
pub fn subject_windows(subject: &SubjectRecord) -> Vec<[Window; 4]> {
    subject
        .visits
        .iter()
        .map(|v| Sequence::ALL.map(|s| Window::from_values(v.volumes[s].data())))
        .collect()
}

/// Renders the five item groups of one lesion into `dir`.
pub fn render_lesion(
    subject: &SubjectRecord,
    windows: &[[Window; 4]],
    lesion_id: u32,
    voxels: &[PanelVoxel],
    dir: &Path,
) -> Result<PanelBundle> {
    let scores: Vec<f64> = voxels.iter().filter_map(|v| v.score).collect();
    let scale = ScoreScale::from_scores(&scores).module("pipeline-cli")?;
    let abnormal: Vec<[usize; 3]> = voxels.iter().map(|v| v.voxel).collect();
    let z = select_slice(&abnormal).module("pipeline-cli")?;
    let dims = subject
        .visits
        .first()
        .map(|v| v.dims())
        .ok_or_else(|| Error::InvalidConfig(format!("subject {} has no visits", subject.subject_id)))?;
    let bbox = slice_box(&abnormal, z, dims, BOX_PADDING).module("pipeline-cli")?;
    let first_day = voxels.iter().map(|v| v.incidence_day).min().unwrap_or(0);
    let incidence_visit = subject.visits.iter().position(|v| v.day == first_day).unwrap_or(0);

    let view = LesionView {
        subject,
        windows,
        voxels,
        z,
        bbox,
        scale,
    };
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut images = Vec::new();
    for item in PanelItem::ALL {
        let (canvas, tiles) = match item {
            PanelItem::FullSlice => view.full_slice(incidence_visit),
            PanelItem::LongitudinalBox => view.longitudinal(false),
            PanelItem::Segmentation => view.segmentation(),
            PanelItem::ScoreMap => view.score_map(incidence_visit),
            PanelItem::ScoreOverlay => view.longitudinal(true),
        };
        let file = format!("{}_{}.png", item.number(), item.name());
        canvas.save(&dir.join(&file))?;
        images.push(PanelImage { item, file, tiles });
    }
    let bundle = PanelBundle {
        lesion: LesionKey {
            subject_id: subject.subject_id.clone(),
            lesion_id,
        },
        slice_z: z,
        bounding_box: bbox,
        images,
        score_lower: -scale.bound,
        score_upper: scale.bound,
    };
    write_json(&dir.join(BUNDLE_FILE), &bundle)?;
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelIndex {
    pub lesions: Vec<LesionKey>,
}

/// Panels for every lesion with at least one scored voxel, written under
/// `out/<subject>_L<lesion>/`.
pub fn render_panels(cohort: &Cohort, events: &[EventRow], scores: &[ScoreRow], out: &Path) -> Result<PanelIndex> {
    let mut by_lesion: BTreeMap<(&str, u32), Vec<PanelVoxel>> = BTreeMap::new();
    let mut score_of: BTreeMap<(&str, u32, u64), f64> = BTreeMap::new();
    for s in scores {
        score_of.insert((s.subject_id.as_str(), s.lesion_id, s.voxel_id), s.score_pc1);
    }
    for e in events {
        let Some(subject) = cohort.subject(&e.subject_id) else {
            continue;
        };
        let Some(dims) = subject.visits.first().map(|v| v.dims()) else {
            continue;
        };
        let id = dims.index(e.x, e.y, e.z) as u64;
        by_lesion.entry((e.subject_id.as_str(), e.lesion_id)).or_default().push(PanelVoxel {
            voxel: [e.x, e.y, e.z],
            incidence_day: e.incidence_day,
            is_lesion_tissue: e.is_lesion_tissue != 0,
            score: score_of.get(&(e.subject_id.as_str(), e.lesion_id, id)).copied(),
        });
    }
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let mut lesions = Vec::new();
    let mut windows: Option<(&str, Vec<[Window; 4]>)> = None;
    for ((sid, lid), voxels) in &by_lesion {
        if voxels.iter().all(|v| v.score.is_none()) {
            continue;
        }
        let subject = cohort.subject(sid).expect("subject checked above");
        if windows.as_ref().is_none_or(|(w, _)| w != sid) {
            windows = Some((sid, subject_windows(subject)));
        }
        let w = &windows.as_ref().expect("windows set above").1;
        let key = LesionKey {
            subject_id: sid.to_string(),
            lesion_id: *lid,
        };
        render_lesion(subject, w, *lid, voxels, &out.join(bundle_dir_name(&key)))?;
        lesions.push(key);
    }
    let index = PanelIndex { lesions };
    write_json(&out.join(INDEX_FILE), &index)?;
    Ok(index)
}
