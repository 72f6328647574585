//! Geometry and colour rules for lesion review panels. Pixel encoding lives
//! in the IO crate; everything here is a pure function of masks and values.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantile;
use crate::volume::Dims;

/// The five item groups shown to a rater for each lesion, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelItem {
    FullSlice,
    LongitudinalBox,
    Segmentation,
    ScoreMap,
    ScoreOverlay,
}

impl PanelItem {
    pub const ALL: [PanelItem; 5] = [
        PanelItem::FullSlice,
        PanelItem::LongitudinalBox,
        PanelItem::Segmentation,
        PanelItem::ScoreMap,
        PanelItem::ScoreOverlay,
    ];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            PanelItem::FullSlice => "full_slice",
            PanelItem::LongitudinalBox => "longitudinal_box",
            PanelItem::Segmentation => "segmentation",
            PanelItem::ScoreMap => "score_map",
            PanelItem::ScoreOverlay => "score_overlay",
        }
    }
}

pub const BOX_PADDING: usize = 3;
pub const WINDOW_PERCENTILES: (f64, f64) = (0.02, 0.98);
/// Colour-scale half-width used when every score is zero.
pub const FLAT_SCALE_BOUND: f64 = 1.0;

/// Axial slice with the most abnormal voxels; ties go to the lowest z.
pub fn select_slice(voxels: &[[usize; 3]]) -> Result<usize> {
    let top = voxels.iter().map(|v| v[2]).max().ok_or(Error::NoScoredVoxels)?;
    let mut counts = alloc::vec![0usize; top + 1];
    for v in voxels {
        counts[v[2]] += 1;
    }
    let best = counts.iter().copied().max().unwrap_or(0);
    Ok(counts.iter().position(|&c| c == best).unwrap_or(0))
}

/// Inclusive in-plane box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

/// Box around the voxels on slice `z`, padded and clipped to the grid.
pub fn slice_box(voxels: &[[usize; 3]], z: usize, dims: Dims, pad: usize) -> Result<BoundingBox> {
    let on_slice: Vec<&[usize; 3]> = voxels.iter().filter(|v| v[2] == z).collect();
    if on_slice.is_empty() {
        return Err(Error::NoScoredVoxels);
    }
    let x0 = on_slice.iter().map(|v| v[0]).min().unwrap_or(0);
    let x1 = on_slice.iter().map(|v| v[0]).max().unwrap_or(0);
    let y0 = on_slice.iter().map(|v| v[1]).min().unwrap_or(0);
    let y1 = on_slice.iter().map(|v| v[1]).max().unwrap_or(0);
    Ok(BoundingBox {
        x0: x0.saturating_sub(pad),
        x1: (x1 + pad).min(dims.nx - 1),
        y0: y0.saturating_sub(pad),
        y1: (y1 + pad).min(dims.ny - 1),
    })
}

/// Grey-level window from the 2nd and 98th percentiles of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub low: f64,
    pub high: f64,
}

impl Window {
    pub fn from_values(values: &[f32]) -> Window {
        let v: Vec<f64> = values.iter().map(|&x| f64::from(x)).filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Window { low: 0.0, high: 1.0 };
        }
        let low = quantile(&v, WINDOW_PERCENTILES.0);
        let high = quantile(&v, WINDOW_PERCENTILES.1);
        Window { low, high }
    }

    pub fn grey(&self, value: f64) -> u8 {
        if self.high <= self.low {
            return if value < self.low { 0 } else { 255 };
        }
        let t = ((value - self.low) / (self.high - self.low)).clamp(0.0, 1.0);
        libm::round(t * 255.0) as u8
    }
}

/// Symmetric diverging scale about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreScale {
    pub bound: f64,
}

impl ScoreScale {
    pub fn from_scores(scores: &[f64]) -> Result<ScoreScale> {
        if scores.is_empty() {
            return Err(Error::NoScoredVoxels);
        }
        let m = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        Ok(ScoreScale {
            bound: if m > 0.0 && m.is_finite() { m } else { FLAT_SCALE_BOUND },
        })
    }

    /// Blue for negative, white at zero, red for positive.
    pub fn colour(&self, score: f64) -> [u8; 3] {
        let t = (score / self.bound).clamp(-1.0, 1.0);
        let fade = |t: f64| libm::round(255.0 * (1.0 - t.abs())) as u8;
        if t >= 0.0 {
            [255, fade(t), fade(t)]
        } else {
            [fade(t), fade(t), 255]
        }
    }
}
