//! Ground-truth masks from burst geometry.
//!
//! A pixel is marked for a class when one of that class's burst rectangles
//! covers at least half of the pixel's time-frequency cell. Overlaps are
//! resolved by [`Technology::priority`].

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::spectrogram::ImageGeometry;
use crate::waveforms::{BurstEvent, Technology};

/// Slack on the half-cell threshold so an edge landing exactly on a cell
/// midpoint counts as covered despite rounding.
const HALF_CELL: f64 = 0.5 - 1e-9;

/// Pixels marked for one class, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    pub technology: Technology,
    pub marked: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMask {
    pub geometry: ImageGeometry,
    pub codes: Vec<u8>,
}

impl LabelMask {
    pub fn new(geometry: ImageGeometry, codes: Vec<u8>) -> Result<Self> {
        if codes.len() != geometry.len() {
            return param(format!(
                "mask has {} codes, geometry needs {}",
                codes.len(),
                geometry.len()
            ));
        }
        if let Some(bad) = codes.iter().find(|&&c| Technology::from_code(c).is_none()) {
            return param(format!("illegal class code {bad}"));
        }
        Ok(LabelMask { geometry, codes })
    }

    pub fn filled(geometry: ImageGeometry, tech: Technology) -> Self {
        LabelMask {
            geometry,
            codes: vec![tech.code(); geometry.len()],
        }
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.codes[row * self.geometry.cols + col]
    }

    pub fn class_at(&self, row: usize, col: usize) -> Technology {
        Technology::from_code(self.get(row, col)).unwrap_or(Technology::Unknown)
    }

    /// Iterator over pixel classes, row-major.
    pub fn classes(&self) -> impl Iterator<Item = Technology> + '_ {
        self.codes
            .iter()
            .map(|&c| Technology::from_code(c).unwrap_or(Technology::Unknown))
    }

    /// Pixel count per class index.
    pub fn histogram(&self) -> [usize; 5] {
        let mut h = [0; 5];
        for t in self.classes() {
            h[t.index()] += 1;
        }
        h
    }

    /// Distinct codes present, ascending.
    pub fn codes_present(&self) -> Vec<u8> {
        Technology::ALL
            .iter()
            .zip(self.histogram())
            .filter(|(_, n)| *n > 0)
            .map(|(t, _)| t.code())
            .collect()
    }
}

/// Length of `[a0, a1) ∩ [b0, b1)`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Mark every cell at least half covered by an event of the same class.
/// Returns one mask per transmitting technology.
pub fn rasterize(events: &[BurstEvent], geom: &ImageGeometry) -> Vec<ClassMask> {
    let mut out: Vec<ClassMask> = Technology::TRANSMITTERS
        .iter()
        .map(|&technology| ClassMask {
            technology,
            marked: vec![false; geom.len()],
        })
        .collect();

    for ev in events {
        let Some(mask) = out.iter_mut().find(|m| m.technology == ev.technology) else {
            continue;
        };
        let col_cover: Vec<(usize, f64)> = (0..geom.cols)
            .filter_map(|c| {
                let (t0, t1) = geom.col_interval(c);
                let frac = overlap(t0, t1, ev.t_start, ev.t_end) / geom.col_width;
                (frac > 0.0).then_some((c, frac))
            })
            .collect();
        for r in 0..geom.rows {
            let (f0, f1) = geom.row_band(r);
            let row_frac = overlap(f0, f1, ev.f_low, ev.f_high) / geom.row_height;
            if row_frac <= 0.0 {
                continue;
            }
            for &(c, col_frac) in &col_cover {
                if row_frac * col_frac >= HALF_CELL {
                    mask.marked[r * geom.cols + c] = true;
                }
            }
        }
    }
    out
}

/// Resolve per-class masks to a single class code per pixel; the highest
/// priority marking class wins and unmarked pixels are Unknown.
pub fn merge_priority(geom: &ImageGeometry, masks: &[ClassMask]) -> Result<LabelMask> {
    if let Some(bad) = masks.iter().find(|m| m.marked.len() != geom.len()) {
        return param(format!(
            "{} mask has {} pixels, expected {}",
            bad.technology,
            bad.marked.len(),
            geom.len()
        ));
    }
    let codes = (0..geom.len())
        .map(|i| {
            masks
                .iter()
                .filter(|m| m.marked[i])
                .map(|m| m.technology)
                .max_by_key(|t| t.priority())
                .unwrap_or(Technology::Unknown)
                .code()
        })
        .collect();
    Ok(LabelMask {
        geometry: *geom,
        codes,
    })
}

/// `merge_priority(rasterize(events))`.
pub fn label(events: &[BurstEvent], geom: &ImageGeometry) -> LabelMask {
    merge_priority(geom, &rasterize(events, geom)).expect("rasterize output matches its geometry")
}
