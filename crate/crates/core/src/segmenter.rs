//! Reference segmenter without learned parameters.
//!
//! Otsu threshold, 8-connected components, then each component is
//! matched against nominal burst footprints. A matched component is
//! painted as its columns times the signature's nominal bandwidth,
//! centered on the component; unmatched components wider than 10 MHz are
//! painted as WLAN pixel by pixel, the rest are left Unknown.
//!
//! Only the binarized image is used after thresholding, so the output is
//! unchanged by any monotone intensity map that keeps the binarization.

use image::{GrayImage, Luma};
use imageproc::contrast::otsu_level;
use imageproc::region_labelling::{connected_components, Connectivity};
use serde::{Deserialize, Serialize};

use crate::labeling::LabelMask;
use crate::spectrogram::{ImageGeometry, SpectrogramImage};
use crate::waveforms::{
    Technology, BLUETOOTH_BANDWIDTH, BLUETOOTH_SLOT, SMARTBAN_BANDWIDTH, SMARTBAN_SLOT, WLAN_BANDWIDTH,
    ZIGBEE_BANDWIDTH,
};
use crate::TIME_SPAN;

/// Components narrower than this that match no signature stay Unknown.
pub const WIDE_FALLBACK_HZ: f64 = 10e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub technology: Technology,
    pub nominal_bandwidth: f64,
    pub nominal_duration: f64,
    /// Relative half-widths of the acceptance box, in (0, 1].
    pub tolerance_bw: f64,
    pub tolerance_dur: f64,
}

impl ClassSignature {
    pub fn contains(&self, bandwidth: f64, duration: f64) -> bool {
        let within = |x: f64, nominal: f64, tol: f64| (x - nominal).abs() <= tol * nominal;
        within(bandwidth, self.nominal_bandwidth, self.tolerance_bw)
            && within(duration, self.nominal_duration, self.tolerance_dur)
    }

    fn bounds(&self) -> [(f64, f64); 2] {
        let b = self.nominal_bandwidth;
        let d = self.nominal_duration;
        [
            (b * (1.0 - self.tolerance_bw), b * (1.0 + self.tolerance_bw)),
            (d * (1.0 - self.tolerance_dur), d * (1.0 + self.tolerance_dur)),
        ]
    }

    /// Whether the two acceptance boxes intersect.
    pub fn overlaps(&self, other: &ClassSignature) -> bool {
        let [a_bw, a_dur] = self.bounds();
        let [b_bw, b_dur] = other.bounds();
        let meet = |a: (f64, f64), b: (f64, f64)| a.0 <= b.1 && b.0 <= a.1;
        meet(a_bw, b_bw) && meet(a_dur, b_dur)
    }
}

fn signature(technology: Technology, bw: f64, dur: f64, tol_bw: f64, tol_dur: f64) -> ClassSignature {
    ClassSignature {
        technology,
        nominal_bandwidth: bw,
        nominal_duration: dur,
        tolerance_bw: tol_bw,
        tolerance_dur: tol_dur,
    }
}

/// Footprints of every slot count and packet train the generators emit.
/// Bluetooth and SmartBAN look alike in frequency, so their duration
/// boxes are kept disjoint.
pub fn default_signatures() -> Vec<ClassSignature> {
    use Technology::*;
    vec![
        signature(Bluetooth, BLUETOOTH_BANDWIDTH, BLUETOOTH_SLOT, 1.0, 0.3),
        signature(Bluetooth, BLUETOOTH_BANDWIDTH, 3.0 * BLUETOOTH_SLOT, 1.0, 0.15),
        signature(Bluetooth, BLUETOOTH_BANDWIDTH, 5.0 * BLUETOOTH_SLOT, 1.0, 0.08),
        signature(SmartBan, SMARTBAN_BANDWIDTH, SMARTBAN_SLOT, 1.0, 0.25),
        signature(SmartBan, SMARTBAN_BANDWIDTH, 3.0 * SMARTBAN_SLOT, 1.0, 0.08),
        signature(SmartBan, SMARTBAN_BANDWIDTH, 5.0 * SMARTBAN_SLOT, 1.0, 0.15),
        signature(Zigbee, ZIGBEE_BANDWIDTH, TIME_SPAN, 0.6, 0.15),
        signature(Wlan, WLAN_BANDWIDTH, TIME_SPAN, 0.5, 0.15),
    ]
}

/// Measured footprint of one connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Columns holding at least one pixel, ascending.
    pub columns: Vec<usize>,
    pub pixels: Vec<(usize, usize)>,
    /// Median over columns of the occupied row span, Hz.
    pub bandwidth: f64,
    /// Column span, seconds.
    pub duration: f64,
    /// Median over columns of the row-span midpoint.
    pub center_row: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn measure(pixels: Vec<(usize, usize)>, geom: &ImageGeometry) -> Component {
    let mut span = vec![(usize::MAX, 0usize); geom.cols];
    for &(r, c) in &pixels {
        span[c] = (span[c].0.min(r), span[c].1.max(r));
    }
    let columns: Vec<usize> = (0..geom.cols).filter(|&c| span[c].0 != usize::MAX).collect();
    let mut heights: Vec<f64> = columns.iter().map(|&c| (span[c].1 - span[c].0 + 1) as f64).collect();
    let mut centers: Vec<f64> = columns.iter().map(|&c| 0.5 * (span[c].0 + span[c].1) as f64).collect();
    let first = columns[0];
    let last = *columns.last().unwrap();
    Component {
        bandwidth: median(&mut heights) * geom.row_height,
        duration: (last - first + 1) as f64 * geom.col_width,
        center_row: median(&mut centers),
        columns,
        pixels,
    }
}

/// Otsu-binarize and split into 8-connected components.
pub fn components(img: &SpectrogramImage) -> Vec<Component> {
    let geom = &img.geometry;
    let quantized = GrayImage::from_fn(geom.cols as u32, geom.rows as u32, |x, y| {
        let p = img.get(y as usize, x as usize).clamp(0.0, 1.0);
        Luma([(p * 255.0).round() as u8])
    });
    let level = otsu_level(&quantized);
    let binary = GrayImage::from_fn(geom.cols as u32, geom.rows as u32, |x, y| {
        Luma([if quantized.get_pixel(x, y)[0] > level { 255 } else { 0 }])
    });
    let labels = connected_components(&binary, Connectivity::Eight, Luma([0u8]));
    let count = labels.pixels().map(|p| p[0]).max().unwrap_or(0) as usize;
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
    for (x, y, p) in labels.enumerate_pixels() {
        if p[0] > 0 {
            groups[p[0] as usize - 1].push((y as usize, x as usize));
        }
    }
    groups.into_iter().filter(|g| !g.is_empty()).map(|g| measure(g, geom)).collect()
}

/// Highest-priority signature whose box contains the measurement.
pub fn classify(component: &Component, signatures: &[ClassSignature]) -> Option<ClassSignature> {
    signatures
        .iter()
        .filter(|s| s.contains(component.bandwidth, component.duration))
        .max_by_key(|s| s.technology.priority())
        .copied()
}

fn paint(codes: &mut [u8], cols: usize, r: usize, c: usize, tech: Technology) {
    let cell = &mut codes[r * cols + c];
    let current = Technology::from_code(*cell).unwrap_or(Technology::Unknown);
    if tech.priority() > current.priority() {
        *cell = tech.code();
    }
}

pub fn segment(img: &SpectrogramImage, signatures: &[ClassSignature]) -> LabelMask {
    let geom = img.geometry;
    let mut codes = vec![Technology::Unknown.code(); geom.len()];
    for comp in components(img) {
        match classify(&comp, signatures) {
            Some(sig) => {
                let rows = (sig.nominal_bandwidth / geom.row_height).round().max(1.0);
                let top = (comp.center_row - (rows - 1.0) / 2.0).round();
                let top = top.clamp(0.0, (geom.rows as f64 - rows).max(0.0)) as usize;
                let bottom = (top + rows as usize).min(geom.rows);
                for &c in &comp.columns {
                    for r in top..bottom {
                        paint(&mut codes, geom.cols, r, c, sig.technology);
                    }
                }
            }
            None if comp.bandwidth > WIDE_FALLBACK_HZ => {
                for &(r, c) in &comp.pixels {
                    paint(&mut codes, geom.cols, r, c, Technology::Wlan);
                }
            }
            None => {}
        }
    }
    LabelMask { geometry: geom, codes }
}

/// Most frequent non-Unknown class of a mask, or Unknown if it has none.
pub fn dominant_class(mask: &LabelMask) -> Technology {
    let hist = mask.histogram();
    Technology::TRANSMITTERS
        .iter()
        .copied()
        .filter(|t| hist[t.index()] > 0)
        .max_by_key(|t| (hist[t.index()], t.priority()))
        .unwrap_or(Technology::Unknown)
}
