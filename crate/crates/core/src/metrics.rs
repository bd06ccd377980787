//! Segmentation scores computed from a 5x5 confusion matrix, plus a
//! tolerance-based boundary F1.
//!
//! Per-class ratios are `None` when their denominator is zero; such
//! classes are left out of the means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::labeling::LabelMask;
use crate::waveforms::Technology;

pub const CLASS_COUNT: usize = Technology::ALL.len();
pub const DEFAULT_BF_TOLERANCE: usize = 2;

/// `counts[true][predicted]`, indexed by [`Technology::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASS_COUNT]; CLASS_COUNT],
}

impl ConfusionMatrix {
    pub fn from_codes(pred: &[u8], gt: &[u8]) -> Result<Self> {
        if pred.len() != gt.len() {
            return param(format!(
                "prediction has {} pixels, ground truth {}",
                pred.len(),
                gt.len()
            ));
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &g) in pred.iter().zip(gt) {
            let (Some(p), Some(g)) = (Technology::from_code(p), Technology::from_code(g)) else {
                return param(format!("illegal class code in pair ({p}, {g})"));
            };
            cm.counts[g.index()][p.index()] += 1;
        }
        Ok(cm)
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASS_COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_positives(&self, c: Technology) -> u64 {
        self.counts[c.index()][c.index()]
    }

    pub fn false_positives(&self, c: Technology) -> u64 {
        let j = c.index();
        (0..CLASS_COUNT).map(|i| self.counts[i][j]).sum::<u64>() - self.counts[j][j]
    }

    pub fn false_negatives(&self, c: Technology) -> u64 {
        let i = c.index();
        self.counts[i].iter().sum::<u64>() - self.counts[i][i]
    }

    /// Ground-truth pixel count of `c`.
    pub fn support(&self, c: Technology) -> u64 {
        self.counts[c.index()].iter().sum()
    }
}

pub fn confusion(pred: &LabelMask, gt: &LabelMask) -> Result<ConfusionMatrix> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return param(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            pred.rows(),
            pred.cols(),
            gt.rows(),
            gt.cols()
        ));
    }
    ConfusionMatrix::from_codes(&pred.codes, &gt.codes)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Global pixel accuracy, `trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    ratio(cm.trace(), cm.total()).ok_or(Error::Undefined("accuracy of an empty confusion matrix"))
}

/// One-vs-rest accuracy of class `c`, `(TP + TN) / total`.
pub fn class_accuracy(cm: &ConfusionMatrix, c: Technology) -> Result<f64> {
    let total = cm.total();
    let wrong = cm.false_positives(c) + cm.false_negatives(c);
    ratio(total - wrong, total).ok_or(Error::Undefined("accuracy of an empty confusion matrix"))
}

pub fn iou(cm: &ConfusionMatrix, c: Technology) -> Option<f64> {
    let tp = cm.true_positives(c);
    ratio(tp, tp + cm.false_positives(c) + cm.false_negatives(c))
}

pub fn dice(cm: &ConfusionMatrix, c: Technology) -> Option<f64> {
    let tp = cm.true_positives(c);
    ratio(2 * tp, 2 * tp + cm.false_positives(c) + cm.false_negatives(c))
}

pub fn precision(cm: &ConfusionMatrix, c: Technology) -> Option<f64> {
    let tp = cm.true_positives(c);
    ratio(tp, tp + cm.false_positives(c))
}

pub fn recall(cm: &ConfusionMatrix, c: Technology) -> Option<f64> {
    let tp = cm.true_positives(c);
    ratio(tp, tp + cm.false_negatives(c))
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn mean_iou(cm: &ConfusionMatrix) -> Option<f64> {
    mean_defined(Technology::ALL.iter().map(|&c| iou(cm, c)))
}

pub fn mean_dice(cm: &ConfusionMatrix) -> Option<f64> {
    mean_defined(Technology::ALL.iter().map(|&c| dice(cm, c)))
}

/// Support-weighted mean of per-class F1 over classes present in the
/// ground truth.
pub fn weighted_f1(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Undefined("weighted F1 of an empty confusion matrix"));
    }
    Ok(Technology::ALL
        .iter()
        .filter(|&&c| cm.support(c) > 0)
        .map(|&c| {
            // F1 = 2PR/(P+R) = 2TP/(2TP+FP+FN), defined whenever support > 0
            cm.support(c) as f64 / total as f64 * dice(cm, c).unwrap_or(0.0)
        })
        .sum())
}

/// Pixels of class `c` with a 4-neighbor of another class. The image
/// border does not count as a class change.
fn boundary(mask: &LabelMask, c: u8) -> Vec<bool> {
    let (rows, cols) = (mask.rows(), mask.cols());
    let mut out = vec![false; rows * cols];
    for r in 0..rows {
        for col in 0..cols {
            if mask.get(r, col) != c {
                continue;
            }
            let differs = (r > 0 && mask.get(r - 1, col) != c)
                || (r + 1 < rows && mask.get(r + 1, col) != c)
                || (col > 0 && mask.get(r, col - 1) != c)
                || (col + 1 < cols && mask.get(r, col + 1) != c);
            out[r * cols + col] = differs;
        }
    }
    out
}

/// Square (Chebyshev) dilation by `radius`, done as two 1-D passes.
fn dilate(set: &[bool], rows: usize, cols: usize, radius: usize) -> Vec<bool> {
    let mut horizontal = vec![false; set.len()];
    for r in 0..rows {
        for c in 0..cols {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(cols - 1);
            horizontal[r * cols + c] = set[r * cols + lo..=r * cols + hi].contains(&true);
        }
    }
    let mut out = vec![false; set.len()];
    for c in 0..cols {
        for r in 0..rows {
            let lo = r.saturating_sub(radius);
            let hi = (r + radius).min(rows - 1);
            out[r * cols + c] = (lo..=hi).any(|k| horizontal[k * cols + c]);
        }
    }
    out
}

/// Fraction of `set` pixels that fall inside `reach`.
fn matched_fraction(set: &[bool], reach: &[bool]) -> Option<f64> {
    let n = set.iter().filter(|&&b| b).count();
    let hit = set.iter().zip(reach).filter(|(&s, &r)| s && r).count();
    ratio(hit as u64, n as u64)
}

/// Boundary F1 of one class. Both boundaries empty scores 1, exactly one
/// empty scores 0.
pub fn class_boundary_f1(pred: &LabelMask, gt: &LabelMask, c: Technology, tolerance: usize) -> Result<f64> {
    if (pred.rows(), pred.cols()) != (gt.rows(), gt.cols()) {
        return param("mask sizes differ");
    }
    let (rows, cols) = (gt.rows(), gt.cols());
    let bp = boundary(pred, c.code());
    let bg = boundary(gt, c.code());
    let precision = matched_fraction(&bp, &dilate(&bg, rows, cols, tolerance));
    let recall = matched_fraction(&bg, &dilate(&bp, rows, cols, tolerance));
    Ok(match (precision, recall) {
        (None, None) => 1.0,
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    })
}

/// Mean per-class boundary F1 over classes present in either mask, with
/// matches allowed up to `tolerance` pixels (Chebyshev distance).
pub fn boundary_f1(pred: &LabelMask, gt: &LabelMask, tolerance: usize) -> Result<f64> {
    if tolerance == 0 {
        return param("boundary tolerance must be at least 1 pixel");
    }
    let cm = confusion(pred, gt)?;
    let present: Vec<Technology> = Technology::ALL
        .iter()
        .copied()
        .filter(|&c| cm.support(c) > 0 || cm.false_positives(c) > 0)
        .collect();
    let mut sum = 0.0;
    for &c in &present {
        sum += class_boundary_f1(pred, gt, c, tolerance)?;
    }
    if present.is_empty() {
        return Err(Error::Undefined("boundary F1 of empty masks"));
    }
    Ok(sum / present.len() as f64)
}

/// Scores for one prediction, or an aggregate over many.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class_accuracy: BTreeMap<Technology, f64>,
    pub per_class_iou: BTreeMap<Technology, f64>,
    pub per_class_dice: BTreeMap<Technology, f64>,
    pub mean_iou: Option<f64>,
    pub mean_dice: Option<f64>,
    pub weighted_f1: f64,
    pub boundary_f1: Option<f64>,
    pub bf_tolerance: usize,
}

impl SegMetrics {
    /// Confusion-derived scores; `boundary_f1` is supplied by the caller
    /// since it cannot be recovered from counts.
    pub fn from_confusion(cm: ConfusionMatrix, boundary_f1: Option<f64>, bf_tolerance: usize) -> Result<Self> {
        let per_class = |f: &dyn Fn(Technology) -> Option<f64>| {
            Technology::ALL
                .iter()
                .filter_map(|&c| f(c).map(|v| (c, v)))
                .collect::<BTreeMap<_, _>>()
        };
        Ok(SegMetrics {
            accuracy: accuracy(&cm)?,
            per_class_accuracy: per_class(&|c| class_accuracy(&cm, c).ok()),
            per_class_iou: per_class(&|c| iou(&cm, c)),
            per_class_dice: per_class(&|c| dice(&cm, c)),
            mean_iou: mean_iou(&cm),
            mean_dice: mean_dice(&cm),
            weighted_f1: weighted_f1(&cm)?,
            boundary_f1,
            bf_tolerance,
            confusion: cm,
        })
    }

    pub fn evaluate(pred: &LabelMask, gt: &LabelMask, bf_tolerance: usize) -> Result<Self> {
        let cm = confusion(pred, gt)?;
        let bf = boundary_f1(pred, gt, bf_tolerance)?;
        SegMetrics::from_confusion(cm, Some(bf), bf_tolerance)
    }

    /// Pooled confusion matrix over `items`; boundary F1 is the mean of
    /// the per-item values that are defined.
    pub fn aggregate<'a>(items: impl IntoIterator<Item = &'a SegMetrics>, bf_tolerance: usize) -> Result<Self> {
        let mut cm = ConfusionMatrix::default();
        let mut bf = Vec::new();
        for m in items {
            cm.add(&m.confusion);
            bf.extend(m.boundary_f1);
        }
        let bf_mean = (!bf.is_empty()).then(|| bf.iter().sum::<f64>() / bf.len() as f64);
        SegMetrics::from_confusion(cm, bf_mean, bf_tolerance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrogram::ImageGeometry;

    fn geom(rows: usize, cols: usize) -> ImageGeometry {
        ImageGeometry {
            rows,
            cols,
            bins_per_row: 1,
            frames_per_col: 1,
            f_low: 0.0,
            row_height: 1.0,
            t_start: 0.0,
            col_width: 1.0,
        }
    }

    fn mask(rows: usize, cols: usize, codes: Vec<u8>) -> LabelMask {
        LabelMask::new(geom(rows, cols), codes).unwrap()
    }

    fn toy() -> ConfusionMatrix {
        let gt = [128, 128, 16, 0];
        let pred = [128, 16, 16, 0];
        ConfusionMatrix::from_codes(&pred, &gt).unwrap()
    }

    #[test]
    fn toy_counts() {
        let cm = toy();
        let sb = Technology::SmartBan.index();
        let wl = Technology::Wlan.index();
        assert_eq!(cm.counts[sb][sb], 1);
        assert_eq!(cm.counts[sb][wl], 1);
        assert_eq!(cm.counts[wl][wl], 1);
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn toy_scores() {
        let cm = toy();
        assert_eq!(accuracy(&cm).unwrap(), 0.75);
        assert_eq!(iou(&cm, Technology::SmartBan), Some(0.5));
        assert!((dice(&cm, Technology::SmartBan).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((weighted_f1(&cm).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(iou(&cm, Technology::Zigbee), None);
        // mean over Unknown (1), WLAN (1/2), SmartBAN (1/2)
        assert!((mean_iou(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_all_wrong() {
        let m = mask(16, 16, (0..256).map(|i| [0, 16, 32, 64, 128][i % 5]).collect());
        let cm = confusion(&m, &m).unwrap();
        assert_eq!(cm.trace(), 256);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
        assert_eq!(weighted_f1(&cm).unwrap(), 1.0);
        assert_eq!(mean_iou(&cm), Some(1.0));

        let gt = LabelMask::filled(geom(16, 16), Technology::SmartBan);
        let pred = LabelMask::filled(geom(16, 16), Technology::Unknown);
        let cm = confusion(&pred, &gt).unwrap();
        assert_eq!(cm.counts[Technology::SmartBan.index()][0], 256);
        assert_eq!(accuracy(&cm).unwrap(), 0.0);
    }

    #[test]
    fn full_size_perfect_trace() {
        let m = LabelMask::filled(geom(256, 256), Technology::Wlan);
        assert_eq!(confusion(&m, &m).unwrap().trace(), 65_536);
    }

    #[test]
    fn empty_matrix_is_undefined() {
        let cm = ConfusionMatrix::default();
        assert!(matches!(accuracy(&cm), Err(Error::Undefined(_))));
        assert!(weighted_f1(&cm).is_err());
        assert_eq!(mean_iou(&cm), None);
    }

    #[test]
    fn size_mismatch() {
        let a = LabelMask::filled(geom(4, 4), Technology::Wlan);
        let b = LabelMask::filled(geom(4, 5), Technology::Wlan);
        assert!(confusion(&a, &b).is_err());
    }

    fn square(offset: usize) -> LabelMask {
        let n = 64;
        let codes = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                if (20 + offset..40 + offset).contains(&r) && (20..40).contains(&c) {
                    128
                } else {
                    0
                }
            })
            .collect();
        mask(n, n, codes)
    }

    #[test]
    fn boundary_f1_examples() {
        let gt = square(0);
        assert_eq!(boundary_f1(&gt, &gt, 2).unwrap(), 1.0);
        assert_eq!(boundary_f1(&square(1), &gt, 2).unwrap(), 1.0);
        assert!(boundary_f1(&square(5), &gt, 2).unwrap() < 1.0);
        assert!(boundary_f1(&gt, &gt, 0).is_err());
    }

    #[test]
    fn boundary_f1_shift_oracle() {
        let gt = square(0);
        let pred = square(5);
        let f = class_boundary_f1(&pred, &gt, Technology::SmartBan, 2).unwrap();
        let brute = brute_boundary_f1(&pred, &gt, 128, 2);
        assert!((f - brute).abs() < 1e-12, "{f} vs {brute}");
        assert!(f < 1.0 && f > 0.0);
    }

    fn brute_boundary(m: &LabelMask, c: u8) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..m.rows() {
            for col in 0..m.cols() {
                if m.get(r, col) != c {
                    continue;
                }
                let neighbors = [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)];
                if neighbors.iter().any(|(dr, dc)| {
                    let (rr, cc) = (r as i64 + dr, col as i64 + dc);
                    rr >= 0
                        && cc >= 0
                        && (rr as usize) < m.rows()
                        && (cc as usize) < m.cols()
                        && m.get(rr as usize, cc as usize) != c
                }) {
                    out.push((r, col));
                }
            }
        }
        out
    }

    fn brute_boundary_f1(pred: &LabelMask, gt: &LabelMask, c: u8, tol: usize) -> f64 {
        let bp = brute_boundary(pred, c);
        let bg = brute_boundary(gt, c);
        let near = |a: &(usize, usize), set: &[(usize, usize)]| {
            set.iter().any(|b| a.0.abs_diff(b.0).max(a.1.abs_diff(b.1)) <= tol)
        };
        if bp.is_empty() && bg.is_empty() {
            return 1.0;
        }
        if bp.is_empty() || bg.is_empty() {
            return 0.0;
        }
        let p = bp.iter().filter(|a| near(a, &bg)).count() as f64 / bp.len() as f64;
        let r = bg.iter().filter(|a| near(a, &bp)).count() as f64 / bg.len() as f64;
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    #[test]
    fn boundary_f1_matches_brute_force_on_random_masks() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11);
        for _ in 0..50 {
            let codes: Vec<u8> = (0..16 * 16).map(|_| [0, 16, 32, 64, 128][rng.gen_range(0..5)]).collect();
            let codes2: Vec<u8> = (0..16 * 16).map(|_| [0, 16, 128][rng.gen_range(0..3)]).collect();
            let (a, b) = (mask(16, 16, codes), mask(16, 16, codes2));
            for tol in 1..4 {
                for c in Technology::ALL {
                    let fast = class_boundary_f1(&a, &b, c, tol).unwrap();
                    let slow = brute_boundary_f1(&a, &b, c.code(), tol);
                    assert!((fast - slow).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uniform_masks_have_perfect_boundary() {
        let m = LabelMask::filled(geom(8, 8), Technology::Wlan);
        assert_eq!(boundary_f1(&m, &m, 2).unwrap(), 1.0);
    }

    #[test]
    fn aggregate_pools_counts() {
        let a = mask(1, 4, vec![128, 128, 16, 0]);
        let b = mask(1, 4, vec![128, 16, 16, 0]);
        let m1 = SegMetrics::evaluate(&b, &a, 2).unwrap();
        let m2 = SegMetrics::evaluate(&a, &a, 2).unwrap();
        let agg = SegMetrics::aggregate([&m1, &m2], 2).unwrap();
        assert_eq!(agg.confusion.total(), 8);
        assert_eq!(agg.accuracy, 7.0 / 8.0);
    }

    #[test]
    fn seg_metrics_round_trip_json() {
        let m = SegMetrics::from_confusion(toy(), Some(0.5), 2).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: SegMetrics = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
