//! On-disk dataset format.
//!
//! ```text
//! {root}/manifest.json
//! {root}/{split}/{id:06}.img    256*256 little-endian f32, row-major
//! {root}/{split}/{id:06}.mask   256*256 u8 class codes, row-major
//! {root}/{split}/{id:06}.meta   JSON sidecar (seed, devices, bursts, config)
//! ```
//!
//! Rows run from the highest frequency (row 0) to the lowest, so frequency
//! ascends upward when the raster is drawn top-down; columns are time.
//! Prediction directories use the same layout with only `.mask` files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{io_err, Error, Result};
use crate::labeling::LabelMask;
use crate::metrics::SegMetrics;
use crate::scene::{DevicePlacement, RecordPlan, SceneRecord, Split};
use crate::spectrogram::{ImageGeometry, SpectrogramImage, StftConfig, DB_MAX, DB_MIN};
use crate::waveforms::{BurstEvent, Technology};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGE_EXT: &str = "img";
pub const MASK_EXT: &str = "mask";
pub const META_EXT: &str = "meta";

/// `{split}/{id:06}` relative to a dataset root, without extension.
pub fn record_stem(split: Split, id: u64) -> PathBuf {
    Path::new(split.name()).join(format!("{id:06}"))
}

fn with_ext(root: &Path, stem: &Path, ext: &str) -> PathBuf {
    root.join(stem).with_extension(ext)
}

/// JSON sidecar written next to every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub format_version: u32,
    pub id: u64,
    pub seed: u64,
    pub split: Split,
    pub pinned_distance: Option<f64>,
    pub devices: Vec<DevicePlacement>,
    pub events: Vec<BurstEvent>,
    pub geometry: ImageGeometry,
    pub config: SimConfig,
}

impl RecordMeta {
    pub fn plan(&self) -> RecordPlan {
        RecordPlan {
            id: self.id,
            seed: self.seed,
            split: self.split,
            devices: self.devices.clone(),
            pinned_distance: self.pinned_distance,
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: path.to_path_buf(),
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

/// Reject JSON without a supported `format_version` before decoding the
/// rest, so version errors are not masked by schema errors.
fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let value: serde_json::Value = read_json(path)?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            msg: "missing format_version".into(),
        })?;
    check_version(path, found.try_into().unwrap_or(u32::MAX))?;
    serde_json::from_value(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_image(img: &SpectrogramImage) -> Vec<u8> {
    img.pixels.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn decode_image(path: &Path, bytes: &[u8], geometry: ImageGeometry) -> Result<SpectrogramImage> {
    if bytes.len() != geometry.len() * 4 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("image has {} bytes, expected {}", bytes.len(), geometry.len() * 4),
        });
    }
    let pixels = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(SpectrogramImage {
        geometry,
        pixels,
        db_range: [DB_MIN, DB_MAX],
    })
}

pub fn read_mask(path: &Path, geometry: ImageGeometry) -> Result<LabelMask> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    LabelMask::new(geometry, bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn write_mask(path: &Path, mask: &LabelMask) -> Result<()> {
    write_file(path, &mask.codes)
}

/// Write the three files of one record under `root`.
pub fn write_record(record: &SceneRecord, cfg: &SimConfig, root: &Path) -> Result<()> {
    let stem = record_stem(record.split, record.id);
    write_file(&with_ext(root, &stem, IMAGE_EXT), &encode_image(&record.image))?;
    write_mask(&with_ext(root, &stem, MASK_EXT), &record.mask)?;
    let meta = RecordMeta {
        format_version: FORMAT_VERSION,
        id: record.id,
        seed: record.seed,
        split: record.split,
        pinned_distance: record.pinned_distance,
        devices: record.devices.clone(),
        events: record.events.clone(),
        geometry: record.image.geometry,
        config: cfg.clone(),
    };
    write_json(&with_ext(root, &stem, META_EXT), &meta)
}

pub fn read_meta(path: &Path) -> Result<RecordMeta> {
    read_versioned(path)
}

/// Load a record from any of its three files (the extension is replaced).
pub fn read_record(path: &Path) -> Result<(SceneRecord, RecordMeta)> {
    let meta = read_meta(&path.with_extension(META_EXT))?;
    let img_path = path.with_extension(IMAGE_EXT);
    let bytes = fs::read(&img_path).map_err(io_err(&img_path))?;
    let image = decode_image(&img_path, &bytes, meta.geometry)?;
    let mask = read_mask(&path.with_extension(MASK_EXT), meta.geometry)?;
    let record = SceneRecord {
        id: meta.id,
        seed: meta.seed,
        split: meta.split,
        devices: meta.devices.clone(),
        pinned_distance: meta.pinned_distance,
        image,
        mask,
        events: meta.events.clone(),
    };
    Ok((record, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub technology: Technology,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
    pub seed: u64,
    /// Record path relative to the root, without extension.
    pub path: String,
    pub classes: Vec<Technology>,
    pub devices: Vec<DeviceSummary>,
    pub pinned_distance: Option<f64>,
}

impl ManifestEntry {
    pub fn stem(&self) -> PathBuf {
        record_stem(self.split, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub record_count: usize,
    pub master_seed: u64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub stft: StftConfig,
    /// Class name to mask code.
    pub class_codes: BTreeMap<String, u8>,
    pub records: Vec<ManifestEntry>,
}

pub fn class_code_table() -> BTreeMap<String, u8> {
    Technology::ALL.iter().map(|t| (t.name().to_string(), t.code())).collect()
}

fn manifest_entry(plan: &RecordPlan) -> ManifestEntry {
    let mut classes: Vec<Technology> = plan.devices.iter().map(|d| d.technology).collect();
    classes.sort();
    classes.dedup();
    ManifestEntry {
        id: plan.id,
        split: plan.split,
        seed: plan.seed,
        path: record_stem(plan.split, plan.id).to_string_lossy().replace('\\', "/"),
        classes,
        devices: plan
            .devices
            .iter()
            .map(|d| DeviceSummary {
                technology: d.technology,
                distance: d.distance,
            })
            .collect(),
        pinned_distance: plan.pinned_distance,
    }
}

/// Render and write every planned record (in parallel), then the
/// manifest. Output bytes do not depend on scheduling.
pub fn write_dataset(plans: &[RecordPlan], master_seed: u64, cfg: &SimConfig, root: &Path) -> Result<DatasetManifest> {
    plans.par_iter().try_for_each(|plan| {
        let record = plan.render(cfg)?;
        write_record(&record, cfg, root)
    })?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        record_count: plans.len(),
        master_seed,
        image_rows: crate::IMAGE_SIZE,
        image_cols: crate::IMAGE_SIZE,
        stft: cfg.stft,
        class_codes: class_code_table(),
        records: plans.iter().map(manifest_entry).collect(),
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Read and check a manifest: version, class table, record count and the
/// presence of every record's files.
pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_versioned(&path)?;
    let bad = |msg: String| Error::Format {
        path: path.clone(),
        msg,
    };
    if manifest.class_codes != class_code_table() {
        return Err(bad(format!("unexpected class code table {:?}", manifest.class_codes)));
    }
    if manifest.record_count != manifest.records.len() {
        return Err(bad(format!(
            "record_count {} but {} entries",
            manifest.record_count,
            manifest.records.len()
        )));
    }
    for entry in &manifest.records {
        for ext in [IMAGE_EXT, MASK_EXT, META_EXT] {
            let file = with_ext(root, &entry.stem(), ext);
            if !file.is_file() {
                return Err(bad(format!("missing record file {}", file.display())));
            }
        }
    }
    Ok(manifest)
}

/// Metrics of one scored record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub id: u64,
    pub split: Split,
    pub pinned_distance: Option<f64>,
    pub metrics: SegMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceGroup {
    pub distance: f64,
    pub records: usize,
    pub metrics: SegMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub bf_tolerance: usize,
    pub aggregate: SegMetrics,
    pub by_split: BTreeMap<Split, SegMetrics>,
    /// Sweep datasets only, ascending distance.
    pub by_distance: Vec<DistanceGroup>,
    pub records: Vec<RecordMetrics>,
}

impl MetricsReport {
    pub fn build(records: Vec<RecordMetrics>, bf_tolerance: usize) -> Result<Self> {
        let aggregate = SegMetrics::aggregate(records.iter().map(|r| &r.metrics), bf_tolerance)?;
        let mut by_split = BTreeMap::new();
        for split in Split::ALL {
            let items: Vec<_> = records.iter().filter(|r| r.split == split).map(|r| &r.metrics).collect();
            if !items.is_empty() {
                by_split.insert(split, SegMetrics::aggregate(items, bf_tolerance)?);
            }
        }
        let mut distances: Vec<f64> = records.iter().filter_map(|r| r.pinned_distance).collect();
        distances.sort_by(f64::total_cmp);
        distances.dedup();
        let by_distance = distances
            .into_iter()
            .map(|distance| {
                let items: Vec<_> = records
                    .iter()
                    .filter(|r| r.pinned_distance == Some(distance))
                    .map(|r| &r.metrics)
                    .collect();
                Ok(DistanceGroup {
                    distance,
                    records: items.len(),
                    metrics: SegMetrics::aggregate(items, bf_tolerance)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(MetricsReport {
            format_version: FORMAT_VERSION,
            bf_tolerance,
            aggregate,
            by_split,
            by_distance,
            records,
        })
    }

    /// Plain-text summary of the aggregate and distance groups.
    pub fn summary(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let a = &self.aggregate;
        let mut out = format!(
            "records: {}\naccuracy: {:.4}\nmean IoU: {}\nmean Dice: {}\nweighted F1: {:.4}\nboundary F1 (tol {}): {}\n",
            self.records.len(),
            a.accuracy,
            fmt(a.mean_iou),
            fmt(a.mean_dice),
            a.weighted_f1,
            self.bf_tolerance,
            fmt(a.boundary_f1),
        );
        for t in Technology::ALL {
            out += &format!(
                "  {:<10} IoU {:>6}  Dice {:>6}\n",
                t.name(),
                fmt(a.per_class_iou.get(&t).copied()),
                fmt(a.per_class_dice.get(&t).copied()),
            );
        }
        for g in &self.by_distance {
            let sb = Technology::SmartBan;
            out += &format!(
                "  d = {:>5} m ({} records): accuracy {:.4}, SmartBAN IoU {}, Dice {}\n",
                g.distance,
                g.records,
                g.metrics.accuracy,
                fmt(g.metrics.per_class_iou.get(&sb).copied()),
                fmt(g.metrics.per_class_dice.get(&sb).copied()),
            );
        }
        out
    }
}

pub fn write_metrics_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(path, report)
}

pub fn read_metrics_report(path: &Path) -> Result<MetricsReport> {
    read_versioned(path)
}

/// Score every record of the dataset at `gt_root` against the masks under
/// `pred_root`. With `baseline`, the predictions are first produced by the
/// baseline segmenter from the ground-truth images and written to
/// `pred_root`.
pub fn evaluate_dataset(gt_root: &Path, pred_root: &Path, bf_tolerance: usize, baseline: bool) -> Result<MetricsReport> {
    let manifest = read_manifest(gt_root)?;
    let signatures = crate::segmenter::default_signatures();
    let records = manifest
        .records
        .par_iter()
        .map(|entry| {
            let stem = entry.stem();
            let meta = read_meta(&with_ext(gt_root, &stem, META_EXT))?;
            let gt = read_mask(&with_ext(gt_root, &stem, MASK_EXT), meta.geometry)?;
            let pred_path = with_ext(pred_root, &stem, MASK_EXT);
            let pred = if baseline {
                let img_path = with_ext(gt_root, &stem, IMAGE_EXT);
                let bytes = fs::read(&img_path).map_err(io_err(&img_path))?;
                let image = decode_image(&img_path, &bytes, meta.geometry)?;
                let pred = crate::segmenter::segment(&image, &signatures);
                write_mask(&pred_path, &pred)?;
                pred
            } else {
                read_mask(&pred_path, meta.geometry)?
            };
            Ok(RecordMetrics {
                id: entry.id,
                split: entry.split,
                pinned_distance: entry.pinned_distance,
                metrics: SegMetrics::evaluate(&pred, &gt, bf_tolerance)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::build(records, bf_tolerance)
}

/// Overlay colors: SmartBAN yellow, ZigBee water green, Bluetooth purple,
/// WLAN light blue.
pub fn overlay_color(tech: Technology) -> Option<[u8; 3]> {
    match tech {
        Technology::SmartBan => Some([255, 230, 0]),
        Technology::Zigbee => Some([0, 190, 160]),
        Technology::Bluetooth => Some([150, 60, 200]),
        Technology::Wlan => Some([150, 210, 255]),
        Technology::Unknown => None,
    }
}

/// Class outlines on a transparent background: every labeled pixel with
/// a 4-neighbor of another class.
pub fn overlay_rgba(mask: &LabelMask) -> image::RgbaImage {
    let (rows, cols) = (mask.rows(), mask.cols());
    image::RgbaImage::from_fn(cols as u32, rows as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        let code = mask.get(r, c);
        let edge = (r > 0 && mask.get(r - 1, c) != code)
            || (r + 1 < rows && mask.get(r + 1, c) != code)
            || (c > 0 && mask.get(r, c - 1) != code)
            || (c + 1 < cols && mask.get(r, c + 1) != code);
        match overlay_color(mask.class_at(r, c)) {
            Some([red, g, b]) if edge => image::Rgba([red, g, b, 255]),
            _ => image::Rgba([0, 0, 0, 0]),
        }
    })
}

/// Viridis rendering of the image, optionally with mask outlines, each
/// pixel drawn as a `scale x scale` block.
pub fn render_png(image: &SpectrogramImage, mask: Option<&LabelMask>, scale: u32) -> image::RgbImage {
    let scale = scale.max(1);
    let overlay = mask.map(overlay_rgba);
    let cols = image.cols() as u32;
    let rows = image.rows() as u32;
    image::RgbImage::from_fn(cols * scale, rows * scale, |x, y| {
        let (c, r) = (x / scale, y / scale);
        if let Some(px) = overlay.as_ref().map(|o| o.get_pixel(c, r)) {
            if px[3] > 0 {
                return image::Rgb([px[0], px[1], px[2]]);
            }
        }
        let v = image.get(r as usize, c as usize).clamp(0.0, 1.0);
        let colour = colorous::VIRIDIS.eval_continuous(f64::from(v));
        image::Rgb([colour.r, colour.g, colour.b])
    })
}

pub fn export_png(image: &SpectrogramImage, mask: Option<&LabelMask>, scale: u32, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    render_png(image, mask, scale)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ConfusionMatrix;

    fn geometry() -> ImageGeometry {
        ImageGeometry {
            rows: 256,
            cols: 256,
            bins_per_row: 16,
            frames_per_col: 40,
            f_low: -40e6 - 9765.625,
            row_height: 312_500.0,
            t_start: 50.0 / 80e6,
            col_width: 40.0 * 156.0 / 80e6,
        }
    }

    fn image(f: impl Fn(usize) -> f32) -> SpectrogramImage {
        SpectrogramImage {
            geometry: geometry(),
            pixels: (0..65_536).map(f).collect(),
            db_range: [DB_MIN, DB_MAX],
        }
    }

    #[test]
    fn image_codec_round_trip() {
        let img = image(|i| (i % 977) as f32 / 976.0);
        let bytes = encode_image(&img);
        assert_eq!(bytes.len(), 262_144);
        assert_eq!(&bytes[4..8], &img.pixels[1].to_le_bytes());
        assert_eq!(decode_image(Path::new("x"), &bytes, img.geometry).unwrap(), img);
        assert!(decode_image(Path::new("x"), &bytes[1..], img.geometry).is_err());
    }

    #[test]
    fn stems() {
        assert_eq!(record_stem(Split::Val, 42), Path::new("val/000042"));
        assert_eq!(record_stem(Split::Train, 1_234_567), Path::new("train/1234567"));
    }

    #[test]
    fn overlay_palette() {
        let codes = (0..65_536).map(|i| [0u8, 16, 32, 64, 128][(i / 256 / 40) % 5]).collect();
        let mask = LabelMask::new(geometry(), codes).unwrap();
        let overlay = overlay_rgba(&mask);
        let mut colours: Vec<[u8; 4]> = overlay.pixels().map(|p| p.0).collect();
        colours.sort();
        colours.dedup();
        assert_eq!(colours.len(), 5);
        assert!(colours.contains(&[0, 0, 0, 0]));
        for t in Technology::TRANSMITTERS {
            let [r, g, b] = overlay_color(t).unwrap();
            assert!(colours.contains(&[r, g, b, 255]));
        }
    }

    #[test]
    fn blank_image_is_uniform() {
        let png = render_png(&image(|_| 0.0), None, 1);
        let first = *png.get_pixel(0, 0);
        assert!(png.pixels().all(|p| *p == first));
        let lowest = colorous::VIRIDIS.eval_continuous(0.0);
        assert_eq!(first.0, [lowest.r, lowest.g, lowest.b]);
        assert_eq!(render_png(&image(|_| 0.0), None, 2).dimensions(), (512, 512));
    }

    #[test]
    fn report_groups_by_distance() {
        let cm = ConfusionMatrix::from_codes(&[0, 128], &[0, 128]).unwrap();
        let m = SegMetrics::from_confusion(cm, Some(1.0), 2).unwrap();
        let records = [1.0, 2.5, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &d)| RecordMetrics {
                id: i as u64,
                split: Split::Test,
                pinned_distance: Some(d),
                metrics: m.clone(),
            })
            .collect();
        let report = MetricsReport::build(records, 2).unwrap();
        assert_eq!(report.by_distance.len(), 2);
        assert_eq!(report.by_distance[0].records, 2);
        assert_eq!(report.aggregate.accuracy, 1.0);
        assert!(report.summary().contains("accuracy: 1.0000"));
    }
}
