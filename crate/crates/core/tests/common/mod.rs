//! Fixtures shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use bandscene::config::SimConfig;
use bandscene::labeling::LabelMask;
use bandscene::scene::{sample_device, DevicePlacement};
use bandscene::seed::{self, TAG_SCENARIO};
use bandscene::spectrogram::{ImageGeometry, StftConfig};
use bandscene::{Technology, IMAGE_SIZE, SAMPLE_RATE, TIME_SPAN};

/// Geometry of a full scene image.
pub fn scene_geometry() -> ImageGeometry {
    let n = (TIME_SPAN * SAMPLE_RATE).round() as usize;
    ImageGeometry::for_signal(n, SAMPLE_RATE, &StftConfig::default(), IMAGE_SIZE, IMAGE_SIZE).unwrap()
}

/// Unit-cell geometry for small synthetic masks.
pub fn unit_geometry(rows: usize, cols: usize) -> ImageGeometry {
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

pub fn mask(rows: usize, cols: usize, codes: Vec<u8>) -> LabelMask {
    LabelMask::new(unit_geometry(rows, cols), codes).unwrap()
}

pub fn quiet_config() -> SimConfig {
    SimConfig {
        noise_enabled: false,
        ..SimConfig::default()
    }
}

/// One device of `tech` at `distance` meters, drawn from `seed`.
pub fn single_device(tech: Technology, distance: f64, seed: u64, cfg: &SimConfig) -> Vec<DevicePlacement> {
    let mut rng = seed::rng(seed::derive(seed, TAG_SCENARIO, 0));
    vec![sample_device(&mut rng, tech, Some(distance), cfg)]
}

/// Every file under `root` as (relative path, bytes), sorted by path.
pub fn snapshot(root: &std::path::Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    fn walk(dir: &std::path::Path, root: &std::path::Path, out: &mut Vec<(std::path::PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), bytes));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
