//! Scenario sampling, scene rendering and dataset planning.
//!
//! The receiver sits at the origin of a disc of radius 20 m. Every record
//! is fully determined by its seed, `record_seed(master_seed, index)`, and
//! the [`SimConfig`]; records never share RNG state, so they can render in
//! any order or in parallel.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn_in_place, apply_channel_into, draw_channel, ChannelConfig};
use crate::config::SimConfig;
use crate::error::{param, Result};
use crate::labeling::{label, LabelMask};
use crate::seed::{self, SimRng, TAG_CHANNEL, TAG_NOISE, TAG_SCENARIO, TAG_WAVEFORM};
use crate::spectrogram::{spectrogram_image, SpectrogramImage};
use crate::waveforms::{generate, BurstEvent, ComplexSignal, Technology, WaveformSpec};
use crate::{IMAGE_SIZE, SAMPLE_RATE, TIME_SPAN};

/// Distances of the SmartBAN reference device in the distance sweep, m.
pub const SWEEP_DISTANCES: [f64; 8] = [1.0, 2.5, 5.0, 8.0, 10.0, 12.0, 15.0, 20.0];
pub const DEFAULT_SPLITS: [f64; 3] = [0.7, 0.2, 0.1];
pub const MAX_DEVICES: usize = 4;

const SLOT_CHOICES: [u32; 3] = [1, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePlacement {
    pub technology: Technology,
    /// Meters, receiver at the origin.
    pub position: [f64; 2],
    pub distance: f64,
    pub los: bool,
    pub waveform: WaveformSpec,
    pub channel: ChannelConfig,
}

impl DevicePlacement {
    /// Distance fed to the path-loss models, clamped to their 1 m domain.
    pub fn path_loss_distance(&self) -> f64 {
        self.distance.max(1.0)
    }
}

/// Channel raster for `tech`, as offsets from the band center in Hz.
/// Bluetooth hops internally and returns `[0.0]`.
pub fn channel_offsets(tech: Technology) -> Vec<f64> {
    match tech {
        // 2412..2462 MHz, channels 1-11
        Technology::Wlan => (0..11).map(|k| (-28.0 + 5.0 * k as f64) * 1e6).collect(),
        // 2405..2475 MHz, channels 11-25; channel 26 at 2480 MHz would leave the band
        Technology::Zigbee => (0..15).map(|k| (-35.0 + 5.0 * k as f64) * 1e6).collect(),
        // 2401..2479 MHz on a 2 MHz raster
        Technology::SmartBan => (0..40).map(|k| (-39.0 + 2.0 * k as f64) * 1e6).collect(),
        Technology::Bluetooth | Technology::Unknown => vec![0.0],
    }
}

fn pick<T: Copy>(rng: &mut SimRng, items: &[T]) -> T {
    items[rng.gen_range(0..items.len())]
}

/// Waveform for one device with a random channel and slot count.
fn sample_waveform(rng: &mut SimRng, tech: Technology, cfg: &SimConfig) -> WaveformSpec {
    let offset = pick(rng, &channel_offsets(tech));
    let mut spec = match tech {
        Technology::Wlan => WaveformSpec::wlan(offset),
        Technology::Zigbee => WaveformSpec::zigbee(offset),
        Technology::Bluetooth => WaveformSpec::bluetooth(pick(rng, &SLOT_CHOICES)),
        _ => {
            let mut s = WaveformSpec::smartban(pick(rng, &SLOT_CHOICES), offset);
            s.bandwidth = cfg.smartban_bandwidth;
            s
        }
    };
    spec.tx_power_dbm = cfg.tx_power_dbm.get(tech);
    spec
}

/// One device of class `tech`, uniform over the disc or at `distance`
/// with a uniform bearing.
pub fn sample_device(rng: &mut SimRng, tech: Technology, distance: Option<f64>, cfg: &SimConfig) -> DevicePlacement {
    let r = distance.unwrap_or_else(|| cfg.disc_radius * rng.gen::<f64>().sqrt());
    let theta = rng.gen::<f64>() * 2.0 * PI;
    let los = rng.gen_bool(cfg.channel.los_probability);
    let [k_lo, k_hi] = cfg.channel.k_factor_range;
    let k = if los { k_lo + (k_hi - k_lo) * rng.gen::<f64>() } else { 0.0 };
    let waveform = sample_waveform(rng, tech, cfg);
    DevicePlacement {
        technology: tech,
        position: [r * theta.cos(), r * theta.sin()],
        distance: r,
        los,
        waveform,
        channel: cfg.channel.channel_for(tech, los, k),
    }
}

fn random_technology(rng: &mut SimRng) -> Technology {
    pick(rng, &Technology::TRANSMITTERS)
}

/// One to four devices, uniformly placed. A lone device is always
/// SmartBAN; otherwise technologies are drawn uniformly.
pub fn sample_scenario(seed: u64, cfg: &SimConfig) -> Vec<DevicePlacement> {
    let mut rng = seed::rng(seed::derive(seed, TAG_SCENARIO, 0));
    let count = rng.gen_range(1..=MAX_DEVICES);
    (0..count)
        .map(|_| {
            let tech = if count == 1 { Technology::SmartBan } else { random_technology(&mut rng) };
            sample_device(&mut rng, tech, None, cfg)
        })
        .collect()
}

/// A SmartBAN device pinned at `distance` plus zero to three random
/// interferers.
pub fn sample_sweep_scenario(seed: u64, distance: f64, cfg: &SimConfig) -> Vec<DevicePlacement> {
    let mut rng = seed::rng(seed::derive(seed, TAG_SCENARIO, 0));
    let mut devices = vec![sample_device(&mut rng, Technology::SmartBan, Some(distance), cfg)];
    let others = rng.gen_range(0..MAX_DEVICES);
    for _ in 0..others {
        let tech = random_technology(&mut rng);
        devices.push(sample_device(&mut rng, tech, None, cfg));
    }
    devices
}

/// Image, mask and burst list of one rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub image: SpectrogramImage,
    pub mask: LabelMask,
    pub events: Vec<BurstEvent>,
}

/// Synthesize, propagate and sum every device, add receiver noise, and
/// build the image and its ground-truth mask.
pub fn render_scene(devices: &[DevicePlacement], seed: u64, cfg: &SimConfig) -> Result<RenderedScene> {
    if devices.is_empty() || devices.len() > MAX_DEVICES {
        return param(format!("a scene holds 1 to {MAX_DEVICES} devices, got {}", devices.len()));
    }
    let n = (TIME_SPAN * SAMPLE_RATE).round() as usize;
    let mut received = ComplexSignal::zeros(SAMPLE_RATE, n);
    let mut events = Vec::new();
    for (i, dev) in devices.iter().enumerate() {
        if dev.waveform.sample_rate != SAMPLE_RATE || dev.waveform.sample_count() != n {
            return param("every device must use the scene sample rate and span");
        }
        let wave = generate(&dev.waveform, seed::derive(seed, TAG_WAVEFORM, i as u64))?;
        let ch = draw_channel(
            &dev.channel,
            dev.path_loss_distance(),
            cfg.carrier_ghz,
            seed::derive(seed, TAG_CHANNEL, i as u64),
        )?;
        apply_channel_into(&wave.signal, &ch, &mut received.samples);
        events.extend(wave.events);
    }
    add_awgn_in_place(&mut received, cfg.noise_floor(), seed::derive(seed, TAG_NOISE, 0));
    let image = spectrogram_image(&received, &cfg.stft, IMAGE_SIZE, IMAGE_SIZE)?;
    let mask = label(&events, &image.geometry);
    Ok(RenderedScene { image, mask, events })
}

/// Everything needed to render one dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPlan {
    pub id: u64,
    pub seed: u64,
    pub split: Split,
    pub devices: Vec<DevicePlacement>,
    /// Distance of the reference SmartBAN device in sweep records.
    pub pinned_distance: Option<f64>,
}

impl RecordPlan {
    /// Transmitting classes present, as a bitmask over class indices.
    pub fn class_key(&self) -> u8 {
        self.devices
            .iter()
            .fold(0, |acc, d| acc | 1 << d.technology.index())
    }

    pub fn render(&self, cfg: &SimConfig) -> Result<SceneRecord> {
        let scene = render_scene(&self.devices, self.seed, cfg)?;
        Ok(SceneRecord {
            id: self.id,
            seed: self.seed,
            split: self.split,
            devices: self.devices.clone(),
            pinned_distance: self.pinned_distance,
            image: scene.image,
            mask: scene.mask,
            events: scene.events,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub id: u64,
    pub seed: u64,
    pub split: Split,
    pub devices: Vec<DevicePlacement>,
    pub pinned_distance: Option<f64>,
    pub image: SpectrogramImage,
    pub mask: LabelMask,
    pub events: Vec<BurstEvent>,
}

/// Largest-remainder apportionment of `n` items by `fractions`; ties in
/// the remainder go to the earlier split.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| !(f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return param(format!("split fractions {fractions:?} must be nonnegative and sum to 1"));
    }
    let raw = fractions.map(|f| f * n as f64);
    let mut counts = raw.map(|r| r.floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &s in order.iter().take(short) {
        counts[s] += 1;
    }
    Ok(counts)
}

/// Assign splits so each class-presence stratum is spread over the splits
/// in proportion to the split sizes. Records are visited grouped by
/// stratum (those containing SmartBAN first), and each goes to the split
/// furthest behind its running target.
fn assign_splits(keys: &[u8], counts: [usize; 3]) -> Vec<Split> {
    let n = keys.len();
    let mut order: Vec<usize> = (0..n).collect();
    let smartban = 1u8 << Technology::SmartBan.index();
    order.sort_by_key(|&i| (keys[i] & smartban == 0, keys[i], i));
    let mut assigned = [0usize; 3];
    let mut out = vec![Split::Train; n];
    for (k, &i) in order.iter().enumerate() {
        let visited = (k + 1) as f64;
        let s = (0..3)
            .filter(|&s| assigned[s] < counts[s])
            .max_by(|&a, &b| {
                let deficit = |s: usize| counts[s] as f64 / n as f64 * visited - assigned[s] as f64;
                deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a))
            })
            .expect("split capacities sum to n");
        assigned[s] += 1;
        out[i] = Split::ALL[s];
    }
    out
}

/// Plans for `n` records with stratified splits.
pub fn plan_dataset(n: usize, master_seed: u64, splits: [f64; 3], cfg: &SimConfig) -> Result<Vec<RecordPlan>> {
    if n == 0 {
        return param("a dataset needs at least one record");
    }
    cfg.validate()?;
    let counts = split_counts(n, splits)?;
    let mut plans: Vec<RecordPlan> = (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let seed = seed::record_seed(master_seed, id);
            RecordPlan {
                id,
                seed,
                split: Split::Train,
                devices: sample_scenario(seed, cfg),
                pinned_distance: None,
            }
        })
        .collect();
    let keys: Vec<u8> = plans.iter().map(RecordPlan::class_key).collect();
    for (plan, split) in plans.iter_mut().zip(assign_splits(&keys, counts)) {
        plan.split = split;
    }
    Ok(plans)
}

/// Plans for the distance sweep: `per_distance` records per distance,
/// all in the test split.
pub fn plan_sweep(distances: &[f64], per_distance: usize, master_seed: u64, cfg: &SimConfig) -> Result<Vec<RecordPlan>> {
    cfg.validate()?;
    if distances.is_empty() || per_distance == 0 {
        return param("a sweep needs at least one distance and one record per distance");
    }
    if let Some(d) = distances.iter().find(|&&d| !(1.0..=cfg.disc_radius).contains(&d)) {
        return param(format!("sweep distance {d} m outside [1, {}]", cfg.disc_radius));
    }
    let mut plans = Vec::with_capacity(distances.len() * per_distance);
    for (di, &d) in distances.iter().enumerate() {
        for j in 0..per_distance {
            let id = (di * per_distance + j) as u64;
            let seed = seed::record_seed(master_seed, id);
            plans.push(RecordPlan {
                id,
                seed,
                split: Split::Test,
                devices: sample_sweep_scenario(seed, d, cfg),
                pinned_distance: Some(d),
            });
        }
    }
    Ok(plans)
}

fn render_all(plans: &[RecordPlan], cfg: &SimConfig) -> Result<Vec<SceneRecord>> {
    plans.par_iter().map(|p| p.render(cfg)).collect()
}

/// Render a full dataset in memory. Use [`crate::dataset::write_dataset`]
/// for large `n`.
pub fn generate_dataset(n: usize, master_seed: u64, splits: [f64; 3], cfg: &SimConfig) -> Result<Vec<SceneRecord>> {
    render_all(&plan_dataset(n, master_seed, splits, cfg)?, cfg)
}

pub fn distance_sweep(distances: &[f64], per_distance: usize, master_seed: u64, cfg: &SimConfig) -> Result<Vec<SceneRecord>> {
    render_all(&plan_sweep(distances, per_distance, master_seed, cfg)?, cfg)
}
