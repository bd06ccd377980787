//! Coexistence scene simulator for the 2.4 GHz ISM band.
//!
//! The crate renders labeled spectrogram datasets of overlapping Wi-Fi,
//! Bluetooth, ZigBee and SmartBAN transmissions and scores segmentation
//! masks against the pixel-exact ground truth.
//!
//! Pipeline, one scene at a time:
//!
//! 1. [`scene::sample_scenario`] places one to four devices in a 20 m disc.
//! 2. [`waveforms`] synthesizes each device's baseband burst train and
//!    records its time-frequency [`waveforms::BurstEvent`]s.
//! 3. [`channel`] applies path loss, tapped-delay fading and AWGN.
//! 4. [`spectrogram`] turns the composite into a 256x256 normalized image.
//! 5. [`labeling`] rasterizes the burst events into a class-coded mask.
//! 6. [`metrics`] compares predicted masks (from [`segmenter`] or an
//!    external model) with the ground truth.
//!
//! [`dataset`] owns the on-disk format shared with external trainers.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod labeling;
pub mod metrics;
pub mod scene;
pub mod seed;
pub mod segmenter;
pub mod spectrogram;
pub mod waveforms;

pub use error::{Error, Result};
pub use waveforms::Technology;

/// Sample rate shared by every generator, Hz.
pub const SAMPLE_RATE: f64 = 80e6;
/// Duration of one scene, seconds.
pub const TIME_SPAN: f64 = 20e-3;
/// Band center, GHz. Offsets are relative to this.
pub const CARRIER_GHZ: f64 = 2.44;
/// Half of the simulated band, Hz.
pub const HALF_BAND: f64 = 40e6;
/// Side length of spectrogram images and label masks.
pub const IMAGE_SIZE: usize = 256;
