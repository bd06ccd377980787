//! Propagation: distance path loss, tapped-delay Rayleigh/Rician fading and
//! receiver noise.
//!
//! Tap gains are normalized so that `E[sum |a_k|^2] = 1`; the distance
//! dependent attenuation is carried separately as `path_loss_db`. The LOS
//! component of the first tap is unit-modulus with a random phase, which
//! keeps the Rician K-factor exactly the LOS-to-scattered power ratio.
//! Taps are constant over a scene.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::seed::{self, SimRng};
use crate::waveforms::ComplexSignal;

/// Thermal noise density (-174 dBm/Hz) plus a 7 dB receiver noise figure.
pub const DEFAULT_NOISE_FLOOR_DBM_PER_HZ: f64 = -174.0 + 7.0;
pub const LOS_EXPONENT: f64 = 2.5;
pub const NLOS_EXPONENT: f64 = 3.5;
pub const DEFAULT_SHADOWING_DB: f64 = 4.0;
pub const DEFAULT_TAP_DELAYS: [f64; 3] = [0.0, 50e-9, 120e-9];
/// Decay constant of the default exponential power-delay profile.
pub const DEFAULT_PROFILE_DECAY: f64 = 50e-9;

const TAG_SHADOWING: u64 = 0x5348_4144; // "SHAD"

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FadingModel {
    Rayleigh,
    Rician,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossModel {
    /// `32.4 + 17.3 log10(d) + 20 log10(fc)`, used for Wi-Fi.
    WlanIndoor,
    /// Free-space loss at 1 m plus `10 n log10(d)` plus Gaussian shadowing.
    LogNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub model: FadingModel,
    pub k_factor: f64,
    /// Path delays in seconds; strictly increasing, starting at 0.
    pub tap_delays: Vec<f64>,
    /// Scattered power per tap; sums to 1.
    pub tap_powers: Vec<f64>,
    pub los: bool,
    pub path_loss: PathLossModel,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
}

impl ChannelConfig {
    pub fn rayleigh() -> Self {
        ChannelConfig {
            model: FadingModel::Rayleigh,
            k_factor: 0.0,
            tap_delays: DEFAULT_TAP_DELAYS.to_vec(),
            tap_powers: exponential_profile(&DEFAULT_TAP_DELAYS, DEFAULT_PROFILE_DECAY),
            los: false,
            path_loss: PathLossModel::LogNormal,
            path_loss_exponent: NLOS_EXPONENT,
            shadowing_sigma_db: DEFAULT_SHADOWING_DB,
        }
    }

    pub fn rician(k_factor: f64) -> Self {
        ChannelConfig {
            model: FadingModel::Rician,
            k_factor,
            los: true,
            path_loss_exponent: LOS_EXPONENT,
            ..ChannelConfig::rayleigh()
        }
    }

    /// Single zero-delay tap.
    pub fn flat(self) -> Self {
        ChannelConfig {
            tap_delays: vec![0.0],
            tap_powers: vec![1.0],
            ..self
        }
    }

    pub fn tap_count(&self) -> usize {
        self.tap_delays.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tap_delays.is_empty() {
            return param("a channel needs at least one tap");
        }
        if self.tap_delays.len() != self.tap_powers.len() {
            return param("tap delay and power lists differ in length");
        }
        if self.tap_delays[0] != 0.0 {
            return param("first tap delay must be 0");
        }
        if self.tap_delays.windows(2).any(|w| !(w[1] > w[0])) {
            return param("tap delays must be strictly increasing");
        }
        if self.tap_powers.iter().any(|&p| !(p >= 0.0)) {
            return param("tap powers must be nonnegative");
        }
        let total: f64 = self.tap_powers.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return param(format!("tap power profile sums to {total}, not 1"));
        }
        if !(self.k_factor >= 0.0) {
            return param(format!("K-factor {} must be >= 0", self.k_factor));
        }
        if self.model == FadingModel::Rayleigh && self.k_factor != 0.0 {
            return param("Rayleigh fading requires K = 0");
        }
        if !(self.path_loss_exponent > 0.0) || !(self.shadowing_sigma_db >= 0.0) {
            return param("path-loss exponent must be > 0 and shadowing sigma >= 0");
        }
        Ok(())
    }
}

/// `exp(-tau / decay)` weights normalized to sum to 1.
pub fn exponential_profile(delays: &[f64], decay: f64) -> Vec<f64> {
    let raw: Vec<f64> = delays.iter().map(|t| (-t / decay).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
    pub path_loss_db: f64,
    pub seed: u64,
}

impl ChannelRealization {
    /// Unit-gain single tap with the given loss.
    pub fn identity(path_loss_db: f64) -> Self {
        ChannelRealization {
            taps: vec![Tap {
                delay: 0.0,
                gain: Complex64::new(1.0, 0.0),
            }],
            path_loss_db,
            seed: 0,
        }
    }

    pub fn amplitude_scale(&self) -> f64 {
        10f64.powf(-self.path_loss_db / 20.0)
    }
}

fn check_distance(d: f64) -> Result<()> {
    if !(d >= 1.0) || !d.is_finite() {
        return param(format!("distance {d} m is below the 1 m model reference"));
    }
    Ok(())
}

fn check_carrier(fc_ghz: f64) -> Result<()> {
    if !(fc_ghz > 0.0) || !fc_ghz.is_finite() {
        return param(format!("carrier {fc_ghz} GHz must be positive"));
    }
    Ok(())
}

/// Indoor Wi-Fi path loss in dB; `d` in meters, `fc_ghz` in GHz.
pub fn path_loss_wlan(d: f64, fc_ghz: f64) -> Result<f64> {
    check_distance(d)?;
    check_carrier(fc_ghz)?;
    Ok(32.4 + 17.3 * d.log10() + 20.0 * fc_ghz.log10())
}

/// Free-space path loss at 1 m in dB, `fc_ghz` in GHz.
pub fn fspl_1m(fc_ghz: f64) -> f64 {
    32.45 + 20.0 * fc_ghz.log10()
}

/// Log-distance path loss with log-normal shadowing drawn from `seed`.
pub fn path_loss_lognormal(d: f64, n: f64, fc_ghz: f64, sigma_db: f64, seed: u64) -> Result<f64> {
    check_distance(d)?;
    check_carrier(fc_ghz)?;
    if !(sigma_db >= 0.0) {
        return param(format!("shadowing sigma {sigma_db} dB must be >= 0"));
    }
    let shadow = if sigma_db > 0.0 {
        let z: f64 = StandardNormal.sample(&mut seed::rng(seed));
        sigma_db * z
    } else {
        0.0
    };
    Ok(fspl_1m(fc_ghz) + 10.0 * n * d.log10() + shadow)
}

fn complex_gaussian(rng: &mut SimRng, power: f64) -> Complex64 {
    let scale = (power / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * scale, im * scale)
}

/// Draw one fading realization and its path loss.
///
/// The random stream is consumed identically for Rayleigh and Rician
/// configurations, so a Rician draw at K = 0 reproduces the Rayleigh draw.
pub fn draw_channel(cfg: &ChannelConfig, d: f64, fc_ghz: f64, seed: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let los_phase = rng.gen::<f64>() * 2.0 * PI;
    let k = cfg.k_factor;
    let los_weight = (k / (k + 1.0)).sqrt();
    let nlos_weight = (1.0 / (k + 1.0)).sqrt();

    let taps = cfg
        .tap_delays
        .iter()
        .zip(&cfg.tap_powers)
        .enumerate()
        .map(|(i, (&delay, &power))| {
            let mut gain = nlos_weight * complex_gaussian(&mut rng, power);
            if i == 0 && k > 0.0 {
                gain += los_weight * Complex64::from_polar(1.0, los_phase);
            }
            Tap { delay, gain }
        })
        .collect();

    let path_loss_db = match cfg.path_loss {
        PathLossModel::WlanIndoor => path_loss_wlan(d, fc_ghz)?,
        PathLossModel::LogNormal => path_loss_lognormal(
            d,
            cfg.path_loss_exponent,
            fc_ghz,
            cfg.shadowing_sigma_db,
            seed::derive(seed, TAG_SHADOWING, 0),
        )?,
    };

    Ok(ChannelRealization {
        taps,
        path_loss_db,
        seed,
    })
}

/// Tap delays rounded to the nearest sample.
fn tap_offsets(ch: &ChannelRealization, fs: f64) -> impl Iterator<Item = (usize, Complex64)> + '_ {
    let scale = ch.amplitude_scale();
    ch.taps
        .iter()
        .map(move |t| ((t.delay * fs).round() as usize, t.gain * scale))
}

/// `out[n] += A * sum_k g_k * sig[n - d_k]` with `A = 10^(-PL/20)`.
pub fn apply_channel_into(sig: &ComplexSignal, ch: &ChannelRealization, out: &mut [Complex64]) {
    let n = sig.len().min(out.len());
    for (delay, gain) in tap_offsets(ch, sig.sample_rate) {
        if delay >= n {
            continue;
        }
        for (o, &s) in out[delay..n].iter_mut().zip(&sig.samples[..n - delay]) {
            *o += gain * s;
        }
    }
}

/// Received signal through one realization; output length equals input.
pub fn apply_channel(sig: &ComplexSignal, ch: &ChannelRealization) -> ComplexSignal {
    let mut out = ComplexSignal::zeros(sig.sample_rate, sig.len());
    apply_channel_into(sig, ch, &mut out.samples);
    out
}

/// Noise power per complex sample, mW, for a density in dBm/Hz.
pub fn noise_power_mw(noise_floor_dbm_per_hz: f64, sample_rate: f64) -> f64 {
    10f64.powf(noise_floor_dbm_per_hz / 10.0) * sample_rate
}

/// Add circularly-symmetric white Gaussian noise in place. A floor of
/// `-inf` dBm/Hz leaves the samples untouched.
pub fn add_awgn_in_place(sig: &mut ComplexSignal, noise_floor_dbm_per_hz: f64, seed: u64) {
    let power = noise_power_mw(noise_floor_dbm_per_hz, sig.sample_rate);
    if power == 0.0 {
        return;
    }
    let mut rng = seed::rng(seed);
    for s in &mut sig.samples {
        *s += complex_gaussian(&mut rng, power);
    }
}

pub fn add_awgn(sig: &ComplexSignal, noise_floor_dbm_per_hz: f64, seed: u64) -> ComplexSignal {
    let mut out = sig.clone();
    add_awgn_in_place(&mut out, noise_floor_dbm_per_hz, seed);
    out
}
