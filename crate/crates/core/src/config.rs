//! Simulation settings that can be overridden from a TOML file.
//!
//! Every field has a default, so a config file only needs the keys it
//! changes:
//!
//! ```toml
//! noise_enabled = false
//!
//! [tx_power_dbm]
//! wlan = 15.0
//!
//! [stft]
//! window = "hamming"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{
    exponential_profile, ChannelConfig, FadingModel, PathLossModel, DEFAULT_NOISE_FLOOR_DBM_PER_HZ,
    DEFAULT_PROFILE_DECAY, DEFAULT_SHADOWING_DB, DEFAULT_TAP_DELAYS, LOS_EXPONENT, NLOS_EXPONENT,
};
use crate::error::{io_err, param, Error, Result};
use crate::spectrogram::StftConfig;
use crate::waveforms::{Technology, SMARTBAN_BANDWIDTH};
use crate::CARRIER_GHZ;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxPowers {
    pub wlan: f64,
    pub bluetooth: f64,
    pub zigbee: f64,
    pub smartban: f64,
}

impl Default for TxPowers {
    fn default() -> Self {
        TxPowers {
            wlan: 20.0,
            bluetooth: 10.0,
            zigbee: 0.0,
            smartban: 0.0,
        }
    }
}

impl TxPowers {
    pub fn get(&self, tech: Technology) -> f64 {
        match tech {
            Technology::Wlan => self.wlan,
            Technology::Bluetooth => self.bluetooth,
            Technology::Zigbee => self.zigbee,
            Technology::SmartBan => self.smartban,
            Technology::Unknown => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelDefaults {
    pub los_probability: f64,
    /// Rician K is drawn uniformly from this range for LOS links.
    pub k_factor_range: [f64; 2],
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub tap_delays: Vec<f64>,
    pub profile_decay: f64,
}

impl Default for ChannelDefaults {
    fn default() -> Self {
        ChannelDefaults {
            los_probability: 0.5,
            k_factor_range: [3.0, 10.0],
            los_exponent: LOS_EXPONENT,
            nlos_exponent: NLOS_EXPONENT,
            shadowing_sigma_db: DEFAULT_SHADOWING_DB,
            tap_delays: DEFAULT_TAP_DELAYS.to_vec(),
            profile_decay: DEFAULT_PROFILE_DECAY,
        }
    }
}

impl ChannelDefaults {
    /// Channel for one link. Wi-Fi uses the indoor WLAN path-loss model,
    /// everything else log-normal.
    pub fn channel_for(&self, tech: Technology, los: bool, k_factor: f64) -> ChannelConfig {
        ChannelConfig {
            model: if los { FadingModel::Rician } else { FadingModel::Rayleigh },
            k_factor: if los { k_factor } else { 0.0 },
            tap_delays: self.tap_delays.clone(),
            tap_powers: exponential_profile(&self.tap_delays, self.profile_decay),
            los,
            path_loss: if tech == Technology::Wlan {
                PathLossModel::WlanIndoor
            } else {
                PathLossModel::LogNormal
            },
            path_loss_exponent: if los { self.los_exponent } else { self.nlos_exponent },
            shadowing_sigma_db: self.shadowing_sigma_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub tx_power_dbm: TxPowers,
    pub channel: ChannelDefaults,
    pub stft: StftConfig,
    pub noise_enabled: bool,
    pub noise_floor_dbm_per_hz: f64,
    /// Nominal SmartBAN label bandwidth, Hz.
    pub smartban_bandwidth: f64,
    pub disc_radius: f64,
    pub carrier_ghz: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tx_power_dbm: TxPowers::default(),
            channel: ChannelDefaults::default(),
            stft: StftConfig::default(),
            noise_enabled: true,
            noise_floor_dbm_per_hz: DEFAULT_NOISE_FLOOR_DBM_PER_HZ,
            smartban_bandwidth: SMARTBAN_BANDWIDTH,
            disc_radius: 20.0,
            carrier_ghz: CARRIER_GHZ,
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig =
            toml::from_str(text).map_err(|e| Error::Param(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        SimConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Param(msg) => Error::Format {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })
    }

    /// Effective noise density; `-inf` when noise is disabled.
    pub fn noise_floor(&self) -> f64 {
        if self.noise_enabled {
            self.noise_floor_dbm_per_hz
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        let ch = &self.channel;
        if !(0.0..=1.0).contains(&ch.los_probability) {
            return param(format!("LOS probability {} outside [0, 1]", ch.los_probability));
        }
        let [k_lo, k_hi] = ch.k_factor_range;
        if !(k_lo >= 0.0 && k_lo <= k_hi) {
            return param(format!("bad K-factor range [{k_lo}, {k_hi}]"));
        }
        if !(ch.profile_decay > 0.0) {
            return param("profile decay must be positive");
        }
        ch.channel_for(Technology::SmartBan, true, k_lo).validate()?;
        ch.channel_for(Technology::SmartBan, false, 0.0).validate()?;
        if !(self.disc_radius >= 1.0) {
            return param(format!("disc radius {} m must be at least 1 m", self.disc_radius));
        }
        if !(self.carrier_ghz > 0.0) {
            return param("carrier frequency must be positive");
        }
        if !(self.smartban_bandwidth > 0.0) {
            return param("SmartBAN bandwidth must be positive");
        }
        let p = &self.tx_power_dbm;
        if [p.wlan, p.bluetooth, p.zigbee, p.smartban, self.noise_floor_dbm_per_hz]
            .iter()
            .any(|v| !v.is_finite())
        {
            return param("powers and noise floor must be finite");
        }
        Ok(())
    }
}
