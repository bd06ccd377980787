//! Baseband burst synthesis for the four ISM-band technologies.
//!
//! Every generator is a pure function of `(spec, seed)` and returns the
//! complex baseband samples (already placed at their band offset) together
//! with the time-frequency rectangle of each burst. Sample amplitudes are in
//! sqrt(mW): the mean of `|x|^2` over an active burst equals the transmit
//! power in milliwatts.

mod cpm;
mod ofdm;
mod oqpsk;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::seed;
use crate::{HALF_BAND, SAMPLE_RATE, TIME_SPAN};

pub use cpm::{frequency_pulse, CpmParams};

/// Signal class. The discriminant order is the class index used by
/// confusion matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technology {
    Unknown,
    Wlan,
    Bluetooth,
    Zigbee,
    SmartBan,
}

impl Technology {
    /// All classes, in class-index order.
    pub const ALL: [Technology; 5] = [
        Technology::Unknown,
        Technology::Wlan,
        Technology::Bluetooth,
        Technology::Zigbee,
        Technology::SmartBan,
    ];

    /// Classes that actually transmit.
    pub const TRANSMITTERS: [Technology; 4] = [
        Technology::Wlan,
        Technology::Bluetooth,
        Technology::Zigbee,
        Technology::SmartBan,
    ];

    /// Mask code written to label rasters.
    pub const fn code(self) -> u8 {
        match self {
            Technology::Unknown => 0,
            Technology::Wlan => 16,
            Technology::Bluetooth => 32,
            Technology::Zigbee => 64,
            Technology::SmartBan => 128,
        }
    }

    pub const fn from_code(code: u8) -> Option<Technology> {
        match code {
            0 => Some(Technology::Unknown),
            16 => Some(Technology::Wlan),
            32 => Some(Technology::Bluetooth),
            64 => Some(Technology::Zigbee),
            128 => Some(Technology::SmartBan),
            _ => None,
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Technology> {
        Technology::ALL.get(index).copied()
    }

    /// Overlap precedence: narrower signals win.
    /// Bluetooth > SmartBAN > ZigBee > WLAN > Unknown.
    pub const fn priority(self) -> u8 {
        match self {
            Technology::Unknown => 0,
            Technology::Wlan => 1,
            Technology::Zigbee => 2,
            Technology::SmartBan => 3,
            Technology::Bluetooth => 4,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Technology::Unknown => "unknown",
            Technology::Wlan => "wlan",
            Technology::Bluetooth => "bluetooth",
            Technology::Zigbee => "zigbee",
            Technology::SmartBan => "smartban",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bluetooth slot, seconds.
pub const BLUETOOTH_SLOT: f64 = 625e-6;
/// SmartBAN slot, seconds.
pub const SMARTBAN_SLOT: f64 = 1.25e-3;
/// ZigBee packet, seconds.
pub const ZIGBEE_PACKET: f64 = 4.2565e-3;
/// Wi-Fi packet, seconds.
pub const WLAN_PACKET: f64 = 180e-6;
/// Wi-Fi inter-packet gap, seconds.
pub const WLAN_IDLE: f64 = 20e-6;

/// Nominal occupied bandwidths, Hz.
pub const WLAN_BANDWIDTH: f64 = 20e6;
pub const BLUETOOTH_BANDWIDTH: f64 = 1e6;
pub const ZIGBEE_BANDWIDTH: f64 = 5e6;
pub const SMARTBAN_BANDWIDTH: f64 = 2e6;

/// Parameters of one device's burst train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub technology: Technology,
    pub sample_rate: f64,
    pub symbol_rate: f64,
    pub time_span: f64,
    /// Slot duration (Bluetooth, SmartBAN) or packet duration.
    pub burst_duration: f64,
    /// Idle gap bounds between bursts; a degenerate range is a fixed gap.
    pub idle_time_range: [f64; 2],
    pub slot_count: Option<u32>,
    /// Channel center relative to the band center, Hz. Bluetooth hops and
    /// ignores it.
    pub center_offset: f64,
    pub tx_power_dbm: f64,
    /// Nominal occupied bandwidth written into burst events, Hz.
    pub bandwidth: f64,
}

impl WaveformSpec {
    pub fn bluetooth(slot_count: u32) -> Self {
        WaveformSpec {
            technology: Technology::Bluetooth,
            sample_rate: SAMPLE_RATE,
            symbol_rate: 1e6,
            time_span: TIME_SPAN,
            burst_duration: BLUETOOTH_SLOT,
            idle_time_range: [BLUETOOTH_SLOT, BLUETOOTH_SLOT],
            slot_count: Some(slot_count),
            center_offset: 0.0,
            tx_power_dbm: 10.0,
            bandwidth: BLUETOOTH_BANDWIDTH,
        }
    }

    pub fn zigbee(center_offset: f64) -> Self {
        WaveformSpec {
            technology: Technology::Zigbee,
            sample_rate: SAMPLE_RATE,
            symbol_rate: 4e6,
            time_span: TIME_SPAN,
            burst_duration: ZIGBEE_PACKET,
            idle_time_range: [0.0, 5e-6],
            slot_count: None,
            center_offset,
            tx_power_dbm: 0.0,
            bandwidth: ZIGBEE_BANDWIDTH,
        }
    }

    pub fn wlan(center_offset: f64) -> Self {
        WaveformSpec {
            technology: Technology::Wlan,
            sample_rate: SAMPLE_RATE,
            symbol_rate: 20e6,
            time_span: TIME_SPAN,
            burst_duration: WLAN_PACKET,
            idle_time_range: [WLAN_IDLE, WLAN_IDLE],
            slot_count: None,
            center_offset,
            tx_power_dbm: 20.0,
            bandwidth: WLAN_BANDWIDTH,
        }
    }

    pub fn smartban(slot_count: u32, center_offset: f64) -> Self {
        WaveformSpec {
            technology: Technology::SmartBan,
            sample_rate: SAMPLE_RATE,
            symbol_rate: 1e6,
            time_span: TIME_SPAN,
            burst_duration: SMARTBAN_SLOT,
            idle_time_range: [0.0, 0.0],
            slot_count: Some(slot_count),
            center_offset,
            tx_power_dbm: 0.0,
            bandwidth: SMARTBAN_BANDWIDTH,
        }
    }

    /// Number of samples in the generated signal.
    pub fn sample_count(&self) -> usize {
        (self.time_span * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fs = self.sample_rate;
        if !(fs > 0.0 && fs.is_finite()) {
            return param(format!("sample rate {fs} must be positive"));
        }
        if !(self.symbol_rate > 0.0 && self.symbol_rate <= fs / 2.0) {
            return param(format!(
                "symbol rate {} must lie in (0, sample_rate/2]",
                self.symbol_rate
            ));
        }
        if !(self.time_span > 0.0 && self.burst_duration > 0.0) {
            return param("time span and burst duration must be positive");
        }
        let [idle_lo, idle_hi] = self.idle_time_range;
        if !(idle_lo >= 0.0 && idle_lo <= idle_hi) {
            return param(format!("bad idle range [{idle_lo}, {idle_hi}]"));
        }
        if self.tx_power_dbm.is_nan() || self.tx_power_dbm == f64::INFINITY {
            return param("tx power must be finite or -inf");
        }
        match (self.technology, self.slot_count) {
            (Technology::Bluetooth | Technology::SmartBan, Some(1 | 3 | 5)) => {}
            (Technology::Bluetooth | Technology::SmartBan, other) => {
                return param(format!("slot_count {other:?} not in {{1, 3, 5}}"));
            }
            (_, Some(n)) => {
                return param(format!("slot_count {n} only applies to slotted technologies"));
            }
            (Technology::Unknown, None) => return param("cannot synthesize the Unknown class"),
            _ => {}
        }
        if !(self.bandwidth > 0.0) {
            return param("bandwidth must be positive");
        }
        if self.technology != Technology::Bluetooth {
            check_in_band(self.center_offset, self.bandwidth, fs)?;
        }
        Ok(())
    }

    /// Samples per symbol; generators require an integer ratio.
    fn samples_per_symbol(&self) -> Result<usize> {
        let ratio = self.sample_rate / self.symbol_rate;
        let sps = ratio.round();
        if (ratio - sps).abs() > 1e-9 || sps < 2.0 {
            return param(format!("sample_rate/symbol_rate = {ratio} is not an integer >= 2"));
        }
        Ok(sps as usize)
    }

    fn amplitude(&self) -> f64 {
        dbm_to_mw(self.tx_power_dbm).sqrt()
    }

    fn seconds_to_samples(&self, t: f64) -> usize {
        (t * self.sample_rate).round() as usize
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

fn check_in_band(offset: f64, bandwidth: f64, fs: f64) -> Result<()> {
    let edge = (fs / 2.0).min(HALF_BAND);
    if offset.abs() + bandwidth / 2.0 > edge * (1.0 + 1e-12) {
        return param(format!(
            "channel at {:.3} MHz with {:.3} MHz bandwidth leaves the +/-{:.1} MHz band",
            offset / 1e6,
            bandwidth / 1e6,
            edge / 1e6
        ));
    }
    Ok(())
}

/// Sampled complex baseband waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub sample_rate: f64,
    pub samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn zeros(sample_rate: f64, len: usize) -> Self {
        ComplexSignal {
            sample_rate,
            samples: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite())
    }

    /// Element-wise `self += other`; lengths must match.
    pub fn accumulate(&mut self, other: &ComplexSignal) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += b;
        }
    }
}

/// Time-frequency rectangle occupied by one burst (slot group or packet).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstEvent {
    pub technology: Technology,
    pub t_start: f64,
    pub t_end: f64,
    pub f_low: f64,
    pub f_high: f64,
}

impl BurstEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_high - self.f_low
    }

    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.f_low + self.f_high)
    }
}

/// Output of a generator.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub signal: ComplexSignal,
    pub events: Vec<BurstEvent>,
}

/// Dispatch on `spec.technology`.
pub fn generate(spec: &WaveformSpec, seed: u64) -> Result<Waveform> {
    match spec.technology {
        Technology::Bluetooth => gen_bluetooth(spec, seed),
        Technology::Zigbee => gen_zigbee(spec, seed),
        Technology::Wlan => gen_wifi(spec, seed),
        Technology::SmartBan => gen_smartban(spec, seed),
        Technology::Unknown => param("cannot synthesize the Unknown class"),
    }
}

fn expect_technology(spec: &WaveformSpec, tech: Technology) -> Result<()> {
    if spec.technology != tech {
        return param(format!("expected a {tech} spec, got {}", spec.technology));
    }
    spec.validate()
}

/// Hop channel centers for Bluetooth: 79 channels of 1 MHz at integer
/// MHz offsets from -39 to +39.
pub const BLUETOOTH_CHANNELS: i32 = 79;

/// GFSK bursts (BT 0.5, h 0.32) in slot groups of `slot_count` slots,
/// each group on an independently drawn 1 MHz hop channel and followed
/// by one idle slot.
pub fn gen_bluetooth(spec: &WaveformSpec, seed: u64) -> Result<Waveform> {
    expect_technology(spec, Technology::Bluetooth)?;
    let sps = spec.samples_per_symbol()?;
    let total = spec.sample_count();
    let slots = spec.slot_count.unwrap_or(1) as usize;
    let group = slots * spec.seconds_to_samples(spec.burst_duration);
    let idle = spec.seconds_to_samples(spec.idle_time_range[0]);
    let amp = spec.amplitude();
    let fs = spec.sample_rate;
    let mut rng = seed::rng(seed);
    let params = CpmParams::BLUETOOTH;
    let half_channels = (BLUETOOTH_CHANNELS - 1) / 2;
    let step = spec.bandwidth;

    let mut signal = ComplexSignal::zeros(fs, total);
    let mut events = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + group).min(total);
        let channel = rng.gen_range(-half_channels..=half_channels);
        let fc = f64::from(channel) * step;
        check_in_band(fc, spec.bandwidth, fs)?;
        let burst = cpm::modulate(&mut rng, end - start, sps, params);
        write_burst(&mut signal.samples, start, &burst, amp, fc / fs);
        events.push(burst_event(spec, start, end, fc));
        start += group + idle;
    }
    Ok(Waveform { signal, events })
}

/// GMSK (BT 0.5, h 0.5) transmission window of `slot_count` back-to-back
/// slots at `center_offset`, starting at a uniformly drawn sample such
/// that the whole window fits in the span.
pub fn gen_smartban(spec: &WaveformSpec, seed: u64) -> Result<Waveform> {
    expect_technology(spec, Technology::SmartBan)?;
    let sps = spec.samples_per_symbol()?;
    let total = spec.sample_count();
    let slots = spec.slot_count.unwrap_or(1) as usize;
    let window = slots * spec.seconds_to_samples(spec.burst_duration);
    if window > total {
        return param(format!(
            "{slots} SmartBAN slots do not fit in {} s",
            spec.time_span
        ));
    }
    let fs = spec.sample_rate;
    let mut rng = seed::rng(seed);
    let start = rng.gen_range(0..=total - window);
    let burst = cpm::modulate(&mut rng, window, sps, CpmParams::SMARTBAN);

    let mut signal = ComplexSignal::zeros(fs, total);
    write_burst(&mut signal.samples, start, &burst, spec.amplitude(), spec.center_offset / fs);
    let events = vec![burst_event(spec, start, start + window, spec.center_offset)];
    Ok(Waveform { signal, events })
}

/// Half-sine O-QPSK packets back to back, each gap drawn uniformly from
/// the idle range. The trailing packet is truncated at the span end.
pub fn gen_zigbee(spec: &WaveformSpec, seed: u64) -> Result<Waveform> {
    expect_technology(spec, Technology::Zigbee)?;
    let sps = spec.samples_per_symbol()?;
    let total = spec.sample_count();
    let packet = spec.seconds_to_samples(spec.burst_duration);
    let [idle_lo, idle_hi] = spec.idle_time_range;
    let (idle_lo, idle_hi) = (spec.seconds_to_samples(idle_lo), spec.seconds_to_samples(idle_hi));
    let fs = spec.sample_rate;
    let amp = spec.amplitude();
    let mut rng = seed::rng(seed);

    let mut signal = ComplexSignal::zeros(fs, total);
    let mut events = Vec::new();
    let mut start = 0;
    while start < total {
        let full = oqpsk::modulate(&mut rng, packet, sps);
        let end = (start + packet).min(total);
        write_burst(&mut signal.samples, start, &full[..end - start], amp, spec.center_offset / fs);
        events.push(burst_event(spec, start, end, spec.center_offset));
        start = end + rng.gen_range(idle_lo..=idle_hi);
    }
    Ok(Waveform { signal, events })
}

/// Simplified 20 MHz OFDM packet train: 64-subcarrier grid with 52 QPSK
/// data tones, 1/4 cyclic prefix, fixed packet and gap durations.
pub fn gen_wifi(spec: &WaveformSpec, seed: u64) -> Result<Waveform> {
    expect_technology(spec, Technology::Wlan)?;
    let total = spec.sample_count();
    let packet = spec.seconds_to_samples(spec.burst_duration);
    let idle = spec.seconds_to_samples(spec.idle_time_range[0]);
    let fs = spec.sample_rate;
    let modem = ofdm::OfdmModulator::new(fs, spec.symbol_rate)?;
    let amp = spec.amplitude();
    let mut rng = seed::rng(seed);

    let mut signal = ComplexSignal::zeros(fs, total);
    let mut events = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + packet).min(total);
        let burst = modem.packet(&mut rng, end - start);
        write_burst(&mut signal.samples, start, &burst, amp, spec.center_offset / fs);
        events.push(burst_event(spec, start, end, spec.center_offset));
        start = end + idle;
    }
    Ok(Waveform { signal, events })
}

fn burst_event(spec: &WaveformSpec, start: usize, end: usize, fc: f64) -> BurstEvent {
    BurstEvent {
        technology: spec.technology,
        t_start: start as f64 / spec.sample_rate,
        t_end: end as f64 / spec.sample_rate,
        f_low: fc - spec.bandwidth / 2.0,
        f_high: fc + spec.bandwidth / 2.0,
    }
}

/// Write `amp * burst[k] * exp(j 2 pi f_norm (start + k))` into `out`.
fn write_burst(out: &mut [Complex64], start: usize, burst: &[Complex64], amp: f64, f_norm: f64) {
    for (k, (dst, &b)) in out[start..].iter_mut().zip(burst).enumerate() {
        *dst = b * amp * rotor(f_norm, start + k);
    }
}

/// `exp(j 2 pi f_norm n)` with the phase reduced before the trig call.
fn rotor(f_norm: f64, n: usize) -> Complex64 {
    if f_norm == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let cycles = (f_norm * n as f64).rem_euclid(1.0);
    Complex64::from_polar(1.0, 2.0 * PI * cycles)
}

/// Multiply by a complex exponential at `offset` Hz.
///
/// `bandwidth` is the occupied bandwidth of `sig`; the shifted band must
/// stay within the +/-40 MHz simulation band.
pub fn shift_to_offset(sig: &ComplexSignal, offset: f64, bandwidth: f64) -> Result<ComplexSignal> {
    check_in_band(offset, bandwidth, sig.sample_rate)?;
    let f_norm = offset / sig.sample_rate;
    let samples = sig
        .samples
        .iter()
        .enumerate()
        .map(|(n, &s)| s * rotor(f_norm, n))
        .collect();
    Ok(ComplexSignal {
        sample_rate: sig.sample_rate,
        samples,
    })
}

/// Width of the band holding `fraction` of the power of `samples`
/// (centered, with equal tails cut on each side), from a Welch periodogram
/// with Hann segments of `nfft` samples.
pub fn occupied_bandwidth(samples: &[Complex64], fs: f64, fraction: f64, nfft: usize) -> f64 {
    use rustfft::FftPlanner;
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let window: Vec<f64> = (0..nfft)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / nfft as f64).cos())
        .collect();
    let mut psd = vec![0.0; nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    let hop = nfft / 2;
    let mut start = 0;
    while start + nfft <= samples.len() {
        for (b, (&x, &w)) in buf.iter_mut().zip(samples[start..].iter().zip(&window)) {
            *b = x * w;
        }
        fft.process(&mut buf);
        for (p, b) in psd.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
        start += hop;
    }
    // fftshift so index order is ascending frequency
    psd.rotate_left(nfft / 2);
    let total: f64 = psd.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let tail = 0.5 * (1.0 - fraction) * total;
    let mut acc = 0.0;
    let mut lo = 0;
    for (k, p) in psd.iter().enumerate() {
        acc += p;
        if acc > tail {
            lo = k;
            break;
        }
    }
    acc = 0.0;
    let mut hi = nfft - 1;
    for (k, p) in psd.iter().enumerate().rev() {
        acc += p;
        if acc > tail {
            hi = k;
            break;
        }
    }
    (hi + 1 - lo) as f64 * fs / nfft as f64
}
