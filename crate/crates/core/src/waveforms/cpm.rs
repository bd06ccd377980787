//! Gaussian-filtered continuous-phase FSK (GFSK, and GMSK when h = 0.5).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use statrs::function::erf::erf;

use crate::seed::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmParams {
    /// Gaussian filter bandwidth-time product.
    pub bt: f64,
    /// Modulation index; peak deviation is `h * symbol_rate / 2`.
    pub h: f64,
}

impl CpmParams {
    pub const BLUETOOTH: CpmParams = CpmParams { bt: 0.5, h: 0.32 };
    pub const SMARTBAN: CpmParams = CpmParams { bt: 0.5, h: 0.5 };
}

/// Symbols of pulse support on each side of the symbol center.
const PULSE_HALF_SPAN: f64 = 2.5;

/// Gaussian-filtered rectangular frequency pulse evaluated at `t` symbol
/// periods from the symbol center. Shifted copies sum to 1.
pub fn frequency_pulse(t: f64, bt: f64) -> f64 {
    let k = PI * bt * (2.0 / std::f64::consts::LN_2).sqrt();
    0.5 * (erf(k * (t + 0.5)) - erf(k * (t - 0.5)))
}

/// `len` unit-amplitude samples of a CPM burst carrying i.i.d. random
/// bits, starting at phase zero.
pub(crate) fn modulate(rng: &mut SimRng, len: usize, sps: usize, params: CpmParams) -> Vec<Complex64> {
    let nsym = len.div_ceil(sps);
    let symbols: Vec<f64> = (0..nsym)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();

    // table[m] for sample offsets m in [-lead, tail) relative to a symbol start
    let lead = ((PULSE_HALF_SPAN - 0.5) * sps as f64).ceil() as usize;
    let tail = ((PULSE_HALF_SPAN + 0.5) * sps as f64).ceil() as usize;
    let table: Vec<f64> = (0..lead + tail)
        .map(|j| {
            let m = j as f64 - lead as f64;
            frequency_pulse((m + 0.5) / sps as f64 - 0.5, params.bt)
        })
        .collect();

    let mut freq = vec![0.0; len];
    for (k, &a) in symbols.iter().enumerate() {
        let origin = (k * sps) as isize - lead as isize;
        let first = origin.max(0) as usize;
        let last = ((origin + table.len() as isize).max(0) as usize).min(len);
        for n in first..last {
            freq[n] += a * table[(n as isize - origin) as usize];
        }
    }

    let step = PI * params.h / sps as f64;
    let mut phase = 0.0f64;
    freq.iter()
        .map(|&f| {
            let s = Complex64::from_polar(1.0, phase);
            phase = (phase + step * f).rem_euclid(2.0 * PI);
            s
        })
        .collect()
}
