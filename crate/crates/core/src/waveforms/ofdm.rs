//! Footprint-equivalent 20 MHz OFDM: 64-tone grid (52 QPSK data tones,
//! DC and edges empty) with a quarter-length cyclic prefix. The IFFT runs
//! directly at the output sample rate, so the grid is zero-extended to
//! `64 * sample_rate / bandwidth` points.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Result};
use crate::seed::SimRng;

const GRID: usize = 64;
const HALF_OCCUPIED: i64 = 26;

pub(crate) struct OfdmModulator {
    ifft: Arc<dyn Fft<f64>>,
    size: usize,
    cp: usize,
}

impl OfdmModulator {
    pub fn new(sample_rate: f64, bandwidth: f64) -> Result<Self> {
        let ratio = sample_rate / bandwidth;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return param(format!("OFDM needs an integer oversampling ratio, got {ratio}"));
        }
        let size = GRID * ratio.round() as usize;
        Ok(OfdmModulator {
            ifft: FftPlanner::new().plan_fft_inverse(size),
            size,
            cp: size / 4,
        })
    }

    /// One packet of `len` samples with unit mean power.
    pub fn packet(&self, rng: &mut SimRng, len: usize) -> Vec<Complex64> {
        let symbol_len = self.size + self.cp;
        let scale = 1.0 / ((2 * HALF_OCCUPIED) as f64).sqrt();
        let mut out = Vec::with_capacity(len + symbol_len);
        let mut grid = vec![Complex64::new(0.0, 0.0); self.size];
        while out.len() < len {
            grid.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
            for k in (-HALF_OCCUPIED..=HALF_OCCUPIED).filter(|&k| k != 0) {
                let re = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if rng.gen::<bool>() { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                grid[k.rem_euclid(self.size as i64) as usize] = Complex64::new(re, im) * scale;
            }
            self.ifft.process(&mut grid);
            out.extend_from_slice(&grid[self.size - self.cp..]);
            out.extend_from_slice(&grid);
        }
        out.truncate(len);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn cyclic_prefix_repeats_symbol_tail() {
        let modem = OfdmModulator::new(80e6, 20e6).unwrap();
        assert_eq!((modem.size, modem.cp), (256, 64));
        let mut rng = seed::rng(3);
        let pkt = modem.packet(&mut rng, 320 * 2);
        for n in 0..64 {
            assert!((pkt[n] - pkt[n + 256]).norm() < 1e-12);
        }
    }

    #[test]
    fn unit_mean_power() {
        let modem = OfdmModulator::new(80e6, 20e6).unwrap();
        let mut rng = seed::rng(4);
        let pkt = modem.packet(&mut rng, 320 * 45);
        for symbol in pkt.chunks(320) {
            let body = &symbol[64..];
            let p: f64 = body.iter().map(|s| s.norm_sqr()).sum::<f64>() / 256.0;
            assert!((p - 1.0).abs() < 1e-9, "{p}");
        }
    }

    #[test]
    fn rejects_fractional_oversampling() {
        assert!(OfdmModulator::new(80e6, 30e6).is_err());
    }
}
