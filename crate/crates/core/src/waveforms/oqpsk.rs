//! Offset QPSK with half-sine chip shaping.
//!
//! Chip `c` starts at sample `c * sps` and lasts `2 * sps` samples, even
//! chips on I and odd chips on Q. The rails are a half-chip apart, so once
//! both are running `I^2 + Q^2 = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::seed::SimRng;

pub(crate) fn modulate(rng: &mut SimRng, len: usize, sps: usize) -> Vec<Complex64> {
    let pulse_len = 2 * sps;
    let pulse: Vec<f64> = (0..pulse_len)
        .map(|j| (PI * (j as f64 + 0.5) / pulse_len as f64).sin())
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let mut chip = 0usize;
    while chip * sps + pulse_len <= len {
        let a = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let start = chip * sps;
        for (o, &p) in out[start..start + pulse_len].iter_mut().zip(&pulse) {
            if chip.is_multiple_of(2) {
                o.re = a * p;
            } else {
                o.im = a * p;
            }
        }
        chip += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn envelope_is_flat_after_first_half_chip() {
        let mut rng = seed::rng(1);
        let sps = 20;
        let burst = modulate(&mut rng, 4000, sps);
        for s in &burst[sps..burst.len() - sps] {
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
        assert!(burst.iter().all(|s| s.norm() > 0.0));
    }
}
