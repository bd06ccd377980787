//! Short-time Fourier transform and the 256x256 normalized spectrogram
//! image.
//!
//! STFT output is density-scaled: `|R|^2` is a power spectral density in
//! mW/Hz (dBm/Hz after `10 log10`). Frequency bins are two-sided with DC in
//! the middle. The image is built in the dB domain:
//!
//! 1. `10 log10` with a -200 dB floor for empty cells,
//! 2. clip to [-130, -50] dB,
//! 3. mean-pool rectangular cells (16 bins by `frames / 256` frames,
//!    leftover frames at the end dropped),
//! 4. min-max normalize to [0, 1]; a constant image maps to all zeros.
//!
//! Image rows run from the highest frequency (row 0) down to the lowest,
//! columns run forward in time.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelRealization};
use crate::error::{param, Result};
use crate::waveforms::ComplexSignal;

pub const DB_FLOOR: f64 = -200.0;
pub const DB_MIN: f64 = -130.0;
pub const DB_MAX: f64 = -50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub fft_length: usize,
    pub window: WindowKind,
    pub window_length: usize,
    pub overlap: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fft_length: 4096,
            window: WindowKind::Hann,
            window_length: 256,
            overlap: 100,
        }
    }
}

impl StftConfig {
    pub fn hop(&self) -> usize {
        self.window_length - self.overlap
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overlap < self.window_length && self.window_length <= self.fft_length) {
            return param(format!(
                "need overlap < window_length <= fft_length, got {} / {} / {}",
                self.overlap, self.window_length, self.fft_length
            ));
        }
        if self.window_length < 2 {
            return param("window must have at least two samples");
        }
        Ok(())
    }

    /// `floor((n - window) / hop) + 1`.
    pub fn frame_count(&self, n: usize) -> Result<usize> {
        self.validate()?;
        if n < self.window_length {
            return param(format!(
                "signal of {n} samples is shorter than one {}-sample window",
                self.window_length
            ));
        }
        Ok((n - self.window_length) / self.hop() + 1)
    }

    /// Symmetric window coefficients.
    pub fn window_coefficients(&self) -> Vec<f64> {
        let n = self.window_length;
        let denom = (n - 1) as f64;
        let (a0, a1) = match self.window {
            WindowKind::Hann => (0.5, 0.5),
            WindowKind::Hamming => (0.54, 0.46),
        };
        (0..n)
            .map(|i| a0 - a1 * (2.0 * PI * i as f64 / denom).cos())
            .collect()
    }
}

/// Time-frequency matrix, `freq_axis.len()` bins by `time_axis.len()`
/// frames. Stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TfGrid<T> {
    values: Vec<T>,
    pub freq_axis: Vec<f64>,
    pub time_axis: Vec<f64>,
}

impl<T: Copy> TfGrid<T> {
    pub fn from_frames(frames: Vec<Vec<T>>, freq_axis: Vec<f64>, time_axis: Vec<f64>) -> Result<Self> {
        if frames.len() != time_axis.len() || frames.iter().any(|f| f.len() != freq_axis.len()) {
            return param("grid dimensions do not match its axes");
        }
        let increasing = |a: &[f64]| a.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&freq_axis) || !increasing(&time_axis) {
            return param("grid axes must be strictly increasing");
        }
        Ok(TfGrid {
            values: frames.into_iter().flatten().collect(),
            freq_axis,
            time_axis,
        })
    }

    pub fn bins(&self) -> usize {
        self.freq_axis.len()
    }

    pub fn frames(&self) -> usize {
        self.time_axis.len()
    }

    pub fn get(&self, bin: usize, frame: usize) -> T {
        self.values[frame * self.bins() + bin]
    }

    pub fn frame(&self, frame: usize) -> &[T] {
        let b = self.bins();
        &self.values[frame * b..(frame + 1) * b]
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> TfGrid<U> {
        TfGrid {
            values: self.values.iter().map(|&v| f(v)).collect(),
            freq_axis: self.freq_axis.clone(),
            time_axis: self.time_axis.clone(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Planned transform plus window; reusable across frames and threads.
///
/// A frame has only `window_length` nonzero inputs, so when that divides
/// `fft_length = P * L` the transform is split into `P` transforms of
/// length `L`: `X[P m + r] = FFT_L(x[n] e^{-j 2 pi r n / N})[m]`. The window,
/// density scale and twiddles are folded into one coefficient table.
struct FramePlan {
    fft: Arc<dyn Fft<f64>>,
    /// `coeffs[r * L + n]`, zero past the window.
    coeffs: Vec<Complex64>,
    /// Transform output index holding DC-centered bin `k`.
    source: Vec<usize>,
    window_length: usize,
    segment: usize,
    nfft: usize,
    hop: usize,
}

impl FramePlan {
    fn new(cfg: &StftConfig, fs: f64) -> Result<Self> {
        cfg.validate()?;
        let window = cfg.window_coefficients();
        let energy: f64 = window.iter().map(|w| w * w).sum();
        let scale = 1.0 / (fs * energy).sqrt();
        let nfft = cfg.fft_length;
        let segment = if nfft.is_multiple_of(cfg.window_length) { cfg.window_length } else { nfft };
        let phases = nfft / segment;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); nfft];
        for r in 0..phases {
            for (n, &w) in window.iter().enumerate() {
                let turn = ((r * n) % nfft) as f64 / nfft as f64;
                coeffs[r * segment + n] = Complex64::from_polar(w * scale, -2.0 * PI * turn);
            }
        }
        let mut source = vec![0; nfft];
        for i in 0..nfft {
            source[(phases * (i % segment) + i / segment + nfft / 2) % nfft] = i;
        }
        Ok(FramePlan {
            fft: FftPlanner::new().plan_fft_forward(segment),
            coeffs,
            source,
            window_length: cfg.window_length,
            segment,
            nfft,
            hop: cfg.hop(),
        })
    }

    /// Raw transform of frame `j` into `buf`; read it through
    /// [`FramePlan::centered`].
    fn transform(&self, samples: &[Complex64], j: usize, buf: &mut Vec<Complex64>, fft_scratch: &mut Vec<Complex64>) {
        let frame = &samples[j * self.hop..j * self.hop + self.window_length];
        if buf.len() != self.nfft {
            buf.clear();
            buf.resize(self.nfft, Complex64::new(0.0, 0.0));
        }
        for (seg, coeffs) in buf.chunks_exact_mut(self.segment).zip(self.coeffs.chunks_exact(self.segment)) {
            for ((s, &x), &c) in seg.iter_mut().zip(frame).zip(coeffs) {
                *s = x * c;
            }
            // past the window the slot still holds the previous output
            seg[frame.len()..].fill(Complex64::new(0.0, 0.0));
        }
        let need = self.fft.get_inplace_scratch_len();
        if fft_scratch.len() < need {
            fft_scratch.resize(need, Complex64::new(0.0, 0.0));
        }
        // batched: one length-`segment` transform per chunk
        self.fft.process_with_scratch(buf, &mut fft_scratch[..need]);
    }

    /// Transform output in ascending frequency order.
    fn centered<'a>(&'a self, buf: &'a [Complex64]) -> impl Iterator<Item = Complex64> + 'a {
        self.source.iter().map(move |&i| buf[i])
    }
}

pub fn freq_axis(cfg: &StftConfig, fs: f64) -> Vec<f64> {
    let n = cfg.fft_length;
    let half = (n / 2) as f64;
    (0..n).map(|k| (k as f64 - half) * fs / n as f64).collect()
}

/// Frame centers, seconds.
pub fn time_axis(cfg: &StftConfig, fs: f64, frames: usize) -> Vec<f64> {
    let hop = cfg.hop() as f64;
    let centre = cfg.window_length as f64 / 2.0;
    (0..frames).map(|j| (j as f64 * hop + centre) / fs).collect()
}

/// Full complex STFT. Holds every frame in memory (about 670 MB for a
/// 20 ms scene at the default settings); scenes use
/// [`spectrogram_image`] instead.
pub fn stft(sig: &ComplexSignal, cfg: &StftConfig) -> Result<TfGrid<Complex64>> {
    let frames = cfg.frame_count(sig.len())?;
    let plan = FramePlan::new(cfg, sig.sample_rate)?;
    let values: Vec<Vec<Complex64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, scratch), j| {
                plan.transform(&sig.samples, j, buf, scratch);
                plan.centered(buf).collect()
            },
        )
        .collect();
    TfGrid::from_frames(values, freq_axis(cfg, sig.sample_rate), time_axis(cfg, sig.sample_rate, frames))
}

/// `|R|^2` element-wise.
pub fn power(tf: &TfGrid<Complex64>) -> TfGrid<f64> {
    tf.map(|z| z.norm_sqr())
}

pub fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// `DB_MIN` and `DB_MAX` as linear power densities. Clipping in dB and
/// clamping before the logarithm are equivalent.
const LIN_MIN: f64 = 1e-13;
const LIN_MAX: f64 = 1e-5;
/// Products of this many clamped powers stay within f64 range.
const PRODUCT_RUN: usize = 16;

/// Mapping between image pixels and physical time-frequency cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub rows: usize,
    pub cols: usize,
    pub bins_per_row: usize,
    pub frames_per_col: usize,
    /// Lower edge of the lowest row, Hz.
    pub f_low: f64,
    pub row_height: f64,
    /// Left edge of column 0, seconds.
    pub t_start: f64,
    pub col_width: f64,
}

impl ImageGeometry {
    /// Geometry of a `rows x cols` image pooled from a grid with the given
    /// (uniform) axes.
    pub fn from_axes(freq_axis: &[f64], time_axis: &[f64], rows: usize, cols: usize) -> Result<Self> {
        let (bins, frames) = (freq_axis.len(), time_axis.len());
        if rows == 0 || cols == 0 || bins < rows.max(2) || frames < cols.max(2) {
            return param(format!(
                "cannot pool a {bins}x{frames} grid into {rows}x{cols} pixels"
            ));
        }
        if bins % rows != 0 {
            return param(format!("{bins} frequency bins do not split into {rows} rows"));
        }
        let df = freq_axis[1] - freq_axis[0];
        let dt = time_axis[1] - time_axis[0];
        let bins_per_row = bins / rows;
        let frames_per_col = frames / cols;
        Ok(ImageGeometry {
            rows,
            cols,
            bins_per_row,
            frames_per_col,
            f_low: freq_axis[0] - df / 2.0,
            row_height: bins_per_row as f64 * df,
            t_start: time_axis[0] - dt / 2.0,
            col_width: frames_per_col as f64 * dt,
        })
    }

    /// Geometry for a signal of `n` samples under `cfg`.
    pub fn for_signal(n: usize, fs: f64, cfg: &StftConfig, rows: usize, cols: usize) -> Result<Self> {
        let frames = cfg.frame_count(n)?;
        ImageGeometry::from_axes(&freq_axis(cfg, fs), &time_axis(cfg, fs, frames), rows, cols)
    }

    /// `[low, high)` frequency edges of pixel row `row`, Hz.
    pub fn row_band(&self, row: usize) -> (f64, f64) {
        let from_bottom = (self.rows - 1 - row) as f64;
        let lo = self.f_low + from_bottom * self.row_height;
        (lo, lo + self.row_height)
    }

    /// `[start, end)` time edges of pixel column `col`, seconds.
    pub fn col_interval(&self, col: usize) -> (f64, f64) {
        let start = self.t_start + col as f64 * self.col_width;
        (start, start + self.col_width)
    }

    pub fn freq_span(&self) -> [f64; 2] {
        [self.f_low, self.f_low + self.rows as f64 * self.row_height]
    }

    pub fn time_span(&self) -> [f64; 2] {
        [self.t_start, self.t_start + self.cols as f64 * self.col_width]
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Normalized spectrogram image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramImage {
    pub geometry: ImageGeometry,
    pub pixels: Vec<f32>,
    pub db_range: [f64; 2],
}

impl SpectrogramImage {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.geometry.cols + col]
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }
}

/// Running sums of clipped dB per row for one pixel column.
struct ColumnPool<'a> {
    geom: &'a ImageGeometry,
    sums: Vec<f64>,
}

impl<'a> ColumnPool<'a> {
    fn new(geom: &'a ImageGeometry) -> Self {
        ColumnPool {
            geom,
            sums: vec![0.0; geom.rows],
        }
    }

    /// Add one frame, bins in ascending frequency. Logs are taken of
    /// short products rather than of every bin.
    fn add(&mut self, power: impl Iterator<Item = f64>) {
        let bpr = self.geom.bins_per_row;
        let mut power = power.take(self.geom.rows * bpr);
        // lowest frequencies go to the bottom row
        for sum in self.sums.iter_mut().rev() {
            let mut left = bpr;
            while left > 0 {
                let run = left.min(PRODUCT_RUN);
                let product: f64 = power.by_ref().take(run).map(|p| p.clamp(LIN_MIN, LIN_MAX)).product();
                *sum += 10.0 * product.log10();
                left -= run;
            }
        }
    }

    /// Mean clipped dB per row.
    fn finish(mut self) -> Vec<f64> {
        let count = (self.geom.bins_per_row * self.geom.frames_per_col) as f64;
        self.sums.iter_mut().for_each(|s| *s /= count);
        self.sums
    }
}

fn normalize(geom: ImageGeometry, columns: Vec<Vec<f64>>) -> SpectrogramImage {
    let mut cells = vec![0.0f64; geom.len()];
    for (c, column) in columns.iter().enumerate() {
        for (r, &v) in column.iter().enumerate() {
            cells[r * geom.cols + c] = v;
        }
    }
    let lo = cells.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if hi > lo {
        cells.iter().map(|&v| ((v - lo) / (hi - lo)) as f32).collect()
    } else {
        vec![0.0; cells.len()]
    };
    SpectrogramImage {
        geometry: geom,
        pixels,
        db_range: [DB_MIN, DB_MAX],
    }
}

/// Convert a power-density grid into a `rows x cols` normalized image.
pub fn to_image(psd: &TfGrid<f64>, rows: usize, cols: usize) -> Result<SpectrogramImage> {
    let geom = ImageGeometry::from_axes(&psd.freq_axis, &psd.time_axis, rows, cols)?;
    let columns = (0..cols)
        .map(|c| {
            let mut pool = ColumnPool::new(&geom);
            for j in c * geom.frames_per_col..(c + 1) * geom.frames_per_col {
                pool.add(psd.frame(j).iter().copied());
            }
            pool.finish()
        })
        .collect();
    Ok(normalize(geom, columns))
}

/// Streaming equivalent of `to_image(power(stft(sig)))`: frames are
/// computed per pixel column, in parallel, and never stored.
pub fn spectrogram_image(sig: &ComplexSignal, cfg: &StftConfig, rows: usize, cols: usize) -> Result<SpectrogramImage> {
    let fs = sig.sample_rate;
    let geom = ImageGeometry::for_signal(sig.len(), fs, cfg, rows, cols)?;
    let plan = FramePlan::new(cfg, fs)?;
    let columns = (0..cols)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(buf, scratch), c| {
                let mut pool = ColumnPool::new(&geom);
                for j in c * geom.frames_per_col..(c + 1) * geom.frames_per_col {
                    plan.transform(&sig.samples, j, buf, scratch);
                    pool.add(plan.centered(buf).map(|z| z.norm_sqr()));
                }
                pool.finish()
            },
        )
        .collect();
    Ok(normalize(geom, columns))
}

/// Channel frequency response `A * sum_k g_k exp(-j 2 pi f tau_k)` on the
/// STFT frequency axis, with delays rounded to whole samples.
fn channel_response(ch: &ChannelRealization, axis: &[f64], fs: f64) -> Vec<Complex64> {
    let scale = ch.amplitude_scale();
    axis.iter()
        .map(|&f| {
            ch.taps
                .iter()
                .map(|t| {
                    let tau = (t.delay * fs).round() / fs;
                    t.gain * Complex64::from_polar(1.0, -2.0 * PI * f * tau)
                })
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// Largest deviation between the spectrogram of the channel output and the
/// product approximation `|S(t,f) H(f)|^2`, relative to the peak of the
/// true spectrogram. Exact (up to rounding) for a single zero-delay tap;
/// frequency-selective channels give a positive error.
pub fn verify_tf_approximation(sig: &ComplexSignal, ch: &ChannelRealization, cfg: &StftConfig) -> Result<f64> {
    let frames = cfg.frame_count(sig.len())?;
    let fs = sig.sample_rate;
    let plan = FramePlan::new(cfg, fs)?;
    let response = channel_response(ch, &freq_axis(cfg, fs), fs);
    let received = apply_channel(sig, ch);

    let (max_diff, max_ref) = (0..frames)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(tx, rx, scratch), j| {
                plan.transform(&sig.samples, j, tx, scratch);
                plan.transform(&received.samples, j, rx, scratch);
                let mut diff = 0.0f64;
                let mut peak = 0.0f64;
                for ((t, r), h) in plan.centered(tx).zip(plan.centered(rx)).zip(&response) {
                    let truth = r.norm_sqr();
                    let approx = (t * h).norm_sqr();
                    diff = diff.max((truth - approx).abs());
                    peak = peak.max(truth);
                }
                (diff, peak)
            },
        )
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(if max_ref > 0.0 { max_diff / max_ref } else { max_diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Tap;
    use crate::SAMPLE_RATE;

    fn tone(freq: f64, n: usize) -> ComplexSignal {
        ComplexSignal {
            sample_rate: SAMPLE_RATE,
            samples: (0..n)
                .map(|i| Complex64::from_polar(1e-3, 2.0 * PI * freq * i as f64 / SAMPLE_RATE))
                .collect(),
        }
    }

    fn grid_with(bins: usize, frames: usize, f: impl Fn(usize, usize) -> f64) -> TfGrid<f64> {
        let values = (0..frames).map(|j| (0..bins).map(|k| f(k, j)).collect()).collect();
        let freq = (0..bins).map(|k| k as f64).collect();
        let time = (0..frames).map(|j| j as f64).collect();
        TfGrid::from_frames(values, freq, time).unwrap()
    }

    #[test]
    fn frame_count_for_a_scene() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.hop(), 156);
        assert_eq!(cfg.frame_count(1_600_000).unwrap(), 10_255);
        assert_eq!(cfg.frame_count(256).unwrap(), 1);
        assert!(cfg.frame_count(255).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = StftConfig { overlap: 256, ..StftConfig::default() };
        assert!(bad.validate().is_err());
        let bad = StftConfig { window_length: 8192, ..StftConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn windows_are_symmetric() {
        for window in [WindowKind::Hann, WindowKind::Hamming] {
            let w = StftConfig { window, ..StftConfig::default() }.window_coefficients();
            for i in 0..128 {
                assert!((w[i] - w[255 - i]).abs() < 1e-12);
            }
        }
        let hann = StftConfig::default().window_coefficients();
        assert!(hann[0].abs() < 1e-15);
    }

    #[test]
    fn tone_peaks_at_nearest_bin() {
        let cfg = StftConfig::default();
        for f in [0.0, 3.1e6, -17.77e6, 25e6] {
            let grid = power(&stft(&tone(f, 2000), &cfg).unwrap());
            let expected = (f / (SAMPLE_RATE / 4096.0)).round() as i64 + 2048;
            for j in 0..grid.frames() {
                let frame = grid.frame(j);
                let peak = (0..4096).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
                assert_eq!(peak as i64, expected, "tone {f}");
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_grid() {
        let grid = stft(&ComplexSignal::zeros(SAMPLE_RATE, 1000), &StftConfig::default()).unwrap();
        assert!(grid.values().iter().all(|z| z.norm() == 0.0));
        assert!(power(&grid).values().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn axes_are_centered_and_increasing() {
        let cfg = StftConfig::default();
        let f = freq_axis(&cfg, SAMPLE_RATE);
        assert_eq!(f[2048], 0.0);
        assert_eq!(f[0], -40e6);
        assert!(f.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn power_of_three_four_is_25() {
        let grid = TfGrid::from_frames(vec![vec![Complex64::new(3.0, 4.0)]], vec![0.0], vec![0.0]).unwrap();
        assert_eq!(power(&grid).get(0, 0), 25.0);
    }

    #[test]
    fn power_ignores_global_phase() {
        let sig = tone(1.3e6, 1200);
        let rotated = ComplexSignal {
            sample_rate: SAMPLE_RATE,
            samples: sig.samples.iter().map(|s| s * Complex64::from_polar(1.0, 0.7)).collect(),
        };
        let cfg = StftConfig::default();
        let a = power(&stft(&sig, &cfg).unwrap());
        let b = power(&stft(&rotated, &cfg).unwrap());
        let peak = a.values().iter().copied().fold(0.0, f64::max);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn density_scaling_of_white_noise() {
        // White noise of density N0 should read N0 on average in every bin.
        use crate::channel::add_awgn;
        let n0_dbm = -100.0;
        let sig = add_awgn(&ComplexSignal::zeros(SAMPLE_RATE, 200_000), n0_dbm, 5);
        let grid = power(&stft(&sig, &StftConfig::default()).unwrap());
        let mean = grid.values().iter().sum::<f64>() / grid.values().len() as f64;
        assert!((to_db(mean) - n0_dbm).abs() < 0.1, "{}", to_db(mean));
    }

    #[test]
    fn uniform_grid_maps_to_zeros() {
        let psd = grid_with(512, 512, |_, _| 1e-9); // -90 dB
        let img = to_image(&psd, 256, 256).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn two_level_grid_is_binary() {
        let psd = grid_with(512, 512, |k, j| if (k / 2 + j / 2) % 3 == 0 { 1e-5 } else { 1e-13 });
        let img = to_image(&psd, 256, 256).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0 || p == 1.0));
        assert!(img.pixels.contains(&0.0) && img.pixels.contains(&1.0));
    }

    #[test]
    fn values_below_range_clip() {
        // -140 dB and -130 dB are indistinguishable after clipping
        let a = to_image(&grid_with(512, 512, |k, _| if k < 256 { 1e-14 } else { 1e-6 }), 256, 256).unwrap();
        let b = to_image(&grid_with(512, 512, |k, _| if k < 256 { 1e-13 } else { 1e-6 }), 256, 256).unwrap();
        assert_eq!(a, b);
        let c = to_image(&grid_with(512, 512, |k, _| if k < 256 { 0.0 } else { 1e-6 }), 256, 256).unwrap();
        assert_eq!(a, c);
        assert_eq!(to_db(0.0), DB_FLOOR);
        assert!((10.0 * LIN_MIN.log10() - DB_MIN).abs() < 1e-12);
        assert!((10.0 * LIN_MAX.log10() - DB_MAX).abs() < 1e-12);
    }

    #[test]
    fn rows_run_top_down_in_frequency() {
        // energy only in the highest bins lands in row 0
        let img = to_image(&grid_with(512, 512, |k, _| if k >= 510 { 1e-6 } else { 0.0 }), 256, 256).unwrap();
        assert!((0..256).all(|c| img.get(0, c) == 1.0));
        assert!((1..256).all(|r| img.get(r, 0) == 0.0));
    }

    #[test]
    fn leftover_frames_are_dropped() {
        let psd = grid_with(256, 300, |_, j| if j >= 256 { 1e-6 } else { 1e-12 });
        let img = to_image(&psd, 256, 256).unwrap();
        assert_eq!(img.geometry.frames_per_col, 1);
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn too_small_grid_is_rejected() {
        assert!(to_image(&grid_with(128, 512, |_, _| 1.0), 256, 256).is_err());
        assert!(to_image(&grid_with(512, 100, |_, _| 1.0), 256, 256).is_err());
        assert!(to_image(&grid_with(300, 512, |_, _| 1.0), 256, 256).is_err());
    }

    #[test]
    fn streaming_matches_materialized() {
        let cfg = StftConfig::default();
        let n = 256 + 155 * 300;
        let mut sig = tone(5e6, n);
        for (i, s) in sig.samples.iter_mut().enumerate() {
            if (i / 3000) % 2 == 0 {
                *s *= 0.01;
            }
        }
        let a = to_image(&power(&stft(&sig, &cfg).unwrap()), 256, 256).unwrap();
        let b = spectrogram_image(&sig, &cfg, 256, 256).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_geometry() {
        let g = ImageGeometry::for_signal(1_600_000, SAMPLE_RATE, &StftConfig::default(), 256, 256).unwrap();
        assert_eq!(g.bins_per_row, 16);
        assert_eq!(g.frames_per_col, 40);
        assert!((g.row_height - 312_500.0).abs() < 1e-6);
        assert!((g.col_width - 40.0 * 156.0 / 80e6).abs() < 1e-15);
        assert!((g.t_start - 50.0 / 80e6).abs() < 1e-15);
        let [lo, hi] = g.freq_span();
        assert!((lo + 40e6 + 9765.625).abs() < 1e-6);
        assert!((hi - lo - 80e6).abs() < 1e-6);
        let (top_lo, top_hi) = g.row_band(0);
        assert!((top_hi - hi).abs() < 1e-6 && top_lo < top_hi);
    }

    #[test]
    fn tf_approximation_exact_for_flat_channel() {
        let sig = tone(2e6, 4000);
        let cfg = StftConfig::default();
        let err = verify_tf_approximation(&sig, &ChannelRealization::identity(0.0), &cfg).unwrap();
        assert!(err <= 1e-9, "{err}");
        let mut half = ChannelRealization::identity(0.0);
        half.taps[0].gain = Complex64::new(0.5, 0.0);
        assert!(verify_tf_approximation(&sig, &half, &cfg).unwrap() <= 1e-9);
    }

    #[test]
    fn tf_approximation_inexact_for_two_taps() {
        let mut sig = tone(2e6, 6000);
        for s in sig.samples.iter_mut().skip(3000) {
            *s = -*s;
        }
        let ch = ChannelRealization {
            taps: vec![
                Tap { delay: 0.0, gain: Complex64::new(0.8, 0.0) },
                Tap { delay: 1e-6, gain: Complex64::new(0.0, 0.5) },
            ],
            path_loss_db: 0.0,
            seed: 0,
        };
        let err = verify_tf_approximation(&sig, &ch, &StftConfig::default()).unwrap();
        assert!(err > 0.0);
    }
}
