//! Frame-level spectral descriptors: energy, band slopes, alpha ratio,
//! centroid and MFCCs.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::FrameSequence;
use crate::stats;

pub const N_MEL_FILTERS: usize = 26;
pub const MEL_LOW_HZ: f64 = 50.0;
pub const MEL_HIGH_HZ: f64 = 8000.0;
const LOG_FLOOR: f64 = 1e-12;

/// Low-level descriptors of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLld {
    /// RMS energy in dB full scale, floored at -120.
    pub energy_db: f64,
    /// Regression slope of the dB spectrum over 0-500 Hz, dB/Hz.
    pub slope_0_500: f64,
    /// Regression slope of the dB spectrum over 500-1500 Hz, dB/Hz.
    pub slope_500_1500: f64,
    /// Energy in 1-5 kHz over energy in 50 Hz-1 kHz, dB.
    pub alpha_ratio: f64,
    pub centroid_hz: f64,
    /// MFCC 1-4.
    pub mfcc: [f64; 4],
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Hamming-windowed power spectra plus a triangular mel filterbank.
pub struct SpectralAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    window: Vec<f64>,
    window_power: f64,
    sample_rate: f64,
    /// Per filter: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
}

impl SpectralAnalyzer {
    pub fn new(frame_len: usize, sample_rate: u32) -> Self {
        let fft_size = frame_len.next_power_of_two().max(2);
        let window: Vec<f64> = (0..frame_len)
            .map(|n| {
                if frame_len == 1 {
                    1.0
                } else {
                    0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1) as f64).cos()
                }
            })
            .collect();
        let window_power = window.iter().map(|w| w * w).sum::<f64>();
        let sample_rate = sample_rate as f64;
        let filters = mel_filterbank(fft_size, sample_rate);
        Self {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            window,
            window_power,
            sample_rate,
            filters,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }

    /// One-sided power spectrum normalized by the window energy.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n_bins()]
            .iter()
            .map(|c| c.norm_sqr() / self.window_power)
            .collect()
    }

    /// Log mel energies followed by an orthonormal DCT-II; returns
    /// coefficients `0..n_coeffs`.
    pub fn mfcc(&self, power: &[f64], n_coeffs: usize) -> Vec<f64> {
        let log_mel: Vec<f64> = self
            .filters
            .iter()
            .map(|(start, weights)| {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*start..])
                    .map(|(w, p)| w * p)
                    .sum();
                (e + LOG_FLOOR).ln()
            })
            .collect();
        let m = log_mel.len() as f64;
        (0..n_coeffs)
            .map(|k| {
                let norm = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
                norm * log_mel
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
                    .sum::<f64>()
            })
            .collect()
    }

    fn band_energy(&self, power: &[f64], lo: f64, hi: f64) -> f64 {
        power
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = self.bin_hz(*k);
                f >= lo && f <= hi
            })
            .map(|(_, p)| p)
            .sum()
    }

    /// Least-squares slope of the dB spectrum against frequency over
    /// `[lo, hi]`.
    fn band_slope(&self, power: &[f64], lo: f64, hi: f64) -> f64 {
        let pts: Vec<(f64, f64)> = power
            .iter()
            .enumerate()
            .map(|(k, &p)| (self.bin_hz(k), 10.0 * (p + LOG_FLOOR).log10()))
            .filter(|(f, _)| *f >= lo && *f <= hi)
            .collect();
        if pts.len() < 2 {
            return 0.0;
        }
        let n = pts.len() as f64;
        let mf = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|(f, y)| (f - mf) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(f, _)| (f - mf) * (f - mf)).sum();
        sxy / sxx
    }

    pub fn frame_lld(&self, frame: &[f64]) -> FrameLld {
        let ms = frame.iter().map(|x| x * x).sum::<f64>() / frame.len().max(1) as f64;
        let power = self.power_spectrum(frame);
        let total: f64 = power.iter().sum();
        let centroid_hz = if total > 0.0 {
            power
                .iter()
                .enumerate()
                .map(|(k, p)| self.bin_hz(k) * p)
                .sum::<f64>()
                / total
        } else {
            0.0
        };
        let high = self.band_energy(&power, 1000.0, 5000.0);
        let low = self.band_energy(&power, 50.0, 1000.0);
        let alpha_ratio = 10.0 * ((high + LOG_FLOOR) / (low + LOG_FLOOR)).log10();
        let c = self.mfcc(&power, 5);
        FrameLld {
            energy_db: stats::power_db(ms),
            slope_0_500: self.band_slope(&power, 0.0, 500.0),
            slope_500_1500: self.band_slope(&power, 500.0, 1500.0),
            alpha_ratio,
            centroid_hz,
            mfcc: [c[1], c[2], c[3], c[4]],
        }
    }
}

fn mel_filterbank(fft_size: usize, sample_rate: f64) -> Vec<(usize, Vec<f64>)> {
    let high = MEL_HIGH_HZ.min(sample_rate / 2.0);
    let (mel_lo, mel_hi) = (hz_to_mel(MEL_LOW_HZ), hz_to_mel(high));
    let edges: Vec<f64> = (0..N_MEL_FILTERS + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (N_MEL_FILTERS + 1) as f64))
        .collect();
    let n_bins = fft_size / 2 + 1;
    let bin_hz = |k: usize| k as f64 * sample_rate / fft_size as f64;
    (0..N_MEL_FILTERS)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let weights: Vec<(usize, f64)> = (0..n_bins)
                .filter_map(|k| {
                    let f = bin_hz(k);
                    let w = if f > left && f <= center {
                        (f - left) / (center - left)
                    } else if f > center && f < right {
                        (right - f) / (right - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            match (weights.first(), weights.last()) {
                (Some(&(first, _)), Some(&(last, _))) => {
                    let mut dense = vec![0.0; last - first + 1];
                    for (k, w) in weights {
                        dense[k - first] = w;
                    }
                    (first, dense)
                }
                // A filter narrower than one bin contributes nothing.
                _ => (0, Vec::new()),
            }
        })
        .collect()
}

/// Descriptors for every frame of `frames`.
pub fn compute_lld(frames: &FrameSequence) -> Vec<FrameLld> {
    if frames.n_frames() == 0 {
        return Vec::new();
    }
    let analyzer = SpectralAnalyzer::new(frames.frame_len(), frames.sample_rate());
    frames.iter().map(|f| analyzer.frame_lld(f)).collect()
}

/// MFCC vectors (coefficients `0..n_coeffs`) for every frame.
pub fn mfcc_frames(frames: &FrameSequence, n_coeffs: usize) -> Vec<Vec<f64>> {
    if frames.n_frames() == 0 {
        return Vec::new();
    }
    let analyzer = SpectralAnalyzer::new(frames.frame_len(), frames.sample_rate());
    frames
        .iter()
        .map(|f| analyzer.mfcc(&analyzer.power_spectrum(f), n_coeffs))
        .collect()
}
