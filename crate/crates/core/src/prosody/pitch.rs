//! Normalized-autocorrelation pitch tracking and contour slope functionals.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::FrameSequence;
use crate::stats;

/// Reference frequency of the semitone scale (A0).
pub const SEMITONE_REF_HZ: f64 = 27.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchConfig {
    pub min_hz: f64,
    pub max_hz: f64,
    /// Minimum normalized autocorrelation at the chosen lag.
    pub clarity_threshold: f64,
    /// Frames this many dB below the loudest frame are treated as silence.
    pub silence_gate_db: f64,
    /// Peaks within this fraction of the best peak win if they have a shorter lag.
    pub octave_tolerance: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            min_hz: 55.0,
            max_hz: 550.0,
            clarity_threshold: 0.45,
            silence_gate_db: 50.0,
            octave_tolerance: 0.9,
        }
    }
}

/// Per-frame fundamental frequency; 0 marks an unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    pub f0_hz: Vec<f64>,
    /// Semitones above 27.5 Hz, 0 where unvoiced.
    pub f0_semitones: Vec<f64>,
    pub hop: f64,
}

impl PitchContour {
    pub fn from_hz(f0_hz: Vec<f64>, hop: f64) -> Self {
        let f0_semitones = f0_hz.iter().map(|&f| hz_to_semitones(f)).collect();
        Self {
            f0_hz,
            f0_semitones,
            hop,
        }
    }

    pub fn len(&self) -> usize {
        self.f0_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_hz.is_empty()
    }

    pub fn is_voiced(&self, i: usize) -> bool {
        self.f0_hz[i] > 0.0
    }

    pub fn voiced_mask(&self) -> Vec<bool> {
        self.f0_hz.iter().map(|&f| f > 0.0).collect()
    }
}

pub fn hz_to_semitones(hz: f64) -> f64 {
    if hz > 0.0 {
        12.0 * (hz / SEMITONE_REF_HZ).log2()
    } else {
        0.0
    }
}

/// Normalized autocorrelation over a single frame, computed through the FFT.
///
/// `r(τ) = Σ x[n]x[n+τ] / sqrt(Σ x[n]² · Σ x[n+τ]²)` with both energy sums
/// restricted to the overlapping part.
struct Autocorrelator {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    size: usize,
}

impl Autocorrelator {
    fn new(frame_len: usize) -> Self {
        let size = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            size,
        }
    }

    fn normalized(&self, frame: &[f64], max_lag: usize) -> Vec<f64> {
        let n = frame.len();
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.size)
            .collect();
        self.forward.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;

        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for &x in frame {
            prefix.push(prefix.last().unwrap() + x * x);
        }
        (0..=max_lag.min(n - 1))
            .map(|lag| {
                let head = prefix[n - lag];
                let tail = prefix[n] - prefix[lag];
                let denom = (head * tail).sqrt();
                if denom > 0.0 {
                    (buf[lag].re * scale / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Tracks F0 frame by frame.
///
/// Each frame picks the shortest-lag local maximum of the normalized
/// autocorrelation whose height is within `octave_tolerance` of the best
/// peak in `[min_hz, max_hz]`, refined by parabolic interpolation. Frames
/// with clarity below the threshold, zero energy, or energy more than
/// `silence_gate_db` below the loudest frame are unvoiced. Voiced runs are
/// then smoothed by a width-3 median filter.
pub fn estimate_f0(frames: &FrameSequence, cfg: &PitchConfig) -> PitchContour {
    let n_frames = frames.n_frames();
    let hop = frames.hop_seconds();
    if n_frames == 0 {
        return PitchContour::from_hz(Vec::new(), hop);
    }
    let sr = frames.sample_rate() as f64;
    let frame_len = frames.frame_len();

    let energies: Vec<f64> = frames
        .iter()
        .map(|f| f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64)
        .collect();
    let loudest_db = energies
        .iter()
        .map(|&e| stats::power_db(e))
        .fold(f64::NEG_INFINITY, f64::max);

    let min_lag = ((sr / cfg.max_hz).floor() as usize).max(2);
    let max_lag = (sr / cfg.min_hz).ceil() as usize;
    if max_lag + 1 >= frame_len {
        // Frame too short to see a full period of the lowest pitch.
        return PitchContour::from_hz(vec![0.0; n_frames], hop);
    }
    let ac = Autocorrelator::new(frame_len);

    let mut raw = vec![0.0; n_frames];
    for (i, frame) in frames.iter().enumerate() {
        if energies[i] <= 0.0 || stats::power_db(energies[i]) < loudest_db - cfg.silence_gate_db {
            continue;
        }
        let r = ac.normalized(frame, max_lag + 1);
        let peaks: Vec<usize> = (min_lag..=max_lag)
            .filter(|&t| r[t] > r[t - 1] && r[t] >= r[t + 1])
            .collect();
        let Some(best) = peaks.iter().map(|&t| r[t]).reduce(f64::max) else {
            continue;
        };
        let chosen = peaks
            .iter()
            .copied()
            .find(|&t| r[t] >= cfg.octave_tolerance * best)
            .expect("best peak satisfies its own tolerance");
        if r[chosen] < cfg.clarity_threshold {
            continue;
        }
        let (a, b, c) = (r[chosen - 1], r[chosen], r[chosen + 1]);
        let denom = a - 2.0 * b + c;
        let delta = if denom.abs() > 1e-15 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        let lag = chosen as f64 + delta;
        raw[i] = (sr / lag).clamp(cfg.min_hz, cfg.max_hz);
    }

    PitchContour::from_hz(median_smooth_voiced(&raw), hop)
}

/// Width-3 median over the interior of each voiced run; run ends are kept.
fn median_smooth_voiced(f0: &[f64]) -> Vec<f64> {
    let mut out = f0.to_vec();
    for i in 1..f0.len().saturating_sub(1) {
        if f0[i - 1] > 0.0 && f0[i] > 0.0 && f0[i + 1] > 0.0 {
            let mut w = [f0[i - 1], f0[i], f0[i + 1]];
            w.sort_by(f64::total_cmp);
            out[i] = w[1];
        }
    }
    out
}

/// Mean and population standard deviation of rising and falling slopes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlopeStats {
    pub mean_rising: f64,
    pub stddev_rising: f64,
    pub mean_falling: f64,
    pub stddev_falling: f64,
}

impl SlopeStats {
    pub fn from_slopes(rising: &[f64], falling: &[f64]) -> Self {
        Self {
            mean_rising: stats::mean(rising),
            stddev_rising: stats::std_pop(rising),
            mean_falling: stats::mean(falling),
            stddev_falling: stats::std_pop(falling),
        }
    }
}

/// Slopes (units per second) of the maximal strictly rising and strictly
/// falling sub-runs inside each run of `active` frames.
///
/// A sub-run spans frames `i..=j` with `j > i`; its slope is
/// `(v[j] - v[i]) / ((j - i) * hop)`. A turning frame ends one sub-run and
/// starts the next; equal neighbours break both.
pub fn monotone_slopes(values: &[f64], active: &[bool], hop: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    let n = values.len();
    let mut i = 0;
    while i + 1 < n {
        if !(active[i] && active[i + 1]) {
            i += 1;
            continue;
        }
        let up = values[i + 1] > values[i];
        let down = values[i + 1] < values[i];
        if !(up || down) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j + 1 < n
            && active[j + 1]
            && ((up && values[j + 1] > values[j]) || (down && values[j + 1] < values[j]))
        {
            j += 1;
        }
        let slope = (values[j] - values[i]) / ((j - i) as f64 * hop);
        if up {
            rising.push(slope);
        } else {
            falling.push(slope);
        }
        i = j;
    }
    (rising, falling)
}

/// Rising/falling slope statistics of the semitone contour, in semitones
/// per second. All four are 0 when no qualifying sub-run exists.
pub fn slope_functionals(contour: &PitchContour) -> SlopeStats {
    let (rising, falling) =
        monotone_slopes(&contour.f0_semitones, &contour.voiced_mask(), contour.hop);
    SlopeStats::from_slopes(&rising, &falling)
}
