//! The 88-value acoustic-prosodic feature vector.
//!
//! The vector approximates the eGeMAPS parameter set with the descriptors
//! computed in this crate. Names follow eGeMAPS where a counterpart exists;
//! `F0_meanRisingSlope` is the quantity sometimes reported as
//! `F0_avRisingSlope`. The layout, in order:
//!
//! | block | count | contents |
//! |---|---|---|
//! | F0 | 13 | semitone mean, stddev, stddevNorm, pctl 20/50/80, range 20-80; the four slope statistics; Hz mean and stddev (voiced frames only) |
//! | energy | 14 | frame energy (dB) mean, stddev, pctl 20/50/80, range; four slope statistics; voiced/unvoiced mean and stddev |
//! | spectral | 36 | `slope0-500`, `slope500-1500`, `alphaRatio`, `spectralCentroid`, each with mean, stddev, pctl 20/50/80, range, voiced mean/stddev, unvoiced mean |
//! | MFCC | 16 | `mfcc1`..`mfcc4`, each with mean, stddev, voiced mean, voiced stddev |
//! | temporal | 7 | voiced fraction, voiced segments per second, voiced/unvoiced segment length mean and stddev, energy peaks per second |
//! | level | 2 | `equivalentLevel_dBp` over the segment and over voiced frames |
//!
//! Statistics over an empty frame set are 0.

pub mod pitch;
pub mod spectral;

use std::sync::OnceLock;

use thiserror::Error;

pub use pitch::{
    estimate_f0, hz_to_semitones, monotone_slopes, slope_functionals, PitchConfig, PitchContour,
    SlopeStats,
};
pub use spectral::{compute_lld, FrameLld};

use crate::audio::{self, AudioBuffer, AudioError};
use crate::stats::{mean, percentile_sorted, power_db, std_pop};

pub const N_FEATURES: usize = 88;
/// Shortest segment accepted by [`extract_feature_vector`], in seconds.
pub const MIN_SEGMENT_SECONDS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("segment is {0:.3} s long, at least 0.1 s is required")]
    TooShort(f64),
    #[error("feature {name} is not finite ({value})")]
    NonFinite { name: String, value: f64 },
    #[error(transparent)]
    Audio(#[from] AudioError),
}

const SPECTRAL_LLDS: [&str; 4] = ["slope0-500", "slope500-1500", "alphaRatio", "spectralCentroid"];
const SPECTRAL_FUNCS: [&str; 9] = [
    "mean",
    "stddev",
    "pctl20",
    "pctl50",
    "pctl80",
    "pctlrange20-80",
    "voiced_mean",
    "voiced_stddev",
    "unvoiced_mean",
];

/// Feature names in vector order.
pub fn schema() -> &'static [String] {
    static SCHEMA: OnceLock<Vec<String>> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let mut names: Vec<String> = [
            "F0semitone_mean",
            "F0semitone_stddev",
            "F0semitone_stddevNorm",
            "F0semitone_pctl20",
            "F0semitone_pctl50",
            "F0semitone_pctl80",
            "F0semitone_pctlrange20-80",
            "F0_meanRisingSlope",
            "F0_stddevRisingSlope",
            "F0_meanFallingSlope",
            "F0_stddevFallingSlope",
            "F0Hz_mean",
            "F0Hz_stddev",
            "energy_mean",
            "energy_stddev",
            "energy_pctl20",
            "energy_pctl50",
            "energy_pctl80",
            "energy_pctlrange20-80",
            "energy_meanRisingSlope",
            "energy_stddevRisingSlope",
            "energy_meanFallingSlope",
            "energy_stddevFallingSlope",
            "energy_voiced_mean",
            "energy_voiced_stddev",
            "energy_unvoiced_mean",
            "energy_unvoiced_stddev",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for lld in SPECTRAL_LLDS {
            for func in SPECTRAL_FUNCS {
                names.push(format!("{lld}_{func}"));
            }
        }
        for k in 1..=4 {
            for func in ["mean", "stddev", "voiced_mean", "voiced_stddev"] {
                names.push(format!("mfcc{k}_{func}"));
            }
        }
        names.extend(
            [
                "voicedFraction",
                "voicedSegmentsPerSec",
                "meanVoicedSegmentLengthSec",
                "stddevVoicedSegmentLengthSec",
                "meanUnvoicedSegmentLengthSec",
                "stddevUnvoicedSegmentLengthSec",
                "energyPeaksPerSec",
                "equivalentLevel_dBp",
                "equivalentLevel_voiced_dBp",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        debug_assert_eq!(names.len(), N_FEATURES);
        names
    })
}

/// Position of `name` in the schema.
pub fn feature_index(name: &str) -> Option<usize> {
    schema().iter().position(|n| n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// `10·log10(mean(x²))` in dB full scale, floored at -120 dB.
pub fn equivalent_sound_level(buf: &AudioBuffer) -> f64 {
    let x = buf.samples();
    if x.is_empty() {
        return power_db(0.0);
    }
    power_db(x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64)
}

struct Functionals {
    out: Vec<f64>,
}

impl Functionals {
    fn push(&mut self, v: f64) {
        self.out.push(v);
    }

    /// mean, stddev, pctl20, pctl50, pctl80, range20-80.
    fn distribution(&mut self, xs: &[f64]) {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p20 = percentile_sorted(&sorted, 0.2);
        let p80 = percentile_sorted(&sorted, 0.8);
        self.push(mean(xs));
        self.push(std_pop(xs));
        self.push(p20);
        self.push(percentile_sorted(&sorted, 0.5));
        self.push(p80);
        self.push(p80 - p20);
    }
}

fn select(xs: &[f64], mask: &[bool], keep: bool) -> Vec<f64> {
    xs.iter()
        .zip(mask)
        .filter(|(_, &m)| m == keep)
        .map(|(x, _)| *x)
        .collect()
}

/// Lengths in seconds of the maximal runs of `keep` in `mask`.
fn run_lengths(mask: &[bool], keep: bool, hop: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut len = 0usize;
    for &m in mask.iter().chain(std::iter::once(&!keep)) {
        if m == keep {
            len += 1;
        } else if len > 0 {
            out.push(len as f64 * hop);
            len = 0;
        }
    }
    out
}

/// Computes the 88 features of one speech segment.
///
/// Segments at another rate are resampled to 16 kHz first.
pub fn extract_feature_vector(segment: &AudioBuffer) -> Result<FeatureVector, FeatureError> {
    if segment.duration() < MIN_SEGMENT_SECONDS {
        return Err(FeatureError::TooShort(segment.duration()));
    }
    let canonical;
    let segment = if segment.sample_rate() == audio::CANONICAL_RATE {
        segment
    } else {
        canonical = audio::to_canonical(segment)?;
        &canonical
    };
    let frames = audio::default_frames(segment);
    let contour = estimate_f0(&frames, &PitchConfig::default());
    let lld = compute_lld(&frames);
    let hop = frames.hop_seconds();
    let voiced = contour.voiced_mask();
    let duration = segment.duration();

    let mut f = Functionals {
        out: Vec::with_capacity(N_FEATURES),
    };

    // F0 block.
    let st = select(&contour.f0_semitones, &voiced, true);
    let hz = select(&contour.f0_hz, &voiced, true);
    let mut st_sorted = st.clone();
    st_sorted.sort_by(f64::total_cmp);
    let st_mean = mean(&st);
    let st_std = std_pop(&st);
    let p20 = percentile_sorted(&st_sorted, 0.2);
    let p80 = percentile_sorted(&st_sorted, 0.8);
    f.push(st_mean);
    f.push(st_std);
    f.push(if st_mean > 0.0 { st_std / st_mean } else { 0.0 });
    f.push(p20);
    f.push(percentile_sorted(&st_sorted, 0.5));
    f.push(p80);
    f.push(p80 - p20);
    let slopes = slope_functionals(&contour);
    f.push(slopes.mean_rising);
    f.push(slopes.stddev_rising);
    f.push(slopes.mean_falling);
    f.push(slopes.stddev_falling);
    f.push(mean(&hz));
    f.push(std_pop(&hz));

    // Energy block.
    let energy: Vec<f64> = lld.iter().map(|l| l.energy_db).collect();
    f.distribution(&energy);
    let (rise, fall) = monotone_slopes(&energy, &vec![true; energy.len()], hop);
    let energy_slopes = SlopeStats::from_slopes(&rise, &fall);
    f.push(energy_slopes.mean_rising);
    f.push(energy_slopes.stddev_rising);
    f.push(energy_slopes.mean_falling);
    f.push(energy_slopes.stddev_falling);
    let ev = select(&energy, &voiced, true);
    let eu = select(&energy, &voiced, false);
    f.push(mean(&ev));
    f.push(std_pop(&ev));
    f.push(mean(&eu));
    f.push(std_pop(&eu));

    // Spectral block.
    let spectral: [fn(&FrameLld) -> f64; 4] = [
        |l| l.slope_0_500,
        |l| l.slope_500_1500,
        |l| l.alpha_ratio,
        |l| l.centroid_hz,
    ];
    for get in spectral {
        let xs: Vec<f64> = lld.iter().map(get).collect();
        f.distribution(&xs);
        let xv = select(&xs, &voiced, true);
        f.push(mean(&xv));
        f.push(std_pop(&xv));
        f.push(mean(&select(&xs, &voiced, false)));
    }

    // MFCC block.
    for k in 0..4 {
        let xs: Vec<f64> = lld.iter().map(|l| l.mfcc[k]).collect();
        let xv = select(&xs, &voiced, true);
        f.push(mean(&xs));
        f.push(std_pop(&xs));
        f.push(mean(&xv));
        f.push(std_pop(&xv));
    }

    // Temporal block.
    let n_voiced = voiced.iter().filter(|&&v| v).count();
    f.push(if voiced.is_empty() {
        0.0
    } else {
        n_voiced as f64 / voiced.len() as f64
    });
    let voiced_runs = run_lengths(&voiced, true, hop);
    let unvoiced_runs = run_lengths(&voiced, false, hop);
    f.push(voiced_runs.len() as f64 / duration);
    f.push(mean(&voiced_runs));
    f.push(std_pop(&voiced_runs));
    f.push(mean(&unvoiced_runs));
    f.push(std_pop(&unvoiced_runs));
    let energy_mean = mean(&energy);
    let peaks = (1..energy.len().saturating_sub(1))
        .filter(|&i| {
            energy[i] > energy[i - 1] && energy[i] >= energy[i + 1] && energy[i] > energy_mean
        })
        .count();
    f.push(peaks as f64 / duration);

    // Level block.
    f.push(equivalent_sound_level(segment));
    let voiced_ms: Vec<f64> = frames
        .iter()
        .zip(&voiced)
        .filter(|(_, &v)| v)
        .map(|(fr, _)| fr.iter().map(|x| x * x).sum::<f64>() / fr.len() as f64)
        .collect();
    f.push(if voiced_ms.is_empty() {
        power_db(0.0)
    } else {
        power_db(mean(&voiced_ms))
    });

    let values = f.out;
    debug_assert_eq!(values.len(), N_FEATURES);
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(FeatureError::NonFinite {
            name: schema()[i].clone(),
            value: v,
        });
    }
    Ok(FeatureVector { values })
}
