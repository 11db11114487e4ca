//! Speech segmentation: energy VAD, speaker clustering, athlete selection
//! and segment extraction.
//!
//! Speaker turns come from agglomerative clustering (average linkage,
//! cosine distance) of per-interval mean MFCC vectors. The speaker with the
//! largest total speaking time is taken to be the interviewee.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioBuffer};
use crate::prosody::spectral;
use crate::stats;
use crate::textgrid::{self, Tier, TierSet};

/// Distance at which the dendrogram is cut when the speaker count is unknown.
pub const AUTO_CLUSTER_THRESHOLD: f64 = 0.15;
/// MFCC coefficients 1..=12 form the interval embedding (c0 is level).
const EMBEDDING_COEFFS: usize = 13;

#[derive(Debug, Error, PartialEq)]
pub enum SegmenterError {
    #[error("no speaker turns to choose from")]
    NoTurns,
    #[error("invalid interval [{start}, {end}]")]
    InvalidInterval { start: f64, end: f64 },
    #[error("invalid VAD configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self, SegmenterError> {
        if !(start >= 0.0 && start < end && end.is_finite()) {
            return Err(SegmenterError::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Sample range `[round(start·sr), round(end·sr))`.
    pub fn sample_range(&self, sample_rate: u32) -> (usize, usize) {
        let sr = sample_rate as f64;
        (
            (self.start * sr).round() as usize,
            (self.end * sr).round() as usize,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub interval: Interval,
    pub speaker: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    /// Threshold above the noise floor, dB.
    pub margin_db: f64,
    /// Shortest kept interval, seconds.
    pub min_speech: f64,
    /// Gaps shorter than this are bridged, seconds.
    pub min_gap: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            margin_db: 6.0,
            min_speech: 0.25,
            min_gap: 0.20,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<(), SegmenterError> {
        for (name, v) in [
            ("margin_db", self.margin_db),
            ("min_speech", self.min_speech),
            ("min_gap", self.min_gap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SegmenterError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Requested number of speaker clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerCount {
    Auto,
    Fixed(usize),
}

/// Energy-based voice activity detection on the 25 ms / 10 ms grid.
///
/// Frames louder than the 10th-percentile frame energy plus `margin_db` are
/// speech. Each frame stands for the hop-wide slot around its centre. Gaps
/// shorter than `min_gap` are merged, then intervals shorter than
/// `min_speech` are dropped.
pub fn detect_voice_activity(buf: &AudioBuffer, cfg: &VadConfig) -> Vec<Interval> {
    let frames = audio::frame_signal(buf, audio::FRAME_LEN, audio::HOP)
        .expect("default frame geometry is valid");
    let n = frames.n_frames();
    if n == 0 {
        return Vec::new();
    }
    let energy: Vec<f64> = frames
        .iter()
        .map(|f| stats::power_db(f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64))
        .collect();
    let threshold = stats::percentile(&energy, 0.1) + cfg.margin_db;

    let sr = buf.sample_rate() as f64;
    let (hop, half_frame) = (frames.hop() as f64, frames.frame_len() as f64 / 2.0);
    let duration = buf.duration();
    let slot = |i: usize| {
        let centre = i as f64 * hop + half_frame;
        (
            ((centre - hop / 2.0) / sr).max(0.0),
            ((centre + hop / 2.0) / sr).min(duration),
        )
    };

    let mut raw: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < n {
        if energy[i] > threshold {
            let first = i;
            while i + 1 < n && energy[i + 1] > threshold {
                i += 1;
            }
            raw.push((slot(first).0, slot(i).1));
        }
        i += 1;
    }

    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (s, e) in raw {
        match merged.last_mut() {
            Some(last) if s - last.1 < cfg.min_gap => last.1 = e,
            _ => merged.push((s, e)),
        }
    }
    merged
        .into_iter()
        .filter(|(s, e)| e - s >= cfg.min_speech && e > s)
        .map(|(start, end)| Interval { start, end })
        .collect()
}

/// Mean of MFCC 1..=12 over the frames of `iv`.
fn interval_embedding(buf: &AudioBuffer, iv: &Interval) -> Vec<f64> {
    let (s, e) = iv.sample_range(buf.sample_rate());
    let slice = buf.slice(s, e);
    let frames = audio::frame_signal(&slice, audio::FRAME_LEN, audio::HOP)
        .expect("default frame geometry is valid");
    let coeffs = spectral::mfcc_frames(&frames, EMBEDDING_COEFFS);
    let mut acc = vec![0.0; EMBEDDING_COEFFS - 1];
    if coeffs.is_empty() {
        return acc;
    }
    for c in &coeffs {
        for (a, v) in acc.iter_mut().zip(&c[1..]) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= coeffs.len() as f64);
    acc
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na > 0.0, nb > 0.0) {
        (false, false) => 0.0,
        (true, true) => (1.0 - dot / (na * nb)).max(0.0),
        _ => 1.0,
    }
}

/// Average-linkage agglomerative clustering over a precomputed distance
/// matrix. Returns a cluster index per item, numbered by first appearance.
///
/// Merging stops when `count` clusters remain (`Fixed`) or when the closest
/// pair is farther apart than `threshold` (`Auto`).
pub fn agglomerative(dist: &[Vec<f64>], count: SpeakerCount, threshold: f64) -> Vec<u32> {
    let n = dist.len();
    if n == 0 {
        return Vec::new();
    }
    let target = match count {
        SpeakerCount::Fixed(k) => k.clamp(1, n),
        SpeakerCount::Auto => 1,
    };
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    let mut alive: Vec<bool> = vec![true; n];
    let mut n_alive = n;
    while n_alive > target {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if alive[j] && best.is_none_or(|(_, _, bd)| d[i][j] < bd) {
                    best = Some((i, j, d[i][j]));
                }
            }
        }
        let (a, b, bd) = best.expect("at least two clusters alive");
        if count == SpeakerCount::Auto && bd > threshold {
            break;
        }
        let (na, nb) = (members[a].len() as f64, members[b].len() as f64);
        for k in 0..n {
            if alive[k] && k != a && k != b {
                let v = (na * d[a][k] + nb * d[b][k]) / (na + nb);
                d[a][k] = v;
                d[k][a] = v;
            }
        }
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        alive[b] = false;
        n_alive -= 1;
    }

    let mut raw = vec![0usize; n];
    for (c, m) in members.iter().enumerate() {
        for &i in m {
            raw[i] = c;
        }
    }
    let mut relabel: BTreeMap<usize, u32> = BTreeMap::new();
    raw.iter()
        .map(|c| {
            let next = relabel.len() as u32;
            *relabel.entry(*c).or_insert(next)
        })
        .collect()
}

/// Assigns each speech interval to a speaker cluster.
pub fn cluster_speakers(buf: &AudioBuffer, speech: &[Interval], count: SpeakerCount) -> Vec<Turn> {
    if speech.is_empty() {
        return Vec::new();
    }
    let embeddings: Vec<Vec<f64>> = speech.iter().map(|iv| interval_embedding(buf, iv)).collect();
    let dist: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|a| embeddings.iter().map(|b| cosine_distance(a, b)).collect())
        .collect();
    let labels = agglomerative(&dist, count, AUTO_CLUSTER_THRESHOLD);
    let mut turns: Vec<Turn> = speech
        .iter()
        .zip(labels)
        .map(|(iv, speaker)| Turn {
            interval: *iv,
            speaker,
        })
        .collect();
    turns.sort_by(|a, b| a.interval.start.total_cmp(&b.interval.start));
    turns
}

/// Total speaking time per cluster, summed in time order.
pub fn speaker_durations(turns: &[Turn]) -> BTreeMap<u32, f64> {
    let mut by_speaker: BTreeMap<u32, Vec<Interval>> = BTreeMap::new();
    for t in turns {
        by_speaker.entry(t.speaker).or_default().push(t.interval);
    }
    by_speaker
        .into_iter()
        .map(|(spk, mut ivs)| {
            ivs.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
            (spk, ivs.iter().map(Interval::duration).sum())
        })
        .collect()
}

/// The cluster with the largest total duration; ties go to the lowest id.
pub fn select_athlete(turns: &[Turn]) -> Result<u32, SegmenterError> {
    speaker_durations(turns)
        .into_iter()
        .fold(None, |best: Option<(u32, f64)>, (spk, total)| match best {
            Some((_, bt)) if bt >= total => best,
            _ => Some((spk, total)),
        })
        .map(|(spk, _)| spk)
        .ok_or(SegmenterError::NoTurns)
}

/// Sample-exact slices of `speaker`'s turns in temporal order.
pub fn extract_segments(buf: &AudioBuffer, turns: &[Turn], speaker: u32) -> Vec<AudioBuffer> {
    let mut own: Vec<&Turn> = turns.iter().filter(|t| t.speaker == speaker).collect();
    own.sort_by(|a, b| a.interval.start.total_cmp(&b.interval.start));
    own.iter()
        .map(|t| {
            let (s, e) = t.interval.sample_range(buf.sample_rate());
            buf.slice(s, e)
        })
        .collect()
}

/// TextGrid with the pipeline tiers: speakers, vad, overlap, transcript.
/// Overlap and transcript are left empty.
pub fn annotation_tiers(duration: f64, speech: &[Interval], turns: &[Turn]) -> TierSet {
    let speakers: Vec<textgrid::Interval> = turns
        .iter()
        .map(|t| textgrid::Interval::new(t.interval.start, t.interval.end, t.speaker.to_string()))
        .collect();
    let vad: Vec<textgrid::Interval> = speech
        .iter()
        .map(|iv| textgrid::Interval::new(iv.start, iv.end, "speech"))
        .collect();
    let [spk_name, vad_name, overlap_name, transcript_name] = textgrid::PIPELINE_TIERS;
    TierSet::new(
        0.0,
        duration,
        vec![
            Tier::covering(spk_name, 0.0, duration, &speakers),
            Tier::covering(vad_name, 0.0, duration, &vad),
            Tier::covering(overlap_name, 0.0, duration, &[]),
            Tier::covering(transcript_name, 0.0, duration, &[]),
        ],
    )
}
