//! Synthetic signals and interview corpora shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use matchvoice::audio::{write_wav, AudioBuffer, CANONICAL_RATE};
use matchvoice::dataset::{Label, Manifest, ManifestRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SR: u32 = CANONICAL_RATE;

pub fn sine(freq: f64, amp: f64, seconds: f64, sr: u32) -> AudioBuffer {
    let n = (seconds * sr as f64).round() as usize;
    let samples = (0..n)
        .map(|i| amp * (2.0 * PI * freq * i as f64 / sr as f64).sin())
        .collect();
    AudioBuffer::new(samples, sr).unwrap()
}

/// Phase-continuous harmonic complex following a per-sample F0 track.
/// Harmonic `h` has amplitude `h^-tilt`; partials above 7 kHz are dropped.
pub fn harmonic_voice(f0: &[f64], amp: f64, tilt: f64) -> Vec<f64> {
    let norm: f64 = (1..=30).map(|h| (h as f64).powf(-tilt)).sum::<f64>().max(1.0);
    let mut phase = 0.0;
    let ramp = (0.01 * SR as f64) as usize;
    let n = f0.len();
    f0.iter()
        .enumerate()
        .map(|(i, &f)| {
            phase += 2.0 * PI * f / SR as f64;
            let mut s = 0.0;
            for h in 1..=30 {
                if h as f64 * f > 7000.0 {
                    break;
                }
                s += (h as f64).powf(-tilt) * (h as f64 * phase).sin();
            }
            let edge = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
            amp * edge * s / norm * 2.0
        })
        .collect()
}

/// Semitone contour made of rise/fall ramps: each rise lasts `rise_secs`
/// at the next slope of `rising` (st/s), each fall runs at `fall_slope`
/// back to `base_st`.
pub fn triangle_contour(base_st: f64, rising: &[f64], rise_secs: f64, fall_slope: f64, seconds: f64) -> Vec<f64> {
    let n = (seconds * SR as f64).round() as usize;
    let dt = 1.0 / SR as f64;
    let mut out = Vec::with_capacity(n);
    let mut st = base_st;
    let mut k = 0;
    let mut t_in = 0.0;
    let mut rising_now = true;
    while out.len() < n {
        let slope = rising[k % rising.len()];
        if rising_now {
            st += slope * dt;
            t_in += dt;
            if t_in >= rise_secs {
                rising_now = false;
            }
        } else {
            st -= fall_slope * dt;
            if st <= base_st {
                st = base_st;
                rising_now = true;
                t_in = 0.0;
                k += 1;
            }
        }
        out.push(27.5 * 2f64.powf(st / 12.0));
    }
    out
}

pub struct InterviewSpec {
    pub label: Label,
    pub athlete_base_hz: f64,
    pub athlete_amp: f64,
    pub rising_slopes: Vec<f64>,
    pub seed: u64,
}

/// Journalist question, athlete answer, question, answer, separated by
/// pauses over a faint noise floor. The athlete talks longer, lower and
/// darker; the journalist is brighter at about 210 Hz.
pub fn interview(spec: &InterviewSpec) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let secs = |s: f64| (s * SR as f64).round() as usize;
    let mut x: Vec<f64> = Vec::new();
    let pause = |x: &mut Vec<f64>, s: f64| x.extend(std::iter::repeat_n(0.0, secs(s)));
    let journalist = |x: &mut Vec<f64>, s: f64, rng: &mut ChaCha8Rng| {
        let base = 205.0 + rng.random_range(0.0..10.0);
        let f0: Vec<f64> = (0..secs(s))
            .map(|i| base * (1.0 + 0.02 * (2.0 * PI * 3.0 * i as f64 / SR as f64).sin()))
            .collect();
        x.extend(harmonic_voice(&f0, 0.2, 0.4));
    };
    let base_st = 12.0 * (spec.athlete_base_hz / 27.5).log2();
    let athlete = |x: &mut Vec<f64>, s: f64, offset: usize| {
        let mut slopes = spec.rising_slopes.clone();
        let n = slopes.len().max(1);
        slopes.rotate_left(offset % n);
        let f0 = triangle_contour(base_st, &slopes, 0.2, 60.0, s);
        x.extend(harmonic_voice(&f0, spec.athlete_amp, 1.6));
    };
    pause(&mut x, 0.3);
    journalist(&mut x, 0.8, &mut rng);
    pause(&mut x, 0.4);
    athlete(&mut x, 2.0, 0);
    pause(&mut x, 0.4);
    journalist(&mut x, 0.6, &mut rng);
    pause(&mut x, 0.4);
    athlete(&mut x, 2.0, 3);
    pause(&mut x, 0.3);
    for s in &mut x {
        *s += rng.random_range(-1.7e-3..1.7e-3);
    }
    AudioBuffer::from_clamped(x, SR).unwrap()
}

/// Class-dependent interview parameters: winners speak louder with highly
/// variable rising pitch slopes, losers quieter with uniform ones. Both
/// classes share the same mean rising slope.
pub fn planted_spec(label: Label, speaker_hz: f64, seed: u64) -> InterviewSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (amp, slopes): (f64, Vec<f64>) = match label {
        Label::Win => (0.35, (0..8).map(|_| rng.random_range(15.0..105.0)).collect()),
        Label::Lose => (0.12, (0..8).map(|_| rng.random_range(57.0..63.0)).collect()),
    };
    InterviewSpec {
        label,
        athlete_base_hz: speaker_hz,
        athlete_amp: amp * rng.random_range(0.85..1.15),
        rising_slopes: slopes,
        seed,
    }
}

/// Writes `n_speakers × per_speaker` interviews and a manifest; returns the
/// manifest path.
pub fn write_planted_corpus(dir: &Path, n_speakers: usize, per_speaker: usize, win_rate: f64, seed: u64) -> PathBuf {
    let audio_dir = dir.join("audio");
    fs::create_dir_all(&audio_dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for s in 0..n_speakers {
        let speaker_hz = rng.random_range(100.0..140.0);
        for r in 0..per_speaker {
            let label = if rng.random::<f64>() < win_rate { Label::Win } else { Label::Lose };
            let rid = format!("s{s:03}_r{r}");
            let spec = planted_spec(label, speaker_hz, seed.wrapping_mul(1000).wrapping_add((s * 100 + r) as u64));
            let wav = audio_dir.join(format!("{rid}.wav"));
            write_wav(&wav, &interview(&spec)).unwrap();
            records.push(ManifestRecord {
                audio_path: PathBuf::from("audio").join(format!("{rid}.wav")),
                recording_id: rid,
                label,
                speaker_id: format!("spk{s:03}"),
                turns: None,
                embeddings: None,
            });
        }
    }
    let manifest = Manifest::new(records, dir).unwrap();
    let path = dir.join("manifest.jsonl");
    fs::write(&path, manifest.to_jsonl()).unwrap();
    path
}

/// One speaker per entry of `counts`, with that many recordings each.
pub fn synthetic_manifest(counts: &[usize]) -> Manifest {
    let mut records = Vec::new();
    for (s, &n) in counts.iter().enumerate() {
        for r in 0..n {
            records.push(ManifestRecord {
                recording_id: format!("rec_{s}_{r}"),
                audio_path: PathBuf::from(format!("rec_{s}_{r}.wav")),
                label: if (s + r) % 5 == 0 { Label::Lose } else { Label::Win },
                speaker_id: format!("speaker_{s}"),
                turns: None,
                embeddings: None,
            });
        }
    }
    Manifest::new(records, ".").unwrap()
}

/// Random per-speaker recording counts in `1..=10` summing to `total`.
pub fn speaker_counts(n_speakers: usize, total: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![1usize; n_speakers];
    let mut left = total - n_speakers;
    while left > 0 {
        let i = rng.random_range(0..n_speakers);
        if counts[i] < 10 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Every maximal strictly monotone run found by scanning all (i, j) pairs.
pub fn brute_force_slopes(v: &[f64], active: &[bool], hop: f64) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let monotone = |i: usize, j: usize, up: bool| {
        (i..j).all(|k| active[k] && active[k + 1] && if up { v[k + 1] > v[k] } else { v[k + 1] < v[k] })
    };
    let mut rising = Vec::new();
    let mut falling = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for up in [true, false] {
                if !monotone(i, j, up) {
                    continue;
                }
                let extends_left = i > 0 && monotone(i - 1, j, up);
                let extends_right = j + 1 < n && monotone(i, j + 1, up);
                if !extends_left && !extends_right {
                    let slope = (v[j] - v[i]) / ((j - i) as f64 * hop);
                    if up {
                        rising.push(slope);
                    } else {
                        falling.push(slope);
                    }
                }
            }
        }
    }
    (rising, falling)
}

/// Distance from `p` to the segment `a–b` and the projection parameter.
pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    if len2 == 0.0 {
        return (ap.iter().map(|v| v * v).sum::<f64>().sqrt(), 0.0);
    }
    let t = ab.iter().zip(&ap).map(|(u, v)| u * v).sum::<f64>() / len2;
    let dist2: f64 = ap.iter().zip(&ab).map(|(v, u)| (v - t * u).powi(2)).sum();
    (dist2.sqrt(), t)
}
