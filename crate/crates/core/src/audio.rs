//! Audio ingestion, resampling and frame decomposition.
//!
//! Everything downstream works on mono, full-scale `f64` samples at the
//! canonical rate of 16 kHz, analysed on a 25 ms / 10 ms frame grid.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

/// Sample rate every analysis stage expects.
pub const CANONICAL_RATE: u32 = 16_000;
/// 25 ms at 16 kHz.
pub const FRAME_LEN: usize = 400;
/// 10 ms at 16 kHz.
pub const HOP: usize = 160;

/// Taps per polyphase branch of the windowed-sinc resampler.
const RESAMPLER_TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Fraction of the narrower Nyquist band kept by the anti-aliasing filter.
const RESAMPLER_ROLLOFF: f64 = 0.95;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    NotFound(String),
    #[error("malformed WAV header in {path}: {reason}")]
    MalformedHeader { path: String, reason: String },
    #[error("unsupported WAV encoding in {path}: {reason}")]
    Unsupported { path: String, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid audio: {0}")]
    Invalid(String),
}

/// Mono signal with full scale 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    /// Validates that every sample is finite and within [-1, 1].
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(AudioError::Invalid(format!(
                "sample {i} = {s} is not a finite full-scale value"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Clamps out-of-range values to full scale and zeroes non-finite ones.
    pub fn from_clamped(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let samples = samples
            .into_iter()
            .map(|s| if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 })
            .collect();
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sample-exact slice `[start, end)`, clamped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> AudioBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        AudioBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Multiplies by `gain`, clamping to full scale.
    pub fn scaled(&self, gain: f64) -> AudioBuffer {
        AudioBuffer {
            samples: self
                .samples
                .iter()
                .map(|s| (s * gain).clamp(-1.0, 1.0))
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Overlapping analysis frames, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    data: Vec<f64>,
    n_frames: usize,
    frame_len: usize,
    hop: usize,
    sample_rate: u32,
}

impl FrameSequence {
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.frame_len..(i + 1) * self.frame_len]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.frame_len.max(1)).take(self.n_frames)
    }
}

/// Reads a RIFF/WAVE file (16-bit PCM or 32-bit float, mono or stereo).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    if !path.exists() {
        return Err(AudioError::NotFound(shown));
    }
    let reader = hound::WavReader::open(path).map_err(|e| map_hound(e, &shown))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::Unsupported {
            path: shown,
            reason: format!("{} channels (expected 1 or 2)", spec.channels),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(e, &shown))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(e, &shown))?,
        (fmt, bits) => {
            return Err(AudioError::Unsupported {
                path: shown,
                reason: format!("{bits}-bit {fmt:?} samples"),
            })
        }
    };
    let mono = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|c| 0.5 * (c[0] + c[1]))
            .collect()
    } else {
        interleaved
    };
    AudioBuffer::from_clamped(mono, spec.sample_rate)
}

fn map_hound(err: hound::Error, path: &str) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            AudioError::MalformedHeader {
                path: path.to_string(),
                reason: "unexpected end of file".into(),
            }
        }
        // hound reports short reads inside the header as `Other`.
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::Other => AudioError::MalformedHeader {
            path: path.to_string(),
            reason: e.to_string(),
        },
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_string(),
            source,
        },
        hound::Error::Unsupported => AudioError::Unsupported {
            path: path.to_string(),
            reason: "codec not supported".into(),
        },
        other => AudioError::MalformedHeader {
            path: path.to_string(),
            reason: other.to_string(),
        },
    }
}

/// Writes a mono 32-bit float WAV. Values are stored as `f32`.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<(), AudioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(e, &shown))?;
    for &s in &buf.samples {
        writer
            .write_sample(s as f32)
            .map_err(|e| map_hound(e, &shown))?;
    }
    writer.finalize().map_err(|e| map_hound(e, &shown))
}

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::Invalid("target rate must be positive".into()));
    }
    let in_rate = buf.sample_rate as u64;
    let out_rate = target_rate as u64;
    if in_rate == out_rate {
        return Ok(buf.clone());
    }
    let n_in = buf.samples.len() as u64;
    let n_out = ((n_in * out_rate + in_rate / 2) / in_rate) as usize;

    // Kernel bandwidth relative to the input Nyquist frequency.
    let scale = (out_rate as f64 / in_rate as f64).min(1.0);
    let cutoff = scale * RESAMPLER_ROLLOFF;
    let half_width = (RESAMPLER_TAPS / 2) as f64 / scale;
    let i0_beta = bessel_i0(KAISER_BETA);

    let x = &buf.samples;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let num = n * in_rate;
        let base = (num / out_rate) as i64;
        let pos = base as f64 + (num % out_rate) as f64 / out_rate as f64;
        let lo = ((pos - half_width).ceil() as i64).max(0);
        let hi = ((pos + half_width).floor() as i64).min(n_in as i64 - 1);
        let mut acc = 0.0;
        for k in lo..=hi {
            let t = pos - k as f64;
            let r = t / half_width;
            let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            acc += x[k as usize] * cutoff * sinc(cutoff * t) * window;
        }
        out.push(acc);
    }
    AudioBuffer::from_clamped(out, target_rate)
}

/// Resamples to [`CANONICAL_RATE`] when needed.
pub fn to_canonical(buf: &AudioBuffer) -> Result<AudioBuffer, AudioError> {
    resample(buf, CANONICAL_RATE)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Splits `buf` into frames covering `[i*hop, i*hop + frame_len)`.
///
/// A trailing partial frame is dropped, so a buffer shorter than `frame_len`
/// yields no frames.
pub fn frame_signal(
    buf: &AudioBuffer,
    frame_len: usize,
    hop: usize,
) -> Result<FrameSequence, AudioError> {
    if frame_len == 0 || hop == 0 {
        return Err(AudioError::Invalid(
            "frame length and hop must be at least one sample".into(),
        ));
    }
    let n = buf.samples.len();
    let n_frames = if n >= frame_len {
        (n - frame_len) / hop + 1
    } else {
        0
    };
    let mut data = Vec::with_capacity(n_frames * frame_len);
    for i in 0..n_frames {
        data.extend_from_slice(&buf.samples[i * hop..i * hop + frame_len]);
    }
    Ok(FrameSequence {
        data,
        n_frames,
        frame_len,
        hop,
        sample_rate: buf.sample_rate,
    })
}

/// Frames on the default 25 ms / 10 ms grid.
pub fn default_frames(buf: &AudioBuffer) -> FrameSequence {
    frame_signal(buf, FRAME_LEN, HOP).expect("default frame geometry is valid")
}
