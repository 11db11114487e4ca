//! Speech-outcome pipeline for post-match interview recordings.
//!
//! The crate covers the whole chain from raw audio to an explained win/lose
//! classifier:
//!
//! - [`audio`]: WAV ingestion, resampling and framing.
//! - [`textgrid`]: Praat TextGrid (long text format) reader and writer.
//! - [`segmenter`]: energy VAD, speaker clustering, athlete selection and
//!   segment extraction.
//! - [`prosody`]: pitch tracking, low-level descriptors and the 88-value
//!   prosodic feature vector.
//! - [`embeddings`]: precomputed self-supervised representations and mean
//!   pooling.
//! - [`dataset`]: manifests, speaker-disjoint splits and SMOTE.
//! - [`model`]: the batch-normalized MLP, Adam, step decay and metrics.
//! - [`explain`]: exact and kernel Shapley attributions.
//! - [`cli`]: configuration and the command implementations behind the
//!   `matchvoice` binary.

pub mod audio;
pub mod cli;
pub mod dataset;
pub mod embeddings;
pub mod explain;
pub mod model;
pub mod prosody;
pub mod segmenter;
pub mod stats;
pub mod textgrid;

pub use audio::{AudioBuffer, FrameSequence};
pub use prosody::FeatureVector;
