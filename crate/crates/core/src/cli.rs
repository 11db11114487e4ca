//! Configuration and the command implementations behind the binary.
//!
//! Every command reads and validates all of its inputs before it creates
//! any output file. The global seed fans out to stage seeds by fixed
//! offsets (split +1, SMOTE +2, training +3, explanation +4).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{self, AudioError};
use crate::dataset::{
    parse_split, smote_balance, split_speakers, split_to_jsonl, DatasetError, Label, LabeledMatrix, Manifest,
    ManifestRecord, Split, SplitAssignment, Standardizer,
};
use crate::embeddings::{self, EmbeddingError};
use crate::explain::{self, RankedFeature, ShapError, ShapMethod};
use crate::model::{self, Classifier, History, Metrics, ModelError, TrainConfig};
use crate::prosody::{self, FeatureError};
use crate::segmenter::{self, Interval, SegmenterError, SpeakerCount, Turn, VadConfig};
use crate::textgrid::{self, TextGridError};

pub const EXTRACT_REPORT: &str = "extract_report.jsonl";
pub const POOLED_ROWS: &str = "pooled.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const SHAP_SUMMARY_FILE: &str = "shap_summary.csv";
pub const SHAP_VALUES_FILE: &str = "shap_values.jsonl";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    /// 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(AudioError, DatasetError, EmbeddingError, FeatureError, SegmenterError, TextGridError);

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            ModelError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ShapError> for CliError {
    fn from(e: ShapError) -> Self {
        match e {
            ShapError::Model(m) => m.into(),
            ShapError::TooFewSamples { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

/// Every tunable of the pipeline; keys are listed in [`PipelineConfig::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub vad: VadConfig,
    pub n_speakers: SpeakerCount,
    pub split_ratios: [f64; 3],
    pub smote_k: usize,
    /// `seed` is ignored; see [`PipelineConfig::train_config`].
    pub train: TrainConfig,
    pub explain_background: usize,
    /// `None` means `2·d + 2048`.
    pub explain_n_samples: Option<usize>,
    pub explain_top_k: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            vad: VadConfig::default(),
            n_speakers: SpeakerCount::Auto,
            split_ratios: crate::dataset::DEFAULT_RATIOS,
            smote_k: 5,
            train: TrainConfig::default(),
            explain_background: explain::DEFAULT_BACKGROUND,
            explain_n_samples: None,
            explain_top_k: 10,
            seed: DEFAULT_SEED,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 22] = [
        "vad.margin_db",
        "vad.min_speech",
        "vad.min_gap",
        "segmenter.n_speakers",
        "split.train",
        "split.validation",
        "split.test",
        "smote.k",
        "train.epochs",
        "train.batch_size",
        "train.lr",
        "train.lr_step",
        "train.lr_gamma",
        "train.dropout",
        "train.leaky_slope",
        "train.adam_beta1",
        "train.adam_beta2",
        "train.adam_eps",
        "explain.background",
        "explain.n_samples",
        "explain.top_k",
        "seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key.trim() {
            "vad.margin_db" => self.vad.margin_db = parse_value(key, v)?,
            "vad.min_speech" => self.vad.min_speech = parse_value(key, v)?,
            "vad.min_gap" => self.vad.min_gap = parse_value(key, v)?,
            "segmenter.n_speakers" => {
                self.n_speakers = match v {
                    "auto" => SpeakerCount::Auto,
                    n => match parse_value::<usize>(key, n)? {
                        0 => return Err(CliError::Usage("segmenter.n_speakers must be auto or >= 1".into())),
                        n => SpeakerCount::Fixed(n),
                    },
                }
            }
            "split.train" => self.split_ratios[0] = parse_value(key, v)?,
            "split.validation" => self.split_ratios[1] = parse_value(key, v)?,
            "split.test" => self.split_ratios[2] = parse_value(key, v)?,
            "smote.k" => self.smote_k = parse_value(key, v)?,
            "train.epochs" => self.train.epochs = parse_value(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, v)?,
            "train.lr" => self.train.lr = parse_value(key, v)?,
            "train.lr_step" => self.train.lr_step = parse_value(key, v)?,
            "train.lr_gamma" => self.train.lr_gamma = parse_value(key, v)?,
            "train.dropout" => self.train.dropout = parse_value(key, v)?,
            "train.leaky_slope" => self.train.leaky_slope = parse_value(key, v)?,
            "train.adam_beta1" => self.train.adam.beta1 = parse_value(key, v)?,
            "train.adam_beta2" => self.train.adam.beta2 = parse_value(key, v)?,
            "train.adam_eps" => self.train.adam.eps = parse_value(key, v)?,
            "explain.background" => self.explain_background = parse_value(key, v)?,
            "explain.n_samples" => {
                self.explain_n_samples = match v {
                    "auto" => None,
                    n => Some(parse_value(key, n)?),
                }
            }
            "explain.top_k" => self.explain_top_k = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            other => return Err(CliError::Usage(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read_file(path).map_err(|e| CliError::Usage(e.to_string()))?)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override {o:?} is not key=value")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.vad.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut train = self.train.clone();
        train.seed = 0;
        train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.smote_k == 0 || self.explain_background == 0 || self.explain_top_k == 0 {
            return Err(CliError::Usage(
                "smote.k, explain.background and explain.top_k must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn smote_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(3),
            ..self.train.clone()
        }
    }

    pub fn explain_seed(&self) -> u64 {
        self.seed.wrapping_add(4)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub recording_id: String,
    /// `ok`, `no speech` or `error`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub athlete: Option<u32>,
    pub n_turns: usize,
    pub n_athlete_turns: usize,
    /// Seconds per speaker cluster.
    pub durations: BTreeMap<u32, f64>,
    pub segments: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textgrid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const STATUS_OK: &str = "ok";
pub const STATUS_NO_SPEECH: &str = "no speech";
pub const STATUS_ERROR: &str = "error";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractSummary {
    pub ok: usize,
    pub no_speech: usize,
    pub failed: usize,
}

fn manifest_turns(rec: &ManifestRecord) -> Option<Result<Vec<Turn>, SegmenterError>> {
    rec.turns.as_ref().map(|ts| {
        let mut turns = ts
            .iter()
            .map(|t| {
                Ok(Turn {
                    interval: Interval::new(t.start, t.end)?,
                    speaker: t.speaker,
                })
            })
            .collect::<Result<Vec<_>, SegmenterError>>()?;
        turns.sort_by(|a, b| a.interval.start.total_cmp(&b.interval.start));
        Ok(turns)
    })
}

fn extract_one(manifest: &Manifest, rec: &ManifestRecord, out_dir: &Path, cfg: &PipelineConfig) -> Result<ExtractReport, CliError> {
    let raw = audio::load_wav(manifest.resolve(&rec.audio_path))?;
    let buf = audio::to_canonical(&raw)?;
    let speech = segmenter::detect_voice_activity(&buf, &cfg.vad);
    let turns = match manifest_turns(rec) {
        Some(t) => t?,
        None => segmenter::cluster_speakers(&buf, &speech, cfg.n_speakers),
    };
    let tiers = segmenter::annotation_tiers(buf.duration(), &speech, &turns);
    let tg_name = format!("{}.TextGrid", rec.recording_id);
    write_file(&out_dir.join(&tg_name), textgrid::serialize_textgrid(&tiers)?)?;
    let durations = segmenter::speaker_durations(&turns);
    let mut report = ExtractReport {
        recording_id: rec.recording_id.clone(),
        status: STATUS_NO_SPEECH.into(),
        athlete: None,
        n_turns: turns.len(),
        n_athlete_turns: 0,
        durations,
        segments: Vec::new(),
        textgrid: Some(tg_name),
        error: None,
    };
    let Ok(athlete) = segmenter::select_athlete(&turns) else {
        return Ok(report);
    };
    let segments = segmenter::extract_segments(&buf, &turns, athlete);
    for (i, seg) in segments.iter().enumerate() {
        let name = format!("{}_seg{i}.wav", rec.recording_id);
        audio::write_wav(out_dir.join(&name), seg)?;
        report.segments.push(name);
    }
    report.status = STATUS_OK.into();
    report.athlete = Some(athlete);
    report.n_athlete_turns = segments.len();
    Ok(report)
}

/// VAD, clustering (or manifest turns), athlete selection and segment
/// export for every recording. Failed recordings are reported and skipped.
pub fn cmd_extract(manifest_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<ExtractSummary, CliError> {
    cfg.validate()?;
    let manifest = Manifest::load(manifest_path)?;
    for rec in &manifest.records {
        if let Some(Err(e)) = manifest_turns(rec) {
            return Err(CliError::Data(format!("{}: {e}", rec.recording_id)));
        }
    }
    create_dir(out_dir)?;
    let reports: Vec<ExtractReport> = manifest
        .records
        .par_iter()
        .map(|rec| {
            extract_one(&manifest, rec, out_dir, cfg).unwrap_or_else(|e| ExtractReport {
                recording_id: rec.recording_id.clone(),
                status: STATUS_ERROR.into(),
                athlete: None,
                n_turns: 0,
                n_athlete_turns: 0,
                durations: BTreeMap::new(),
                segments: Vec::new(),
                textgrid: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let mut summary = ExtractSummary::default();
    let mut text = String::new();
    for r in &reports {
        match r.status.as_str() {
            STATUS_OK => summary.ok += 1,
            STATUS_NO_SPEECH => summary.no_speech += 1,
            _ => {
                summary.failed += 1;
                eprintln!("{}: {}", r.recording_id, r.error.as_deref().unwrap_or("failed"));
            }
        }
        text.push_str(&serde_json::to_string(r).expect("report serializes"));
        text.push('\n');
    }
    write_file(&out_dir.join(EXTRACT_REPORT), text)?;
    if !reports.is_empty() && summary.failed == reports.len() {
        return Err(CliError::Data("every recording failed to extract".into()));
    }
    Ok(summary)
}

pub fn load_extract_report(dir: &Path) -> Result<Vec<ExtractReport>, CliError> {
    let path = dir.join(EXTRACT_REPORT);
    read_file(&path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// One feature vector; `segment_index` is absent for recording-level rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureRow {
    pub recording_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment_index: Option<usize>,
    pub label: Label,
    pub values: Vec<f64>,
}

pub fn rows_to_jsonl(rows: &[FeatureRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}

pub fn load_feature_rows(path: &Path) -> Result<Vec<FeatureRow>, CliError> {
    let rows: Vec<FeatureRow> = read_file(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<_, _>>()?;
    let Some(first) = rows.first() else {
        return Err(CliError::Data(format!("{}: no feature rows", path.display())));
    };
    let d = first.values.len();
    if let Some(bad) = rows.iter().find(|r| r.values.len() != d) {
        return Err(CliError::Data(format!(
            "{}: row {} has {} values, expected {d}",
            path.display(),
            bad.recording_id,
            bad.values.len()
        )));
    }
    if let Some(bad) = rows.iter().find(|r| r.values.iter().any(|v| !v.is_finite())) {
        return Err(CliError::Data(format!("{}: non-finite value in {}", path.display(), bad.recording_id)));
    }
    Ok(rows)
}

/// The 88 prosodic features of every extracted athlete segment.
pub fn cmd_features(manifest_path: &Path, extract_dir: &Path, out: &Path) -> Result<Vec<FeatureRow>, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let reports = load_extract_report(extract_dir)?;
    let mut jobs: Vec<(String, usize, Label, PathBuf)> = Vec::new();
    for r in reports.iter().filter(|r| r.status == STATUS_OK) {
        let rec = manifest
            .get(&r.recording_id)
            .ok_or_else(|| CliError::Data(format!("{} is not in the manifest", r.recording_id)))?;
        for (i, seg) in r.segments.iter().enumerate() {
            let path = extract_dir.join(seg);
            if !path.exists() {
                return Err(CliError::Data(format!("missing segment {}", path.display())));
            }
            jobs.push((r.recording_id.clone(), i, rec.label, path));
        }
    }
    let computed: Vec<Result<Option<FeatureRow>, CliError>> = jobs
        .par_iter()
        .map(|(rid, i, label, path)| {
            let seg = audio::load_wav(path)?;
            match prosody::extract_feature_vector(&seg) {
                Ok(v) => Ok(Some(FeatureRow {
                    recording_id: rid.clone(),
                    segment_index: Some(*i),
                    label: *label,
                    values: v.into_values(),
                })),
                Err(FeatureError::TooShort(secs)) => {
                    eprintln!("{}: skipping {secs:.3} s segment", path.display());
                    Ok(None)
                }
                Err(e) => Err(CliError::Data(format!("{}: {e}", path.display()))),
            }
        })
        .collect();
    let rows: Vec<FeatureRow> = computed
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data("no segment produced a feature vector".into()));
    }
    write_file(out, rows_to_jsonl(&rows))?;
    Ok(rows)
}

/// Names of the feature columns for a `d`-dimensional representation.
pub fn column_names(d: usize) -> Vec<String> {
    if d == prosody::N_FEATURES {
        prosody::schema().to_vec()
    } else {
        (0..d).map(|i| format!("dim_{i}")).collect()
    }
}

/// Mean-pools each listed segment embedding, averages segments per
/// recording and writes one `.f32` file per recording plus `pooled.jsonl`.
pub fn cmd_pool(manifest_path: &Path, out_dir: &Path) -> Result<Vec<FeatureRow>, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let mut pooled: Vec<(FeatureRow, String)> = Vec::new();
    let mut dim = None;
    for rec in &manifest.records {
        let files = rec
            .embeddings
            .as_ref()
            .filter(|f| !f.is_empty())
            .ok_or_else(|| CliError::Data(format!("{} lists no embedding files", rec.recording_id)))?;
        let mut segs = Vec::with_capacity(files.len());
        let mut tag = String::new();
        for f in files {
            let data = manifest.resolve(f);
            let seq = embeddings::load_embedding_file(&data, embeddings::header_path_for(&data))?;
            tag = seq.source_tag().to_string();
            segs.push(embeddings::pool_mean(&seq)?);
        }
        let rec_emb = embeddings::aggregate_recording(&segs)?;
        let d = rec_emb.vector.len();
        if *dim.get_or_insert(d) != d {
            return Err(EmbeddingError::DimMismatch {
                expected: dim.unwrap_or(d),
                found: d,
            }
            .into());
        }
        pooled.push((
            FeatureRow {
                recording_id: rec.recording_id.clone(),
                segment_index: None,
                label: rec.label,
                values: rec_emb.vector,
            },
            tag,
        ));
    }
    if pooled.is_empty() {
        return Err(CliError::Data("manifest has no records".into()));
    }
    create_dir(out_dir)?;
    for (row, tag) in &pooled {
        let seq = embeddings::Embedding {
            vector: row.values.clone(),
        }
        .to_sequence(tag)?;
        let data = out_dir.join(format!("{}.f32", row.recording_id));
        embeddings::write_embedding_file(&seq, &data, embeddings::header_path_for(&data))?;
    }
    let rows: Vec<FeatureRow> = pooled.into_iter().map(|(r, _)| r).collect();
    write_file(&out_dir.join(POOLED_ROWS), rows_to_jsonl(&rows))?;
    Ok(rows)
}

pub fn cmd_split(manifest_path: &Path, out: &Path, cfg: &PipelineConfig) -> Result<SplitAssignment, CliError> {
    let manifest = Manifest::load(manifest_path)?;
    let assignment = split_speakers(&manifest, cfg.split_ratios, cfg.split_seed())?;
    write_file(out, split_to_jsonl(&manifest, &assignment))?;
    Ok(assignment)
}

pub fn load_split(path: &Path) -> Result<SplitAssignment, CliError> {
    Ok(parse_split(&read_file(path)?, &path.display().to_string())?)
}

/// Recording-level rows of one split, ordered by recording id.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub ids: Vec<String>,
    pub data: LabeledMatrix,
}

/// Unweighted mean of segment rows per recording.
pub fn recording_vectors(rows: &[FeatureRow]) -> Result<BTreeMap<String, (Label, Vec<f64>)>, CliError> {
    let mut acc: BTreeMap<String, (Label, Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc
            .entry(r.recording_id.clone())
            .or_insert_with(|| (r.label, vec![0.0; r.values.len()], 0));
        if e.0 != r.label {
            return Err(CliError::Data(format!("conflicting labels for {}", r.recording_id)));
        }
        for (a, v) in e.1.iter_mut().zip(&r.values) {
            *a += v;
        }
        e.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(id, (label, sum, n))| (id, (label, sum.into_iter().map(|s| s / n as f64).collect())))
        .collect())
}

/// Splits recording vectors by assignment. Every recording with features
/// must appear in the split file.
pub fn split_views(
    rows: &[FeatureRow],
    assignment: &SplitAssignment,
) -> Result<BTreeMap<Split, SplitData>, CliError> {
    let recs = recording_vectors(rows)?;
    let mut parts: BTreeMap<Split, (Vec<String>, Vec<Vec<f64>>, Vec<usize>)> = BTreeMap::new();
    for (id, (label, v)) in recs {
        let split = assignment
            .get(&id)
            .ok_or_else(|| CliError::Data(format!("{id} has features but no split assignment")))?;
        let p = parts.entry(*split).or_default();
        p.0.push(id);
        p.1.push(v);
        p.2.push(label.class());
    }
    parts
        .into_iter()
        .map(|(s, (ids, rows, labels))| Ok((s, SplitData { ids, data: LabeledMatrix::from_rows(&rows, labels)? })))
        .collect()
}

fn require_split<'a>(views: &'a BTreeMap<Split, SplitData>, split: Split) -> Result<&'a SplitData, CliError> {
    views
        .get(&split)
        .ok_or_else(|| CliError::Data(format!("no recordings with features in the {split} split")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub history: History,
}

/// Standardize on training rows, SMOTE-balance, train, and write
/// `model.json` and `history.csv` into `out_dir`.
pub fn cmd_train(
    features: &Path,
    split: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let rows = load_feature_rows(features)?;
    let assignment = load_split(split)?;
    let views = split_views(&rows, &assignment)?;
    let train_view = require_split(&views, Split::Train)?;
    let standardizer = Standardizer::fit(&train_view.data.features);
    let standardized = LabeledMatrix::new(
        standardizer.transform(&train_view.data.features),
        train_view.data.labels.clone(),
    )?;
    let balanced = smote_balance(&standardized, cfg.smote_k, cfg.smote_seed())?;
    let val = views
        .get(&Split::Validation)
        .map(|v| LabeledMatrix::new(standardizer.transform(&v.data.features), v.data.labels.clone()))
        .transpose()?;
    let (params, history) = model::train(&balanced, val.as_ref(), &cfg.train_config())?;
    let classifier = Classifier::new(standardizer, params)?;
    create_dir(out_dir)?;
    model::save_checkpoint(&classifier, out_dir.join(MODEL_FILE))?;
    write_file(&out_dir.join(HISTORY_FILE), history.to_csv())?;
    Ok(TrainOutcome { classifier, history })
}

pub fn cmd_eval(features: &Path, split: &Path, model_path: &Path, subset: Split) -> Result<Metrics, CliError> {
    let classifier = model::load_checkpoint(model_path)?;
    let rows = load_feature_rows(features)?;
    classifier.check_input_dim(rows[0].values.len())?;
    let assignment = load_split(split)?;
    let views = split_views(&rows, &assignment)?;
    let view = require_split(&views, subset)?;
    let standardized = LabeledMatrix::new(
        classifier.standardizer.transform(&view.data.features),
        view.data.labels.clone(),
    )?;
    Ok(model::evaluate(&classifier.params, &standardized)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutcome {
    pub ranking: Vec<RankedFeature>,
    pub result: explain::ShapResult,
}

/// Kernel SHAP on P(win) for every recording of `subset`, with background
/// rows sampled from the training split.
pub fn cmd_explain(
    features: &Path,
    split: &Path,
    model_path: &Path,
    out_dir: &Path,
    subset: Split,
    top_k: usize,
    cfg: &PipelineConfig,
) -> Result<ExplainOutcome, CliError> {
    cfg.validate()?;
    let classifier = model::load_checkpoint(model_path)?;
    let rows = load_feature_rows(features)?;
    let d = rows[0].values.len();
    classifier.check_input_dim(d)?;
    let assignment = load_split(split)?;
    let views = split_views(&rows, &assignment)?;
    let train_view = require_split(&views, Split::Train)?;
    let target = require_split(&views, subset)?;
    let background = explain::sample_background(&train_view.data.features, cfg.explain_background, cfg.explain_seed());
    let n_samples = cfg.explain_n_samples.unwrap_or(2 * d + 2048);
    let result = explain::explain_batch(
        &classifier,
        &target.data.features,
        &background,
        ShapMethod::Kernel {
            n_samples,
            seed: cfg.explain_seed(),
        },
        explain::WIN_PROBABILITY,
    )?;
    let names = column_names(d);
    let ranking = explain::shap_summary(&result, &names, top_k)?;
    create_dir(out_dir)?;
    write_file(&out_dir.join(SHAP_SUMMARY_FILE), explain::summary_csv(&ranking))?;
    write_file(
        &out_dir.join(SHAP_VALUES_FILE),
        explain::attributions_jsonl(&result, &target.ids),
    )?;
    Ok(ExplainOutcome { ranking, result })
}

/// `rank  name  value` lines for terminal output.
pub fn format_ranking(ranking: &[RankedFeature]) -> String {
    let width = ranking.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in ranking {
        writeln!(s, "{:>3}  {:<width$}  {:.6}", r.rank, r.name, r.mean_abs).expect("write to string");
    }
    s
}
