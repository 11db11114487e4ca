//! Manifests, speaker-disjoint splits, z-normalization and SMOTE.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {reason}")]
    Manifest {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate recording id {0}")]
    DuplicateRecording(String),
    #[error("need at least 3 speakers to split, found {0}")]
    TooFewSpeakers(usize),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("SMOTE needs both classes present")]
    SingleClass,
    #[error("SMOTE needs at least two minority samples, found {0}")]
    MinorityTooSmall(usize),
    #[error("matrix has {rows} rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("label {0} is not 0 (lose) or 1 (win)")]
    BadLabel(usize),
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Match outcome. The numeric class is 0 for lose and 1 for win.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Lose,
    Win,
}

impl Label {
    pub fn class(self) -> usize {
        match self {
            Label::Lose => 0,
            Label::Win => 1,
        }
    }

    pub fn from_class(c: usize) -> Option<Self> {
        match c {
            0 => Some(Label::Lose),
            1 => Some(Label::Win),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Lose => "lose",
            Label::Win => "win",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnAnnotation {
    pub start: f64,
    pub end: f64,
    pub speaker: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub recording_id: String,
    pub audio_path: PathBuf,
    pub label: Label,
    pub speaker_id: String,
    /// Ground-truth speaker turns; when present they replace clustering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<Vec<TurnAnnotation>>,
    /// Per-segment embedding files (`.f32` with `.f32.json` sidecars).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.recording_id.as_str()) {
                return Err(DatasetError::DuplicateRecording(r.recording_id.clone()));
            }
        }
        Ok(Self {
            records,
            base_dir: base_dir.into(),
        })
    }

    /// JSON-lines, one record per non-blank line.
    pub fn parse(text: &str, origin: &str, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestRecord =
                serde_json::from_str(line).map_err(|e| DatasetError::Manifest {
                    path: origin.to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            records.push(rec);
        }
        Self::new(records, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &path.display().to_string(), base)
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn get(&self, recording_id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.recording_id == recording_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRow {
    pub recording_id: String,
    pub split: Split,
}

/// Recording id to split.
pub type SplitAssignment = BTreeMap<String, Split>;

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

/// Speaker-disjoint train/validation/test assignment.
///
/// Speakers (sorted by id) are shuffled with a seeded ChaCha8 stream and
/// then handed out one at a time, all recordings together, to the split
/// whose recording fraction is furthest below its target (ties go to the
/// earlier split). Once only as many speakers remain as there are empty
/// splits, they fill the empty splits first so that none ends up empty.
pub fn split_speakers(
    manifest: &Manifest,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in &manifest.records {
        by_speaker
            .entry(r.speaker_id.as_str())
            .or_default()
            .push(r.recording_id.as_str());
    }
    if by_speaker.len() < 3 {
        return Err(DatasetError::TooFewSpeakers(by_speaker.len()));
    }
    let mut speakers: Vec<(&str, Vec<&str>)> = by_speaker.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    speakers.shuffle(&mut rng);

    let total = manifest.records.len() as f64;
    let mut counts = [0usize; 3];
    let mut assignment = SplitAssignment::new();
    let n_speakers = speakers.len();
    for (done, (_, recordings)) in speakers.into_iter().enumerate() {
        let remaining = n_speakers - done;
        let empty: Vec<usize> = (0..3).filter(|&i| counts[i] == 0).collect();
        let target = if !empty.is_empty() && remaining <= empty.len() {
            // Largest target among the empty splits.
            *empty
                .iter()
                .max_by(|&&a, &&b| ratios[a].total_cmp(&ratios[b]).then(b.cmp(&a)))
                .expect("non-empty")
        } else {
            let mut best = 0;
            let mut best_deficit = f64::NEG_INFINITY;
            for (i, ratio) in ratios.iter().enumerate() {
                let deficit = ratio - counts[i] as f64 / total;
                if deficit > best_deficit {
                    best = i;
                    best_deficit = deficit;
                }
            }
            best
        };
        counts[target] += recordings.len();
        for rid in recordings {
            assignment.insert(rid.to_string(), Split::ALL[target]);
        }
    }
    Ok(assignment)
}

pub fn split_to_jsonl(manifest: &Manifest, assignment: &SplitAssignment) -> String {
    manifest
        .records
        .iter()
        .filter_map(|r| {
            assignment.get(&r.recording_id).map(|&split| {
                serde_json::to_string(&SplitRow {
                    recording_id: r.recording_id.clone(),
                    split,
                })
                .expect("split row serializes")
                    + "\n"
            })
        })
        .collect()
}

pub fn parse_split(text: &str, origin: &str) -> Result<SplitAssignment, DatasetError> {
    let mut out = SplitAssignment::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: SplitRow = serde_json::from_str(line).map_err(|e| DatasetError::Manifest {
            path: origin.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        if out.insert(row.recording_id.clone(), row.split).is_some() {
            return Err(DatasetError::DuplicateRecording(row.recording_id));
        }
    }
    Ok(out)
}

/// Feature rows with binary labels (0 = lose, 1 = win).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledMatrix {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self, DatasetError> {
        if features.nrows() != labels.len() {
            return Err(DatasetError::ShapeMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(DatasetError::BadLabel(l));
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row, col });
        }
        Ok(Self { features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self, DatasetError> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(DatasetError::ShapeMismatch {
                rows: bad.len(),
                labels: d,
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), d), flat).expect("shape checked");
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

/// Per-dimension z-normalization; constant columns get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Array1<f64> = x.sum_axis(Axis(0)) / n;
        let std: Vec<f64> = x
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Oversamples the minority class until both classes have equal counts.
///
/// Synthetic points are `x + u·(nn − x)` with `u` drawn from the open unit
/// interval and `nn` one of the `k` nearest minority neighbours of `x`
/// (Euclidean distance after z-scoring the input columns). Base points cycle
/// through the minority rows in order. Originals keep their positions;
/// synthetic rows are appended.
pub fn smote_balance(data: &LabeledMatrix, k: usize, seed: u64) -> Result<LabeledMatrix, DatasetError> {
    let counts = data.class_counts();
    if counts[0] == 0 || counts[1] == 0 {
        return Err(DatasetError::SingleClass);
    }
    if counts[0] == counts[1] {
        return Ok(data.clone());
    }
    let minority = if counts[0] < counts[1] { 0 } else { 1 };
    let n_min = counts[minority];
    if n_min < 2 {
        return Err(DatasetError::MinorityTooSmall(n_min));
    }
    let need = counts[1 - minority] - n_min;
    let k = k.clamp(1, n_min - 1);

    let scaler = Standardizer::fit(&data.features);
    let scaled = scaler.transform(&data.features);
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == minority).collect();

    let neighbours: Vec<Vec<usize>> = idx
        .iter()
        .map(|&i| {
            let mut cand: Vec<(f64, usize)> = idx
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| {
                    let d: f64 = scaled
                        .row(i)
                        .iter()
                        .zip(scaled.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = data.dim();
    let mut synthetic = Vec::with_capacity(need * d);
    for s in 0..need {
        let b = s % n_min;
        let base = data.features.row(idx[b]);
        let nn = data.features.row(neighbours[b][rng.random_range(0..k)]);
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        synthetic.extend(base.iter().zip(nn).map(|(x, y)| x + u * (y - x)));
    }
    let extra = Array2::from_shape_vec((need, d), synthetic).expect("shape matches");
    let features = ndarray::concatenate(Axis(0), &[data.features.view(), extra.view()])
        .expect("column counts match");
    let mut labels = data.labels.clone();
    labels.extend(std::iter::repeat_n(minority, need));
    Ok(LabeledMatrix { features, labels })
}

/// Distinct speakers per split.
pub fn speakers_by_split(manifest: &Manifest, assignment: &SplitAssignment) -> BTreeMap<Split, BTreeSet<String>> {
    let mut out: BTreeMap<Split, BTreeSet<String>> = BTreeMap::new();
    for r in &manifest.records {
        if let Some(&s) = assignment.get(&r.recording_id) {
            out.entry(s).or_default().insert(r.speaker_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn manifest(speakers: &[(&str, usize)]) -> Manifest {
        let mut records = Vec::new();
        for (s, n) in speakers {
            for i in 0..*n {
                records.push(ManifestRecord {
                    recording_id: format!("{s}_{i}"),
                    audio_path: PathBuf::from(format!("{s}_{i}.wav")),
                    label: if i % 2 == 0 { Label::Win } else { Label::Lose },
                    speaker_id: s.to_string(),
                    turns: None,
                    embeddings: None,
                });
            }
        }
        Manifest::new(records, ".").unwrap()
    }

    #[test]
    fn ten_single_recording_speakers_split_7_2_1() {
        let names: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let spk: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 1)).collect();
        let m = manifest(&spk);
        let a = split_speakers(&m, DEFAULT_RATIOS, 7).unwrap();
        let mut counts = BTreeMap::new();
        for s in a.values() {
            *counts.entry(*s).or_insert(0) += 1;
        }
        assert_eq!(counts[&Split::Train], 7);
        assert_eq!(counts[&Split::Validation], 2);
        assert_eq!(counts[&Split::Test], 1);
        assert_eq!(a, split_speakers(&m, DEFAULT_RATIOS, 7).unwrap());
    }

    #[test]
    fn split_errors() {
        let m = manifest(&[("a", 3), ("b", 2)]);
        assert!(matches!(
            split_speakers(&m, DEFAULT_RATIOS, 0),
            Err(DatasetError::TooFewSpeakers(2))
        ));
        let m = manifest(&[("a", 1), ("b", 1), ("c", 1)]);
        assert!(matches!(
            split_speakers(&m, [0.5, 0.5, 0.1], 0),
            Err(DatasetError::BadRatios(_))
        ));
    }

    #[test]
    fn no_split_left_empty() {
        let m = manifest(&[("big", 100), ("a", 1), ("b", 1)]);
        let a = split_speakers(&m, DEFAULT_RATIOS, 3).unwrap();
        let used: BTreeSet<Split> = a.values().copied().collect();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"{"recording_id":"a","audio_path":"a.wav","label":"win","speaker_id":"x"}
{"recording_id":"a","audio_path":"b.wav","label":"lose","speaker_id":"y"}"#;
        assert!(matches!(
            Manifest::parse(text, "m", "."),
            Err(DatasetError::DuplicateRecording(_))
        ));
        let bad = r#"{"recording_id":"a","audio_path":"a.wav","label":"draw","speaker_id":"x"}"#;
        assert!(matches!(
            Manifest::parse(bad, "m", "."),
            Err(DatasetError::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn smote_balanced_is_noop() {
        let data = LabeledMatrix::new(array![[0.0], [1.0]], vec![0, 1]).unwrap();
        assert_eq!(smote_balance(&data, 5, 1).unwrap(), data);
    }

    #[test]
    fn smote_two_point_minority() {
        let data = LabeledMatrix::new(
            array![[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0], [7.0, 7.0]],
            vec![0, 0, 1, 1, 1, 1],
        )
        .unwrap();
        let out = smote_balance(&data, 5, 11).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out.class_counts(), [4, 4]);
        for r in 6..8 {
            let (x, y) = (out.features[[r, 0]], out.features[[r, 1]]);
            assert_eq!(x, y);
            assert!(x > 0.0 && x < 1.0);
        }
        assert_eq!(out.features.slice(ndarray::s![..6, ..]), data.features);
    }

    #[test]
    fn smote_errors() {
        let one_class = LabeledMatrix::new(array![[0.0], [1.0]], vec![1, 1]).unwrap();
        assert!(matches!(smote_balance(&one_class, 5, 0), Err(DatasetError::SingleClass)));
        let tiny = LabeledMatrix::new(array![[0.0], [1.0], [2.0]], vec![0, 1, 1]).unwrap();
        assert!(matches!(
            smote_balance(&tiny, 5, 0),
            Err(DatasetError::MinorityTooSmall(1))
        ));
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let x = array![[1.0, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(&x);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.transform(&x), array![[-1.0, 0.0], [1.0, 0.0]]);
    }
}
