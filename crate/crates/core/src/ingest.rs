//! CSV ingestion: raw recordings, emotion labels, and the binary target.
//!
//! Exported recordings are one CSV file per subject-emotion pair, with the
//! ECG samples in a named column. Column names, the sampling rate, the
//! filename metadata pattern, and an optional raw-code-to-emotion map are all
//! supplied through [`IngestSchema`] rather than hardcoded, because export
//! layouts vary between dataset snapshots.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elicited emotion classes. Six are modeled; the rest are recognized so
/// their files can be skipped with a precise diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Emotion {
    Amusement,
    Tenderness,
    Gratitude,
    Sadness,
    Disgust,
    Anger,
    Excitement,
    Fear,
    Threat,
    Neutral,
}

impl Emotion {
    /// The six classes that take part in the binary task.
    pub const IN_SCOPE: [Emotion; 6] = [
        Emotion::Amusement,
        Emotion::Tenderness,
        Emotion::Gratitude,
        Emotion::Sadness,
        Emotion::Disgust,
        Emotion::Anger,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Amusement => "amusement",
            Emotion::Tenderness => "tenderness",
            Emotion::Gratitude => "gratitude",
            Emotion::Sadness => "sadness",
            Emotion::Disgust => "disgust",
            Emotion::Anger => "anger",
            Emotion::Excitement => "excitement",
            Emotion::Fear => "fear",
            Emotion::Threat => "threat",
            Emotion::Neutral => "neutral",
        }
    }

    /// Binary target for this emotion, or `UnsupportedEmotion` if it is one
    /// of the classes outside the binary task.
    pub fn binary_label(self) -> Result<BinaryLabel> {
        match self {
            Emotion::Amusement | Emotion::Tenderness | Emotion::Gratitude => {
                Ok(BinaryLabel::Positive)
            }
            Emotion::Sadness | Emotion::Disgust | Emotion::Anger => Ok(BinaryLabel::Negative),
            other => Err(Error::UnsupportedEmotion(other.as_str().to_string())),
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "amusement" => Ok(Emotion::Amusement),
            "tenderness" => Ok(Emotion::Tenderness),
            "gratitude" => Ok(Emotion::Gratitude),
            "sadness" => Ok(Emotion::Sadness),
            "disgust" => Ok(Emotion::Disgust),
            "anger" => Ok(Emotion::Anger),
            "excitement" => Ok(Emotion::Excitement),
            "fear" => Ok(Emotion::Fear),
            "threat" => Ok(Emotion::Threat),
            "neutral" => Ok(Emotion::Neutral),
            other => Err(Error::UnsupportedEmotion(other.to_string())),
        }
    }
}

/// Binary affect target: 0 = negative, 1 = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryLabel {
    Negative,
    Positive,
}

impl BinaryLabel {
    pub fn value(self) -> u8 {
        match self {
            BinaryLabel::Negative => 0,
            BinaryLabel::Positive => 1,
        }
    }

    pub fn from_value(v: u8) -> Result<Self> {
        match v {
            0 => Ok(BinaryLabel::Negative),
            1 => Ok(BinaryLabel::Positive),
            other => Err(Error::InvalidConfig(format!(
                "label {other} not in {{0, 1}}"
            ))),
        }
    }
}

/// Deterministic emotion-to-binary mapping; negative emotions map to 0,
/// positive emotions to 1.
pub fn map_label(emotion: Emotion) -> Result<BinaryLabel> {
    emotion.binary_label()
}

/// One raw ECG trace for a single subject-emotion pair.
#[derive(Debug, Clone)]
pub struct EcgRecording {
    pub subject_id: String,
    pub emotion: Emotion,
    pub samples: Vec<f64>,
    pub sampling_rate_hz: f64,
}

/// External description of the CSV export layout.
///
/// Serialized as a JSON document; every key is optional and falls back to the
/// default shown in the README.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSchema {
    /// Name of the column holding the ECG samples.
    pub ecg_column: String,
    /// Sampling rate of the exports in Hz.
    pub sampling_rate_hz: f64,
    /// Field delimiter, a single ASCII character.
    pub delimiter: char,
    /// Filename metadata pattern containing `{subject}` and `{emotion}`.
    pub filename_pattern: String,
    /// Optional map from raw label tokens (e.g. numeric codes) to emotion
    /// names. Empty map means the filename token is already an emotion name.
    pub label_map: BTreeMap<String, String>,
    /// Optional timestamp column; when named, it must exist and hold
    /// non-decreasing numeric values. Samples are read in file order either
    /// way.
    pub timestamp_column: Option<String>,
}

impl Default for IngestSchema {
    fn default() -> Self {
        Self {
            ecg_column: "ecg".to_string(),
            sampling_rate_hz: 1000.0,
            delimiter: ',',
            filename_pattern: "{subject}_{emotion}.csv".to_string(),
            label_map: BTreeMap::new(),
            timestamp_column: None,
        }
    }
}

impl IngestSchema {
    /// Load a schema from a JSON file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let schema: IngestSchema = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling_rate_hz must be positive, got {}",
                self.sampling_rate_hz
            )));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidConfig(
                "delimiter must be a single ASCII character".to_string(),
            ));
        }
        FilenamePattern::parse(&self.filename_pattern)?;
        Ok(())
    }

    /// Render the filename this schema expects for a subject-emotion pair.
    pub fn filename_for(&self, subject_id: &str, emotion: Emotion) -> String {
        self.filename_pattern
            .replace("{subject}", subject_id)
            .replace("{emotion}", emotion.as_str())
    }

    /// Map a raw filename token through `label_map` (identity when absent).
    fn resolve_emotion(&self, token: &str) -> Result<Emotion> {
        let name = self
            .label_map
            .get(token)
            .map(String::as_str)
            .unwrap_or(token);
        name.parse()
    }
}

/// Compiled `{subject}` / `{emotion}` filename pattern.
struct FilenamePattern {
    prefix: String,
    middle: String,
    suffix: String,
    subject_first: bool,
}

impl FilenamePattern {
    fn parse(pattern: &str) -> Result<Self> {
        let subj = pattern.find("{subject}");
        let emo = pattern.find("{emotion}");
        let (subj, emo) = match (subj, emo) {
            (Some(s), Some(e)) => (s, e),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "filename_pattern `{pattern}` must contain {{subject}} and {{emotion}}"
                )))
            }
        };
        let subject_first = subj < emo;
        let (first, first_len, second, second_len) = if subject_first {
            (subj, "{subject}".len(), emo, "{emotion}".len())
        } else {
            (emo, "{emotion}".len(), subj, "{subject}".len())
        };
        let middle = pattern[first + first_len..second].to_string();
        if middle.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "filename_pattern `{pattern}` needs a separator between placeholders"
            )));
        }
        Ok(Self {
            prefix: pattern[..first].to_string(),
            middle,
            suffix: pattern[second + second_len..].to_string(),
            subject_first,
        })
    }

    /// Extract `(subject, emotion_token)` from a file name.
    ///
    /// When the subject comes first the split uses the *last* occurrence of
    /// the separator, so subject ids may themselves contain it.
    fn extract(&self, name: &str) -> Result<(String, String)> {
        let fail = || {
            Error::InvalidConfig(format!(
                "filename `{name}` does not match pattern `{}{{..}}{}{{..}}{}`",
                self.prefix, self.middle, self.suffix
            ))
        };
        let core = name
            .strip_prefix(self.prefix.as_str())
            .and_then(|rest| rest.strip_suffix(self.suffix.as_str()))
            .ok_or_else(fail)?;
        let split_at = if self.subject_first {
            core.rfind(self.middle.as_str())
        } else {
            core.find(self.middle.as_str())
        }
        .ok_or_else(fail)?;
        let left = &core[..split_at];
        let right = &core[split_at + self.middle.len()..];
        if left.is_empty() || right.is_empty() {
            return Err(fail());
        }
        if self.subject_first {
            Ok((left.to_string(), right.to_string()))
        } else {
            Ok((right.to_string(), left.to_string()))
        }
    }
}

/// Read one CSV export into an [`EcgRecording`].
///
/// Subject and emotion come from the filename per the schema pattern; samples
/// come from the configured ECG column. Any non-finite or unparsable sample
/// aborts the file.
pub fn load_recording(path: &Path, schema: &IngestSchema) -> Result<EcgRecording> {
    schema.validate()?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("unreadable file name: {}", path.display())))?;
    let pattern = FilenamePattern::parse(&schema.filename_pattern)?;
    let (subject_id, token) = pattern.extract(name)?;
    let emotion = schema.resolve_emotion(&token)?;
    // Only the six modeled classes produce usable recordings.
    emotion.binary_label()?;

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(false)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == schema.ecg_column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: schema.ecg_column.clone(),
        })?;
    let ts_col =
        match &schema.timestamp_column {
            Some(name) => Some(headers.iter().position(|h| h == name).ok_or_else(|| {
                Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.clone(),
                }
            })?),
            None => None,
        };

    let mut samples = Vec::new();
    let mut last_timestamp = f64::NEG_INFINITY;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record.get(col).unwrap_or("");
        let value: f64 = cell.trim().parse().map_err(|_| Error::NonNumericSample {
            path: path.to_path_buf(),
            row,
            value: cell.to_string(),
        })?;
        if !value.is_finite() {
            return Err(Error::NonNumericSample {
                path: path.to_path_buf(),
                row,
                value: cell.to_string(),
            });
        }
        if let Some(ts) = ts_col {
            let cell = record.get(ts).unwrap_or("");
            let t: f64 = cell.trim().parse().map_err(|_| Error::NonNumericSample {
                path: path.to_path_buf(),
                row,
                value: cell.to_string(),
            })?;
            if !t.is_finite() || t < last_timestamp {
                return Err(Error::NonNumericSample {
                    path: path.to_path_buf(),
                    row,
                    value: format!("timestamp {cell} out of order"),
                });
            }
            last_timestamp = t;
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }

    Ok(EcgRecording {
        subject_id,
        emotion,
        samples,
        sampling_rate_hz: schema.sampling_rate_hz,
    })
}

/// A file the batch loader could not use, with the reason.
#[derive(Debug)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Load every `*.csv` file in a directory, skipping files that fail with a
/// per-file diagnostic instead of aborting the batch.
///
/// Files are visited in lexicographic name order so results are stable.
pub fn load_directory(
    dir: &Path,
    schema: &IngestSchema,
) -> Result<(Vec<EcgRecording>, Vec<SkippedFile>)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        })
        .collect();
    paths.sort();

    let mut recordings = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        match load_recording(&path, schema) {
            Ok(rec) => recordings.push(rec),
            Err(err) => skipped.push(SkippedFile {
                path,
                reason: err.to_string(),
            }),
        }
    }
    Ok((recordings, skipped))
}

/// Export helper: write a recording back to CSV in the schema layout.
///
/// Samples are formatted with the shortest representation that parses back to
/// the identical `f64`, so a write/load round trip is bitwise exact.
pub fn write_recording_csv(
    recording: &EcgRecording,
    dir: &Path,
    schema: &IngestSchema,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(schema.filename_for(&recording.subject_id, recording.emotion));
    let mut out = String::with_capacity(recording.samples.len() * 8 + 16);
    out.push_str(&schema.ecg_column);
    out.push('\n');
    for s in &recording.samples {
        out.push_str(&format!("{s}\n"));
    }
    fs::write(&path, out)?;
    Ok(path)
}
