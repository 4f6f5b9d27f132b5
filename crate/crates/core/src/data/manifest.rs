use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Emotion, Result, SerError};

pub const MANIFEST_COLUMNS: [&str; 7] = [
    "utterance_id",
    "wav_path",
    "label",
    "session",
    "speaker",
    "agreement",
    "topic_type",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    M,
    F,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    /// As written in the manifest; relative paths resolve against the manifest's directory.
    pub wav_path: PathBuf,
    pub label: Emotion,
    pub session: u8,
    pub speaker: Speaker,
    pub agreement: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<UtteranceRecord>,
    pub counts: [usize; Emotion::COUNT],
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(records: Vec<UtteranceRecord>, base_dir: impl Into<PathBuf>) -> Self {
        let mut counts = [0; Emotion::COUNT];
        for r in &records {
            counts[r.label.index()] += 1;
        }
        DatasetManifest {
            records,
            counts,
            base_dir: base_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Emotion> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        if record.wav_path.is_absolute() {
            record.wav_path.clone()
        } else {
            self.base_dir.join(&record.wav_path)
        }
    }

    /// Keeps the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DatasetManifest {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        DatasetManifest::new(records, self.base_dir.clone())
    }
}

enum LabelClass {
    Kept(Emotion),
    Excluded,
}

fn classify_label(raw: &str) -> Option<LabelClass> {
    let l = raw.trim().to_ascii_lowercase();
    let kept = match l.as_str() {
        "neutral" | "neu" => Some(Emotion::Neutral),
        "happiness" | "happy" | "hap" => Some(Emotion::Happiness),
        "sadness" | "sad" => Some(Emotion::Sadness),
        "anger" | "angry" | "ang" => Some(Emotion::Anger),
        _ => None,
    };
    if let Some(e) = kept {
        return Some(LabelClass::Kept(e));
    }
    match l.as_str() {
        "frustration" | "fru" | "excited" | "excitement" | "exc" | "surprise" | "sur" | "fear" | "fea" | "disgust"
        | "dis" | "other" | "oth" | "xxx" => Some(LabelClass::Excluded),
        _ => None,
    }
}

fn is_improvised(raw: &str) -> bool {
    matches!(raw.trim().to_ascii_lowercase().as_str(), "improvised" | "impro")
}

/// Parses manifest CSV text. Rows that are scripted, outside the four kept
/// classes, or below two agreeing annotators are dropped.
pub fn parse_manifest<R: Read>(input: R, base_dir: impl Into<PathBuf>) -> Result<DatasetManifest> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut col = [0usize; 7];
    for (slot, name) in col.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SerError::Schema(format!("manifest is missing column `{name}`")))?;
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |c: usize| row.get(col[c]).unwrap_or("");
        let perr = |msg: String| SerError::Parse { row: row_no, msg };
        let label = match classify_label(field(2)) {
            Some(l) => l,
            None => return Err(perr(format!("unknown label `{}`", field(2)))),
        };
        let session: u8 = field(3).parse().map_err(|_| perr(format!("bad session `{}`", field(3))))?;
        if !(1..=5).contains(&session) {
            return Err(perr(format!("session {session} outside 1..5")));
        }
        let speaker = match field(4).to_ascii_uppercase().as_str() {
            "M" => Speaker::M,
            "F" => Speaker::F,
            other => return Err(perr(format!("bad speaker `{other}`"))),
        };
        let agreement: u32 = field(5).parse().map_err(|_| perr(format!("bad agreement `{}`", field(5))))?;
        let id = field(0);
        if id.is_empty() {
            return Err(perr("empty utterance_id".into()));
        }
        let LabelClass::Kept(label) = label else { continue };
        if !is_improvised(field(6)) || agreement < 2 {
            continue;
        }
        records.push(UtteranceRecord {
            utterance_id: id.to_string(),
            wav_path: PathBuf::from(field(1)),
            label,
            session,
            speaker,
            agreement,
        });
    }
    Ok(DatasetManifest::new(records, base_dir))
}

/// Loads and filters a manifest file. An empty result is an error.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let m = parse_manifest(File::open(path)?, base)?;
    if m.is_empty() {
        return Err(SerError::EmptyInput(format!("{} has no usable records", path.display())));
    }
    Ok(m)
}

pub fn write_manifest<W: Write>(m: &DatasetManifest, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_COLUMNS)?;
    for r in &m.records {
        let session = r.session.to_string();
        let agreement = r.agreement.to_string();
        w.write_record([
            r.utterance_id.as_str(),
            &r.wav_path.to_string_lossy(),
            r.label.name(),
            &session,
            match r.speaker {
                Speaker::M => "M",
                Speaker::F => "F",
            },
            &agreement,
            "improvised",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Percent share of each class.
pub fn class_distribution(m: &DatasetManifest) -> Result<[f64; Emotion::COUNT]> {
    if m.is_empty() {
        return Err(SerError::EmptyInput("class distribution of an empty manifest".into()));
    }
    let total = m.len() as f64;
    Ok(m.counts.map(|c| 100.0 * c as f64 / total))
}
