//! Claim records, datasets, and the native line-delimited JSON format.
//!
//! One record per line:
//!
//! ```text
//! {"id": "c1", "claim": "...", "evidence": "...", "label": "SUPPORTED", "source_label": "true"}
//! ```
//!
//! Labels are matched case-insensitively on load and always written upper-case.
//! Text is kept verbatim.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VeracityLabel {
    Supported,
    Unsupported,
}

impl VeracityLabel {
    pub const ALL: [VeracityLabel; 2] = [VeracityLabel::Supported, VeracityLabel::Unsupported];

    pub fn flipped(self) -> Self {
        match self {
            VeracityLabel::Supported => VeracityLabel::Unsupported,
            VeracityLabel::Unsupported => VeracityLabel::Supported,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VeracityLabel::Supported => "SUPPORTED",
            VeracityLabel::Unsupported => "UNSUPPORTED",
        }
    }
}

impl fmt::Display for VeracityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VeracityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SUPPORTED" => Ok(VeracityLabel::Supported),
            "UNSUPPORTED" => Ok(VeracityLabel::Unsupported),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub id: String,
    pub claim: String,
    #[serde(default)]
    pub evidence: String,
    pub label: VeracityLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<String>,
}

impl ClaimRecord {
    pub fn new(
        id: impl Into<String>,
        claim: impl Into<String>,
        evidence: impl Into<String>,
        label: VeracityLabel,
    ) -> Self {
        ClaimRecord {
            id: id.into(),
            claim: claim.into(),
            evidence: evidence.into(),
            label,
            source_label: None,
        }
    }
}

/// On-disk shape; `label` is kept as a string so that unknown values produce
/// a label error rather than a generic parse error.
#[derive(Deserialize)]
struct RawRecord {
    id: String,
    claim: String,
    evidence: String,
    label: String,
    #[serde(default)]
    source_label: Option<String>,
}

/// An ordered, validated collection of claim records.
///
/// Record order is the load order; seeded sampling elsewhere is defined
/// relative to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    records: Vec<ClaimRecord>,
    class_counts: BTreeMap<VeracityLabel, usize>,
}

impl Dataset {
    /// Validates id uniqueness and non-empty claims.
    pub fn new(name: impl Into<String>, records: Vec<ClaimRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate record id {:?}", r.id)));
            }
            if r.claim.trim().is_empty() {
                return Err(Error::validation(format!(
                    "record {:?} has an empty claim",
                    r.id
                )));
            }
        }
        Ok(Self::from_records_unchecked(name, records))
    }

    pub(crate) fn from_records_unchecked(
        name: impl Into<String>,
        records: Vec<ClaimRecord>,
    ) -> Self {
        let mut class_counts: BTreeMap<VeracityLabel, usize> =
            VeracityLabel::ALL.iter().map(|&l| (l, 0)).collect();
        for r in &records {
            *class_counts.entry(r.label).or_default() += 1;
        }
        Dataset {
            name: name.into(),
            records,
            class_counts,
        }
    }

    pub fn records(&self) -> &[ClaimRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_count(&self, label: VeracityLabel) -> usize {
        self.class_counts.get(&label).copied().unwrap_or(0)
    }

    pub fn class_counts(&self) -> &BTreeMap<VeracityLabel, usize> {
        &self.class_counts
    }

    pub fn get(&self, id: &str) -> Option<&ClaimRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn into_records(self) -> Vec<ClaimRecord> {
        self.records
    }

    /// Serializes to the native JSONL format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Loads a native JSONL dataset. The dataset name is the file stem.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(name, &path.display().to_string(), BufReader::new(file))
}

/// Parses native JSONL from any reader. `origin` names the source in errors.
pub fn read_dataset<R: BufRead>(
    name: impl Into<String>,
    origin: &str,
    reader: R,
) -> Result<Dataset> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        let label = raw.label.parse::<VeracityLabel>().map_err(|_| {
            Error::validation(format!(
                "{origin}:{lineno}: unknown label {:?} (expected SUPPORTED or UNSUPPORTED)",
                raw.label
            ))
        })?;
        records.push(ClaimRecord {
            id: raw.id,
            claim: raw.claim,
            evidence: raw.evidence,
            label,
            source_label: raw.source_label,
        });
    }
    Dataset::new(name, records)
}

/// `sha256:<hex>` of the canonical JSONL serialization, so formatting
/// differences in the source file do not change the hash.
pub fn dataset_hash(ds: &Dataset) -> String {
    use sha2::{Digest, Sha256};
    format!(
        "sha256:{}",
        hex::encode(Sha256::digest(ds.to_jsonl().as_bytes()))
    )
}

fn normalize_vocab(source: &str) -> String {
    source
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_uppercase()
}

/// FEVER three-way labels collapsed to the binary space: refuted and
/// not-enough-info claims both count as unsupported.
pub fn map_fever_label(source: &str) -> Result<VeracityLabel> {
    match normalize_vocab(source).as_str() {
        "SUPPORTS" => Ok(VeracityLabel::Supported),
        "REFUTES" | "NOT ENOUGH INFO" => Ok(VeracityLabel::Unsupported),
        _ => Err(Error::UnknownLabel(source.to_string())),
    }
}

/// Politifact's six-way truth-o-meter: the three lowest ratings map to
/// unsupported, the rest to supported.
pub fn map_politifact_label(source: &str) -> Result<VeracityLabel> {
    match source.trim().to_ascii_lowercase().as_str() {
        "pants-fire" | "false" | "barely-true" => Ok(VeracityLabel::Unsupported),
        "half-true" | "mostly-true" | "true" => Ok(VeracityLabel::Supported),
        _ => Err(Error::UnknownLabel(source.to_string())),
    }
}
