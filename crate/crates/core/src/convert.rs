//! Converters from FEVER-style and Politifact-style exports to the native format.
//!
//! Both inputs are JSONL with `id`, `claim`, `label` and an `evidence` field
//! that may be a string or a list of sentences. Sentence lists are joined with
//! a single space in document order.

use std::io::BufRead;

use serde::Deserialize;
use serde_json::Value;

use crate::data::{map_fever_label, map_politifact_label, ClaimRecord, Dataset, VeracityLabel};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Default)]
pub struct ConvertOptions {
    /// Keep at most this many evidence sentences (no limit when `None`).
    pub max_evidence_sentences: Option<usize>,
    /// FEVER only: draw the unsupported class half from REFUTES and half from
    /// NOT ENOUGH INFO, using `seed` to pick which records survive.
    pub balance_unsupported: bool,
    pub seed: u64,
}

#[derive(Deserialize)]
struct ExportRow {
    id: Value,
    claim: String,
    #[serde(default)]
    evidence: Value,
    label: String,
}

fn id_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn join_evidence(v: &Value, max: Option<usize>, origin: &str, line: usize) -> Result<String> {
    let sentences: Vec<&str> = match v {
        Value::Null => Vec::new(),
        Value::String(s) => vec![s.as_str()],
        Value::Array(items) => items
            .iter()
            .map(|it| {
                it.as_str().ok_or_else(|| Error::Parse {
                    path: origin.to_string(),
                    line,
                    message: "evidence list must contain strings".into(),
                })
            })
            .collect::<Result<_>>()?,
        _ => {
            return Err(Error::Parse {
                path: origin.to_string(),
                line,
                message: "evidence must be a string or a list of strings".into(),
            })
        }
    };
    let take = max.unwrap_or(usize::MAX);
    Ok(sentences
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .take(take)
        .collect::<Vec<_>>()
        .join(" "))
}

fn read_rows<R: BufRead>(
    origin: &str,
    reader: R,
    opts: &ConvertOptions,
    map: fn(&str) -> Result<VeracityLabel>,
) -> Result<Vec<ClaimRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: ExportRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        let label = map(&row.label).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(ClaimRecord {
            id: id_string(&row.id),
            claim: row.claim,
            evidence: join_evidence(&row.evidence, opts.max_evidence_sentences, origin, lineno)?,
            label,
            source_label: Some(row.label.trim().to_string()),
        });
    }
    Ok(out)
}

/// Picks `k` of the given indices with a seeded shuffle, returning them in
/// their original order.
fn sample_in_order(indices: &[usize], k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut picked = indices.to_vec();
    rng.shuffle(&mut picked);
    picked.truncate(k);
    picked.sort_unstable();
    picked
}

pub fn convert_fever<R: BufRead>(
    name: &str,
    origin: &str,
    reader: R,
    opts: &ConvertOptions,
) -> Result<Dataset> {
    let records = read_rows(origin, reader, opts, map_fever_label)?;
    if !opts.balance_unsupported {
        return Dataset::new(name, records);
    }

    let class_of = |r: &ClaimRecord| {
        r.source_label
            .as_deref()
            .map(|s| {
                s.split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ")
                    .to_ascii_uppercase()
            })
            .unwrap_or_default()
    };
    let refutes: Vec<usize> = (0..records.len())
        .filter(|&i| class_of(&records[i]) == "REFUTES")
        .collect();
    let nei: Vec<usize> = (0..records.len())
        .filter(|&i| class_of(&records[i]) == "NOT ENOUGH INFO")
        .collect();
    let k = refutes.len().min(nei.len());

    let mut rng = SplitMix64::new(opts.seed);
    let mut keep = vec![false; records.len()];
    for (i, r) in records.iter().enumerate() {
        if r.label == VeracityLabel::Supported {
            keep[i] = true;
        }
    }
    for i in sample_in_order(&refutes, k, &mut rng)
        .into_iter()
        .chain(sample_in_order(&nei, k, &mut rng))
    {
        keep[i] = true;
    }
    let kept = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    Dataset::new(name, kept)
}

pub fn convert_politifact<R: BufRead>(
    name: &str,
    origin: &str,
    reader: R,
    opts: &ConvertOptions,
) -> Result<Dataset> {
    Dataset::new(name, read_rows(origin, reader, opts, map_politifact_label)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn fever_evidence_joined_and_truncated() {
        let text = r#"{"id":1,"claim":"c","evidence":["First one.","Second.","Third."],"label":"SUPPORTS"}"#;
        let ds = convert_fever("f", "mem", Cursor::new(text), &ConvertOptions::default()).unwrap();
        assert_eq!(ds.records()[0].evidence, "First one. Second. Third.");
        assert_eq!(ds.records()[0].id, "1");
        assert_eq!(ds.records()[0].source_label.as_deref(), Some("SUPPORTS"));

        let opts = ConvertOptions {
            max_evidence_sentences: Some(2),
            ..Default::default()
        };
        let ds = convert_fever("f", "mem", Cursor::new(text), &opts).unwrap();
        assert_eq!(ds.records()[0].evidence, "First one. Second.");
    }

    #[test]
    fn fever_balancing_halves_unsupported() {
        let mut text = String::new();
        for i in 0..5 {
            text += &format!(
                "{{\"id\":\"s{i}\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"SUPPORTS\"}}\n"
            );
        }
        for i in 0..7 {
            text += &format!(
                "{{\"id\":\"r{i}\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"REFUTES\"}}\n"
            );
        }
        for i in 0..3 {
            text += &format!("{{\"id\":\"n{i}\",\"claim\":\"c\",\"evidence\":\"e\",\"label\":\"NOT ENOUGH INFO\"}}\n");
        }
        let opts = ConvertOptions {
            balance_unsupported: true,
            seed: 42,
            ..Default::default()
        };
        let ds = convert_fever("f", "mem", Cursor::new(text.clone()), &opts).unwrap();
        let refutes = ds
            .records()
            .iter()
            .filter(|r| r.id.starts_with('r'))
            .count();
        let nei = ds
            .records()
            .iter()
            .filter(|r| r.id.starts_with('n'))
            .count();
        assert_eq!((refutes, nei), (3, 3));
        assert_eq!(ds.class_count(VeracityLabel::Supported), 5);
        assert_eq!(ds.class_count(VeracityLabel::Unsupported), 6);

        let again = convert_fever("f", "mem", Cursor::new(text), &opts).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn politifact_six_way() {
        let text = "{\"id\":\"a\",\"claim\":\"x\",\"evidence\":\"\",\"label\":\"pants-fire\"}\n\
                    {\"id\":\"b\",\"claim\":\"y\",\"evidence\":\"\",\"label\":\"half-true\"}\n";
        let ds =
            convert_politifact("p", "mem", Cursor::new(text), &ConvertOptions::default()).unwrap();
        assert_eq!(ds.records()[0].label, VeracityLabel::Unsupported);
        assert_eq!(ds.records()[1].label, VeracityLabel::Supported);
    }

    #[test]
    fn unknown_source_label_names_line() {
        let text = "{\"id\":\"a\",\"claim\":\"x\",\"label\":\"lie\"}";
        match convert_politifact(
            "p",
            "in.jsonl",
            Cursor::new(text),
            &ConvertOptions::default(),
        ) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
