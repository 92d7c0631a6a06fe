//! Multimodal sequences, JSONL interchange and dataset splits.

mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synth::{generate_synthetic, Pair, Rule, Signal, StreamSpec, SynthTaskSpec, NOISE_CLIP};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sequence {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("invalid synthetic task: {0}")]
    Spec(String),
    #[error("unknown modality {0:?}")]
    UnknownModality(String),
}

/// One example: aligned per-modality feature matrices (`T` rows each) and a
/// label (class index or real value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultimodalSequence {
    pub id: String,
    pub label: f64,
    pub streams: IndexMap<String, Vec<Vec<f64>>>,
}

impl MultimodalSequence {
    /// Common sequence length, or an error when the streams disagree.
    pub fn validate(&self) -> Result<usize, DataError> {
        let invalid = |reason: String| DataError::Invalid { id: self.id.clone(), reason };
        if self.streams.is_empty() {
            return Err(invalid("no streams".into()));
        }
        if !self.label.is_finite() {
            return Err(invalid("label is not finite".into()));
        }
        let mut len: Option<(usize, &str)> = None;
        for (name, rows) in &self.streams {
            if rows.is_empty() {
                return Err(invalid(format!("stream {name} has no timesteps")));
            }
            if let Some((t, first)) = len {
                if rows.len() != t {
                    return Err(invalid(format!(
                        "stream length mismatch: {first} has {t} steps, {name} has {}",
                        rows.len()
                    )));
                }
            }
            len = Some((rows.len(), name));
            let width = rows[0].len();
            if width == 0 || rows.iter().any(|r| r.len() != width) {
                return Err(invalid(format!("stream {name} has ragged or empty rows")));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(invalid(format!("stream {name} contains non-finite values")));
            }
        }
        Ok(len.map_or(0, |(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.streams.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parses JSONL from any reader; blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<MultimodalSequence>, DataError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: MultimodalSequence = serde_json::from_str(&line)
            .map_err(|e| DataError::Parse { line: i + 1, message: e.to_string() })?;
        seq.validate()?;
        out.push(seq);
    }
    Ok(out)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<MultimodalSequence>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    read_jsonl(BufReader::new(file))
}

pub fn write_jsonl_to<'a>(
    mut writer: impl Write,
    seqs: impl IntoIterator<Item = &'a MultimodalSequence>,
) -> std::io::Result<()> {
    for seq in seqs {
        serde_json::to_writer(&mut writer, seq)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Writes one compact JSON record per line. Floats are emitted in shortest
/// round-trip form, so reading back reproduces every value exactly.
pub fn write_jsonl(path: impl AsRef<Path>, seqs: &[MultimodalSequence]) -> Result<(), DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    write_jsonl_to(BufWriter::new(file), seqs).map_err(io)
}

/// Train / validation / test partition, disjoint by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<MultimodalSequence>,
    pub validation: Vec<MultimodalSequence>,
    pub test: Vec<MultimodalSequence>,
}

impl DatasetSplit {
    /// Splits in order: the first 60% train, next 20% validation, rest test.
    pub fn from_ordered(mut seqs: Vec<MultimodalSequence>) -> Self {
        let n = seqs.len();
        let n_train = n * 6 / 10;
        let n_val = n * 2 / 10;
        let test = seqs.split_off(n_train + n_val);
        let validation = seqs.split_off(n_train);
        Self { train: seqs, validation, test }
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultimodalSequence> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn find(&self, id: &str) -> Option<&MultimodalSequence> {
        self.iter().find(|s| s.id == id)
    }

    pub fn map(&self, f: impl Fn(&[MultimodalSequence]) -> Vec<MultimodalSequence>) -> Self {
        Self { train: f(&self.train), validation: f(&self.validation), test: f(&self.test) }
    }
}

/// Keeps the named modality and replaces every other stream by zeros of the
/// same shape.
pub fn unimodal_projection(
    seqs: &[MultimodalSequence],
    modality: &str,
) -> Result<Vec<MultimodalSequence>, DataError> {
    seqs.iter()
        .map(|seq| {
            if !seq.streams.contains_key(modality) {
                return Err(DataError::UnknownModality(modality.to_string()));
            }
            let mut out = seq.clone();
            for (name, rows) in out.streams.iter_mut() {
                if name != modality {
                    rows.iter_mut().for_each(|r| r.fill(0.0));
                }
            }
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(id: &str, lens: &[(&str, usize)]) -> MultimodalSequence {
        let streams = lens
            .iter()
            .map(|&(n, t)| (n.to_string(), (0..t).map(|i| vec![i as f64 * 0.1, 1.0 / 3.0]).collect()))
            .collect();
        MultimodalSequence { id: id.into(), label: 1.0, streams }
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(read_jsonl(&b""[..]).unwrap().is_empty());
        assert!(read_jsonl(&b"\n\n"[..]).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch_cites_id() {
        let bad = seq("clip-7", &[("language", 5), ("vision", 4)]);
        let line = serde_json::to_string(&bad).unwrap();
        let err = read_jsonl(line.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Invalid { ref id, .. } if id == "clip-7"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = serde_json::to_string(&seq("a", &[("l", 2)])).unwrap();
        let text = format!("{good}\n{{\"id\": 3}}\n");
        let err = read_jsonl(text.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");
        let text = format!("{good}\n{{\"id\":\"x\",\"label\":0,\"streams\":{{}},\"extra\":1}}\n");
        assert!(read_jsonl(text.as_bytes()).is_err());
    }

    #[test]
    fn zero_rows_are_permitted() {
        let mut s = seq("pause", &[("language", 3), ("vision", 3)]);
        s.streams["language"][1] = vec![0.0, 0.0];
        assert_eq!(s.validate().unwrap(), 3);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut a = seq("a", &[("language", 3), ("vision", 3)]);
        a.streams["vision"][2] = vec![std::f64::consts::PI, -1e-300];
        a.label = 0.1 + 0.2;
        let data = vec![a, seq("b", &[("language", 1), ("vision", 1)])];
        write_jsonl(&path, &data).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), data);
        assert!(matches!(load_jsonl(dir.path().join("missing")), Err(DataError::Io { .. })));
    }

    #[test]
    fn projection_zeroes_other_streams() {
        let data = vec![seq("a", &[("language", 3), ("vision", 3)])];
        let p = unimodal_projection(&data, "vision").unwrap();
        assert_eq!(p[0].streams["vision"], data[0].streams["vision"]);
        assert!(p[0].streams["language"].iter().flatten().all(|&v| v == 0.0));
        assert_eq!(p[0].streams["language"].len(), 3);
        assert_eq!(unimodal_projection(&p, "vision").unwrap(), p);
        assert!(matches!(unimodal_projection(&data, "audio"), Err(DataError::UnknownModality(_))));
    }

    #[test]
    fn split_sizes() {
        let seqs: Vec<_> = (0..50).map(|i| seq(&format!("s{i}"), &[("l", 1)])).collect();
        let split = DatasetSplit::from_ordered(seqs);
        assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (30, 10, 10));
        assert!(split.find("s49").is_some());
    }
}
