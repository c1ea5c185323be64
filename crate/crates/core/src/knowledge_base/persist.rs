//! `.lhkb` files: a JSON header line followed by one JSON record per line.
//!
//! ```text
//! {"format":"lhkb","version":1,"dimension":32,"count":2,"checksum":"<sha256 of record lines>"}
//! {"chunk":{...},"embedding":[0.123456789,...]}
//! {"chunk":{...},"embedding":[...]}
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EmbeddingVector, KnowledgeBase, StoreError, StoreRecord};
use crate::corpus_ingest::Chunk;
use crate::llm_gateway::hex_string;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "lhkb";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store header is missing or malformed: {0}")]
    Header(String),
    #[error("store format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("store file is truncated: header declares {expected} records, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("store checksum mismatch: header says {expected}, records hash to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("corrupt record on line {line}: {detail}")]
    CorruptRecord { line: usize, detail: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dimension: Option<usize>,
    count: usize,
    checksum: String,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    chunk: &'a Chunk,
    embedding: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    chunk: Chunk,
    embedding: Vec<f64>,
}

fn checksum<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut hasher = Sha256::new();
    for line in lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hex_string(&hasher.finalize())
}

impl KnowledgeBase {
    /// Serializes the store in `.lhkb` form.
    pub fn to_lhkb(&self) -> String {
        let lines: Vec<String> = self
            .records
            .iter()
            .map(|r| {
                serde_json::to_string(&RecordOut {
                    chunk: &r.chunk,
                    embedding: r.embedding.values(),
                })
                .expect("records serialize")
            })
            .collect();
        let header = Header {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            dimension: self.dimension,
            count: lines.len(),
            checksum: checksum(lines.iter().map(String::as_str)),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Writes the store to `path` via a temporary file and rename.
    pub fn save(&self, path: &Path) -> Result<(), LoadError> {
        let io = |source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut tmp_name = path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        let mut file = std::fs::File::create(&tmp).map_err(io)?;
        file.write_all(self.to_lhkb().as_bytes()).map_err(io)?;
        file.sync_all().map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_lhkb(&text)
    }

    pub fn from_lhkb(text: &str) -> Result<Self, LoadError> {
        let mut lines = text.split_terminator('\n');
        let header_line = lines.next().ok_or_else(|| LoadError::Header("empty file".into()))?;
        let header: Header = serde_json::from_str(header_line).map_err(|e| LoadError::Header(e.to_string()))?;
        if header.format != FORMAT_TAG {
            return Err(LoadError::Header(format!("unknown format tag `{}`", header.format)));
        }
        if header.version != FORMAT_VERSION {
            return Err(LoadError::VersionMismatch {
                found: header.version,
                expected: FORMAT_VERSION,
            });
        }
        let records: Vec<&str> = lines.collect();
        if records.len() < header.count || !text.ends_with('\n') {
            return Err(LoadError::Truncated {
                expected: header.count,
                found: records.len().saturating_sub(usize::from(!text.ends_with('\n'))),
            });
        }
        if records.len() > header.count {
            return Err(LoadError::CorruptRecord {
                line: header.count + 2,
                detail: format!("header declares only {} records", header.count),
            });
        }

        let mut kb = match header.dimension {
            Some(d) => KnowledgeBase::with_dimension(d),
            None => KnowledgeBase::new(),
        };
        for (i, line) in records.iter().enumerate() {
            let line_no = i + 2;
            let corrupt = |detail: String| LoadError::CorruptRecord { line: line_no, detail };
            let raw: RecordIn = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
            let embedding = EmbeddingVector::from_stored(raw.embedding).map_err(|e| corrupt(e.to_string()))?;
            kb.insert(StoreRecord {
                chunk: raw.chunk,
                embedding,
            })
            .map_err(|e: StoreError| corrupt(e.to_string()))?;
        }

        let actual = checksum(records.iter().copied());
        if actual != header.checksum {
            return Err(LoadError::Checksum {
                expected: header.checksum,
                actual,
            });
        }
        Ok(kb)
    }
}
