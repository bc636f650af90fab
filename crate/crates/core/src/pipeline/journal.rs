//! Append-only job journal: one record per line, `<crc32 hex> <json>`.
//!
//! The checksum covers the JSON text. Readers keep the longest valid prefix
//! and report how many lines they had to drop.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::controller::{Action, ProfileId, TraceEntry};
use crate::metrics::Psnr;

pub const JOURNAL_FILE: &str = "journal.log";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameStatus {
    Pending,
    Done,
    Failed,
}

impl FrameStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameStatus::Pending => "PENDING",
            FrameStatus::Done => "DONE",
            FrameStatus::Failed => "FAILED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub source_id: String,
    pub status: FrameStatus,
    pub profile_id: Option<ProfileId>,
    pub ssim: Option<f64>,
    pub psnr_db: Option<Psnr>,
    /// Size of the input file.
    pub original_bytes: u64,
    /// Size of the sealed output file.
    pub compressed_bytes: u64,
    /// Packed raw sample size over codec stream size.
    pub ratio: Option<f64>,
    pub iterations: Option<u32>,
    pub q: Option<f64>,
    pub final_action: Option<Action>,
    pub output: Option<String>,
    pub error: Option<String>,
    /// Mean of externally supplied 0–5 scores; never computed here.
    pub external_subjective_score: Option<f64>,
    #[serde(default)]
    pub trace: Vec<TraceEntry>,
}

impl FrameRecord {
    pub fn failed(source_id: impl Into<String>, original_bytes: u64, error: impl Into<String>) -> Self {
        FrameRecord {
            source_id: source_id.into(),
            status: FrameStatus::Failed,
            profile_id: None,
            ssim: None,
            psnr_db: None,
            original_bytes,
            compressed_bytes: 0,
            ratio: None,
            iterations: None,
            q: None,
            final_action: None,
            output: None,
            error: Some(error.into()),
            external_subjective_score: None,
            trace: Vec::new(),
        }
    }
}

pub fn encode_line(record: &FrameRecord) -> String {
    let json = serde_json::to_string(record).expect("records serialize");
    format!("{:08x} {json}\n", crc32fast::hash(json.as_bytes()))
}

fn decode_line(line: &str) -> Option<FrameRecord> {
    let (crc, json) = line.split_once(' ')?;
    if crc.len() != 8 || u32::from_str_radix(crc, 16).ok()? != crc32fast::hash(json.as_bytes()) {
        return None;
    }
    serde_json::from_str(json).ok()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JournalContents {
    pub records: Vec<FrameRecord>,
    /// Lines dropped from the first invalid one onwards.
    pub corrupt_lines: usize,
    /// Byte length of the valid prefix.
    pub valid_len: usize,
}

impl JournalContents {
    /// Last record per source id, sorted by source id.
    pub fn latest(&self) -> Vec<FrameRecord> {
        let mut map = std::collections::BTreeMap::new();
        for r in &self.records {
            map.insert(r.source_id.clone(), r.clone());
        }
        map.into_values().collect()
    }
}

/// Parses journal bytes, salvaging the valid prefix.
pub fn parse_journal(bytes: &[u8]) -> JournalContents {
    let mut out = JournalContents::default();
    let mut pos = 0;
    while pos < bytes.len() {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map(|i| pos + i);
        let record = end.and_then(|e| std::str::from_utf8(&bytes[pos..e]).ok()).and_then(decode_line);
        match (record, end) {
            (Some(r), Some(e)) => {
                out.records.push(r);
                pos = e + 1;
                out.valid_len = pos;
            }
            _ => {
                let rest = &bytes[pos..];
                out.corrupt_lines = rest.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count();
                break;
            }
        }
    }
    out
}

pub fn read_journal(path: &Path) -> io::Result<JournalContents> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(parse_journal(&bytes)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(JournalContents::default()),
        Err(e) => Err(e),
    }
}

/// Shared append handle; every append is flushed to disk before returning.
pub struct JournalWriter {
    file: Mutex<File>,
}

impl JournalWriter {
    /// Opens for appending after cutting any invalid tail left by a crash.
    pub fn open(path: &Path, valid_len: usize) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() != valid_len as u64 {
            file.set_len(valid_len as u64)?;
            file.sync_data()?;
        }
        Ok(JournalWriter { file: Mutex::new(file) })
    }

    pub fn append(&self, record: &FrameRecord) -> io::Result<()> {
        let line = encode_line(record);
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())?;
        f.sync_data()
    }
}
