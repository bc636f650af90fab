//! Aggregation and JSON/CSV export of journal records.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ProfileId;
use crate::metrics::Psnr;

use super::journal::{parse_journal, FrameRecord, FrameStatus};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 20;
pub const HISTOGRAM_RANGE: (f64, f64) = (0.8, 1.0);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("original size is zero")]
pub struct ZeroOriginal;

/// `100 · (1 − compressed / original)`, rounded half away from zero to one
/// decimal using exact integer arithmetic.
pub fn compute_reduction(original_bytes: u64, compressed_bytes: u64) -> Result<f64, ZeroOriginal> {
    if original_bytes == 0 {
        return Err(ZeroOriginal);
    }
    let o = i128::from(original_bytes);
    let num = 1000 * (o - i128::from(compressed_bytes));
    let tenths = if num >= 0 { (2 * num + o) / (2 * o) } else { -((-2 * num + o) / (2 * o)) };
    Ok(tenths as f64 / 10.0)
}

/// Mean SSIM, PSNR and ratio for one profile, in the shape of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub profile_id: ProfileId,
    pub frame_count: u64,
    pub mean_ratio: f64,
    pub mean_ssim: f64,
    pub min_ssim: f64,
    pub mean_psnr_db: Psnr,
    pub original_bytes: u64,
    pub compressed_bytes: u64,
    pub reduction_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub frame_count: u64,
    pub failed_count: u64,
    pub mean_ssim: Option<f64>,
    pub min_ssim: Option<f64>,
    /// Infinite as soon as one frame is lossless.
    pub mean_psnr_db: Option<Psnr>,
    pub min_psnr_db: Option<Psnr>,
    /// Counts over [0.8, 1.0] in 20 bins; values outside are clamped to the
    /// end bins.
    pub ssim_histogram: Vec<u64>,
    pub total_original_bytes: u64,
    pub total_compressed_bytes: u64,
    pub reduction_percent: Option<f64>,
    pub by_profile: Vec<ProfileRow>,
}

fn histogram_bin(ssim: f64) -> usize {
    let (lo, hi) = HISTOGRAM_RANGE;
    let t = ((ssim - lo) / (hi - lo) * HISTOGRAM_BINS as f64).floor();
    (t.max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

/// Exact integer totals plus float sums taken in source-id order.
#[derive(Debug, Clone, Default)]
struct Totals {
    frames: u64,
    original: u64,
    compressed: u64,
    ssim_sum: f64,
    ssim_min: Option<f64>,
    psnr_sum: f64,
    psnr_min: Option<f64>,
    ratio_sum: f64,
}

impl Totals {
    fn add(&mut self, r: &FrameRecord) {
        let ssim = r.ssim.unwrap_or(f64::NAN);
        let psnr = r.psnr_db.map_or(f64::NAN, Psnr::db);
        self.frames += 1;
        self.original += r.original_bytes;
        self.compressed += r.compressed_bytes;
        self.ssim_sum += ssim;
        self.ssim_min = Some(self.ssim_min.map_or(ssim, |m| m.min(ssim)));
        self.psnr_sum += psnr;
        self.psnr_min = Some(self.psnr_min.map_or(psnr, |m| m.min(psnr)));
        self.ratio_sum += r.ratio.unwrap_or(0.0);
    }

    fn mean(&self, sum: f64) -> Option<f64> {
        (self.frames > 0).then(|| sum / self.frames as f64)
    }
}

fn psnr_of(db: f64) -> Psnr {
    if db.is_infinite() {
        Psnr::Infinite
    } else {
        Psnr::Finite(db)
    }
}

/// Summarizes DONE records; input order does not matter.
pub fn summarize(records: &[FrameRecord]) -> BatchSummary {
    let mut done: Vec<&FrameRecord> = records.iter().filter(|r| r.status == FrameStatus::Done).collect();
    done.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let failed_count = records.iter().filter(|r| r.status == FrameStatus::Failed).count() as u64;

    let mut all = Totals::default();
    let mut per: BTreeMap<ProfileId, Totals> = BTreeMap::new();
    let mut hist = vec![0u64; HISTOGRAM_BINS];
    for r in &done {
        all.add(r);
        if let Some(p) = r.profile_id {
            per.entry(p).or_default().add(r);
        }
        if let Some(s) = r.ssim {
            hist[histogram_bin(s)] += 1;
        }
    }
    let by_profile = per
        .into_iter()
        .map(|(profile_id, t)| ProfileRow {
            profile_id,
            frame_count: t.frames,
            mean_ratio: t.mean(t.ratio_sum).unwrap_or(0.0),
            mean_ssim: t.mean(t.ssim_sum).unwrap_or(0.0),
            min_ssim: t.ssim_min.unwrap_or(0.0),
            mean_psnr_db: psnr_of(t.mean(t.psnr_sum).unwrap_or(0.0)),
            original_bytes: t.original,
            compressed_bytes: t.compressed,
            reduction_percent: compute_reduction(t.original, t.compressed).ok(),
        })
        .collect();
    BatchSummary {
        frame_count: all.frames,
        failed_count,
        mean_ssim: all.mean(all.ssim_sum),
        min_ssim: all.ssim_min,
        mean_psnr_db: all.mean(all.psnr_sum).map(psnr_of),
        min_psnr_db: all.psnr_min.map(psnr_of),
        ssim_histogram: hist,
        total_original_bytes: all.original,
        total_compressed_bytes: all.compressed,
        reduction_percent: compute_reduction(all.original, all.compressed).ok(),
        by_profile,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Export {
    pub bytes: Vec<u8>,
    /// Journal lines dropped because they failed their checksum.
    pub corrupt_lines: usize,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "source_id",
    "status",
    "profile_id",
    "ssim",
    "psnr_db",
    "original_bytes",
    "compressed_bytes",
    "ratio",
    "iterations",
    "q",
    "final_action",
    "external_subjective_score",
    "error",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Exports the latest record per source id (sorted) and their summary.
///
/// JSON objects have sorted keys; CSV columns follow [`CSV_COLUMNS`].
pub fn export_report(journal: &[u8], format: ReportFormat, scores: Option<&SubjectiveScores>) -> Export {
    let contents = parse_journal(journal);
    let mut records = contents.latest();
    if let Some(s) = scores {
        for r in &mut records {
            r.external_subjective_score = s.mean_for(&r.source_id);
        }
    }
    let bytes = match format {
        ReportFormat::Json => {
            let doc = serde_json::json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "records": records,
                "summary": summarize(&records),
                "journal_corrupt_lines": contents.corrupt_lines,
            });
            // serde_json's default map is ordered, so keys come out sorted.
            let mut out = serde_json::to_vec_pretty(&doc).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_COLUMNS).expect("in-memory write");
            for r in &records {
                w.write_record([
                    r.source_id.clone(),
                    r.status.as_str().to_string(),
                    opt(r.profile_id),
                    opt(r.ssim),
                    opt(r.psnr_db),
                    r.original_bytes.to_string(),
                    r.compressed_bytes.to_string(),
                    opt(r.ratio),
                    opt(r.iterations),
                    opt(r.q),
                    opt(r.final_action.map(|a| a.as_str())),
                    opt(r.external_subjective_score),
                    r.error.clone().unwrap_or_default(),
                ])
                .expect("in-memory write");
            }
            w.into_inner().expect("in-memory flush")
        }
    };
    Export { bytes, corrupt_lines: contents.corrupt_lines }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveScore {
    pub source_id: String,
    pub score_0_to_5: f64,
    pub evaluator: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Error)]
pub enum ScoreImportError {
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: score {score} outside [0, 5]")]
    OutOfRange { line: u64, score: f64 },
}

/// Externally supplied perceptual scores, keyed by source id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubjectiveScores(BTreeMap<String, Vec<SubjectiveScore>>);

impl SubjectiveScores {
    /// Reads a CSV with header `source_id,score_0_to_5,evaluator,note`.
    pub fn from_csv(reader: impl Read) -> Result<Self, ScoreImportError> {
        let mut out: BTreeMap<String, Vec<SubjectiveScore>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for row in rdr.deserialize() {
            let s: SubjectiveScore = row?;
            if !(0.0..=5.0).contains(&s.score_0_to_5) {
                let line = rdr.position().line();
                return Err(ScoreImportError::OutOfRange { line, score: s.score_0_to_5 });
            }
            out.entry(s.source_id.clone()).or_default().push(s);
        }
        Ok(SubjectiveScores(out))
    }

    pub fn mean_for(&self, source_id: &str) -> Option<f64> {
        let v = self.0.get(source_id)?;
        Some(v.iter().map(|s| s.score_0_to_5).sum::<f64>() / v.len() as f64)
    }
}
