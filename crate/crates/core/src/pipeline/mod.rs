//! Batch orchestration: manifest → per-frame parse, analyze, compress, seal
//! → journal → summary.

pub mod config;
pub mod journal;
pub mod report;
pub mod verify;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analysis::{analyze_frame_with, FrameStats, SensitivityMap};
use crate::codec::{self, CODEC_VERSION};
use crate::controller::{compress_to_target, select_profile, ControllerError, Outcome, Profile, ProfileId};
use crate::formats::{self, FormatError, Seal};
use crate::frame::{Frame, FrameMetadata};
use crate::par;

pub use config::{load_config, load_manifest, Config, JobManifest, ProfileChoice, WorkerCount};
pub use journal::{FrameRecord, FrameStatus, JOURNAL_FILE};
pub use report::{compute_reduction, export_report, BatchSummary, ReportFormat, SubjectiveScores};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no input files matched {0:?}")]
    EmptyInput(Vec<String>),
    #[error("invalid input pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("output directory {path} is not writable: {source}")]
    OutputNotWritable { path: PathBuf, source: std::io::Error },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("journal I/O error: {0}")]
    Journal(std::io::Error),
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("{0}: TIFF holds a compressed payload, not source pixels")]
    CompressedInput(PathBuf),
    #[error("{0}: neither DPX nor TIFF")]
    UnknownFormat(PathBuf),
}

/// Reads a DPX or uncompressed TIFF by sniffing its magic number.
pub fn load_frame(path: &Path) -> Result<(Frame, FrameMetadata), LoadError> {
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let fmt_err = |source| LoadError::Format { path: path.into(), source };
    match bytes.get(..4) {
        Some(b"SDPX") | Some(b"XPDS") => formats::parse_dpx(&bytes).map_err(fmt_err),
        Some(b"II*\0") | Some(b"MM\0*") => {
            let parsed = formats::parse_tiff(&bytes).map_err(fmt_err)?;
            let frame = parsed.frame.ok_or_else(|| LoadError::CompressedInput(path.into()))?;
            let meta = FrameMetadata { name: parsed.info.source_id, ..FrameMetadata::default() };
            Ok((frame, meta))
        }
        _ => Err(LoadError::UnknownFormat(path.into())),
    }
}

/// Everything produced for one frame by the analyze → compress → seal flow.
#[derive(Debug, Clone)]
pub struct Processed {
    pub stats: FrameStats,
    pub map: SensitivityMap,
    pub profile: Profile,
    pub outcome: Outcome,
    pub seal: Seal,
    pub tiff: Vec<u8>,
}

impl Processed {
    pub fn ratio(&self, frame: &Frame) -> f64 {
        codec::compression_ratio(frame, &self.outcome.stream)
    }
}

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

pub fn seal_for(frame: &Frame, profile: ProfileId, outcome: &Outcome) -> Seal {
    Seal {
        profile_id: profile,
        ssim: outcome.score.ssim,
        psnr: outcome.score.psnr,
        iterations: outcome.trace.cycles().min(u32::from(u16::MAX)) as u16,
        codec_version: CODEC_VERSION.to_string(),
        original_digest: frame.digest_hex(),
    }
}

/// Analyzes, picks a profile, runs the quality loop and wraps the result in
/// a sealed TIFF.
pub fn process_frame(
    frame: &Frame,
    metadata: &FrameMetadata,
    choice: ProfileChoice,
    config: &Config,
) -> Result<Processed, ProcessError> {
    let (stats, map) = analyze_frame_with(frame, &config.analysis);
    let profile = select_profile(metadata, &stats, choice.user_choice(), &config.profiles);
    let outcome = compress_to_target(frame, &profile, &stats, &map)?;
    let seal = seal_for(frame, profile.id, &outcome);
    let tiff = formats::write_tiff(frame, Some(outcome.stream.as_bytes()), Some(&seal))?;
    Ok(Processed { stats, map, profile, outcome, seal, tiff })
}

/// Expands glob patterns (relative to `base`) into a sorted, de-duplicated
/// file list.
pub fn resolve_inputs(patterns: &[String], base: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = BTreeSet::new();
    for p in patterns {
        let full = if Path::new(p).is_absolute() { PathBuf::from(p) } else { base.join(p) };
        let text = full.to_string_lossy().into_owned();
        let paths =
            glob::glob(&text).map_err(|e| PipelineError::BadPattern { pattern: p.clone(), reason: e.to_string() })?;
        for entry in paths.flatten() {
            if entry.is_file() {
                files.insert(entry);
            }
        }
    }
    if files.is_empty() {
        return Err(PipelineError::EmptyInput(patterns.to_vec()));
    }
    Ok(files.into_iter().collect())
}

/// Stable identity of an input: its path relative to the manifest directory
/// when possible, with `/` separators.
pub fn source_id_for(path: &Path, base: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "/")
}

pub fn output_name(source_id: &str) -> String {
    let stem = match source_id.rsplit_once('.') {
        Some((stem, ext)) if !ext.contains('/') => stem,
        _ => source_id,
    };
    format!("{}.tif", stem.replace('/', "__"))
}

/// Writes via a temporary file and rename so a crash never leaves a
/// partial output under the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let tmp = path.with_extension("tif.partial");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub summary: BatchSummary,
    /// Frames processed in this run.
    pub processed: usize,
    /// Frames skipped because the journal already holds a DONE record.
    pub skipped: usize,
    pub failed: usize,
    pub journal_corrupt_lines: usize,
}

fn run_one(path: &Path, source_id: &str, manifest: &JobManifest, out_dir: &Path) -> FrameRecord {
    let original_bytes = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
    let (frame, metadata) = match load_frame(path) {
        Ok(v) => v,
        Err(e) => return FrameRecord::failed(source_id, original_bytes, e.to_string()),
    };
    let frame = frame.with_source_id(source_id);
    let processed = match process_frame(&frame, &metadata, manifest.profile, &manifest.config) {
        Ok(p) => p,
        Err(ProcessError::Controller(ControllerError::Unattainable(o))) => {
            let mut r = FrameRecord::failed(source_id, original_bytes, "UNATTAINABLE: profile thresholds not met");
            r.ssim = Some(o.score.ssim);
            r.psnr_db = Some(o.score.psnr);
            r.trace = o.trace.entries;
            return r;
        }
        Err(e) => return FrameRecord::failed(source_id, original_bytes, e.to_string()),
    };
    let name = output_name(source_id);
    if let Err(e) = write_atomic(&out_dir.join(&name), &processed.tiff) {
        return FrameRecord::failed(source_id, original_bytes, format!("writing {name}: {e}"));
    }
    let o = &processed.outcome;
    FrameRecord {
        source_id: source_id.to_string(),
        status: FrameStatus::Done,
        profile_id: Some(processed.profile.id),
        ssim: Some(o.score.ssim),
        psnr_db: Some(o.score.psnr),
        original_bytes,
        compressed_bytes: processed.tiff.len() as u64,
        ratio: Some(processed.ratio(&frame)),
        iterations: Some(o.trace.cycles()),
        q: Some(o.q),
        final_action: o.trace.last_action(),
        output: Some(name),
        error: None,
        external_subjective_score: None,
        trace: o.trace.entries.clone(),
    }
}

/// Runs (or resumes) a batch. Frames already DONE in the journal are
/// skipped; each finished frame is durably journaled before the next
/// summary is drawn from the journal.
pub fn run_batch(manifest: &JobManifest) -> Result<BatchOutcome, PipelineError> {
    run_batch_with(manifest, |_| {})
}

/// As [`run_batch`], calling `on_record` after each journal append.
pub fn run_batch_with<F>(manifest: &JobManifest, on_record: F) -> Result<BatchOutcome, PipelineError>
where
    F: Fn(&FrameRecord) + Sync + Send,
{
    let inputs = resolve_inputs(&manifest.inputs, &manifest.base_dir)?;
    let out_dir = manifest.resolved_output_dir();
    let not_writable = |source| PipelineError::OutputNotWritable { path: out_dir.clone(), source };
    std::fs::create_dir_all(&out_dir).map_err(not_writable)?;
    let journal_path = out_dir.join(JOURNAL_FILE);
    let existing = journal::read_journal(&journal_path).map_err(PipelineError::Journal)?;
    let writer = journal::JournalWriter::open(&journal_path, existing.valid_len).map_err(not_writable)?;

    let done: BTreeSet<String> =
        existing.latest().into_iter().filter(|r| r.status == FrameStatus::Done).map(|r| r.source_id).collect();
    let mut pending = Vec::new();
    let mut ids = BTreeSet::new();
    for path in inputs {
        let id = source_id_for(&path, &manifest.base_dir);
        if !ids.insert(id.clone()) {
            continue;
        }
        if !done.contains(&id) {
            pending.push((path, id));
        }
    }
    let skipped = ids.len() - pending.len();

    let append_errors = std::sync::Mutex::new(Vec::new());
    let records = par::with_workers(manifest.worker_count.resolve(), || {
        par::map_slice(&pending, |(path, id)| {
            let record = run_one(path, id, manifest, &out_dir);
            match writer.append(&record) {
                Ok(()) => on_record(&record),
                Err(e) => append_errors.lock().unwrap_or_else(|p| p.into_inner()).push(e),
            }
            record
        })
    });
    if let Some(e) = append_errors.into_inner().unwrap_or_else(|p| p.into_inner()).into_iter().next() {
        return Err(PipelineError::Journal(e));
    }

    let contents = journal::read_journal(&journal_path).map_err(PipelineError::Journal)?;
    let latest: Vec<FrameRecord> = contents.latest().into_iter().filter(|r| ids.contains(&r.source_id)).collect();
    Ok(BatchOutcome {
        summary: report::summarize(&latest),
        processed: records.len(),
        skipped,
        failed: records.iter().filter(|r| r.status == FrameStatus::Failed).count(),
        journal_corrupt_lines: contents.corrupt_lines,
    })
}
