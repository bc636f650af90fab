//! `adaptix` command-line front end.
//!
//! Exit codes: 0 success, 1 quality-contract failure (UNATTAINABLE, verify
//! mismatch, failed batch frames), 2 input or format error, 3 internal error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptix::analysis::analyze_frame_with;
use adaptix::codec::CodecError;
use adaptix::controller::ControllerError;
use adaptix::formats;
use adaptix::pipeline::report::{BatchSummary, ProfileRow};
use adaptix::pipeline::verify::{verify_sealed, VerifyError};
use adaptix::pipeline::{
    self, export_report, load_config, load_frame, load_manifest, process_frame, Config, FrameRecord, FrameStatus,
    PipelineError, ProcessError, ProfileChoice, ReportFormat, SubjectiveScores, WorkerCount,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "adaptix", version, about = "Quality-targeted compression for film scan frames")]
struct Cli {
    /// Emit machine-readable JSON on stdout
    #[arg(long, global = true)]
    json: bool,

    /// Configuration file (TOML)
    #[arg(long, global = true, env = "ADAPTIX_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert DPX scans to uncompressed TIFF
    Convert {
        /// Input files or glob patterns
        #[arg(required = true)]
        inputs: Vec<String>,
        /// Output directory (created if missing)
        #[arg(short, long, value_name = "DIR")]
        output_dir: PathBuf,
    },
    /// Print frame statistics and the per-tile sensitivity map
    Analyze { input: PathBuf },
    /// Compress one frame to a sealed TIFF
    Compress {
        input: PathBuf,
        output: PathBuf,
        /// c0, c1, c2 or auto
        #[arg(long, default_value = "auto", value_parser = parse_profile)]
        profile: ProfileChoice,
    },
    /// Run or resume a batch job from a manifest
    Batch {
        manifest: PathBuf,
        /// Override the manifest's worker_count
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-check a sealed TIFF against its original
    Verify { compressed: PathBuf, original: PathBuf },
    /// Export a batch journal as JSON or CSV
    Report {
        journal: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// CSV of external subjective scores (source_id,score_0_to_5,evaluator,note)
        #[arg(long, value_name = "PATH")]
        scores: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_profile(s: &str) -> Result<ProfileChoice, String> {
    ProfileChoice::parse(s).ok_or_else(|| format!("unknown profile {s:?} (expected c0, c1, c2 or auto)"))
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn quality(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
    fn input(message: impl std::fmt::Display) -> Self {
        Failure { code: 2, message: message.to_string() }
    }
    fn internal(message: impl std::fmt::Display) -> Self {
        Failure { code: 3, message: message.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("adaptix: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Convert { inputs, output_dir } => cmd_convert(cli, inputs, output_dir),
        Command::Analyze { input } => cmd_analyze(cli, input),
        Command::Compress { input, output, profile } => cmd_compress(cli, input, output, *profile),
        Command::Batch { manifest, workers } => cmd_batch(cli, manifest, *workers),
        Command::Verify { compressed, original } => cmd_verify(cli, compressed, original),
        Command::Report { journal, format, scores } => cmd_report(cli, journal, *format, scores.as_deref()),
    }
}

fn config(cli: &Cli) -> Result<Config, Failure> {
    match &cli.config {
        Some(p) => load_config(p).map_err(Failure::input),
        None => Ok(Config::default()),
    }
}

fn print_json(value: &serde_json::Value) -> CmdResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Failure::internal)?;
    writeln!(out).map_err(Failure::internal)
}

fn cmd_convert(cli: &Cli, inputs: &[String], output_dir: &Path) -> CmdResult {
    let cwd = std::env::current_dir().map_err(Failure::internal)?;
    let files = pipeline::resolve_inputs(inputs, &cwd).map_err(Failure::input)?;
    fs::create_dir_all(output_dir).map_err(|e| Failure::input(format!("{}: {e}", output_dir.display())))?;
    let mut rows = Vec::new();
    let mut errors = 0;
    for path in &files {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let converted = load_frame(path).map_err(|e| e.to_string()).and_then(|(frame, _)| {
            let frame = frame.with_source_id(&name);
            let bytes = formats::write_tiff(&frame, None, None).map_err(|e| e.to_string())?;
            let out = output_dir.join(pipeline::output_name(&name));
            fs::write(&out, bytes).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok((frame, out))
        });
        match converted {
            Ok((frame, out)) => {
                if !cli.json {
                    println!(
                        "{}: {}x{} {}ch {}-bit -> {}",
                        path.display(),
                        frame.width(),
                        frame.height(),
                        frame.channels(),
                        frame.bit_depth(),
                        out.display()
                    );
                }
                rows.push(json!({
                    "input": path.display().to_string(),
                    "output": out.display().to_string(),
                    "width": frame.width(),
                    "height": frame.height(),
                    "channels": frame.channels(),
                    "bit_depth": frame.bit_depth(),
                }));
            }
            Err(e) => {
                errors += 1;
                eprintln!("adaptix: {e}");
                rows.push(json!({ "input": path.display().to_string(), "error": e }));
            }
        }
    }
    if cli.json {
        print_json(&json!({ "converted": rows }))?;
    }
    if errors > 0 {
        return Err(Failure { code: 2, message: format!("{errors} of {} inputs failed to convert", files.len()) });
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, input: &Path) -> CmdResult {
    let cfg = config(cli)?;
    let (frame, _) = load_frame(input).map_err(Failure::input)?;
    let (stats, map) = analyze_frame_with(&frame, &cfg.analysis);
    if cli.json {
        return print_json(&json!({ "source": input.display().to_string(), "stats": stats, "map": map }));
    }
    let flags = &map.flags.values;
    let count = |f: fn(&adaptix::analysis::TileFlags) -> bool| flags.iter().filter(|t| f(t)).count();
    let weights = &map.weights.values;
    let wmin = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let wmax = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("{}: {}x{} {}ch {}-bit", input.display(), frame.width(), frame.height(), frame.channels(), frame.bit_depth());
    println!("  dynamic range     {} .. {}", stats.dynamic_range.0, stats.dynamic_range.1);
    println!("  contrast index    {:.4}", stats.contrast_index);
    println!("  noise sigma       {:.3} LSB", stats.noise_sigma);
    println!("  banding risk      {}", stats.banding_risk);
    println!("  palette usage     {:.4}", stats.palette_saturation);
    println!(
        "  tiles             {} ({}x{}): {} smooth, {} textured, {} noisy; weights {:.2} .. {:.2}",
        flags.len(),
        map.weights.cols,
        map.weights.rows,
        count(|t| t.smooth_gradient),
        count(|t| t.high_texture),
        count(|t| t.noisy),
        wmin,
        wmax
    );
    Ok(())
}

fn cmd_compress(cli: &Cli, input: &Path, output: &Path, choice: ProfileChoice) -> CmdResult {
    let cfg = config(cli)?;
    let original_bytes = fs::metadata(input).map_err(|e| Failure::input(format!("{}: {e}", input.display())))?.len();
    let (frame, meta) = load_frame(input).map_err(Failure::input)?;
    let source_id = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let frame = frame.with_source_id(&source_id);
    let processed = match process_frame(&frame, &meta, choice, &cfg) {
        Ok(p) => p,
        Err(ProcessError::Controller(ControllerError::Unattainable(o))) => {
            let mut r = FrameRecord::failed(&source_id, original_bytes, "UNATTAINABLE: profile thresholds not met");
            r.ssim = Some(o.score.ssim);
            r.psnr_db = Some(o.score.psnr);
            r.iterations = Some(o.trace.cycles());
            r.q = Some(o.q);
            r.trace = o.trace.entries;
            if cli.json {
                print_json(&serde_json::to_value(&r).map_err(Failure::internal)?)?;
            }
            return Err(Failure::quality(format!(
                "{}: thresholds unattainable (closest: q {:.2}, ssim {:.4}, psnr {:.2} dB)",
                input.display(),
                o.q,
                o.score.ssim,
                o.score.psnr
            )));
        }
        Err(ProcessError::Controller(e @ ControllerError::Metrics(_))) => return Err(Failure::input(e)),
        Err(e) => return Err(Failure::internal(e)),
    };
    fs::write(output, &processed.tiff).map_err(|e| Failure::input(format!("{}: {e}", output.display())))?;
    let o = &processed.outcome;
    let record = FrameRecord {
        source_id,
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
        output: Some(output.display().to_string()),
        error: None,
        external_subjective_score: None,
        trace: o.trace.entries.clone(),
    };
    if cli.json {
        return print_json(&serde_json::to_value(&record).map_err(Failure::internal)?);
    }
    println!("{} -> {}", input.display(), output.display());
    println!("  profile     {}", processed.profile.id);
    println!("  action      {}", o.trace.last_action().map_or("-", |a| a.as_str()));
    println!("  q           {:.2}", o.q);
    println!("  ssim        {:.6}", o.score.ssim);
    println!("  psnr        {:.3} dB", o.score.psnr);
    println!("  ratio       {:.2}:1", processed.ratio(&frame));
    println!("  iterations  {}", o.trace.cycles());
    Ok(())
}

fn table_row(label: &str, frames: u64, ratio: Option<f64>, ssim: Option<f64>, psnr: Option<String>, red: Option<f64>) {
    let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
    println!(
        "{:<8} {:>6} {:>8} {:>8} {:>8} {:>10}",
        label,
        frames,
        ratio.map_or("-".into(), |r| format!("{r:.2}:1")),
        f(ssim, 4),
        psnr.unwrap_or_else(|| "-".into()),
        red.map_or("-".into(), |r| format!("{r:.1}%"))
    );
}

fn print_summary(summary: &BatchSummary) {
    println!("{:<8} {:>6} {:>8} {:>8} {:>8} {:>10}", "profile", "frames", "ratio", "SSIM", "PSNR", "reduction");
    for ProfileRow { profile_id, frame_count, mean_ratio, mean_ssim, mean_psnr_db, reduction_percent, .. } in
        &summary.by_profile
    {
        table_row(
            profile_id.as_str(),
            *frame_count,
            Some(*mean_ratio),
            Some(*mean_ssim),
            Some(format!("{mean_psnr_db:.2}")),
            *reduction_percent,
        );
    }
    let all_ratio = if summary.by_profile.is_empty() {
        None
    } else {
        let n: u64 = summary.by_profile.iter().map(|r| r.frame_count).sum();
        Some(summary.by_profile.iter().map(|r| r.mean_ratio * r.frame_count as f64).sum::<f64>() / n as f64)
    };
    table_row(
        "all",
        summary.frame_count,
        all_ratio,
        summary.mean_ssim,
        summary.mean_psnr_db.map(|p| format!("{p:.2}")),
        summary.reduction_percent,
    );
}

fn cmd_batch(cli: &Cli, manifest_path: &Path, workers: Option<usize>) -> CmdResult {
    let mut manifest = load_manifest(manifest_path).map_err(Failure::input)?;
    if let Some(p) = &cli.config {
        manifest.config = load_config(p).map_err(Failure::input)?;
        manifest.apply_overrides().map_err(Failure::input)?;
    }
    if let Some(n) = workers {
        if n == 0 {
            return Err(Failure::input("--workers must be at least 1"));
        }
        manifest.worker_count = WorkerCount::Fixed(n);
    }
    let outcome = pipeline::run_batch(&manifest).map_err(|e| match e {
        PipelineError::Journal(_) => Failure::internal(e),
        _ => Failure::input(e),
    })?;
    if cli.json {
        print_json(&json!({
            "job_id": manifest.job_id,
            "processed": outcome.processed,
            "skipped": outcome.skipped,
            "failed": outcome.failed,
            "journal_corrupt_lines": outcome.journal_corrupt_lines,
            "summary": outcome.summary,
        }))?;
    } else {
        println!("job {}: {} processed, {} failed", manifest.job_id, outcome.processed, outcome.failed);
        println!("skipped: {}", outcome.skipped);
        if outcome.journal_corrupt_lines > 0 {
            println!("journal: {} corrupt lines dropped", outcome.journal_corrupt_lines);
        }
        print_summary(&outcome.summary);
    }
    if outcome.summary.failed_count > 0 {
        return Err(Failure::quality(format!("{} frames failed", outcome.summary.failed_count)));
    }
    Ok(())
}

fn cmd_verify(cli: &Cli, compressed: &Path, original: &Path) -> CmdResult {
    let cfg = config(cli)?;
    let tiff = fs::read(compressed).map_err(|e| Failure::input(format!("{}: {e}", compressed.display())))?;
    let (frame, _) = load_frame(original).map_err(Failure::input)?;
    let report = match verify_sealed(&tiff, &frame, &cfg.profiles) {
        Ok(r) => r,
        Err(VerifyError::Codec(CodecError::CorruptStream { tiles, reason })) => {
            if cli.json {
                print_json(&json!({ "ok": false, "corrupt_tiles": tiles, "error": reason }))?;
            }
            return Err(Failure::input(format!("{}: corrupt payload in tiles {tiles:?}: {reason}", compressed.display())));
        }
        Err(e) => return Err(Failure::input(format!("{}: {e}", compressed.display()))),
    };
    if cli.json {
        let mut v = serde_json::to_value(&report).map_err(Failure::internal)?;
        v["ok"] = json!(report.ok());
        print_json(&v)?;
    } else {
        let mark = |b: bool| if b { "ok" } else { "MISMATCH" };
        println!("{} vs {}", compressed.display(), original.display());
        println!("  profile     {}", report.seal.profile_id);
        println!("  ssim        sealed {:.9}  measured {:.9}  {}", report.seal.ssim, report.measured_ssim, mark(report.ssim_matches));
        println!(
            "  psnr        sealed {:.6}  measured {:.6}  {}",
            report.seal.psnr,
            report.measured_psnr_db,
            mark(report.psnr_matches)
        );
        println!("  digest      {}", mark(report.digest_matches));
        println!("  thresholds  {}", if report.thresholds_met { "met" } else { "NOT MET" });
    }
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::quality(format!("{}: verification failed", compressed.display())))
    }
}

fn cmd_report(cli: &Cli, journal: &Path, format: Format, scores: Option<&Path>) -> CmdResult {
    let bytes = fs::read(journal).map_err(|e| Failure::input(format!("{}: {e}", journal.display())))?;
    let scores = match scores {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            Some(SubjectiveScores::from_csv(file).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let format = if cli.json { Format::Json } else { format };
    let fmt = match format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    let export = export_report(&bytes, fmt, scores.as_ref());
    if export.corrupt_lines > 0 {
        eprintln!("adaptix: {}: {} corrupt journal lines dropped", journal.display(), export.corrupt_lines);
    }
    std::io::stdout().lock().write_all(&export.bytes).map_err(Failure::internal)
}
