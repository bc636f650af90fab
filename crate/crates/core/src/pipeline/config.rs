//! Job manifest and configuration file (TOML).
//!
//! ```toml
//! schema_version = 1
//!
//! [job]
//! job_id = "reel-07"
//! inputs = ["scans/*.dpx"]
//! output_dir = "out"
//! profile = "auto"        # c0 | c1 | c2 | auto
//! worker_count = "auto"   # or a positive integer
//!
//! [analysis]
//! tau_gradient = 1.0
//!
//! [profiles.C1]
//! max_iterations = 10
//!
//! [overrides]
//! "analysis.noisy_multiplier" = 1.0
//! ```
//!
//! Every section is optional except `[job]` when the file is used as a
//! manifest. Paths are relative to the file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::{Table, Value};

use crate::analysis::AnalysisConfig;
use crate::controller::{ProfileId, ProfileTable};

use super::PipelineError;

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileChoice {
    Auto,
    Fixed(ProfileId),
}

impl ProfileChoice {
    pub fn parse(s: &str) -> Option<Self> {
        if s.eq_ignore_ascii_case("auto") {
            Some(ProfileChoice::Auto)
        } else {
            ProfileId::parse(s).map(ProfileChoice::Fixed)
        }
    }

    pub fn user_choice(self) -> Option<ProfileId> {
        match self {
            ProfileChoice::Auto => None,
            ProfileChoice::Fixed(id) => Some(id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerCount {
    Auto,
    Fixed(usize),
}

impl WorkerCount {
    pub fn resolve(self) -> usize {
        match self {
            WorkerCount::Auto => crate::par::available_workers(),
            WorkerCount::Fixed(n) => n,
        }
    }
}

/// Tunables shared by every command.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub analysis: AnalysisConfig,
    pub profiles: ProfileTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobManifest {
    pub job_id: String,
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    pub profile: ProfileChoice,
    pub worker_count: WorkerCount,
    /// Dotted-key overrides applied on top of the file's own sections.
    pub config_overrides: BTreeMap<String, Value>,
    /// Directory relative inputs and outputs are resolved against.
    pub base_dir: PathBuf,
    pub config: Config,
}

impl JobManifest {
    pub fn new(job_id: impl Into<String>, inputs: Vec<String>, output_dir: impl Into<PathBuf>) -> Self {
        JobManifest {
            job_id: job_id.into(),
            inputs,
            output_dir: output_dir.into(),
            profile: ProfileChoice::Auto,
            worker_count: WorkerCount::Auto,
            config_overrides: BTreeMap::new(),
            base_dir: PathBuf::from("."),
            config: Config::default(),
        }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    /// Re-applies `config_overrides` on top of `config`.
    pub fn apply_overrides(&mut self) -> Result<(), PipelineError> {
        let mut doc = config_to_table(&self.config);
        for (k, v) in &self.config_overrides {
            set_dotted(&mut doc, k, v.clone())?;
        }
        self.config = config_from_table(&doc)?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJob {
    job_id: String,
    inputs: Vec<String>,
    output_dir: PathBuf,
    #[serde(default = "default_auto")]
    profile: String,
    #[serde(default = "default_auto_value")]
    worker_count: Value,
}

fn default_auto() -> String {
    "auto".into()
}

fn default_auto_value() -> Value {
    Value::String("auto".into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilePatch {
    ssim_min: Option<f64>,
    psnr_min_db: Option<f64>,
    local_ssim_min: Option<f64>,
    max_iterations: Option<u32>,
    lossless_fallback: Option<bool>,
    q_bounds: Option<(f64, f64)>,
    force_lossless: Option<bool>,
}

fn cfg_err(msg: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(msg.to_string())
}

fn set_dotted(doc: &mut Table, key: &str, value: Value) -> Result<(), PipelineError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(cfg_err(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override {key:?} descends into a non-table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn config_to_table(config: &Config) -> Table {
    let mut doc = Table::new();
    doc.insert("analysis".into(), Value::try_from(config.analysis).expect("analysis config serializes"));
    let mut profiles = Table::new();
    for p in config.profiles.iter() {
        let mut t = Table::new();
        t.insert("ssim_min".into(), Value::Float(p.ssim_min));
        t.insert("psnr_min_db".into(), Value::Float(p.psnr_min_db));
        t.insert("local_ssim_min".into(), Value::Float(p.local_ssim_min));
        t.insert("max_iterations".into(), Value::Integer(i64::from(p.max_iterations)));
        t.insert("lossless_fallback".into(), Value::Boolean(p.lossless_fallback));
        t.insert("q_bounds".into(), Value::Array(vec![Value::Float(p.q_bounds.0), Value::Float(p.q_bounds.1)]));
        t.insert("force_lossless".into(), Value::Boolean(p.force_lossless));
        profiles.insert(p.id.as_str().into(), Value::Table(t));
    }
    doc.insert("profiles".into(), Value::Table(profiles));
    doc
}

/// Builds a config from `[analysis]` and `[profiles.*]`, starting from
/// defaults. Integers are accepted wherever a real is expected.
fn config_from_table(doc: &Table) -> Result<Config, PipelineError> {
    let mut config = Config::default();
    if let Some(a) = doc.get("analysis") {
        config.analysis = numeric(a.clone()).try_into().map_err(|e| cfg_err(format!("[analysis]: {e}")))?;
        config.analysis.validate().map_err(|e| cfg_err(format!("[analysis]: {e}")))?;
    }
    if let Some(p) = doc.get("profiles") {
        let table = p.as_table().ok_or_else(|| cfg_err("[profiles] must be a table"))?;
        for (name, v) in table {
            let id = ProfileId::parse(name).ok_or_else(|| cfg_err(format!("unknown profile {name:?}")))?;
            let patch: ProfilePatch = numeric(v.clone()).try_into().map_err(|e| cfg_err(format!("[profiles.{name}]: {e}")))?;
            let target = config.profiles.get_mut(id);
            macro_rules! apply {
                ($($f:ident),*) => { $(if let Some(x) = patch.$f { target.$f = x; })* };
            }
            apply!(ssim_min, psnr_min_db, local_ssim_min, max_iterations, lossless_fallback, q_bounds, force_lossless);
            target.validate().map_err(cfg_err)?;
        }
    }
    Ok(config)
}

/// Converts integers to floats except for keys that must stay integral.
fn numeric(v: Value) -> Value {
    match v {
        Value::Table(t) => Value::Table(
            t.into_iter()
                .map(|(k, v)| {
                    let v = match (k.as_str(), v) {
                        ("max_iterations", v) => v,
                        (_, Value::Integer(i)) => Value::Float(i as f64),
                        (_, v) => numeric(v),
                    };
                    (k, v)
                })
                .collect(),
        ),
        Value::Array(a) => Value::Array(
            a.into_iter()
                .map(|v| match v {
                    Value::Integer(i) => Value::Float(i as f64),
                    v => numeric(v),
                })
                .collect(),
        ),
        v => v,
    }
}

fn parse_document(text: &str, origin: &str) -> Result<Table, PipelineError> {
    let mut doc: Table = text.parse().map_err(|e| cfg_err(format!("{origin}: {e}")))?;
    match doc.get("schema_version") {
        None => {}
        Some(Value::Integer(SCHEMA_VERSION)) => {}
        Some(v) => return Err(cfg_err(format!("{origin}: unsupported schema_version {v}"))),
    }
    for key in doc.keys() {
        if !["schema_version", "job", "analysis", "profiles", "overrides"].contains(&key.as_str()) {
            return Err(cfg_err(format!("{origin}: unknown section {key:?}")));
        }
    }
    if let Some(overrides) = doc.remove("overrides") {
        let overrides = overrides.as_table().cloned().ok_or_else(|| cfg_err("[overrides] must be a table"))?;
        for (k, v) in overrides {
            set_dotted(&mut doc, &k, v)?;
        }
    }
    Ok(doc)
}

/// Reads a configuration file (no `[job]` section required).
pub fn load_config(path: &Path) -> Result<Config, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

pub fn parse_config(text: &str, origin: &str) -> Result<Config, PipelineError> {
    config_from_table(&parse_document(text, origin)?)
}

pub fn load_manifest(path: &Path) -> Result<JobManifest, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &path.display().to_string(), &base)
}

pub fn parse_manifest(text: &str, origin: &str, base_dir: &Path) -> Result<JobManifest, PipelineError> {
    let doc = parse_document(text, origin)?;
    let job = doc.get("job").cloned().ok_or_else(|| cfg_err(format!("{origin}: missing [job] section")))?;
    let job: RawJob = job.try_into().map_err(|e| cfg_err(format!("{origin}: [job]: {e}")))?;
    if job.inputs.is_empty() {
        return Err(cfg_err(format!("{origin}: job.inputs must not be empty")));
    }
    let profile =
        ProfileChoice::parse(&job.profile).ok_or_else(|| cfg_err(format!("{origin}: unknown profile {:?}", job.profile)))?;
    let worker_count = match &job.worker_count {
        Value::String(s) if s.eq_ignore_ascii_case("auto") => WorkerCount::Auto,
        Value::Integer(n) if *n >= 1 => WorkerCount::Fixed(*n as usize),
        other => return Err(cfg_err(format!("{origin}: worker_count must be \"auto\" or >= 1, got {other}"))),
    };
    Ok(JobManifest {
        job_id: job.job_id,
        inputs: job.inputs,
        output_dir: job.output_dir,
        profile,
        worker_count,
        config_overrides: BTreeMap::new(),
        base_dir: base_dir.to_path_buf(),
        config: config_from_table(&doc)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"
schema_version = 1

[job]
job_id = "reel"
inputs = ["a/*.dpx", "b.tif"]
output_dir = "out"
profile = "C2"
worker_count = 3

[analysis]
tau_gradient = 2

[profiles.c1]
max_iterations = 9
q_bounds = [50, 90]

[overrides]
"analysis.noisy_multiplier" = 1
"profiles.C0.ssim_min" = 0.985
"#;

    #[test]
    fn manifest_sections_and_overrides() {
        let m = parse_manifest(MANIFEST, "test", Path::new("/base")).unwrap();
        assert_eq!(m.job_id, "reel");
        assert_eq!(m.profile, ProfileChoice::Fixed(ProfileId::C2));
        assert_eq!(m.worker_count, WorkerCount::Fixed(3));
        assert_eq!(m.resolved_output_dir(), PathBuf::from("/base/out"));
        assert_eq!(m.config.analysis.tau_gradient, 2.0);
        assert_eq!(m.config.analysis.noisy_multiplier, 1.0);
        assert_eq!(m.config.profiles.get(ProfileId::C1).max_iterations, 9);
        assert_eq!(m.config.profiles.get(ProfileId::C1).q_bounds, (50.0, 90.0));
        assert_eq!(m.config.profiles.get(ProfileId::C0).ssim_min, 0.985);
        assert_eq!(m.config.profiles.get(ProfileId::C2).ssim_min, 0.90);
    }

    #[test]
    fn programmatic_overrides() {
        let mut m = JobManifest::new("j", vec!["x".into()], "out");
        m.config_overrides.insert("profiles.C2.max_iterations".into(), Value::Integer(4));
        m.apply_overrides().unwrap();
        assert_eq!(m.config.profiles.get(ProfileId::C2).max_iterations, 4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("schema_version = 2", "t").is_err());
        assert!(parse_config("[analysis]\nbogus = 1", "t").is_err());
        assert!(parse_config("[profiles.C1]\nssim_min = 1.5", "t").is_err());
        assert!(parse_config("[mystery]", "t").is_err());
        let no_inputs = "[job]\njob_id = \"x\"\ninputs = []\noutput_dir = \"o\"";
        assert!(parse_manifest(no_inputs, "t", Path::new(".")).is_err());
        let zero_workers = "[job]\njob_id = \"x\"\ninputs = [\"a\"]\noutput_dir = \"o\"\nworker_count = 0";
        assert!(parse_manifest(zero_workers, "t", Path::new(".")).is_err());
    }
}
