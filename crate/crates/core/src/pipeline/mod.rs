//! Stage orchestration: configuration, atomic file output, content digests
//! and stage stamps.
//!
//! Stages run in a fixed chain. Each stage writes its outputs under the
//! work directory and then a stamp recording a fingerprint of the config
//! sections it reads plus digests of its inputs and outputs. A stage refuses
//! to run unless every upstream stamp is present and still matches the files
//! on disk.
//!
//! Per-stage seeds are `seed::derive(rng_seed, "stage/<name>")`.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{AssemblySection, ENV_OVERRIDES, DedupSection, Paths, PassRateSection, PipelineConfig, ProviderConfig, RenderSection, SamplerSection};
pub use stages::{build_providers, PuzzleRecord, Workspace};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SeedImport,
    Evolve,
    Filter,
    Render,
    Qc,
    Assemble,
    Annotate,
    Passrate,
    Sample,
    Stats,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::SeedImport,
        Stage::Evolve,
        Stage::Filter,
        Stage::Render,
        Stage::Qc,
        Stage::Assemble,
        Stage::Annotate,
        Stage::Passrate,
        Stage::Sample,
        Stage::Stats,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::SeedImport => "seed-import",
            Stage::Evolve => "evolve",
            Stage::Filter => "filter",
            Stage::Render => "render",
            Stage::Qc => "qc",
            Stage::Assemble => "assemble",
            Stage::Annotate => "annotate",
            Stage::Passrate => "passrate",
            Stage::Sample => "sample",
            Stage::Stats => "stats",
        }
    }

    pub fn upstream(&self) -> &'static [Stage] {
        let i = Stage::ALL.iter().position(|s| s == self).expect("listed");
        &Stage::ALL[..i]
    }

    pub fn seed(&self, rng_seed: u64) -> u64 {
        seed::derive(rng_seed, &format!("stage/{}", self.name()))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`; expected one of: {}", Stage::ALL.map(|s| s.name()).join(", ")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Stage { stage: Stage, message: String },
    #[error("{stage}: upstream stage {upstream} is {reason}")]
    Stale { stage: Stage, upstream: Stage, reason: String },
}

impl PipelineError {
    pub fn stage(stage: Stage, message: impl fmt::Display) -> Self {
        PipelineError::Stage { stage, message: message.to_string() }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable error report.
    pub fn report(&self) -> serde_json::Value {
        let (kind, stage) = match self {
            PipelineError::Config(_) => ("config", None),
            PipelineError::Stage { stage, .. } => ("stage", Some(stage.name())),
            PipelineError::Stale { stage, .. } => ("stale_upstream", Some(stage.name())),
        };
        serde_json::json!({ "error": { "kind": kind, "stage": stage, "message": self.to_string() } })
    }
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Relative paths of all regular files below `dir`, sorted.
pub fn list_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if dir.is_dir() {
        collect_files(dir, dir, &mut out)?;
    }
    out.sort();
    Ok(out)
}

/// SHA-256 of a file, or of the sorted `(relative path, file digest)` list
/// of a directory. `None` when the path does not exist.
pub fn digest_path(path: &Path) -> std::io::Result<Option<String>> {
    if path.is_file() {
        return Ok(Some(seed::sha256_hex(&std::fs::read(path)?)));
    }
    if !path.is_dir() {
        return Ok(None);
    }
    let mut listing = String::new();
    for rel in list_files(path)? {
        let h = seed::sha256_hex(&std::fs::read(path.join(&rel))?);
        listing.push_str(&format!("{}\0{h}\n", rel.to_string_lossy()));
    }
    Ok(Some(seed::sha256_hex(listing.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: Stage,
    pub fingerprint: String,
    /// Upstream stamp digests at the time the stage ran.
    pub inputs: BTreeMap<String, String>,
    /// Output paths relative to the work directory and their digests.
    pub outputs: BTreeMap<String, String>,
}

/// Options for [`run`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Skip stages whose stamp is still valid, and continue evolution from
    /// its latest checkpoint.
    pub resume: bool,
}

/// What happened to each stage of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub summary: String,
}

/// Runs one stage after checking its upstream stamps.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage, opts: RunOptions) -> Result<StageOutcome, PipelineError> {
    let ws = Workspace::new(cfg);
    for &up in stage.upstream() {
        if let Err(reason) = ws.stamp_status(cfg, up) {
            return Err(PipelineError::Stale { stage, upstream: up, reason });
        }
    }
    if opts.resume && ws.stamp_status(cfg, stage).is_ok() {
        return Ok(StageOutcome { stage, skipped: true, summary: "up to date".into() });
    }
    ws.clear_stamp(stage).map_err(|e| PipelineError::stage(stage, e))?;
    let summary = stages::execute(cfg, &ws, stage, opts)?;
    ws.write_stamp(cfg, stage).map_err(|e| PipelineError::stage(stage, e))?;
    Ok(StageOutcome { stage, skipped: false, summary })
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig, opts: RunOptions) -> Result<Vec<StageOutcome>, PipelineError> {
    Stage::ALL.iter().map(|&s| run_stage(cfg, s, opts)).collect()
}
