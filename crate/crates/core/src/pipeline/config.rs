use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::assembly::SheetLayout;
use crate::dataset::SamplerConfig;
use crate::dedup::{RubricThresholds, DEFAULT_THRESHOLD};
use crate::evolution::EvolutionConfig;
use crate::providers::http::HttpConfig;
use crate::providers::stub::SolverMode;
use crate::providers::RetryPolicy;
use crate::qc::QcConfig;
use crate::render::{RenderConfig, StyleId};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub seeds: PathBuf,
    pub workdir: PathBuf,
    pub export: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { seeds: "seeds.jsonl".into(), workdir: "work".into(), export: "dataset".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupSection {
    pub threshold: f64,
}

impl Default for DedupSection {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSection {
    pub panel_size: u32,
    pub margin: f64,
    pub styles: Vec<StyleId>,
}

impl Default for RenderSection {
    fn default() -> Self {
        let r = RenderConfig::default();
        Self { panel_size: r.panel_size, margin: r.margin, styles: StyleId::ALL.to_vec() }
    }
}

impl RenderSection {
    pub fn render_config(&self) -> RenderConfig {
        RenderConfig { panel_size: self.panel_size, margin: self.margin }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblySection {
    #[serde(flatten)]
    pub layout: SheetLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassRateSection {
    pub attempts: u32,
}

impl Default for PassRateSection {
    fn default() -> Self {
        Self { attempts: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSection {
    pub n: usize,
    #[serde(flatten)]
    pub sampler: SamplerConfig,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { n: 100, sampler: SamplerConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Use the deterministic offline providers for every role.
    pub stub: bool,
    pub solver: SolverMode,
    pub readability: u8,
    pub coherence: u8,
    pub retry: RetryPolicy,
    pub transformer: Option<HttpConfig>,
    pub embedder: Option<HttpConfig>,
    pub annotator: Option<HttpConfig>,
    pub solver_endpoint: Option<HttpConfig>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            stub: true,
            solver: SolverMode::Random,
            readability: 4,
            coherence: 4,
            retry: RetryPolicy::default(),
            transformer: None,
            embedder: None,
            annotator: None,
            solver_endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    /// Worker threads; 0 uses one per core.
    pub workers: usize,
    pub paths: Paths,
    pub evolution: EvolutionConfig,
    pub dedup: DedupSection,
    pub rubric: RubricThresholds,
    pub render: RenderSection,
    pub qc: QcConfig,
    pub assembly: AssemblySection,
    pub passrate: PassRateSection,
    pub sampler: SamplerSection,
    pub providers: ProviderConfig,
}

/// Environment variables that override config values.
pub const ENV_OVERRIDES: [&str; 4] = ["VLSYNTH_SEEDS", "VLSYNTH_WORKDIR", "VLSYNTH_EXPORT", "VLSYNTH_RNG_SEED"];

impl PipelineConfig {
    /// Reads a TOML config. Relative paths are resolved against the config
    /// file's directory; environment overrides are resolved against the
    /// current directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.seeds, &mut cfg.paths.workdir, &mut cfg.paths.export] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), PipelineError> {
        if let Some(v) = get("VLSYNTH_SEEDS") {
            self.paths.seeds = v.into();
        }
        if let Some(v) = get("VLSYNTH_WORKDIR") {
            self.paths.workdir = v.into();
        }
        if let Some(v) = get("VLSYNTH_EXPORT") {
            self.paths.export = v.into();
        }
        if let Some(v) = get("VLSYNTH_RNG_SEED") {
            self.rng_seed = v.parse().map_err(|_| PipelineError::Config(format!("VLSYNTH_RNG_SEED `{v}` is not a u64")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.evolution.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.dedup.threshold >= 0.0 && self.dedup.threshold <= 2.0) {
            return bad("dedup.threshold must lie in [0, 2]".into());
        }
        if !(1..=5).contains(&self.rubric.min_feasibility) || self.rubric.min_total_exclusive > 15 {
            return bad("rubric thresholds must lie within the 1–5 score scale".into());
        }
        if self.render.styles.is_empty() {
            return bad("render.styles must list at least one style".into());
        }
        if self.render.styles.iter().enumerate().any(|(i, s)| self.render.styles[..i].contains(s)) {
            return bad("render.styles lists a style twice".into());
        }
        if self.render.panel_size < 32 || self.render.panel_size > 4096 {
            return bad("render.panel_size must lie in [32, 4096]".into());
        }
        if !(0.0..0.4).contains(&self.render.margin) {
            return bad("render.margin must lie in [0, 0.4)".into());
        }
        let q = &self.qc;
        if q.dup_threshold > 64 {
            return bad("qc.dup_threshold must lie in [0, 64]".into());
        }
        if !(-1.0..=1.0).contains(&q.blank_ssim) || !(-1.0..=1.0).contains(&q.literal_ssim) {
            return bad("qc SSIM thresholds must lie in [-1, 1]".into());
        }
        if !(0.0..=1.0).contains(&q.min_ink_fraction) || !(q.energy_threshold >= 0.0) {
            return bad("qc ink and energy thresholds must be non-negative fractions".into());
        }
        if self.passrate.attempts == 0 {
            return bad("passrate.attempts must be ≥ 1".into());
        }
        let s = &self.sampler.sampler;
        if !(0.0 <= s.min_pass_rate && s.min_pass_rate <= s.max_pass_rate && s.max_pass_rate <= 1.0) {
            return bad("sampler pass-rate band must satisfy 0 ≤ min ≤ max ≤ 1".into());
        }
        if !(0.0..=1.0).contains(&s.four_option_share) {
            return bad("sampler.four_option_share must lie in [0, 1]".into());
        }
        if !(1..=5).contains(&self.providers.readability) || !(1..=5).contains(&self.providers.coherence) {
            return bad("stub annotator scores must lie in [1, 5]".into());
        }
        if let SolverMode::Noisy { accuracy } = self.providers.solver {
            if !(0.0..=1.0).contains(&accuracy) {
                return bad("noisy solver accuracy must lie in [0, 1]".into());
            }
        }
        if !self.providers.stub {
            let p = &self.providers;
            if p.transformer.is_none() || p.embedder.is_none() || p.annotator.is_none() || p.solver_endpoint.is_none() {
                return bad("non-stub providers need transformer, embedder, annotator and solver_endpoint sections".into());
            }
            if !cfg!(feature = "http") {
                return bad("HTTP providers need the `http` feature".into());
            }
        }
        Ok(())
    }

    /// Hash of the config sections `stage` reads.
    pub fn fingerprint(&self, stage: Stage) -> String {
        use serde_json::json;
        let v = match stage {
            Stage::SeedImport => json!({ "seeds": self.paths.seeds }),
            Stage::Evolve => json!({ "rng_seed": self.rng_seed, "evolution": self.evolution, "providers": self.providers }),
            Stage::Filter => json!({ "dedup": self.dedup, "rubric": self.rubric, "providers": self.providers }),
            Stage::Render => json!({ "rng_seed": self.rng_seed, "render": self.render }),
            Stage::Qc => json!({ "qc": self.qc }),
            Stage::Assemble => json!({ "rng_seed": self.rng_seed, "assembly": self.assembly, "dup": self.qc.dup_threshold }),
            Stage::Annotate => json!({ "providers": self.providers }),
            Stage::Passrate => json!({ "rng_seed": self.rng_seed, "passrate": self.passrate, "providers": self.providers }),
            Stage::Sample => json!({ "rng_seed": self.rng_seed, "sampler": self.sampler }),
            Stage::Stats => json!({ "export": self.paths.export }),
        };
        seed::sha256_hex(v.to_string().as_bytes())
    }
}
