use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{digest_path, list_files, write_atomic, PipelineConfig, PipelineError, RunOptions, Stage, Stamp};
use crate::assembly::{self, compose_sheet, Puzzle};
use crate::dataset::{self, AttributeRecord, StageCounts};
use crate::dedup::{self, EmbeddingVector};
use crate::dsl::parse_rule_program;
use crate::evolution::{self, GenerationStats};
use crate::providers::stub::{StubAnnotator, StubEmbedder, StubSolver, StubTransformer};
use crate::providers::ProviderSet;
use crate::qc::{qc_group, QcVerdict};
use crate::render::{self, plan_group, render_plan, ImageGroup, StyleId};
use crate::rule::{read_jsonl, validate_rule, write_jsonl, ReasoningStyle, Rule, RuleClass, VisualPattern};
use crate::seed;

/// A hand-written seed rule as stored in the seeds file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub visual: VisualPattern,
    pub reasoning: ReasoningStyle,
    pub bullets: Vec<String>,
    #[serde(default)]
    pub program: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecord {
    pub group_id: String,
    pub rule_id: String,
    pub style: StyleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcRecord {
    pub group_id: String,
    pub rule_id: String,
    pub style: StyleId,
    pub verdict: QcVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub puzzle_id: String,
    pub readability: u8,
    pub coherence: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub n: usize,
    pub four_option: usize,
    pub ten_option: usize,
    pub ids: Vec<String>,
}

/// Exported puzzle record: the puzzle plus its sheet and solver prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuzzleRecord {
    #[serde(flatten)]
    pub puzzle: Puzzle,
    /// Sheet path relative to the export directory.
    pub sheet: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AssemblyNotes {
    expanded_skips: Vec<assembly::ExpandedSkip>,
    fallbacks: Vec<String>,
}

const SEEDS: &str = "rules/seeds.jsonl";
const EVOLVED: &str = "rules/evolved.jsonl";
const EVOLUTION_STATS: &str = "rules/evolution_stats.json";
const CHECKPOINTS: &str = "rules/checkpoints";
const DEDUP: &str = "rules/dedup.jsonl";
const SCORED: &str = "rules/scored.jsonl";
const RETAINED: &str = "rules/retained.jsonl";
const GROUPS: &str = "groups";
const GROUP_INDEX: &str = "groups/index.jsonl";
const QC: &str = "qc/verdicts.jsonl";
const PUZZLES: &str = "puzzles/puzzles.jsonl";
const ASSEMBLY_NOTES: &str = "puzzles/notes.json";
const SHEETS: &str = "sheets";
const ANNOTATIONS: &str = "records/annotations.jsonl";
const ATTRIBUTES: &str = "records/attributes.jsonl";
const SAMPLE: &str = "records/training_sample.json";
const MANIFEST: &str = "stats/manifest.json";

/// Paths of one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub root: PathBuf,
    pub export: PathBuf,
    pub seeds_input: PathBuf,
}

impl Workspace {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Self { root: cfg.paths.workdir.clone(), export: cfg.paths.export.clone(), seeds_input: cfg.paths.seeds.clone() }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn stamp_path(&self, stage: Stage) -> PathBuf {
        self.root.join("stamps").join(format!("{}.json", stage.name()))
    }

    /// Outputs a stage owns, keyed by the name recorded in its stamp.
    fn outputs(&self, stage: Stage) -> Vec<(String, PathBuf)> {
        let rel: &[&str] = match stage {
            Stage::SeedImport => &[SEEDS],
            Stage::Evolve => &[EVOLVED, EVOLUTION_STATS],
            Stage::Filter => &[DEDUP, SCORED, RETAINED],
            Stage::Render => &[GROUPS],
            Stage::Qc => &[QC],
            Stage::Assemble => &[PUZZLES, ASSEMBLY_NOTES, SHEETS],
            Stage::Annotate => &[ANNOTATIONS],
            Stage::Passrate => &[ATTRIBUTES],
            Stage::Sample => &[SAMPLE],
            Stage::Stats => &[MANIFEST],
        };
        let mut out: Vec<(String, PathBuf)> = rel.iter().map(|r| (r.to_string(), self.path(r))).collect();
        if stage == Stage::Stats {
            out.push(("<export>".into(), self.export.clone()));
        }
        out
    }

    fn inputs(&self, stage: Stage) -> std::io::Result<BTreeMap<String, String>> {
        let mut m = BTreeMap::new();
        if stage == Stage::SeedImport {
            m.insert("<seeds>".into(), digest_path(&self.seeds_input)?.unwrap_or_default());
        }
        if let Some(&up) = stage.upstream().last() {
            m.insert(format!("stamps/{}.json", up.name()), digest_path(&self.stamp_path(up))?.unwrap_or_default());
        }
        Ok(m)
    }

    /// `Ok` when the stage's stamp matches the config and the files on disk.
    pub fn stamp_status(&self, cfg: &PipelineConfig, stage: Stage) -> Result<(), String> {
        let bytes = std::fs::read(self.stamp_path(stage)).map_err(|_| "missing".to_string())?;
        let stamp: Stamp = serde_json::from_slice(&bytes).map_err(|_| "unreadable".to_string())?;
        if stamp.fingerprint != cfg.fingerprint(stage) {
            return Err("stale: its config changed".into());
        }
        if stamp.inputs != self.inputs(stage).map_err(|e| e.to_string())? {
            return Err("stale: its inputs changed".into());
        }
        for (name, path) in self.outputs(stage) {
            let current = digest_path(&path).map_err(|e| e.to_string())?;
            if stamp.outputs.get(&name) != current.as_ref() {
                return Err(format!("stale: output {name} changed"));
            }
        }
        Ok(())
    }

    pub(super) fn clear_stamp(&self, stage: Stage) -> std::io::Result<()> {
        match std::fs::remove_file(self.stamp_path(stage)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        }
    }

    pub(super) fn write_stamp(&self, cfg: &PipelineConfig, stage: Stage) -> std::io::Result<()> {
        let mut outputs = BTreeMap::new();
        for (name, path) in self.outputs(stage) {
            if let Some(d) = digest_path(&path)? {
                outputs.insert(name, d);
            }
        }
        let stamp = Stamp { stage, fingerprint: cfg.fingerprint(stage), inputs: self.inputs(stage)?, outputs };
        write_atomic(&self.stamp_path(stage), &serde_json::to_vec_pretty(&stamp).expect("stamp serializes"))
    }
}

fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<(), String> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).map_err(|e| e.to_string())?;
    write_atomic(path, &buf).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let f = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_jsonl(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn remove_dir(path: &Path) -> Result<(), String> {
    match std::fs::remove_dir_all(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(format!("{}: {e}", path.display())),
        _ => Ok(()),
    }
}

/// Provider set for a config. Stub mode builds the offline providers; the
/// stub solver gets its answer key later, in the pass-rate stage.
pub fn build_providers(cfg: &PipelineConfig) -> Result<ProviderSet, PipelineError> {
    let p = &cfg.providers;
    if p.stub {
        return Ok(ProviderSet {
            transformer: Arc::new(StubTransformer::default()),
            embedder: Arc::new(StubEmbedder::default()),
            annotator: Arc::new(StubAnnotator { readability: p.readability, coherence: p.coherence }),
            solver: Arc::new(StubSolver::new(p.solver)),
            retry: p.retry,
        });
    }
    http_providers(cfg)
}

#[cfg(feature = "http")]
fn http_providers(cfg: &PipelineConfig) -> Result<ProviderSet, PipelineError> {
    use crate::providers::http::HttpProvider;
    use crate::providers::Provider;
    let p = &cfg.providers;
    let make = |c: &Option<crate::providers::http::HttpConfig>, role: &str| -> Result<Arc<dyn Provider>, PipelineError> {
        c.clone()
            .map(|c| Arc::new(HttpProvider::new(c)) as Arc<dyn Provider>)
            .ok_or_else(|| PipelineError::Config(format!("providers.{role} is missing")))
    };
    Ok(ProviderSet {
        transformer: make(&p.transformer, "transformer")?,
        embedder: make(&p.embedder, "embedder")?,
        annotator: make(&p.annotator, "annotator")?,
        solver: make(&p.solver_endpoint, "solver_endpoint")?,
        retry: p.retry,
    })
}

#[cfg(not(feature = "http"))]
fn http_providers(_: &PipelineConfig) -> Result<ProviderSet, PipelineError> {
    Err(PipelineError::Config("HTTP providers need the `http` feature".into()))
}

pub(super) fn execute(cfg: &PipelineConfig, ws: &Workspace, stage: Stage, opts: RunOptions) -> Result<String, PipelineError> {
    let err = |m: String| PipelineError::Stage { stage, message: m };
    match stage {
        Stage::SeedImport => seed_import(ws).map_err(err),
        Stage::Evolve => evolve(cfg, ws, opts).map_err(err),
        Stage::Filter => filter(cfg, ws).map_err(err),
        Stage::Render => render_groups(cfg, ws).map_err(err),
        Stage::Qc => quality_control(cfg, ws).map_err(err),
        Stage::Assemble => assemble(cfg, ws).map_err(err),
        Stage::Annotate => annotate(cfg, ws).map_err(err),
        Stage::Passrate => passrate(cfg, ws).map_err(err),
        Stage::Sample => sample(cfg, ws).map_err(err),
        Stage::Stats => stats(ws).map_err(err),
    }
}

fn providers(cfg: &PipelineConfig) -> Result<ProviderSet, String> {
    build_providers(cfg).map_err(|e| e.to_string())
}

fn seed_import(ws: &Workspace) -> Result<String, String> {
    let records: Vec<SeedRecord> = read_jsonl_file(&ws.seeds_input)?;
    let mut rules: Vec<Rule> = Vec::new();
    let mut problems = Vec::new();
    for (i, rec) in records.into_iter().enumerate() {
        let mut rule = Rule::seed(RuleClass::new(rec.visual, rec.reasoning), rec.bullets);
        rule.program = rec.program;
        let report = validate_rule(&rule);
        if !report.is_valid() {
            let reasons: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            problems.push(format!("seed {} ({}): {}", i + 1, rule.id, reasons.join("; ")));
        } else if rules.iter().any(|r| r.id == rule.id) {
            problems.push(format!("seed {} duplicates rule {}", i + 1, rule.id));
        } else {
            rules.push(rule);
        }
    }
    if !problems.is_empty() {
        return Err(problems.join("\n"));
    }
    write_jsonl_file(&ws.path(SEEDS), &rules)?;
    Ok(format!("{} seeds", rules.len()))
}

fn evolve(cfg: &PipelineConfig, ws: &Workspace, opts: RunOptions) -> Result<String, String> {
    let seeds: Vec<Rule> = read_jsonl_file(&ws.path(SEEDS))?;
    let evo = evolution::EvolutionConfig { rng_seed: Stage::Evolve.seed(cfg.rng_seed), ..cfg.evolution };
    let checkpoints = ws.path(CHECKPOINTS);
    if !opts.resume {
        remove_dir(&checkpoints)?;
    }
    let out = evolution::evolve_with_checkpoints(&seeds, &evo, &providers(cfg)?, Some(&checkpoints), opts.resume)
        .map_err(|e| e.to_string())?;
    write_jsonl_file(&ws.path(EVOLVED), &out.pool)?;
    write_json::<Vec<GenerationStats>>(&ws.path(EVOLUTION_STATS), &out.stats)?;
    Ok(format!("{} rules from {} seeds", out.pool.len(), seeds.len()))
}

#[derive(Serialize, Deserialize)]
struct DedupLine {
    id: String,
    kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nearest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<f64>,
}

fn filter(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let pool: Vec<Rule> = read_jsonl_file(&ws.path(EVOLVED))?;
    let providers = providers(cfg)?;
    let vectors = crate::par::map(&pool, |r| {
        providers
            .embed(&r.id, &r.bullets)
            .map_err(|e| format!("embedding {}: {e}", r.id))
            .and_then(|v| EmbeddingVector::new(r.id.clone(), v).map_err(|e| e.to_string()))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let report = dedup::dedup(&vectors, cfg.dedup.threshold).map_err(|e| e.to_string())?;
    let mut lines: Vec<DedupLine> =
        report.kept.iter().map(|id| DedupLine { id: id.clone(), kept: true, nearest: None, distance: None }).collect();
    lines.extend(report.removed.iter().map(|r| DedupLine {
        id: r.id.clone(),
        kept: false,
        nearest: Some(r.nearest.clone()),
        distance: Some(r.distance),
    }));
    lines.sort_by(|a, b| a.id.cmp(&b.id));
    write_jsonl_file(&ws.path(DEDUP), &lines)?;

    let kept: std::collections::HashSet<&str> = report.kept.iter().map(String::as_str).collect();
    let survivors: Vec<&Rule> = pool.iter().filter(|r| kept.contains(r.id.as_str())).collect();
    let filter_seed = Stage::Filter.seed(cfg.rng_seed);
    let scored = crate::par::map(&survivors, |r| -> Result<Rule, String> {
        let mut rule = (*r).clone();
        if rule.program.is_none() {
            let program = providers
                .program(&rule, seed::derive(filter_seed, &rule.id))
                .map_err(|e| format!("program for {}: {e}", rule.id))?;
            rule.program = Some(program);
        }
        rule.scores = Some(dedup::rubric_score_dsl(&rule));
        Ok(rule)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_jsonl_file(&ws.path(SCORED), &scored)?;
    let retained = dedup::filter_by_score(&scored, &cfg.rubric).map_err(|e| e.to_string())?;
    write_jsonl_file(&ws.path(RETAINED), &retained)?;
    Ok(format!("{} rules → {} after dedup → {} retained", pool.len(), scored.len(), retained.len()))
}

fn render_groups(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let rules: Vec<Rule> = read_jsonl_file(&ws.path(RETAINED))?;
    let groups_dir = ws.path(GROUPS);
    remove_dir(&groups_dir)?;
    let render_cfg = cfg.render.render_config();
    let render_seed = Stage::Render.seed(cfg.rng_seed);
    let per_rule = crate::par::map(&rules, |rule| -> Result<Vec<RenderRecord>, String> {
        let record = |style: StyleId, error: Option<String>| RenderRecord {
            group_id: render::group_id(&rule.id, style),
            rule_id: rule.id.clone(),
            style,
            error,
        };
        let program = match rule.program.as_deref().map(parse_rule_program) {
            Some(Ok(p)) => p,
            Some(Err(e)) => return Ok(cfg.render.styles.iter().map(|&s| record(s, Some(e.to_string()))).collect()),
            None => return Ok(cfg.render.styles.iter().map(|&s| record(s, Some("no rule program".into()))).collect()),
        };
        let plan = match plan_group(&program, &render_cfg) {
            Ok(p) => p,
            Err(e) => return Ok(cfg.render.styles.iter().map(|&s| record(s, Some(e.to_string()))).collect()),
        };
        let rng_seed = seed::derive(render_seed, &rule.id);
        let mut out = Vec::new();
        for &style in &cfg.render.styles {
            let group = render_plan(&rule.id, program.entity.kind, &plan, style, rng_seed);
            group.save(&groups_dir).map_err(|e| format!("saving {}: {e}", group.group_id))?;
            out.push(record(style, None));
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in per_rule {
        records.extend(r?);
    }
    write_jsonl_file(&ws.path(GROUP_INDEX), &records)?;
    let ok = records.iter().filter(|r| r.error.is_none()).count();
    Ok(format!("{ok} groups rendered, {} failed", records.len() - ok))
}

fn load_group(ws: &Workspace, group_id: &str, rule_id: &str, style: StyleId) -> Result<ImageGroup, String> {
    ImageGroup::load(&ws.path(GROUPS), group_id, rule_id, style).map_err(|e| format!("loading {group_id}: {e}"))
}

fn quality_control(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let index: Vec<RenderRecord> = read_jsonl_file(&ws.path(GROUP_INDEX))?;
    let rendered: Vec<&RenderRecord> = index.iter().filter(|r| r.error.is_none()).collect();
    let records = crate::par::map(&rendered, |r| -> Result<QcRecord, String> {
        let group = load_group(ws, &r.group_id, &r.rule_id, r.style)?;
        Ok(QcRecord { group_id: r.group_id.clone(), rule_id: r.rule_id.clone(), style: r.style, verdict: qc_group(&group, &cfg.qc) })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_jsonl_file(&ws.path(QC), &records)?;
    let accepted = records.iter().filter(|r| r.verdict.accepted).count();
    Ok(format!("{accepted} of {} groups accepted", records.len()))
}

fn accepted_groups(ws: &Workspace) -> Result<Vec<ImageGroup>, String> {
    let verdicts: Vec<QcRecord> = read_jsonl_file(&ws.path(QC))?;
    let accepted: Vec<&QcRecord> = verdicts.iter().filter(|r| r.verdict.accepted).collect();
    crate::par::map(&accepted, |r| {
        let mut g = load_group(ws, &r.group_id, &r.rule_id, r.style)?;
        g.qc = Some(r.verdict.clone());
        Ok(g)
    })
    .into_iter()
    .collect()
}

fn assemble(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let groups = accepted_groups(ws)?;
    let pool: Vec<Rule> = read_jsonl_file(&ws.path(EVOLVED))?;
    let rules: BTreeMap<String, Rule> = pool.into_iter().map(|r| (r.id.clone(), r)).collect();
    let out = assembly::assemble_all(&groups, &rules, Stage::Assemble.seed(cfg.rng_seed), cfg.qc.dup_threshold);
    let by_id: BTreeMap<String, ImageGroup> = groups.into_iter().map(|g| (g.group_id.clone(), g)).collect();
    let sheets = ws.path(SHEETS);
    remove_dir(&sheets)?;
    crate::par::map(&out.puzzles, |p| -> Result<(), String> {
        let img = compose_sheet(p, &by_id, &cfg.assembly.layout).map_err(|e| e.to_string())?;
        let png = img.encode_png().map_err(|e| e.to_string())?;
        write_atomic(&sheets.join(format!("{}.png", p.id)), &png).map_err(|e| e.to_string())
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_jsonl_file(&ws.path(PUZZLES), &out.puzzles)?;
    write_json(&ws.path(ASSEMBLY_NOTES), &AssemblyNotes { expanded_skips: out.expanded_skips.clone(), fallbacks: out.fallbacks.clone() })?;
    Ok(format!(
        "{} puzzles from {} groups ({} ten-option skipped, {} borrowed donors outside their lineage)",
        out.puzzles.len(),
        by_id.len(),
        out.expanded_skips.len(),
        out.fallbacks.len()
    ))
}

fn sheet_bytes(ws: &Workspace, puzzle: &Puzzle) -> Result<Vec<u8>, String> {
    let path = ws.path(SHEETS).join(format!("{}.png", puzzle.id));
    std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn annotate(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let puzzles: Vec<Puzzle> = read_jsonl_file(&ws.path(PUZZLES))?;
    let rules: Vec<Rule> = read_jsonl_file(&ws.path(RETAINED))?;
    let text: BTreeMap<&str, String> = rules.iter().map(|r| (r.id.as_str(), r.bullet_block())).collect();
    let providers = providers(cfg)?;
    let seed = Stage::Annotate.seed(cfg.rng_seed);
    let records = crate::par::map(&puzzles, |p| -> Result<AnnotationRecord, String> {
        let png = sheet_bytes(ws, p)?;
        let rules_text = text.get(p.rule_id.as_str()).cloned().unwrap_or_default();
        let (readability, coherence) = dataset::annotate(p, &rules_text, &png, &providers, seed::derive(seed, &p.id))
            .map_err(|e| format!("annotating {}: {e}", p.id))?;
        Ok(AnnotationRecord { puzzle_id: p.id.clone(), readability, coherence })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_jsonl_file(&ws.path(ANNOTATIONS), &records)?;
    Ok(format!("{} puzzles annotated", records.len()))
}

fn passrate(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let puzzles: Vec<Puzzle> = read_jsonl_file(&ws.path(PUZZLES))?;
    let notes: Vec<AnnotationRecord> = read_jsonl_file(&ws.path(ANNOTATIONS))?;
    let notes: BTreeMap<&str, &AnnotationRecord> = notes.iter().map(|n| (n.puzzle_id.as_str(), n)).collect();
    let mut providers = providers(cfg)?;
    if cfg.providers.stub {
        let key = puzzles.iter().map(|p| (p.id.clone(), p.answer.to_string())).collect();
        providers.solver = Arc::new(StubSolver::with_answers(cfg.providers.solver, key));
    }
    let seed = Stage::Passrate.seed(cfg.rng_seed);
    let k = cfg.passrate.attempts;
    let records = crate::par::map(&puzzles, |p| -> Result<AttributeRecord, String> {
        let note = notes.get(p.id.as_str()).ok_or_else(|| format!("no annotation for {}", p.id))?;
        let png = sheet_bytes(ws, p)?;
        let (successes, attempts) =
            dataset::pass_rate(p, &png, &providers, k, seed).map_err(|e| format!("solving {}: {e}", p.id))?;
        Ok(AttributeRecord {
            puzzle_id: p.id.clone(),
            group_id: p.group_id.clone(),
            options: p.options.len(),
            readability: note.readability,
            coherence: note.coherence,
            successes,
            attempts,
            pass_rate: f64::from(successes) / f64::from(attempts),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    write_jsonl_file(&ws.path(ATTRIBUTES), &records)?;
    let mean = records.iter().map(|r| r.pass_rate).sum::<f64>() / records.len().max(1) as f64;
    Ok(format!("{} puzzles, mean pass rate {mean:.3}", records.len()))
}

fn sample(cfg: &PipelineConfig, ws: &Workspace) -> Result<String, String> {
    let records: Vec<AttributeRecord> = read_jsonl_file(&ws.path(ATTRIBUTES))?;
    let n = cfg.sampler.n;
    let ids = dataset::sample_training(&records, n, &cfg.sampler.sampler, Stage::Sample.seed(cfg.rng_seed))
        .map_err(|e| e.to_string())?;
    let (four_option, ten_option) = cfg.sampler.sampler.split(n);
    write_json(&ws.path(SAMPLE), &TrainingSample { n, four_option, ten_option, ids })?;
    Ok(format!("{four_option} four-option + {ten_option} ten-option puzzles sampled"))
}

fn copy_into(src: &Path, dst: &Path) -> Result<(), String> {
    let bytes = std::fs::read(src).map_err(|e| format!("{}: {e}", src.display()))?;
    write_atomic(dst, &bytes).map_err(|e| format!("{}: {e}", dst.display()))
}

fn stats(ws: &Workspace) -> Result<String, String> {
    let seeds: Vec<Rule> = read_jsonl_file(&ws.path(SEEDS))?;
    let evolved: Vec<Rule> = read_jsonl_file(&ws.path(EVOLVED))?;
    let scored: Vec<Rule> = read_jsonl_file(&ws.path(SCORED))?;
    let retained: Vec<Rule> = read_jsonl_file(&ws.path(RETAINED))?;
    let index: Vec<RenderRecord> = read_jsonl_file(&ws.path(GROUP_INDEX))?;
    let verdicts: Vec<QcRecord> = read_jsonl_file(&ws.path(QC))?;
    let puzzles: Vec<Puzzle> = read_jsonl_file(&ws.path(PUZZLES))?;
    let records: Vec<AttributeRecord> = read_jsonl_file(&ws.path(ATTRIBUTES))?;

    let mut groups_per_style = BTreeMap::new();
    for r in index.iter().filter(|r| r.error.is_none()) {
        *groups_per_style.entry(r.style.to_string()).or_insert(0) += 1;
    }
    let counts = StageCounts {
        seeds: seeds.len(),
        generated: evolved.len(),
        deduplicated: scored.len(),
        retained: retained.len(),
        programs: retained.iter().filter(|r| r.program.as_deref().map(parse_rule_program).is_some_and(|p| p.is_ok())).count(),
        rendered_groups: groups_per_style.values().sum(),
        groups_per_style,
        filtered_groups: verdicts.iter().filter(|v| v.verdict.accepted).count(),
        ..Default::default()
    };

    let export = &ws.export;
    for sub in ["sheets", "panels", "records"] {
        remove_dir(&export.join(sub))?;
    }
    for p in &puzzles {
        let name = format!("{}.png", p.id);
        copy_into(&ws.path(SHEETS).join(&name), &export.join("sheets").join(&name))?;
    }
    for v in verdicts.iter().filter(|v| v.verdict.accepted) {
        for name in ImageGroup::panel_names() {
            let file = format!("{name}.png");
            copy_into(&ws.path(GROUPS).join(&v.group_id).join(&file), &export.join("panels").join(&v.group_id).join(&file))?;
        }
    }
    let exported = puzzles
        .iter()
        .map(|p| {
            let prompt = p.prompt().map_err(|e| format!("prompt for {}: {e}", p.id))?;
            Ok(PuzzleRecord { puzzle: p.clone(), sheet: format!("sheets/{}.png", p.id), prompt })
        })
        .collect::<Result<Vec<_>, String>>()?;
    write_jsonl_file(&export.join("records").join("puzzles.jsonl"), &exported)?;
    for (src, name) in [(ATTRIBUTES, "attributes.jsonl"), (RETAINED, "rules.jsonl"), (QC, "qc.jsonl"), (SAMPLE, "training_sample.json")] {
        copy_into(&ws.path(src), &export.join("records").join(name))?;
    }
    let files: Vec<String> = ["sheets", "panels", "records"]
        .iter()
        .map(|sub| list_files(&export.join(sub)).map(|fs| fs.into_iter().map(move |f| format!("{sub}/{}", f.to_string_lossy()))))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .flatten()
        .collect();
    let manifest = dataset::build_manifest(counts, &puzzles, &records, files).map_err(|e| e.to_string())?;
    write_json(&export.join("manifest.json"), &manifest)?;
    write_json(&ws.path(MANIFEST), &manifest)?;
    let c = &manifest.counts;
    Ok(format!(
        "{} puzzles ({} default, {} shuffled, {} ten-option) from {} accepted groups",
        c.total_puzzles, c.default_puzzles, c.shuffled_puzzles, c.expanded_puzzles, c.filtered_groups
    ))
}
