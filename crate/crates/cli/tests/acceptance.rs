//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 1, 2, 7 and 9 use two end-to-end `run-all` invocations of the
//! `vlsynth` binary on the fixture corpus, each in its own temporary
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::Value;
use vlsynth::assembly::{assemble_default, assemble_shuffled, compose_sheet, SheetGeometry};
use vlsynth::dataset::{bin_difficulty, bin_pass_rate, pass_rate, sample_training, AttributeRecord, Difficulty, SamplerConfig};
use vlsynth::dedup::{dedup, filter_by_score, nn_distances, EmbeddingVector, RubricThresholds};
use vlsynth::dsl::{parse_rule_program, ViolationRecipe};
use vlsynth::evolution::{lineage_is_sound, root_seeds, EvolutionConfig};
use vlsynth::pipeline::PipelineConfig;
use vlsynth::providers::stub::{SolverMode, StubAnnotator, StubEmbedder, StubSolver, StubTransformer};
use vlsynth::providers::{ProviderSet, RetryPolicy};
use vlsynth::qc::{gradient_energy, hamming, phash, qc_group, qc_stats, ssim_vs_white, PHash, PanelStats, QcConfig, QcReason};
use vlsynth::render::{render_group, ImageGroup, RenderConfig, StyleId};
use vlsynth::rule::{ReasoningStyle, VisualPattern};
use vlsynth::{seed, ImageBuf, Rule, RuleClass, ScoreTriple};

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config() -> PathBuf {
    fixtures().join("fixtures.toml")
}

struct Run {
    dir: tempfile::TempDir,
    elapsed: Duration,
}

impl Run {
    fn work(&self) -> PathBuf {
        self.dir.path().join("work")
    }

    fn export(&self) -> PathBuf {
        self.dir.path().join("dataset")
    }
}

fn run_pipeline() -> Result<Run, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_vlsynth"))
        .arg("--config")
        .arg(fixture_config())
        .arg("run-all")
        .env("VLSYNTH_WORKDIR", dir.path().join("work"))
        .env("VLSYNTH_EXPORT", dir.path().join("dataset"))
        .env_remove("VLSYNTH_SEEDS")
        .env_remove("VLSYNTH_RNG_SEED")
        .output()
        .map_err(|e| format!("cannot start vlsynth: {e}"))?;
    let elapsed = start.elapsed();
    if !out.status.success() {
        return Err(format!("run-all failed ({}): {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(Run { dir, elapsed })
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn stub_providers(solver: SolverMode) -> ProviderSet {
    ProviderSet {
        transformer: std::sync::Arc::new(StubTransformer::default()),
        embedder: std::sync::Arc::new(StubEmbedder::default()),
        annotator: std::sync::Arc::new(StubAnnotator::default()),
        solver: std::sync::Arc::new(StubSolver::new(solver)),
        retry: RetryPolicy { attempts: 1, base_delay_ms: 0 },
    }
}

// ---------------------------------------------------------------------------
// 1. Multiplier identity

fn multiplier_identity(run: &Run) -> Outcome {
    let export = run.export();
    let puzzles: Vec<Value> = read_jsonl(&export.join("records/puzzles.jsonl"))?;
    let verdicts: Vec<Value> = read_jsonl(&export.join("records/qc.jsonl"))?;
    let accepted = verdicts.iter().filter(|v| v["verdict"]["accepted"] == true).count();
    let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
    for p in &puzzles {
        *by_kind.entry(p["variant"]["kind"].as_str().unwrap_or("?").to_string()).or_default() += 1;
    }
    let kind = |k: &str| by_kind.get(k).copied().unwrap_or(0);
    let (d, s, x) = (kind("default4"), kind("shuffled4"), kind("expanded10"));
    ensure!(accepted > 0, "no accepted groups");
    ensure!(
        puzzles.len() == 6 * accepted,
        "{} puzzles from {accepted} accepted groups, expected {}",
        puzzles.len(),
        6 * accepted
    );
    ensure!(d == accepted && s == 4 * accepted && x == accepted, "split {d}:{s}:{x} is not 1:4:1 over {accepted} groups");
    let manifest = read_json(&export.join("manifest.json"))?;
    let c = &manifest["counts"];
    ensure!(
        c["total_puzzles"] == puzzles.len() && c["filtered_groups"] == accepted,
        "manifest counts disagree with the exported records"
    );
    ensure!(run.elapsed < Duration::from_secs(300), "run-all took {:.1?}", run.elapsed);
    Ok(format!("{} puzzles = 6 × {accepted} groups ({d}:{s}:{x}); run-all {:.1?}", puzzles.len(), run.elapsed))
}

// ---------------------------------------------------------------------------
// 2. Growth ratio and lineage

fn growth_ratio(run: &Run) -> Outcome {
    let cfg = PipelineConfig::load(&fixture_config()).map_err(|e| e.to_string())?;
    ensure!(
        serde_json::to_value(cfg.evolution).unwrap() == serde_json::to_value(EvolutionConfig::default()).unwrap(),
        "fixture evolution config differs from the default"
    );
    ensure!(cfg.evolution.generations == 10, "default run is not 10 generations");
    let seeds: Vec<Rule> = read_jsonl(&run.work().join("rules/seeds.jsonl"))?;
    let pool: Vec<Rule> = read_jsonl(&run.work().join("rules/evolved.jsonl"))?;
    let target = 25.0 * seeds.len() as f64;
    let ratio = pool.len() as f64 / target;
    ensure!((0.9..=1.1).contains(&ratio), "pool {} vs target {target} (ratio {ratio:.3})", pool.len());

    let seed_ids: BTreeSet<&str> = seeds.iter().map(|r| r.id.as_str()).collect();
    let by_id: BTreeMap<&str, &Rule> = pool.iter().map(|r| (r.id.as_str(), r)).collect();
    ensure!(by_id.len() == pool.len(), "pool has duplicate ids");
    for r in &pool {
        if r.lineage.is_empty() {
            ensure!(seed_ids.contains(r.id.as_str()) && r.generation == 0, "{} has no parents but is not a seed", r.id);
            continue;
        }
        let mut max_parent = 0;
        for p in &r.lineage {
            let parent = by_id.get(p.id.as_str()).ok_or_else(|| format!("{} has unknown parent {}", r.id, p.id))?;
            max_parent = max_parent.max(parent.generation);
        }
        ensure!(r.generation == max_parent + 1, "{} is generation {} but its parents peak at {max_parent}", r.id, r.generation);
        // Walk to the roots.
        let mut stack = vec![r.id.as_str()];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let rule = by_id[id];
            if rule.lineage.is_empty() {
                ensure!(seed_ids.contains(id), "{} descends from non-seed root {id}", r.id);
            }
            stack.extend(rule.lineage.iter().map(|p| p.id.as_str()));
        }
        let roots = root_seeds(&pool, &r.id);
        ensure!(!roots.is_empty() && roots.iter().all(|s| seed_ids.contains(s.as_str())), "root_seeds({}) = {roots:?}", r.id);
    }
    ensure!(lineage_is_sound(&pool), "lineage_is_sound rejected the pool");
    Ok(format!("{} rules from {} seeds (ratio {ratio:.3} of 25×); all lineages rooted", pool.len(), seeds.len()))
}

// ---------------------------------------------------------------------------
// 3. Filtering rule

fn filtering_rule() -> Outcome {
    let class = RuleClass::new(VisualPattern::Others, ReasoningStyle::Others);
    let rule = |id: String, s: ScoreTriple| Rule {
        id,
        class,
        bullets: Vec::new(),
        generation: 0,
        lineage: Vec::new(),
        scores: Some(s),
        program: None,
    };
    let mut pool = Vec::new();
    for f in 1..=5 {
        for c in 1..=5 {
            for e in 1..=5 {
                pool.push(rule(format!("grid-{f}{c}{e}"), ScoreTriple { format: f, content: c, feasibility: e }));
            }
        }
    }
    let mut rng = seed::rng(3);
    for i in 0..1000 {
        let s = ScoreTriple { format: rng.random_range(1..=5), content: rng.random_range(1..=5), feasibility: rng.random_range(1..=5) };
        pool.push(rule(format!("rand-{i:04}"), s));
    }
    let t = RubricThresholds::default();
    ensure!(t.min_total_exclusive == 12 && t.min_feasibility == 3, "default thresholds are {t:?}");
    let retained = filter_by_score(&pool, &t).map_err(|e| e.to_string())?;
    let got: Vec<&str> = retained.iter().map(|r| r.id.as_str()).collect();
    let expected: Vec<&str> = pool
        .iter()
        .filter(|r| {
            let s = r.scores.unwrap();
            u32::from(s.format) + u32::from(s.content) + u32::from(s.feasibility) > 12 && s.feasibility >= 3
        })
        .map(|r| r.id.as_str())
        .collect();
    let got_set: BTreeSet<&str> = got.iter().copied().collect();
    let expected_set: BTreeSet<&str> = expected.iter().copied().collect();
    ensure!(got_set == expected_set, "retained set differs: {} vs {} expected", got_set.len(), expected_set.len());
    ensure!(got.len() == got_set.len(), "retained set has repeats");
    Ok(format!("{} of {} synthetic rules retained, exactly the total > 12 ∧ feasibility ≥ 3 set", got.len(), pool.len()))
}

// ---------------------------------------------------------------------------
// 4. Dedup exactness

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn dedup_exactness() -> Outcome {
    let mut rng = seed::rng(4);
    let dim = 24;
    let mut raw: Vec<Vec<f64>> = Vec::new();
    for i in 0..1000 {
        let v: Vec<f64> = if i >= 600 {
            // Near copies of earlier vectors so that dedup has work to do.
            let base = raw[rng.random_range(0..600)].clone();
            let eps = [0.005, 0.02, 0.08][i % 3];
            base.iter().map(|x| x + rng.random_range(-eps..eps)).collect()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        raw.push(v);
    }
    let pool: Vec<EmbeddingVector> = raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| EmbeddingVector::new(format!("v{i:04}"), v).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let nn = nn_distances(&pool).map_err(|e| e.to_string())?;
    ensure!(nn.len() == pool.len(), "nn_distances returned {} entries", nn.len());
    let mut worst: f64 = 0.0;
    for (i, v) in pool.iter().enumerate() {
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        ensure!((norm - 1.0).abs() < 1e-9, "{} is not unit length", v.id);
        let brute = pool
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, w)| euclid(&v.values, &w.values))
            .fold(f64::INFINITY, f64::min);
        ensure!(nn[i].0 == v.id, "nn_distances reordered its output");
        worst = worst.max((nn[i].1 - brute).abs());
    }
    ensure!(worst <= 1e-6, "nn distance deviates from brute force by {worst:e}");

    let by_id: BTreeMap<&str, &EmbeddingVector> = pool.iter().map(|v| (v.id.as_str(), v)).collect();
    let mut summary = Vec::new();
    for threshold in [0.01, 0.05, 0.2] {
        let report = dedup(&pool, threshold).map_err(|e| e.to_string())?;
        ensure!(report.kept.len() + report.removed.len() == pool.len(), "dedup lost members at {threshold}");
        for (a, ka) in report.kept.iter().enumerate() {
            for kb in &report.kept[a + 1..] {
                let d = euclid(&by_id[ka.as_str()].values, &by_id[kb.as_str()].values);
                ensure!(d >= threshold, "kept {ka} and {kb} are {d} apart at threshold {threshold}");
            }
        }
        summary.push(format!("{}@{threshold}", report.removed.len()));
    }
    Ok(format!("max |nn − brute| = {worst:.1e} over 1000 vectors; kept sets pairwise ≥ threshold (removed {})", summary.join(", ")))
}

// ---------------------------------------------------------------------------
// 5. QC kernels

fn popcount_oracle(x: u64) -> u32 {
    (0..64).filter(|b| x >> b & 1 == 1).count() as u32
}

fn fixture_program(name: &str) -> Result<vlsynth::dsl::RuleProgram, String> {
    let text = std::fs::read_to_string(fixtures().join("programs").join(name)).map_err(|e| e.to_string())?;
    parse_rule_program(&text).map_err(|e| format!("{name}: {e}"))
}

fn qc_kernels() -> Outcome {
    let mut rng = seed::rng(5);
    for i in 0..10_000 {
        let a: u64 = rng.random();
        let b: u64 = if i % 4 == 0 { a ^ (1 << rng.random_range(0..64)) } else { rng.random() };
        let c: u64 = if i % 5 == 0 { b } else { rng.random() };
        let (pa, pb, pc) = (PHash(a), PHash(b), PHash(c));
        let (ab, bc, ac) = (hamming(pa, pb), hamming(pb, pc), hamming(pa, pc));
        ensure!(hamming(pa, pa) == 0, "d(a, a) ≠ 0");
        ensure!(ab == hamming(pb, pa), "asymmetric for {a:x}, {b:x}");
        ensure!((ab == 0) == (a == b), "identity of indiscernibles fails for {a:x}, {b:x}");
        ensure!(ac <= ab + bc, "triangle inequality fails for {a:x}, {b:x}, {c:x}");
        ensure!(ab == popcount_oracle(a ^ b) && ab <= 64, "d({a:x}, {b:x}) = {ab}");
    }

    let white = ssim_vs_white(&ImageBuf::white(64));
    ensure!((white - 1.0).abs() <= 1e-9, "ssim(all-white) = {white}");
    let c1 = (0.01f64 * 255.0).powi(2);
    let closed = c1 / (255.0f64 * 255.0 + c1);
    let black = ssim_vs_white(&ImageBuf::filled(64, 64, [0, 0, 0]));
    ensure!((black - closed).abs() <= 1e-6, "ssim(all-black) = {black}, closed form {closed}");

    for (w, h) in [(40u32, 30u32), (64, 64), (17, 5)] {
        let step = ImageBuf::from_fn(w, h, |x, _| if x < w / 2 { [0, 0, 0] } else { [255, 255, 255] });
        let e = gradient_energy(&step);
        ensure!((e - 1.0 / f64::from(w)).abs() <= 1e-9, "energy of a {w}×{h} step edge is {e}, expected 1/{w}");
    }

    let cfg = QcConfig::default();
    ensure!(cfg.dup_threshold == 10, "default duplicate threshold is {}", cfg.dup_threshold);
    let program = fixture_program("count_grow.vlrule")?;
    let group = render_group("qc", &program, StyleId::MonochromeVector, 1, &RenderConfig::default()).map_err(|e| e.to_string())?;
    let panel = group.correct[2].clone();
    let identical = ImageGroup { correct: vec![panel.clone(); 5], incorrect: vec![panel; 3], ..group };
    let verdict = qc_group(&identical, &cfg);
    let dups = verdict.reasons.iter().filter(|r| matches!(r, QcReason::DuplicatePair { distance: 0, .. })).count();
    ensure!(!verdict.accepted && dups == 28, "identical panels: accepted={}, {dups} duplicate pairs", verdict.accepted);

    // Boundary: pairs at Hamming 9 are duplicates, pairs at 10 are not.
    let mut hashes: Vec<u64> = (0..8).map(|_| rng.random()).collect();
    hashes[6] = hashes[0] ^ 0x1FF;
    hashes[7] = hashes[1] ^ 0x3FF;
    let stats: Vec<PanelStats> = hashes
        .iter()
        .map(|&h| PanelStats { phash: PHash(h), ssim_white: 0.5, ink: 0.2, energy: 0.01 })
        .collect();
    let flagged: BTreeSet<(usize, usize)> = qc_stats(&stats, &cfg)
        .reasons
        .iter()
        .filter_map(|r| match r {
            QcReason::DuplicatePair { i, j, .. } => Some((*i, *j)),
            _ => None,
        })
        .collect();
    let mut expected = BTreeSet::new();
    for i in 0..8 {
        for j in i + 1..8 {
            if popcount_oracle(hashes[i] ^ hashes[j]) < 10 {
                expected.insert((i, j));
            }
        }
    }
    ensure!(expected.contains(&(0, 6)) && !expected.contains(&(1, 7)), "boundary pairs not set up");
    ensure!(flagged == expected, "flagged pairs {flagged:?}, expected {expected:?}");
    Ok("Hamming laws on 10,000 triples; SSIM white/black, step-edge energy and threshold-10 duplicates exact".into())
}

// ---------------------------------------------------------------------------
// 6. Renderer fidelity

#[derive(Debug, Clone)]
enum Expect {
    Count(Vec<u32>),
    Lines(Vec<u32>),
    Rotation(Vec<f64>),
    Offset(Vec<(f64, f64)>),
    Shading(Vec<f64>),
}

fn parse_expectation(text: &str) -> Result<Expect, String> {
    let header = text.lines().next().and_then(|l| l.strip_prefix("# ")).ok_or("missing expectation header")?;
    let (key, values) = header.split_once(':').ok_or("malformed expectation header")?;
    let nums = |v: &str| v.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| e.to_string())).collect::<Result<Vec<_>, _>>();
    Ok(match key {
        "count" => Expect::Count(nums(values)?.into_iter().map(|v| v as u32).collect()),
        "lines" => Expect::Lines(nums(values)?.into_iter().map(|v| v as u32).collect()),
        "rotation" => Expect::Rotation(nums(values)?),
        "shading" => Expect::Shading(nums(values)?),
        "offset" => Expect::Offset(
            values
                .split_whitespace()
                .map(|p| {
                    let (x, y) = p.split_once(',').ok_or("offset needs x,y")?;
                    Ok((x.parse::<f64>().map_err(|e| e.to_string())?, y.parse::<f64>().map_err(|e| e.to_string())?))
                })
                .collect::<Result<Vec<_>, String>>()?,
        ),
        other => return Err(format!("unknown expectation `{other}`")),
    })
}

fn luma(p: [u8; 3]) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

fn ink_mask(img: &ImageBuf) -> Vec<bool> {
    let w = img.width();
    (0..img.height() * w).map(|i| luma(img.get(i % w, i / w)) < 160.0).collect()
}

/// 8-connected components of the ink mask.
fn components(img: &ImageBuf) -> usize {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut mask = ink_mask(img);
    let mut n = 0;
    for start in 0..mask.len() {
        if !mask[start] {
            continue;
        }
        n += 1;
        mask[start] = false;
        let mut stack = vec![start as i64];
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w && ny < h && mask[(ny * w + nx) as usize] {
                        mask[(ny * w + nx) as usize] = false;
                        stack.push(ny * w + nx);
                    }
                }
            }
        }
    }
    n
}

fn ink_count(img: &ImageBuf) -> usize {
    ink_mask(img).iter().filter(|&&m| m).count()
}

fn centroid(img: &ImageBuf) -> (f64, f64) {
    let w = img.width();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (i, m) in ink_mask(img).into_iter().enumerate() {
        if m {
            sx += f64::from(i as u32 % w) + 0.5;
            sy += f64::from(i as u32 / w) + 0.5;
            n += 1.0;
        }
    }
    (sx / n, sy / n)
}

/// Clockwise angle from "up" of the ink centroid around the panel centre.
fn dial_angle(img: &ImageBuf) -> f64 {
    let c = f64::from(img.width()) / 2.0;
    let (x, y) = centroid(img);
    (x - c).atan2(c - y).to_degrees()
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn center_luma(img: &ImageBuf) -> f64 {
    let (x, y) = centroid(img);
    luma(img.get(x as u32, y as u32))
}

fn check_program(name: &str, text: &str, style: StyleId) -> Result<(), String> {
    let expect = parse_expectation(text)?;
    let program = parse_rule_program(text).map_err(|e| e.to_string())?;
    let cfg = RenderConfig::default();
    let size = f64::from(cfg.panel_size);
    let group = render_group("fixture", &program, style, 11, &cfg).map_err(|e| format!("{name}: {e}"))?;
    let c4 = &group.correct[4];

    // Correct panels.
    for (i, panel) in group.correct.iter().enumerate() {
        match &expect {
            Expect::Count(v) => {
                let got = components(panel);
                ensure!(got == v[i] as usize, "{name} {style} panel {i}: {got} shapes, expected {}", v[i]);
            }
            Expect::Lines(v) => {
                let got = components(panel);
                ensure!(got == 1 + 3 * v[i] as usize, "{name} {style} panel {i}: {got} strokes for {} line groups", v[i]);
            }
            Expect::Rotation(v) => {
                let got = dial_angle(panel);
                ensure!(angle_gap(got, v[i]) <= 2.0, "{name} {style} panel {i}: angle {got:.2}, expected {}", v[i]);
            }
            Expect::Offset(v) => {
                let (x, y) = centroid(panel);
                let (ex, ey) = (size / 2.0 + v[i].0 / 100.0 * size, size / 2.0 + v[i].1 / 100.0 * size);
                let err = (x - ex).hypot(y - ey);
                ensure!(err <= 2.0, "{name} {style} panel {i}: centroid ({x:.1}, {y:.1}), expected ({ex:.1}, {ey:.1})");
            }
            Expect::Shading(v) => {
                if style.is_monochrome() {
                    let got = 1.0 - center_luma(panel) / 255.0;
                    ensure!((got - v[i]).abs() <= 0.02, "{name} {style} panel {i}: shading {got:.3}, expected {}", v[i]);
                }
            }
        }
    }

    // Distractors.
    let earlier = &group.correct[..4];
    for (k, (&recipe, panel)) in program.distractor_recipes().iter().zip(&group.incorrect).enumerate() {
        let tag = format!("{name} {style} distractor {k} ({recipe:?})");
        match recipe {
            ViolationRecipe::CountOff | ViolationRecipe::LinesOff => {
                ensure!(components(panel) != components(c4), "{tag} shows the correct number of shapes");
            }
            ViolationRecipe::RotationOff => {
                let gap = angle_gap(dial_angle(panel), dial_angle(c4));
                ensure!(gap > 2.0, "{tag} is only {gap:.2}° from the answer");
            }
            ViolationRecipe::PositionOff => {
                let ((x, y), (cx, cy)) = (centroid(panel), centroid(c4));
                ensure!((x - cx).hypot(y - cy) > 2.0, "{tag} sits where the answer does");
            }
            ViolationRecipe::ShadingOff => {
                let gap = (center_luma(panel) - center_luma(c4)).abs();
                ensure!(gap > 10.0, "{tag} fill tone differs by only {gap:.1}");
            }
            ViolationRecipe::WrongFill => {
                let (a, b) = (ink_count(panel) as f64, ink_count(c4) as f64);
                ensure!(components(panel) == components(c4), "{tag} changed the shape count");
                ensure!((a - b).abs() / b > 0.15, "{tag} ink {a} vs answer {b}");
            }
            ViolationRecipe::OrderSwap => {
                let matches_earlier = match &expect {
                    Expect::Count(_) | Expect::Lines(_) => {
                        let n = components(panel);
                        n != components(c4) && earlier.iter().any(|p| components(p) == n)
                    }
                    Expect::Rotation(_) => {
                        let a = dial_angle(panel);
                        angle_gap(a, dial_angle(c4)) > 2.0 && earlier.iter().any(|p| angle_gap(dial_angle(p), a) <= 2.0)
                    }
                    Expect::Offset(_) => {
                        let (x, y) = centroid(panel);
                        let near = |p: &ImageBuf| {
                            let (px, py) = centroid(p);
                            (px - x).hypot(py - y)
                        };
                        near(c4) > 2.0 && earlier.iter().any(|p| near(p) <= 2.0)
                    }
                    Expect::Shading(_) => {
                        let l = center_luma(panel);
                        (l - center_luma(c4)).abs() > 10.0 && earlier.iter().any(|p| (center_luma(p) - l).abs() <= 3.0)
                    }
                };
                ensure!(matches_earlier, "{tag} does not show an earlier step's value");
            }
        }
    }
    Ok(())
}

fn renderer_fidelity() -> Outcome {
    let dir = fixtures().join("programs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vlrule"))
        .collect();
    files.sort();
    ensure!(files.len() >= 8, "only {} fixture programs", files.len());
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let name = path.file_stem().unwrap().to_string_lossy();
        for style in StyleId::ALL {
            check_program(&name, &text, style)?;
        }
    }
    Ok(format!("{} programs × 3 styles: counts, angles, centroids and distractor violations measured from pixels", files.len()))
}

// ---------------------------------------------------------------------------
// 7. Assembly soundness

fn panel_path(export: &Path, panel: &Value) -> Result<PathBuf, String> {
    let group = panel["group"].as_str().ok_or("panel without group")?;
    let slot = &panel["slot"];
    let file = if let Some(i) = slot["correct"].as_u64() {
        format!("c{i}.png")
    } else if let Some(i) = slot["incorrect"].as_u64() {
        format!("x{i}.png")
    } else {
        return Err(format!("unreadable slot {slot}"));
    };
    Ok(export.join("panels").join(group).join(file))
}

fn assembly_soundness(run: &Run) -> Outcome {
    let export = run.export();
    let cfg = PipelineConfig::load(&fixture_config()).map_err(|e| e.to_string())?;
    let layout = cfg.assembly.layout;
    let puzzles: Vec<Value> = read_jsonl(&export.join("records/puzzles.jsonl"))?;
    ensure!(puzzles.len() >= 1000, "only {} fixture puzzles", puzzles.len());
    let mut shuffled_answers: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut expanded = 0;
    let mut cache: BTreeMap<PathBuf, ImageBuf> = BTreeMap::new();
    let mut load = |p: &Path| -> Result<ImageBuf, String> {
        if let Some(img) = cache.get(p) {
            return Ok(img.clone());
        }
        let img = ImageBuf::load_png(p).map_err(|e| format!("{}: {e}", p.display()))?;
        cache.insert(p.to_path_buf(), img.clone());
        Ok(img)
    };
    for p in &puzzles {
        let id = p["id"].as_str().ok_or("puzzle without id")?;
        let group = p["group_id"].as_str().ok_or("puzzle without group")?;
        let answer = p["answer"].as_str().ok_or("puzzle without answer")?;
        let options = p["options"].as_array().ok_or("puzzle without options")?;
        let index = options.iter().position(|o| o["label"] == answer).ok_or_else(|| format!("{id}: answer {answer} is not a label"))?;
        let truth_path = export.join("panels").join(group).join("c4.png");
        let chosen = std::fs::read(panel_path(&export, &options[index]["panel"])?).map_err(|e| e.to_string())?;
        let truth = std::fs::read(&truth_path).map_err(|e| e.to_string())?;
        ensure!(chosen == truth, "{id}: answer {answer} does not decode to the fifth correct panel");

        // The sheet shows that same panel in the answer's cell.
        let sheet = load(&export.join(p["sheet"].as_str().ok_or("puzzle without sheet")?))?;
        let truth_img = load(&truth_path)?;
        let size = truth_img.width();
        let geo = SheetGeometry::new(size, options.len(), &layout);
        let (x0, y0) = geo.option_cell(index as u32, options.len() as u32, &layout);
        for y in 0..size {
            for x in 0..size {
                ensure!(sheet.get(x0 + x, y0 + y) == truth_img.get(x, y), "{id}: sheet cell {answer} differs at ({x}, {y})");
            }
        }

        match p["variant"]["kind"].as_str() {
            Some("shuffled4") => {
                shuffled_answers.entry(group.to_string()).or_default().insert(answer.to_string());
            }
            Some("expanded10") => {
                expanded += 1;
                ensure!(options.len() == 10, "{id} has {} options", options.len());
                let labels: Vec<&str> = options.iter().filter_map(|o| o["label"].as_str()).collect();
                ensure!(labels == ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"], "{id} labels {labels:?}");
                let mut per_donor: BTreeMap<&str, usize> = BTreeMap::new();
                let mut hashes = Vec::new();
                for o in options {
                    let g = o["panel"]["group"].as_str().ok_or("option without group")?;
                    if g != group {
                        *per_donor.entry(g).or_default() += 1;
                    }
                    hashes.push(phash(&load(&panel_path(&export, &o["panel"])?)?));
                }
                ensure!(
                    per_donor.len() == 2 && per_donor.values().all(|&n| n == 3),
                    "{id}: donor panels {per_donor:?}, expected 3 from each of 2 groups"
                );
                let donors: BTreeSet<&str> = p["donors"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
                ensure!(donors == per_donor.keys().copied().collect(), "{id}: donors field {donors:?} disagrees with options");
                for i in 0..10 {
                    for j in i + 1..10 {
                        let d = hamming(hashes[i], hashes[j]);
                        ensure!(d >= cfg.qc.dup_threshold, "{id}: options {i} and {j} are {d} bits apart");
                    }
                }
            }
            _ => {}
        }
    }
    let abcd: BTreeSet<String> = ["A", "B", "C", "D"].map(String::from).into();
    for (g, answers) in &shuffled_answers {
        ensure!(*answers == abcd, "{g}: shuffled answers {answers:?}");
    }
    ensure!(expanded > 0, "no ten-option puzzles to check");
    Ok(format!(
        "{} puzzles decode to their fifth panel (records and sheets); {} groups cover A–D; {expanded} ten-option puzzles distinct with 2 donors",
        puzzles.len(),
        shuffled_answers.len()
    ))
}

// ---------------------------------------------------------------------------
// 8. Binning and sampling

fn record(puzzle_id: String, group_id: String, options: usize, r: u8, c: u8, successes: u32, attempts: u32) -> AttributeRecord {
    AttributeRecord {
        puzzle_id,
        group_id,
        options,
        readability: r,
        coherence: c,
        successes,
        attempts,
        pass_rate: f64::from(successes) / f64::from(attempts),
    }
}

fn binning_and_sampling() -> Outcome {
    let cases = [
        (0.0, Difficulty::Hard),
        (0.25, Difficulty::Medium),
        (0.5, Difficulty::Easy),
        (0.75, Difficulty::Easy),
        (0.125, Difficulty::Unbinned),
        (0.4999, Difficulty::Medium),
        (0.7501, Difficulty::Unbinned),
        (1.0, Difficulty::Unbinned),
    ];
    for (p, want) in cases {
        ensure!(bin_pass_rate(p) == want, "bin_pass_rate({p}) = {:?}, expected {want:?}", bin_pass_rate(p));
        let mut r = record("p".into(), "g".into(), 4, 4, 4, 0, 1);
        r.pass_rate = p;
        ensure!(bin_difficulty(&r) == want, "bin_difficulty at {p} = {:?}", bin_difficulty(&r));
    }

    let mut rng = seed::rng(8);
    let mut records = Vec::new();
    for g in 0..1500 {
        let group = format!("g{g:04}");
        let mut push = |suffix: &str, options: usize, rng: &mut dyn rand::RngCore| {
            records.push(record(
                format!("{group}-{suffix}"),
                group.clone(),
                options,
                rng.random_range(3..=5),
                rng.random_range(3..=5),
                rng.random_range(0..=8),
                8,
            ))
        };
        for suffix in ["d", "sA", "sB", "sC", "sD"] {
            push(suffix, 4, &mut rng);
        }
        push("x", 10, &mut rng);
    }
    let cfg = SamplerConfig::default();
    let ids = sample_training(&records, 1000, &cfg, 8).map_err(|e| e.to_string())?;
    let by_id: BTreeMap<&str, &AttributeRecord> = records.iter().map(|r| (r.puzzle_id.as_str(), r)).collect();
    ensure!(ids.len() == 1000, "sample has {} ids", ids.len());
    ensure!(ids.iter().collect::<BTreeSet<_>>().len() == 1000, "sample repeats ids");
    let mut four_groups = BTreeSet::new();
    let (mut four, mut ten) = (0, 0);
    for id in &ids {
        let r = by_id.get(id.as_str()).ok_or_else(|| format!("unknown id {id}"))?;
        ensure!((0.375..=0.875).contains(&r.pass_rate), "{id} pass rate {}", r.pass_rate);
        ensure!(u32::from(r.readability) + u32::from(r.coherence) >= 8, "{id} scores {}+{}", r.readability, r.coherence);
        match r.options {
            4 => {
                four += 1;
                ensure!(four_groups.insert(&r.group_id), "two four-option puzzles from {}", r.group_id);
            }
            10 => ten += 1,
            n => return Err(format!("{id} has {n} options")),
        }
    }
    ensure!((four, ten) == (800, 200), "mix {four}/{ten}");

    let program = fixture_program("count_grow.vlrule")?;
    let mut group = render_group("solver", &program, StyleId::MonochromeVector, 2, &RenderConfig::default()).map_err(|e| e.to_string())?;
    let verdict = qc_group(&group, &QcConfig::default());
    ensure!(verdict.accepted, "solver fixture group rejected: {:?}", verdict.reasons);
    group.qc = Some(verdict);
    let groups: BTreeMap<String, ImageGroup> = [(group.group_id.clone(), group.clone())].into();
    let mut puzzles = vec![assemble_default(&group, 5).map_err(|e| e.to_string())?];
    puzzles.extend(assemble_shuffled(&group).map_err(|e| e.to_string())?);
    let providers = stub_providers(SolverMode::Random);
    let k = 10_000u32;
    let sigma = (0.25f64 * 0.75 / f64::from(k)).sqrt();
    let mut rates = Vec::new();
    for p in &puzzles {
        let png = compose_sheet(p, &groups, &Default::default()).map_err(|e| e.to_string())?.encode_png().map_err(|e| e.to_string())?;
        let (s, n) = pass_rate(p, &png, &providers, k, 8).map_err(|e| e.to_string())?;
        let rate = f64::from(s) / f64::from(n);
        ensure!((rate - 0.25).abs() <= 3.0 * sigma, "{}: random solver pass rate {rate:.4}", p.id);
        rates.push(format!("{rate:.4}"));
    }
    Ok(format!("boundaries exact; n=1000 sample is 800/200 with every constraint held; random solver rates {} (3σ = {:.4})", rates.join(", "), 3.0 * sigma))
}

// ---------------------------------------------------------------------------
// 9. Determinism

fn file_hashes(root: &Path, subdirs: &[&str]) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for sub in subdirs {
        let base = root.join(sub);
        if base.is_file() {
            out.insert(sub.to_string(), seed::sha256_hex(&std::fs::read(&base).map_err(|e| e.to_string())?));
            continue;
        }
        for rel in vlsynth::pipeline::list_files(&base).map_err(|e| e.to_string())? {
            let bytes = std::fs::read(base.join(&rel)).map_err(|e| e.to_string())?;
            out.insert(format!("{sub}/{}", rel.to_string_lossy()), seed::sha256_hex(&bytes));
        }
    }
    Ok(out)
}

fn determinism(a: &Run, b: &Run) -> Outcome {
    let mut compared = 0;
    for (root_a, root_b, subdirs) in [
        (a.export(), b.export(), &["sheets", "records", "panels", "manifest.json"][..]),
        (a.work(), b.work(), &["sheets", "records", "puzzles", "stats/manifest.json"][..]),
    ] {
        let ha = file_hashes(&root_a, subdirs)?;
        let hb = file_hashes(&root_b, subdirs)?;
        ensure!(!ha.is_empty(), "nothing to compare under {}", root_a.display());
        let keys_a: BTreeSet<&String> = ha.keys().collect();
        let keys_b: BTreeSet<&String> = hb.keys().collect();
        ensure!(keys_a == keys_b, "runs wrote different file sets");
        if let Some((path, _)) = ha.iter().find(|(k, v)| hb[*k] != **v) {
            return Err(format!("{path} differs between runs"));
        }
        compared += ha.len();
    }
    Ok(format!("{compared} files byte-identical across two run-all invocations"))
}

// ---------------------------------------------------------------------------

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let started = Instant::now();
    let (run_a, run_b) = std::thread::scope(|s| {
        let a = s.spawn(run_pipeline);
        let b = s.spawn(run_pipeline);
        (a.join().unwrap_or_else(|_| Err("run panicked".into())), b.join().unwrap_or_else(|_| Err("run panicked".into())))
    });
    let with_run = |f: &dyn Fn(&Run) -> Outcome| match &run_a {
        Ok(r) => f(r),
        Err(e) => Err(e.clone()),
    };

    let criteria: Vec<(&str, Check<'_>)> = vec![
        ("multiplier identity", Box::new(|| with_run(&multiplier_identity))),
        ("growth ratio", Box::new(|| with_run(&growth_ratio))),
        ("filtering rule", Box::new(filtering_rule)),
        ("dedup exactness", Box::new(dedup_exactness)),
        ("QC kernels", Box::new(qc_kernels)),
        ("renderer fidelity", Box::new(renderer_fidelity)),
        ("assembly soundness", Box::new(|| with_run(&assembly_soundness))),
        ("binning and sampling", Box::new(binning_and_sampling)),
        (
            "determinism",
            Box::new(|| match (&run_a, &run_b) {
                (Ok(a), Ok(b)) => determinism(a, b),
                (Err(e), _) | (_, Err(e)) => Err(e.clone()),
            }),
        ),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [{name}]: FAIL ({why})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed in {:.1?}", criteria.len() - failed, criteria.len(), started.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
