//! Attribute records, difficulty bins, training-sample selection and the
//! dataset manifest.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{Puzzle, Variant};
use crate::providers::{bindings, ProviderError, ProviderRequest, ProviderSet, RequestKind};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub puzzle_id: String,
    pub group_id: String,
    pub options: usize,
    pub readability: u8,
    pub coherence: u8,
    pub successes: u32,
    pub attempts: u32,
    pub pass_rate: f64,
}

impl AttributeRecord {
    pub fn score(&self) -> u32 {
        u32::from(self.readability) + u32::from(self.coherence)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Unbinned,
}

pub fn bin_pass_rate(p: f64) -> Difficulty {
    if p == 0.0 {
        Difficulty::Hard
    } else if (0.25..0.5).contains(&p) {
        Difficulty::Medium
    } else if (0.5..=0.75).contains(&p) {
        Difficulty::Easy
    } else {
        Difficulty::Unbinned
    }
}

pub fn bin_difficulty(rec: &AttributeRecord) -> Difficulty {
    bin_pass_rate(rec.pass_rate)
}

/// Issues `k` solve attempts against the puzzle sheet and returns
/// `(successes, k)`. The solver sees the prompt and the sheet only.
pub fn pass_rate(
    puzzle: &Puzzle,
    sheet_png: &[u8],
    providers: &ProviderSet,
    k: u32,
    seed_base: u64,
) -> Result<(u32, u32), ProviderError> {
    let k = k.max(1);
    let mut successes = 0;
    for attempt in 0..k {
        let req = ProviderRequest::new(
            RequestKind::Solve,
            crate::providers::solve_bindings(&puzzle.labels()),
            seed::derive(seed_base, &format!("{}/attempt/{attempt}", puzzle.id)),
        )
        .with_subject(&puzzle.id)
        .with_attachment("sheet.png", sheet_png.to_vec());
        let answer = providers.solve(&req)?;
        if answer.trim() == puzzle.answer.to_string() {
            successes += 1;
        }
    }
    Ok((successes, k))
}

/// Asks the annotator for `(readability, coherence)`.
pub fn annotate(puzzle: &Puzzle, rules_text: &str, sheet_png: &[u8], providers: &ProviderSet, seed: u64) -> Result<(u8, u8), ProviderError> {
    let question = puzzle.prompt()?;
    let req = ProviderRequest::new(
        RequestKind::Annotate,
        bindings([("question", question), ("answer", puzzle.answer.to_string()), ("rules", rules_text.to_string())]),
        seed,
    )
    .with_subject(&puzzle.id)
    .with_attachment("sheet.png", sheet_png.to_vec());
    providers.annotate(req)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub min_pass_rate: f64,
    pub max_pass_rate: f64,
    pub min_score: u32,
    pub four_option_share: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { min_pass_rate: 0.375, max_pass_rate: 0.875, min_score: 8, four_option_share: 0.8 }
    }
}

impl SamplerConfig {
    pub fn eligible(&self, r: &AttributeRecord) -> bool {
        (self.min_pass_rate..=self.max_pass_rate).contains(&r.pass_rate) && r.score() >= self.min_score
    }

    /// `(four-option, ten-option)` counts for a sample of `n`.
    pub fn split(&self, n: usize) -> (usize, usize) {
        let four = (self.four_option_share * n as f64).round() as usize;
        (four.min(n), n - four.min(n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error(
    "pool too small: need {need_four} four-option and {need_ten} ten-option puzzles, eligible {have_four} and {have_ten} \
     ({outside_band} outside the pass-rate band, {low_score} below the score floor)"
)]
pub struct InsufficientPool {
    pub need_four: usize,
    pub need_ten: usize,
    pub have_four: usize,
    pub have_ten: usize,
    pub outside_band: usize,
    pub low_score: usize,
}

/// Draws `n` eligible puzzles, `round(0.8·n)` of them with four options. At
/// most one four-option puzzle is taken per image group, since the default
/// and shuffled puzzles of a group differ only in option order.
pub fn sample_training(
    records: &[AttributeRecord],
    n: usize,
    cfg: &SamplerConfig,
    rng_seed: u64,
) -> Result<Vec<String>, InsufficientPool> {
    let (need_four, need_ten) = cfg.split(n);
    let in_band = |r: &AttributeRecord| (cfg.min_pass_rate..=cfg.max_pass_rate).contains(&r.pass_rate);
    let outside_band = records.iter().filter(|r| !in_band(r)).count();
    let low_score = records.iter().filter(|r| r.score() < cfg.min_score).count();

    let mut rng = seed::rng_for(rng_seed, "sample");
    let mut four: Vec<&AttributeRecord> = records.iter().filter(|r| r.options == 4 && cfg.eligible(r)).collect();
    let mut ten: Vec<&AttributeRecord> = records.iter().filter(|r| r.options == 10 && cfg.eligible(r)).collect();
    four.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    ten.sort_by(|a, b| a.puzzle_id.cmp(&b.puzzle_id));
    four.shuffle(&mut rng);
    ten.shuffle(&mut rng);
    let mut groups = BTreeSet::new();
    four.retain(|r| groups.insert(r.group_id.clone()));

    if four.len() < need_four || ten.len() < need_ten {
        return Err(InsufficientPool {
            need_four,
            need_ten,
            have_four: four.len(),
            have_ten: ten.len(),
            outside_band,
            low_score,
        });
    }
    let mut out: Vec<String> = four[..need_four].iter().chain(&ten[..need_ten]).map(|r| r.puzzle_id.clone()).collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageCounts {
    pub seeds: usize,
    pub generated: usize,
    pub deduplicated: usize,
    pub retained: usize,
    pub programs: usize,
    pub groups_per_style: BTreeMap<String, usize>,
    pub rendered_groups: usize,
    pub filtered_groups: usize,
    pub default_puzzles: usize,
    pub shuffled_puzzles: usize,
    pub expanded_puzzles: usize,
    pub total_puzzles: usize,
}

/// Histograms over attribute records. Score histograms are indexed by score
/// 1..=5; pass-rate buckets are `[i/10, (i+1)/10)` for i in 0..10, with 1.0
/// placed in the last bucket.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub readability: BTreeMap<u8, usize>,
    pub coherence: BTreeMap<u8, usize>,
    pub pass_rate: Vec<usize>,
    pub difficulty: BTreeMap<Difficulty, usize>,
}

pub fn histograms(records: &[AttributeRecord]) -> Histograms {
    let mut h = Histograms { pass_rate: vec![0; 10], ..Default::default() };
    for r in records {
        *h.readability.entry(r.readability).or_default() += 1;
        *h.coherence.entry(r.coherence).or_default() += 1;
        h.pass_rate[((r.pass_rate * 10.0).floor() as usize).min(9)] += 1;
        *h.difficulty.entry(bin_difficulty(r)).or_default() += 1;
    }
    h
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub counts: StageCounts,
    pub histograms: Histograms,
    /// Relative path of every exported file.
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("inconsistent state: {0}")]
pub struct InconsistentState(pub String);

pub fn count_puzzles(puzzles: &[Puzzle]) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for p in puzzles {
        match p.variant {
            Variant::Default4 => c.0 += 1,
            Variant::Shuffled4 { .. } => c.1 += 1,
            Variant::Expanded10 => c.2 += 1,
        }
    }
    c
}

/// Assembles the manifest and checks the count identities.
pub fn build_manifest(
    mut counts: StageCounts,
    puzzles: &[Puzzle],
    records: &[AttributeRecord],
    files: Vec<String>,
) -> Result<DatasetManifest, InconsistentState> {
    let (d, s, x) = count_puzzles(puzzles);
    counts.default_puzzles = d;
    counts.shuffled_puzzles = s;
    counts.expanded_puzzles = x;
    counts.total_puzzles = puzzles.len();
    let fail = |m: String| Err(InconsistentState(m));
    if counts.total_puzzles != d + s + x {
        return fail("total puzzles differ from the sum over strategies".into());
    }
    if s != 4 * d {
        return fail(format!("shuffled puzzles {s} ≠ 4 × default puzzles {d}"));
    }
    if x > d {
        return fail(format!("expanded puzzles {x} exceed default puzzles {d}"));
    }
    if counts.filtered_groups > counts.rendered_groups {
        return fail(format!("filtered groups {} exceed rendered groups {}", counts.filtered_groups, counts.rendered_groups));
    }
    if d != counts.filtered_groups {
        return fail(format!("default puzzles {d} ≠ accepted groups {}", counts.filtered_groups));
    }
    if counts.retained > counts.deduplicated || counts.deduplicated > counts.generated {
        return fail("rule counts must shrink through dedup and filtering".into());
    }
    if counts.groups_per_style.values().sum::<usize>() != counts.rendered_groups {
        return fail("groups per style do not sum to rendered groups".into());
    }
    for r in records {
        if !(1..=5).contains(&r.readability) || !(1..=5).contains(&r.coherence) {
            return fail(format!("record {} has scores outside [1, 5]", r.puzzle_id));
        }
        if r.attempts == 0 || (r.pass_rate * r.attempts as f64 - r.successes as f64).abs() > 1e-9 {
            return fail(format!("record {} pass rate disagrees with its attempts", r.puzzle_id));
        }
    }
    Ok(DatasetManifest { counts, histograms: histograms(records), files })
}
