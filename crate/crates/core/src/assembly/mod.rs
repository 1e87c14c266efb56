//! Puzzle assembly from QC-accepted image groups.
//!
//! Every group yields one default puzzle, four shuffled puzzles that place
//! the answer at A, B, C and D, and one ten-option puzzle whose extra
//! distractors come from two donor groups of the same style, preferably
//! groups rendered from the rule's ancestors.

pub mod sheet;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{DISTRACTORS, SEQUENCE_LEN};
use crate::image_buf::ImageBuf;
use crate::providers::{render_prompt, solve_bindings, ProviderError, TemplateId};
use crate::qc::{hamming, phash};
use crate::render::{ImageGroup, StyleId};
use crate::rule::Rule;
use crate::seed;

pub use sheet::{SheetGeometry, SheetLayout};

pub const LABELS: [char; 10] = ['A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J'];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssemblyError {
    #[error("group {0} was not accepted by QC")]
    RejectedGroup(String),
    #[error("group {0} needs two related groups in the same style")]
    InsufficientRelatives(String),
    #[error("could not draw near-duplicate-free options for {0}")]
    DuplicateOption(String),
    #[error("panel {0} is not available")]
    MissingPanel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Correct(u8),
    Incorrect(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PanelRef {
    pub group: String,
    pub slot: Slot,
}

impl PanelRef {
    pub fn correct(group: &str, i: usize) -> Self {
        Self { group: group.to_string(), slot: Slot::Correct(i as u8) }
    }

    pub fn incorrect(group: &str, i: usize) -> Self {
        Self { group: group.to_string(), slot: Slot::Incorrect(i as u8) }
    }

    /// File name of the panel inside its group directory.
    pub fn file_name(&self) -> String {
        match self.slot {
            Slot::Correct(i) => format!("c{i}.png"),
            Slot::Incorrect(i) => format!("x{i}.png"),
        }
    }

    pub fn resolve<'a>(&self, groups: &'a BTreeMap<String, ImageGroup>) -> Option<&'a ImageBuf> {
        let g = groups.get(&self.group)?;
        match self.slot {
            Slot::Correct(i) => g.correct.get(i as usize),
            Slot::Incorrect(i) => g.incorrect.get(i as usize),
        }
    }
}

impl fmt::Display for PanelRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.group, self.file_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Default4,
    Shuffled4 { position: char },
    Expanded10,
}

impl Variant {
    pub fn option_count(&self) -> usize {
        match self {
            Variant::Expanded10 => 10,
            _ => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleOption {
    pub label: char,
    pub panel: PanelRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Puzzle {
    pub id: String,
    pub group_id: String,
    pub variant: Variant,
    pub stem: Vec<PanelRef>,
    pub options: Vec<PuzzleOption>,
    pub answer: char,
    pub rule_id: String,
    pub style: StyleId,
    /// Groups that contributed extra distractors.
    #[serde(default)]
    pub donors: Vec<String>,
    pub rng_seed: u64,
}

impl Puzzle {
    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|o| o.label.to_string()).collect()
    }

    /// The panel the answer label points at.
    pub fn answer_panel(&self) -> Option<&PanelRef> {
        self.options.iter().find(|o| o.label == self.answer).map(|o| &o.panel)
    }

    /// Solver instruction text.
    pub fn prompt(&self) -> Result<String, ProviderError> {
        render_prompt(TemplateId::Solve, &solve_bindings(&self.labels()))
    }
}

fn accepted(group: &ImageGroup) -> Result<(), AssemblyError> {
    match &group.qc {
        Some(v) if v.accepted => Ok(()),
        _ => Err(AssemblyError::RejectedGroup(group.group_id.clone())),
    }
}

fn stem(group: &ImageGroup) -> Vec<PanelRef> {
    (0..SEQUENCE_LEN - 1).map(|i| PanelRef::correct(&group.group_id, i)).collect()
}

fn puzzle(group: &ImageGroup, id: String, variant: Variant, panels: Vec<PanelRef>, donors: Vec<String>, rng_seed: u64) -> Puzzle {
    let answer_ref = PanelRef::correct(&group.group_id, SEQUENCE_LEN - 1);
    let options: Vec<PuzzleOption> =
        panels.into_iter().zip(LABELS).map(|(panel, label)| PuzzleOption { label, panel }).collect();
    let answer = options.iter().find(|o| o.panel == answer_ref).map(|o| o.label).expect("answer among options");
    Puzzle {
        id,
        group_id: group.group_id.clone(),
        variant,
        stem: stem(group),
        options,
        answer,
        rule_id: group.rule_id.clone(),
        style: group.style,
        donors,
        rng_seed,
    }
}

fn own_options(group: &ImageGroup) -> Vec<PanelRef> {
    let mut v = vec![PanelRef::correct(&group.group_id, SEQUENCE_LEN - 1)];
    v.extend((0..DISTRACTORS).map(|i| PanelRef::incorrect(&group.group_id, i)));
    v
}

/// Seed of a group under an assembly seed.
pub fn group_seed(assembly_seed: u64, group_id: &str) -> u64 {
    seed::derive(assembly_seed, group_id)
}

pub fn assemble_default(group: &ImageGroup, rng_seed: u64) -> Result<Puzzle, AssemblyError> {
    accepted(group)?;
    let mut panels = own_options(group);
    panels.shuffle(&mut seed::rng_for(rng_seed, "default"));
    Ok(puzzle(group, format!("{}-d", group.group_id), Variant::Default4, panels, Vec::new(), rng_seed))
}

/// Four puzzles with the answer at A, B, C and D. The distractors keep one
/// order derived from the group id.
pub fn assemble_shuffled(group: &ImageGroup) -> Result<Vec<Puzzle>, AssemblyError> {
    accepted(group)?;
    let s = seed::derive(0, &group.group_id);
    let mut distractors = own_options(group).split_off(1);
    distractors.shuffle(&mut seed::rng_for(s, "shuffled"));
    Ok((0..4)
        .map(|pos| {
            let mut panels = distractors.clone();
            panels.insert(pos, PanelRef::correct(&group.group_id, SEQUENCE_LEN - 1));
            let label = LABELS[pos];
            puzzle(group, format!("{}-s{label}", group.group_id), Variant::Shuffled4 { position: label }, panels, Vec::new(), s)
        })
        .collect())
}

/// Index of accepted groups by `(rule id, style)`.
pub type GroupIndex<'a> = BTreeMap<(String, StyleId), &'a ImageGroup>;

pub fn index_groups(groups: &[ImageGroup]) -> GroupIndex<'_> {
    groups
        .iter()
        .filter(|g| accepted(g).is_ok())
        .map(|g| ((g.rule_id.clone(), g.style), g))
        .collect()
}

/// Accepted groups of `group`'s style whose rules are ancestors of its rule,
/// nearest first in breadth-first order over lineage edges.
fn ancestor_groups<'a>(group: &ImageGroup, rules: &BTreeMap<String, Rule>, index: &GroupIndex<'a>) -> Vec<&'a ImageGroup> {
    let mut found = Vec::new();
    let mut seen: HashSet<&str> = HashSet::from([group.rule_id.as_str()]);
    let mut queue: VecDeque<&str> = VecDeque::from([group.rule_id.as_str()]);
    while let Some(id) = queue.pop_front() {
        let Some(rule) = rules.get(id) else { continue };
        for parent in &rule.lineage {
            if !seen.insert(parent.id.as_str()) {
                continue;
            }
            if let Some(g) = index.get(&(parent.id.clone(), group.style)) {
                found.push(*g);
            }
            queue.push_back(parent.id.as_str());
        }
    }
    found
}

/// The two nearest ancestor groups of the same style.
pub fn find_related_groups<'a>(
    group: &ImageGroup,
    rules: &BTreeMap<String, Rule>,
    index: &GroupIndex<'a>,
) -> Result<[&'a ImageGroup; 2], AssemblyError> {
    match ancestor_groups(group, rules, index)[..] {
        [a, b, ..] => Ok([a, b]),
        _ => Err(AssemblyError::InsufficientRelatives(group.group_id.clone())),
    }
}

/// Every possible donor for `group`, best first: ancestor groups as in
/// [`find_related_groups`], then groups of the same rule class, then any
/// other group. All share `group`'s style; the last two tiers come in seeded
/// random order. The second value counts the ancestor groups at the front.
pub fn donor_candidates<'a>(
    group: &ImageGroup,
    rules: &BTreeMap<String, Rule>,
    index: &GroupIndex<'a>,
    rng_seed: u64,
) -> (Vec<&'a ImageGroup>, usize) {
    let mut out = ancestor_groups(group, rules, index);
    let ancestors = out.len();
    let class = rules.get(&group.rule_id).and_then(|r| r.canonical().ok());
    let (mut same, mut other): (Vec<&ImageGroup>, Vec<&ImageGroup>) = index
        .values()
        .copied()
        .filter(|g| g.style == group.style && g.rule_id != group.rule_id && !out.iter().any(|a| a.group_id == g.group_id))
        .partition(|g| rules.get(&g.rule_id).and_then(|r| r.canonical().ok()) == class);
    same.shuffle(&mut seed::rng_for(rng_seed, "fallback"));
    other.shuffle(&mut seed::rng_for(rng_seed, "fallback/any"));
    out.extend(same);
    out.extend(other);
    (out, ancestors)
}

/// Donor pairs tried per ten-option puzzle before giving up.
pub const MAX_DONOR_PAIRS: usize = 32;

/// Index pairs `(0,1), (0,2), (1,2), (0,3), …` over `n` candidates.
fn donor_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n).flat_map(|j| (0..j).map(move |i| (i, j))).take(MAX_DONOR_PAIRS)
}

/// Ten options: the answer, the group's own distractors and three panels from
/// each related group. Donor panels are taken in a seeded order, skipping any
/// that come within `dup_threshold` pHash bits of an option already chosen.
pub fn assemble_expanded(
    group: &ImageGroup,
    related: [&ImageGroup; 2],
    rng_seed: u64,
    dup_threshold: u32,
) -> Result<Puzzle, AssemblyError> {
    accepted(group)?;
    for r in related {
        accepted(r)?;
        if r.group_id == group.group_id {
            return Err(AssemblyError::InsufficientRelatives(group.group_id.clone()));
        }
    }
    if related[0].group_id == related[1].group_id {
        return Err(AssemblyError::InsufficientRelatives(group.group_id.clone()));
    }
    let mut panels = own_options(group);
    let mut hashes = vec![phash(group.answer())];
    hashes.extend(group.incorrect.iter().map(phash));
    let mut rng = seed::rng_for(rng_seed, "expanded");
    for donor in related {
        let mut candidates: Vec<(PanelRef, &ImageBuf)> = (0..SEQUENCE_LEN)
            .map(|i| (PanelRef::correct(&donor.group_id, i), &donor.correct[i]))
            .chain((0..DISTRACTORS).map(|i| (PanelRef::incorrect(&donor.group_id, i), &donor.incorrect[i])))
            .collect();
        candidates.shuffle(&mut rng);
        let mut taken = 0;
        for (r, img) in candidates {
            let h = phash(img);
            if hashes.iter().all(|&k| hamming(k, h) >= dup_threshold) {
                hashes.push(h);
                panels.push(r);
                taken += 1;
                if taken == 3 {
                    break;
                }
            }
        }
        if taken < 3 {
            return Err(AssemblyError::DuplicateOption(group.group_id.clone()));
        }
    }
    panels.shuffle(&mut rng);
    let donors = related.iter().map(|g| g.group_id.clone()).collect();
    Ok(puzzle(group, format!("{}-x", group.group_id), Variant::Expanded10, panels, donors, rng_seed))
}

/// Renders the puzzle sheet: the four stem panels and a question-mark cell
/// on top, options below with their labels drawn under each panel.
pub fn compose_sheet(
    puzzle: &Puzzle,
    groups: &BTreeMap<String, ImageGroup>,
    layout: &SheetLayout,
) -> Result<ImageBuf, AssemblyError> {
    let get = |r: &PanelRef| r.resolve(groups).ok_or_else(|| AssemblyError::MissingPanel(r.to_string()));
    let first = get(&puzzle.stem[0])?;
    let size = first.width();
    let geo = SheetGeometry::new(size, puzzle.options.len(), layout);
    let mut img = ImageBuf::filled(geo.width, geo.height, [255, 255, 255]);
    let question = sheet::question_mark_cell(size);
    for i in 0..5u32 {
        let (x, y) = geo.stem_cell(i, layout);
        let panel = match puzzle.stem.get(i as usize) {
            Some(r) => get(r)?,
            None => &question,
        };
        img.blit(panel, x, y);
        sheet::frame(&mut img, x, y, size, layout);
    }
    let n = puzzle.options.len() as u32;
    for (i, opt) in puzzle.options.iter().enumerate() {
        let (x, y) = geo.option_cell(i as u32, n, layout);
        img.blit(get(&opt.panel)?, x, y);
        sheet::frame(&mut img, x, y, size, layout);
        let s = geo.label_scale;
        let lx = x + (size - sheet::GLYPH_W * s) / 2;
        let ly = y + size + (geo.label_band - sheet::GLYPH_H * s) / 2;
        sheet::draw_glyph(&mut img, opt.label, lx, ly, s, [0, 0, 0]);
    }
    Ok(img)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedSkip {
    pub group_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssemblyOutput {
    pub puzzles: Vec<Puzzle>,
    pub expanded_skips: Vec<ExpandedSkip>,
    /// Groups whose ten-option puzzle used a donor outside its lineage.
    pub fallbacks: Vec<String>,
}

/// Assembles every accepted group. Rejected groups are ignored.
pub fn assemble_all(
    groups: &[ImageGroup],
    rules: &BTreeMap<String, Rule>,
    assembly_seed: u64,
    dup_threshold: u32,
) -> AssemblyOutput {
    let index = index_groups(groups);
    let accepted: Vec<&ImageGroup> = groups.iter().filter(|g| accepted(g).is_ok()).collect();
    let per_group = crate::par::map(&accepted, |g| {
        let s = group_seed(assembly_seed, &g.group_id);
        let mut puzzles = vec![assemble_default(g, s).expect("accepted")];
        puzzles.extend(assemble_shuffled(g).expect("accepted"));
        let (candidates, ancestors) = donor_candidates(g, rules, &index, s);
        let mut last = AssemblyError::InsufficientRelatives(g.group_id.clone());
        for (i, j) in donor_pairs(candidates.len()) {
            match assemble_expanded(g, [candidates[i], candidates[j]], s, dup_threshold) {
                Ok(p) => {
                    puzzles.push(p);
                    return (puzzles, None, j >= ancestors);
                }
                Err(e) => last = e,
            }
        }
        (puzzles, Some(ExpandedSkip { group_id: g.group_id.clone(), reason: last.to_string() }), false)
    });
    let mut out = AssemblyOutput::default();
    for ((puzzles, skip, fallback), g) in per_group.into_iter().zip(&accepted) {
        out.puzzles.extend(puzzles);
        out.expanded_skips.extend(skip);
        if fallback {
            out.fallbacks.push(g.group_id.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qc::QcVerdict;
    use crate::rule::{Operator, Parent, ReasoningStyle, RuleClass, VisualPattern};

    /// A group whose panels are distinct stripe patterns keyed by `k`.
    pub(crate) fn synthetic_group(rule_id: &str, style: StyleId, k: u32) -> ImageGroup {
        let panel = |i: u32| {
            let period = 2 + (k * 8 + i) % 29;
            let phase = (k * 3 + i * 7) % period;
            ImageBuf::from_fn(32, 32, move |x, y| {
                let on = if (k + i).is_multiple_of(2) { (x + phase) % period < period / 2 } else { (y + 2 * x + phase) % period < period / 2 };
                if on { [0, 0, 0] } else { [255, 255, 255] }
            })
        };
        ImageGroup {
            group_id: crate::render::group_id(rule_id, style),
            rule_id: rule_id.to_string(),
            style,
            correct: (0..5).map(panel).collect(),
            incorrect: (5..8).map(panel).collect(),
            qc: Some(QcVerdict::from_reasons(Vec::new())),
        }
    }

    fn rules_with_lineage() -> BTreeMap<String, Rule> {
        let class = RuleClass::new(VisualPattern::HorizontalSquare, ReasoningStyle::Deductive);
        let mk = |id: &str, parents: &[&str]| Rule {
            id: id.to_string(),
            class,
            bullets: vec![],
            generation: if parents.is_empty() { 0 } else { 1 },
            lineage: parents.iter().map(|p| Parent { id: p.to_string(), op: Operator::Crossover }).collect(),
            scores: None,
            program: None,
        };
        [mk("ra", &[]), mk("rb", &[]), mk("rc", &["ra", "rb"]), mk("rd", &["rc"]), mk("lone", &[])]
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect()
    }

    #[test]
    fn default_puzzle_has_one_correct_option() {
        let g = synthetic_group("r1", StyleId::MonochromeVector, 1);
        let p = assemble_default(&g, 7).unwrap();
        assert_eq!(p.options.len(), 4);
        assert_eq!(p.answer_panel(), Some(&PanelRef::correct(&g.group_id, 4)));
        assert_eq!(p, assemble_default(&g, 7).unwrap());
        let mut rejected = g.clone();
        rejected.qc = None;
        assert!(matches!(assemble_default(&rejected, 7), Err(AssemblyError::RejectedGroup(_))));
    }

    #[test]
    fn shuffled_answers_cover_abcd() {
        let g = synthetic_group("r1", StyleId::FreePalette, 2);
        let ps = assemble_shuffled(&g).unwrap();
        let answers: Vec<char> = ps.iter().map(|p| p.answer).collect();
        assert_eq!(answers, ['A', 'B', 'C', 'D']);
        assert!(ps.iter().all(|p| p.stem == ps[0].stem));
        let distractor_order = |p: &Puzzle| -> Vec<PanelRef> {
            p.options.iter().filter(|o| o.label != p.answer).map(|o| o.panel.clone()).collect()
        };
        assert!(ps.iter().all(|p| distractor_order(p) == distractor_order(&ps[0])));
    }

    #[test]
    fn related_groups_follow_lineage() {
        let rules = rules_with_lineage();
        let groups: Vec<ImageGroup> = ["ra", "rb", "rc", "rd", "lone"]
            .iter()
            .enumerate()
            .flat_map(|(k, r)| {
                [StyleId::MonochromeVector, StyleId::FreePalette].map(|s| synthetic_group(r, s, k as u32 * 2 + s.index() as u32))
            })
            .collect();
        let index = index_groups(&groups);
        let rc = groups.iter().find(|g| g.rule_id == "rc" && g.style == StyleId::FreePalette).unwrap();
        let rel = find_related_groups(rc, &rules, &index).unwrap();
        assert_eq!([rel[0].rule_id.as_str(), rel[1].rule_id.as_str()], ["ra", "rb"]);
        assert!(rel.iter().all(|g| g.style == StyleId::FreePalette));
        let rd = groups.iter().find(|g| g.rule_id == "rd" && g.style == StyleId::MonochromeVector).unwrap();
        let rel = find_related_groups(rd, &rules, &index).unwrap();
        assert_eq!([rel[0].rule_id.as_str(), rel[1].rule_id.as_str()], ["rc", "ra"]);
        let lone = groups.iter().find(|g| g.rule_id == "lone").unwrap();
        assert!(matches!(find_related_groups(lone, &rules, &index), Err(AssemblyError::InsufficientRelatives(_))));
        let (fb, ancestors) = donor_candidates(lone, &rules, &index, 3);
        assert_eq!(ancestors, 0);
        assert_eq!(fb.len(), 4);
        assert!(fb.iter().all(|g| g.style == lone.style && g.rule_id != "lone"));
        let (c, ancestors) = donor_candidates(rd, &rules, &index, 3);
        assert_eq!(ancestors, 3);
        assert_eq!([c[0].rule_id.as_str(), c[1].rule_id.as_str(), c[2].rule_id.as_str()], ["rc", "ra", "rb"]);
    }

    #[test]
    fn expanded_and_assemble_all() {
        let rules = rules_with_lineage();
        let groups: Vec<ImageGroup> =
            ["ra", "rb", "rc"].iter().enumerate().map(|(k, r)| synthetic_group(r, StyleId::MonochromeVector, k as u32)).collect();
        let out = assemble_all(&groups, &rules, 9, 10);
        let expanded: Vec<&Puzzle> = out.puzzles.iter().filter(|p| p.variant == Variant::Expanded10).collect();
        assert_eq!(expanded.len(), 3);
        assert_eq!(out.puzzles.len(), 18);
        for p in &expanded {
            assert_eq!(p.options.len(), 10);
            assert_eq!(p.donors.len(), 2);
            assert_eq!(p.answer_panel(), Some(&PanelRef::correct(&p.group_id, 4)));
        }
        assert_eq!(out.fallbacks.len(), 2);
    }

    #[test]
    fn sheet_is_deterministic_and_sized() {
        let g = synthetic_group("r1", StyleId::MonochromeVector, 4);
        let groups: BTreeMap<String, ImageGroup> = [(g.group_id.clone(), g.clone())].into();
        let p = assemble_default(&g, 1).unwrap();
        let layout = SheetLayout::default();
        let a = compose_sheet(&p, &groups, &layout).unwrap();
        let geo = SheetGeometry::new(32, 4, &layout);
        assert_eq!((a.width(), a.height()), (geo.width, geo.height));
        assert_eq!(a, compose_sheet(&p, &groups, &layout).unwrap());
        assert!(matches!(compose_sheet(&p, &BTreeMap::new(), &layout), Err(AssemblyError::MissingPanel(_))));
    }
}
