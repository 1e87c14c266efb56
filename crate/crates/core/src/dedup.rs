//! Rule-level deduplication in embedding space and rubric filtering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, Attribute, Layout, RuleProgram};
use crate::rule::{validate_rule, Rule, ScoreTriple, VisualPattern, Violation};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DedupError {
    #[error("vector {id} has dimension {found}, expected {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("vector {id} has zero norm or non-finite entries")]
    Degenerate { id: String },
    #[error("nearest neighbours need at least two vectors")]
    TooFew,
    #[error("rule {0} has no score")]
    MissingScore(String),
}

/// A unit-normalized embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
    /// Norm of the raw vector before normalization.
    pub norm: f64,
}

impl EmbeddingVector {
    pub fn new(id: impl Into<String>, raw: Vec<f64>) -> Result<Self, DedupError> {
        let id = id.into();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(DedupError::Degenerate { id });
        }
        Ok(Self { id, values: raw.iter().map(|v| v / norm).collect(), norm })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_dims(pool: &[EmbeddingVector]) -> Result<(), DedupError> {
    if let Some(first) = pool.first() {
        for v in pool {
            if v.dim() != first.dim() {
                return Err(DedupError::DimensionMismatch { id: v.id.clone(), expected: first.dim(), found: v.dim() });
            }
        }
    }
    Ok(())
}

/// Exact nearest-neighbour distance of each member to any other member.
///
/// Points are sorted by their first coordinate and each scan stops once the
/// coordinate gap alone exceeds the best distance found so far.
pub fn nn_distances(pool: &[EmbeddingVector]) -> Result<Vec<(String, f64)>, DedupError> {
    if pool.len() < 2 {
        return Err(DedupError::TooFew);
    }
    check_dims(pool)?;
    let key = |i: usize| pool[i].values.first().copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    let mut rank = vec![0; pool.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let best = crate::par::map_indexed(pool.len(), |i| {
        let r = rank[i];
        let mut best = f64::INFINITY;
        let mut scan = |range: &mut dyn Iterator<Item = usize>| {
            for s in range {
                let j = order[s];
                if (key(j) - key(i)).abs() > best {
                    break;
                }
                best = best.min(distance(&pool[i].values, &pool[j].values));
            }
        };
        scan(&mut (r + 1..order.len()));
        scan(&mut (0..r).rev());
        best
    });
    Ok(pool.iter().zip(best).map(|(v, d)| (v.id.clone(), d)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removed {
    pub id: String,
    pub nearest: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub kept: Vec<String>,
    pub removed: Vec<Removed>,
    pub threshold: f64,
}

/// Greedy pass in rule-id order: a vector is removed when it lies strictly
/// closer than `threshold` to a vector already kept.
pub fn dedup(pool: &[EmbeddingVector], threshold: f64) -> Result<DedupReport, DedupError> {
    check_dims(pool)?;
    let mut order: Vec<&EmbeddingVector> = pool.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut kept: Vec<&EmbeddingVector> = Vec::new();
    let mut removed = Vec::new();
    for v in order {
        let nearest = kept
            .iter()
            .map(|k| (k, distance(&k.values, &v.values)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((k, d)) if d < threshold => removed.push(Removed { id: v.id.clone(), nearest: k.id.clone(), distance: d }),
            _ => kept.push(v),
        }
    }
    Ok(DedupReport { kept: kept.into_iter().map(|k| k.id.clone()).collect(), removed, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RubricThresholds {
    /// Retained rules score strictly above this total.
    pub min_total_exclusive: u32,
    pub min_feasibility: u8,
}

impl Default for RubricThresholds {
    fn default() -> Self {
        Self { min_total_exclusive: 12, min_feasibility: 3 }
    }
}

pub fn passes(score: &ScoreTriple, t: &RubricThresholds) -> bool {
    score.total() > t.min_total_exclusive && score.feasibility >= t.min_feasibility
}

pub fn filter_by_score(pool: &[Rule], t: &RubricThresholds) -> Result<Vec<Rule>, DedupError> {
    let mut out = Vec::new();
    for rule in pool {
        let score = rule.scores.ok_or_else(|| DedupError::MissingScore(rule.id.clone()))?;
        if passes(&score, t) {
            out.push(rule.clone());
        }
    }
    Ok(out)
}

fn expected_layout(visual: VisualPattern) -> Option<Layout> {
    match visual {
        VisualPattern::HorizontalSquare => Some(Layout::Sequence5),
        VisualPattern::NineSquareGrid => Some(Layout::Grid3x3),
        VisualPattern::Analogy => Some(Layout::AnalogyPair),
        VisualPattern::TwoGroup => Some(Layout::TwoGroupSplit),
        VisualPattern::Others => None,
    }
}

fn attribute_words(a: Attribute) -> &'static [&'static str] {
    match a {
        Attribute::Count => &["count", "number", "how many"],
        Attribute::RotationDeg => &["rotat", "turn", "flip", "degree", "clockwise", "orient"],
        Attribute::Position => &["drift", "move", "shift", "position", "left", "right"],
        Attribute::Shading => &["shad", "dark", "light", "grey", "gray"],
        Attribute::ParallelLineGroups => &["line"],
    }
}

/// Content deductions for a parsed program against its bullets.
fn content_score(rule: &Rule, program: &RuleProgram) -> u8 {
    let mut score: i32 = 5;
    if let Some(layout) = expected_layout(rule.class.visual) {
        if program.layout != layout {
            score -= 1;
        }
    }
    let text = rule.bullets.join(" ").to_lowercase();
    let unmentioned = program
        .progressions
        .iter()
        .any(|p| !attribute_words(p.attribute).iter().any(|w| text.contains(w)));
    if unmentioned {
        score -= 1;
    }
    let recipes = program.distractor_recipes();
    if recipes.iter().enumerate().any(|(i, r)| recipes[..i].contains(r)) {
        score -= 1;
    }
    score.max(1) as u8
}

/// Deterministic rubric: format from structural violations (a bullet-count
/// violation costs 2, any other violation 1), feasibility from parsing and
/// checking the program, content from consistency between program and rule.
pub fn rubric_score_dsl(rule: &Rule) -> ScoreTriple {
    let report = validate_rule(rule);
    let mut format: i32 = 5;
    for v in &report.violations {
        format -= match v {
            Violation::BulletCountBelow { .. } | Violation::BulletCountAbove { .. } => 2,
            _ => 1,
        };
    }
    let format = format.max(1) as u8;
    let (feasibility, content) = match rule.program.as_deref().map(dsl::parse_rule_program) {
        Some(Ok(program)) => {
            let clean = dsl::check(&program).map(|w| w.is_empty()).unwrap_or(false);
            (if clean { 5 } else { 3 }, content_score(rule, &program))
        }
        _ => (1, 1),
    };
    ScoreTriple::new(format, content, feasibility).expect("rubric components lie in [1, 5]")
}
