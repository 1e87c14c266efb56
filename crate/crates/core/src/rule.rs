//! Rule genomes and the rule taxonomy.
//!
//! A rule is a short list of bullet statements describing a visual
//! regularity. Rules are tagged along two axes (visual pattern and reasoning
//! style) which collapse onto eight canonical classes; each canonical class
//! gets its own island during evolution.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_BULLETS: usize = 4;
pub const MAX_BULLETS: usize = 6;
/// Bullets must have strictly fewer words than this.
pub const WORD_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualPattern {
    NineSquareGrid,
    HorizontalSquare,
    Analogy,
    TwoGroup,
    Others,
}

impl VisualPattern {
    pub const ALL: [VisualPattern; 5] = [
        VisualPattern::NineSquareGrid,
        VisualPattern::HorizontalSquare,
        VisualPattern::Analogy,
        VisualPattern::TwoGroup,
        VisualPattern::Others,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningStyle {
    Deductive,
    Inductive,
    Others,
}

impl ReasoningStyle {
    pub const ALL: [ReasoningStyle; 3] =
        [ReasoningStyle::Deductive, ReasoningStyle::Inductive, ReasoningStyle::Others];
}

/// Raw two-axis tag carried by a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleClass {
    pub visual: VisualPattern,
    pub reasoning: ReasoningStyle,
}

impl RuleClass {
    pub fn new(visual: VisualPattern, reasoning: ReasoningStyle) -> Self {
        Self { visual, reasoning }
    }

    pub fn canonical(&self) -> Result<CanonicalClass, ClassError> {
        canonical_class(self.visual, self.reasoning)
    }
}

/// The eight island classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalClass {
    HorizontalSquareDeductive,
    HorizontalSquareInductive,
    NineSquareGridDeductive,
    NineSquareGridInductive,
    AnalogyDeductive,
    AnalogyInductive,
    TwoGroupInductive,
    Others,
}

impl CanonicalClass {
    pub const ALL: [CanonicalClass; 8] = [
        CanonicalClass::HorizontalSquareDeductive,
        CanonicalClass::HorizontalSquareInductive,
        CanonicalClass::NineSquareGridDeductive,
        CanonicalClass::NineSquareGridInductive,
        CanonicalClass::AnalogyDeductive,
        CanonicalClass::AnalogyInductive,
        CanonicalClass::TwoGroupInductive,
        CanonicalClass::Others,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            CanonicalClass::HorizontalSquareDeductive => "hsq/ded",
            CanonicalClass::HorizontalSquareInductive => "hsq/ind",
            CanonicalClass::NineSquareGridDeductive => "grid/ded",
            CanonicalClass::NineSquareGridInductive => "grid/ind",
            CanonicalClass::AnalogyDeductive => "ana/ded",
            CanonicalClass::AnalogyInductive => "ana/ind",
            CanonicalClass::TwoGroupInductive => "two/ind",
            CanonicalClass::Others => "others",
        }
    }

    /// A raw tag pair that maps onto this class.
    pub fn representative(&self) -> RuleClass {
        use ReasoningStyle as R;
        use VisualPattern as V;
        let (v, r) = match self {
            CanonicalClass::HorizontalSquareDeductive => (V::HorizontalSquare, R::Deductive),
            CanonicalClass::HorizontalSquareInductive => (V::HorizontalSquare, R::Inductive),
            CanonicalClass::NineSquareGridDeductive => (V::NineSquareGrid, R::Deductive),
            CanonicalClass::NineSquareGridInductive => (V::NineSquareGrid, R::Inductive),
            CanonicalClass::AnalogyDeductive => (V::Analogy, R::Deductive),
            CanonicalClass::AnalogyInductive => (V::Analogy, R::Inductive),
            CanonicalClass::TwoGroupInductive => (V::TwoGroup, R::Inductive),
            CanonicalClass::Others => (V::Others, R::Others),
        };
        RuleClass::new(v, r)
    }

    pub fn visual(&self) -> VisualPattern {
        self.representative().visual
    }
}

impl fmt::Display for CanonicalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassError {
    #[error("invalid class combination {visual:?}/{reasoning:?}")]
    InvalidCombination { visual: VisualPattern, reasoning: ReasoningStyle },
}

/// Collapses a raw tag pair onto one of the eight canonical classes.
///
/// Any `Others` on either axis maps to [`CanonicalClass::Others`]; two-group
/// layouts only exist with inductive reasoning.
pub fn canonical_class(
    visual: VisualPattern,
    reasoning: ReasoningStyle,
) -> Result<CanonicalClass, ClassError> {
    use CanonicalClass as C;
    use ReasoningStyle as R;
    use VisualPattern as V;
    Ok(match (visual, reasoning) {
        (V::Others, _) | (_, R::Others) => C::Others,
        (V::HorizontalSquare, R::Deductive) => C::HorizontalSquareDeductive,
        (V::HorizontalSquare, R::Inductive) => C::HorizontalSquareInductive,
        (V::NineSquareGrid, R::Deductive) => C::NineSquareGridDeductive,
        (V::NineSquareGrid, R::Inductive) => C::NineSquareGridInductive,
        (V::Analogy, R::Deductive) => C::AnalogyDeductive,
        (V::Analogy, R::Inductive) => C::AnalogyInductive,
        (V::TwoGroup, R::Inductive) => C::TwoGroupInductive,
        (V::TwoGroup, R::Deductive) => {
            return Err(ClassError::InvalidCombination { visual, reasoning })
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Seed,
    Mutation,
    Crossover,
    Migration,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parent {
    pub id: String,
    pub op: Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub format: u8,
    pub content: u8,
    pub feasibility: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("score component {name} = {value} outside [1, 5]")]
pub struct ScoreRangeError {
    pub name: &'static str,
    pub value: u8,
}

impl ScoreTriple {
    pub fn new(format: u8, content: u8, feasibility: u8) -> Result<Self, ScoreRangeError> {
        for (name, value) in [("format", format), ("content", content), ("feasibility", feasibility)] {
            if !(1..=5).contains(&value) {
                return Err(ScoreRangeError { name, value });
            }
        }
        Ok(Self { format, content, feasibility })
    }

    pub fn total(&self) -> u32 {
        u32::from(self.format) + u32::from(self.content) + u32::from(self.feasibility)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: String,
    pub class: RuleClass,
    pub bullets: Vec<String>,
    pub generation: u32,
    #[serde(default)]
    pub lineage: Vec<Parent>,
    #[serde(default)]
    pub scores: Option<ScoreTriple>,
    /// Rule-program source text, when one has been attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<String>,
}

impl Rule {
    /// A generation-0 rule with a content-addressed id.
    pub fn seed(class: RuleClass, bullets: Vec<String>) -> Self {
        let id = rule_id(&class, &bullets);
        Self { id, class, bullets, generation: 0, lineage: Vec::new(), scores: None, program: None }
    }

    pub fn with_lineage(
        class: RuleClass,
        bullets: Vec<String>,
        generation: u32,
        lineage: Vec<Parent>,
    ) -> Self {
        let id = rule_id(&class, &bullets);
        Self { id, class, bullets, generation, lineage, scores: None, program: None }
    }

    pub fn canonical(&self) -> Result<CanonicalClass, ClassError> {
        self.class.canonical()
    }

    /// Bullets rendered as `- item` lines, the format used in prompts.
    pub fn bullet_block(&self) -> String {
        bullet_block(&self.bullets)
    }
}

pub fn bullet_block(bullets: &[String]) -> String {
    bullets.iter().map(|b| format!("- {b}")).collect::<Vec<_>>().join("\n")
}

/// Content address: first 16 hex digits of SHA-256 over the canonical class
/// tag and the bullets, newline separated. Invalid class pairs hash their raw
/// tags so that malformed records still get a stable id.
pub fn rule_id(class: &RuleClass, bullets: &[String]) -> String {
    let tag = match class.canonical() {
        Ok(c) => c.tag().to_string(),
        Err(_) => format!("{:?}/{:?}", class.visual, class.reasoning),
    };
    let mut text = tag;
    for b in bullets {
        text.push('\n');
        text.push_str(b.trim());
    }
    crate::seed::sha256_hex(text.as_bytes())[..16].to_string()
}

/// Whitespace tokens that contain at least one alphanumeric character.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().filter(|tok| tok.chars().any(char::is_alphanumeric)).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    BulletCountBelow { count: usize },
    BulletCountAbove { count: usize },
    EmptyBullet { index: usize },
    BulletTooLong { index: usize, words: usize },
    InvalidClass,
    SeedHasLineage,
    MissingLineage,
    ParentCount { op: Operator, expected: usize, found: usize },
    IdMismatch { expected: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BulletCountBelow { count } => {
                write!(f, "bullet count below {MIN_BULLETS} ({count})")
            }
            Violation::BulletCountAbove { count } => {
                write!(f, "bullet count above {MAX_BULLETS} ({count})")
            }
            Violation::EmptyBullet { index } => write!(f, "bullet {index} is empty"),
            Violation::BulletTooLong { index, words } => {
                write!(f, "bullet exceeds word limit (bullet {index}: {words} words)")
            }
            Violation::InvalidClass => f.write_str("invalid class combination"),
            Violation::SeedHasLineage => f.write_str("generation 0 rule carries lineage"),
            Violation::MissingLineage => f.write_str("evolved rule has no lineage"),
            Violation::ParentCount { op, expected, found } => {
                write!(f, "{op:?} rule needs {expected} parent(s), found {found}")
            }
            Violation::IdMismatch { expected } => write!(f, "id does not match content ({expected})"),
        }
    }
}

impl Violation {
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Violation::BulletCountBelow { .. }
                | Violation::BulletCountAbove { .. }
                | Violation::EmptyBullet { .. }
                | Violation::BulletTooLong { .. }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural constraint and reports all failures.
pub fn validate_rule(rule: &Rule) -> ValidationReport {
    let mut violations = Vec::new();
    let n = rule.bullets.len();
    if n < MIN_BULLETS {
        violations.push(Violation::BulletCountBelow { count: n });
    }
    if n > MAX_BULLETS {
        violations.push(Violation::BulletCountAbove { count: n });
    }
    for (index, bullet) in rule.bullets.iter().enumerate() {
        let words = word_count(bullet);
        if words == 0 {
            violations.push(Violation::EmptyBullet { index });
        } else if words >= WORD_LIMIT {
            violations.push(Violation::BulletTooLong { index, words });
        }
    }
    if rule.class.canonical().is_err() {
        violations.push(Violation::InvalidClass);
    }
    if rule.generation == 0 {
        if !rule.lineage.is_empty() {
            violations.push(Violation::SeedHasLineage);
        }
    } else if rule.lineage.is_empty() {
        violations.push(Violation::MissingLineage);
    } else {
        let op = rule.lineage[0].op;
        let expected = match op {
            Operator::Mutation => Some(1),
            Operator::Crossover => Some(2),
            _ => None,
        };
        if let Some(expected) = expected {
            let found = rule.lineage.iter().filter(|p| p.op == op).count();
            if found != expected || rule.lineage.len() != expected {
                violations.push(Violation::ParentCount { op, expected, found: rule.lineage.len() });
            }
        }
    }
    let expected = rule_id(&rule.class, &rule.bullets);
    if rule.id != expected {
        violations.push(Violation::IdMismatch { expected });
    }
    ValidationReport { violations }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub fn write_jsonl<T: Serialize, W: Write>(mut out: W, items: &[T]) -> Result<(), JsonlError> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| JsonlError::Parse { line: 0, source: e })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(input: R) -> Result<Vec<T>, JsonlError> {
    let mut items = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| JsonlError::Parse { line: i + 1, source: e })?;
        items.push(item);
    }
    Ok(items)
}
