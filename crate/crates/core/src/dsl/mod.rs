//! Rule programs: the executable counterpart of a rule's bullets.
//!
//! A program is a sequence of `;`-terminated statements (grammar in
//! `docs/rule-dsl.md`):
//!
//! ```text
//! layout seq5;
//! entity circle medium solid;
//! progress count geometric x2 every 2 start 1;
//! violate count_off;
//! violate wrong_fill;
//! violate order_swap;
//! ```
//!
//! [`parse_rule_program`] returns an AST that has passed the semantic checks
//! in [`check`]. The `Display` impl prints the canonical form, which parses
//! back to an identical AST.

mod parse;
mod progression;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_syntax, ParseError};
pub use progression::{progression_values, AttrValue, DomainError};

/// Panels in the rule-conforming sequence.
pub const SEQUENCE_LEN: usize = 5;
/// Distractor panels per group.
pub const DISTRACTORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Sequence5,
    Grid3x3,
    AnalogyPair,
    TwoGroupSplit,
}

impl Layout {
    pub const ALL: [Layout; 4] =
        [Layout::Sequence5, Layout::Grid3x3, Layout::AnalogyPair, Layout::TwoGroupSplit];

    pub fn keyword(&self) -> &'static str {
        match self {
            Layout::Sequence5 => "seq5",
            Layout::Grid3x3 => "grid3x3",
            Layout::AnalogyPair => "analogy",
            Layout::TwoGroupSplit => "twogroup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Circle,
    Square,
    Triangle,
    LineGroup,
    StickFigure,
    Composite,
}

impl EntityKind {
    pub const ALL: [EntityKind; 6] = [
        EntityKind::Circle,
        EntityKind::Square,
        EntityKind::Triangle,
        EntityKind::LineGroup,
        EntityKind::StickFigure,
        EntityKind::Composite,
    ];

    pub fn keyword(&self) -> &'static str {
        match self {
            EntityKind::Circle => "circle",
            EntityKind::Square => "square",
            EntityKind::Triangle => "triangle",
            EntityKind::LineGroup => "line_group",
            EntityKind::StickFigure => "stick_figure",
            EntityKind::Composite => "composite",
        }
    }

    /// Connected components one entity contributes to a binarised panel.
    pub fn components(&self) -> usize {
        match self {
            EntityKind::LineGroup => 3,
            _ => 1,
        }
    }

    /// Smallest rotation mapping the shape onto itself; 0 means every
    /// rotation does (circles).
    pub fn symmetry_deg(&self) -> f64 {
        match self {
            EntityKind::Circle => 0.0,
            EntityKind::Square => 90.0,
            EntityKind::Triangle => 120.0,
            EntityKind::LineGroup => 180.0,
            EntityKind::StickFigure | EntityKind::Composite => 360.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Small, SizeClass::Medium, SizeClass::Large];

    pub fn keyword(&self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    /// Entity extent as a fraction of its layout cell.
    pub fn fraction(&self) -> f64 {
        match self {
            SizeClass::Small => 0.45,
            SizeClass::Medium => 0.65,
            SizeClass::Large => 0.85,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    Solid,
    Hollow,
}

impl Fill {
    pub fn keyword(&self) -> &'static str {
        match self {
            Fill::Solid => "solid",
            Fill::Hollow => "hollow",
        }
    }

    pub fn flipped(&self) -> Fill {
        match self {
            Fill::Solid => Fill::Hollow,
            Fill::Hollow => Fill::Solid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpec {
    pub kind: EntityKind,
    pub size: SizeClass,
    pub fill: Fill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Count,
    RotationDeg,
    Position,
    Shading,
    ParallelLineGroups,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Count,
        Attribute::RotationDeg,
        Attribute::Position,
        Attribute::Shading,
        Attribute::ParallelLineGroups,
    ];

    pub fn keyword(&self) -> &'static str {
        match self {
            Attribute::Count => "count",
            Attribute::RotationDeg => "rotation_deg",
            Attribute::Position => "position",
            Attribute::Shading => "shading",
            Attribute::ParallelLineGroups => "parallel_line_groups",
        }
    }

    pub fn is_integral(&self) -> bool {
        matches!(self, Attribute::Count | Attribute::ParallelLineGroups)
    }

    fn accepts(&self, schedule: &Schedule) -> bool {
        use Attribute as A;
        use Schedule as S;
        matches!(
            (self, schedule),
            (A::Count | A::ParallelLineGroups, S::Arithmetic { .. } | S::Geometric { .. })
                | (A::RotationDeg, S::Arithmetic { .. } | S::Toggle)
                | (A::Position, S::Shift { .. })
                | (A::Shading, S::Arithmetic { .. } | S::Geometric { .. } | S::Toggle)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    Arithmetic { step: f64 },
    Geometric { factor: f64, every_k: u32 },
    Toggle,
    Shift { dx: f64, dy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartValue {
    Scalar(f64),
    Point(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeProgression {
    pub attribute: Attribute,
    pub schedule: Schedule,
    pub start: StartValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationRecipe {
    CountOff,
    RotationOff,
    PositionOff,
    ShadingOff,
    LinesOff,
    WrongFill,
    OrderSwap,
}

impl ViolationRecipe {
    pub const ALL: [ViolationRecipe; 7] = [
        ViolationRecipe::CountOff,
        ViolationRecipe::RotationOff,
        ViolationRecipe::PositionOff,
        ViolationRecipe::ShadingOff,
        ViolationRecipe::LinesOff,
        ViolationRecipe::WrongFill,
        ViolationRecipe::OrderSwap,
    ];

    pub fn keyword(&self) -> &'static str {
        match self {
            ViolationRecipe::CountOff => "count_off",
            ViolationRecipe::RotationOff => "rotation_off",
            ViolationRecipe::PositionOff => "position_off",
            ViolationRecipe::ShadingOff => "shading_off",
            ViolationRecipe::LinesOff => "lines_off",
            ViolationRecipe::WrongFill => "wrong_fill",
            ViolationRecipe::OrderSwap => "order_swap",
        }
    }

    /// The attribute a recipe perturbs. `WrongFill` targets the entity fill,
    /// which every program declares; `OrderSwap` targets the first progression.
    pub fn target(&self) -> RecipeTarget {
        match self {
            ViolationRecipe::CountOff => RecipeTarget::Attribute(Attribute::Count),
            ViolationRecipe::RotationOff => RecipeTarget::Attribute(Attribute::RotationDeg),
            ViolationRecipe::PositionOff => RecipeTarget::Attribute(Attribute::Position),
            ViolationRecipe::ShadingOff => RecipeTarget::Attribute(Attribute::Shading),
            ViolationRecipe::LinesOff => RecipeTarget::Attribute(Attribute::ParallelLineGroups),
            ViolationRecipe::WrongFill => RecipeTarget::Fill,
            ViolationRecipe::OrderSwap => RecipeTarget::FirstProgression,
        }
    }

    pub fn for_attribute(attribute: Attribute) -> ViolationRecipe {
        match attribute {
            Attribute::Count => ViolationRecipe::CountOff,
            Attribute::RotationDeg => ViolationRecipe::RotationOff,
            Attribute::Position => ViolationRecipe::PositionOff,
            Attribute::Shading => ViolationRecipe::ShadingOff,
            Attribute::ParallelLineGroups => ViolationRecipe::LinesOff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecipeTarget {
    Attribute(Attribute),
    Fill,
    FirstProgression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleProgram {
    pub layout: Layout,
    pub entity: EntitySpec,
    pub progressions: Vec<AttributeProgression>,
    pub violations: Vec<ViolationRecipe>,
}

impl RuleProgram {
    pub fn progression(&self, attribute: Attribute) -> Option<&AttributeProgression> {
        self.progressions.iter().find(|p| p.attribute == attribute)
    }

    pub fn governs(&self, attribute: Attribute) -> bool {
        self.progression(attribute).is_some()
    }

    /// The recipes used for the three distractor panels.
    pub fn distractor_recipes(&self) -> &[ViolationRecipe] {
        &self.violations[..self.violations.len().min(DISTRACTORS)]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("missing `layout` statement")]
    MissingLayout,
    #[error("missing `entity` statement")]
    MissingEntity,
    #[error("duplicate `{0}` statement")]
    Duplicate(&'static str),
    #[error("program needs at least one progression")]
    NoProgression,
    #[error("needs ≥ 3 distractor recipes (found {found})")]
    TooFewViolations { found: usize },
    #[error("attribute {0:?} has more than one progression")]
    DuplicateProgression(Attribute),
    #[error("schedule {schedule:?} does not apply to {attribute:?}")]
    ScheduleMismatch { attribute: Attribute, schedule: Schedule },
    #[error("start value {start:?} does not fit {attribute:?}")]
    StartMismatch { attribute: Attribute, start: StartValue },
    #[error("geometric factor must be > 0 (got {0})")]
    NonPositiveFactor(f64),
    #[error("every_k must be ≥ 1")]
    ZeroEvery,
    #[error("recipe {0:?} perturbs an attribute no progression governs")]
    UngovernedRecipe(ViolationRecipe),
    #[error("progression over {SEQUENCE_LEN} panels: {0}")]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    ConstantProgression { attribute: Attribute },
    ExtraViolations { ignored: usize },
    IneffectiveOrderSwap,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("semantic error: {0}")]
    Semantic(#[from] SemanticError),
}

/// Parses and semantically checks a program.
pub fn parse_rule_program(text: &str) -> Result<RuleProgram, DslError> {
    let program = parse_syntax(text)?;
    check(&program)?;
    Ok(program)
}

/// Semantic validation; returns non-fatal warnings on success.
pub fn check(program: &RuleProgram) -> Result<Vec<Warning>, SemanticError> {
    if program.progressions.is_empty() {
        return Err(SemanticError::NoProgression);
    }
    for (i, p) in program.progressions.iter().enumerate() {
        if program.progressions[..i].iter().any(|q| q.attribute == p.attribute) {
            return Err(SemanticError::DuplicateProgression(p.attribute));
        }
        if !p.attribute.accepts(&p.schedule) {
            return Err(SemanticError::ScheduleMismatch { attribute: p.attribute, schedule: p.schedule });
        }
        let point_start = matches!(p.start, StartValue::Point(..));
        if point_start != (p.attribute == Attribute::Position) {
            return Err(SemanticError::StartMismatch { attribute: p.attribute, start: p.start });
        }
        if let Schedule::Geometric { factor, every_k } = p.schedule {
            if !(factor > 0.0) {
                return Err(SemanticError::NonPositiveFactor(factor));
            }
            if every_k == 0 {
                return Err(SemanticError::ZeroEvery);
            }
        }
        progression_values(p, SEQUENCE_LEN)?;
    }
    if program.violations.len() < DISTRACTORS {
        return Err(SemanticError::TooFewViolations { found: program.violations.len() });
    }
    for recipe in &program.violations {
        if let RecipeTarget::Attribute(a) = recipe.target() {
            if !program.governs(a) {
                return Err(SemanticError::UngovernedRecipe(*recipe));
            }
        }
    }

    let mut warnings = Vec::new();
    for p in &program.progressions {
        let values = progression_values(p, SEQUENCE_LEN)?;
        if values.windows(2).all(|w| w[0] == w[1]) {
            warnings.push(Warning::ConstantProgression { attribute: p.attribute });
        }
    }
    if program.violations.len() > DISTRACTORS {
        warnings.push(Warning::ExtraViolations { ignored: program.violations.len() - DISTRACTORS });
    }
    if program.distractor_recipes().contains(&ViolationRecipe::OrderSwap) {
        let values = progression_values(&program.progressions[0], SEQUENCE_LEN)?;
        let last = values[SEQUENCE_LEN - 1];
        if values[..SEQUENCE_LEN - 1].iter().all(|v| *v == last) {
            warnings.push(Warning::IneffectiveOrderSwap);
        }
    }
    Ok(warnings)
}

impl fmt::Display for StartValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StartValue::Scalar(v) => write!(f, "{v}"),
            StartValue::Point(x, y) => write!(f, "{x} {y}"),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Arithmetic { step } => write!(f, "arithmetic {step}"),
            Schedule::Geometric { factor, every_k } => write!(f, "geometric x{factor} every {every_k}"),
            Schedule::Toggle => f.write_str("toggle"),
            Schedule::Shift { dx, dy } => write!(f, "shift {dx} {dy}"),
        }
    }
}

impl fmt::Display for RuleProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "layout {};", self.layout.keyword())?;
        writeln!(
            f,
            "entity {} {} {};",
            self.entity.kind.keyword(),
            self.entity.size.keyword(),
            self.entity.fill.keyword()
        )?;
        for p in &self.progressions {
            writeln!(f, "progress {} {} start {};", p.attribute.keyword(), p.schedule, p.start)?;
        }
        for v in &self.violations {
            writeln!(f, "violate {};", v.keyword())?;
        }
        Ok(())
    }
}
