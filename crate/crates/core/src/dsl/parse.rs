use std::fmt;

use thiserror::Error;

use super::{
    Attribute, AttributeProgression, EntityKind, EntitySpec, Fill, Layout, RuleProgram, Schedule,
    SizeClass, StartValue, ViolationRecipe,
};

/// First syntax violation. Positions are 1-based; errors at end of input
/// point one column past the last character.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Number(f64),
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut column) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, column);
        if c == '\n' {
            i += 1;
            line += 1;
            column = 1;
        } else if c.is_whitespace() {
            i += 1;
            column += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
                column += 1;
            }
        } else if c == ';' {
            out.push(Spanned { tok: Tok::Semi, line, column });
            i += 1;
            column += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            column += i - start;
            let word: String = chars[start..i].iter().collect();
            out.push(Spanned { tok: Tok::Word(word), line: start_line, column: start_col });
        } else if c.is_ascii_digit() || ((c == '-' || c == '+') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '.')) || c == '.' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == 'e' || chars[i] == 'E'
                || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E')))
            {
                i += 1;
            }
            column += i - start;
            let lexeme: String = chars[start..i].iter().collect();
            let value: f64 = lexeme.parse().map_err(|_| ParseError {
                line: start_line,
                column: start_col,
                expected: "number".into(),
                found: format!("`{lexeme}`"),
            })?;
            if !value.is_finite() {
                return Err(ParseError {
                    line: start_line,
                    column: start_col,
                    expected: "finite number".into(),
                    found: format!("`{lexeme}`"),
                });
            }
            out.push(Spanned { tok: Tok::Number(value), line: start_line, column: start_col });
        } else {
            return Err(ParseError {
                line,
                column,
                expected: "word, number or `;`".into(),
                found: format!("`{c}`"),
            });
        }
    }
    out.push(Spanned { tok: Tok::Eof, line, column });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, t: &Spanned, expected: impl Into<String>) -> ParseError {
        ParseError { line: t.line, column: t.column, expected: expected.into(), found: t.tok.to_string() }
    }

    fn expect_semi(&mut self) -> Result<(), ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Semi => Ok(()),
            _ => Err(self.error_at(&t, "`;`")),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Number(n) => Ok(n),
            _ => Err(self.error_at(&t, what)),
        }
    }

    fn keyword<T: Copy>(&mut self, what: &str, table: &[(&str, T)]) -> Result<T, ParseError> {
        let t = self.bump();
        if let Tok::Word(w) = &t.tok {
            if let Some((_, v)) = table.iter().find(|(k, _)| k == w) {
                return Ok(*v);
            }
        }
        let names: Vec<&str> = table.iter().map(|(k, _)| *k).collect();
        Err(self.error_at(&t, format!("{what} ({})", names.join("|"))))
    }

    fn peek_word(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Word(w) if w == word)
    }

    fn entity(&mut self) -> Result<EntitySpec, ParseError> {
        let kind = self.keyword("entity kind", &ENTITY_KINDS)?;
        let mut size = SizeClass::Medium;
        let mut fill = Fill::Solid;
        if let Tok::Word(w) = &self.peek().tok {
            if let Some((_, s)) = SIZES.iter().find(|(k, _)| k == w) {
                size = *s;
                self.bump();
            }
        }
        if let Tok::Word(w) = &self.peek().tok {
            if let Some((_, f)) = FILLS.iter().find(|(k, _)| k == w) {
                fill = *f;
                self.bump();
            }
        }
        self.expect_semi()?;
        Ok(EntitySpec { kind, size, fill })
    }

    fn schedule(&mut self) -> Result<Schedule, ParseError> {
        let t = self.bump();
        let name = match &t.tok {
            Tok::Word(w) => w.clone(),
            _ => return Err(self.error_at(&t, "schedule (arithmetic|geometric|toggle|shift)")),
        };
        match name.as_str() {
            "arithmetic" => Ok(Schedule::Arithmetic { step: self.number("step")? }),
            "geometric" => {
                let factor = self.factor()?;
                let mut every_k = 1;
                if self.peek_word("every") {
                    self.bump();
                    let t = self.peek().clone();
                    let k = self.number("integer ≥ 1")?;
                    if k < 1.0 || k.fract() != 0.0 || k > f64::from(u32::MAX) {
                        return Err(self.error_at(&t, "integer ≥ 1"));
                    }
                    every_k = k as u32;
                }
                Ok(Schedule::Geometric { factor, every_k })
            }
            "toggle" => Ok(Schedule::Toggle),
            "shift" => {
                let dx = self.number("dx")?;
                let dy = self.number("dy")?;
                Ok(Schedule::Shift { dx, dy })
            }
            _ => Err(self.error_at(&t, "schedule (arithmetic|geometric|toggle|shift)")),
        }
    }

    /// `x2`, `x1.5`, or `x 2`.
    fn factor(&mut self) -> Result<f64, ParseError> {
        let t = self.bump();
        match &t.tok {
            Tok::Word(w) if w == "x" => self.number("factor"),
            Tok::Word(w) if w.starts_with('x') => {
                w[1..].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.error_at(&t, "factor `x<number>`"))
            }
            _ => Err(self.error_at(&t, "factor `x<number>`")),
        }
    }

    fn progress(&mut self) -> Result<AttributeProgression, ParseError> {
        let attribute = self.keyword("attribute", &ATTRIBUTES)?;
        let schedule = self.schedule()?;
        let t = self.bump();
        if !matches!(&t.tok, Tok::Word(w) if w == "start") {
            return Err(self.error_at(&t, "`start`"));
        }
        let first = self.number("start value")?;
        let start = if let Tok::Number(second) = self.peek().tok {
            self.bump();
            StartValue::Point(first, second)
        } else {
            StartValue::Scalar(first)
        };
        self.expect_semi()?;
        Ok(AttributeProgression { attribute, schedule, start })
    }
}

const LAYOUTS: [(&str, Layout); 4] = [
    ("seq5", Layout::Sequence5),
    ("grid3x3", Layout::Grid3x3),
    ("analogy", Layout::AnalogyPair),
    ("twogroup", Layout::TwoGroupSplit),
];

const ENTITY_KINDS: [(&str, EntityKind); 6] = [
    ("circle", EntityKind::Circle),
    ("square", EntityKind::Square),
    ("triangle", EntityKind::Triangle),
    ("line_group", EntityKind::LineGroup),
    ("stick_figure", EntityKind::StickFigure),
    ("composite", EntityKind::Composite),
];

const SIZES: [(&str, SizeClass); 3] =
    [("small", SizeClass::Small), ("medium", SizeClass::Medium), ("large", SizeClass::Large)];

const FILLS: [(&str, Fill); 2] = [("solid", Fill::Solid), ("hollow", Fill::Hollow)];

const ATTRIBUTES: [(&str, Attribute); 7] = [
    ("count", Attribute::Count),
    ("rotation_deg", Attribute::RotationDeg),
    ("rotation", Attribute::RotationDeg),
    ("position", Attribute::Position),
    ("shading", Attribute::Shading),
    ("parallel_line_groups", Attribute::ParallelLineGroups),
    ("lines", Attribute::ParallelLineGroups),
];

const RECIPES: [(&str, ViolationRecipe); 7] = [
    ("count_off", ViolationRecipe::CountOff),
    ("rotation_off", ViolationRecipe::RotationOff),
    ("position_off", ViolationRecipe::PositionOff),
    ("shading_off", ViolationRecipe::ShadingOff),
    ("lines_off", ViolationRecipe::LinesOff),
    ("wrong_fill", ViolationRecipe::WrongFill),
    ("order_swap", ViolationRecipe::OrderSwap),
];

/// Syntax-only parse. Missing `layout`/`entity` statements are reported as
/// parse errors at end of input; everything else semantic is left to
/// [`super::check`].
pub fn parse_syntax(text: &str) -> Result<RuleProgram, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let mut layout = None;
    let mut entity = None;
    let mut progressions = Vec::new();
    let mut violations = Vec::new();
    let mut statements = 0;
    loop {
        let t = p.bump();
        let word = match &t.tok {
            Tok::Eof if statements > 0 => break,
            Tok::Word(w) => w.clone(),
            _ => return Err(p.error_at(&t, "statement (layout|entity|progress|violate)")),
        };
        match word.as_str() {
            "layout" => {
                let l = p.keyword("layout", &LAYOUTS)?;
                p.expect_semi()?;
                if layout.replace(l).is_some() {
                    return Err(p.error_at(&t, "a single `layout` statement"));
                }
            }
            "entity" => {
                let e = p.entity()?;
                if entity.replace(e).is_some() {
                    return Err(p.error_at(&t, "a single `entity` statement"));
                }
            }
            "progress" => progressions.push(p.progress()?),
            "violate" => {
                violations.push(p.keyword("violation recipe", &RECIPES)?);
                p.expect_semi()?;
            }
            _ => return Err(p.error_at(&t, "statement (layout|entity|progress|violate)")),
        }
        statements += 1;
    }
    let end = p.peek().clone();
    let layout = layout.ok_or_else(|| p.error_at(&end, "`layout` statement"))?;
    let entity = entity.ok_or_else(|| p.error_at(&end, "`entity` statement"))?;
    Ok(RuleProgram { layout, entity, progressions, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_positions() {
        let e = parse_syntax("layout seq5;\nentity blob solid;").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        assert!(e.expected.starts_with("entity kind"));

        let e = parse_syntax("layout seq5").unwrap_err();
        assert_eq!((e.line, e.column), (1, 12));
        assert_eq!(e.found, "end of input");

        let e = parse_syntax("layout seq5; @").unwrap_err();
        assert_eq!((e.line, e.column), (1, 14));

        let e = parse_syntax("   # only a comment\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 1));
    }

    #[test]
    fn missing_entity_reported_at_end() {
        let e = parse_syntax("layout seq5;").unwrap_err();
        assert_eq!(e.expected, "`entity` statement");
    }

    #[test]
    fn factor_forms_and_aliases() {
        let a = parse_syntax("layout seq5; entity circle; progress count geometric x 2 every 2 start 1;").unwrap();
        let b = parse_syntax("layout seq5; entity circle; progress count geometric x2.0 every 2 start 1;").unwrap();
        assert_eq!(a, b);
        let c = parse_syntax("layout seq5; entity composite; progress rotation arithmetic -90 start 0;").unwrap();
        assert_eq!(c.progressions[0].attribute, Attribute::RotationDeg);
        assert_eq!(c.progressions[0].schedule, Schedule::Arithmetic { step: -90.0 });
    }

    #[test]
    fn every_must_be_positive_integer() {
        assert!(parse_syntax("layout seq5; entity circle; progress count geometric x2 every 0 start 1;").is_err());
        assert!(parse_syntax("layout seq5; entity circle; progress count geometric x2 every 1.5 start 1;").is_err());
    }

    #[test]
    fn position_start_is_a_point() {
        let p = parse_syntax("layout seq5; entity square small hollow; progress position shift -12 0 start 24 -6;").unwrap();
        assert_eq!(p.progressions[0].start, StartValue::Point(24.0, -6.0));
        assert_eq!(p.entity.fill, Fill::Hollow);
        assert_eq!(p.entity.size, SizeClass::Small);
    }
}
