//! The controlled vocabulary used by the stub transformer. Each bullet falls
//! into one category; semantic categories map onto rule-program statements,
//! so a bullet list can be translated into a program by pattern matching.

use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Category {
    Layout,
    Entity,
    Count,
    Lines,
    Rotation,
    Position,
    Shading,
    Violations,
    Flavor,
}

const PROGRESSIONS: [Category; 5] =
    [Category::Count, Category::Lines, Category::Rotation, Category::Position, Category::Shading];

struct Patterns {
    layout: Vec<(Regex, &'static str)>,
    entity: Regex,
    count_step: Regex,
    count_scale: Regex,
    lines_step: Regex,
    rotation_step: Regex,
    rotation_flip: Regex,
    drift: Regex,
    shading_step: Regex,
    shading_toggle: Regex,
    recipes: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(&format!("(?i){s}")).expect("static pattern");
        Patterns {
            layout: vec![
                (re(r"row of five"), "seq5"),
                (re(r"nine-square grid"), "grid3x3"),
                (re(r"\banalogy\b"), "analogy"),
                (re(r"two groups"), "twogroup"),
            ],
            entity: re(r"\b(small|medium|large) (solid|hollow) (circles|squares|triangles|line groups|stick figures|dials)\b"),
            count_step: re(r"\bcount (grows|shrinks) by (\d+) each panel, starting from (\d+)"),
            count_scale: re(r"\bcount (doubles|triples) every (\d+) panels?, starting from (\d+)"),
            lines_step: re(r"parallel line groups (grows|shrinks) by (\d+) each panel, starting from (\d+)"),
            rotation_step: re(r"\brotates (\d+) degrees (clockwise|counterclockwise) each panel"),
            rotation_flip: re(r"\bflips upside down every panel"),
            drift: re(r"\bdrifts (\d+) (left|right|up|down)(?: and (\d+) (left|right|up|down))? each panel"),
            shading_step: re(r"\bshading (darkens|lightens) by (0?\.\d+) each panel, starting from ([01](?:\.\d+)?)"),
            shading_toggle: re(r"\bshading alternates between (0?\.\d+) and"),
            recipes: re(
                r"\b(change the count|turn the figure wrongly|misplace the figure|change the shading|change the line groups|flip the fill|swap the order)\b",
            ),
        }
    })
}

pub(crate) fn classify(bullet: &str) -> Category {
    let p = patterns();
    if p.recipes.is_match(bullet) {
        Category::Violations
    } else if p.count_step.is_match(bullet) || p.count_scale.is_match(bullet) {
        Category::Count
    } else if p.lines_step.is_match(bullet) {
        Category::Lines
    } else if p.rotation_step.is_match(bullet) || p.rotation_flip.is_match(bullet) {
        Category::Rotation
    } else if p.drift.is_match(bullet) {
        Category::Position
    } else if p.shading_step.is_match(bullet) || p.shading_toggle.is_match(bullet) {
        Category::Shading
    } else if p.entity.is_match(bullet) {
        Category::Entity
    } else if p.layout.iter().any(|(r, _)| r.is_match(bullet)) {
        Category::Layout
    } else {
        Category::Flavor
    }
}

fn progression_statement(bullet: &str) -> Option<(Category, String)> {
    let p = patterns();
    let num = |s: &str| s.parse::<f64>().unwrap_or(0.0);
    if let Some(c) = p.count_step.captures(bullet) {
        let sign = if &c[1].to_ascii_lowercase() == "shrinks" { "-" } else { "" };
        return Some((Category::Count, format!("progress count arithmetic {sign}{} start {};", &c[2], &c[3])));
    }
    if let Some(c) = p.count_scale.captures(bullet) {
        let factor = if &c[1].to_ascii_lowercase() == "doubles" { 2 } else { 3 };
        return Some((Category::Count, format!("progress count geometric x{factor} every {} start {};", &c[2], &c[3])));
    }
    if let Some(c) = p.lines_step.captures(bullet) {
        let sign = if &c[1].to_ascii_lowercase() == "shrinks" { "-" } else { "" };
        return Some((
            Category::Lines,
            format!("progress parallel_line_groups arithmetic {sign}{} start {};", &c[2], &c[3]),
        ));
    }
    if let Some(c) = p.rotation_step.captures(bullet) {
        let sign = if &c[2].to_ascii_lowercase() == "counterclockwise" { "-" } else { "" };
        return Some((Category::Rotation, format!("progress rotation_deg arithmetic {sign}{} start 0;", &c[1])));
    }
    if p.rotation_flip.is_match(bullet) {
        return Some((Category::Rotation, "progress rotation_deg toggle start 0;".to_string()));
    }
    if let Some(c) = p.drift.captures(bullet) {
        let mut d = (0.0, 0.0);
        for (amount, dir) in [(c.get(1), c.get(2)), (c.get(3), c.get(4))] {
            if let (Some(a), Some(dir)) = (amount, dir) {
                let a = num(a.as_str());
                match dir.as_str().to_ascii_lowercase().as_str() {
                    "left" => d.0 -= a,
                    "right" => d.0 += a,
                    "up" => d.1 -= a,
                    _ => d.1 += a,
                }
            }
        }
        // Start two steps back so the path is centred on the panel.
        return Some((
            Category::Position,
            format!("progress position shift {} {} start {} {};", d.0, d.1, -2.0 * d.0, -2.0 * d.1),
        ));
    }
    if let Some(c) = p.shading_step.captures(bullet) {
        let sign = if &c[1].to_ascii_lowercase() == "lightens" { "-" } else { "" };
        return Some((
            Category::Shading,
            format!("progress shading arithmetic {sign}{} start {};", num(&c[2]), num(&c[3])),
        ));
    }
    if let Some(c) = p.shading_toggle.captures(bullet) {
        return Some((Category::Shading, format!("progress shading toggle start {};", num(&c[1]))));
    }
    None
}

fn recipe_keyword(phrase: &str) -> &'static str {
    match phrase.to_ascii_lowercase().as_str() {
        "change the count" => "count_off",
        "turn the figure wrongly" => "rotation_off",
        "misplace the figure" => "position_off",
        "change the shading" => "shading_off",
        "change the line groups" => "lines_off",
        "flip the fill" => "wrong_fill",
        _ => "order_swap",
    }
}

fn recipe_phrase(keyword: &str) -> &'static str {
    match keyword {
        "count_off" => "change the count",
        "rotation_off" => "turn the figure wrongly",
        "position_off" => "misplace the figure",
        "shading_off" => "change the shading",
        "lines_off" => "change the line groups",
        "wrong_fill" => "flip the fill",
        _ => "swap the order",
    }
}

fn entity_keyword(plural: &str) -> &'static str {
    match plural.to_ascii_lowercase().as_str() {
        "circles" => "circle",
        "squares" => "square",
        "triangles" => "triangle",
        "line groups" => "line_group",
        "stick figures" => "stick_figure",
        _ => "composite",
    }
}

/// Translates bullets into rule-program text by matching the vocabulary.
/// The first layout and entity mentions win, each attribute keeps its first
/// progression, and every distractor phrase becomes a `violate` statement.
/// Missing pieces are simply left out, so the result may fail to parse.
pub fn synthesize_program(bullets: &[String]) -> String {
    let p = patterns();
    let mut layout = None;
    let mut entity = None;
    let mut progressions: Vec<(Category, String)> = Vec::new();
    let mut violations = Vec::new();
    for b in bullets {
        if layout.is_none() {
            layout = p.layout.iter().find(|(r, _)| r.is_match(b)).map(|(_, k)| *k);
        }
        if entity.is_none() {
            entity = p.entity.captures(b).map(|c| {
                format!("entity {} {} {};", entity_keyword(&c[3]), c[1].to_ascii_lowercase(), c[2].to_ascii_lowercase())
            });
        }
        if let Some((cat, stmt)) = progression_statement(b) {
            if !progressions.iter().any(|(c, _)| *c == cat) {
                progressions.push((cat, stmt));
            }
        }
        violations.extend(p.recipes.find_iter(b).map(|m| recipe_keyword(m.as_str())));
    }
    let mut out = String::new();
    if let Some(l) = layout {
        out.push_str(&format!("layout {l};\n"));
    }
    if let Some(e) = entity {
        out.push_str(&e);
        out.push('\n');
    }
    for (_, stmt) in &progressions {
        out.push_str(stmt);
        out.push('\n');
    }
    for v in violations {
        out.push_str(&format!("violate {v};\n"));
    }
    out
}

const FLAVOR: [&str; 12] = [
    "The background stays plain white.",
    "No text appears inside any panel.",
    "Figures never overlap one another.",
    "Every panel uses the same frame size.",
    "The answer continues the visible trend.",
    "Strokes keep a uniform width throughout.",
    "Only the stated attributes change between panels.",
    "Spacing stays even around each figure.",
    "The pattern reads from left to right.",
    "Panel borders stay thin and unobtrusive.",
    "Each change is easy to spot at a glance.",
    "The sequence has a single consistent answer.",
];

fn layout_phrase(rng: &mut impl Rng) -> String {
    [
        "Panels form a horizontal row of five squares.",
        "The puzzle is a horizontal row of five panels.",
        "Panels fill a nine-square grid read row by row.",
        "The row pairs figures as an analogy between panels.",
        "Panels split into two groups sharing one rule.",
    ]
    .choose(rng)
    .expect("non-empty")
    .to_string()
}

fn entity_phrase(rng: &mut impl Rng) -> String {
    let size = *["small", "medium", "large"].choose(rng).expect("non-empty");
    let fill = *["solid", "solid", "hollow"].choose(rng).expect("non-empty");
    let kind = *["circles", "squares", "triangles", "line groups", "stick figures", "dials"].choose(rng).expect("non-empty");
    let lead = *["Each panel shows", "Figures are drawn as", "The panels contain"].choose(rng).expect("non-empty");
    format!("{lead} {size} {fill} {kind}.")
}

fn progression_phrase(cat: Category, rng: &mut impl Rng) -> String {
    match cat {
        Category::Count => match rng.random_range(0..4) {
            0 => format!("The count grows by 1 each panel, starting from {}.", rng.random_range(1..=3)),
            1 => "The count shrinks by 1 each panel, starting from 5.".to_string(),
            2 => "The count doubles every 2 panels, starting from 1.".to_string(),
            _ => format!("The count {} every 2 panels, starting from 1.", ["doubles", "triples"].choose(rng).expect("non-empty")),
        },
        Category::Lines => format!(
            "The number of parallel line groups grows by 1 each panel, starting from {}.",
            rng.random_range(0..=1)
        ),
        Category::Rotation => {
            if rng.random_bool(0.15) {
                "The figure flips upside down every panel.".to_string()
            } else {
                format!(
                    "The figure rotates {} degrees {} each panel.",
                    [30, 40, 45, 60, 72].choose(rng).expect("non-empty"),
                    ["clockwise", "counterclockwise"].choose(rng).expect("non-empty")
                )
            }
        }
        Category::Position => {
            let h = rng.random_range(3..=6);
            let dir = *["left", "right"].choose(rng).expect("non-empty");
            if rng.random_bool(0.5) {
                format!("The figure drifts {h} {dir} each panel.")
            } else {
                let v = rng.random_range(2..=4);
                format!("The figure drifts {h} {dir} and {v} {} each panel.", ["up", "down"].choose(rng).expect("non-empty"))
            }
        }
        Category::Shading => match rng.random_range(0..3) {
            0 => format!("The shading darkens by 0.2 each panel, starting from {}.", ["0.1", "0.2"].choose(rng).expect("non-empty")),
            1 => "The shading lightens by 0.2 each panel, starting from 1.".to_string(),
            _ => "The shading alternates between 0.2 and 0.8 each panel.".to_string(),
        },
        _ => FLAVOR.choose(rng).expect("non-empty").to_string(),
    }
}

fn violation_phrase(context: &[String], rng: &mut impl Rng) -> String {
    let mut pool: Vec<&str> = Vec::new();
    for b in context {
        match classify(b) {
            Category::Count => pool.push("count_off"),
            Category::Lines => pool.push("lines_off"),
            Category::Rotation => pool.push("rotation_off"),
            Category::Position => pool.push("position_off"),
            Category::Shading => pool.push("shading_off"),
            _ => {}
        }
    }
    pool.extend(["wrong_fill", "order_swap"]);
    let mut picked: Vec<&str> = Vec::new();
    while picked.len() < 3 {
        let remaining: Vec<&str> = pool.iter().copied().filter(|k| !picked.contains(k)).collect();
        let next = if remaining.is_empty() { *pool.choose(rng).expect("non-empty") } else { *remaining.choose(rng).expect("non-empty") };
        picked.push(next);
    }
    let lead = *["Wrong options", "Distractors", "Incorrect panels"].choose(rng).expect("non-empty");
    format!(
        "{lead} {}, {} or {}.",
        recipe_phrase(picked[0]),
        recipe_phrase(picked[1]),
        recipe_phrase(picked[2])
    )
}

/// A fresh bullet of the same category, different from the input.
pub(crate) fn rewrite(bullet: &str, context: &[String], rng: &mut impl Rng) -> String {
    let cat = classify(bullet);
    for _ in 0..16 {
        let candidate = generate(cat, context, rng);
        if candidate != bullet {
            return candidate;
        }
    }
    FLAVOR.iter().find(|f| **f != bullet).expect("flavor pool has alternatives").to_string()
}

pub(crate) fn generate(cat: Category, context: &[String], rng: &mut impl Rng) -> String {
    match cat {
        Category::Layout => layout_phrase(rng),
        Category::Entity => entity_phrase(rng),
        Category::Violations => violation_phrase(context, rng),
        c => progression_phrase(c, rng),
    }
}

/// A bullet to insert: a flavor line or a progression for an attribute the
/// rule does not yet govern.
pub(crate) fn addition(context: &[String], rng: &mut impl Rng) -> String {
    let used: Vec<Category> = context.iter().map(|b| classify(b)).collect();
    let open: Vec<Category> = PROGRESSIONS.iter().copied().filter(|c| !used.contains(c)).collect();
    if open.is_empty() || rng.random_bool(0.5) {
        let fresh: Vec<&str> = FLAVOR.iter().copied().filter(|f| !context.iter().any(|b| b == f)).collect();
        return fresh.choose(rng).unwrap_or(&FLAVOR[0]).to_string();
    }
    progression_phrase(*open.choose(rng).expect("non-empty"), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_rule_program;

    fn bullets(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn doubling_rule_translates() {
        let b = bullets(&[
            "Panels form a horizontal row of five squares.",
            "Each panel shows small solid circles.",
            "The count doubles every 2 panels, starting from 1.",
            "Wrong options change the count, flip the fill or swap the order.",
            "The background stays plain white.",
        ]);
        let text = synthesize_program(&b);
        let program = parse_rule_program(&text).unwrap();
        assert_eq!(
            program,
            parse_rule_program("layout seq5; entity circle small solid; progress count geometric x2 every 2 start 1; violate count_off; violate wrong_fill; violate order_swap;").unwrap()
        );
    }

    #[test]
    fn drift_and_rotation() {
        let b = bullets(&[
            "The puzzle is a horizontal row of five panels.",
            "Figures are drawn as large hollow dials.",
            "The figure rotates 45 degrees counterclockwise each panel.",
            "The figure drifts 4 left and 2 up each panel.",
            "Distractors turn the figure wrongly, misplace the figure or flip the fill.",
        ]);
        let text = synthesize_program(&b);
        assert!(text.contains("progress rotation_deg arithmetic -45 start 0;"), "{text}");
        assert!(text.contains("progress position shift -4 -2 start 8 4;"), "{text}");
        parse_rule_program(&text).unwrap();
    }

    #[test]
    fn generated_phrases_classify_back() {
        let mut rng = crate::seed::rng(3);
        let ctx = bullets(&["The count grows by 1 each panel, starting from 1."]);
        for cat in [
            Category::Layout,
            Category::Entity,
            Category::Count,
            Category::Lines,
            Category::Rotation,
            Category::Position,
            Category::Shading,
            Category::Violations,
            Category::Flavor,
        ] {
            for _ in 0..20 {
                let phrase = generate(cat, &ctx, &mut rng);
                assert_eq!(classify(&phrase), cat, "{phrase}");
                assert!(crate::rule::word_count(&phrase) < crate::rule::WORD_LIMIT);
            }
        }
    }

    #[test]
    fn missing_layout_leaves_program_unparseable() {
        let b = bullets(&["Each panel shows small solid circles.", "The background stays plain white."]);
        assert!(parse_rule_program(&synthesize_program(&b)).is_err());
    }
}
