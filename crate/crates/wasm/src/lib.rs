//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Three operations are exported: rendering a rule program into an image
//! strip, listing its per-panel attribute values, and composing a default
//! four-option puzzle sheet.

use std::collections::BTreeMap;

use vlsynth::assembly::{assemble_default, compose_sheet, SheetLayout};
use vlsynth::dsl::{parse_rule_program, progression_values, Attribute, SEQUENCE_LEN};
use vlsynth::qc::{qc_group, QcConfig};
use vlsynth::render::{render_group, ImageGroup, RenderConfig, StyleId};
use vlsynth::ImageBuf;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

fn group(source: &str, style: &str, seed: u64, panel_size: u32) -> Result<ImageGroup, String> {
    let program = parse_rule_program(source).map_err(err)?;
    let style: StyleId = style.parse().map_err(err)?;
    let cfg = RenderConfig { panel_size, ..RenderConfig::default() };
    render_group("demo", &program, style, seed, &cfg).map_err(err)
}

fn strip_png(source: &str, style: &str, seed: u64, panel_size: u32) -> Result<Vec<u8>, String> {
    let g = group(source, style, seed, panel_size)?;
    let gap = 4;
    let mut strip = ImageBuf::filled(8 * panel_size + 7 * gap, panel_size, [220, 220, 220]);
    for (i, panel) in g.panels().enumerate() {
        strip.blit(panel, i as u32 * (panel_size + gap), 0);
    }
    strip.encode_png().map_err(err)
}

fn describe(source: &str) -> Result<String, String> {
    let program = parse_rule_program(source).map_err(err)?;
    let mut out = BTreeMap::new();
    for p in &program.progressions {
        let values = progression_values(p, SEQUENCE_LEN).map_err(err)?;
        let rendered: Vec<serde_json::Value> = values
            .iter()
            .map(|v| match p.attribute {
                Attribute::Position => serde_json::json!([v.point().0, v.point().1]),
                _ => serde_json::json!(v.scalar()),
            })
            .collect();
        out.insert(p.attribute.keyword(), rendered);
    }
    let recipes: Vec<&str> = program.distractor_recipes().iter().map(|r| r.keyword()).collect();
    Ok(serde_json::json!({ "values": out, "distractors": recipes }).to_string())
}

fn puzzle(source: &str, style: &str, seed: u64, panel_size: u32) -> Result<PuzzleSheet, String> {
    let mut g = group(source, style, seed, panel_size)?;
    let verdict = qc_group(&g, &QcConfig::default());
    let accepted = verdict.accepted;
    g.qc = Some(vlsynth::qc::QcVerdict::from_reasons(Vec::new()));
    let puzzle = assemble_default(&g, seed).map_err(err)?;
    let groups = BTreeMap::from([(g.group_id.clone(), g)]);
    let sheet = compose_sheet(&puzzle, &groups, &SheetLayout::default()).map_err(err)?;
    Ok(PuzzleSheet { png: sheet.encode_png().map_err(err)?, answer: puzzle.answer.to_string(), accepted })
}

/// PNG of the eight panels side by side: five correct, then three distractors.
#[wasm_bindgen]
pub fn render_strip(source: &str, style: &str, seed: u64, panel_size: u32) -> Result<Vec<u8>, JsError> {
    strip_png(source, style, seed, panel_size).map_err(js)
}

/// JSON object mapping each governed attribute to its five scheduled values.
#[wasm_bindgen]
pub fn describe_program(source: &str) -> Result<String, JsError> {
    describe(source).map_err(js)
}

#[wasm_bindgen]
pub struct PuzzleSheet {
    png: Vec<u8>,
    answer: String,
    accepted: bool,
}

#[wasm_bindgen]
impl PuzzleSheet {
    #[wasm_bindgen(getter)]
    pub fn png(&self) -> Vec<u8> {
        self.png.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn answer(&self) -> String {
        self.answer.clone()
    }

    /// Whether the group passed quality control.
    #[wasm_bindgen(getter)]
    pub fn accepted(&self) -> bool {
        self.accepted
    }
}

/// Composes a four-option puzzle. Groups failing QC are still shown, with
/// `accepted` set to false.
#[wasm_bindgen]
pub fn compose_puzzle(source: &str, style: &str, seed: u64, panel_size: u32) -> Result<PuzzleSheet, JsError> {
    puzzle(source, style, seed, panel_size).map_err(js)
}
