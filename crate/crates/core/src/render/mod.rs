//! Rule-program interpreter: turns a [`RuleProgram`] into an image group of
//! five rule-conforming panels and three distractors, in one of three styles.
//!
//! Rendering happens in two steps. [`plan_group`] evaluates the program into
//! logical [`PanelState`]s and fixes the scene geometry; the rasterizer then
//! draws each state. Distractor `k` applies violation recipe `k` to the
//! fifth panel's state, picking a value that differs from every correct panel
//! and from the extrapolated sixth step.
//!
//! Units: rotation is in degrees, clockwise on screen (negative values turn
//! counterclockwise). Position is an offset from the panel centre in percent
//! of the panel side, with `y` pointing down. Shading is fill darkness in
//! `[0, 1]` (0 = white interior, 1 = full tone).

mod raster;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{
    progression_values, AttrValue, Attribute, EntityKind, Fill, Layout, RecipeTarget, RuleProgram, ViolationRecipe,
    SEQUENCE_LEN,
};
use crate::image_buf::{ImageBuf, ImageIoError};
use crate::qc::QcVerdict;
use crate::seed;
use raster::{rasterize, sin_cos_deg, Item, Layer, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StyleId {
    /// Greyscale with 4×4 supersampled antialiasing.
    MonochromeVector,
    /// Greyscale, hard edges, one sample per pixel.
    MonochromeRaster,
    /// Coloured fills and outlines on white, antialiased.
    FreePalette,
}

impl StyleId {
    pub const ALL: [StyleId; 3] = [StyleId::MonochromeVector, StyleId::MonochromeRaster, StyleId::FreePalette];

    /// 1-based index used in group ids.
    pub fn index(&self) -> usize {
        match self {
            StyleId::MonochromeVector => 1,
            StyleId::MonochromeRaster => 2,
            StyleId::FreePalette => 3,
        }
    }

    pub fn is_monochrome(&self) -> bool {
        !matches!(self, StyleId::FreePalette)
    }

    fn samples(&self) -> u32 {
        match self {
            StyleId::MonochromeRaster => 1,
            _ => 4,
        }
    }
}

impl std::fmt::Display for StyleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StyleId::MonochromeVector => "monochrome_vector",
            StyleId::MonochromeRaster => "monochrome_raster",
            StyleId::FreePalette => "free_palette",
        })
    }
}

impl std::str::FromStr for StyleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StyleId::ALL.into_iter().find(|st| st.to_string() == s).ok_or_else(|| format!("unknown style `{s}`"))
    }
}

pub fn group_id(rule_id: &str, style: StyleId) -> String {
    format!("{rule_id}-s{}", style.index())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub panel_size: u32,
    /// Blank border on each side, as a fraction of the panel side.
    pub margin: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { panel_size: 256, margin: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("scene leaves the drawable area: {0}")]
    OutOfBounds(String),
    #[error("too many entities for the panel: {0}")]
    TooDense(String),
    #[error("recipe {recipe:?} has no value that breaks the rule here")]
    IneffectiveViolation { recipe: ViolationRecipe },
    #[error("shading progression on a hollow entity has no visible effect")]
    InvisibleShading,
    #[error("program evaluation failed: {0}")]
    Domain(#[from] crate::dsl::DomainError),
}

/// Logical content of one panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelState {
    pub count: u32,
    pub lines: u32,
    pub rotation: f64,
    pub offset: (f64, f64),
    pub shading: f64,
    pub fill: Fill,
}

impl PanelState {
    pub fn get(&self, attribute: Attribute) -> AttrValue {
        match attribute {
            Attribute::Count => AttrValue::Scalar(f64::from(self.count)),
            Attribute::ParallelLineGroups => AttrValue::Scalar(f64::from(self.lines)),
            Attribute::RotationDeg => AttrValue::Scalar(self.rotation),
            Attribute::Position => AttrValue::Point(self.offset.0, self.offset.1),
            Attribute::Shading => AttrValue::Scalar(self.shading),
        }
    }

    fn set(&mut self, attribute: Attribute, value: AttrValue) {
        match attribute {
            Attribute::Count => self.count = value.scalar().round().max(0.0) as u32,
            Attribute::ParallelLineGroups => self.lines = value.scalar().round().max(0.0) as u32,
            Attribute::RotationDeg => self.rotation = value.scalar(),
            Attribute::Position => self.offset = value.point(),
            Attribute::Shading => self.shading = value.scalar(),
        }
    }

    pub fn items(&self) -> u32 {
        self.count + self.lines
    }
}

/// Scene geometry shared by every panel of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub panel_size: u32,
    /// Grid side; 0 means the single entity sits at the panel centre.
    pub grid: u32,
    pub cell: f64,
    /// Circumradius of every drawn item.
    pub half_extent: f64,
    pub stroke: f64,
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    pub correct: Vec<PanelState>,
    pub incorrect: Vec<(ViolationRecipe, PanelState)>,
    pub geometry: Geometry,
}

/// Rotations closer than this (modulo symmetry) count as the same pose.
const ANGLE_EPS: f64 = 10.0;
const SHADING_EPS: f64 = 0.2;
const MIN_EXTENT_PX: f64 = 12.0;
const MIN_LINE_GAP_PX: f64 = 2.0;
const LINE_SPACING: f64 = 0.35;

pub fn plan_group(program: &RuleProgram, cfg: &RenderConfig) -> Result<GroupPlan, RenderError> {
    if program.entity.fill == Fill::Hollow && program.governs(Attribute::Shading) {
        return Err(RenderError::InvisibleShading);
    }
    let base = PanelState {
        count: 1,
        lines: 0,
        rotation: 0.0,
        offset: (0.0, 0.0),
        shading: 1.0,
        fill: program.entity.fill,
    };
    let mut correct = vec![base; SEQUENCE_LEN];
    let mut sixth = Vec::new();
    for p in &program.progressions {
        for (state, v) in correct.iter_mut().zip(progression_values(p, SEQUENCE_LEN)?) {
            state.set(p.attribute, v);
        }
        if let Ok(values) = progression_values(p, SEQUENCE_LEN + 1) {
            sixth.push((p.attribute, values[SEQUENCE_LEN]));
        }
    }

    let mut seen: Vec<ViolationRecipe> = Vec::new();
    let mut incorrect = Vec::new();
    for &recipe in program.distractor_recipes() {
        let k = seen.iter().filter(|r| **r == recipe).count();
        seen.push(recipe);
        let candidates = distractor_candidates(program, recipe, &correct, &sixth);
        let state = *candidates.get(k).ok_or(RenderError::IneffectiveViolation { recipe })?;
        incorrect.push((recipe, state));
    }

    let geometry = geometry(program, cfg, correct.iter().chain(incorrect.iter().map(|(_, s)| s)))?;
    Ok(GroupPlan { correct, incorrect, geometry })
}

fn distractor_candidates(
    program: &RuleProgram,
    recipe: ViolationRecipe,
    correct: &[PanelState],
    sixth: &[(Attribute, AttrValue)],
) -> Vec<PanelState> {
    let last = correct[SEQUENCE_LEN - 1];
    let attr = match recipe.target() {
        RecipeTarget::Attribute(a) => a,
        RecipeTarget::Fill => {
            let mut s = last;
            s.fill = last.fill.flipped();
            let visible = program.entity.kind != EntityKind::LineGroup && last.shading >= SHADING_EPS;
            return if visible { vec![s] } else { Vec::new() };
        }
        RecipeTarget::FirstProgression => {
            let p = &program.progressions[0];
            let values: Vec<AttrValue> = correct.iter().map(|s| s.get(p.attribute)).collect();
            let v5 = values[SEQUENCE_LEN - 1];
            let v4 = values[SEQUENCE_LEN - 2];
            let reversed = match (v4, v5) {
                (AttrValue::Point(x4, y4), AttrValue::Point(x5, y5)) => AttrValue::Point(2.0 * x4 - x5, 2.0 * y4 - y5),
                _ => AttrValue::Scalar(2.0 * v4.scalar() - v5.scalar()),
            };
            let mut out: Vec<PanelState> = Vec::new();
            for v in std::iter::once(reversed).chain(values[..SEQUENCE_LEN - 1].iter().rev().copied()) {
                if !in_domain(p.attribute, v) || same(p.attribute, program.entity.kind, v, v5) {
                    continue;
                }
                let mut s = last;
                s.set(p.attribute, v);
                if !out.contains(&s) {
                    out.push(s);
                }
            }
            return out;
        }
    };

    let mut avoid: Vec<AttrValue> = correct.iter().map(|s| s.get(attr)).collect();
    avoid.extend(sixth.iter().filter(|(a, _)| *a == attr).map(|(_, v)| *v));
    let v5 = last.get(attr);
    let raw: Vec<AttrValue> = match attr {
        Attribute::Count | Attribute::ParallelLineGroups => (1..=8)
            .flat_map(|d| [v5.scalar() + f64::from(d), v5.scalar() - f64::from(d)])
            .map(AttrValue::Scalar)
            .collect(),
        Attribute::RotationDeg => {
            let sym = program.entity.kind.symmetry_deg();
            [1.0 / 2.0, 1.0 / 4.0, 3.0 / 4.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 8.0, 3.0 / 8.0, 5.0 / 8.0, 7.0 / 8.0]
                .iter()
                .map(|f| AttrValue::Scalar(v5.scalar() + f * sym))
                .collect()
        }
        Attribute::Position => {
            let p = program.progression(Attribute::Position).map(|p| p.schedule);
            let (dx, dy) = match p {
                Some(crate::dsl::Schedule::Shift { dx, dy }) => (dx, dy),
                _ => (0.0, 0.0),
            };
            let step = dx.hypot(dy);
            let delta = step.max(8.0);
            let (ux, uy) = if step > 0.0 { (-dy / step, dx / step) } else { (0.0, 1.0) };
            let (x, y) = v5.point();
            [(ux, uy), (-ux, -uy), (0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)]
                .iter()
                .map(|(a, b)| AttrValue::Point(x + a * delta, y + b * delta))
                .collect()
        }
        Attribute::Shading => {
            let s = v5.scalar();
            [1.0 - s, s + 0.5, s - 0.5, 0.0, 1.0, 0.5, 0.25, 0.75].iter().map(|v| AttrValue::Scalar(*v)).collect()
        }
    };
    let mut out: Vec<PanelState> = Vec::new();
    for v in raw {
        if !in_domain(attr, v) || avoid.iter().any(|a| same(attr, program.entity.kind, v, *a)) {
            continue;
        }
        let mut s = last;
        s.set(attr, v);
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

fn in_domain(attr: Attribute, v: AttrValue) -> bool {
    match attr {
        Attribute::Count => v.scalar() >= 1.0,
        Attribute::ParallelLineGroups => v.scalar() >= 0.0,
        Attribute::Shading => (0.0..=1.0).contains(&v.scalar()),
        Attribute::RotationDeg | Attribute::Position => true,
    }
}

/// Whether two attribute values would read as the same thing on a panel.
fn same(attr: Attribute, kind: EntityKind, a: AttrValue, b: AttrValue) -> bool {
    match attr {
        Attribute::Count | Attribute::ParallelLineGroups => a.scalar().round() == b.scalar().round(),
        Attribute::RotationDeg => {
            let sym = kind.symmetry_deg();
            if sym == 0.0 {
                return true;
            }
            let d = (a.scalar() - b.scalar()).rem_euclid(sym);
            d.min(sym - d) < ANGLE_EPS.min(sym / 8.0)
        }
        Attribute::Position => {
            let (ax, ay) = a.point();
            let (bx, by) = b.point();
            (ax - bx).hypot(ay - by) < 4.0
        }
        Attribute::Shading => (a.scalar() - b.scalar()).abs() < SHADING_EPS,
    }
}

fn geometry<'a>(
    program: &RuleProgram,
    cfg: &RenderConfig,
    states: impl Iterator<Item = &'a PanelState> + Clone,
) -> Result<Geometry, RenderError> {
    let size = f64::from(cfg.panel_size);
    let drawable = size * (1.0 - 2.0 * cfg.margin);
    let reach = states
        .clone()
        .map(|s| (s.offset.0.abs().max(s.offset.1.abs())) / 100.0 * size)
        .fold(0.0, f64::max);
    let region = drawable - 2.0 * reach;
    if region < MIN_EXTENT_PX {
        return Err(RenderError::OutOfBounds(format!(
            "offsets reach {reach:.1}px but the drawable half-width is {:.1}px",
            drawable / 2.0
        )));
    }
    let gridded = program.governs(Attribute::Count) || program.governs(Attribute::ParallelLineGroups);
    let max_items = states.map(PanelState::items).max().unwrap_or(1).max(1);
    let grid = if !gridded {
        0
    } else if program.layout == Layout::Grid3x3 {
        if max_items > 9 {
            return Err(RenderError::TooDense(format!("{max_items} entities exceed the 3x3 grid")));
        }
        3
    } else {
        (f64::from(max_items).sqrt().ceil()) as u32
    };
    let cell = region / f64::from(grid.max(1));
    let extent = program.entity.size.fraction() * cell;
    let half_extent = extent / 2.0;
    let stroke = (size / 64.0).min(extent / 10.0).max(1.5);
    let jitter = if grid == 0 || program.layout == Layout::Grid3x3 { 0.0 } else { cell / 2.0 - half_extent - 1.5 };
    if extent < MIN_EXTENT_PX || jitter < 0.0 {
        return Err(RenderError::TooDense(format!("{max_items} entities leave {extent:.1}px per entity")));
    }
    let needs_lines = program.entity.kind == EntityKind::LineGroup || program.governs(Attribute::ParallelLineGroups);
    if needs_lines && LINE_SPACING * half_extent - stroke < MIN_LINE_GAP_PX {
        return Err(RenderError::TooDense("parallel lines would merge".into()));
    }
    Ok(Geometry { panel_size: cfg.panel_size, grid, cell, half_extent, stroke, jitter })
}

struct Palette {
    fill: [u8; 3],
    outline: [u8; 3],
}

/// Colour pairs for the free-palette style: fill luma ≤ 150, outline luma ≤ 80.
pub const PALETTE: [([u8; 3], [u8; 3]); 6] = [
    ([220, 60, 60], [90, 20, 20]),
    ([40, 120, 200], [10, 40, 90]),
    ([40, 160, 80], [10, 70, 30]),
    ([220, 130, 20], [110, 60, 0]),
    ([150, 70, 190], [60, 20, 80]),
    ([30, 150, 150], [0, 70, 70]),
];

const WHITE: [u8; 3] = [255; 3];

fn palette(style: StyleId, seed: u64) -> Palette {
    match style {
        StyleId::FreePalette => {
            let (fill, outline) = PALETTE[(seed::derive(seed, "palette") % PALETTE.len() as u64) as usize];
            Palette { fill, outline }
        }
        _ => Palette { fill: [0; 3], outline: [0; 3] },
    }
}

fn tone(base: [u8; 3], shading: f64) -> [u8; 3] {
    base.map(|c| (255.0 + (f64::from(c) - 255.0) * shading.clamp(0.0, 1.0)).round() as u8)
}

fn entity_layers(kind: EntityKind, h: f64, w: f64, fill: [u8; 3], outline: [u8; 3]) -> Vec<Layer> {
    match kind {
        EntityKind::Circle => outlined(Shape::Disk { c: (0.0, 0.0), r: h }, w, fill, outline),
        EntityKind::Square => outlined(Shape::Square { half: h / std::f64::consts::SQRT_2 }, w, fill, outline),
        EntityKind::Triangle => outlined(Shape::Triangle { r: h }, w, fill, outline),
        EntityKind::LineGroup => {
            let half_len = 0.8 * h - w / 2.0;
            [-LINE_SPACING * h, 0.0, LINE_SPACING * h]
                .iter()
                .map(|&x| Layer::new(Shape::Capsule { a: (x, -half_len), b: (x, half_len), r: w / 2.0 }, outline))
                .collect()
        }
        EntityKind::StickFigure => {
            let u = (h - w / 2.0) / 0.94;
            let seg = |a: (f64, f64), b: (f64, f64)| {
                Layer::new(Shape::Capsule { a: (a.0 * u, a.1 * u), b: (b.0 * u, b.1 * u), r: w / 2.0 }, outline)
            };
            let mut layers = vec![
                seg((0.0, -0.25), (0.0, 0.3)),
                seg((-0.45, -0.05), (0.45, -0.05)),
                seg((0.0, 0.3), (-0.4, 0.85)),
                seg((0.0, 0.3), (0.4, 0.85)),
            ];
            layers.extend(outlined(Shape::Disk { c: (0.0, -0.55 * u), r: 0.3 * u }, w, fill, outline));
            layers
        }
        EntityKind::Composite => {
            let ring = Shape::Disk { c: (0.0, 0.0), r: 0.75 * h };
            let mut layers = vec![Layer::new(ring, outline), Layer::inset(ring, w, WHITE)];
            layers.push(Layer::new(Shape::Capsule { a: (0.0, 0.0), b: (0.0, -0.75 * h), r: w / 2.0 }, outline));
            layers.extend(outlined(Shape::Disk { c: (0.0, -0.75 * h), r: 0.22 * h }, w, fill, outline));
            layers
        }
    }
}

fn outlined(shape: Shape, w: f64, fill: [u8; 3], outline: [u8; 3]) -> Vec<Layer> {
    vec![Layer::new(shape, outline), Layer::inset(shape, w, fill)]
}

/// Centres of the drawn items (entities first, then extra line groups), in
/// pixels. `seed` selects grid cells and jitter.
pub fn item_centers(state: &PanelState, geo: &Geometry, seed: u64) -> Vec<(f64, f64)> {
    let size = f64::from(geo.panel_size);
    let origin = (size / 2.0 + state.offset.0 / 100.0 * size, size / 2.0 + state.offset.1 / 100.0 * size);
    let n = state.items() as usize;
    if geo.grid == 0 {
        return vec![origin; n.min(1)];
    }
    let mut rng = seed::rng(seed);
    let mut cells: Vec<u32> = (0..geo.grid * geo.grid).collect();
    cells.shuffle(&mut rng);
    let start = -(f64::from(geo.grid) * geo.cell) / 2.0;
    cells
        .into_iter()
        .take(n)
        .map(|c| {
            let (gx, gy) = (f64::from(c % geo.grid), f64::from(c / geo.grid));
            let (jx, jy) = if geo.jitter > 0.0 {
                (rng.random_range(-geo.jitter..=geo.jitter), rng.random_range(-geo.jitter..=geo.jitter))
            } else {
                (0.0, 0.0)
            };
            (origin.0 + start + (gx + 0.5) * geo.cell + jx, origin.1 + start + (gy + 0.5) * geo.cell + jy)
        })
        .collect()
}

pub fn render_panel(
    state: &PanelState,
    kind: EntityKind,
    geo: &Geometry,
    style: StyleId,
    palette_seed: u64,
    placement_seed: u64,
) -> ImageBuf {
    let pal = palette(style, palette_seed);
    let fill = match state.fill {
        Fill::Solid => tone(pal.fill, state.shading),
        Fill::Hollow => WHITE,
    };
    let (sin, cos) = sin_cos_deg(state.rotation);
    let centers = item_centers(state, geo, placement_seed);
    let items: Vec<Item> = centers
        .iter()
        .enumerate()
        .map(|(i, &center)| {
            let k = if i < state.count as usize { kind } else { EntityKind::LineGroup };
            Item {
                center,
                sin,
                cos,
                radius: geo.half_extent,
                layers: entity_layers(k, geo.half_extent, geo.stroke, fill, pal.outline),
            }
        })
        .collect();
    rasterize(geo.panel_size, &items, style.samples())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageGroup {
    pub group_id: String,
    pub rule_id: String,
    pub style: StyleId,
    #[serde(skip)]
    pub correct: Vec<ImageBuf>,
    #[serde(skip)]
    pub incorrect: Vec<ImageBuf>,
    pub qc: Option<QcVerdict>,
}

impl ImageGroup {
    /// All eight panels: five correct, then three incorrect.
    pub fn panels(&self) -> impl Iterator<Item = &ImageBuf> {
        self.correct.iter().chain(self.incorrect.iter())
    }

    pub fn answer(&self) -> &ImageBuf {
        &self.correct[SEQUENCE_LEN - 1]
    }

    pub fn panel_names() -> [&'static str; 8] {
        ["c0", "c1", "c2", "c3", "c4", "x0", "x1", "x2"]
    }

    /// Writes `{dir}/{group_id}/c{0..4}.png` and `x{0..2}.png`.
    pub fn save(&self, dir: &Path) -> Result<(), ImageIoError> {
        let out = dir.join(&self.group_id);
        std::fs::create_dir_all(&out)?;
        for (name, panel) in Self::panel_names().iter().zip(self.panels()) {
            crate::pipeline::write_atomic(&out.join(format!("{name}.png")), &panel.encode_png()?)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, group_id: &str, rule_id: &str, style: StyleId) -> Result<Self, ImageIoError> {
        let base = dir.join(group_id);
        let mut panels = Self::panel_names()
            .iter()
            .map(|n| ImageBuf::load_png(&base.join(format!("{n}.png"))))
            .collect::<Result<Vec<_>, _>>()?;
        let incorrect = panels.split_off(SEQUENCE_LEN);
        Ok(Self { group_id: group_id.into(), rule_id: rule_id.into(), style, correct: panels, incorrect, qc: None })
    }
}

/// Renders one group. Panel placement depends only on `rng_seed` and the
/// panel slot, so every style of a rule shares the same arrangement.
pub fn render_group(
    rule_id: &str,
    program: &RuleProgram,
    style: StyleId,
    rng_seed: u64,
    cfg: &RenderConfig,
) -> Result<ImageGroup, RenderError> {
    let plan = plan_group(program, cfg)?;
    Ok(render_plan(rule_id, program.entity.kind, &plan, style, rng_seed))
}

pub fn render_plan(rule_id: &str, kind: EntityKind, plan: &GroupPlan, style: StyleId, rng_seed: u64) -> ImageGroup {
    let draw = |state: &PanelState, slot: &str| {
        render_panel(state, kind, &plan.geometry, style, rng_seed, seed::derive(rng_seed, slot))
    };
    let correct = plan.correct.iter().enumerate().map(|(i, s)| draw(s, &format!("c{i}"))).collect();
    let incorrect = plan.incorrect.iter().enumerate().map(|(i, (_, s))| draw(s, &format!("x{i}"))).collect();
    ImageGroup { group_id: group_id(rule_id, style), rule_id: rule_id.into(), style, correct, incorrect, qc: None }
}

/// One result per style; a failing style does not affect the others.
pub fn render_all_styles(
    rule_id: &str,
    program: &RuleProgram,
    rng_seed: u64,
    cfg: &RenderConfig,
) -> Vec<(StyleId, Result<ImageGroup, RenderError>)> {
    let plan = plan_group(program, cfg);
    StyleId::ALL
        .iter()
        .map(|&style| {
            let group = plan.clone().map(|p| render_plan(rule_id, program.entity.kind, &p, style, rng_seed));
            (style, group)
        })
        .collect()
}
