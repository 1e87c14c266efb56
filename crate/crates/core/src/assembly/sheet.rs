//! Puzzle sheet composition and the small bitmap font used for labels.

use serde::{Deserialize, Serialize};

use crate::image_buf::ImageBuf;

const GLYPHS: [(char, [u8; 7]); 11] = [
    ('A', [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('B', [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110]),
    ('C', [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110]),
    ('D', [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110]),
    ('E', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111]),
    ('F', [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000]),
    ('G', [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111]),
    ('H', [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001]),
    ('I', [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110]),
    ('J', [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100]),
    ('?', [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b00000, 0b00100]),
];

pub const GLYPH_W: u32 = 5;
pub const GLYPH_H: u32 = 7;

pub fn glyph(c: char) -> Option<[u8; 7]> {
    GLYPHS.iter().find(|(g, _)| *g == c).map(|(_, rows)| *rows)
}

/// Draws `c` with its top-left corner at `(x0, y0)`, each font pixel
/// becoming a `scale × scale` block. Unknown characters draw nothing.
pub fn draw_glyph(img: &mut ImageBuf, c: char, x0: u32, y0: u32, scale: u32, rgb: [u8; 3]) {
    let Some(rows) = glyph(c) else { return };
    for (r, bits) in rows.iter().enumerate() {
        for col in 0..GLYPH_W {
            if bits & (1 << (GLYPH_W - 1 - col)) == 0 {
                continue;
            }
            for dy in 0..scale {
                for dx in 0..scale {
                    let (x, y) = (x0 + col * scale + dx, y0 + r as u32 * scale + dy);
                    if x < img.width() && y < img.height() {
                        img.put(x, y, rgb);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SheetLayout {
    pub gutter: u32,
    pub border: u32,
    pub border_rgb: [u8; 3],
}

impl Default for SheetLayout {
    fn default() -> Self {
        Self { gutter: 8, border: 1, border_rgb: [150, 150, 150] }
    }
}

/// Pixel geometry of a sheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SheetGeometry {
    pub panel: u32,
    pub columns: u32,
    pub option_rows: u32,
    pub option_columns: u32,
    pub label_scale: u32,
    pub label_band: u32,
    pub width: u32,
    pub height: u32,
}

impl SheetGeometry {
    pub fn new(panel: u32, options: usize, layout: &SheetLayout) -> Self {
        let option_columns = options.min(5) as u32;
        let option_rows = (options as u32).div_ceil(5);
        let columns = option_columns.max(5);
        let g = layout.gutter;
        let label_scale = (panel / 64).max(1);
        let label_band = GLYPH_H * label_scale + 2 * label_scale.max(2);
        let width = columns * panel + (columns + 1) * g;
        let height = g + panel + g + option_rows * (panel + label_band + g);
        Self { panel, columns, option_rows, option_columns, label_scale, label_band, width, height }
    }

    /// Top-left corner of stem cell `i` (0..5, the fifth is the question mark).
    pub fn stem_cell(&self, i: u32, layout: &SheetLayout) -> (u32, u32) {
        (layout.gutter + i * (self.panel + layout.gutter), layout.gutter)
    }

    /// Top-left corner of option `i`; rows narrower than the sheet are centred.
    pub fn option_cell(&self, i: u32, options: u32, layout: &SheetLayout) -> (u32, u32) {
        let g = layout.gutter;
        let (row, col) = (i / 5, i % 5);
        let in_row = (options - row * 5).min(5);
        let row_width = in_row * self.panel + (in_row - 1) * g;
        let x_start = (self.width - row_width) / 2;
        let y = g + self.panel + g + row * (self.panel + self.label_band + g);
        (x_start + col * (self.panel + g), y)
    }
}

pub(crate) fn frame(img: &mut ImageBuf, x: u32, y: u32, size: u32, layout: &SheetLayout) {
    let b = layout.border;
    if b == 0 {
        return;
    }
    let (x0, y0) = (x.saturating_sub(b), y.saturating_sub(b));
    let (x1, y1) = ((x + size + b).min(img.width()), (y + size + b).min(img.height()));
    for yy in y0..y1 {
        for xx in x0..x1 {
            let inside = xx >= x && xx < x + size && yy >= y && yy < y + size;
            if !inside {
                img.put(xx, yy, layout.border_rgb);
            }
        }
    }
}

/// A white cell with a centred question mark about half the cell tall.
pub fn question_mark_cell(size: u32) -> ImageBuf {
    let mut img = ImageBuf::white(size);
    let scale = (size / 2 / GLYPH_H).max(1);
    let x0 = size.saturating_sub(GLYPH_W * scale) / 2;
    let y0 = size.saturating_sub(GLYPH_H * scale) / 2;
    draw_glyph(&mut img, '?', x0, y0, scale, [0, 0, 0]);
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyph_rows_fit_five_bits() {
        for (_, rows) in GLYPHS {
            assert!(rows.iter().all(|r| *r < 32));
        }
        assert!(glyph('K').is_none());
    }

    #[test]
    fn default4_geometry() {
        let layout = SheetLayout::default();
        let g = SheetGeometry::new(256, 4, &layout);
        assert_eq!((g.columns, g.option_rows, g.option_columns), (5, 1, 4));
        assert_eq!(g.width, 5 * 256 + 6 * 8);
        let (x0, _) = g.option_cell(0, 4, &layout);
        let (x3, _) = g.option_cell(3, 4, &layout);
        assert_eq!(x0 - 8, g.width - (x3 + 256) - 8);
        let e = SheetGeometry::new(256, 10, &layout);
        assert_eq!((e.option_rows, e.option_columns), (2, 5));
        assert_eq!(e.option_cell(5, 10, &layout).0, e.stem_cell(0, &layout).0);
    }

    #[test]
    fn question_mark_has_ink() {
        let q = question_mark_cell(64);
        assert!(q.luma().iter().any(|l| *l < 10.0));
    }
}
