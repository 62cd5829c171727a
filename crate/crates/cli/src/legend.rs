//! Legend image: one swatch row per category with its name beside it.

use mincseg::dataset::Category;
use mincseg::image::{ColorSpace, Image};

pub const ROW_HEIGHT: usize = 18;
pub const SWATCH: (usize, usize) = (28, 14);
const MARGIN: usize = 4;
const GLYPH_SCALE: usize = 2;
const TEXT_X: usize = MARGIN + SWATCH.0 + 8;
pub const LEGEND_WIDTH: usize = 240;

/// 5×7 glyphs, one byte per row, low five bits, leftmost pixel highest.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        _ => [0; 7],
    }
}

/// White canvas with 23 rows of (swatch, name).
pub fn render_legend(palette: &[[u8; 3]]) -> Image {
    let n = Category::ALL.len();
    let (w, h) = (LEGEND_WIDTH, n * ROW_HEIGHT + MARGIN);
    let mut px = vec![255u8; w * h * 3];
    let mut put = |x: usize, y: usize, c: [u8; 3]| {
        if x < w && y < h {
            px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&c);
        }
    };
    for (row, cat) in Category::ALL.iter().enumerate() {
        let top = MARGIN + row * ROW_HEIGHT;
        let color = palette[cat.id() % palette.len()];
        for y in 0..SWATCH.1 {
            for x in 0..SWATCH.0 {
                put(MARGIN + x, top + y, color);
            }
        }
        for (k, ch) in cat.name().chars().enumerate() {
            let rows = glyph(ch);
            let gx = TEXT_X + k * 6 * GLYPH_SCALE;
            for (gy, bits) in rows.iter().enumerate() {
                for bit in 0..5 {
                    if bits & (0x10 >> bit) != 0 {
                        for dy in 0..GLYPH_SCALE {
                            for dx in 0..GLYPH_SCALE {
                                put(gx + bit * GLYPH_SCALE + dx, top + gy * GLYPH_SCALE + dy, [0, 0, 0]);
                            }
                        }
                    }
                }
            }
        }
    }
    let data = px.into_iter().map(f32::from).collect();
    Image::new(w, h, 3, ColorSpace::SrgbU8, data).expect("legend dimensions are consistent")
}

/// Color of the swatch in `row`, read back from a rendered legend.
pub fn swatch_color(legend: &Image, row: usize) -> [u8; 3] {
    let p = legend.pixel(MARGIN + SWATCH.0 / 2, MARGIN + row * ROW_HEIGHT + SWATCH.1 / 2);
    [p[0] as u8, p[1] as u8, p[2] as u8]
}
