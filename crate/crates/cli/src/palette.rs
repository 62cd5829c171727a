//! Category colors: hues stepped evenly around the circle, with "other"
//! drawn mid-gray.

use mincseg::dataset::{Category, NUM_CATEGORIES};

const SATURATION: f64 = 0.7;
const VALUE: f64 = 0.9;
pub const OTHER_GRAY: [u8; 3] = [128, 128, 128];

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

pub fn palette() -> Vec<[u8; 3]> {
    (0..NUM_CATEGORIES)
        .map(|i| {
            if i == Category::Other.id() {
                OTHER_GRAY
            } else {
                hsv_to_rgb(i as f64 / NUM_CATEGORIES as f64, SATURATION, VALUE)
            }
        })
        .collect()
}
