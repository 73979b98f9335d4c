use std::f64::consts::PI;

use crate::looming::LoomingMap;
use crate::raster::ColorFrame;

pub const INVALID_COLOR: [f64; 3] = [255.0, 0.0, 255.0];

/// Gray level `round(255 (1/2 + atan(r) / pi))` for valid ratios; magenta
/// for invalid pixels. Large ratios render bright, ratios near zero mid-gray,
/// negative ratios dark.
pub fn render_viz(m: &LoomingMap) -> ColorFrame {
    let mut rgb = Vec::with_capacity(3 * m.width * m.height);
    for (r, &valid) in m.ratio.iter().zip(&m.valid) {
        if valid {
            let g = gray_level(*r as f64);
            rgb.extend_from_slice(&[g, g, g]);
        } else {
            rgb.extend_from_slice(&INVALID_COLOR);
        }
    }
    ColorFrame::new(m.width, m.height, rgb).expect("sizes match")
}

fn gray_level(r: f64) -> f64 {
    (255.0 * (0.5 + r.atan() / PI)).round()
}
