use std::fmt;
use std::str::FromStr;

use super::{CameraIntrinsics, FocusOfExpansion};
use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Whether the ratio is taken between image rates (px/frame) or angular rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioMode {
    #[default]
    Pixel,
    Angular,
}

impl RatioMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RatioMode::Pixel => "pixel",
            RatioMode::Angular => "angular",
        }
    }
}

impl fmt::Display for RatioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RatioMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pixel" => Ok(RatioMode::Pixel),
            "angular" => Ok(RatioMode::Angular),
            other => Err(Error::Config(format!("unknown mode `{other}` (pixel|angular)"))),
        }
    }
}

/// Which component is the numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioOrientation {
    /// horizontal / vertical: near-zero on the column through the FoE
    #[default]
    HorizontalOverVertical,
    VerticalOverHorizontal,
}

impl RatioOrientation {
    pub fn as_str(self) -> &'static str {
        match self {
            RatioOrientation::HorizontalOverVertical => "h_over_v",
            RatioOrientation::VerticalOverHorizontal => "v_over_h",
        }
    }
}

impl FromStr for RatioOrientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h_over_v" => Ok(RatioOrientation::HorizontalOverVertical),
            "v_over_h" => Ok(RatioOrientation::VerticalOverHorizontal),
            other => Err(Error::Config(format!(
                "unknown ratio orientation `{other}` (h_over_v|v_over_h)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoomingParams {
    /// Minimum |denominator| in px/frame.
    pub eps_den: f64,
    /// Saturation bound on |ratio|.
    pub r_max: f64,
    /// Minimum flow magnitude in px/frame.
    pub tau_mag: f64,
    pub orientation: RatioOrientation,
}

impl Default for LoomingParams {
    fn default() -> Self {
        Self {
            eps_den: 1e-3,
            r_max: 100.0,
            tau_mag: 0.5,
            orientation: RatioOrientation::HorizontalOverVertical,
        }
    }
}

/// Per-pixel ratio image. Ratios are stored in single precision, which is
/// also what the on-disk format carries.
#[derive(Debug, Clone, PartialEq)]
pub struct LoomingMap {
    pub width: usize,
    pub height: usize,
    pub ratio: Vec<f32>,
    pub valid: Vec<bool>,
    pub mode: RatioMode,
}

impl LoomingMap {
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.ratio[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Ratio at one pixel from horizontal/vertical image motion `(h, v)`.
/// Validity and the denominator threshold are judged on the pixel-unit
/// components in both modes.
#[inline]
fn pixel_ratio(
    x: f64,
    y: f64,
    h: f64,
    v: f64,
    k: Option<&CameraIntrinsics>,
    mode: RatioMode,
    p: &LoomingParams,
) -> Option<f32> {
    if h.hypot(v) < p.tau_mag {
        return None;
    }
    let (num_px, den_px) = match p.orientation {
        RatioOrientation::HorizontalOverVertical => (h, v),
        RatioOrientation::VerticalOverHorizontal => (v, h),
    };
    if !(den_px.abs() >= p.eps_den) {
        return None;
    }
    let r = match mode {
        RatioMode::Pixel => num_px / den_px,
        RatioMode::Angular => {
            let k = k.expect("checked by caller");
            let (th, ph) = (k.theta_rate(x, h), k.phi_rate(y, v));
            match p.orientation {
                RatioOrientation::HorizontalOverVertical => th / ph,
                RatioOrientation::VerticalOverHorizontal => ph / th,
            }
        }
    };
    Some(r.clamp(-p.r_max, p.r_max) as f32)
}

fn require_intrinsics(k: Option<&CameraIntrinsics>, mode: RatioMode) -> Result<()> {
    if mode == RatioMode::Angular {
        match k {
            None => {
                return Err(Error::Config(
                    "angular mode requires camera intrinsics".into(),
                ))
            }
            Some(k) => k.validate()?,
        }
    }
    Ok(())
}

fn build_map(
    width: usize,
    height: usize,
    mode: RatioMode,
    f: impl Fn(usize, usize) -> Option<f32>,
) -> LoomingMap {
    let mut ratio = Vec::with_capacity(width * height);
    let mut valid = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            match f(x, y) {
                Some(r) => {
                    ratio.push(r);
                    valid.push(true);
                }
                None => {
                    ratio.push(0.0);
                    valid.push(false);
                }
            }
        }
    }
    LoomingMap {
        width,
        height,
        ratio,
        valid,
        mode,
    }
}

/// Per-pixel ratio of horizontal to vertical motion (or the reverse, per
/// `params.orientation`), in image or angular units.
pub fn looming_transform(
    flow: &FlowField,
    k: Option<&CameraIntrinsics>,
    mode: RatioMode,
    params: &LoomingParams,
) -> Result<LoomingMap> {
    require_intrinsics(k, mode)?;
    let (w, h) = flow.dims();
    Ok(build_map(w, h, mode, |x, y| {
        if !flow.is_valid(x, y) {
            return None;
        }
        let (du, dv) = flow.get(x, y);
        pixel_ratio(x as f64, y as f64, du, dv, k, mode, params)
    }))
}

/// The ratio a static scene would produce for the given FoE: the radial
/// offset `(u - x0, v - y0)` takes the place of the flow.
pub fn expected_ratio_field(
    foe: &FocusOfExpansion,
    k: Option<&CameraIntrinsics>,
    mode: RatioMode,
    dims: (usize, usize),
    params: &LoomingParams,
) -> Result<LoomingMap> {
    require_intrinsics(k, mode)?;
    let (w, h) = dims;
    Ok(build_map(w, h, mode, |x, y| {
        let (u, v) = (x as f64, y as f64);
        pixel_ratio(u, v, u - foe.x0, v - foe.y0, k, mode, params)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial(w: usize, h: usize, x0: f64, y0: f64, s: f64) -> FlowField {
        FlowField::from_fn(w, h, |x, y| (s * (x as f64 - x0), s * (y as f64 - y0)))
    }

    fn foe(x0: f64, y0: f64) -> FocusOfExpansion {
        FocusOfExpansion {
            x0,
            y0,
            rms_residual: 0.0,
            condition: 1.0,
            samples: 0,
        }
    }

    #[test]
    fn radial_field_structure() {
        let p = LoomingParams::default();
        let flow = radial(64, 48, 32.0, 24.0, 0.1);
        let m = looming_transform(&flow, None, RatioMode::Pixel, &p).unwrap();
        // column through the FoE: numerator zero
        assert_eq!(m.get(32, 5), Some(0.0));
        // row through the FoE: denominator zero
        assert_eq!(m.get(5, 24), None);
        // (du, dv) proportional to (3, 4)
        let g = radial(64, 48, 0.0, 0.0, 1.0);
        let m = looming_transform(&g, None, RatioMode::Pixel, &p).unwrap();
        assert_eq!(m.get(3, 4), Some(0.75));
    }

    #[test]
    fn saturates_and_masks() {
        let p = LoomingParams::default();
        let flow = FlowField::from_fn(4, 1, |x, _| match x {
            0 => (5.0, 0.01),  // ratio 500 -> clamped
            1 => (-5.0, 0.01), // -500 -> clamped
            2 => (0.1, 0.1),   // below tau_mag
            _ => (1.0, 0.0005), // below eps_den
        });
        let m = looming_transform(&flow, None, RatioMode::Pixel, &p).unwrap();
        assert_eq!(m.get(0, 0), Some(100.0));
        assert_eq!(m.get(1, 0), Some(-100.0));
        assert_eq!(m.get(2, 0), None);
        assert_eq!(m.get(3, 0), None);

        let mut invalid = FlowField::from_fn(1, 1, |_, _| (3.0, 4.0));
        invalid.invalidate(0, 0);
        let m = looming_transform(&invalid, None, RatioMode::Pixel, &p).unwrap();
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn orientation_flag_inverts() {
        let p = LoomingParams {
            orientation: RatioOrientation::VerticalOverHorizontal,
            ..LoomingParams::default()
        };
        let flow = FlowField::from_fn(1, 1, |_, _| (4.0, 3.0));
        let m = looming_transform(&flow, None, RatioMode::Pixel, &p).unwrap();
        assert_eq!(m.get(0, 0), Some(0.75));
    }

    #[test]
    fn angular_requires_intrinsics() {
        let flow = FlowField::zeros(4, 4);
        let err = looming_transform(&flow, None, RatioMode::Angular, &LoomingParams::default());
        assert!(matches!(err, Err(Error::Config(_))));
        let err = expected_ratio_field(&foe(0.0, 0.0), None, RatioMode::Angular, (4, 4), &LoomingParams::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn expected_field_examples() {
        let p = LoomingParams::default();
        let f = foe(20.0, 15.0);
        let m = expected_ratio_field(&f, None, RatioMode::Pixel, (40, 30), &p).unwrap();
        assert_eq!(m.get(30, 25), Some(1.0));
        assert!((0..40).all(|x| m.get(x, 15).is_none()));
    }

    #[test]
    fn angular_and_pixel_agree_on_diagonals() {
        let k = CameraIntrinsics::new(250.0, 250.0, 50.0, 40.0).unwrap();
        let p = LoomingParams::default();
        let f = foe(50.0, 40.0);
        let px = expected_ratio_field(&f, Some(&k), RatioMode::Pixel, (100, 80), &p).unwrap();
        let an = expected_ratio_field(&f, Some(&k), RatioMode::Angular, (100, 80), &p).unwrap();
        for d in 1..35i64 {
            for (sx, sy) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let x = (50 + sx * d) as usize;
                let y = (40 + sy * d) as usize;
                assert_eq!(px.get(x, y), an.get(x, y), "({x},{y})");
            }
        }
    }
}
