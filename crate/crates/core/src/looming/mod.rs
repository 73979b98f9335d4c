//! Looming-ratio analysis of a flow field seen from a translating camera.
//!
//! For a camera translating toward a static scene every flow vector points
//! away from the focus of expansion `(x0, y0)`, so the ratio of horizontal to
//! vertical motion at pixel `(u, v)` is `(u - x0) / (v - y0)` whatever the
//! depth. Pixels that break this pattern belong to independently moving
//! objects.

mod detect;
mod foe;
mod transform;

pub use detect::{connected_components, detect_moving, Component, DetectParams, DetectionMask, DirectionTest};
pub use foe::{estimate_foe, estimate_foe_trimmed, FocusOfExpansion, MAX_FOE_CONDITION};
pub use transform::{
    expected_ratio_field, looming_transform, LoomingMap, LoomingParams, RatioMode, RatioOrientation,
};

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive and the principal point finite: {self:?}"
            )));
        }
        Ok(())
    }

    /// Rate of change of the horizontal angle for a horizontal image rate
    /// `du` at column `u` (derivative of `atan((u - cx) / fx)`).
    #[inline]
    pub fn theta_rate(&self, u: f64, du: f64) -> f64 {
        let x = u - self.cx;
        du * self.fx / (self.fx * self.fx + x * x)
    }

    #[inline]
    pub fn phi_rate(&self, v: f64, dv: f64) -> f64 {
        let y = v - self.cy;
        dv * self.fy / (self.fy * self.fy + y * y)
    }
}

/// Horizontal angle `theta` and vertical angle `phi` of the ray through `(u, v)`.
pub fn pixel_to_angles(k: &CameraIntrinsics, u: f64, v: f64) -> (f64, f64) {
    (((u - k.cx) / k.fx).atan(), ((v - k.cy) / k.fy).atan())
}

/// Per-pixel angular rates (rad/frame).
#[derive(Debug, Clone, PartialEq)]
pub struct AngularRates {
    pub width: usize,
    pub height: usize,
    pub theta_dot: Vec<f64>,
    pub phi_dot: Vec<f64>,
    pub valid: Vec<bool>,
}

pub fn flow_to_angular_rates(flow: &FlowField, k: &CameraIntrinsics) -> AngularRates {
    let (w, h) = flow.dims();
    let mut theta_dot = Vec::with_capacity(w * h);
    let mut phi_dot = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (du, dv) = flow.get(x, y);
            theta_dot.push(k.theta_rate(x as f64, du));
            phi_dot.push(k.phi_rate(y as f64, dv));
        }
    }
    AngularRates {
        width: w,
        height: h,
        theta_dot,
        phi_dot,
        valid: flow.valid().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(300.0, 280.0, 160.0, 120.0).unwrap()
    }

    #[test]
    fn angles_at_known_points() {
        let k = k();
        assert_eq!(pixel_to_angles(&k, 160.0, 120.0), (0.0, 0.0));
        let (theta, _) = pixel_to_angles(&k, 160.0 + 300.0, 120.0);
        assert_abs_diff_eq!(theta, FRAC_PI_4, epsilon = 1e-15);
        let (theta, _) = pixel_to_angles(&k, 160.0 + 300.0 * 0.3f64.tan(), 120.0);
        assert_abs_diff_eq!(theta, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn angular_rates() {
        let k = k();
        let flow = FlowField::from_fn(480, 240, |_, _| (1.0, 0.0));
        let rates = flow_to_angular_rates(&flow, &k);
        assert_abs_diff_eq!(rates.theta_dot[120 * 480 + 160], 1.0 / 300.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rates.theta_dot[120 * 480 + 460], 1.0 / 600.0, epsilon = 1e-15);
        assert!(rates.phi_dot.iter().all(|&p| p == 0.0));

        let zero = flow_to_angular_rates(&FlowField::zeros(8, 8), &k);
        assert!(zero.theta_dot.iter().chain(&zero.phi_dot).all(|&v| v == 0.0));
    }

    #[test]
    fn rates_match_finite_differences() {
        let k = k();
        for &(u, v) in &[(10.0, 30.0), (200.0, 220.0), (479.0, 0.0)] {
            let h = 1e-5;
            let (t0, p0) = pixel_to_angles(&k, u, v);
            let (t1, p1) = pixel_to_angles(&k, u + h, v + h);
            assert_abs_diff_eq!(k.theta_rate(u, 1.0), (t1 - t0) / h, epsilon = 1e-8);
            assert_abs_diff_eq!(k.phi_rate(v, 1.0), (p1 - p0) / h, epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
    }
}
