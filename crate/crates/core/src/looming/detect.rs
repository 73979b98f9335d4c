use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use super::FocusOfExpansion;
use crate::flow::FlowField;

/// How flow direction is compared with the radial direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionTest {
    /// Signed angle in (-pi, pi]: inward motion counts as deviating.
    #[default]
    Signed,
    /// Angle between lines in (-pi/2, pi/2]: only the ratio matters.
    Unsigned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub tau_mag: f64,
    /// Radians.
    pub tau_dir: f64,
    /// Components with fewer pixels are erased.
    pub min_area: usize,
    pub direction_test: DirectionTest,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            tau_mag: 0.5,
            tau_dir: 0.35,
            min_area: 25,
            direction_test: DirectionTest::Signed,
        }
    }
}

/// One 4-connected region of moving pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Inclusive `(min_x, min_y, max_x, max_y)`.
    pub bbox: (usize, usize, usize, usize),
    pub pixel_count: usize,
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    pub width: usize,
    pub height: usize,
    pub moving: Vec<bool>,
    pub components: Vec<Component>,
}

impl DetectionMask {
    pub fn moving_count(&self) -> usize {
        self.moving.iter().filter(|&&m| m).count()
    }

    pub fn is_moving(&self, x: usize, y: usize) -> bool {
        self.moving[y * self.width + x]
    }
}

/// Wraps an angle to (-pi, pi].
fn wrap_pi(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Angle from the radial direction `(rx, ry)` to the flow direction `(du, dv)`.
pub(crate) fn direction_deviation(du: f64, dv: f64, rx: f64, ry: f64, test: DirectionTest) -> f64 {
    let a = wrap_pi(dv.atan2(du) - ry.atan2(rx));
    match test {
        DirectionTest::Signed => a,
        DirectionTest::Unsigned => {
            if a > FRAC_PI_2 {
                a - PI
            } else if a <= -FRAC_PI_2 {
                a + PI
            } else {
                a
            }
        }
    }
}

/// Flags pixels whose flow direction deviates from the outward radial
/// direction about `foe` by more than `tau_dir`, then removes components
/// smaller than `min_area`.
pub fn detect_moving(flow: &FlowField, foe: &FocusOfExpansion, params: &DetectParams) -> DetectionMask {
    let (w, h) = flow.dims();
    let mut moving = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if !flow.is_valid(x, y) {
                continue;
            }
            let (du, dv) = flow.get(x, y);
            if du.hypot(dv) < params.tau_mag {
                continue;
            }
            let dev = direction_deviation(
                du,
                dv,
                x as f64 - foe.x0,
                y as f64 - foe.y0,
                params.direction_test,
            );
            moving[y * w + x] = dev.abs() > params.tau_dir;
        }
    }
    connected_components(w, h, moving, params.min_area)
}

/// 4-connected labelling in raster order. Components smaller than
/// `min_area` are cleared from the mask.
pub fn connected_components(width: usize, height: usize, mut moving: Vec<bool>, min_area: usize) -> DetectionMask {
    assert_eq!(moving.len(), width * height);
    let mut seen = vec![false; width * height];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for start in 0..moving.len() {
        if !moving[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        members.clear();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            let (x, y) = (i % width, i / width);
            let mut visit = |j: usize| {
                if moving[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < width {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - width);
            }
            if y + 1 < height {
                visit(i + width);
            }
        }
        if members.len() < min_area {
            for &i in &members {
                moving[i] = false;
            }
            continue;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut sx, mut sy) = (0.0, 0.0);
        for &i in &members {
            let (x, y) = (i % width, i / width);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            sx += x as f64;
            sy += y as f64;
        }
        let n = members.len();
        components.push(Component {
            bbox: (x0, y0, x1, y1),
            pixel_count: n,
            centroid: (sx / n as f64, sy / n as f64),
        });
    }
    DetectionMask {
        width,
        height,
        moving,
        components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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
    fn stationary_field_has_no_detections() {
        let f = FlowField::from_fn(120, 90, |x, y| (0.05 * (x as f64 - 60.3), 0.05 * (y as f64 - 44.8)));
        for tau in [1e-6, 0.01, 0.35] {
            let p = DetectParams { tau_dir: tau, min_area: 1, ..DetectParams::default() };
            assert_eq!(detect_moving(&f, &foe(60.3, 44.8), &p).moving_count(), 0);
        }
    }

    #[test]
    fn single_deviating_pixel_is_filtered() {
        let mut f = FlowField::from_fn(40, 40, |x, y| (0.1 * (x as f64 - 20.0), 0.1 * (y as f64 - 20.0)));
        let mut du = f.du().to_vec();
        let mut dv = f.dv().to_vec();
        // rotate one vector by 90 degrees
        let i = 5 * 40 + 35;
        let (a, b) = (du[i], dv[i]);
        du[i] = -b;
        dv[i] = a;
        f = FlowField::new(40, 40, du, dv, f.valid().to_vec()).unwrap();
        let p = DetectParams { min_area: 5, ..DetectParams::default() };
        assert_eq!(detect_moving(&f, &foe(20.0, 20.0), &p).moving_count(), 0);
        let p = DetectParams { min_area: 1, ..DetectParams::default() };
        let m = detect_moving(&f, &foe(20.0, 20.0), &p);
        assert_eq!(m.moving_count(), 1);
        assert_eq!(m.components[0].bbox, (35, 5, 35, 5));
    }

    #[test]
    fn inward_flow_signed_vs_unsigned() {
        let f = FlowField::from_fn(40, 40, |x, y| (-0.1 * (x as f64 - 20.0), -0.1 * (y as f64 - 20.0)));
        let signed = DetectParams { min_area: 1, ..DetectParams::default() };
        let unsigned = DetectParams { direction_test: DirectionTest::Unsigned, ..signed };
        assert!(detect_moving(&f, &foe(20.0, 20.0), &signed).moving_count() > 0);
        assert_eq!(detect_moving(&f, &foe(20.0, 20.0), &unsigned).moving_count(), 0);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_pi(PI), PI);
        assert_eq!(wrap_pi(-PI), PI);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((direction_deviation(0.0, 1.0, 1.0, 0.0, DirectionTest::Signed) - FRAC_PI_2).abs() < 1e-12);
        assert!((direction_deviation(-1.0, 0.0, 1.0, 0.0, DirectionTest::Unsigned)).abs() < 1e-12);
    }

    #[test]
    fn components_have_stats() {
        let mut m = vec![false; 10 * 6];
        for y in 1..3 {
            for x in 1..4 {
                m[y * 10 + x] = true;
            }
        }
        m[5 * 10 + 9] = true;
        // diagonal neighbours are separate under 4-connectivity
        m[4 * 10 + 8] = true;
        let d = connected_components(10, 6, m, 0);
        assert_eq!(d.components.len(), 3);
        assert_eq!(d.components[0].bbox, (1, 1, 3, 2));
        assert_eq!(d.components[0].pixel_count, 6);
        assert_eq!(d.components[0].centroid, (2.0, 1.5));
    }

    proptest! {
        #[test]
        fn components_partition_mask(bits in proptest::collection::vec(any::<bool>(), 12 * 9)) {
            let d = connected_components(12, 9, bits.clone(), 0);
            prop_assert_eq!(&d.moving, &bits);
            let total: usize = d.components.iter().map(|c| c.pixel_count).sum();
            prop_assert_eq!(total, bits.iter().filter(|&&b| b).count());
        }

        #[test]
        fn area_filter_only_removes(bits in proptest::collection::vec(any::<bool>(), 12 * 9), min_area in 0usize..8) {
            let d = connected_components(12, 9, bits.clone(), min_area);
            prop_assert!(d.components.iter().all(|c| c.pixel_count >= min_area));
            for (a, b) in d.moving.iter().zip(&bits) {
                prop_assert!(!*a || *b);
            }
            let total: usize = d.components.iter().map(|c| c.pixel_count).sum();
            prop_assert_eq!(total, d.moving_count());
        }
    }
}
