//! Dense two-frame optical flow by polynomial expansion, estimated coarse to
//! fine over a Gaussian pyramid.

pub(crate) mod displacement;
mod poly;

pub use displacement::displacement_step;
pub use poly::{poly_expand, PolyExpansion};

use crate::error::{Error, Result};
use crate::par;
use crate::raster::{downsample_half, Frame};

/// Smallest frame accepted by [`farneback_flow`].
pub const MIN_FRAME_DIM: usize = 16;

/// Per-pixel displacement in px/frame, with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    du: Vec<f64>,
    dv: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        du: Vec<f64>,
        dv: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if du.len() != n || dv.len() != n || valid.len() != n {
            return Err(Error::InvalidArgument(format!(
                "flow planes do not match {width}x{height}"
            )));
        }
        for i in 0..n {
            if valid[i] && !(du[i].is_finite() && dv[i].is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite flow at valid pixel {i}"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            du,
            dv,
            valid,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            du: vec![0.0; n],
            dv: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    /// Builds an all-valid field from `f(x, y) -> (du, dv)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut du = Vec::with_capacity(width * height);
        let mut dv = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                du.push(a);
                dv.push(b);
            }
        }
        Self {
            width,
            height,
            du,
            dv,
            valid: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn du(&self) -> &[f64] {
        &self.du
    }

    pub fn dv(&self) -> &[f64] {
        &self.dv
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.du[i], self.dv[i])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Marks one pixel invalid.
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    /// Marks every pixel closer than `margin` to the image edge invalid.
    pub fn invalidate_border(&mut self, margin: usize) {
        let (w, h) = (self.width, self.height);
        for y in 0..h {
            for x in 0..w {
                if x < margin || y < margin || x + margin >= w || y + margin >= h {
                    self.valid[y * w + x] = false;
                }
            }
        }
    }

    /// Multiplies every vector by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            du: self.du.iter().map(|v| v * s).collect(),
            dv: self.dv.iter().map(|v| v * s).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Bilinear resampling to a level twice as large, with vectors doubled.
    /// Fine pixel `(x, y)` reads the coarse field at `(x/2, y/2)`.
    fn upsample_to(&self, width: usize, height: usize) -> Self {
        let mut du = vec![0.0; width * height];
        let mut dv = vec![0.0; width * height];
        let sample = |plane: &[f64], x: f64, y: f64| -> f64 {
            let x = x.clamp(0.0, (self.width - 1) as f64);
            let y = y.clamp(0.0, (self.height - 1) as f64);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let at = |xx: usize, yy: usize| plane[yy * self.width + xx];
            let top = at(x0, y0) + (at(x1, y0) - at(x0, y0)) * fx;
            let bot = at(x0, y1) + (at(x1, y1) - at(x0, y1)) * fx;
            top + (bot - top) * fy
        };
        par::fill_rows(&mut du, width, |y, row| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = 2.0 * sample(&self.du, x as f64 * 0.5, y as f64 * 0.5);
            }
        });
        par::fill_rows(&mut dv, width, |y, row| {
            for (x, o) in row.iter_mut().enumerate() {
                *o = 2.0 * sample(&self.dv, x as f64 * 0.5, y as f64 * 0.5);
            }
        });
        Self {
            width,
            height,
            du,
            dv,
            valid: vec![true; width * height],
        }
    }
}

/// Parameters of [`farneback_flow`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub levels: usize,
    pub iterations_per_level: usize,
    /// Side of the polynomial expansion window (odd).
    pub poly_n: usize,
    pub poly_sigma: f64,
    /// Side of the Gaussian aggregation window (odd).
    pub win_size: usize,
    /// Tikhonov weight, relative to the trace of the aggregated system.
    pub regularization: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            iterations_per_level: 3,
            poly_n: 7,
            poly_sigma: 1.5,
            win_size: 15,
            regularization: 1e-9,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.levels < 1 {
            return bad("levels must be >= 1".into());
        }
        if self.iterations_per_level < 1 {
            return bad("iterations_per_level must be >= 1".into());
        }
        if self.poly_n < 3 || self.poly_n.is_multiple_of(2) {
            return bad(format!("poly_n must be odd and >= 3, got {}", self.poly_n));
        }
        if !(self.poly_sigma > 0.0) {
            return bad(format!("poly_sigma must be positive, got {}", self.poly_sigma));
        }
        if self.win_size < 1 || self.win_size.is_multiple_of(2) {
            return bad(format!("win_size must be odd, got {}", self.win_size));
        }
        if !(self.regularization >= 0.0) {
            return bad(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            ));
        }
        Ok(())
    }
}

/// Coarse-to-fine dense flow from `f1` to `f2`: `f2(x + d(x)) ~ f1(x)`.
pub fn farneback_flow(f1: &Frame, f2: &Frame, p: &FlowParams) -> Result<FlowField> {
    p.validate()?;
    if f1.dims() != f2.dims() {
        return Err(Error::DimensionMismatch {
            left: f1.dims(),
            right: f2.dims(),
        });
    }
    f1.require_min(MIN_FRAME_DIM, MIN_FRAME_DIM)?;

    let mut pyr1 = vec![f1.clone()];
    let mut pyr2 = vec![f2.clone()];
    for _ in 1..p.levels {
        let next1 = downsample_half(pyr1.last().unwrap())?;
        let next2 = downsample_half(pyr2.last().unwrap())?;
        pyr1.push(next1);
        pyr2.push(next2);
    }
    let (cw, ch) = pyr1.last().unwrap().dims();
    if cw < p.poly_n || ch < p.poly_n {
        return Err(Error::FrameTooSmall {
            width: f1.width(),
            height: f1.height(),
            min_width: p.poly_n << (p.levels - 1),
            min_height: p.poly_n << (p.levels - 1),
        });
    }

    let mut flow: Option<FlowField> = None;
    for level in (0..p.levels).rev() {
        let (w, h) = pyr1[level].dims();
        let e1 = poly_expand(&pyr1[level], p.poly_n, p.poly_sigma)?;
        let e2 = poly_expand(&pyr2[level], p.poly_n, p.poly_sigma)?;
        let mut current = match flow.take() {
            None => FlowField::zeros(w, h),
            Some(coarse) => coarse.upsample_to(w, h),
        };
        for _ in 0..p.iterations_per_level {
            current = displacement_step(&e1, &e2, &current, p.win_size, p.regularization)?;
        }
        flow = Some(current);
    }
    Ok(flow.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::texture_value;

    fn texture(seed: u64, dx: f64, dy: f64) -> Frame {
        Frame::from_fn(96, 80, move |x, y| {
            texture_value(seed, x as f64 - dx, y as f64 - dy, 6.0)
        })
    }

    fn interior_epe(flow: &FlowField, truth: (f64, f64), border: usize) -> f64 {
        let (w, h) = flow.dims();
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in border..h - border {
            for x in border..w - border {
                let (u, v) = flow.get(x, y);
                sum += ((u - truth.0).powi(2) + (v - truth.1).powi(2)).sqrt();
                n += 1;
            }
        }
        sum / n as f64
    }

    #[test]
    fn identity_pair_gives_zero_flow() {
        let f = texture(7, 0.0, 0.0);
        let flow = farneback_flow(&f, &f, &FlowParams::default()).unwrap();
        let max = flow
            .du()
            .iter()
            .chain(flow.dv())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-6, "max |flow| = {max}");
        assert_eq!(flow.valid_count(), 96 * 80);
    }

    #[test]
    fn recovers_global_shift() {
        let f1 = texture(7, 0.0, 0.0);
        let f2 = texture(7, 3.0, -1.0);
        let flow = farneback_flow(&f1, &f2, &FlowParams::default()).unwrap();
        let epe = interior_epe(&flow, (3.0, -1.0), 16);
        assert!(epe < 0.25, "epe = {epe}");
    }

    #[test]
    fn shift_equivariance_small_shifts() {
        for &(sx, sy) in &[(1.0, 0.0), (0.0, 2.0), (-4.0, 3.0), (2.0, -4.0)] {
            let f1 = texture(11, 0.0, 0.0);
            let f2 = texture(11, sx, sy);
            let flow = farneback_flow(&f1, &f2, &FlowParams::default()).unwrap();
            let epe = interior_epe(&flow, (sx, sy), 16);
            assert!(epe < 0.25, "shift ({sx},{sy}) epe = {epe}");
        }
    }

    #[test]
    fn rejects_mismatch_and_small() {
        let p = FlowParams::default();
        let a = Frame::constant(32, 32, 1.0);
        let b = Frame::constant(33, 32, 1.0);
        assert!(matches!(farneback_flow(&a, &b, &p), Err(Error::DimensionMismatch { .. })));
        let tiny = Frame::constant(15, 40, 1.0);
        assert!(matches!(farneback_flow(&tiny, &tiny, &p), Err(Error::FrameTooSmall { .. })));
        // 16x16 is fine for one level but not for a 3-level pyramid with poly_n 7
        let small = Frame::constant(16, 16, 1.0);
        assert!(matches!(farneback_flow(&small, &small, &p), Err(Error::FrameTooSmall { .. })));
        let one = FlowParams { levels: 1, ..p };
        assert!(farneback_flow(&small, &small, &one).is_ok());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let f1 = texture(3, 0.0, 0.0);
        let f2 = texture(3, 1.5, 0.5);
        let p = FlowParams::default();
        let a = par::with_threads(1, || farneback_flow(&f1, &f2, &p).unwrap());
        let b = par::with_threads(4, || farneback_flow(&f1, &f2, &p).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn upsample_doubles_vectors() {
        let coarse = FlowField::from_fn(4, 3, |_, _| (1.0, -0.5));
        let fine = coarse.upsample_to(8, 6);
        assert!(fine.du().iter().all(|&v| v == 2.0));
        assert!(fine.dv().iter().all(|&v| v == -1.0));
    }
}
