//! Image containers and the preprocessing shared by the flow engine.
//!
//! Intensities are kept as `f64` after decoding. Every filter here pads with
//! replicated edge pixels.

use crate::error::{Error, Result};
use crate::par;

/// Single-channel intensity raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    time_index: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "frame must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                width * height
            )));
        }
        if let Some(bad) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite intensity at index {bad}"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            time_index: 0,
        })
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64 + Sync + Send) -> Self {
        assert!(width > 0 && height > 0, "frame must be non-empty");
        let mut pixels = vec![0.0; width * height];
        par::fill_rows(&mut pixels, width, |y, row| {
            for (x, p) in row.iter_mut().enumerate() {
                *p = f(x, y);
            }
        });
        Self {
            width,
            height,
            pixels,
            time_index: 0,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn with_time_index(mut self, time_index: u64) -> Self {
        self.time_index = time_index;
        self
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

    pub fn time_index(&self) -> u64 {
        self.time_index
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with replicate-edge clamping.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    /// Bilinear sample at a real position; outside the image the edge is replicated.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let p00 = self.get_clamped(x0, y0);
        let p10 = self.get_clamped(x0 + 1, y0);
        let p01 = self.get_clamped(x0, y0 + 1);
        let p11 = self.get_clamped(x0 + 1, y0 + 1);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    pub(crate) fn require_min(&self, min_width: usize, min_height: usize) -> Result<()> {
        if self.width < min_width || self.height < min_height {
            return Err(Error::FrameTooSmall {
                width: self.width,
                height: self.height,
                min_width,
                min_height,
            });
        }
        Ok(())
    }
}

/// Interleaved RGB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorFrame {
    width: usize,
    height: usize,
    rgb: Vec<f64>,
}

impl ColorFrame {
    pub fn new(width: usize, height: usize, rgb: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "rgb buffer of {} entries does not match {width}x{height}",
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgb(&self) -> &[f64] {
        &self.rgb
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// Luma conversion with Rec. 601 weights, unrounded.
pub fn to_grayscale(c: &ColorFrame) -> Frame {
    let pixels = c
        .rgb
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 255.0))
        .collect();
    Frame {
        width: c.width,
        height: c.height,
        pixels,
        time_index: 0,
    }
}

/// Crops `f` to `width`x`height` around its center. Odd margins leave the
/// extra pixel on the right/bottom.
pub fn center_crop(f: &Frame, width: usize, height: usize) -> Frame {
    assert!(width <= f.width && height <= f.height, "crop larger than frame");
    if width == f.width && height == f.height {
        return f.clone();
    }
    let left = (f.width - width) / 2;
    let top = (f.height - height) / 2;
    let mut pixels = Vec::with_capacity(width * height);
    for y in top..top + height {
        let start = y * f.width + left;
        pixels.extend_from_slice(&f.pixels[start..start + width]);
    }
    Frame {
        width,
        height,
        pixels,
        time_index: f.time_index,
    }
}

/// Crops both frames to their common (minimum) dimensions.
pub fn center_crop_common(a: &Frame, b: &Frame) -> (Frame, Frame) {
    let w = a.width.min(b.width);
    let h = a.height.min(b.height);
    (center_crop(a, w, h), center_crop(b, w, h))
}

/// Normalized sampled Gaussian of the given radius.
pub(crate) fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable correlation `out(x,y) = sum_j ky[j] * sum_i kx[i] * src(x+i-rx, y+j-ry)`
/// with replicate-edge padding. Both kernels must have odd length.
pub(crate) fn correlate_separable(
    src: &[f64],
    width: usize,
    height: usize,
    kx: &[f64],
    ky: &[f64],
) -> Vec<f64> {
    let tmp = correlate_rows(src, width, height, kx);
    correlate_cols(&tmp, width, height, ky)
}

pub(crate) fn correlate_rows(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    debug_assert_eq!(k.len() % 2, 1);
    debug_assert_eq!(src.len(), width * height);
    let r = (k.len() / 2) as isize;
    let last = width as isize - 1;
    let mut out = vec![0.0; width * height];
    par::fill_rows(&mut out, width, |y, row| {
        let line = &src[y * width..(y + 1) * width];
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, last) as usize;
                acc += kv * line[sx];
            }
            *o = acc;
        }
    });
    out
}

pub(crate) fn correlate_cols(src: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    debug_assert_eq!(k.len() % 2, 1);
    debug_assert_eq!(src.len(), width * height);
    let r = (k.len() / 2) as isize;
    let last = height as isize - 1;
    let mut out = vec![0.0; width * height];
    par::fill_rows(&mut out, width, |y, row| {
        for (j, &kv) in k.iter().enumerate() {
            let sy = (y as isize + j as isize - r).clamp(0, last) as usize;
            let line = &src[sy * width..(sy + 1) * width];
            if j == 0 {
                for (o, &s) in row.iter_mut().zip(line) {
                    *o = kv * s;
                }
            } else {
                for (o, &s) in row.iter_mut().zip(line) {
                    *o += kv * s;
                }
            }
        }
    });
    out
}

const PYRAMID_SIGMA: f64 = 1.0;
const PYRAMID_RADIUS: usize = 3;

/// Gaussian blur (sigma 1, radius 3) followed by keeping every second pixel
/// starting at index 0. Output dimensions are `ceil(dim / 2)`.
pub fn downsample_half(f: &Frame) -> Result<Frame> {
    f.require_min(2, 2)?;
    let k = gaussian_kernel(PYRAMID_SIGMA, PYRAMID_RADIUS);
    let blurred = correlate_separable(&f.pixels, f.width, f.height, &k, &k);
    let w = f.width.div_ceil(2);
    let h = f.height.div_ceil(2);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            pixels.push(blurred[(2 * y) * f.width + 2 * x]);
        }
    }
    Ok(Frame {
        width: w,
        height: h,
        pixels,
        time_index: f.time_index,
    })
}
