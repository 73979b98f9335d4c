//! Synthetic approach scenes with exact ground truth.
//!
//! A pinhole camera translates toward a textured fronto-parallel board.
//! Optional billboard sprites sit at their own constant depth and slide
//! laterally. Pixel `(u, v)` is sampled at its center, which has image
//! coordinates `(u, v)`; there is no anti-aliasing, so the rendered frames
//! and [`true_flow`] agree exactly.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::looming::{connected_components, CameraIntrinsics, DetectionMask};
use crate::par;
use crate::raster::Frame;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a lattice corner: three chained splitmix64 rounds over
/// `seed`, `i`, `j` (signed lattice indices reinterpreted as `u64`).
pub fn lattice_hash(seed: u64, i: i64, j: i64) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64((h ^ i as u64).wrapping_add(GOLDEN));
    mix64((h ^ j as u64).wrapping_add(GOLDEN))
}

/// Corner intensity: the top byte of the hash, an integer in `0..=255`.
#[inline]
fn corner_value(seed: u64, i: i64, j: i64) -> f64 {
    (lattice_hash(seed, i, j) >> 56) as f64
}

/// Bilinear value noise over a lattice with cells `scale` units wide.
pub fn texture_value(seed: u64, x: f64, y: f64, scale: f64) -> f64 {
    debug_assert!(scale > 0.0);
    let gx = x / scale;
    let gy = y / scale;
    let fi = gx.floor();
    let fj = gy.floor();
    let tx = gx - fi;
    let ty = gy - fj;
    let (i, j) = (fi as i64, fj as i64);
    let v00 = corner_value(seed, i, j);
    let v10 = corner_value(seed, i + 1, j);
    let v01 = corner_value(seed, i, j + 1);
    let v11 = corner_value(seed, i + 1, j + 1);
    let top = v00 + (v10 - v00) * tx;
    let bottom = v01 + (v11 - v01) * tx;
    top + (bottom - top) * ty
}

/// Flat rectangle parallel to the board, moving laterally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sprite {
    /// World Z of the sprite plane.
    pub depth: f64,
    /// World width and height.
    pub size: (f64, f64),
    /// World (X, Y) of the sprite center at frame 0.
    pub start: (f64, f64),
    /// World (X, Y) displacement per frame.
    pub velocity: (f64, f64),
    /// Added to the sprite texture before clamping to [0, 255].
    pub albedo_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// World Z of the board; the camera starts at Z = 0.
    pub plane_depth: f64,
    pub texture_seed: u64,
    pub texture_scale: f64,
    /// Camera (Tx, Ty, Tz) per frame.
    pub cam_velocity: (f64, f64, f64),
    pub frames: usize,
    pub sprites: Vec<Sprite>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            intrinsics: CameraIntrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 160.0,
                cy: 120.0,
            },
            plane_depth: 40.0,
            texture_seed: 7,
            texture_scale: 0.8,
            cam_velocity: (0.0, 0.0, 0.5),
            frames: 20,
            sprites: Vec::new(),
        }
    }
}

/// Which surface a ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Board,
    Sprite(usize),
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scene(m));
        if self.width == 0 || self.height == 0 {
            return fail(format!("empty image {}x{}", self.width, self.height));
        }
        self.intrinsics.validate()?;
        let (_, _, tz) = self.cam_velocity;
        if !(tz >= 0.0) {
            return fail(format!("vel_z must be >= 0, got {tz}"));
        }
        if !(self.texture_scale > 0.0) {
            return fail(format!("texture_scale must be > 0, got {}", self.texture_scale));
        }
        if self.frames < 1 {
            return fail("frames must be >= 1".into());
        }
        let travel = self.frames as f64 * tz;
        if !(self.plane_depth - travel > 0.0) {
            return fail(format!(
                "camera reaches the board: plane_depth {} - frames {} * vel_z {tz} <= 0",
                self.plane_depth, self.frames
            ));
        }
        for (k, s) in self.sprites.iter().enumerate() {
            if !(s.depth < self.plane_depth) {
                return fail(format!("sprite {k} depth {} not in front of the board", s.depth));
            }
            if !(s.depth - travel > 0.0) {
                return fail(format!("camera reaches sprite {k}"));
            }
            if !(s.size.0 > 0.0 && s.size.1 > 0.0) {
                return fail(format!("sprite {k} has empty size"));
            }
        }
        Ok(())
    }

    fn check_frame(&self, t: usize, limit: usize) -> Result<()> {
        self.validate()?;
        if t >= limit {
            return Err(Error::InvalidArgument(format!(
                "frame index {t} out of range 0..{limit}"
            )));
        }
        Ok(())
    }

    /// Image position of the focus of expansion, `None` when the camera
    /// does not move along the optical axis.
    pub fn true_foe(&self) -> Option<(f64, f64)> {
        let (tx, ty, tz) = self.cam_velocity;
        if tz > 0.0 {
            let k = &self.intrinsics;
            Some((k.cx + k.fx * tx / tz, k.cy + k.fy * ty / tz))
        } else {
            None
        }
    }

    /// World point hit on a plane at world depth `z` through pixel `(u, v)`
    /// at frame `t`.
    fn hit(&self, z: f64, t: f64, u: f64, v: f64) -> (f64, f64) {
        let (tx, ty, tz) = self.cam_velocity;
        let k = &self.intrinsics;
        let dist = z - t * tz;
        (t * tx + (u - k.cx) * dist / k.fx, t * ty + (v - k.cy) * dist / k.fy)
    }

    /// Sprite-local coordinates of the ray, if it lands on sprite `s`.
    fn sprite_local(&self, s: &Sprite, t: f64, u: f64, v: f64) -> Option<(f64, f64)> {
        let (x, y) = self.hit(s.depth, t, u, v);
        let lx = x - (s.start.0 + t * s.velocity.0);
        let ly = y - (s.start.1 + t * s.velocity.1);
        let (hw, hh) = (0.5 * s.size.0, 0.5 * s.size.1);
        (lx >= -hw && lx < hw && ly >= -hh && ly < hh).then_some((lx, ly))
    }

    fn surface_at(&self, t: f64, u: f64, v: f64) -> Surface {
        // Sprites do not occlude each other by depth; the last one listed wins.
        for (k, s) in self.sprites.iter().enumerate().rev() {
            if self.sprite_local(s, t, u, v).is_some() {
                return Surface::Sprite(k);
            }
        }
        Surface::Board
    }

    fn sprite_seed(&self, k: usize) -> u64 {
        mix64(self.texture_seed ^ (k as u64 + 1).wrapping_mul(GOLDEN))
    }

    /// Scene intensity along the ray through the real image point `(u, v)`
    /// at (possibly fractional) time `t`.
    pub fn radiance(&self, t: f64, u: f64, v: f64) -> f64 {
        match self.surface_at(t, u, v) {
            Surface::Sprite(k) => {
                let s = &self.sprites[k];
                let (lx, ly) = self.sprite_local(s, t, u, v).expect("hit");
                let base = texture_value(self.sprite_seed(k), lx, ly, self.texture_scale);
                (base + s.albedo_offset).clamp(0.0, 255.0)
            }
            Surface::Board => {
                let (x, y) = self.hit(self.plane_depth, t, u, v);
                texture_value(self.texture_seed, x, y, self.texture_scale)
            }
        }
    }

    /// Exact one-frame image displacement of a point seen at pixel
    /// `(u, v)` on a plane at world depth `z`, moving laterally with `vel`.
    fn displacement(&self, z: f64, vel: (f64, f64), t: f64, u: f64, v: f64) -> (f64, f64) {
        let (tx, ty, tz) = self.cam_velocity;
        let k = &self.intrinsics;
        let dist = z - t * tz;
        let (rx, ry) = (tx - vel.0, ty - vel.1);
        if tz > 0.0 {
            let s = tz / (dist - tz);
            let x0 = k.cx + k.fx * rx / tz;
            let y0 = k.cy + k.fy * ry / tz;
            (s * (u - x0), s * (v - y0))
        } else {
            (-k.fx * rx / dist, -k.fy * ry / dist)
        }
    }

    fn board_displacement(&self, t: f64, u: f64, v: f64) -> (f64, f64) {
        self.displacement(self.plane_depth, (0.0, 0.0), t, u, v)
    }

    fn surface_displacement(&self, surface: Surface, t: f64, u: f64, v: f64) -> (f64, f64) {
        match surface {
            Surface::Board => self.board_displacement(t, u, v),
            Surface::Sprite(k) => {
                let s = &self.sprites[k];
                self.displacement(s.depth, s.velocity, t, u, v)
            }
        }
    }
}

/// Renders frame `t` (0-based).
pub fn render_frame(s: &SceneSpec, t: usize) -> Result<Frame> {
    s.check_frame(t, s.frames)?;
    let tf = t as f64;
    Ok(Frame::from_fn(s.width, s.height, |x, y| s.radiance(tf, x as f64, y as f64))
        .with_time_index(t as u64))
}

/// Exact displacement of every pixel from frame `t` to `t + 1`.
pub fn true_flow(s: &SceneSpec, t: usize) -> Result<FlowField> {
    s.check_frame(t, s.frames.saturating_sub(1))?;
    let tf = t as f64;
    let n = s.width * s.height;
    let mut pairs = vec![(0.0, 0.0); n];
    par::fill_rows(&mut pairs, s.width, |y, row| {
        for (x, p) in row.iter_mut().enumerate() {
            let (u, v) = (x as f64, y as f64);
            *p = s.surface_displacement(s.surface_at(tf, u, v), tf, u, v);
        }
    });
    let (du, dv) = pairs.into_iter().unzip();
    FlowField::new(s.width, s.height, du, dv, vec![true; n])
}

/// Tolerance on the direction difference that makes a sprite pixel count as
/// independently moving.
pub const TRUE_MASK_ANGLE: f64 = 1e-6;

/// Sprite pixels whose image motion is not parallel to the board's radial
/// motion at the same pixel.
pub fn true_mask(s: &SceneSpec, t: usize) -> Result<DetectionMask> {
    s.check_frame(t, s.frames.saturating_sub(1))?;
    let tf = t as f64;
    let mut moving = vec![false; s.width * s.height];
    par::fill_rows(&mut moving, s.width, |y, row| {
        for (x, m) in row.iter_mut().enumerate() {
            let (u, v) = (x as f64, y as f64);
            let surface = s.surface_at(tf, u, v);
            if surface == Surface::Board {
                continue;
            }
            let own = s.surface_displacement(surface, tf, u, v);
            let board = s.board_displacement(tf, u, v);
            *m = directions_differ(own, board);
        }
    });
    Ok(connected_components(s.width, s.height, moving, 0))
}

fn directions_differ(a: (f64, f64), b: (f64, f64)) -> bool {
    let na = a.0.hypot(a.1);
    let nb = b.0.hypot(b.1);
    if na < 1e-12 || nb < 1e-12 {
        return (a.0 - b.0).hypot(a.1 - b.1) > 1e-9;
    }
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    cross.atan2(dot).abs() > TRUE_MASK_ANGLE
}
