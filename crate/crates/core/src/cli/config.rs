//! Flat `key=value` configuration shared by the config file, `--set` and
//! the per-key flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::looming::{CameraIntrinsics, DetectParams, DirectionTest, LoomingParams, RatioMode};
use crate::scene::{SceneSpec, Sprite};

/// Every non-sprite key, in the order `run.log` lists them.
pub const KEYS: &[(&str, &str)] = &[
    ("width", "scene image width (px)"),
    ("height", "scene image height (px)"),
    ("fx", "focal length x (px)"),
    ("fy", "focal length y (px)"),
    ("cx", "principal point x (px, default width/2)"),
    ("cy", "principal point y (px, default height/2)"),
    ("plane_depth", "board depth (world units)"),
    ("texture_seed", "board texture seed"),
    ("texture_scale", "texture cells per world unit"),
    ("vel_x", "camera X velocity per frame"),
    ("vel_y", "camera Y velocity per frame"),
    ("vel_z", "camera Z velocity per frame"),
    ("frames", "number of frames to render"),
    ("levels", "pyramid levels"),
    ("iterations", "refinements per pyramid level"),
    ("poly_n", "polynomial expansion window (odd)"),
    ("poly_sigma", "polynomial expansion Gaussian sigma"),
    ("win_size", "aggregation window (odd)"),
    ("regularization", "relative Tikhonov weight"),
    ("mode", "ratio mode: pixel | angular"),
    ("orientation", "ratio orientation: h_over_v | v_over_h"),
    ("eps_den", "minimum |denominator| (px/frame)"),
    ("r_max", "ratio saturation bound"),
    ("tau_mag", "minimum flow magnitude (px/frame)"),
    ("tau_dir", "direction deviation threshold (rad)"),
    ("min_area", "minimum component size (px)"),
    ("direction_test", "signed | unsigned"),
    ("border", "margin (px) excluded from FoE fitting and detection"),
    ("trim_rounds", "FoE refits without direction outliers"),
    ("fps", "video frame rate for sync"),
    ("search_window", "sync lag search window (s)"),
    ("threads", "worker threads, 0 = all cores"),
];

pub const SPRITE_FIELDS: &[&str] = &[
    "depth", "size_w", "size_h", "start_x", "start_y", "vel_x", "vel_y", "albedo",
];

/// Environment variable read at the lowest precedence.
pub const THREADS_ENV: &str = "THREADS";

fn sprite_key(key: &str) -> Option<(usize, &str)> {
    let rest = key.strip_prefix("sprite.")?;
    let (n, field) = rest.split_once('.')?;
    if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n = n.parse().ok()?;
    SPRITE_FIELDS.contains(&field).then_some((n, field))
}

pub fn check_key(key: &str) -> Result<()> {
    if KEYS.iter().any(|(k, _)| *k == key) || sprite_key(key).is_some() {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key `{key}`")))
    }
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = parse_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}

/// Splits `key=value` and checks the key.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got `{s}`")))?;
    let (k, v) = (k.trim(), v.trim());
    check_key(k)?;
    if v.is_empty() {
        return Err(Error::Config(format!("empty value for `{k}`")));
    }
    Ok((k.to_string(), v.to_string()))
}

/// Key/value layers merged in precedence order; later layers win.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    values: BTreeMap<String, String>,
}

impl Layers {
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }
}

fn parse<T: FromStr>(layers: &Layers, key: &str, default: T) -> Result<T> {
    match layers.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`"))),
    }
}

fn parse_f64(layers: &Layers, key: &str, default: f64) -> Result<f64> {
    let v: f64 = parse(layers, key, default)?;
    if !v.is_finite() {
        return Err(Error::Config(format!("`{key}` must be finite")));
    }
    Ok(v)
}

/// Fully resolved settings: every field has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    /// Principal point when given explicitly; otherwise the image center.
    pub principal_point: (Option<f64>, Option<f64>),
    pub flow: FlowParams,
    pub looming: LoomingParams,
    pub detect: DetectParams,
    pub mode: RatioMode,
    pub border: usize,
    pub trim_rounds: usize,
    pub fps: f64,
    pub search_window: f64,
    pub threads: usize,
}

impl RunConfig {
    pub fn resolve(layers: &Layers) -> Result<Self> {
        let d = SceneSpec::default();
        let width = parse(layers, "width", d.width)?;
        let height = parse(layers, "height", d.height)?;
        let cx = layers.get("cx").map(|_| parse_f64(layers, "cx", 0.0)).transpose()?;
        let cy = layers.get("cy").map(|_| parse_f64(layers, "cy", 0.0)).transpose()?;
        let fx = parse_f64(layers, "fx", d.intrinsics.fx)?;
        let fy = parse_f64(layers, "fy", d.intrinsics.fy)?;
        let intrinsics = CameraIntrinsics {
            fx,
            fy,
            cx: cx.unwrap_or(width as f64 / 2.0),
            cy: cy.unwrap_or(height as f64 / 2.0),
        };
        let scene = SceneSpec {
            width,
            height,
            intrinsics,
            plane_depth: parse_f64(layers, "plane_depth", d.plane_depth)?,
            texture_seed: parse(layers, "texture_seed", d.texture_seed)?,
            texture_scale: parse_f64(layers, "texture_scale", d.texture_scale)?,
            cam_velocity: (
                parse_f64(layers, "vel_x", d.cam_velocity.0)?,
                parse_f64(layers, "vel_y", d.cam_velocity.1)?,
                parse_f64(layers, "vel_z", d.cam_velocity.2)?,
            ),
            frames: parse(layers, "frames", d.frames)?,
            sprites: resolve_sprites(layers)?,
        };

        let fd = FlowParams::default();
        let flow = FlowParams {
            levels: parse(layers, "levels", fd.levels)?,
            iterations_per_level: parse(layers, "iterations", fd.iterations_per_level)?,
            poly_n: parse(layers, "poly_n", fd.poly_n)?,
            poly_sigma: parse_f64(layers, "poly_sigma", fd.poly_sigma)?,
            win_size: parse(layers, "win_size", fd.win_size)?,
            regularization: parse_f64(layers, "regularization", fd.regularization)?,
        };
        flow.validate().map_err(|e| Error::Config(e.to_string()))?;

        let ld = LoomingParams::default();
        let tau_mag = parse_f64(layers, "tau_mag", ld.tau_mag)?;
        let looming = LoomingParams {
            eps_den: parse_f64(layers, "eps_den", ld.eps_den)?,
            r_max: parse_f64(layers, "r_max", ld.r_max)?,
            tau_mag,
            orientation: parse(layers, "orientation", ld.orientation)?,
        };
        if !(looming.eps_den > 0.0 && looming.r_max > 0.0 && tau_mag >= 0.0) {
            return Err(Error::Config(
                "eps_den and r_max must be positive, tau_mag non-negative".into(),
            ));
        }
        let dd = DetectParams::default();
        let direction_test = match layers.get("direction_test").unwrap_or("signed") {
            "signed" => DirectionTest::Signed,
            "unsigned" => DirectionTest::Unsigned,
            other => {
                return Err(Error::Config(format!(
                    "bad value `{other}` for `direction_test` (signed|unsigned)"
                )))
            }
        };
        let detect = DetectParams {
            tau_mag,
            tau_dir: parse_f64(layers, "tau_dir", dd.tau_dir)?,
            min_area: parse(layers, "min_area", dd.min_area)?,
            direction_test,
        };
        if !(detect.tau_dir >= 0.0) {
            return Err(Error::Config("tau_dir must be non-negative".into()));
        }

        let fps = parse_f64(layers, "fps", 30.0)?;
        let search_window = parse_f64(layers, "search_window", 3.0)?;
        if !(fps > 0.0 && search_window >= 0.0) {
            return Err(Error::Config("fps must be positive and search_window non-negative".into()));
        }
        Ok(Self {
            scene,
            principal_point: (cx, cy),
            flow,
            looming,
            detect,
            mode: parse(layers, "mode", RatioMode::Pixel)?,
            border: parse(layers, "border", 16)?,
            trim_rounds: parse(layers, "trim_rounds", 3)?,
            fps,
            search_window,
            threads: parse(layers, "threads", 0)?,
        })
    }

    /// Intrinsics for an image of the given size.
    pub fn intrinsics_for(&self, width: usize, height: usize) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.scene.intrinsics.fx,
            fy: self.scene.intrinsics.fy,
            cx: self.principal_point.0.unwrap_or(width as f64 / 2.0),
            cy: self.principal_point.1.unwrap_or(height as f64 / 2.0),
        }
    }

    fn value_of(&self, key: &str) -> String {
        let s = &self.scene;
        match key {
            "width" => s.width.to_string(),
            "height" => s.height.to_string(),
            "fx" => s.intrinsics.fx.to_string(),
            "fy" => s.intrinsics.fy.to_string(),
            "cx" => s.intrinsics.cx.to_string(),
            "cy" => s.intrinsics.cy.to_string(),
            "plane_depth" => s.plane_depth.to_string(),
            "texture_seed" => s.texture_seed.to_string(),
            "texture_scale" => s.texture_scale.to_string(),
            "vel_x" => s.cam_velocity.0.to_string(),
            "vel_y" => s.cam_velocity.1.to_string(),
            "vel_z" => s.cam_velocity.2.to_string(),
            "frames" => s.frames.to_string(),
            "levels" => self.flow.levels.to_string(),
            "iterations" => self.flow.iterations_per_level.to_string(),
            "poly_n" => self.flow.poly_n.to_string(),
            "poly_sigma" => self.flow.poly_sigma.to_string(),
            "win_size" => self.flow.win_size.to_string(),
            "regularization" => self.flow.regularization.to_string(),
            "mode" => self.mode.to_string(),
            "orientation" => self.looming.orientation.as_str().to_string(),
            "eps_den" => self.looming.eps_den.to_string(),
            "r_max" => self.looming.r_max.to_string(),
            "tau_mag" => self.looming.tau_mag.to_string(),
            "tau_dir" => self.detect.tau_dir.to_string(),
            "min_area" => self.detect.min_area.to_string(),
            "direction_test" => match self.detect.direction_test {
                DirectionTest::Signed => "signed".to_string(),
                DirectionTest::Unsigned => "unsigned".to_string(),
            },
            "border" => self.border.to_string(),
            "trim_rounds" => self.trim_rounds.to_string(),
            "fps" => self.fps.to_string(),
            "search_window" => self.search_window.to_string(),
            "threads" => self.threads.to_string(),
            _ => unreachable!("unlisted key {key}"),
        }
    }

    /// `key=value` lines that resolve back to this configuration, without
    /// `threads` (which does not affect any output).
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            if *key == "threads" {
                continue;
            }
            let _ = writeln!(out, "{key}={}", self.value_of(key));
        }
        for (n, sp) in self.scene.sprites.iter().enumerate() {
            let fields = [
                sp.depth,
                sp.size.0,
                sp.size.1,
                sp.start.0,
                sp.start.1,
                sp.velocity.0,
                sp.velocity.1,
                sp.albedo_offset,
            ];
            for (name, v) in SPRITE_FIELDS.iter().zip(fields) {
                let _ = writeln!(out, "sprite.{n}.{name}={v}");
            }
        }
        out
    }
}

fn resolve_sprites(layers: &Layers) -> Result<Vec<Sprite>> {
    let mut fields: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for (k, v) in &layers.values {
        if let Some((n, field)) = sprite_key(k) {
            let x: f64 = v
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::Config(format!("bad value `{v}` for `{k}`")))?;
            fields.entry(n).or_default().insert(field, x);
        }
    }
    let mut sprites = Vec::with_capacity(fields.len());
    for (expected, (n, f)) in fields.iter().enumerate() {
        if *n != expected {
            return Err(Error::Config(format!(
                "sprite indices must be contiguous from 0; found sprite.{n} without sprite.{expected}"
            )));
        }
        let required = |name: &str| {
            f.get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("sprite.{n}.{name} is required")))
        };
        let optional = |name: &str| f.get(name).copied().unwrap_or(0.0);
        sprites.push(Sprite {
            depth: required("depth")?,
            size: (required("size_w")?, required("size_h")?),
            start: (optional("start_x"), optional("start_y")),
            velocity: (optional("vel_x"), optional("vel_y")),
            albedo_offset: optional("albedo"),
        });
    }
    Ok(sprites)
}

impl FromStr for Layers {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut l = Layers::default();
        for (k, v) in parse_config_text(text)? {
            l.set(k, v);
        }
        Ok(l)
    }
}
