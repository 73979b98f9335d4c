//! Time alignment of an accelerometer recording with the video it was
//! captured alongside, by cross-correlating vertical acceleration with the
//! mean vertical image motion.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::formats::ImuSeries;

/// Correlation peaks below this are treated as "no alignment found".
pub const MIN_PEAK: f64 = 0.2;

/// One scalar per frame pair at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTrace {
    pub values: Vec<f64>,
    pub fps: f64,
}

impl MotionTrace {
    pub fn new(values: Vec<f64>, fps: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "motion trace needs >= 2 samples, got {}",
                values.len()
            )));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self { values, fps })
    }

    /// Seconds between the first and last sample.
    pub fn duration(&self) -> f64 {
        (self.values.len() - 1) as f64 / self.fps
    }
}

/// Mean `dv` over the valid pixels of each field.
pub fn vertical_motion_series(flows: &[FlowField], fps: f64) -> Result<MotionTrace> {
    if flows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 flow fields, got {}",
            flows.len()
        )));
    }
    let dims = flows[0].dims();
    let mut values = Vec::with_capacity(flows.len());
    for (index, f) in flows.iter().enumerate() {
        if f.dims() != dims {
            return Err(Error::DimensionMismatch {
                left: dims,
                right: f.dims(),
            });
        }
        let (sum, n) = f
            .dv()
            .iter()
            .zip(f.valid())
            .filter(|(_, &ok)| ok)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n == 0 {
            return Err(Error::NoValidPixels { index });
        }
        values.push(sum / n as f64);
    }
    MotionTrace::new(values, fps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Seconds to add to a frame time to get the matching IMU time.
    pub offset: f64,
    pub lag_frames: i64,
    /// Normalized correlation at `lag_frames`.
    pub peak: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Linear interpolation of `(t, y)` at `at`; `None` outside the sampled span.
fn interpolate(t: &[f64], y: &[f64], at: f64) -> Option<f64> {
    if !(at >= t[0] && at <= t[t.len() - 1]) {
        return None;
    }
    let j = t.partition_point(|&s| s <= at);
    if j == t.len() {
        return Some(y[t.len() - 1]);
    }
    let i = j - 1;
    let w = (at - t[i]) / (t[j] - t[i]);
    Some(y[i] + w * (y[j] - y[i]))
}

fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (ma, mb) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (ma, mb) = (ma / n, mb / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (a, b) = (x - ma, y - mb);
        sab += a * b;
        saa += a * a;
        sbb += b * b;
    }
    let den = (saa * sbb).sqrt();
    (den > 0.0).then(|| sab / den)
}

/// Finds the shift between `imu.az` and `trace` that maximizes their
/// normalized cross-correlation, over integer frame lags within
/// `search_window` seconds.
///
/// `az` is debiased by its median and linearly resampled at
/// `m / fps + lag / fps` for trace sample `m`; only samples inside the IMU
/// time span take part, and a lag needs at least half the trace to overlap.
pub fn estimate_offset(imu: &ImuSeries, trace: &MotionTrace, search_window: f64) -> Result<Alignment> {
    if !(search_window >= 0.0 && search_window.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "search window must be non-negative, got {search_window}"
        )));
    }
    let t = &imu.timestamps;
    let imu_span = t[t.len() - 1] - t[0];
    if trace.duration() < 2.0 * search_window || imu_span < 2.0 * search_window {
        return Err(Error::InvalidArgument(format!(
            "signals must cover twice the search window ({:.3} s): video {:.3} s, IMU {:.3} s",
            2.0 * search_window,
            trace.duration(),
            imu_span
        )));
    }
    let bias = median(&imu.az);
    let az: Vec<f64> = imu.az.iter().map(|a| a - bias).collect();
    let mean = trace.values.iter().sum::<f64>() / trace.values.len() as f64;
    let video: Vec<f64> = trace.values.iter().map(|v| v - mean).collect();

    let max_lag = (search_window * trace.fps).round() as i64;
    let min_overlap = (video.len() / 2).max(2);
    let mut best: Option<(i64, f64)> = None;
    let mut pairs = Vec::with_capacity(video.len());
    for lag in -max_lag..=max_lag {
        pairs.clear();
        for (m, &v) in video.iter().enumerate() {
            let at = (m as i64 + lag) as f64 / trace.fps;
            if let Some(a) = interpolate(t, &az, at) {
                pairs.push((v, a));
            }
        }
        if pairs.len() < min_overlap {
            continue;
        }
        let Some(r) = pearson(&pairs) else { continue };
        let better = match best {
            None => true,
            Some((bl, br)) => r > br || (r == br && lag.abs() < bl.abs()),
        };
        if better {
            best = Some((lag, r));
        }
    }
    let (lag, peak) = best.unwrap_or((0, f64::NAN));
    if !(peak >= MIN_PEAK) {
        return Err(Error::NoAlignment {
            peak,
            threshold: MIN_PEAK,
        });
    }
    Ok(Alignment {
        offset: lag as f64 / trace.fps,
        lag_frames: lag,
        peak,
    })
}
