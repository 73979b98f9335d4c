use super::{FlowField, PolyExpansion};
use crate::error::{Error, Result};
use crate::par;
use crate::raster::{correlate_separable, gaussian_kernel};

/// Systems with a larger condition estimate are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Smoothed `A'A` with a smaller trace, in (intensity / px^2)^2, carries no
/// usable structure (flat patches only produce roundoff here).
pub const MIN_STRUCTURE: f64 = 1e-12;

/// One refinement of the displacement field.
///
/// For each pixel the second expansion is read at the prior displacement
/// rounded to the nearest pixel. With `k` that integer offset, the local
/// constraint is `A d = -1/2 (b2(x+k) - b1(x)) + A k`, where `A` is the
/// average of both quadratic terms. The normal equations `A'A`, `A'db` are
/// smoothed with a Gaussian window (sigma = `win_size / 5`) and solved per
/// pixel after adding `regularization * trace` to the diagonal.
pub fn displacement_step(
    e1: &PolyExpansion,
    e2: &PolyExpansion,
    prior: &FlowField,
    win_size: usize,
    regularization: f64,
) -> Result<FlowField> {
    if e1.dims() != e2.dims() {
        return Err(Error::DimensionMismatch {
            left: e1.dims(),
            right: e2.dims(),
        });
    }
    if e1.dims() != prior.dims() {
        return Err(Error::DimensionMismatch {
            left: e1.dims(),
            right: prior.dims(),
        });
    }
    if win_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "win_size must be odd, got {win_size}"
        )));
    }
    let (w, h) = e1.dims();
    let n = w * h;

    // Per-pixel terms: [g11, g12, g22, h1, h2] interleaved by row.
    let mut terms = vec![[0.0f64; 5]; n];
    par::fill_rows(&mut terms, w, |y, row| {
        for (x, t) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let (pu, pv) = (prior.du[i], prior.dv[i]);
            let tx = (x as f64 + pu.round()).clamp(0.0, (w - 1) as f64) as usize;
            let ty = (y as f64 + pv.round()).clamp(0.0, (h - 1) as f64) as usize;
            let j = ty * w + tx;
            let kx = tx as f64 - x as f64;
            let ky = ty as f64 - y as f64;

            let a11 = 0.5 * (e1.a11[i] + e2.a11[j]);
            let a12 = 0.5 * (e1.a12[i] + e2.a12[j]);
            let a22 = 0.5 * (e1.a22[i] + e2.a22[j]);
            let db1 = -0.5 * (e2.b1[j] - e1.b1[i]) + a11 * kx + a12 * ky;
            let db2 = -0.5 * (e2.b2[j] - e1.b2[i]) + a12 * kx + a22 * ky;

            *t = [
                a11 * a11 + a12 * a12,
                a12 * (a11 + a22),
                a12 * a12 + a22 * a22,
                a11 * db1 + a12 * db2,
                a12 * db1 + a22 * db2,
            ];
        }
    });

    let kernel = gaussian_kernel(win_size as f64 / 5.0, win_size / 2);
    let smoothed: Vec<Vec<f64>> = (0..5)
        .map(|k| {
            let plane: Vec<f64> = terms.iter().map(|t| t[k]).collect();
            correlate_separable(&plane, w, h, &kernel, &kernel)
        })
        .collect();

    let mut out = vec![(0.0f64, 0.0f64, false); n];
    par::fill_rows(&mut out, w, |y, row| {
        for (x, o) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let (g11, g12, g22) = (smoothed[0][i], smoothed[1][i], smoothed[2][i]);
            let (h1, h2) = (smoothed[3][i], smoothed[4][i]);
            let reg = regularization * (g11 + g22);
            if !(g11 + g22 > MIN_STRUCTURE) {
                *o = (prior.du[i], prior.dv[i], false);
                continue;
            }
            *o = match solve_spd2(g11 + reg, g12, g22 + reg, h1, h2) {
                Some((du, dv)) => (du, dv, true),
                None => (prior.du[i], prior.dv[i], false),
            };
        }
    });

    let mut du = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for (a, b, v) in out {
        du.push(a);
        dv.push(b);
        valid.push(v);
    }
    Ok(FlowField {
        width: w,
        height: h,
        du,
        dv,
        valid,
    })
}

/// Condition number of a symmetric 2x2 matrix `[[a, b], [b, c]]`, infinite
/// when it is not positive definite.
pub(crate) fn condition_sym2(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let dev = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let hi = mean + dev;
    let lo = mean - dev;
    if !(lo > 0.0) || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn solve_spd2(a: f64, b: f64, c: f64, r1: f64, r2: f64) -> Option<(f64, f64)> {
    if condition_sym2(a, b, c) > MAX_CONDITION {
        return None;
    }
    let det = a * c - b * b;
    Some(((c * r1 - b * r2) / det, (a * r2 - b * r1) / det))
}
