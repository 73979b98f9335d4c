use crate::error::{Error, Result};
use crate::flow::displacement::condition_sym2;
use crate::flow::FlowField;
use crate::par;

/// Normal matrices with a larger condition number are rejected.
pub const MAX_FOE_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocusOfExpansion {
    pub x0: f64,
    pub y0: f64,
    /// RMS of `du (v - y0) - dv (u - x0)` over the samples used.
    pub rms_residual: f64,
    /// Condition number of the 2x2 normal matrix.
    pub condition: f64,
    pub samples: usize,
}

/// Accumulated normal equations, summed per row and then over rows in order
/// so the result does not depend on scheduling.
#[derive(Debug, Clone, Copy, Default)]
struct Normal {
    m11: f64,
    m12: f64,
    m22: f64,
    r1: f64,
    r2: f64,
    n: usize,
}

fn accumulate<F>(flow: &FlowField, tau_mag: f64, keep: F) -> Normal
where
    F: Fn(usize, usize, f64, f64) -> bool + Send + Sync,
{
    let (w, h) = flow.dims();
    let rows = par::map_indices(h, |y| {
        let mut acc = Normal::default();
        for x in 0..w {
            if !flow.is_valid(x, y) {
                continue;
            }
            let (du, dv) = flow.get(x, y);
            if du.hypot(dv) < tau_mag || !keep(x, y, du, dv) {
                continue;
            }
            // residual = dv*x0 - du*y0 - (dv*u - du*v)
            let (a1, a2) = (dv, -du);
            let c = dv * x as f64 - du * y as f64;
            acc.m11 += a1 * a1;
            acc.m12 += a1 * a2;
            acc.m22 += a2 * a2;
            acc.r1 += a1 * c;
            acc.r2 += a2 * c;
            acc.n += 1;
        }
        acc
    });
    rows.into_iter().fold(Normal::default(), |mut t, r| {
        t.m11 += r.m11;
        t.m12 += r.m12;
        t.m22 += r.m22;
        t.r1 += r.r1;
        t.r2 += r.r2;
        t.n += r.n;
        t
    })
}

fn solve<F>(flow: &FlowField, tau_mag: f64, keep: F) -> Result<FocusOfExpansion>
where
    F: Fn(usize, usize, f64, f64) -> bool + Send + Sync,
{
    let ne = accumulate(flow, tau_mag, &keep);
    let condition = condition_sym2(ne.m11, ne.m12, ne.m22);
    if ne.n < 2 || !(condition <= MAX_FOE_CONDITION) {
        return Err(Error::DegenerateGeometry {
            condition,
            samples: ne.n,
        });
    }
    let det = ne.m11 * ne.m22 - ne.m12 * ne.m12;
    let x0 = (ne.m22 * ne.r1 - ne.m12 * ne.r2) / det;
    let y0 = (ne.m11 * ne.r2 - ne.m12 * ne.r1) / det;

    let (w, h) = flow.dims();
    let row_sq = par::map_indices(h, |y| {
        let mut s = 0.0;
        for x in 0..w {
            if !flow.is_valid(x, y) {
                continue;
            }
            let (du, dv) = flow.get(x, y);
            if du.hypot(dv) < tau_mag || !keep(x, y, du, dv) {
                continue;
            }
            let r = du * (y as f64 - y0) - dv * (x as f64 - x0);
            s += r * r;
        }
        s
    });
    let sq: f64 = row_sq.into_iter().sum();
    Ok(FocusOfExpansion {
        x0,
        y0,
        rms_residual: (sq / ne.n as f64).sqrt(),
        condition,
        samples: ne.n,
    })
}

/// Least-squares intersection of the flow lines: minimizes
/// `sum (du (v - y0) - dv (u - x0))^2` over valid pixels with `|d| >= tau_mag`.
pub fn estimate_foe(flow: &FlowField, tau_mag: f64) -> Result<FocusOfExpansion> {
    solve(flow, tau_mag, |_, _, _, _| true)
}

/// [`estimate_foe`] followed by `rounds` refits that drop pixels whose flow
/// direction is more than `tau_dir` away from the outward radial direction
/// of the previous estimate.
pub fn estimate_foe_trimmed(
    flow: &FlowField,
    tau_mag: f64,
    tau_dir: f64,
    rounds: usize,
) -> Result<FocusOfExpansion> {
    let mut foe = estimate_foe(flow, tau_mag)?;
    for _ in 0..rounds {
        let current = foe;
        let next = solve(flow, tau_mag, |x, y, du, dv| {
            super::detect::direction_deviation(
                du,
                dv,
                x as f64 - current.x0,
                y as f64 - current.y0,
                super::DirectionTest::Signed,
            )
            .abs()
                <= tau_dir
        });
        match next {
            Ok(f) => foe = f,
            // Too few inliers left: keep the previous estimate.
            Err(_) => break,
        }
    }
    Ok(foe)
}
