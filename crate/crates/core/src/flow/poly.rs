use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::raster::{correlate_cols, correlate_rows, Frame};

/// Per-pixel quadratic model `f(x) ~ x'Ax + b'x + c` in local coordinates,
/// stored as one plane per coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyExpansion {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub c: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub a11: Vec<f64>,
    pub a12: Vec<f64>,
    pub a22: Vec<f64>,
}

impl PolyExpansion {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Coefficients at one pixel as `(c, [b1, b2], [a11, a12, a22])`.
    pub fn at(&self, x: usize, y: usize) -> (f64, [f64; 2], [f64; 3]) {
        let i = y * self.width + x;
        (
            self.c[i],
            [self.b1[i], self.b2[i]],
            [self.a11[i], self.a12[i], self.a22[i]],
        )
    }
}

/// Basis order used throughout: 1, x, y, x^2, y^2, xy.
fn basis(x: f64, y: f64) -> [f64; 6] {
    [1.0, x, y, x * x, y * y, x * y]
}

/// Inverse of the Gram matrix of the Gaussian-weighted basis over the window.
fn inverse_gram(radius: isize, sigma: f64) -> Result<Matrix6<f64>> {
    let mut gram = Matrix6::<f64>::zeros();
    for y in -radius..=radius {
        for x in -radius..=radius {
            let (xf, yf) = (x as f64, y as f64);
            let w = (-(xf * xf + yf * yf) / (2.0 * sigma * sigma)).exp();
            let b = Vector6::from(basis(xf, yf));
            gram += w * b * b.transpose();
        }
    }
    gram.try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular polynomial expansion gram matrix".into()))
}

/// Fits the six-term quadratic to the Gaussian-weighted `poly_n`x`poly_n`
/// neighborhood of every pixel.
///
/// The weights do not depend on the pixel, so the weighted moments
/// `sum w * basis_j * I` are six separable correlations and the fit is the
/// fixed inverse Gram matrix applied to them.
pub fn poly_expand(f: &Frame, poly_n: usize, poly_sigma: f64) -> Result<PolyExpansion> {
    if poly_n.is_multiple_of(2) || poly_n < 3 {
        return Err(Error::InvalidArgument(format!(
            "poly_n must be odd and >= 3, got {poly_n}"
        )));
    }
    if !(poly_sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "poly_sigma must be positive, got {poly_sigma}"
        )));
    }
    f.require_min(poly_n, poly_n)?;
    let (w, h) = f.dims();
    let r = (poly_n / 2) as isize;

    let g: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * poly_sigma * poly_sigma)).exp())
        .collect();
    let xg: Vec<f64> = (-r..=r).zip(&g).map(|(i, &gv)| i as f64 * gv).collect();
    let xxg: Vec<f64> = (-r..=r).zip(&g).map(|(i, &gv)| (i * i) as f64 * gv).collect();

    let src = f.pixels();
    let row_g = correlate_rows(src, w, h, &g);
    let row_xg = correlate_rows(src, w, h, &xg);
    let row_xxg = correlate_rows(src, w, h, &xxg);

    let moments = [
        correlate_cols(&row_g, w, h, &g),    // 1
        correlate_cols(&row_xg, w, h, &g),   // x
        correlate_cols(&row_g, w, h, &xg),   // y
        correlate_cols(&row_xxg, w, h, &g),  // x^2
        correlate_cols(&row_g, w, h, &xxg),  // y^2
        correlate_cols(&row_xg, w, h, &xg),  // xy
    ];

    let ginv = inverse_gram(r, poly_sigma)?;
    let n = w * h;
    let mut out = PolyExpansion {
        width: w,
        height: h,
        c: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
        a11: vec![0.0; n],
        a12: vec![0.0; n],
        a22: vec![0.0; n],
    };
    for i in 0..n {
        let m = Vector6::new(
            moments[0][i],
            moments[1][i],
            moments[2][i],
            moments[3][i],
            moments[4][i],
            moments[5][i],
        );
        let r = ginv * m;
        out.c[i] = r[0];
        out.b1[i] = r[1];
        out.b2[i] = r[2];
        out.a11[i] = r[3];
        out.a22[i] = r[4];
        // xy coefficient is 2*a12 in x'Ax
        out.a12[i] = 0.5 * r[5];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Direct weighted least squares at a single pixel: builds the full
    /// design matrix over the window and solves it by SVD.
    fn direct_fit(f: &Frame, px: usize, py: usize, n: usize, sigma: f64) -> [f64; 6] {
        let r = (n / 2) as isize;
        let rows = n * n;
        let mut a = DMatrix::<f64>::zeros(rows, 6);
        let mut b = DVector::<f64>::zeros(rows);
        let mut k = 0;
        for y in -r..=r {
            for x in -r..=r {
                let (xf, yf) = (x as f64, y as f64);
                let sw = (-(xf * xf + yf * yf) / (2.0 * sigma * sigma)).exp().sqrt();
                let terms = [1.0, xf, yf, xf * xf, yf * yf, xf * yf];
                for (j, t) in terms.iter().enumerate() {
                    a[(k, j)] = sw * t;
                }
                b[k] = sw * f.get_clamped(px as isize + x, py as isize + y);
                k += 1;
            }
        }
        let sol = a.svd(true, true).solve(&b, 1e-14).unwrap();
        [sol[0], sol[1], sol[2], sol[3], sol[4], 0.5 * sol[5]]
    }

    fn coeffs(e: &PolyExpansion, x: usize, y: usize) -> [f64; 6] {
        let (c, b, a) = e.at(x, y);
        [c, b[0], b[1], a[0], a[2], a[1]]
    }

    #[test]
    fn constant_frame() {
        let e = poly_expand(&Frame::constant(20, 20, 7.0), 7, 1.5).unwrap();
        for i in 0..400 {
            assert!((e.c[i] - 7.0).abs() < 1e-10);
            for v in [e.b1[i], e.b2[i], e.a11[i], e.a12[i], e.a22[i]] {
                assert!(v.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ramp_matches_direct_fit() {
        let f = Frame::from_fn(32, 24, |x, _| x as f64);
        let e = poly_expand(&f, 7, 1.5).unwrap();
        let direct = direct_fit(&f, 12, 10, 7, 1.5);
        let got = coeffs(&e, 12, 10);
        for k in 0..6 {
            assert!((got[k] - direct[k]).abs() < 1e-9, "k={k}: {} vs {}", got[k], direct[k]);
        }
        assert!((got[0] - 12.0).abs() < 1e-9);
        assert!((got[1] - 1.0).abs() < 1e-9);
        assert!(got[2].abs() < 1e-9);
        assert!(got[3].abs() < 1e-9 && got[4].abs() < 1e-9 && got[5].abs() < 1e-9);
    }

    #[test]
    fn pure_quadratic() {
        let u0 = 15.0;
        let f = Frame::from_fn(32, 20, |x, _| (x as f64 - u0).powi(2));
        let e = poly_expand(&f, 7, 1.5).unwrap();
        let (_, b, a) = e.at(15, 10);
        assert!((a[0] - 1.0).abs() < 1e-9);
        assert!(b[0].abs() < 1e-9);
        let direct = direct_fit(&f, 15, 10, 7, 1.5);
        assert!((direct[3] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn agrees_with_direct_fit_near_border() {
        let f = Frame::from_fn(24, 24, |x, y| ((x * 37 + y * 11) % 23) as f64 * 9.0);
        let e = poly_expand(&f, 5, 1.1).unwrap();
        for &(x, y) in &[(0, 0), (1, 22), (23, 5), (12, 12)] {
            let d = direct_fit(&f, x, y, 5, 1.1);
            let g = coeffs(&e, x, y);
            for k in 0..6 {
                assert!((g[k] - d[k]).abs() < 1e-8, "({x},{y}) k={k}");
            }
        }
    }

    #[test]
    fn rejects_small_or_even() {
        assert!(poly_expand(&Frame::constant(5, 20, 0.0), 7, 1.5).is_err());
        assert!(poly_expand(&Frame::constant(20, 20, 0.0), 6, 1.5).is_err());
        assert!(poly_expand(&Frame::constant(20, 20, 0.0), 7, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn expansion_is_linear(
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
            s1 in 0u64..1000,
            s2 in 0u64..1000,
        ) {
            let noise = |s: u64| {
                Frame::from_fn(18, 16, move |x, y| {
                    let h = ((x as u64 * 2654435761) ^ (y as u64 * 40503) ^ (s * 97)).wrapping_mul(0x9E3779B97F4A7C15);
                    (h >> 56) as f64
                })
            };
            let i1 = noise(s1);
            let i2 = noise(s2);
            let mix = Frame::from_fn(18, 16, |x, y| alpha * i1.get(x, y) + beta * i2.get(x, y));
            let e1 = poly_expand(&i1, 7, 1.5).unwrap();
            let e2 = poly_expand(&i2, 7, 1.5).unwrap();
            let em = poly_expand(&mix, 7, 1.5).unwrap();
            for y in 0..16 {
                for x in 0..18 {
                    let a = coeffs(&e1, x, y);
                    let b = coeffs(&e2, x, y);
                    let m = coeffs(&em, x, y);
                    for k in 0..6 {
                        prop_assert!((m[k] - (alpha * a[k] + beta * b[k])).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
