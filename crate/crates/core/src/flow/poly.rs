//! Local quadratic signal model: per cell, a Gaussian-weighted least-squares
//! fit of `f(p + x) ~ x^T A x + b^T x + c` over a square neighborhood.
//!
//! Coordinates are `x = (col offset, row offset)`, so `b[0]` is the
//! horizontal slope and `A[0][0]` the horizontal curvature.
//!
//! The six moments `sum w * phi_k * f` against the basis
//! `{1, x, y, x^2, y^2, xy}` are separable, so they come from three row
//! filters and six column filters. Edge replication leaves the full
//! neighborhood in play at the borders, so one constant Gram matrix inverts
//! the moments everywhere.

use nalgebra::{Matrix6, Vector6};

use super::plane::{filter_cols, filter_rows, gaussian_taps, Plane};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quadratic {
    pub a: [[f64; 2]; 2],
    pub b: [f64; 2],
    pub c: f64,
}

#[derive(Clone, Debug)]
pub struct PolyExpansion {
    pub rows: usize,
    pub cols: usize,
    /// Per cell: `[a00, a11, a01, b0, b1, c]`.
    pub(crate) coeffs: Vec<[f64; 6]>,
}

impl PolyExpansion {
    pub fn at(&self, row: usize, col: usize) -> Quadratic {
        unpack(&self.coeffs[row * self.cols + col])
    }

    /// Coefficients bilinearly interpolated at a fractional position,
    /// replicating edges.
    pub(crate) fn sample(&self, r: f64, c: f64) -> [f64; 6] {
        let r = r.clamp(0.0, (self.rows - 1) as f64);
        let c = c.clamp(0.0, (self.cols - 1) as f64);
        let r0 = r.floor() as usize;
        let c0 = c.floor() as usize;
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let fr = r - r0 as f64;
        let fc = c - c0 as f64;
        let w = [
            (1.0 - fr) * (1.0 - fc),
            (1.0 - fr) * fc,
            fr * (1.0 - fc),
            fr * fc,
        ];
        let taps = [
            &self.coeffs[r0 * self.cols + c0],
            &self.coeffs[r0 * self.cols + c1],
            &self.coeffs[r1 * self.cols + c0],
            &self.coeffs[r1 * self.cols + c1],
        ];
        let mut out = [0.0; 6];
        for (wk, t) in w.iter().zip(taps) {
            for (o, v) in out.iter_mut().zip(t) {
                *o += wk * v;
            }
        }
        out
    }
}

pub(crate) fn unpack(k: &[f64; 6]) -> Quadratic {
    Quadratic {
        a: [[k[0], k[2]], [k[2], k[1]]],
        b: [k[3], k[4]],
        c: k[5],
    }
}

/// Inverse Gram matrix of the weighted basis over the `poly_n` window.
fn inverse_gram(taps: &[f64]) -> Matrix6<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut gram = Matrix6::<f64>::zeros();
    for (j, &wy) in taps.iter().enumerate() {
        let y = (j as isize - radius) as f64;
        for (k, &wx) in taps.iter().enumerate() {
            let x = (k as isize - radius) as f64;
            let phi = Vector6::new(1.0, x, y, x * x, y * y, x * y);
            gram += wy * wx * phi * phi.transpose();
        }
    }
    gram.try_inverse()
        .expect("Gram matrix of a >=3x3 quadratic fit is positive definite")
}

/// Fits the quadratic model at every cell of `frame`.
pub fn poly_expansion(frame: &Plane, poly_n: usize, poly_sigma: f64) -> PolyExpansion {
    assert!(
        poly_n >= 3 && poly_n % 2 == 1,
        "poly_n must be odd and >= 3"
    );
    let radius = poly_n / 2;
    let g = gaussian_taps(radius, poly_sigma);
    let gx: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(k, w)| w * (k as f64 - radius as f64))
        .collect();
    let gxx: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let x = k as f64 - radius as f64;
            w * x * x
        })
        .collect();

    // Horizontal moments of order 0, 1, 2.
    let h0 = filter_rows(frame, &g);
    let h1 = filter_rows(frame, &gx);
    let h2 = filter_rows(frame, &gxx);

    let m_1 = filter_cols(&h0, &g);
    let m_x = filter_cols(&h1, &g);
    let m_y = filter_cols(&h0, &gx);
    let m_xx = filter_cols(&h2, &g);
    let m_yy = filter_cols(&h0, &gxx);
    let m_xy = filter_cols(&h1, &gx);

    let inv = inverse_gram(&g);
    let coeffs = (0..frame.rows * frame.cols)
        .map(|i| {
            let r = Vector6::new(
                m_1.data[i],
                m_x.data[i],
                m_y.data[i],
                m_xx.data[i],
                m_yy.data[i],
                m_xy.data[i],
            );
            // Basis order [1, x, y, x^2, y^2, xy].
            let s = inv * r;
            [s[3], s[4], 0.5 * s[5], s[1], s[2], s[0]]
        })
        .collect();
    PolyExpansion {
        rows: frame.rows,
        cols: frame.cols,
        coeffs,
    }
}
