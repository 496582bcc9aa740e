//! Non-learned interpolators: the nearest-frame baseline and dense optical
//! flow with midpoint synthesis.
//!
//! Flow is estimated coarse to fine with local quadratic expansions of both
//! frames. At every pyramid level the expansion of the first frame is warped
//! by the current flow estimate, the residual displacement is solved from
//! window-averaged normal equations, and the result is accumulated.

mod plane;
mod poly;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Delta, RainMap};

pub use plane::Plane;
pub use poly::{poly_expansion, PolyExpansion, Quadratic};

use plane::{gaussian_blur, gaussian_taps, resize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FlowConfig {
    pub pyramid_levels: usize,
    /// Per-level downscale factor in (0, 1).
    pub pyramid_scale: f64,
    /// Radius in cells of the Gaussian window used to average the normal
    /// equations; the window's standard deviation is `window / 3`.
    pub window: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
    pub regularization: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
            regularization: 1e-6,
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.poly_n < 3 || self.poly_n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "poly_n must be odd and >= 3, got {}",
                self.poly_n
            )));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::Config("pyramid_levels must be >= 1".into()));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::Config(format!(
                "pyramid_scale must lie in (0, 1), got {}",
                self.pyramid_scale
            )));
        }
        if self.window == 0 || !positive(self.poly_sigma) || !positive(self.regularization) {
            return Err(Error::Config(
                "window, poly_sigma and regularization must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-cell displacement from the first frame toward the second, in cells
/// per frame gap. `u` is horizontal (columns), `v` vertical (rows).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(rows, cols, 0.0, 0.0)
    }

    pub fn constant(rows: usize, cols: usize, u: f64, v: f64) -> Self {
        Self {
            rows,
            cols,
            u: vec![u; rows * cols],
            v: vec![v; rows * cols],
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f64::max)
    }

    /// `(u, v)` as signed grids for inspection dumps.
    pub fn components(&self) -> (Delta, Delta) {
        let mk = |d: &[f64]| Delta {
            rows: self.rows,
            cols: self.cols,
            values: d.iter().map(|&x| x as f32).collect(),
        };
        (mk(&self.u), mk(&self.v))
    }
}

/// Returns the predecessor frame: ties in temporal distance go to `f0`.
pub fn nearest_frame(f0: &RainMap, f1: &RainMap) -> Result<RainMap> {
    f0.ensure_same_shape(f1)?;
    Ok(f0.clone())
}

pub fn estimate_flow(f0: &RainMap, f1: &RainMap, cfg: &FlowConfig) -> Result<FlowField> {
    cfg.validate()?;
    f0.ensure_same_shape(f1)?;
    let flow = estimate_flow_planes(&Plane::from_map(f0), &Plane::from_map(f1), cfg);
    if flow.u.iter().chain(&flow.v).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(
            "optical flow produced non-finite displacement".into(),
        ));
    }
    Ok(flow)
}

fn pyramid(src: &Plane, cfg: &FlowConfig) -> Vec<Plane> {
    let min_side = cfg.poly_n.max(4);
    let mut levels = vec![src.clone()];
    let mut scale = 1.0;
    for _ in 1..cfg.pyramid_levels {
        scale *= cfg.pyramid_scale;
        let rows = (src.rows as f64 * scale).round() as usize;
        let cols = (src.cols as f64 * scale).round() as usize;
        if rows < min_side || cols < min_side {
            break;
        }
        let sigma = (1.0 / scale - 1.0) * 0.5;
        levels.push(resize(&gaussian_blur(src, sigma), rows, cols));
    }
    levels
}

pub fn estimate_flow_planes(p0: &Plane, p1: &Plane, cfg: &FlowConfig) -> FlowField {
    let pyr0 = pyramid(p0, cfg);
    let pyr1 = pyramid(p1, cfg);

    let mut flow: Option<FlowField> = None;
    for (l0, l1) in pyr0.iter().zip(&pyr1).rev() {
        let mut current = match flow.take() {
            None => FlowField::zeros(l0.rows, l0.cols),
            Some(coarse) => upscale_flow(&coarse, l0.rows, l0.cols),
        };
        let e0 = poly_expansion(l0, cfg.poly_n, cfg.poly_sigma);
        let e1 = poly_expansion(l1, cfg.poly_n, cfg.poly_sigma);
        for _ in 0..cfg.iterations {
            refine(&e0, &e1, &mut current, cfg);
        }
        flow = Some(current);
    }
    flow.expect("pyramid has at least one level")
}

fn upscale_flow(coarse: &FlowField, rows: usize, cols: usize) -> FlowField {
    let su = cols as f64 / coarse.cols as f64;
    let sv = rows as f64 / coarse.rows as f64;
    let u = resize(
        &Plane {
            rows: coarse.rows,
            cols: coarse.cols,
            data: coarse.u.clone(),
        },
        rows,
        cols,
    );
    let v = resize(
        &Plane {
            rows: coarse.rows,
            cols: coarse.cols,
            data: coarse.v.clone(),
        },
        rows,
        cols,
    );
    FlowField {
        rows,
        cols,
        u: u.data.into_iter().map(|x| x * su).collect(),
        v: v.data.into_iter().map(|x| x * sv).collect(),
    }
}

/// One residual update of `flow` at a single pyramid level.
fn refine(e0: &PolyExpansion, e1: &PolyExpansion, flow: &mut FlowField, cfg: &FlowConfig) {
    let (rows, cols) = (e0.rows, e0.cols);
    // Normal-equation terms: G = dA^T dA (g00, g01, g11), h = dA^T db.
    let mut terms: [Plane; 5] = std::array::from_fn(|_| Plane::zeros(rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let w0 = e0.sample(r as f64 - flow.v[i], c as f64 - flow.u[i]);
            let k1 = &e1.coeffs[i];
            let a00 = 0.5 * (w0[0] + k1[0]);
            let a11 = 0.5 * (w0[1] + k1[1]);
            let a01 = 0.5 * (w0[2] + k1[2]);
            let db0 = -0.5 * (k1[3] - w0[3]);
            let db1 = -0.5 * (k1[4] - w0[4]);
            terms[0].data[i] = a00 * a00 + a01 * a01;
            terms[1].data[i] = a00 * a01 + a01 * a11;
            terms[2].data[i] = a01 * a01 + a11 * a11;
            terms[3].data[i] = a00 * db0 + a01 * db1;
            terms[4].data[i] = a01 * db0 + a11 * db1;
        }
    }

    let mut taps = gaussian_taps(cfg.window, cfg.window as f64 / 3.0);
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    let avg: Vec<Plane> = terms
        .iter()
        .map(|t| plane::filter_cols(&plane::filter_rows(t, &taps), &taps))
        .collect();

    let lambda = cfg.regularization;
    for i in 0..rows * cols {
        let g00 = avg[0].data[i] + lambda;
        let g01 = avg[1].data[i];
        let g11 = avg[2].data[i] + lambda;
        let h0 = avg[3].data[i];
        let h1 = avg[4].data[i];
        let det = g00 * g11 - g01 * g01;
        if det > 0.0 {
            flow.u[i] += (g11 * h0 - g01 * h1) / det;
            flow.v[i] += (g00 * h1 - g01 * h0) / det;
        }
    }
}

/// Builds the midpoint frame by sampling each input half a flow vector
/// away: `out(p) = (f0(p - d/2) + f1(p + d/2)) / 2`. Bilinear taps outside
/// the grid read zero.
pub fn midpoint_synthesize(f0: &RainMap, f1: &RainMap, flow: &FlowField) -> Result<RainMap> {
    f0.ensure_same_shape(f1)?;
    if (flow.rows, flow.cols) != f0.shape() {
        return Err(Error::shape(
            &[f0.rows(), f0.cols()],
            &[flow.rows, flow.cols],
        ));
    }
    let p0 = Plane::from_map(f0);
    let p1 = Plane::from_map(f1);
    let cols = f0.cols();
    let values = (0..f0.len())
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            let (hu, hv) = (0.5 * flow.u[i], 0.5 * flow.v[i]);
            let v = 0.5 * p0.sample_zero(r - hv, c - hu) + 0.5 * p1.sample_zero(r + hv, c + hu);
            v as f32
        })
        .collect();
    RainMap::from_clamped(f0.rows(), f0.cols(), values, f0.is_normalized())
}

/// Flow estimation followed by midpoint synthesis.
pub fn flow_interpolate(f0: &RainMap, f1: &RainMap, cfg: &FlowConfig) -> Result<RainMap> {
    let flow = estimate_flow(f0, f1, cfg)?;
    midpoint_synthesize(f0, f1, &flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{field_at, CellParams};

    fn blob(
        rows: usize,
        cols: usize,
        cells: &[(f64, f64, f64, f64)],
        shift: (f64, f64),
    ) -> RainMap {
        let cells: Vec<CellParams> = cells
            .iter()
            .map(|&(a, r, c, s)| CellParams {
                amplitude: a,
                center_row: r + shift.0,
                center_col: c + shift.1,
                vel_row: 0.0,
                vel_col: 0.0,
                sigma: s,
                growth: 1.0,
            })
            .collect();
        field_at(rows, cols, &cells, &[], 0.0)
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let f = blob(
            48,
            48,
            &[(0.8, 20.0, 25.0, 5.0), (0.5, 30.0, 12.0, 3.0)],
            (0.0, 0.0),
        );
        let flow = estimate_flow(&f, &f, &FlowConfig::default()).unwrap();
        assert!(flow.max_magnitude() < 1e-6);
    }

    #[test]
    fn dry_frames_give_zero_flow() {
        let z = RainMap::zeros(32, 32, true);
        let flow = estimate_flow(&z, &z, &FlowConfig::default()).unwrap();
        assert!(flow.max_magnitude() < 1e-6);
        let mid = midpoint_synthesize(&z, &z, &flow).unwrap();
        assert_eq!(mid.max(), 0.0);
    }

    #[test]
    fn recovers_horizontal_translation() {
        let cells = [
            (0.9, 60.0, 55.0, 8.0),
            (0.6, 40.0, 80.0, 6.0),
            (0.7, 85.0, 70.0, 7.0),
        ];
        let f0 = blob(128, 128, &cells, (0.0, 0.0));
        let f1 = blob(128, 128, &cells, (0.0, 3.0));
        let flow = estimate_flow(&f0, &f1, &FlowConfig::default()).unwrap();
        let (mut err, mut n) = (0.0, 0);
        for (i, &val) in f0.values().iter().enumerate() {
            if val > 0.05 {
                err += (flow.u[i] - 3.0).hypot(flow.v[i]);
                n += 1;
            }
        }
        assert!(
            err / (n as f64) < 0.5,
            "mean endpoint error {}",
            err / n as f64
        );
    }

    #[test]
    fn midpoint_with_exact_flow() {
        let cells = [(0.9, 20.0, 20.0, 4.0)];
        let f0 = blob(40, 48, &cells, (0.0, 0.0));
        let f1 = blob(40, 48, &cells, (0.0, 2.0));
        let truth = blob(40, 48, &cells, (0.0, 1.0));
        let mid = midpoint_synthesize(&f0, &f1, &FlowField::constant(40, 48, 2.0, 0.0)).unwrap();
        assert_eq!(mid.argmax(), (20, 21));
        assert_eq!(f0.argmax(), (20, 20));
        let mae: f64 = mid
            .values()
            .iter()
            .zip(truth.values())
            .map(|(a, b)| (a - b).abs() as f64)
            .sum::<f64>()
            / mid.len() as f64;
        assert!(mae < 0.01, "mae {mae}");
    }

    #[test]
    fn zero_flow_midpoint_is_average() {
        let a = blob(16, 16, &[(0.9, 5.0, 5.0, 3.0)], (0.0, 0.0));
        let b = blob(16, 16, &[(0.4, 9.0, 11.0, 2.0)], (0.0, 0.0));
        let mid = midpoint_synthesize(&a, &b, &FlowField::zeros(16, 16)).unwrap();
        for ((m, x), y) in mid.values().iter().zip(a.values()).zip(b.values()) {
            assert_eq!(*m, (0.5 * *x as f64 + 0.5 * *y as f64) as f32);
        }
        let same = midpoint_synthesize(&a, &a, &FlowField::zeros(16, 16)).unwrap();
        assert_eq!(same, a);
    }

    #[test]
    fn nearest_is_predecessor() {
        let a = blob(8, 8, &[(0.9, 4.0, 4.0, 2.0)], (0.0, 0.0));
        let b = blob(8, 8, &[(0.9, 4.0, 4.0, 2.0)], (0.0, 0.5));
        assert_eq!(nearest_frame(&a, &b).unwrap(), a);
        assert_eq!(nearest_frame(&a, &a).unwrap(), a);
        assert!(nearest_frame(&a, &RainMap::zeros(4, 8, true)).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = FlowConfig::default();
        assert!(ok.validate().is_ok());
        assert!(FlowConfig {
            poly_n: 4,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(FlowConfig {
            pyramid_levels: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(FlowConfig {
            pyramid_scale: 1.0,
            ..ok
        }
        .validate()
        .is_err());
    }
}
