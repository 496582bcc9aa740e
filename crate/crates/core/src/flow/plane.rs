//! Double-precision scratch grids plus the filtering and sampling helpers
//! the flow estimator needs.

use crate::raster::RainMap;

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_map(map: &RainMap) -> Self {
        Self {
            rows: map.rows(),
            cols: map.cols(),
            data: map.values().iter().map(|&v| v as f64).collect(),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Read with edge replication.
    #[inline]
    pub fn at_clamped(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.rows as isize - 1) as usize;
        let c = c.clamp(0, self.cols as isize - 1) as usize;
        self.at(r, c)
    }

    /// Bilinear sample at fractional (row, col) with edge replication.
    pub fn sample_clamped(&self, r: f64, c: f64) -> f64 {
        let r = r.clamp(0.0, (self.rows - 1) as f64);
        let c = c.clamp(0.0, (self.cols - 1) as f64);
        let r0 = r.floor();
        let c0 = c.floor();
        let fr = r - r0;
        let fc = c - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        let v00 = self.at_clamped(r0, c0);
        let v01 = self.at_clamped(r0, c0 + 1);
        let v10 = self.at_clamped(r0 + 1, c0);
        let v11 = self.at_clamped(r0 + 1, c0 + 1);
        (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11)
    }

    /// Bilinear sample at fractional (row, col); taps outside the grid read 0.
    pub fn sample_zero(&self, r: f64, c: f64) -> f64 {
        let r0 = r.floor();
        let c0 = c.floor();
        let fr = r - r0;
        let fc = c - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        let tap = |rr: isize, cc: isize| {
            if rr < 0 || cc < 0 || rr >= self.rows as isize || cc >= self.cols as isize {
                0.0
            } else {
                self.at(rr as usize, cc as usize)
            }
        };
        let mut acc = 0.0;
        for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
            if wr == 0.0 {
                continue;
            }
            for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                if wc == 0.0 {
                    continue;
                }
                acc += wr * wc * tap(r0 + dr, c0 + dc);
            }
        }
        acc
    }
}

/// Unnormalized Gaussian taps `exp(-k^2 / (2 sigma^2))` for `k in -radius..=radius`.
pub fn gaussian_taps(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as isize;
    (-r..=r)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Correlates every row with `taps` (centered), replicating edges.
pub fn filter_rows(src: &Plane, taps: &[f64]) -> Plane {
    let radius = (taps.len() / 2) as isize;
    let mut out = Plane::zeros(src.rows, src.cols);
    for r in 0..src.rows {
        for c in 0..src.cols {
            let mut acc = 0.0;
            for (k, &w) in taps.iter().enumerate() {
                acc += w * src.at_clamped(r as isize, c as isize + k as isize - radius);
            }
            out.data[r * src.cols + c] = acc;
        }
    }
    out
}

/// Correlates every column with `taps` (centered), replicating edges.
pub fn filter_cols(src: &Plane, taps: &[f64]) -> Plane {
    let radius = (taps.len() / 2) as isize;
    let mut out = Plane::zeros(src.rows, src.cols);
    for r in 0..src.rows {
        for (k, &w) in taps.iter().enumerate() {
            let rr = (r as isize + k as isize - radius).clamp(0, src.rows as isize - 1) as usize;
            let row = &src.data[rr * src.cols..(rr + 1) * src.cols];
            for (o, &v) in out.data[r * src.cols..(r + 1) * src.cols]
                .iter_mut()
                .zip(row)
            {
                *o += w * v;
            }
        }
    }
    out
}

/// Normalized separable Gaussian blur.
pub fn gaussian_blur(src: &Plane, sigma: f64) -> Plane {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut taps = gaussian_taps(radius, sigma);
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    filter_cols(&filter_rows(src, &taps), &taps)
}

/// Bilinear resize to `(rows, cols)` mapping cell centers.
pub fn resize(src: &Plane, rows: usize, cols: usize) -> Plane {
    let sr = src.rows as f64 / rows as f64;
    let sc = src.cols as f64 / cols as f64;
    Plane::from_fn(rows, cols, |r, c| {
        let y = (r as f64 + 0.5) * sr - 0.5;
        let x = (c as f64 + 0.5) * sc - 0.5;
        src.sample_clamped(y, x)
    })
}
