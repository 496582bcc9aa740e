//! Raster types shared by every part of the toolkit.
//!
//! A [`RainMap`] is one snapshot of rain rate on a regular grid, stored
//! row-major in single precision. An [`EventSequence`] is an ordered run of
//! snapshots with a fixed time step.

mod event;
mod grid;

use std::sync::Arc;

use chrono::{Datelike, NaiveDateTime};

use crate::error::{Error, Result};

pub use event::{read_event_dir, write_event_dir, EventMeta, EVENT_META_FILE};
pub use grid::{
    read_grid, read_grid_file, read_signed_grid, write_grid, write_grid_file, write_signed_grid,
    GRID_HEADER_LEN, GRID_MAGIC,
};

/// A single 2D grid of rain rate.
///
/// Values are mm/h, or min-max normalized units in `[0, 1]` when
/// `normalized` is set. Every value is finite and non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct RainMap {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    normalized: bool,
}

impl RainMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f32>, normalized: bool) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("empty grid {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::shape(&[rows * cols], &[values.len()]));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || (normalized && **v > 1.0))
        {
            return Err(Error::Domain(format!(
                "cell {} ({}, {}) holds invalid rain rate {v}",
                i,
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            normalized,
        })
    }

    pub fn zeros(rows: usize, cols: usize, normalized: bool) -> Self {
        assert!(rows > 0 && cols > 0, "empty grid");
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            normalized,
        }
    }

    /// Builds a map from arbitrary floats: non-finite and negative values
    /// become 0, and normalized maps are capped at 1.
    pub fn from_clamped(
        rows: usize,
        cols: usize,
        mut values: Vec<f32>,
        normalized: bool,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("empty grid {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::shape(&[rows * cols], &[values.len()]));
        }
        let hi = if normalized { 1.0 } else { f32::MAX };
        for v in &mut values {
            *v = if v.is_finite() { v.clamp(0.0, hi) } else { 0.0 };
        }
        Ok(Self {
            rows,
            cols,
            values,
            normalized,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.cols + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Row/col of the first maximal cell.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    pub fn ensure_same_shape(&self, other: &RainMap) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                &[self.rows, self.cols],
                &[other.rows, other.cols],
            ));
        }
        Ok(())
    }
}

/// Signed cellwise difference between two maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Delta {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl Delta {
    pub fn negated(&self) -> Delta {
        Delta {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// `a - b`, cell by cell.
pub fn map_sub(a: &RainMap, b: &RainMap) -> Result<Delta> {
    a.ensure_same_shape(b)?;
    Ok(Delta {
        rows: a.rows,
        cols: a.cols,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect(),
    })
}

/// `a + d`, floored at zero since rain rates cannot be negative.
pub fn map_add_clamped(a: &RainMap, d: &Delta) -> Result<RainMap> {
    if a.shape() != (d.rows, d.cols) {
        return Err(Error::shape(&[a.rows, a.cols], &[d.rows, d.cols]));
    }
    let values = a.values.iter().zip(&d.values).map(|(x, y)| x + y).collect();
    RainMap::from_clamped(a.rows, a.cols, values, a.normalized)
}

/// Ordered rain maps of one event at a fixed time step.
#[derive(Clone, Debug)]
pub struct EventSequence {
    pub event_id: String,
    pub step_minutes: f64,
    pub start_time: Option<NaiveDateTime>,
    frames: Vec<Arc<RainMap>>,
}

impl EventSequence {
    pub fn new(
        event_id: impl Into<String>,
        step_minutes: f64,
        frames: Vec<RainMap>,
    ) -> Result<Self> {
        Self::from_shared(
            event_id,
            step_minutes,
            frames.into_iter().map(Arc::new).collect(),
        )
    }

    pub fn from_shared(
        event_id: impl Into<String>,
        step_minutes: f64,
        frames: Vec<Arc<RainMap>>,
    ) -> Result<Self> {
        if !(step_minutes > 0.0 && step_minutes.is_finite()) {
            return Err(Error::Domain(format!(
                "step_minutes must be positive, got {step_minutes}"
            )));
        }
        if let Some(first) = frames.first() {
            for f in &frames[1..] {
                first.ensure_same_shape(f)?;
                if f.is_normalized() != first.is_normalized() {
                    return Err(Error::Domain("frames mix normalized and raw units".into()));
                }
            }
        }
        Ok(Self {
            event_id: event_id.into(),
            step_minutes,
            start_time: None,
            frames,
        })
    }

    pub fn with_start_time(mut self, start: NaiveDateTime) -> Self {
        self.start_time = Some(start);
        self
    }

    pub fn frames(&self) -> &[Arc<RainMap>] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Arc<RainMap> {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| f.shape())
    }

    pub fn year(&self) -> Option<i32> {
        self.start_time.map(|t| t.year())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(rows: usize, cols: usize, v: &[f32]) -> RainMap {
        RainMap::new(rows, cols, v.to_vec(), false).unwrap()
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RainMap::new(1, 2, vec![0.0, -0.1], false).is_err());
        assert!(RainMap::new(1, 2, vec![0.0, f32::NAN], false).is_err());
        assert!(RainMap::new(1, 2, vec![0.0, 1.5], true).is_err());
        assert!(RainMap::new(1, 2, vec![0.0, 1.5], false).is_ok());
        assert!(RainMap::new(0, 2, vec![], false).is_err());
        assert!(RainMap::new(2, 2, vec![0.0; 3], false).is_err());
    }

    #[test]
    fn sub_and_add() {
        let a = map(2, 2, &[0.0, 0.5, 1.0, 0.25]);
        assert!(map_sub(&a, &a).unwrap().values.iter().all(|&v| v == 0.0));

        let neg = Delta {
            rows: 2,
            cols: 2,
            values: a.values().iter().map(|v| -v).collect(),
        };
        let z = map_add_clamped(&a, &neg).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));

        let d = map_sub(&map(1, 1, &[1.0]), &map(1, 1, &[0.4])).unwrap();
        assert!((d.values[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn add_clamps_below_zero() {
        let a = map(1, 3, &[0.2, 0.2, 0.2]);
        let d = Delta {
            rows: 1,
            cols: 3,
            values: vec![-1.0, 0.1, f32::NEG_INFINITY],
        };
        let out = map_add_clamped(&a, &d).unwrap();
        assert_eq!(out.values()[0], 0.0);
        assert!((out.values()[1] - 0.3).abs() < 1e-7);
        assert_eq!(out.values()[2], 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = map(1, 2, &[0.0, 0.0]);
        let b = map(2, 1, &[0.0, 0.0]);
        assert!(matches!(map_sub(&a, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn event_requires_uniform_frames() {
        let a = map(1, 2, &[0.0, 0.0]);
        let b = map(2, 1, &[0.0, 0.0]);
        assert!(EventSequence::new("e", 5.0, vec![a.clone(), b]).is_err());
        assert!(EventSequence::new("e", 0.0, vec![a.clone()]).is_err());
        let n = RainMap::new(1, 2, vec![0.0, 0.0], true).unwrap();
        assert!(EventSequence::new("e", 5.0, vec![a, n]).is_err());
    }
}
