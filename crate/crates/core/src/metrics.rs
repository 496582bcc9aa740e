//! Verification scores for predicted rain maps.
//!
//! A cell is "wet" when its value is strictly above the threshold (0 by
//! default). Ratios whose denominator is zero are `None`, never 0 or 1.
//! Lower is better for MAE and FAR; higher is better for POD and CSI.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RainMap;

pub const DEFAULT_THRESHOLD: f32 = 0.0;

/// Hits, false alarms and misses. Correct negatives are not counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyCounts {
    pub hits: u64,
    pub false_alarms: u64,
    pub misses: u64,
}

impl ContingencyCounts {
    pub fn new(hits: u64, false_alarms: u64, misses: u64) -> Self {
        Self {
            hits,
            false_alarms,
            misses,
        }
    }

    pub fn merge(&mut self, other: &ContingencyCounts) {
        self.hits += other.hits;
        self.false_alarms += other.false_alarms;
        self.misses += other.misses;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// H / (H + M)
pub fn pod(c: &ContingencyCounts) -> Option<f64> {
    ratio(c.hits, c.hits + c.misses)
}

/// F / (H + F)
pub fn far(c: &ContingencyCounts) -> Option<f64> {
    ratio(c.false_alarms, c.hits + c.false_alarms)
}

/// H / (H + F + M)
pub fn csi(c: &ContingencyCounts) -> Option<f64> {
    ratio(c.hits, c.hits + c.false_alarms + c.misses)
}

pub fn contingency(pred: &RainMap, truth: &RainMap, threshold: f32) -> Result<ContingencyCounts> {
    pred.ensure_same_shape(truth)?;
    let mut c = ContingencyCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p > threshold, t > threshold) {
            (true, true) => c.hits += 1,
            (true, false) => c.false_alarms += 1,
            (false, true) => c.misses += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

fn abs_error_sum(pred: &RainMap, truth: &RainMap) -> f64 {
    pred.values()
        .iter()
        .zip(truth.values())
        .map(|(&p, &t)| (p as f64 - t as f64).abs())
        .sum()
}

/// Mean absolute difference over all cells, in the maps' units.
pub fn mae(pred: &RainMap, truth: &RainMap) -> Result<f64> {
    pred.ensure_same_shape(truth)?;
    if pred.is_empty() {
        return Err(Error::Config("mae of an empty map".into()));
    }
    Ok(abs_error_sum(pred, truth) / pred.len() as f64)
}

/// Scores of one (prediction, truth) pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    pub counts: ContingencyCounts,
    pub abs_error_sum: f64,
    pub n_cells: u64,
    pub normalized: bool,
    pub shape: (usize, usize),
}

impl FrameScore {
    pub fn compute(pred: &RainMap, truth: &RainMap, threshold: f32) -> Result<Self> {
        let counts = contingency(pred, truth, threshold)?;
        if pred.is_empty() {
            return Err(Error::Config("cannot score an empty map".into()));
        }
        Ok(Self {
            counts,
            abs_error_sum: abs_error_sum(pred, truth),
            n_cells: pred.len() as u64,
            normalized: truth.is_normalized(),
            shape: truth.shape(),
        })
    }

    pub fn mae(&self) -> f64 {
        self.abs_error_sum / self.n_cells as f64
    }
}

/// Running sum of a possibly undefined per-frame ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct DefinedMean {
    sum: f64,
    n: u64,
}

impl DefinedMean {
    fn push(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum += v;
            self.n += 1;
        }
    }

    fn merge(&mut self, o: &DefinedMean) {
        self.sum += o.sum;
        self.n += o.n;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Mergeable accumulator behind [`aggregate`]. Merging in a fixed order
/// gives bitwise-reproducible reports.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsAccumulator {
    counts: ContingencyCounts,
    abs_error_sum: f64,
    n_cells: u64,
    n_frames: u64,
    frame_mae: DefinedMean,
    frame_pod: DefinedMean,
    frame_far: DefinedMean,
    frame_csi: DefinedMean,
    normalized: Option<bool>,
    shape: Option<(usize, usize)>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_uniform(&mut self, shape: (usize, usize), normalized: bool) -> Result<()> {
        if let Some(s) = self.shape {
            if s != shape {
                return Err(Error::shape(&[s.0, s.1], &[shape.0, shape.1]));
            }
        }
        if self.normalized.is_some_and(|n| n != normalized) {
            return Err(Error::Config("mixed normalized and physical maps".into()));
        }
        self.shape = Some(shape);
        self.normalized = Some(normalized);
        Ok(())
    }

    pub fn push_score(&mut self, s: &FrameScore) -> Result<()> {
        self.check_uniform(s.shape, s.normalized)?;
        self.counts.merge(&s.counts);
        self.abs_error_sum += s.abs_error_sum;
        self.n_cells += s.n_cells;
        self.n_frames += 1;
        self.frame_mae.push(Some(s.mae()));
        self.frame_pod.push(pod(&s.counts));
        self.frame_far.push(far(&s.counts));
        self.frame_csi.push(csi(&s.counts));
        Ok(())
    }

    pub fn push(&mut self, pred: &RainMap, truth: &RainMap, threshold: f32) -> Result<()> {
        self.push_score(&FrameScore::compute(pred, truth, threshold)?)
    }

    pub fn merge(&mut self, other: &MetricsAccumulator) -> Result<()> {
        if other.n_frames == 0 {
            return Ok(());
        }
        self.check_uniform(other.shape.unwrap(), other.normalized.unwrap())?;
        self.counts.merge(&other.counts);
        self.abs_error_sum += other.abs_error_sum;
        self.n_cells += other.n_cells;
        self.n_frames += other.n_frames;
        self.frame_mae.merge(&other.frame_mae);
        self.frame_pod.merge(&other.frame_pod);
        self.frame_far.merge(&other.frame_far);
        self.frame_csi.merge(&other.frame_csi);
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.n_frames == 0 {
            return Err(Error::Config("no samples to aggregate".into()));
        }
        Ok(MetricsReport {
            mae: self.abs_error_sum / self.n_cells as f64,
            pod: pod(&self.counts),
            far: far(&self.counts),
            csi: csi(&self.counts),
            counts: self.counts,
            n_cells: self.n_cells,
            n_frames: self.n_frames,
            normalized: self.normalized.unwrap_or(true),
            per_frame: PerFrameMetrics {
                mae: self.frame_mae.mean().unwrap_or(f64::NAN),
                pod: self.frame_pod.mean(),
                far: self.frame_far.mean(),
                csi: self.frame_csi.mean(),
            },
        })
    }
}

/// Means of the per-frame scores, skipping frames where a ratio is
/// undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerFrameMetrics {
    pub mae: f64,
    pub pod: Option<f64>,
    pub far: Option<f64>,
    pub csi: Option<f64>,
}

/// Pooled scores: counts summed over every cell of every frame, then the
/// ratios taken once. MAE is in normalized units when `normalized` is set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub pod: Option<f64>,
    pub far: Option<f64>,
    pub csi: Option<f64>,
    pub counts: ContingencyCounts,
    pub n_cells: u64,
    pub n_frames: u64,
    pub normalized: bool,
    pub per_frame: PerFrameMetrics,
}

pub fn aggregate<'a, I>(samples: I, threshold: f32) -> Result<MetricsReport>
where
    I: IntoIterator<Item = (&'a RainMap, &'a RainMap)>,
{
    let mut acc = MetricsAccumulator::new();
    for (pred, truth) in samples {
        acc.push(pred, truth, threshold)?;
    }
    acc.finish()
}

#[derive(Serialize)]
struct ReportRow<'a> {
    method: &'a str,
    mae: f64,
    pod: Option<f64>,
    far: Option<f64>,
    csi: Option<f64>,
    #[serde(rename = "H")]
    hits: u64,
    #[serde(rename = "F")]
    false_alarms: u64,
    #[serde(rename = "M")]
    misses: u64,
    n_frames: u64,
    n_cells: u64,
    aggregation: Aggregation,
    normalized: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Pooled,
    PerFrame,
}

/// One row per method. Undefined ratios are empty fields; the counts are
/// always the pooled ones.
pub fn write_report_csv<W: Write>(
    rows: &[(String, MetricsReport)],
    aggregation: Aggregation,
    sink: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for (method, r) in rows {
        let (mae, pod, far, csi) = match aggregation {
            Aggregation::Pooled => (r.mae, r.pod, r.far, r.csi),
            Aggregation::PerFrame => (
                r.per_frame.mae,
                r.per_frame.pod,
                r.per_frame.far,
                r.per_frame.csi,
            ),
        };
        w.serialize(ReportRow {
            method,
            mae,
            pod,
            far,
            csi,
            hits: r.counts.hits,
            false_alarms: r.counts.false_alarms,
            misses: r.counts.misses,
            n_frames: r.n_frames,
            n_cells: r.n_cells,
            aggregation,
            normalized: r.normalized,
        })?;
    }
    w.flush()?;
    Ok(())
}
