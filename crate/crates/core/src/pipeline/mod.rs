//! Evaluation protocols, recursive upsampling and rendering on top of a
//! common interpolator interface.

mod eval;
mod render;
mod upsample;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_chronological, DatasetSplit, SplitManifest, SplitRule};
use crate::error::{Error, Result};
use crate::flow::{flow_interpolate, nearest_frame, FlowConfig};
use crate::models::{predict_map, Network};
use crate::raster::{read_event_dir, EventSequence, RainMap};
use crate::synth::{SynthManifest, SynthOracle};

pub use eval::{eval_direct, eval_second_iteration, eval_skip_one, second_iteration_pairs};
pub use render::{render_png, render_png_file, Palette, Rgba};
pub use upsample::{recursive_upsample, upsampled_len};

/// Where a frame pair sits in its source event, in frame-index units of
/// that event.
#[derive(Clone, Debug, PartialEq)]
pub struct PairContext {
    pub event_id: String,
    pub t_before: f64,
    pub t_after: f64,
}

impl PairContext {
    pub fn new(event_id: impl Into<String>, t_before: f64, t_after: f64) -> Self {
        Self {
            event_id: event_id.into(),
            t_before,
            t_after,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_before + self.t_after)
    }
}

/// Produces the frame halfway between `before` and `after`.
pub trait Interpolator: Send + Sync {
    fn name(&self) -> &str;

    fn interpolate(&self, before: &RainMap, after: &RainMap, ctx: &PairContext) -> Result<RainMap>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nearest,
    Flow,
    Cnn,
    Tempnet,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nearest, Method::Flow, Method::Cnn, Method::Tempnet];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nearest => "nearest",
            Method::Flow => "flow",
            Method::Cnn => "cnn",
            Method::Tempnet => "tempnet",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Method::Nearest),
            "flow" => Ok(Method::Flow),
            "cnn" | "cnn-baseline" => Ok(Method::Cnn),
            "tempnet" => Ok(Method::Tempnet),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NearestInterpolator;

impl Interpolator for NearestInterpolator {
    fn name(&self) -> &str {
        "nearest"
    }

    fn interpolate(&self, before: &RainMap, after: &RainMap, _: &PairContext) -> Result<RainMap> {
        nearest_frame(before, after)
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlowInterpolator {
    pub config: FlowConfig,
}

impl Interpolator for FlowInterpolator {
    fn name(&self) -> &str {
        "flow"
    }

    fn interpolate(&self, before: &RainMap, after: &RainMap, _: &PairContext) -> Result<RainMap> {
        flow_interpolate(before, after, &self.config)
    }
}

/// A trained network used for inference.
#[derive(Clone, Debug)]
pub struct NetworkInterpolator<M> {
    pub model: M,
}

impl<M: Network<f32>> NetworkInterpolator<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

impl<M: Network<f32>> Interpolator for NetworkInterpolator<M> {
    fn name(&self) -> &str {
        M::KIND.name()
    }

    fn interpolate(&self, before: &RainMap, after: &RainMap, _: &PairContext) -> Result<RainMap> {
        predict_map(&self.model, before, after)
    }
}

/// Answers with the closed-form synthetic field at the pair's midpoint.
#[derive(Clone, Debug, Default)]
pub struct OracleInterpolator {
    oracles: HashMap<String, SynthOracle>,
}

impl OracleInterpolator {
    pub fn new(oracles: impl IntoIterator<Item = SynthOracle>) -> Self {
        Self {
            oracles: oracles
                .into_iter()
                .map(|o| (o.event_id.clone(), o))
                .collect(),
        }
    }

    pub fn from_manifest(manifest: &SynthManifest) -> Self {
        Self::new(manifest.events.iter().cloned())
    }
}

impl Interpolator for OracleInterpolator {
    fn name(&self) -> &str {
        "oracle"
    }

    fn interpolate(&self, before: &RainMap, _: &RainMap, ctx: &PairContext) -> Result<RainMap> {
        let oracle = self
            .oracles
            .get(&ctx.event_id)
            .ok_or_else(|| Error::Config(format!("no oracle for event {:?}", ctx.event_id)))?;
        if oracle.rows != before.rows() || oracle.cols != before.cols() {
            return Err(Error::shape(
                &[oracle.rows, oracle.cols],
                &[before.rows(), before.cols()],
            ));
        }
        Ok(oracle.field_at(ctx.midpoint()))
    }
}

/// Loads every event directory directly under `root`, sorted by name.
pub fn load_event_root(root: impl AsRef<Path>) -> Result<Vec<EventSequence>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.as_ref())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "no event directories under {}",
            root.as_ref().display()
        )));
    }
    dirs.iter().map(read_event_dir).collect()
}

/// A split recorded on disk: the events directory plus the resulting
/// partition, so it can be rebuilt exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitFile {
    pub data_dir: PathBuf,
    pub split: SplitManifest,
}

/// Everything needed by training and evaluation.
#[derive(Clone, Debug)]
pub struct LoadedSplit {
    pub split: DatasetSplit,
    pub train_events: Vec<EventSequence>,
    pub test_events: Vec<EventSequence>,
}

impl SplitFile {
    pub fn build(data_dir: impl Into<PathBuf>, rule: &SplitRule) -> Result<(Self, LoadedSplit)> {
        let data_dir = data_dir.into();
        let events = load_event_root(&data_dir)?;
        let loaded = load_split(&events, rule)?;
        Ok((
            Self {
                data_dir,
                split: loaded.split.manifest.clone(),
            },
            loaded,
        ))
    }

    /// Rebuilds the split and checks it still has the recorded events.
    pub fn load(&self) -> Result<LoadedSplit> {
        let events = load_event_root(&self.data_dir)?;
        let loaded = load_split(&events, &self.split.rule)?;
        if loaded.split.manifest != self.split {
            return Err(Error::Config(format!(
                "events under {} no longer match the recorded split",
                self.data_dir.display()
            )));
        }
        Ok(loaded)
    }
}

pub fn load_split(events: &[EventSequence], rule: &SplitRule) -> Result<LoadedSplit> {
    let split = split_chronological(events, rule)?;
    let pick = |ids: &[String]| -> Vec<EventSequence> {
        ids.iter()
            .filter_map(|id| events.iter().find(|e| &e.event_id == id).cloned())
            .collect()
    };
    Ok(LoadedSplit {
        train_events: pick(&split.manifest.train_events),
        test_events: pick(&split.manifest.test_events),
        split,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: String,
    pub pairs: usize,
    pub total_seconds: f64,
    pub ms_per_pair: f64,
}

/// Wall time of each interpolator over the same pairs. Reported, not
/// asserted.
pub fn bench_interpolators(
    interps: &[&dyn Interpolator],
    pairs: &[(&RainMap, &RainMap, PairContext)],
) -> Result<Vec<BenchRecord>> {
    if pairs.is_empty() {
        return Err(Error::Config("no frame pairs to benchmark".into()));
    }
    interps
        .iter()
        .map(|interp| {
            let start = Instant::now();
            for (b, a, ctx) in pairs {
                interp.interpolate(b, a, ctx)?;
            }
            let total = start.elapsed().as_secs_f64();
            Ok(BenchRecord {
                method: interp.name().to_string(),
                pairs: pairs.len(),
                total_seconds: total,
                ms_per_pair: 1e3 * total / pairs.len() as f64,
            })
        })
        .collect()
}
