//! `manifest.json` written beside every command's outputs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use rainres::flow::FlowConfig;
use rainres::metrics::DEFAULT_THRESHOLD;
use rainres::models::{CNN_WIDTHS, TEMPNET_BRANCH_WIDTHS, TEMPNET_FUSE_WIDTHS};
use rainres::neural::{AdamConfig, PlateauConfig};
use rainres::pipeline::Palette;
use rainres::synth::RNG_ALGORITHM;

/// Fixed modelling choices in effect for every run.
#[derive(Debug, Serialize)]
struct DesignValues {
    flow: FlowConfig,
    adam: AdamConfig,
    plateau: PlateauConfig,
    plateau_monitor: &'static str,
    init: &'static str,
    cnn_widths: Vec<usize>,
    tempnet_branch_widths: Vec<usize>,
    tempnet_fuse_widths: Vec<usize>,
    tempnet_sizes_note: &'static str,
    wet_threshold: f32,
    aggregation: &'static str,
    palette: Palette,
    rng: &'static str,
    evaluated_weights: &'static str,
}

impl Default for DesignValues {
    fn default() -> Self {
        Self {
            flow: FlowConfig::default(),
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            plateau_monitor: "mean training loss per epoch",
            init: "weights uniform +-sqrt(1/(in*9)), biases zero",
            cnn_widths: CNN_WIDTHS.to_vec(),
            tempnet_branch_widths: TEMPNET_BRANCH_WIDTHS.to_vec(),
            tempnet_fuse_widths: TEMPNET_FUSE_WIDTHS.to_vec(),
            tempnet_sizes_note: "branch and fuse widths are project defaults",
            wet_threshold: DEFAULT_THRESHOLD,
            aggregation: "pooled counts (primary) and per-frame means",
            palette: Palette::default(),
            rng: RNG_ALGORITHM,
            evaluated_weights: "best test loss",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    started: String,
    config: Value,
    design: DesignValues,
    outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Value::is_null")]
    results: Value,
}

impl RunManifest {
    pub fn new(command: &'static str, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            started: unix_timestamp(),
            config,
            design: DesignValues::default(),
            outputs: Vec::new(),
            results: Value::Null,
        }
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn results(&mut self, value: Value) {
        self.results = value;
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Seconds since the Unix epoch.
fn unix_timestamp() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}
