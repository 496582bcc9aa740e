//! Synthetic rain events with closed-form intermediate frames.
//!
//! Each event is a sum of advecting, growing Gaussian cells:
//!
//! ```text
//! value(x, t) = clamp01( sum_i a_i * g_i^t * exp(-|x - c_i - v_i t|^2 / (2 s_i^2)) )
//! ```
//!
//! so the field at any fractional frame index is known exactly. The field is
//! evaluated in f64 and stored as f32, and emitted frames are produced by the
//! same evaluation the oracle uses, so they agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EventSequence, RainMap};

/// Generator used for every random draw in this module.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_cells: usize,
    /// Peak intensity range, normalized units.
    pub amp_range: (f64, f64),
    /// Cell radius range in cells.
    pub sigma_range: (f64, f64),
    /// Advection speed range in cells per frame; direction is uniform.
    pub velocity_range: (f64, f64),
    /// Per-frame amplitude multiplier range.
    pub growth_range: (f64, f64),
    pub n_frames: usize,
    pub seed: u64,
    /// Fraction of grid cells carrying a static single-cell echo. 0 disables.
    #[serde(default)]
    pub salt_density: f64,
    #[serde(default = "default_step")]
    pub step_minutes: f64,
}

fn default_step() -> f64 {
    5.0
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            n_cells: 6,
            amp_range: (0.3, 1.0),
            sigma_range: (3.0, 7.0),
            velocity_range: (0.5, 2.0),
            growth_range: (0.95, 1.05),
            n_frames: 10,
            seed: 0,
            salt_density: 0.0,
            step_minutes: 5.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synth: {msg}")));
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if self.rows == 0 || self.cols == 0 {
            return bad("grid must be non-empty");
        }
        if !ordered(self.amp_range) || self.amp_range.0 <= 0.0 || self.amp_range.1 > 1.0 {
            return bad("amp_range must lie within (0, 1]");
        }
        if !ordered(self.sigma_range) || self.sigma_range.0 <= 0.0 {
            return bad("sigma_range must be positive");
        }
        if !ordered(self.velocity_range) || self.velocity_range.0 < 0.0 {
            return bad("velocity_range must be non-negative");
        }
        if !ordered(self.growth_range) || self.growth_range.0 <= 0.0 {
            return bad("growth_range must be positive");
        }
        if self.n_frames < 3 {
            return bad("n_frames must be at least 3");
        }
        if !(0.0..=1.0).contains(&self.salt_density) {
            return bad("salt_density must lie in [0, 1]");
        }
        if self.step_minutes.is_nan() || self.step_minutes <= 0.0 {
            return bad("step_minutes must be positive");
        }
        Ok(())
    }
}

/// One advecting Gaussian rain cell.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CellParams {
    pub amplitude: f64,
    pub center_row: f64,
    pub center_col: f64,
    pub vel_row: f64,
    pub vel_col: f64,
    pub sigma: f64,
    pub growth: f64,
}

/// A stationary single-cell echo, emulating isolated radar artifacts.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SaltEcho {
    pub row: usize,
    pub col: usize,
    pub amplitude: f64,
}

/// Evaluates the closed-form field at frame index `t`.
pub fn field_at(
    rows: usize,
    cols: usize,
    cells: &[CellParams],
    salt: &[SaltEcho],
    t: f64,
) -> RainMap {
    let mut acc = vec![0.0f64; rows * cols];
    for cell in cells {
        let peak = cell.amplitude * cell.growth.powf(t);
        let cr = cell.center_row + cell.vel_row * t;
        let cc = cell.center_col + cell.vel_col * t;
        let inv = 1.0 / (2.0 * cell.sigma * cell.sigma);
        let col_w: Vec<f64> = (0..cols)
            .map(|c| {
                let d = c as f64 - cc;
                (-d * d * inv).exp()
            })
            .collect();
        for r in 0..rows {
            let d = r as f64 - cr;
            let row_w = peak * (-d * d * inv).exp();
            for (a, w) in acc[r * cols..(r + 1) * cols].iter_mut().zip(&col_w) {
                *a += row_w * w;
            }
        }
    }
    for echo in salt {
        acc[echo.row * cols + echo.col] += echo.amplitude;
    }
    let values = acc.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    RainMap::new(rows, cols, values, true).expect("clamped field is a valid map")
}

/// Closed-form ground truth for one generated event.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SynthOracle {
    pub event_id: String,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<CellParams>,
    #[serde(default)]
    pub salt: Vec<SaltEcho>,
}

impl SynthOracle {
    pub fn field_at(&self, t: f64) -> RainMap {
        field_at(self.rows, self.cols, &self.cells, &self.salt, t)
    }
}

fn draw(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

pub fn sample_cells(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<CellParams> {
    (0..config.n_cells)
        .map(|_| {
            let amplitude = draw(rng, config.amp_range);
            let center_row = rng.random_range(0.0..config.rows as f64);
            let center_col = rng.random_range(0.0..config.cols as f64);
            let speed = draw(rng, config.velocity_range);
            let heading = rng.random_range(0.0..std::f64::consts::TAU);
            let sigma = draw(rng, config.sigma_range);
            let growth = draw(rng, config.growth_range);
            CellParams {
                amplitude,
                center_row,
                center_col,
                vel_row: speed * heading.sin(),
                vel_col: speed * heading.cos(),
                sigma,
                growth,
            }
        })
        .collect()
}

fn sample_salt(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SaltEcho> {
    let n = (config.salt_density * (config.rows * config.cols) as f64).round() as usize;
    (0..n)
        .map(|_| SaltEcho {
            row: rng.random_range(0..config.rows),
            col: rng.random_range(0..config.cols),
            amplitude: draw(rng, config.amp_range),
        })
        .collect()
}

/// Generates one event from `config.seed`.
pub fn gen_event(config: &SynthConfig) -> Result<(EventSequence, SynthOracle)> {
    gen_event_with_id(config, format!("synth-{}", config.seed))
}

pub fn gen_event_with_id(
    config: &SynthConfig,
    event_id: String,
) -> Result<(EventSequence, SynthOracle)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cells = sample_cells(config, &mut rng);
    let salt = sample_salt(config, &mut rng);
    let oracle = SynthOracle {
        event_id: event_id.clone(),
        rows: config.rows,
        cols: config.cols,
        cells,
        salt,
    };
    let frames = (0..config.n_frames)
        .map(|t| oracle.field_at(t as f64))
        .collect();
    let event = EventSequence::new(event_id, config.step_minutes, frames)?;
    Ok((event, oracle))
}

/// Generates `n` events; event `i` uses seed `config.seed + i`.
pub fn gen_events(config: &SynthConfig, n: usize) -> Result<Vec<(EventSequence, SynthOracle)>> {
    (0..n)
        .map(|i| {
            let cfg = SynthConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            gen_event_with_id(&cfg, format!("synth_{i:04}"))
        })
        .collect()
}

/// Serialized alongside generated events so the oracle can be rebuilt.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthManifest {
    pub rng: String,
    pub config: SynthConfig,
    pub events: Vec<SynthOracle>,
}

impl SynthManifest {
    pub fn new(config: SynthConfig, events: Vec<SynthOracle>) -> Self {
        Self {
            rng: RNG_ALGORITHM.to_string(),
            config,
            events,
        }
    }

    pub fn oracle(&self, event_id: &str) -> Option<&SynthOracle> {
        self.events.iter().find(|o| o.event_id == event_id)
    }
}
