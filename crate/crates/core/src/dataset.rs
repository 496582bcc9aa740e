//! Training/testing triples built from event sequences.
//!
//! A triple is `(frame[s-1], frame[s+1]) -> frame[s]` for every interior
//! frame of an event. Training triples are doubled by time reversal; the
//! split between training and testing is by whole events, earlier events
//! training and later ones testing.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{EventSequence, RainMap};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub event_id: String,
    /// Index of the target frame within its event.
    pub frame_index: usize,
    /// Frame-index distance between the target and each input.
    pub gap: usize,
    pub reversed: bool,
}

impl Provenance {
    /// Frame positions of `(before, after)` within the source event.
    pub fn input_times(&self) -> (f64, f64) {
        let s = self.frame_index as f64;
        let g = self.gap as f64;
        if self.reversed {
            (s + g, s - g)
        } else {
            (s - g, s + g)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TripleSample {
    pub before: Arc<RainMap>,
    pub after: Arc<RainMap>,
    pub target: Arc<RainMap>,
    pub provenance: Provenance,
}

/// One triple per interior frame, in chronological order.
pub fn make_triples(event: &EventSequence) -> Vec<TripleSample> {
    make_gapped_triples(event, 1)
}

/// Triples whose inputs sit `gap` frames either side of the target.
pub fn make_gapped_triples(event: &EventSequence, gap: usize) -> Vec<TripleSample> {
    assert!(gap >= 1);
    let frames = event.frames();
    if frames.len() < 2 * gap + 1 {
        return Vec::new();
    }
    (gap..frames.len() - gap)
        .map(|s| TripleSample {
            before: frames[s - gap].clone(),
            after: frames[s + gap].clone(),
            target: frames[s].clone(),
            provenance: Provenance {
                event_id: event.event_id.clone(),
                frame_index: s,
                gap,
                reversed: false,
            },
        })
        .collect()
}

/// Returns the input followed by a time-reversed copy of every sample.
pub fn augment_reverse(samples: Vec<TripleSample>) -> Vec<TripleSample> {
    let reversed: Vec<TripleSample> = samples
        .iter()
        .map(|s| TripleSample {
            before: s.after.clone(),
            after: s.before.clone(),
            target: s.target.clone(),
            provenance: Provenance {
                reversed: !s.provenance.reversed,
                ..s.provenance.clone()
            },
        })
        .collect();
    let mut out = samples;
    out.extend(reversed);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Events starting in `test_from_year` or later are testing events.
    YearBoundary { test_from_year: i32 },
    /// The first `round(n * train_fraction)` events (chronologically) train.
    IndexFraction { train_fraction: f64 },
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::IndexFraction {
            train_fraction: 0.7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub rule: SplitRule,
    pub augmented: bool,
    pub train_events: Vec<String>,
    pub test_events: Vec<String>,
    /// Training entries before reversal augmentation.
    pub train_entries_unaugmented: usize,
    pub train_entries: usize,
    pub test_entries: usize,
    /// Total rain maps held by the events on each side.
    pub train_maps: usize,
    pub test_maps: usize,
    pub normalized: bool,
}

#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Vec<TripleSample>,
    pub test: Vec<TripleSample>,
    pub manifest: SplitManifest,
}

/// Splits events chronologically and builds triples for both sides.
///
/// Ordering is by start time when every event has one, else input order.
/// Reversal augmentation applies to the training side only.
pub fn split_chronological(events: &[EventSequence], rule: &SplitRule) -> Result<DatasetSplit> {
    let (train_ev, test_ev) = partition_events(events, rule)?;
    let normalized = check_normalization(events)?;

    let plain: Vec<TripleSample> = train_ev.iter().flat_map(|e| make_triples(e)).collect();
    let unaugmented = plain.len();
    let train = augment_reverse(plain);
    let test: Vec<TripleSample> = test_ev.iter().flat_map(|e| make_triples(e)).collect();

    let manifest = SplitManifest {
        rule: rule.clone(),
        augmented: true,
        train_events: train_ev.iter().map(|e| e.event_id.clone()).collect(),
        test_events: test_ev.iter().map(|e| e.event_id.clone()).collect(),
        train_entries_unaugmented: unaugmented,
        train_entries: train.len(),
        test_entries: test.len(),
        train_maps: train_ev.iter().map(|e| e.len()).sum(),
        test_maps: test_ev.iter().map(|e| e.len()).sum(),
        normalized,
    };
    Ok(DatasetSplit {
        train,
        test,
        manifest,
    })
}

/// Event-level partition, `(train, test)`, each in chronological order.
pub fn partition_events<'a>(
    events: &'a [EventSequence],
    rule: &SplitRule,
) -> Result<(Vec<&'a EventSequence>, Vec<&'a EventSequence>)> {
    let mut ids = HashSet::new();
    for e in events {
        if !ids.insert(e.event_id.as_str()) {
            return Err(Error::Config(format!("duplicate event id {}", e.event_id)));
        }
    }

    let mut ordered: Vec<&EventSequence> = events.iter().collect();
    if ordered.iter().all(|e| e.start_time.is_some()) {
        ordered.sort_by_key(|e| e.start_time);
    }

    let (train, test): (Vec<_>, Vec<_>) = match rule {
        SplitRule::YearBoundary { test_from_year } => {
            if let Some(e) = ordered.iter().find(|e| e.year().is_none()) {
                return Err(Error::Config(format!(
                    "event {} has no start time for a year split",
                    e.event_id
                )));
            }
            ordered
                .into_iter()
                .partition(|e| e.year().unwrap() < *test_from_year)
        }
        SplitRule::IndexFraction { train_fraction } => {
            if !(0.0..=1.0).contains(train_fraction) {
                return Err(Error::Config(format!(
                    "train fraction {train_fraction} outside [0, 1]"
                )));
            }
            let n_train = (ordered.len() as f64 * train_fraction).round() as usize;
            let test = ordered.split_off(n_train.min(ordered.len()));
            (ordered, test)
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "split rule {rule:?} leaves {} training and {} testing events",
            train.len(),
            test.len()
        )));
    }
    Ok((train, test))
}

fn check_normalization(events: &[EventSequence]) -> Result<bool> {
    let mut flags = events
        .iter()
        .filter_map(|e| e.frames().first().map(|f| f.is_normalized()));
    let first = flags.next().unwrap_or(true);
    if flags.any(|f| f != first) {
        return Err(Error::Config(
            "dataset mixes normalized and raw events".into(),
        ));
    }
    Ok(first)
}

/// Index batches for one epoch: a seeded shuffle, then consecutive chunks.
/// The final short batch is kept.
///
/// The permutation comes from a ChaCha8 stream selected by `epoch`, so it is
/// a pure function of `(seed, epoch)`.
pub fn batch_indices(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

pub fn batch_iter<'a, T>(
    samples: &'a [T],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> impl Iterator<Item = Vec<&'a T>> + 'a {
    batch_indices(samples.len(), batch_size, seed, epoch)
        .into_iter()
        .map(move |b| b.into_iter().map(|i| &samples[i]).collect())
}
