//! Mini-batch training with L1 loss, Adam and a reduce-on-plateau schedule
//! driven by the mean epoch training loss.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, CheckpointHeader};
use super::{maps_to_tensor, Network};
use crate::dataset::{batch_indices, DatasetSplit, TripleSample};
use crate::error::{Error, Result};
use crate::neural::{
    adam_step, l1_backward, l1_loss, AdamConfig, AdamState, ConvLayer, PlateauConfig, PlateauState,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Initial learning rate lives in `adam.lr`.
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    /// Stop after this many epochs without test-loss improvement.
    pub early_stop_patience: Option<usize>,
    /// Run on a single worker thread.
    pub reference_mode: bool,
    /// Where `best.ckpt` and `final.ckpt` go, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            seed: 0,
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            early_stop_patience: None,
            reference_mode: false,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub epoch_seconds: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// `epoch,train_loss,test_loss,epoch_seconds,lr`. Without timing the
    /// `epoch_seconds` field is left empty so the file depends only on the
    /// computation.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("epoch,train_loss,test_loss,epoch_seconds,lr\n");
        for r in &self.records {
            let test = r.test_loss.map(|v| format!("{v:e}")).unwrap_or_default();
            let secs = if include_timing {
                format!("{:.6}", r.epoch_seconds)
            } else {
                String::new()
            };
            writeln!(
                out,
                "{},{:e},{},{},{:e}",
                r.epoch, r.train_loss, test, secs, r.lr
            )
            .unwrap();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<M> {
    /// Parameters after the last epoch.
    pub model: M,
    /// Parameters from the epoch with the lowest test loss (training loss
    /// when there is no test split).
    pub best: M,
    pub best_epoch: Option<usize>,
    pub history: History,
    pub optimizer: AdamState<f32>,
}

pub fn train<M: Network<f32>>(split: &DatasetSplit, cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    train_model(M::init(cfg.seed), &split.train, &split.test, cfg)
}

pub fn train_model<M: Network<f32>>(
    model: M,
    train_set: &[TripleSample],
    test_set: &[TripleSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.adam.lr.is_nan() || cfg.adam.lr <= 0.0 {
        return Err(Error::Config(
            "batch size and learning rate must be positive".into(),
        ));
    }
    if cfg.reference_mode {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run(model, train_set, test_set, cfg))
    } else {
        run(model, train_set, test_set, cfg)
    }
}

fn batch_tensors(
    samples: &[TripleSample],
    idx: &[usize],
) -> Result<(
    crate::neural::Tensor4<f32>,
    crate::neural::Tensor4<f32>,
    crate::neural::Tensor4<f32>,
)> {
    let before: Vec<_> = idx.iter().map(|&i| samples[i].before.as_ref()).collect();
    let after: Vec<_> = idx.iter().map(|&i| samples[i].after.as_ref()).collect();
    let target: Vec<_> = idx.iter().map(|&i| samples[i].target.as_ref()).collect();
    Ok((
        maps_to_tensor(&before)?,
        maps_to_tensor(&after)?,
        maps_to_tensor(&target)?,
    ))
}

/// Sample-weighted mean L1 loss over a whole split.
pub(crate) fn evaluate_loss<M: Network<f32>>(
    model: &M,
    samples: &[TripleSample],
    batch: usize,
) -> Result<f64> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch) {
        let (b, a, t) = batch_tensors(samples, chunk)?;
        total += l1_loss(&model.forward(&b, &a)?, &t)? as f64 * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn param_slices(layers: Vec<&mut ConvLayer<f32>>) -> Vec<&mut [f32]> {
    layers
        .into_iter()
        .flat_map(|l| {
            let ConvLayer { weight, bias, .. } = l;
            [weight.as_mut_slice(), bias.as_mut_slice()]
        })
        .collect()
}

fn run<M: Network<f32>>(
    mut model: M,
    train_set: &[TripleSample],
    test_set: &[TripleSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<M>> {
    let mut adam = AdamState::new(cfg.adam, &model.param_shapes());
    let mut plateau = PlateauState::new(cfg.plateau);
    let mut history = History::default();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0usize;

    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = adam.lr();
        let mut loss_sum = 0.0;
        for (bi, idx) in batch_indices(train_set.len(), cfg.batch_size, cfg.seed, epoch as u64)
            .iter()
            .enumerate()
        {
            let (b, a, t) = batch_tensors(train_set, idx)?;
            let (out, tape) = model.forward_tape(&b, &a)?;
            let loss = l1_loss(&out, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{} epoch {epoch} batch {bi}: loss {loss}",
                    M::KIND.name()
                )));
            }
            loss_sum += loss as f64 * idx.len() as f64;
            let grads = model.backward(&tape, &l1_backward(&out, &t)?, false)?;
            let g: Vec<&[f32]> = grads
                .layers
                .iter()
                .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
                .collect();
            adam_step(&mut param_slices(model.layers_mut()), &g, &mut adam)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let test_loss = if test_set.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, test_set, cfg.batch_size)?)
        };
        if test_loss.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{} epoch {epoch}: test loss {test_loss:?}",
                M::KIND.name()
            )));
        }
        adam.set_lr(plateau.update(train_loss, lr));

        let record = EpochRecord {
            epoch,
            train_loss,
            test_loss,
            epoch_seconds: started.elapsed().as_secs_f64(),
            lr,
        };
        log::info!(
            "{} epoch {epoch}: train {train_loss:.6} test {test_loss:?} lr {lr:e} ({:.2}s)",
            M::KIND.name(),
            record.epoch_seconds
        );
        history.records.push(record);

        let score = test_loss.unwrap_or(train_loss);
        if score < best_loss {
            best_loss = score;
            best = model.clone();
            best_epoch = Some(epoch);
            since_best = 0;
            if let Some(dir) = &cfg.checkpoint_dir {
                let header =
                    CheckpointHeader::for_model(&model, &adam, false, cfg.plateau, epoch, cfg.seed);
                save_checkpoint(dir.join("best.ckpt"), &header, &model, None)?;
            }
        } else {
            since_best += 1;
        }
        if cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }

    if let Some(dir) = &cfg.checkpoint_dir {
        let epoch = history.records.len();
        let header = CheckpointHeader::for_model(&model, &adam, true, cfg.plateau, epoch, cfg.seed);
        save_checkpoint(dir.join("final.ckpt"), &header, &model, Some(&adam))?;
    }

    Ok(TrainOutcome {
        model,
        best,
        best_epoch,
        history,
        optimizer: adam,
    })
}
