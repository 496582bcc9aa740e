//! The two trainable interpolators and their training loop.
//!
//! * [`CnnBaseline`]: both input frames stacked as channels, then four
//!   3x3 convolutions (2 -> 3 -> 5 -> 3 -> 1), each followed by ReLU.
//! * [`TempNet`]: each input frame passes through its own 1 -> 4 -> 4 -> 1
//!   stack (linear last layer); the difference `succ(after) - pred(before)`
//!   is added to `before` and the sum is refined by a 1 -> 4 -> 4 -> 1 stack
//!   ending in ReLU.

mod checkpoint;
mod cnn;
mod tempnet;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{ConvGrads, ConvLayer, Scalar, Tensor4};
use crate::raster::RainMap;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
    CheckpointHeader, LayerSpec, CHECKPOINT_FORMAT, CHECKPOINT_MAGIC,
};
pub use cnn::{cnn_baseline_forward, CnnBaseline, CNN_WIDTHS};
pub use tempnet::{tempnet_forward, TempNet, TEMPNET_BRANCH_WIDTHS, TEMPNET_FUSE_WIDTHS};
pub use train::{train, train_model, EpochRecord, History, TrainConfig, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    Tempnet,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::Tempnet => "tempnet",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" | "cnn-baseline" => Ok(ModelKind::Cnn),
            "tempnet" => Ok(ModelKind::Tempnet),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Gradients of a scalar loss with respect to every parameter tensor (in
/// [`Network::layers`] order) and, on request, both inputs.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub layers: Vec<ConvGrads<T>>,
    pub before: Option<Tensor4<T>>,
    pub after: Option<Tensor4<T>>,
}

/// A fixed-architecture interpolation network: `(before, after) -> middle`.
pub trait Network<T: Scalar>: Clone + Send + Sync + Sized {
    type Tape;

    const KIND: ModelKind;

    fn init(seed: u64) -> Self;

    fn layers(&self) -> Vec<&ConvLayer<T>>;

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>>;

    fn layer_names(&self) -> Vec<String>;

    fn forward(&self, before: &Tensor4<T>, after: &Tensor4<T>) -> Result<Tensor4<T>>;

    fn forward_tape(
        &self,
        before: &Tensor4<T>,
        after: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Self::Tape)>;

    fn backward(
        &self,
        tape: &Self::Tape,
        grad_out: &Tensor4<T>,
        want_input_grads: bool,
    ) -> Result<Gradients<T>>;

    fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }

    /// Sizes of the flattened parameter tensors: weight then bias per layer.
    fn param_shapes(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }
}

fn check_inputs<T: Scalar>(before: &Tensor4<T>, after: &Tensor4<T>) -> Result<()> {
    before.ensure_dims(after)?;
    if before.channels() != 1 {
        return Err(Error::shape(&[1], &[before.channels()]));
    }
    Ok(())
}

/// Stacks single-channel maps into an `(N, 1, H, W)` tensor.
pub fn maps_to_tensor(maps: &[&RainMap]) -> Result<Tensor4<f32>> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Config("cannot build a tensor from zero maps".into()))?;
    let (h, w) = first.shape();
    let mut data = Vec::with_capacity(maps.len() * h * w);
    for m in maps {
        first.ensure_same_shape(m)?;
        data.extend_from_slice(m.values());
    }
    Tensor4::from_vec([maps.len(), 1, h, w], data)
}

/// Splits an `(N, 1, H, W)` tensor back into maps, clamping into the valid
/// rain-rate range.
pub fn tensor_to_maps(t: &Tensor4<f32>, normalized: bool) -> Result<Vec<RainMap>> {
    let [n, c, h, w] = t.dims();
    if c != 1 {
        return Err(Error::shape(&[1], &[c]));
    }
    (0..n)
        .map(|s| RainMap::from_clamped(h, w, t.sample(s).to_vec(), normalized))
        .collect()
}

/// Runs a single-pair inference.
pub fn predict_map<M: Network<f32>>(
    model: &M,
    before: &RainMap,
    after: &RainMap,
) -> Result<RainMap> {
    before.ensure_same_shape(after)?;
    let out = model.forward(&maps_to_tensor(&[before])?, &maps_to_tensor(&[after])?)?;
    Ok(tensor_to_maps(&out, before.is_normalized())?.remove(0))
}
