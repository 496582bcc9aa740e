use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, predict_map, Gradients, ModelKind, Network};
use crate::error::Result;
use crate::neural::stack::{ConvStack, StackTape};
use crate::neural::{concat_channels, split_channels, ConvLayer, Scalar, Tensor4};
use crate::raster::RainMap;

/// Channel chain of the baseline network.
pub const CNN_WIDTHS: [usize; 5] = [2, 3, 5, 3, 1];

#[derive(Clone, Debug, PartialEq)]
pub struct CnnBaseline<T> {
    pub stack: ConvStack<T>,
}

impl<T: Scalar> CnnBaseline<T> {
    pub fn zeros() -> Self {
        Self {
            stack: ConvStack::zeros(&CNN_WIDTHS, true),
        }
    }
}

impl<T: Scalar> Network<T> for CnnBaseline<T> {
    type Tape = StackTape<T>;

    const KIND: ModelKind = ModelKind::Cnn;

    fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            stack: ConvStack::init(&CNN_WIDTHS, true, &mut rng),
        }
    }

    fn layers(&self) -> Vec<&ConvLayer<T>> {
        self.stack.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>> {
        self.stack.layers.iter_mut().collect()
    }

    fn layer_names(&self) -> Vec<String> {
        (1..=self.stack.layers.len())
            .map(|k| format!("conv_{k}"))
            .collect()
    }

    fn forward(&self, before: &Tensor4<T>, after: &Tensor4<T>) -> Result<Tensor4<T>> {
        check_inputs(before, after)?;
        self.stack.forward(&concat_channels(before, after)?)
    }

    fn forward_tape(
        &self,
        before: &Tensor4<T>,
        after: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Self::Tape)> {
        check_inputs(before, after)?;
        self.stack.forward_tape(&concat_channels(before, after)?)
    }

    fn backward(
        &self,
        tape: &Self::Tape,
        grad_out: &Tensor4<T>,
        want_input_grads: bool,
    ) -> Result<Gradients<T>> {
        let (layers, gx) = self.stack.backward(tape, grad_out, want_input_grads)?;
        let (before, after) = match gx {
            Some(gx) => {
                let (b, a) = split_channels(&gx, 1)?;
                (Some(b), Some(a))
            }
            None => (None, None),
        };
        Ok(Gradients {
            layers,
            before,
            after,
        })
    }
}

pub fn cnn_baseline_forward(
    before: &RainMap,
    after: &RainMap,
    params: &CnnBaseline<f32>,
) -> Result<RainMap> {
    predict_map(params, before, after)
}
