use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, predict_map, Gradients, ModelKind, Network};
use crate::error::Result;
use crate::neural::stack::{ConvStack, StackTape};
use crate::neural::{add, sub, ConvLayer, Scalar, Tensor4};
use crate::raster::RainMap;

pub const TEMPNET_BRANCH_WIDTHS: [usize; 4] = [1, 4, 4, 1];
pub const TEMPNET_FUSE_WIDTHS: [usize; 4] = [1, 4, 4, 1];

/// Residual interpolator:
/// `fuse(before + succ(after) - pred(before))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TempNet<T> {
    /// Applied to the predecessor frame.
    pub pred: ConvStack<T>,
    /// Applied to the successor frame.
    pub succ: ConvStack<T>,
    pub fuse: ConvStack<T>,
}

pub struct TempNetTape<T> {
    pred: StackTape<T>,
    succ: StackTape<T>,
    fuse: StackTape<T>,
    /// Input of the fuse stack.
    pub mid: Tensor4<T>,
}

impl<T: Scalar> TempNet<T> {
    pub fn zeros() -> Self {
        Self {
            pred: ConvStack::zeros(&TEMPNET_BRANCH_WIDTHS, false),
            succ: ConvStack::zeros(&TEMPNET_BRANCH_WIDTHS, false),
            fuse: ConvStack::zeros(&TEMPNET_FUSE_WIDTHS, true),
        }
    }

    /// The fuse stack's input for a batch.
    pub fn residual_input(&self, before: &Tensor4<T>, after: &Tensor4<T>) -> Result<Tensor4<T>> {
        check_inputs(before, after)?;
        let diff = sub(&self.succ.forward(after)?, &self.pred.forward(before)?)?;
        add(before, &diff)
    }
}

impl<T: Scalar> Network<T> for TempNet<T> {
    type Tape = TempNetTape<T>;

    const KIND: ModelKind = ModelKind::Tempnet;

    fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = ConvStack::init(&TEMPNET_BRANCH_WIDTHS, false, &mut rng);
        let succ = ConvStack::init(&TEMPNET_BRANCH_WIDTHS, false, &mut rng);
        let fuse = ConvStack::init(&TEMPNET_FUSE_WIDTHS, true, &mut rng);
        Self { pred, succ, fuse }
    }

    fn layers(&self) -> Vec<&ConvLayer<T>> {
        self.pred
            .layers
            .iter()
            .chain(&self.succ.layers)
            .chain(&self.fuse.layers)
            .collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut ConvLayer<T>> {
        self.pred
            .layers
            .iter_mut()
            .chain(self.succ.layers.iter_mut())
            .chain(self.fuse.layers.iter_mut())
            .collect()
    }

    fn layer_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, stack) in [
            ("pred", &self.pred),
            ("succ", &self.succ),
            ("fuse", &self.fuse),
        ] {
            for k in 1..=stack.layers.len() {
                names.push(format!("{prefix}.conv_{k}"));
            }
        }
        names
    }

    fn forward(&self, before: &Tensor4<T>, after: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.fuse.forward(&self.residual_input(before, after)?)
    }

    fn forward_tape(
        &self,
        before: &Tensor4<T>,
        after: &Tensor4<T>,
    ) -> Result<(Tensor4<T>, Self::Tape)> {
        check_inputs(before, after)?;
        let (p, pred) = self.pred.forward_tape(before)?;
        let (s, succ) = self.succ.forward_tape(after)?;
        let mid = add(before, &sub(&s, &p)?)?;
        let (out, fuse) = self.fuse.forward_tape(&mid)?;
        Ok((
            out,
            TempNetTape {
                pred,
                succ,
                fuse,
                mid,
            },
        ))
    }

    fn backward(
        &self,
        tape: &Self::Tape,
        grad_out: &Tensor4<T>,
        want_input_grads: bool,
    ) -> Result<Gradients<T>> {
        let (fuse_g, g_mid) = self.fuse.backward(&tape.fuse, grad_out, true)?;
        let g_mid = g_mid.expect("requested");
        let (succ_g, g_after) = self.succ.backward(&tape.succ, &g_mid, want_input_grads)?;
        let neg = g_mid.map(|g| -g);
        let (pred_g, g_pred_in) = self.pred.backward(&tape.pred, &neg, want_input_grads)?;
        let before = match g_pred_in {
            Some(g) => Some(add(&g, &g_mid)?),
            None => None,
        };
        let layers = pred_g.into_iter().chain(succ_g).chain(fuse_g).collect();
        Ok(Gradients {
            layers,
            before,
            after: g_after,
        })
    }
}

pub fn tempnet_forward(
    before: &RainMap,
    after: &RainMap,
    params: &TempNet<f32>,
) -> Result<RainMap> {
    predict_map(params, before, after)
}
