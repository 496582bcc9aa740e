//! A chain of 3x3 convolutions with ReLU between layers, recorded on a
//! fixed tape for the backward pass.

use rand::Rng;

use super::conv::conv2d_backward_impl;
use super::{conv2d_forward, relu, relu_backward, ConvGrads, ConvLayer, Scalar, Tensor4};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvStack<T> {
    pub layers: Vec<ConvLayer<T>>,
    /// Whether the last layer is followed by a ReLU.
    pub final_relu: bool,
}

/// Per-layer parameter gradients and the optional input gradient.
pub type StackGrads<T> = (Vec<ConvGrads<T>>, Option<Tensor4<T>>);

/// Activations retained by [`ConvStack::forward_tape`].
#[derive(Clone, Debug)]
pub struct StackTape<T> {
    inputs: Vec<Tensor4<T>>,
    pre: Vec<Tensor4<T>>,
}

impl<T: Scalar> ConvStack<T> {
    /// Layers with channel widths `widths[0] -> widths[1] -> ...`.
    pub fn init<R: Rng>(widths: &[usize], final_relu: bool, rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| ConvLayer::init_uniform(w[0], w[1], rng))
            .collect();
        Self { layers, final_relu }
    }

    pub fn zeros(widths: &[usize], final_relu: bool) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| ConvLayer::zeros(w[0], w[1]))
            .collect();
        Self { layers, final_relu }
    }

    fn relu_after(&self, k: usize) -> bool {
        k + 1 < self.layers.len() || self.final_relu
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            h = conv2d_forward(&h, layer)?;
            if self.relu_after(k) {
                h = relu(&h);
            }
        }
        Ok(h)
    }

    pub fn forward_tape(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, StackTape<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = conv2d_forward(&h, layer)?;
            inputs.push(h);
            h = if self.relu_after(k) {
                relu(&z)
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok((h, StackTape { inputs, pre }))
    }

    /// Parameter gradients in layer order, plus the input gradient when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        tape: &StackTape<T>,
        grad_out: &Tensor4<T>,
        want_input_grad: bool,
    ) -> Result<StackGrads<T>> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            if self.relu_after(k) {
                g = relu_backward(&tape.pre[k], &g)?;
            }
            let need_gx = k > 0 || want_input_grad;
            let (gx, gw) = conv2d_backward_impl(&tape.inputs[k], &self.layers[k], &g, need_gx)?;
            grads.push(gw);
            match gx {
                Some(gx) if k > 0 => g = gx,
                gx => input_grad = gx,
            }
        }
        grads.reverse();
        Ok((grads, input_grad))
    }
}
