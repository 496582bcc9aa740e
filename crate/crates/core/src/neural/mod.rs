//! Minimal reverse-mode differentiation for small convolutional networks.
//!
//! Only the operators the two interpolation networks use are provided:
//! 3x3 same-padding convolution, ReLU, elementwise add/subtract, channel
//! concatenation and the L1 loss, plus Adam and a reduce-on-plateau
//! learning-rate schedule. Networks record their own fixed tape (see
//! [`stack::ConvStack`]) instead of building a dynamic graph.
//!
//! Everything is generic over [`Scalar`] so training can run in `f32` while
//! gradient checks run the identical code in `f64`.

mod adam;
mod conv;
mod ops;
mod plateau;
pub mod stack;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer};
pub use ops::{
    add, add_backward, concat_channels, l1_backward, l1_loss, relu, relu_backward, split_channels,
    sub, sub_backward,
};
pub use plateau::{PlateauConfig, PlateauState};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dense `(batch, channels, height, width)` tensor in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::shape(&[n], &[data.len()]));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor holds non-finite values".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    pub fn sample_len(&self) -> usize {
        self.dims[1] * self.plane_len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::shape(&self.dims, &other.dims));
        }
        Ok(())
    }
}
