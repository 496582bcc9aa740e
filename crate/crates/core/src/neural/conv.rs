//! 3x3 convolution, stride 1, zero padding 1.
//!
//! Implemented as cross-correlation (no kernel flip), the usual neural
//! network convention:
//!
//! ```text
//! y[n,o,r,c] = bias[o] + sum_{i,kr,kc} w[o,i,kr,kc] * x[n,i,r+kr-1,c+kc-1]
//! ```
//!
//! Batches are processed in parallel; per-sample weight gradients are summed
//! in sample order so results do not depend on the thread count.

use rand::Rng;
use rayon::prelude::*;

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

const K: usize = 3;
const TAPS: usize = K * K;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(out, in, 3, 3)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * TAPS],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Weights uniform in `+-sqrt(1 / (in_channels * 9))`, biases zero.
    pub fn init_uniform<R: Rng>(in_channels: usize, out_channels: usize, rng: &mut R) -> Self {
        let bound = (1.0 / (in_channels * TAPS) as f64).sqrt();
        let mut draw = || T::lit(rng.random_range(-bound..bound));
        let weight = (0..out_channels * in_channels * TAPS)
            .map(|_| draw())
            .collect();
        let bias = vec![T::zero(); out_channels];
        Self {
            in_channels,
            out_channels,
            weight,
            bias,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    fn w(&self, o: usize, i: usize, kr: usize, kc: usize) -> T {
        self.weight[((o * self.in_channels + i) * K + kr) * K + kc]
    }
}

/// Index range of output positions whose tap at offset `k` lands inside
/// a dimension of length `len`.
#[inline]
fn valid(k: usize, len: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(k);
    let hi = (len + 1).saturating_sub(k).min(len);
    (lo, hi.max(lo))
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor4<T>, layer: &ConvLayer<T>) -> Result<Tensor4<T>> {
    if x.channels() != layer.in_channels {
        return Err(Error::shape(&[layer.in_channels], &[x.channels()]));
    }
    let [n, _, h, w] = x.dims();
    let out_dims = [n, layer.out_channels, h, w];
    let mut out = Tensor4::zeros(out_dims);
    let plane = h * w;
    let out_len = layer.out_channels * plane;
    if out_len == 0 {
        return Ok(out);
    }
    out.data_mut()
        .par_chunks_mut(out_len)
        .enumerate()
        .for_each(|(s, y)| forward_sample(x.sample(s), y, layer, h, w));
    Ok(out)
}

fn forward_sample<T: Scalar>(x: &[T], y: &mut [T], layer: &ConvLayer<T>, h: usize, w: usize) {
    let plane = h * w;
    for o in 0..layer.out_channels {
        let yo = &mut y[o * plane..(o + 1) * plane];
        yo.fill(layer.bias[o]);
        for i in 0..layer.in_channels {
            let xi = &x[i * plane..(i + 1) * plane];
            for kr in 0..K {
                let (r_lo, r_hi) = valid(kr, h);
                for kc in 0..K {
                    let wt = layer.w(o, i, kr, kc);
                    let (c_lo, c_hi) = valid(kc, w);
                    for r in r_lo..r_hi {
                        let src_row = (r + kr - 1) * w;
                        let dst = &mut yo[r * w + c_lo..r * w + c_hi];
                        let src = &xi[src_row + c_lo + kc - 1..src_row + c_hi + kc - 1];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + wt * s;
                        }
                    }
                }
            }
        }
    }
}

/// Exact adjoints of [`conv2d_forward`]: `(grad_x, grads)`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor4<T>,
    layer: &ConvLayer<T>,
    grad_y: &Tensor4<T>,
) -> Result<(Tensor4<T>, ConvGrads<T>)> {
    let (gx, g) = conv2d_backward_impl(x, layer, grad_y, true)?;
    Ok((gx.expect("requested"), g))
}

pub(crate) fn conv2d_backward_impl<T: Scalar>(
    x: &Tensor4<T>,
    layer: &ConvLayer<T>,
    grad_y: &Tensor4<T>,
    want_grad_x: bool,
) -> Result<(Option<Tensor4<T>>, ConvGrads<T>)> {
    let [n, c, h, w] = x.dims();
    if c != layer.in_channels {
        return Err(Error::shape(&[layer.in_channels], &[c]));
    }
    let expect = [n, layer.out_channels, h, w];
    if grad_y.dims() != expect {
        return Err(Error::shape(&expect, &grad_y.dims()));
    }

    let per_sample: Vec<(Option<Vec<T>>, ConvGrads<T>)> = (0..n)
        .into_par_iter()
        .map(|s| backward_sample(x.sample(s), grad_y.sample(s), layer, h, w, want_grad_x))
        .collect();

    let mut grads = ConvGrads {
        weight: vec![T::zero(); layer.weight.len()],
        bias: vec![T::zero(); layer.bias.len()],
    };
    let mut gx_data = if want_grad_x {
        Vec::with_capacity(x.data().len())
    } else {
        Vec::new()
    };
    for (gx, g) in per_sample {
        for (a, b) in grads.weight.iter_mut().zip(&g.weight) {
            *a = *a + *b;
        }
        for (a, b) in grads.bias.iter_mut().zip(&g.bias) {
            *a = *a + *b;
        }
        if let Some(gx) = gx {
            gx_data.extend(gx);
        }
    }
    let gx = if want_grad_x {
        Some(Tensor4::from_vec(x.dims(), gx_data)?)
    } else {
        None
    };
    Ok((gx, grads))
}

fn backward_sample<T: Scalar>(
    x: &[T],
    gy: &[T],
    layer: &ConvLayer<T>,
    h: usize,
    w: usize,
    want_grad_x: bool,
) -> (Option<Vec<T>>, ConvGrads<T>) {
    let plane = h * w;
    let mut gw = vec![T::zero(); layer.weight.len()];
    let mut gb = vec![T::zero(); layer.out_channels];
    let mut gx = if want_grad_x {
        vec![T::zero(); layer.in_channels * plane]
    } else {
        Vec::new()
    };
    // Row accumulator for the weight-gradient reductions.
    let mut acc = vec![T::zero(); w];

    for o in 0..layer.out_channels {
        let go = &gy[o * plane..(o + 1) * plane];
        gb[o] = go.iter().fold(T::zero(), |a, &b| a + b);
        for i in 0..layer.in_channels {
            let xi = &x[i * plane..(i + 1) * plane];
            for kr in 0..K {
                let (r_lo, r_hi) = valid(kr, h);
                for kc in 0..K {
                    let (c_lo, c_hi) = valid(kc, w);
                    let span = c_hi - c_lo;
                    let acc = &mut acc[..span];
                    acc.fill(T::zero());
                    let wt = layer.w(o, i, kr, kc);
                    for r in r_lo..r_hi {
                        let src_row = (r + kr - 1) * w;
                        let g = &go[r * w + c_lo..r * w + c_hi];
                        let xs = &xi[src_row + c_lo + kc - 1..src_row + c_hi + kc - 1];
                        for ((a, &gv), &xv) in acc.iter_mut().zip(g).zip(xs) {
                            *a = *a + gv * xv;
                        }
                        if want_grad_x {
                            let dst_off = i * plane + src_row + c_lo + kc - 1;
                            let dst = &mut gx[dst_off..dst_off + span];
                            for (d, &gv) in dst.iter_mut().zip(g) {
                                *d = *d + wt * gv;
                            }
                        }
                    }
                    gw[((o * layer.in_channels + i) * K + kr) * K + kc] =
                        acc.iter().fold(T::zero(), |a, &b| a + b);
                }
            }
        }
    }
    (
        want_grad_x.then_some(gx),
        ConvGrads {
            weight: gw,
            bias: gb,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn delta_kernel() -> ConvLayer<f64> {
        let mut l = ConvLayer::zeros(1, 1);
        l.weight[4] = 1.0;
        l
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor4::from_vec([1, 1, 3, 4], (0..12).map(|v| v as f64).collect()).unwrap();
        let y = conv2d_forward(&x, &delta_kernel()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_counts_neighbors() {
        let x = Tensor4::from_vec([1, 1, 3, 3], vec![1.0f64; 9]).unwrap();
        let mut l = ConvLayer::zeros(1, 1);
        l.weight.fill(1.0);
        let y = conv2d_forward(&x, &l).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn preserves_spatial_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (h, w) in [(1, 1), (2, 5), (7, 3)] {
            let l = ConvLayer::<f32>::init_uniform(2, 3, &mut rng);
            let y = conv2d_forward(&Tensor4::zeros([2, 2, h, w]), &l).unwrap();
            assert_eq!(y.dims(), [2, 3, h, w]);
        }
    }

    #[test]
    fn channel_mismatch() {
        let l = ConvLayer::<f32>::zeros(2, 3);
        assert!(conv2d_forward(&Tensor4::zeros([1, 1, 4, 4]), &l).is_err());
        let gy = Tensor4::zeros([1, 2, 4, 4]);
        assert!(conv2d_backward(&Tensor4::zeros([1, 2, 4, 4]), &l, &gy).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = ConvLayer::<f64>::init_uniform(2, 3, &mut rng);
        let x = Tensor4::from_vec([2, 2, 4, 5], (0..80).map(|v| v as f64 * 0.1).collect()).unwrap();
        let (gx, g) = conv2d_backward(&x, &l, &Tensor4::zeros([2, 3, 4, 5])).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(g.weight.iter().chain(&g.bias).all(|&v| v == 0.0));
    }

    #[test]
    fn bias_grad_is_upstream_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = ConvLayer::<f64>::init_uniform(1, 2, &mut rng);
        let x = Tensor4::zeros([3, 1, 4, 4]);
        let gy: Vec<f64> = (0..96).map(|v| (v % 7) as f64 - 3.0).collect();
        let gy = Tensor4::from_vec([3, 2, 4, 4], gy).unwrap();
        let (_, g) = conv2d_backward(&x, &l, &gy).unwrap();
        for o in 0..2 {
            let s: f64 = (0..3)
                .map(|n| gy.sample(n)[o * 16..(o + 1) * 16].iter().sum::<f64>())
                .sum();
            assert_eq!(g.bias[o], s);
        }
    }
}
