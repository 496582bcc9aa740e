use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gates `grad` by `pre > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward<T: Scalar>(pre: &Tensor4<T>, grad: &Tensor4<T>) -> Result<Tensor4<T>> {
    pre.ensure_dims(grad)?;
    let data = pre
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&p, &g)| if p > T::zero() { g } else { T::zero() })
        .collect();
    Ok(Tensor4 {
        dims: pre.dims(),
        data,
    })
}

fn zip_with<T: Scalar>(
    a: &Tensor4<T>,
    b: &Tensor4<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor4<T>> {
    a.ensure_dims(b)?;
    Ok(Tensor4 {
        dims: a.dims(),
        data: a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    })
}

pub fn add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_with(a, b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_with(a, b, |x, y| x - y)
}

/// Gradients of `a + b` with respect to `(a, b)`.
pub fn add_backward<T: Scalar>(grad: &Tensor4<T>) -> (Tensor4<T>, Tensor4<T>) {
    (grad.clone(), grad.clone())
}

/// Gradients of `a - b` with respect to `(a, b)`.
pub fn sub_backward<T: Scalar>(grad: &Tensor4<T>) -> (Tensor4<T>, Tensor4<T>) {
    (grad.clone(), grad.map(|g| -g))
}

/// Stacks `a` and `b` along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, ca, h, w] = a.dims();
    let [nb, cb, hb, wb] = b.dims();
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::shape(&[n, h, w], &[nb, hb, wb]));
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    for s in 0..n {
        data.extend_from_slice(a.sample(s));
        data.extend_from_slice(b.sample(s));
    }
    Ok(Tensor4 {
        dims: [n, ca + cb, h, w],
        data,
    })
}

/// Inverse of [`concat_channels`]; also its backward.
pub fn split_channels<T: Scalar>(x: &Tensor4<T>, first: usize) -> Result<(Tensor4<T>, Tensor4<T>)> {
    let [n, c, h, w] = x.dims();
    if first > c {
        return Err(Error::shape(&[c], &[first]));
    }
    let plane = h * w;
    let mut a = Vec::with_capacity(n * first * plane);
    let mut b = Vec::with_capacity(n * (c - first) * plane);
    for s in 0..n {
        let (x0, x1) = x.sample(s).split_at(first * plane);
        a.extend_from_slice(x0);
        b.extend_from_slice(x1);
    }
    Ok((
        Tensor4 {
            dims: [n, first, h, w],
            data: a,
        },
        Tensor4 {
            dims: [n, c - first, h, w],
            data: b,
        },
    ))
}

/// Mean absolute error over every element. Accumulates in f64.
pub fn l1_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<T> {
    pred.ensure_dims(target)?;
    let n = pred.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t).abs().to_f64().unwrap())
        .sum();
    Ok(T::lit(sum / n as f64))
}

/// `sign(pred - target) / n`, with `sign(0) = 0`.
pub fn l1_backward<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<Tensor4<T>> {
    let scale = T::one() / T::lit(pred.data().len().max(1) as f64);
    zip_with(pred, target, |p, t| {
        if p > t {
            scale
        } else if p < t {
            -scale
        } else {
            T::zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor4<f64> {
        Tensor4::from_vec([1, 1, 1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn relu_and_backward() {
        let x = t(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &t(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
        let pos = t(&[0.0, 0.5, 3.0]);
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn l1_values() {
        let a = t(&[0.0, 1.0]);
        assert_eq!(l1_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(l1_loss(&a, &t(&[1.0, 0.0])).unwrap(), 1.0);
        let g = l1_backward(&t(&[0.0, 2.0, 1.0, 1.0]), &t(&[1.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[-0.25, 0.25, 0.0, 0.0]);
        assert!(l1_loss(&a, &t(&[1.0])).is_err());
    }

    #[test]
    fn concat_split_round_trip() {
        let a = Tensor4::from_vec([2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor4::from_vec([2, 2, 1, 2], (10..18).map(|v| v as f64).collect()).unwrap();
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.dims(), [2, 3, 1, 2]);
        assert_eq!(c.sample(1), &[3.0, 4.0, 14.0, 15.0, 16.0, 17.0]);
        let (a2, b2) = split_channels(&c, 1).unwrap();
        assert_eq!((a2, b2), (a, b));
    }

    #[test]
    fn add_sub_backward() {
        let g = t(&[1.0, -2.0]);
        let (ga, gb) = sub_backward(&g);
        assert_eq!(ga, g);
        assert_eq!(gb.data(), &[-1.0, 2.0]);
        let (ga, gb) = add_backward(&g);
        assert_eq!((ga.data(), gb.data()), (g.data(), g.data()));
        assert_eq!(sub(&g, &g).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(add(&g, &g).unwrap().data(), &[2.0, -4.0]);
    }
}
