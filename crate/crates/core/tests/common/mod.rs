//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rainres::models::Network;
use rainres::neural::stack::ConvStack;
use rainres::neural::{
    add, add_backward, concat_channels, conv2d_backward, conv2d_forward, l1_backward, l1_loss,
    relu, relu_backward, split_channels, sub, sub_backward, ConvLayer, Tensor4,
};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|)` over the whole gradient vector.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences of `f` at `x0`.
pub fn numeric_gradient(x0: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], lo: f64, hi: f64) -> Tensor4<f64> {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks and L1 ties sit far from
/// the finite-difference stencil.
fn signed_away_from_zero(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4<f64> {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor4::from_vec(dims, data).unwrap()
}

fn with_data(t: &Tensor4<f64>, data: &[f64]) -> Tensor4<f64> {
    Tensor4::from_vec(t.dims(), data.to_vec()).unwrap()
}

/// Linear read-out `sum(r * y)`; its gradient with respect to `y` is `r`.
fn project(r: &Tensor4<f64>, y: &Tensor4<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

pub type Check = (String, f64);

pub fn check_relu(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = signed_away_from_zero(&mut rng, [4, 3, 6, 6]);
    let r = random_tensor(&mut rng, x.dims(), -1.0, 1.0);
    let analytic = relu_backward(&x, &r).unwrap();
    let numeric = numeric_gradient(x.data(), |d| project(&r, &relu(&with_data(&x, d))));
    vec![("relu".into(), relative_error(analytic.data(), &numeric))]
}

pub fn check_add_sub(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, [2, 3, 5, 6], -1.0, 1.0);
    let b = random_tensor(&mut rng, a.dims(), -1.0, 1.0);
    let r = random_tensor(&mut rng, a.dims(), -1.0, 1.0);
    let mut out = Vec::new();
    let (ga, gb) = add_backward(&r);
    let na = numeric_gradient(a.data(), |d| {
        project(&r, &add(&with_data(&a, d), &b).unwrap())
    });
    let nb = numeric_gradient(b.data(), |d| {
        project(&r, &add(&a, &with_data(&b, d)).unwrap())
    });
    out.push(("add.a".into(), relative_error(ga.data(), &na)));
    out.push(("add.b".into(), relative_error(gb.data(), &nb)));
    let (ga, gb) = sub_backward(&r);
    let na = numeric_gradient(a.data(), |d| {
        project(&r, &sub(&with_data(&a, d), &b).unwrap())
    });
    let nb = numeric_gradient(b.data(), |d| {
        project(&r, &sub(&a, &with_data(&b, d)).unwrap())
    });
    out.push(("sub.a".into(), relative_error(ga.data(), &na)));
    out.push(("sub.b".into(), relative_error(gb.data(), &nb)));
    out
}

pub fn check_concat(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_tensor(&mut rng, [3, 1, 6, 6], -1.0, 1.0);
    let b = random_tensor(&mut rng, [3, 2, 6, 6], -1.0, 1.0);
    let r = random_tensor(&mut rng, [3, 3, 6, 6], -1.0, 1.0);
    let (ga, gb) = split_channels(&r, 1).unwrap();
    let na = numeric_gradient(a.data(), |d| {
        project(&r, &concat_channels(&with_data(&a, d), &b).unwrap())
    });
    let nb = numeric_gradient(b.data(), |d| {
        project(&r, &concat_channels(&a, &with_data(&b, d)).unwrap())
    });
    vec![
        ("concat.a".into(), relative_error(ga.data(), &na)),
        ("concat.b".into(), relative_error(gb.data(), &nb)),
    ]
}

pub fn check_l1(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_tensor(&mut rng, [4, 1, 6, 6], 0.0, 1.0);
    let offset = signed_away_from_zero(&mut rng, target.dims());
    let pred = with_data(
        &target,
        &target
            .data()
            .iter()
            .zip(offset.data())
            .map(|(t, o)| t + o)
            .collect::<Vec<_>>(),
    );
    let analytic = l1_backward(&pred, &target).unwrap();
    let numeric = numeric_gradient(pred.data(), |d| {
        l1_loss(&with_data(&pred, d), &target).unwrap()
    });
    vec![("l1".into(), relative_error(analytic.data(), &numeric))]
}

pub fn check_conv(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layer = {
        let mut l = ConvLayer::<f64>::init_uniform(3, 2, &mut rng);
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.5..0.5));
        l
    };
    let x = random_tensor(&mut rng, [4, 3, 6, 6], -1.0, 1.0);
    let r = random_tensor(&mut rng, [4, 2, 6, 6], -1.0, 1.0);
    let (gx, grads) = conv2d_backward(&x, &layer, &r).unwrap();

    let nx = numeric_gradient(x.data(), |d| {
        project(&r, &conv2d_forward(&with_data(&x, d), &layer).unwrap())
    });
    let nw = numeric_gradient(&layer.weight, |d| {
        let mut l = layer.clone();
        l.weight.copy_from_slice(d);
        project(&r, &conv2d_forward(&x, &l).unwrap())
    });
    let nb = numeric_gradient(&layer.bias, |d| {
        let mut l = layer.clone();
        l.bias.copy_from_slice(d);
        project(&r, &conv2d_forward(&x, &l).unwrap())
    });
    vec![
        ("conv.input".into(), relative_error(gx.data(), &nx)),
        ("conv.weight".into(), relative_error(&grads.weight, &nw)),
        ("conv.bias".into(), relative_error(&grads.bias, &nb)),
    ]
}

/// Two convolutions with a ReLU between them, checked end to end.
pub fn check_two_layer_chain(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = ConvStack::<f64>::init(&[2, 3, 1], false, &mut rng);
    for l in &mut stack.layers {
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.3..0.3));
    }
    let x = random_tensor(&mut rng, [2, 2, 6, 6], -1.0, 1.0);
    let r = random_tensor(&mut rng, [2, 1, 6, 6], -1.0, 1.0);
    let (_, tape) = stack.forward_tape(&x).unwrap();
    let (grads, gx) = stack.backward(&tape, &r, true).unwrap();
    let loss = |s: &ConvStack<f64>, x: &Tensor4<f64>| project(&r, &s.forward(x).unwrap());

    let mut out = vec![(
        "chain.input".into(),
        relative_error(
            gx.unwrap().data(),
            &numeric_gradient(x.data(), |d| loss(&stack, &with_data(&x, d))),
        ),
    )];
    for (k, g) in grads.iter().enumerate() {
        let nw = numeric_gradient(&stack.layers[k].weight, |d| {
            let mut s = stack.clone();
            s.layers[k].weight.copy_from_slice(d);
            loss(&s, &x)
        });
        let nb = numeric_gradient(&stack.layers[k].bias, |d| {
            let mut s = stack.clone();
            s.layers[k].bias.copy_from_slice(d);
            loss(&s, &x)
        });
        out.push((
            format!("chain.layer{k}.weight"),
            relative_error(&g.weight, &nw),
        ));
        out.push((format!("chain.layer{k}.bias"), relative_error(&g.bias, &nb)));
    }
    out
}

/// Every parameter tensor and both inputs of a full model, through the L1
/// loss against a random target.
pub fn check_model<M: Network<f64>>(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = M::init(seed);
    for l in model.layers_mut() {
        l.bias
            .iter_mut()
            .for_each(|b| *b = rng.random_range(0.05..0.3));
    }
    let dims = [2, 1, 6, 6];
    let before = random_tensor(&mut rng, dims, 0.0, 1.0);
    let after = random_tensor(&mut rng, dims, 0.0, 1.0);
    let r = random_tensor(&mut rng, dims, -1.0, 1.0);
    let loss = |m: &M, b: &Tensor4<f64>, a: &Tensor4<f64>| project(&r, &m.forward(b, a).unwrap());

    let (_, tape) = model.forward_tape(&before, &after).unwrap();
    let grads = model.backward(&tape, &r, true).unwrap();
    let name = M::KIND.name();
    let mut out = vec![
        (
            format!("{name}.before"),
            relative_error(
                grads.before.as_ref().unwrap().data(),
                &numeric_gradient(before.data(), |d| {
                    loss(&model, &with_data(&before, d), &after)
                }),
            ),
        ),
        (
            format!("{name}.after"),
            relative_error(
                grads.after.as_ref().unwrap().data(),
                &numeric_gradient(after.data(), |d| {
                    loss(&model, &before, &with_data(&after, d))
                }),
            ),
        ),
    ];
    let names = model.layer_names();
    for (k, g) in grads.layers.iter().enumerate() {
        let nw = numeric_gradient(&model.layers()[k].weight, |d| {
            let mut m = model.clone();
            m.layers_mut()[k].weight.copy_from_slice(d);
            loss(&m, &before, &after)
        });
        let nb = numeric_gradient(&model.layers()[k].bias, |d| {
            let mut m = model.clone();
            m.layers_mut()[k].bias.copy_from_slice(d);
            loss(&m, &before, &after)
        });
        out.push((
            format!("{name}.{}.weight", names[k]),
            relative_error(&g.weight, &nw),
        ));
        out.push((
            format!("{name}.{}.bias", names[k]),
            relative_error(&g.bias, &nb),
        ));
    }
    out
}

/// Contingency counts and MAE by an explicit row/column double loop.
pub fn brute_force_scores(
    rows: usize,
    cols: usize,
    pred: &[f32],
    truth: &[f32],
) -> (u64, u64, u64, f64) {
    let (mut h, mut f, mut m) = (0u64, 0u64, 0u64);
    let mut abs_sum = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            let p = pred[r * cols + c];
            let t = truth[r * cols + c];
            if p > 0.0 && t > 0.0 {
                h += 1;
            } else if p > 0.0 {
                f += 1;
            } else if t > 0.0 {
                m += 1;
            }
            abs_sum += (f64::from(p) - f64::from(t)).abs();
        }
    }
    (h, f, m, abs_sum / (rows * cols) as f64)
}

/// Random map with roughly `dry` of its cells exactly zero.
pub fn random_rain(rng: &mut ChaCha8Rng, n: usize, dry: f64) -> Vec<f32> {
    (0..n)
        .map(|_| {
            if rng.random_bool(dry) {
                0.0
            } else {
                rng.random_range(0.0f32..1.0)
            }
        })
        .collect()
}
