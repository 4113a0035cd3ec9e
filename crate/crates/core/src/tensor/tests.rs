//! Finite-difference checks of first and second derivatives for every op.

use super::*;

type F = Tensor<f64>;

fn vals(n: usize, seed: f64) -> Vec<f64> {
    (0..n).map(|i| ((i as f64 + 1.0) * seed).sin() * 0.9 + 0.05 * (i % 5) as f64).collect()
}

fn leaf(shape: &[usize], seed: f64) -> F {
    let n = shape.iter().product();
    Tensor::param(vals(n, seed), shape)
}

/// Central differences of a scalar function over every input element.
fn fd(f: &dyn Fn(&[F]) -> F, inputs: &[F], h: f64) -> Vec<Vec<f64>> {
    inputs
        .iter()
        .enumerate()
        .map(|(k, x)| {
            (0..x.numel())
                .map(|i| {
                    let eval = |d: f64| {
                        let args: Vec<F> = inputs
                            .iter()
                            .enumerate()
                            .map(|(j, t)| {
                                if j != k {
                                    return t.detach();
                                }
                                let mut v = t.to_vec();
                                v[i] += d;
                                Tensor::new(v, t.shape())
                            })
                            .collect();
                        no_grad(|| f(&args)).item()
                    };
                    (eval(h) - eval(-h)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

fn assert_close(name: &str, got: &[f64], want: &[f64], tol: f64) {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(1e-3_f64, |m, v| m.max(v.abs()));
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= tol * scale, "{name}[{i}]: autodiff {g} vs finite difference {w}");
    }
}

fn check(name: &str, f: impl Fn(&[F]) -> F, inputs: Vec<F>) {
    let out = f(&inputs);
    let refs: Vec<&F> = inputs.iter().collect();
    let grads = grad(&out, &refs, false);
    let numeric = fd(&f, &inputs, 1e-6);
    for (k, (g, n)) in grads.iter().zip(&numeric).enumerate() {
        let g = g.as_ref().map(|t| t.to_vec()).unwrap_or_else(|| vec![0.0; n.len()]);
        assert_close(&format!("{name} d/dx{k}"), &g, n, 1e-6);
    }
}

/// Checks the gradient of `‖∇_{x0} f‖²` w.r.t. every input, which exercises
/// the derivative of each op's backward rule.
fn check_second(name: &str, f: impl Fn(&[F]) -> F + Clone, inputs: Vec<F>) {
    let f2 = {
        let f = f.clone();
        move |xs: &[F]| -> F {
            let xs: Vec<F> = xs.iter().map(|x| if x.requires_grad() { x.clone() } else { x.tracked_leaf() }).collect();
            let out = f(&xs);
            let g = grad(&out, &[&xs[0]], true)[0].clone().expect("gradient");
            g.square().sum()
        }
    };
    let out = f2(&inputs);
    let refs: Vec<&F> = inputs.iter().collect();
    let grads = grad(&out, &refs, false);
    let f2b = |xs: &[F]| -> F {
        crate::tensor::graph::with_grad_mode(true, || {
            let tracked: Vec<F> = xs.iter().map(|x| x.tracked_leaf()).collect();
            let out = f(&tracked);
            let g = grad(&out, &[&tracked[0]], false)[0].clone().expect("gradient");
            g.square().sum().detach()
        })
    };
    let numeric = fd(&f2b, &inputs, 1e-5);
    for (k, (g, n)) in grads.iter().zip(&numeric).enumerate() {
        let g = g.as_ref().map(|t| t.to_vec()).unwrap_or_else(|| vec![0.0; n.len()]);
        assert_close(&format!("{name} second-order d/dx{k}"), &g, n, 1e-5);
    }
}

#[test]
fn elementwise_first_order() {
    check("add_mul", |x| x[0].mul(&x[1]).add(&x[0]).sum(), vec![leaf(&[2, 3], 0.3), leaf(&[2, 3], 0.7)]);
    check("div", |x| x[0].div(&x[1].square().add_scalar(1.0)).sum(), vec![leaf(&[5], 0.3), leaf(&[5], 0.9)]);
    check("sub_neg_scale", |x| x[0].sub(&x[1]).neg().scale(3.0).square().sum(), vec![leaf(&[4], 0.2), leaf(&[4], 1.3)]);
    check("exp_ln", |x| x[0].exp().add_scalar(1.0).ln().sum(), vec![leaf(&[6], 0.4)]);
    check("sqrt_powf", |x| x[0].square().add_scalar(0.5).sqrt().powf(1.5).sum(), vec![leaf(&[6], 0.4)]);
    check("tanh_sigmoid", |x| x[0].tanh().mul(&x[0].sigmoid()).sum(), vec![leaf(&[7], 1.7)]);
    check("leaky_abs", |x| x[0].leaky_relu(0.2).mul(&x[0].abs()).sum(), vec![leaf(&[7], 1.7)]);
}

#[test]
fn broadcasting_first_order() {
    check(
        "channel_broadcast",
        |x| x[0].mul(&x[1]).add(&x[2]).square().mean(),
        vec![leaf(&[2, 3, 2, 2], 0.3), leaf(&[1, 3, 1, 1], 0.8), leaf(&[3, 1, 1], 1.1)],
    );
    check("sum_to", |x| x[0].sum_to(&[1, 3, 1]).square().sum(), vec![leaf(&[2, 3, 4], 0.6)]);
}

#[test]
fn shape_ops_first_order() {
    check(
        "concat_narrow_reshape",
        |x| {
            let c = Tensor::concat(&[&x[0], &x[1]], 1);
            c.narrow(1, 1, 3).reshape(&[2, 6]).square().sum()
        },
        vec![leaf(&[2, 2, 2], 0.3), leaf(&[2, 3, 2], 0.9)],
    );
    check("matmul", |x| x[0].matmul(&x[1]).tanh().sum(), vec![leaf(&[3, 4], 0.3), leaf(&[4, 2], 0.5)]);
    check(
        "matmul_t",
        |x| x[0].matmul_t(&x[1], true, true).square().sum(),
        vec![leaf(&[4, 3], 0.3), leaf(&[2, 4], 0.5)],
    );
}

#[test]
fn spatial_ops_first_order() {
    check(
        "conv",
        |x| x[0].conv2d(&x[1], 1).tanh().sum(),
        vec![leaf(&[2, 2, 4, 3], 0.3), leaf(&[3, 2, 3, 3], 0.5)],
    );
    check("pool", |x| x[0].max_pool2x2().square().sum(), vec![leaf(&[1, 2, 4, 4], 0.77)]);
    check("upsample", |x| x[0].upsample2x().tanh().sum(), vec![leaf(&[1, 2, 2, 3], 0.77)]);
}

#[test]
fn second_order_through_every_op() {
    check_second(
        "conv_chain",
        |x| x[0].conv2d(&x[1], 1).tanh().mul(&x[0].conv2d(&x[1], 1)).sum(),
        vec![leaf(&[2, 1, 4, 4], 0.3), leaf(&[2, 1, 3, 3], 0.5)],
    );
    check_second(
        "pool_up_leaky",
        |x| x[0].conv2d(&x[1], 1).leaky_relu(0.2).max_pool2x2().upsample2x().sigmoid().sum(),
        vec![leaf(&[2, 1, 4, 4], 0.37), leaf(&[2, 1, 3, 3], 0.51)],
    );
    check_second(
        "normalize",
        |x| {
            let mean = x[0].sum_to(&[1, 2, 1, 1]).scale(1.0 / 8.0);
            let xc = x[0].sub(&mean);
            let var = xc.square().sum_to(&[1, 2, 1, 1]).scale(1.0 / 8.0);
            xc.mul(&var.add_scalar(1e-3).powf(-0.5)).mul(&x[1]).tanh().sum()
        },
        vec![leaf(&[2, 2, 2, 2], 0.41), leaf(&[1, 2, 2, 2], 0.9)],
    );
    check_second(
        "dense",
        |x| {
            let h = x[0].reshape(&[2, 4]).matmul(&x[1]).tanh();
            Tensor::concat(&[&h, &x[0].reshape(&[2, 4])], 1).exp().sum()
        },
        vec![leaf(&[2, 2, 2], 0.2), leaf(&[4, 3], 0.6)],
    );
}

#[test]
fn untracked_inputs_get_no_gradient() {
    let a = leaf(&[3], 0.1);
    let b = Tensor::<f64>::ones(&[3]);
    let out = a.mul(&b).sum();
    let g = grad(&out, &[&a, &b], false);
    assert!(g[0].is_some());
    assert!(g[1].is_none());
    let detached = a.detach().mul(&b).sum();
    assert!(!detached.requires_grad());
}

#[test]
fn no_grad_blocks_recording() {
    let a = leaf(&[3], 0.1);
    let out = no_grad(|| a.square().sum());
    assert!(!out.requires_grad());
    assert!(is_grad_enabled());
}

#[test]
fn update_data_keeps_identity() {
    let mut p = leaf(&[2], 0.5);
    let id = p.id();
    let keep = p.clone();
    p.update_data(|d| d[0] = 42.0);
    assert_eq!(p.id(), id);
    assert_eq!(p.data()[0], 42.0);
    assert_ne!(keep.data()[0], 42.0);
}
