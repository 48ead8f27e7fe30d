//! Finite-difference validation of every differentiable op.
//!
//! Each check perturbs one input tensor of a small random problem and
//! compares the analytic gradient from `backward` against central
//! differences of the same forward computation.

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use anyglyph_nn::gradcheck::{central_diff_grad, max_rel_err};
use anyglyph_nn::graph::Graph;
use anyglyph_nn::rng::stream_rng;

const TOL: f64 = 1e-5;
const EPS: f64 = 1e-5;

fn randn(seed: u64, label: &str, shape: &[usize]) -> ArrayD<f64> {
    let mut rng = stream_rng(seed, label);
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.sample::<f64, _>(StandardNormal))
}

/// Check d(loss)/d(input i) for a forward builder; the loss is mean(out^2)
/// so gradients are well scaled.
fn check_input_grad<F>(inputs: &[ArrayD<f64>], probe: usize, build: F)
where
    F: Fn(&mut Graph, &[anyglyph_nn::TensorId]) -> anyglyph_nn::TensorId,
{
    let run = |xs: &[ArrayD<f64>]| -> (f64, Option<ArrayD<f64>>) {
        let mut g = Graph::new();
        let ids: Vec<_> = xs.iter().map(|x| g.leaf(x.clone())).collect();
        let out = build(&mut g, &ids);
        let sq = g.mul(out, out);
        let loss = g.mean_all(sq);
        let grads = g.backward(loss);
        (g.scalar(loss), grads.get(ids[probe]).cloned())
    };

    let (_, analytic) = run(inputs);
    let analytic = analytic.expect("no gradient reached the probed input");
    let numeric = central_diff_grad(
        |x| {
            let mut xs: Vec<ArrayD<f64>> = inputs.to_vec();
            xs[probe] = x.clone();
            run(&xs).0
        },
        &inputs[probe],
        EPS,
    );
    let err = max_rel_err(&analytic, &numeric);
    assert!(err < TOL, "gradient mismatch: rel err {err}");
}

#[test]
fn grad_add_sub_mul_scale() {
    let a = randn(1, "a", &[3, 4]);
    let b = randn(1, "b", &[3, 4]);
    for probe in 0..2 {
        check_input_grad(&[a.clone(), b.clone()], probe, |g, ids| {
            let s = g.add(ids[0], ids[1]);
            let d = g.sub(s, ids[1]);
            let m = g.mul(d, ids[1]);
            g.scale(m, 0.7)
        });
    }
}

#[test]
fn grad_mul_const_and_clamp() {
    let a = randn(2, "a", &[2, 3]);
    let c = randn(2, "c", &[2, 3]);
    check_input_grad(&[a], 0, move |g, ids| {
        let y = g.mul_const(ids[0], c.clone());
        // keep values away from the clamp kink for finite differences
        let y = g.scale(y, 0.05);
        let half = g.constant(ArrayD::from_elem(IxDyn(&[2, 3]), 0.5));
        let y = g.add(y, half);
        g.clamp01(y)
    });
}

#[test]
fn grad_silu_softmax() {
    let a = randn(3, "a", &[2, 5]);
    check_input_grad(&[a.clone()], 0, |g, ids| {
        let y = g.silu(ids[0]);
        g.softmax_last(y)
    });
}

#[test]
fn grad_reshape_permute_concat() {
    let a = randn(4, "a", &[2, 3, 4]);
    let b = randn(4, "b", &[2, 3, 4]);
    for probe in 0..2 {
        check_input_grad(&[a.clone(), b.clone()], probe, |g, ids| {
            let p = g.permute(ids[0], &[2, 0, 1]);
            let r = g.reshape(p, &[4, 6]);
            let q = g.permute(ids[1], &[2, 0, 1]);
            let q = g.reshape(q, &[4, 6]);
            g.concat(1, &[r, q])
        });
    }
}

#[test]
fn grad_matmul_bmm() {
    let a = randn(5, "a", &[3, 4]);
    let b = randn(5, "b", &[4, 2]);
    for probe in 0..2 {
        check_input_grad(&[a.clone(), b.clone()], probe, |g, ids| g.matmul(ids[0], ids[1]));
    }
    let a = randn(6, "a", &[2, 3, 4]);
    let b = randn(6, "b", &[2, 4, 2]);
    for probe in 0..2 {
        check_input_grad(&[a.clone(), b.clone()], probe, |g, ids| g.bmm(ids[0], ids[1]));
    }
}

#[test]
fn grad_conv2d() {
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        let x = randn(7, "x", &[2, 3, 6, 6]);
        let w = randn(7, "w", &[4, 3, 3, 3]);
        let b = randn(7, "b", &[4]);
        for probe in 0..3 {
            check_input_grad(&[x.clone(), w.clone(), b.clone()], probe, move |g, ids| {
                let y = g.conv2d(ids[0], ids[1], stride, pad);
                g.add_bias_ch(y, ids[2])
            });
        }
    }
}

#[test]
fn grad_group_norm() {
    let x = randn(8, "x", &[2, 4, 3, 3]);
    let gamma = randn(8, "g", &[4]);
    let beta = randn(8, "b", &[4]);
    for probe in 0..3 {
        check_input_grad(&[x.clone(), gamma.clone(), beta.clone()], probe, |g, ids| {
            g.group_norm(ids[0], ids[1], ids[2], 2)
        });
    }
}

#[test]
fn grad_layer_norm() {
    let x = randn(9, "x", &[2, 3, 5]);
    let gamma = randn(9, "g", &[5]);
    let beta = randn(9, "b", &[5]);
    for probe in 0..3 {
        check_input_grad(&[x.clone(), gamma.clone(), beta.clone()], probe, |g, ids| {
            g.layer_norm_last(ids[0], ids[1], ids[2])
        });
    }
}

#[test]
fn grad_broadcast_adds() {
    let x = randn(10, "x", &[2, 3, 4, 4]);
    let bias = randn(10, "b", &[3]);
    for probe in 0..2 {
        check_input_grad(&[x.clone(), bias.clone()], probe, |g, ids| {
            g.add_bias_ch(ids[0], ids[1])
        });
    }
    let x = randn(11, "x", &[2, 4, 5]);
    let bias = randn(11, "b", &[5]);
    for probe in 0..2 {
        check_input_grad(&[x.clone(), bias.clone()], probe, |g, ids| {
            g.add_bias_last(ids[0], ids[1])
        });
    }
    let x = randn(12, "x", &[3, 4, 5]);
    let y = randn(12, "y", &[4, 5]);
    for probe in 0..2 {
        check_input_grad(&[x.clone(), y.clone()], probe, |g, ids| g.add_bcast0(ids[0], ids[1]));
    }
    let x = randn(13, "x", &[2, 3, 4, 4]);
    let t = randn(13, "t", &[2, 3]);
    for probe in 0..2 {
        check_input_grad(&[x.clone(), t.clone()], probe, |g, ids| {
            g.add_time_bias(ids[0], ids[1])
        });
    }
}

#[test]
fn grad_resampling() {
    let x = randn(14, "x", &[2, 3, 4, 4]);
    check_input_grad(&[x.clone()], 0, |g, ids| g.upsample2(ids[0]));
    check_input_grad(&[x.clone()], 0, |g, ids| g.space_to_depth(ids[0], 2));
    let y = randn(15, "y", &[2, 12, 2, 2]);
    check_input_grad(&[y], 0, |g, ids| g.depth_to_space(ids[0], 2));
}

#[test]
fn grad_reductions_and_embedding() {
    let x = randn(16, "x", &[3, 4, 2]);
    check_input_grad(&[x.clone()], 0, |g, ids| g.mean_per_sample(ids[0]));

    let table = randn(17, "t", &[6, 3]);
    let ids_mat = Array2::from_shape_vec((2, 4), vec![0usize, 5, 2, 2, 1, 3, 4, 0]).unwrap();
    check_input_grad(&[table], 0, move |g, ids| g.embedding(ids[0], ids_mat.clone()));

    let v = randn(18, "v", &[5]);
    let w = Array1::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    check_input_grad(&[v], 0, move |g, ids| g.dot_const(ids[0], w.clone()));
}

#[test]
fn grad_linear_and_mse() {
    let x = randn(19, "x", &[2, 3, 4]);
    let w = randn(19, "w", &[4, 5]);
    let b = randn(19, "b", &[5]);
    let target = randn(19, "tg", &[2, 3, 5]);
    for probe in 0..3 {
        let target = target.clone();
        check_input_grad(&[x.clone(), w.clone(), b.clone()], probe, move |g, ids| {
            let y = g.linear(ids[0], ids[1], ids[2]);
            let t = g.constant(target.clone());
            g.mse(y, t)
        });
    }
}

#[test]
fn repeated_use_of_one_tensor_accumulates() {
    // y = x * x + x; dy/dx = 2x + 1
    let x = randn(20, "x", &[4]);
    let mut g = Graph::new();
    let xid = g.leaf(x.clone());
    let x2 = g.mul(xid, xid);
    let y = g.add(x2, xid);
    let loss = g.mean_all(y);
    let grads = g.backward(loss);
    let got = grads.get(xid).unwrap();
    let want = x.mapv(|v| (2.0 * v + 1.0) / 4.0);
    assert!(max_rel_err(got, &want) < 1e-12);
}

#[test]
fn constants_receive_no_gradient_and_values_are_deterministic() {
    let x = randn(21, "x", &[2, 2]);
    let mut g = Graph::new();
    let c = g.constant(x.clone());
    let l = g.leaf(x.clone());
    let y = g.mul(c, l);
    let loss = g.mean_all(y);
    let grads = g.backward(loss);
    assert!(grads.get(c).is_none());
    assert!(grads.get(l).is_some());

    // same graph twice -> bit-identical values
    let build = || {
        let mut g = Graph::new();
        let a = g.leaf(x.clone());
        let b = g.silu(a);
        let c = g.softmax_last(b);
        let l = g.mean_all(c);
        g.scalar(l)
    };
    assert_eq!(build().to_bits(), build().to_bits());
}
