use autodiff::{grad_check, Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// `sum(y * w)` with a fixed random `w`, so no coordinate of the gradient is
/// structurally zero.
fn weighted_sum(g: &mut Graph<f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let wv = g.constant(w.clone());
    let p = g.mul(y, wv)?;
    Ok(g.sum(p))
}

/// Runs a grad check of `op` at 10 random points in `[lo, hi)`.
fn check_unary(
    name: &str,
    shape: &[usize],
    lo: f64,
    hi: f64,
    op: impl Fn(&mut Graph<f64>, Var) -> Result<Var> + Copy,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64 * 7919);
    for trial in 0..10 {
        let x = random(&mut rng, shape, lo, hi);
        let mut probe = Graph::new();
        let px = probe.constant(x.clone());
        let out = op(&mut probe, px).unwrap();
        let out_shape = probe.shape(out).to_vec();
        let w = random(&mut rng, &out_shape, -1.0, 1.0);
        let err = grad_check(
            |g, v| {
                let y = op(g, v)?;
                weighted_sum(g, y, &w)
            },
            &x,
            H,
        )
        .unwrap();
        assert!(err < TOL, "{name} trial {trial}: relative error {err:e}");
    }
}

#[test]
fn elementwise_primitives_match_finite_differences() {
    check_unary("relu", &[3, 4], 0.1, 2.0, |g, x| Ok(g.relu(x)));
    check_unary("relu-neg", &[3, 4], -2.0, -0.1, |g, x| Ok(g.relu(x)));
    check_unary("tanh", &[3, 4], -2.0, 2.0, |g, x| Ok(g.tanh(x)));
    check_unary("sigmoid", &[3, 4], -4.0, 4.0, |g, x| Ok(g.sigmoid(x)));
    check_unary("exp", &[3, 4], -2.0, 2.0, |g, x| Ok(g.exp(x)));
    check_unary("log", &[3, 4], 0.2, 3.0, |g, x| Ok(g.log(x)));
    check_unary(
        "clamp",
        &[3, 4],
        -0.9,
        0.9,
        |g, x| Ok(g.clamp(x, -1.0, 1.0)),
    );
    check_unary("scale", &[5], -1.0, 1.0, |g, x| Ok(g.scale(x, -2.5)));
    check_unary("add_scalar", &[5], -1.0, 1.0, |g, x| {
        Ok(g.add_scalar(x, 3.0))
    });
    check_unary("square", &[2, 3], -2.0, 2.0, |g, x| g.mul(x, x));
}

#[test]
fn reductions_and_layout_primitives_match_finite_differences() {
    check_unary("sum", &[2, 3], -1.0, 1.0, |g, x| {
        let s = g.sum(x);
        Ok(g.mul(s, s)?)
    });
    check_unary("mean", &[2, 3], -1.0, 1.0, |g, x| {
        let s = g.mean(x);
        Ok(g.exp(s))
    });
    check_unary("sum_axis0", &[3, 4], -1.0, 1.0, |g, x| g.sum_axis(x, 0));
    check_unary("sum_axis1", &[2, 3, 4], -1.0, 1.0, |g, x| g.sum_axis(x, 1));
    check_unary("sum_axis_last", &[2, 3, 4], -1.0, 1.0, |g, x| {
        g.sum_axis(x, 2)
    });
    check_unary("transpose", &[2, 3, 4], -1.0, 1.0, |g, x| g.transpose(x));
    check_unary("reshape", &[2, 6], -1.0, 1.0, |g, x| g.reshape(x, &[3, 4]));
    check_unary("slice", &[3, 5, 2], -1.0, 1.0, |g, x| g.slice(x, 1, 1, 3));
    check_unary("concat", &[2, 3], -1.0, 1.0, |g, x| {
        let t = g.tanh(x);
        g.concat(&[x, t, x], 1)
    });
    check_unary("concat0", &[2, 3], -1.0, 1.0, |g, x| {
        let e = g.exp(x);
        g.concat(&[e, x], 0)
    });
}

#[test]
fn softmax_and_layer_norm_match_finite_differences() {
    check_unary("softmax-last", &[3, 5], -2.0, 2.0, |g, x| g.softmax(x, 1));
    check_unary("softmax-first", &[4, 3], -2.0, 2.0, |g, x| g.softmax(x, 0));
    check_unary("softmax-mid", &[2, 4, 3], -2.0, 2.0, |g, x| g.softmax(x, 1));
    check_unary("layer_norm", &[3, 6], -2.0, 2.0, |g, x| {
        Ok(g.layer_norm(x, 1e-5))
    });
}

#[test]
fn binary_primitives_match_finite_differences_for_both_operands() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let other = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let bias = random(&mut rng, &[4], -1.0, 1.0);
        let x = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let xb = random(&mut rng, &[4], -1.0, 1.0);
        let w = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let cases: Vec<(&str, f64)> = vec![
            (
                "add",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.add(v, o)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "sub-left",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.sub(v, o)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "sub-right",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.sub(o, v)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "mul",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.mul(v, o)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "add-broadcast",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.add(o, v)?;
                        weighted_sum(g, y, &w)
                    },
                    &xb,
                    H,
                )
                .unwrap(),
            ),
            (
                "mul-broadcast",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.mul(o, v)?;
                        weighted_sum(g, y, &w)
                    },
                    &xb,
                    H,
                )
                .unwrap(),
            ),
            (
                "mul-broadcast-left",
                grad_check(
                    |g, v| {
                        let o = g.constant(bias.clone());
                        let y = g.mul(v, o)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "minimum",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.minimum(v, o)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "minimum-right",
                grad_check(
                    |g, v| {
                        let o = g.constant(other.clone());
                        let y = g.minimum(o, v)?;
                        weighted_sum(g, y, &w)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
        ];
        for (name, err) in cases {
            assert!(err < TOL, "{name}: {err:e}");
        }
    }
}

#[test]
fn matmul_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
        let shared = random(&mut rng, &[4, 5], -1.0, 1.0);
        let batched = random(&mut rng, &[2, 4, 5], -1.0, 1.0);
        let w = random(&mut rng, &[2, 3, 5], -1.0, 1.0);
        let errs = [
            grad_check(
                |g, v| {
                    let b = g.constant(shared.clone());
                    let y = g.matmul(v, b)?;
                    weighted_sum(g, y, &w)
                },
                &a,
                H,
            )
            .unwrap(),
            grad_check(
                |g, v| {
                    let x = g.constant(a.clone());
                    let y = g.matmul(x, v)?;
                    weighted_sum(g, y, &w)
                },
                &shared,
                H,
            )
            .unwrap(),
            grad_check(
                |g, v| {
                    let b = g.constant(batched.clone());
                    let y = g.matmul(v, b)?;
                    weighted_sum(g, y, &w)
                },
                &a,
                H,
            )
            .unwrap(),
            grad_check(
                |g, v| {
                    let x = g.constant(a.clone());
                    let y = g.matmul(x, v)?;
                    weighted_sum(g, y, &w)
                },
                &batched,
                H,
            )
            .unwrap(),
        ];
        for e in errs {
            assert!(e < TOL, "matmul: {e:e}");
        }
    }
}

#[test]
fn gaussian_sample_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let mean = random(&mut rng, &[4, 3], -1.0, 1.0);
        let log_std = random(&mut rng, &[4, 3], -1.5, 1.5);
        let noise: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w = random(&mut rng, &[4, 3], -1.0, 1.0);
        let wrt_mean = grad_check(
            |g, v| {
                let s = g.constant(log_std.clone());
                let y = g.gaussian_sample(v, s, &noise)?;
                weighted_sum(g, y, &w)
            },
            &mean,
            H,
        )
        .unwrap();
        let wrt_log_std = grad_check(
            |g, v| {
                let m = g.constant(mean.clone());
                let y = g.gaussian_sample(m, v, &noise)?;
                weighted_sum(g, y, &w)
            },
            &log_std,
            H,
        )
        .unwrap();
        assert!(
            wrt_mean < TOL && wrt_log_std < TOL,
            "{wrt_mean:e} {wrt_log_std:e}"
        );
    }
}

#[test]
fn sum_of_sigmoid_of_linear_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random(&mut rng, &[4, 4], -1.0, 1.0);
    let x = random(&mut rng, &[4, 1], -1.0, 1.0);
    let err = grad_check(
        |g, v| {
            let wv = g.constant(w.clone());
            let h = g.matmul(wv, v)?;
            let s = g.sigmoid(h);
            Ok(g.sum(s))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn linear_function_is_checked_to_near_machine_precision() {
    let x = Tensor::from_vec(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
    let err = grad_check(
        |g, v| {
            let s = g.scale(v, 3.0);
            Ok(g.sum(s))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn non_scalar_output_is_a_contract_error() {
    let x = Tensor::from_vec(vec![2], vec![1.0, 2.0]).unwrap();
    let err = grad_check(|g, v| Ok(g.exp(v)), &x, 1e-5).unwrap_err();
    assert!(matches!(err, autodiff::TensorError::Contract(_)));
}
