use hargan::rng::seeded;
use hargan::tensor::{grad_check, Elementwise, ReduceOp};
use hargan::{Error, Tape, Tensor, Var};
use proptest::prelude::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

/// Central differences of an arbitrary closure over plain vectors, written
/// without the tape so it can serve as an independent oracle.
fn numeric_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += eps;
            m[i] -= eps;
            (f(&p) - f(&m)) / (2.0 * eps)
        })
        .collect()
}

#[test]
fn add_and_identity_mul() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2], &[1.0, 2.0]));
    let b = tape.constant(t(&[2], &[3.0, 4.0]));
    let c = tape.elementwise(Elementwise::Add, a, Some(b)).unwrap();
    assert_eq!(tape.value(c).data(), &[4.0, 6.0]);

    let x = Tensor::randn(&[3, 4], 1.0, &mut seeded(1));
    let xv = tape.constant(x.clone());
    let ones = tape.constant(Tensor::ones_like(&x));
    let y = tape.mul(xv, ones).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[4]));
    let err = tape.add(a, b).unwrap_err();
    match err {
        Error::ShapeMismatch { lhs, rhs, .. } => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![4]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(tape.elementwise(Elementwise::Tanh, a, Some(b)).is_err());
    assert!(tape.elementwise(Elementwise::Mul, a, None).is_err());
}

#[test]
fn tanh_backward_matches_finite_differences() {
    let x = [0.5, -1.2];
    let mut tape = Tape::new();
    let xv = tape.param(t(&[2], &x));
    let y = tape.tanh(xv);
    let s = tape.sum_all(y);
    tape.backward(s).unwrap();
    let analytic = tape.grad(xv).unwrap();
    let numeric = numeric_grad(|v| v.iter().map(|z| z.tanh()).sum(), &x, 1e-5);
    for (a, n) in analytic.iter().zip(&numeric) {
        assert!((a - n).abs() <= 1e-6, "{a} vs {n}");
    }
}

#[test]
fn every_unary_elementwise_op_has_sound_gradients() {
    let x = t(&[5], &[0.3, -0.7, 1.1, 0.05, 2.0]);
    for op in [
        Elementwise::Tanh,
        Elementwise::Sigmoid,
        Elementwise::Exp,
        Elementwise::Relu,
    ] {
        let err = grad_check(
            |tape, v| {
                let y = tape.elementwise(op, v, None)?;
                Ok(tape.sum_all(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "{op:?}: {err}");
    }
    let pos = t(&[3], &[0.5, 1.5, 3.0]);
    let err = grad_check(
        |tape, v| {
            let y = tape.log(v);
            Ok(tape.sum_all(y))
        },
        &pos,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "log: {err}");
}

#[test]
fn matmul_values_and_gradients() {
    let mut tape = Tape::new();
    let i2 = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let p = tape.matmul(i2, m).unwrap();
    assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
    let r = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let c = tape.constant(t(&[2, 1], &[3.0, 4.0]));
    let rc = tape.matmul(r, c).unwrap();
    assert_eq!(tape.value(rc).data(), &[11.0]);

    let bad = tape.constant(Tensor::zeros(&[3, 3]));
    assert!(tape.matmul(m, bad).is_err());

    let mut rng = seeded(7);
    let a = Tensor::randn(&[3, 4], 1.0, &mut rng);
    let b = Tensor::randn(&[4, 2], 1.0, &mut rng);
    let w = Tensor::randn(&[3, 2], 1.0, &mut rng);
    // gradient wrt a, then wrt b, with a random weighting of the product
    let err_a = grad_check(
        |tape, av| {
            let bv = tape.constant(b.clone());
            let wv = tape.constant(w.clone());
            let p = tape.matmul(av, bv)?;
            let p = tape.mul(p, wv)?;
            Ok(tape.sum_all(p))
        },
        &a,
        1e-5,
    )
    .unwrap();
    let err_b = grad_check(
        |tape, bv| {
            let av = tape.constant(a.clone());
            let wv = tape.constant(w.clone());
            let p = tape.matmul(av, bv)?;
            let p = tape.mul(p, wv)?;
            Ok(tape.sum_all(p))
        },
        &b,
        1e-5,
    )
    .unwrap();
    assert!(err_a <= 1e-6 && err_b <= 1e-6, "{err_a} {err_b}");
}

#[test]
fn batched_matmul_gradients() {
    let mut rng = seeded(8);
    let a = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
    let shared = Tensor::randn(&[4, 5], 1.0, &mut rng);
    let batched = Tensor::randn(&[2, 4, 5], 1.0, &mut rng);
    let w = Tensor::randn(&[2, 3, 5], 1.0, &mut rng);
    for rhs in [shared, batched] {
        let err = grad_check(
            |tape, bv| {
                let av = tape.constant(a.clone());
                let wv = tape.constant(w.clone());
                let p = tape.matmul(av, bv)?;
                let p = tape.mul(p, wv)?;
                Ok(tape.sum_all(p))
            },
            &rhs,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }
}

#[test]
fn reductions() {
    let mut tape = Tape::new();
    let m = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let s = tape.reduce(ReduceOp::Sum, m, 0, false).unwrap();
    assert_eq!(tape.value(s).data(), &[4.0, 6.0]);
    assert_eq!(tape.shape(s), &[2]);
    let k = tape.reduce(ReduceOp::Sum, m, 1, true).unwrap();
    assert_eq!(tape.shape(k), &[2, 1]);
    assert_eq!(tape.value(k).data(), &[3.0, 7.0]);
    let ones = tape.constant(Tensor::ones(&[5]));
    let mean = tape.reduce(ReduceOp::Mean, ones, 0, false).unwrap();
    assert_eq!(tape.value(mean).item().unwrap(), 1.0);
    assert!(matches!(
        tape.reduce(ReduceOp::Sum, m, 2, false),
        Err(Error::InvalidAxis { axis: 2, .. })
    ));
}

#[test]
fn max_routes_gradient_to_argmax_only() {
    let mut tape = Tape::new();
    let x = tape.param(t(&[3], &[3.0, 1.0, 2.0]));
    let m = tape.reduce(ReduceOp::Max, x, 0, false).unwrap();
    assert_eq!(tape.value(m).item().unwrap(), 3.0);
    tape.backward(m).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0, 0.0]);

    // away from ties max is differentiable and finite differences agree
    let err = grad_check(
        |tape, v| {
            let m = tape.reduce(ReduceOp::Max, v, 1, false)?;
            Ok(tape.sum_all(m))
        },
        &t(&[2, 3], &[0.1, 0.9, 0.4, 1.5, -0.2, 0.3]),
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-9);
}

#[test]
fn mean_backward_distributes_one_over_n() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2, 4]));
    let m = tape.reduce(ReduceOp::Mean, x, 1, false).unwrap();
    let s = tape.sum_all(m);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 0.25));
}

#[test]
fn backward_contract() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::randn(&[2, 3], 1.0, &mut seeded(3)));
    let s = tape.sum_all(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 1.0));
    assert!(matches!(tape.backward(s), Err(Error::BackwardTwice)));

    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum_all(sq);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);

    let mut tape = Tape::new();
    let x = tape.param(t(&[2], &[1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
}

#[test]
fn grad_check_of_sum_is_essentially_exact() {
    let x = Tensor::randn(&[4, 3], 1.0, &mut seeded(11));
    let err = grad_check(|tape, v| Ok(tape.sum_all(v)), &x, 1e-3).unwrap();
    assert!(err <= 1e-10, "{err}");
    let err = grad_check(
        |tape, v| {
            let y = tape.tanh(v);
            Ok(tape.sum_all(y))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn grad_check_of_softmax_cross_entropy() {
    let logits = t(&[3], &[1.0, 2.0, 3.0]);
    let err = grad_check(|tape, v| tape.cross_entropy(v, &[2]), &logits, 1e-5).unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn grad_check_reports_non_finite_as_failure() {
    let x = t(&[2], &[-1.0, 1.0]);
    let err = grad_check(
        |tape, v| {
            let y = tape.log(v);
            Ok(tape.sum_all(y))
        },
        &x,
        1e-3,
    )
    .unwrap();
    assert!(err.is_infinite());
}

#[test]
fn softmax_narrow_concat_transpose_gradients() {
    let mut rng = seeded(21);
    let x = Tensor::randn(&[2, 3, 4], 1.0, &mut rng);
    let w = Tensor::randn(&[2, 4, 3], 1.0, &mut rng);
    let err = grad_check(
        |tape, v| {
            let s = tape.softmax(v)?;
            let a = tape.narrow(s, 2, 1, 2)?;
            let b = tape.narrow(v, 2, 0, 2)?;
            let c = tape.concat(&[a, b], 2)?;
            let c = tape.transpose(c)?;
            let wv = tape.constant(w.clone());
            let p = tape.mul(c, wv)?;
            Ok(tape.sum_all(p))
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "{err}");
}

#[test]
fn broadcast_backward_sums_over_repeated_dimensions() {
    let mut rng = seeded(5);
    let big = Tensor::randn(&[3, 4], 1.0, &mut rng);
    let w = Tensor::randn(&[3, 4], 1.0, &mut rng);
    let shapes: [&[usize]; 3] = [&[4], &[3, 1], &[1, 4]];
    for shape in shapes {
        let small = Tensor::randn(shape, 1.0, &mut rng);
        for op in 0..4 {
            let err = grad_check(
                |tape, sv| {
                    let b = tape.constant(big.clone());
                    let wv = tape.constant(w.clone());
                    let y = match op {
                        0 => tape.add(b, sv)?,
                        1 => tape.sub(sv, b)?,
                        2 => tape.mul(b, sv)?,
                        _ => {
                            let d = tape.exp(sv);
                            tape.div(b, d)?
                        }
                    };
                    let y = tape.mul(y, wv)?;
                    Ok(tape.sum_all(y))
                },
                &small,
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-6, "shape {shape:?} op {op}: {err}");
        }
    }
}

#[test]
fn conv1d_layer_norm_and_bce_gradients() {
    let mut rng = seeded(31);
    let x = Tensor::randn(&[2, 3, 7], 1.0, &mut rng);
    let w = Tensor::randn(&[4, 3, 3], 0.5, &mut rng);
    let b = Tensor::randn(&[4], 0.5, &mut rng);
    let err = grad_check(
        |tape, wv| {
            let xv = tape.constant(x.clone());
            let bv = tape.constant(b.clone());
            let y = tape.conv1d(xv, wv, Some(bv), 1)?;
            let y = tape.tanh(y);
            Ok(tape.sum_all(y))
        },
        &w,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "conv weight {err}");

    let rows = Tensor::randn(&[3, 5], 1.0, &mut rng);
    let gain = Tensor::randn(&[5], 1.0, &mut rng);
    let mix = Tensor::randn(&[3, 5], 1.0, &mut rng);
    let err = grad_check(
        |tape, v| {
            let g = tape.constant(gain.clone());
            let bb = tape.constant(Tensor::zeros(&[5]));
            let y = tape.layer_norm(v, g, bb, 1e-5)?;
            let m = tape.constant(mix.clone());
            let y = tape.mul(y, m)?;
            Ok(tape.sum_all(y))
        },
        &rows,
        1e-5,
    )
    .unwrap();
    assert!(err <= 1e-6, "layer norm {err}");

    let logits = t(&[4], &[-2.0, 0.3, 1.7, 0.0]);
    let err = grad_check(|tape, v| tape.bce_with_logits(v, &[0.0, 1.0, 1.0, 0.0]), &logits, 1e-5)
        .unwrap();
    assert!(err <= 1e-6, "bce {err}");
}

fn run_once(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seeded(seed);
    let mut tape = Tape::new();
    let x: Var = tape.param(Tensor::randn(&[4, 6], 1.0, &mut rng));
    let w = tape.param(Tensor::randn(&[6, 3], 1.0, &mut rng));
    let h = tape.matmul(x, w).unwrap();
    let h = tape.sigmoid(h);
    let s = tape.softmax(h).unwrap();
    let l = tape.sum_all(s);
    let l = tape.mul(l, l).unwrap();
    tape.backward(l).unwrap();
    (tape.value(s).data().to_vec(), tape.grad(w).unwrap().to_vec())
}

#[test]
fn identical_seed_gives_bit_identical_values_and_gradients() {
    let (v1, g1) = run_once(99);
    let (v2, g2) = run_once(99);
    assert_eq!(v1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), v2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(g1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), g2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn tensor_numel_matches_shape(dims in proptest::collection::vec(1usize..5, 0..4)) {
        let n: usize = dims.iter().product();
        let tensor = Tensor::new(&dims, vec![0.5; n]).unwrap();
        prop_assert_eq!(tensor.numel(), n);
        prop_assert!(Tensor::new(&dims, vec![0.5; n + 1]).is_err());
    }

    #[test]
    fn gradients_match_value_shapes(rows in 1usize..4, cols in 1usize..5, seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let mut tape = Tape::new();
        let x = tape.param(Tensor::randn(&[rows, cols], 1.0, &mut rng));
        let b = tape.param(Tensor::randn(&[cols], 1.0, &mut rng));
        let y = tape.add(x, b).unwrap();
        let y = tape.tanh(y);
        let s = tape.sum_all(y);
        tape.backward(s).unwrap();
        prop_assert_eq!(tape.grad(x).unwrap().len(), rows * cols);
        prop_assert_eq!(tape.grad(b).unwrap().len(), cols);
    }
}
