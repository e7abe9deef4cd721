//! Operation outputs against brute-force oracles, and every backward rule
//! against central finite differences.

use hnam_tensor::gradcheck::GradCheck;
use hnam_tensor::{Graph, SeedTree, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SeedTree::new(seed).rng("data");
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Checks the gradient of `sum(f(inputs) * probe)` for every input against
/// finite differences. `probe` makes the loss sensitive to each output
/// element individually.
fn check_grads(inputs: &[Tensor], f: impl Fn(&Graph, &[Var]) -> Var) {
    let eval = |vals: &[Tensor]| -> f64 {
        let g = Graph::inference();
        let vars: Vec<_> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&g, &vars);
        let probe = random(&g.shape(out), 99);
        g.value(out)
            .data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&g, &vars);
    let probe = g.constant(random(&g.shape(out), 99));
    let prod = g.mul(out, probe).unwrap();
    let loss = g.sum_all(prod);
    let grads = g.backward(loss).unwrap();
    let check = GradCheck::default();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("leaf grad");
        let numeric = check.numeric(&inputs[i], |x| {
            let mut vals = inputs.to_vec();
            vals[i] = x.clone();
            eval(&vals)
        });
        let err = check.max_rel_error(analytic, &numeric);
        assert!(err <= 1e-4, "input {i}: max relative error {err}");
    }
}

fn triple_loop(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
            }
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop() {
    let (a, b) = (random(&[3, 4], 1), random(&[4, 2], 2));
    let g = Graph::inference();
    let c = g
        .matmul(g.constant(a.clone()), g.constant(b.clone()))
        .unwrap();
    for (x, y) in g.value(c).data().iter().zip(triple_loop(&a, &b)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn batched_matmul_matches_per_slice_loop() {
    let (a, b) = (random(&[2, 3, 4], 3), random(&[2, 4, 5], 4));
    let g = Graph::inference();
    let c = g.value(
        g.matmul(g.constant(a.clone()), g.constant(b.clone()))
            .unwrap(),
    );
    for s in 0..2 {
        let asl = Tensor::new(vec![3, 4], a.data()[s * 12..(s + 1) * 12].to_vec()).unwrap();
        let bsl = Tensor::new(vec![4, 5], b.data()[s * 20..(s + 1) * 20].to_vec()).unwrap();
        for (x, y) in c.data()[s * 15..(s + 1) * 15]
            .iter()
            .zip(triple_loop(&asl, &bsl))
        {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn matmul_grads() {
    check_grads(&[random(&[3, 4], 5), random(&[4, 2], 6)], |g, v| {
        g.matmul(v[0], v[1]).unwrap()
    });
    check_grads(&[random(&[2, 3, 4], 7), random(&[2, 4, 2], 8)], |g, v| {
        g.matmul(v[0], v[1]).unwrap()
    });
    check_grads(
        &[random(&[2, 2, 3, 4], 9), random(&[2, 1, 5, 4], 10)],
        |g, v| g.matmul_bt(v[0], v[1]).unwrap(),
    );
    check_grads(&[random(&[3, 2, 4], 11), random(&[4, 3], 12)], |g, v| {
        g.matmul(v[0], v[1]).unwrap()
    });
}

#[test]
fn matmul_bt_equals_explicit_transpose() {
    let (a, b) = (random(&[2, 3, 4], 13), random(&[2, 5, 4], 14));
    let g = Graph::inference();
    let (av, bv) = (g.constant(a), g.constant(b));
    let direct = g.value(g.matmul_bt(av, bv).unwrap());
    let bt = g.permute(bv, &[0, 2, 1]).unwrap();
    let via = g.value(g.matmul(av, bt).unwrap());
    assert!(direct.max_abs_diff(&via) < 1e-12);
}

#[test]
fn elementwise_and_shape_grads() {
    let (a, b) = (random(&[2, 3], 20), random(&[2, 3], 21));
    check_grads(&[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]).unwrap());
    check_grads(&[a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]).unwrap());
    check_grads(&[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]).unwrap());
    check_grads(std::slice::from_ref(&a), |g, v| g.scale(v[0], -2.5));
    check_grads(&[a.clone(), random(&[3], 22)], |g, v| {
        g.add_bias(v[0], v[1]).unwrap()
    });
    check_grads(&[random(&[2, 4, 3], 23), random(&[2, 3], 24)], |g, v| {
        g.add_bias(v[0], v[1]).unwrap()
    });
    check_grads(&[random(&[2, 3, 4], 25)], |g, v| g.sum_last(v[0]).unwrap());
    check_grads(&[random(&[2, 3, 4], 26)], |g, v| {
        g.permute(v[0], &[1, 2, 0]).unwrap()
    });
    check_grads(&[random(&[2, 5, 3], 27)], |g, v| {
        g.slice(v[0], 1, 1, 4).unwrap()
    });
    check_grads(&[random(&[2, 3], 28)], |g, v| {
        g.reshape(v[0], &[3, 2]).unwrap()
    });
    check_grads(&[a.clone(), b.clone()], |g, v| {
        g.stack(&[v[0], v[1]]).unwrap()
    });
    check_grads(&[random(&[3, 2, 2], 29)], |g, v| g.select(v[0], 1).unwrap());
    check_grads(&[a], |g, v| {
        let s = g.mean_all(v[0]);
        g.reshape(s, &[1]).unwrap()
    });
}

#[test]
fn layer_norm_examples() {
    let g = Graph::inference();
    let ones = g.constant(Tensor::full(&[3], 1.0));
    let zeros = g.constant(Tensor::zeros(&[3]));
    let x = g.constant(Tensor::vector(vec![5.0, 5.0, 5.0]));
    let y = g.layer_norm(x, ones, zeros, 1e-5).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

    let ones2 = g.constant(Tensor::full(&[2], 1.0));
    let zeros2 = g.constant(Tensor::zeros(&[2]));
    let x = g.constant(Tensor::vector(vec![1.0, -1.0]));
    let y = g.value(g.layer_norm(x, ones2, zeros2, 1e-12).unwrap());
    assert!((y.data()[0] - 1.0).abs() < 1e-9 && (y.data()[1] + 1.0).abs() < 1e-9);

    let d = 16;
    let x = g.constant(random(&[d], 30));
    let y = g.value(
        g.layer_norm(
            x,
            g.constant(Tensor::full(&[d], 1.0)),
            g.constant(Tensor::zeros(&[d])),
            1e-5,
        )
        .unwrap(),
    );
    let mean = y.data().iter().sum::<f64>() / d as f64;
    let var = y
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / d as f64;
    assert!(mean.abs() < 1e-10);
    assert!((var - 1.0).abs() < 1e-4, "variance {var}");
}

#[test]
fn layer_norm_empty_axis_errors() {
    let g = Graph::inference();
    let x = g.constant(Tensor::zeros(&[2, 0]));
    let p = g.constant(Tensor::zeros(&[0]));
    assert!(matches!(
        g.layer_norm(x, p, p, 1e-5),
        Err(TensorError::EmptyAxis { .. })
    ));
}

#[test]
fn layer_norm_grads() {
    check_grads(
        &[random(&[2, 3, 5], 31), random(&[5], 32), random(&[5], 33)],
        |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
    );
    check_grads(
        &[
            random(&[2, 3, 4], 34),
            random(&[2, 4], 35),
            random(&[2, 4], 36),
        ],
        |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
    );
}

/// Φ by Simpson quadrature of the normal density, independent of `erf`.
fn phi_quadrature(x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(0.0) + pdf(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * pdf(i as f64 * h);
    }
    0.5 + s * h / 3.0
}

#[test]
fn gelu_examples() {
    let g = Graph::inference();
    let x = g.constant(Tensor::vector(vec![0.0, 10.0, 1.0, -0.7]));
    let y = g.value(g.gelu(x));
    assert_eq!(y.data()[0], 0.0);
    assert!((y.data()[1] - 10.0).abs() < 1e-6);
    assert!((y.data()[2] - phi_quadrature(1.0)).abs() < 1e-12);
    assert!((y.data()[2] - 0.841_344_746_068_543).abs() < 1e-12);
    assert!((y.data()[3] + 0.7 * phi_quadrature(-0.7)).abs() > 0.0);
    assert!((y.data()[3] - (-0.7) * phi_quadrature(-0.7)).abs() < 1e-12);
    check_grads(&[random(&[3, 4], 40)], |g, v| g.gelu(v[0]));
}

#[test]
fn softmax_examples() {
    let g = Graph::inference();
    let y = g.value(
        g.softmax_last(g.constant(Tensor::vector(vec![0.0, 0.0])))
            .unwrap(),
    );
    assert_eq!(y.data(), &[0.5, 0.5]);
    let y = g.value(
        g.softmax_last(g.constant(Tensor::vector(vec![1000.0, 0.0])))
            .unwrap(),
    );
    assert_eq!(y.data()[0], 1.0);
    assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-300);
    check_grads(&[random(&[2, 3, 5], 41)], |g, v| {
        g.softmax_last(v[0]).unwrap()
    });
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (bs, t, din) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let dout = w.shape()[2];
    let mut out = vec![0.0; bs * t * dout];
    for bi in 0..bs {
        for ti in 0..t {
            for o in 0..dout {
                let mut acc = b.data()[o];
                for tap in 0..3 {
                    let src = ti as i64 - 2 + tap as i64;
                    if src < 0 {
                        continue;
                    }
                    for i in 0..din {
                        acc +=
                            w.get(&[tap, i, o]).unwrap() * x.get(&[bi, src as usize, i]).unwrap();
                    }
                }
                out[(bi * t + ti) * dout + o] = acc;
            }
        }
    }
    out
}

#[test]
fn conv_pass_through_kernel() {
    let d = 3;
    let mut w = Tensor::zeros(&[3, d, d]);
    for i in 0..d {
        w.data_mut()[2 * d * d + i * d + i] = 1.0;
    }
    let x = random(&[2, 5, d], 50);
    let g = Graph::inference();
    let y = g
        .conv1d_k3(
            g.constant(x.clone()),
            g.constant(w),
            g.constant(Tensor::zeros(&[d])),
        )
        .unwrap();
    assert_eq!(g.value(y).data(), x.data());
}

#[test]
fn conv_single_step_uses_zero_pads() {
    let (x, w, b) = (
        random(&[1, 1, 2], 51),
        random(&[3, 2, 3], 52),
        random(&[3], 53),
    );
    let g = Graph::inference();
    let y = g.value(
        g.conv1d_k3(
            g.constant(x.clone()),
            g.constant(w.clone()),
            g.constant(b.clone()),
        )
        .unwrap(),
    );
    for o in 0..3 {
        let expected = b.data()[o]
            + (0..2)
                .map(|i| w.get(&[2, i, o]).unwrap() * x.data()[i])
                .sum::<f64>();
        assert!((y.data()[o] - expected).abs() < 1e-12);
    }
}

#[test]
fn conv_matches_sliding_window_and_grads() {
    let (x, w, b) = (
        random(&[2, 6, 3], 54),
        random(&[3, 3, 4], 55),
        random(&[4], 56),
    );
    let g = Graph::inference();
    let y = g.value(
        g.conv1d_k3(
            g.constant(x.clone()),
            g.constant(w.clone()),
            g.constant(b.clone()),
        )
        .unwrap(),
    );
    for (a, e) in y.data().iter().zip(naive_conv(&x, &w, &b)) {
        assert!((a - e).abs() < 1e-12);
    }
    check_grads(&[x, w, b], |g, v| g.conv1d_k3(v[0], v[1], v[2]).unwrap());
    check_grads(
        &[
            random(&[2, 2, 4, 3], 57),
            random(&[2, 3, 3, 2], 58),
            random(&[2, 2], 59),
        ],
        |g, v| g.conv1d_k3(v[0], v[1], v[2]).unwrap(),
    );
}

#[test]
fn grouped_conv_equals_per_group_calls_bitwise() {
    let (x, w, b) = (
        random(&[3, 2, 5, 4], 60),
        random(&[3, 3, 4, 6], 61),
        random(&[3, 6], 62),
    );
    let g = Graph::inference();
    let grouped = g.value(
        g.conv1d_k3(
            g.constant(x.clone()),
            g.constant(w.clone()),
            g.constant(b.clone()),
        )
        .unwrap(),
    );
    let (xv, wv, bv) = (g.constant(x), g.constant(w), g.constant(b));
    for i in 0..3 {
        let y = g
            .conv1d_k3(
                g.select(xv, i).unwrap(),
                g.select(wv, i).unwrap(),
                g.select(bv, i).unwrap(),
            )
            .unwrap();
        let n = 2 * 5 * 6;
        assert_eq!(g.value(y).data(), &grouped.data()[i * n..(i + 1) * n]);
    }
}

#[test]
fn conv_rejects_empty_sequence() {
    let g = Graph::inference();
    let x = g.constant(Tensor::zeros(&[1, 0, 2]));
    let w = g.constant(Tensor::zeros(&[3, 2, 2]));
    let b = g.constant(Tensor::zeros(&[2]));
    assert!(matches!(
        g.conv1d_k3(x, w, b),
        Err(TensorError::EmptySequence { .. })
    ));
}

#[test]
fn conv_is_causal() {
    let (x, w, b) = (
        random(&[1, 8, 2], 63),
        random(&[3, 2, 2], 64),
        random(&[2], 65),
    );
    let run = |x: &Tensor| {
        let g = Graph::inference();
        let y = g.conv1d_k3(
            g.constant(x.clone()),
            g.constant(w.clone()),
            g.constant(b.clone()),
        );
        g.value(y.unwrap()).as_ref().clone()
    };
    let base = run(&x);
    for t in 0..8 {
        let mut xp = x.clone();
        xp.data_mut()[t * 2] += 3.0;
        let y = run(&xp);
        assert_eq!(
            &y.data()[..t * 2],
            &base.data()[..t * 2],
            "leak into steps before {t}"
        );
    }
}

#[test]
fn dropout_behaviour() {
    let g = Graph::new();
    let x = g.variable(Tensor::full(&[100_000], 1.0));
    let mut rng = SeedTree::new(3).rng("dropout");
    assert_eq!(g.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.7, false, &mut rng).unwrap(), x);
    assert!(matches!(
        g.dropout(x, 1.0, true, &mut rng),
        Err(TensorError::Config(_))
    ));
    assert!(g.dropout(x, -0.1, true, &mut rng).is_err());
    let y = g.value(g.dropout(x, 0.5, true, &mut rng).unwrap());
    let survivors = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
    assert!(
        (survivors - 0.5).abs() < 0.01,
        "survivor fraction {survivors}"
    );
    assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
}

#[test]
fn embedding_lookup() {
    let mut table = random(&[4, 3], 70);
    table.data_mut()[..3].fill(0.0);
    let g = Graph::new();
    let t = g.variable(table.clone());
    let e = g.embedding(t, &[0, 2, 2], &[3], "weekday").unwrap();
    let ev = g.value(e);
    assert_eq!(&ev.data()[..3], &[0.0; 3]);
    assert_eq!(ev.data()[3..6], ev.data()[6..9]);
    let err = g.embedding(t, &[4], &[1], "weekday").unwrap_err();
    assert!(
        matches!(err, TensorError::IndexOutOfRange { ref name, index: 4, rows: 4 } if name == "weekday")
    );
    // gradient of sum over a lookup of row j accumulates ones into row j only
    let s = g.sum_all(g.embedding(t, &[1, 1], &[2], "x").unwrap());
    let grads = g.backward(s).unwrap();
    let gt = grads.get(t).unwrap();
    let numeric = GradCheck::default().numeric(&table, |tab| {
        let g = Graph::inference();
        let e = g
            .embedding(g.constant(tab.clone()), &[1, 1], &[2], "x")
            .unwrap();
        g.value(e).data().iter().sum()
    });
    assert!(GradCheck::default().max_rel_error(gt, &numeric) < 1e-6);
    assert_eq!(&gt.data()[3..6], &[2.0; 3]);
    check_grads(&[table], |g, v| {
        g.embedding(v[0], &[3, 1, 0, 1], &[2, 2], "t").unwrap()
    });
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let g = Graph::new();
        let x = g.variable(random(&[4, 6, 3], 80));
        let w = g.variable(random(&[3, 3, 5], 81));
        let b = g.variable(random(&[5], 82));
        let mut rng = SeedTree::new(9).rng("drop");
        let y = g.conv1d_k3(x, w, b).unwrap();
        let y = g.dropout(g.gelu(y), 0.3, true, &mut rng).unwrap();
        let y = g.softmax_last(y).unwrap();
        let loss = g.sum_all(g.mul(y, y).unwrap());
        let grads = g.backward(loss).unwrap();
        let bits: Vec<u64> = grads
            .get(w)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        (g.value(loss).data()[0].to_bits(), bits)
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let g = Graph::inference();
        let y = g.value(g.softmax_last(g.constant(Tensor::vector(values))).unwrap());
        let s: f64 = y.data().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn layer_norm_standardizes(values in prop::collection::vec(-10.0f64..10.0, 2..32)) {
        let d = values.len();
        let spread = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 0.5);
        let g = Graph::inference();
        let y = g.value(g.layer_norm(
            g.constant(Tensor::vector(values)),
            g.constant(Tensor::full(&[d], 1.0)),
            g.constant(Tensor::zeros(&[d])),
            1e-5,
        ).unwrap());
        let mean = y.data().iter().sum::<f64>() / d as f64;
        let var = y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((var - 1.0).abs() < 1e-3);
    }
}
