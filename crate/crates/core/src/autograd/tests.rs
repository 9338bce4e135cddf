use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn matmul_fixtures() {
    let mut g = Graph::new();
    let i2 = g.constant_owned(Tensor::identity(2));
    let m = g.constant_owned(Tensor::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]));
    let out = g.matmul(i2, m).unwrap();
    assert_eq!(g.value(out).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = g.constant_owned(Tensor::from_rows(&[&[1.0, 2.0]]));
    let b = g.constant_owned(Tensor::from_rows(&[&[3.0], &[4.0]]));
    let out = g.matmul(a, b).unwrap();
    assert_eq!(g.value(out).data(), &[11.0]);

    let z = g.constant_owned(Tensor::zeros(2, 3));
    let out = g.matmul(m, z).unwrap();
    assert!(g.value(out).data().iter().all(|v| *v == 0.0));
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant_owned(Tensor::zeros(2, 3));
    let b = g.constant_owned(Tensor::zeros(2, 3));
    let err = g.matmul(a, b).unwrap_err();
    assert_eq!(
        err,
        AutogradError::Shape {
            op: "matmul",
            left: (2, 3),
            right: (2, 3)
        }
    );
    assert!(err.to_string().contains("(2, 3) vs (2, 3)"));
}

#[test]
fn softmax_fixtures() {
    let mut g = Graph::new();
    let a = g.constant_owned(Tensor::from_rows(&[
        &[1.0, 1.0, 1.0],
        &[7.5, 7.5, 7.5],
        &[-300.0, -300.0, -300.0],
    ]));
    let s = g.softmax_rows(a).unwrap();
    for r in 0..3 {
        assert_close(g.value(s).row(r), &[1.0 / 3.0; 3], 1e-15);
    }
    let b = g.constant_owned(Tensor::from_rows(&[&[0.0, 2f64.ln()]]));
    let s = g.softmax_rows(b).unwrap();
    assert_close(g.value(s).data(), &[1.0 / 3.0, 2.0 / 3.0], 1e-15);
}

#[test]
fn softmax_survives_large_logits() {
    let mut g = Graph::new();
    let a = g.constant_owned(Tensor::from_rows(&[&[1000.0, 0.0, -1000.0]]));
    let s = g.softmax_rows(a).unwrap();
    assert_close(g.value(s).data(), &[1.0, 0.0, 0.0], 1e-300);
}

#[test]
fn elementwise_fixtures() {
    let mut g = Graph::new();
    let zero = g.constant_owned(Tensor::row_vector(&[0.0]));
    let s = g.sigmoid(zero).unwrap();
    assert_eq!(g.value(s).data(), &[0.5]);

    let x = g.constant_owned(Tensor::row_vector(&[-1.0, 2.0]));
    let r = g.relu(x).unwrap();
    assert_eq!(g.value(r).data(), &[0.0, 2.0]);

    let a = g.constant_owned(Tensor::row_vector(&[2.0, 3.0]));
    let b = g.constant_owned(Tensor::row_vector(&[4.0, 5.0]));
    let h = g.hadamard(a, b).unwrap();
    assert_eq!(g.value(h).data(), &[8.0, 15.0]);

    let big = g.constant_owned(Tensor::row_vector(&[-40.0, 40.0]));
    let s = g.sigmoid(big).unwrap();
    assert!(g.value(s).data().iter().all(|v| *v > 0.0 && *v < 1.0));

    let c = g.constant_owned(Tensor::row_vector(&[1.0, 2.0, 3.0]));
    assert!(matches!(g.add(a, c), Err(AutogradError::Shape { op: "add", .. })));
}

#[test]
fn concat_fixtures() {
    let mut g = Graph::new();
    let a = g.constant_owned(Tensor::row_vector(&[1.0, 2.0]));
    let b = g.constant_owned(Tensor::row_vector(&[3.0]));
    let one = g.concat_cols(&[a]).unwrap();
    assert_eq!(g.value(one).data(), &[1.0, 2.0]);
    let ab = g.concat_cols(&[a, b]).unwrap();
    assert_eq!(g.value(ab).data(), &[1.0, 2.0, 3.0]);

    let parts: Vec<Var> = (0..3)
        .map(|_| g.constant_owned(Tensor::zeros(1, 16)))
        .collect();
    let wide = g.concat_cols(&parts).unwrap();
    assert_eq!(g.shape(wide), (1, 48));

    assert!(matches!(g.concat_cols(&[]), Err(AutogradError::Argument(_))));
}

#[test]
fn lookup_fixtures() {
    let table = Tensor::identity(3);
    let mut g = Graph::new();
    let t = g.param(&table);
    let rows = g.lookup(t, &[0, 2]).unwrap();
    assert_eq!(g.value(rows).data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

    let twice = g.lookup(t, &[1, 1]).unwrap();
    assert_eq!(g.value(twice).row(0), g.value(twice).row(1));

    assert_eq!(g.lookup(t, &[3]).unwrap_err(), AutogradError::Index { id: 3, len: 3 });
    assert!(g.lookup(t, &[3]).unwrap_err().to_string().contains("index 3"));
}

#[test]
fn lookup_gradient_scatter_adds() {
    let table = Tensor::from_rows(&[&[0.3, -0.1], &[0.5, 0.2]]);
    let mut g = Graph::new();
    let t = g.param(&table);
    let rows = g.lookup(t, &[0, 0]).unwrap();
    let loss = g.sum(rows).unwrap();
    g.backward(loss).unwrap();
    let grad = g.grad_dense(t);
    assert_eq!(grad.row(0), &[2.0, 2.0]);
    assert_eq!(grad.row(1), &[0.0, 0.0]);
    assert!(matches!(g.grad(t), Some(GradBuf::Rows { .. })));
}

#[test]
fn reduce_fixtures() {
    let mut g = Graph::new();
    let a = g.constant_owned(Tensor::from_rows(&[&[2.0, 4.0]]));
    let m = g.mean_rows(a).unwrap();
    assert_eq!(g.value(m).data(), &[2.0, 4.0]);

    let eye = g.constant_owned(Tensor::identity(2));
    let half = g.constant_owned(Tensor::row_vector(&[0.5, 0.5]));
    let w = g.reduce(eye, Reduce::WeightedRowSum(half)).unwrap();
    assert_eq!(g.value(w).data(), &[0.5, 0.5]);

    let rows = g.constant_owned(Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]));
    let q = g.constant_owned(Tensor::row_vector(&[0.25, 0.75]));
    let w = g.reduce(rows, Reduce::WeightedRowSum(q)).unwrap();
    assert_eq!(g.value(w).data(), &[0.5, 3.0]);

    let bad = g.constant_owned(Tensor::row_vector(&[1.0]));
    assert!(matches!(
        g.reduce(rows, Reduce::WeightedRowSum(bad)),
        Err(AutogradError::Shape { .. })
    ));
    let unnormalised = g.constant_owned(Tensor::row_vector(&[0.5, 0.6]));
    assert!(matches!(
        g.reduce(rows, Reduce::WeightedRowSum(unnormalised)),
        Err(AutogradError::Argument(_))
    ));
}

#[test]
fn backward_fixtures() {
    let x = Tensor::row_vector(&[0.1, -3.0, 2.0]);
    let mut g = Graph::new();
    let v = g.param(&x);
    let loss = g.sum(v).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad_dense(v).data(), &[1.0, 1.0, 1.0]);

    let x = Tensor::row_vector(&[1.0, 2.0]);
    let mut g = Graph::new();
    let v = g.param(&x);
    let sq = g.hadamard(v, v).unwrap();
    let loss = g.sum(sq).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad_dense(v).data(), &[2.0, 4.0]);
    g.backward(loss).unwrap();
    assert_eq!(g.grad_dense(v).data(), &[4.0, 8.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut g = Graph::new();
    let v = g.param_owned(Tensor::zeros(1, 2));
    assert!(matches!(g.backward(v), Err(AutogradError::Argument(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant_owned(Tensor::row_vector(&[1.0, 2.0]));
    let p = g.param_owned(Tensor::row_vector(&[3.0, 4.0]));
    let h = g.hadamard(c, p).unwrap();
    let loss = g.sum(h).unwrap();
    g.backward(loss).unwrap();
    assert!(g.grad(c).is_none());
    assert_eq!(g.grad_dense(p).data(), &[1.0, 2.0]);
}

#[test]
fn reset_empties_graph() {
    let mut g = Graph::new();
    let a = g.param_owned(Tensor::zeros(1, 1));
    let _ = g.scale(a, 2.0).unwrap();
    assert_eq!(g.len(), 2);
    g.reset();
    assert!(g.is_empty());
}

#[test]
fn grad_check_linear_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(3, 4, &mut rng);
    let err = grad_check(|g, v| g.sum(v), &x, 1e-5).unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn grad_check_sigmoid_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(2, 3, &mut rng);
    let err = grad_check(
        |g, v| {
            let s = g.sigmoid(v)?;
            g.sum(s)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn grad_check_rejects_bad_eps() {
    let x = Tensor::zeros(1, 1);
    assert!(grad_check(|g, v| g.sum(v), &x, 0.0).is_err());
}

#[test]
fn grad_check_every_op() {
    let checks = op_suite(11, 1e-5).unwrap();
    assert!(checks.len() >= 15);
    for (name, err) in checks {
        assert!(err < 1e-6, "{name}: {err}");
    }
}

#[test]
fn bce_with_logits_stable_at_extremes() {
    for z in [-50.0, -10.0, 0.0, 10.0, 50.0] {
        for y in [0.0, 1.0] {
            let mut g = Graph::new();
            let v = g.param_owned(Tensor::row_vector(&[z]));
            let l = g.bce_with_logits(v, y).unwrap();
            assert!(g.value(l).scalar().is_finite());
            g.backward(l).unwrap();
            assert!(g.grad_dense(v).is_finite());
        }
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        row in prop::collection::vec(-30.0f64..30.0, 1..20),
        shift in -100.0f64..100.0,
    ) {
        let mut g = Graph::new();
        let a = g.constant_owned(Tensor::row_vector(&row));
        let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
        let b = g.constant_owned(Tensor::row_vector(&shifted));
        let sa = g.softmax_rows(a).unwrap();
        let sb = g.softmax_rows(b).unwrap();
        let total: f64 = g.value(sa).data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for (x, y) in g.value(sa).data().iter().zip(g.value(sb).data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_is_associative(seed in 0u64..10_000, m in 1usize..5, k in 1usize..5, n in 1usize..5, p in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        let c = random(n, p, &mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn second_backward_doubles_grads(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(2, 3, &mut rng);
        let b = random(3, 2, &mut rng);
        let mut g = Graph::new();
        let va = g.param(&a);
        let vb = g.param(&b);
        let m = g.matmul(va, vb).unwrap();
        let s = g.sigmoid(m).unwrap();
        let loss = g.sum(s).unwrap();
        g.backward(loss).unwrap();
        let once = (g.grad_dense(va), g.grad_dense(vb));
        g.backward(loss).unwrap();
        for (x, y) in g.grad_dense(va).data().iter().zip(once.0.data()) {
            prop_assert_eq!(*x, 2.0 * y);
        }
        for (x, y) in g.grad_dense(vb).data().iter().zip(once.1.data()) {
            prop_assert_eq!(*x, 2.0 * y);
        }
    }
}
