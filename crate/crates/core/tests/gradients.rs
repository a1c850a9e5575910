use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use torsonet::ops::activation::{relu, swish};
use torsonet::ops::{dense_backward, dense_forward, DenseParams, PoolKind};
use torsonet::train::gradcheck::{
    perturbed_conv_backward, rel_error, ActivationCheck, ConcatCheck, ConvCheck, DenseCheck, DropoutCheck,
    ModelCheck, PoolCheck, SoftmaxCrossEntropyCheck, MODEL_TOLERANCE, OP_TOLERANCE,
};
use torsonet::train::{GradCheck, GradCheckRegistry};
use torsonet::Tensor;

fn op_checks() -> Vec<Box<dyn GradCheck>> {
    vec![
        Box::new(ConvCheck::new()),
        Box::new(PoolCheck::new(PoolKind::Max)),
        Box::new(PoolCheck::new(PoolKind::Average)),
        Box::new(DenseCheck),
        Box::new(ActivationCheck::new(relu())),
        Box::new(ActivationCheck::new(swish())),
        Box::new(SoftmaxCrossEntropyCheck),
        Box::new(ConcatCheck),
        Box::new(DropoutCheck),
    ]
}

#[test]
fn per_op_checks_pass_over_twenty_trials() {
    for check in op_checks() {
        assert_eq!(check.tolerance(), OP_TOLERANCE);
        for seed in 0..20 {
            let r = check.run(seed);
            assert!(r.passed, "seed {seed}: {r}");
        }
    }
}

#[test]
fn reduced_model_checks_pass() {
    for act in [relu(), swish()] {
        let check = ModelCheck::new(act);
        assert_eq!(check.tolerance(), MODEL_TOLERANCE);
        for seed in [0, 1] {
            let r = check.run(seed);
            assert!(r.passed, "seed {seed}: {r}");
        }
    }
}

#[test]
fn builtin_registry_covers_every_op_and_both_models() {
    let reg = GradCheckRegistry::builtin();
    let names = reg.names();
    assert_eq!(names.len(), 11);
    for check in op_checks() {
        assert!(names.contains(&check.name()), "{} missing from {names:?}", check.name());
    }
    for act in [relu(), swish()] {
        let name = ModelCheck::new(act).name().to_string();
        assert!(names.contains(&name.as_str()));
    }
}

#[test]
fn faulty_conv_backward_is_caught() {
    let good = ConvCheck::new();
    let bad = ConvCheck::with_backward(perturbed_conv_backward);
    assert_eq!(good.name(), bad.name());
    let r = bad.run(0);
    assert!(!r.passed, "{r}");
    assert!(r.max_rel_error > 1e-3);

    let mut reg = GradCheckRegistry::empty();
    reg.register(Box::new(good));
    reg.register(Box::new(bad));
    assert_eq!(reg.names().len(), 1);
    assert!(!reg.run(0).passed());
}

#[test]
fn relative_error_has_a_floor() {
    assert_eq!(rel_error(0.0, 0.0), 0.0);
    assert_eq!(rel_error(1e-9, 0.0), 1e-3);
    assert_eq!(rel_error(2.0, 1.0), 0.5);
    assert_eq!(rel_error(-1.0, 1.0), 2.0);
}

#[test]
fn linear_layer_differences_are_exact_to_rounding() {
    // A dense layer is linear in each argument, so a central difference has
    // no truncation error; what remains is rounding of order eps / h.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (fin, fout) = (6, 4);
    let mut p = DenseParams::<f64>::zeros(fin, fout);
    p.weights = (0..fin * fout).map(|_| rng.random_range(-1.0..1.0)).collect();
    p.bias = (0..fout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..fin).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..fout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |x: &[f64]| -> f64 {
        let y = dense_forward(&Tensor::from_vec(&[fin], x.to_vec()).unwrap(), &p).unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let (gx, _, _) = dense_backward(
        &Tensor::from_vec(&[fin], x.clone()).unwrap(),
        &p,
        &Tensor::from_vec(&[fout], r.clone()).unwrap(),
    )
    .unwrap();
    let h = 1e-5;
    for i in 0..fin {
        let mut up = x.clone();
        up[i] += h;
        let mut down = x.clone();
        down[i] -= h;
        let numeric = (f(&up) - f(&down)) / (2.0 * h);
        let err = rel_error(gx.data()[i], numeric);
        assert!(err < 1e-8, "coordinate {i}: {err:e}");
    }
}
