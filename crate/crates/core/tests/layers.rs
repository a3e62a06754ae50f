use std::sync::Arc;

use hypernet::algebra::{builtin, Algebra, BUILTIN_NAMES};
use hypernet::layers::{
    glorot_bound, project, split_activation, Activation, HyperConv, HyperDense, InitScheme, Layer,
    Model,
};
use hypernet::tensor::{conv_kd, Padding, Tensor};
use hypernet::verify::{
    classical_dense, gradient_check, naive_conv, naive_dense, random_tensor, random_trial,
    rel_error, LayerKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn alg(name: &str) -> Arc<Algebra> {
    Arc::new(builtin(name).unwrap())
}

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn real_dense_is_a_dot_product() {
    let mut d = HyperDense::new(alg("real"), 2, 1, false, None).unwrap();
    d.set_kernel(t(&[1, 2, 1], &[3.0, 4.0])).unwrap();
    let y = d.forward(&t(&[1, 2], &[1.0, 2.0])).unwrap();
    assert_eq!(y.data(), &[11.0]);
}

#[test]
fn complex_dense_multiplies_elements() {
    let mut d = HyperDense::new(alg("complex"), 1, 1, false, None).unwrap();
    d.set_kernel(t(&[2, 1, 1], &[3.0, 4.0])).unwrap();
    let y = d.forward(&t(&[1, 2], &[1.0, 2.0])).unwrap();
    assert_eq!(y.data(), &[-5.0, 10.0]);
}

#[test]
fn complex_pointwise_conv_multiplies_elements() {
    let mut c = HyperConv::new(
        alg("complex"),
        1,
        1,
        vec![1],
        vec![1],
        Padding::Valid,
        false,
        None,
    )
    .unwrap();
    c.set_kernel(t(&[2, 1, 1, 1], &[3.0, 4.0])).unwrap();
    let y = c.forward(&t(&[1, 1, 2], &[1.0, 2.0])).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2]);
    assert_eq!(y.data(), &[-5.0, 10.0]);
}

fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

#[test]
fn quaternion_dense_matches_hamilton_matrix_product() {
    let q = alg("quaternion");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (batch, n_in, units) = (3, 2, 3);
    let mut d = HyperDense::new(q, n_in, units, false, None).unwrap();
    let k = random_tensor(&[4, n_in, units], &mut rng);
    d.set_kernel(k.clone()).unwrap();
    let x = random_tensor(&[batch, 4 * n_in], &mut rng);
    let y = d.forward(&x).unwrap();
    for b in 0..batch {
        for u in 0..units {
            let mut acc = [0.0; 4];
            for i in 0..n_in {
                let xi = [0, 1, 2, 3].map(|c| x.get(&[b, c * n_in + i]));
                let ki = [0, 1, 2, 3].map(|c| k.get(&[c, i, u]));
                let p = hamilton(xi, ki);
                for (a, v) in acc.iter_mut().zip(p) {
                    *a += v;
                }
            }
            for (c, a) in acc.iter().enumerate() {
                assert!((y.get(&[b, c * units + u]) - a).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn quaternion_conv2d_matches_naive_oracle() {
    let q = alg("quaternion");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut c = HyperConv::new(
        q.clone(),
        2,
        2,
        vec![3, 3],
        vec![1, 1],
        Padding::Valid,
        false,
        None,
    )
    .unwrap();
    c.set_kernel(random_tensor(&[4, 3, 3, 2, 2], &mut rng))
        .unwrap();
    let x = random_tensor(&[1, 5, 5, 8], &mut rng);
    let y = c.forward(&x).unwrap();
    assert_eq!(y.shape(), &[1, 3, 3, 8]);
    let want = naive_conv(&q, c.kernel(), None, None, &[1, 1], Padding::Valid, &x).unwrap();
    assert!(rel_error(&y, &want).unwrap() <= 1e-12);
}

#[test]
fn oracle_equivalence_on_every_builtin() {
    for name in BUILTIN_NAMES {
        let a = alg(name);
        for kind in LayerKind::ALL {
            let s = hypernet::verify::oracle_trials(&a, kind, 20, 3).unwrap();
            assert!(
                s.max_rel_error <= 1e-10,
                "{name} {kind}: {}",
                s.max_rel_error
            );
            assert!(s.all_finite);
        }
    }
}

#[test]
fn naive_dense_accepts_bias_and_activation() {
    let a = alg("complex");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut d = HyperDense::new(a.clone(), 2, 2, true, Some(Activation::Tanh)).unwrap();
    d.set_kernel(random_tensor(&[2, 2, 2], &mut rng)).unwrap();
    d.set_bias(Some(random_tensor(&[4], &mut rng))).unwrap();
    let x = random_tensor(&[3, 4], &mut rng);
    let want = naive_dense(&a, d.kernel(), d.bias(), d.activation(), &x).unwrap();
    assert!(rel_error(&d.forward(&x).unwrap(), &want).unwrap() <= 1e-12);
}

#[test]
fn real_dense_reduces_to_affine_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (n_in, units, batch) = (
            rng.random_range(1..5),
            rng.random_range(1..5),
            rng.random_range(1..5),
        );
        let mut d = HyperDense::new(alg("real"), n_in, units, true, None).unwrap();
        let k = random_tensor(&[1, n_in, units], &mut rng);
        let b = random_tensor(&[units], &mut rng);
        d.set_kernel(k.clone()).unwrap();
        d.set_bias(Some(b.clone())).unwrap();
        let x = random_tensor(&[batch, n_in], &mut rng);
        let want = classical_dense(&x, &k.reshape(&[n_in, units]).unwrap(), Some(&b));
        assert!(rel_error(&d.forward(&x).unwrap(), &want).unwrap() <= 1e-12);
    }
}

#[test]
fn real_conv_reduces_to_conv_kd() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [LayerKind::Conv1d, LayerKind::Conv2d, LayerKind::Conv3d] {
        for _ in 0..10 {
            let (layer, x) = random_trial(&alg("real"), kind, None, &mut rng).unwrap();
            let Layer::Conv(c) = &layer else {
                unreachable!()
            };
            let k0 = c.kernel().index_axis(0, 0).unwrap();
            let mut want = conv_kd(&x, &k0, c.strides(), c.padding()).unwrap();
            if let Some(b) = c.bias() {
                want = want
                    .add(&b.clone().reshape(&[c.filters()]).unwrap())
                    .unwrap();
            }
            assert!(rel_error(&layer.forward(&x).unwrap(), &want).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn real_dense_gradients_match_classical_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut d = HyperDense::new(alg("real"), 3, 2, false, None).unwrap();
    let k = random_tensor(&[1, 3, 2], &mut rng);
    d.set_kernel(k.clone()).unwrap();
    let x = random_tensor(&[4, 3], &mut rng);
    let g = random_tensor(&[4, 2], &mut rng);
    let grads = d.backward(&x, &g).unwrap();
    for i in 0..3 {
        for u in 0..2 {
            let want: f64 = (0..4).map(|b| x.get(&[b, i]) * g.get(&[b, u])).sum();
            assert!((grads.kernel.get(&[0, i, u]) - want).abs() < 1e-12);
        }
    }
    for b in 0..4 {
        for i in 0..3 {
            let want: f64 = (0..2).map(|u| g.get(&[b, u]) * k.get(&[0, i, u])).sum();
            assert!((grads.input.get(&[b, i]) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for kind in LayerKind::ALL {
        let (layer, x) = random_trial(
            &alg("quaternion"),
            kind,
            Some(Activation::Sigmoid),
            &mut rng,
        )
        .unwrap();
        let out = layer.forward(&x).unwrap();
        let g = layer.backward(&x, &Tensor::zeros(out.shape())).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.kernel.max_abs(), 0.0);
        assert!(g.bias.is_none_or(|b| b.max_abs() == 0.0));
    }
}

#[test]
fn finite_difference_gradients_on_every_builtin() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for name in BUILTIN_NAMES {
        for kind in LayerKind::ALL {
            for act in [None, Some(Activation::Sigmoid), Some(Activation::Tanh)] {
                let (layer, x) = random_trial(&alg(name), kind, act, &mut rng).unwrap();
                let g = gradient_check(&layer, &x, &mut rng).unwrap();
                assert!(
                    g.max_rel_error <= 1e-4,
                    "{name} {kind} {act:?}: {} at {}",
                    g.max_rel_error,
                    g.worst_param
                );
            }
        }
    }
}

#[test]
fn pointwise_swap_is_symmetric_only_for_commutative_algebras() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for (name, commutative) in [("complex", true), ("quaternion", false)] {
        let a = alg(name);
        assert_eq!(a.check_commutative(1e-10).holds, commutative);
        let al = a.dim();
        let xv = random_tensor(&[al], &mut rng);
        let kv = random_tensor(&[al], &mut rng);
        let run = |x: &Tensor, k: &Tensor| {
            let mut d = HyperDense::new(a.clone(), 1, 1, false, None).unwrap();
            d.set_kernel(k.clone().reshape(&[al, 1, 1]).unwrap())
                .unwrap();
            d.forward(&x.clone().reshape(&[1, al]).unwrap()).unwrap()
        };
        let diff = rel_error(&run(&xv, &kv), &run(&kv, &xv)).unwrap();
        assert_eq!(diff <= 1e-12, commutative, "{name}: {diff}");
    }
}

#[test]
fn split_activation_is_componentwise() {
    let z = split_activation(&Tensor::zeros(&[2, 4]), Activation::Sigmoid, 2).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.5));
    let y = split_activation(&t(&[1, 2], &[0.0, 1.0]), Activation::Sigmoid, 2).unwrap();
    assert_eq!(
        y.data(),
        &[
            Activation::Sigmoid.apply(0.0),
            Activation::Sigmoid.apply(1.0)
        ]
    );
    assert!(split_activation(&Tensor::zeros(&[1, 3]), Activation::Tanh, 2).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(&[3, 4 * 2], &mut rng);
    let s = split_activation(&x, Activation::Tanh, 4).unwrap();
    for k in 0..4 {
        let lhs = project(&s, 4, k).unwrap();
        let rhs = project(&x, 4, k).unwrap().map(|v| v.tanh());
        assert_eq!(lhs, rhs);
    }
}

#[test]
fn zeros_init_outputs_the_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut d = HyperDense::new(alg("complex"), 2, 3, true, None).unwrap();
    d.initialize(InitScheme::Zeros, &mut rng).unwrap();
    let y = d.forward(&random_tensor(&[2, 4], &mut rng)).unwrap();
    assert_eq!(y.max_abs(), 0.0);
}

#[test]
fn glorot_dense_bound_and_determinism() {
    let bound = glorot_bound(2 * 3, 2 * 4);
    assert_eq!(bound, (6.0f64 / 14.0).sqrt());
    let make = |seed| {
        let mut d = HyperDense::new(alg("complex"), 3, 4, true, None).unwrap();
        d.initialize(
            InitScheme::GlorotUniform,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        d
    };
    let a = make(42);
    assert!(a.kernel().data().iter().all(|v| v.abs() <= bound));
    assert!(a.kernel().max_abs() > 0.5 * bound);
    assert_eq!(a.kernel().data(), make(42).kernel().data());
    assert_ne!(a.kernel().data(), make(43).kernel().data());
}

#[test]
fn conv_glorot_uses_receptive_field_fans() {
    let mut c = HyperConv::new(
        alg("quaternion"),
        2,
        3,
        vec![3, 3],
        vec![1, 1],
        Padding::Same,
        true,
        None,
    )
    .unwrap();
    c.initialize(InitScheme::GlorotUniform, &mut ChaCha8Rng::seed_from_u64(1))
        .unwrap();
    let bound = glorot_bound(9 * 8, 9 * 12);
    assert!(c.kernel().data().iter().all(|v| v.abs() <= bound));
    assert_eq!(c.bias().unwrap().max_abs(), 0.0);
}

#[test]
fn shape_errors_are_reported() {
    let d = HyperDense::new(alg("complex"), 2, 1, false, None).unwrap();
    assert!(d.forward(&Tensor::zeros(&[1, 3])).is_err());
    let c = HyperConv::new(
        alg("complex"),
        1,
        1,
        vec![3],
        vec![1],
        Padding::Valid,
        false,
        None,
    )
    .unwrap();
    assert!(c.forward(&Tensor::zeros(&[1, 2, 2])).is_err());
    assert!(c.forward(&Tensor::zeros(&[1, 4, 3])).is_err());
    assert!(HyperConv::new(
        alg("real"),
        1,
        1,
        vec![1; 4],
        vec![1; 4],
        Padding::Valid,
        false,
        None
    )
    .is_err());
    assert!(HyperDense::new(alg("real"), 0, 1, false, None).is_err());
}

#[test]
fn model_chains_and_rejects_mismatched_widths() {
    let a = alg("complex");
    let l1 = Layer::Dense(HyperDense::new(a.clone(), 1, 3, true, None).unwrap());
    let l2 = Layer::Dense(HyperDense::new(a.clone(), 4, 1, true, None).unwrap());
    let err = Model::new(vec![2], vec![l1.clone(), l2])
        .unwrap_err()
        .to_string();
    assert!(err.contains('6') && err.contains('8'), "{err}");

    let conv = Layer::Conv(
        HyperConv::new(
            a.clone(),
            1,
            2,
            vec![2],
            vec![1],
            Padding::Valid,
            false,
            None,
        )
        .unwrap(),
    );
    let head = Layer::Dense(HyperDense::new(a.clone(), 6, 1, false, None).unwrap());
    let m = Model::new(vec![4, 2], vec![conv, head]).unwrap();
    assert_eq!(m.output_width(), 2);
}

#[test]
fn model_backward_matches_finite_differences() {
    let a = alg("quaternion");
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let conv = Layer::Conv(
        HyperConv::new(
            a.clone(),
            1,
            2,
            vec![2, 2],
            vec![1, 1],
            Padding::Same,
            true,
            Some(Activation::Tanh),
        )
        .unwrap(),
    );
    let head = Layer::Dense(
        HyperDense::new(a.clone(), 3 * 3 * 2, 1, true, Some(Activation::Sigmoid)).unwrap(),
    );
    let mut m = Model::new(vec![3, 3, 4], vec![conv, head]).unwrap();
    m.initialize(
        &[
            InitScheme::Normal { std: 0.5 },
            InitScheme::Normal { std: 0.5 },
        ],
        &mut rng,
    )
    .unwrap();
    for p in m.params_mut() {
        for v in p.data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let x = random_tensor(&[2, 3, 3, 4], &mut rng);
    let r = random_tensor(&[2, 4], &mut rng);
    let loss = |m: &Model| -> f64 {
        m.forward(&x)
            .unwrap()
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| a * b)
            .sum()
    };
    let grads = m.backward(&x, &r).unwrap();
    let analytic: Vec<Tensor> = grads.params().into_iter().cloned().collect();
    let h = 1e-5;
    for (pi, ga) in analytic.iter().enumerate() {
        for i in 0..ga.len() {
            let mut probe = m.clone();
            let orig = probe.params()[pi].data()[i];
            probe.params_mut()[pi].data_mut()[i] = orig + h;
            let up = loss(&probe);
            probe.params_mut()[pi].data_mut()[i] = orig - h;
            let down = loss(&probe);
            let num = (up - down) / (2.0 * h);
            let a = ga.data()[i];
            let e = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            assert!(e <= 1e-4, "param {pi} entry {i}: {a} vs {num}");
        }
    }
    assert_eq!(grads.input.shape(), x.shape());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layers_are_additive_without_bias_or_activation(
        seed in any::<u64>(),
        kind_ix in 0usize..4,
        alg_ix in 0usize..5,
    ) {
        let a = alg(BUILTIN_NAMES[alg_ix]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut layer, x1) = random_trial(&a, LayerKind::ALL[kind_ix], None, &mut rng).unwrap();
        if let Some(b) = layer.params_mut().get_mut(1) {
            b.data_mut().fill(0.0);
        }
        let x2 = random_tensor(x1.shape(), &mut rng);
        let lhs = layer.forward(&x1.add(&x2).unwrap()).unwrap();
        let rhs = layer.forward(&x1).unwrap().add(&layer.forward(&x2).unwrap()).unwrap();
        prop_assert!(rel_error(&lhs, &rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn conv_output_dims_follow_padding_formulas(
        n in 1usize..9,
        l in 1usize..4,
        s in 1usize..4,
        same in any::<bool>(),
    ) {
        prop_assume!(same || l <= n);
        let padding = if same { Padding::Same } else { Padding::Valid };
        let c = HyperConv::new(alg("complex"), 1, 1, vec![l], vec![s], padding, false, None).unwrap();
        let out = c.output_shape(&[n, 2]).unwrap();
        let m = if same { n.div_ceil(s) } else { (n - l) / s + 1 };
        prop_assert_eq!(out, vec![m, 2]);
    }
}
