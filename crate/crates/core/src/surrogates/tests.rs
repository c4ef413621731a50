use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::{gradcheck, GradcheckOptions, Mode};

fn tiny(kind: ModelKind) -> ModelSpec {
    match kind {
        ModelKind::ResUNet => ModelSpec {
            kind,
            nx: 8,
            ny: 8,
            hidden_dim: 1,
            channels: vec![2, 3, 4],
            branch: vec![],
            trunk: vec![],
            dropout: 0.02,
            target_params: 1,
        },
        ModelKind::VanillaDeeponet => ModelSpec {
            kind,
            nx: 4,
            ny: 4,
            hidden_dim: 4,
            channels: vec![],
            branch: vec![18, 6, 5, 4],
            trunk: vec![2, 5, 4],
            dropout: 0.0,
            target_params: 1,
        },
        ModelKind::Rdon => ModelSpec {
            kind,
            nx: 8,
            ny: 8,
            hidden_dim: 3,
            channels: vec![2, 3, 4],
            branch: vec![2, 5, 4],
            trunk: vec![4, 5, 3],
            dropout: 0.02,
            target_params: 1,
        },
    }
}

fn coords(nx: usize, ny: usize) -> Tensor<f64> {
    Tensor::from_fn(&[nx * ny, 2], |i| {
        let e = i / 2;
        if i % 2 == 0 {
            ((e % nx) as f64 + 0.5) / nx as f64
        } else {
            ((e / nx) as f64 + 0.5) / ny as f64
        }
    })
}

fn random_input(spec: &ModelSpec, n: usize, rng: &mut ChaCha8Rng) -> ModelInput<f64> {
    let (nx, ny) = (spec.nx, spec.ny);
    let mut bit = || if rng.random::<f64>() < 0.6 { 1.0 } else { 0.0 };
    let geometry: Vec<f64> = (0..n * nx * ny).map(|_| bit()).collect();
    let loads: Vec<f64> = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    match spec.kind {
        ModelKind::ResUNet => ModelInput::Image(Tensor::from_fn(&[n, 3, ny, nx], |i| {
            let (s, ch, p) = (i / (3 * nx * ny), (i / (nx * ny)) % 3, i % (nx * ny));
            if ch == 0 { geometry[s * nx * ny + p] } else { loads[2 * s + ch - 1] }
        })),
        ModelKind::VanillaDeeponet => ModelInput::Operator {
            branch: Tensor::from_fn(&[n, nx * ny + 2], |i| {
                let (s, j) = (i / (nx * ny + 2), i % (nx * ny + 2));
                if j < nx * ny { geometry[s * nx * ny + j] } else { loads[2 * s + j - nx * ny] }
            }),
            trunk: coords(nx, ny),
        },
        ModelKind::Rdon => ModelInput::Fused {
            geometry: Tensor::new(&[n, 1, ny, nx], geometry).unwrap(),
            loads: Tensor::new(&[n, 2], loads).unwrap(),
        },
    }
}

fn built(spec: &ModelSpec, seed: u64) -> (Surrogate, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let m = Surrogate::build(spec, &mut store, seed).unwrap();
    (m, store)
}

fn predict(m: &Surrogate, store: &ParamStore<f64>, input: &ModelInput<f64>) -> Tensor<f64> {
    let mut g = Graph::inference(store);
    let y = m.forward(&mut g, input).unwrap();
    g.value(y).clone()
}

#[test]
fn audited_counts_equal_closed_forms() {
    let mut specs: Vec<ModelSpec> = ModelKind::ALL.iter().map(|&k| ModelSpec::paper(k).unwrap()).collect();
    specs.extend(ModelKind::ALL.iter().map(|&k| ModelSpec::scaled(k, 32, 200_000).unwrap()));
    specs.extend(ModelKind::ALL.iter().map(|&k| tiny(k)));
    for spec in specs {
        let mut store = ParamStore::<f32>::new();
        Surrogate::build(&spec, &mut store, 0).unwrap();
        assert_eq!(store.trainable_count(), spec.closed_form_params(), "{:?}", spec.kind);
    }
}

#[test]
fn shape_contract_on_every_grid() {
    for n in [16, 32, 64, 128] {
        for kind in ModelKind::ALL {
            let mut spec = ModelSpec::scaled(kind, n, 200_000).unwrap();
            if kind != ModelKind::VanillaDeeponet {
                spec.channels = vec![2, 4, 8, 16];
                if kind == ModelKind::Rdon {
                    spec.branch = vec![2, 8, 16];
                    spec.trunk = vec![16, 8, 4];
                    spec.hidden_dim = 4;
                }
            }
            let (m, store) = built(&spec, 1);
            let batch = if n == 128 && kind == ModelKind::ResUNet { 16 } else { 2 };
            let x = random_input(&spec, batch, &mut ChaCha8Rng::seed_from_u64(n as u64));
            let y = predict(&m, &store, &x);
            assert_eq!(y.shape(), &[batch, 1, n, n]);
            assert!(y.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }
}

#[test]
fn zero_input_gives_finite_output() {
    for kind in ModelKind::ALL {
        let spec = tiny(kind);
        let (m, store) = built(&spec, 2);
        let mut x = random_input(&spec, 2, &mut ChaCha8Rng::seed_from_u64(0));
        match &mut x {
            ModelInput::Image(t) => t.data_mut().fill(0.0),
            ModelInput::Operator { branch, .. } => branch.data_mut().fill(0.0),
            ModelInput::Fused { geometry, loads } => {
                geometry.data_mut().fill(0.0);
                loads.data_mut().fill(0.0);
            }
        }
        assert!(predict(&m, &store, &x).data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn mismatched_input_is_rejected() {
    let (m, store) = built(&tiny(ModelKind::Rdon), 0);
    let x = random_input(&tiny(ModelKind::ResUNet), 1, &mut ChaCha8Rng::seed_from_u64(0));
    let mut g = Graph::inference(&store);
    assert!(m.forward(&mut g, &x).is_err());
}

#[test]
fn vanilla_zero_branch_predicts_the_bias() {
    let spec = tiny(ModelKind::VanillaDeeponet);
    let (m, mut store) = built(&spec, 3);
    let last_w = store.iter().filter(|(_, p)| p.name.starts_with("branch.2")).map(|(id, _)| id).collect::<Vec<_>>();
    for id in last_w {
        store.get_mut(id).data_mut().fill(0.0);
    }
    store.get_mut(m.output_bias().unwrap()).data_mut()[0] = 0.3;
    let x = random_input(&spec, 2, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(predict(&m, &store, &x).data().iter().all(|&v| v == 0.3));
}

#[test]
fn vanilla_is_pointwise_in_the_query_coordinates() {
    let spec = tiny(ModelKind::VanillaDeeponet);
    let (m, mut store) = built(&spec, 4);
    store.get_mut(m.output_bias().unwrap()).data_mut()[0] = 0.5;
    let x = random_input(&spec, 2, &mut ChaCha8Rng::seed_from_u64(2));
    let ModelInput::Operator { branch, trunk } = &x else { unreachable!() };
    let base = predict(&m, &store, &x);
    let p = 16;
    let perm: Vec<usize> = (0..p).map(|i| (i * 5 + 3) % p).collect();
    let permuted = Tensor::from_fn(&[p, 2], |i| trunk.data()[perm[i / 2] * 2 + i % 2]);
    let y = predict(&m, &store, &ModelInput::Operator { branch: branch.clone(), trunk: permuted });
    for s in 0..2 {
        for i in 0..p {
            assert_eq!(y.data()[s * p + i], base.data()[s * p + perm[i]]);
        }
    }
    for q in [0, 7, 15] {
        let single = Tensor::from_fn(&[p, 2], |i| trunk.data()[q * 2 + i % 2]);
        let y = predict(&m, &store, &ModelInput::Operator { branch: branch.clone(), trunk: single });
        for s in 0..2 {
            assert!(y.data()[s * p..(s + 1) * p].iter().all(|&v| (v - base.data()[s * p + q]).abs() < 1e-12));
        }
    }
}

#[test]
fn rdon_ones_fusion_is_identity_on_the_latent() {
    let spec = tiny(ModelKind::Rdon);
    let (m, mut store) = built(&spec, 5);
    let (w, b) = m.fusion_layer().unwrap();
    store.get_mut(w).data_mut().fill(0.0);
    store.get_mut(b).data_mut().fill(1.0);
    let x = random_input(&spec, 2, &mut ChaCha8Rng::seed_from_u64(3));
    let mut g = Graph::inference(&store);
    let nodes = m.forward_nodes(&mut g, &x).unwrap();
    let u = nodes.unet.unwrap();
    assert!(g.value(nodes.fusion.unwrap()).data().iter().all(|&v| v == 1.0));
    assert_eq!(g.value(u.fused.unwrap()), g.value(u.bottleneck));
}

#[test]
fn rdon_responds_to_loads_and_geometry() {
    let spec = tiny(ModelKind::Rdon);
    let (m, mut store) = built(&spec, 6);
    store.get_mut(m.output_bias().unwrap()).data_mut()[0] = 1.0;
    let x = random_input(&spec, 1, &mut ChaCha8Rng::seed_from_u64(4));
    let ModelInput::Fused { geometry, loads } = &x else { unreachable!() };
    let base = predict(&m, &store, &x);
    let mut bumped = loads.clone();
    bumped.data_mut()[0] += 0.5;
    let y = predict(&m, &store, &ModelInput::Fused { geometry: geometry.clone(), loads: bumped });
    let change = y.data().iter().zip(base.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(change > 0.0);
    let mut other = geometry.clone();
    other.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    let y = predict(&m, &store, &ModelInput::Fused { geometry: other, loads: loads.clone() });
    assert_ne!(y, base);
}

#[test]
fn every_parameter_group_receives_gradient() {
    for kind in ModelKind::ALL {
        let spec = tiny(kind);
        let (m, mut store) = built(&spec, 7);
        if let Some(b0) = m.output_bias() {
            store.get_mut(b0).data_mut()[0] = 0.5;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_input(&spec, 4, &mut rng);
        let target = Tensor::from_fn(&[4, 1, spec.ny, spec.nx], |_| rng.random::<f64>());
        let mut g = Graph::new(&store, Mode::Train, 9);
        let y = m.forward(&mut g, &x).unwrap();
        let t = g.input(target);
        let loss = g.mse(y, t).unwrap();
        let grads = g.backward(loss).unwrap();
        for (name, ids) in parameter_groups(&store) {
            let norm: f64 = ids.iter().filter_map(|&id| grads.param(id)).flat_map(|t| t.data().iter()).map(|v| v * v).sum();
            assert!(norm > 0.0, "{kind:?} group {name} has no gradient");
        }
    }
}

#[test]
fn architectures_pass_gradient_checks() {
    for kind in ModelKind::ALL {
        let spec = tiny(kind);
        let (m, mut store) = built(&spec, 10);
        if let Some(b0) = m.output_bias() {
            store.get_mut(b0).data_mut()[0] = 0.5;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_input(&spec, 2, &mut rng);
        let target = Tensor::from_fn(&[2, 1, spec.ny, spec.nx], |_| rng.random::<f64>());
        for mode in [Mode::Train, Mode::Eval] {
            let opts = GradcheckOptions { mode, per_param: 6, seed: 12, ..GradcheckOptions::default() };
            let report = gradcheck(&mut store, &opts, |g| {
                let y = m.forward(g, &x)?;
                let t = g.input(target.clone());
                g.mse(y, t)
            })
            .unwrap();
            assert!(report.passed(1e-4), "{kind:?} {mode:?} {report:?}");
            assert!(report.skipped * 10 <= report.checked, "{kind:?} {report:?}");
        }
    }
}

