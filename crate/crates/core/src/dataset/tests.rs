use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::surrogates::{ModelInput, ModelKind};

fn synthetic(nx: usize, ny: usize, designs: u64, loads: u32, seed: u64) -> Vec<SampleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for design in 0..designs {
        let geometry: Vec<u8> = (0..nx * ny).map(|_| rng.random_bool(0.6) as u8).collect();
        for load_index in 0..loads {
            let stress = geometry.iter().map(|&g| if g == 1 { 400.0 * rng.random::<f32>() } else { 0.0 }).collect();
            out.push(SampleRecord {
                geometry: geometry.clone(),
                theta: core::f32::consts::PI * rng.random::<f32>(),
                umag: 2.0 + 6.0 * rng.random::<f32>(),
                stress,
                provenance: Provenance { design, load_index },
            });
        }
    }
    out
}

fn dataset(nx: usize, ny: usize, designs: u64, loads: u32, seed: u64) -> Dataset {
    Dataset::from_records(DatasetManifest::new(nx, ny, seed), &synthetic(nx, ny, designs, loads, seed)).unwrap()
}

#[test]
fn records_round_trip_through_columns() {
    let records = synthetic(3, 2, 4, 2, 1);
    let data = Dataset::from_records(DatasetManifest::new(3, 2, 0), &records).unwrap();
    assert_eq!(data.len(), 8);
    assert_eq!(data.stress.len(), 8 * 6);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(&data.record(i), r);
    }
}

#[test]
fn stress_on_void_is_rejected() {
    let mut records = synthetic(2, 2, 1, 1, 3);
    let void = records[0].geometry.iter().position(|&g| g == 0).unwrap_or_else(|| {
        records[0].geometry[0] = 0;
        0
    });
    records[0].stress[void] = 1.0;
    let r = Dataset::from_records(DatasetManifest::new(2, 2, 0), &records);
    assert!(matches!(r, Err(Error::InvariantViolation(_))));
}

#[test]
fn negative_stress_and_bad_shapes_are_rejected() {
    let mut records = synthetic(2, 2, 1, 1, 4);
    records[0].geometry = vec![1; 4];
    records[0].stress = vec![-1.0, 0.0, 0.0, 0.0];
    assert!(Dataset::from_records(DatasetManifest::new(2, 2, 0), &records).is_err());
    let short = synthetic(2, 2, 1, 1, 4);
    assert!(Dataset::from_records(DatasetManifest::new(3, 2, 0), &short).is_err());
    assert!(Dataset::from_records(DatasetManifest::new(2, 2, 0), &[]).is_err());
}

#[test]
fn manifest_fractions_must_sum_to_one() {
    let mut m = dataset(2, 2, 2, 1, 0).manifest;
    m.validate().unwrap();
    m.split_fractions = [0.8, 0.3];
    assert!(m.validate().is_err());
    m.split_fractions = [0.8, 0.2];
    m.stress_scale = 0.0;
    assert!(m.validate().is_err());
}

#[test]
fn full_scale_split_counts() {
    let mut m = DatasetManifest::new(128, 128, 0);
    m.provenance = (0..3000).flat_map(|design| (0..5).map(move |load_index| Provenance { design, load_index })).collect();
    m.sample_count = m.provenance.len();
    let (train, test) = split(&m, 0);
    assert_eq!(train.len(), 12000);
    assert_eq!(test.len(), 3000);
}

#[test]
fn split_partitions_and_keeps_geometries_together() {
    let data = dataset(2, 2, 37, 3, 5);
    let (train, test) = split(&data.manifest, 11);
    let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..data.len()).collect::<Vec<_>>());
    let train_designs: BTreeSet<u64> = train.iter().map(|&i| data.manifest.provenance[i].design).collect();
    let test_designs: BTreeSet<u64> = test.iter().map(|&i| data.manifest.provenance[i].design).collect();
    assert!(train_designs.is_disjoint(&test_designs));
    assert_eq!(train_designs.len(), 30);
    assert_eq!(split(&data.manifest, 11), (train, test.clone()));
    assert_ne!(split(&data.manifest, 12).1, test);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn split_is_stable_under_reordering(designs in 1u64..40, loads in 1u32..6, seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut m = DatasetManifest::new(1, 1, 0);
        m.provenance = (0..designs).flat_map(|design| (0..loads).map(move |load_index| Provenance { design, load_index })).collect();
        m.sample_count = m.provenance.len();
        let mut shuffled = m.clone();
        shuffled.provenance.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let keys = |m: &DatasetManifest, idx: Vec<usize>| idx.into_iter().map(|i| m.provenance[i]).collect::<BTreeSet<_>>();
        let (a_train, a_test) = split(&m, seed);
        let (b_train, b_test) = split(&shuffled, seed);
        prop_assert_eq!(keys(&m, a_train), keys(&shuffled, b_train));
        prop_assert_eq!(keys(&m, a_test), keys(&shuffled, b_test));
    }

    #[test]
    fn targets_are_scaled_and_zero_on_void(seed in any::<u64>(), nx in 1usize..6, ny in 1usize..6) {
        let data = dataset(nx, ny, 3, 2, seed);
        let idx: Vec<usize> = (0..data.len()).collect();
        let batch = make_batch::<f64>(&data, &idx, ModelKind::ResUNet).unwrap();
        let max = data.stress.iter().copied().fold(0.0f32, f32::max) as f64 / STRESS_SCALE;
        let t = batch.target.data();
        for (k, &i) in idx.iter().enumerate() {
            for (e, &g) in data.geometry(i).iter().enumerate() {
                let v = t[k * nx * ny + e];
                prop_assert!((0.0..=max).contains(&v));
                if g == 0 {
                    prop_assert_eq!(v, 0.0);
                }
                prop_assert_eq!(v, data.stress(i)[e] as f64 / 500.0);
            }
        }
    }
}

#[test]
fn vanilla_branch_length_at_full_resolution() {
    let data = dataset(128, 128, 1, 1, 0);
    let batch = make_batch::<f32>(&data, &[0], ModelKind::VanillaDeeponet).unwrap();
    let ModelInput::Operator { branch, trunk } = batch.input else { panic!("wrong layout") };
    assert_eq!(branch.shape(), &[1, 16386]);
    assert_eq!(trunk.shape(), &[16384, 2]);
    assert_eq!(&trunk.data()[..2], &[0.5 / 128.0, 0.5 / 128.0]);
}

#[test]
fn centroids_follow_element_numbering() {
    let c = element_centroids::<f64>(4, 2);
    // element 6 sits at column 2 of the top row
    assert_eq!(&c.data()[12..14], &[2.5 / 4.0, 1.5 / 2.0]);
    assert_eq!(c.shape(), &[8, 2]);
}

#[test]
fn load_normalization_spans_unit_interval() {
    assert_eq!(normalize_umag(2.0), 0.0);
    assert_eq!(normalize_umag(8.0), 1.0);
    assert_eq!(normalize_umag(5.0), 0.5);
    assert_eq!(normalize_theta(0.0), 0.0);
    assert_eq!(normalize_theta(core::f64::consts::PI), 1.0);
}

#[test]
fn layouts_per_model_kind() {
    let mut records = synthetic(3, 2, 2, 1, 8);
    records[0].umag = 2.0;
    records[0].theta = 0.0;
    records[1].umag = 8.0;
    let data = Dataset::from_records(DatasetManifest::new(3, 2, 0), &records).unwrap();
    let idx = [1, 0];

    let b = make_batch::<f64>(&data, &idx, ModelKind::ResUNet).unwrap();
    let ModelInput::Image(x) = &b.input else { panic!() };
    assert_eq!(x.shape(), &[2, 3, 2, 3]);
    let x = x.data();
    let geometry: Vec<f64> = data.geometry(1).iter().map(|&g| g as f64).collect();
    assert_eq!(&x[..6], geometry.as_slice());
    assert!(x[6..12].iter().all(|&v| v == 1.0));
    let theta = normalize_theta(records[1].theta as f64);
    assert!(x[12..18].iter().all(|&v| v == theta));
    assert!(x[24..36].iter().all(|&v| v == 0.0));

    let b = make_batch::<f64>(&data, &idx, ModelKind::VanillaDeeponet).unwrap();
    let ModelInput::Operator { branch, .. } = &b.input else { panic!() };
    assert_eq!(branch.shape(), &[2, 8]);
    assert_eq!(&branch.data()[6..8], &[1.0, theta]);
    assert_eq!(&branch.data()[14..16], &[0.0, 0.0]);

    let b = make_batch::<f64>(&data, &idx, ModelKind::Rdon).unwrap();
    let ModelInput::Fused { geometry: g, loads } = &b.input else { panic!() };
    assert_eq!(g.shape(), &[2, 1, 2, 3]);
    assert_eq!(loads.data(), &[1.0, theta, 0.0, 0.0]);
    assert_eq!(b.target.shape(), &[2, 1, 2, 3]);
}

#[test]
fn out_of_range_index_is_rejected() {
    let data = dataset(2, 2, 1, 1, 0);
    assert!(make_batch::<f32>(&data, &[1], ModelKind::Rdon).is_err());
}
