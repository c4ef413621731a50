use std::fs;
use std::sync::OnceLock;

use opstress::checkpoint::Checkpoint;
use opstress::container::{read_container, write_container};
use opstress::error::HarnessError;
use opstress::evaluate::{evaluate, predict, report_from_predictions, write_report, Prediction};
use opstress::generate::{generate_designs, simulate_designs};
use opstress::train::{mean_loss, train, train_model, LossHistory, ModelChoice, TrainConfig, CHECKPOINT_DIR, HISTORY};
use opstress_core::dataset::{split, Dataset};
use opstress_core::plasticity::StressField;
use opstress_core::surrogates::{ModelKind, ModelSpec, Surrogate};
use opstress_core::nn::ParamStore;
use opstress_core::topopt::ToSettings;
use opstress_core::Error as CoreError;

const GRID: usize = 16;

fn toy() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| {
        let designs = generate_designs(10, GRID, GRID, 11, &ToSettings::default()).unwrap();
        simulate_designs(&designs, 3, 20, 12).unwrap().dataset
    })
}

fn toy_split() -> (Vec<usize>, Vec<usize>) {
    let data = toy();
    split(&data.manifest, data.manifest.split_seed)
}

fn config(kind: ModelKind, steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 4,
        lr0: 5e-4,
        decay: 1e-4,
        seed,
        model: ModelChoice::Sized { kind, target_params: 50_000 },
        dataset: "unused".into(),
        out: "unused".into(),
        checkpoint_every: 0,
        test_every: 50,
    }
}

fn spec(kind: ModelKind) -> ModelSpec {
    ModelSpec::scaled(kind, GRID, 50_000).unwrap()
}

fn truth_predictions(data: &Dataset, indices: &[usize]) -> Vec<Prediction> {
    indices
        .iter()
        .map(|&i| Prediction {
            field: StressField { nx: GRID, ny: GRID, vm: data.stress(i).iter().map(|&s| s as f64).collect() },
            seconds: 0.0,
        })
        .collect()
}

#[test]
fn fixture_is_consistent() {
    let data = toy();
    data.validate().unwrap();
    assert!(data.len() >= 25, "only {} of 30 simulations kept", data.len());
    let (tr, te) = toy_split();
    assert_eq!(tr.len() + te.len(), data.len());
    let design_of = |i: &usize| data.manifest.provenance[*i].design;
    assert!(tr.iter().all(|i| te.iter().all(|j| design_of(i) != design_of(j))));
}

#[test]
fn training_reduces_train_loss_for_every_kind() {
    let data = toy();
    let (tr, te) = toy_split();
    for kind in ModelKind::ALL {
        let spec = spec(kind);
        let mut store = ParamStore::<f32>::new();
        let initial = Surrogate::build(&spec, &mut store, 5).unwrap();
        let before = mean_loss(&initial, &store, data, &tr, 8).unwrap();
        let out = train_model(data, &tr, &te, &spec, &config(kind, 200, 5), |_, _| Ok(())).unwrap();
        let after = mean_loss(&out.checkpoint.model, &out.checkpoint.store, data, &tr, 8).unwrap();
        assert!(after < before, "{}: loss {before} -> {after}", kind.name());
        assert_eq!(out.history.train.len(), 200);
        assert_eq!(out.history.test.iter().map(|t| t.0).collect::<Vec<_>>(), [50, 100, 150, 200]);
        assert!(out.history.train.iter().all(|l| l.is_finite() && *l >= 0.0));
    }
}

#[test]
fn same_seed_gives_identical_runs() {
    let data = toy();
    let (tr, te) = toy_split();
    let run = || train_model(data, &tr, &te, &spec(ModelKind::Rdon), &config(ModelKind::Rdon, 30, 9), |_, _| Ok(())).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    let bits = |s: &ParamStore<f32>| s.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.checkpoint.store), bits(&b.checkpoint.store));

    let other = train_model(data, &tr, &te, &spec(ModelKind::Rdon), &config(ModelKind::Rdon, 30, 10), |_, _| Ok(())).unwrap();
    assert_ne!(a.history, other.history);
}

#[test]
fn huge_learning_rate_diverges() {
    let data = toy();
    let (tr, te) = toy_split();
    let mut cfg = config(ModelKind::VanillaDeeponet, 50, 1);
    cfg.lr0 = 1e30;
    let err = train_model(data, &tr, &te, &spec(ModelKind::VanillaDeeponet), &cfg, |_, _| Ok(())).unwrap_err();
    assert!(matches!(err, HarnessError::Core(CoreError::Diverged { .. })), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn invalid_config_is_rejected() {
    let mut cfg = config(ModelKind::Rdon, 0, 1);
    assert!(cfg.validate().is_err());
    cfg.steps = 1;
    cfg.lr0 = -1.0;
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn truth_as_prediction_scores_zero() {
    let data = toy();
    let all: Vec<usize> = (0..data.len()).collect();
    let report = report_from_predictions(data, &all, &truth_predictions(data, &all)).unwrap();
    assert_eq!(report.cases.len(), data.len());
    assert!(report.errors().iter().all(|&e| e == 0.0));
    assert_eq!(report.mean(), 0.0);
    assert_eq!(report.histogram.counts.iter().sum::<usize>(), data.len());
}

#[test]
fn report_statistics_are_consistent() {
    let data = toy();
    let all: Vec<usize> = (0..data.len()).collect();
    let predictions: Vec<Prediction> = truth_predictions(data, &all)
        .into_iter()
        .enumerate()
        .map(|(k, mut p)| {
            let f = 1.0 + 0.1 * (k % 7) as f64;
            p.field.vm.iter_mut().for_each(|v| *v *= f);
            p
        })
        .collect();
    let report = report_from_predictions(data, &all, &predictions).unwrap();
    for (k, c) in report.cases.iter().enumerate() {
        assert!((c.mrl2e - 0.1 * (k % 7) as f64).abs() < 1e-9, "case {k}: {}", c.mrl2e);
    }
    let errors = report.errors();
    let direct = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!((report.mean() - direct).abs() <= 1e-12);

    let vf = &report.by_vf;
    assert_eq!(vf.edges.len(), 11);
    assert!((vf.edges[0] - 0.2).abs() < 1e-15 && (vf.edges[10] - 0.6).abs() < 1e-15);
    assert_eq!(vf.counts.iter().sum::<usize>(), report.cases.len());
    let weighted: f64 = vf.means.iter().zip(&vf.counts).map(|(m, &n)| m.unwrap_or(0.0) * n as f64).sum();
    assert!((weighted / report.cases.len() as f64 - direct).abs() < 1e-12);
    let ranked = report.ranked_cases();
    assert_eq!(ranked.iter().map(|r| r.0).collect::<Vec<_>>(), ["best", "p25", "p50", "p75", "worst"]);
    assert_eq!(ranked[0].1.mrl2e, 0.0);
    assert!((ranked[4].1.mrl2e - 0.6).abs() < 1e-9);
}

#[test]
fn predictions_are_masked_and_match_evaluate() {
    let data = toy();
    let (tr, te) = toy_split();
    let out = train_model(data, &tr, &te, &spec(ModelKind::ResUNet), &config(ModelKind::ResUNet, 10, 2), |_, _| Ok(())).unwrap();
    let ckpt = &out.checkpoint;

    let void = predict(ckpt, &vec![0; GRID * GRID], 1.0, 4.0).unwrap();
    assert!(void.field.vm.iter().all(|&v| v == 0.0));

    let (report, preds) = evaluate(ckpt, data, &te).unwrap();
    assert_eq!(report.cases.len() + report.excluded.len(), te.len());
    for (&i, p) in te.iter().zip(&preds) {
        assert!(p.field.vm.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert!(data.geometry(i).iter().zip(&p.field.vm).all(|(&g, &v)| g == 1 || v == 0.0));
        let (theta, umag) = data.load(i);
        let single = predict(ckpt, data.geometry(i), theta as f64, umag as f64).unwrap();
        let bits = |f: &StressField| f.vm.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&single.field), bits(&p.field));
    }

    let dir = tempfile::tempdir().unwrap();
    write_report(&report, data, &te, &preds, dir.path()).unwrap();
    let report_json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report_json["cases"].as_array().unwrap().len(), report.cases.len());
    for label in ["best", "p25", "p50", "p75", "worst"] {
        for suffix in ["_truth.png", "_prediction.png", "_error.png", ".csv"] {
            assert!(dir.path().join(format!("{label}{suffix}")).is_file(), "{label}{suffix}");
        }
        let csv = fs::read_to_string(dir.path().join(format!("{label}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), GRID * GRID + 1);
        assert!(csv.starts_with("row,col,solid,truth_mpa,prediction_mpa,error_mpa"));
    }
}

#[test]
fn predict_rejects_bad_inputs() {
    let spec = spec(ModelKind::Rdon);
    let mut store = ParamStore::<f32>::new();
    let model = Surrogate::build(&spec, &mut store, 0).unwrap();
    let ckpt = Checkpoint::new(model, store, 0, 0);
    let solid = vec![1u8; GRID * GRID];
    assert!(predict(&ckpt, &solid[1..], 1.0, 4.0).is_err());
    assert!(predict(&ckpt, &vec![2u8; GRID * GRID], 1.0, 4.0).is_err());
    assert!(predict(&ckpt, &solid, 1.0, 9.0).is_err());
    assert!(predict(&ckpt, &solid, 4.0, 4.0).is_err());
}

#[test]
fn trains_from_toml_config() {
    let dir = tempfile::tempdir().unwrap();
    write_container(toy(), &dir.path().join("data")).unwrap();
    let path = dir.path().join("train.toml");
    fs::write(
        &path,
        "steps = 12\nbatch_size = 4\nseed = 3\ndataset = \"data\"\nout = \"run\"\ncheckpoint_every = 5\ntest_every = 4\n\n[model]\nkind = \"vanilla_deeponet\"\ntarget_params = 50000\n",
    )
    .unwrap();
    let cfg = TrainConfig::from_file(&path).unwrap();
    assert_eq!(cfg.dataset, dir.path().join("data"));
    assert_eq!(cfg.lr0, 5e-4);
    let outcome = train(&cfg).unwrap();
    let run = dir.path().join("run");
    let history = LossHistory::load(&run.join(HISTORY)).unwrap();
    assert_eq!(history, outcome.history);
    assert_eq!(history.train.len(), 12);
    assert_eq!(history.test.iter().map(|t| t.0).collect::<Vec<_>>(), [4, 8, 12]);
    for sub in [CHECKPOINT_DIR.to_string(), format!("{CHECKPOINT_DIR}-5"), format!("{CHECKPOINT_DIR}-10")] {
        assert!(run.join(&sub).join("weights.bin").is_file(), "{sub}");
    }
    let back = Checkpoint::load(&run.join(CHECKPOINT_DIR)).unwrap();
    assert_eq!(back.store.flatten(), outcome.checkpoint.store.flatten());
    assert_eq!(back.manifest.step, 12);
    assert_eq!(read_container(&cfg.dataset).unwrap(), *toy());

    fs::write(&path, "steps = 1\nbatch_size = 1\nseed = 0\ndataset = \"data\"\nout = \"run\"\nbogus = 1\n[model]\nkind = \"rdon\"\ntarget_params = 1\n").unwrap();
    assert_eq!(TrainConfig::from_file(&path).unwrap_err().exit_code(), 2);
}
