mod common;

use std::collections::HashMap;

use sumer::config::Mode;
use sumer::dataset::{anchor_labeled, split_dataset, SplitSpec};
use sumer::engine::{coverage_confidence, prepare, run_prepared, self_label, single_round_sum, CoverageSpec, GateSpec, LearnerSpec};
use sumer::learners::{self, Affinity, ClassifierSpec, SpreadSpec};
use sumer::synth::{gen_two_gaussians, gen_two_moons, inject_noise, GaussianSpec, MoonsSpec, NoiseKind, NoiseSpec};
use sumer::{run_experiment, run_sweep, Dataset, Error, ExperimentConfig, Instance, LabelRecord, LabelState, Strategy};

const SMALL: &str = r#"
version = 1
seed = 3
strategies = ["static", "static_remediated", "sum", "sumer", "oracle"]
noise = { kind = "symmetric_flip", rate = 0.2 }

[data]
kind = "two_gaussians"

[[data.classes]]
mean = [-1.5, 0.0]
covariance = [[1.0, 0.0], [0.0, 1.0]]
count = 300

[[data.classes]]
mean = [1.5, 0.0]
covariance = [[1.0, 0.0], [0.0, 1.0]]
count = 300

[split]
labeled_fraction = 0.1

[stream]
window_size = 60
n_windows = 4

[learner.classifier]
kind = "random_forest"
n_trees = 10
min_leaf = 3

[gate]
tau = 0.8

[remediation]
method = "rank_prune"
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml(SMALL).unwrap()
}

#[test]
fn zero_windows_leave_only_the_initial_row() {
    let mut cfg = small();
    cfg.strategies = vec![Strategy::Static, Strategy::Sum, Strategy::Oracle];
    cfg.stream.as_mut().unwrap().n_windows = 0;
    let trace = run_experiment(&cfg).unwrap();
    assert_eq!(trace.records.len(), 3);
    assert!(trace.records.iter().all(|r| r.window == 0 && r.seen == 0));
    let acc = trace.records[0].holdout_acc;
    assert!(trace.records.iter().all(|r| r.holdout_acc == acc));
}

#[test]
fn counts_add_up_and_static_is_constant() {
    let cfg = small();
    let trace = run_experiment(&cfg).unwrap();
    assert_eq!(trace.records.len(), 5 * 5);
    for rec in trace.records.iter().filter(|r| r.window > 0) {
        assert_eq!(rec.accepted + rec.rejected, 60, "{rec:?}");
        assert_eq!(rec.seen, 60 * rec.window);
        assert!((0.0..=1.0).contains(&rec.holdout_acc));
    }
    for s in [Strategy::Static, Strategy::StaticRemediated] {
        let series = trace.series(s);
        assert!(series.iter().all(|r| r.holdout_acc == series[0].holdout_acc), "{s} moved");
    }
    let sumer = trace.series(Strategy::Sumer);
    assert!(sumer[1..].iter().all(|r| r.pi0_hat.is_some() || r.remediation_skipped.is_some()));
    assert!(trace.series(Strategy::Sum).iter().all(|r| r.pi0_hat.is_none()));
}

#[test]
fn runs_are_byte_identical() {
    let cfg = small();
    let a = run_experiment(&cfg).unwrap().to_csv().unwrap();
    let b = run_experiment(&cfg).unwrap().to_csv().unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(a, run_experiment(&other).unwrap().to_csv().unwrap());
}

#[test]
fn hidden_truth_does_not_leak() {
    let cfg = small();
    let prepared = prepare(&cfg).unwrap();
    let reference = run_prepared(&cfg, &prepared).unwrap().to_csv().unwrap();
    let erased = run_prepared(&cfg, &prepared.erase_truth()).unwrap().to_csv().unwrap();
    assert_eq!(reference, erased);
    let mut poisoned = prepared.clone();
    poisoned.seed_set = common::poison(&prepared.seed_set);
    poisoned.pool = common::poison(&prepared.pool);
    assert_eq!(reference, run_prepared(&cfg, &poisoned).unwrap().to_csv().unwrap());
}

#[test]
fn strategies_share_their_start() {
    let cfg = small();
    let trace = run_experiment(&cfg).unwrap();
    let initial: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.window == 0 && r.strategy != Strategy::StaticRemediated)
        .map(|r| r.holdout_acc)
        .collect();
    assert!(initial.windows(2).all(|w| w[0] == w[1]), "{initial:?}");
    let mut alone = cfg.clone();
    alone.strategies = vec![Strategy::Sum];
    let solo = run_experiment(&alone).unwrap();
    let together: Vec<_> = trace.series(Strategy::Sum).into_iter().cloned().collect();
    assert_eq!(solo.records, together);
}

#[test]
fn inconsistent_stream_fails_before_training() {
    let mut cfg = small();
    cfg.stream.as_mut().unwrap().n_windows = 100;
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("window_size * n_windows"), "{err}");
}

#[test]
fn single_round_mode_has_two_rows_per_strategy() {
    let mut cfg = small();
    cfg.mode = Mode::SingleRound;
    cfg.stream = None;
    cfg.gate.tau = 0.0;
    let trace = run_experiment(&cfg).unwrap();
    assert_eq!(trace.records.len(), 10);
    let pool = prepare(&cfg).unwrap().pool.len();
    for rec in trace.records.iter().filter(|r| r.window == 1) {
        assert_eq!(rec.seen, pool);
        assert_eq!(rec.accepted + rec.rejected, pool);
    }
    let sum = trace.series(Strategy::Sum);
    assert_eq!(sum[1].accepted, pool, "tau 0 accepts everything");
}

#[test]
fn sweep_runs_each_fraction_in_order() {
    let mut cfg = small();
    cfg.mode = Mode::SingleRound;
    cfg.stream = None;
    cfg.strategies = vec![Strategy::Static];
    cfg.sweep = Some(sumer::config::SweepConfig {
        train_labeled_fractions: vec![0.1, 0.5],
    });
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.iter().map(|(f, _)| *f).collect::<Vec<_>>(), vec![0.1, 0.5]);
    let pools: Vec<usize> = out.iter().map(|(_, t)| t.records[1].rejected).collect();
    // 480 non-holdout rows
    assert_eq!(pools, vec![480 - 48, 480 - 240]);
}

fn moons_spec() -> LearnerSpec {
    LearnerSpec::Spreading(SpreadSpec {
        affinity: Affinity::KnnGraph { k: 10 },
        ..SpreadSpec::default()
    })
}

#[test]
fn single_round_on_moons_with_twenty_labels() {
    for seed in 0..3 {
        let data = gen_two_moons(&MoonsSpec { n: 1000, noise_std: 0.1, seed }).unwrap();
        let split = split_dataset(&data, &SplitSpec { labeled_fraction: 0.02, holdout_fraction: 0.2, seed, stratified: true }).unwrap();
        let all = Dataset::concat(&[&split.labeled, &split.unlabeled]).unwrap();
        let out = single_round_sum(&all, &moons_spec(), &GateSpec::new(0.0), None, seed).unwrap();
        assert!(out.accuracy > 0.95, "seed {seed}: {}", out.accuracy);
        assert_eq!(out.self_labeled, 780);
    }
}

#[test]
fn single_round_with_everything_provided_reports_label_agreement() {
    let data = gen_two_moons(&MoonsSpec { n: 200, noise_std: 0.1, seed: 4 }).unwrap();
    let noisy = inject_noise(&data, &NoiseSpec { kind: NoiseKind::SymmetricFlip { rate: 0.15 }, seed: 4 }).unwrap();
    let spec = LearnerSpec::Classifier(ClassifierSpec::Knn { k: 5 });
    let out = single_round_sum(&noisy.dataset, &spec, &GateSpec::new(0.0), None, 0).unwrap();
    assert_eq!(out.self_labeled, 0);
    assert_eq!(out.accuracy, 1.0 - 30.0 / 200.0);
    assert_eq!(out.labeled, noisy.dataset);
}

#[test]
fn confident_self_labels_are_precise() {
    // each mean 3 sigma from the decision boundary
    let spec = GaussianSpec::isotropic(vec![-3.0, 0.0], vec![3.0, 0.0], 1.0, [500, 500]);
    let data = gen_two_gaussians(&spec, 11).unwrap();
    let split = split_dataset(&data, &SplitSpec { labeled_fraction: 0.2, holdout_fraction: 0.2, seed: 11, stratified: true }).unwrap();
    let model = learners::fit(
        &ClassifierSpec::RandomForest { n_trees: 30, max_depth: None, features_per_split: None, min_leaf: 3, seed: 11 },
        &split.labeled,
        &split.labeled.weights(),
    )
    .unwrap();
    let truth: HashMap<u64, usize> = split.unlabeled.iter().map(|(i, r)| (i.id, r.truth.unwrap())).collect();
    let out = self_label(&model, &split.unlabeled.without_truth(), &GateSpec::new(0.9), None, 1).unwrap();
    assert_eq!(out.accepted.len() + out.rejected.len(), split.unlabeled.len());
    let hits = out
        .accepted
        .iter()
        .filter(|(i, r)| r.visible() == Some(truth[&i.id]))
        .count();
    let precision = hits as f64 / out.accepted.len() as f64;
    assert!(precision >= 0.98, "precision {precision} over {}", out.accepted.len());
    assert!(out.accepted.labels().iter().all(|r| r.truth.is_none()));
}

#[test]
fn coverage_is_lower_off_the_arcs() {
    let data = gen_two_moons(&MoonsSpec { n: 400, noise_std: 0.1, seed: 2 }).unwrap();
    let training = data.features();
    let spec = CoverageSpec { k: 5, quantile: 0.9 };
    let on = gen_two_moons(&MoonsSpec { n: 200, noise_std: 0.1, seed: 99 }).unwrap();
    let on: Vec<f64> = on.features().iter().map(|x| coverage_confidence(x, &training, &spec).unwrap()).collect();
    // a ring well outside both moons
    let off: Vec<f64> = (0..200)
        .map(|i| {
            let t = i as f64 / 200.0 * std::f64::consts::TAU;
            coverage_confidence(&[0.5 + 3.0 * t.cos(), 0.25 + 3.0 * t.sin()], &training, &spec).unwrap()
        })
        .collect();
    let (on, off) = (common::median(on), common::median(off));
    assert!(off < on, "off-arc {off} vs on-arc {on}");
    assert!(off < 0.1 && on > 0.5);
}

#[test]
fn anchored_seed_sits_near_the_anchor() {
    let data = gen_two_moons(&MoonsSpec { n: 1000, noise_std: 0.1, seed: 5 }).unwrap();
    let split = split_dataset(&data, &SplitSpec { labeled_fraction: 0.02, holdout_fraction: 0.2, seed: 5, stratified: true }).unwrap();
    let holdout = split.holdout.ids();
    let anchored = anchor_labeled(split, &[-1.0, 0.0]).unwrap();
    assert_eq!(anchored.holdout.ids(), holdout);
    assert_eq!(anchored.labeled.len(), 20);
    assert_eq!(anchored.unlabeled.len(), 780);
    let summary = anchored.labeled.class_summary();
    assert_eq!(summary.provided, vec![10, 10]);
    // class 0 rows are the ten nearest class-0 candidates
    let d = |x: &[f64]| (x[0] + 1.0).powi(2) + x[1].powi(2);
    let worst_seed = anchored
        .labeled
        .iter()
        .filter(|(_, r)| r.visible() == Some(0))
        .map(|(i, _)| d(&i.features))
        .fold(0.0, f64::max);
    let pool = Dataset::concat(&[&anchored.unlabeled]).unwrap();
    let truth: HashMap<u64, usize> = data.iter().map(|(i, r)| (i.id, r.truth.unwrap())).collect();
    let nearest_left = pool
        .instances()
        .iter()
        .filter(|i| truth[&i.id] == 0)
        .map(|i| d(&i.features))
        .fold(f64::INFINITY, f64::min);
    assert!(worst_seed <= nearest_left);
}

#[test]
fn csv_source_needs_labels_on_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "f0,label\n0.0,0\n1.0,\n2.0,1\n").unwrap();
    let text = SMALL
        .split("[data]")
        .next()
        .unwrap()
        .to_string()
        + &format!("[data]\nkind = \"csv\"\npath = {:?}\n\n[split]\nlabeled_fraction = 0.3\n\n[stream]\nwindow_size = 1\nn_windows = 1\n\n[learner.classifier]\nkind = \"knn\"\nk = 1\n\n[gate]\ntau = 0.5\n\n[remediation]\nmethod = \"rank_prune\"\n", path);
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.to_string().contains("no label"));
}

#[test]
fn self_labels_carry_round_and_confidence() {
    let data = gen_two_moons(&MoonsSpec { n: 100, noise_std: 0.05, seed: 1 }).unwrap();
    let model = learners::fit(&ClassifierSpec::Knn { k: 4 }, &data, &data.weights()).unwrap();
    let window = Dataset::new(
        vec![Instance::new(500, vec![0.0, 1.0]), Instance::new(501, vec![1.0, -0.5])],
        vec![LabelRecord::unlabeled(None); 2],
        2,
    )
    .unwrap();
    let out = self_label(&model, &window, &GateSpec::new(0.0), None, 3).unwrap();
    for rec in out.accepted.labels() {
        let LabelState::SelfLabeled { confidence, round, .. } = rec.state else { panic!("{rec:?}") };
        assert_eq!(round, 3);
        assert!((0.5..=1.0).contains(&confidence));
    }
}
