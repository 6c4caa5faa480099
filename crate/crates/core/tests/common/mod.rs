//! Checks shared by the property suites and the acceptance run.
#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use sumer::learners::{self, label_spread, Affinity, ClassifierSpec, Predictor, SpreadSpec};
use sumer::remediation::spread_correct;
use sumer::synth::{gen_two_moons, inject_noise, plan_stream, MoonsSpec, NoiseKind, NoiseSpec};
use sumer::{Dataset, ExperimentConfig, Instance, LabelRecord, LabelState};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Moons with every `every`-th row provided (truth kept on all rows).
pub fn moons_with_labels(n: usize, seed: u64, every: usize) -> Dataset {
    let data = gen_two_moons(&MoonsSpec { n, noise_std: 0.1, seed }).unwrap();
    let states = data
        .labels()
        .iter()
        .enumerate()
        .map(|(i, r)| match r.truth {
            Some(class) if i % every == 0 => LabelState::Provided { class },
            _ => LabelState::Unlabeled,
        })
        .collect();
    data.with_states(states).unwrap()
}

fn check_rows(rows: &[Vec<f64>], classes: usize, what: &str) -> Check {
    for (i, row) in rows.iter().enumerate() {
        ensure!(row.len() == classes, "{what}: row {i} has {} entries", row.len());
        ensure!(row.iter().all(|p| p.is_finite() && *p >= 0.0), "{what}: row {i} = {row:?}");
        let total: f64 = row.iter().sum();
        ensure!((total - 1.0).abs() < 1e-9, "{what}: row {i} sums to {total}");
    }
    Ok(())
}

/// Every learner's probability rows lie on the simplex, on and off the data.
pub fn simplex(seed: u64) -> Check {
    let data = moons_with_labels(60, seed, 2);
    let labeled = data.filter_labels(|r| r.visible().is_some());
    let probe: Vec<Instance> = (0..25)
        .map(|i| {
            let t = i as f64 + seed as f64 * 0.37;
            Instance::new(10_000 + i, vec![3.0 * t.sin() - 0.5, 2.0 * t.cos()])
        })
        .collect();
    let specs = [
        ClassifierSpec::Knn { k: 3 },
        ClassifierSpec::DecisionTree { max_depth: Some(4), min_leaf: 1 },
        ClassifierSpec::RandomForest { n_trees: 7, max_depth: None, features_per_split: None, min_leaf: 2, seed },
    ];
    for spec in specs {
        let model = learners::fit(&spec, &labeled, &labeled.weights()).map_err(|e| e.to_string())?;
        check_rows(&model.predict_proba(&probe).map_err(|e| e.to_string())?, 2, &format!("{spec:?}"))?;
    }
    let spread = SpreadSpec { affinity: Affinity::Rbf { gamma: Some(4.0) }, alpha: 0.5, ..SpreadSpec::default() };
    let (model, result) = learners::SpreadModel::fit(&data, &spread).map_err(|e| e.to_string())?;
    check_rows(&result.soft, 2, "spread soft labels")?;
    check_rows(&model.predict_proba(&probe).map_err(|e| e.to_string())?, 2, "spread induction")
}

/// Dense `D^{-1/2} W D^{-1/2}` of an RBF kernel without self-loops.
fn normalized_rbf(points: &[&[f64]], gamma: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d2: f64 = points[i].iter().zip(points[j]).map(|(a, b)| (a - b).powi(2)).sum();
                w[i][j] = (-gamma * d2).exp();
            }
        }
    }
    let deg: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            if deg[i] > 0.0 && deg[j] > 0.0 {
                w[i][j] /= (deg[i] * deg[j]).sqrt();
            }
        }
    }
    w
}

/// The returned iterate satisfies `F = ΛSF + (I−Λ)Y₀`, with `Λ` equal to
/// `alpha` on labeled rows and 1 elsewhere, up to the stopping tolerance.
pub fn spreading_fixed_point(seed: u64, n: usize, alpha: f64, gamma: f64) -> Check {
    let data = moons_with_labels(n, seed, 4);
    let tolerance = 1e-10;
    let spec = SpreadSpec { affinity: Affinity::Rbf { gamma: Some(gamma) }, alpha, max_iter: 200_000, tolerance };
    let result = label_spread(&data, &spec).map_err(|e| e.to_string())?;
    ensure!(result.converged, "no convergence after {} iterations", result.iterations);
    let s = normalized_rbf(&data.features(), gamma);
    let visible = data.visible_labels();
    for i in 0..n {
        let lambda = if visible[i].is_some() { alpha } else { 1.0 };
        for k in 0..2 {
            let sf: f64 = (0..n).map(|j| s[i][j] * result.raw[j][k]).sum();
            let y0 = if visible[i] == Some(k) { 1.0 } else { 0.0 };
            let expected = lambda * sf + (1.0 - lambda) * y0;
            let gap = (result.raw[i][k] - expected).abs();
            ensure!(gap < 1e-8, "row {i} class {k}: F = {} but ΛSF + (I−Λ)Y₀ = {expected}", result.raw[i][k]);
        }
    }
    Ok(())
}

/// At `alpha = 0` every provided label survives spreading and correction
/// changes nothing.
pub fn alpha_zero_identity(seed: u64, n: usize) -> Check {
    let clean = moons_with_labels(n, seed, 3);
    // every fifth provided label is wrong
    let mut k = 0;
    let states = clean
        .labels()
        .iter()
        .map(|r| match r.state {
            LabelState::Provided { class } => {
                k += 1;
                LabelState::Provided { class: if k % 5 == 0 { 1 - class } else { class } }
            }
            other => other,
        })
        .collect();
    let data = clean.with_states(states).map_err(|e| e.to_string())?;
    let spec = SpreadSpec { affinity: Affinity::KnnGraph { k: 6 }, alpha: 0.0, ..SpreadSpec::default() };
    let result = label_spread(&data, &spec).map_err(|e| e.to_string())?;
    for (i, given) in data.visible_labels().iter().enumerate() {
        if let Some(g) = given {
            ensure!(result.labels[i] == Some(*g), "row {i}: given {g}, spread {:?}", result.labels[i]);
        }
    }
    let corrected = spread_correct(&data, &spec).map_err(|e| e.to_string())?;
    ensure!(corrected.changed.is_empty(), "alpha 0 changed {:?}", corrected.changed);
    Ok(())
}

/// Windows are disjoint, drawn from the pool, and exactly sized.
pub fn stream_disjoint(seed: u64, pool: usize, window_size: usize, n_windows: usize) -> Check {
    let data = gen_two_moons(&MoonsSpec { n: pool, noise_std: 0.1, seed }).map_err(|e| e.to_string())?;
    let plan = plan_stream(&data, window_size, n_windows, seed).map_err(|e| e.to_string())?;
    ensure!(plan.len() == n_windows, "{} windows", plan.len());
    let ids: HashSet<u64> = data.ids().into_iter().collect();
    let mut seen = HashSet::new();
    for (w, window) in plan.windows.iter().enumerate() {
        ensure!(window.len() == window_size, "window {w} has {} ids", window.len());
        for id in window {
            ensure!(ids.contains(id), "window {w}: unknown id {id}");
            ensure!(seen.insert(*id), "id {id} repeats (window {w})");
        }
    }
    Ok(())
}

fn provided(n: usize, classes: usize, seed: u64) -> Dataset {
    let instances = (0..n).map(|i| Instance::new(i as u64 * 3 + seed % 3, vec![i as f64])).collect();
    let labels = (0..n)
        .map(|i| LabelRecord::provided((i * 7 + seed as usize) % classes))
        .collect();
    Dataset::new(instances, labels, classes).unwrap()
}

/// Symmetric flips hit exactly `⌊rate·n⌋` rows, class-conditional flips
/// exactly `⌊π_y·n_y⌋` per class; flipped rows change label, truth never does.
pub fn exact_flip_counts(seed: u64, n: usize, classes: usize, rate: f64, pi: [f64; 2]) -> Check {
    let data = provided(n, classes, seed);
    let noisy = inject_noise(&data, &NoiseSpec { kind: NoiseKind::SymmetricFlip { rate }, seed }).map_err(|e| e.to_string())?;
    let expected = (rate * n as f64 + 1e-9).floor() as usize;
    ensure!(noisy.flipped.len() == expected, "symmetric: {} flips, expected {expected}", noisy.flipped.len());
    compare_flips(&data, &noisy.dataset, &noisy.flipped)?;

    let binary = provided(n, 2, seed);
    let noisy = inject_noise(&binary, &NoiseSpec { kind: NoiseKind::ClassConditional { pi0: pi[0], pi1: pi[1] }, seed })
        .map_err(|e| e.to_string())?;
    let mut sizes = [0usize; 2];
    let mut flips = [0usize; 2];
    for (inst, rec) in binary.iter() {
        let t = rec.truth.unwrap();
        sizes[t] += 1;
        flips[t] += usize::from(noisy.flipped.contains(&inst.id));
    }
    for y in 0..2 {
        let expected = (pi[y] * sizes[y] as f64 + 1e-9).floor() as usize;
        ensure!(flips[y] == expected, "class {y}: {} flips of {}, expected {expected}", flips[y], sizes[y]);
    }
    compare_flips(&binary, &noisy.dataset, &noisy.flipped)
}

fn compare_flips(before: &Dataset, after: &Dataset, flipped: &std::collections::BTreeSet<u64>) -> Check {
    for ((inst, old), (_, new)) in before.iter().zip(after.iter()) {
        ensure!(old.truth == new.truth, "truth of {} changed", inst.id);
        let changed = old.visible() != new.visible();
        let reported = flipped.contains(&inst.id);
        ensure!(changed == reported, "id {}: label changed = {changed}, reported flipped = {reported}", inst.id);
    }
    Ok(())
}

/// Same rows with every truth field set to the wrong class.
pub fn poison(data: &Dataset) -> Dataset {
    let labels = data
        .labels()
        .iter()
        .map(|r| LabelRecord { truth: r.truth.map(|t| 1 - t), ..*r })
        .collect();
    Dataset::new(data.instances().to_vec(), labels, data.num_classes()).unwrap()
}
