//! Error remediation: noise-rate estimation, rank pruning, correction by
//! label spreading, and the coupling diagnostic.
//!
//! Noise rates follow the contaminated-mixture model: the rows given label
//! `y` are drawn from `(1 − π_y)·P_y + π_y·P_{1−y}`, so `π_y` is the fraction
//! of given-`y` rows whose true class is the other one.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::learners::{self, argmax, label_spread, ClassifierSpec, SpreadResult, SpreadSpec};
use crate::rng;
use crate::synth::flip_count;

/// Upper bound on `π̂₀ + π̂₁`; beyond it the two classes are not identifiable.
pub const MAX_TOTAL_NOISE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// Fraction of given-0 rows estimated to be truly class 1.
    pub pi0: f64,
    /// Fraction of given-1 rows estimated to be truly class 0.
    pub pi1: f64,
    /// Estimated flip rate of true class 0 (share of class-0 rows labeled 1).
    pub rho0: f64,
    /// Estimated flip rate of true class 1.
    pub rho1: f64,
    /// Mean `P(1)` over given-1 rows.
    pub lower: f64,
    /// Mean `P(1)` over given-0 rows.
    pub upper: f64,
    /// Confident counts `[[N₀₀, N₀₁], [N₁₀, N₁₁]]`, indexed `[given][confident class]`.
    pub confident: [[usize; 2]; 2],
    /// Whether the estimate was scaled back into the identifiable region.
    pub clipped: bool,
}

impl NoiseEstimate {
    /// No detected noise.
    pub fn zero() -> Self {
        Self {
            pi0: 0.0,
            pi1: 0.0,
            rho0: 0.0,
            rho1: 0.0,
            lower: 1.0,
            upper: 0.0,
            confident: [[0; 2]; 2],
            clipped: false,
        }
    }

    pub fn pi(&self) -> [f64; 2] {
        [self.pi0, self.pi1]
    }
}

/// Out-of-fold class probabilities for every row of `data`.
///
/// Rows are assigned to `folds` folds stratified by visible label after a
/// seeded shuffle; fold `f` is scored by a model trained on the other folds
/// (forest seeds are re-derived per fold). Every row needs a visible label.
pub fn cross_val_proba(
    spec: &ClassifierSpec,
    data: &Dataset,
    weights: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if folds < 2 {
        return Err(Error::InvalidSpec(format!("cross-validation needs >= 2 folds, got {folds}")));
    }
    if weights.len() != data.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: data.len(),
            got: weights.len(),
        });
    }
    let given = given_labels(data)?;
    if data.len() < folds {
        return Err(Error::InsufficientInstances {
            needed: folds,
            available: data.len(),
        });
    }
    let mut fold_of = vec![0usize; data.len()];
    let mut rng = rng::substream(seed, "cv-folds");
    let mut next = 0;
    for class in 0..data.num_classes() {
        let mut rows: Vec<usize> = (0..data.len()).filter(|&i| given[i] == class).collect();
        rows.shuffle(&mut rng);
        for i in rows {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    let parts: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
            let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
            let train_w: Vec<f64> = train.iter().map(|&i| weights[i]).collect();
            let spec = spec.reseeded(rng::derive_index(seed, f as u64));
            let model = learners::fit(&spec, &data.select(&train), &train_w)?;
            let rows: Vec<&[f64]> = test.iter().map(|&i| data.instances()[i].features.as_slice()).collect();
            Ok((test, model.predict_proba_rows(&rows)?))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![Vec::new(); data.len()];
    for (rows, probas) in parts {
        for (i, p) in rows.into_iter().zip(probas) {
            out[i] = p;
        }
    }
    Ok(out)
}

fn given_labels(data: &Dataset) -> Result<Vec<usize>> {
    data.iter()
        .map(|(inst, rec)| {
            rec.visible()
                .ok_or_else(|| Error::LabelState(format!("instance {} has no visible label", inst.id)))
        })
        .collect()
}

fn check_binary(probas: &[Vec<f64>], given: &[usize]) -> Result<()> {
    if probas.len() != given.len() {
        return Err(Error::LengthMismatch {
            what: "probability rows",
            expected: given.len(),
            got: probas.len(),
        });
    }
    if let Some(row) = probas.iter().find(|r| r.len() != 2) {
        return Err(Error::NotBinary(row.len()));
    }
    if let Some(&c) = given.iter().find(|&&c| c > 1) {
        return Err(Error::ClassOutOfRange { class: c, num_classes: 2 });
    }
    Ok(())
}

/// Estimates `(π₀, π₁)` from out-of-sample probabilities and given labels.
///
/// `LB` is the mean `P(1)` over given-1 rows and `UB` the mean over given-0
/// rows. A row is confidently class 1 when `P(1) ≥ LB` and confidently class
/// 0 when `P(1) ≤ UB`. Flip rates are read off within each confident region,
/// where both given labels pass the same threshold:
/// `ρ̂₁ = N₀₁ / (N₀₁ + N₁₁)` and `ρ̂₀ = N₁₀ / (N₁₀ + N₀₀)`. Contamination rates
/// then follow from the given-label counts `m_y` and the implied true class
/// sizes `n̂_y`: `π̂₁ = ρ̂₀·n̂₀ / m₁`, `π̂₀ = ρ̂₁·n̂₁ / m₀`.
pub fn estimate_noise_rates(probas: &[Vec<f64>], given: &[usize]) -> Result<NoiseEstimate> {
    check_binary(probas, given)?;
    let mut m = [0usize; 2];
    let mut sum_p1 = [0.0; 2];
    for (row, &y) in probas.iter().zip(given) {
        m[y] += 1;
        sum_p1[y] += row[1];
    }
    for (class, &count) in m.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass(class));
        }
    }
    let lower = sum_p1[1] / m[1] as f64;
    let upper = sum_p1[0] / m[0] as f64;
    if lower <= upper {
        return Err(Error::DegenerateThresholds { lower, upper });
    }
    let mut n = [[0usize; 2]; 2];
    for (row, &y) in probas.iter().zip(given) {
        if row[1] >= lower {
            n[y][1] += 1;
        }
        if row[1] <= upper {
            n[y][0] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let mut rho0 = ratio(n[1][0], n[0][0]);
    let mut rho1 = ratio(n[0][1], n[1][1]);
    let mut clipped = false;
    if rho0 + rho1 > MAX_TOTAL_NOISE {
        let s = MAX_TOTAL_NOISE / (rho0 + rho1);
        rho0 *= s;
        rho1 *= s;
        clipped = true;
    }
    // m₀ = (1 − ρ₀)n₀ + ρ₁n₁,  m₁ = ρ₀n₀ + (1 − ρ₁)n₁
    let (m0, m1) = (m[0] as f64, m[1] as f64);
    let det = 1.0 - rho0 - rho1;
    let total = m0 + m1;
    let n0 = (((1.0 - rho1) * m0 - rho1 * m1) / det).clamp(0.0, total);
    let n1 = (((1.0 - rho0) * m1 - rho0 * m0) / det).clamp(0.0, total);
    let mut pi0 = (rho1 * n1 / m0).clamp(0.0, MAX_TOTAL_NOISE);
    let mut pi1 = (rho0 * n0 / m1).clamp(0.0, MAX_TOTAL_NOISE);
    if pi0 + pi1 > MAX_TOTAL_NOISE {
        let s = MAX_TOTAL_NOISE / (pi0 + pi1);
        pi0 *= s;
        pi1 *= s;
        clipped = true;
    }
    Ok(NoiseEstimate {
        pi0,
        pi1,
        rho0,
        rho1,
        lower,
        upper,
        confident: n,
        clipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Surviving ids in input order.
    pub kept: Vec<u64>,
    /// Pruned ids, least confident first within each class (class 0 first).
    pub removed: Vec<u64>,
    /// Weight of each kept row, parallel to `kept`.
    pub weights: Vec<f64>,
}

impl PruneResult {
    /// The kept rows of `data`, carrying their new weights.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        data.select_ids(&self.kept)?.with_weights(&self.weights)
    }
}

/// Removes the `⌊π̂_y·m_y⌋` given-`y` rows with the lowest `P(y)` and weights
/// the rest by `1/(1 − π̂_y)`. Confidence ties go to the lower id.
pub fn rank_prune(data: &Dataset, probas: &[Vec<f64>], estimate: &NoiseEstimate) -> Result<PruneResult> {
    let given = given_labels(data)?;
    check_binary(probas, &given)?;
    let pi = estimate.pi();
    if let Some(p) = pi.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Error::InvalidSpec(format!("noise rate {p} outside [0, 1)")));
    }
    let ids = data.ids();
    let mut removed = Vec::new();
    for class in 0..2 {
        let mut rows: Vec<usize> = (0..given.len()).filter(|&i| given[i] == class).collect();
        let m = rows.len();
        let mut count = flip_count(pi[class], m);
        if m > 0 && count >= m {
            log::warn!("pruning {count} of {m} rows of class {class}; keeping one");
            count = m - 1;
        }
        rows.sort_by(|&a, &b| probas[a][class].total_cmp(&probas[b][class]).then(ids[a].cmp(&ids[b])));
        removed.extend(rows[..count].iter().map(|&i| ids[i]));
    }
    let gone: HashSet<u64> = removed.iter().copied().collect();
    let mut kept = Vec::new();
    let mut weights = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        if !gone.contains(&id) {
            kept.push(id);
            weights.push(1.0 / (1.0 - pi[given[i]]));
        }
    }
    Ok(PruneResult { kept, removed, weights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    /// Corrected hard label per row; `None` when undecidable.
    pub labels: Vec<Option<usize>>,
    /// Labeled rows whose corrected label differs from their given label.
    pub changed: Vec<u64>,
    pub spread: SpreadResult,
}

impl Correction {
    /// Share of given-`y` rows that were relabeled, per class.
    pub fn change_rates(&self, data: &Dataset) -> Vec<f64> {
        let changed: HashSet<u64> = self.changed.iter().copied().collect();
        let mut given = vec![0usize; data.num_classes()];
        let mut moved = vec![0usize; data.num_classes()];
        for (inst, rec) in data.iter() {
            if let Some(y) = rec.visible() {
                given[y] += 1;
                if changed.contains(&inst.id) {
                    moved[y] += 1;
                }
            }
        }
        given
            .iter()
            .zip(&moved)
            .map(|(&g, &m)| if g == 0 { 0.0 } else { m as f64 / g as f64 })
            .collect()
    }
}

/// Label spreading used as a corrector: with `alpha > 0` the graph may
/// overrule given labels, and the overruled rows are reported as changed.
pub fn spread_correct(data: &Dataset, spec: &SpreadSpec) -> Result<Correction> {
    let spread = label_spread(data, spec)?;
    let changed = data
        .iter()
        .zip(&spread.labels)
        .filter(|((_, rec), out)| matches!((rec.visible(), out), (Some(y), Some(o)) if y != *o))
        .map(|((inst, _), _)| inst.id)
        .collect();
    Ok(Correction {
        labels: spread.labels.clone(),
        changed,
        spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub agreement: f64,
    pub pi0_hat: f64,
    pub pi1_hat: f64,
    pub theta: f64,
    pub coupled: bool,
}

/// Compares the predictor's labels with the corrector's.
///
/// The two are coupled when the corrector finds (almost) no noise and
/// (almost) always agrees: `π̂₀ < θ`, `π̂₁ < θ` and agreement `> 1 − θ`.
/// Empty inputs agree vacuously.
pub fn coupling_report(predictor: &[usize], corrected: &[usize], pi: [f64; 2], theta: f64) -> Result<CouplingReport> {
    if predictor.len() != corrected.len() {
        return Err(Error::LengthMismatch {
            what: "corrected labels",
            expected: predictor.len(),
            got: corrected.len(),
        });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidSpec(format!("coupling theta {theta} not in [0, 1]")));
    }
    let agreement = if predictor.is_empty() {
        1.0
    } else {
        predictor.iter().zip(corrected).filter(|(a, b)| a == b).count() as f64 / predictor.len() as f64
    };
    Ok(CouplingReport {
        agreement,
        pi0_hat: pi[0],
        pi1_hat: pi[1],
        theta,
        coupled: pi[0] < theta && pi[1] < theta && agreement > 1.0 - theta,
    })
}

/// Hard labels of probability rows.
pub fn hard_labels(probas: &[Vec<f64>]) -> Vec<usize> {
    probas.iter().map(|r| argmax(r)).collect()
}
