//! Confidence gating for self-labels.
//!
//! A prediction's confidence is its top class probability, optionally
//! discounted by how well the training data covers the instance: a point far
//! from anything the model was trained on should not be trusted even when the
//! model is sure of itself.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabelState};
use crate::error::{Error, Result};
use crate::learners::{argmax, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    /// Neighbors averaged into `d_k`.
    pub k: usize,
    /// Quantile of in-training `d_k` values used as the half-confidence distance.
    pub quantile: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    /// Accept a self-label iff its combined confidence is at least `tau`.
    pub tau: f64,
    #[serde(default)]
    pub coverage: Option<CoverageSpec>,
}

impl GateSpec {
    pub fn new(tau: f64) -> Self {
        Self { tau, coverage: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidSpec(format!("gate tau {} not in [0, 1]", self.tau)));
        }
        if let Some(c) = self.coverage {
            if c.k == 0 {
                return Err(Error::InvalidSpec("coverage k must be >= 1".into()));
            }
            if !(c.quantile > 0.0 && c.quantile < 1.0) {
                return Err(Error::InvalidSpec(format!("coverage quantile {} not in (0, 1)", c.quantile)));
            }
        }
        Ok(())
    }
}

/// Coverage reference built from a training set.
///
/// `d_k(x)` is the mean Euclidean distance from `x` to its `k` nearest
/// training points. The reference `d*` is the `quantile` of `d_k` over the
/// training points themselves (each point excluding itself, nearest-rank
/// quantile). The score is `exp(−ln 2 · d_k(x) / d*)`: 1 on top of the data,
/// 1/2 at the reference distance, tending to 0 far away.
#[derive(Debug, Clone)]
pub struct CoverageModel {
    points: Vec<Vec<f64>>,
    k: usize,
    reference: f64,
}

impl CoverageModel {
    pub fn fit(training: &[&[f64]], spec: &CoverageSpec) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if spec.k >= training.len() {
            return Err(Error::InsufficientInstances {
                needed: spec.k + 1,
                available: training.len(),
            });
        }
        let points: Vec<Vec<f64>> = training.iter().map(|p| p.to_vec()).collect();
        let mut own: Vec<f64> = (0..points.len())
            .map(|i| mean_knn_distance(&points, &points[i], spec.k, Some(i)))
            .collect();
        own.sort_by(f64::total_cmp);
        let rank = ((spec.quantile * own.len() as f64).ceil() as usize).clamp(1, own.len());
        Ok(Self {
            points,
            k: spec.k,
            reference: own[rank - 1],
        })
    }

    /// The half-confidence distance `d*`.
    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        mean_knn_distance(&self.points, x, self.k, None)
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        score_at(self.distance(x), self.reference)
    }
}

fn score_at(d: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        (-std::f64::consts::LN_2 * d / reference).exp()
    } else if d == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn mean_knn_distance(points: &[Vec<f64>], x: &[f64], k: usize, skip: Option<usize>) -> f64 {
    let mut d: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, p)| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    d[..k].iter().sum::<f64>() / k as f64
}

/// Coverage score of one instance against `training`.
pub fn coverage_confidence(x: &[f64], training: &[&[f64]], spec: &CoverageSpec) -> Result<f64> {
    Ok(CoverageModel::fit(training, spec)?.score(x))
}

/// Result of gating one batch of candidates.
#[derive(Debug, Clone)]
pub struct SelfLabels {
    /// Accepted rows, carrying `SelfLabeled` states.
    pub accepted: Dataset,
    /// Ids of rejected rows, in input order.
    pub rejected: Vec<u64>,
}

/// Labels `window` with `model`, keeping predictions whose combined
/// confidence (top probability times coverage score, if any) reaches `tau`.
pub fn self_label(
    model: &dyn Predictor,
    window: &Dataset,
    gate: &GateSpec,
    coverage: Option<&CoverageModel>,
    round: u32,
) -> Result<SelfLabels> {
    gate.validate()?;
    if round == 0 {
        return Err(Error::LabelState("self-label round must be >= 1".into()));
    }
    if let Some(d) = window.dim() {
        if d != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: d,
            });
        }
    }
    let probas = model.predict_proba(window.instances())?;
    let mut keep = Vec::new();
    let mut states = Vec::new();
    let mut rejected = Vec::new();
    for (i, (inst, p)) in window.instances().iter().zip(&probas).enumerate() {
        let class = argmax(p);
        let cover = coverage.map_or(1.0, |c| c.score(&inst.features));
        let confidence = (p[class] * cover).clamp(0.0, 1.0);
        if confidence >= gate.tau {
            keep.push(i);
            states.push(LabelState::SelfLabeled {
                class,
                confidence,
                round,
            });
        } else {
            rejected.push(inst.id);
        }
    }
    let accepted = window.select(&keep).with_states(states)?;
    Ok(SelfLabels { accepted, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{fit, ClassifierSpec};
    use crate::synth::{gen_two_gaussians, GaussianSpec};

    #[test]
    fn coverage_reference_points() {
        let train: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let refs: Vec<&[f64]> = train.iter().map(Vec::as_slice).collect();
        let spec = CoverageSpec { k: 1, quantile: 0.5 };
        let m = CoverageModel::fit(&refs, &spec).unwrap();
        assert_eq!(m.reference(), 1.0);
        assert_eq!(m.score(&[3.0, 0.0]), 1.0);
        assert!((m.score(&[3.0, 1.0]) - 0.5).abs() < 1e-12);
        assert!(m.score(&[3.0, 5.0]) < m.score(&[3.0, 2.0]));
        assert!(coverage_confidence(&[0.0, 0.0], &[], &spec).is_err());
        assert!(CoverageModel::fit(&refs[..1], &spec).is_err());
    }

    #[test]
    fn tau_zero_accepts_everything() {
        let d = gen_two_gaussians(&GaussianSpec::isotropic(vec![-3.0, 0.0], vec![3.0, 0.0], 1.0, [30, 30]), 1)
            .unwrap();
        let model = fit(&ClassifierSpec::Knn { k: 5 }, &d, &d.weights()).unwrap();
        let window = d.unlabeled();
        let out = self_label(&model, &window, &GateSpec::new(0.0), None, 1).unwrap();
        assert_eq!(out.accepted.len(), 60);
        assert!(out.rejected.is_empty());
        assert_eq!(out.accepted.truths(), window.truths());
        assert!(out.accepted.labels().iter().all(|r| r.state.is_self_labeled()));
        let strict = self_label(&model, &window, &GateSpec::new(1.0), None, 1).unwrap();
        assert!(strict
            .accepted
            .labels()
            .iter()
            .all(|r| matches!(r.state, LabelState::SelfLabeled { confidence, .. } if confidence == 1.0)));
        assert_eq!(strict.accepted.len() + strict.rejected.len(), 60);
        assert!(self_label(&model, &window, &GateSpec::new(0.5), None, 0).is_err());
    }
}
