//! Instances, the label lifecycle, and dataset containers.
//!
//! A [`Dataset`] pairs every [`Instance`] with a [`LabelRecord`]. The record
//! carries the hidden ground truth (used only for scoring) next to the label
//! state a learner is allowed to see. Datasets are immutable: every
//! transformation returns a new value and never touches `truth`.

mod csv_io;
mod split;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{read_csv, read_csv_from, write_csv, write_csv_to, CsvOptions};
pub use split::{anchor_labeled, split_dataset, Split, SplitSpec};

/// Dense feature vector with a dataset-unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub features: Vec<f64>,
}

impl Instance {
    pub fn new(id: u64, features: Vec<f64>) -> Self {
        Self { id, features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// What a learner is allowed to see about an instance's label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum LabelState {
    Unlabeled,
    Provided {
        class: usize,
    },
    SelfLabeled {
        class: usize,
        confidence: f64,
        round: u32,
    },
}

impl LabelState {
    /// Class visible to learners, if any.
    pub fn visible(&self) -> Option<usize> {
        match *self {
            LabelState::Unlabeled => None,
            LabelState::Provided { class } | LabelState::SelfLabeled { class, .. } => Some(class),
        }
    }

    pub fn is_provided(&self) -> bool {
        matches!(self, LabelState::Provided { .. })
    }

    pub fn is_self_labeled(&self) -> bool {
        matches!(self, LabelState::SelfLabeled { .. })
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        match *self {
            LabelState::Unlabeled => Ok(()),
            LabelState::Provided { class } => check_class(class, num_classes),
            LabelState::SelfLabeled {
                class,
                confidence,
                round,
            } => {
                check_class(class, num_classes)?;
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(Error::LabelState(format!(
                        "self-label confidence {confidence} outside [0, 1]"
                    )));
                }
                if round == 0 {
                    return Err(Error::LabelState("self-label round must be >= 1".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_class(class: usize, num_classes: usize) -> Result<()> {
    if class < num_classes {
        Ok(())
    } else {
        Err(Error::ClassOutOfRange { class, num_classes })
    }
}

/// Label lifecycle of one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    /// Ground truth. Never shown to learners and never rewritten.
    pub truth: Option<usize>,
    pub state: LabelState,
    pub weight: f64,
}

impl LabelRecord {
    pub fn provided(class: usize) -> Self {
        Self {
            truth: Some(class),
            state: LabelState::Provided { class },
            weight: 1.0,
        }
    }

    pub fn unlabeled(truth: Option<usize>) -> Self {
        Self {
            truth,
            state: LabelState::Unlabeled,
            weight: 1.0,
        }
    }

    pub fn visible(&self) -> Option<usize> {
        self.state.visible()
    }
}

/// Per-class counts broken down by label state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub total: usize,
    /// Count by ground-truth class.
    pub truth: Vec<usize>,
    pub provided: Vec<usize>,
    pub self_labeled: Vec<usize>,
    pub unlabeled: usize,
    /// Instances with no ground truth.
    pub truth_unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    instances: Vec<Instance>,
    labels: Vec<LabelRecord>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        instances: Vec<Instance>,
        labels: Vec<LabelRecord>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if instances.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: instances.len(),
                got: labels.len(),
            });
        }
        let dim = instances.first().map(Instance::dim);
        if dim == Some(0) {
            return Err(Error::InvalidSpec("feature dimension must be >= 1".into()));
        }
        let mut seen = HashSet::with_capacity(instances.len());
        for (row, inst) in instances.iter().enumerate() {
            if Some(inst.dim()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    got: inst.dim(),
                });
            }
            if let Some(column) = inst.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, column });
            }
            if !seen.insert(inst.id) {
                return Err(Error::InvalidSpec(format!("duplicate instance id {}", inst.id)));
            }
        }
        for rec in &labels {
            if let Some(t) = rec.truth {
                check_class(t, num_classes)?;
            }
            rec.state.validate(num_classes)?;
            if !(rec.weight.is_finite() && rec.weight >= 0.0) {
                return Err(Error::InvalidSpec(format!("invalid weight {}", rec.weight)));
            }
        }
        Ok(Self {
            instances,
            labels,
            num_classes,
        })
    }

    pub fn empty(num_classes: usize) -> Self {
        Self {
            instances: Vec::new(),
            labels: Vec::new(),
            num_classes: num_classes.max(2),
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Feature dimension, `None` for an empty dataset.
    pub fn dim(&self) -> Option<usize> {
        self.instances.first().map(Instance::dim)
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Instance, &LabelRecord)> {
        self.instances.iter().zip(&self.labels)
    }

    pub fn ids(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.id).collect()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.instances.iter().map(|i| i.features.as_slice()).collect()
    }

    pub fn visible_labels(&self) -> Vec<Option<usize>> {
        self.labels.iter().map(LabelRecord::visible).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.weight).collect()
    }

    pub fn truths(&self) -> Vec<Option<usize>> {
        self.labels.iter().map(|l| l.truth).collect()
    }

    /// Rows (by position) selected by `keep`.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            instances: rows.iter().map(|&r| self.instances[r].clone()).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Rows with the given ids, in the order given.
    pub fn select_ids(&self, ids: &[u64]) -> Result<Dataset> {
        let index: std::collections::HashMap<u64, usize> = self
            .instances
            .iter()
            .enumerate()
            .map(|(r, inst)| (inst.id, r))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown instance id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select(&rows))
    }

    /// Rows whose ids are in `ids`, in dataset order.
    pub fn subset_ids(&self, ids: &HashSet<u64>) -> Dataset {
        let rows: Vec<usize> = self
            .instances
            .iter()
            .enumerate()
            .filter(|(_, inst)| ids.contains(&inst.id))
            .map(|(r, _)| r)
            .collect();
        self.select(&rows)
    }

    /// Rows satisfying a predicate on the label record.
    pub fn filter_labels(&self, mut pred: impl FnMut(&LabelRecord) -> bool) -> Dataset {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| pred(&self.labels[r])).collect();
        self.select(&rows)
    }

    /// Same instances and truth with new label states.
    pub fn with_states(&self, states: Vec<LabelState>) -> Result<Dataset> {
        if states.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "label states",
                expected: self.len(),
                got: states.len(),
            });
        }
        let labels = self
            .labels
            .iter()
            .zip(states)
            .map(|(rec, state)| {
                state.validate(self.num_classes)?;
                Ok(LabelRecord { state, ..*rec })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            instances: self.instances.clone(),
            labels,
            num_classes: self.num_classes,
        })
    }

    /// Same instances and labels with new sample weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Dataset> {
        if weights.len() != self.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: self.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidSpec(format!("invalid weight {w}")));
        }
        let labels = self
            .labels
            .iter()
            .zip(weights)
            .map(|(rec, &weight)| LabelRecord { weight, ..*rec })
            .collect();
        Ok(Dataset {
            instances: self.instances.clone(),
            labels,
            num_classes: self.num_classes,
        })
    }

    /// Every record with its state reset to `Unlabeled` and weight 1.
    pub fn unlabeled(&self) -> Dataset {
        let labels = self
            .labels
            .iter()
            .map(|rec| LabelRecord::unlabeled(rec.truth))
            .collect();
        Dataset {
            instances: self.instances.clone(),
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Copy with every ground-truth field erased.
    pub fn without_truth(&self) -> Dataset {
        let labels = self
            .labels
            .iter()
            .map(|rec| LabelRecord {
                truth: None,
                ..*rec
            })
            .collect();
        Dataset {
            instances: self.instances.clone(),
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Concatenation of several datasets sharing a class count and dimension.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let num_classes = parts.first().map_or(2, |d| d.num_classes);
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for part in parts {
            if part.num_classes != num_classes {
                return Err(Error::InvalidSpec(format!(
                    "cannot concatenate datasets with {} and {} classes",
                    num_classes, part.num_classes
                )));
            }
            instances.extend_from_slice(&part.instances);
            labels.extend_from_slice(&part.labels);
        }
        Dataset::new(instances, labels, num_classes)
    }

    pub fn class_summary(&self) -> ClassSummary {
        class_summary(self)
    }
}

/// Per-class counts by label state.
pub fn class_summary(dataset: &Dataset) -> ClassSummary {
    let c = dataset.num_classes;
    let mut s = ClassSummary {
        total: dataset.len(),
        truth: vec![0; c],
        provided: vec![0; c],
        self_labeled: vec![0; c],
        unlabeled: 0,
        truth_unknown: 0,
    };
    for rec in &dataset.labels {
        match rec.truth {
            Some(t) => s.truth[t] += 1,
            None => s.truth_unknown += 1,
        }
        match rec.state {
            LabelState::Unlabeled => s.unlabeled += 1,
            LabelState::Provided { class } => s.provided[class] += 1,
            LabelState::SelfLabeled { class, .. } => s.self_labeled[class] += 1,
        }
    }
    s
}
