//! Supervised learners behind one classifier contract, plus graph-based
//! label spreading.
//!
//! [`fit`] trains a [`FittedModel`] (k-NN, CART tree, or random forest) on the
//! visible labels of a dataset with per-instance weights. [`label_spread`]
//! runs transductive spreading over a similarity graph and
//! [`SpreadModel`] extends its result to unseen points. Both implement
//! [`Predictor`], which is what the engine works against.

mod forest;
mod knn;
mod spread;
mod tree;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};

pub use forest::Forest;
pub use knn::KnnModel;
pub use spread::{
    label_spread, median_heuristic_gamma, Affinity, SpreadModel, SpreadResult, SpreadSpec,
};
pub use tree::{Tree, TreeParams};

/// Which classifier to train.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Knn {
        k: usize,
    },
    DecisionTree {
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "one")]
        min_leaf: usize,
    },
    RandomForest {
        n_trees: usize,
        #[serde(default)]
        max_depth: Option<usize>,
        /// Defaults to `round(sqrt(d))`.
        #[serde(default)]
        features_per_split: Option<usize>,
        #[serde(default = "one")]
        min_leaf: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> usize {
    1
}

impl ClassifierSpec {
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match *self {
            ClassifierSpec::Knn { k: 0 } => Err(Error::InvalidSpec("knn needs k >= 1".into())),
            ClassifierSpec::DecisionTree { min_leaf: 0, .. }
            | ClassifierSpec::RandomForest { min_leaf: 0, .. } => {
                Err(Error::InvalidSpec("min_leaf must be >= 1".into()))
            }
            ClassifierSpec::RandomForest { n_trees: 0, .. } => {
                Err(Error::InvalidSpec("random forest needs n_trees >= 1".into()))
            }
            ClassifierSpec::RandomForest {
                features_per_split: Some(m),
                ..
            } => match dim {
                Some(d) if m == 0 || m > d => Err(Error::InvalidSpec(format!(
                    "features_per_split {m} not in [1, {d}]"
                ))),
                _ if m == 0 => Err(Error::InvalidSpec("features_per_split must be >= 1".into())),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Same spec with a different forest seed (no-op for other kinds).
    pub fn reseeded(&self, new_seed: u64) -> Self {
        match *self {
            ClassifierSpec::RandomForest {
                n_trees,
                max_depth,
                features_per_split,
                min_leaf,
                ..
            } => ClassifierSpec::RandomForest {
                n_trees,
                max_depth,
                features_per_split,
                min_leaf,
                seed: new_seed,
            },
            other => other,
        }
    }
}

/// Anything that maps instances to class-probability rows.
pub trait Predictor: Send + Sync {
    fn num_classes(&self) -> usize;

    fn dim(&self) -> usize;

    /// One row per instance, each on the probability simplex.
    fn predict_proba(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>>;

    fn predict(&self, instances: &[Instance]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(instances)?.iter().map(|r| argmax(r)).collect())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Rows with a visible label, as training triples.
pub(crate) struct TrainRows<'a> {
    pub x: Vec<&'a [f64]>,
    pub y: Vec<usize>,
    pub w: Vec<f64>,
}

impl<'a> TrainRows<'a> {
    fn from_dataset(train: &'a Dataset, weights: &[f64]) -> Result<Self> {
        if weights.len() != train.len() {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: train.len(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidSpec(format!("invalid weight {w}")));
        }
        let mut rows = TrainRows {
            x: Vec::new(),
            y: Vec::new(),
            w: Vec::new(),
        };
        for ((inst, rec), &w) in train.iter().zip(weights) {
            if let Some(class) = rec.visible() {
                rows.x.push(&inst.features);
                rows.y.push(class);
                rows.w.push(w);
            }
        }
        if rows.y.is_empty() {
            return Err(Error::NoVisibleLabels);
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Params {
    Knn(KnnModel),
    Tree(Tree),
    Forest(Forest),
}

/// A trained classifier. Immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ClassifierSpec,
    dim: usize,
    num_classes: usize,
    params: Params,
}

/// Versioned on-disk form of a [`FittedModel`].
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: FittedModel,
}

const MODEL_FORMAT: &str = "sumer-model";
const MODEL_VERSION: u32 = 1;

/// Trains `spec` on the visibly labeled rows of `train`.
///
/// `weights` is parallel to `train` (rows without a visible label are
/// skipped). The forest is deterministic in its seed.
pub fn fit(spec: &ClassifierSpec, train: &Dataset, weights: &[f64]) -> Result<FittedModel> {
    spec.validate(train.dim())?;
    let rows = TrainRows::from_dataset(train, weights)?;
    let dim = train.dim().ok_or(Error::EmptyDataset)?;
    let c = train.num_classes();
    if rows.w.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidSpec("all training weights are zero".into()));
    }
    let params = match *spec {
        ClassifierSpec::Knn { k } => Params::Knn(KnnModel::fit(k, &rows, c)),
        ClassifierSpec::DecisionTree {
            max_depth,
            min_leaf,
        } => {
            let all: Vec<usize> = (0..rows.y.len()).collect();
            let params = TreeParams {
                max_depth,
                min_leaf,
                features_per_split: None,
            };
            Params::Tree(Tree::fit(&rows, &all, &rows.w, c, &params, None))
        }
        ClassifierSpec::RandomForest {
            n_trees,
            max_depth,
            features_per_split,
            min_leaf,
            seed,
        } => {
            let m = features_per_split.unwrap_or_else(|| ((dim as f64).sqrt().round() as usize).clamp(1, dim));
            let params = TreeParams {
                max_depth,
                min_leaf,
                features_per_split: Some(m),
            };
            Params::Forest(Forest::fit(&rows, c, n_trees, &params, seed))
        }
    };
    Ok(FittedModel {
        spec: *spec,
        dim,
        num_classes: c,
        params,
    })
}

impl FittedModel {
    fn check_dims(&self, rows: &[&[f64]]) -> Result<()> {
        match rows.iter().find(|r| r.len() != self.dim) {
            Some(r) => Err(Error::DimensionMismatch {
                expected: self.dim,
                got: r.len(),
            }),
            None => Ok(()),
        }
    }

    pub fn predict_proba_rows(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        self.check_dims(rows)?;
        Ok(match &self.params {
            Params::Knn(m) => rows.iter().map(|x| m.proba(x)).collect(),
            Params::Tree(t) => rows.iter().map(|x| t.leaf_distribution(x).to_vec()).collect(),
            Params::Forest(f) => rows.iter().map(|x| f.proba(x)).collect(),
        })
    }

    /// Hard labels computed from raw votes without going through probabilities.
    pub fn predict_rows(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        self.check_dims(rows)?;
        Ok(match &self.params {
            Params::Knn(m) => rows.iter().map(|x| m.vote(x)).collect(),
            Params::Tree(t) => rows.iter().map(|x| argmax(t.leaf_distribution(x))).collect(),
            Params::Forest(f) => rows.iter().map(|x| f.vote(x)).collect(),
        })
    }

    /// The individual trees of a forest model.
    pub fn trees(&self) -> Option<&[Tree]> {
        match &self.params {
            Params::Forest(f) => Some(f.trees()),
            Params::Tree(t) => Some(std::slice::from_ref(t)),
            Params::Knn(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.model)
    }
}

impl Predictor for FittedModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>> {
        let rows: Vec<&[f64]> = instances.iter().map(|i| i.features.as_slice()).collect();
        self.predict_proba_rows(&rows)
    }

    fn predict(&self, instances: &[Instance]) -> Result<Vec<usize>> {
        let rows: Vec<&[f64]> = instances.iter().map(|i| i.features.as_slice()).collect();
        self.predict_rows(&rows)
    }
}

/// Fraction of instances whose prediction matches ground truth.
pub fn accuracy(model: &dyn Predictor, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(data.instances())?;
    let hits = pred
        .iter()
        .zip(data.labels())
        .filter(|(p, rec)| rec.truth == Some(**p))
        .count();
    Ok(hits as f64 / data.len() as f64)
}
