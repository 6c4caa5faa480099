//! Graph-based label spreading.
//!
//! With `W` the affinity matrix (zero diagonal), `S = D^{-1/2} W D^{-1/2}`
//! and `Y₀` the one-hot matrix of visible labels (zero rows elsewhere), the
//! iteration is
//!
//! ```text
//! F ← Λ S F + (I − Λ) Y₀
//! ```
//!
//! where `Λ` holds the clamp factor `alpha` on labeled rows and `1` on
//! unlabeled rows. `alpha = 0` pins labeled rows to their given class (label
//! propagation); `alpha > 0` lets the graph override a given label, which is
//! what label correction relies on. Rows in a connected component without
//! any labeled row have nothing to propagate and are reported as undecidable.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::sq_dist;
use super::{argmax, Predictor};
use crate::dataset::{Dataset, Instance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Affinity {
    /// `W_ij = exp(−γ‖x_i − x_j‖²)`, dropping weights below [`RBF_CUTOFF`];
    /// `γ` defaults to the median heuristic.
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// Symmetrized k-nearest-neighbor graph with unit weights.
    KnnGraph { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadSpec {
    pub affinity: Affinity,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_max_iter() -> usize {
    1000
}

fn default_tolerance() -> f64 {
    1e-6
}

impl Default for SpreadSpec {
    fn default() -> Self {
        Self {
            affinity: Affinity::Rbf { gamma: None },
            alpha: 0.0,
            max_iter: default_max_iter(),
            tolerance: default_tolerance(),
        }
    }
}

impl SpreadSpec {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidSpec(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidSpec("tolerance must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidSpec("max_iter must be >= 1".into()));
        }
        match self.affinity {
            Affinity::Rbf { gamma: Some(g) } if !(g > 0.0 && g.is_finite()) => {
                Err(Error::InvalidSpec(format!("rbf gamma {g} must be > 0")))
            }
            Affinity::KnnGraph { k: 0 } => Err(Error::InvalidSpec("knn graph needs k >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// `1 / (d · median pairwise squared distance)` over (at most) the first
/// 1000 points.
pub fn median_heuristic_gamma(points: &[&[f64]]) -> f64 {
    let m = points.len().min(1000);
    let d = points.first().map_or(1, |p| p.len()).max(1);
    let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in 0..i {
            dists.push(sq_dist(points[i], points[j]));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, med, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *med > 0.0 {
        1.0 / (d as f64 * *med)
    } else {
        1.0
    }
}

/// Output of [`label_spread`], one entry per input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadResult {
    pub ids: Vec<u64>,
    /// Unnormalized iterate `F` at termination.
    pub raw: Vec<Vec<f64>>,
    /// Row-normalized `F`; uniform for undecidable rows.
    pub soft: Vec<Vec<f64>>,
    /// Row argmax (ties to the lower class), `None` when undecidable.
    pub labels: Vec<Option<usize>>,
    /// Max of the normalized row; 0 for undecidable rows.
    pub confidence: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Kernel width actually used (RBF only).
    pub gamma: Option<f64>,
}

impl SpreadResult {
    pub fn undecidable(&self) -> Vec<u64> {
        self.ids
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.is_none())
            .map(|(id, _)| *id)
            .collect()
    }
}

/// RBF weights at or below this are treated as missing edges.
pub const RBF_CUTOFF: f64 = 1e-12;

/// Sparse row-major matrix.
struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }
}

fn build_affinity(points: &[&[f64]], affinity: Affinity, gamma: Option<f64>) -> Csr {
    let n = points.len();
    let rows: Vec<Vec<(usize, f64)>> = match affinity {
        Affinity::Rbf { .. } => {
            let g = gamma.expect("rbf gamma resolved before building the graph");
            (0..n)
                .into_par_iter()
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .filter_map(|j| {
                            let w = (-g * sq_dist(points[i], points[j])).exp();
                            (w > RBF_CUTOFF).then_some((j, w))
                        })
                        .collect()
                })
                .collect()
        }
        Affinity::KnnGraph { k } => {
            let k = k.min(n - 1);
            let nbrs: Vec<Vec<usize>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut d: Vec<(f64, usize)> = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (sq_dist(points[i], points[j]), j))
                        .collect();
                    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    d.into_iter().take(k).map(|(_, j)| j).collect()
                })
                .collect();
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
            for (i, list) in nbrs.iter().enumerate() {
                for &j in list {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
            adj.into_iter()
                .map(|mut list| {
                    list.sort_unstable();
                    list.dedup();
                    list.into_iter().map(|j| (j, 1.0)).collect()
                })
                .collect()
        }
    };
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    for row in rows {
        for (j, w) in row {
            cols.push(j);
            vals.push(w);
        }
        offsets.push(cols.len());
    }
    Csr {
        offsets,
        cols,
        vals,
    }
}

/// `D^{-1/2} W D^{-1/2}` in place; isolated rows stay empty.
fn normalize_symmetric(w: &mut Csr) {
    let n = w.offsets.len() - 1;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).1.iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        let (a, b) = (w.offsets[i], w.offsets[i + 1]);
        for e in a..b {
            w.vals[e] *= inv_sqrt[i] * inv_sqrt[w.cols[e]];
        }
    }
}

fn components(w: &Csr) -> Vec<usize> {
    let n = w.offsets.len() - 1;
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for &j in w.row(i).0 {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Runs label spreading over every row of `data`; visible labels seed `Y₀`.
pub fn label_spread(data: &Dataset, spec: &SpreadSpec) -> Result<SpreadResult> {
    spec.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientInstances {
            needed: 2,
            available: n,
        });
    }
    let c = data.num_classes();
    let seeds = data.visible_labels();
    if seeds.iter().all(Option::is_none) {
        return Err(Error::NoVisibleLabels);
    }
    let points = data.features();
    let gamma = match spec.affinity {
        Affinity::Rbf { gamma } => Some(gamma.unwrap_or_else(|| median_heuristic_gamma(&points))),
        Affinity::KnnGraph { .. } => None,
    };
    let mut s = build_affinity(&points, spec.affinity, gamma);
    let comp = components(&s);
    normalize_symmetric(&mut s);

    let mut y0 = vec![0.0; n * c];
    for (i, l) in seeds.iter().enumerate() {
        if let Some(k) = l {
            y0[i * c + k] = 1.0;
        }
    }
    let lambda: Vec<f64> = seeds
        .iter()
        .map(|l| if l.is_some() { spec.alpha } else { 1.0 })
        .collect();

    let mut f = y0.clone();
    let mut next = vec![0.0; n * c];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < spec.max_iter {
        next.par_chunks_mut(c).enumerate().for_each(|(i, out)| {
            out.iter_mut().for_each(|v| *v = 0.0);
            let (cols, vals) = s.row(i);
            for (&j, &w) in cols.iter().zip(vals) {
                let src = &f[j * c..(j + 1) * c];
                for k in 0..c {
                    out[k] += w * src[k];
                }
            }
            for k in 0..c {
                out[k] = lambda[i] * out[k] + (1.0 - lambda[i]) * y0[i * c + k];
            }
        });
        iterations += 1;
        let change = f
            .par_iter()
            .zip(next.par_iter())
            .map(|(a, b)| (a - b).abs())
            .reduce(|| 0.0, f64::max);
        if change < spec.tolerance {
            // keep `f`: its one-step residual is exactly `change`
            converged = true;
            break;
        }
        std::mem::swap(&mut f, &mut next);
    }

    let mut has_seed = vec![false; n];
    for (i, l) in seeds.iter().enumerate() {
        if l.is_some() {
            has_seed[comp[i]] = true;
        }
    }
    let raw: Vec<Vec<f64>> = f.chunks(c).map(<[f64]>::to_vec).collect();
    let mut soft = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut confidence = Vec::with_capacity(n);
    for (i, row) in raw.iter().enumerate() {
        let total: f64 = row.iter().map(|v| v.max(0.0)).sum();
        if !has_seed[comp[i]] || !(total > 0.0) {
            soft.push(vec![1.0 / c as f64; c]);
            labels.push(None);
            confidence.push(0.0);
        } else {
            let p: Vec<f64> = row.iter().map(|v| v.max(0.0) / total).collect();
            let k = argmax(&p);
            confidence.push(p[k]);
            labels.push(Some(k));
            soft.push(p);
        }
    }
    Ok(SpreadResult {
        ids: data.ids(),
        raw,
        soft,
        labels,
        confidence,
        iterations,
        converged,
        gamma,
    })
}

/// Spreading result extended to new points.
///
/// Rows that took part in the spread return their transductive distribution
/// (looked up by id). Other points get a kernel-weighted average of the
/// decidable training rows: RBF weights `exp(−γ(d² − d²_min))`, or a uniform
/// vote over the `k` nearest rows for the k-NN graph.
#[derive(Debug, Clone)]
pub struct SpreadModel {
    affinity: Affinity,
    gamma: Option<f64>,
    num_classes: usize,
    dim: usize,
    points: Vec<Vec<f64>>,
    soft: Vec<Vec<f64>>,
    by_id: HashMap<u64, (Vec<f64>, Vec<f64>)>,
}

impl SpreadModel {
    pub fn new(data: &Dataset, result: &SpreadResult, spec: &SpreadSpec) -> Result<Self> {
        let dim = data.dim().ok_or(Error::EmptyDataset)?;
        let mut points = Vec::new();
        let mut soft = Vec::new();
        let mut by_id = HashMap::with_capacity(data.len());
        for (i, inst) in data.instances().iter().enumerate() {
            by_id.insert(inst.id, (inst.features.clone(), result.soft[i].clone()));
            if result.labels[i].is_some() {
                points.push(inst.features.clone());
                soft.push(result.soft[i].clone());
            }
        }
        if points.is_empty() {
            return Err(Error::NoVisibleLabels);
        }
        Ok(Self {
            affinity: spec.affinity,
            gamma: result.gamma,
            num_classes: data.num_classes(),
            dim,
            points,
            soft,
            by_id,
        })
    }

    /// Spreads over `data` and wraps the result.
    pub fn fit(data: &Dataset, spec: &SpreadSpec) -> Result<(Self, SpreadResult)> {
        let result = label_spread(data, spec)?;
        Ok((Self::new(data, &result, spec)?, result))
    }

    fn induce(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = self.points.iter().map(|p| sq_dist(p, x)).collect();
        let mut acc = vec![0.0; self.num_classes];
        match self.affinity {
            Affinity::Rbf { .. } => {
                let g = self.gamma.unwrap_or(1.0);
                let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
                for (di, row) in d.iter().zip(&self.soft) {
                    let w = (-g * (di - dmin)).exp();
                    for (a, p) in acc.iter_mut().zip(row) {
                        *a += w * p;
                    }
                }
            }
            Affinity::KnnGraph { k } => {
                let mut order: Vec<usize> = (0..d.len()).collect();
                order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
                for &j in order.iter().take(k.max(1)) {
                    for (a, p) in acc.iter_mut().zip(&self.soft[j]) {
                        *a += p;
                    }
                }
            }
        }
        let total: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|v| *v /= total);
        acc
    }
}

impl Predictor for SpreadModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn predict_proba(&self, instances: &[Instance]) -> Result<Vec<Vec<f64>>> {
        if let Some(bad) = instances.iter().find(|i| i.dim() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: bad.dim(),
            });
        }
        Ok(instances
            .par_iter()
            .map(|inst| match self.by_id.get(&inst.id) {
                Some((x, row)) if *x == inst.features => row.clone(),
                _ => self.induce(&inst.features),
            })
            .collect())
    }
}
