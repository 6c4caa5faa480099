use serde::{Deserialize, Serialize};

use super::{argmax, TrainRows};

/// Brute-force k-nearest-neighbor classifier with weighted votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    num_classes: usize,
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    weights: Vec<f64>,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KnnModel {
    pub(crate) fn fit(k: usize, rows: &TrainRows<'_>, num_classes: usize) -> Self {
        Self {
            k,
            num_classes,
            points: rows.x.iter().map(|x| x.to_vec()).collect(),
            labels: rows.y.clone(),
            weights: rows.w.clone(),
        }
    }

    /// Rows of the `k` nearest training points (ties to the lower row).
    fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist(p, x), i))
            .collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    fn votes(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.neighbors(x);
        let mut votes = vec![0.0; self.num_classes];
        for &i in &nb {
            votes[self.labels[i]] += self.weights[i];
        }
        if votes.iter().sum::<f64>() <= 0.0 {
            // every neighbor carries zero weight: fall back to plain counts
            for &i in &nb {
                votes[self.labels[i]] += 1.0;
            }
        }
        votes
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        let mut v = self.votes(x);
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= total);
        v
    }

    pub(crate) fn vote(&self, x: &[f64]) -> usize {
        argmax(&self.votes(x))
    }
}
