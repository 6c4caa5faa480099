use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Tree, TreeParams};
use super::{argmax, TrainRows};
use crate::rng;

/// Bagged CART trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    num_classes: usize,
}

impl Forest {
    /// Tree `t` draws from substream `derive_index(seed, t)`, so the result
    /// does not depend on how trees are scheduled across threads.
    pub(crate) fn fit(
        rows: &TrainRows<'_>,
        num_classes: usize,
        n_trees: usize,
        params: &TreeParams,
        seed: u64,
    ) -> Forest {
        let n = rows.y.len();
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::rng_from_seed(rng::derive_index(seed, t as u64));
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                let sample: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
                let weights: Vec<f64> = rows
                    .w
                    .iter()
                    .zip(&counts)
                    .map(|(w, &k)| w * f64::from(k))
                    .collect();
                Tree::fit(rows, &sample, &weights, num_classes, params, Some(&mut rng))
            })
            .collect();
        Forest { trees, num_classes }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    fn summed(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_distribution(x)) {
                *a += p;
            }
        }
        acc
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        let k = self.trees.len() as f64;
        let mut p = self.summed(x);
        p.iter_mut().for_each(|v| *v /= k);
        p
    }

    pub(crate) fn vote(&self, x: &[f64]) -> usize {
        argmax(&self.summed(x))
    }
}
