use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelRecord, LabelState};
use crate::error::{Error, Result};
use crate::rng;

/// How to carve a dataset into labeled seed, unlabeled pool, and holdout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub labeled_fraction: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
}

fn default_true() -> bool {
    true
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let lf = self.labeled_fraction;
        let hf = self.holdout_fraction;
        if !(lf > 0.0 && lf <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "labeled_fraction {lf} must be in (0, 1]"
            )));
        }
        if !(hf > 0.0 && hf < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "holdout_fraction {hf} must be in (0, 1)"
            )));
        }
        if lf + hf > 1.0 + 1e-12 {
            return Err(Error::InvalidSpec(format!(
                "labeled_fraction + holdout_fraction = {} exceeds 1",
                lf + hf
            )));
        }
        Ok(())
    }
}

/// The three disjoint parts of a split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// State `Provided` equal to truth.
    pub labeled: Dataset,
    /// State `Unlabeled`; truth kept for scoring only.
    pub unlabeled: Dataset,
    /// Truth kept; never shown to learners.
    pub holdout: Dataset,
}

pub fn split_dataset(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_holdout = (spec.holdout_fraction * n as f64).round() as usize;
    let n_labeled = ((spec.labeled_fraction * n as f64).round() as usize).max(1);
    if n_holdout + n_labeled > n {
        return Err(Error::InsufficientInstances {
            needed: n_holdout + n_labeled,
            available: n,
        });
    }

    let mut rng = rng::substream(spec.seed, "split");
    // role per row: 0 = holdout, 1 = labeled, 2 = unlabeled
    let mut role = vec![2u8; n];
    if spec.stratified {
        let c = dataset.num_classes();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (row, rec) in dataset.labels().iter().enumerate() {
            let class = rec
                .truth
                .or_else(|| rec.visible())
                .ok_or_else(|| Error::InvalidSpec(format!("row {row} has no class to stratify on")))?;
            by_class[class].push(row);
        }
        if let Some(empty) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(empty));
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let holdout_quota = apportion(n_holdout, &sizes, false);
        let rest: Vec<usize> = sizes.iter().zip(&holdout_quota).map(|(s, h)| s - h).collect();
        let labeled_quota = apportion(n_labeled, &rest, n_labeled >= c);
        for (class, rows) in by_class.iter_mut().enumerate() {
            rows.shuffle(&mut rng);
            let h = holdout_quota[class];
            let l = labeled_quota[class];
            for &r in &rows[..h] {
                role[r] = 0;
            }
            for &r in &rows[h..h + l] {
                role[r] = 1;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        for &r in &rows[..n_holdout] {
            role[r] = 0;
        }
        for &r in &rows[n_holdout..n_holdout + n_labeled] {
            role[r] = 1;
        }
    }

    let pick = |which: u8| -> Vec<usize> { (0..n).filter(|&r| role[r] == which).collect() };
    let holdout = dataset.select(&pick(0)).unlabeled();
    let unlabeled = dataset.select(&pick(2)).unlabeled();
    let labeled_raw = dataset.select(&pick(1));
    let states = labeled_raw
        .labels()
        .iter()
        .map(|rec: &LabelRecord| {
            rec.truth
                .or_else(|| rec.visible())
                .map(|class| LabelState::Provided { class })
                .ok_or_else(|| Error::InvalidSpec("labeled row without a class".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let labeled = labeled_raw.with_states(states)?;
    Ok(Split {
        labeled,
        unlabeled,
        holdout,
    })
}

/// Re-picks the labeled rows of `split`: for each class, the same number of
/// non-holdout rows, chosen nearest to `anchor` (ties to the lower id)
/// instead of at random. Used to build deliberately unrepresentative seeds.
pub fn anchor_labeled(split: Split, anchor: &[f64]) -> Result<Split> {
    let candidates = Dataset::concat(&[&split.labeled, &split.unlabeled])?;
    if let Some(d) = candidates.dim() {
        if d != anchor.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: anchor.len(),
            });
        }
    }
    let mut quota = vec![0usize; candidates.num_classes()];
    for rec in split.labeled.labels() {
        if let Some(c) = rec.visible() {
            quota[c] += 1;
        }
    }
    let distance = |x: &[f64]| x.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let ids = candidates.ids();
    order.sort_by(|&a, &b| {
        distance(&candidates.instances()[a].features)
            .total_cmp(&distance(&candidates.instances()[b].features))
            .then(ids[a].cmp(&ids[b]))
    });
    let class_of = |row: usize| -> Result<usize> {
        let rec = &candidates.labels()[row];
        rec.truth
            .or_else(|| rec.visible())
            .ok_or_else(|| Error::InvalidSpec(format!("row {row} has no class")))
    };
    let mut labeled = Vec::new();
    for row in order {
        let class = class_of(row)?;
        if quota[class] > 0 {
            quota[class] -= 1;
            labeled.push(row);
        }
    }
    labeled.sort_unstable();
    let states = labeled
        .iter()
        .map(|&r| Ok(LabelState::Provided { class: class_of(r)? }))
        .collect::<Result<Vec<_>>>()?;
    let rest: Vec<usize> = (0..candidates.len()).filter(|r| labeled.binary_search(r).is_err()).collect();
    Ok(Split {
        labeled: candidates.select(&labeled).with_states(states)?,
        unlabeled: candidates.select(&rest).unlabeled(),
        holdout: split.holdout,
    })
}

/// Splits `total` across buckets proportionally to `sizes` (largest
/// remainder, ties to the lower bucket), never exceeding a bucket's size.
fn apportion(total: usize, sizes: &[usize], at_least_one: bool) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes
        .iter()
        .map(|&s| {
            let q = (total * s) / sum;
            if at_least_one && s > 0 {
                q.max(1)
            } else {
                q
            }
            .min(s)
        })
        .collect();
    let mut assigned: usize = quota.iter().sum();
    while assigned < total {
        // largest remaining fractional share with spare capacity
        let best = (0..sizes.len())
            .filter(|&i| quota[i] < sizes[i])
            .max_by(|&a, &b| {
                let ra = (total * sizes[a]) as f64 / sum as f64 - quota[a] as f64;
                let rb = (total * sizes[b]) as f64 / sum as f64 - quota[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            });
        match best {
            Some(i) => {
                quota[i] += 1;
                assigned += 1;
            }
            None => break,
        }
    }
    while assigned > total {
        let i = (0..sizes.len())
            .filter(|&i| quota[i] > usize::from(at_least_one))
            .max_by_key(|&i| (quota[i], std::cmp::Reverse(i)))
            .expect("quota exceeds total only when some bucket holds more than one");
        quota[i] -= 1;
        assigned -= 1;
    }
    quota
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Instance;
    use std::collections::HashSet;

    fn balanced(n: usize) -> Dataset {
        let inst = (0..n)
            .map(|i| Instance::new(i as u64, vec![i as f64, 0.5]))
            .collect();
        let labels = (0..n).map(|i| LabelRecord::provided(i % 2)).collect();
        Dataset::new(inst, labels, 2).unwrap()
    }

    fn spec(lf: f64, hf: f64, seed: u64) -> SplitSpec {
        SplitSpec {
            labeled_fraction: lf,
            holdout_fraction: hf,
            seed,
            stratified: true,
        }
    }

    #[test]
    fn twenty_labeled_of_a_thousand() {
        let s = split_dataset(&balanced(1000), &spec(0.02, 0.2, 1)).unwrap();
        assert_eq!(s.labeled.len(), 20);
        assert_eq!(s.unlabeled.len(), 780);
        assert_eq!(s.holdout.len(), 200);
        assert_eq!(s.labeled.class_summary().provided, vec![10, 10]);
        let all: HashSet<u64> = s
            .labeled
            .ids()
            .into_iter()
            .chain(s.unlabeled.ids())
            .chain(s.holdout.ids())
            .collect();
        assert_eq!(all.len(), 1000);
        assert!(s.unlabeled.labels().iter().all(|l| l.visible().is_none() && l.truth.is_some()));
        assert!(s.holdout.labels().iter().all(|l| l.truth.is_some()));
    }

    #[test]
    fn unstratified_split_has_same_sizes() {
        let mut sp = spec(0.02, 0.2, 1);
        sp.stratified = false;
        let s = split_dataset(&balanced(1000), &sp).unwrap();
        assert_eq!((s.labeled.len(), s.unlabeled.len(), s.holdout.len()), (20, 780, 200));
    }

    #[test]
    fn rejects_bad_fractions() {
        let d = balanced(10);
        assert!(split_dataset(&d, &spec(1.0, 0.0, 0)).is_err());
        assert!(split_dataset(&d, &spec(0.9, 0.2, 0)).is_err());
        assert!(split_dataset(&d, &spec(0.0, 0.2, 0)).is_err());
        assert!(matches!(
            split_dataset(&Dataset::empty(2), &spec(0.5, 0.2, 0)),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn stratification_needs_every_class() {
        let inst = (0..10).map(|i| Instance::new(i, vec![0.0])).collect();
        let labels = (0..10).map(|_| LabelRecord::provided(0)).collect();
        let d = Dataset::new(inst, labels, 2).unwrap();
        assert!(matches!(
            split_dataset(&d, &spec(0.2, 0.2, 0)),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn same_seed_same_partition() {
        let d = balanced(500);
        let a = split_dataset(&d, &spec(0.1, 0.2, 42)).unwrap();
        let b = split_dataset(&d, &spec(0.1, 0.2, 42)).unwrap();
        let c = split_dataset(&d, &spec(0.1, 0.2, 43)).unwrap();
        assert_eq!(a.labeled.ids(), b.labeled.ids());
        assert_eq!(a.holdout.ids(), b.holdout.ids());
        assert_ne!(a.labeled.ids(), c.labeled.ids());
    }

    #[test]
    fn apportion_hits_total() {
        assert_eq!(apportion(20, &[3000, 1000], false), vec![15, 5]);
        assert_eq!(apportion(3, &[5, 5, 5], true), vec![1, 1, 1]);
        assert_eq!(apportion(2, &[100, 1], true), vec![1, 1]);
        assert_eq!(apportion(7, &[1, 1], false), vec![1, 1]);
    }
}
