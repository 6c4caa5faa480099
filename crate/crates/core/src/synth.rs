//! Synthetic data, label-noise injection, and stream planning.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Instance, LabelRecord, LabelState};
use crate::error::{Error, Result};
use crate::rng;

/// One class of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianClass {
    pub mean: Vec<f64>,
    /// Row-major `d x d` covariance.
    pub covariance: Vec<Vec<f64>>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub classes: Vec<GaussianClass>,
}

impl GaussianSpec {
    /// Two isotropic classes with the given means and counts.
    pub fn isotropic(mean0: Vec<f64>, mean1: Vec<f64>, std: f64, counts: [usize; 2]) -> Self {
        let d = mean0.len();
        let cov = (0..d)
            .map(|i| (0..d).map(|j| if i == j { std * std } else { 0.0 }).collect())
            .collect::<Vec<Vec<f64>>>();
        Self {
            classes: vec![
                GaussianClass {
                    mean: mean0,
                    covariance: cov.clone(),
                    count: counts[0],
                },
                GaussianClass {
                    mean: mean1,
                    covariance: cov,
                    count: counts[1],
                },
            ],
        }
    }

    pub(crate) fn validate(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        if self.classes.len() < 2 {
            return Err(Error::InvalidSpec("need at least two Gaussian classes".into()));
        }
        let d = self.classes[0].mean.len();
        if d == 0 {
            return Err(Error::InvalidSpec("mean must have dimension >= 1".into()));
        }
        self.classes
            .iter()
            .enumerate()
            .map(|(k, class)| {
                if class.count == 0 {
                    return Err(Error::InvalidSpec(format!("class {k} has count 0")));
                }
                if class.mean.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: class.mean.len(),
                    });
                }
                if class.mean.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec(format!("class {k} mean is not finite")));
                }
                let cov = &class.covariance;
                if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidSpec(format!(
                        "class {k} covariance must be {d}x{d}"
                    )));
                }
                for i in 0..d {
                    for j in 0..i {
                        if (cov[i][j] - cov[j][i]).abs() > 1e-12 * (1.0 + cov[i][j].abs()) {
                            return Err(Error::NotPositiveDefinite(k));
                        }
                    }
                }
                cholesky(cov).ok_or(Error::NotPositiveDefinite(k))
            })
            .collect()
    }
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive definite.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if !(v > 0.0 && v.is_finite()) {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Samples each class from its multivariate normal. Ids are assigned class by class.
pub fn gen_two_gaussians(spec: &GaussianSpec, seed: u64) -> Result<Dataset> {
    let factors = spec.validate()?;
    let mut rng = rng::substream(seed, "gaussians");
    let mut instances = Vec::new();
    let mut labels = Vec::new();
    for (class, (c, l)) in spec.classes.iter().zip(&factors).enumerate() {
        let d = c.mean.len();
        for _ in 0..c.count {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let x = (0..d)
                .map(|i| c.mean[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>())
                .collect();
            instances.push(Instance::new(instances.len() as u64, x));
            labels.push(LabelRecord::provided(class));
        }
    }
    Dataset::new(instances, labels, spec.classes.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoonsSpec {
    pub n: usize,
    pub noise_std: f64,
    pub seed: u64,
}

/// Two interleaving half circles of unit radius.
///
/// Class 0 lies on the upper arc `(cos t, sin t)`; class 1 on the lower arc
/// `(1 - cos t, 0.5 - sin t)`, for `t` evenly spaced in `[0, π]`. Class 0 takes
/// the extra point when `n` is odd. Isotropic Gaussian jitter is added last.
pub fn gen_two_moons(spec: &MoonsSpec) -> Result<Dataset> {
    if spec.n < 2 {
        return Err(Error::InvalidSpec(format!("two moons needs n >= 2, got {}", spec.n)));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::InvalidSpec(format!("invalid noise_std {}", spec.noise_std)));
    }
    let n0 = spec.n.div_ceil(2);
    let n1 = spec.n - n0;
    let mut rng = rng::substream(spec.seed, "moons");
    let mut instances = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for (class, count) in [(0usize, n0), (1usize, n1)] {
        for i in 0..count {
            let t = if count > 1 {
                std::f64::consts::PI * i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let (x, y) = moon_point(class, t);
            let (jx, jy) = if spec.noise_std > 0.0 {
                let zx: f64 = StandardNormal.sample(&mut rng);
                let zy: f64 = StandardNormal.sample(&mut rng);
                (spec.noise_std * zx, spec.noise_std * zy)
            } else {
                (0.0, 0.0)
            };
            instances.push(Instance::new(instances.len() as u64, vec![x + jx, y + jy]));
            labels.push(LabelRecord::provided(class));
        }
    }
    Dataset::new(instances, labels, 2)
}

/// Noise-free position on the arc of `class` at angle `t ∈ [0, π]`.
pub fn moon_point(class: usize, t: f64) -> (f64, f64) {
    if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    /// Flip `⌊rate·n⌋` labels, each to a uniformly chosen different class.
    SymmetricFlip { rate: f64 },
    /// Binary only: flip `⌊pi_y·n_y⌋` labels of each class `y`.
    ClassConditional { pi0: f64, pi1: f64 },
}

/// Serialized flat, e.g. `{ kind = "symmetric_flip", rate = 0.2, seed = 1 }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNoise", into = "RawNoise")]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    kind: RawNoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pi1: Option<f64>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawNoiseKind {
    SymmetricFlip,
    ClassConditional,
}

impl TryFrom<RawNoise> for NoiseSpec {
    type Error = String;

    fn try_from(raw: RawNoise) -> Result<Self, String> {
        let kind = match (raw.kind, raw.rate, raw.pi0, raw.pi1) {
            (RawNoiseKind::SymmetricFlip, Some(rate), None, None) => NoiseKind::SymmetricFlip { rate },
            (RawNoiseKind::ClassConditional, None, Some(pi0), Some(pi1)) => {
                NoiseKind::ClassConditional { pi0, pi1 }
            }
            (RawNoiseKind::SymmetricFlip, ..) => {
                return Err("symmetric_flip noise takes exactly `rate`".into())
            }
            (RawNoiseKind::ClassConditional, ..) => {
                return Err("class_conditional noise takes exactly `pi0` and `pi1`".into())
            }
        };
        Ok(NoiseSpec {
            kind,
            seed: raw.seed,
        })
    }
}

impl From<NoiseSpec> for RawNoise {
    fn from(spec: NoiseSpec) -> Self {
        match spec.kind {
            NoiseKind::SymmetricFlip { rate } => RawNoise {
                kind: RawNoiseKind::SymmetricFlip,
                rate: Some(rate),
                pi0: None,
                pi1: None,
                seed: spec.seed,
            },
            NoiseKind::ClassConditional { pi0, pi1 } => RawNoise {
                kind: RawNoiseKind::ClassConditional,
                rate: None,
                pi0: Some(pi0),
                pi1: Some(pi1),
                seed: spec.seed,
            },
        }
    }
}

/// Noisy copy of a dataset together with the ids whose label was flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Noisy {
    pub dataset: Dataset,
    pub flipped: BTreeSet<u64>,
}

/// `⌊rate·n⌋`, tolerant of representation error in the product.
pub fn flip_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64) + 1e-9).floor() as usize
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("noise rate {name} = {r} not in [0, 1)")))
    }
}

pub fn inject_noise(dataset: &Dataset, spec: &NoiseSpec) -> Result<Noisy> {
    let c = dataset.num_classes();
    match spec.kind {
        NoiseKind::SymmetricFlip { rate } => {
            check_rate("rate", rate)?;
            let given = provided_classes(dataset)?;
            let n = dataset.len();
            let mut rng = rng::substream(spec.seed, "noise");
            let rows = index::sample(&mut rng, n, flip_count(rate, n)).into_vec();
            flip_rows(dataset, &given, rows, |rng, old| {
                let k = rng.random_range(0..c - 1);
                if k >= old {
                    k + 1
                } else {
                    k
                }
            }, &mut rng)
        }
        NoiseKind::ClassConditional { pi0, pi1 } => {
            check_rate("pi0", pi0)?;
            check_rate("pi1", pi1)?;
            if c != 2 {
                return Err(Error::NotBinary(c));
            }
            let strata = stratum_sizes(dataset)?;
            inject_class_counts(
                dataset,
                [flip_count(pi0, strata[0]), flip_count(pi1, strata[1])],
                spec.seed,
            )
        }
    }
}

/// Binary noise with exact per-class flip counts (class taken from truth,
/// falling back to the provided label).
pub fn inject_class_counts(dataset: &Dataset, flips: [usize; 2], seed: u64) -> Result<Noisy> {
    if dataset.num_classes() != 2 {
        return Err(Error::NotBinary(dataset.num_classes()));
    }
    let given = provided_classes(dataset)?;
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (row, rec) in dataset.labels().iter().enumerate() {
        by_class[rec.truth.unwrap_or(given[row])].push(row);
    }
    let mut rng = rng::substream(seed, "noise");
    let mut rows = Vec::new();
    for (class, members) in by_class.iter().enumerate() {
        if flips[class] > members.len() {
            return Err(Error::InsufficientInstances {
                needed: flips[class],
                available: members.len(),
            });
        }
        let picked = index::sample(&mut rng, members.len(), flips[class]);
        rows.extend(picked.into_iter().map(|i| members[i]));
    }
    flip_rows(dataset, &given, rows, |_, old| 1 - old, &mut rng)
}

fn stratum_sizes(dataset: &Dataset) -> Result<[usize; 2]> {
    let given = provided_classes(dataset)?;
    let mut sizes = [0usize; 2];
    for (row, rec) in dataset.labels().iter().enumerate() {
        sizes[rec.truth.unwrap_or(given[row])] += 1;
    }
    Ok(sizes)
}

fn provided_classes(dataset: &Dataset) -> Result<Vec<usize>> {
    dataset
        .labels()
        .iter()
        .enumerate()
        .map(|(row, rec)| match rec.state {
            LabelState::Provided { class } => Ok(class),
            other => Err(Error::LabelState(format!(
                "noise can only be injected into provided labels (row {row} is {other:?})"
            ))),
        })
        .collect()
}

fn flip_rows(
    dataset: &Dataset,
    given: &[usize],
    mut rows: Vec<usize>,
    mut new_class: impl FnMut(&mut rng::Rng, usize) -> usize,
    rng: &mut rng::Rng,
) -> Result<Noisy> {
    rows.sort_unstable();
    let mut states: Vec<LabelState> = dataset.labels().iter().map(|r| r.state).collect();
    let mut flipped = BTreeSet::new();
    for row in rows {
        let class = new_class(rng, given[row]);
        debug_assert_ne!(class, given[row]);
        states[row] = LabelState::Provided { class };
        flipped.insert(dataset.instances()[row].id);
    }
    Ok(Noisy {
        dataset: dataset.with_states(states)?,
        flipped,
    })
}

/// Class sizes and per-class flip counts that realize a binary contaminated
/// mixture: of `given[y]` rows labeled `y`, `round(pi[y]·given[y])` truly
/// belong to the other class.
///
/// Returns `(true_class_sizes, flips_per_true_class)` for use with
/// [`inject_class_counts`].
pub fn contamination_plan(pi: [f64; 2], given: [usize; 2]) -> Result<([usize; 2], [usize; 2])> {
    check_rate("pi0", pi[0])?;
    check_rate("pi1", pi[1])?;
    let contaminants = [
        (pi[0] * given[0] as f64).round() as usize,
        (pi[1] * given[1] as f64).round() as usize,
    ];
    // true class 0 = clean label-0 rows + label-1 contaminants, and vice versa
    let sizes = [
        given[0] - contaminants[0] + contaminants[1],
        given[1] - contaminants[1] + contaminants[0],
    ];
    Ok((sizes, [contaminants[1], contaminants[0]]))
}

/// Disjoint arrival windows over a source pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPlan {
    pub window_size: usize,
    pub windows: Vec<Vec<u64>>,
    pub seed: u64,
}

impl StreamPlan {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Window `i` of `source`, in arrival order.
    pub fn window(&self, source: &Dataset, i: usize) -> Result<Dataset> {
        source.select_ids(&self.windows[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: StreamPlan = serde_json::from_str(text)?;
        let mut seen = BTreeSet::new();
        for id in plan.windows.iter().flatten() {
            if !seen.insert(*id) {
                return Err(Error::InvalidSpec(format!("id {id} appears in two windows")));
            }
        }
        Ok(plan)
    }
}

/// Samples `n_windows` disjoint windows of `window_size` ids without replacement.
pub fn plan_stream(
    source: &Dataset,
    window_size: usize,
    n_windows: usize,
    seed: u64,
) -> Result<StreamPlan> {
    if window_size == 0 {
        return Err(Error::InvalidSpec("window_size must be >= 1".into()));
    }
    let needed = window_size * n_windows;
    if needed > source.len() {
        return Err(Error::InsufficientInstances {
            needed,
            available: source.len(),
        });
    }
    let mut ids = source.ids();
    let mut rng = rng::substream(seed, "stream");
    ids.shuffle(&mut rng);
    let windows = ids
        .chunks(window_size)
        .take(n_windows)
        .map(<[u64]>::to_vec)
        .collect();
    Ok(StreamPlan {
        window_size,
        windows,
        seed,
    })
}
