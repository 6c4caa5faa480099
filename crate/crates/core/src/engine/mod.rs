//! The self-updating loop.
//!
//! An experiment starts every strategy from the same labeled seed, feeds the
//! same stream windows to each, and scores each on the same holdout after
//! every window:
//!
//! * `static` trains once on the seed and never updates;
//! * `static_remediated` remediates the seed once, trains, never updates;
//! * `sum` self-labels each window (plus the backlog of earlier rejects),
//!   adds the accepted labels and retrains;
//! * `sumer` does the same but remediates the whole labeled pool (seed plus
//!   every accepted self-label) before each retrain;
//! * `oracle` adds every window with its true labels.
//!
//! Learners never see hidden truth: the engine reads truth only from a
//! separate table used for scoring and for the oracle.

mod gate;
mod trace;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, Mode};
use crate::dataset::{anchor_labeled, read_csv, split_dataset, CsvOptions, Dataset, LabelState};
use crate::error::{Error, Result};
use crate::learners::{self, accuracy, ClassifierSpec, Predictor, SpreadModel, SpreadSpec};
use crate::remediation::{
    coupling_report, cross_val_proba, estimate_noise_rates, hard_labels, rank_prune, spread_correct,
    CouplingReport, NoiseEstimate,
};
use crate::rng::{derive_index, derive_seed};
use crate::synth::{
    gen_two_gaussians, gen_two_moons, inject_noise, plan_stream, MoonsSpec, NoiseKind, NoiseSpec, StreamPlan,
};

pub use gate::{coverage_confidence, self_label, CoverageModel, CoverageSpec, GateSpec, SelfLabels};
pub use trace::{MetricsTrace, TraceRecord, TRACE_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Static,
    StaticRemediated,
    Sum,
    Sumer,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Static,
        Strategy::StaticRemediated,
        Strategy::Sum,
        Strategy::Sumer,
        Strategy::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::StaticRemediated => "static_remediated",
            Strategy::Sum => "sum",
            Strategy::Sumer => "sumer",
            Strategy::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The model family retrained each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Classifier(ClassifierSpec),
    /// Label spreading over the training rows (labeled and unlabeled), with
    /// new points predicted by kernel induction.
    Spreading(SpreadSpec),
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Classifier(c) => c.validate(None),
            LearnerSpec::Spreading(s) => s.validate(),
        }
    }

    /// Trains on `data`; `seed` replaces the forest seed.
    pub fn train(&self, data: &Dataset, seed: u64) -> Result<Box<dyn Predictor>> {
        Ok(match self {
            LearnerSpec::Classifier(spec) => Box::new(learners::fit(&spec.reseeded(seed), data, &data.weights())?),
            LearnerSpec::Spreading(spec) => Box::new(SpreadModel::fit(data, spec)?.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemediationMethod {
    /// Estimate noise rates from cross-validated probabilities, prune, reweight.
    RankPrune,
    /// Re-spread with `alpha > 0` and adopt the corrected labels.
    SpreadCorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemediationSpec {
    pub method: RemediationMethod,
    /// Clamp factor of the correcting spread.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Cross-validation folds for rank pruning.
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Classifier producing the cross-validated probabilities; defaults to
    /// the learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector: Option<ClassifierSpec>,
    /// Fit the corrector on the seed and the current round's self-labels
    /// only, never on self-labels from earlier rounds.
    #[serde(default = "default_true")]
    pub anti_coupling: bool,
    /// Threshold of the coupled flag.
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_alpha() -> f64 {
    0.9
}

fn default_folds() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_theta() -> f64 {
    0.02
}

impl RemediationSpec {
    pub fn new(method: RemediationMethod) -> Self {
        Self {
            method,
            alpha: default_alpha(),
            folds: default_folds(),
            corrector: None,
            anti_coupling: true,
            theta: default_theta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == RemediationMethod::SpreadCorrect && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("spread_correct needs alpha in (0, 1], got {}", self.alpha)));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("remediation folds must be >= 2, got {}", self.folds)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta {} not in [0, 1]", self.theta)));
        }
        if let Some(c) = &self.corrector {
            c.validate(None)?;
        }
        Ok(())
    }
}

/// Seeds, stream and holdout of one experiment, before any training.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Labeled seed (after noise injection), state `Provided`.
    pub seed_set: Dataset,
    /// Stream source, state `Unlabeled`.
    pub pool: Dataset,
    pub holdout: Dataset,
    pub plan: StreamPlan,
    /// Seed ids whose label was flipped.
    pub flipped: BTreeSet<u64>,
    /// Truth of seed and pool rows, for scoring and the oracle only.
    pub truth: HashMap<u64, usize>,
}

impl Prepared {
    /// Same experiment with the truth fields of seed and pool rows erased;
    /// only the separate truth table still knows them.
    pub fn erase_truth(&self) -> Prepared {
        Prepared {
            seed_set: self.seed_set.without_truth(),
            pool: self.pool.without_truth(),
            ..self.clone()
        }
    }
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let seed = derive_seed(cfg.seed, "data");
    match &cfg.data {
        DataSource::TwoMoons { n, noise_std } => gen_two_moons(&MoonsSpec {
            n: *n,
            noise_std: *noise_std,
            seed,
        }),
        DataSource::TwoGaussians { spec } => gen_two_gaussians(spec, seed),
        DataSource::Csv { path, label_column } => {
            let data = read_csv(
                path,
                &CsvOptions {
                    label_column: label_column.clone(),
                    num_classes: None,
                },
            )?;
            if let Some((inst, _)) = data.iter().find(|(_, r)| r.truth.is_none()) {
                return Err(Error::Config(format!(
                    "{}: row with id {} has no label; experiments need every row labeled",
                    path.display(),
                    inst.id
                )));
            }
            Ok(data)
        }
    }
}

/// Builds data, split, seed noise and stream plan, checking every
/// data-dependent constraint before anything is trained.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    if cfg.remediation.is_some_and(|r| r.method == RemediationMethod::RankPrune)
        && data.num_classes() != 2
    {
        return Err(Error::Config(format!(
            "rank_prune remediation is binary only; data has {} classes",
            data.num_classes()
        )));
    }
    if matches!(cfg.noise, Some(NoiseKind::ClassConditional { .. })) && data.num_classes() != 2 {
        return Err(Error::Config("class_conditional noise is binary only".into()));
    }
    let mut split = split_dataset(&data, &cfg.split.to_spec(derive_seed(cfg.seed, "split")))?;
    if let Some(anchor) = &cfg.split.anchor {
        split = anchor_labeled(split, anchor)?;
    }
    if let Some(stream) = cfg.stream {
        let needed = stream.window_size * stream.n_windows;
        if needed > split.unlabeled.len() {
            return Err(Error::Config(format!(
                "stream needs window_size * n_windows = {} * {} = {needed} instances but the unlabeled pool has {}",
                stream.window_size,
                stream.n_windows,
                split.unlabeled.len()
            )));
        }
    }
    let (seed_set, flipped) = match cfg.noise {
        Some(kind) => {
            let noisy = inject_noise(
                &split.labeled,
                &NoiseSpec {
                    kind,
                    seed: derive_seed(cfg.seed, "noise"),
                },
            )?;
            (noisy.dataset, noisy.flipped)
        }
        None => (split.labeled, BTreeSet::new()),
    };
    let stream_seed = derive_seed(cfg.seed, "stream");
    let plan = match (cfg.mode, cfg.stream) {
        (Mode::Stream, Some(stream)) => plan_stream(&split.unlabeled, stream.window_size, stream.n_windows, stream_seed)?,
        // The whole pool as one window.
        _ if split.unlabeled.is_empty() => StreamPlan {
            window_size: 0,
            windows: vec![Vec::new()],
            seed: stream_seed,
        },
        _ => plan_stream(&split.unlabeled, split.unlabeled.len(), 1, stream_seed)?,
    };
    let truth = seed_set
        .iter()
        .chain(split.unlabeled.iter())
        .filter_map(|(inst, rec)| rec.truth.map(|t| (inst.id, t)))
        .collect();
    Ok(Prepared {
        seed_set,
        pool: split.unlabeled,
        holdout: split.holdout,
        plan,
        flipped,
        truth,
    })
}

/// Runs every configured strategy over the configured stream.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsTrace> {
    let prepared = prepare(cfg)?;
    run_prepared(cfg, &prepared)
}

/// Runs `cfg` once per sweep point, in sweep order, returning each point's
/// labeled share of the non-holdout data with its trace. Without a sweep,
/// runs `cfg` as is.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<(f64, MetricsTrace)>> {
    cfg.validate()?;
    match &cfg.sweep {
        None => {
            let share = cfg.split.labeled_fraction / (1.0 - cfg.split.holdout_fraction);
            Ok(vec![(share, run_experiment(cfg)?)])
        }
        Some(sweep) => sweep
            .train_labeled_fractions
            .iter()
            .map(|&f| Ok((f, run_experiment(&cfg.at_labeled_fraction(f))?)))
            .collect(),
    }
}

/// Runs the strategies of `cfg` on already prepared data.
pub fn run_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<MetricsTrace> {
    cfg.validate()?;
    let windows: Vec<Dataset> = (0..prepared.plan.len())
        .map(|i| Ok(prepared.plan.window(&prepared.pool, i)?.without_truth()))
        .collect::<Result<_>>()?;
    let seed_set = prepared.seed_set.without_truth();
    let ctx = Context {
        cfg,
        seed_set: &seed_set,
        holdout: &prepared.holdout,
        truth: &prepared.truth,
    };
    let lanes: Vec<Vec<TraceRecord>> = cfg
        .strategies
        .par_iter()
        .map(|&s| match cfg.mode {
            Mode::Stream => ctx.run_lane(s, &windows),
            Mode::SingleRound => ctx.run_single(s, &windows[0]),
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for w in 0..=windows.len() {
        for lane in &lanes {
            records.push(lane[w].clone());
        }
    }
    Ok(MetricsTrace {
        config: serde_json::to_value(cfg)?,
        records,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    seed_set: &'a Dataset,
    holdout: &'a Dataset,
    truth: &'a HashMap<u64, usize>,
}

/// Outcome of one remediation pass.
struct Remediated {
    training: Dataset,
    pi: Option<[f64; 2]>,
    noise: Option<NoiseEstimate>,
    coupling: Option<CouplingReport>,
    skipped: Option<String>,
}

fn blank(window: usize, strategy: Strategy, seen: usize, holdout_acc: f64) -> TraceRecord {
    TraceRecord {
        window,
        strategy,
        seen,
        holdout_acc,
        accepted: 0,
        rejected: 0,
        selflabel_precision: None,
        pi0_hat: None,
        pi1_hat: None,
        coupling_agreement: None,
        coupled: None,
        backlog_accepted: 0,
        noise: None,
        coupling: None,
        remediation_skipped: None,
    }
}

fn note_remediation(rec: &mut TraceRecord, rem: &Remediated) {
    rec.pi0_hat = rem.pi.map(|p| p[0]);
    rec.pi1_hat = rem.pi.map(|p| p[1]);
    rec.coupling_agreement = rem.coupling.map(|c| c.agreement);
    rec.coupled = rem.coupling.map(|c| c.coupled);
    rec.noise = rem.noise;
    rec.coupling = rem.coupling;
    rec.remediation_skipped = rem.skipped.clone();
}

/// Errors that mean "not enough signal to remediate this round" rather than
/// a broken run.
fn is_soft(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateThresholds { .. }
            | Error::EmptyClass(_)
            | Error::InsufficientInstances { .. }
            | Error::NoVisibleLabels
    )
}

impl Context<'_> {
    fn train_seed(&self, round: usize) -> u64 {
        derive_index(derive_seed(self.cfg.seed, "learner"), round as u64)
    }

    fn train(&self, data: &Dataset, round: usize) -> Result<Box<dyn Predictor>> {
        self.cfg.learner.train(data, self.train_seed(round))
    }

    fn score(&self, model: &dyn Predictor) -> Result<f64> {
        accuracy(model, self.holdout)
    }

    /// The round-0 model and its trace row.
    fn initial(&self, strategy: Strategy) -> Result<(Box<dyn Predictor>, TraceRecord)> {
        let (model, rem) = match strategy {
            Strategy::StaticRemediated => {
                let predictor = self.train(self.seed_set, 0)?;
                let empty = Dataset::empty(self.seed_set.num_classes());
                let rem = self.remediate(predictor.as_ref(), self.seed_set, &empty, 0)?;
                (self.train(&rem.training, 0)?, Some(rem))
            }
            _ => (self.train(self.seed_set, 0)?, None),
        };
        let mut rec = blank(0, strategy, 0, self.score(model.as_ref())?);
        if let Some(rem) = &rem {
            note_remediation(&mut rec, rem);
        }
        Ok((model, rec))
    }

    /// `window` with its true labels, as `Provided`.
    fn with_truth(&self, window: &Dataset) -> Result<Dataset> {
        let states = window
            .ids()
            .iter()
            .map(|id| {
                self.truth
                    .get(id)
                    .map(|&class| LabelState::Provided { class })
                    .ok_or_else(|| Error::LabelState(format!("oracle: no truth for instance {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        window.with_states(states)
    }

    fn run_lane(&self, strategy: Strategy, windows: &[Dataset]) -> Result<Vec<TraceRecord>> {
        let mut out = Vec::with_capacity(windows.len() + 1);
        let (mut model, first) = self.initial(strategy)?;
        out.push(first);

        let c = self.seed_set.num_classes();
        let mut accepted = Dataset::empty(c);
        let mut backlog = Dataset::empty(c);
        let mut oracle = Dataset::empty(c);
        let mut training = self.seed_set.clone();
        let mut seen = 0;
        for (i, window) in windows.iter().enumerate() {
            let round = i + 1;
            seen += window.len();
            let mut rec = blank(round, strategy, seen, 0.0);
            match strategy {
                Strategy::Static | Strategy::StaticRemediated => {
                    rec.rejected = window.len();
                }
                Strategy::Oracle => {
                    oracle = Dataset::concat(&[&oracle, &self.with_truth(window)?])?;
                    training = Dataset::concat(&[self.seed_set, &oracle])?;
                    model = self.train(&training, round)?;
                    rec.accepted = window.len();
                }
                Strategy::Sum | Strategy::Sumer => {
                    let candidates = Dataset::concat(&[window, &backlog])?;
                    let coverage = match self.cfg.gate.coverage {
                        Some(spec) => {
                            let labeled = training.filter_labels(|r| r.visible().is_some());
                            Some(CoverageModel::fit(&labeled.features(), &spec)?)
                        }
                        None => None,
                    };
                    let fresh = self_label(model.as_ref(), &candidates, &self.cfg.gate, coverage.as_ref(), round as u32)?;
                    let window_ids: HashSet<u64> = window.ids().into_iter().collect();
                    let in_window = fresh.accepted.ids().iter().filter(|id| window_ids.contains(id)).count();
                    rec.accepted = in_window;
                    rec.rejected = window.len() - in_window;
                    rec.backlog_accepted = fresh.accepted.len() - in_window;
                    rec.selflabel_precision = self.precision(&fresh.accepted);
                    backlog = candidates.select_ids(&fresh.rejected)?;
                    accepted = Dataset::concat(&[&accepted, &fresh.accepted])?;
                    let pool = Dataset::concat(&[self.seed_set, &accepted])?;
                    training = if strategy == Strategy::Sum {
                        Dataset::concat(&[&pool, &backlog])?
                    } else {
                        let rem = self.remediate(model.as_ref(), &pool, &backlog, round)?;
                        note_remediation(&mut rec, &rem);
                        rem.training
                    };
                    model = self.train(&training, round)?;
                }
            }
            rec.holdout_acc = self.score(model.as_ref())?;
            out.push(rec);
        }
        Ok(out)
    }

    /// One pass over `unlabeled`, all of it known up front. The pass reuses
    /// the initial model's learner seed, so differences from `static` come
    /// from the added labels rather than from the learner's randomness.
    fn run_single(&self, strategy: Strategy, unlabeled: &Dataset) -> Result<Vec<TraceRecord>> {
        let (model, first) = self.initial(strategy)?;
        let n = unlabeled.len();
        let mut rec = blank(1, strategy, n, first.holdout_acc);
        match strategy {
            Strategy::Static | Strategy::StaticRemediated => rec.rejected = n,
            Strategy::Oracle => {
                let all = Dataset::concat(&[self.seed_set, &self.with_truth(unlabeled)?])?;
                rec.holdout_acc = self.score(self.train(&all, 0)?.as_ref())?;
                rec.accepted = n;
            }
            Strategy::Sum | Strategy::Sumer => {
                let data = if strategy == Strategy::Sum {
                    Dataset::concat(&[self.seed_set, unlabeled])?
                } else {
                    let rem = self.remediate(model.as_ref(), self.seed_set, unlabeled, 1)?;
                    note_remediation(&mut rec, &rem);
                    rem.training
                };
                let pass = single_round_sum(&data, &self.cfg.learner, &self.cfg.gate, Some(self.holdout), self.train_seed(0))?;
                rec.holdout_acc = pass.holdout_accuracy.expect("holdout was given");
                rec.accepted = pass.self_labeled;
                rec.rejected = n - pass.self_labeled;
                rec.selflabel_precision = self.precision(&pass.labeled.filter_labels(|r| r.state.is_self_labeled()));
            }
        }
        Ok(vec![first, rec])
    }

    fn precision(&self, labeled: &Dataset) -> Option<f64> {
        if labeled.is_empty() {
            return None;
        }
        let hits = labeled
            .iter()
            .filter(|(inst, rec)| rec.visible().is_some() && self.truth.get(&inst.id).copied() == rec.visible())
            .count();
        Some(hits as f64 / labeled.len() as f64)
    }

    /// Remediates the labeled `pool`; `backlog` rows ride along unlabeled.
    /// Rows self-labeled before `round` are excluded from the corrector's
    /// training labels when anti-coupling is on. Coupling compares the
    /// corrector's labels with `predictor`'s on the pool.
    fn remediate(
        &self,
        predictor: &dyn Predictor,
        pool: &Dataset,
        backlog: &Dataset,
        round: usize,
    ) -> Result<Remediated> {
        let spec = self.cfg.remediation.expect("validated: remediation present");
        let attempt = match spec.method {
            RemediationMethod::RankPrune => self.rank_prune_pool(&spec, predictor, pool, round),
            RemediationMethod::SpreadCorrect => self.spread_correct_pool(&spec, predictor, pool, backlog, round),
        };
        match attempt {
            Ok(mut rem) => {
                rem.training = Dataset::concat(&[&rem.training, backlog])?;
                Ok(rem)
            }
            Err(e) if is_soft(&e) => {
                log::debug!("round {round}: remediation skipped: {e}");
                Ok(Remediated {
                    training: Dataset::concat(&[pool, backlog])?,
                    pi: None,
                    noise: None,
                    coupling: None,
                    skipped: Some(e.to_string()),
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Whether a pool row is the corrector's to learn from.
    fn corrector_sees(&self, spec: &RemediationSpec, state: &LabelState, round: usize) -> bool {
        match state {
            LabelState::Provided { .. } => true,
            LabelState::SelfLabeled { round: r, .. } => !spec.anti_coupling || *r as usize >= round,
            LabelState::Unlabeled => false,
        }
    }

    fn rank_prune_pool(
        &self,
        spec: &RemediationSpec,
        predictor: &dyn Predictor,
        pool: &Dataset,
        round: usize,
    ) -> Result<Remediated> {
        let corrector = match (spec.corrector, &self.cfg.learner) {
            (Some(c), _) => c,
            (None, LearnerSpec::Classifier(c)) => *c,
            (None, LearnerSpec::Spreading(_)) => unreachable!("validated: rank_prune needs a classifier"),
        };
        let seed = derive_index(derive_seed(self.cfg.seed, "remediation"), round as u64);
        let (inside, outside): (Vec<usize>, Vec<usize>) =
            (0..pool.len()).partition(|&i| self.corrector_sees(spec, &pool.labels()[i].state, round));
        let train = pool.select(&inside);
        let probas = cross_val_proba(&corrector, &train, &vec![1.0; train.len()], spec.folds, seed)?;
        let given: Vec<usize> = train.visible_labels().iter().map(|l| l.expect("pool rows are labeled")).collect();
        let estimate = estimate_noise_rates(&probas, &given)?;
        let mut training = rank_prune(&train, &probas, &estimate)?.apply(&train)?;
        let predicted = predictor.predict(train.instances())?;
        let coupling = coupling_report(&predicted, &hard_labels(&probas), estimate.pi(), spec.theta)?;
        if !outside.is_empty() {
            // Earlier self-labels are reviewed by the same corrector, out of
            // sample, with their own noise estimate.
            let earlier = pool.select(&outside);
            let model = learners::fit(&corrector.reseeded(seed), &train, &vec![1.0; train.len()])?;
            let probas = model.predict_proba_rows(&earlier.features())?;
            let given: Vec<usize> = earlier.visible_labels().iter().map(|l| l.expect("pool rows are labeled")).collect();
            let reviewed = match estimate_noise_rates(&probas, &given) {
                Ok(est) => rank_prune(&earlier, &probas, &est)?.apply(&earlier)?,
                Err(e) if is_soft(&e) => {
                    log::debug!("round {round}: earlier self-labels kept as is: {e}");
                    earlier
                }
                Err(e) => return Err(e),
            };
            training = Dataset::concat(&[&training, &reviewed])?;
        }
        Ok(Remediated {
            training,
            pi: Some(estimate.pi()),
            noise: Some(estimate),
            coupling: Some(coupling),
            skipped: None,
        })
    }

    fn spread_correct_pool(
        &self,
        spec: &RemediationSpec,
        predictor: &dyn Predictor,
        pool: &Dataset,
        backlog: &Dataset,
        round: usize,
    ) -> Result<Remediated> {
        let LearnerSpec::Spreading(learner) = self.cfg.learner else {
            unreachable!("validated: spread_correct needs spreading")
        };
        let states: Vec<LabelState> = pool
            .labels()
            .iter()
            .map(|r| {
                if self.corrector_sees(spec, &r.state, round) {
                    r.state
                } else {
                    LabelState::Unlabeled
                }
            })
            .collect();
        let graph = Dataset::concat(&[&pool.with_states(states)?, backlog])?;
        let correction = spread_correct(&graph, &learner.with_alpha(spec.alpha))?;
        let given: Vec<usize> = pool.visible_labels().iter().map(|l| l.expect("pool rows are labeled")).collect();
        let inside: Vec<bool> = pool.labels().iter().map(|r| self.corrector_sees(spec, &r.state, round)).collect();
        let corrected: Vec<usize> = given
            .iter()
            .zip(&correction.labels)
            .map(|(&g, c)| c.unwrap_or(g))
            .collect();
        let mut moved = [0usize; 2];
        let mut count = [0usize; 2];
        for ((&g, &c), _) in given.iter().zip(&corrected).zip(&inside).filter(|(_, &seen)| seen) {
            if g < 2 {
                count[g] += 1;
                moved[g] += usize::from(g != c);
            }
        }
        let rate = |y: usize| if count[y] == 0 { 0.0 } else { moved[y] as f64 / count[y] as f64 };
        let pi = [rate(0), rate(1)];
        let rows: Vec<usize> = (0..pool.len()).filter(|&i| inside[i]).collect();
        let predicted = predictor.predict(pool.select(&rows).instances())?;
        let corrected_inside: Vec<usize> = rows.iter().map(|&i| corrected[i]).collect();
        let coupling = coupling_report(&predicted, &corrected_inside, pi, spec.theta)?;
        let relabeled: Vec<LabelState> = pool
            .labels()
            .iter()
            .zip(&corrected)
            .map(|(r, &class)| match r.state {
                LabelState::SelfLabeled { confidence, round, .. } => LabelState::SelfLabeled {
                    class,
                    confidence,
                    round,
                },
                _ => LabelState::Provided { class },
            })
            .collect();
        Ok(Remediated {
            training: pool.with_states(relabeled)?,
            pi: Some(pi),
            noise: None,
            coupling: Some(coupling),
            skipped: None,
        })
    }
}

/// Outcome of [`single_round_sum`].
#[derive(Debug, Clone)]
pub struct SingleRound {
    /// Input rows with accepted self-labels filled in.
    pub labeled: Dataset,
    /// Share of all input rows whose final visible label equals the truth
    /// (rows left unlabeled count as misses).
    pub accuracy: f64,
    pub holdout_accuracy: Option<f64>,
    pub self_labeled: usize,
}

/// One round of self-updating when all unlabeled data is known up front.
///
/// Spreading labels the unlabeled rows transductively; a classifier is fit
/// on the labeled rows, self-labels the rest and is refit. Either way, labels
/// below the gate stay unlabeled.
pub fn single_round_sum(
    data: &Dataset,
    learner: &LearnerSpec,
    gate: &GateSpec,
    holdout: Option<&Dataset>,
    seed: u64,
) -> Result<SingleRound> {
    gate.validate()?;
    let visible = data.visible_labels();
    if visible.iter().all(Option::is_none) {
        return Err(Error::NoVisibleLabels);
    }
    let unlabeled_rows: Vec<usize> = (0..data.len()).filter(|&i| visible[i].is_none()).collect();
    let (labeled, model): (Dataset, Box<dyn Predictor>) = match learner {
        LearnerSpec::Spreading(spec) => {
            if unlabeled_rows.is_empty() {
                (data.clone(), learner.train(data, seed)?)
            } else {
                let (model, result) = SpreadModel::fit(data, spec)?;
                let states = data
                    .labels()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| match (r.state, result.labels[i]) {
                        (LabelState::Unlabeled, Some(class)) if result.confidence[i] >= gate.tau => {
                            LabelState::SelfLabeled {
                                class,
                                confidence: result.confidence[i].clamp(0.0, 1.0),
                                round: 1,
                            }
                        }
                        (state, _) => state,
                    })
                    .collect();
                (data.with_states(states)?, Box::new(model))
            }
        }
        LearnerSpec::Classifier(_) => {
            let first = learner.train(data, seed)?;
            if unlabeled_rows.is_empty() {
                (data.clone(), first)
            } else {
                let fresh = self_label(first.as_ref(), &data.select(&unlabeled_rows), gate, None, 1)?;
                let by_id: HashMap<u64, LabelState> = fresh
                    .accepted
                    .iter()
                    .map(|(inst, rec)| (inst.id, rec.state))
                    .collect();
                let states = data
                    .iter()
                    .map(|(inst, rec)| by_id.get(&inst.id).copied().unwrap_or(rec.state))
                    .collect();
                let labeled = data.with_states(states)?;
                let model = learner.train(&labeled, seed)?;
                (labeled, model)
            }
        }
    };
    let hits = labeled
        .labels()
        .iter()
        .filter(|r| r.visible().is_some() && r.visible() == r.truth)
        .count();
    let self_labeled = labeled.labels().iter().filter(|r| r.state.is_self_labeled()).count();
    Ok(SingleRound {
        accuracy: hits as f64 / data.len().max(1) as f64,
        holdout_accuracy: holdout.map(|h| accuracy(model.as_ref(), h)).transpose()?,
        labeled,
        self_labeled,
    })
}
