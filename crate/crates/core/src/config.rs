//! TOML experiment configuration.
//!
//! ```toml
//! version = 1
//! seed = 7
//! strategies = ["static", "sum", "oracle"]
//!
//! [data]
//! kind = "two_moons"
//! n = 2000
//! noise_std = 0.1
//!
//! [split]
//! labeled_fraction = 0.01
//! holdout_fraction = 0.2
//!
//! [stream]
//! window_size = 100
//! n_windows = 8
//!
//! [learner.spreading]
//! affinity = { kind = "knn_graph", k = 10 }
//!
//! [gate]
//! tau = 0.7
//! ```
//!
//! Every random choice (data, split, noise, stream order, forest seeds,
//! cross-validation folds) is derived from the single top-level `seed`.
//! Unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SplitSpec;
use crate::engine::{GateSpec, LearnerSpec, RemediationMethod, RemediationSpec, Strategy};
use crate::error::{Error, Result};
use crate::synth::{GaussianSpec, NoiseKind};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub strategies: Vec<Strategy>,
    /// Where `sumer run` writes its artifacts; relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub data: DataSource,
    pub split: SplitConfig,
    /// Label noise applied to the labeled seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseKind>,
    #[serde(default, skip_serializing_if = "is_stream")]
    pub mode: Mode,
    /// Required in stream mode, absent in single-round mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<StreamConfig>,
    pub learner: LearnerSpec,
    pub gate: GateSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remediation: Option<RemediationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// How unlabeled data reaches the strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Windows arrive one at a time; strategies update after each.
    #[default]
    Stream,
    /// All unlabeled data is known up front and labeled in one pass. The
    /// trace has the initial row and one row for the pass.
    SingleRound,
}

fn is_stream(mode: &Mode) -> bool {
    *mode == Mode::Stream
}

/// Repeats the experiment once per labeled fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Labeled share of the non-holdout data, one run each.
    pub train_labeled_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    TwoMoons {
        n: usize,
        noise_std: f64,
    },
    TwoGaussians {
        #[serde(flatten)]
        spec: GaussianSpec,
    },
    /// Every row must carry a label (it becomes the hidden truth).
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
}

fn default_label_column() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of all rows given a label.
    pub labeled_fraction: f64,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Label the rows nearest this point (per class) instead of random ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

fn default_holdout() -> f64 {
    0.2
}

fn default_true() -> bool {
    true
}

impl SplitConfig {
    pub fn to_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            labeled_fraction: self.labeled_fraction,
            holdout_fraction: self.holdout_fraction,
            seed,
            stratified: self.stratified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub window_size: usize,
    pub n_windows: usize,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Reads a config file; a relative CSV data path is resolved against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let DataSource::Csv { path: csv, .. } = &mut cfg.data {
            if csv.is_relative() {
                if let Some(dir) = path.parent() {
                    *csv = dir.join(&*csv);
                }
            }
        }
        Ok(cfg)
    }

    /// This configuration with `fraction` of the non-holdout data labeled
    /// and no sweep.
    pub fn at_labeled_fraction(&self, fraction: f64) -> Self {
        let mut cfg = self.clone();
        cfg.split.labeled_fraction = fraction * (1.0 - cfg.split.holdout_fraction);
        cfg.sweep = None;
        cfg
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(e.to_string()))
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.split.to_spec(0).validate()?;
        match &self.data {
            DataSource::TwoMoons { n, noise_std } => {
                if *n < 2 {
                    return Err(invalid(format!("two_moons needs n >= 2, got {n}")));
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(invalid(format!("noise_std {noise_std} must be >= 0")));
                }
            }
            DataSource::TwoGaussians { spec } => {
                spec.validate()?;
            }
            DataSource::Csv { .. } => {}
        }
        if let Some(noise) = self.noise {
            match noise {
                NoiseKind::SymmetricFlip { rate } => check_rate("noise rate", rate)?,
                NoiseKind::ClassConditional { pi0, pi1 } => {
                    check_rate("noise pi0", pi0)?;
                    check_rate("noise pi1", pi1)?;
                }
            }
        }
        match (self.mode, &self.stream) {
            (Mode::Stream, None) => return Err(invalid("stream mode needs a [stream] section")),
            (Mode::Stream, Some(s)) if s.window_size == 0 => {
                return Err(invalid("stream.window_size must be >= 1"))
            }
            (Mode::SingleRound, Some(_)) => {
                return Err(invalid("single_round mode takes no [stream] section"))
            }
            _ => {}
        }
        if let Some(sweep) = &self.sweep {
            if sweep.train_labeled_fractions.is_empty() {
                return Err(invalid("sweep.train_labeled_fractions is empty"));
            }
            for &f in &sweep.train_labeled_fractions {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(invalid(format!("sweep fraction {f} not in (0, 1]")));
                }
                self.at_labeled_fraction(f).split.to_spec(0).validate()?;
            }
        }
        self.learner.validate()?;
        self.gate.validate()?;
        if self.strategies.is_empty() {
            return Err(invalid("at least one strategy is required"));
        }
        let mut seen = HashSet::new();
        for s in &self.strategies {
            if !seen.insert(s) {
                return Err(invalid(format!("strategy {s} listed twice")));
            }
        }
        let needs_remediation = self
            .strategies
            .iter()
            .any(|s| matches!(s, Strategy::Sumer | Strategy::StaticRemediated));
        match (&self.remediation, needs_remediation) {
            (None, true) => {
                return Err(invalid("strategies sumer / static_remediated need a [remediation] section"))
            }
            (Some(r), _) => {
                r.validate()?;
                match (r.method, &self.learner) {
                    (RemediationMethod::RankPrune, LearnerSpec::Spreading(_)) => {
                        return Err(invalid(
                            "rank_prune remediation needs a classifier learner; use spread_correct with spreading",
                        ))
                    }
                    (RemediationMethod::SpreadCorrect, LearnerSpec::Classifier(_)) => {
                        return Err(invalid(
                            "spread_correct remediation needs a spreading learner; use rank_prune with classifiers",
                        ))
                    }
                    _ => {}
                }
            }
            (None, false) => {}
        }
        Ok(())
    }
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(invalid(format!("{name} {r} not in [0, 1)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOONS: &str = r#"
version = 1
seed = 7
strategies = ["static", "sum", "oracle"]

[data]
kind = "two_moons"
n = 2000
noise_std = 0.1

[split]
labeled_fraction = 0.01

[stream]
window_size = 100
n_windows = 8

[learner.spreading]
affinity = { kind = "knn_graph", k = 10 }

[gate]
tau = 0.7
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(MOONS).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.split.holdout_fraction, 0.2);
        assert_eq!(cfg.strategies, vec![Strategy::Static, Strategy::Sum, Strategy::Oracle]);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MOONS.replace("tau = 0.7", "tau = 0.7\nthreshold = 0.9");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("threshold"), "{err}");
        let text = MOONS.replace("n = 2000", "n = 2000\nradius = 2");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn inconsistencies_fail_validation() {
        let cfg = ExperimentConfig::from_toml(&MOONS.replace("version = 1", "version = 2")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml(&MOONS.replace("\"oracle\"]", "\"sumer\"]")).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("remediation"));
        let text = MOONS.replace("\"oracle\"]", "\"sumer\"]") + "\n[remediation]\nmethod = \"rank_prune\"\n";
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("classifier"));
        let cfg = ExperimentConfig::from_toml(&MOONS.replace("\"sum\", \"oracle\"", "\"sum\", \"sum\"")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::from_toml(&MOONS.replace("tau = 0.7", "tau = 1.5")).unwrap();
        assert!(cfg.validate().is_err());
    }
}
