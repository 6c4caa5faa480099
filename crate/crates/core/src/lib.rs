//! Self-updating classifiers with label-noise remediation.
//!
//! A deployed model keeps retraining on its own confident predictions over a
//! stream of unlabeled data (SUM), optionally with an error-remediation pass
//! that estimates label-noise rates and prunes or corrects suspect labels
//! before every retrain (SUMER).
//!
//! * [`dataset`]: instances, label lifecycle, splits, CSV format
//! * [`synth`]: synthetic generators, noise injection, stream plans
//! * [`learners`]: k-NN, CART, random forest, label spreading
//! * [`remediation`]: noise-rate estimation, rank pruning, spreading correction, coupling
//! * [`engine`]: confidence gating, self-labeling, the streaming experiment loop
//! * [`config`]: TOML experiment configuration

pub mod config;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod learners;
pub mod remediation;
pub mod rng;
pub mod synth;

pub use config::ExperimentConfig;
pub use dataset::{Dataset, Instance, LabelRecord, LabelState};
pub use engine::{run_experiment, run_sweep, MetricsTrace, Strategy};
pub use error::{Error, Result};
