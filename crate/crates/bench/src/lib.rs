//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use sumer::synth::{gen_two_moons, MoonsSpec};
use sumer::{Dataset, ExperimentConfig, LabelState};

/// Two-moons rows with every `every`-th row provided.
pub fn moons(n: usize, every: usize) -> Dataset {
    let data = gen_two_moons(&MoonsSpec { n, noise_std: 0.1, seed: 1 }).expect("valid moons spec");
    let states = data
        .labels()
        .iter()
        .enumerate()
        .map(|(i, r)| match r.truth {
            Some(class) if i % every == 0 => LabelState::Provided { class },
            _ => LabelState::Unlabeled,
        })
        .collect();
    data.with_states(states).expect("same length")
}

/// A bundled experiment config.
pub fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_file(&path).expect("bundled config parses")
}
