//! Built-in experiment catalog, one config file per entry.

use crate::config::{parse, ExperimentConfig};

macro_rules! entry {
    ($name:literal) => {
        ($name, include_str!(concat!("../configs/", $name, ".toml")))
    };
}

pub const ENTRIES: &[(&str, &str)] = &[
    entry!("smooth-convergence-p2"),
    entry!("smooth-convergence-p3"),
    entry!("annulus-hitting-p3"),
    entry!("running-payoff"),
    entry!("oracle-agreement"),
    entry!("regularity-punctured-p2"),
    entry!("regularity-punctured-p3"),
    entry!("porous-cantor"),
    entry!("alternating-convergence"),
    entry!("spencer-trajectories"),
];

pub fn source(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn entries() -> Vec<ExperimentConfig> {
    ENTRIES
        .iter()
        .map(|(name, text)| parse(text).unwrap_or_else(|e| panic!("catalog entry {name} is invalid: {e}")))
        .collect()
}
