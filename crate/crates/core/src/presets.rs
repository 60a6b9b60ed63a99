//! Built-in experiment configs, embedded at compile time.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{parse_config, ExperimentPlan};

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub toml: &'static str,
}

macro_rules! preset {
    ($name:literal, $summary:literal) => {
        Preset {
            name: $name,
            summary: $summary,
            toml: include_str!(concat!("../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!(
        "fig1_control",
        "biased run vs. random-removal and random-addition controls"
    ),
    preset!(
        "fig4_er_sizes",
        "ER sizes 250..10000 at expected degree 25 and 50"
    ),
    preset!(
        "fig5_random_additions",
        "confirmation-bias removals with uniform additions"
    ),
    preset!("fig6_density", "ER(1000, p) density sweep"),
    preset!(
        "fig7_fixed_edges",
        "fixed-edge fractions 0..0.5 on ER(1000, deg 25)"
    ),
    preset!(
        "fig8_ba_fixed",
        "BA(1000, m=10) with 10% fixed edges, trajectories captured"
    ),
    preset!(
        "sbm_grid",
        "SBM block counts 2..20, split opinions, fixed removal count"
    ),
    preset!("bimodal_er", "bimodal innate opinions with varying spread"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

impl Preset {
    pub fn plan(&self) -> Result<ExperimentPlan> {
        parse_config(self.toml, Path::new(&format!("{}.toml", self.name)))
    }
}

/// Resolves a built-in preset by name.
pub fn load(name: &str) -> Result<ExperimentPlan> {
    find(name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown preset `{name}` (known: {})",
                names().join(", ")
            ))
        })?
        .plan()
}
