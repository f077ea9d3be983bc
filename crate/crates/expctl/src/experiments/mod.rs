//! The experiment registry.
//!
//! Each experiment writes its CSV and JSON files through an [`Emitter`] and
//! computes its metrics and checks from those files alone, so a summary can
//! always be recomputed from an output directory.

use std::path::Path;

use crate::config::{Config, Schema};
use crate::error::{Error, Result};
use crate::output::Emitter;
use crate::record::Outcome;

pub mod common;
pub mod mismatch;
pub mod misspec;
pub mod reward;
pub mod seqexp;
pub mod shared;
pub mod zoo;

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub out: &'a mut Emitter,
}

pub struct Experiment {
    pub name: &'static str,
    /// Figure kinds the output feeds, comma separated.
    pub figures: &'static str,
    pub schema: fn() -> Schema,
    pub run: fn(&mut Ctx) -> Result<()>,
    pub outcome: fn(&Path, &Config) -> Result<Outcome>,
}

pub const DENSITY: &str = "density-overlay";
pub const HEATMAP: &str = "heatmap-grid";
pub const LENGTHS: &str = "length-histogram";

pub static REGISTRY: [Experiment; 9] = [
    Experiment {
        name: reward::NAME,
        figures: DENSITY,
        schema: reward::schema,
        run: reward::run,
        outcome: reward::outcome,
    },
    Experiment {
        name: shared::NAME,
        figures: DENSITY,
        schema: shared::schema,
        run: shared::run,
        outcome: shared::outcome,
    },
    Experiment {
        name: mismatch::POE,
        figures: DENSITY,
        schema: mismatch::poe_schema,
        run: mismatch::run_poe,
        outcome: mismatch::outcome_poe,
    },
    Experiment {
        name: mismatch::GEOMETRIC,
        figures: DENSITY,
        schema: mismatch::geometric_schema,
        run: mismatch::run_geometric,
        outcome: mismatch::outcome_geometric,
    },
    Experiment {
        name: misspec::TOY,
        figures: "heatmap-grid,density-overlay",
        schema: misspec::toy_schema,
        run: misspec::run_toy,
        outcome: misspec::outcome_toy,
    },
    Experiment {
        name: misspec::FIX,
        figures: DENSITY,
        schema: misspec::fix_schema,
        run: misspec::run_fix,
        outcome: misspec::outcome_fix,
    },
    Experiment { name: zoo::NAME, figures: DENSITY, schema: zoo::schema, run: zoo::run, outcome: zoo::outcome },
    Experiment {
        name: seqexp::BIAS,
        figures: LENGTHS,
        schema: seqexp::bias_schema,
        run: seqexp::run_bias,
        outcome: seqexp::outcome_bias,
    },
    Experiment {
        name: seqexp::MISSPEC,
        figures: LENGTHS,
        schema: seqexp::misspec_schema,
        run: seqexp::run_misspec,
        outcome: seqexp::outcome_misspec,
    },
];

pub fn find(name: &str) -> Result<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name).ok_or_else(|| Error::UnknownExperiment(name.to_string()))
}

pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|e| e.name).collect()
}
