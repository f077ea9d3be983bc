//! Deliberate mismatch: a ratio-rule annotator fit with a shifted or a
//! geometric model process converges to a closed-form blend of the
//! pretrained model and the implicit density.

use std::path::Path;

use prefdens::density::{bimodal_target, LogDensity};
use prefdens::learners::{theoretical_optimum, OptimumKind};
use prefdens::pbde::{Annotator, PbdeSpec};

use super::common::{exact_batch, exact_keys, fit_tabular, grid, prior_keys, prior_on, tag, tv_files, write_density};
use super::Ctx;
use crate::config::{reals, Config, Schema};
use crate::error::Result;
use crate::record::{Check, Outcome};

pub const POE: &str = "dpo-product-of-experts";
pub const GEOMETRIC: &str = "geometric-average";

#[derive(Clone, Copy)]
enum Family {
    ProductOfExperts,
    Geometric,
}

impl Family {
    fn key(self) -> &'static str {
        match self {
            Family::ProductOfExperts => "betas",
            Family::Geometric => "alphas",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Family::ProductOfExperts => "beta",
            Family::Geometric => "alpha",
        }
    }

    fn learner(self, v: f64, prior: &LogDensity) -> Result<PbdeSpec> {
        Ok(match self {
            Family::ProductOfExperts => PbdeSpec::shifted(v, prior)?,
            Family::Geometric => PbdeSpec::geometric(v, prior)?,
        })
    }

    fn optimum(self, v: f64) -> OptimumKind {
        match self {
            Family::ProductOfExperts => OptimumKind::ProductOfExperts { beta: v },
            Family::Geometric => OptimumKind::GeometricMean { alpha: v },
        }
    }
}

pub fn poe_schema() -> Schema {
    schema(POE, Family::ProductOfExperts, &[1.0, 4.0, 16.0])
}

pub fn geometric_schema() -> Schema {
    schema(GEOMETRIC, Family::Geometric, &[0.25, 0.5, 0.75])
}

fn schema(name: &'static str, family: Family, values: &[f64]) -> Schema {
    let mut keys = exact_keys(16384, 0.5);
    keys.push(reals(family.key(), values, "process parameters to run"));
    keys.extend(prior_keys());
    Schema { experiment: name, keys }
}

fn run_family(ctx: &mut Ctx, family: Family) -> Result<()> {
    let cfg = ctx.cfg;
    let d = grid(cfg.count("grid"))?;
    let (target, _) = bimodal_target(&d)?;
    let prior = prior_on(cfg, ctx.seed, d)?;
    write_density(ctx.out, "target.csv", &target)?;
    write_density(ctx.out, "prior.csv", &prior)?;
    let batch = exact_batch(&Annotator::single(PbdeSpec::Unit, &target), &d, None)?;
    for &v in cfg.reals(family.key()) {
        let optimum = theoretical_optimum(family.optimum(v), &prior, &target)?;
        let learner = family.learner(v, &prior)?;
        let (policy, history) = fit_tabular(
            d,
            prior.log_p().to_vec(),
            learner,
            &batch,
            cfg.count("steps"),
            cfg.real("lr"),
            Some(&optimum),
        )?;
        let t = format!("{}_{}", family.label(), tag(v));
        write_density(ctx.out, &format!("optimum_{t}.csv"), &optimum)?;
        write_density(ctx.out, &format!("learned_{t}.csv"), &policy.log_density()?)?;
        ctx.out.write(&format!("history_{t}.csv"), &history.to_csv())?;
    }
    Ok(())
}

fn outcome_family(dir: &Path, cfg: &Config, family: Family, id: &str) -> Result<Outcome> {
    let d = grid(cfg.count("grid"))?;
    let mut o = Outcome::default();
    for &v in cfg.reals(family.key()) {
        let t = format!("{}_{}", family.label(), tag(v));
        let tv = tv_files(dir, &format!("learned_{t}.csv"), &format!("optimum_{t}.csv"), d)?;
        o.metrics.insert(format!("tv_optimum_{t}"), tv);
        o.checks.push(Check::at_most(&format!("{id}/{t}-tv"), tv, 0.02));
    }
    Ok(o)
}

pub fn run_poe(ctx: &mut Ctx) -> Result<()> {
    run_family(ctx, Family::ProductOfExperts)
}

pub fn run_geometric(ctx: &mut Ctx) -> Result<()> {
    run_family(ctx, Family::Geometric)
}

pub fn outcome_poe(dir: &Path, cfg: &Config) -> Result<Outcome> {
    outcome_family(dir, cfg, Family::ProductOfExperts, "product-of-experts")
}

pub fn outcome_geometric(dir: &Path, cfg: &Config) -> Result<Outcome> {
    outcome_family(dir, cfg, Family::Geometric, "geometric-mean")
}
