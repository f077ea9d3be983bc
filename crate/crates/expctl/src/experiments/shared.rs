//! Shared process: when the annotator and the model follow the same
//! preference process, cross-entropy recovers the implicit density. Covers
//! the ratio rule, the length-normalized rule, the shifted (DPO) process and
//! the geometric process, each on the exact objective.

use std::path::Path;

use prefdens::density::bimodal_target;
use prefdens::pbde::{Annotator, PbdeSpec};

use super::common::{
    exact_batch, exact_keys, fit_tabular, grid, item_length, prior_keys, prior_on, score_residual_std, tv_files,
    write_density,
};
use super::Ctx;
use crate::config::{count, real, Config, Schema};
use crate::error::Result;
use crate::output::read_density;
use crate::record::{Check, Outcome};

pub const NAME: &str = "dpo-well-specified";

pub const VARIANTS: [&str; 4] = ["unit", "length-normalized", "shifted", "geometric"];

pub fn schema() -> Schema {
    let mut keys = exact_keys(16384, 0.5);
    keys.extend([
        real("beta", 1.0, "scale of the shifted process"),
        real("alpha", 0.5, "exponent of the geometric process"),
        count("max_item_length", 4, "grid point i carries length 1 + (i mod max_item_length)"),
    ]);
    keys.extend(prior_keys());
    Schema { experiment: NAME, keys }
}

fn process(variant: &str, cfg: &Config, prior: &prefdens::density::LogDensity) -> Result<PbdeSpec> {
    Ok(match variant {
        "unit" => PbdeSpec::Unit,
        "length-normalized" => PbdeSpec::LengthNormalized,
        "shifted" => PbdeSpec::shifted(cfg.real("beta"), prior)?,
        _ => PbdeSpec::geometric(cfg.real("alpha"), prior)?,
    })
}

pub fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = grid(cfg.count("grid"))?;
    let (target, _) = bimodal_target(&d)?;
    let prior = prior_on(cfg, ctx.seed, d)?;
    write_density(ctx.out, "target.csv", &target)?;
    write_density(ctx.out, "prior.csv", &prior)?;
    for v in VARIANTS {
        let pbde = process(v, cfg, &prior)?;
        let lengths = (v == "length-normalized").then(|| cfg.count("max_item_length"));
        let batch = exact_batch(&Annotator::single(pbde.clone(), &target), &d, lengths)?;
        let (policy, history) =
            fit_tabular(d, prior.log_p().to_vec(), pbde, &batch, cfg.count("steps"), cfg.real("lr"), Some(&target))?;
        write_density(ctx.out, &format!("learned_{v}.csv"), &policy.log_density()?)?;
        ctx.out.write(&format!("history_{v}.csv"), &history.to_csv())?;
    }
    Ok(())
}

pub fn outcome(dir: &Path, cfg: &Config) -> Result<Outcome> {
    let d = grid(cfg.count("grid"))?;
    let target = read_density(dir, "target.csv", d)?;
    let mut o = Outcome::default();
    for v in VARIANTS {
        let file = format!("learned_{v}.csv");
        let tv = tv_files(dir, &file, "target.csv", d)?;
        let learned = read_density(dir, &file, d)?;
        // The process scale f(x); the offset g(x) cancels in the residual.
        let m = cfg.count("max_item_length");
        let (beta, alpha) = (cfg.real("beta"), cfg.real("alpha"));
        let scale = |i: usize| match v {
            "length-normalized" => 1.0 / item_length(i, m) as f64,
            "shifted" => beta,
            "geometric" => 1.0 / alpha,
            _ => 1.0,
        };
        let residual = score_residual_std(&target, &learned, scale);
        o.metrics.insert(format!("tv_{v}"), tv);
        o.metrics.insert(format!("residual_std_{v}"), residual);
        o.checks.push(Check::at_most(&format!("shared-process/{v}-tv"), tv, 1e-3));
        // Under the length-normalized rule a length-1 item deep in the tail
        // only meets comparisons that are saturated to machine precision,
        // so its score is not resolved; the residual is reported, not checked.
        if v != "length-normalized" {
            o.checks.push(Check::at_most(&format!("shared-process/{v}-residual-std"), residual, 1e-5));
        }
    }
    Ok(o)
}
