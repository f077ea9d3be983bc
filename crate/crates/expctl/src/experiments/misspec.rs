//! Annotator misspecification in the toy setting. Comparisons come from a
//! mixture of two ratio-rule annotators, one per mode of the target. A
//! single-annotator model cannot represent the resulting preferences; a
//! two-head mixture model can.

use std::path::Path;

use prefdens::density::{bimodal_target, normalize, total_variation, GridDomain, LogDensity};
use prefdens::learners::{mixture_bce_loss, MixtureArch, Policy, TabularArch};
use prefdens::pbde::{Annotator, Item, PbdeSpec};
use prefdens::seed;
use rand_distr::{Distribution, Normal};

use super::common::{exact_batch, fit_tabular, grid, prior_keys, prior_on, run_with_monitor, write_density};
use super::Ctx;
use crate::config::{count, real, Config, Schema};
use crate::error::{Error, Result};
use crate::output::{read_columns, read_density};
use crate::record::{Check, Outcome};

pub const TOY: &str = "misspec-toy";
pub const FIX: &str = "misspec-toy-mixturefix";

/// Heatmap panels: the two annotator processes, then the misspecified and
/// the well-specified model. Every file holds the data-generating
/// probability as `p_true` and the panel's probability as `p_model`.
pub const PANELS: [&str; 4] = ["single_annotator", "multi_annotator", "misspecified", "well_specified"];

fn keys() -> Vec<crate::config::KeySpec> {
    let mut keys = vec![
        count("grid", 64, "grid points of the tabular heads"),
        count("steps", 8192, "Adam steps on the exact objective"),
        real("lr", 0.1, "peak learning rate"),
        real("noise_std", 1e-4, "standard deviation of the noise that separates the two heads"),
    ];
    keys.extend(prior_keys());
    keys
}

pub fn toy_schema() -> Schema {
    Schema { experiment: TOY, keys: keys() }
}

pub fn fix_schema() -> Schema {
    Schema { experiment: FIX, keys: keys() }
}

struct Setup {
    d: GridDomain,
    merged: LogDensity,
    parts: [LogDensity; 2],
    annotator: Annotator,
    prior: LogDensity,
}

fn setup(cfg: &Config, master: u64) -> Result<Setup> {
    let d = grid(cfg.count("grid"))?;
    let (merged, parts) = bimodal_target(&d)?;
    let annotator = Annotator::mixture(
        vec![0.4, 0.6],
        vec![Annotator::single(PbdeSpec::Unit, &parts[0]), Annotator::single(PbdeSpec::Unit, &parts[1])],
    )?;
    let prior = prior_on(cfg, master, d)?;
    Ok(Setup { d, merged, parts, annotator, prior })
}

struct TwoHead {
    weights: Vec<f64>,
    heads: Vec<LogDensity>,
}

fn fit_two_head(ctx: &mut Ctx, s: &Setup) -> Result<TwoHead> {
    let cfg = ctx.cfg;
    let batch = exact_batch(&s.annotator, &s.d, None)?;
    let arch = MixtureArch::new(TabularArch::new(s.d), 2);
    let noise = Normal::new(0.0, cfg.real("noise_std"))
        .map_err(|e| Error::InvalidValue { key: "noise_std".into(), reason: e.to_string() })?;
    let mut rng = seed::rng(seed::derive(ctx.seed, "head-noise"));
    let heads: Vec<Vec<f64>> =
        (0..2).map(|_| s.prior.log_p().iter().map(|v| v + noise.sample(&mut rng)).collect()).collect();
    let params = arch.pack(&heads);
    let mut policy = Policy::new(arch, params)?;
    let mut objective = |p: &Policy<MixtureArch<TabularArch>>, _step: usize| mixture_bce_loss(p, &batch);
    let history = run_with_monitor(&mut policy, &mut objective, cfg.count("steps"), cfg.real("lr"), Some(&s.merged))?;
    ctx.out.write("history_two_head.csv", &history.to_csv())?;

    let weights: Vec<f64> = policy.arch.log_weights(&policy.params).iter().map(|v| v.exp()).collect();
    let heads = (0..2)
        .map(|k| normalize(policy.arch.head_params(&policy.params, k), s.d))
        .collect::<prefdens::Result<Vec<_>>>()?;
    let mixture = policy.log_density()?;
    write_density(ctx.out, "two_head_mixture.csv", &mixture)?;
    for (k, h) in heads.iter().enumerate() {
        write_density(ctx.out, &format!("head_{k}.csv"), h)?;
    }
    let mut w = String::from("head,weight\n");
    for (k, v) in weights.iter().enumerate() {
        w.push_str(&format!("{k},{}\n", prefdens::density::fmt17(*v)));
    }
    ctx.out.write("head_weights.csv", &w)?;
    Ok(TwoHead { weights, heads })
}

fn write_common(ctx: &mut Ctx, s: &Setup) -> Result<()> {
    write_density(ctx.out, "target.csv", &s.merged)?;
    write_density(ctx.out, "annotator_0.csv", &s.parts[0])?;
    write_density(ctx.out, "annotator_1.csv", &s.parts[1])?;
    write_density(ctx.out, "prior.csv", &s.prior)
}

fn heatmap(d: &GridDomain, truth: &Annotator, model: &Annotator) -> Result<String> {
    let fmt = prefdens::density::fmt17;
    let mut s = String::from("x_a,x_b,p_true,p_model\n");
    for a in 0..d.len() {
        for b in 0..d.len() {
            let (ia, ib) = (Item::new(a), Item::new(b));
            let t = truth.pref_prob(ia, ib)?;
            let m = model.pref_prob(ia, ib)?;
            s.push_str(&format!("{},{},{},{}\n", fmt(d.point(a)), fmt(d.point(b)), fmt(t), fmt(m)));
        }
    }
    Ok(s)
}

pub fn run_toy(ctx: &mut Ctx) -> Result<()> {
    let s = setup(ctx.cfg, ctx.seed)?;
    write_common(ctx, &s)?;
    let batch = exact_batch(&s.annotator, &s.d, None)?;
    let (single, history) = fit_tabular(
        s.d,
        s.prior.log_p().to_vec(),
        PbdeSpec::Unit,
        &batch,
        ctx.cfg.count("steps"),
        ctx.cfg.real("lr"),
        Some(&s.merged),
    )?;
    ctx.out.write("history_single_head.csv", &history.to_csv())?;
    let single = single.log_density()?;
    write_density(ctx.out, "single_head.csv", &single)?;
    let two = fit_two_head(ctx, &s)?;

    let two_model = Annotator::mixture(
        two.weights.clone(),
        two.heads.iter().map(|h| Annotator::single(PbdeSpec::Unit, h)).collect(),
    )?;
    let models = [
        Annotator::single(PbdeSpec::Unit, &s.merged),
        s.annotator.clone(),
        Annotator::single(PbdeSpec::Unit, &single),
        two_model,
    ];
    for (panel, model) in PANELS.iter().zip(&models) {
        ctx.out.write(&format!("heatmap_{panel}.csv"), &heatmap(&s.d, &s.annotator, model)?)?;
    }
    Ok(())
}

pub fn run_fix(ctx: &mut Ctx) -> Result<()> {
    let s = setup(ctx.cfg, ctx.seed)?;
    write_common(ctx, &s)?;
    fit_two_head(ctx, &s)?;
    Ok(())
}

/// Mean squared difference and largest absolute difference between the
/// two probability columns of a heatmap file.
fn heatmap_errors(dir: &Path, panel: &str) -> Result<(f64, f64)> {
    let cols = read_columns(dir, &format!("heatmap_{panel}.csv"), &["p_true", "p_model"])?;
    let n = cols[0].len().max(1) as f64;
    let mut mse = 0.0;
    let mut max = 0.0f64;
    for (t, m) in cols[0].iter().zip(&cols[1]) {
        mse += (t - m) * (t - m) / n;
        max = max.max((t - m).abs());
    }
    Ok((mse, max))
}

pub fn outcome_toy(dir: &Path, cfg: &Config) -> Result<Outcome> {
    let d = grid(cfg.count("grid"))?;
    let target = read_density(dir, "target.csv", d)?;
    let single = read_density(dir, "single_head.csv", d)?;
    let tv_single = total_variation(&single, &target)?;
    let (_, max_gap) = heatmap_errors(dir, "single_annotator")?;
    let (mse_mis, _) = heatmap_errors(dir, "misspecified")?;
    let (mse_well, _) = heatmap_errors(dir, "well_specified")?;
    let ratio = if mse_well > 0.0 { mse_mis / mse_well } else { f64::INFINITY };

    let mut o = Outcome::default();
    o.metrics.insert("tv_single_head".into(), tv_single);
    o.metrics.insert("heatmap_mse_misspecified".into(), mse_mis);
    o.metrics.insert("heatmap_mse_well_specified".into(), mse_well);
    o.metrics.insert("heatmap_mse_ratio".into(), ratio);
    o.metrics.insert("max_gap_single_vs_multi_annotator".into(), max_gap);
    o.checks.push(Check::at_least("misspec/heatmap-mse-ratio", ratio, 2.0));
    o.checks.push(Check::at_least("misspec/single-head-tv", tv_single, 0.2));
    o.checks.push(Check::at_least("misspec/annotator-processes-differ", max_gap, 0.3));
    Ok(o)
}

pub fn outcome_fix(dir: &Path, cfg: &Config) -> Result<Outcome> {
    let d = grid(cfg.count("grid"))?;
    let target = read_density(dir, "target.csv", d)?;
    let mixture = read_density(dir, "two_head_mixture.csv", d)?;
    let tv = total_variation(&mixture, &target)?;
    let modes: Vec<f64> = (0..2)
        .map(|k| read_density(dir, &format!("head_{k}.csv"), d).map(|h| d.point(h.argmax())))
        .collect::<Result<_>>()?;
    let separation = (modes[0] - modes[1]).abs();
    let w = read_columns(dir, "head_weights.csv", &["weight"])?;

    let mut o = Outcome::default();
    o.metrics.insert("tv_two_head_mixture".into(), tv);
    o.metrics.insert("head_mode_separation".into(), separation);
    o.metrics.insert("head_mode_0".into(), modes[0]);
    o.metrics.insert("head_mode_1".into(), modes[1]);
    o.metrics.insert("head_weight_0".into(), w[0][0]);
    o.metrics.insert("head_weight_1".into(), w[0][1]);
    o.checks.push(Check::at_most("misspec/two-head-tv", tv, 0.05));
    o.checks.push(Check::at_least("misspec/head-mode-separation", separation, 3.0));
    Ok(o)
}
