//! The toy sequence domain: length bias of the ratio rule, and what
//! adapting to a mixture of length-specialized annotators does to the
//! length distribution.

use std::path::Path;

use prefdens::learners::{pair_loss, PairLoss, PairLossKind, Policy, Regularizer};
use prefdens::pbde::PbdeSpec;
use prefdens::seed;
use prefdens::seq::{
    build_pref_dataset, fit_ar_table, is_bimodal, outcome_table, pool_batch, synth_corpus, uniform_length_law, ArArch,
    ArTable, LengthBand, LengthHistogram, MixtureKind, Seq, TokenSpace,
};

use super::common::run_with_monitor;
use super::Ctx;
use crate::config::{count, real, Config, Schema};
use crate::error::{Error, Result};
use crate::output::{read_columns, read_rows};
use crate::record::{Check, Outcome};

pub const BIAS: &str = "seq-length-bias";
pub const MISSPEC: &str = "seq-misspec";

pub const BANDS: [&str; 3] = ["short", "whole", "long"];
pub const ADAPTED: [&str; 2] = ["annotator_mixture", "density_mixture"];

fn corpus_keys() -> Vec<crate::config::KeySpec> {
    vec![
        count("vocab", 8, "token vocabulary size"),
        count("max_len", 12, "longest sequence"),
        count("corpus", 100_000, "synthetic corpus size"),
        real("smoothing", 1.0, "additive smoothing of the count tables"),
        count("samples", 1 << 16, "model samples per length histogram"),
    ]
}

pub fn bias_schema() -> Schema {
    let mut keys = corpus_keys();
    keys.push(count("eval_pairs", 4096, "sequence pairs drawn from the whole-corpus model for the outcome tables"));
    Schema { experiment: BIAS, keys }
}

pub fn misspec_schema() -> Schema {
    let mut keys = corpus_keys();
    keys.extend([
        count("pairs", 1 << 15, "labelled comparisons per preference dataset"),
        count("steps", 2048, "Adam steps of the adaptation"),
        real("lr", 0.01, "peak learning rate of the adaptation"),
    ]);
    Schema { experiment: MISSPEC, keys }
}

struct Tables {
    space: TokenSpace,
    short: ArTable,
    whole: ArTable,
    long: ArTable,
}

fn tables(cfg: &Config, master: u64) -> Result<Tables> {
    let space = TokenSpace::new(cfg.count("vocab"), cfg.count("max_len"))?;
    let corpus =
        synth_corpus(&space, &uniform_length_law(&space), cfg.count("corpus"), seed::derive(master, "corpus"))?;
    let s = cfg.real("smoothing");
    Ok(Tables {
        space,
        short: fit_ar_table(&space, &corpus, &LengthBand::short(), s)?,
        whole: fit_ar_table(&space, &corpus, &LengthBand::whole(), s)?,
        long: fit_ar_table(&space, &corpus, &LengthBand::long(), s)?,
    })
}

fn histogram(table: &ArTable, n: usize, seed: u64) -> String {
    LengthHistogram::from_seqs(table.space().max_len, &table.sample(n, seed)).to_csv()
}

pub fn run_bias(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let t = tables(cfg, ctx.seed)?;
    let eval = t.whole.sample(2 * cfg.count("eval_pairs"), seed::derive(ctx.seed, "eval-pairs"));
    let pairs: Vec<(Seq, Seq)> = eval.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect();
    for (band, table) in BANDS.iter().zip([&t.short, &t.whole, &t.long]) {
        ctx.out.write(&format!("outcome_{band}.csv"), &outcome_table(table, &pairs)?.to_csv())?;
        let h = histogram(table, cfg.count("samples"), seed::derive(ctx.seed, &format!("hist-{band}")));
        ctx.out.write(&format!("length_hist_{band}.csv"), &h)?;
    }
    Ok(())
}

pub fn run_misspec(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let t = tables(cfg, ctx.seed)?;
    let samples = cfg.count("samples");
    ctx.out.write("length_hist_base.csv", &histogram(&t.whole, samples, seed::derive(ctx.seed, "hist-base")))?;
    let loss = PairLoss { transform: PbdeSpec::LengthNormalized, kind: PairLossKind::Bce };
    for (name, kind) in ADAPTED.iter().zip([MixtureKind::AnnotatorMixture, MixtureKind::DensityMixture]) {
        let data =
            build_pref_dataset(kind, &t.short, &t.long, &t.whole, cfg.count("pairs"), seed::derive(ctx.seed, name))?;
        let batch = pool_batch(&data)?;
        let arch = ArArch::new(t.space, data.pool.clone())?;
        let mut policy = Policy::new(arch, t.whole.logits().to_vec())?;
        let mut objective = |p: &Policy<ArArch>, _step: usize| pair_loss(p, &loss, &batch, &Regularizer::None);
        let history = run_with_monitor(&mut policy, &mut objective, cfg.count("steps"), cfg.real("lr"), None)?;
        ctx.out.write(&format!("history_{name}.csv"), &history.to_csv())?;
        let adapted = ArTable::from_logits(t.space, policy.params)?;
        ctx.out.write(&format!("logits_{name}.json"), &serde_json::to_string(adapted.logits())?)?;
        let h = histogram(&adapted, samples, seed::derive(ctx.seed, &format!("hist-{name}")));
        ctx.out.write(&format!("length_hist_{name}.csv"), &h)?;
    }
    Ok(())
}

/// `(P_unit, P_lennorm)` that a short sequence beats a long one.
fn short_over_long(dir: &Path, band: &str) -> Result<(f64, f64)> {
    let file = format!("outcome_{band}.csv");
    let rows = read_rows(dir, &file, &["row_bin", "col_bin", "prob_unit", "prob_lennorm"])?;
    let row = rows
        .iter()
        .find(|r| r[0] == "S" && r[1] == "L")
        .ok_or_else(|| Error::Output { file: file.clone(), reason: "no S,L row".into() })?;
    Ok((crate::output::parse_real(&file, &row[2])?, crate::output::parse_real(&file, &row[3])?))
}

pub fn outcome_bias(dir: &Path, _cfg: &Config) -> Result<Outcome> {
    let mut o = Outcome::default();
    for band in BANDS {
        let (u, l) = short_over_long(dir, band)?;
        o.metrics.insert(format!("{band}_p_short_over_long_unit"), u);
        o.metrics.insert(format!("{band}_p_short_over_long_lennorm"), l);
    }
    let m = |k: &str| o.metrics[k];
    let checks = [
        Check::at_least("seq-length-bias/long-annotator-unit", m("long_p_short_over_long_unit"), 0.9),
        Check::at_most("seq-length-bias/long-annotator-lennorm", m("long_p_short_over_long_lennorm"), 0.5),
        Check::at_least("seq-length-bias/short-annotator-unit", m("short_p_short_over_long_unit"), 0.9),
        Check::at_least("seq-length-bias/short-annotator-lennorm", m("short_p_short_over_long_lennorm"), 0.9),
    ];
    o.checks.extend(checks);
    Ok(o)
}

fn fractions(dir: &Path, name: &str) -> Result<Vec<f64>> {
    Ok(read_columns(dir, &format!("length_hist_{name}.csv"), &["fraction"])?.remove(0))
}

/// Mass on lengths 5 to 7, the band neither annotator favors.
fn mid_mass(f: &[f64]) -> f64 {
    f.iter().enumerate().filter(|(i, _)| (5..=7).contains(&(i + 1))).map(|(_, v)| v).sum()
}

pub fn outcome_misspec(dir: &Path, _cfg: &Config) -> Result<Outcome> {
    let mut o = Outcome::default();
    let mut mids = Vec::new();
    for name in std::iter::once("base").chain(ADAPTED) {
        let f = fractions(dir, name)?;
        let short: f64 = f.iter().take(4).sum();
        let long: f64 = f.iter().skip(7).sum();
        let mid = mid_mass(&f);
        o.metrics.insert(format!("{name}_mass_short"), short);
        o.metrics.insert(format!("{name}_mass_mid"), mid);
        o.metrics.insert(format!("{name}_mass_long"), long);
        o.metrics.insert(format!("{name}_bimodal"), is_bimodal(&f) as u8 as f64);
        mids.push((mid, short + long, is_bimodal(&f)));
    }
    let (ann_mid, _, _) = mids[1];
    let (den_mid, den_ends, den_bimodal) = mids[2];
    let ratio = if den_mid > 0.0 { ann_mid / den_mid } else { f64::INFINITY };
    o.metrics.insert("mid_mass_ratio".into(), ratio);
    o.checks.push(Check::at_least("seq-misspec/mid-mass-ratio", ratio, 2.0));
    o.checks.push(Check::holds("seq-misspec/density-mixture-bimodal", den_bimodal));
    o.checks.push(Check::holds("seq-misspec/density-mixture-mid-below-ends", den_mid <= 0.5 * den_ends));
    Ok(o)
}
