//! Reward recovery: a reward model trained with cross-entropy on ratio-rule
//! comparisons recovers the annotator's implicit density up to a constant.

use std::path::Path;

use prefdens::density::{bimodal_target, kl, total_variation};
use prefdens::learners::{pair_loss, EnergyArch, EnergyMode, PairBatch, PairLoss, PairLossKind, Policy, Regularizer};
use prefdens::pbde::{gen_dataset, Annotator, PbdeSpec, PreferenceTriplet, UniformGridPairs};
use prefdens::seed;
use rand::seq::SliceRandom;

use super::common::{exact_batch, fit_tabular, grid, run_with_monitor, score_residual_std, tv_files, write_density};
use super::Ctx;
use crate::config::{count, real, Config, Schema};
use crate::error::Result;
use crate::output::read_density;
use crate::record::{Check, Outcome};

pub const NAME: &str = "reward-recovery";

pub fn schema() -> Schema {
    Schema {
        experiment: NAME,
        keys: vec![
            count("grid", 2048, "grid points for the sampled-pairs run"),
            count("pairs", 1 << 15, "labelled comparisons"),
            count("batch", 512, "minibatch size"),
            count("steps", 8192, "Adam steps"),
            real("lr", 5e-4, "peak learning rate"),
            count("width", 64, "hidden width of the reward network"),
            count("depth", 4, "hidden layers of the reward network"),
            count("exact_grid", 64, "grid points for the exact-objective tabular run"),
            count("exact_steps", 16384, "Adam steps for the exact-objective run"),
            real("exact_lr", 0.5, "peak learning rate for the exact-objective run"),
        ],
    }
}

pub fn run(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let d = grid(cfg.count("grid"))?;
    let (target, _) = bimodal_target(&d)?;
    write_density(ctx.out, "target.csv", &target)?;

    let annotator = Annotator::single(PbdeSpec::Unit, &target);
    let proposal = UniformGridPairs::new(d);
    let data = gen_dataset(&proposal, &annotator, d.into(), cfg.count("pairs"), seed::derive(ctx.seed, "pairs"))?;
    ctx.out.write("dataset.csv", &data.to_csv())?;
    ctx.out.write("dataset.json", &data.sidecar_json()?)?;

    let half = 0.5 * (d.hi() - d.lo());
    let arch = EnergyArch::with_shape(d, EnergyMode::Reward, cfg.count("width"), cfg.count("depth"), half);
    let init = arch.init_params(&mut seed::rng(seed::derive(ctx.seed, "reward-init")));
    let mut policy = Policy::new(arch, init)?;
    let loss = PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Bce };
    let batch = cfg.count("batch").clamp(1, data.len());
    let per_epoch = data.len() / batch;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = seed::rng(seed::derive(ctx.seed, "minibatches"));
    let mut objective = |p: &Policy<EnergyArch>, step: usize| {
        let k = step % per_epoch;
        if k == 0 && step < cfg.count("steps") {
            order.shuffle(&mut shuffle_rng);
        }
        let picked: Vec<PreferenceTriplet> =
            order[k * batch..(k + 1) * batch].iter().map(|&i| data.triplets[i]).collect();
        pair_loss(p, &loss, &PairBatch::from_triplets(&picked)?, &Regularizer::None)
    };
    let history = run_with_monitor(&mut policy, &mut objective, cfg.count("steps"), cfg.real("lr"), Some(&target))?;
    ctx.out.write("history.csv", &history.to_csv())?;
    write_density(ctx.out, "reward_density.csv", &policy.log_density()?)?;
    ctx.out.write("reward_policy.json", &serde_json::to_string_pretty(&policy.to_doc())?)?;

    let de = grid(cfg.count("exact_grid"))?;
    let (exact_target, _) = bimodal_target(&de)?;
    let batch = exact_batch(&Annotator::single(PbdeSpec::Unit, &exact_target), &de, None)?;
    let (tab, hist) = fit_tabular(
        de,
        vec![0.0; de.len()],
        PbdeSpec::Unit,
        &batch,
        cfg.count("exact_steps"),
        cfg.real("exact_lr"),
        Some(&exact_target),
    )?;
    write_density(ctx.out, "exact_target.csv", &exact_target)?;
    write_density(ctx.out, "exact_learned.csv", &tab.log_density()?)?;
    ctx.out.write("exact_history.csv", &hist.to_csv())?;
    Ok(())
}

pub fn outcome(dir: &Path, cfg: &Config) -> Result<Outcome> {
    let d = grid(cfg.count("grid"))?;
    let target = read_density(dir, "target.csv", d)?;
    let learned = read_density(dir, "reward_density.csv", d)?;
    let tv = total_variation(&learned, &target)?;
    let kl_v = kl(&target, &learned)?;

    let de = grid(cfg.count("exact_grid"))?;
    let exact_tv = tv_files(dir, "exact_learned.csv", "exact_target.csv", de)?;
    let p = read_density(dir, "exact_target.csv", de)?;
    let q = read_density(dir, "exact_learned.csv", de)?;
    let residual = score_residual_std(&p, &q, |_| 1.0);
    let final_loss = crate::output::final_loss(dir, "exact_history.csv")?;

    let mut o = Outcome::default();
    o.metrics.insert("reward_tv".into(), tv);
    o.metrics.insert("reward_kl".into(), kl_v);
    o.metrics.insert("exact_tv".into(), exact_tv);
    o.metrics.insert("exact_residual_std".into(), residual);
    o.metrics.insert("exact_final_loss".into(), final_loss);
    o.checks.push(Check::at_most("reward-recovery/energy-tv", tv, 0.10));
    o.checks.push(Check::at_most("reward-recovery/exact-tabular-tv", exact_tv, 1e-3));
    o.checks.push(Check::at_most("reward-recovery/score-residual-std", residual, 1e-5));
    Ok(o)
}
