//! Other preference losses read as density estimators: gradient checks for
//! every loss on both policy kinds, the regularizing effect of the IPO
//! temperature and of SLiC's likelihood term.

use std::path::Path;

use prefdens::density::{bimodal_target, normalize, total_variation, GridDomain, LogDensity};
use prefdens::learners::{
    mixture_bce_loss, pair_loss, rrhf_loss, Architecture, EnergyArch, EnergyMode, LossEval, LossSpec, MixtureArch,
    PairBatch, Policy, RankedList, Regularizer, TabularArch, WeightedPair,
};
use prefdens::optim::grad_check;
use prefdens::pbde::{Annotator, Item, PbdeSpec};
use prefdens::seed::{self, Rng};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::common::{exact_batch, exact_keys, grid, prior_keys, prior_on, run_with_monitor, tag, write_density};
use super::Ctx;
use crate::config::{count, real, reals, Config, Schema};
use crate::error::{Error, Result};
use crate::output::{read_density, read_rows};
use crate::record::{Check, Outcome};

pub const NAME: &str = "loss-zoo";

pub const LOSSES: [&str; 6] = ["bce", "slic", "rso", "ipo", "rrhf", "mixture-bce"];
pub const POLICIES: [&str; 2] = ["tabular", "energy"];

const GRADCHECK_TOL: f64 = 1e-5;

pub fn schema() -> Schema {
    let mut keys = exact_keys(4096, 0.05);
    keys.extend([
        reals("taus", &[0.1, 0.5, 1.0], "IPO temperatures"),
        real("delta", 1.0, "SLiC hinge margin"),
        reals("lambdas", &[0.0, 1.0], "SLiC likelihood weights"),
        count("reg_samples", 512, "pretrained draws per step for the SLiC likelihood term"),
        count("check_pairs", 48, "soft-target pairs in each gradient-check batch"),
        count("check_probes", 64, "coordinates probed per gradient check"),
    ]);
    keys.extend(prior_keys());
    Schema { experiment: NAME, keys }
}

fn random_batch(n_items: usize, n_pairs: usize, rng: &mut Rng) -> Result<PairBatch> {
    let items: Vec<Item> = (0..n_items).map(|i| Item::with_length(i, 1 + (i % 3) as u32)).collect();
    let pairs = (0..n_pairs)
        .map(|_| {
            let a = rng.random_range(0..n_items);
            let b = (a + rng.random_range(1..n_items)) % n_items;
            WeightedPair { a, b, w: rng.random_range(0.5..1.5) / n_pairs as f64, t: rng.random_range(0.0..1.0) }
        })
        .collect();
    Ok(PairBatch::from_parts(items, pairs)?)
}

fn random_lists(n_items: usize, reference: &[f64], rng: &mut Rng) -> Result<Vec<RankedList>> {
    (0..8)
        .map(|_| {
            let mut picked: Vec<usize> = Vec::new();
            while picked.len() < 4 {
                let i = rng.random_range(0..n_items);
                if !picked.contains(&i) {
                    picked.push(i);
                }
            }
            let items = picked.into_iter().map(|i| Item::with_length(i, 1 + (i % 3) as u32)).collect();
            Ok(RankedList::by_score(items, |x| reference[x.index])?)
        })
        .collect()
}

/// Gradient check over every coordinate except `inert` ones, which are held
/// at their values in `params`. A normalized network's output bias cancels
/// in the normalization; its gradient is exactly zero and central
/// differences of it measure only roundoff.
fn check_reduced(
    f: impl Fn(&[f64]) -> prefdens::Result<LossEval>,
    params: &[f64],
    inert: &[usize],
    probes: usize,
    seed: u64,
) -> prefdens::Result<f64> {
    let keep: Vec<usize> = (0..params.len()).filter(|i| !inert.contains(i)).collect();
    let reduced = |x: &[f64]| {
        let mut full = params.to_vec();
        for (&i, v) in keep.iter().zip(x) {
            full[i] = *v;
        }
        let e = f(&full)?;
        Ok(LossEval { loss: e.loss, grad: keep.iter().map(|&i| e.grad[i]).collect() })
    };
    let x0: Vec<f64> = keep.iter().map(|&i| params[i]).collect();
    grad_check(reduced, &x0, probes, seed)
}

/// Worst gradient-check error of every loss on one policy kind.
fn check_kind<A: Architecture + Clone>(
    arch: A,
    params: Vec<f64>,
    mixture: (MixtureArch<A>, Vec<f64>),
    inert: (&[usize], &[usize]),
    cfg: &Config,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = arch.support().len();
    let batch = random_batch(n, cfg.count("check_pairs"), rng)?;
    let reference: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
    let reference = normalize(&reference, *arch.support())?.log_p().to_vec();
    let lists = random_lists(n, &reference, rng)?;
    let reg_items: Vec<usize> = (0..16).map(|_| rng.random_range(0..n)).collect();
    let probes = cfg.count("check_probes");
    let check_seed = rng.random::<u64>();

    let mut out = Vec::new();
    for name in LOSSES {
        let err = match name {
            "mixture-bce" => {
                let (m_arch, m_params) = &mixture;
                let f = |p: &[f64]| -> prefdens::Result<LossEval> {
                    mixture_bce_loss(&Policy::new(m_arch.clone(), p.to_vec())?, &batch)
                };
                check_reduced(f, m_params, inert.1, probes, check_seed)?
            }
            "rrhf" => {
                let f = |p: &[f64]| rrhf_loss(&Policy::new(arch.clone(), p.to_vec())?, &lists, true, 0.5);
                check_reduced(f, &params, inert.0, probes, check_seed)?
            }
            _ => {
                let reference: std::sync::Arc<[f64]> = reference.clone().into();
                let (spec, reg) = match name {
                    "bce" => (LossSpec::Bce(PbdeSpec::LengthNormalized), Regularizer::None),
                    "slic" => (
                        LossSpec::SlicDirect { delta: 1.0, lambda: 0.5 },
                        Regularizer::LogLikelihood { lambda: 0.5, items: reg_items.clone() },
                    ),
                    "rso" => (LossSpec::RsoHinge { delta: 1.0, reference }, Regularizer::None),
                    _ => (LossSpec::Ipo { tau: 0.5, reference }, Regularizer::None),
                };
                let loss = spec.pair_loss()?.expect("pairwise loss");
                let f = |p: &[f64]| pair_loss(&Policy::new(arch.clone(), p.to_vec())?, &loss, &batch, &reg);
                check_reduced(f, &params, inert.0, probes, check_seed)?
            }
        };
        out.push(err);
    }
    Ok(out)
}

fn gradcheck_csv(ctx: &Ctx) -> Result<String> {
    let cfg = ctx.cfg;
    let mut rng = seed::rng(seed::derive(ctx.seed, "gradcheck"));
    let normal = |rng: &mut Rng, len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };

    let tab = TabularArch::new(grid(16)?);
    let tab_params = normal(&mut rng, tab.n_params());
    let tab_mix = MixtureArch::new(tab.clone(), 2);
    let tab_mix_params = normal(&mut rng, tab_mix.n_params());
    let tab_errs = check_kind(tab, tab_params, (tab_mix, tab_mix_params), (&[], &[]), cfg, &mut rng)?;

    let d = grid(32)?;
    let energy = EnergyArch::with_shape(d, EnergyMode::Policy, 8, 2, 1.0);
    let e_params = energy.init_params(&mut rng);
    let e_mix = MixtureArch::new(energy.clone(), 2);
    let mut e_mix_params = energy.init_params(&mut rng);
    e_mix_params.extend(energy.init_params(&mut rng));
    e_mix_params.extend([0.3, -0.2]);
    let n = energy.n_params();
    let inert = ([n - 1], [n - 1, 2 * n - 1]);
    let e_errs = check_kind(energy, e_params, (e_mix, e_mix_params), (&inert.0, &inert.1), cfg, &mut rng)?;

    let mut s = String::from("loss,policy,max_rel_error\n");
    for (policy, errs) in POLICIES.iter().zip([tab_errs, e_errs]) {
        for (loss, e) in LOSSES.iter().zip(errs) {
            s.push_str(&format!("{loss},{policy},{}\n", prefdens::density::fmt17(e)));
        }
    }
    Ok(s)
}

/// Exact-objective training from the pretrained model under one pairwise
/// loss, with fresh pretrained draws each step for the likelihood term.
fn fit(ctx: &mut Ctx, spec: LossSpec, prior: &LogDensity, batch: &PairBatch, stem: &str) -> Result<()> {
    let cfg = ctx.cfg;
    let d = grid(cfg.count("grid"))?;
    let loss = spec.pair_loss()?.expect("pairwise loss");
    let lambda = match spec {
        LossSpec::SlicDirect { lambda, .. } => lambda,
        _ => 0.0,
    };
    let draws = WeightedIndex::new(prior.cell_masses())
        .map_err(|e| Error::InvalidValue { key: "prior".into(), reason: e.to_string() })?;
    let mut rng = seed::rng(seed::derive(ctx.seed, &format!("reg-{stem}")));
    let n_reg = cfg.count("reg_samples");
    let mut policy = Policy::new(TabularArch::new(d), prior.log_p().to_vec())?;
    let mut objective = |p: &Policy<TabularArch>, _step: usize| {
        let reg = if lambda > 0.0 {
            Regularizer::LogLikelihood { lambda, items: (0..n_reg).map(|_| draws.sample(&mut rng)).collect() }
        } else {
            Regularizer::None
        };
        pair_loss(p, &loss, batch, &reg)
    };
    let history = run_with_monitor(&mut policy, &mut objective, cfg.count("steps"), cfg.real("lr"), Some(prior))?;
    write_density(ctx.out, &format!("learned_{stem}.csv"), &policy.log_density()?)?;
    ctx.out.write(&format!("history_{stem}.csv"), &history.to_csv())
}

pub fn run(ctx: &mut Ctx) -> Result<()> {
    let csv = gradcheck_csv(ctx)?;
    ctx.out.write("gradcheck.csv", &csv)?;

    let cfg = ctx.cfg;
    let d = grid(cfg.count("grid"))?;
    let (target, _) = bimodal_target(&d)?;
    let prior = prior_on(cfg, ctx.seed, d)?;
    write_density(ctx.out, "target.csv", &target)?;
    write_density(ctx.out, "prior.csv", &prior)?;
    let batch = exact_batch(&Annotator::single(PbdeSpec::Unit, &target), &d, None)?;
    let reference: std::sync::Arc<[f64]> = prior.log_p().into();
    for &tau in cfg.reals("taus") {
        fit(
            ctx,
            LossSpec::Ipo { tau, reference: reference.clone() },
            &prior,
            &batch,
            &format!("ipo_tau_{}", tag(tau)),
        )?;
    }
    let delta = cfg.real("delta");
    for &lambda in cfg.reals("lambdas") {
        let stem = format!("slic_lambda_{}", tag(lambda));
        fit(ctx, LossSpec::SlicDirect { delta, lambda }, &prior, &batch, &stem)?;
    }
    Ok(())
}

fn tv_to_prior(dir: &Path, d: GridDomain, prior: &LogDensity, stem: &str) -> Result<f64> {
    let learned = read_density(dir, &format!("learned_{stem}.csv"), d)?;
    Ok(total_variation(&learned, prior)?)
}

pub fn outcome(dir: &Path, cfg: &Config) -> Result<Outcome> {
    let mut o = Outcome::default();
    for row in read_rows(dir, "gradcheck.csv", &["loss", "policy", "max_rel_error"])? {
        let err = crate::output::parse_real("gradcheck.csv", &row[2])?;
        o.metrics.insert(format!("gradcheck_{}_{}", row[0], row[1]), err);
        o.checks.push(Check::at_most(&format!("loss-zoo/gradcheck-{}-{}", row[0], row[1]), err, GRADCHECK_TOL));
    }

    let d = grid(cfg.count("grid"))?;
    let prior = read_density(dir, "prior.csv", d)?;
    let mut taus: Vec<(f64, f64)> = Vec::new();
    for &tau in cfg.reals("taus") {
        let tv = tv_to_prior(dir, d, &prior, &format!("ipo_tau_{}", tag(tau)))?;
        o.metrics.insert(format!("tv_prior_ipo_tau_{}", tag(tau)), tv);
        taus.push((tau, tv));
    }
    if taus.len() >= 2 {
        taus.sort_by(|a, b| a.0.total_cmp(&b.0));
        let decreasing = taus.windows(2).all(|w| w[1].1 < w[0].1);
        o.checks.push(Check::holds("loss-zoo/ipo-tv-to-prior-decreasing-in-tau", decreasing));
    }

    let mut lambdas: Vec<(f64, f64)> = Vec::new();
    for &lambda in cfg.reals("lambdas") {
        let tv = tv_to_prior(dir, d, &prior, &format!("slic_lambda_{}", tag(lambda)))?;
        o.metrics.insert(format!("tv_prior_slic_lambda_{}", tag(lambda)), tv);
        lambdas.push((lambda, tv));
    }
    if lambdas.len() >= 2 {
        lambdas.sort_by(|a, b| a.0.total_cmp(&b.0));
        let closer = lambdas.last().expect("two runs").1 < lambdas[0].1;
        o.checks.push(Check::holds("loss-zoo/slic-likelihood-term-pulls-toward-prior", closer));
    }
    Ok(o)
}
