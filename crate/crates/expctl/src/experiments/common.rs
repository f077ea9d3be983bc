//! Pieces shared by the density experiments: the grid, the pretrained
//! model, exact-objective training and file-based metrics.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use prefdens::density::{
    eval_truncated_normal, normalize, total_variation, GridDomain, LogDensity, TruncatedNormalSpec,
};
use prefdens::learners::{
    pair_loss, Architecture, EnergyArch, EnergyMode, LossEval, PairBatch, PairLoss, PairLossKind, Policy, Regularizer,
    TabularArch,
};
use prefdens::optim::{train, AdamConfig, CosineSchedule, History, TrainRun};
use prefdens::pbde::{Annotator, Item, PbdeSpec};
use prefdens::seed;

use crate::config::{count, real, Config, KeySpec};
use crate::error::Result;
use crate::output::{read_density, Emitter};

pub const LO: f64 = -10.0;
pub const HI: f64 = 10.0;

pub fn grid(n: usize) -> Result<GridDomain> {
    Ok(GridDomain::new(LO, HI, n)?)
}

/// Number formatting used in file names: `1`, `0.25`, `16`.
pub fn tag(v: f64) -> String {
    format!("{v}")
}

pub fn prior_keys() -> Vec<KeySpec> {
    vec![
        count("prior_grid", 256, "grid points used to fit the pretrained energy network"),
        count("prior_steps", 8192, "Adam steps for the pretrained fit"),
        real("prior_lr", 5e-4, "peak learning rate for the pretrained fit"),
        real("prior_sigma", 5.0, "scale of the truncated normal the pretrained model regresses onto"),
    ]
}

pub fn exact_keys(steps: u64, lr: f64) -> Vec<KeySpec> {
    vec![
        count("grid", 64, "grid points of the tabular policy"),
        count("steps", steps, "Adam steps on the exact objective"),
        real("lr", lr, "peak learning rate on the exact objective"),
    ]
}

type PriorKey = (u64, usize, usize, u64, u64);

fn prior_cache() -> &'static Mutex<HashMap<PriorKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<PriorKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Parameters of the pretrained energy network: squared-error regression of
/// its raw output onto `log N_trunc(0, prior_sigma)` at `prior_grid` points.
/// Results are memoized per seed and configuration within the process.
pub fn prior_params(cfg: &Config, master: u64) -> Result<(EnergyArch, Arc<Vec<f64>>)> {
    let n = cfg.count("prior_grid");
    let steps = cfg.count("prior_steps");
    let lr = cfg.real("prior_lr");
    let sigma = cfg.real("prior_sigma");
    let d = grid(n)?;
    let arch = EnergyArch::new(d, EnergyMode::Reward);
    let key = (master, n, steps, lr.to_bits(), sigma.to_bits());
    if let Some(p) = prior_cache().lock().expect("prior cache").get(&key) {
        return Ok((arch, p.clone()));
    }
    let target = eval_truncated_normal(&TruncatedNormalSpec::on(&d, 0.0, sigma), &d)?;
    let y = target.log_p().to_vec();
    let init = arch.init_params(&mut seed::rng(seed::derive(master, "prior-init")));
    let mut policy = Policy::new(arch.clone(), init)?;
    let items = policy.all_items();
    let mut objective = |p: &Policy<EnergyArch>, _step: usize| -> prefdens::Result<LossEval> {
        let (out, tape) = p.arch.forward(&p.params, &items);
        let scale = 1.0 / out.len() as f64;
        let mut loss = 0.0;
        let d_out: Vec<f64> = out
            .iter()
            .zip(&y)
            .map(|(o, t)| {
                loss += scale * (o - t) * (o - t);
                2.0 * scale * (o - t)
            })
            .collect();
        let mut grad = vec![0.0; p.params.len()];
        p.arch.backward(&p.params, &tape, &d_out, &mut grad);
        Ok(LossEval { loss, grad })
    };
    let adam = AdamConfig::with_lr(lr);
    train(&mut policy, &mut objective, &adam, &CosineSchedule::new(lr, steps), &TrainRun::new(steps), None)?;
    let params = Arc::new(policy.params);
    prior_cache().lock().expect("prior cache").insert(key, params.clone());
    Ok((arch, params))
}

/// The pretrained model as a normalized density on `d`.
pub fn prior_on(cfg: &Config, master: u64, d: GridDomain) -> Result<LogDensity> {
    let (arch, params) = prior_params(cfg, master)?;
    let on_d = arch.rebind(d, EnergyMode::Reward);
    let raw = on_d.raw_forward(&params, &(0..d.len()).collect::<Vec<_>>()).0;
    Ok(normalize(&raw, d)?)
}

/// Exact objective over every ordered pair of grid points.
pub fn exact_batch(annotator: &Annotator, d: &GridDomain, lengths: Option<usize>) -> Result<PairBatch> {
    let items: Vec<Item> = (0..d.len())
        .map(|i| match lengths {
            Some(m) => Item::with_length(i, item_length(i, m)),
            None => Item::new(i),
        })
        .collect();
    Ok(PairBatch::exact(annotator, &items)?)
}

/// Synthetic length attribute of grid point `i`, cycling through `1..=max`.
pub fn item_length(i: usize, max: usize) -> u32 {
    1 + (i % max.max(1)) as u32
}

/// Cross-entropy training of a tabular policy under `learner` on `batch`.
pub fn fit_tabular(
    d: GridDomain,
    init: Vec<f64>,
    learner: PbdeSpec,
    batch: &PairBatch,
    steps: usize,
    lr: f64,
    reference: Option<&LogDensity>,
) -> Result<(Policy<TabularArch>, History)> {
    let mut policy = Policy::new(TabularArch::new(d), init)?;
    let loss = PairLoss { transform: learner, kind: PairLossKind::Bce };
    let mut objective = |p: &Policy<TabularArch>, _step: usize| pair_loss(p, &loss, batch, &Regularizer::None);
    let history = run_with_monitor(&mut policy, &mut objective, steps, lr, reference)?;
    Ok((policy, history))
}

pub fn run_with_monitor<A: Architecture>(
    policy: &mut Policy<A>,
    objective: &mut impl prefdens::optim::Objective<A>,
    steps: usize,
    lr: f64,
    reference: Option<&LogDensity>,
) -> Result<History> {
    let adam = AdamConfig::with_lr(lr);
    let schedule = CosineSchedule::new(lr, steps);
    let monitor = |p: &Policy<A>| -> prefdens::Result<(f64, f64)> {
        let q = p.log_density()?;
        let r = reference.expect("monitor without reference");
        Ok((total_variation(&q, r)?, prefdens::density::kl(r, &q)?))
    };
    let monitor_ref: Option<prefdens::optim::Monitor<'_, A>> = reference.map(|_| &monitor as _);
    Ok(train(policy, objective, &adam, &schedule, &TrainRun::new(steps), monitor_ref)?)
}

pub fn write_density(out: &mut Emitter, name: &str, density: &LogDensity) -> Result<()> {
    out.write(name, &density.to_csv())
}

/// TV between two emitted density files on `d`.
pub fn tv_files(dir: &Path, a: &str, b: &str, d: GridDomain) -> Result<f64> {
    let p = read_density(dir, a, d)?;
    let q = read_density(dir, b, d)?;
    Ok(total_variation(&p, &q)?)
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Standard deviation over the grid of `f(x) * (log p(x) - log q(x))`, the
/// residual between two preference scores that a shared process can only
/// identify up to a constant.
pub fn score_residual_std(p: &LogDensity, q: &LogDensity, scale: impl Fn(usize) -> f64) -> f64 {
    let r: Vec<f64> = p.log_p().iter().zip(q.log_p()).enumerate().map(|(i, (a, b))| scale(i) * (a - b)).collect();
    std_dev(&r)
}
