//! Adam with bias correction, cosine decay, the training loop, and
//! finite-difference gradient checks.

use rand::seq::index::sample;

use crate::error::{Error, Result, TrainDiagnostic};
use crate::learners::{Architecture, LossEval, Policy};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok =
            self.lr > 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One bias-corrected Adam update; `step_index` counts from 1.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
    step_index: usize,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), got: grads.len() });
    }
    if step_index == 0 {
        return Err(Error::Config("Adam step index starts at 1".into()));
    }
    let t = step_index as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_steps: usize) -> Self {
        Self { base_lr, total_steps }
    }

    /// `base_lr * (1 + cos(pi t / T)) / 2`, and 0 past the end.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step >= self.total_steps {
            return 0.0;
        }
        let frac = step as f64 / self.total_steps as f64;
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Supplies the loss and gradient at each step. Stochastic objectives keep
/// their own seeded state, so a run is a pure function of its seed.
pub trait Objective<A: Architecture> {
    fn evaluate(&mut self, policy: &Policy<A>, step: usize) -> Result<LossEval>;
}

impl<A: Architecture, F: FnMut(&Policy<A>, usize) -> Result<LossEval>> Objective<A> for F {
    fn evaluate(&mut self, policy: &Policy<A>, step: usize) -> Result<LossEval> {
        self(policy, step)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub steps: usize,
    pub record_every: usize,
    /// Abort after this many consecutive records above 10x the initial loss.
    pub divergence_patience: usize,
}

impl TrainRun {
    pub fn new(steps: usize) -> Self {
        Self { steps, record_every: 64, divergence_patience: 256 }
    }

    pub fn verbose(mut self) -> Self {
        self.record_every = 1;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub loss: f64,
    pub tv: Option<f64>,
    pub kl: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    /// `step,loss,tv,kl` with blank metric fields when not monitored.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(crate::density::fmt17).unwrap_or_default();
        let mut s = String::from("step,loss,tv,kl\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.step, crate::density::fmt17(r.loss), opt(r.tv), opt(r.kl)));
        }
        s
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.loss)
    }
}

/// Optional per-record metric, typically `(TV, KL)` against a reference.
pub type Monitor<'a, A> = &'a dyn Fn(&Policy<A>) -> Result<(f64, f64)>;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs `run.steps` Adam steps under `schedule`, recording the loss every
/// `run.record_every` steps and once more after the last update.
pub fn train<A: Architecture, O: Objective<A>>(
    policy: &mut Policy<A>,
    objective: &mut O,
    adam: &AdamConfig,
    schedule: &CosineSchedule,
    run: &TrainRun,
    monitor: Option<Monitor<'_, A>>,
) -> Result<History> {
    adam.validate()?;
    let mut state = AdamState::new(policy.params.len());
    let mut rec = Recorder { history: History::default(), initial: None, last_finite: None, above: 0, run, monitor };
    let every = run.record_every.max(1);

    for step in 0..run.steps {
        let eval = objective.evaluate(policy, step)?;
        if !eval.loss.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(rec.abort(policy, step, "non-finite loss or gradient", &eval));
        }
        rec.last_finite = Some(eval.loss);
        if step % every == 0 {
            rec.record(policy, step, &eval)?;
        }
        adam_step(&mut policy.params, &eval.grad, &mut state, adam, step + 1, schedule.lr_at(step))?;
    }
    let eval = objective.evaluate(policy, run.steps)?;
    if !eval.loss.is_finite() {
        return Err(rec.abort(policy, run.steps, "non-finite final loss", &eval));
    }
    rec.record(policy, run.steps, &eval)?;
    Ok(rec.history)
}

struct Recorder<'r, 'm, A> {
    history: History,
    initial: Option<f64>,
    last_finite: Option<f64>,
    above: usize,
    run: &'r TrainRun,
    monitor: Option<Monitor<'m, A>>,
}

impl<A: Architecture> Recorder<'_, '_, A> {
    fn record(&mut self, policy: &Policy<A>, step: usize, eval: &LossEval) -> Result<()> {
        let init = *self.initial.get_or_insert(eval.loss);
        let (tv, kl) = match self.monitor {
            Some(m) => {
                let (tv, kl) = m(policy)?;
                (Some(tv), Some(kl))
            }
            None => (None, None),
        };
        self.history.rows.push(HistoryRow { step, loss: eval.loss, tv, kl });
        if init > 0.0 && eval.loss > 10.0 * init {
            self.above += 1;
        } else {
            self.above = 0;
        }
        if self.above >= self.run.divergence_patience {
            return Err(self.abort(policy, step, "loss above 10x its initial value", eval));
        }
        Ok(())
    }

    fn abort(&self, policy: &Policy<A>, step: usize, reason: &str, eval: &LossEval) -> Error {
        diverged(policy, step, reason, eval, self.initial.unwrap_or(f64::NAN), self.last_finite)
    }
}

fn diverged<A: Architecture>(
    policy: &Policy<A>,
    step: usize,
    reason: &str,
    eval: &LossEval,
    initial: f64,
    last_finite: Option<f64>,
) -> Error {
    Error::Diverged(Box::new(TrainDiagnostic {
        step,
        reason: reason.to_string(),
        loss: eval.loss,
        initial_loss: initial,
        last_finite_loss: last_finite,
        grad_norm: norm(&eval.grad),
        param_norm: norm(&policy.params),
    }))
}

pub const FD_STEP: f64 = 1e-5;

/// Largest relative error between the analytic gradient and central
/// differences on `probes` randomly chosen coordinates. The denominator is
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> Result<LossEval>,
    params: &[f64],
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(Error::Config("grad_check needs at least one probe".into()));
    }
    let analytic = f(params)?.grad;
    let mut rng = seed::rng(seed);
    let picks = sample(&mut rng, params.len(), probes.min(params.len()));
    let mut worst: f64 = 0.0;
    let mut p = params.to_vec();
    for i in picks {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p)?.loss;
        p[i] = orig - FD_STEP;
        let down = f(&p)?.loss;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
