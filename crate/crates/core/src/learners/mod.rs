//! Trainable policies and reward models over a fixed item universe.
//!
//! An [`Architecture`] maps a flat parameter vector to one score per item.
//! Normalized architectures produce log-densities; an energy network in
//! reward mode produces raw scores. Every loss is written against this trait
//! and back-propagates through `d loss / d score`.

mod batch;
mod energy;
mod loss;
mod mixture;
mod optimum;
mod tabular;

use serde::{Deserialize, Serialize};

pub use batch::{PairBatch, RankedList, WeightedPair};
pub use energy::{EnergyArch, EnergyMode};
pub use loss::{
    expected_entropy, mixture_bce_loss, pair_loss, rrhf_loss, LossEval, LossSpec, PairLoss, PairLossKind, Regularizer,
};
pub use mixture::MixtureArch;
pub use optimum::{theoretical_optimum, OptimumKind};
pub use tabular::TabularArch;

use crate::density::{normalize, LogDensity, Support};
use crate::error::{Error, Result};

pub trait Architecture: Send + Sync {
    type Tape: Send + Sync;

    fn n_params(&self) -> usize;

    /// The item universe the scores are defined on.
    fn support(&self) -> &Support;

    /// Whether scores are log-densities normalized over the support.
    fn normalized(&self) -> bool;

    /// Scores for `items` (indices into the support, no duplicates needed).
    fn forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, Self::Tape);

    /// Accumulates `sum_i d_scores[i] * d score_i / d params` into `grad`.
    fn backward(&self, params: &[f64], tape: &Self::Tape, d_scores: &[f64], grad: &mut [f64]);

    fn kind(&self) -> &'static str;
}

#[derive(Clone, Debug)]
pub struct Policy<A> {
    pub arch: A,
    pub params: Vec<f64>,
}

impl<A: Architecture> Policy<A> {
    pub fn new(arch: A, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.n_params() {
            return Err(Error::ShapeMismatch { expected: arch.n_params(), got: params.len() });
        }
        Ok(Self { arch, params })
    }

    pub fn all_items(&self) -> Vec<usize> {
        (0..self.arch.support().len()).collect()
    }

    /// Scores on every item: log-densities, or raw rewards.
    pub fn scores(&self) -> Vec<f64> {
        self.arch.forward(&self.params, &self.all_items()).0
    }

    /// The normalized density: scores as-is for normalized architectures,
    /// `exp(score) / Z` otherwise.
    pub fn log_density(&self) -> Result<LogDensity> {
        self.check_finite()?;
        normalize(&self.scores(), *self.arch.support())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.params.iter().position(|p| !p.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("parameter {i} is {}", self.params[i]))),
            None => Ok(()),
        }
    }

    pub fn apply_grad(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), got: grad.len() });
        }
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
        Ok(())
    }

    pub fn to_doc(&self) -> PolicyDoc {
        PolicyDoc {
            schema_version: POLICY_SCHEMA_VERSION,
            kind: self.arch.kind().to_string(),
            support: *self.arch.support(),
            params: self.params.clone(),
        }
    }

    /// Restores parameters saved by [`Policy::to_doc`] into `arch`.
    pub fn from_doc(arch: A, doc: &PolicyDoc) -> Result<Self> {
        if doc.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported policy schema {}", doc.schema_version)));
        }
        if doc.kind != arch.kind() {
            return Err(Error::Config(format!("policy kind {} does not match {}", doc.kind, arch.kind())));
        }
        arch.support().ensure_same(&doc.support)?;
        Self::new(arch, doc.params.clone())
    }
}

pub const POLICY_SCHEMA_VERSION: u32 = 1;

/// Serialized form of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub schema_version: u32,
    pub kind: String,
    pub support: Support,
    pub params: Vec<f64>,
}
