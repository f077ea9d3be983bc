//! The loss family.
//!
//! Every pairwise loss is a function of a margin `m = T(a) - T(b)`, where
//! `T(x) = f(x) s(x) + g(x)` applies a preference process to the policy's
//! score `s`. Binary cross-entropy, the hinge losses and the quadratic loss
//! differ only in the per-pair function of `m`. Targets are soft: a labelled
//! pair has `t = y`, a pair of the exact objective has `t = P(a preferred)`.

use std::sync::Arc;

use crate::density::log_sum_exp;
use crate::error::{Error, Result};
use crate::exec;
use crate::learners::batch::{PairBatch, RankedList};
use crate::learners::mixture::MixtureArch;
use crate::learners::{Architecture, Policy};
use crate::pbde::{binary_entropy, log_sigmoid, sigmoid, PbdeSpec};

const PAIR_CHUNK: usize = exec::CHUNK;

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PairLossKind {
    /// `-t ln sigmoid(m) - (1 - t) ln sigmoid(-m)`.
    Bce,
    /// `t (delta - m)+ + (1 - t) (delta + m)+`.
    Hinge { delta: f64 },
    /// `t (m - c)^2 + (1 - t) (m + c)^2`.
    Quadratic { target: f64 },
}

impl PairLossKind {
    /// Loss and its derivative in `m`.
    #[inline]
    pub fn eval(&self, m: f64, t: f64) -> (f64, f64) {
        match *self {
            PairLossKind::Bce => {
                let mut l = 0.0;
                if t > 0.0 {
                    l -= t * log_sigmoid(m);
                }
                if t < 1.0 {
                    l -= (1.0 - t) * log_sigmoid(-m);
                }
                (l, sigmoid(m) - t)
            }
            PairLossKind::Hinge { delta } => {
                let (mut l, mut d) = (0.0, 0.0);
                if t > 0.0 && delta - m > 0.0 {
                    l += t * (delta - m);
                    d -= t;
                }
                if t < 1.0 && delta + m > 0.0 {
                    l += (1.0 - t) * (delta + m);
                    d += 1.0 - t;
                }
                (l, d)
            }
            PairLossKind::Quadratic { target: c } => {
                let (up, down) = (m - c, m + c);
                (t * up * up + (1.0 - t) * down * down, 2.0 * t * up + 2.0 * (1.0 - t) * down)
            }
        }
    }
}

/// A per-pair loss applied to process-transformed scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLoss {
    pub transform: PbdeSpec,
    pub kind: PairLossKind,
}

/// Extra terms that do not depend on pairs.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Regularizer {
    #[default]
    None,
    /// `-lambda * mean_i s(items[i])`.
    LogLikelihood { lambda: f64, items: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum LossSpec {
    Bce(PbdeSpec),
    SlicDirect { delta: f64, lambda: f64 },
    RsoHinge { delta: f64, reference: Arc<[f64]> },
    Ipo { tau: f64, reference: Arc<[f64]> },
    RrhfRank { length_normalized: bool, nll_coeff: f64 },
    MixtureBce,
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Bce(_) => "bce",
            LossSpec::SlicDirect { .. } => "slic",
            LossSpec::RsoHinge { .. } => "rso",
            LossSpec::Ipo { .. } => "ipo",
            LossSpec::RrhfRank { .. } => "rrhf",
            LossSpec::MixtureBce => "mixture-bce",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            LossSpec::SlicDirect { delta, lambda } if !(*delta >= 0.0) || !(*lambda >= 0.0) => {
                bad(format!("slic needs delta >= 0 and lambda >= 0, got {delta}, {lambda}"))
            }
            LossSpec::RsoHinge { delta, .. } if !(*delta >= 0.0) => bad(format!("rso needs delta >= 0, got {delta}")),
            LossSpec::Ipo { tau, .. } if !(*tau > 0.0) => bad(format!("ipo needs tau > 0, got {tau}")),
            LossSpec::RrhfRank { nll_coeff, .. } if !(*nll_coeff >= 0.0) => {
                bad(format!("rrhf needs nll_coeff >= 0, got {nll_coeff}"))
            }
            _ => Ok(()),
        }
    }

    /// The pairwise form of this loss, if it has one.
    pub fn pair_loss(&self) -> Result<Option<PairLoss>> {
        self.validate()?;
        let ratio = |reference: &Arc<[f64]>| PbdeSpec::Shifted { beta: 1.0, reference: reference.clone() };
        Ok(match self {
            LossSpec::Bce(pbde) => Some(PairLoss { transform: pbde.clone(), kind: PairLossKind::Bce }),
            LossSpec::SlicDirect { delta, .. } => {
                Some(PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Hinge { delta: *delta } })
            }
            LossSpec::RsoHinge { delta, reference } => {
                Some(PairLoss { transform: ratio(reference), kind: PairLossKind::Hinge { delta: *delta } })
            }
            LossSpec::Ipo { tau, reference } => {
                Some(PairLoss { transform: ratio(reference), kind: PairLossKind::Quadratic { target: 0.5 / tau } })
            }
            LossSpec::RrhfRank { .. } | LossSpec::MixtureBce => None,
        })
    }
}

/// Weighted pairwise loss plus an optional regularizer, with exact gradients.
pub fn pair_loss<A: Architecture>(
    policy: &Policy<A>,
    loss: &PairLoss,
    batch: &PairBatch,
    reg: &Regularizer,
) -> Result<LossEval> {
    policy.check_finite()?;
    let n = batch.items.len();
    let mut indices = batch.item_indices();
    if let Regularizer::LogLikelihood { lambda, items } = reg {
        if *lambda > 0.0 && items.is_empty() {
            return Err(Error::Empty("log-likelihood regularizer needs samples when lambda > 0".into()));
        }
        indices.extend_from_slice(items);
    }
    let (scores, tape) = policy.arch.forward(&policy.params, &indices);

    let mut scale = Vec::with_capacity(n);
    let mut t_scores = Vec::with_capacity(n);
    for (x, s) in batch.items.iter().zip(&scores) {
        let f = loss.transform.scale(*x)?;
        t_scores.push(f * s + loss.transform.offset(*x)?);
        scale.push(f);
    }

    // Chunks return per-pair derivatives; the scatter onto items runs in
    // pair order so the result does not depend on the chunking.
    let partials = exec::map_chunks(batch.pairs.len(), PAIR_CHUNK, |r| {
        let mut l = 0.0;
        let d: Vec<f64> = batch.pairs[r]
            .iter()
            .map(|p| {
                let (v, dv) = loss.kind.eval(t_scores[p.a] - t_scores[p.b], p.t);
                l += p.w * v;
                p.w * dv
            })
            .collect();
        (l, d)
    });
    let mut value = 0.0;
    let mut d_scores = vec![0.0; indices.len()];
    let mut pairs = batch.pairs.iter();
    for (l, d) in partials {
        value += l;
        for (dv, p) in d.into_iter().zip(pairs.by_ref()) {
            d_scores[p.a] += dv;
            d_scores[p.b] -= dv;
        }
    }
    for (d, f) in d_scores.iter_mut().zip(&scale) {
        *d *= f;
    }
    if let Regularizer::LogLikelihood { lambda, items } = reg {
        if !items.is_empty() {
            let c = lambda / items.len() as f64;
            value -= c * scores[n..].iter().sum::<f64>();
            for d in &mut d_scores[n..] {
                *d -= c;
            }
        }
    }
    let mut grad = vec![0.0; policy.params.len()];
    policy.arch.backward(&policy.params, &tape, &d_scores, &mut grad);
    Ok(LossEval { loss: value, grad })
}

/// Weighted mean binary entropy of the batch targets: the minimum of the
/// cross-entropy objective, reached when the model reproduces every target.
pub fn expected_entropy(batch: &PairBatch) -> f64 {
    let total = batch.total_weight();
    batch.pairs.iter().map(|p| p.w * binary_entropy(p.t)).sum::<f64>() / total
}

/// Ranking loss over ordered lists: for every `i` ranked above `j` the hinge
/// `(p_j - p_i)+` on (optionally length-normalized) log-likelihoods, plus
/// `nll_coeff` times the negative log-likelihood of the top item. Averaged
/// over lists.
pub fn rrhf_loss<A: Architecture>(
    policy: &Policy<A>,
    lists: &[RankedList],
    length_normalized: bool,
    nll_coeff: f64,
) -> Result<LossEval> {
    policy.check_finite()?;
    if lists.is_empty() {
        return Err(Error::Empty("no ranked lists".into()));
    }
    let mut indices = Vec::new();
    let mut norm = Vec::new();
    for list in lists {
        if list.items.len() < 2 {
            return Err(Error::Config("a ranked list needs at least 2 items".into()));
        }
        for x in &list.items {
            indices.push(x.index);
            norm.push(if length_normalized { PbdeSpec::LengthNormalized.scale(*x)? } else { 1.0 });
        }
    }
    let (scores, tape) = policy.arch.forward(&policy.params, &indices);
    let per_list = 1.0 / lists.len() as f64;
    let mut value = 0.0;
    let mut d_scores = vec![0.0; indices.len()];
    let mut off = 0;
    for list in lists {
        let k = list.items.len();
        let p: Vec<f64> = (off..off + k).map(|i| scores[i] * norm[i]).collect();
        for i in 0..k {
            for j in i + 1..k {
                let gap = p[j] - p[i];
                if gap > 0.0 {
                    value += per_list * gap;
                    d_scores[off + j] += per_list * norm[off + j];
                    d_scores[off + i] -= per_list * norm[off + i];
                }
            }
        }
        value -= per_list * nll_coeff * scores[off];
        d_scores[off] -= per_list * nll_coeff;
        off += k;
    }
    let mut grad = vec![0.0; policy.params.len()];
    policy.arch.backward(&policy.params, &tape, &d_scores, &mut grad);
    Ok(LossEval { loss: value, grad })
}

/// Cross-entropy against `P(a preferred) = sum_k w_k sigmoid(s_k(a) - s_k(b))`,
/// the preference model of a mixture of annotators.
pub fn mixture_bce_loss<A: Architecture>(policy: &Policy<MixtureArch<A>>, batch: &PairBatch) -> Result<LossEval> {
    policy.check_finite()?;
    let arch = &policy.arch;
    let k = arch.k;
    let n = batch.items.len();
    let indices = batch.item_indices();
    let (head_scores, tapes) = arch.head_forward(&policy.params, &indices);
    let log_w = arch.log_weights(&policy.params);
    let w: Vec<f64> = log_w.iter().map(|v| v.exp()).collect();

    let partials = exec::map_chunks(batch.pairs.len(), PAIR_CHUNK, |r| {
        let mut l = 0.0;
        let mut d_m = Vec::with_capacity(k * r.len());
        let mut d_logits = vec![0.0; k];
        let mut win = vec![0.0; k];
        let mut lose = vec![0.0; k];
        let mut m = vec![0.0; k];
        for p in &batch.pairs[r] {
            for h in 0..k {
                m[h] = head_scores[h][p.a] - head_scores[h][p.b];
                win[h] = log_w[h] + log_sigmoid(m[h]);
                lose[h] = log_w[h] + log_sigmoid(-m[h]);
            }
            let log_p = log_sum_exp(&win);
            let log_q = log_sum_exp(&lose);
            let t = p.t;
            let mut v = 0.0;
            if t > 0.0 {
                v -= t * log_p;
            }
            if t < 1.0 {
                v -= (1.0 - t) * log_q;
            }
            l += p.w * v;
            for h in 0..k {
                // Posterior weight of head h given each outcome.
                let r_win = (win[h] - log_p).exp();
                let r_lose = (lose[h] - log_q).exp();
                let s = sigmoid(m[h]);
                d_m.push(p.w * (-t * r_win * (1.0 - s) + (1.0 - t) * r_lose * s));
                d_logits[h] += p.w * (w[h] - t * r_win - (1.0 - t) * r_lose);
            }
        }
        (l, d_m, d_logits)
    });
    let mut value = 0.0;
    let mut d_heads = vec![vec![0.0; n]; k];
    let mut d_logits = vec![0.0; k];
    let mut pairs = batch.pairs.iter();
    for (l, d_m, dl) in partials {
        value += l;
        for (dm, p) in d_m.chunks(k).zip(pairs.by_ref()) {
            for h in 0..k {
                d_heads[h][p.a] += dm[h];
                d_heads[h][p.b] -= dm[h];
            }
        }
        for (o, v) in d_logits.iter_mut().zip(dl) {
            *o += v;
        }
    }
    let mut grad = vec![0.0; policy.params.len()];
    arch.head_backward(&policy.params, &tapes, &d_heads, &d_logits, &mut grad);
    Ok(LossEval { loss: value, grad })
}
