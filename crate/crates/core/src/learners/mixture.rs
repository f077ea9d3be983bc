use crate::density::{log_sum_exp, Support};
use crate::learners::Architecture;

/// `K` heads of one normalized architecture plus `K` weight logits.
///
/// Parameters are laid out as `[head_0, ..., head_{K-1}, logits]`. The
/// mixture's score is `log sum_k w_k pi_k(x)` with `w = softmax(logits)`.
#[derive(Clone, Debug)]
pub struct MixtureArch<A> {
    pub head: A,
    pub k: usize,
}

pub struct MixtureTape<T> {
    heads: Vec<T>,
    head_scores: Vec<Vec<f64>>,
    log_w: Vec<f64>,
    scores: Vec<f64>,
}

impl<A: Architecture> MixtureArch<A> {
    pub fn new(head: A, k: usize) -> Self {
        assert!(head.normalized(), "mixture heads must be normalized densities");
        assert!(k >= 1, "a mixture needs at least one head");
        Self { head, k }
    }

    pub fn head_params<'a>(&self, params: &'a [f64], k: usize) -> &'a [f64] {
        let p = self.head.n_params();
        &params[k * p..(k + 1) * p]
    }

    fn logits<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.k * self.head.n_params()..]
    }

    /// Log of the softmax weights.
    pub fn log_weights(&self, params: &[f64]) -> Vec<f64> {
        let z = self.logits(params);
        let lse = log_sum_exp(z);
        z.iter().map(|v| v - lse).collect()
    }

    /// Per-head scores and tapes on `items`.
    pub fn head_forward(&self, params: &[f64], items: &[usize]) -> (Vec<Vec<f64>>, Vec<A::Tape>) {
        (0..self.k).map(|k| self.head.forward(self.head_params(params, k), items)).unzip()
    }

    /// Back-propagates per-head score gradients and weight-logit gradients.
    pub fn head_backward(
        &self,
        params: &[f64],
        tapes: &[A::Tape],
        d_head_scores: &[Vec<f64>],
        d_logits: &[f64],
        grad: &mut [f64],
    ) {
        let p = self.head.n_params();
        for k in 0..self.k {
            self.head.backward(
                self.head_params(params, k),
                &tapes[k],
                &d_head_scores[k],
                &mut grad[k * p..(k + 1) * p],
            );
        }
        for (g, d) in grad[self.k * p..].iter_mut().zip(d_logits) {
            *g += d;
        }
    }

    /// Parameters from per-head parameter vectors, with equal weights.
    pub fn pack(&self, heads: &[Vec<f64>]) -> Vec<f64> {
        let mut out: Vec<f64> = heads.iter().flatten().copied().collect();
        out.extend(std::iter::repeat_n(0.0, self.k));
        out
    }
}

impl<A: Architecture> Architecture for MixtureArch<A> {
    type Tape = MixtureTape<A::Tape>;

    fn n_params(&self) -> usize {
        self.k * self.head.n_params() + self.k
    }

    fn support(&self) -> &Support {
        self.head.support()
    }

    fn normalized(&self) -> bool {
        true
    }

    fn forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, Self::Tape) {
        let (head_scores, heads) = self.head_forward(params, items);
        let log_w = self.log_weights(params);
        let scores = (0..items.len())
            .map(|i| {
                let terms: Vec<f64> = (0..self.k).map(|k| log_w[k] + head_scores[k][i]).collect();
                log_sum_exp(&terms)
            })
            .collect();
        let tape = MixtureTape { heads, head_scores, log_w, scores };
        (tape.scores.clone(), tape)
    }

    fn backward(&self, params: &[f64], tape: &Self::Tape, d_scores: &[f64], grad: &mut [f64]) {
        // d log pi(x) / d s_k(x) = r_k(x) and d log pi(x) / d z_j = r_j(x) - w_j,
        // with r the posterior responsibility of head k for x.
        let mut d_heads = vec![vec![0.0; d_scores.len()]; self.k];
        let mut d_logits = vec![0.0; self.k];
        let total: f64 = d_scores.iter().sum();
        for (i, d) in d_scores.iter().enumerate() {
            for k in 0..self.k {
                let r = (tape.log_w[k] + tape.head_scores[k][i] - tape.scores[i]).exp();
                d_heads[k][i] = d * r;
                d_logits[k] += d * r;
            }
        }
        for (dl, lw) in d_logits.iter_mut().zip(&tape.log_w) {
            *dl -= total * lw.exp();
        }
        self.head_backward(params, &tape.heads, &d_heads, &d_logits, grad);
    }

    fn kind(&self) -> &'static str {
        "mixture"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Policy, TabularArch};

    #[test]
    fn identical_heads_reproduce_the_head() {
        let s = Support::items(4).unwrap();
        let head = vec![0.1, -0.4, 1.3, 0.2];
        let arch = MixtureArch::new(TabularArch::new(s), 2);
        let params = arch.pack(&[head.clone(), head.clone()]);
        let mix = Policy::new(arch, params).unwrap().scores();
        let single = Policy::new(TabularArch::new(s), head).unwrap().scores();
        for (a, b) in mix.iter().zip(&single) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
