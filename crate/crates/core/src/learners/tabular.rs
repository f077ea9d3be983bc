use crate::density::{log_sum_exp, LogDensity, Support};
use crate::learners::Architecture;

/// One free logit per support point; scores are `logit - log sum w exp(logit)`.
#[derive(Clone, Debug)]
pub struct TabularArch {
    support: Support,
    log_w: Vec<f64>,
}

impl TabularArch {
    pub fn new(support: impl Into<Support>) -> Self {
        let support = support.into();
        let log_w = support.weights().iter().map(|w| w.ln()).collect();
        Self { support, log_w }
    }

    /// Logits reproducing `density` exactly.
    pub fn logits_for(density: &LogDensity) -> Vec<f64> {
        density.log_p().to_vec()
    }

    fn log_normalizer(&self, params: &[f64]) -> f64 {
        let shifted: Vec<f64> = params.iter().zip(&self.log_w).map(|(z, lw)| z + lw).collect();
        log_sum_exp(&shifted)
    }
}

/// Probability mass per point, needed for the normalizer's gradient.
pub struct TabularTape {
    mass: Vec<f64>,
    items: Vec<usize>,
}

impl Architecture for TabularArch {
    type Tape = TabularTape;

    fn n_params(&self) -> usize {
        self.support.len()
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn normalized(&self) -> bool {
        true
    }

    fn forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, TabularTape) {
        let lse = self.log_normalizer(params);
        let mass = params.iter().zip(&self.log_w).map(|(z, lw)| (z + lw - lse).exp()).collect();
        let scores = items.iter().map(|&i| params[i] - lse).collect();
        (scores, TabularTape { mass, items: items.to_vec() })
    }

    fn backward(&self, _params: &[f64], tape: &TabularTape, d_scores: &[f64], grad: &mut [f64]) {
        let total: f64 = d_scores.iter().sum();
        for (&i, d) in tape.items.iter().zip(d_scores) {
            grad[i] += d;
        }
        for (g, m) in grad.iter_mut().zip(&tape.mass) {
            *g -= total * m;
        }
    }

    fn kind(&self) -> &'static str {
        "tabular"
    }
}
