use serde::{Deserialize, Serialize};

use crate::density::{normalize, LogDensity};
use crate::error::{Error, Result};

/// Closed-form fixed points of cross-entropy training under a mismatch
/// between the annotator's process and the model's.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimumKind {
    /// Same process on both sides: the target itself.
    Identity,
    /// Ratio-rule annotator, shifted model: `prior * target^(1/beta)`.
    ProductOfExperts { beta: f64 },
    /// Ratio-rule annotator, geometric model: `prior^(1-alpha) * target^alpha`.
    GeometricMean { alpha: f64 },
}

pub fn theoretical_optimum(kind: OptimumKind, prior: &LogDensity, target: &LogDensity) -> Result<LogDensity> {
    prior.support().ensure_same(target.support())?;
    let (a, b) = match kind {
        OptimumKind::Identity => (0.0, 1.0),
        OptimumKind::ProductOfExperts { beta } if beta > 0.0 => (1.0, 1.0 / beta),
        OptimumKind::GeometricMean { alpha } if (0.0..=1.0).contains(&alpha) => (1.0 - alpha, alpha),
        other => return Err(Error::Config(format!("invalid optimum parameters {other:?}"))),
    };
    let raw: Vec<f64> = prior.log_p().iter().zip(target.log_p()).map(|(p, t)| a * p + b * t).collect();
    normalize(&raw, *target.support())
}
