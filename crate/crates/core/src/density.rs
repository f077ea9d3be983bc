//! Grid-based one-dimensional densities.
//!
//! Densities live in log space on a fixed set of evaluation points. A
//! [`Support::Grid`] is integrated with the trapezoid rule, which is exact for
//! the piecewise-linear interpolant of the point values; a
//! [`Support::Items`] is a finite set of outcomes with counting measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// `ln(1e-300)`: log-densities are clamped here instead of going to `-inf`.
pub const LOG_FLOOR: f64 = -690.775_527_898_213_7;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Numerically stable `ln(sum(exp(xs)))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    lo: f64,
    hi: f64,
    n: usize,
}

impl GridDomain {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("grid bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {n}")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell width.
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point nearest to `x` (clamped to the domain).
    pub fn nearest(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.step()).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }
}

/// The set of points a density is defined on, with its quadrature measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Support {
    Grid(GridDomain),
    Items { n: usize },
}

impl Support {
    pub fn items(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("item support must be nonempty".into()));
        }
        Ok(Support::Items { n })
    }

    pub fn len(&self) -> usize {
        match self {
            Support::Grid(d) => d.len(),
            Support::Items { n } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> Option<&GridDomain> {
        match self {
            Support::Grid(d) => Some(d),
            Support::Items { .. } => None,
        }
    }

    /// Quadrature weights: trapezoid for grids, ones for item sets.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Support::Grid(d) => d.trapezoid_weights(),
            Support::Items { n } => vec![1.0; *n],
        }
    }

    /// Coordinate of point `i`: the grid abscissa, or the item index.
    pub fn coord(&self, i: usize) -> f64 {
        match self {
            Support::Grid(d) => d.point(i),
            Support::Items { .. } => i as f64,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    pub fn ensure_same(&self, other: &Support) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::DomainMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

impl From<GridDomain> for Support {
    fn from(d: GridDomain) -> Self {
        Support::Grid(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDensity {
    support: Support,
    log_p: Vec<f64>,
    normalized: bool,
}

impl LogDensity {
    /// Wraps raw log values without normalizing. `-inf` entries are floored.
    pub fn unnormalized(raw: Vec<f64>, support: impl Into<Support>) -> Result<Self> {
        let support = support.into();
        if raw.len() != support.len() {
            return Err(Error::ShapeMismatch { expected: support.len(), got: raw.len() });
        }
        let log_p = floor_log_values(raw)?;
        Ok(Self { support, log_p, normalized: false })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    pub fn into_log_p(self) -> Vec<f64> {
        self.log_p
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.log_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_p.is_empty()
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_p.iter().map(|l| l.exp()).collect()
    }

    /// Per-point probability mass `p_i * w_i`.
    pub fn cell_masses(&self) -> Vec<f64> {
        self.log_p.iter().zip(self.support.weights()).map(|(l, w)| l.exp() * w).collect()
    }

    /// Quadrature of the density over the support.
    pub fn mass(&self) -> f64 {
        self.cell_masses().iter().sum()
    }

    pub fn argmax(&self) -> usize {
        self.log_p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0
    }

    /// Indices of strict interior local maxima of the point values.
    pub fn local_maxima(&self) -> Vec<usize> {
        let l = &self.log_p;
        (1..l.len().saturating_sub(1)).filter(|&i| l[i] > l[i - 1] && l[i] >= l[i + 1]).collect()
    }

    /// Probability of the nearest-point bin around each grid point under the
    /// piecewise-linear interpolant (item supports: the point masses).
    pub fn bin_masses(&self) -> Vec<f64> {
        let p = self.density();
        match &self.support {
            Support::Items { .. } => p,
            Support::Grid(d) => {
                let h = d.step();
                let n = p.len();
                (0..n)
                    .map(|i| {
                        let left = if i > 0 { h / 8.0 * (p[i - 1] + 3.0 * p[i]) } else { 0.0 };
                        let right = if i + 1 < n { h / 8.0 * (3.0 * p[i] + p[i + 1]) } else { 0.0 };
                        left + right
                    })
                    .collect()
            }
        }
    }

    /// Draws `n` points from the normalized density; deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = seed::rng(seed);
        self.sample_with(n, &mut rng)
    }

    /// Inverse-CDF sampling. On a grid the density is the piecewise-linear
    /// interpolant, so each draw solves a quadratic inside its cell.
    pub fn sample_with<R: rand::Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.require_normalized("sample")?;
        let p = self.density();
        match &self.support {
            Support::Items { .. } => {
                let cdf = cumulative(&p);
                Ok((0..n).map(|_| pick(&cdf, rng.random::<f64>()) as f64).collect())
            }
            Support::Grid(d) => {
                let h = d.step();
                let cells: Vec<f64> = p.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect();
                let cdf = cumulative(&cells);
                let total = *cdf.last().unwrap_or(&0.0);
                Ok((0..n)
                    .map(|_| {
                        let u = rng.random::<f64>() * total;
                        let j = pick(&cdf, u / total);
                        let before = if j == 0 { 0.0 } else { cdf[j - 1] };
                        let r = (u - before).max(0.0) / h;
                        let (p0, p1) = (p[j], p[j + 1]);
                        let a = 0.5 * (p1 - p0);
                        let disc = (p0 * p0 + 4.0 * a * r).max(0.0);
                        let denom = p0 + disc.sqrt();
                        let t = if denom > 0.0 { 2.0 * r / denom } else { 0.5 };
                        d.point(j) + h * t.clamp(0.0, 1.0)
                    })
                    .collect())
            }
        }
    }

    /// Same support, point values read from `x,log_p` CSV text.
    pub fn from_csv(text: &str, support: impl Into<Support>) -> Result<Self> {
        let support = support.into();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty density CSV".into()))?;
        if header.trim() != "x,log_p" {
            return Err(Error::Parse(format!("expected header `x,log_p`, got `{header}`")));
        }
        let mut log_p = Vec::with_capacity(support.len());
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let (x, l) = line.split_once(',').ok_or_else(|| Error::Parse(format!("row {i}: expected two columns")))?;
            let x: f64 = x.trim().parse().map_err(|e| Error::Parse(format!("row {i}: x: {e}")))?;
            let l: f64 = l.trim().parse().map_err(|e| Error::Parse(format!("row {i}: log_p: {e}")))?;
            if i >= support.len() || (x - support.coord(i)).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(Error::DomainMismatch(format!("row {i}: x = {x} is not on the support")));
            }
            log_p.push(l);
        }
        if log_p.len() != support.len() {
            return Err(Error::ShapeMismatch { expected: support.len(), got: log_p.len() });
        }
        let mut out = Self::unnormalized(log_p, support)?;
        out.normalized = (out.mass() - 1.0).abs() <= 1e-9;
        Ok(out)
    }

    /// `x,log_p` with one row per point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,log_p\n");
        for (i, l) in self.log_p.iter().enumerate() {
            s.push_str(&fmt17(self.support.coord(i)));
            s.push(',');
            s.push_str(&fmt17(*l));
            s.push('\n');
        }
        s
    }

    fn require_normalized(&self, what: &str) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::DegenerateDensity(format!("{what} requires a normalized density")))
        }
    }
}

fn floor_log_values(raw: Vec<f64>) -> Result<Vec<f64>> {
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.is_nan() || v == f64::INFINITY {
                Err(Error::NonFinite(format!("log value at index {i} is {v}")))
            } else {
                Ok(v.max(LOG_FLOOR))
            }
        })
        .collect()
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// First index whose normalized cumulative value exceeds `u` in `[0,1)`.
fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().unwrap_or(&1.0);
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// Subtracts the log of the quadrature mass of `exp(raw)`.
pub fn normalize(raw: &[f64], support: impl Into<Support>) -> Result<LogDensity> {
    let support = support.into();
    if raw.len() != support.len() {
        return Err(Error::ShapeMismatch { expected: support.len(), got: raw.len() });
    }
    if raw.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite("normalize: input contains NaN or +inf".into()));
    }
    if raw.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::DegenerateDensity("all log values are -inf".into()));
    }
    let shifted: Vec<f64> = raw.iter().zip(support.weights()).map(|(r, w)| r + w.ln()).collect();
    let log_z = log_sum_exp(&shifted);
    if !log_z.is_finite() {
        return Err(Error::DegenerateDensity(format!("log normalizer is {log_z}")));
    }
    let log_p = floor_log_values(raw.iter().map(|r| r - log_z).collect())?;
    Ok(LogDensity { support, log_p, normalized: true })
}

fn ensure_comparable(p: &LogDensity, q: &LogDensity) -> Result<()> {
    p.support.ensure_same(&q.support)?;
    p.require_normalized("divergence")?;
    q.require_normalized("divergence")
}

/// `KL(p || q)` by quadrature of `p (log p - log q)`.
pub fn kl(p: &LogDensity, q: &LogDensity) -> Result<f64> {
    ensure_comparable(p, q)?;
    let w = p.support.weights();
    let v: f64 = p.log_p.iter().zip(&q.log_p).zip(&w).map(|((lp, lq), w)| w * lp.exp() * (lp - lq)).sum();
    Ok(v.max(0.0))
}

/// Half the quadrature of `|p - q|`.
pub fn total_variation(p: &LogDensity, q: &LogDensity) -> Result<f64> {
    ensure_comparable(p, q)?;
    let w = p.support.weights();
    let v: f64 = p.log_p.iter().zip(&q.log_p).zip(&w).map(|((lp, lq), w)| w * (lp.exp() - lq.exp()).abs()).sum();
    Ok(0.5 * v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormalSpec {
    pub fn on(domain: &GridDomain, mu: f64, sigma: f64) -> Self {
        Self { mu, sigma, lo: domain.lo(), hi: domain.hi() }
    }
}

pub fn eval_truncated_normal(spec: &TruncatedNormalSpec, domain: &GridDomain) -> Result<LogDensity> {
    if !(spec.sigma > 0.0 && spec.sigma.is_finite() && spec.mu.is_finite()) {
        return Err(Error::Config(format!("truncated normal needs finite mu and sigma > 0, got {spec:?}")));
    }
    if !(spec.lo < spec.hi) {
        return Err(Error::Config(format!("truncation bounds must satisfy lo < hi, got {spec:?}")));
    }
    let tol = 1e-12 * (1.0 + domain.lo().abs().max(domain.hi().abs()));
    if (spec.lo - domain.lo()).abs() > tol || (spec.hi - domain.hi()).abs() > tol {
        return Err(Error::Config(format!(
            "truncation bounds [{}, {}] differ from domain [{}, {}]",
            spec.lo,
            spec.hi,
            domain.lo(),
            domain.hi()
        )));
    }
    let raw: Vec<f64> = domain
        .points()
        .iter()
        .map(|x| {
            let z = (x - spec.mu) / spec.sigma;
            -0.5 * z * z
        })
        .collect();
    normalize(&raw, *domain)
}

#[derive(Clone, Debug)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub components: Vec<LogDensity>,
}

/// `log sum_i w_i p_i`, renormalized on the shared support.
pub fn mix(spec: &MixtureSpec) -> Result<LogDensity> {
    if spec.components.is_empty() || spec.weights.len() != spec.components.len() {
        return Err(Error::Config(format!(
            "mixture needs one weight per component, got {} weights for {} components",
            spec.weights.len(),
            spec.components.len()
        )));
    }
    if spec.weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Config("mixture weights must be positive".into()));
    }
    let total: f64 = spec.weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
    }
    let support = spec.components[0].support;
    for c in &spec.components {
        c.support.ensure_same(&support)?;
        c.require_normalized("mix")?;
    }
    let log_w: Vec<f64> = spec.weights.iter().map(|w| w.ln()).collect();
    let raw: Vec<f64> = (0..support.len())
        .map(|i| {
            let terms: Vec<f64> = spec.components.iter().zip(&log_w).map(|(c, lw)| lw + c.log_p[i]).collect();
            log_sum_exp(&terms)
        })
        .collect();
    normalize(&raw, support)
}

/// `n` pairs drawn uniformly from `[lo, hi]^2`, snapped to grid indices.
pub fn uniform_pairs(domain: &GridDomain, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = seed::rng(seed);
    (0..n).map(|_| uniform_pair_with(domain, &mut rng)).collect()
}

pub fn uniform_pair_with<R: rand::Rng + ?Sized>(domain: &GridDomain, rng: &mut R) -> (usize, usize) {
    let a = domain.lo() + rng.random::<f64>() * (domain.hi() - domain.lo());
    let b = domain.lo() + rng.random::<f64>() * (domain.hi() - domain.lo());
    (domain.nearest(a), domain.nearest(b))
}

/// Nearest-point histogram of `samples`, as probabilities per support point.
pub fn empirical_masses(support: &Support, samples: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; support.len()];
    for &x in samples {
        let i = match support {
            Support::Grid(d) => d.nearest(x),
            Support::Items { n } => (x.round().max(0.0) as usize).min(n - 1),
        };
        counts[i] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}

/// The two-component mixture used throughout the toy experiments:
/// `2/5 N(-2.5, 0.25) + 3/5 N(2.5, 1.0)`, truncated to the domain.
pub fn bimodal_target(domain: &GridDomain) -> Result<(LogDensity, [LogDensity; 2])> {
    let left = eval_truncated_normal(&TruncatedNormalSpec::on(domain, -2.5, 0.25), domain)?;
    let right = eval_truncated_normal(&TruncatedNormalSpec::on(domain, 2.5, 1.0), domain)?;
    let merged = mix(&MixtureSpec { weights: vec![0.4, 0.6], components: vec![left.clone(), right.clone()] })?;
    Ok((merged, [left, right]))
}
