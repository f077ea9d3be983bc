//! Generative processes for pairwise preferences.
//!
//! A process scores each item with `omega(x) = f(x) log p(x) + g(x)` and
//! prefers `a` over `b` with probability `sigmoid(omega(a) - omega(b))`.
//! Annotators bind a process to an implicit density, and datasets are drawn
//! from an annotator through a pair proposal.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::density::{fmt17, GridDomain, LogDensity, Support};
use crate::error::{ensure_finite, Error, Result};
use crate::seed::{self, Rng};

/// An outcome: a grid point or pool entry, with an optional length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Item {
    pub index: usize,
    pub length: Option<u32>,
}

impl Item {
    pub fn new(index: usize) -> Self {
        Self { index, length: None }
    }

    pub fn with_length(index: usize, length: u32) -> Self {
        Self { index, length: Some(length) }
    }
}

/// `1 / (1 + exp(-t))` without overflow for either sign of `t`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(t)`, accurate in both tails.
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Probability that the item with score margin `d` wins. Computed so that
/// `win_prob(d) + win_prob(-d) == 1` holds exactly in floating point.
pub fn win_prob(d: f64) -> f64 {
    if d >= 0.0 {
        sigmoid(d)
    } else {
        1.0 - sigmoid(-d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PbdeSpec {
    Unit,
    LengthNormalized,
    Shifted { beta: f64, reference: Arc<[f64]> },
    Geometric { alpha: f64, reference: Arc<[f64]> },
}

impl PbdeSpec {
    pub fn shifted(beta: f64, reference: &LogDensity) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(PbdeSpec::Shifted { beta, reference: finite_reference(reference)? })
    }

    pub fn geometric(alpha: f64, reference: &LogDensity) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(PbdeSpec::Geometric { alpha, reference: finite_reference(reference)? })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PbdeSpec::Unit => "unit",
            PbdeSpec::LengthNormalized => "length-normalized",
            PbdeSpec::Shifted { .. } => "shifted",
            PbdeSpec::Geometric { .. } => "geometric",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PbdeSpec::Shifted { beta, .. } => format!("shifted(beta={beta})"),
            PbdeSpec::Geometric { alpha, .. } => format!("geometric(alpha={alpha})"),
            other => other.name().to_string(),
        }
    }

    /// The multiplier `f(x)` applied to the log-density.
    pub fn scale(&self, x: Item) -> Result<f64> {
        match self {
            PbdeSpec::Unit => Ok(1.0),
            PbdeSpec::LengthNormalized => match x.length {
                Some(len) if len >= 1 => Ok(1.0 / len as f64),
                _ => Err(Error::MissingLength(x.index)),
            },
            PbdeSpec::Shifted { beta, .. } => Ok(*beta),
            PbdeSpec::Geometric { alpha, .. } => Ok(1.0 / alpha),
        }
    }

    /// The additive term `g(x)`.
    pub fn offset(&self, x: Item) -> Result<f64> {
        match self {
            PbdeSpec::Unit | PbdeSpec::LengthNormalized => Ok(0.0),
            PbdeSpec::Shifted { beta, reference } => Ok(-beta * reference_at(reference, x)?),
            PbdeSpec::Geometric { alpha, reference } => Ok((1.0 - 1.0 / alpha) * reference_at(reference, x)?),
        }
    }

    pub fn omega(&self, log_p: f64, x: Item) -> Result<f64> {
        let log_p = ensure_finite("log-density", log_p)?;
        Ok(self.scale(x)? * log_p + self.offset(x)?)
    }

    /// `P(a > b)` under this process with log-density values `log_p[item]`.
    pub fn pref_prob(&self, log_p: &[f64], a: Item, b: Item) -> Result<f64> {
        let oa = self.omega(value_at(log_p, a)?, a)?;
        let ob = self.omega(value_at(log_p, b)?, b)?;
        Ok(win_prob(oa - ob))
    }
}

fn finite_reference(reference: &LogDensity) -> Result<Arc<[f64]>> {
    for (i, v) in reference.log_p().iter().enumerate() {
        ensure_finite(&format!("reference log-density at {i}"), *v)?;
    }
    Ok(reference.log_p().into())
}

fn reference_at(reference: &[f64], x: Item) -> Result<f64> {
    let v = value_at(reference, x)?;
    ensure_finite(&format!("reference log-density at item {}", x.index), v)
}

fn value_at(values: &[f64], x: Item) -> Result<f64> {
    values.get(x.index).copied().ok_or(Error::ShapeMismatch { expected: values.len(), got: x.index + 1 })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Annotator {
    Single { pbde: PbdeSpec, implicit: Arc<[f64]> },
    Mixture { weights: Vec<f64>, members: Vec<Annotator> },
}

impl Annotator {
    pub fn single(pbde: PbdeSpec, implicit: &LogDensity) -> Self {
        Annotator::Single { pbde, implicit: implicit.log_p().into() }
    }

    pub fn from_log_values(pbde: PbdeSpec, implicit: Vec<f64>) -> Self {
        Annotator::Single { pbde, implicit: implicit.into() }
    }

    /// A weighted mixture of single annotators over one item universe.
    pub fn mixture(weights: Vec<f64>, members: Vec<Annotator>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Empty("annotator mixture has no members".into()));
        }
        if weights.len() != members.len() {
            return Err(Error::ShapeMismatch { expected: members.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("annotator weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("annotator weights sum to {total}, not 1")));
        }
        let mut universe = None;
        for m in &members {
            match m {
                Annotator::Single { implicit, .. } => {
                    if *universe.get_or_insert(implicit.len()) != implicit.len() {
                        return Err(Error::DomainMismatch("mixture members disagree on the item universe".into()));
                    }
                }
                Annotator::Mixture { .. } => {
                    return Err(Error::Config("mixture members must be single annotators".into()))
                }
            }
        }
        Ok(Annotator::Mixture { weights, members })
    }

    pub fn universe_len(&self) -> usize {
        match self {
            Annotator::Single { implicit, .. } => implicit.len(),
            Annotator::Mixture { members, .. } => members.first().map_or(0, Annotator::universe_len),
        }
    }

    pub fn pref_prob(&self, a: Item, b: Item) -> Result<f64> {
        match self {
            Annotator::Single { pbde, implicit } => pbde.pref_prob(implicit, a, b),
            Annotator::Mixture { weights, members } => {
                if members.is_empty() {
                    return Err(Error::Empty("annotator mixture has no members".into()));
                }
                let mut p = 0.0;
                for (w, m) in weights.iter().zip(members) {
                    p += w * m.pref_prob(a, b)?;
                }
                Ok(p.clamp(0.0, 1.0))
            }
        }
    }

    /// Binary entropy (nats) of the outcome for the pair `(a, b)`.
    pub fn outcome_entropy(&self, a: Item, b: Item) -> Result<f64> {
        let p = self.pref_prob(a, b)?;
        Ok(binary_entropy(p))
    }

    pub fn describe(&self) -> String {
        match self {
            Annotator::Single { pbde, .. } => format!("single({})", pbde.describe()),
            Annotator::Mixture { weights, members } => {
                let parts: Vec<String> =
                    weights.iter().zip(members).map(|(w, m)| format!("{w}*{}", m.describe())).collect();
                format!("mixture[{}]", parts.join(" + "))
            }
        }
    }
}

pub fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Draws the `i`-th comparison pair of a dataset.
pub trait PairProposal {
    fn draw(&self, i: usize, rng: &mut Rng) -> (Item, Item);
    fn describe(&self) -> String;
}

/// Uniform draws over the square domain, snapped to grid points.
#[derive(Clone, Debug)]
pub struct UniformGridPairs {
    pub domain: GridDomain,
    pub lengths: Option<Arc<[u32]>>,
}

impl UniformGridPairs {
    pub fn new(domain: GridDomain) -> Self {
        Self { domain, lengths: None }
    }
}

fn with_len(index: usize, lengths: &Option<Arc<[u32]>>) -> Item {
    Item { index, length: lengths.as_ref().map(|l| l[index]) }
}

impl PairProposal for UniformGridPairs {
    fn draw(&self, _i: usize, rng: &mut Rng) -> (Item, Item) {
        let (a, b) = crate::density::uniform_pair_with(&self.domain, rng);
        (with_len(a, &self.lengths), with_len(b, &self.lengths))
    }

    fn describe(&self) -> String {
        format!("uniform-grid[{}, {}; n={}]", self.domain.lo(), self.domain.hi(), self.domain.len())
    }
}

/// Both members of each pair drawn independently from a density.
#[derive(Clone, Debug)]
pub struct DensityPairs {
    pub density: LogDensity,
    pub lengths: Option<Arc<[u32]>>,
}

impl PairProposal for DensityPairs {
    fn draw(&self, _i: usize, rng: &mut Rng) -> (Item, Item) {
        let xs = self.density.sample_with(2, rng).expect("proposal density is normalized");
        let snap = |x: f64| match self.density.support() {
            Support::Grid(d) => d.nearest(x),
            Support::Items { .. } => x as usize,
        };
        (with_len(snap(xs[0]), &self.lengths), with_len(snap(xs[1]), &self.lengths))
    }

    fn describe(&self) -> String {
        "density-draws".into()
    }
}

/// Pair `i` is `(2i, 2i + 1)` from a pre-drawn pool of items.
#[derive(Clone, Debug)]
pub struct PoolPairs {
    pub items: Vec<Item>,
}

impl PairProposal for PoolPairs {
    fn draw(&self, i: usize, _rng: &mut Rng) -> (Item, Item) {
        (self.items[2 * i], self.items[2 * i + 1])
    }

    fn describe(&self) -> String {
        format!("pool-pairs[{}]", self.items.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub a: Item,
    pub b: Item,
    /// 1 iff `a` was preferred.
    pub y: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub triplets: Vec<PreferenceTriplet>,
    pub annotator_desc: String,
    pub proposal_desc: String,
    pub seed: u64,
    pub support: Support,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    schema_version: u32,
    annotator: String,
    proposal: String,
    seed: u64,
    n: usize,
    support: Support,
}

impl PreferenceDataset {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// `x_a,len_a,x_b,len_b,y`; lengths are blank for items without one.
    pub fn to_csv(&self) -> String {
        let len = |l: Option<u32>| l.map(|l| l.to_string()).unwrap_or_default();
        let mut s = String::from("x_a,len_a,x_b,len_b,y\n");
        for t in &self.triplets {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(self.support.coord(t.a.index)),
                len(t.a.length),
                fmt17(self.support.coord(t.b.index)),
                len(t.b.length),
                t.y
            ));
        }
        s
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Sidecar {
            schema_version: 1,
            annotator: self.annotator_desc.clone(),
            proposal: self.proposal_desc.clone(),
            seed: self.seed,
            n: self.triplets.len(),
            support: self.support,
        })?)
    }

    pub fn from_csv(csv: &str, sidecar: &str) -> Result<Self> {
        let meta: Sidecar = serde_json::from_str(sidecar)?;
        let mut lines = csv.lines();
        if lines.next().map(str::trim) != Some("x_a,len_a,x_b,len_b,y") {
            return Err(Error::Parse("expected header `x_a,len_a,x_b,len_b,y`".into()));
        }
        let locate = |x: &str, row: usize| -> Result<usize> {
            let x: f64 = x.parse().map_err(|e| Error::Parse(format!("row {row}: {e}")))?;
            let i = match meta.support {
                Support::Grid(d) => d.nearest(x),
                Support::Items { .. } => x.round() as usize,
            };
            if (meta.support.coord(i) - x).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(Error::DomainMismatch(format!("row {row}: x = {x} is not on the support")));
            }
            Ok(i)
        };
        let length = |s: &str, row: usize| -> Result<Option<u32>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| Error::Parse(format!("row {row}: {e}")))
            }
        };
        let mut triplets = Vec::new();
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("row {row}: expected 5 columns, got {}", f.len())));
            }
            let y = match f[4] {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::Parse(format!("row {row}: y must be 0 or 1, got {other}"))),
            };
            triplets.push(PreferenceTriplet {
                a: Item { index: locate(f[0], row)?, length: length(f[1], row)? },
                b: Item { index: locate(f[2], row)?, length: length(f[3], row)? },
                y,
            });
        }
        if triplets.len() != meta.n {
            return Err(Error::ShapeMismatch { expected: meta.n, got: triplets.len() });
        }
        Ok(Self {
            triplets,
            annotator_desc: meta.annotator,
            proposal_desc: meta.proposal,
            seed: meta.seed,
            support: meta.support,
        })
    }
}

/// Draws `n` labelled pairs. One stream per dataset: for each pair the
/// proposal draw comes first, then one uniform for the Bernoulli outcome, so
/// a longer dataset extends a shorter one with the same seed.
pub fn gen_dataset(
    proposal: &dyn PairProposal,
    annotator: &Annotator,
    support: Support,
    n: usize,
    seed: u64,
) -> Result<PreferenceDataset> {
    if n == 0 {
        return Err(Error::Empty("dataset size must be at least 1".into()));
    }
    let mut rng = seed::rng(seed);
    let mut triplets = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = proposal.draw(i, &mut rng);
        let p = annotator.pref_prob(a, b)?;
        let y = (rng.random::<f64>() < p) as u8;
        triplets.push(PreferenceTriplet { a, b, y });
    }
    Ok(PreferenceDataset {
        triplets,
        annotator_desc: annotator.describe(),
        proposal_desc: proposal.describe(),
        seed,
        support,
    })
}
