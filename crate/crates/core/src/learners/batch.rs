use crate::error::{Error, Result};
use crate::pbde::{Annotator, Item, PreferenceTriplet};

/// One comparison with weight `w` and soft target `t = P(a preferred)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedPair {
    pub a: usize,
    pub b: usize,
    pub w: f64,
    pub t: f64,
}

/// Weighted comparisons over a deduplicated item list. `pairs` index into
/// `items`, so each distinct item is scored once per evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub items: Vec<Item>,
    pub pairs: Vec<WeightedPair>,
}

struct Dedup {
    items: Vec<Item>,
    slot: std::collections::HashMap<usize, usize>,
}

impl Dedup {
    fn new() -> Self {
        Self { items: Vec::new(), slot: std::collections::HashMap::new() }
    }

    fn slot(&mut self, x: Item) -> usize {
        *self.slot.entry(x.index).or_insert_with(|| {
            self.items.push(x);
            self.items.len() - 1
        })
    }
}

impl PairBatch {
    /// Labelled triplets with equal weights `1/n` and hard targets.
    pub fn from_triplets(triplets: &[PreferenceTriplet]) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Empty("preference batch is empty".into()));
        }
        let w = 1.0 / triplets.len() as f64;
        let mut d = Dedup::new();
        let pairs =
            triplets.iter().map(|t| WeightedPair { a: d.slot(t.a), b: d.slot(t.b), w, t: t.y as f64 }).collect();
        Ok(Self { items: d.items, pairs })
    }

    /// Every ordered pair of distinct items with equal weight and the
    /// annotator's preference probability as target.
    pub fn exact(annotator: &Annotator, items: &[Item]) -> Result<Self> {
        let n = items.len();
        if n < 2 {
            return Err(Error::Empty("the exact objective needs at least two items".into()));
        }
        let q = 1.0 / (n * (n - 1)) as f64;
        let mut pairs = Vec::with_capacity(n * (n - 1));
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    pairs.push(WeightedPair { a, b, w: q, t: annotator.pref_prob(items[a], items[b])? });
                }
            }
        }
        Self::from_parts(items.to_vec(), pairs)
    }

    /// A batch with explicit weights; every weight must be positive.
    pub fn from_parts(items: Vec<Item>, pairs: Vec<WeightedPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("preference batch is empty".into()));
        }
        for (i, p) in pairs.iter().enumerate() {
            if !(p.w > 0.0) || !p.w.is_finite() {
                return Err(Error::Config(format!("pair {i} has non-positive proposal weight {}", p.w)));
            }
            if !(0.0..=1.0).contains(&p.t) {
                return Err(Error::Config(format!("pair {i} has target {} outside [0, 1]", p.t)));
            }
            if p.a >= items.len() || p.b >= items.len() {
                return Err(Error::ShapeMismatch { expected: items.len(), got: p.a.max(p.b) + 1 });
            }
        }
        Ok(Self { items, pairs })
    }

    pub fn item_indices(&self) -> Vec<usize> {
        self.items.iter().map(|x| x.index).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.pairs.iter().map(|p| p.w).sum()
    }
}

/// Items in preference order, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub items: Vec<Item>,
}

impl RankedList {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::Config(format!("a ranked list needs at least 2 items, got {}", items.len())));
        }
        Ok(Self { items })
    }

    /// Orders `items` by decreasing annotator score `omega`.
    pub fn by_score(mut items: Vec<Item>, score: impl Fn(Item) -> f64) -> Result<Self> {
        items.sort_by(|x, y| score(*y).total_cmp(&score(*x)).then(x.index.cmp(&y.index)));
        Self::new(items)
    }
}
