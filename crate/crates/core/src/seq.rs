//! Toy autoregressive sequence domain.
//!
//! Sequences of 1 to `max_len` tokens are scored by count-based
//! autoregressive tables whose conditionals depend on the position and the
//! previous token. After `p` tokens the table chooses the next token or the
//! end symbol; at `max_len` the sequence ends with probability one. The
//! position dependence lets a table model the length distribution of its
//! training band, which a position-free bigram cannot do.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::density::Support;
use crate::density::{fmt17, log_sum_exp};
use crate::error::{Error, Result};
use crate::exec;
use crate::learners::{Architecture, PairBatch};
use crate::pbde::{gen_dataset, Annotator, Item, PbdeSpec, PoolPairs, PreferenceDataset};
use crate::seed::{self, Rng};

pub type Seq = Vec<u8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpace {
    pub vocab: usize,
    pub max_len: usize,
}

impl Default for TokenSpace {
    fn default() -> Self {
        Self { vocab: 8, max_len: 12 }
    }
}

impl TokenSpace {
    pub fn new(vocab: usize, max_len: usize) -> Result<Self> {
        if !(2..=255).contains(&vocab) || max_len < 1 {
            return Err(Error::Config(format!("need 2 <= vocab <= 255 and max_len >= 1, got {vocab}, {max_len}")));
        }
        Ok(Self { vocab, max_len })
    }

    /// Index of the end symbol within a transition row.
    pub fn end(&self) -> usize {
        self.vocab
    }

    fn n_rows(&self) -> usize {
        1 + (self.max_len - 1) * self.vocab
    }

    fn n_logits(&self) -> usize {
        self.vocab + (self.max_len - 1) * self.vocab * (self.vocab + 1)
    }

    fn row_width(&self, row: usize) -> usize {
        if row == 0 {
            self.vocab
        } else {
            self.vocab + 1
        }
    }

    fn row_offset(&self, row: usize) -> usize {
        if row == 0 {
            0
        } else {
            self.vocab + (row - 1) * (self.vocab + 1)
        }
    }

    /// Row of the conditional used after `pos` tokens (`pos >= 1`) with
    /// previous token `prev`.
    fn trans_row(&self, pos: usize, prev: usize) -> usize {
        1 + (pos - 1) * self.vocab + prev
    }

    fn check(&self, seq: &[u8]) -> Result<()> {
        if seq.is_empty() || seq.len() > self.max_len {
            return Err(Error::Config(format!("sequence length {} outside [1, {}]", seq.len(), self.max_len)));
        }
        if let Some(&t) = seq.iter().find(|&&t| t as usize >= self.vocab) {
            return Err(Error::UnknownToken { token: t as usize, vocab: self.vocab });
        }
        Ok(())
    }

    /// Visits every `(row, column)` entry whose log-probability sums to the
    /// sequence's log-probability.
    fn for_each_entry(&self, seq: &[u8], mut f: impl FnMut(usize, usize)) {
        f(0, seq[0] as usize);
        for p in 1..seq.len() {
            f(self.trans_row(p, seq[p - 1] as usize), seq[p] as usize);
        }
        if seq.len() < self.max_len {
            f(self.trans_row(seq.len(), seq[seq.len() - 1] as usize), self.end());
        }
    }
}

/// The fixed token law of the synthetic corpus: a Markov chain where the
/// next token is `prev + k (mod V)` with weight proportional to `1/(k+1)`.
pub fn token_law(space: &TokenSpace) -> (Vec<f64>, Vec<Vec<f64>>) {
    let v = space.vocab;
    let zipf: Vec<f64> = (0..v).map(|k| 1.0 / (k as f64 + 1.0)).collect();
    let z: f64 = zipf.iter().sum();
    let start: Vec<f64> = zipf.iter().map(|w| w / z).collect();
    let trans = (0..v).map(|prev| (0..v).map(|next| start[(next + v - prev) % v]).collect()).collect();
    (start, trans)
}

fn draw_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// `n` sequences with lengths from `length_law` (`length_law[l-1]` is the
/// probability of length `l`) and tokens from [`token_law`].
pub fn synth_corpus(space: &TokenSpace, length_law: &[f64], n: usize, seed: u64) -> Result<Vec<Seq>> {
    if length_law.len() != space.max_len {
        return Err(Error::ShapeMismatch { expected: space.max_len, got: length_law.len() });
    }
    let total: f64 = length_law.iter().sum();
    if length_law.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config("length law must be a probability vector".into()));
    }
    let (start, trans) = token_law(space);
    let mut rng = seed::rng(seed);
    Ok((0..n)
        .map(|_| {
            let len = draw_index(length_law, &mut rng) + 1;
            let mut s = Vec::with_capacity(len);
            s.push(draw_index(&start, &mut rng) as u8);
            while s.len() < len {
                let prev = *s.last().unwrap() as usize;
                s.push(draw_index(&trans[prev], &mut rng) as u8);
            }
            s
        })
        .collect())
}

pub fn uniform_length_law(space: &TokenSpace) -> Vec<f64> {
    vec![1.0 / space.max_len as f64; space.max_len]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBand {
    pub label: String,
    pub min_len: usize,
    pub max_len: usize,
}

impl LengthBand {
    pub fn new(label: &str, min_len: usize, max_len: usize) -> Self {
        Self { label: label.into(), min_len, max_len }
    }

    pub fn short() -> Self {
        Self::new("short", 1, 4)
    }

    pub fn whole() -> Self {
        Self::new("whole", 1, 12)
    }

    pub fn long() -> Self {
        Self::new("long", 8, 12)
    }

    pub fn contains(&self, len: usize) -> bool {
        (self.min_len..=self.max_len).contains(&len)
    }
}

/// Autoregressive table stored as one logit row per conditional.
#[derive(Clone, Debug, PartialEq)]
pub struct ArTable {
    space: TokenSpace,
    logits: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ArTable {
    pub fn from_logits(space: TokenSpace, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != space.n_logits() {
            return Err(Error::ShapeMismatch { expected: space.n_logits(), got: logits.len() });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("autoregressive table logits".into()));
        }
        let log_probs = log_softmax_rows(&space, &logits);
        Ok(Self { space, logits, log_probs })
    }

    pub fn space(&self) -> &TokenSpace {
        &self.space
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Probabilities of one conditional: the start row for `pos == 0`,
    /// otherwise the row after `pos` tokens ending in `prev`.
    pub fn conditional(&self, pos: usize, prev: usize) -> Vec<f64> {
        let row = if pos == 0 { 0 } else { self.space.trans_row(pos, prev) };
        let off = self.space.row_offset(row);
        self.log_probs[off..off + self.space.row_width(row)].iter().map(|l| l.exp()).collect()
    }

    /// Every conditional distribution, start row first.
    pub fn conditionals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.conditional(0, 0)];
        for pos in 1..self.space.max_len {
            for prev in 0..self.space.vocab {
                out.push(self.conditional(pos, prev));
            }
        }
        out
    }

    pub fn log_prob(&self, seq: &[u8]) -> Result<f64> {
        self.space.check(seq)?;
        let mut lp = 0.0;
        self.space.for_each_entry(seq, |row, col| lp += self.log_probs[self.space.row_offset(row) + col]);
        Ok(lp)
    }

    pub fn sample_with(&self, rng: &mut Rng) -> Seq {
        let mut s: Seq = vec![draw_index(&self.conditional(0, 0), rng) as u8];
        while s.len() < self.space.max_len {
            let next = draw_index(&self.conditional(s.len(), *s.last().unwrap() as usize), rng);
            if next == self.space.end() {
                break;
            }
            s.push(next as u8);
        }
        s
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Seq> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }

    /// Probability of each length `1..=max_len` and the entropy in nats,
    /// both exact by forward recursion over `(position, last token)`.
    pub fn length_marginal_and_entropy(&self) -> (Vec<f64>, f64) {
        let v = self.space.vocab;
        let end = self.space.end();
        let start = self.conditional(0, 0);
        let mut entropy = -start.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        let mut reach = start;
        let mut lengths = vec![0.0; self.space.max_len];
        for pos in 1..self.space.max_len {
            let mut next = vec![0.0; v];
            for (prev, &r) in reach.iter().enumerate().take(v) {
                if r == 0.0 {
                    continue;
                }
                let q = self.conditional(pos, prev);
                entropy -= r * q.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                lengths[pos - 1] += r * q[end];
                for (t, n) in next.iter_mut().enumerate() {
                    *n += r * q[t];
                }
            }
            reach = next;
        }
        lengths[self.space.max_len - 1] = reach.iter().sum();
        (lengths, entropy)
    }

    pub fn entropy(&self) -> f64 {
        self.length_marginal_and_entropy().1
    }

    pub fn length_marginal(&self) -> Vec<f64> {
        self.length_marginal_and_entropy().0
    }
}

fn log_softmax_rows(space: &TokenSpace, logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for row in 0..space.n_rows() {
        let off = space.row_offset(row);
        let w = space.row_width(row);
        let lse = log_sum_exp(&logits[off..off + w]);
        for j in off..off + w {
            out[j] = logits[j] - lse;
        }
    }
    out
}

/// Add-`smoothing` estimates from the band's sequences. A position no
/// band sequence reaches copies the counts of the nearest lower position
/// that was reached, so a table fit on short sequences keeps ending them.
/// A context with no counts and zero smoothing is uniform.
pub fn fit_ar_table(space: &TokenSpace, corpus: &[Seq], band: &LengthBand, smoothing: f64) -> Result<ArTable> {
    if !(smoothing >= 0.0) || !smoothing.is_finite() {
        return Err(Error::Config(format!("smoothing must be finite and non-negative, got {smoothing}")));
    }
    let mut counts = vec![0.0; space.n_logits()];
    let mut used = 0usize;
    for s in corpus.iter().filter(|s| band.contains(s.len())) {
        space.check(s)?;
        space.for_each_entry(s, |row, col| counts[space.row_offset(row) + col] += 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(Error::Empty(format!("no corpus sequence falls in band {}", band.label)));
    }
    let block = space.vocab * (space.vocab + 1);
    let pos_block = |pos: usize| space.row_offset(space.trans_row(pos, 0));
    let mut last_seen = None;
    for pos in 1..space.max_len {
        let off = pos_block(pos);
        if counts[off..off + block].iter().sum::<f64>() > 0.0 {
            last_seen = Some(pos);
        } else if let Some(src) = last_seen {
            let src_off = pos_block(src);
            let copied: Vec<f64> = counts[src_off..src_off + block].to_vec();
            counts[off..off + block].copy_from_slice(&copied);
        }
    }
    let mut logits = vec![0.0; space.n_logits()];
    for row in 0..space.n_rows() {
        let off = space.row_offset(row);
        let w = space.row_width(row);
        let c = &counts[off..off + w];
        let total: f64 = c.iter().sum::<f64>() + smoothing * w as f64;
        for j in 0..w {
            logits[off + j] = if total > 0.0 { ((c[j] + smoothing) / total).ln() } else { 0.0 };
        }
    }
    // Zero-count entries without smoothing are floored rather than -inf.
    for l in &mut logits {
        *l = l.max(crate::density::LOG_FLOOR);
    }
    ArTable::from_logits(*space, logits)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthBin {
    S,
    M,
    L,
}

impl LengthBin {
    pub const ALL: [LengthBin; 3] = [LengthBin::S, LengthBin::M, LengthBin::L];

    /// `S <= 4`, `M` in 5..=7, `L >= 8`.
    pub fn of(len: usize) -> Self {
        match len {
            0..=4 => LengthBin::S,
            5..=7 => LengthBin::M,
            _ => LengthBin::L,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LengthBin::S => "S",
            LengthBin::M => "M",
            LengthBin::L => "L",
        }
    }

    fn idx(&self) -> usize {
        *self as usize
    }
}

/// Mean preference probability of a row-bin sequence over a column-bin
/// sequence, under the ratio rule and the length-normalized rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub unit: [[f64; 3]; 3],
    pub lennorm: [[f64; 3]; 3],
    pub counts: [[usize; 3]; 3],
}

impl OutcomeTable {
    pub fn get(&self, row: LengthBin, col: LengthBin) -> (f64, f64) {
        (self.unit[row.idx()][col.idx()], self.lennorm[row.idx()][col.idx()])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row_bin,col_bin,prob_unit,prob_lennorm\n");
        for r in LengthBin::ALL {
            for c in LengthBin::ALL {
                let (u, l) = self.get(r, c);
                s.push_str(&format!("{},{},{},{}\n", r.label(), c.label(), fmt17(u), fmt17(l)));
            }
        }
        s
    }
}

/// Scores every pair in both orders, so diagonal cells average to 1/2.
pub fn outcome_table(annotator: &ArTable, pairs: &[(Seq, Seq)]) -> Result<OutcomeTable> {
    let mut sum_u = [[0.0; 3]; 3];
    let mut sum_l = [[0.0; 3]; 3];
    let mut counts = [[0usize; 3]; 3];
    for (a, b) in pairs {
        let la = annotator.log_prob(a)?;
        let lb = annotator.log_prob(b)?;
        let log_p = [la, lb];
        let (ia, ib) = (Item::with_length(0, a.len() as u32), Item::with_length(1, b.len() as u32));
        for (x, y) in [(ia, ib), (ib, ia)] {
            let r = LengthBin::of(x.length.unwrap() as usize).idx();
            let c = LengthBin::of(y.length.unwrap() as usize).idx();
            sum_u[r][c] += PbdeSpec::Unit.pref_prob(&log_p, x, y)?;
            sum_l[r][c] += PbdeSpec::LengthNormalized.pref_prob(&log_p, x, y)?;
            counts[r][c] += 1;
        }
    }
    for bin in LengthBin::ALL {
        if counts[bin.idx()].iter().all(|&c| c == 0) {
            return Err(Error::Empty(format!("no evaluation sequence falls in length bin {}", bin.label())));
        }
    }
    let mean = |s: [[f64; 3]; 3]| {
        let mut out = [[f64::NAN; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                if counts[r][c] > 0 {
                    out[r][c] = s[r][c] / counts[r][c] as f64;
                }
            }
        }
        out
    };
    Ok(OutcomeTable { unit: mean(sum_u), lennorm: mean(sum_l), counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub counts: Vec<u64>,
}

impl LengthHistogram {
    pub fn from_seqs(max_len: usize, seqs: &[Seq]) -> Self {
        let mut counts = vec![0; max_len];
        for s in seqs {
            counts[s.len() - 1] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Mass on lengths in `[lo, hi]`.
    pub fn band_mass(&self, lo: usize, hi: usize) -> f64 {
        self.fractions()[lo - 1..hi].iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("length,count,fraction\n");
        for (i, (c, f)) in self.counts.iter().zip(self.fractions()).enumerate() {
            s.push_str(&format!("{},{},{}\n", i + 1, c, fmt17(f)));
        }
        s
    }
}

/// True when some pair of lengths `a < b` encloses a length whose mass is at
/// most half the smaller of the two: two modes with a valley between.
pub fn is_bimodal(fractions: &[f64]) -> bool {
    let n = fractions.len();
    (0..n).any(|a| {
        (a + 2..n).any(|b| {
            let floor = 0.5 * fractions[a].min(fractions[b]);
            floor > 0.0 && (a + 1..b).any(|v| fractions[v] <= floor)
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixtureKind {
    /// Each comparison judged by the short or the long annotator, chosen
    /// with probability 1/2.
    AnnotatorMixture,
    /// One annotator whose implicit density is `(short + long) / 2`.
    DensityMixture,
}

/// A pool of `2n` sequences drawn from the whole model, compared in
/// consecutive pairs, with its preference labels.
#[derive(Clone, Debug)]
pub struct SeqPrefData {
    pub pool: Arc<Vec<Seq>>,
    pub dataset: PreferenceDataset,
}

pub fn build_pref_dataset(
    kind: MixtureKind,
    short: &ArTable,
    long: &ArTable,
    whole: &ArTable,
    n: usize,
    seed: u64,
) -> Result<SeqPrefData> {
    let pool = whole.sample(2 * n, seed::derive(seed, "pool"));
    let items: Vec<Item> = pool.iter().enumerate().map(|(i, s)| Item::with_length(i, s.len() as u32)).collect();
    let lp_short = pool.iter().map(|s| short.log_prob(s)).collect::<Result<Vec<_>>>()?;
    let lp_long = pool.iter().map(|s| long.log_prob(s)).collect::<Result<Vec<_>>>()?;
    let annotator = match kind {
        MixtureKind::AnnotatorMixture => Annotator::mixture(
            vec![0.5, 0.5],
            vec![
                Annotator::from_log_values(PbdeSpec::LengthNormalized, lp_short),
                Annotator::from_log_values(PbdeSpec::LengthNormalized, lp_long),
            ],
        )?,
        MixtureKind::DensityMixture => {
            let mix = lp_short.iter().zip(&lp_long).map(|(a, b)| log_sum_exp(&[*a, *b]) - 2f64.ln()).collect();
            Annotator::from_log_values(PbdeSpec::LengthNormalized, mix)
        }
    };
    let proposal = PoolPairs { items };
    let dataset = gen_dataset(&proposal, &annotator, Support::items(2 * n)?, n, seed::derive(seed, "labels"))?;
    Ok(SeqPrefData { pool: Arc::new(pool), dataset })
}

/// A table's logits as the parameters of a scorer over a fixed pool.
#[derive(Clone, Debug)]
pub struct ArArch {
    space: TokenSpace,
    pool: Arc<Vec<Seq>>,
    support: Support,
    /// Flat logit offsets of each pool sequence's factors, in CSR layout.
    entries: Arc<[u32]>,
    starts: Arc<[usize]>,
}

impl ArArch {
    pub fn new(space: TokenSpace, pool: Arc<Vec<Seq>>) -> Result<Self> {
        for s in pool.iter() {
            space.check(s)?;
        }
        let support = Support::items(pool.len())?;
        let mut entries = Vec::new();
        let mut starts = Vec::with_capacity(pool.len() + 1);
        starts.push(0);
        for s in pool.iter() {
            space.for_each_entry(s, |row, col| entries.push((space.row_offset(row) + col) as u32));
            starts.push(entries.len());
        }
        Ok(Self { space, pool, support, entries: entries.into(), starts: starts.into() })
    }
}

impl ArArch {
    fn entries_of(&self, i: usize) -> &[u32] {
        &self.entries[self.starts[i]..self.starts[i + 1]]
    }

    pub fn pool(&self) -> &Arc<Vec<Seq>> {
        &self.pool
    }
}

pub struct ArTape {
    probs: Vec<f64>,
    items: Vec<usize>,
}

impl Architecture for ArArch {
    type Tape = ArTape;

    fn n_params(&self) -> usize {
        self.space.n_logits()
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn normalized(&self) -> bool {
        false
    }

    fn forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, ArTape) {
        let lp = log_softmax_rows(&self.space, params);
        let scores = exec::map_chunks(items.len(), exec::CHUNK, |r| {
            items[r]
                .iter()
                .map(|&i| self.entries_of(i).iter().map(|&e| lp[e as usize]).sum::<f64>())
                .collect::<Vec<f64>>()
        })
        .concat();
        let probs = lp.iter().map(|l| l.exp()).collect();
        (scores, ArTape { probs, items: items.to_vec() })
    }

    fn backward(&self, _params: &[f64], tape: &ArTape, d_scores: &[f64], grad: &mut [f64]) {
        // d log q(col | row) / d logit(row, j) = [j == col] - q(j | row).
        let n = self.space.n_logits();
        let usage = exec::map_chunks(tape.items.len(), exec::CHUNK, |r| {
            let mut u = vec![0.0; n];
            for (&i, d) in tape.items[r.clone()].iter().zip(&d_scores[r]) {
                for &e in self.entries_of(i) {
                    u[e as usize] += d;
                }
            }
            u
        });
        let usage = exec::sum_partials(usage, n);
        for row in 0..self.space.n_rows() {
            let off = self.space.row_offset(row);
            let w = self.space.row_width(row);
            let total: f64 = usage[off..off + w].iter().sum();
            for j in off..off + w {
                grad[j] += usage[j] - total * tape.probs[j];
            }
        }
    }

    fn kind(&self) -> &'static str {
        "ar-table"
    }
}

/// Labelled pool pairs as a training batch.
pub fn pool_batch(data: &SeqPrefData) -> Result<PairBatch> {
    PairBatch::from_triplets(&data.dataset.triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sequence_fit() {
        let space = TokenSpace::new(3, 4).unwrap();
        let t = fit_ar_table(&space, &[vec![1]], &LengthBand::new("all", 1, 4), 0.0).unwrap();
        assert!((t.conditional(0, 0)[1] - 1.0).abs() < 1e-12);
        assert!((t.conditional(1, 1)[space.end()] - 1.0).abs() < 1e-12);
        assert!(t.log_prob(&[1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_log_prob() {
        let space = TokenSpace::new(2, 3).unwrap();
        let mut logits = vec![0.0; space.n_logits()];
        // P(a | start) = 1/2, P(end | a) = 1/2 with a uniform over {a, b}.
        let row = space.trans_row(1, 0);
        let off = space.row_offset(row);
        logits[off] = 0.0;
        logits[off + 1] = crate::density::LOG_FLOOR;
        logits[off + 2] = 0.0;
        let t = ArTable::from_logits(space, logits).unwrap();
        assert!((t.log_prob(&[0]).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        assert!(matches!(t.log_prob(&[5]), Err(Error::UnknownToken { token: 5, vocab: 2 })));
    }

    #[test]
    fn conditionals_are_normalized() {
        let space = TokenSpace::default();
        let corpus = synth_corpus(&space, &uniform_length_law(&space), 2000, 1).unwrap();
        let t = fit_ar_table(&space, &corpus, &LengthBand::whole(), 0.05).unwrap();
        for c in t.conditionals() {
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (lengths, h) = t.length_marginal_and_entropy();
        assert!((lengths.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h > 0.0);
    }

    #[test]
    fn bimodality_rule() {
        assert!(is_bimodal(&[0.3, 0.2, 0.02, 0.01, 0.2, 0.27]));
        assert!(!is_bimodal(&[0.1, 0.2, 0.4, 0.2, 0.1]));
        assert!(!is_bimodal(&[0.25; 4]));
    }
}
