//! Fully connected tanh network on a one-dimensional grid.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng as _;

use crate::density::{log_sum_exp, GridDomain, Support};
use crate::exec;
use crate::learners::Architecture;
use crate::seed::Rng;

const ROWS_PER_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyMode {
    /// Raw network output; no normalization.
    Reward,
    /// Output normalized over the whole grid.
    Policy,
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

/// `1 -> width x depth (tanh) -> 1`. Inputs are grid coordinates mapped
/// affinely onto `[-input_scale, input_scale]`. The default scale is the
/// interval's half-width, so a centered grid feeds raw coordinates.
#[derive(Clone, Debug)]
pub struct EnergyArch {
    domain: GridDomain,
    support: Support,
    mode: EnergyMode,
    input_scale: f64,
    layers: Vec<Layer>,
    n_params: usize,
    log_w: Vec<f64>,
}

impl EnergyArch {
    pub fn new(domain: GridDomain, mode: EnergyMode) -> Self {
        Self::with_shape(domain, mode, 64, 4, 0.5 * (domain.hi() - domain.lo()))
    }

    pub fn with_shape(domain: GridDomain, mode: EnergyMode, width: usize, depth: usize, input_scale: f64) -> Self {
        assert!(width >= 1 && depth >= 1);
        let mut dims = vec![1];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(1);
        let mut layers = Vec::new();
        let mut off = 0;
        for pair in dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            layers.push(Layer { w: off, b: off + fan_in * fan_out, fan_in, fan_out });
            off += fan_in * fan_out + fan_out;
        }
        let log_w = domain.trapezoid_weights().iter().map(|w| w.ln()).collect();
        Self { domain, support: Support::Grid(domain), mode, input_scale, layers, n_params: off, log_w }
    }

    pub fn mode(&self) -> EnergyMode {
        self.mode
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    /// The same network viewed in another mode or on another grid over the
    /// same interval, so the parameters keep their meaning.
    pub fn rebind(&self, domain: GridDomain, mode: EnergyMode) -> Self {
        assert!(domain.lo() == self.domain.lo() && domain.hi() == self.domain.hi(), "rebinding must keep the interval");
        let width = self.layers[0].fan_out;
        Self::with_shape(domain, mode, width, self.layers.len() - 1, self.input_scale)
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.n_params];
        for l in &self.layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            for v in &mut p[l.w..l.b + l.fan_out] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    fn input(&self, x: f64) -> f64 {
        let mid = 0.5 * (self.domain.lo() + self.domain.hi());
        let half = 0.5 * (self.domain.hi() - self.domain.lo());
        (x - mid) / half * self.input_scale
    }

    fn weights<'a>(&self, params: &'a [f64], l: &Layer) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let w = ArrayView2::from_shape((l.fan_out, l.fan_in), &params[l.w..l.b]).expect("layer shape");
        let b = ArrayView1::from(&params[l.b..l.b + l.fan_out]);
        (w, b)
    }

    /// Raw outputs at grid indices `items`.
    pub fn raw_forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, MlpTape) {
        let chunks = exec::map_chunks(items.len(), ROWS_PER_CHUNK, |r| {
            let xs: Vec<f64> = items[r].iter().map(|&i| self.input(self.domain.point(i))).collect();
            let mut h = Array2::from_shape_vec((xs.len(), 1), xs).expect("input shape");
            let mut acts = Vec::with_capacity(self.layers.len());
            let last = self.layers.len() - 1;
            for (li, l) in self.layers.iter().enumerate() {
                let (w, b) = self.weights(params, l);
                let mut z = h.dot(&w.t());
                z += &b;
                if li < last {
                    tanh_inplace(z.as_slice_memory_order_mut().expect("contiguous activations"));
                }
                acts.push(std::mem::replace(&mut h, z));
            }
            let out = h.into_raw_vec_and_offset().0;
            (out, acts)
        });
        let mut out = Vec::with_capacity(items.len());
        let mut tape = Vec::with_capacity(chunks.len());
        for (o, acts) in chunks {
            out.extend(o);
            tape.push(acts);
        }
        (out, MlpTape { chunks: tape })
    }

    /// Accumulates gradients of `sum_i d_out[i] * out_i` into `grad`.
    pub fn raw_backward(&self, params: &[f64], tape: &MlpTape, d_out: &[f64], grad: &mut [f64]) {
        let n = self.n_params;
        let partials = exec::map_chunks(tape.chunks.len(), 1, |r| {
            let c = r.start;
            let acts = &tape.chunks[c];
            let start = c * ROWS_PER_CHUNK;
            let rows = acts[0].nrows();
            let mut g = vec![0.0; n];
            let mut delta = Array2::from_shape_vec((rows, 1), d_out[start..start + rows].to_vec()).expect("shape");
            for (li, l) in self.layers.iter().enumerate().rev() {
                let h_prev = &acts[li];
                if li + 1 < self.layers.len() {
                    // delta currently holds d/dh for this layer's tanh output.
                    let h = &acts[li + 1];
                    ndarray::Zip::from(&mut delta).and(h).for_each(|d, &hv| *d *= 1.0 - hv * hv);
                }
                {
                    let (gw, rest) = g[l.w..].split_at_mut(l.b - l.w);
                    let mut gw = ArrayViewMut2::from_shape((l.fan_out, l.fan_in), gw).expect("shape");
                    general_mat_mul(1.0, &delta.t(), h_prev, 1.0, &mut gw);
                    let mut gb = ArrayViewMut1::from(&mut rest[..l.fan_out]);
                    gb += &delta.sum_axis(Axis(0));
                }
                if li > 0 {
                    let (w, _) = self.weights(params, l);
                    delta = delta.dot(&w);
                }
            }
            g
        });
        for part in partials {
            for (o, p) in grad.iter_mut().zip(part) {
                *o += p;
            }
        }
    }
}

/// `exp(y)` for `y` in `[-45, 0]`: Cody-Waite reduction and a degree-13
/// Taylor polynomial, written without branches or float-to-int casts so the
/// loop in [`tanh_inplace`] vectorizes.
#[inline(always)]
#[allow(clippy::excessive_precision)]
fn exp_nonpositive(y: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238_2e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let t = y * std::f64::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = y - k * LN2_HI - k * LN2_LO;
    const C: [f64; 13] = [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let mut p = 1.0 / 6_227_020_800.0;
    for c in C {
        p = p * r + c;
    }
    // The low mantissa bits of `t` hold k in two's complement.
    p * f64::from_bits(t.to_bits().wrapping_add(1023) << 52)
}

/// Hyperbolic tangent to within a few ulps of `f64::tanh`, about twice as
/// fast. Small arguments use the odd Taylor series to avoid cancellation.
fn tanh_inplace(xs: &mut [f64]) {
    for x in xs {
        let a = x.abs().min(20.0);
        let e = exp_nonpositive(-2.0 * a);
        let big = (1.0 - e) / (1.0 + e);
        let a2 = a * a;
        let small = a
            * (1.0
                + a2 * (-1.0 / 3.0
                    + a2 * (2.0 / 15.0
                        + a2 * (-17.0 / 315.0
                            + a2 * (62.0 / 2835.0
                                + a2 * (-1382.0 / 155_925.0
                                    + a2 * (21_844.0 / 6_081_075.0 + a2 * (-929_569.0 / 638_512_875.0))))))));
        *x = if a < 0.1 { small } else { big }.copysign(*x);
    }
}

/// Layer inputs per row chunk.
pub struct MlpTape {
    chunks: Vec<Vec<Array2<f64>>>,
}

pub struct EnergyTape {
    mlp: MlpTape,
    /// Grid items the network ran on; in policy mode, the whole grid.
    ran_on: Vec<usize>,
    /// Policy mode: mass per grid point.
    mass: Option<Vec<f64>>,
    items: Vec<usize>,
}

impl Architecture for EnergyArch {
    type Tape = EnergyTape;

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn normalized(&self) -> bool {
        self.mode == EnergyMode::Policy
    }

    fn forward(&self, params: &[f64], items: &[usize]) -> (Vec<f64>, EnergyTape) {
        match self.mode {
            EnergyMode::Reward => {
                let (out, mlp) = self.raw_forward(params, items);
                (out, EnergyTape { mlp, ran_on: items.to_vec(), mass: None, items: items.to_vec() })
            }
            EnergyMode::Policy => {
                let all: Vec<usize> = (0..self.domain.len()).collect();
                let (raw, mlp) = self.raw_forward(params, &all);
                let shifted: Vec<f64> = raw.iter().zip(&self.log_w).map(|(r, lw)| r + lw).collect();
                let lse = log_sum_exp(&shifted);
                let mass = shifted.iter().map(|s| (s - lse).exp()).collect();
                let scores = items.iter().map(|&i| raw[i] - lse).collect();
                (scores, EnergyTape { mlp, ran_on: all, mass: Some(mass), items: items.to_vec() })
            }
        }
    }

    fn backward(&self, params: &[f64], tape: &EnergyTape, d_scores: &[f64], grad: &mut [f64]) {
        match &tape.mass {
            None => self.raw_backward(params, &tape.mlp, d_scores, grad),
            Some(mass) => {
                let total: f64 = d_scores.iter().sum();
                let mut d_raw: Vec<f64> = mass.iter().map(|m| -total * m).collect();
                for (&i, d) in tape.items.iter().zip(d_scores) {
                    d_raw[i] += d;
                }
                debug_assert_eq!(tape.ran_on.len(), d_raw.len());
                self.raw_backward(params, &tape.mlp, &d_raw, grad);
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self.mode {
            EnergyMode::Reward => "energy-reward",
            EnergyMode::Policy => "energy-policy",
        }
    }
}
