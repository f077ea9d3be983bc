//! Losses, gradients and fixed points of the learners.

use std::sync::Arc;

use prefdens::density::{bimodal_target, normalize, total_variation, GridDomain, LogDensity, Support};
use prefdens::learners::{
    expected_entropy, mixture_bce_loss, pair_loss, rrhf_loss, theoretical_optimum, Architecture, EnergyArch,
    EnergyMode, LossEval, LossSpec, MixtureArch, OptimumKind, PairBatch, PairLoss, PairLossKind, Policy, RankedList,
    Regularizer, TabularArch, WeightedPair,
};
use prefdens::optim::{grad_check, train, AdamConfig, CosineSchedule, TrainRun};
use prefdens::pbde::{Annotator, Item, PbdeSpec};
use prefdens::seed;
use proptest::prelude::*;
use rand::Rng;

fn grid(n: usize) -> GridDomain {
    GridDomain::new(-10.0, 10.0, n).unwrap()
}

/// A tabular policy over `n` unit-weight items with the given log-masses.
fn items_policy(log_p: &[f64]) -> Policy<TabularArch> {
    Policy::new(TabularArch::new(Support::items(log_p.len()).unwrap()), log_p.to_vec()).unwrap()
}

fn one_pair(t: f64) -> PairBatch {
    PairBatch::from_parts(vec![Item::new(0), Item::new(1)], vec![WeightedPair { a: 0, b: 1, w: 1.0, t }]).unwrap()
}

fn bce(p: PbdeSpec) -> PairLoss {
    PairLoss { transform: p, kind: PairLossKind::Bce }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn pairwise_losses_by_hand() {
    let none = Regularizer::None;
    // Equal scores: ln 2.
    let even = items_policy(&[0.5f64.ln(), 0.5f64.ln()]);
    let l = pair_loss(&even, &bce(PbdeSpec::Unit), &one_pair(1.0), &none).unwrap().loss;
    assert!((l - 2f64.ln()).abs() < 1e-15);
    // Margin ln 3 toward the preferred item: -ln 0.75.
    let tilted = items_policy(&[0.75f64.ln(), 0.25f64.ln()]);
    let l = pair_loss(&tilted, &bce(PbdeSpec::Unit), &one_pair(1.0), &none).unwrap().loss;
    assert!((l + 0.75f64.ln()).abs() < 1e-15 && (l - 0.287682).abs() < 1e-6);
    // Saturated margin.
    let sure = items_policy(&[0.0, -200.0]);
    assert!(pair_loss(&sure, &bce(PbdeSpec::Unit), &one_pair(1.0), &none).unwrap().loss < 1e-80);

    // Hinge: delta 1, margin 0.4 gives 0.6; delta 0 with a positive margin gives 0.
    let m04 = items_policy(&[-1.0, -1.4]);
    let hinge = |delta| PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Hinge { delta } };
    let l = pair_loss(&m04, &hinge(1.0), &one_pair(1.0), &none).unwrap().loss;
    assert!((l - 0.6).abs() < 1e-12);
    assert_eq!(pair_loss(&m04, &hinge(0.0), &one_pair(1.0), &none).unwrap().loss, 0.0);

    // Against a reference: a zero log-ratio margin costs delta; margin 2 costs nothing.
    let reference: Arc<[f64]> = vec![0.5f64.ln(), 0.5f64.ln()].into();
    let rso = |delta| LossSpec::RsoHinge { delta, reference: reference.clone() }.pair_loss().unwrap().unwrap();
    assert!((pair_loss(&even, &rso(1.0), &one_pair(1.0), &none).unwrap().loss - 1.0).abs() < 1e-15);
    assert_eq!(pair_loss(&even, &rso(0.0), &one_pair(1.0), &none).unwrap().loss, 0.0);
    let two = items_policy(&[0.5f64.ln() + 1.0, 0.5f64.ln() - 1.0]);
    assert!(pair_loss(&two, &rso(1.0), &one_pair(1.0), &none).unwrap().loss.abs() < 1e-15);

    // IPO: h = 0 at tau 0.5 costs 1; h = 1/(2 tau) costs 0.
    let ipo = |tau| LossSpec::Ipo { tau, reference: reference.clone() }.pair_loss().unwrap().unwrap();
    assert!((pair_loss(&even, &ipo(0.5), &one_pair(1.0), &none).unwrap().loss - 1.0).abs() < 1e-15);
    let root = items_policy(&[0.5f64.ln() + 0.5, 0.5f64.ln() - 0.5]);
    assert!(pair_loss(&root, &ipo(0.5), &one_pair(1.0), &none).unwrap().loss < 1e-28);
}

#[test]
fn ranking_loss_by_hand() {
    // log p = (-2, -1, rest): preferring the less likely item costs the gap.
    let rest = (1.0 - (-2f64).exp() - (-1f64).exp()).ln();
    let p = items_policy(&[-2.0, -1.0, rest]);
    let list = RankedList::new(vec![Item::new(0), Item::new(1)]).unwrap();
    let l = rrhf_loss(&p, std::slice::from_ref(&list), false, 0.0).unwrap().loss;
    assert!((l - 1.0).abs() < 1e-12, "{l}");
    let flipped = RankedList::new(vec![Item::new(1), Item::new(0)]).unwrap();
    assert_eq!(rrhf_loss(&p, &[flipped], false, 0.0).unwrap().loss, 0.0);
    let even = items_policy(&[0.5f64.ln(), 0.5f64.ln()]);
    assert_eq!(rrhf_loss(&even, std::slice::from_ref(&list), false, 0.0).unwrap().loss, 0.0);
    // The likelihood term adds -coeff * log p(top).
    let l = rrhf_loss(&even, &[list], false, 0.5).unwrap().loss;
    assert!((l - 0.5 * 2f64.ln()).abs() < 1e-15);
}

#[test]
fn likelihood_regularizer_is_mean_log_probability() {
    let p = items_policy(&[0.2f64.ln(), 0.3f64.ln(), 0.5f64.ln()]);
    let reg = Regularizer::LogLikelihood { lambda: 2.0, items: vec![0, 2, 2] };
    let hinge = PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Hinge { delta: 0.0 } };
    let batch =
        PairBatch::from_parts(vec![Item::new(2), Item::new(0)], vec![WeightedPair { a: 0, b: 1, w: 1.0, t: 1.0 }])
            .unwrap();
    let l = pair_loss(&p, &hinge, &batch, &reg).unwrap().loss;
    let want = -2.0 * (0.2f64.ln() + 2.0 * 0.5f64.ln()) / 3.0;
    assert!((l - want).abs() < 1e-12, "{l} vs {want}");
    let empty = Regularizer::LogLikelihood { lambda: 1.0, items: vec![] };
    assert!(pair_loss(&p, &hinge, &batch, &empty).is_err());
}

/// Every process at its own implicit density is a stationary point whose
/// loss is the annotator's expected entropy.
#[test]
fn shared_process_fixed_point() {
    let d = grid(48);
    let (target, _) = bimodal_target(&d).unwrap();
    let reference = normalize(&d.points().iter().map(|x| -0.02 * x * x).collect::<Vec<_>>(), d).unwrap();
    let specs = [
        PbdeSpec::Unit,
        PbdeSpec::LengthNormalized,
        PbdeSpec::shifted(4.0, &reference).unwrap(),
        PbdeSpec::geometric(0.5, &reference).unwrap(),
    ];
    let items: Vec<Item> = (0..d.len()).map(|i| Item::with_length(i, 1 + (i % 4) as u32)).collect();
    for spec in specs {
        let batch = PairBatch::exact(&Annotator::single(spec.clone(), &target), &items).unwrap();
        let policy = Policy::new(TabularArch::new(d), TabularArch::logits_for(&target)).unwrap();
        let eval = pair_loss(&policy, &bce(spec.clone()), &batch, &Regularizer::None).unwrap();
        assert!(norm(&eval.grad) <= 1e-10, "{}: {}", spec.name(), norm(&eval.grad));
        assert!((eval.loss - expected_entropy(&batch)).abs() < 1e-12, "{}", spec.name());

        // Training from the fixed point at the default rate does not move it.
        let mut moved = policy.clone();
        let mut f = |p: &Policy<TabularArch>, _| pair_loss(p, &bce(spec.clone()), &batch, &Regularizer::None);
        let lr = 5e-4;
        train(&mut moved, &mut f, &AdamConfig::with_lr(lr), &CosineSchedule::new(lr, 1000), &TrainRun::new(1000), None)
            .unwrap();
        let tv = total_variation(&moved.log_density().unwrap(), &target).unwrap();
        assert!(tv <= 1e-9, "{}: {tv}", spec.name());
    }
}

fn fit_items(learner: PbdeSpec, annotator: &Annotator, n: usize, steps: usize) -> LogDensity {
    let items: Vec<Item> = (0..n).map(Item::new).collect();
    let batch = PairBatch::exact(annotator, &items).unwrap();
    let mut policy = items_policy(&vec![0.0; n]);
    let loss = bce(learner);
    let mut f = |p: &Policy<TabularArch>, _| pair_loss(p, &loss, &batch, &Regularizer::None);
    train(
        &mut policy,
        &mut f,
        &AdamConfig::with_lr(0.1),
        &CosineSchedule::new(0.1, steps),
        &TrainRun::new(steps),
        None,
    )
    .unwrap();
    policy.log_density().unwrap()
}

/// Three items: cross-entropy under a mismatched process lands on the
/// closed-form optimum, computed here by hand.
#[test]
fn three_item_optima() {
    let s = Support::items(3).unwrap();
    let target = normalize(&[0.6f64.ln(), 0.3f64.ln(), 0.1f64.ln()], s).unwrap();
    let prior = normalize(&[0.2f64.ln(), 0.5f64.ln(), 0.3f64.ln()], s).unwrap();
    let ratio = Annotator::single(PbdeSpec::Unit, &target);
    let hand = |w: [f64; 3]| {
        let z: f64 = w.iter().sum();
        w.map(|v| v / z)
    };

    let beta = 2.0;
    let got = fit_items(PbdeSpec::shifted(beta, &prior).unwrap(), &ratio, 3, 4000).density();
    let want = hand([0.2 * 0.6f64.sqrt(), 0.5 * 0.3f64.sqrt(), 0.3 * 0.1f64.sqrt()]);
    let closed = theoretical_optimum(OptimumKind::ProductOfExperts { beta }, &prior, &target).unwrap().density();
    for i in 0..3 {
        assert!((got[i] - want[i]).abs() < 1e-6, "{got:?} vs {want:?}");
        assert!((closed[i] - want[i]).abs() < 1e-12);
    }

    let alpha = 0.5;
    let got = fit_items(PbdeSpec::geometric(alpha, &prior).unwrap(), &ratio, 3, 4000).density();
    let want = hand([(0.2f64 * 0.6).sqrt(), (0.5f64 * 0.3).sqrt(), (0.3f64 * 0.1).sqrt()]);
    let closed = theoretical_optimum(OptimumKind::GeometricMean { alpha }, &prior, &target).unwrap().density();
    for i in 0..3 {
        assert!((got[i] - want[i]).abs() < 1e-6, "{got:?} vs {want:?}");
        assert!((closed[i] - want[i]).abs() < 1e-12);
    }

    let got = fit_items(PbdeSpec::Unit, &ratio, 3, 4000).density();
    for (g, t) in got.iter().zip(target.density()) {
        assert!((g - t).abs() < 1e-6);
    }
}

/// Central-difference check that holds `inert` coordinates fixed.
fn check_without(
    f: impl Fn(&[f64]) -> prefdens::Result<LossEval>,
    params: &[f64],
    inert: &[usize],
    probes: usize,
    seed: u64,
) -> f64 {
    let keep: Vec<usize> = (0..params.len()).filter(|i| !inert.contains(i)).collect();
    let reduced = |x: &[f64]| {
        let mut full = params.to_vec();
        for (&i, v) in keep.iter().zip(x) {
            full[i] = *v;
        }
        let e = f(&full)?;
        Ok(LossEval { loss: e.loss, grad: keep.iter().map(|&i| e.grad[i]).collect() })
    };
    let x0: Vec<f64> = keep.iter().map(|&i| params[i]).collect();
    grad_check(reduced, &x0, probes, seed).unwrap()
}

/// Soft-target pairs where every item appears at least once. An item in no
/// pair has an exactly zero gradient, which central differences can only
/// resolve to roundoff.
fn soft_batch(n: usize, pairs: usize, rng: &mut impl Rng) -> PairBatch {
    let items = (0..n).map(|i| Item::with_length(i, 1 + (i % 3) as u32)).collect();
    let pairs = (0..pairs.max(n))
        .map(|k| {
            let a = if k < n { k } else { rng.random_range(0..n) };
            let b = (a + rng.random_range(1..n)) % n;
            WeightedPair { a, b, w: rng.random_range(0.5..1.5) / 32.0, t: rng.random_range(0.0..1.0) }
        })
        .collect();
    PairBatch::from_parts(items, pairs).unwrap()
}

fn all_losses(reference: &[f64]) -> Vec<(&'static str, PairLoss, bool)> {
    let r: Arc<[f64]> = reference.to_vec().into();
    vec![
        ("bce", bce(PbdeSpec::LengthNormalized), false),
        ("slic", LossSpec::SlicDirect { delta: 1.0, lambda: 0.5 }.pair_loss().unwrap().unwrap(), true),
        ("rso", LossSpec::RsoHinge { delta: 1.0, reference: r.clone() }.pair_loss().unwrap().unwrap(), false),
        ("ipo", LossSpec::Ipo { tau: 0.5, reference: r }.pair_loss().unwrap().unwrap(), false),
    ]
}

fn check_all<A: Architecture + Clone>(arch: A, params: &[f64], inert: &[usize], seed: u64) -> Vec<(String, f64)> {
    let mut rng = prefdens::seed::rng(seed);
    let n = arch.support().len();
    let batch = soft_batch(n, 32, &mut rng);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
    let reference = normalize(&raw, *arch.support()).unwrap().log_p().to_vec();
    let reg_items: Vec<usize> = (0..16).map(|_| rng.random_range(0..n)).collect();
    let mut out = Vec::new();
    for (name, loss, with_reg) in all_losses(&reference) {
        let reg = if with_reg {
            Regularizer::LogLikelihood { lambda: 0.5, items: reg_items.clone() }
        } else {
            Regularizer::None
        };
        let f = |p: &[f64]| pair_loss(&Policy::new(arch.clone(), p.to_vec())?, &loss, &batch, &reg);
        out.push((name.to_string(), check_without(f, params, inert, 64, seed)));
    }
    let lists: Vec<RankedList> = (0..8)
        .map(|k| {
            let items = (0..4).map(|j| Item::with_length((k * 5 + j * 3) % n, 1 + (j % 3) as u32)).collect();
            RankedList::by_score(items, |x| reference[x.index]).unwrap()
        })
        .collect();
    let f = |p: &[f64]| rrhf_loss(&Policy::new(arch.clone(), p.to_vec())?, &lists, true, 0.5);
    out.push(("rrhf".into(), check_without(f, params, inert, 64, seed)));
    out
}

#[test]
fn tabular_gradients_match_finite_differences() {
    let mut rng = seed::rng(41);
    let arch = TabularArch::new(grid(16));
    let params: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    for (name, err) in check_all(arch.clone(), &params, &[], 3) {
        assert!(err <= 1e-5, "{name}: {err}");
    }
    let mix = MixtureArch::new(arch, 2);
    let mp: Vec<f64> = (0..mix.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = soft_batch(16, 32, &mut rng);
    let f = |p: &[f64]| mixture_bce_loss(&Policy::new(mix.clone(), p.to_vec())?, &batch);
    let err = check_without(f, &mp, &[], 34, 5);
    assert!(err <= 1e-5, "mixture-bce: {err}");
}

/// The normalized network's output bias cancels in the normalization, so
/// its gradient is exactly zero and is left out of the probe set. The
/// losses are evaluated at the network's own initialization.
#[test]
fn energy_gradients_match_finite_differences() {
    let arch = EnergyArch::with_shape(grid(32), EnergyMode::Policy, 8, 2, 1.0);
    let mut rng = seed::rng(43);
    let params = arch.init_params(&mut rng);
    let bias = arch.n_params() - 1;
    let mut worst = Vec::new();
    for (name, err) in check_all(arch.clone(), &params, &[bias], 9) {
        worst.push((name, err));
    }
    let g = {
        let policy = Policy::new(arch.clone(), params.clone()).unwrap();
        pair_loss(&policy, &bce(PbdeSpec::Unit), &soft_batch(32, 32, &mut seed::rng(1)), &Regularizer::None)
            .unwrap()
            .grad
    };
    assert!(g[bias].abs() < 1e-15, "{}", g[bias]);
    for (name, err) in worst {
        assert!(err <= 1e-5, "{name}: {err}");
    }
}

#[test]
fn reward_network_shape() {
    let arch = EnergyArch::new(grid(2048), EnergyMode::Reward);
    assert_eq!(arch.n_params(), 12_673);
    let p = arch.init_params(&mut seed::rng(1));
    let policy = Policy::new(arch, p).unwrap();
    assert!((policy.log_density().unwrap().mass() - 1.0).abs() < 1e-12);
}

#[test]
fn single_head_mixture_is_plain_cross_entropy() {
    let d = grid(24);
    let (target, _) = bimodal_target(&d).unwrap();
    let batch =
        PairBatch::exact(&Annotator::single(PbdeSpec::Unit, &target), &(0..24).map(Item::new).collect::<Vec<_>>())
            .unwrap();
    let logits: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin()).collect();
    let plain = pair_loss(
        &Policy::new(TabularArch::new(d), logits.clone()).unwrap(),
        &bce(PbdeSpec::Unit),
        &batch,
        &Regularizer::None,
    )
    .unwrap();
    let arch = MixtureArch::new(TabularArch::new(d), 1);
    let mixed = mixture_bce_loss(&Policy::new(arch.clone(), arch.pack(&[logits])).unwrap(), &batch).unwrap();
    assert!((plain.loss - mixed.loss).abs() < 1e-12);
    for (a, b) in plain.grad.iter().zip(&mixed.grad) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(mixed.grad[24].abs() < 1e-15);
}

/// Heads equal to the two components with weights (0.4, 0.6) reproduce a
/// two-annotator process exactly.
#[test]
fn well_specified_mixture_is_stationary() {
    let d = grid(40);
    let (_, [left, right]) = bimodal_target(&d).unwrap();
    let annotator = Annotator::mixture(
        vec![0.4, 0.6],
        vec![Annotator::single(PbdeSpec::Unit, &left), Annotator::single(PbdeSpec::Unit, &right)],
    )
    .unwrap();
    let batch = PairBatch::exact(&annotator, &(0..40).map(Item::new).collect::<Vec<_>>()).unwrap();
    let arch = MixtureArch::new(TabularArch::new(d), 2);
    let mut params = arch.pack(&[TabularArch::logits_for(&left), TabularArch::logits_for(&right)]);
    let k = params.len();
    params[k - 2] = 0.4f64.ln();
    params[k - 1] = 0.6f64.ln();
    let eval = mixture_bce_loss(&Policy::new(arch, params).unwrap(), &batch).unwrap();
    assert!((eval.loss - expected_entropy(&batch)).abs() < 1e-12);
    assert!(norm(&eval.grad) < 1e-10, "{}", norm(&eval.grad));
}

#[test]
fn policy_documents_round_trip() {
    let arch = EnergyArch::with_shape(grid(16), EnergyMode::Reward, 4, 1, 1.0);
    let p = Policy::new(arch.clone(), arch.init_params(&mut seed::rng(2))).unwrap();
    let text = serde_json::to_string(&p.to_doc()).unwrap();
    let back = Policy::from_doc(arch, &serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.params, p.params);
    assert!(Policy::from_doc(TabularArch::new(grid(16)), &p.to_doc()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tabular_logits_are_shift_invariant(logits in prop::collection::vec(-5.0f64..5.0, 12), c in -30.0f64..30.0) {
        let arch = TabularArch::new(grid(12));
        let a = Policy::new(arch.clone(), logits.clone()).unwrap().log_density().unwrap();
        let b = Policy::new(arch, logits.iter().map(|v| v + c).collect()).unwrap().log_density().unwrap();
        for (x, y) in a.log_p().iter().zip(b.log_p()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_heads_give_the_head(logits in prop::collection::vec(-5.0f64..5.0, 10)) {
        let arch = MixtureArch::new(TabularArch::new(grid(10)), 2);
        let mixed = Policy::new(arch.clone(), arch.pack(&[logits.clone(), logits.clone()])).unwrap().scores();
        let single = Policy::new(TabularArch::new(grid(10)), logits).unwrap().scores();
        for (x, y) in mixed.iter().zip(&single) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_gradient_on_random_tabular_policies(seed in 0u64..1000) {
        let mut rng = seed::rng(seed);
        let params: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let batch = soft_batch(16, 32, &mut rng);
        let arch = TabularArch::new(grid(16));
        let f = |p: &[f64]| pair_loss(&Policy::new(arch.clone(), p.to_vec())?, &bce(PbdeSpec::Unit), &batch, &Regularizer::None);
        prop_assert!(grad_check(f, &params, 16, seed).unwrap() <= 1e-5);
    }

    #[test]
    fn pair_loss_kinds_match_their_formulas(m in -20.0f64..20.0, t in 0.0f64..1.0, delta in 0.0f64..3.0, c in 0.1f64..5.0) {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let (l, d) = PairLossKind::Bce.eval(m, t);
        let want = -t * sig(m).ln() - (1.0 - t) * sig(-m).ln();
        prop_assert!((l - want).abs() < 1e-9 * (1.0 + want.abs()));
        prop_assert!((d - (sig(m) - t)).abs() < 1e-12);
        let (l, _) = PairLossKind::Hinge { delta }.eval(m, t);
        prop_assert!((l - (t * (delta - m).max(0.0) + (1.0 - t) * (delta + m).max(0.0))).abs() < 1e-12);
        let (l, d) = PairLossKind::Quadratic { target: c }.eval(m, t);
        prop_assert!((l - (t * (m - c).powi(2) + (1.0 - t) * (m + c).powi(2))).abs() < 1e-9);
        prop_assert!((d - (2.0 * t * (m - c) + 2.0 * (1.0 - t) * (m + c))).abs() < 1e-9);
    }
}
