//! Preference processes, annotators and sampled datasets.

use std::sync::Arc;

use prefdens::density::{bimodal_target, normalize, GridDomain, Support};
use prefdens::pbde::{gen_dataset, sigmoid, Annotator, Item, PbdeSpec, PreferenceDataset, UniformGridPairs};
use proptest::prelude::*;

fn grid(n: usize) -> GridDomain {
    GridDomain::new(-10.0, 10.0, n).unwrap()
}

#[test]
fn hand_values() {
    let u = PbdeSpec::Unit;
    assert_eq!(u.omega(-1.2, Item::new(0)).unwrap(), -1.2);
    let ln = PbdeSpec::LengthNormalized;
    assert!((ln.omega(-30.0, Item::with_length(0, 20)).unwrap() + 1.5).abs() < 1e-15);
    assert_eq!(u.pref_prob(&[0.4, 0.4], Item::new(0), Item::new(1)).unwrap(), 0.5);
    let p = u.pref_prob(&[3f64.ln(), 0.0], Item::new(0), Item::new(1)).unwrap();
    assert!((p - 0.75).abs() < 1e-15);

    // (log p, length) = (-10, 10) against (-30, 20).
    let lp = [-10.0, -30.0];
    let (a, b) = (Item::with_length(0, 10), Item::with_length(1, 20));
    let normed = ln.pref_prob(&lp, a, b).unwrap();
    assert!((normed - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-15);
    assert!((normed - 0.622459).abs() < 1e-6);
    assert!(u.pref_prob(&lp, a, b).unwrap() > 1.0 - 1e-8);
}

#[test]
fn shifted_and_geometric_scores() {
    let reference: Arc<[f64]> = vec![-1.0, -2.0, -0.5].into();
    let s = PbdeSpec::Shifted { beta: 1.0, reference: reference.clone() };
    for (i, r) in reference.iter().enumerate() {
        assert_eq!(s.omega(*r, Item::new(i)).unwrap(), 0.0);
    }
    // Omega = (log p - (1 - alpha) log ref) / alpha.
    let g = PbdeSpec::Geometric { alpha: 0.25, reference: reference.clone() };
    let w = g.omega(-3.0, Item::new(1)).unwrap();
    assert!((w - (-3.0 - 0.75 * -2.0) / 0.25).abs() < 1e-12, "{w}");
    let s4 = PbdeSpec::Shifted { beta: 4.0, reference };
    assert!((s4.omega(-3.0, Item::new(2)).unwrap() - 4.0 * (-3.0 + 0.5)).abs() < 1e-12);
}

#[test]
fn annotator_mixture_against_density_mixture() {
    let floor = prefdens::density::LOG_FLOOR;
    let first = Annotator::from_log_values(PbdeSpec::Unit, vec![0.0, floor]);
    let second = Annotator::from_log_values(PbdeSpec::Unit, vec![floor, 0.0]);
    let mixed = Annotator::mixture(vec![0.5, 0.5], vec![first.clone(), second]).unwrap();
    assert!((mixed.pref_prob(Item::new(0), Item::new(1)).unwrap() - 0.5).abs() < 1e-12);
    let merged = Annotator::from_log_values(PbdeSpec::Unit, vec![0.5f64.ln(), 0.5f64.ln()]);
    assert_eq!(merged.pref_prob(Item::new(0), Item::new(1)).unwrap(), 0.5);
    let twin = Annotator::mixture(vec![0.3, 0.7], vec![first.clone(), first.clone()]).unwrap();
    for (a, b) in [(0, 1), (1, 0)] {
        let (x, y) = (Item::new(a), Item::new(b));
        assert!((twin.pref_prob(x, y).unwrap() - first.pref_prob(x, y).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn point_mass_annotator_always_prefers_its_point() {
    let d = grid(65);
    let mut raw = vec![f64::NEG_INFINITY; 65];
    raw[40] = 0.0;
    let spike = normalize(&raw, d).unwrap();
    let data = gen_dataset(&UniformGridPairs::new(d), &Annotator::single(PbdeSpec::Unit, &spike), d.into(), 20_000, 5)
        .unwrap();
    let mut hits = 0;
    for t in data.triplets.iter().filter(|t| (t.a.index == 40) != (t.b.index == 40)) {
        let winner = if t.y == 1 { t.a.index } else { t.b.index };
        assert_eq!(winner, 40);
        hits += 1;
    }
    assert!(hits > 100);
}

#[test]
fn sampled_labels_agree_with_the_annotator() {
    let d = grid(2048);
    let (target, _) = bimodal_target(&d).unwrap();
    let annotator = Annotator::single(PbdeSpec::Unit, &target);
    let data = gen_dataset(&UniformGridPairs::new(d), &annotator, d.into(), 1 << 15, 17).unwrap();
    // 10 x 10 bins on (x_a, x_b): mean label against mean probability. A
    // bin near the diagonal holds ~330 labels with p near 1/2, so its
    // standard error alone is ~0.028; each bin gets max(0.05, 4 SE).
    let bin = |i: usize| (i * 10 / d.len()).min(9);
    let mut sum_y = [[0.0; 10]; 10];
    let mut sum_p = [[0.0; 10]; 10];
    let mut sum_var = [[0.0; 10]; 10];
    let mut count = [[0usize; 10]; 10];
    for t in &data.triplets {
        let (r, c) = (bin(t.a.index), bin(t.b.index));
        sum_y[r][c] += t.y as f64;
        let p = annotator.pref_prob(t.a, t.b).unwrap();
        sum_p[r][c] += p;
        sum_var[r][c] += p * (1.0 - p);
        count[r][c] += 1;
    }
    let mut within_005 = 0;
    for r in 0..10 {
        for c in 0..10 {
            let n = count[r][c] as f64;
            assert!(n > 200.0);
            let gap = (sum_y[r][c] - sum_p[r][c]).abs() / n;
            let se = sum_var[r][c].sqrt() / n;
            assert!(gap <= 0.05f64.max(4.0 * se), "bin ({r}, {c}): gap {gap}, se {se}");
            within_005 += (gap <= 0.05) as usize;
        }
    }
    assert!(within_005 >= 95, "{within_005}");
}

#[test]
fn datasets_are_deterministic_and_round_trip() {
    let d = grid(128);
    let (target, _) = bimodal_target(&d).unwrap();
    let annotator = Annotator::single(PbdeSpec::Unit, &target);
    let proposal = UniformGridPairs::new(d);
    let a = gen_dataset(&proposal, &annotator, d.into(), 3000, 23).unwrap();
    let b = gen_dataset(&proposal, &annotator, d.into(), 3000, 23).unwrap();
    assert_eq!(a.triplets, b.triplets);
    let prefix = gen_dataset(&proposal, &annotator, d.into(), 1000, 23).unwrap();
    assert_eq!(prefix.triplets[..], a.triplets[..1000]);
    let back = PreferenceDataset::from_csv(&a.to_csv(), &a.sidecar_json().unwrap()).unwrap();
    assert_eq!(back.triplets, a.triplets);
    assert!(gen_dataset(&proposal, &annotator, Support::from(d), 0, 1).is_err());
}

proptest! {
    #[test]
    fn preferences_are_complementary(
        la in -50.0f64..0.0, lb in -50.0f64..0.0, na in 1u32..30, nb in 1u32..30,
    ) {
        let lp = [la, lb];
        let (a, b) = (Item::with_length(0, na), Item::with_length(1, nb));
        for spec in [PbdeSpec::Unit, PbdeSpec::LengthNormalized] {
            let p = spec.pref_prob(&lp, a, b).unwrap();
            let q = spec.pref_prob(&lp, b, a).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p + q - 1.0).abs() < 1e-12);
        }
        let unit = PbdeSpec::Unit.pref_prob(&lp, a, b).unwrap();
        prop_assert!((unit - sigmoid(la - lb)).abs() < 1e-15);
    }

    #[test]
    fn mixtures_stay_between_members(
        a in prop::collection::vec(-10.0f64..0.0, 4),
        b in prop::collection::vec(-10.0f64..0.0, 4),
        w in 0.0f64..1.0,
        i in 0usize..4, j in 0usize..4,
    ) {
        let x = Annotator::from_log_values(PbdeSpec::Unit, a);
        let y = Annotator::from_log_values(PbdeSpec::Unit, b);
        let m = Annotator::mixture(vec![w, 1.0 - w], vec![x.clone(), y.clone()]).unwrap();
        let (p, q) = (x.pref_prob(Item::new(i), Item::new(j)).unwrap(), y.pref_prob(Item::new(i), Item::new(j)).unwrap());
        let r = m.pref_prob(Item::new(i), Item::new(j)).unwrap();
        prop_assert!((r - (w * p + (1.0 - w) * q)).abs() < 1e-12);
    }
}
