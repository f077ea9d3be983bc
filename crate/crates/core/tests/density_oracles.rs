//! Densities on a grid checked against independent evaluations.

use prefdens::density::{
    bimodal_target, empirical_masses, eval_truncated_normal, kl, mix, normalize, total_variation, uniform_pairs,
    GridDomain, LogDensity, MixtureSpec, Support, TruncatedNormalSpec, LOG_FLOOR,
};
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn grid(n: usize) -> GridDomain {
    GridDomain::new(-10.0, 10.0, n).unwrap()
}

/// Trapezoid integral of `f` over the grid, computed without the library.
fn trapezoid(d: &GridDomain, f: impl Fn(f64) -> f64) -> f64 {
    let h = d.step();
    (0..d.len()).map(|i| f(d.point(i)) * if i == 0 || i + 1 == d.len() { 0.5 * h } else { h }).sum()
}

#[test]
fn truncated_normal_matches_statrs() {
    let d = grid(2048);
    for (mu, sigma) in [(0.0, 5.0), (2.5, 1.0), (-2.5, 0.5), (7.0, 0.3)] {
        let n = Normal::new(mu, sigma).unwrap();
        let z = trapezoid(&d, |x| n.pdf(x));
        let p = eval_truncated_normal(&TruncatedNormalSpec::on(&d, mu, sigma), &d).unwrap();
        for (i, lp) in p.log_p().iter().enumerate() {
            let want = (n.pdf(d.point(i)) / z).ln().max(LOG_FLOOR);
            assert!((lp - want).abs() < 1e-9, "mu {mu} sigma {sigma} at {i}: {lp} vs {want}");
        }
    }
}

#[test]
fn bimodal_target_matches_statrs_mixture() {
    let d = grid(2048);
    let (a, b) = (Normal::new(-2.5, 0.25).unwrap(), Normal::new(2.5, 1.0).unwrap());
    let za = trapezoid(&d, |x| a.pdf(x));
    let zb = trapezoid(&d, |x| b.pdf(x));
    let f = |x: f64| 0.4 * a.pdf(x) / za + 0.6 * b.pdf(x) / zb;
    let z = trapezoid(&d, f);
    let (target, parts) = bimodal_target(&d).unwrap();
    for i in 0..d.len() {
        let want = (f(d.point(i)) / z).ln();
        assert!((target.log_p()[i] - want).abs() < 1e-9);
    }
    let modes: Vec<f64> = target.local_maxima().iter().map(|&i| d.point(i)).collect();
    assert_eq!(modes.len(), 2);
    assert!((modes[0] + 2.5).abs() < 0.02 && (modes[1] - 2.5).abs() < 0.02, "{modes:?}");
    // Mass right of zero: 0.4 P(A > 0) + 0.6 P(B > 0), truncation negligible.
    let positive = trapezoid(&d, |x| if x > 0.0 { f(x) / z } else { 0.0 });
    let want = 0.4 * (1.0 - a.cdf(0.0)) + 0.6 * (1.0 - b.cdf(0.0));
    assert!((positive - want).abs() < 2e-3 && (positive - 0.6).abs() < 0.01, "{positive} vs {want}");
    assert_eq!(parts[0].argmax(), d.nearest(-2.5));
    assert_eq!(parts[1].argmax(), d.nearest(2.5));
}

#[test]
fn disjoint_normals_have_unit_tv() {
    let d = grid(2048);
    let p = eval_truncated_normal(&TruncatedNormalSpec::on(&d, -5.0, 0.1), &d).unwrap();
    let q = eval_truncated_normal(&TruncatedNormalSpec::on(&d, 5.0, 0.1), &d).unwrap();
    let tv = total_variation(&p, &q).unwrap();
    assert!((tv - 1.0).abs() < 1e-6, "{tv}");
}

#[test]
fn normalize_removes_a_constant_shift() {
    let d = grid(2048);
    let (target, _) = bimodal_target(&d).unwrap();
    let shifted: Vec<f64> = target.log_p().iter().map(|v| v + 7.3).collect();
    let back = normalize(&shifted, d).unwrap();
    for (a, b) in back.log_p().iter().zip(target.log_p()) {
        assert!((a - b).abs() < 1e-12);
    }
    let flat = normalize(&vec![3.0; 2048], d).unwrap();
    assert!(flat.density().iter().all(|v| (v - 0.05).abs() < 1e-12));
    assert!(normalize(&vec![f64::NEG_INFINITY; 2048], d).is_err());
}

#[test]
fn sampling_moments() {
    let d = grid(2048);
    let flat = normalize(&vec![0.0; 2048], d).unwrap();
    let xs = flat.sample(100_000, 3).unwrap();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 0.1, "{mean}");
    assert_eq!(xs, flat.sample(100_000, 3).unwrap());

    let spike = eval_truncated_normal(&TruncatedNormalSpec::on(&grid(2049), 0.0, 1e-3), &grid(2049)).unwrap();
    assert!(spike.sample(1000, 5).unwrap().iter().all(|x| x.abs() <= 0.01));
}

#[test]
fn sampled_masses_follow_the_density() {
    let d = grid(64);
    let (target, _) = bimodal_target(&d).unwrap();
    let xs = target.sample(200_000, 11).unwrap();
    let emp = empirical_masses(target.support(), &xs);
    // Nearest-point bins of the piecewise-linear interpolant.
    let p = target.density();
    let h = d.step();
    let n = p.len();
    let want: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { h / 8.0 * (p[i - 1] + 3.0 * p[i]) } else { 0.0 };
            let right = if i + 1 < n { h / 8.0 * (3.0 * p[i] + p[i + 1]) } else { 0.0 };
            left + right
        })
        .collect();
    let tv: f64 = 0.5 * emp.iter().zip(&want).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv < 0.01, "{tv}");
}

#[test]
fn uniform_pair_mean_is_centered() {
    let d = grid(2048);
    let pairs = uniform_pairs(&d, 1 << 15, 9);
    let mean = pairs.iter().map(|(a, _)| d.point(*a)).sum::<f64>() / pairs.len() as f64;
    assert!(mean.abs() < 0.15, "{mean}");
}

fn arb_log_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..5.0, n)
}

proptest! {
    #[test]
    fn normalized_mass_is_one(raw in arb_log_values(33), shift in -50.0f64..50.0) {
        let d = grid(33);
        let p = normalize(&raw, d).unwrap();
        prop_assert!((p.mass() - 1.0).abs() < 1e-12);
        let moved: Vec<f64> = raw.iter().map(|v| v + shift).collect();
        let q = normalize(&moved, d).unwrap();
        for (a, b) in p.log_p().iter().zip(q.log_p()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn divergences_are_bounded(a in arb_log_values(17), b in arb_log_values(17)) {
        let s = Support::items(17).unwrap();
        let p = normalize(&a, s).unwrap();
        let q = normalize(&b, s).unwrap();
        let tv = total_variation(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert!((tv - total_variation(&q, &p).unwrap()).abs() < 1e-15);
        let k = kl(&p, &q).unwrap();
        prop_assert!(k >= -1e-12);
        // Pinsker.
        prop_assert!(tv <= (0.5 * k.max(0.0)).sqrt() + 1e-9);
        prop_assert!(kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mixing_equal_components_is_idempotent(a in arb_log_values(21), w in 0.01f64..0.99) {
        let p = normalize(&a, grid(21)).unwrap();
        let m = mix(&MixtureSpec { weights: vec![w, 1.0 - w], components: vec![p.clone(), p.clone()] }).unwrap();
        for (x, y) in m.log_p().iter().zip(p.log_p()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(a in arb_log_values(19)) {
        let d = grid(19);
        let p = normalize(&a, d).unwrap();
        let q = LogDensity::from_csv(&p.to_csv(), d).unwrap();
        prop_assert_eq!(p.log_p(), q.log_p());
    }
}
