//! Bit-identical results across execution modes and repeated runs.

use std::sync::Mutex;

use prefdens::density::{bimodal_target, GridDomain};
use prefdens::exec::{map_chunks, map_jobs, set_parallelism, sum_partials, Parallelism};
use prefdens::learners::{
    mixture_bce_loss, pair_loss, EnergyArch, EnergyMode, LossEval, MixtureArch, PairBatch, PairLoss, PairLossKind,
    Policy, Regularizer, TabularArch,
};
use prefdens::optim::{adam_step, train, AdamConfig, AdamState, CosineSchedule, TrainRun};
use prefdens::pbde::{gen_dataset, Annotator, PbdeSpec, UniformGridPairs};
use prefdens::seed;
use proptest::prelude::*;

/// The execution mode is process-wide; tests that switch it take this lock.
static MODE: Mutex<()> = Mutex::new(());

fn in_mode<T>(mode: Parallelism, f: impl FnOnce() -> T) -> T {
    set_parallelism(mode);
    let out = f();
    set_parallelism(Parallelism::Parallel);
    out
}

fn grid(n: usize) -> GridDomain {
    GridDomain::new(-10.0, 10.0, n).unwrap()
}

fn energy_eval() -> LossEval {
    let d = grid(512);
    let (target, _) = bimodal_target(&d).unwrap();
    let data =
        gen_dataset(&UniformGridPairs::new(d), &Annotator::single(PbdeSpec::Unit, &target), d.into(), 4096, 3).unwrap();
    let batch = PairBatch::from_triplets(&data.triplets).unwrap();
    let arch = EnergyArch::with_shape(d, EnergyMode::Reward, 16, 2, 10.0);
    let policy = Policy::new(arch.clone(), arch.init_params(&mut seed::rng(4))).unwrap();
    let loss = PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Bce };
    pair_loss(&policy, &loss, &batch, &Regularizer::None).unwrap()
}

#[test]
fn losses_match_bit_for_bit_across_modes() {
    let _g = MODE.lock().unwrap();
    let seq = in_mode(Parallelism::Sequential, energy_eval);
    let par = in_mode(Parallelism::Parallel, energy_eval);
    assert_eq!(seq.loss.to_bits(), par.loss.to_bits());
    assert!(seq.grad.iter().zip(&par.grad).all(|(a, b)| a.to_bits() == b.to_bits()));

    let mixture = || {
        let d = grid(300);
        let (target, _) = bimodal_target(&d).unwrap();
        let items: Vec<_> = (0..d.len()).map(prefdens::pbde::Item::new).collect();
        let batch = PairBatch::exact(&Annotator::single(PbdeSpec::Unit, &target), &items).unwrap();
        let arch = MixtureArch::new(TabularArch::new(d), 2);
        let params: Vec<f64> = (0..arch_len(&arch)).map(|i| (i as f64 * 0.37).sin()).collect();
        mixture_bce_loss(&Policy::new(arch, params).unwrap(), &batch).unwrap()
    };
    let seq = in_mode(Parallelism::Sequential, mixture);
    let par = in_mode(Parallelism::Parallel, mixture);
    assert_eq!(seq, par);
}

fn arch_len(a: &MixtureArch<TabularArch>) -> usize {
    use prefdens::learners::Architecture;
    a.n_params()
}

fn short_training(lr: f64) -> Vec<f64> {
    let d = grid(64);
    let (target, _) = bimodal_target(&d).unwrap();
    let items: Vec<_> = (0..d.len()).map(prefdens::pbde::Item::new).collect();
    let batch = PairBatch::exact(&Annotator::single(PbdeSpec::Unit, &target), &items).unwrap();
    let mut policy = Policy::new(TabularArch::new(d), vec![0.0; 64]).unwrap();
    let loss = PairLoss { transform: PbdeSpec::Unit, kind: PairLossKind::Bce };
    let mut f = |p: &Policy<TabularArch>, _| pair_loss(p, &loss, &batch, &Regularizer::None);
    train(&mut policy, &mut f, &AdamConfig::with_lr(lr), &CosineSchedule::new(lr, 300), &TrainRun::new(300), None)
        .unwrap();
    policy.params
}

#[test]
fn training_is_reproducible() {
    let _g = MODE.lock().unwrap();
    let a = short_training(0.1);
    let b = short_training(0.1);
    let c = in_mode(Parallelism::Sequential, || short_training(0.1));
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn adam_trajectories_are_identical() {
    let run = || {
        let mut p = vec![0.3, -1.2, 2.0];
        let mut s = AdamState::new(3);
        for t in 1..=50 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x - 0.1 * t as f64).collect();
            adam_step(&mut p, &g, &mut s, &AdamConfig::default(), t, 1e-2).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

#[test]
fn seed_streams_are_stable() {
    assert_eq!(seed::derive(7, "pairs"), seed::derive(7, "pairs"));
    assert_ne!(seed::derive(7, "pairs"), seed::derive(7, "pair"));
    assert_ne!(seed::derive_indexed(7, "sweep", 0), seed::derive_indexed(7, "sweep", 1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chunked_sums_do_not_depend_on_mode(values in prop::collection::vec(-1e6f64..1e6, 0..3000), chunk in 1usize..700) {
        let _g = MODE.lock().unwrap();
        let sum = |mode| in_mode(mode, || {
            let parts = map_chunks(values.len(), chunk, |r| vec![values[r].iter().sum::<f64>()]);
            sum_partials(parts, 1)[0]
        });
        prop_assert_eq!(sum(Parallelism::Sequential).to_bits(), sum(Parallelism::Parallel).to_bits());
    }

    #[test]
    fn jobs_keep_their_order(jobs in prop::collection::vec(any::<u32>(), 0..100)) {
        let _g = MODE.lock().unwrap();
        let out = in_mode(Parallelism::Parallel, || map_jobs(jobs.clone(), |j| j as u64 * 3));
        prop_assert_eq!(out, jobs.iter().map(|&j| j as u64 * 3).collect::<Vec<_>>());
    }
}
