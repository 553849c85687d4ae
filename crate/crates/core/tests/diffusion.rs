mod common;

use common::std_dev;
use proptest::prelude::*;
use starklock_core::diffusion::*;

fn params(drift: f64, jump: f64, kappa: f64, ion: f64, seed: u64) -> DiffusionParams {
    DiffusionParams { drift_sigma: drift, jump_sigma: jump, reversion_rate: kappa, ionization_prob_per_scan: ion, seed }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Evolve(f64),
    Repump,
    Ionize,
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![(0.001..2.0f64).prop_map(Op::Evolve), Just(Op::Repump), Just(Op::Ionize)]
}

fn run(p: DiffusionParams, ops: &[Op]) -> Vec<DiffusionState> {
    let mut proc = DiffusionProcess::new(p).unwrap();
    let mut s = DiffusionState::default();
    let mut out = vec![s];
    for op in ops {
        s = match *op {
            Op::Evolve(dt) => proc.evolve(s, dt).unwrap(),
            Op::Repump => proc.apply_repump(s),
            Op::Ionize => proc.maybe_ionize(s),
        };
        out.push(s);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn trajectory_is_reproducible(seed in any::<u64>(), ops in prop::collection::vec(op_strategy(), 1..60)) {
        let p = params(30.0, 100.0, 0.1, 0.3, seed);
        prop_assert_eq!(run(p, &ops), run(p, &ops));
    }

    #[test]
    fn detuning_jumps_only_at_repump(seed in any::<u64>(), ops in prop::collection::vec(op_strategy(), 1..60)) {
        // no drift: every change of detuning must come from a repump call
        let p = params(0.0, 80.0, 0.0, 0.5, seed);
        let traj = run(p, &ops);
        for (k, op) in ops.iter().enumerate() {
            if !matches!(op, Op::Repump) {
                prop_assert_eq!(traj[k].detuning_offset, traj[k + 1].detuning_offset);
            }
        }
    }

    #[test]
    fn only_repump_brightens(seed in any::<u64>(), ops in prop::collection::vec(op_strategy(), 1..60)) {
        let p = params(10.0, 10.0, 0.0, 0.5, seed);
        let traj = run(p, &ops);
        for (k, op) in ops.iter().enumerate() {
            if !traj[k].charge_bright && traj[k + 1].charge_bright {
                prop_assert!(matches!(op, Op::Repump));
            }
            if matches!(op, Op::Repump) {
                prop_assert!(traj[k + 1].charge_bright);
            }
        }
    }

    #[test]
    fn time_is_monotone(seed in any::<u64>(), ops in prop::collection::vec(op_strategy(), 1..60)) {
        let traj = run(params(5.0, 5.0, 0.2, 0.1, seed), &ops);
        for w in traj.windows(2) {
            prop_assert!(w[1].time >= w[0].time);
            prop_assert!(w[1].detuning_offset.is_finite());
        }
    }
}

#[test]
fn drift_between_repumps_is_gaussian_without_jumps() {
    // with κ = 0 the increment over many small steps is N(0, σ²t), no heavy tail
    let p = params(65.0, 500.0, 0.0, 0.0, 0);
    let incs: Vec<f64> = (0..2000u64)
        .map(|seed| {
            let mut proc = DiffusionProcess::new(DiffusionParams { seed, ..p }).unwrap();
            let mut s = DiffusionState::default();
            for _ in 0..10 {
                s = proc.evolve(s, 0.1).unwrap();
            }
            s.detuning_offset
        })
        .collect();
    let sd = std_dev(&incs);
    assert!((sd / 65.0 - 1.0).abs() < 0.05, "{sd}");
    let max = incs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(max < 6.0 * 65.0, "{max}");
}

#[test]
fn step_size_does_not_change_ou_statistics() {
    let p = params(40.0, 0.0, 0.5, 0.0, 0);
    let end = |n_steps: usize| -> Vec<f64> {
        (0..3000u64)
            .map(|seed| {
                let mut proc = DiffusionProcess::new(DiffusionParams { seed, ..p }).unwrap();
                let mut s = DiffusionState::default();
                for _ in 0..n_steps {
                    s = proc.evolve(s, 2.0 / n_steps as f64).unwrap();
                }
                s.detuning_offset
            })
            .collect()
    };
    let exact = 40.0 * ((1.0 - (-2.0f64 * 0.5 * 2.0).exp()) / (2.0 * 0.5)).sqrt();
    for n in [1, 20] {
        let sd = std_dev(&end(n));
        assert!((sd / exact - 1.0).abs() < 0.05, "{n}: {sd} vs {exact}");
    }
}
