mod common;

use common::std_dev;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use starklock_core::diffusion::{DiffusionParams, DiffusionState};
use starklock_core::feedback::*;
use starklock_core::scan::*;
use starklock_core::Error;

fn record(b: usize, c: u64, n_bins: usize) -> ScanRecord {
    let mut bin_counts = vec![0; n_bins];
    bin_counts[b] = c;
    ScanRecord {
        index: 0,
        bin_axis: (0..n_bins).map(|k| k as f64).collect(),
        bin_counts,
        c_max: c,
        b_max: b,
        repump_applied: false,
        action: Action::Hold,
        v_dc: 0.0,
        timestamp: 0.0,
        true_offset_mhz: 0.0,
    }
}

fn fb(g: f64, n: usize, b: usize, t: f64) -> FeedbackConfig {
    FeedbackConfig { gain_g: g, integration_n: n, target_bin: Some(b), threshold_t: t, ..Default::default() }
}

/// Closed loop on an ideal plant: the peak sits at `B + k·(v − v*)` bins,
/// rounded to the nearest bin, over a window wide enough never to clip.
fn ideal_loop(kg: f64, steps: usize) -> Vec<f64> {
    let n_bins = 2_000_000;
    let target = n_bins / 2;
    let k = 4.0;
    let cfg = FeedbackConfig { v_dc_limits: [-1e9, 1e9], ..fb(kg / k, 1, target, 1.0) };
    let v_star = 0.0;
    let mut v = 250.0;
    let mut errors = Vec::new();
    let mut history = Vec::new();
    for _ in 0..steps {
        let x = k * (v - v_star);
        errors.push(x);
        let b = target as f64 + x.round();
        if b < 0.0 || b >= n_bins as f64 {
            break;
        }
        // the target bin is explicit, so the record needs no bin array
        history.push(ScanRecord { bin_counts: Vec::new(), b_max: b as usize, c_max: 10, ..record(0, 0, 1) });
        let (nv, action) = controller_step(&history[history.len() - 1..], &cfg, v).unwrap();
        assert_eq!(action, Action::Adjust);
        v = nv;
    }
    errors
}

/// Largest error a whole-bin peak detector can sustain in a limit cycle:
/// a 2-cycle `x → −x` needs `round(kG·n/2) = n`, i.e. `n·|1 − kG/2| ≤ ½`.
fn quantization_floor(kg: f64) -> f64 {
    0.5 / (1.0 - 0.5 * kg) + 0.5 * kg
}

#[test]
fn loop_converges_iff_gain_product_below_two() {
    for kg in [0.5, 1.0, 1.9] {
        let e = ideal_loop(kg, 200);
        let tail = &e[e.len() - 20..];
        assert!(tail.iter().all(|x| x.abs() <= quantization_floor(kg)), "kG = {kg}: {tail:?}");
        // geometric decay while far from the quantization floor
        let far: Vec<&f64> = e.iter().take_while(|x| x.abs() > 10.0).collect();
        for w in far.windows(2) {
            let ratio = (w[1] / w[0]).abs();
            // rounding to a bin perturbs each step by at most kG/2 bins
            let slack = 0.5 * kg / w[0].abs() + 1e-12;
            assert!((ratio - (1.0 - kg).abs()).abs() <= slack, "kG = {kg}: ratio {ratio}");
        }
    }
    let e = ideal_loop(2.1, 200);
    assert!(e.last().unwrap().abs() > 100.0 * e[0].abs(), "kG = 2.1 should diverge: {:?}", &e[e.len() - 3..]);
}

#[test]
fn scan_engine_loop_respects_the_stability_boundary() {
    // Noiseless PLE scans through the real scan model; peak found by argmax.
    let scan = ScanConfig { n_bins: 50, span: 0.6, ..Default::default() };
    let tuning = StarkTuning { ghz_per_volt: 0.37, offset_ghz: 0.0 };
    let k = bins_per_volt(&scan, &tuning);
    let state = DiffusionState { detuning_offset: 150.0, ..Default::default() };
    for (kg, converges) in [(0.5, true), (1.0, true), (1.9, true), (2.1, false)] {
        let cfg = FeedbackConfig { v_dc_limits: [-50.0, 50.0], ..fb(kg / k, 1, scan.center_bin(), 1.0) };
        let mut v = 0.0;
        let mut bins = Vec::new();
        for _ in 0..100 {
            let e = expected_bin_counts(&scan, &tuning, &state, v).unwrap();
            let counts: Vec<u64> = e.iter().map(|x| (x * 1e6).round() as u64).collect();
            let (b, c) = argmax_first(&counts);
            let rec = ScanRecord { bin_counts: counts.clone(), b_max: b, c_max: c, ..record(b, c, scan.n_bins) };
            bins.push(b);
            v = controller_step(&[rec], &cfg, v).unwrap().0;
        }
        let tail = &bins[80..];
        let floor = if kg < 2.0 { quantization_floor(kg) } else { 0.5 };
        let settled = tail.iter().all(|&b| (b.abs_diff(scan.center_bin()) as f64) <= floor);
        assert_eq!(settled, converges, "kG = {kg}: {tail:?}");
    }
}

#[test]
fn integer_cases_are_exact() {
    let (v, a) = controller_step(&[record(20, 10, 50)], &fb(1.0, 1, 25, 5.0), 0.0).unwrap();
    assert_eq!((v, a), (5.0, Action::Adjust));
    let (v, _) = controller_step(&[record(24, 10, 50), record(26, 10, 50)], &fb(1.0, 2, 25, 5.0), 3.0).unwrap();
    assert_eq!(v, 3.0);
    let (v, _) = controller_step(&[record(30, 10, 50), record(20, 10, 50), record(21, 10, 50)], &fb(2.0, 2, 25, 5.0), -1.0).unwrap();
    assert_eq!(v, -1.0 + 2.0 * (25.0 - 20.5));
}

#[test]
fn empty_history_is_a_contract_violation() {
    assert!(matches!(controller_step(&[], &fb(1.0, 1, 25, 5.0), 0.0), Err(Error::ContractViolation(_))));
}

#[test]
fn threshold_from_rate_uses_bin_dwell() {
    let scan = ScanConfig::default();
    assert!((threshold_from_rate(1000.0, &scan) - 18.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn below_threshold_never_moves(b in 0usize..50, c in 0u64..100, v in -10.0..10.0f64, g in -3.0..3.0f64) {
        let t = c as f64 + 1.0;
        let (nv, a) = controller_step(&[record(b, c, 50)], &fb(g, 1, 25, t), v).unwrap();
        prop_assert_eq!(nv, v);
        prop_assert_eq!(a, Action::Repump);
    }

    #[test]
    fn update_is_affine_in_history(
        bins in prop::collection::vec(0usize..49, 1..8), which in 0usize..8, g in -3.0..3.0f64, target in 0usize..50
    ) {
        let n = bins.len();
        let cfg = FeedbackConfig { v_dc_limits: [-1e6, 1e6], ..fb(g, n, target, 1.0) };
        let hist: Vec<ScanRecord> = bins.iter().map(|&b| record(b, 10, 50)).collect();
        let (v0, _) = controller_step(&hist, &cfg, 0.0).unwrap();
        let mut bumped = hist.clone();
        let j = which % n;
        bumped[j] = record(bins[j] + 1, 10, 50);
        let (v1, _) = controller_step(&bumped, &cfg, 0.0).unwrap();
        prop_assert!((v1 - v0 + g / n as f64).abs() < 1e-12);
    }

    #[test]
    fn target_history_is_a_fixed_point(n in 1usize..6, target in 0usize..50, g in -3.0..3.0f64, v in -5.0..5.0f64) {
        let hist: Vec<ScanRecord> = (0..n).map(|_| record(target, 10, 50)).collect();
        let (nv, a) = controller_step(&hist, &fb(g, n, target, 5.0), v).unwrap();
        prop_assert_eq!(nv, v);
        prop_assert_eq!(a, Action::Adjust);
    }

    #[test]
    fn locked_runs_keep_their_invariants(
        seed in any::<u64>(), g in -0.2..0.2f64, n in 1usize..4, lim in 0.1..5.0f64, ion in 0.0..0.3f64,
        policy in prop_oneof![Just(RepumpPolicy::Threshold), Just(RepumpPolicy::EveryScan), Just(RepumpPolicy::Never)],
        enabled in any::<bool>()
    ) {
        let scan = ScanConfig { n_bins: 12, period: 0.1, ..Default::default() };
        let cfg = FeedbackConfig {
            gain_g: g, integration_n: n, threshold_t: 3.0, enabled, v_dc_limits: [-lim, lim],
            repump_policy: policy, ..Default::default()
        };
        let diff = DiffusionParams { drift_sigma: 50.0, jump_sigma: 100.0, reversion_rate: 0.1, ionization_prob_per_scan: ion, seed: 0 };
        let tuning = StarkTuning { ghz_per_volt: 0.37, offset_ghz: 0.0 };
        let run = run_locked_experiment(&scan, &cfg, &diff, &tuning, 3.0, seed).unwrap();
        prop_assert_eq!(run.records.len(), 30);
        for r in &run.records {
            prop_assert!(!(r.repump_applied && r.action == Action::Adjust));
            prop_assert_eq!(r.repump_applied, r.action == Action::Repump);
            prop_assert!(r.v_dc >= -lim && r.v_dc <= lim);
            if !enabled {
                prop_assert!(r.action != Action::Adjust);
            }
        }
        let again = run_locked_experiment(&scan, &cfg, &diff, &tuning, 3.0, seed).unwrap();
        prop_assert_eq!(&run.records, &again.records);
    }
}

/// Noiseless Lorentzian scan records with the given centers, GHz.
fn synthetic_records(centers: &[f64], scan: &ScanConfig) -> Vec<ScanRecord> {
    let tuning = StarkTuning { ghz_per_volt: 1.0, offset_ghz: 0.0 };
    centers
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let state = DiffusionState { detuning_offset: c * 1e3, ..Default::default() };
            let e = expected_bin_counts(scan, &tuning, &state, 0.0).unwrap();
            let counts: Vec<u64> = e.iter().map(|x| x.round() as u64).collect();
            let (b, m) = argmax_first(&counts);
            ScanRecord { index: i, bin_axis: scan.bin_axis(0.0), bin_counts: counts, b_max: b, c_max: m, ..record(0, 0, 1) }
        })
        .collect()
}

#[test]
fn sigma_matches_sample_std_of_centers() {
    let scan = ScanConfig { span: 1.2, n_bins: 100, peak_rate: 1e6, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dist = Normal::new(0.0, 0.065).unwrap();
    let centers: Vec<f64> = (0..280).map(|_| dist.sample(&mut rng)).collect();
    let records = synthetic_records(&centers, &scan);
    let fits = fit_scans(&records, 1.0);
    let tuning = StarkTuning { ghz_per_volt: 1.0, offset_ghz: 0.0 };
    let m = compute_metrics(&records, &fits, &scan, &tuning, &FeedbackConfig::default()).unwrap();
    assert_eq!(m.n_fits, 280);
    let oracle = std_dev(&centers) * 1e3;
    assert!((m.sigma_mhz - oracle).abs() < 0.5, "{} vs {oracle}", m.sigma_mhz);
    assert!((m.sigma_mhz / 65.0 - 1.0).abs() < 0.1);
}

#[test]
fn identical_peaks_have_zero_sigma_and_homogeneous_width() {
    let scan = ScanConfig { peak_rate: 1e6, ..Default::default() };
    let records = synthetic_records(&[0.0; 20], &scan);
    let fits = fit_scans(&records, 1.0);
    let m = compute_metrics(&records, &fits, &scan, &StarkTuning { ghz_per_volt: 1.0, offset_ghz: 0.0 }, &FeedbackConfig::default()).unwrap();
    assert!(m.sigma_mhz < 1e-6);
    // A Gaussian fitted to a Lorentzian over ±5 FWHM comes out wider, since the
    // Poisson weights favour the low-count wings.
    assert!(m.gamma_inhom_ghz > 0.06 && m.gamma_inhom_ghz < 1.5 * 0.06, "{}", m.gamma_inhom_ghz);
}

#[test]
fn voltage_mode_sigma_uses_the_stark_slope() {
    let scan = ScanConfig { mode: ScanMode::Voltage, span: 3.0, n_bins: 60, homogeneous_fwhm_mhz: 200.0, peak_rate: 1e6, ..Default::default() };
    let slope = 0.26;
    let tuning = StarkTuning { ghz_per_volt: slope, offset_ghz: 0.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dist = Normal::new(0.0, 0.05).unwrap();
    let offsets: Vec<f64> = (0..100).map(|_| dist.sample(&mut rng)).collect();
    let records: Vec<ScanRecord> = offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let v_dc = 0.3 * (i % 5) as f64;
            // the resonance follows v_dc, so the line stays put in ramp coordinates
            let t = StarkTuning { offset_ghz: -slope * v_dc, ..tuning };
            let state = DiffusionState { detuning_offset: o * 1e3, ..Default::default() };
            let e = expected_bin_counts(&scan, &t, &state, v_dc).unwrap();
            let counts: Vec<u64> = e.iter().map(|x| x.round() as u64).collect();
            let (b, m) = argmax_first(&counts);
            ScanRecord { index: i, bin_axis: scan.bin_axis(v_dc), bin_counts: counts, b_max: b, c_max: m, v_dc, ..record(0, 0, 1) }
        })
        .collect();
    let fits = fit_scans(&records, 1.0);
    let m = compute_metrics(&records, &fits, &scan, &tuning, &FeedbackConfig::default()).unwrap();
    let oracle = std_dev(&offsets) * 1e3;
    assert!((m.sigma_mhz / oracle - 1.0).abs() < 0.02, "{} vs {oracle}", m.sigma_mhz);
}
