//! The scenario implementations. Each writes its outputs into `out` and
//! returns the paths it produced.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;
use starklock_core::config::Config;
use starklock_core::diffusion::DiffusionProcess;
use starklock_core::feedback::{run_locked_experiment, LockRun};
use starklock_core::fitting::{fit_peak, fit_theta_r, LambdaPoint, PeakFit, Profile, ThetaFit};
use starklock_core::io::{save_spectrum, write_fits_csv, write_json, write_level_sweep_csv, write_scan_log_csv, write_table_csv, MetricsFile};
use starklock_core::levels::{
    build_hamiltonian, eigenlevels, lambda_emission_fraction, level_sweep, transition_lines, voltage_to_field, FineStructureParams,
    LambdaNormalization, TransitionLine,
};
use starklock_core::rng::{gaussian, rng_for_stream, stream};
use starklock_core::scan::{run_scan, Emitter, ScanConfig, ScanMode};
use starklock_core::spectra::{gs_polarization_bound, render_frame_series, total_zpl_rate, FrequencyAxis, PolarizationBound, PolarizationBoundConfig, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    LevelsSweep,
    EmissionMap,
    PleMap,
    LockRun,
    ThetaRFit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::LevelsSweep => "levels-sweep",
            Scenario::EmissionMap => "emission-map",
            Scenario::PleMap => "ple-map",
            Scenario::LockRun => "lock-run",
            Scenario::ThetaRFit => "theta-r-fit",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Scenario::LevelsSweep => "excited-state energies and m_s=0 weights versus tuning voltage",
            Scenario::EmissionMap => "emission spectra versus voltage, total ZPL rate and polarization bound",
            Scenario::PleMap => "PLE scans across DC voltages with per-row Lorentzian fits",
            Scenario::LockRun => "feedback-locked PLE experiment: scan log, fits and lock metrics",
            Scenario::ThetaRFit => "synthetic Λ-intensity data and the field-angle fit",
        }
    }
}

pub fn run(s: Scenario, cfg: &Config, seed: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    match s {
        Scenario::LevelsSweep => levels_sweep(cfg, out),
        Scenario::EmissionMap => emission_map(cfg, seed, out),
        Scenario::PleMap => ple_map(cfg, seed, out),
        Scenario::LockRun => lock_run(cfg, seed, out),
        Scenario::ThetaRFit => theta_fit(cfg, seed, out),
    }
    .with_context(|| format!("scenario {}", s.name()))
}

fn linspace(range: [f64; 2], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range[0]];
    }
    (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect()
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn levels_sweep(cfg: &Config, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let volts = linspace(cfg.scenarios.sweep_v_range, cfg.scenarios.sweep_points);
    let rows = level_sweep(&cfg.finestructure, &cfg.starkmap.voltage_map(), &volts)?;
    let path = out.join("levels.csv");
    write_level_sweep_csv(create(&path)?, &rows)?;
    Ok(vec![path])
}

fn lines_at(cfg: &Config, v: f64) -> starklock_core::Result<Vec<TransitionLine>> {
    let field = voltage_to_field(&cfg.starkmap.voltage_map(), v, 0.0, v)?;
    let levels = eigenlevels(&build_hamiltonian(&cfg.finestructure, &field)?)?;
    transition_lines(&levels, &cfg.finestructure, cfg.scenarios.gs_polarization)
}

/// Peak list for the rate estimate: model lines above 1% of the strongest.
fn visible_peaks(lines: &[TransitionLine], axis: &FrequencyAxis, fwhm: f64) -> Vec<PeakFit> {
    let max = lines.iter().map(|l| l.intensity).fold(0.0, f64::max);
    let hi = axis.center(axis.n - 1);
    lines
        .iter()
        .filter(|l| l.intensity > 0.01 * max && l.frequency >= axis.start && l.frequency <= hi)
        .map(|l| PeakFit {
            profile: Profile::Gaussian,
            center: l.frequency,
            fwhm,
            amplitude: l.intensity,
            offset: 0.0,
            covariance: [[0.0; 4]; 4],
            converged: true,
            cost: 0.0,
            iterations: 0,
        })
        .collect()
}

#[derive(Serialize)]
struct PolarizationReport {
    frame: usize,
    voltage: f64,
    reference_line_ghz: f64,
    reference_fwhm_ghz: f64,
    a2_line_ghz: f64,
    confidence: f64,
    bound: PolarizationBound,
}

fn polarization_report(cfg: &Config, frame: usize, sp: &Spectrum) -> anyhow::Result<Option<PolarizationReport>> {
    let v = sp.meta.voltage;
    let lines = lines_at(cfg, v)?;
    let Some(reference) = lines.iter().max_by(|a, b| a.intensity.total_cmp(&b.intensity)) else {
        return Ok(None);
    };
    let a2 = lines.iter().find(|l| l.upper_label == "A2" && l.lower_label != starklock_core::levels::GroundSublevel::Zero);
    let Some(a2) = a2 else { return Ok(None) };
    let axis = &sp.freq_axis;
    if a2.frequency < axis.start || a2.frequency > axis.center(axis.n - 1) {
        return Ok(None);
    }
    let half = 2.0 * cfg.instrument.resolution_fwhm;
    let idx: Vec<usize> = (0..axis.n).filter(|&i| (axis.center(i) - reference.frequency).abs() <= half).collect();
    let x: Vec<f64> = idx.iter().map(|&i| axis.center(i)).collect();
    let y: Vec<f64> = idx.iter().map(|&i| sp.counts[i] as f64).collect();
    let Ok(fit) = fit_peak(&x, &y, Profile::Gaussian, None) else { return Ok(None) };
    let bcfg = PolarizationBoundConfig::default();
    let bound = gs_polarization_bound(sp, a2.frequency, &fit, &bcfg)?;
    Ok(Some(PolarizationReport {
        frame,
        voltage: v,
        reference_line_ghz: fit.center,
        reference_fwhm_ghz: fit.fwhm,
        a2_line_ghz: a2.frequency,
        confidence: bcfg.confidence,
        bound,
    }))
}

fn emission_map(cfg: &Config, seed: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let sc = &cfg.scenarios;
    let volts = linspace(sc.emission_v_range, sc.emission_frames);
    let axis = FrequencyAxis::spanning(sc.emission_axis[0], sc.emission_axis[1], sc.emission_bins)?;
    let dark_every = (sc.dark_every > 0).then_some(sc.dark_every);
    let frames = render_frame_series(&volts, |v| lines_at(cfg, v), &cfg.instrument, &axis, seed, dark_every)?;

    let dir = out.join("frames");
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for (i, sp) in frames.iter().enumerate() {
        files.extend(save_spectrum(&dir, &format!("frame_{i:03}"), sp)?);
        let peaks = visible_peaks(&lines_at(cfg, sp.meta.voltage)?, &axis, cfg.instrument.resolution_fwhm);
        let rate = if peaks.is_empty() { None } else { total_zpl_rate(sp, &peaks).ok() };
        rows.push(vec![
            i as f64,
            sp.meta.voltage,
            f64::from(u8::from(sp.meta.dark)),
            rate.map_or(f64::NAN, |r| r.rate),
            rate.map_or(f64::NAN, |r| r.error),
        ]);
    }
    let map = out.join("emission_map.csv");
    write_table_csv(create(&map)?, &["frame", "voltage", "dark", "zpl_rate_cps", "zpl_rate_err"], &rows)?;
    files.push(map);

    if let Some((i, sp)) = frames.iter().enumerate().find(|(_, s)| !s.meta.dark) {
        if let Some(report) = polarization_report(cfg, i, sp)? {
            let path = out.join("polarization.json");
            write_json(&path, &report)?;
            files.push(path);
        }
    }
    Ok(files)
}

fn ple_map(cfg: &Config, seed: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let sc = &cfg.scenarios;
    let tuning = cfg.starkmap.lock_tuning();
    let volts = linspace(sc.ple_v_range, sc.ple_steps);
    let gamma = cfg.scan.homogeneous_fwhm_mhz * 1e-3;
    // One laser window wide enough to follow the line over the whole voltage range.
    let tuning_range = tuning.ghz_per_volt.abs() * (sc.ple_v_range[1] - sc.ple_v_range[0]).abs();
    let span = tuning_range + 10.0 * gamma;
    let n_bins = ((span / (gamma / 4.0)).ceil() as usize).clamp(cfg.scan.n_bins, 4000);
    let mid = 0.5 * (sc.ple_v_range[0] + sc.ple_v_range[1]);
    let scan = ScanConfig { mode: ScanMode::Laser, span, n_bins, center: tuning.offset_ghz + tuning.ghz_per_volt * mid, ..cfg.scan };

    let process = DiffusionProcess::with_rng(cfg.diffusion, rng_for_stream(seed, stream::DIFFUSION))?;
    let mut emitter = Emitter::new(process, tuning);
    let mut photons = rng_for_stream(seed, stream::PHOTONS);
    let backscan = scan.period * (1.0 - scan.duty);
    let mut map_rows = Vec::new();
    let mut fit_rows = Vec::new();
    for (i, &v) in volts.iter().enumerate() {
        emitter.state = emitter.process.maybe_ionize(emitter.state);
        let rec = run_scan(&scan, &mut emitter, v, i, &mut photons)?;
        for (f, &c) in rec.bin_axis.iter().zip(&rec.bin_counts) {
            map_rows.push(vec![v, *f, c as f64]);
        }
        let y: Vec<f64> = rec.bin_counts.iter().map(|&c| c as f64).collect();
        if let Ok(fit) = fit_peak(&rec.bin_axis, &y, Profile::Lorentzian, None) {
            let e = fit.std_errors();
            fit_rows.push(vec![v, fit.center, e[0], fit.fwhm, e[1], fit.amplitude, f64::from(u8::from(fit.converged))]);
        }
        if !emitter.state.charge_bright {
            emitter.state = emitter.process.apply_repump(emitter.state);
        }
        emitter.evolve(backscan)?;
    }
    let map = out.join("ple_map.csv");
    write_table_csv(create(&map)?, &["v_dc", "freq_ghz", "counts"], &map_rows)?;
    let fits = out.join("ple_fits.csv");
    write_table_csv(create(&fits)?, &["v_dc", "center", "center_err", "fwhm", "fwhm_err", "amplitude", "converged"], &fit_rows)?;
    Ok(vec![map, fits])
}

fn lock_run(cfg: &Config, seed: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let tuning = cfg.starkmap.lock_tuning();
    let LockRun { records, fits, metrics } =
        run_locked_experiment(&cfg.scan, &cfg.feedback, &cfg.diffusion, &tuning, cfg.scenarios.lock_duration, seed)?;
    let log = out.join("scan_log.csv");
    write_scan_log_csv(create(&log)?, &records)?;
    let fit_path = out.join("fits.csv");
    write_fits_csv(create(&fit_path)?, &fits)?;
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &MetricsFile::new(metrics.as_ref(), &records))?;
    Ok(vec![log, fit_path, metrics_path])
}

#[derive(Serialize)]
struct ThetaReport {
    theta_true: f64,
    noise: f64,
    normalization: LambdaNormalization,
    fit: ThetaFit,
}

fn theta_dataset(p: &FineStructureParams, cfg: &Config, seed: u64) -> starklock_core::Result<Vec<LambdaPoint>> {
    let sc = &cfg.scenarios;
    let mut rng = rng_for_stream(seed, stream::NOISE);
    linspace(sc.theta_delta_range, sc.theta_points)
        .into_iter()
        .map(|d| {
            let f = lambda_emission_fraction(p, sc.theta_true, d, LambdaNormalization::Bare)?;
            Ok(LambdaPoint { delta_perp: d, intensity: f * (1.0 + sc.theta_noise * gaussian(&mut rng)) })
        })
        .collect()
}

fn theta_fit(cfg: &Config, seed: u64, out: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let p = &cfg.finestructure;
    let data = theta_dataset(p, cfg, seed)?;
    let fit = fit_theta_r(&data, p, LambdaNormalization::Bare)?;
    let rows: Vec<Vec<f64>> = data
        .iter()
        .map(|d| {
            let model = lambda_emission_fraction(p, fit.theta_r.value, d.delta_perp, LambdaNormalization::Bare).unwrap_or(f64::NAN);
            vec![d.delta_perp, d.intensity, fit.scale.value * model]
        })
        .collect();
    let csv = out.join("lambda_data.csv");
    write_table_csv(create(&csv)?, &["delta_perp_ghz", "intensity", "model"], &rows)?;
    let json = out.join("theta_fit.json");
    write_json(
        &json,
        &ThetaReport { theta_true: cfg.scenarios.theta_true, noise: cfg.scenarios.theta_noise, normalization: LambdaNormalization::Bare, fit },
    )?;
    Ok(vec![csv, json])
}
