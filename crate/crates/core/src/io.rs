//! CSV and JSON writers for simulation outputs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionState;
use crate::error::{Error, Result};
use crate::feedback::LockMetrics;
use crate::fitting::PeakFit;
use crate::levels::LevelSweepRow;
use crate::scan::ScanRecord;
use crate::spectra::{FrequencyAxis, Spectrum, SpectrumMeta};

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes `freq_ghz,counts` rows.
pub fn write_spectrum_csv<W: Write>(w: W, s: &Spectrum) -> Result<()> {
    s.validate()?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["freq_ghz", "counts"])?;
    for (f, c) in s.frequencies().into_iter().zip(&s.counts) {
        out.write_record([fmt(f), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar metadata accompanying a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub exposure: f64,
    pub voltage: f64,
    pub timestamp: f64,
    pub seed: u64,
    pub dark: bool,
}

impl From<&Spectrum> for SpectrumSidecar {
    fn from(s: &Spectrum) -> Self {
        Self { exposure: s.exposure, voltage: s.meta.voltage, timestamp: s.meta.timestamp, seed: s.meta.seed, dark: s.meta.dark }
    }
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
pub fn save_spectrum(dir: &Path, stem: &str, s: &Spectrum) -> Result<[std::path::PathBuf; 2]> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    write_spectrum_csv(std::fs::File::create(&csv_path)?, s)?;
    write_json(&json_path, &SpectrumSidecar::from(s))?;
    Ok([csv_path, json_path])
}

/// Reads a spectrum written by [`save_spectrum`].
pub fn load_spectrum(csv_path: &Path, sidecar_path: &Path) -> Result<Spectrum> {
    let side: SpectrumSidecar = serde_json::from_reader(std::fs::File::open(sidecar_path)?)?;
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let mut freqs = Vec::new();
    let mut counts = Vec::new();
    for row in rdr.deserialize::<(f64, u64)>() {
        let (f, c) = row?;
        freqs.push(f);
        counts.push(c);
    }
    if freqs.len() < 2 {
        return Err(Error::InvalidArgument("spectrum file needs at least 2 rows".into()));
    }
    let step = (freqs[freqs.len() - 1] - freqs[0]) / (freqs.len() - 1) as f64;
    for (i, f) in freqs.iter().enumerate() {
        if (f - (freqs[0] + step * i as f64)).abs() > 1e-9 * (1.0 + f.abs()) {
            return Err(Error::InvalidArgument("frequency axis is not uniform".into()));
        }
    }
    let s = Spectrum {
        freq_axis: FrequencyAxis::new(freqs[0], step, freqs.len())?,
        counts,
        exposure: side.exposure,
        meta: SpectrumMeta { voltage: side.voltage, timestamp: side.timestamp, dark: side.dark, seed: side.seed },
    };
    s.validate()?;
    Ok(s)
}

/// Writes `time_s,detuning_mhz,bright` rows.
pub fn write_trajectory_csv<W: Write>(w: W, states: &[DiffusionState]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time_s", "detuning_mhz", "bright"])?;
    for s in states {
        out.write_record([fmt(s.time), fmt(s.detuning_offset), u8::from(s.charge_bright).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one row per scan: `i,timestamp,v_dc,repump,b_max,c_max,bin_0..`.
pub fn write_scan_log_csv<W: Write>(w: W, records: &[ScanRecord]) -> Result<()> {
    let n_bins = records.first().map_or(0, |r| r.bin_counts.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["i", "timestamp", "v_dc", "repump", "b_max", "c_max"].iter().map(|s| s.to_string()).collect();
    header.extend((0..n_bins).map(|k| format!("bin_{k}")));
    out.write_record(&header)?;
    for r in records {
        if r.bin_counts.len() != n_bins {
            return Err(Error::InvalidArgument("scan records differ in bin count".into()));
        }
        let mut row = vec![
            r.index.to_string(),
            fmt(r.timestamp),
            fmt(r.v_dc),
            u8::from(r.repump_applied).to_string(),
            r.b_max.to_string(),
            r.c_max.to_string(),
        ];
        row.extend(r.bin_counts.iter().map(|c| c.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `i,center,center_err,fwhm,fwhm_err,amplitude,offset` for each fitted scan.
pub fn write_fits_csv<W: Write>(w: W, fits: &[Option<PeakFit>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["i", "center", "center_err", "fwhm", "fwhm_err", "amplitude", "offset"])?;
    for (i, f) in fits.iter().enumerate() {
        if let Some(f) = f {
            let e = f.std_errors();
            out.write_record([i.to_string(), fmt(f.center), fmt(e[0]), fmt(f.fwhm), fmt(e[1]), fmt(f.amplitude), fmt(f.offset)])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes `v_a,energy_0..energy_5,p0_0..p0_5` rows.
pub fn write_level_sweep_csv<W: Write>(w: W, rows: &[LevelSweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["v_a".to_string()];
    header.extend((0..6).map(|i| format!("energy_{i}")));
    header.extend((0..6).map(|i| format!("p0_{i}")));
    out.write_record(&header)?;
    for r in rows {
        let mut row = vec![fmt(r.v_a)];
        row.extend(r.energies.iter().map(|&v| fmt(v)));
        row.extend(r.p0.iter().map(|&v| fmt(v)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a plain numeric table under the given header.
pub fn write_table_csv<W: Write>(w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidArgument(format!("row has {} columns, header has {}", r.len(), header.len())));
        }
        out.write_record(r.iter().map(|&v| fmt(v)))?;
    }
    out.flush()?;
    Ok(())
}

/// Summary written by lock runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub sigma_mhz: Option<f64>,
    pub gamma_inhom_ghz: Option<f64>,
    pub mean_rate_cps: Option<f64>,
    pub repump_count: usize,
    pub recovery_scans: Vec<usize>,
    pub n_scans: usize,
    pub n_fits: usize,
}

impl MetricsFile {
    pub fn new(metrics: Option<&LockMetrics>, records: &[ScanRecord]) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            sigma_mhz: metrics.and_then(|m| finite(m.sigma_mhz)),
            gamma_inhom_ghz: metrics.and_then(|m| finite(m.gamma_inhom_ghz)),
            mean_rate_cps: metrics.and_then(|m| finite(m.mean_rate_cps)),
            repump_count: records.iter().filter(|r| r.repump_applied).count(),
            recovery_scans: metrics.map(|m| m.recovery_scans.clone()).unwrap_or_default(),
            n_scans: records.len(),
            n_fits: metrics.map_or(0, |m| m.n_fits),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
