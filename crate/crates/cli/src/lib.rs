//! Library side of the `polmem` command-line tool: configuration parsing
//! and the four commands, each producing in-memory files that are written
//! only once the whole computation has succeeded.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::path::{Path, PathBuf};

use polmem::eit::{fwhm, symmetric_grid};
use polmem::process::{check_cp_tp, process_fidelity};
use polmem::tomography::NonConvergence;
use polmem::{
    fidelity_vs_time, mle_chi, storage_timetrace, transmission_spectrum, ChiJson, Observations, ProcessMatrix, Sampling,
};
use serde::Serialize;

pub use config::RunConfig;

/// Default spectrum grid: ±1.8 MHz, i.e. ±20 transparency widths at 90 kHz.
pub const DEFAULT_SPAN_HZ: f64 = 1.8e6;
pub const DEFAULT_POINTS: usize = 8001;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numeric(polmem::Error),
    #[error("maximum-likelihood fit did not converge after {} iterations", .0.iterations)]
    NonConvergence(Box<NonConvergence>, Vec<OutputFile>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NonConvergence(..) => 4,
        }
    }
}

impl From<polmem::Error> for CliError {
    fn from(e: polmem::Error) -> Self {
        match e {
            polmem::Error::NonConvergence(nc) => CliError::NonConvergence(nc, Vec::new()),
            other => CliError::Numeric(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: &'static str,
    pub contents: String,
}

/// Result of a command: files to write and `key=value` lines for stdout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<OutputFile>,
    pub summary: Vec<String>,
}

/// Flags shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct GlobalFlags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub exact: bool,
}

impl GlobalFlags {
    fn sampling(&self) -> Sampling {
        if self.exact {
            Sampling::Exact
        } else {
            Sampling::Poisson
        }
    }
}

fn csv_file(name: &'static str, body: String, metadata: bool) -> OutputFile {
    let contents = if metadata {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        format!("# polmem {} unix_time={secs}\n{body}", env!("CARGO_PKG_VERSION"))
    } else {
        body
    };
    OutputFile { name, contents }
}

fn json_file<T: Serialize>(name: &'static str, value: &T) -> OutputFile {
    let mut contents = serde_json::to_string_pretty(value).expect("plain data serializes");
    contents.push('\n');
    OutputFile { name, contents }
}

pub fn cmd_spectrum(cfg: &RunConfig, span_hz: f64, points: usize) -> Result<Report, CliError> {
    let eit = cfg.eit()?;
    if !(span_hz > 0.0) || !span_hz.is_finite() || points < 3 {
        return Err(CliError::Config("--span-hz must be positive and --points at least 3".into()));
    }
    let spectrum = transmission_spectrum(&eit.params(), &symmetric_grid(span_hz, points))?;
    let width = fwhm(&spectrum)?;
    Ok(Report {
        summary: vec![format!("fwhm_hz={width}"), format!("max_transmission={}", spectrum.max_transmission())],
        files: vec![csv_file("spectrum.csv", spectrum.to_csv(), cfg.metadata())],
    })
}

pub fn cmd_storage(cfg: &RunConfig) -> Result<Report, CliError> {
    let eit = cfg.eit_with_timing()?;
    let trace = storage_timetrace(&eit.params(), eit.eta0, eit.leak_fraction, &eit.timing(), eit.grid_step)?;
    Ok(Report {
        summary: vec![
            format!("leaked_fraction={}", trace.leaked_fraction),
            format!("retrieved_fraction={}", trace.retrieved_fraction),
        ],
        files: vec![csv_file("storage.csv", trace.to_csv(), cfg.metadata())],
    })
}

#[derive(Debug, Serialize)]
struct ChiReport {
    #[serde(flatten)]
    chi: ChiJson,
    storage_time_s: f64,
    fidelity_to_identity: f64,
    tp_defect: f64,
    min_eigenvalue: f64,
    nll: f64,
    iterations: usize,
}

#[derive(Debug, Serialize)]
struct NonConvergenceReport<'a> {
    error: &'static str,
    iterations: usize,
    nll_history: &'a [f64],
    last_iterate: &'a [f64],
}

fn nonconvergence_file(nc: &NonConvergence) -> OutputFile {
    json_file(
        "nonconvergence.json",
        &NonConvergenceReport {
            error: "mle_non_convergence",
            iterations: nc.iterations,
            nll_history: &nc.nll_history,
            last_iterate: &nc.last_iterate,
        },
    )
}

pub fn cmd_qpt(cfg: &RunConfig, flags: &GlobalFlags, time: f64) -> Result<Report, CliError> {
    let mp = cfg.memory()?;
    let mut cm = cfg.counting()?;
    let opts = cfg.mle()?;
    if !time.is_finite() || time < 0.0 {
        return Err(CliError::Config("--time must be finite and nonnegative".into()));
    }
    if let Some(seed) = flags.seed {
        cm.seed = seed;
    }
    let dataset = polmem::tomography_dataset(&mp, time, &cm, flags.sampling())?;
    let dataset_file = csv_file("dataset.csv", dataset.to_csv(), cfg.metadata());
    let obs = Observations::from_records(&dataset.records)?;
    let fit = match mle_chi(&obs, &opts) {
        Ok(r) => r,
        Err(polmem::Error::NonConvergence(nc)) => {
            let files = vec![dataset_file, nonconvergence_file(&nc)];
            return Err(CliError::NonConvergence(nc, files));
        }
        Err(e) => return Err(e.into()),
    };
    let fidelity = process_fidelity(&fit.chi, &ProcessMatrix::identity())?;
    let report = check_cp_tp(&fit.chi);
    let chi = ChiReport {
        chi: ChiJson::from(&fit.chi),
        storage_time_s: time,
        fidelity_to_identity: fidelity,
        tp_defect: report.tp_defect,
        min_eigenvalue: report.min_eigenvalue,
        nll: fit.nll,
        iterations: fit.iterations,
    };
    Ok(Report {
        summary: vec![format!("fidelity_to_identity={fidelity}"), format!("tp_defect={}", report.tp_defect)],
        files: vec![dataset_file, json_file("chi.json", &chi)],
    })
}

pub fn cmd_sweep(cfg: &RunConfig, flags: &GlobalFlags) -> Result<Report, CliError> {
    let mp = cfg.memory()?;
    let mut cm = cfg.counting()?;
    let opts = cfg.mle()?;
    let times = cfg.sweep_times()?;
    if let Some(seed) = flags.seed {
        cm.seed = seed;
    }
    let curve = match fidelity_vs_time(&mp, &cm, &times, flags.sampling(), &opts) {
        Ok(c) => c,
        Err(polmem::Error::NonConvergence(nc)) => {
            let files = vec![nonconvergence_file(&nc)];
            return Err(CliError::NonConvergence(nc, files));
        }
        Err(e) => return Err(e.into()),
    };
    let min = curve.fidelities.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Report {
        summary: vec![format!("points={}", times.len()), format!("min_fidelity={min}")],
        files: vec![csv_file("sweep.csv", curve.to_csv(), cfg.metadata())],
    })
}

pub fn write_files(dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for f in files {
        let path = dir.join(f.name);
        std::fs::write(&path, &f.contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
