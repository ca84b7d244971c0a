//! TOML run configuration. Unknown keys are rejected in every section.

use std::path::{Path, PathBuf};

use polmem::eit::StorageTiming;
use polmem::{CountModel, EitParams, MemoryParams, MleOptions, RailParams};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub eit: Option<EitSection>,
    pub memory: Option<MemorySection>,
    pub counting: Option<CountingSection>,
    pub mle: Option<MleSection>,
    pub sweep: Option<SweepSection>,
    pub output: Option<OutputSection>,
}

/// Medium, read-out sequence and time-trace grid. Times in seconds, rates
/// in rad/s (Γ, Ω_c) or 1/s (γ_12), detunings in Hz.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EitSection {
    pub optical_depth: f64,
    pub gamma_excited: f64,
    pub omega_c: f64,
    pub gamma_ground: f64,
    #[serde(default)]
    pub probe_detuning_offset: f64,
    pub eta0: f64,
    pub leak_fraction: f64,
    pub probe_duration: f64,
    pub write_off_time: f64,
    pub storage_duration: f64,
    pub gate_width: f64,
    pub grid_step: f64,
}

impl EitSection {
    pub fn params(&self) -> EitParams {
        EitParams {
            optical_depth: self.optical_depth,
            gamma_excited: self.gamma_excited,
            omega_c: self.omega_c,
            gamma_ground: self.gamma_ground,
            probe_detuning_offset: self.probe_detuning_offset,
        }
    }

    pub fn timing(&self) -> StorageTiming {
        StorageTiming {
            probe_duration: self.probe_duration,
            write_off_time: self.write_off_time,
            storage_duration: self.storage_duration,
            gate_width: self.gate_width,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemorySection {
    pub rail_h_eta0: f64,
    pub rail_h_gamma_ground: f64,
    pub rail_v_eta0: f64,
    pub rail_v_gamma_ground: f64,
    pub phase_offset: f64,
    pub dephasing_rate: f64,
    pub noise_flux: f64,
    pub signal_flux: f64,
}

impl MemorySection {
    pub fn params(&self) -> MemoryParams {
        MemoryParams {
            rail_h: RailParams { eta0: self.rail_h_eta0, gamma_ground: self.rail_h_gamma_ground },
            rail_v: RailParams { eta0: self.rail_v_eta0, gamma_ground: self.rail_v_gamma_ground },
            phase_offset: self.phase_offset,
            dephasing_rate: self.dephasing_rate,
            noise_flux: self.noise_flux,
            signal_flux: self.signal_flux,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingSection {
    pub trials_per_setting: f64,
    pub dark_rate: f64,
    pub gate_width: f64,
    pub seed: u64,
}

impl CountingSection {
    pub fn model(&self) -> CountModel {
        CountModel {
            trials_per_setting: self.trials_per_setting,
            dark_rate: self.dark_rate,
            gate_width: self.gate_width,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleSection {
    pub max_iterations: usize,
    pub nll_tolerance: f64,
    pub init_perturbation: f64,
}

impl MleSection {
    pub fn options(&self) -> MleOptions {
        MleOptions {
            max_iterations: self.max_iterations,
            nll_tolerance: self.nll_tolerance,
            init_perturbation: self.init_perturbation,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Storage times (s), strictly increasing.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    /// Prefix data files with a `#` line carrying version and timestamp.
    #[serde(default)]
    pub metadata: bool,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn missing(section: &str) -> CliError {
        CliError::Config(format!("missing [{section}] section"))
    }

    pub fn eit(&self) -> Result<EitSection, CliError> {
        let eit = self.eit.ok_or_else(|| Self::missing("eit"))?;
        eit.params().validate().map_err(config_err)?;
        Ok(eit)
    }

    /// The `[eit]` section with its read-out sequence validated as well.
    pub fn eit_with_timing(&self) -> Result<EitSection, CliError> {
        let eit = self.eit()?;
        eit.timing().validate().map_err(config_err)?;
        for (name, v) in [("eta0", eit.eta0), ("leak_fraction", eit.leak_fraction), ("grid_step", eit.grid_step)] {
            if !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be finite")));
            }
        }
        Ok(eit)
    }

    pub fn memory(&self) -> Result<MemoryParams, CliError> {
        let mp = self.memory.ok_or_else(|| Self::missing("memory"))?.params();
        mp.validate().map_err(config_err)?;
        Ok(mp)
    }

    pub fn counting(&self) -> Result<CountModel, CliError> {
        let cm = self.counting.ok_or_else(|| Self::missing("counting"))?.model();
        cm.validate().map_err(config_err)?;
        Ok(cm)
    }

    pub fn mle(&self) -> Result<MleOptions, CliError> {
        let opts = self.mle.ok_or_else(|| Self::missing("mle"))?.options();
        opts.validate().map_err(config_err)?;
        Ok(opts)
    }

    pub fn sweep_times(&self) -> Result<Vec<f64>, CliError> {
        let times = &self.sweep.as_ref().ok_or_else(|| Self::missing("sweep"))?.times;
        if times.is_empty() {
            return Err(CliError::Config("sweep.times is empty".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(CliError::Config("sweep.times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::Config("sweep.times must be strictly increasing".into()));
        }
        Ok(times.clone())
    }

    /// `--out` wins over `[output].directory`.
    pub fn output_directory(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.as_ref().and_then(|o| o.directory.clone()))
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set [output].directory".into()))
    }

    pub fn metadata(&self) -> bool {
        self.output.as_ref().is_some_and(|o| o.metadata)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let err = RunConfig::parse("[memory]\nrail_h_eta0 = 1.0\ntypo = 2\n").unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(RunConfig::parse("[bogus]\n").is_err());
    }

    #[test]
    fn missing_section_is_reported() {
        let cfg = RunConfig::parse("").unwrap();
        match cfg.memory() {
            Err(CliError::Config(msg)) => assert!(msg.contains("[memory]")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_times_must_increase() {
        let cfg = RunConfig::parse("[sweep]\ntimes = [0.0, 2e-6, 1e-6]\n").unwrap();
        assert!(cfg.sweep_times().is_err());
    }
}
