//! Effective homogeneous Λ-system model of one EIT ensemble.
//!
//! Rates (`gamma_excited`, `omega_c`, `gamma_ground`) are angular, in rad/s.
//! Detunings on a [`Spectrum`] and the reported FWHM are ordinary
//! frequencies in Hz; the conversion happens inside [`eit_response`].

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::format_sci;
use crate::qubit::C64;

/// Natural linewidth Γ of the Rb D1 line, 2π × 5.75 MHz.
pub const RB_D1_GAMMA: f64 = TAU * 5.75e6;

/// Points in the grid used for calibration and the default spectrum.
pub const CALIBRATION_POINTS: usize = 8001;
/// Calibration grid half-span in units of the target FWHM.
pub const CALIBRATION_SPAN: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EitParams {
    pub optical_depth: f64,
    /// Excited-state decay rate Γ (rad/s).
    pub gamma_excited: f64,
    /// Coupling Rabi frequency Ω_c (rad/s).
    pub omega_c: f64,
    /// Ground-state decoherence rate γ_12 (1/s).
    pub gamma_ground: f64,
    /// One-photon detuning Δ (Hz). Recorded, not used by the lineshape.
    pub probe_detuning_offset: f64,
}

impl EitParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("optical_depth", self.optical_depth),
            ("gamma_excited", self.gamma_excited),
            ("omega_c", self.omega_c),
            ("gamma_ground", self.gamma_ground),
        ];
        for (name, v) in fields {
            check_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        check_finite("probe_detuning_offset", self.probe_detuning_offset)?;
        Ok(())
    }
}

/// Normalized complex response `L(δ)` at two-photon detuning `delta_hz`.
///
/// `L = (Γ/2)(γ − iδ) / [(Γ/2 − iδ)(γ − iδ) + (Ω/2)²]`, with `L → 1` in the
/// uncoupled, decoherence-free limit at resonance.
pub fn eit_response(p: &EitParams, delta_hz: f64) -> C64 {
    let delta = TAU * delta_hz;
    let half_gamma = 0.5 * p.gamma_excited;
    let ground = C64::new(p.gamma_ground, -delta);
    let excited = C64::new(half_gamma, -delta);
    let coupling = 0.25 * p.omega_c * p.omega_c;
    let num = ground * half_gamma;
    let den = excited * ground + coupling;
    if den.norm() == 0.0 {
        return C64::new(1.0, 0.0);
    }
    num / den
}

/// Intensity transmission `exp(−d · Re L(δ))`.
pub fn transmission(p: &EitParams, delta_hz: f64) -> f64 {
    (-p.optical_depth * eit_response(p, delta_hz).re).exp().min(1.0)
}

/// Transmission sampled over two-photon detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub detunings: Vec<f64>,
    pub transmissions: Vec<f64>,
}

impl Spectrum {
    pub fn new(detunings: Vec<f64>, transmissions: Vec<f64>) -> Result<Self> {
        if detunings.len() != transmissions.len() {
            return Err(Error::InvalidGrid(format!(
                "{} detunings but {} transmissions",
                detunings.len(),
                transmissions.len()
            )));
        }
        check_grid(&detunings)?;
        Ok(Spectrum { detunings, transmissions })
    }

    pub fn max_transmission(&self) -> f64 {
        self.transmissions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `detuning_hz,transmission` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detuning_hz,transmission\n");
        for (d, t) in self.detunings.iter().zip(&self.transmissions) {
            let _ = writeln!(out, "{},{}", format_sci(*d), format_sci(*t));
        }
        out
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("non-finite detuning".into()));
    }
    if let Some(i) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("grid not strictly increasing at index {}", i + 1)));
    }
    Ok(())
}

pub fn transmission_spectrum(p: &EitParams, grid: &[f64]) -> Result<Spectrum> {
    p.validate()?;
    check_grid(grid)?;
    let transmissions = grid.iter().map(|&d| transmission(p, d)).collect();
    Ok(Spectrum { detunings: grid.to_vec(), transmissions })
}

/// `n` evenly spaced points over `[-half_span, half_span]`.
pub fn symmetric_grid(half_span: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| -half_span + 2.0 * half_span * i as f64 / (n - 1) as f64).collect()
}

/// Grid wide enough to contain the absorption floor around a window of width
/// `fwhm_hz`, and fine enough to resolve it to well below a percent.
pub fn calibration_grid(fwhm_hz: f64) -> Vec<f64> {
    symmetric_grid(CALIBRATION_SPAN * fwhm_hz, CALIBRATION_POINTS)
}

/// Full width at half maximum of the transparency peak.
///
/// The half level sits midway between the peak and the spectrum's minimum
/// (the absorption floor). Crossings are located by linear interpolation.
pub fn fwhm(s: &Spectrum) -> Result<f64> {
    let y = &s.transmissions;
    let x = &s.detunings;
    if y.len() < 3 {
        return Err(Error::NoInteriorPeak);
    }
    let (peak_idx, &peak) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).ok_or(Error::NoInteriorPeak)?;
    let floor = y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(peak - floor > 1e-12 * peak.abs().max(1e-300)) {
        return Err(Error::NoInteriorPeak);
    }
    if peak_idx == 0 || peak_idx == y.len() - 1 {
        return Err(Error::PeakAtBoundary);
    }
    let half = 0.5 * (peak + floor);
    let crossing = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);

    let right =
        (peak_idx + 1..y.len()).find(|&j| y[j] <= half).map(|j| crossing(j - 1, j)).ok_or(Error::NoInteriorPeak)?;
    let left = (0..peak_idx).rev().find(|&j| y[j] <= half).map(|j| crossing(j, j + 1)).ok_or(Error::NoInteriorPeak)?;
    Ok(right - left)
}

/// Approximate coupling Rabi frequency for a window of `fwhm_hz` in the
/// decoherence-free, Ω_c ≪ Γ limit.
fn omega_c_estimate(fwhm_hz: f64, d: f64, gamma_excited: f64) -> f64 {
    // Re L = x / (1 + x) with x = (Γδ / (Ω²/2))², solved at the half level.
    let half = 0.5 * (1.0 + (-d).exp());
    let r = (-half.ln() / d).clamp(1e-6, 0.999);
    let x = r / (1.0 - r);
    (TAU * fwhm_hz * gamma_excited / x.sqrt()).sqrt()
}

fn fwhm_for(base: &EitParams, omega_c: f64, target_hz: f64) -> Result<f64> {
    let p = EitParams { omega_c, ..*base };
    fwhm(&transmission_spectrum(&p, &calibration_grid(target_hz))?)
}

/// Finds Ω_c by bisection so the transparency window has `target_fwhm` (Hz).
pub fn calibrate_to_fwhm(target_fwhm: f64, d: f64, gamma_excited: f64, gamma_ground: f64) -> Result<EitParams> {
    check_finite("target_fwhm", target_fwhm)?;
    if target_fwhm <= 0.0 {
        return Err(Error::invalid("target_fwhm", "unreachable: must be positive"));
    }
    if !(d > 0.0) {
        return Err(Error::invalid("optical_depth", "must be positive for a transparency window"));
    }
    let base = EitParams { optical_depth: d, gamma_excited, omega_c: 0.0, gamma_ground, probe_detuning_offset: 0.0 };
    base.validate()?;

    let guess = omega_c_estimate(target_fwhm, d, gamma_excited);
    let (mut lo, mut hi) = (guess / 2.0, guess * 2.0);
    let eval = |omega: f64| fwhm_for(&base, omega, target_fwhm).unwrap_or(f64::NAN);
    let (mut f_lo, mut f_hi) = (eval(lo), eval(hi));
    for _ in 0..6 {
        if f_lo < target_fwhm && f_hi > target_fwhm {
            break;
        }
        if !(f_lo < target_fwhm) {
            lo /= 2.0;
            f_lo = eval(lo);
        }
        if !(f_hi > target_fwhm) {
            hi *= 2.0;
            f_hi = eval(hi);
        }
    }
    if !(f_lo < target_fwhm && f_hi > target_fwhm) {
        return Err(Error::CalibrationBracket { target_hz: target_fwhm, low_fwhm_hz: f_lo, high_fwhm_hz: f_hi });
    }

    // FWHM grows with Ω_c², so bisect geometrically.
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        let f_mid = eval(mid);
        if !f_mid.is_finite() {
            return Err(Error::CalibrationBracket { target_hz: target_fwhm, low_fwhm_hz: f_lo, high_fwhm_hz: f_hi });
        }
        if f_mid < target_fwhm {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Ok(EitParams { omega_c: (lo * hi).sqrt(), ..base })
}

/// `η(t) = η₀ · exp(−2 γ_12 t)`.
pub fn retrieval_efficiency(p: &EitParams, eta0: f64, storage_time: f64) -> f64 {
    decayed_efficiency(eta0, p.gamma_ground, storage_time)
}

pub(crate) fn decayed_efficiency(eta0: f64, gamma_ground: f64, storage_time: f64) -> f64 {
    (eta0 * (-2.0 * gamma_ground * storage_time.max(0.0)).exp()).clamp(0.0, 1.0)
}

/// Write / store / read sequence, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageTiming {
    pub probe_duration: f64,
    /// Coupling switch-off; storage starts here.
    pub write_off_time: f64,
    pub storage_duration: f64,
    pub gate_width: f64,
}

impl StorageTiming {
    /// 7 μs rectangular probe, 7 μs storage, 1 μs detector gate.
    pub fn default_sequence() -> Self {
        StorageTiming { probe_duration: 7e-6, write_off_time: 7e-6, storage_duration: 7e-6, gate_width: 1e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("probe_duration", self.probe_duration),
            ("write_off_time", self.write_off_time),
            ("storage_duration", self.storage_duration),
            ("gate_width", self.gate_width),
        ];
        for (name, v) in fields {
            check_finite(name, v)?;
            if v <= 0.0 {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.write_off_time < self.probe_duration {
            return Err(Error::invalid("write_off_time", "coupling switched off before the probe has entered"));
        }
        if self.gate_width > self.read_window() {
            return Err(Error::invalid("gate_width", "longer than the read-out window"));
        }
        Ok(())
    }

    pub fn read_time(&self) -> f64 {
        self.write_off_time + self.storage_duration
    }

    /// The retrieved pulse is traced for one probe duration after read-out.
    pub fn read_window(&self) -> f64 {
        self.probe_duration
    }

    /// Decay constant of the retrieved pulse.
    pub fn retrieval_time_constant(&self) -> f64 {
        self.probe_duration / 4.0
    }
}

/// Intensity trace normalized to the input peak; energies are in units of
/// the input pulse energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrace {
    pub times: Vec<f64>,
    pub intensities: Vec<f64>,
    pub step: f64,
    pub read_time: f64,
    pub gate_width: f64,
    pub leaked_fraction: f64,
    pub retrieved_fraction: f64,
}

impl PulseTrace {
    /// `Σ I_k Δt` relative to the input energy.
    pub fn output_energy(&self, input_energy: f64) -> f64 {
        self.intensities.iter().sum::<f64>() * self.step / input_energy
    }

    /// Energy collected inside the detector gate after read-out.
    pub fn gated_energy(&self) -> f64 {
        let end = self.read_time + self.gate_width;
        self.times
            .iter()
            .zip(&self.intensities)
            .filter(|(t, _)| **t >= self.read_time - 1e-3 * self.step && **t < end - 1e-3 * self.step)
            .map(|(_, i)| i * self.step)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,intensity\n");
        for (t, i) in self.times.iter().zip(&self.intensities) {
            let _ = writeln!(out, "{},{}", format_sci(*t), format_sci(*i));
        }
        out
    }
}

/// Phenomenological storage-and-retrieval trace for a rectangular probe.
///
/// Each sample holds the bin-averaged intensity over `[t_k, t_k + step)`:
/// a leaked copy of the input scaled by `leak_fraction` while the probe is on,
/// nothing during storage, then an exponential retrieved pulse of energy
/// `η(storage_duration)` starting at read-out.
pub fn storage_timetrace(
    p: &EitParams,
    eta0: f64,
    leak_fraction: f64,
    timing: &StorageTiming,
    grid_step: f64,
) -> Result<PulseTrace> {
    p.validate()?;
    timing.validate()?;
    check_finite("eta0", eta0)?;
    check_finite("leak_fraction", leak_fraction)?;
    if !(0.0..=1.0).contains(&eta0) {
        return Err(Error::invalid("eta0", format!("must lie in [0, 1], got {eta0}")));
    }
    if !(0.0..=1.0).contains(&leak_fraction) || leak_fraction + eta0 > 1.0 + 1e-12 {
        return Err(Error::invalid("leak_fraction", "leak_fraction + eta0 must not exceed 1"));
    }
    check_finite("grid_step", grid_step)?;
    if !(grid_step > 0.0) || grid_step >= timing.probe_duration {
        return Err(Error::invalid("grid_step", "must be positive and shorter than the probe duration"));
    }

    let eta = retrieval_efficiency(p, eta0, timing.storage_duration);
    let tau = timing.retrieval_time_constant();
    let read = timing.read_time();
    let end = read + timing.read_window();
    let n = (end / grid_step).ceil() as usize;
    let input_bins = (timing.probe_duration / grid_step).round() as usize;
    // Energies in units of peak × seconds; the input pulse carries
    // `input_bins · step` on the grid.
    let input_energy = input_bins as f64 * grid_step;
    let retrieved_energy = eta * input_energy;
    let read_bin = (read / grid_step).round() as usize;

    let mut times = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * grid_step;
        let value = if k < input_bins {
            leak_fraction
        } else if k >= read_bin {
            let a = (k - read_bin) as f64 * grid_step;
            let b = a + grid_step;
            retrieved_energy / grid_step * ((-a / tau).exp() - (-b / tau).exp())
        } else {
            0.0
        };
        times.push(t);
        intensities.push(value);
    }

    let retrieved_sum: f64 = intensities[read_bin.min(n)..].iter().sum::<f64>() * grid_step;
    Ok(PulseTrace {
        times,
        intensities,
        step: grid_step,
        read_time: read_bin as f64 * grid_step,
        gate_width: timing.gate_width,
        leaked_fraction: leak_fraction,
        retrieved_fraction: retrieved_sum / input_energy,
    })
}

/// Energy of the rectangular input pulse on the grid used by
/// [`storage_timetrace`].
pub fn input_pulse_energy(timing: &StorageTiming, grid_step: f64) -> f64 {
    (timing.probe_duration / grid_step).round() * grid_step
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn params(omega_c: f64, gamma_ground: f64) -> EitParams {
        EitParams {
            optical_depth: 4.0,
            gamma_excited: RB_D1_GAMMA,
            omega_c,
            gamma_ground,
            probe_detuning_offset: 100e6,
        }
    }

    #[test]
    fn perfect_dark_state_is_fully_transparent() {
        let p = params(TAU * 1e6, 0.0);
        assert_eq!(transmission(&p, 0.0), 1.0);
    }

    #[test]
    fn uncoupled_medium_absorbs() {
        let p = params(0.0, 0.0);
        assert!((transmission(&p, 0.0) - (-4.0f64).exp()).abs() < 1e-15);
        // Bare Lorentzian absorption away from resonance.
        let q = params(0.0, 1e3);
        assert!((transmission(&q, 0.0) - (-4.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn spectrum_rejects_bad_grids() {
        let p = params(TAU * 1e6, 1e4);
        assert!(matches!(transmission_spectrum(&p, &[]), Err(Error::InvalidGrid(_))));
        assert!(matches!(transmission_spectrum(&p, &[0.0, 1.0, 1.0]), Err(Error::InvalidGrid(_))));
        assert!(matches!(transmission_spectrum(&p, &[0.0, -1.0]), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn fwhm_of_lorentzian() {
        let w = 1234.5;
        let grid = symmetric_grid(2000.0 * w, 400_001);
        let values = grid.iter().map(|x| 1.0 / (1.0 + (x / w).powi(2))).collect();
        let s = Spectrum::new(grid, values).unwrap();
        let measured = fwhm(&s).unwrap();
        assert!((measured / (2.0 * w) - 1.0).abs() < 5e-3, "{measured}");
    }

    #[test]
    fn fwhm_errors() {
        let flat = Spectrum::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(fwhm(&flat), Err(Error::NoInteriorPeak)));
        let edge = Spectrum::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.2]).unwrap();
        assert!(matches!(fwhm(&edge), Err(Error::PeakAtBoundary)));
    }

    #[test]
    fn calibration_hits_target() {
        let p = calibrate_to_fwhm(90e3, 4.0, RB_D1_GAMMA, 2.5e4).unwrap();
        let measured = fwhm(&transmission_spectrum(&p, &calibration_grid(90e3)).unwrap()).unwrap();
        assert!((measured / 90e3 - 1.0).abs() < 5e-3, "{measured}");
    }

    #[test]
    fn calibration_round_trips_omega_c() {
        let original = params(TAU * 0.8e6, 3e4);
        let approx = omega_c_estimate(1.0, 4.0, RB_D1_GAMMA);
        let hint = (original.omega_c / approx).powi(2);
        let width = fwhm(&transmission_spectrum(&original, &calibration_grid(hint)).unwrap()).unwrap();
        let recovered = calibrate_to_fwhm(width, 4.0, RB_D1_GAMMA, 3e4).unwrap();
        assert!((recovered.omega_c / original.omega_c - 1.0).abs() < 1e-2);
    }

    #[test]
    fn calibration_rejects_zero_target() {
        assert!(calibrate_to_fwhm(0.0, 4.0, RB_D1_GAMMA, 0.0).is_err());
    }

    #[test]
    fn fwhm_grows_with_coupling() {
        let grid = calibration_grid(90e3);
        let guess = omega_c_estimate(90e3, 4.0, RB_D1_GAMMA);
        let widths: Vec<f64> = (0..10)
            .map(|i| {
                let omega = guess * (0.6 + 0.08 * i as f64);
                fwhm(&transmission_spectrum(&params(omega, 2.5e4), &grid).unwrap()).unwrap()
            })
            .collect();
        assert!(widths.windows(2).all(|w| w[1] > w[0]), "{widths:?}");
    }

    #[test]
    fn retrieval_efficiency_examples() {
        let p = params(TAU * 1e6, 2.5e4);
        assert_eq!(retrieval_efficiency(&p, 0.2, 0.0), 0.2);
        assert_eq!(retrieval_efficiency(&params(1.0, 0.0), 0.3, 1.0), 0.3);
        // 2γ = 1/(20 μs) at t = 16 μs.
        let expected = 0.2 * (-0.8f64).exp();
        assert!((retrieval_efficiency(&p, 0.2, 16e-6) - expected).abs() < 1e-15);
        assert!((expected - 0.0899).abs() < 1e-4);
    }

    #[test]
    fn pure_leak_trace_is_the_input_pulse() {
        let p = params(TAU * 1e6, 2.5e4);
        let timing = StorageTiming::default_sequence();
        let trace = storage_timetrace(&p, 0.0, 1.0, &timing, 1e-8).unwrap();
        assert_eq!(trace.retrieved_fraction, 0.0);
        let input = input_pulse_energy(&timing, 1e-8);
        assert!((trace.output_energy(input) - 1.0).abs() < 1e-12);
        assert!(trace.times.iter().zip(&trace.intensities).all(|(t, i)| if *t < 7e-6 - 1e-12 {
            *i == 1.0
        } else {
            *i == 0.0
        }));
    }

    #[test]
    fn lossless_trace_returns_everything() {
        let p = params(TAU * 1e6, 0.0);
        let timing =
            StorageTiming { probe_duration: 1e-6, write_off_time: 1e-6, storage_duration: 2e-6, gate_width: 1e-6 };
        let trace = storage_timetrace(&p, 1.0, 0.0, &timing, 1e-9).unwrap();
        // The read window holds four decay constants.
        assert!((trace.retrieved_fraction - (1.0 - (-4.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn default_sequence_has_retrieval_after_storage() {
        let p = calibrate_to_fwhm(90e3, 4.0, RB_D1_GAMMA, 2.5e4).unwrap();
        let timing = StorageTiming::default_sequence();
        let trace = storage_timetrace(&p, 0.2, 0.1, &timing, 1e-8).unwrap();
        let read = timing.read_time();
        assert!((trace.read_time - read).abs() < 1e-12);
        let (peak_t, peak_i) = trace
            .times
            .iter()
            .zip(&trace.intensities)
            .filter(|(t, _)| **t >= timing.probe_duration)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!(*peak_i > 0.0);
        assert!((peak_t - read).abs() < 1e-9);
        // Storage window is dark.
        assert!(trace
            .times
            .iter()
            .zip(&trace.intensities)
            .filter(|(t, _)| **t >= timing.probe_duration + 1e-9 && **t < read - 1e-9)
            .all(|(_, i)| *i == 0.0));
        assert!(trace.gated_energy() > 0.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let p = params(TAU * 1e6, 2.5e4);
        let timing = StorageTiming::default_sequence();
        assert!(storage_timetrace(&p, 0.2, 0.1, &timing, 7e-6).is_err());
        assert!(storage_timetrace(&p, 0.6, 0.5, &timing, 1e-8).is_err());
    }

    #[test]
    fn csv_header_and_precision() {
        let s = Spectrum::new(vec![-1.0, 0.0, 1.0], vec![0.1, 1.0 / 3.0, 0.1]).unwrap();
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("detuning_hz,transmission"));
        let second = lines.nth(1).unwrap();
        let value = second.split(',').nth(1).unwrap();
        assert!((value.parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn transmission_bounded_and_symmetric(
            d in 0.0..20.0f64,
            omega in 0.0..5e7f64,
            gamma in 0.0..1e6f64,
            delta in -1e7..1e7f64,
        ) {
            let p = EitParams { optical_depth: d, gamma_excited: RB_D1_GAMMA, omega_c: omega, gamma_ground: gamma, probe_detuning_offset: 0.0 };
            let t = transmission(&p, delta);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&t));
            prop_assert!((t - transmission(&p, -delta)).abs() < 1e-12);
        }

        #[test]
        fn efficiency_non_increasing(t1 in 0.0..1e-4f64, dt in 0.0..1e-4f64, gamma in 0.0..1e5f64, eta0 in 0.0..1.0f64) {
            let p = params(1.0, gamma);
            prop_assert!(retrieval_efficiency(&p, eta0, t1 + dt) <= retrieval_efficiency(&p, eta0, t1));
        }

        #[test]
        fn trace_conserves_energy(
            eta0 in 0.0..1.0f64,
            leak in 0.0..1.0f64,
            gamma in 0.0..1e5f64,
            probe in 1e-6..1e-5f64,
            storage in 1e-7..2e-5f64,
            steps in 20usize..400,
        ) {
            let leak = leak * (1.0 - eta0);
            let p = params(1e6, gamma);
            let timing = StorageTiming { probe_duration: probe, write_off_time: probe, storage_duration: storage, gate_width: probe / 7.0 };
            let step = probe / steps as f64;
            let trace = storage_timetrace(&p, eta0, leak, &timing, step).unwrap();
            let input = input_pulse_energy(&timing, step);
            prop_assert!(trace.output_energy(input) <= 1.0 + 1e-9);
            prop_assert!(trace.intensities.iter().all(|i| *i >= 0.0));
        }
    }
}
