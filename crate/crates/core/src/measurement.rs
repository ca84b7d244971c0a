//! Gated photon counting on the retrieved qubit.
//!
//! Counts are Poisson with mean `N · η · p + dark_rate · gate_width`, where
//! `η` is the input's retrieval probability and `p` the projection
//! probability of the retrieved state. Random numbers come from ChaCha8
//! (`rand_chacha`) seeded with `seed_from_u64`, one generator per dataset.
//! Poisson draws use CDF inversion below a mean of 30 and a rounded
//! Box–Muller normal approximation above.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{output_from_snapshot, snapshot, MemoryParams};
use crate::error::{check_finite, Error, Result};
use crate::qubit::{c, DensityMatrix, Ket, ProjectorLabel};

/// Below this mean Poisson draws use inversion.
pub const INVERSION_LIMIT: f64 = 30.0;

/// Probe states prepared for process tomography.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputState {
    H,
    V,
    R,
    D,
}

impl InputState {
    pub const ALL: [InputState; 4] = [InputState::H, InputState::V, InputState::R, InputState::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            InputState::H => "H",
            InputState::V => "V",
            InputState::R => "R",
            InputState::D => "D",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|i| i.label() == s)
    }

    pub fn ket(self) -> Ket {
        match self {
            InputState::H => ProjectorLabel::H.ket(),
            InputState::V => ProjectorLabel::V.ket(),
            InputState::R => ProjectorLabel::R.ket(),
            InputState::D => ProjectorLabel::D.ket(),
        }
    }

    pub fn density(self) -> DensityMatrix {
        self.ket().density()
    }
}

impl fmt::Display for InputState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Projector order within one input's block of a dataset.
pub const DATASET_PROJECTORS: [ProjectorLabel; 6] =
    [ProjectorLabel::H, ProjectorLabel::V, ProjectorLabel::R, ProjectorLabel::L, ProjectorLabel::D, ProjectorLabel::A];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    /// Expected detected signal photons per setting at unit efficiency.
    pub trials_per_setting: f64,
    /// Detector dark-count rate (1/s).
    pub dark_rate: f64,
    pub gate_width: f64,
    pub seed: u64,
}

impl Default for CountModel {
    fn default() -> Self {
        CountModel { trials_per_setting: 1e4, dark_rate: 100.0, gate_width: 1e-6, seed: 7 }
    }
}

impl CountModel {
    pub fn validate(&self) -> Result<()> {
        check_finite("trials_per_setting", self.trials_per_setting)?;
        check_finite("dark_rate", self.dark_rate)?;
        check_finite("gate_width", self.gate_width)?;
        if !(self.trials_per_setting > 0.0) {
            return Err(Error::invalid("trials_per_setting", "must be positive"));
        }
        if self.dark_rate < 0.0 {
            return Err(Error::invalid("dark_rate", "must be nonnegative"));
        }
        if !(self.gate_width > 0.0) {
            return Err(Error::invalid("gate_width", "must be positive"));
        }
        Ok(())
    }

    pub fn dark_mean(&self) -> f64 {
        self.dark_rate * self.gate_width
    }

    pub fn with_seed(self, seed: u64) -> Self {
        CountModel { seed, ..self }
    }
}

/// Whether datasets carry Poisson samples or their infinite-N expectation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    Exact,
    Poisson,
}

/// `Tr[P ρ]`.
pub fn projection_probability(rho: &DensityMatrix, label: ProjectorLabel) -> f64 {
    let k = label.ket();
    let m = rho.matrix();
    // ⟨k|ρ|k⟩
    let v = [k.amp_h, k.amp_v];
    let mut acc = c(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            acc += v[i].conj() * m[(i, j)] * v[j];
        }
    }
    acc.re
}

/// Seeded source of photon counts.
#[derive(Debug, Clone)]
pub struct PhotonCounter {
    rng: ChaCha8Rng,
}

impl PhotonCounter {
    pub fn new(seed: u64) -> Self {
        PhotonCounter { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if !(mean > 0.0) {
            return 0;
        }
        if mean < INVERSION_LIMIT {
            let u: f64 = self.rng.random();
            let mut k = 0u64;
            let mut term = (-mean).exp();
            let mut cdf = term;
            while u > cdf && k < 1000 {
                k += 1;
                term *= mean / k as f64;
                cdf += term;
                if term == 0.0 {
                    break;
                }
            }
            k
        } else {
            let u1 = 1.0 - self.rng.random::<f64>();
            let u2: f64 = self.rng.random();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            (mean + mean.sqrt() * z + 0.5).floor().max(0.0) as u64
        }
    }
}

/// One Poisson draw for a setting with projection probability `p`.
pub fn simulate_counts(p: f64, cm: &CountModel, rail_efficiency: f64, counter: &mut PhotonCounter) -> u64 {
    let mean = cm.trials_per_setting * rail_efficiency.clamp(0.0, 1.0) * p.clamp(0.0, 1.0) + cm.dark_mean();
    counter.poisson(mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub input: InputState,
    pub projector: ProjectorLabel,
    /// Detected counts. Integer-valued when sampled; the expected signal count
    /// (without dark counts) in exact mode.
    pub counts: f64,
    /// `N · η` for this input.
    pub expected_trials: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sampling: Sampling,
    pub records: Vec<TomographyRecord>,
}

impl Dataset {
    /// `input,projector,counts,expected_trials` rows in dataset order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("input,projector,counts,expected_trials\n");
        for r in &self.records {
            let counts = match self.sampling {
                Sampling::Poisson => format!("{}", r.counts as u64),
                Sampling::Exact => crate::format_sci(r.counts),
            };
            let _ = writeln!(out, "{},{},{},{}", r.input, r.projector, counts, crate::format_sci(r.expected_trials));
        }
        out
    }

    pub fn from_csv(text: &str, sampling: Sampling) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        match lines.next() {
            Some("input,projector,counts,expected_trials") => {}
            other => return Err(Error::invalid("dataset", format!("unexpected header {other:?}"))),
        }
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid("dataset", format!("malformed row {line:?}"));
            if fields.len() != 4 {
                return Err(bad());
            }
            let input = InputState::parse(fields[0]).ok_or_else(bad)?;
            let projector = ProjectorLabel::parse(fields[1]).ok_or_else(bad)?;
            let counts: f64 = fields[2].parse().map_err(|_| bad())?;
            let expected_trials: f64 = fields[3].parse().map_err(|_| bad())?;
            if !(counts >= 0.0) || !counts.is_finite() {
                return Err(bad());
            }
            records.push(TomographyRecord { input, projector, counts, expected_trials });
        }
        Ok(Dataset { sampling, records })
    }

    /// Records belonging to one input, in dataset order.
    pub fn for_input(&self, input: InputState) -> Vec<TomographyRecord> {
        self.records.iter().filter(|r| r.input == input).copied().collect()
    }
}

/// The 24-setting process-tomography dataset at storage time `t`.
///
/// Ordering is inputs (H, V, R, D) × projectors (H, V, R, L, D, A).
pub fn tomography_dataset(mp: &MemoryParams, t: f64, cm: &CountModel, sampling: Sampling) -> Result<Dataset> {
    cm.validate()?;
    let snap = snapshot(mp, t)?;
    let mut counter = PhotonCounter::new(cm.seed);
    let mut records = Vec::with_capacity(24);
    for input in InputState::ALL {
        let out = output_from_snapshot(&snap, &input.density())?;
        let expected_trials = cm.trials_per_setting * out.retrieval_prob;
        for projector in DATASET_PROJECTORS {
            let p = projection_probability(&out.rho, projector);
            let counts = match sampling {
                Sampling::Exact => expected_trials * p.max(0.0),
                Sampling::Poisson => simulate_counts(p, cm, out.retrieval_prob, &mut counter) as f64,
            };
            records.push(TomographyRecord { input, projector, counts, expected_trials });
        }
    }
    Ok(Dataset { sampling, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::channel_output;
    use crate::qubit::projector;

    #[test]
    fn projection_probability_examples() {
        let h = projector(ProjectorLabel::H);
        assert!((projection_probability(&h, ProjectorLabel::H) - 1.0).abs() < 1e-15);
        let d = projector(ProjectorLabel::D);
        assert!((projection_probability(&d, ProjectorLabel::R) - 0.5).abs() < 1e-15);

        let rail = crate::channel::RailParams { eta0: 0.4, gamma_ground: 0.0 };
        let mp = MemoryParams {
            rail_h: rail,
            rail_v: rail,
            phase_offset: 0.0,
            dephasing_rate: -(0.8f64).ln(),
            noise_flux: 0.0,
            signal_flux: 1.0,
        };
        let out = channel_output(&mp, &d, 1.0).unwrap();
        assert!((projection_probability(&out.rho, ProjectorLabel::D) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_gives_zero_counts() {
        let cm = CountModel { dark_rate: 0.0, ..CountModel::default() };
        let mut counter = PhotonCounter::new(1);
        for _ in 0..100 {
            assert_eq!(simulate_counts(0.0, &cm, 1.0, &mut counter), 0);
        }
    }

    #[test]
    fn same_seed_same_counts() {
        let cm = CountModel::default();
        let a = simulate_counts(0.37, &cm, 0.8, &mut PhotonCounter::new(42));
        let b = simulate_counts(0.37, &cm, 0.8, &mut PhotonCounter::new(42));
        assert_eq!(a, b);
        let mut small = PhotonCounter::new(42);
        let mut again = PhotonCounter::new(42);
        for _ in 0..50 {
            assert_eq!(small.poisson(3.3), again.poisson(3.3));
        }
    }

    #[test]
    fn poisson_mean_within_three_sigma() {
        let cm = CountModel { dark_rate: 0.0, ..CountModel::default() };
        let mut counter = PhotonCounter::new(5);
        let draws = 1000;
        let sum: u64 = (0..draws).map(|_| simulate_counts(1.0, &cm, 1.0, &mut counter)).sum();
        let mean = sum as f64 / draws as f64;
        let sigma = (1e4f64 / draws as f64).sqrt();
        assert!((mean - 1e4).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn small_mean_inversion_matches_pmf() {
        let mut counter = PhotonCounter::new(9);
        let draws = 200_000;
        let mean = 2.5;
        let mut hist = [0usize; 8];
        for _ in 0..draws {
            let k = counter.poisson(mean) as usize;
            if k < hist.len() {
                hist[k] += 1;
            }
        }
        let mut pmf = (-mean).exp();
        for (k, &h) in hist.iter().enumerate() {
            if k > 0 {
                pmf *= mean / k as f64;
            }
            let freq = h as f64 / draws as f64;
            let sigma = (pmf * (1.0 - pmf) / draws as f64).sqrt();
            assert!((freq - pmf).abs() < 5.0 * sigma, "k={k} freq={freq} pmf={pmf}");
        }
    }

    #[test]
    fn ideal_exact_dataset_probabilities() {
        let cm = CountModel::default();
        let ds = tomography_dataset(&MemoryParams::ideal(), 0.0, &cm, Sampling::Exact).unwrap();
        assert_eq!(ds.records.len(), 24);
        for r in &ds.records {
            let p = r.counts / r.expected_trials;
            let input = ProjectorLabel::parse(r.input.label()).unwrap();
            let expected = if r.projector == input {
                1.0
            } else if r.projector == input.partner() {
                0.0
            } else {
                0.5
            };
            assert!((p - expected).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn dataset_ordering_is_fixed() {
        let ds =
            tomography_dataset(&MemoryParams::calibrated(), 7e-6, &CountModel::default(), Sampling::Poisson).unwrap();
        let order: Vec<String> = ds.records.iter().map(|r| format!("{}{}", r.input, r.projector)).collect();
        let expected: Vec<String> =
            InputState::ALL.iter().flat_map(|i| DATASET_PROJECTORS.iter().map(move |p| format!("{i}{p}"))).collect();
        assert_eq!(order, expected);
        assert!(ds.records.iter().all(|r| r.counts.fract() == 0.0));
    }

    #[test]
    fn noise_dominated_dataset_is_flat() {
        let mut mp = MemoryParams::calibrated();
        mp.signal_flux = 0.0;
        let ds = tomography_dataset(&mp, 3e-6, &CountModel::default(), Sampling::Exact).unwrap();
        assert!(ds.records.iter().all(|r| (r.counts / r.expected_trials - 0.5).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let ds =
            tomography_dataset(&MemoryParams::calibrated(), 7e-6, &CountModel::default(), Sampling::Poisson).unwrap();
        let csv = ds.to_csv();
        assert!(csv.starts_with("input,projector,counts,expected_trials\nH,H,"));
        assert_eq!(csv.lines().count(), 25);
        let back = Dataset::from_csv(&csv, Sampling::Poisson).unwrap();
        assert_eq!(back.records.len(), 24);
        for (a, b) in back.records.iter().zip(&ds.records) {
            assert_eq!(a.counts, b.counts);
            assert!((a.expected_trials / b.expected_trials - 1.0).abs() < 1e-13);
        }
        assert!(Dataset::from_csv("nope\n", Sampling::Poisson).is_err());
    }
}
