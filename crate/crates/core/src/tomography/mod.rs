//! Process and state reconstruction from projective counts.
//!
//! Two estimators share one data layout ([`Observations`]):
//!
//! * [`linear_inversion_chi`] turns per-basis relative frequencies into
//!   output Bloch vectors and solves the 16×16 linear system for χ. It is
//!   unconstrained and serves as the oracle for the likelihood fit.
//! * [`mle_chi`] maximizes the Poisson likelihood over completely positive,
//!   trace-preserving χ. χ is parameterized as `T†T` with `T` lower
//!   triangular (16 real parameters) and mapped onto the trace-preserving
//!   set by `K ↦ K S^{-1/2}` before every evaluation.
//!
//! Predicted projector probabilities are normalized within each basis pair,
//! so only relative counts of retrieved photons enter the fit.

mod optim;

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::MemoryParams;
use crate::error::{Error, Result};
use crate::measurement::{tomography_dataset, CountModel, InputState, Sampling, TomographyRecord};
use crate::process::{
    apply_chi, check_cp_tp, process_fidelity, project_trace_preserving, CpTpReport, Mat4, ProcessMatrix,
};
use crate::qubit::{pauli_basis, projector, DensityMatrix, Mat2, ProjectorLabel, C64};

pub use optim::{minimize, Minimum, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the per-count NLL by less than this.
    pub nll_tolerance: f64,
    /// Weight of the identity added to `χ_identity` for the starting point.
    pub init_perturbation: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { max_iterations: 2000, nll_tolerance: 1e-13, init_perturbation: 0.1 }
    }
}

impl MleOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.nll_tolerance > 0.0) || !self.nll_tolerance.is_finite() {
            return Err(Error::invalid("nll_tolerance", "must be positive"));
        }
        if !(self.init_perturbation > 0.0) || !self.init_perturbation.is_finite() {
            return Err(Error::invalid("init_perturbation", "must be positive"));
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings { max_iterations: self.max_iterations, tolerance: self.nll_tolerance }
    }
}

/// State of a fit that ran out of iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct NonConvergence {
    pub iterations: usize,
    pub last_iterate: Vec<f64>,
    pub last_chi: Option<ProcessMatrix>,
    pub last_state: Option<DensityMatrix>,
    pub nll_history: Vec<f64>,
}

/// Counts (or probabilities) per input state and projector.
///
/// Columns follow [`ProjectorLabel::ALL`], so basis pairs occupy columns
/// (0, 1), (2, 3) and (4, 5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observations {
    pub counts: [[f64; 6]; 4],
}

fn column(label: ProjectorLabel) -> usize {
    ProjectorLabel::ALL.iter().position(|&l| l == label).expect("label in ALL")
}

impl Observations {
    pub fn from_records(records: &[TomographyRecord]) -> Result<Self> {
        let mut counts = [[f64::NAN; 6]; 4];
        for r in records {
            counts[r.input.index()][column(r.projector)] = r.counts;
        }
        for input in InputState::ALL {
            for label in ProjectorLabel::ALL {
                if counts[input.index()][column(label)].is_nan() {
                    return Err(Error::MissingSetting { input: input.label(), projector: label.label() });
                }
            }
        }
        Ok(Observations { counts })
    }

    /// Exact projector probabilities of the given output states.
    pub fn from_outputs(outputs: &[DensityMatrix; 4]) -> Self {
        let mut counts = [[0.0; 6]; 4];
        for (j, rho) in outputs.iter().enumerate() {
            for (k, label) in ProjectorLabel::ALL.into_iter().enumerate() {
                counts[j][k] = rho.expectation(projector(label).matrix()).max(0.0);
            }
        }
        Observations { counts }
    }

    /// Exact probabilities for a known process.
    pub fn exact_from_chi(chi: &ProcessMatrix) -> Result<Self> {
        let mut outputs = [DensityMatrix::maximally_mixed(); 4];
        for input in InputState::ALL {
            outputs[input.index()] = apply_chi(chi, &input.density())?;
        }
        Ok(Self::from_outputs(&outputs))
    }

    fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }
}

/// Bloch vector estimated from one input's six counts.
fn bloch_from_counts(input: InputState, row: &[f64; 6]) -> Result<[f64; 3]> {
    let pair = |plus: ProjectorLabel, minus: ProjectorLabel| {
        let (a, b) = (row[column(plus)], row[column(minus)]);
        if a + b <= 0.0 {
            return Err(Error::EmptyBasisPair { input: input.label(), first: plus.label(), second: minus.label() });
        }
        Ok((a - b) / (a + b))
    };
    Ok([
        pair(ProjectorLabel::D, ProjectorLabel::A)?,
        pair(ProjectorLabel::L, ProjectorLabel::R)?,
        pair(ProjectorLabel::H, ProjectorLabel::V)?,
    ])
}

/// Coefficient matrix of `χ ↦ (E(ρ_j))_{ab}` with rows `(j, a, b)` and
/// columns `(m, n)`.
fn inversion_system() -> &'static DMatrix<C64> {
    static SYSTEM: OnceLock<DMatrix<C64>> = OnceLock::new();
    SYSTEM.get_or_init(|| {
        let e = pauli_basis();
        let mut a = DMatrix::zeros(16, 16);
        for input in InputState::ALL {
            let rho = *input.density().matrix();
            for m in 0..4 {
                for n in 0..4 {
                    let term = e[m] * rho * e[n];
                    for r in 0..2 {
                        for c in 0..2 {
                            a[(input.index() * 4 + r * 2 + c, m * 4 + n)] = term[(r, c)];
                        }
                    }
                }
            }
        }
        a
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearInversion {
    pub chi: ProcessMatrix,
    /// `false` when χ has eigenvalues below the CP tolerance.
    pub physical: bool,
    pub report: CpTpReport,
}

/// Unconstrained reconstruction. Non-physical estimates are flagged, not
/// clipped.
pub fn linear_inversion_chi(obs: &Observations) -> Result<LinearInversion> {
    let mut rhs = nalgebra::DVector::<C64>::zeros(16);
    for input in InputState::ALL {
        let [x, y, z] = bloch_from_counts(input, &obs.counts[input.index()])?;
        let out = [
            C64::new(0.5 * (1.0 + z), 0.0),
            C64::new(0.5 * x, -0.5 * y),
            C64::new(0.5 * x, 0.5 * y),
            C64::new(0.5 * (1.0 - z), 0.0),
        ];
        for (k, v) in out.into_iter().enumerate() {
            rhs[input.index() * 4 + k] = v;
        }
    }
    let solution = inversion_system()
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("input states", "not informationally complete"))?;
    let chi = ProcessMatrix::hermitian_part(Mat4::from_fn(|m, n| solution[m * 4 + n]));
    let report = check_cp_tp(&chi);
    Ok(LinearInversion { chi, physical: report.cp_ok, report })
}

/// `W_mn = Tr[P_s E_m ρ_j E_n]` for every setting, so that the unnormalized
/// prediction is `Re Σ_mn χ_mn W_mn`.
fn prediction_weights() -> &'static [[Mat4; 6]; 4] {
    static WEIGHTS: OnceLock<[[Mat4; 6]; 4]> = OnceLock::new();
    WEIGHTS.get_or_init(|| {
        let e = pauli_basis();
        let mut w = [[Mat4::zeros(); 6]; 4];
        for input in InputState::ALL {
            let rho = *input.density().matrix();
            for (k, label) in ProjectorLabel::ALL.into_iter().enumerate() {
                let p = *projector(label).matrix();
                w[input.index()][k] = Mat4::from_fn(|m, n| (p * e[m] * rho * e[n]).trace());
            }
        }
        w
    })
}

/// Lower-triangular T with real diagonal from 16 reals.
fn chi_from_params(x: &[f64]) -> Mat4 {
    let mut t = Mat4::zeros();
    for i in 0..4 {
        t[(i, i)] = C64::from(x[i]);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t.adjoint() * t
}

/// Inverse of [`chi_from_params`] for a positive-definite χ.
fn params_from_chi(chi: &Mat4) -> Option<Vec<f64>> {
    // χ = T†T with T lower triangular ⇔ J χ J = L L† with L = J T† J lower,
    // where J reverses the index order.
    let rev = Mat4::from_fn(|i, j| if i + j == 3 { C64::from(1.0) } else { C64::from(0.0) });
    let l = (rev * chi * rev).cholesky()?.l();
    let t = (rev * l * rev).adjoint();
    let mut x = Vec::with_capacity(16);
    for i in 0..4 {
        x.push(t[(i, i)].re);
    }
    for i in 1..4 {
        for j in 0..i {
            x.push(t[(i, j)].re);
            x.push(t[(i, j)].im);
        }
    }
    Some(x)
}

fn tp_chi_from_params(x: &[f64]) -> Option<ProcessMatrix> {
    project_trace_preserving(&ProcessMatrix::from_matrix_unchecked(chi_from_params(x))).ok()
}

/// Negative log-likelihood per count, with per-pair normalized predictions:
/// `−Σ_s n_s ln p_s / Σ_s n_s`.
struct ProcessLikelihood {
    counts: [[f64; 6]; 4],
    total: f64,
}

impl ProcessLikelihood {
    fn predictions(chi: &ProcessMatrix) -> [[f64; 6]; 4] {
        let w = prediction_weights();
        let mut q = [[0.0; 6]; 4];
        for j in 0..4 {
            for k in 0..6 {
                q[j][k] = chi.matrix().component_mul(&w[j][k]).sum().re.max(0.0);
            }
        }
        q
    }

    fn nll_of_chi(&self, chi: &ProcessMatrix) -> f64 {
        pair_normalized_nll(&self.counts, &Self::predictions(chi)) / self.total
    }

    fn value(&self, x: &[f64]) -> f64 {
        match tp_chi_from_params(x) {
            Some(chi) => self.nll_of_chi(&chi),
            None => f64::INFINITY,
        }
    }
}

fn pair_normalized_nll<const N: usize>(counts: &[[f64; 6]; N], q: &[[f64; 6]; N]) -> f64 {
    let mut nll = 0.0;
    for (row_n, row_q) in counts.iter().zip(q) {
        for pair in 0..3 {
            let (a, b) = (2 * pair, 2 * pair + 1);
            let norm = row_q[a] + row_q[b];
            for k in [a, b] {
                let n = row_n[k];
                if n > 0.0 {
                    let p = row_q[k] / norm;
                    if !(p > 0.0) {
                        return f64::INFINITY;
                    }
                    nll -= n * p.ln();
                }
            }
        }
    }
    nll
}

/// Poisson NLL `Σ_s [μ_s − n_s ln μ_s]` with `μ_s = M_pair · p_s`, obtained
/// from the per-count value by an increasing affine map.
fn poisson_nll<const N: usize>(counts: &[[f64; 6]; N], per_count: f64) -> f64 {
    let mut offset = 0.0;
    let mut total = 0.0;
    for row in counts {
        for pair in 0..3 {
            let m = row[2 * pair] + row[2 * pair + 1];
            total += m;
            if m > 0.0 {
                offset += m - m * m.ln();
            }
        }
    }
    offset + total * per_count
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub chi: ProcessMatrix,
    pub nll: f64,
    pub nll_history: Vec<f64>,
    pub iterations: usize,
    pub report: CpTpReport,
}

fn starting_point(opts: &MleOptions) -> Vec<f64> {
    let mut chi = Mat4::identity() * C64::from(opts.init_perturbation);
    chi[(0, 0)] += C64::from(1.0);
    params_from_chi(&chi).expect("positive definite start")
}

/// Maximum-likelihood χ over completely positive, trace-preserving processes.
pub fn mle_chi(obs: &Observations, opts: &MleOptions) -> Result<MleResult> {
    opts.validate()?;
    if obs.counts.iter().flatten().any(|n| !(*n >= 0.0) || !n.is_finite()) {
        return Err(Error::invalid("counts", "must be finite and nonnegative"));
    }
    let total = obs.total();
    if !(total > 0.0) {
        return Err(Error::invalid("counts", "no counts recorded"));
    }
    let likelihood = ProcessLikelihood { counts: obs.counts, total };
    let min = minimize(|x| likelihood.value(x), &starting_point(opts), opts.settings());
    let history: Vec<f64> = min.history.iter().map(|v| poisson_nll(&obs.counts, *v)).collect();

    if !min.converged {
        return Err(Error::NonConvergence(Box::new(NonConvergence {
            iterations: min.iterations,
            last_chi: tp_chi_from_params(&min.x),
            last_state: None,
            last_iterate: min.x,
            nll_history: history,
        })));
    }
    let chi = tp_chi_from_params(&min.x).ok_or_else(|| Error::invalid("chi", "degenerate final iterate"))?;
    let chi = chi.normalized()?;
    let report = check_cp_tp(&chi);
    Ok(MleResult {
        nll: poisson_nll(&obs.counts, likelihood.nll_of_chi(&chi)),
        chi,
        nll_history: history,
        iterations: min.iterations,
        report,
    })
}

fn state_from_params(x: &[f64]) -> Option<DensityMatrix> {
    let t = Mat2::new(C64::from(x[0]), C64::from(0.0), C64::new(x[2], x[3]), C64::from(x[1]));
    let rho = t.adjoint() * t;
    let tr = rho.trace().re;
    if !(tr > 0.0) {
        return None;
    }
    Some(DensityMatrix::from_matrix_unchecked(rho / C64::from(tr)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMleResult {
    pub rho: DensityMatrix,
    pub nll: f64,
    pub nll_history: Vec<f64>,
    pub iterations: usize,
}

/// Maximum-likelihood density matrix from one input's six settings.
pub fn state_mle(records: &[TomographyRecord], opts: &MleOptions) -> Result<StateMleResult> {
    opts.validate()?;
    let mut row = [f64::NAN; 6];
    for r in records {
        row[column(r.projector)] = r.counts;
    }
    if let Some(k) = row.iter().position(|n| n.is_nan()) {
        let input = records.first().map_or("?", |r| r.input.label());
        return Err(Error::MissingSetting { input, projector: ProjectorLabel::ALL[k].label() });
    }
    state_mle_counts(&row, opts)
}

pub fn state_mle_counts(row: &[f64; 6], opts: &MleOptions) -> Result<StateMleResult> {
    if row.iter().any(|n| !(*n >= 0.0) || !n.is_finite()) {
        return Err(Error::invalid("counts", "must be finite and nonnegative"));
    }
    let total: f64 = row.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("counts", "no counts recorded"));
    }
    let counts = [*row];
    let value = |x: &[f64]| match state_from_params(x) {
        Some(rho) => {
            let q = [ProjectorLabel::ALL.map(|l| rho.expectation(projector(l).matrix()).max(0.0))];
            pair_normalized_nll(&counts, &q) / total
        }
        None => f64::INFINITY,
    };
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let min = minimize(value, &[s, s, 0.0, 0.0], opts.settings());
    let history: Vec<f64> = min.history.iter().map(|v| poisson_nll(&counts, *v)).collect();
    if !min.converged {
        return Err(Error::NonConvergence(Box::new(NonConvergence {
            iterations: min.iterations,
            last_chi: None,
            last_state: state_from_params(&min.x),
            last_iterate: min.x,
            nll_history: history,
        })));
    }
    let rho = state_from_params(&min.x).ok_or_else(|| Error::invalid("rho", "degenerate final iterate"))?;
    Ok(StateMleResult { rho, nll: poisson_nll(&counts, min.value), nll_history: history, iterations: min.iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityCurve {
    pub storage_times: Vec<f64>,
    pub fidelities: Vec<f64>,
    pub efficiencies: Vec<f64>,
}

impl FidelityCurve {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("storage_time_s,process_fidelity,retrieval_efficiency\n");
        for i in 0..self.storage_times.len() {
            let _ = writeln!(
                out,
                "{},{},{}",
                crate::format_sci(self.storage_times[i]),
                crate::format_sci(self.fidelities[i]),
                crate::format_sci(self.efficiencies[i])
            );
        }
        out
    }
}

/// Seed for the `index`-th time point of a sweep (SplitMix64 of the base).
pub fn sweep_seed(base: u64, index: usize) -> u64 {
    let mut z = base.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One reconstruction at storage time `t`: dataset, MLE, fidelity to identity.
pub fn reconstruct_at(
    mp: &MemoryParams,
    t: f64,
    cm: &CountModel,
    sampling: Sampling,
    opts: &MleOptions,
) -> Result<(crate::measurement::Dataset, MleResult, f64)> {
    let dataset = tomography_dataset(mp, t, cm, sampling)?;
    let obs = Observations::from_records(&dataset.records)?;
    let fit = mle_chi(&obs, opts)?;
    let fidelity = process_fidelity(&fit.chi, &ProcessMatrix::identity())?;
    Ok((dataset, fit, fidelity))
}

/// Process fidelity and mean retrieval efficiency at each storage time.
///
/// Time points run in parallel; each uses its own seed from
/// [`sweep_seed`], so the result matches a sequential run.
pub fn fidelity_vs_time(
    mp: &MemoryParams,
    cm: &CountModel,
    times: &[f64],
    sampling: Sampling,
    opts: &MleOptions,
) -> Result<FidelityCurve> {
    if times.is_empty() {
        return Err(Error::invalid("times", "empty"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times", "must be strictly increasing"));
    }
    let points: Vec<Result<f64>> = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let cm_t = cm.with_seed(sweep_seed(cm.seed, i));
            reconstruct_at(mp, t, &cm_t, sampling, opts).map(|(_, _, f)| f)
        })
        .collect();
    let fidelities = points.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FidelityCurve {
        storage_times: times.to_vec(),
        fidelities,
        efficiencies: times.iter().map(|&t| mp.mean_efficiency(t)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{chi_from_kraus, KrausSet};
    use crate::qubit::{Pauli, ONE};

    #[test]
    fn params_round_trip() {
        let mut chi = ProcessMatrix::depolarizing(0.3).mix(0.7, &ProcessMatrix::dephasing(0.2), 0.3);
        chi = chi.mix(1.0, &ProcessMatrix::identity(), 0.05);
        let x = params_from_chi(chi.matrix()).unwrap();
        let back = chi_from_params(&x);
        assert!((back - chi.matrix()).iter().all(|z| z.norm() < 1e-13));
    }

    #[test]
    fn inversion_of_identity() {
        let obs = Observations::exact_from_chi(&ProcessMatrix::identity()).unwrap();
        let li = linear_inversion_chi(&obs).unwrap();
        assert!((li.chi.get(Pauli::I, Pauli::I).re - 1.0).abs() < 1e-12);
        assert!(li.chi.frobenius_distance(&ProcessMatrix::identity()) < 1e-12);
    }

    #[test]
    fn inversion_of_dephasing() {
        let obs = Observations::exact_from_chi(&ProcessMatrix::dephasing(0.8)).unwrap();
        let li = linear_inversion_chi(&obs).unwrap();
        assert!(li.chi.frobenius_distance(&ProcessMatrix::diagonal([0.9, 0.0, 0.0, 0.1])) < 1e-10);
        assert!(li.physical);
    }

    #[test]
    fn inversion_recovers_non_unital_channel() {
        let ks = KrausSet::new(vec![
            Mat2::new(ONE, C64::from(0.0), C64::from(0.0), C64::from(0.6f64.sqrt())),
            Mat2::new(C64::from(0.0), C64::from(0.4f64.sqrt()), C64::from(0.0), C64::from(0.0)),
        ])
        .unwrap();
        let chi = chi_from_kraus(&ks).unwrap();
        let li = linear_inversion_chi(&Observations::exact_from_chi(&chi).unwrap()).unwrap();
        assert!(li.chi.frobenius_distance(&chi) < 1e-10);
    }

    #[test]
    fn inversion_errors() {
        let mut obs = Observations::exact_from_chi(&ProcessMatrix::identity()).unwrap();
        obs.counts[0][column(ProjectorLabel::D)] = 0.0;
        obs.counts[0][column(ProjectorLabel::A)] = 0.0;
        assert!(matches!(linear_inversion_chi(&obs), Err(Error::EmptyBasisPair { input: "H", .. })));
        let records: Vec<TomographyRecord> = Vec::new();
        assert!(matches!(Observations::from_records(&records), Err(Error::MissingSetting { .. })));
    }

    #[test]
    fn mle_identity_exact() {
        let obs = Observations::exact_from_chi(&ProcessMatrix::identity()).unwrap();
        let fit = mle_chi(&obs, &MleOptions::default()).unwrap();
        let f = process_fidelity(&fit.chi, &ProcessMatrix::identity()).unwrap();
        assert!(f >= 0.9999, "{f}");
        assert!(fit.report.tp_defect <= 1e-6);
        assert!(fit.nll_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mle_dephasing_exact_matches_inversion() {
        let obs = Observations::exact_from_chi(&ProcessMatrix::dephasing(0.8)).unwrap();
        let fit = mle_chi(&obs, &MleOptions::default()).unwrap();
        let li = linear_inversion_chi(&obs).unwrap();
        assert!(fit.chi.frobenius_distance(&li.chi) <= 1e-4);
    }

    #[test]
    fn mle_non_convergence_carries_history() {
        let obs = Observations::exact_from_chi(&ProcessMatrix::dephasing(0.5)).unwrap();
        let opts = MleOptions { max_iterations: 2, ..MleOptions::default() };
        match mle_chi(&obs, &opts) {
            Err(Error::NonConvergence(nc)) => {
                assert_eq!(nc.iterations, 2);
                assert_eq!(nc.nll_history.len(), 3);
                assert!(nc.last_chi.is_some());
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn state_mle_exact() {
        for rho in [
            projector(ProjectorLabel::D),
            DensityMatrix::maximally_mixed(),
            DensityMatrix::from_bloch(0.2, -0.5, 0.3).unwrap(),
        ] {
            let row = ProjectorLabel::ALL.map(|l| rho.expectation(projector(l).matrix()));
            let fit = state_mle_counts(&row, &MleOptions::default()).unwrap();
            assert!(fit.rho.max_abs_diff(&rho) < 1e-6, "{:?} vs {:?}", fit.rho, rho);
        }
    }

    #[test]
    fn sweep_seeds_differ() {
        let seeds: Vec<u64> = (0..8).map(|i| sweep_seed(7, i)).collect();
        let mut unique = seeds.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
    }
}
