//! Simulation and process tomography of a dual-rail EIT quantum memory for
//! photonic polarization qubits.
//!
//! * [`qubit`]: kets, density matrices, Pauli basis, projectors.
//! * [`process`]: Pauli-basis χ matrices, Kraus sets, CP/TP checks, fidelity.
//! * [`eit`]: Λ-system transmission spectrum, FWHM calibration, retrieval
//!   decay and the storage/retrieval time trace.
//! * [`channel`]: the memory as a storage-time dependent qubit channel.
//! * [`measurement`]: gated Poisson photon counting and tomography datasets.
//! * [`tomography`]: linear-inversion and maximum-likelihood reconstruction,
//!   fidelity sweeps.
//!
//! Units are SI throughout: seconds, Hz for detunings, rad/s or 1/s for rates.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod eit;
pub mod error;
pub mod measurement;
pub mod process;
pub mod qubit;
pub mod tomography;

pub use channel::{channel_output, chi_of_memory, snapshot, ChannelOutput, ChannelSnapshot, MemoryParams, RailParams};
pub use eit::{
    calibrate_to_fwhm, fwhm, retrieval_efficiency, storage_timetrace, transmission_spectrum, EitParams, PulseTrace,
    Spectrum, StorageTiming,
};
pub use error::{Error, Result};
pub use measurement::{
    projection_probability, simulate_counts, tomography_dataset, CountModel, Dataset, InputState, PhotonCounter,
    Sampling, TomographyRecord,
};
pub use process::{
    apply_chi, check_cp_tp, chi_fidelity, chi_from_kraus, process_fidelity, ChiJson, CpTpReport, KrausSet,
    ProcessMatrix,
};
pub use qubit::{
    density_from_ket, ket_from_angles, projector, state_fidelity, DensityMatrix, Ket, Pauli, ProjectorLabel,
};
pub use tomography::{
    fidelity_vs_time, linear_inversion_chi, mle_chi, state_mle, FidelityCurve, LinearInversion, MleOptions, MleResult,
    Observations, StateMleResult,
};

/// Decimal scientific notation with 15 significant digits, as written to CSV.
pub fn format_sci(v: f64) -> String {
    format!("{v:.14e}")
}
