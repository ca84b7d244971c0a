//! Single-qubit processes in the Pauli operator basis.
//!
//! A process acts as `E(ρ) = Σ_mn χ_mn E_m ρ E_n†` with `E = (I, X, Y, Z)`
//! unnormalized, so a trace-preserving χ has unit trace and the identity
//! process is `χ_00 = 1`.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubit::{pauli_basis, psd_sqrt2, DensityMatrix, Mat2, Pauli, C64, ZERO};

pub type Mat4 = Matrix4<C64>;

const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalue floor for complete positivity.
pub const CP_TOL: f64 = 1e-8;

fn max_abs(m: impl IntoIterator<Item = C64>) -> f64 {
    m.into_iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Hermitian 4×4 process matrix indexed in (I, X, Y, Z) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessMatrix(Mat4);

impl ProcessMatrix {
    pub fn new(chi: Mat4) -> Result<Self> {
        if chi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("chi"));
        }
        let deviation = max_abs((chi - chi.adjoint()).iter().copied());
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { name: "chi", deviation });
        }
        Ok(ProcessMatrix(chi))
    }

    pub(crate) fn from_matrix_unchecked(chi: Mat4) -> Self {
        ProcessMatrix(chi)
    }

    /// Averages `chi` with its adjoint.
    pub(crate) fn hermitian_part(chi: Mat4) -> Self {
        ProcessMatrix((chi + chi.adjoint()) * C64::from(0.5))
    }

    pub fn identity() -> Self {
        Self::pauli(Pauli::I)
    }

    /// The unitary process `ρ ↦ P ρ P` for a Pauli `P`.
    pub fn pauli(p: Pauli) -> Self {
        let mut chi = Mat4::zeros();
        chi[(p.index(), p.index())] = C64::from(1.0);
        ProcessMatrix(chi)
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        ProcessMatrix(Mat4::from_diagonal(&nalgebra::Vector4::from(d.map(C64::from))))
    }

    /// `ρ ↦ (1 − w) ρ + w I/2`.
    pub fn depolarizing(w: f64) -> Self {
        let q = w / 4.0;
        Self::diagonal([1.0 - w + q, q, q, q])
    }

    /// Coherence between H and V scaled by `lambda`.
    pub fn dephasing(lambda: f64) -> Self {
        Self::diagonal([0.5 * (1.0 + lambda), 0.0, 0.0, 0.5 * (1.0 - lambda)])
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn get(&self, m: Pauli, n: Pauli) -> C64 {
        self.0[(m.index(), n.index())]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(Error::invalid("chi", format!("trace {t} is not positive")));
        }
        Ok(ProcessMatrix(self.0 / C64::from(t)))
    }

    /// `a·self + b·other`.
    pub fn mix(&self, a: f64, other: &ProcessMatrix, b: f64) -> ProcessMatrix {
        ProcessMatrix(self.0 * C64::from(a) + other.0 * C64::from(b))
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.hermitian_matrix());
        let mut values = [0.0; 4];
        values.copy_from_slice(eig.eigenvalues.as_slice());
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn hermitian_deviation(&self) -> f64 {
        max_abs((self.0 - self.0.adjoint()).iter().copied())
    }

    fn hermitian_matrix(&self) -> Mat4 {
        (self.0 + self.0.adjoint()) * C64::from(0.5)
    }

    /// `Σ_mn χ_mn E_n E_m`, which equals `Σ_k K_k† K_k` for the underlying
    /// Kraus operators.
    pub fn tp_operator(&self) -> Mat2 {
        let e = pauli_basis();
        let mut s = Mat2::zeros();
        for m in 0..4 {
            for n in 0..4 {
                s += e[n] * e[m] * self.0[(m, n)];
            }
        }
        s
    }

    pub fn frobenius_distance(&self, other: &ProcessMatrix) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest-magnitude element as `(row, col, |χ|)`.
    pub fn argmax_abs(&self) -> (Pauli, Pauli, f64) {
        let mut best = (Pauli::I, Pauli::I, -1.0);
        for m in Pauli::ALL {
            for n in Pauli::ALL {
                let v = self.get(m, n).norm();
                if v > best.2 {
                    best = (m, n, v);
                }
            }
        }
        best
    }

    /// Operator-sum decomposition from the eigenvectors of χ. Eigenvalues
    /// below zero are dropped.
    pub fn to_kraus(&self) -> KrausSet {
        let e = pauli_basis();
        let eig = SymmetricEigen::new(self.hermitian_matrix());
        let mut ops = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let mut op = Mat2::zeros();
            for m in 0..4 {
                op += e[m] * (v[m] * lambda.sqrt());
            }
            ops.push(op);
        }
        if ops.is_empty() {
            ops.push(Mat2::zeros());
        }
        KrausSet { operators: ops }
    }
}

/// Operator-sum representation `{K_k}` of a trace-nonincreasing channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<Mat2>,
}

impl KrausSet {
    /// Rejects empty sets and sets with `Σ K†K` exceeding the identity.
    pub fn new(operators: Vec<Mat2>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::EmptyKraus);
        }
        let ks = KrausSet { operators };
        let completeness = ks.completeness();
        let top = crate::qubit::hermitian_eigenvalues2(&completeness)[1];
        if top > 1.0 + CP_TOL {
            return Err(Error::invalid("kraus", format!("Σ K†K has eigenvalue {top} above one")));
        }
        Ok(ks)
    }

    pub fn operators(&self) -> &[Mat2] {
        &self.operators
    }

    /// `Σ_k K_k† K_k`.
    pub fn completeness(&self) -> Mat2 {
        self.operators.iter().map(|k| k.adjoint() * k).sum()
    }

    /// `Σ_k K_k ρ K_k†`.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let m = self.operators.iter().map(|k| k * rho.matrix() * k.adjoint()).sum();
        DensityMatrix::from_matrix_unchecked(m)
    }
}

/// `Σ_mn χ_mn E_m ρ E_n†`. The output trace is whatever the process gives.
pub fn apply_chi(chi: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let deviation = chi.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { name: "chi", deviation });
    }
    let e = pauli_basis();
    let r = rho.matrix();
    let mut out = Mat2::zeros();
    for m in 0..4 {
        let left = e[m] * r;
        for (n, en) in e.iter().enumerate() {
            let coeff = chi.0[(m, n)];
            if coeff != ZERO {
                out += left * en * coeff;
            }
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked((out + out.adjoint()) * C64::from(0.5)))
}

/// Pauli coefficients `a_m = Tr[E_m K] / 2` of a 2×2 operator.
pub fn pauli_coefficients(k: &Mat2) -> [C64; 4] {
    pauli_basis().map(|e| (e * k).trace() * 0.5)
}

pub fn chi_from_kraus(ks: &KrausSet) -> Result<ProcessMatrix> {
    if ks.operators.is_empty() {
        return Err(Error::EmptyKraus);
    }
    let mut chi = Mat4::zeros();
    for k in &ks.operators {
        let a = pauli_coefficients(k);
        for m in 0..4 {
            for n in 0..4 {
                chi[(m, n)] += a[m] * a[n].conj();
            }
        }
    }
    Ok(ProcessMatrix(chi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpTpReport {
    pub cp_ok: bool,
    /// Operator norm of `Σ χ_mn E_n E_m − I`.
    pub tp_defect: f64,
    pub min_eigenvalue: f64,
}

pub fn check_cp_tp(chi: &ProcessMatrix) -> CpTpReport {
    let min_eigenvalue = chi.min_eigenvalue();
    let defect = chi.tp_operator() - Mat2::identity();
    let defect = (defect + defect.adjoint()) * C64::from(0.5);
    let [lo, hi] = crate::qubit::hermitian_eigenvalues2(&defect);
    CpTpReport { cp_ok: min_eigenvalue >= -CP_TOL, tp_defect: lo.abs().max(hi.abs()), min_eigenvalue }
}

/// `Tr[χ_exp χ_ideal]` with `χ_exp` trace-normalized first.
///
/// `chi_ideal` must describe a unitary process: unit trace and rank one.
pub fn process_fidelity(chi_exp: &ProcessMatrix, chi_ideal: &ProcessMatrix) -> Result<f64> {
    let ideal_trace = chi_ideal.trace();
    if (ideal_trace - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("chi_ideal", format!("trace {ideal_trace} is not one")));
    }
    let eig = chi_ideal.eigenvalues();
    if eig[0] < -CP_TOL || eig[2].abs() > 1e-8 {
        return Err(Error::invalid("chi_ideal", "not a rank-one unitary process"));
    }
    let exp = chi_exp.normalized().map_err(|_| Error::invalid("chi_exp", "trace is not positive"))?;
    Ok((exp.0 * chi_ideal.0).trace().re)
}

/// Uhlmann fidelity between two trace-normalized χ matrices.
///
/// χ/Tr χ is unitarily equivalent to the normalized Choi state, so this is the
/// Choi-state fidelity. It reduces to [`process_fidelity`] when either
/// argument is rank one.
pub fn chi_fidelity(a: &ProcessMatrix, b: &ProcessMatrix) -> Result<f64> {
    let a = a.normalized()?;
    let b = b.normalized()?;
    let sqrt_a = psd_sqrt4(&a.hermitian_matrix());
    let inner = sqrt_a * b.hermitian_matrix() * sqrt_a;
    let eig = SymmetricEigen::new((inner + inner.adjoint()) * C64::from(0.5));
    let root_trace: f64 = eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).sum();
    Ok((root_trace * root_trace).min(1.0))
}

fn psd_sqrt4(m: &Mat4) -> Mat4 {
    let eig = SymmetricEigen::new(*m);
    let roots = eig.eigenvalues.map(|v| C64::from(v.max(0.0).sqrt()));
    let v = eig.eigenvectors;
    v * Mat4::from_diagonal(&roots) * v.adjoint()
}

/// Matrix `R` with `E_m M = Σ_p R_pm E_p`.
fn right_multiplication(m: &Mat2) -> Mat4 {
    let e = pauli_basis();
    let mut r = Mat4::zeros();
    for col in 0..4 {
        let coeffs = pauli_coefficients(&(e[col] * m));
        for row in 0..4 {
            r[(row, col)] = coeffs[row];
        }
    }
    r
}

/// Maps every Kraus operator `K` to `K S^{-1/2}` with `S = Σ K†K`, which makes
/// the process exactly trace preserving and keeps it completely positive.
pub fn project_trace_preserving(chi: &ProcessMatrix) -> Result<ProcessMatrix> {
    let s = chi.tp_operator();
    let s = (s + s.adjoint()) * C64::from(0.5);
    let [lo, _] = crate::qubit::hermitian_eigenvalues2(&s);
    if !(lo > 0.0) {
        return Err(Error::invalid("chi", "Σ K†K is singular; cannot restore trace preservation"));
    }
    let inv_sqrt = psd_sqrt2(&s).try_inverse().ok_or_else(|| Error::invalid("chi", "Σ K†K is singular"))?;
    let r = right_multiplication(&inv_sqrt);
    Ok(ProcessMatrix::hermitian_part(r * chi.0 * r.adjoint()))
}

/// JSON form of a process matrix: `{"basis": [...], "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiJson {
    pub basis: [String; 4],
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
}

impl From<&ProcessMatrix> for ChiJson {
    fn from(chi: &ProcessMatrix) -> Self {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for m in 0..4 {
            for n in 0..4 {
                re[m][n] = chi.0[(m, n)].re;
                im[m][n] = chi.0[(m, n)].im;
            }
        }
        ChiJson { basis: Pauli::ALL.map(|p| p.label().to_string()), re, im }
    }
}

impl TryFrom<&ChiJson> for ProcessMatrix {
    type Error = Error;

    fn try_from(json: &ChiJson) -> Result<Self> {
        if json.basis.iter().zip(Pauli::ALL).any(|(s, p)| s != p.label()) {
            return Err(Error::invalid("basis", format!("expected [I, X, Y, Z], got {:?}", json.basis)));
        }
        let chi = Mat4::from_fn(|m, n| C64::new(json.re[m][n], json.im[m][n]));
        ProcessMatrix::new(chi)
    }
}
