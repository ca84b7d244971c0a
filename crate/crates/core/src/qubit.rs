//! Polarization qubits in the {H, V} basis: kets, density matrices, Pauli
//! operators and the six tomographic projectors.
//!
//! Everything here is 2×2, so eigenvalues, square roots and fidelities use
//! closed forms instead of a general eigensolver.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest elementwise deviation of `m` from its conjugate transpose.
pub(crate) fn hermitian_deviation2(m: &Mat2) -> f64 {
    (m - m.adjoint()).iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Eigenvalues of a Hermitian 2×2 matrix, ascending.
pub(crate) fn hermitian_eigenvalues2(m: &Mat2) -> [f64; 2] {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    [mean - radius, mean + radius]
}

/// Principal square root of a PSD Hermitian 2×2 matrix.
///
/// Uses √M = (M + √det·I) / √(Tr M + 2√det), which holds for any 2×2 matrix
/// with nonnegative eigenvalues.
pub(crate) fn psd_sqrt2(m: &Mat2) -> Mat2 {
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re.max(0.0);
    let s = det.sqrt();
    let t = (m[(0, 0)].re + m[(1, 1)].re + 2.0 * s).max(0.0).sqrt();
    if t == 0.0 {
        return Mat2::zeros();
    }
    (m + Mat2::identity() * C64::from(s)) / C64::from(t)
}

/// Pure polarization state `amp_h |H⟩ + amp_v |V⟩`.
///
/// Global phase is not canonicalized; compare kets through their projectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket {
    pub amp_h: C64,
    pub amp_v: C64,
}

impl Ket {
    pub const H: Ket = Ket { amp_h: ONE, amp_v: ZERO };
    pub const V: Ket = Ket { amp_h: ZERO, amp_v: ONE };

    /// Builds a ket from raw amplitudes, normalizing them.
    pub fn new(amp_h: C64, amp_v: C64) -> Result<Self> {
        let norm = (amp_h.norm_sqr() + amp_v.norm_sqr()).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("amplitude"));
        }
        if norm == 0.0 {
            return Err(Error::invalid("amplitude", "zero vector"));
        }
        Ok(Ket { amp_h: amp_h / norm, amp_v: amp_v / norm })
    }

    /// `cos θ |H⟩ + e^{iφ} sin θ |V⟩`.
    pub fn from_angles(theta: f64, phi: f64) -> Result<Self> {
        check_finite("theta", theta)?;
        check_finite("phi", phi)?;
        let theta = theta.rem_euclid(std::f64::consts::TAU);
        let phi = phi.rem_euclid(std::f64::consts::TAU);
        Ok(Ket { amp_h: C64::from(theta.cos()), amp_v: C64::from_polar(theta.sin(), phi) })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_h.norm_sqr() + self.amp_v.norm_sqr()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    pub fn with_global_phase(&self, phase: f64) -> Ket {
        let g = C64::from_polar(1.0, phase);
        Ket { amp_h: g * self.amp_h, amp_v: g * self.amp_v }
    }

    pub fn density(&self) -> DensityMatrix {
        density_from_ket(self)
    }
}

pub fn ket_from_angles(theta: f64, phi: f64) -> Result<Ket> {
    Ket::from_angles(theta, phi)
}

/// `|k⟩⟨k|`.
pub fn density_from_ket(k: &Ket) -> DensityMatrix {
    let m = Mat2::new(
        k.amp_h * k.amp_h.conj(),
        k.amp_h * k.amp_v.conj(),
        k.amp_v * k.amp_h.conj(),
        k.amp_v * k.amp_v.conj(),
    );
    DensityMatrix(m)
}

/// A 2×2 Hermitian positive-semidefinite operator in the {H, V} basis.
///
/// Channel outputs may carry trace below one before conditioning on
/// retrieval; [`DensityMatrix::normalized`] rescales to unit trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    /// Wraps `m` after checking that it is Hermitian and PSD. The trace is not
    /// constrained.
    pub fn new(m: Mat2) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("density matrix"));
        }
        let deviation = hermitian_deviation2(&m);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { name: "density matrix", deviation });
        }
        let rho = DensityMatrix(m);
        let min = rho.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::NotPsd { name: "density matrix", min_eigenvalue: min });
        }
        Ok(rho)
    }

    /// Wraps `m` without validation. Callers guarantee Hermiticity.
    pub(crate) fn from_matrix_unchecked(m: Mat2) -> Self {
        DensityMatrix(m)
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat2::identity() * C64::from(0.5))
    }

    /// `(I + x X + y Y + z Z) / 2`.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let m = Mat2::new(c(0.5 * (1.0 + z), 0.0), c(0.5 * x, -0.5 * y), c(0.5 * x, 0.5 * y), c(0.5 * (1.0 - z), 0.0));
        DensityMatrix::new(m)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0[(0, 0)].re + self.0[(1, 1)].re
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues2(&self.0)
    }

    /// Bloch vector `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)`, for a unit-trace state.
    pub fn bloch(&self) -> [f64; 3] {
        let b = self.0[(1, 0)];
        [2.0 * b.re, 2.0 * b.im, self.0[(0, 0)].re - self.0[(1, 1)].re]
    }

    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(Error::invalid("density matrix", format!("trace {t} is not positive")));
        }
        Ok(DensityMatrix(self.0 / C64::from(t)))
    }

    /// `a·self + b·other`.
    pub fn mix(&self, a: f64, other: &DensityMatrix, b: f64) -> DensityMatrix {
        DensityMatrix(self.0 * C64::from(a) + other.0 * C64::from(b))
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &Mat2) -> DensityMatrix {
        DensityMatrix(u * self.0 * u.adjoint())
    }

    /// `Re Tr[O ρ]` for a Hermitian operator `O`.
    pub fn expectation(&self, op: &Mat2) -> f64 {
        (op * self.0).trace().re
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).iter().fold(0.0, |acc, z| acc.max(z.norm()))
    }
}

/// Uhlmann fidelity `(Tr√(√ρ σ √ρ))²` between two unit-trace states.
///
/// For qubits this equals `Tr[ρσ] + 2√(det ρ · det σ)`.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    for (name, m) in [("rho", rho), ("sigma", sigma)] {
        let min = m.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::NotPsd { name, min_eigenvalue: min });
        }
    }
    let overlap = (rho.0 * sigma.0).trace().re;
    // Determinants at rounding level belong to pure states; their square
    // roots would otherwise add ~1e-9 of noise.
    let det = |m: &Mat2| {
        let d = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
        if d < 1e-14 {
            0.0
        } else {
            d
        }
    };
    let f = overlap + 2.0 * (det(&rho.0) * det(&sigma.0)).sqrt();
    Ok(f.clamp(0.0, 1.0))
}

/// Operator basis `E_0..E_3 = I, X, Y, Z`, unnormalized (`Tr[E_m E_n] = 2δ_mn`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        }
    }

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => Mat2::identity(),
            Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
            Pauli::Y => Mat2::new(ZERO, -I, I, ZERO),
            Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
        }
    }
}

/// The four Pauli matrices in basis order.
pub fn pauli_basis() -> [Mat2; 4] {
    Pauli::ALL.map(Pauli::matrix)
}

/// Measurement projectors of the three mutually unbiased polarization bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProjectorLabel {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl ProjectorLabel {
    pub const ALL: [ProjectorLabel; 6] = [
        ProjectorLabel::H,
        ProjectorLabel::V,
        ProjectorLabel::D,
        ProjectorLabel::A,
        ProjectorLabel::R,
        ProjectorLabel::L,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProjectorLabel::H => "H",
            ProjectorLabel::V => "V",
            ProjectorLabel::D => "D",
            ProjectorLabel::A => "A",
            ProjectorLabel::R => "R",
            ProjectorLabel::L => "L",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.label() == s)
    }

    /// The orthogonal partner in the same basis.
    pub fn partner(self) -> Self {
        match self {
            ProjectorLabel::H => ProjectorLabel::V,
            ProjectorLabel::V => ProjectorLabel::H,
            ProjectorLabel::D => ProjectorLabel::A,
            ProjectorLabel::A => ProjectorLabel::D,
            ProjectorLabel::R => ProjectorLabel::L,
            ProjectorLabel::L => ProjectorLabel::R,
        }
    }

    pub fn ket(self) -> Ket {
        let s = FRAC_1_SQRT_2;
        let (h, v) = match self {
            ProjectorLabel::H => (ONE, ZERO),
            ProjectorLabel::V => (ZERO, ONE),
            ProjectorLabel::D => (c(s, 0.0), c(s, 0.0)),
            ProjectorLabel::A => (c(s, 0.0), c(-s, 0.0)),
            ProjectorLabel::R => (c(s, 0.0), c(0.0, -s)),
            ProjectorLabel::L => (c(s, 0.0), c(0.0, s)),
        };
        Ket { amp_h: h, amp_v: v }
    }
}

impl fmt::Display for ProjectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn projector(label: ProjectorLabel) -> DensityMatrix {
    density_from_ket(&label.ket())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use proptest::prelude::*;

    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn ket_from_angles_examples() {
        let h = ket_from_angles(0.0, 0.0).unwrap();
        assert_eq!(h.amp_h, ONE);
        assert_eq!(h.amp_v.norm(), 0.0);

        let d = ket_from_angles(FRAC_PI_4, 0.0).unwrap();
        assert!((d.amp_h - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((d.amp_v - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);

        let r = ket_from_angles(FRAC_PI_4, -FRAC_PI_2).unwrap();
        assert!((r.amp_h - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((r.amp_v - c(0.0, -FRAC_1_SQRT_2)).norm() < 1e-15);
    }

    #[test]
    fn ket_rejects_non_finite() {
        assert!(matches!(ket_from_angles(f64::NAN, 0.0), Err(Error::NonFinite("theta"))));
        assert!(matches!(ket_from_angles(0.0, f64::INFINITY), Err(Error::NonFinite("phi"))));
    }

    #[test]
    fn density_examples() {
        let h = density_from_ket(&Ket::H);
        assert!(close(h.matrix(), &Mat2::new(ONE, ZERO, ZERO, ZERO), 1e-15));

        let d = density_from_ket(&ProjectorLabel::D.ket());
        let half = c(0.5, 0.0);
        assert!(close(d.matrix(), &Mat2::new(half, half, half, half), 1e-15));

        // |R⟩ = (1, -i)/√2, so ρ_01 = (1)(-i)* / 2 = i/2.
        let r = density_from_ket(&ket_from_angles(FRAC_PI_4, -FRAC_PI_2).unwrap());
        let expected = Mat2::new(half, c(0.0, 0.5), c(0.0, -0.5), half);
        assert!(close(r.matrix(), &expected, 1e-15));
    }

    #[test]
    fn projector_examples() {
        let half = c(0.5, 0.0);
        assert!(close(projector(ProjectorLabel::H).matrix(), &Mat2::new(ONE, ZERO, ZERO, ZERO), 0.0));
        assert!(close(projector(ProjectorLabel::A).matrix(), &Mat2::new(half, -half, -half, half), 1e-15));
        assert!(close(projector(ProjectorLabel::L).matrix(), &Mat2::new(half, c(0.0, -0.5), c(0.0, 0.5), half), 1e-15));
    }

    #[test]
    fn projector_pairs_are_complete_and_orthogonal() {
        for label in ProjectorLabel::ALL {
            let sum = projector(label).matrix() + projector(label.partner()).matrix();
            assert!(close(&sum, &Mat2::identity(), 1e-12), "{label}");
            assert!(label.ket().inner(&label.partner().ket()).norm() < 1e-15);
            assert_eq!(label.partner().partner(), label);
        }
    }

    #[test]
    fn pauli_basis_is_orthogonal_hermitian_unitary() {
        let basis = pauli_basis();
        for (m, a) in basis.iter().enumerate() {
            assert!(close(a, &a.adjoint(), 0.0));
            assert!(close(&(a * a.adjoint()), &Mat2::identity(), 0.0));
            for (n, b) in basis.iter().enumerate() {
                let expected = if m == n { 2.0 } else { 0.0 };
                assert!(((a * b).trace() - C64::from(expected)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn state_fidelity_examples() {
        let h = projector(ProjectorLabel::H);
        let v = projector(ProjectorLabel::V);
        assert!((state_fidelity(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        assert!(state_fidelity(&h, &v).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed();
        assert!((state_fidelity(&h, &mixed).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn state_fidelity_rejects_non_psd() {
        let bad = DensityMatrix::from_matrix_unchecked(Mat2::new(c(1.2, 0.0), ZERO, ZERO, c(-0.2, 0.0)));
        let h = projector(ProjectorLabel::H);
        assert!(matches!(state_fidelity(&bad, &h), Err(Error::NotPsd { name: "rho", .. })));
        assert!(matches!(state_fidelity(&h, &bad), Err(Error::NotPsd { name: "sigma", .. })));
    }

    #[test]
    fn density_new_validates() {
        let non_herm = Mat2::new(ONE, c(0.1, 0.0), ZERO, ZERO);
        assert!(matches!(DensityMatrix::new(non_herm), Err(Error::NotHermitian { .. })));
        assert!(DensityMatrix::from_bloch(1.5, 0.0, 0.0).is_err());
        assert!(DensityMatrix::from_bloch(0.6, 0.0, 0.8).is_ok());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let rho = DensityMatrix::from_bloch(0.3, -0.4, 0.2).unwrap();
        let s = psd_sqrt2(rho.matrix());
        assert!(close(&(s * s), rho.matrix(), 1e-14));
        let pure = projector(ProjectorLabel::R);
        let s = psd_sqrt2(pure.matrix());
        assert!(close(&(s * s), pure.matrix(), 1e-14));
    }

    fn arb_state() -> impl Strategy<Value = DensityMatrix> {
        (0.0..1.0f64, 0.0..PI, 0.0..2.0 * PI).prop_map(|(r, theta, phi)| {
            DensityMatrix::from_bloch(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos())
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn pure_states_have_unit_trace_and_rank_one(theta in -10.0..10.0f64, phi in -10.0..10.0f64) {
            let k = ket_from_angles(theta, phi).unwrap();
            prop_assert!((k.norm_sqr() - 1.0).abs() < 1e-12);
            let rho = density_from_ket(&k);
            let [lo, hi] = rho.eigenvalues();
            prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
            prop_assert!(lo.abs() < 1e-10);
            prop_assert!((hi - 1.0).abs() < 1e-10);
        }

        #[test]
        fn fidelity_is_symmetric(a in arb_state(), b in arb_state()) {
            let ab = state_fidelity(&a, &b).unwrap();
            let ba = state_fidelity(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-10);
        }

        #[test]
        fn fidelity_ignores_global_phase(theta in 0.0..PI, phi in 0.0..6.3f64, g in 0.0..6.3f64, b in arb_state()) {
            let k = ket_from_angles(theta, phi).unwrap();
            let f1 = state_fidelity(&k.density(), &b).unwrap();
            let f2 = state_fidelity(&k.with_global_phase(g).density(), &b).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-10);
            // Pure-state reduction: F = ⟨ψ|σ|ψ⟩.
            prop_assert!((f1 - b.expectation(k.density().matrix())).abs() < 1e-10);
        }
    }
}
