//! CIS contracted reference states and their state-preparation circuit:
//! coefficient → angle map, its Jacobian, and the linear-depth Ry / Fy circuit.

use nalgebra::{DMatrix, DVector};

use crate::aiem::CisHamiltonian;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::sim::{shift_gradient_by, Circuit, Gate, Observable, Statevector};

/// Tail norms below this are treated as exactly zero.
pub const TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CisStates {
    /// Selected columns `C_IΞ`, `(N+1) × N_Θ`.
    pub coefficients: DMatrix<f64>,
    pub energies: DVector<f64>,
    /// Full eigendecomposition (all `N+1` states), used by the response solver.
    pub all_vectors: DMatrix<f64>,
    pub all_energies: DVector<f64>,
}

impl CisStates {
    pub fn num_states(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn column(&self, xi: usize) -> Vec<f64> {
        self.coefficients.column(xi).iter().copied().collect()
    }
}

/// Diagonalize the CIS Hamiltonian and keep the `ntheta` lowest states.
pub fn solve_cis(cis: &CisHamiltonian, ntheta: usize) -> Result<CisStates> {
    let dim = cis.matrix.nrows();
    if ntheta == 0 || ntheta > dim {
        return Err(Error::Validation(format!(
            "number of states {ntheta} must be in 1..={dim}"
        )));
    }
    let eig = sym_eigen(&cis.matrix)?;
    Ok(CisStates {
        coefficients: eig.vectors.columns(0, ntheta).clone_owned(),
        energies: eig.values.rows(0, ntheta).clone_owned(),
        all_vectors: eig.vectors,
        all_energies: eig.values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CisAngles {
    pub theta: Vec<f64>,
    /// Phase factor `sign(C_N)` carried by the last angle.
    pub last_sign: f64,
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `θ_M = P_M arccos(C_M / ρ_M)` with `ρ_M² = Σ_{L≥M} C_L²` and `P_M = sign(C_N)`
/// for the last angle only. No normalization check, so it can be evaluated on
/// perturbed (unnormalized) coefficient vectors.
pub fn angles_unchecked(c: &[f64]) -> CisAngles {
    let n = c.len() - 1;
    let last_sign = sign(c[n]);
    let mut theta = vec![0.0; n];
    let mut tail = 0.0;
    let mut rho = vec![0.0; n + 1];
    for m in (0..=n).rev() {
        tail += c[m] * c[m];
        rho[m] = tail.sqrt();
    }
    for m in 0..n {
        if rho[m] < TAIL_TOL {
            continue;
        }
        let p = if m == n - 1 { last_sign } else { 1.0 };
        theta[m] = p * (c[m] / rho[m]).clamp(-1.0, 1.0).acos();
    }
    CisAngles { theta, last_sign }
}

fn check_unit(c: &[f64]) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::Structure(format!(
            "CIS vector needs at least 2 entries, got {}",
            c.len()
        )));
    }
    let norm: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 || !norm.is_finite() {
        return Err(Error::Validation(format!("CIS vector has norm {norm}, expected 1")));
    }
    Ok(())
}

pub fn angles_from_coefficients(c: &[f64]) -> Result<CisAngles> {
    check_unit(c)?;
    Ok(angles_unchecked(c))
}

/// `Σ_M d_M ∂θ_M/∂C_I` (raw partials, no renormalization). Written in a form
/// that stays accurate when a tail is nearly exhausted; rows with a vanishing
/// tail are zero, matching the `θ_M := 0` convention.
pub fn jacobian_contract_unchecked(c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    assert_eq!(d.len(), n, "direction must have one entry per angle");
    let mut out = vec![0.0; n + 1];
    let mut rho2 = vec![0.0; n + 2];
    for m in (0..=n).rev() {
        rho2[m] = rho2[m + 1] + c[m] * c[m];
    }
    for m in 0..n {
        if d[m] == 0.0 || rho2[m].sqrt() < TAIL_TOL {
            continue;
        }
        if m == n - 1 {
            // θ = atan2(C_N, C_{N-1})
            out[n - 1] -= d[m] * c[n] / rho2[m];
            out[n] += d[m] * c[n - 1] / rho2[m];
            continue;
        }
        let sigma = rho2[m + 1].sqrt();
        out[m] -= d[m] * sigma / rho2[m];
        if sigma > TAIL_TOL {
            for i in m + 1..=n {
                out[i] += d[m] * c[m] * c[i] / (sigma * rho2[m]);
            }
        }
    }
    out
}

pub fn jacobian_contract(c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    check_unit(c)?;
    if d.len() + 1 != c.len() || d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!(
            "direction of length {} does not match {} coefficients",
            d.len(),
            c.len()
        )));
    }
    Ok(jacobian_contract_unchecked(c, d))
}

/// `Ry(θ_0)` on qubit 0 followed by `Fy(θ_M)` on qubits `(M−1, M)`. Parameter
/// ids `0..N` are the CIS angles, so further gates can be appended with new
/// parameters.
pub fn build_cis_circuit(angles: &CisAngles) -> Circuit {
    let n = angles.theta.len();
    let mut c = Circuit::new(n.max(1));
    let p0 = c.add_param(angles.theta[0]);
    c.push(Gate::Ry { qubit: 0, param: p0 }).expect("valid gate");
    for m in 1..n {
        let p = c.add_param(angles.theta[m]);
        c.push(Gate::Fy {
            upper: m - 1,
            lower: m,
            param: p,
        })
        .expect("valid gate");
    }
    c
}

/// Amplitudes of a prepared state on the CIS configurations `|0>, |A>`.
pub fn cis_amplitudes(state: &Statevector) -> Vec<f64> {
    let a = state.amplitudes();
    let n = state.num_qubits();
    std::iter::once(a[0]).chain((0..n).map(|q| a[1 << q])).collect()
}

/// Exact `∂O/∂θ_M` for CIS angle `M` of a circuit built by
/// [`build_cis_circuit`] (optionally extended by an entangler). The Fy angles
/// pick up the `∓½` chain factors through their two rotation slots.
pub fn cis_angle_gradient(circuit: &Circuit, observable: &Observable, m: usize) -> Result<f64> {
    if m >= circuit.num_qubits() || m >= circuit.num_params() {
        return Err(Error::Structure(format!("no CIS angle {m}")));
    }
    let f = |s: &Statevector| vec![observable.evaluate(s)];
    Ok(shift_gradient_by(circuit, circuit.params(), m, &f)[0])
}
