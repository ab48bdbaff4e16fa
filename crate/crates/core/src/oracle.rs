//! Reference engines: exact diagonalization in the full `2^N` space, the CIS
//! oracle, a monomer-basis Hamiltonian assembled without the Pauli algebra,
//! and the symmetric finite-difference stencil used by every validation layer.

use nalgebra::DMatrix;

use crate::aiem::{cis_contract, MonomerElements, PairList, PauliHamiltonian, PauliVector};
use crate::cisprep::CisStates;
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, SymmetricEigen};

pub const MAX_FCI_QUBITS: usize = 14;

/// Eigenpairs of the dense Hamiltonian, ascending.
pub fn fci_solve(pauli: &PauliHamiltonian) -> Result<SymmetricEigen> {
    let n = pauli.num_monomers();
    if n > MAX_FCI_QUBITS {
        return Err(Error::Validation(format!(
            "dense diagonalization limited to {MAX_FCI_QUBITS} monomers, got {n}"
        )));
    }
    sym_eigen(&pauli.dense())
}

/// Hellmann-Feynman Pauli densities `<Θ|P̂_k|Θ>` of a non-degenerate eigenstate.
pub fn fci_densities(spectrum: &SymmetricEigen, pauli: &PauliHamiltonian, state: usize) -> Result<PauliVector> {
    check_isolated(spectrum.values.as_slice(), state)?;
    let psi = spectrum.vectors.column(state);
    Ok(pauli.densities_of(psi.as_slice()))
}

fn check_isolated(values: &[f64], state: usize) -> Result<()> {
    if state >= values.len() {
        return Err(Error::Validation(format!(
            "state {state} out of range ({} states)",
            values.len()
        )));
    }
    for other in [state.wrapping_sub(1), state + 1] {
        if let Some(&e) = values.get(other) {
            if (e - values[state]).abs() < 1e-10 {
                return Err(Error::DegenerateStates(state.min(other), state.max(other)));
            }
        }
    }
    Ok(())
}

/// CIS-oracle densities `C_Ξᵀ <I|P̂_k|I'> C_Ξ`.
pub fn cis_densities(cis: &CisStates, pairs: &PairList, state: usize) -> Result<PauliVector> {
    check_isolated(cis.all_energies.as_slice(), state)?;
    let c = cis.all_vectors.column(state);
    Ok(cis_contract(&(c * c.transpose()), pairs))
}

/// The AIEM Hamiltonian assembled directly from monomer-basis matrix
/// elements, `Σ_A Σ_pq (p|h|q) |p><q| + ½ Σ_<AA'> Σ_pqrs (pq|v|rs) |p><q| ⊗ |r><s|`.
pub fn monomer_basis_hamiltonian(elements: &MonomerElements, pairs: &PairList) -> DMatrix<f64> {
    let n = pairs.num_monomers();
    let dim = 1 << n;
    let bit = |i: usize, a: usize| (i >> a) & 1;
    let set = |i: usize, a: usize, b: usize| (i & !(1 << a)) | (b << a);
    // |00) -> H, |11) -> P, |01) and |10) -> T
    let channel = |p: usize, q: usize| match (p, q) {
        (0, 0) => crate::aiem::H,
        (1, 1) => crate::aiem::P,
        _ => crate::aiem::T,
    };
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for a in 0..n {
            let q = bit(i, a);
            h[(i, i)] += if q == 0 { elements.eps_h[a] } else { elements.eps_p[a] };
            h[(i ^ (1 << a), i)] += elements.eps_t[a];
        }
        for (k, &(a, b)) in pairs.pairs().iter().enumerate() {
            let (q, s) = (bit(i, a), bit(i, b));
            for p in 0..2 {
                for r in 0..2 {
                    let j = set(set(i, a, p), b, r);
                    h[(j, i)] += 0.5 * elements.v[k][channel(p, q)][channel(r, s)];
                }
            }
        }
    }
    h
}

/// `(f(x + h d) − f(x − h d)) / 2h`.
pub fn central_fd<F>(f: F, x: &[f64], d: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::Validation(format!(
            "finite-difference step {h} must be positive"
        )));
    }
    let shifted = |s: f64| -> Vec<f64> { x.iter().zip(d).map(|(xi, di)| xi + s * h * di).collect() };
    Ok((f(&shifted(1.0))? - f(&shifted(-1.0))?) / (2.0 * h))
}

/// Central differences of a scalar function along every coordinate axis.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    (0..x.len())
        .into_par_iter()
        .map(|k| {
            let mut e = vec![0.0; x.len()];
            e[k] = 1.0;
            central_fd(&f, x, &e, h)
        })
        .collect()
}
