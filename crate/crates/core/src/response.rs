//! Lagrangian gradient stage: unrelaxed Pauli densities, the CP-SA-VQE and
//! CP-CIS response equations, relaxed densities, and the classical chain
//! from Pauli densities to nuclear gradients.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aiem::{cis_contract, coupling_partials, dipoles, MonomerDensityMatrices, PairList, PauliVector, H, P, T};
use crate::cisprep::{jacobian_contract_unchecked, CisStates};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, norm, solve, sym_eigen};
use crate::mcvqe::{se_residuals, McVqeProblem, McVqeSolution};
use crate::model::{Geometry, MonomerProperties, MonomerPropertyGradients};
use crate::sim::{shift_gradient_by, shift_hessian_by, Statevector};

/// Which response contributions enter the relaxed density: `VQE(vqe, crs)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseToggles {
    pub vqe: bool,
    pub crs: bool,
}

impl ResponseToggles {
    pub const FULL: Self = Self { vqe: true, crs: true };
    pub const NONE: Self = Self { vqe: false, crs: false };
    pub const ALL: [Self; 4] = [
        Self { vqe: true, crs: true },
        Self { vqe: true, crs: false },
        Self { vqe: false, crs: true },
        Self { vqe: false, crs: false },
    ];

    /// Short form used on the command line, e.g. `yn`.
    pub fn code(&self) -> String {
        let c = |b: bool| if b { 'y' } else { 'n' };
        format!("{}{}", c(self.vqe), c(self.crs))
    }
}

impl fmt::Display for ResponseToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = |b: bool| if b { 'Y' } else { 'N' };
        write!(f, "VQE({},{})", c(self.vqe), c(self.crs))
    }
}

impl FromStr for ResponseToggles {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let flag = |c: char| match c {
            'y' | 'Y' => Ok(true),
            'n' | 'N' => Ok(false),
            _ => Err(Error::parse(
                "response",
                format!("expected one of yy, yn, ny, nn; got `{s}`"),
            )),
        };
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 2 {
            return Err(Error::parse(
                "response",
                format!("expected one of yy, yn, ny, nn; got `{s}`"),
            ));
        }
        Ok(Self {
            vqe: flag(chars[0])?,
            crs: flag(chars[1])?,
        })
    }
}

/// `<Ψ_Θ|P̂_k|Ψ_Θ>` from the entangled generating state.
pub fn unrelaxed_densities(problem: &McVqeProblem, sol: &McVqeSolution, state: usize) -> PauliVector {
    problem.lambdas(&sol.theta, &sol.gamma_column(state))
}

/// Subspace-eigenstate Lagrangian per state; its multipliers are `V` itself,
/// so the value must vanish. Fails if any residual exceeds 1e-10.
pub fn se_response(sol: &McVqeSolution) -> Result<Vec<f64>> {
    let r = se_residuals(&sol.subspace_h, &sol.v, &sol.energies);
    if let Some(bad) = r.iter().position(|&x| x > 1e-10) {
        return Err(Error::Consistency(format!(
            "subspace eigenstate Lagrangian for state {bad} is {:e}",
            r[bad]
        )));
    }
    Ok(r)
}

/// `G_g = ∂ε/∂θ_g` at the generating state of `state`.
pub fn cp_sa_vqe_rhs(problem: &McVqeProblem, sol: &McVqeSolution, state: usize) -> Vec<f64> {
    problem.epsilon_gradient(&sol.theta, &sol.gamma_column(state))
}

#[derive(Debug, Clone)]
pub struct VqeHessian {
    /// Symmetrized (and possibly shifted) Hessian of `Ē`.
    pub matrix: DMatrix<f64>,
    /// `max |H − Hᵀ|` before symmetrization.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Tikhonov shift added to the diagonal (0 or 1e-8).
    pub shift: f64,
}

pub const TIKHONOV: f64 = 1e-8;

pub fn cp_sa_vqe_lhs(problem: &McVqeProblem, theta: &[f64]) -> Result<VqeHessian> {
    let raw = problem.sa_hessian_raw(theta);
    let asymmetry = (&raw - raw.transpose()).amax();
    let mut matrix = (&raw + raw.transpose()) * 0.5;
    let min_eigenvalue = if matrix.nrows() == 0 {
        f64::INFINITY
    } else {
        sym_eigen(&matrix)?.values[0]
    };
    let shift = if min_eigenvalue < TIKHONOV {
        log::warn!("SA-VQE Hessian minimum eigenvalue {min_eigenvalue:e}; applying shift {TIKHONOV:e}");
        for k in 0..matrix.nrows() {
            matrix[(k, k)] += TIKHONOV;
        }
        TIKHONOV
    } else {
        0.0
    };
    Ok(VqeHessian {
        matrix,
        asymmetry,
        min_eigenvalue,
        shift,
    })
}

/// Solve `𝓗 θ̃ = −G`.
pub fn solve_cp_sa_vqe(h: &VqeHessian, g: &[f64]) -> Result<Vec<f64>> {
    if g.is_empty() {
        return Ok(Vec::new());
    }
    let rhs = -DVector::from_column_slice(g);
    let x = solve(&h.matrix, &rhs)?;
    let resid = (&h.matrix * &x - &rhs).norm();
    if !(resid <= 1e-9 * norm(g).max(1.0)) {
        let spectrum = sym_eigen(&h.matrix)
            .map(|e| e.values.as_slice().to_vec())
            .unwrap_or_default();
        return Err(Error::SingularSystem(format!(
            "CP-SA-VQE residual {resid:e}; Hessian spectrum {spectrum:?}"
        )));
    }
    Ok(x.as_slice().to_vec())
}

/// `γ^VQE = Σ_g θ̃_g ∂λ̄/∂θ_g`, with `λ̄` the state average over the CRS.
pub fn vqe_response_density(problem: &McVqeProblem, theta: &[f64], theta_tilde: &[f64]) -> PauliVector {
    let n = problem.num_monomers();
    let npairs = problem.pauli.pairs.len();
    let ns = problem.num_states() as f64;
    let f = |s: &Statevector| problem.pauli.densities_of(s.amplitudes()).to_vec();
    let jobs: Vec<(usize, usize)> = (0..problem.num_states())
        .flat_map(|xi| (0..theta_tilde.len()).map(move |g| (xi, g)))
        .filter(|&(_, g)| theta_tilde[g] != 0.0)
        .collect();
    let parts: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(xi, g)| {
            let params = problem.params(theta, &problem.cis.column(xi));
            let d = shift_gradient_by(problem.circuit(), &params, problem.vqe_param(g), &f);
            d.iter().map(|x| x * theta_tilde[g] / ns).collect()
        })
        .collect();
    let mut acc = vec![0.0; 1 + 2 * n + 4 * npairs];
    for p in parts {
        acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    // the constant term has no response
    acc[0] = 0.0;
    PauliVector::from_vec(n, npairs, &acc)
}

fn cis_angle_gradients(problem: &McVqeProblem, theta: &[f64], c: &[f64]) -> Vec<f64> {
    let params = problem.params(theta, c);
    let f = |s: &Statevector| vec![problem.observable().evaluate(s)];
    (0..problem.num_monomers())
        .into_par_iter()
        .map(|m| shift_gradient_by(problem.circuit(), &params, m, &f)[0])
        .collect()
}

/// CP-CIS right-hand side #1: `V_ΞΘ Σ_M ∂ε/∂θ_M ∂θ_M/∂Γ_I` at the generating state.
pub fn cp_cis_rhs1(problem: &McVqeProblem, sol: &McVqeSolution, state: usize) -> DMatrix<f64> {
    let gamma = sol.gamma_column(state);
    let d = cis_angle_gradients(problem, &sol.theta, &gamma);
    let j = DVector::from_vec(jacobian_contract_unchecked(&gamma, &d));
    let v_row = sol.v.column(state).transpose();
    &j * v_row
}

/// CP-CIS right-hand side #2: `(1/N_Θ) Σ_gM θ̃_g ∂²ε^Ξ/∂θ_g∂θ_M ∂θ_M/∂C_IΞ`.
pub fn cp_cis_rhs2(problem: &McVqeProblem, theta: &[f64], theta_tilde: &[f64]) -> DMatrix<f64> {
    let n = problem.num_monomers();
    let ns = problem.num_states();
    let mut out = DMatrix::zeros(n + 1, ns);
    if theta_tilde.iter().all(|&x| x == 0.0) {
        return out;
    }
    let f = |s: &Statevector| vec![problem.observable().evaluate(s)];
    for xi in 0..ns {
        let c = problem.cis.column(xi);
        let params = problem.params(theta, &c);
        let d: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|m| {
                theta_tilde
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t != 0.0)
                    .map(|(g, &t)| t * shift_hessian_by(problem.circuit(), &params, problem.vqe_param(g), m, &f)[0])
                    .sum::<f64>()
                    / ns as f64
            })
            .collect();
        let col = jacobian_contract_unchecked(&c, &d);
        out.set_column(xi, &DVector::from_vec(col));
    }
    out
}

/// CP-CIS Hessian blocks `H − E_Ξ (I + 2 C_Ξ C_Ξᵀ)`, one per selected state.
pub fn cp_cis_lhs(h_cis: &DMatrix<f64>, cis: &CisStates) -> Vec<DMatrix<f64>> {
    let dim = h_cis.nrows();
    (0..cis.num_states())
        .map(|xi| {
            let c = cis.coefficients.column(xi);
            let e = cis.energies[xi];
            h_cis - (DMatrix::identity(dim, dim) + (c * c.transpose()) * 2.0) * e
        })
        .collect()
}

/// Solve every CP-CIS block in the CIS eigenbasis: the block has eigenvalue
/// `E_Ξ'' − E_Ξ` on every other CIS vector and `−2E_Ξ` along `C_Ξ`. Nearly
/// degenerate CIS pairs are rejected. The `C_Ξ` component of the solution
/// drops out of the CRS density, so when `E_Ξ = 0` it is left at zero.
pub fn solve_cp_cis(cis: &CisStates, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = cis.all_vectors.nrows();
    let u = &cis.all_vectors;
    let mut out = DMatrix::zeros(dim, cis.num_states());
    for xi in 0..cis.num_states() {
        let e = cis.energies[xi];
        let gx = g.column(xi);
        let mut col = DVector::zeros(dim);
        for j in 0..dim {
            let uj = u.column(j);
            let proj = uj.dot(&gx);
            let lambda = if j == xi { -2.0 * e } else { cis.all_energies[j] - e };
            if j != xi && lambda.abs() < 1e-10 * e.abs().max(1.0) {
                return Err(Error::DegenerateStates(xi.min(j), xi.max(j)));
            }
            if j == xi && lambda.abs() < 1e-12 {
                continue;
            }
            col -= uj * (proj / lambda);
        }
        out.set_column(xi, &col);
    }
    Ok(out)
}

/// `D = Σ_Ξ Ξ̃_Ξ C_Ξᵀ − Σ_Ξ (Ξ̃_Ξ·C_Ξ) C_Ξ C_Ξᵀ`, symmetrized, contracted with the
/// CIS projections of the Pauli strings.
pub fn crs_response_density(xi_tilde: &DMatrix<f64>, cis: &CisStates, pairs: &PairList) -> PauliVector {
    let c = &cis.coefficients;
    let mut d = xi_tilde * c.transpose();
    for xi in 0..c.ncols() {
        let cx = c.column(xi);
        let s = xi_tilde.column(xi).dot(&cx);
        d -= (cx * cx.transpose()) * s;
    }
    let d = (&d + d.transpose()) * 0.5;
    let mut out = cis_contract(&d, pairs);
    out.e = 0.0;
    out
}

/// All density contributions for one MC-VQE state. The CRS part is split by
/// right-hand side so that any toggle combination can be assembled.
#[derive(Debug, Clone)]
pub struct StateDensities {
    pub state: usize,
    pub energy: f64,
    pub unrelaxed: PauliVector,
    pub vqe: PauliVector,
    /// CRS response driven by RHS #1 (the state energy).
    pub crs_energy: PauliVector,
    /// CRS response driven by RHS #2 (the SA-VQE constraint; needs θ̃).
    pub crs_coupled: PauliVector,
    pub theta_tilde: Vec<f64>,
    pub vqe_rhs: Vec<f64>,
    pub xi_tilde: DMatrix<f64>,
}

impl StateDensities {
    pub fn relaxed(&self, t: ResponseToggles) -> PauliVector {
        let mut d = self.unrelaxed.clone();
        if t.vqe {
            d = d.add(&self.vqe);
        }
        if t.crs {
            d = d.add(&self.crs_energy);
            if t.vqe {
                d = d.add(&self.crs_coupled);
            }
        }
        d
    }

    /// Total CRS contribution with the VQE multipliers active.
    pub fn crs(&self) -> PauliVector {
        self.crs_energy.add(&self.crs_coupled)
    }
}

pub fn state_densities(
    problem: &McVqeProblem,
    sol: &McVqeSolution,
    state: usize,
    hessian: &VqeHessian,
) -> Result<StateDensities> {
    if state >= sol.energies.len() {
        return Err(Error::Validation(format!(
            "state {state} requested, {} computed",
            sol.energies.len()
        )));
    }
    let unrelaxed = unrelaxed_densities(problem, sol, state);
    let vqe_rhs = cp_sa_vqe_rhs(problem, sol, state);
    let theta_tilde = solve_cp_sa_vqe(hessian, &vqe_rhs)?;
    let vqe = vqe_response_density(problem, &sol.theta, &theta_tilde);

    let pairs = &problem.pauli.pairs;
    let g1 = cp_cis_rhs1(problem, sol, state);
    let g2 = cp_cis_rhs2(problem, &sol.theta, &theta_tilde);
    let x1 = solve_cp_cis(&problem.cis, &g1)?;
    let x2 = solve_cp_cis(&problem.cis, &g2)?;
    Ok(StateDensities {
        state,
        energy: sol.energies[state],
        unrelaxed,
        vqe,
        crs_energy: crs_response_density(&x1, &problem.cis, pairs),
        crs_coupled: crs_response_density(&x2, &problem.cis, pairs),
        theta_tilde,
        vqe_rhs,
        xi_tilde: x1 + x2,
    })
}

/// Monomer-property densities: one-body `γ`, dipole densities `η`, centroid
/// densities `ξ`, plus the pair densities they were contracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomerDensities {
    pub gamma_h: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub gamma_t: Vec<f64>,
    pub eta_h: Vec<Vector3<f64>>,
    pub eta_t: Vec<Vector3<f64>>,
    pub eta_p: Vec<Vector3<f64>>,
    pub xi: Vec<Vector3<f64>>,
    pub pair: Vec<[[f64; 3]; 3]>,
}

impl MonomerDensities {
    /// Per monomer `[γ_H, γ_P, η_H(3), η_P(3), η_T(3), ξ(3)]`, matching
    /// [`property_vector`].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in 0..self.gamma_h.len() {
            out.push(self.gamma_h[a]);
            out.push(self.gamma_p[a]);
            for v in [&self.eta_h[a], &self.eta_p[a], &self.eta_t[a], &self.xi[a]] {
                out.extend(v.iter());
            }
        }
        out
    }
}

/// Flattened monomer properties in the layout of [`MonomerDensities::to_vec`].
pub fn property_vector(props: &MonomerProperties) -> Vec<f64> {
    let mut out = Vec::new();
    for m in &props.monomers {
        out.push(m.eps_h);
        out.push(m.eps_p);
        for v in [&m.mu_h, &m.mu_p, &m.mu_t, &m.r0] {
            out.extend(v.iter());
        }
    }
    out
}

pub fn properties_from_vector(x: &[f64]) -> MonomerProperties {
    let v3 = |s: &[f64]| Vector3::new(s[0], s[1], s[2]);
    MonomerProperties {
        monomers: x
            .chunks(14)
            .map(|c| crate::model::Monomer {
                eps_h: c[0],
                eps_p: c[1],
                mu_h: v3(&c[2..5]),
                mu_p: v3(&c[5..8]),
                mu_t: v3(&c[8..11]),
                r0: v3(&c[11..14]),
            })
            .collect(),
    }
}

/// Contract pair densities through the dipole-coupling partials (with the
/// ½ over ordered pairs) to dipole and centroid densities.
pub fn monomer_property_densities(
    dm: &MonomerDensityMatrices,
    props: &MonomerProperties,
    pairs: &PairList,
) -> Result<MonomerDensities> {
    let n = props.len();
    let mut eta = vec![[Vector3::zeros(); 3]; n];
    let mut xi = vec![Vector3::zeros(); n];
    for (k, &(a, b)) in pairs.pairs().iter().enumerate() {
        let (da, db) = (dipoles(props, a), dipoles(props, b));
        let (ra, rb) = (props.monomers[a].r0, props.monomers[b].r0);
        for x in 0..3 {
            for y in 0..3 {
                let w = 0.5 * dm.pair[k][x][y];
                if w == 0.0 {
                    continue;
                }
                let p = coupling_partials(&da[x], &db[y], &ra, &rb)?;
                eta[a][x] += p.mu_a * w;
                eta[b][y] += p.mu_b * w;
                xi[a] += p.r0_a * w;
                xi[b] += p.r0_b * w;
            }
        }
    }
    Ok(MonomerDensities {
        gamma_h: dm.gamma_h.clone(),
        gamma_p: dm.gamma_p.clone(),
        gamma_t: dm.gamma_t.clone(),
        eta_h: eta.iter().map(|e| e[H]).collect(),
        eta_t: eta.iter().map(|e| e[T]).collect(),
        eta_p: eta.iter().map(|e| e[P]).collect(),
        xi,
        pair: dm.pair.clone(),
    })
}

/// `dE/dr_ζ = Σ_A ε_H' γ_H + ε_P' γ_P + μ'ᵀη (H, P, T) + r0'ᵀξ`.
pub fn nuclear_gradient(
    md: &MonomerDensities,
    grads: &MonomerPropertyGradients,
    geometry: &Geometry,
) -> Result<Vec<Vector3<f64>>> {
    if grads.monomers.len() != md.gamma_h.len() || geometry.num_monomers() != md.gamma_h.len() {
        return Err(Error::Validation(format!(
            "gradient data for {} monomers, densities for {}, geometry has {}",
            grads.monomers.len(),
            md.gamma_h.len(),
            geometry.num_monomers()
        )));
    }
    let mut out = vec![Vector3::zeros(); geometry.num_atoms()];
    for (a, mg) in grads.monomers.iter().enumerate() {
        for (&atom, b) in mg.atoms.iter().zip(&mg.blocks) {
            if atom >= out.len() || geometry.atoms()[atom].monomer != a {
                return Err(Error::Validation(format!("atom {atom} is not part of monomer {a}")));
            }
            out[atom] += b.eps_h * md.gamma_h[a]
                + b.eps_p * md.gamma_p[a]
                + b.mu_h.transpose() * md.eta_h[a]
                + b.mu_p.transpose() * md.eta_p[a]
                + b.mu_t.transpose() * md.eta_t[a]
                + b.r0.transpose() * md.xi[a];
        }
    }
    Ok(out)
}

/// Largest magnitude over the one- and two-body entries of a density.
pub fn density_magnitude(d: &PauliVector) -> f64 {
    max_abs(&d.to_vec()[1..])
}
