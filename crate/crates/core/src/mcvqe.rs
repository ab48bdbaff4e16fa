//! Multistate contracted VQE: the entangler ansatz, state-averaged
//! optimization, the entangled subspace Hamiltonian and its eigenstates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aiem::{build_cis, CisHamiltonian, PauliHamiltonian, PauliVector};
use crate::cisprep::{angles_unchecked, build_cis_circuit, solve_cis, CisAngles, CisStates};
use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, sym_eigen};
use crate::sim::{shift_gradient_by, shift_hessian_by, Circuit, Gate, Observable, Statevector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntanglerKind {
    /// No gates: MC-VQE reduces to CIS.
    Identity,
    /// One Ry per wire.
    Truncated,
    /// Layers of SO(4) blocks on nearest-neighbour pairs, even pairs then odd
    /// pairs, with adjacent Ry gates merged.
    So4Chain { layers: usize },
}

/// Entangler gates with parameter ids local to the ansatz (`0..num_params`).
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglerAnsatz {
    pub kind: EntanglerKind,
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    pub num_params: usize,
}

impl EntanglerAnsatz {
    pub fn new(kind: EntanglerKind, num_qubits: usize) -> Self {
        let mut gates = Vec::new();
        let mut np = 0;
        // whether each wire's most recent gate is an Ry
        let mut ends_in_ry = vec![false; num_qubits];
        let mut ry = |q: usize, gates: &mut Vec<Gate>, ends: &mut Vec<bool>, merge: bool| {
            if merge && ends[q] {
                return;
            }
            gates.push(Gate::Ry { qubit: q, param: np });
            np += 1;
            ends[q] = true;
        };
        match kind {
            EntanglerKind::Identity => {}
            EntanglerKind::Truncated => {
                for q in 0..num_qubits {
                    ry(q, &mut gates, &mut ends_in_ry, false);
                }
            }
            EntanglerKind::So4Chain { layers } => {
                for _ in 0..layers {
                    for start in [0, 1] {
                        for a in (start..num_qubits.saturating_sub(1)).step_by(2) {
                            let b = a + 1;
                            ry(a, &mut gates, &mut ends_in_ry, true);
                            ry(b, &mut gates, &mut ends_in_ry, true);
                            for _ in 0..2 {
                                gates.push(Gate::Cnot { control: a, target: b });
                                ends_in_ry[a] = false;
                                ends_in_ry[b] = false;
                                ry(a, &mut gates, &mut ends_in_ry, false);
                                ry(b, &mut gates, &mut ends_in_ry, false);
                            }
                        }
                    }
                }
            }
        }
        Self {
            kind,
            num_qubits,
            gates,
            num_params: np,
        }
    }

    /// Append to `circuit`, registering fresh parameters initialised to zero.
    /// Returns the id of the first entangler parameter.
    pub fn append_to(&self, circuit: &mut Circuit) -> Result<usize> {
        let offset = circuit.num_params();
        for _ in 0..self.num_params {
            circuit.add_param(0.0);
        }
        for gate in &self.gates {
            let g = match *gate {
                Gate::Ry { qubit, param } => Gate::Ry {
                    qubit,
                    param: param + offset,
                },
                other => other,
            };
            circuit.push(g)?;
        }
        Ok(offset)
    }
}

/// Everything needed to evaluate entangled CRS energies for one Hamiltonian.
#[derive(Debug, Clone)]
pub struct McVqeProblem {
    pub pauli: PauliHamiltonian,
    pub cis_h: CisHamiltonian,
    pub cis: CisStates,
    pub ansatz: EntanglerAnsatz,
    circuit: Circuit,
    observable: Observable,
}

impl McVqeProblem {
    pub fn new(pauli: PauliHamiltonian, ntheta: usize, kind: EntanglerKind) -> Result<Self> {
        let n = pauli.num_monomers();
        let cis_h = build_cis(&pauli);
        let cis = solve_cis(&cis_h, ntheta)?;
        let ansatz = EntanglerAnsatz::new(kind, n);
        let mut circuit = build_cis_circuit(&CisAngles {
            theta: vec![0.0; n],
            last_sign: 1.0,
        });
        ansatz.append_to(&mut circuit)?;
        let observable = pauli.observable();
        Ok(Self {
            pauli,
            cis_h,
            cis,
            ansatz,
            circuit,
            observable,
        })
    }

    pub fn num_monomers(&self) -> usize {
        self.pauli.num_monomers()
    }

    pub fn num_states(&self) -> usize {
        self.cis.num_states()
    }

    pub fn num_vqe_params(&self) -> usize {
        self.ansatz.num_params
    }

    /// CIS + entangler circuit; parameters are `[θ_M.., θ_g..]`.
    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn observable(&self) -> &Observable {
        &self.observable
    }

    /// Full circuit parameter vector for CIS coefficients `c` and entangler angles.
    pub fn params(&self, theta_g: &[f64], c: &[f64]) -> Vec<f64> {
        let mut p = angles_unchecked(c).theta;
        p.extend_from_slice(theta_g);
        p
    }

    pub fn state(&self, theta_g: &[f64], c: &[f64]) -> Statevector {
        self.circuit.run_with(&self.params(theta_g, c), &[])
    }

    /// `ε[θ_g, θ_M[c]]`.
    pub fn epsilon(&self, theta_g: &[f64], c: &[f64]) -> f64 {
        self.observable.evaluate(&self.state(theta_g, c))
    }

    /// Pauli expectation values `λ/Λ[θ_g, θ_M[c]]` (constant entry 1).
    pub fn lambdas(&self, theta_g: &[f64], c: &[f64]) -> PauliVector {
        self.pauli.densities_of(self.state(theta_g, c).amplitudes())
    }

    fn energy_fn(&self) -> impl Fn(&Statevector) -> Vec<f64> + Sync + '_ {
        move |s: &Statevector| vec![self.observable.evaluate(s)]
    }

    /// Parameter id of entangler angle `g` in [`Self::circuit`].
    pub fn vqe_param(&self, g: usize) -> usize {
        self.num_monomers() + g
    }

    /// `∂ε[θ_g, θ_M[c]]/∂θ_g` for every entangler angle.
    pub fn epsilon_gradient(&self, theta_g: &[f64], c: &[f64]) -> Vec<f64> {
        let params = self.params(theta_g, c);
        let f = self.energy_fn();
        (0..self.num_vqe_params())
            .into_par_iter()
            .map(|g| shift_gradient_by(&self.circuit, &params, self.vqe_param(g), &f)[0])
            .collect()
    }

    /// State-averaged energy and its exact gradient.
    pub fn sa_energy_and_gradient(&self, theta_g: &[f64]) -> (f64, Vec<f64>) {
        let ns = self.num_states() as f64;
        let per_state: Vec<(f64, Vec<f64>)> = (0..self.num_states())
            .into_par_iter()
            .map(|xi| {
                let c = self.cis.column(xi);
                (self.epsilon(theta_g, &c), self.epsilon_gradient(theta_g, &c))
            })
            .collect();
        let mut e = 0.0;
        let mut grad = vec![0.0; self.num_vqe_params()];
        for (ex, gx) in per_state {
            e += ex / ns;
            grad.iter_mut().zip(gx).for_each(|(a, b)| *a += b / ns);
        }
        (e, grad)
    }

    pub fn sa_energy(&self, theta_g: &[f64]) -> f64 {
        let ns = self.num_states() as f64;
        (0..self.num_states())
            .map(|xi| self.epsilon(theta_g, &self.cis.column(xi)))
            .sum::<f64>()
            / ns
    }

    /// Exact Hessian of `Ē` over the entangler angles, unsymmetrized.
    pub fn sa_hessian_raw(&self, theta_g: &[f64]) -> DMatrix<f64> {
        let ng = self.num_vqe_params();
        let ns = self.num_states() as f64;
        let f = self.energy_fn();
        let cols: Vec<Vec<f64>> = (0..self.num_states()).map(|xi| self.cis.column(xi)).collect();
        let entries: Vec<(usize, usize, f64)> = (0..ng * ng)
            .into_par_iter()
            .map(|k| {
                let (g, h) = (k / ng, k % ng);
                let v: f64 = cols
                    .iter()
                    .map(|c| {
                        let params = self.params(theta_g, c);
                        shift_hessian_by(&self.circuit, &params, self.vqe_param(g), self.vqe_param(h), &f)[0]
                    })
                    .sum();
                (g, h, v / ns)
            })
            .collect();
        let mut m = DMatrix::zeros(ng, ng);
        for (g, h, v) in entries {
            m[(g, h)] = v;
        }
        m
    }

    pub fn sa_hessian(&self, theta_g: &[f64]) -> DMatrix<f64> {
        let m = self.sa_hessian_raw(theta_g);
        (&m + m.transpose()) * 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub gtol: f64,
    pub max_iter: usize,
    /// Newton steps with the exact Hessian after the quasi-Newton phase, to
    /// push stationarity to roundoff (finite-difference validation needs it).
    pub polish_steps: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-10,
            max_iter: 2000,
            polish_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerReport {
    pub theta: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// BFGS on `Ē` with backtracking, from `start`, followed by exact-Hessian
/// Newton polishing.
pub fn optimize_sa_vqe(problem: &McVqeProblem, start: &[f64], opts: &OptimizerOptions) -> Result<OptimizerReport> {
    let n = problem.num_vqe_params();
    if start.len() != n || start.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!(
            "initial entangler parameters must be {n} finite values"
        )));
    }
    let mut x = start.to_vec();
    let (mut f, mut g) = problem.sa_energy_and_gradient(&x);
    let mut iterations = 0;
    let mut hinv = DMatrix::<f64>::identity(n, n);

    while max_abs(&g) > opts.gtol && iterations < opts.max_iter {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d = -(&hinv * &gv);
        let mut slope = d.dot(&gv);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            d = -gv.clone();
            slope = d.dot(&gv);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
            let fe = problem.sa_energy(&xn);
            let flat = (fe - f).abs() <= 1e-15 * f.abs().max(1.0);
            if fe <= f + 1e-4 * alpha * slope || flat {
                let (fe, gn) = problem.sa_energy_and_gradient(&xn);
                if !flat || max_abs(&gn) < max_abs(&g) {
                    accepted = Some((xn, fe, gn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() && sy > 0.0 {
            if iterations == 1 {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - (&s * y.transpose()) * rho;
            let right = &i - (&y * s.transpose()) * rho;
            hinv = &left * &hinv * &right + (&s * s.transpose()) * rho;
        }
        x = xn;
        f = fn_;
        g = gn;
    }

    for _ in 0..opts.polish_steps {
        if max_abs(&g) < 1e-14 || n == 0 {
            break;
        }
        let Some(step) = newton_step(&problem.sa_hessian(&x), &g) else {
            break;
        };
        let xn: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let (fe, gn) = problem.sa_energy_and_gradient(&xn);
        if max_abs(&gn) >= max_abs(&g) || fe > f + 1e-12 {
            break;
        }
        iterations += 1;
        x = xn;
        f = fe;
        g = gn;
    }

    let grad_norm = max_abs(&g);
    if grad_norm > opts.gtol {
        return Err(Error::Convergence {
            iterations,
            grad_norm,
            best: x,
        });
    }
    Ok(OptimizerReport {
        theta: x,
        energy: f,
        grad_norm,
        iterations,
    })
}

/// `−H⁺ g` using only Hessian eigendirections with curvature above a floor.
fn newton_step(h: &DMatrix<f64>, g: &[f64]) -> Option<Vec<f64>> {
    let eig = sym_eigen(h).ok()?;
    let scale = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut step = vec![0.0; g.len()];
    for k in 0..g.len() {
        let lam = eig.values[k];
        if lam <= 1e-8 * scale.max(1e-12) {
            continue;
        }
        let u = eig.vectors.column(k);
        let coef = -u.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() / lam;
        step.iter_mut().zip(u.iter()).for_each(|(s, ui)| *s += coef * ui);
    }
    Some(step)
}

/// `H_ΞΞ'` in the entangled CRS basis; off-diagonal elements come from the
/// interfering states `(C_Ξ ± C_Ξ')/√2`.
pub fn subspace_hamiltonian(problem: &McVqeProblem, theta_g: &[f64]) -> DMatrix<f64> {
    let ns = problem.num_states();
    let cols: Vec<Vec<f64>> = (0..ns).map(|xi| problem.cis.column(xi)).collect();
    let jobs: Vec<(usize, usize)> = (0..ns).flat_map(|a| (0..=a).map(move |b| (a, b))).collect();
    let vals: Vec<f64> = jobs
        .par_iter()
        .map(|&(a, b)| {
            if a == b {
                return problem.epsilon(theta_g, &cols[a]);
            }
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let plus: Vec<f64> = cols[a].iter().zip(&cols[b]).map(|(x, y)| r * (x + y)).collect();
            let minus: Vec<f64> = cols[a].iter().zip(&cols[b]).map(|(x, y)| r * (x - y)).collect();
            0.5 * (problem.epsilon(theta_g, &plus) - problem.epsilon(theta_g, &minus))
        })
        .collect();
    let mut h = DMatrix::zeros(ns, ns);
    for (&(a, b), v) in jobs.iter().zip(vals) {
        h[(a, b)] = v;
        h[(b, a)] = v;
    }
    h
}

/// Ascending eigenpairs with the largest-component-positive sign rule.
pub fn diagonalize_subspace(h: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = sym_eigen(h)?;
    Ok((eig.vectors, eig.values))
}

/// `Γ = C V`, checked against the subspace energies: the entangled generating
/// state must reproduce `E_Θ` to 1e-9.
pub fn generating_states(
    problem: &McVqeProblem,
    theta_g: &[f64],
    v: &DMatrix<f64>,
    energies: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let gamma = &problem.cis.coefficients * v;
    for t in 0..gamma.ncols() {
        let col: Vec<f64> = gamma.column(t).iter().copied().collect();
        let e = problem.epsilon(theta_g, &col);
        if (e - energies[t]).abs() > 1e-9 {
            return Err(Error::Consistency(format!(
                "generating state {t} gives energy {e}, subspace eigenvalue is {}",
                energies[t]
            )));
        }
    }
    Ok(gamma)
}

#[derive(Debug, Clone)]
pub struct McVqeSolution {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub subspace_h: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub energies: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

impl McVqeSolution {
    pub fn gamma_column(&self, t: usize) -> Vec<f64> {
        self.gamma.column(t).iter().copied().collect()
    }
}

/// Optimize, build and diagonalize the subspace Hamiltonian, form generating states.
pub fn solve_mcvqe(problem: &McVqeProblem, start: Option<&[f64]>, opts: &OptimizerOptions) -> Result<McVqeSolution> {
    let zeros = vec![0.0; problem.num_vqe_params()];
    let report = optimize_sa_vqe(problem, start.unwrap_or(&zeros), opts)?;
    let subspace_h = subspace_hamiltonian(problem, &report.theta);
    let (v, energies) = diagonalize_subspace(&subspace_h)?;
    let gamma = generating_states(problem, &report.theta, &v, &energies)?;
    Ok(McVqeSolution {
        theta: report.theta,
        iterations: report.iterations,
        grad_norm: report.grad_norm,
        subspace_h,
        v,
        energies,
        gamma,
    })
}

/// `|Σ_Ξ V_ΞΘ (H V − V E)_ΞΘ|` for every state: the subspace-eigenstate
/// Lagrangian, which vanishes identically at the analytic multipliers `V`.
pub fn se_residuals(h: &DMatrix<f64>, v: &DMatrix<f64>, e: &DVector<f64>) -> Vec<f64> {
    let r = h * v - v * DMatrix::from_diagonal(e);
    (0..v.ncols())
        .map(|t| dot(v.column(t).as_slice(), r.column(t).as_slice()).abs())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn so4_chain_parameter_counts() {
        assert_eq!(
            EntanglerAnsatz::new(EntanglerKind::So4Chain { layers: 1 }, 2).num_params,
            6
        );
        assert_eq!(
            EntanglerAnsatz::new(EntanglerKind::So4Chain { layers: 1 }, 4).num_params,
            16
        );
        assert_eq!(
            EntanglerAnsatz::new(EntanglerKind::So4Chain { layers: 2 }, 2).num_params,
            10
        );
        assert_eq!(EntanglerAnsatz::new(EntanglerKind::Truncated, 3).num_params, 3);
        assert_eq!(EntanglerAnsatz::new(EntanglerKind::Identity, 3).num_params, 0);
    }

    #[test]
    fn merged_chain_has_no_adjacent_ry() {
        let a = EntanglerAnsatz::new(EntanglerKind::So4Chain { layers: 2 }, 5);
        let mut last_ry = [false; 5];
        for g in &a.gates {
            match *g {
                Gate::Ry { qubit, .. } => {
                    assert!(!last_ry[qubit], "adjacent Ry on wire {qubit}");
                    last_ry[qubit] = true;
                }
                Gate::Cnot { control, target } => {
                    last_ry[control] = false;
                    last_ry[target] = false;
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn se_residual_vanishes_for_diagonal() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.5]));
        let (v, e) = diagonalize_subspace(&h).unwrap();
        assert_eq!(se_residuals(&h, &v, &e), vec![0.0, 0.0]);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (v, e) = diagonalize_subspace(&m).unwrap();
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
        assert!((v[(0, 0)] - v[(0, 1)]).abs() < 1e-12 && (v[(1, 0)] + v[(1, 1)]).abs() < 1e-12);
    }
}
