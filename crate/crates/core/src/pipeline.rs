//! End-to-end plumbing: a system (geometry plus a source of monomer
//! properties), the electronic solvers behind each method, analytic
//! gradients at every layer of the chain, and the matching finite-difference
//! energy functions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::aiem::{
    build_couplings, build_pauli, pauli_to_monomer_dm, MonomerElements, PairList, PauliHamiltonian, PauliVector,
};
use crate::cisprep::solve_cis;
use crate::error::{Error, Result};
use crate::mcvqe::{solve_mcvqe, EntanglerKind, McVqeProblem, McVqeSolution, OptimizerOptions};
use crate::model::{
    load_tabulated, synthetic_properties, Atom, Geometry, MonomerProperties, MonomerPropertyGradients,
    SyntheticMonomer, SyntheticParams,
};
use crate::oracle::{cis_densities, fci_densities, fci_solve, fd_gradient};
use crate::response::{
    cp_sa_vqe_lhs, monomer_property_densities, nuclear_gradient, properties_from_vector, property_vector, se_response,
    state_densities, MonomerDensities, ResponseToggles, StateDensities,
};

pub const BOHR_PER_ANGSTROM: f64 = 1.0 / 0.529_177_210_903;

/// Where monomer properties come from. Tabulated data is fixed to its
/// reference geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum PropertySource {
    Synthetic(SyntheticParams),
    Tabulated {
        properties: MonomerProperties,
        gradients: MonomerPropertyGradients,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub geometry: Geometry,
    pub source: PropertySource,
    pub pairs: PairList,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub monomer: usize,
    pub xyz: [f64; 3],
    /// amu
    pub mass: f64,
}

/// On-disk synthetic system: atoms, one parameter set per monomer, and
/// optionally the unordered coupling pairs (nearest-neighbour chain when absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSystemFile {
    pub atoms: Vec<AtomSpec>,
    pub monomers: Vec<SyntheticMonomer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

impl System {
    pub fn from_synthetic(file: &SyntheticSystemFile) -> Result<Self> {
        let atoms = file
            .atoms
            .iter()
            .map(|a| Atom {
                monomer: a.monomer,
                position: Vector3::from(a.xyz),
                mass: a.mass,
            })
            .collect();
        let geometry = Geometry::new(atoms)?;
        let n = geometry.num_monomers();
        let pairs = match &file.pairs {
            Some(p) => {
                let unordered: Vec<_> = p.iter().map(|&[a, b]| (a, b)).collect();
                PairList::symmetric(n, &unordered)?
            }
            None => PairList::nearest_neighbor_chain(n),
        };
        let system = Self {
            geometry,
            source: PropertySource::Synthetic(SyntheticParams {
                monomers: file.monomers.clone(),
            }),
            pairs,
        };
        system.properties()?;
        Ok(system)
    }

    pub fn parse_synthetic(text: &str) -> Result<Self> {
        let file: SyntheticSystemFile =
            serde_json::from_str(text).map_err(|e| Error::parse("<synthetic>", e.to_string()))?;
        Self::from_synthetic(&file)
    }

    pub fn load_synthetic(path: &Path) -> Result<Self> {
        Self::parse_synthetic(&std::fs::read_to_string(path)?)
    }

    pub fn load_tabulated(path: &Path) -> Result<Self> {
        let t = load_tabulated(path)?;
        let n = t.geometry.num_monomers();
        let pairs = match t.pairs {
            Some(p) => PairList::new(n, p)?,
            None => PairList::nearest_neighbor_chain(n),
        };
        Ok(Self {
            geometry: t.geometry,
            source: PropertySource::Tabulated {
                properties: t.properties,
                gradients: t.gradients,
            },
            pairs,
        })
    }

    pub fn num_monomers(&self) -> usize {
        self.geometry.num_monomers()
    }

    pub fn properties(&self) -> Result<(MonomerProperties, MonomerPropertyGradients)> {
        match &self.source {
            PropertySource::Synthetic(p) => synthetic_properties(&self.geometry, p),
            PropertySource::Tabulated { properties, gradients } => Ok((properties.clone(), gradients.clone())),
        }
    }

    /// Same system at new positions (bohr). Only synthetic systems can move.
    pub fn at_positions(&self, positions: &[Vector3<f64>]) -> Result<Self> {
        if matches!(self.source, PropertySource::Tabulated { .. }) {
            return Err(Error::Validation(
                "tabulated properties are only available at their reference geometry".into(),
            ));
        }
        let mut s = self.clone();
        s.geometry.set_positions(positions);
        Ok(s)
    }

    pub fn elements(&self) -> Result<MonomerElements> {
        elements_from_properties(&self.properties()?.0, &self.pairs)
    }

    pub fn pauli(&self) -> Result<PauliHamiltonian> {
        build_pauli(&self.elements()?, &self.pairs)
    }
}

fn elements_from_properties(props: &MonomerProperties, pairs: &PairList) -> Result<MonomerElements> {
    Ok(MonomerElements::new(props, &build_couplings(props, pairs)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Fci,
    Cis,
    McVqe,
}

/// A gradient flavour: an oracle, or MC-VQE with a choice of response terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fci,
    Cis,
    McVqe(ResponseToggles),
}

impl Method {
    pub fn solver(&self) -> Solver {
        match self {
            Method::Fci => Solver::Fci,
            Method::Cis => Solver::Cis,
            Method::McVqe(_) => Solver::McVqe,
        }
    }

    /// FCI, CIS and the four MC-VQE response variants.
    pub fn all() -> Vec<Method> {
        let mut m = vec![Method::Fci, Method::Cis];
        m.extend(ResponseToggles::ALL.iter().map(|&t| Method::McVqe(t)));
        m
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fci => write!(f, "FCI"),
            Method::Cis => write!(f, "CIS"),
            Method::McVqe(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fci" => Ok(Method::Fci),
            "cis" => Ok(Method::Cis),
            other => {
                let code = other.strip_prefix("vqe-").unwrap_or(other);
                code.parse()
                    .map(Method::McVqe)
                    .map_err(|_| Error::parse("method", format!("unknown method `{s}`")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub ntheta: usize,
    pub entangler: EntanglerKind,
    pub optimizer: OptimizerOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            ntheta: 2,
            entangler: EntanglerKind::Truncated,
            optimizer: OptimizerOptions::default(),
        }
    }
}

/// Energies of the `ntheta` lowest states and, for MC-VQE, the optimizer state.
#[derive(Debug, Clone)]
pub struct Energies {
    pub energies: Vec<f64>,
    pub theta: Option<Vec<f64>>,
    pub iterations: usize,
}

pub fn solve_energies(
    pauli: &PauliHamiltonian,
    solver: Solver,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<Energies> {
    let ntheta = cfg.ntheta;
    match solver {
        Solver::Fci => {
            let s = fci_solve(pauli)?;
            check_count(ntheta, s.values.len())?;
            Ok(Energies {
                energies: s.values.as_slice()[..ntheta].to_vec(),
                theta: None,
                iterations: 0,
            })
        }
        Solver::Cis => {
            let cis = solve_cis(&crate::aiem::build_cis(pauli), ntheta)?;
            Ok(Energies {
                energies: cis.energies.as_slice().to_vec(),
                theta: None,
                iterations: 0,
            })
        }
        Solver::McVqe => {
            let problem = McVqeProblem::new(pauli.clone(), ntheta, cfg.entangler)?;
            let sol = solve_mcvqe(&problem, warm, &cfg.optimizer)?;
            Ok(Energies {
                energies: sol.energies.as_slice().to_vec(),
                theta: Some(sol.theta),
                iterations: sol.iterations,
            })
        }
    }
}

fn check_count(ntheta: usize, available: usize) -> Result<()> {
    if ntheta == 0 || ntheta > available {
        return Err(Error::Validation(format!(
            "number of states {ntheta} must be in 1..={available}"
        )));
    }
    Ok(())
}

fn check_state(state: usize, ntheta: usize) -> Result<()> {
    if state >= ntheta {
        return Err(Error::Validation(format!(
            "state {state} requested but only {ntheta} computed"
        )));
    }
    Ok(())
}

/// Pauli-layer result for one state under one solver. MC-VQE keeps every
/// response contribution so all four toggle variants can be read off.
#[derive(Debug, Clone)]
pub struct PauliGradient {
    pub solver: Solver,
    pub state: usize,
    pub energies: Vec<f64>,
    pub oracle: Option<PauliVector>,
    pub mcvqe: Option<McVqeGradient>,
}

#[derive(Debug, Clone)]
pub struct McVqeGradient {
    pub solution: McVqeSolution,
    pub cis_energies: Vec<f64>,
    pub densities: StateDensities,
    pub se_residuals: Vec<f64>,
    pub hessian_shift: f64,
}

impl PauliGradient {
    pub fn energy(&self) -> f64 {
        self.energies[self.state]
    }

    pub fn theta(&self) -> Option<&[f64]> {
        self.mcvqe.as_ref().map(|m| m.solution.theta.as_slice())
    }

    pub fn densities(&self, method: Method) -> Result<PauliVector> {
        if method.solver() != self.solver {
            return Err(Error::Validation(format!(
                "{method} densities requested from a {:?} solve",
                self.solver
            )));
        }
        match method {
            Method::McVqe(t) => Ok(self.mcvqe.as_ref().expect("MC-VQE solve").densities.relaxed(t)),
            _ => Ok(self.oracle.clone().expect("oracle solve")),
        }
    }
}

pub fn pauli_gradient(
    pauli: &PauliHamiltonian,
    solver: Solver,
    cfg: &SolverConfig,
    state: usize,
    warm: Option<&[f64]>,
) -> Result<PauliGradient> {
    check_state(state, cfg.ntheta)?;
    match solver {
        Solver::Fci => {
            let s = fci_solve(pauli)?;
            check_count(cfg.ntheta, s.values.len())?;
            Ok(PauliGradient {
                solver,
                state,
                energies: s.values.as_slice()[..cfg.ntheta].to_vec(),
                oracle: Some(fci_densities(&s, pauli, state)?),
                mcvqe: None,
            })
        }
        Solver::Cis => {
            let cis = solve_cis(&crate::aiem::build_cis(pauli), cfg.ntheta)?;
            Ok(PauliGradient {
                solver,
                state,
                energies: cis.energies.as_slice().to_vec(),
                oracle: Some(cis_densities(&cis, &pauli.pairs, state)?),
                mcvqe: None,
            })
        }
        Solver::McVqe => {
            let problem = McVqeProblem::new(pauli.clone(), cfg.ntheta, cfg.entangler)?;
            let solution = solve_mcvqe(&problem, warm, &cfg.optimizer)?;
            let se_residuals = se_response(&solution)?;
            let hessian = cp_sa_vqe_lhs(&problem, &solution.theta)?;
            let densities = state_densities(&problem, &solution, state, &hessian)?;
            Ok(PauliGradient {
                solver,
                state,
                energies: solution.energies.as_slice().to_vec(),
                oracle: None,
                mcvqe: Some(McVqeGradient {
                    cis_energies: problem.cis.energies.as_slice().to_vec(),
                    solution,
                    densities,
                    se_residuals,
                    hessian_shift: hessian.shift,
                }),
            })
        }
    }
}

/// Where along the chain a gradient is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    /// Pauli coefficients.
    Pauli,
    /// Monomer-basis matrix elements.
    Monomer,
    /// Monomer properties (energies, dipoles, centroids).
    Property,
    /// Nuclear coordinates.
    Nuclear,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Pauli, Layer::Monomer, Layer::Property, Layer::Nuclear];

    pub fn default_step(&self) -> f64 {
        match self {
            Layer::Pauli | Layer::Monomer => 1e-7,
            Layer::Property => 1e-6,
            Layer::Nuclear => 0.002 * BOHR_PER_ANGSTROM,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Pauli => "pauli",
            Layer::Monomer => "monomer",
            Layer::Property => "property",
            Layer::Nuclear => "nuclear",
        }
    }
}

impl FromStr for Layer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Layer::ALL.into_iter().find(|l| l.name() == s).ok_or_else(|| {
            Error::parse(
                "layer",
                format!("expected pauli, monomer, property or nuclear; got `{s}`"),
            )
        })
    }
}

/// Analytic gradient of one state through the whole chain.
#[derive(Debug, Clone)]
pub struct SystemGradient {
    pub pauli: PauliHamiltonian,
    pub properties: MonomerProperties,
    pub property_gradients: MonomerPropertyGradients,
    pub electronic: PauliGradient,
}

impl SystemGradient {
    pub fn energy(&self) -> f64 {
        self.electronic.energy()
    }

    pub fn monomer_densities(&self, method: Method) -> Result<MonomerDensities> {
        let dm = pauli_to_monomer_dm(&self.electronic.densities(method)?, &self.pauli.pairs);
        monomer_property_densities(&dm, &self.properties, &self.pauli.pairs)
    }

    pub fn nuclear(&self, system: &System, method: Method) -> Result<Vec<Vector3<f64>>> {
        nuclear_gradient(
            &self.monomer_densities(method)?,
            &self.property_gradients,
            &system.geometry,
        )
    }

    /// Analytic derivatives in the layout of [`layer_point`].
    pub fn layer(&self, system: &System, method: Method, layer: Layer) -> Result<Vec<f64>> {
        Ok(match layer {
            Layer::Pauli => self.electronic.densities(method)?.to_vec(),
            Layer::Monomer => pauli_to_monomer_dm(&self.electronic.densities(method)?, &self.pauli.pairs).to_vec(),
            Layer::Property => self.monomer_densities(method)?.to_vec(),
            Layer::Nuclear => flatten(&self.nuclear(system, method)?),
        })
    }
}

pub fn system_gradient(
    system: &System,
    solver: Solver,
    cfg: &SolverConfig,
    state: usize,
    warm: Option<&[f64]>,
) -> Result<SystemGradient> {
    let (properties, property_gradients) = system.properties()?;
    let pauli = build_pauli(&elements_from_properties(&properties, &system.pairs)?, &system.pairs)?;
    let electronic = pauli_gradient(&pauli, solver, cfg, state, warm)?;
    Ok(SystemGradient {
        pauli,
        properties,
        property_gradients,
        electronic,
    })
}

pub fn flatten(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|x| x.iter().copied()).collect()
}

pub fn unflatten(x: &[f64]) -> Vec<Vector3<f64>> {
    x.chunks(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect()
}

/// Independent variables of a layer at the system's reference point.
pub fn layer_point(system: &System, layer: Layer) -> Result<Vec<f64>> {
    Ok(match layer {
        Layer::Pauli => system.pauli()?.coeffs.to_vec(),
        Layer::Monomer => system.elements()?.to_vec(),
        Layer::Property => property_vector(&system.properties()?.0),
        Layer::Nuclear => flatten(&system.geometry.positions()),
    })
}

/// Weight dividing the raw derivative so that it matches the density convention.
fn layer_weight(system: &System, layer: Layer, j: usize) -> f64 {
    let n = system.num_monomers();
    match layer {
        Layer::Pauli => {
            let np = system.pairs.len();
            PauliVector::zeros(n, np).weight(j)
        }
        Layer::Monomer => MonomerElements::weight(n, j),
        Layer::Property | Layer::Nuclear => 1.0,
    }
}

/// Label of each entry of a layer, used to group deviations.
pub fn layer_classes(system: &System, layer: Layer) -> Vec<&'static str> {
    let n = system.num_monomers();
    let np = system.pairs.len();
    match layer {
        Layer::Pauli => {
            let v = PauliVector::zeros(n, np);
            (0..v.len()).map(|k| v.class_of(k)).collect()
        }
        Layer::Monomer => ["eps_h", "eps_p", "eps_t"]
            .iter()
            .flat_map(|c| std::iter::repeat_n(*c, n))
            .chain(std::iter::repeat_n("v", 9 * np))
            .collect(),
        Layer::Property => (0..n)
            .flat_map(|_| {
                ["gamma_h", "gamma_p"]
                    .into_iter()
                    .chain(std::iter::repeat_n("eta_h", 3))
                    .chain(std::iter::repeat_n("eta_p", 3))
                    .chain(std::iter::repeat_n("eta_t", 3))
                    .chain(std::iter::repeat_n("xi", 3))
            })
            .collect(),
        Layer::Nuclear => vec!["grad"; 3 * system.geometry.num_atoms()],
    }
}

/// Energy of `state` with the layer's variables set to `x`.
pub fn layer_energy(
    system: &System,
    layer: Layer,
    x: &[f64],
    solver: Solver,
    cfg: &SolverConfig,
    state: usize,
    warm: Option<&[f64]>,
) -> Result<f64> {
    check_state(state, cfg.ntheta)?;
    let n = system.num_monomers();
    let np = system.pairs.len();
    let pauli = match layer {
        Layer::Pauli => system.pauli()?.with_coeffs(PauliVector::from_vec(n, np, x)),
        Layer::Monomer => build_pauli(&MonomerElements::from_vec(n, np, x), &system.pairs)?,
        Layer::Property => build_pauli(
            &elements_from_properties(&properties_from_vector(x), &system.pairs)?,
            &system.pairs,
        )?,
        Layer::Nuclear => system.at_positions(&unflatten(x))?.pauli()?,
    };
    Ok(solve_energies(&pauli, solver, cfg, warm)?.energies[state])
}

/// Central finite differences of the layer energy along every variable,
/// divided by the layer weights. MC-VQE re-optimizations start from `warm`.
pub fn fd_layer(
    system: &System,
    layer: Layer,
    solver: Solver,
    cfg: &SolverConfig,
    state: usize,
    h: f64,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let x0 = layer_point(system, layer)?;
    let f = |x: &[f64]| layer_energy(system, layer, x, solver, cfg, state, warm);
    let g = fd_gradient(f, &x0, h)?;
    Ok(g.iter()
        .enumerate()
        .map(|(j, d)| d / layer_weight(system, layer, j))
        .collect())
}
