//! Ab initio exciton model: dipole-dipole couplings, the Pauli-basis
//! Hamiltonian, the CIS Hamiltonian, and the transpose maps that carry Pauli
//! densities back to monomer-basis densities.
//!
//! Density convention. Writing `Ĥ = Σ_k w_k p_k P̂_k` with `w_k = 1` for the
//! constant and one-body terms and `w_k = ½` for each ordered pair term, the
//! Pauli density of coefficient `k` is `ρ_k = (1/w_k) ∂E/∂p_k`, which for an
//! unrelaxed state is simply `<P̂_k>`. Monomer pair densities follow the same
//! rule: `Γ_XY^{AA'} = 2 ∂E/∂v_XY^{AA'}`.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::model::MonomerProperties;
use crate::sim::{Axis, Observable, PauliString};

/// Dipole channel indices for `v[X][Y]`.
pub const H: usize = 0;
pub const T: usize = 1;
pub const P: usize = 2;
pub const CHANNEL_NAMES: [&str; 3] = ["H", "T", "P"];

/// Ordered coupling pairs `(A, A')`, closed under swap, no self pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairList {
    num_monomers: usize,
    pairs: Vec<(usize, usize)>,
    partner: Vec<usize>,
}

impl PairList {
    pub fn new(num_monomers: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut partner = Vec::with_capacity(pairs.len());
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if a == b || a >= num_monomers || b >= num_monomers {
                return Err(Error::Structure(format!("invalid coupling pair ({a}, {b})")));
            }
            if pairs[..k].contains(&(a, b)) {
                return Err(Error::Structure(format!("duplicate coupling pair ({a}, {b})")));
            }
            let j = pairs
                .iter()
                .position(|&p| p == (b, a))
                .ok_or_else(|| Error::Structure(format!("pair ({a}, {b}) listed without ({b}, {a})")))?;
            partner.push(j);
        }
        Ok(Self {
            num_monomers,
            pairs,
            partner,
        })
    }

    /// Both orderings of every unordered pair given.
    pub fn symmetric(num_monomers: usize, unordered: &[(usize, usize)]) -> Result<Self> {
        let pairs = unordered.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        Self::new(num_monomers, pairs)
    }

    /// `(0,1),(1,0),(1,2),(2,1),...`
    pub fn nearest_neighbor_chain(num_monomers: usize) -> Self {
        let unordered: Vec<_> = (1..num_monomers).map(|a| (a - 1, a)).collect();
        Self::symmetric(num_monomers, &unordered).expect("chain pairs are valid")
    }

    pub fn num_monomers(&self) -> usize {
        self.num_monomers
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Index of the swapped pair `(A', A)` for pair `k = (A, A')`.
    pub fn partner(&self, k: usize) -> usize {
        self.partner[k]
    }

    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (a, b))
    }
}

/// `v = μ_A·μ_A'/r³ − 3(μ_A·r)(μ_A'·r)/r⁵` with `r = r0_A' − r0_A`.
pub fn dipole_coupling(
    mu_a: &Vector3<f64>,
    mu_b: &Vector3<f64>,
    r0_a: &Vector3<f64>,
    r0_b: &Vector3<f64>,
) -> Result<f64> {
    let r = r0_b - r0_a;
    let d = separation(&r)?;
    let d3 = d * d * d;
    Ok(mu_a.dot(mu_b) / d3 - 3.0 * mu_a.dot(&r) * mu_b.dot(&r) / (d3 * d * d))
}

fn separation(r: &Vector3<f64>) -> Result<f64> {
    let d = r.norm();
    if d <= 1e-6 {
        return Err(Error::Singularity(format!("monomer centroids {d:e} bohr apart")));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingPartials {
    pub mu_a: Vector3<f64>,
    pub mu_b: Vector3<f64>,
    pub r0_a: Vector3<f64>,
    pub r0_b: Vector3<f64>,
}

/// Closed-form partials of [`dipole_coupling`] with respect to both dipoles
/// and both centroids.
pub fn coupling_partials(
    mu_a: &Vector3<f64>,
    mu_b: &Vector3<f64>,
    r0_a: &Vector3<f64>,
    r0_b: &Vector3<f64>,
) -> Result<CouplingPartials> {
    let r = r0_b - r0_a;
    let d = separation(&r)?;
    let d2 = d * d;
    let d3 = d2 * d;
    let d5 = d3 * d2;
    let ar = mu_a.dot(&r);
    let br = mu_b.dot(&r);
    let dr =
        r * (-3.0 * mu_a.dot(mu_b) / d5 + 15.0 * ar * br / (d5 * d2)) - mu_a * (3.0 * br / d5) - mu_b * (3.0 * ar / d5);
    Ok(CouplingPartials {
        mu_a: mu_b / d3 - r * (3.0 * br / d5),
        mu_b: mu_a / d3 - r * (3.0 * ar / d5),
        r0_a: -dr,
        r0_b: dr,
    })
}

/// `v[k][X][Y]` for pair `k = (A, A')`: dipole `X` of `A` against dipole `Y` of `A'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimerCouplings {
    pub v: Vec<[[f64; 3]; 3]>,
}

pub fn dipoles(props: &MonomerProperties, a: usize) -> [Vector3<f64>; 3] {
    let m = &props.monomers[a];
    [m.mu_h, m.mu_t, m.mu_p]
}

pub fn build_couplings(props: &MonomerProperties, pairs: &PairList) -> Result<DimerCouplings> {
    check_size(props.len(), pairs)?;
    let mut v = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs.pairs() {
        let (da, db) = (dipoles(props, a), dipoles(props, b));
        let (ra, rb) = (props.monomers[a].r0, props.monomers[b].r0);
        let mut block = [[0.0; 3]; 3];
        for x in 0..3 {
            for y in 0..3 {
                block[x][y] = dipole_coupling(&da[x], &db[y], &ra, &rb)?;
            }
        }
        v.push(block);
    }
    Ok(DimerCouplings { v })
}

fn check_size(n: usize, pairs: &PairList) -> Result<()> {
    if pairs.num_monomers() != n {
        return Err(Error::Structure(format!(
            "pair list is for {} monomers, system has {n}",
            pairs.num_monomers()
        )));
    }
    Ok(())
}

/// Monomer-basis matrix elements: one-body energies (with the transition
/// energy `ε_T`, identically zero for real systems but kept as a variable so
/// its density is defined) and pair couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomerElements {
    pub eps_h: Vec<f64>,
    pub eps_p: Vec<f64>,
    pub eps_t: Vec<f64>,
    pub v: Vec<[[f64; 3]; 3]>,
}

impl MonomerElements {
    pub fn new(props: &MonomerProperties, couplings: &DimerCouplings) -> Self {
        Self {
            eps_h: props.monomers.iter().map(|m| m.eps_h).collect(),
            eps_p: props.monomers.iter().map(|m| m.eps_p).collect(),
            eps_t: vec![0.0; props.len()],
            v: couplings.v.clone(),
        }
    }

    pub fn zeros(n: usize, num_pairs: usize) -> Self {
        Self {
            eps_h: vec![0.0; n],
            eps_p: vec![0.0; n],
            eps_t: vec![0.0; n],
            v: vec![[[0.0; 3]; 3]; num_pairs],
        }
    }

    /// Layout `[ε_H.., ε_P.., ε_T.., v(pair 0) row-major, v(pair 1), ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(&self.eps_h);
        out.extend(&self.eps_p);
        out.extend(&self.eps_t);
        for b in &self.v {
            out.extend(b.iter().flatten());
        }
        out
    }

    pub fn from_vec(n: usize, num_pairs: usize, x: &[f64]) -> Self {
        assert_eq!(x.len(), 3 * n + 9 * num_pairs);
        let v = (0..num_pairs)
            .map(|k| {
                let s = &x[3 * n + 9 * k..3 * n + 9 * k + 9];
                [[s[0], s[1], s[2]], [s[3], s[4], s[5]], [s[6], s[7], s[8]]]
            })
            .collect();
        Self {
            eps_h: x[..n].to_vec(),
            eps_p: x[n..2 * n].to_vec(),
            eps_t: x[2 * n..3 * n].to_vec(),
            v,
        }
    }

    /// Weight of entry `j` of [`Self::to_vec`] in the energy contraction
    /// (½ for pair elements).
    pub fn weight(n: usize, j: usize) -> f64 {
        if j < 3 * n {
            1.0
        } else {
            0.5
        }
    }
}

/// Coefficients or densities over the Pauli terms of the AIEM Hamiltonian.
/// Pair arrays are indexed like the [`PairList`].
#[derive(Debug, Clone, PartialEq)]
pub struct PauliVector {
    pub e: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub xx: Vec<f64>,
    pub xz: Vec<f64>,
    pub zx: Vec<f64>,
    pub zz: Vec<f64>,
}

/// Names of the density classes in flat order (after the constant).
pub const PAULI_CLASSES: [&str; 6] = ["X", "Z", "XX", "XZ", "ZX", "ZZ"];

impl PauliVector {
    pub fn zeros(n: usize, num_pairs: usize) -> Self {
        Self {
            e: 0.0,
            x: vec![0.0; n],
            z: vec![0.0; n],
            xx: vec![0.0; num_pairs],
            xz: vec![0.0; num_pairs],
            zx: vec![0.0; num_pairs],
            zz: vec![0.0; num_pairs],
        }
    }

    pub fn num_monomers(&self) -> usize {
        self.x.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.xx.len()
    }

    pub fn len(&self) -> usize {
        1 + 2 * self.num_monomers() + 4 * self.num_pairs()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat layout `[E, X.., Z.., XX.., XZ.., ZX.., ZZ..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = vec![self.e];
        for part in [&self.x, &self.z, &self.xx, &self.xz, &self.zx, &self.zz] {
            out.extend(part.iter());
        }
        out
    }

    pub fn from_vec(n: usize, num_pairs: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), 1 + 2 * n + 4 * num_pairs);
        let mut it = v[1..].chunks(1).map(|c| c[0]);
        let mut take = |m: usize| (&mut it).take(m).collect::<Vec<_>>();
        let x = take(n);
        let z = take(n);
        let xx = take(num_pairs);
        let xz = take(num_pairs);
        let zx = take(num_pairs);
        let zz = take(num_pairs);
        Self {
            e: v[0],
            x,
            z,
            xx,
            xz,
            zx,
            zz,
        }
    }

    /// Energy weight of flat entry `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k < 1 + 2 * self.num_monomers() {
            1.0
        } else {
            0.5
        }
    }

    /// Class name of flat entry `k` (`"E"` for the constant).
    pub fn class_of(&self, k: usize) -> &'static str {
        let n = self.num_monomers();
        let p = self.num_pairs();
        match k {
            0 => "E",
            k if k < 1 + n => "X",
            k if k < 1 + 2 * n => "Z",
            k => PAULI_CLASSES[2 + (k - 1 - 2 * n) / p.max(1)],
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let v: Vec<f64> = self.to_vec().iter().zip(other.to_vec()).map(|(a, b)| a + b).collect();
        Self::from_vec(self.num_monomers(), self.num_pairs(), &v)
    }

    pub fn scale(&self, s: f64) -> Self {
        let v: Vec<f64> = self.to_vec().iter().map(|a| a * s).collect();
        Self::from_vec(self.num_monomers(), self.num_pairs(), &v)
    }

    /// `Σ_k w_k a_k b_k`: the energy (or energy derivative) obtained by
    /// contracting coefficients `self` with densities `dens`.
    pub fn contract(&self, dens: &Self) -> f64 {
        let a = self.to_vec();
        let b = dens.to_vec();
        (0..a.len()).map(|k| self.weight(k) * a[k] * b[k]).sum()
    }
}

/// The Pauli string for every flat entry of a [`PauliVector`] over `pairs`
/// (identity for the constant).
pub fn pauli_strings(pairs: &PairList) -> Vec<PauliString> {
    let n = pairs.num_monomers();
    let mut out = vec![PauliString::identity()];
    out.extend((0..n).map(PauliString::x));
    out.extend((0..n).map(PauliString::z));
    for (pa, pb) in [
        (Axis::X, Axis::X),
        (Axis::X, Axis::Z),
        (Axis::Z, Axis::X),
        (Axis::Z, Axis::Z),
    ] {
        for &(a, b) in pairs.pairs() {
            out.push(PauliString::two(a, pa, b, pb).expect("pair list has distinct qubits"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliHamiltonian {
    pub pairs: PairList,
    pub coeffs: PauliVector,
}

impl PauliHamiltonian {
    pub fn num_monomers(&self) -> usize {
        self.pairs.num_monomers()
    }

    pub fn with_coeffs(&self, coeffs: PauliVector) -> Self {
        Self {
            pairs: self.pairs.clone(),
            coeffs,
        }
    }

    pub fn observable(&self) -> Observable {
        let c = self.coeffs.to_vec();
        let strings = pauli_strings(&self.pairs);
        let terms = strings
            .into_iter()
            .enumerate()
            .skip(1)
            .map(|(k, s)| (self.coeffs.weight(k) * c[k], s))
            .collect();
        Observable::new(c[0], terms)
    }

    /// Densities `<ψ|P̂_k|ψ>` for every coefficient (1 for the constant).
    pub fn densities_of(&self, amplitudes: &[f64]) -> PauliVector {
        let strings = pauli_strings(&self.pairs);
        let v: Vec<f64> = strings
            .iter()
            .map(|s| {
                amplitudes
                    .iter()
                    .enumerate()
                    .map(|(i, &a)| {
                        let (j, sign) = s.act(i);
                        sign * a * amplitudes[j]
                    })
                    .sum()
            })
            .collect();
        PauliVector::from_vec(self.num_monomers(), self.pairs.len(), &v)
    }

    /// Dense `2^N × 2^N` matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.num_monomers();
        let dim = 1 << n;
        let c = self.coeffs.to_vec();
        let strings = pauli_strings(&self.pairs);
        let mut h = DMatrix::zeros(dim, dim);
        for (k, s) in strings.iter().enumerate() {
            let w = self.coeffs.weight(k) * c[k];
            if w == 0.0 {
                continue;
            }
            for i in 0..dim {
                let (j, sign) = s.act(i);
                h[(j, i)] += w * sign;
            }
        }
        h
    }
}

/// Linear map from monomer elements to Pauli coefficients.
pub fn build_pauli(elements: &MonomerElements, pairs: &PairList) -> Result<PauliHamiltonian> {
    let n = elements.eps_h.len();
    check_size(n, pairs)?;
    if elements.v.len() != pairs.len() {
        return Err(Error::Structure(format!(
            "{} coupling blocks for {} pairs",
            elements.v.len(),
            pairs.len()
        )));
    }
    let mut c = PauliVector::zeros(n, pairs.len());
    for a in 0..n {
        c.e += 0.5 * (elements.eps_h[a] + elements.eps_p[a]);
        c.x[a] = elements.eps_t[a];
        c.z[a] = 0.5 * (elements.eps_h[a] - elements.eps_p[a]);
    }
    for (k, &(a, b)) in pairs.pairs().iter().enumerate() {
        let v = &elements.v[k];
        c.e += 0.5 * (v[H][H] + v[H][P] + v[P][H] + v[P][P]) / 4.0;
        // pair (A, A') enters X_A and Z_A as the AA' term and X_A', Z_A' as the A'A term
        c.x[a] += 0.5 * (v[T][H] + v[T][P]) / 2.0;
        c.x[b] += 0.5 * (v[H][T] + v[P][T]) / 2.0;
        c.z[a] += 0.5 * (v[H][H] + v[H][P] - v[P][H] - v[P][P]) / 4.0;
        c.z[b] += 0.5 * (v[H][H] + v[P][H] - v[H][P] - v[P][P]) / 4.0;
        c.xx[k] = v[T][T];
        c.xz[k] = (v[T][H] - v[T][P]) / 2.0;
        c.zx[k] = (v[H][T] - v[P][T]) / 2.0;
        c.zz[k] = (v[H][H] - v[H][P] - v[P][H] + v[P][P]) / 4.0;
    }
    Ok(PauliHamiltonian {
        pairs: pairs.clone(),
        coeffs: c,
    })
}

/// Monomer-basis densities: `γ_X^A = ∂E/∂ε_X^A`, `Γ_XY^k = 2 ∂E/∂v_XY^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomerDensityMatrices {
    pub gamma_h: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub gamma_t: Vec<f64>,
    pub pair: Vec<[[f64; 3]; 3]>,
}

impl MonomerDensityMatrices {
    /// Same layout as [`MonomerElements::to_vec`].
    pub fn to_vec(&self) -> Vec<f64> {
        MonomerElements {
            eps_h: self.gamma_h.clone(),
            eps_p: self.gamma_p.clone(),
            eps_t: self.gamma_t.clone(),
            v: self.pair.clone(),
        }
        .to_vec()
    }
}

/// Transpose of [`build_pauli`] (constant row included) acting on Pauli densities.
pub fn pauli_to_monomer_dm(dens: &PauliVector, pairs: &PairList) -> MonomerDensityMatrices {
    let n = dens.num_monomers();
    let mut out = MonomerDensityMatrices {
        gamma_h: (0..n).map(|a| 0.5 * dens.e + 0.5 * dens.z[a]).collect(),
        gamma_p: (0..n).map(|a| 0.5 * dens.e - 0.5 * dens.z[a]).collect(),
        gamma_t: dens.x.clone(),
        pair: vec![[[0.0; 3]; 3]; pairs.len()],
    };
    for (k, &(a, b)) in pairs.pairs().iter().enumerate() {
        let g = &mut out.pair[k];
        let (e, xa, xb, za, zb) = (dens.e, dens.x[a], dens.x[b], dens.z[a], dens.z[b]);
        g[H][H] = e / 4.0 + za / 4.0 + zb / 4.0 + dens.zz[k] / 4.0;
        g[H][P] = e / 4.0 + za / 4.0 - zb / 4.0 - dens.zz[k] / 4.0;
        g[P][H] = e / 4.0 - za / 4.0 + zb / 4.0 - dens.zz[k] / 4.0;
        g[P][P] = e / 4.0 - za / 4.0 - zb / 4.0 + dens.zz[k] / 4.0;
        g[T][H] = xa / 2.0 + dens.xz[k] / 2.0;
        g[T][P] = xa / 2.0 - dens.xz[k] / 2.0;
        g[H][T] = xb / 2.0 + dens.zx[k] / 2.0;
        g[P][T] = xb / 2.0 - dens.zx[k] / 2.0;
        g[T][T] = dens.xx[k];
    }
    out
}

/// CIS configuration `I` as a computational basis index: `|0>` then `|A> = 1 << A`.
pub fn cis_config(i: usize) -> usize {
    if i == 0 {
        0
    } else {
        1 << (i - 1)
    }
}

fn cis_index(basis: usize, n: usize) -> Option<usize> {
    match basis {
        0 => Some(0),
        b if b.is_power_of_two() && b < 1 << n => Some(b.trailing_zeros() as usize + 1),
        _ => None,
    }
}

/// Symmetric `(N+1) × (N+1)` CIS Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct CisHamiltonian {
    pub matrix: DMatrix<f64>,
}

pub fn build_cis(pauli: &PauliHamiltonian) -> CisHamiltonian {
    let n = pauli.num_monomers();
    let c = &pauli.coeffs;
    let pairs = pauli.pairs.pairs();
    let e_ref = c.e + c.z.iter().sum::<f64>() + 0.5 * c.zz.iter().sum::<f64>();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h[(0, 0)] = e_ref;
    for a in 0..n {
        h[(a + 1, a + 1)] = e_ref - 2.0 * c.z[a];
        h[(0, a + 1)] = c.x[a];
    }
    for (k, &(a, b)) in pairs.iter().enumerate() {
        // ZZ_AA' and ZZ_A'A both appear in H_AA and H_A'A' via the two orderings
        h[(a + 1, a + 1)] -= c.zz[k];
        h[(b + 1, b + 1)] -= c.zz[k];
        h[(0, a + 1)] += 0.5 * c.xz[k];
        h[(0, b + 1)] += 0.5 * c.zx[k];
        // XX is symmetric for physical couplings; averaging the two orderings
        // keeps H_CIS the exact projection of the Pauli Hamiltonian otherwise too
        h[(a + 1, b + 1)] += 0.5 * c.xx[k];
        h[(b + 1, a + 1)] += 0.5 * c.xx[k];
    }
    for a in 0..n {
        h[(a + 1, 0)] = h[(0, a + 1)];
    }
    CisHamiltonian { matrix: h }
}

/// Nonzero entries `(I, I', <I|P̂_k|I'>)` of every Pauli string projected on
/// the CIS configurations. `∂H_CIS/∂p_k = w_k` times this table.
pub fn cis_pauli_elements(pairs: &PairList) -> Vec<Vec<(usize, usize, f64)>> {
    let n = pairs.num_monomers();
    pauli_strings(pairs)
        .iter()
        .map(|s| {
            let mut entries = Vec::new();
            for j in 0..=n {
                let (basis, sign) = s.act(cis_config(j));
                if let Some(i) = cis_index(basis, n) {
                    entries.push((i, j, sign));
                }
            }
            entries
        })
        .collect()
}

/// `ρ_k = Σ_{II'} D_{II'} <I|P̂_k|I'>` for an `(N+1) × (N+1)` matrix `D`.
pub fn cis_contract(d: &DMatrix<f64>, pairs: &PairList) -> PauliVector {
    let v: Vec<f64> = cis_pauli_elements(pairs)
        .iter()
        .map(|entries| entries.iter().map(|&(i, j, s)| d[(i, j)] * s).sum())
        .collect();
    PauliVector::from_vec(pairs.num_monomers(), pairs.len(), &v)
}
