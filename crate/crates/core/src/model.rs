//! Per-monomer classical inputs: two-level energies, dipoles, centroids and
//! their nuclear gradients. Two sources are provided, an analytic synthetic
//! model (harmonic in one bond length, bond-aligned dipoles) and a tabulated
//! JSON file.
//!
//! Units are hartree / bohr / atomic units throughout, except atomic masses,
//! which are stored in unified atomic mass units as they appear in input files.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub monomer: usize,
    pub position: Vector3<f64>,
    /// amu
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    atoms: Vec<Atom>,
    members: Vec<Vec<usize>>,
}

impl Geometry {
    /// Monomer ids must be `0..M` with every id present and owning at least two atoms.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let num_monomers = atoms.iter().map(|a| a.monomer + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); num_monomers];
        for (i, atom) in atoms.iter().enumerate() {
            if !(atom.mass > 0.0 && atom.mass.is_finite()) {
                return Err(Error::Validation(format!("atom {i} has mass {}", atom.mass)));
            }
            if atom.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("atom {i} has a non-finite position")));
            }
            members[atom.monomer].push(i);
        }
        if num_monomers == 0 {
            return Err(Error::Validation("geometry has no atoms".into()));
        }
        if let Some(a) = members.iter().position(|m| m.len() < 2) {
            return Err(Error::Validation(format!(
                "monomer {a} has {} atoms, at least 2 required",
                members[a].len()
            )));
        }
        Ok(Self { atoms, members })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_monomers(&self) -> usize {
        self.members.len()
    }

    /// Global atom indices of monomer `a`, in input order.
    pub fn monomer_atoms(&self, a: usize) -> &[usize] {
        &self.members[a]
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn set_positions(&mut self, positions: &[Vector3<f64>]) {
        for (atom, p) in self.atoms.iter_mut().zip(positions) {
            atom.position = *p;
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    /// Mass-weighted centroid of monomer `a`.
    pub fn centroid(&self, a: usize) -> Vector3<f64> {
        let total: f64 = self.members[a].iter().map(|&i| self.atoms[i].mass).sum();
        self.members[a]
            .iter()
            .map(|&i| self.atoms[i].position * (self.atoms[i].mass / total))
            .sum()
    }

    /// Copy with coordinate `coord` (0..3) of atom `atom` displaced by `h`.
    pub fn displaced(&self, atom: usize, coord: usize, h: f64) -> Self {
        let mut g = self.clone();
        g.atoms[atom].position[coord] += h;
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomer {
    pub eps_h: f64,
    pub eps_p: f64,
    pub mu_h: Vector3<f64>,
    pub mu_p: Vector3<f64>,
    pub mu_t: Vector3<f64>,
    pub r0: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomerProperties {
    pub monomers: Vec<Monomer>,
}

impl MonomerProperties {
    pub fn len(&self) -> usize {
        self.monomers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomers.is_empty()
    }
}

/// Derivatives of one monomer's properties with respect to one of its atoms.
/// Matrix blocks are Jacobians: `mu_h[(i, j)] = ∂μ_H,i / ∂r_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomGradient {
    pub eps_h: Vector3<f64>,
    pub eps_p: Vector3<f64>,
    pub mu_h: Matrix3<f64>,
    pub mu_p: Matrix3<f64>,
    pub mu_t: Matrix3<f64>,
    pub r0: Matrix3<f64>,
}

impl AtomGradient {
    pub fn zero() -> Self {
        Self {
            eps_h: Vector3::zeros(),
            eps_p: Vector3::zeros(),
            mu_h: Matrix3::zeros(),
            mu_p: Matrix3::zeros(),
            mu_t: Matrix3::zeros(),
            r0: Matrix3::zeros(),
        }
    }
}

/// Gradients of monomer `A`'s properties. Only the atoms of `A` appear;
/// derivatives with respect to other monomers' atoms are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomerGradient {
    pub atoms: Vec<usize>,
    pub blocks: Vec<AtomGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonomerPropertyGradients {
    pub monomers: Vec<MonomerGradient>,
}

/// Centroid Jacobian blocks `(m_ζ / M) I` for every atom of monomer `a`.
fn centroid_blocks(geometry: &Geometry, a: usize) -> Vec<Matrix3<f64>> {
    let atoms = geometry.monomer_atoms(a);
    let total: f64 = atoms.iter().map(|&i| geometry.atoms[i].mass).sum();
    atoms
        .iter()
        .map(|&i| Matrix3::identity() * (geometry.atoms[i].mass / total))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMonomer {
    pub k_h: f64,
    pub k_p: f64,
    pub d_h: f64,
    pub d_p: f64,
    pub delta_e: f64,
    pub m_h: f64,
    pub m_p: f64,
    pub m_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub monomers: Vec<SyntheticMonomer>,
}

/// Analytic monomer model. With `d` the length of the bond from the first to
/// the second atom of the monomer and `û` its direction:
/// `ε_H = ½k_H(d−d_H)²`, `ε_P = ΔE + ½k_P(d−d_P)²`, `μ_X = m_X û`.
pub fn synthetic_properties(
    geometry: &Geometry,
    params: &SyntheticParams,
) -> Result<(MonomerProperties, MonomerPropertyGradients)> {
    if params.monomers.len() != geometry.num_monomers() {
        return Err(Error::Validation(format!(
            "{} synthetic parameter sets for {} monomers",
            params.monomers.len(),
            geometry.num_monomers()
        )));
    }
    let mut monomers = Vec::with_capacity(geometry.num_monomers());
    let mut grads = Vec::with_capacity(geometry.num_monomers());
    for (a, p) in params.monomers.iter().enumerate() {
        let atoms = geometry.monomer_atoms(a);
        let bond = geometry.atoms[atoms[1]].position - geometry.atoms[atoms[0]].position;
        let d = bond.norm();
        if d < 1e-8 {
            return Err(Error::DegenerateGeometry(format!(
                "monomer {a}: bond atoms {} and {} coincide",
                atoms[0], atoms[1]
            )));
        }
        let u = bond / d;
        monomers.push(Monomer {
            eps_h: 0.5 * p.k_h * (d - p.d_h).powi(2),
            eps_p: p.delta_e + 0.5 * p.k_p * (d - p.d_p).powi(2),
            mu_h: u * p.m_h,
            mu_p: u * p.m_p,
            mu_t: u * p.m_t,
            r0: geometry.centroid(a),
        });

        // ∂d/∂r1 = û, ∂û/∂r1 = (I − ûûᵀ)/d; the first atom carries the negatives
        let du = (Matrix3::identity() - u * u.transpose()) / d;
        let de_h = u * (p.k_h * (d - p.d_h));
        let de_p = u * (p.k_p * (d - p.d_p));
        let blocks = centroid_blocks(geometry, a)
            .into_iter()
            .enumerate()
            .map(|(k, r0)| {
                let sign = match k {
                    0 => -1.0,
                    1 => 1.0,
                    _ => 0.0,
                };
                AtomGradient {
                    eps_h: de_h * sign,
                    eps_p: de_p * sign,
                    mu_h: du * (sign * p.m_h),
                    mu_p: du * (sign * p.m_p),
                    mu_t: du * (sign * p.m_t),
                    r0,
                }
            })
            .collect();
        grads.push(MonomerGradient {
            atoms: atoms.to_vec(),
            blocks,
        });
    }
    Ok((
        MonomerProperties { monomers },
        MonomerPropertyGradients { monomers: grads },
    ))
}

/// Contents of a tabulated monomer file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    pub geometry: Geometry,
    pub properties: MonomerProperties,
    pub gradients: MonomerPropertyGradients,
    pub pairs: Option<Vec<(usize, usize)>>,
    /// One entry per gradient block that was absent and defaulted to zero.
    pub warnings: Vec<String>,
}

const GRAD_VECTOR_KEYS: [&str; 2] = ["eps_h", "eps_p"];
const GRAD_MATRIX_KEYS: [&str; 3] = ["mu_h", "mu_p", "mu_t"];

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing field"))
}

fn number(v: &Value, path: &str) -> Result<f64> {
    let x = v
        .as_f64()
        .ok_or_else(|| Error::parse(path, format!("expected a number, found {v}")))?;
    if !x.is_finite() {
        return Err(Error::Validation(format!("{path} is not finite")));
    }
    Ok(x)
}

fn array<'a>(v: &'a Value, path: &str, len: Option<usize>) -> Result<&'a Vec<Value>> {
    let arr = v.as_array().ok_or_else(|| Error::parse(path, "expected an array"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(Error::parse(path, format!("expected {n} entries, found {}", arr.len())));
        }
    }
    Ok(arr)
}

fn vector3(v: &Value, path: &str) -> Result<Vector3<f64>> {
    let arr = array(v, path, Some(3))?;
    let mut out = Vector3::zeros();
    for (i, x) in arr.iter().enumerate() {
        out[i] = number(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn matrix3(v: &Value, path: &str) -> Result<Matrix3<f64>> {
    let rows = array(v, path, Some(3))?;
    let mut out = Matrix3::zeros();
    for (i, row) in rows.iter().enumerate() {
        let r = vector3(row, &format!("{path}[{i}]"))?;
        for j in 0..3 {
            out[(i, j)] = r[j];
        }
    }
    Ok(out)
}

/// Parse a tabulated monomer file (see the README for the schema). Numbers
/// that are not finite are rejected; positions are bohr, masses amu.
pub fn parse_tabulated(text: &str) -> Result<Tabulated> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::parse("<root>", e.to_string()))?;
    let root = root
        .as_object()
        .ok_or_else(|| Error::parse("<root>", "expected an object"))?;
    let monomers = array(field(root, "monomers", "")?, "monomers", None)?;

    let mut atoms = Vec::new();
    let mut raw = Vec::new();
    for (a, m) in monomers.iter().enumerate() {
        let path = format!("monomers[{a}]");
        let obj = m.as_object().ok_or_else(|| Error::parse(&path, "expected an object"))?;
        let atom_list = array(field(obj, "atoms", &path)?, &format!("{path}.atoms"), None)?;
        for (k, atom) in atom_list.iter().enumerate() {
            let apath = format!("{path}.atoms[{k}]");
            let aobj = atom
                .as_object()
                .ok_or_else(|| Error::parse(&apath, "expected an object"))?;
            atoms.push(Atom {
                monomer: a,
                position: vector3(field(aobj, "xyz", &apath)?, &format!("{apath}.xyz"))?,
                mass: number(field(aobj, "mass", &apath)?, &format!("{apath}.mass"))?,
            });
        }
        raw.push((obj, path, atom_list.len()));
    }
    let geometry = Geometry::new(atoms)?;

    let mut props = Vec::new();
    let mut grads = Vec::new();
    let mut warnings = Vec::new();
    for (a, (obj, path, natoms)) in raw.into_iter().enumerate() {
        let scalar = |k: &str| -> Result<f64> { number(field(obj, k, &path)?, &format!("{path}.{k}")) };
        let vec3 = |k: &str| -> Result<Vector3<f64>> { vector3(field(obj, k, &path)?, &format!("{path}.{k}")) };
        props.push(Monomer {
            eps_h: scalar("eps_h")?,
            eps_p: scalar("eps_p")?,
            mu_h: vec3("mu_h")?,
            mu_p: vec3("mu_p")?,
            mu_t: vec3("mu_t")?,
            r0: geometry.centroid(a),
        });

        let grad = match obj.get("grad") {
            Some(g) => Some(
                g.as_object()
                    .ok_or_else(|| Error::parse(format!("{path}.grad"), "expected an object"))?,
            ),
            None => None,
        };
        let mut blocks: Vec<AtomGradient> = centroid_blocks(&geometry, a)
            .into_iter()
            .map(|r0| AtomGradient {
                r0,
                ..AtomGradient::zero()
            })
            .collect();
        for key in GRAD_VECTOR_KEYS.iter().chain(GRAD_MATRIX_KEYS.iter()) {
            let gpath = format!("{path}.grad.{key}");
            let Some(entry) = grad.and_then(|g| g.get(*key)) else {
                warnings.push(format!("{gpath} missing, using zeros"));
                continue;
            };
            let per_atom = array(entry, &gpath, Some(natoms))?;
            for (k, v) in per_atom.iter().enumerate() {
                let p = format!("{gpath}[{k}]");
                let b = &mut blocks[k];
                match *key {
                    "eps_h" => b.eps_h = vector3(v, &p)?,
                    "eps_p" => b.eps_p = vector3(v, &p)?,
                    "mu_h" => b.mu_h = matrix3(v, &p)?,
                    "mu_p" => b.mu_p = matrix3(v, &p)?,
                    _ => b.mu_t = matrix3(v, &p)?,
                }
            }
        }
        grads.push(MonomerGradient {
            atoms: geometry.monomer_atoms(a).to_vec(),
            blocks,
        });
    }

    let pairs = match root.get("pairs") {
        None => None,
        Some(v) => {
            let list = array(v, "pairs", None)?;
            let mut out = Vec::with_capacity(list.len());
            for (k, p) in list.iter().enumerate() {
                let path = format!("pairs[{k}]");
                let pr = array(p, &path, Some(2))?;
                let idx = |x: &Value, i: usize| -> Result<usize> {
                    x.as_u64()
                        .map(|n| n as usize)
                        .filter(|&n| n < geometry.num_monomers())
                        .ok_or_else(|| Error::parse(format!("{path}[{i}]"), "expected a monomer index"))
                };
                out.push((idx(&pr[0], 0)?, idx(&pr[1], 1)?));
            }
            Some(out)
        }
    };

    Ok(Tabulated {
        geometry,
        properties: MonomerProperties { monomers: props },
        gradients: MonomerPropertyGradients { monomers: grads },
        pairs,
        warnings,
    })
}

pub fn load_tabulated(path: &Path) -> Result<Tabulated> {
    let text = std::fs::read_to_string(path)?;
    let t = parse_tabulated(&text)?;
    for w in &t.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(t)
}

fn v3(v: &Vector3<f64>) -> Value {
    json!([v[0], v[1], v[2]])
}

fn m3(m: &Matrix3<f64>) -> Value {
    json!([
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    ])
}

/// Serialize in the tabulated format. Gradient blocks are always written.
/// Floats are emitted in shortest round-trip form, so parse/write is lossless.
pub fn write_tabulated(t: &Tabulated) -> String {
    let monomers: Vec<Value> = t
        .properties
        .monomers
        .iter()
        .enumerate()
        .map(|(a, m)| {
            let atoms: Vec<Value> = t
                .geometry
                .monomer_atoms(a)
                .iter()
                .map(|&i| {
                    let atom = &t.geometry.atoms()[i];
                    json!({"xyz": v3(&atom.position), "mass": atom.mass})
                })
                .collect();
            let blocks = &t.gradients.monomers[a].blocks;
            let grad = json!({
                "eps_h": blocks.iter().map(|b| v3(&b.eps_h)).collect::<Vec<_>>(),
                "eps_p": blocks.iter().map(|b| v3(&b.eps_p)).collect::<Vec<_>>(),
                "mu_h": blocks.iter().map(|b| m3(&b.mu_h)).collect::<Vec<_>>(),
                "mu_p": blocks.iter().map(|b| m3(&b.mu_p)).collect::<Vec<_>>(),
                "mu_t": blocks.iter().map(|b| m3(&b.mu_t)).collect::<Vec<_>>(),
            });
            json!({
                "atoms": atoms,
                "eps_h": m.eps_h,
                "eps_p": m.eps_p,
                "mu_h": v3(&m.mu_h),
                "mu_p": v3(&m.mu_p),
                "mu_t": v3(&m.mu_t),
                "grad": grad,
            })
        })
        .collect();
    let mut root = json!({ "monomers": monomers });
    if let Some(pairs) = &t.pairs {
        root["pairs"] = json!(pairs.iter().map(|&(a, b)| json!([a, b])).collect::<Vec<_>>());
    }
    let mut s = serde_json::to_string_pretty(&root).expect("JSON values always serialize");
    s.push('\n');
    s
}
