//! Real-amplitude statevector simulator for the Ry / CNOT / CZ / H / Fy gate set,
//! with exact Pauli expectation values and parameter-shift differentiation.
//!
//! Conventions:
//!
//! * Qubit `q` is bit `q` of the basis-state index (little endian), so the
//!   singly-excited configuration of monomer `A` is the index `1 << A`.
//! * `Ry(θ) = exp(-iθY) = [[cos θ, -sin θ], [sin θ, cos θ]]`. This is the
//!   full-angle convention; most simulators use the half angle. Observables are
//!   then period-π sinusoids in every rotation angle and the exact shift rules
//!   use offsets of ±π/4 (first derivative) and ±π/2 (second derivative).
//! * Every gate in the set is real orthogonal, so amplitudes are stored as `f64`.
//!   There is no way to express a complex-valued gate in [`Gate`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    amplitudes: Vec<f64>,
    num_qubits: usize,
}

impl Statevector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amplitudes = vec![0.0; 1 << num_qubits];
        amplitudes[0] = 1.0;
        Self { amplitudes, num_qubits }
    }

    pub fn from_amplitudes(num_qubits: usize, amplitudes: Vec<f64>) -> Result<Self> {
        if num_qubits == 0 || amplitudes.len() != 1 << num_qubits {
            return Err(Error::Structure(format!(
                "{} amplitudes do not describe {} qubits",
                amplitudes.len(),
                num_qubits
            )));
        }
        let norm: f64 = amplitudes.iter().map(|a| a * a).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("statevector norm^2 = {norm}, expected 1")));
        }
        Ok(Self { amplitudes, num_qubits })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    fn ry(&mut self, qubit: usize, angle: f64) {
        let (s, c) = angle.sin_cos();
        let bit = 1 << qubit;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let j = i | bit;
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[j];
                self.amplitudes[i] = c * a0 - s * a1;
                self.amplitudes[j] = s * a0 + c * a1;
            }
        }
    }

    fn cnot(&mut self, control: usize, target: usize) {
        let cbit = 1 << control;
        let tbit = 1 << target;
        for i in 0..self.amplitudes.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amplitudes.swap(i, i | tbit);
            }
        }
    }

    fn cz(&mut self, a: usize, b: usize) {
        let mask = (1 << a) | (1 << b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }

    fn hadamard(&mut self, qubit: usize) {
        let bit = 1 << qubit;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..self.amplitudes.len() {
            if i & bit == 0 {
                let j = i | bit;
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[j];
                self.amplitudes[i] = r * (a0 + a1);
                self.amplitudes[j] = r * (a0 - a1);
            }
        }
    }

    /// Apply a real 4x4 matrix on the ordered qubit pair `(upper, lower)`. The
    /// local basis is `|upper lower>` with `upper` the most significant bit.
    pub fn apply_two_qubit_matrix(&mut self, upper: usize, lower: usize, m: &[[f64; 4]; 4]) {
        let ub = 1 << upper;
        let lb = 1 << lower;
        for i in 0..self.amplitudes.len() {
            if i & ub == 0 && i & lb == 0 {
                let idx = [i, i | lb, i | ub, i | ub | lb];
                let v = idx.map(|k| self.amplitudes[k]);
                for r in 0..4 {
                    self.amplitudes[idx[r]] = (0..4).map(|c| m[r][c] * v[c]).sum();
                }
            }
        }
    }
}

/// Matrix of the composite excitation-transfer gate in the `|upper lower>`
/// basis. Acting on `μ|00> + μ'|10>` it yields `μ|00> + μ' sinθ|01> + μ' cosθ|10>`.
pub fn fy_matrix(theta: f64) -> [[f64; 4]; 4] {
    let (s, c) = theta.sin_cos();
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, s, -c],
        [0.0, 0.0, c, s],
        [0.0, 1.0, 0.0, 0.0],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// `Ry(params[param])` on `qubit`.
    Ry {
        qubit: usize,
        param: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
    Cz {
        a: usize,
        b: usize,
    },
    H {
        qubit: usize,
    },
    /// Composite gate `Ry_lower(-θ/2) · CZ · Ry_lower(+θ/2) · CNOT(lower → upper)`
    /// with `θ = params[param]`; moves a single excitation from `upper` to `lower`.
    Fy {
        upper: usize,
        lower: usize,
        param: usize,
    },
}

impl Gate {
    fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { qubit, .. } | Gate::H { qubit } => vec![qubit],
            Gate::Cnot { control, target } => vec![control, target],
            Gate::Cz { a, b } => vec![a, b],
            Gate::Fy { upper, lower, .. } => vec![upper, lower],
        }
    }

    fn param(&self) -> Option<usize> {
        match *self {
            Gate::Ry { param, .. } | Gate::Fy { param, .. } => Some(param),
            _ => None,
        }
    }
}

/// One physical Ry rotation inside a circuit. Its angle is
/// `scale * params[param]` (plus any shift applied during differentiation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub gate: usize,
    pub param: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    params: Vec<f64>,
    slots: Vec<Slot>,
    first_slot: Vec<usize>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            ..Default::default()
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Register a new parameter and return its id.
    pub fn add_param(&mut self, value: f64) -> usize {
        self.params.push(value);
        self.params.len() - 1
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Structure(format!(
                "circuit has {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut c = self.clone();
        c.set_params(params)?;
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let qubits = gate.qubits();
        if let Some(&q) = qubits.iter().find(|&&q| q >= self.num_qubits) {
            return Err(Error::Structure(format!(
                "qubit index {q} out of range for {} qubits",
                self.num_qubits
            )));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::Structure(format!(
                "two-qubit gate on repeated qubit {}",
                qubits[0]
            )));
        }
        if let Some(p) = gate.param() {
            if p >= self.params.len() {
                return Err(Error::Structure(format!("gate references unknown parameter {p}")));
            }
        }
        let g = self.gates.len();
        self.first_slot.push(self.slots.len());
        match gate {
            Gate::Ry { param, .. } => self.slots.push(Slot {
                gate: g,
                param,
                scale: 1.0,
            }),
            Gate::Fy { param, .. } => {
                self.slots.push(Slot {
                    gate: g,
                    param,
                    scale: -0.5,
                });
                self.slots.push(Slot {
                    gate: g,
                    param,
                    scale: 0.5,
                });
            }
            _ => {}
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Indices of the rotation slots driven by `param`.
    pub fn slots_of(&self, param: usize) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&s| self.slots[s].param == param)
            .collect()
    }

    /// Run from `start` using `params`, adding `shifts[k].1` to the angle of
    /// rotation slot `shifts[k].0`.
    pub fn run_from(&self, start: &Statevector, params: &[f64], shifts: &[(usize, f64)]) -> Statevector {
        debug_assert_eq!(start.num_qubits, self.num_qubits);
        debug_assert_eq!(params.len(), self.params.len());
        let mut state = start.clone();
        let angle = |slot: usize| -> f64 {
            let s = &self.slots[slot];
            let extra: f64 = shifts.iter().filter(|(k, _)| *k == slot).map(|(_, d)| d).sum();
            s.scale * params[s.param] + extra
        };
        for (g, gate) in self.gates.iter().enumerate() {
            match *gate {
                Gate::Ry { qubit, .. } => state.ry(qubit, angle(self.first_slot[g])),
                Gate::Cnot { control, target } => state.cnot(control, target),
                Gate::Cz { a, b } => state.cz(a, b),
                Gate::H { qubit } => state.hadamard(qubit),
                Gate::Fy { upper, lower, .. } => {
                    let s0 = self.first_slot[g];
                    state.ry(lower, angle(s0));
                    state.cz(upper, lower);
                    state.ry(lower, angle(s0 + 1));
                    state.cnot(lower, upper);
                }
            }
        }
        state
    }

    /// Run from `|0...0>`.
    pub fn run_with(&self, params: &[f64], shifts: &[(usize, f64)]) -> Statevector {
        self.run_from(&Statevector::zero(self.num_qubits), params, shifts)
    }

    pub fn run(&self) -> Statevector {
        self.run_with(&self.params, &[])
    }
}

/// Apply `circuit` (with its current parameter table) to `start`.
pub fn apply_circuit(circuit: &Circuit, start: &Statevector) -> Result<Statevector> {
    if circuit.num_qubits != start.num_qubits {
        return Err(Error::Structure(format!(
            "circuit acts on {} qubits, state has {}",
            circuit.num_qubits, start.num_qubits
        )));
    }
    Ok(circuit.run_from(start, &circuit.params, &[]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Z,
}

/// Tensor product of at most two single-qubit X/Z factors (identity elsewhere).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliString {
    ops: Vec<(usize, Axis)>,
    x_mask: usize,
    z_mask: usize,
}

impl PauliString {
    pub fn new(ops: Vec<(usize, Axis)>) -> Result<Self> {
        if ops.len() > 2 {
            return Err(Error::Structure(format!(
                "Pauli string has {} factors, at most 2 supported",
                ops.len()
            )));
        }
        let mut x_mask = 0;
        let mut z_mask = 0;
        for &(q, axis) in &ops {
            if q >= usize::BITS as usize - 1 || (x_mask | z_mask) & (1 << q) != 0 {
                return Err(Error::Structure(format!(
                    "repeated or invalid qubit {q} in Pauli string"
                )));
            }
            match axis {
                Axis::X => x_mask |= 1 << q,
                Axis::Z => z_mask |= 1 << q,
            }
        }
        Ok(Self { ops, x_mask, z_mask })
    }

    pub fn identity() -> Self {
        Self {
            ops: Vec::new(),
            x_mask: 0,
            z_mask: 0,
        }
    }

    pub fn x(q: usize) -> Self {
        Self::new(vec![(q, Axis::X)]).expect("valid single-qubit string")
    }

    pub fn z(q: usize) -> Self {
        Self::new(vec![(q, Axis::Z)]).expect("valid single-qubit string")
    }

    pub fn two(a: usize, pa: Axis, b: usize, pb: Axis) -> Result<Self> {
        Self::new(vec![(a, pa), (b, pb)])
    }

    pub fn ops(&self) -> &[(usize, Axis)] {
        &self.ops
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.ops.iter().map(|&(q, _)| q).max()
    }

    /// `P|i> = sign * |j>`; returns `(j, sign)`.
    pub fn act(&self, i: usize) -> (usize, f64) {
        let sign = if (i & self.z_mask).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        (i ^ self.x_mask, sign)
    }

    fn expectation_unchecked(&self, amps: &[f64]) -> f64 {
        amps.iter()
            .enumerate()
            .map(|(i, &a)| {
                let (j, sign) = self.act(i);
                sign * a * amps[j]
            })
            .sum()
    }
}

/// Exact `<ψ|P|ψ>`.
pub fn expectation(state: &Statevector, op: &PauliString) -> Result<f64> {
    check_fits(op, state.num_qubits)?;
    Ok(op.expectation_unchecked(&state.amplitudes))
}

/// All expectation values from one prepared state.
pub fn expectations(state: &Statevector, ops: &[PauliString]) -> Vec<f64> {
    ops.iter()
        .map(|op| op.expectation_unchecked(&state.amplitudes))
        .collect()
}

fn check_fits(op: &PauliString, num_qubits: usize) -> Result<()> {
    match op.max_qubit() {
        Some(q) if q >= num_qubits => Err(Error::Structure(format!(
            "Pauli factor on qubit {q} exceeds {num_qubits}-qubit state"
        ))),
        _ => Ok(()),
    }
}

/// Weighted sum of Pauli strings plus a constant.
#[derive(Debug, Clone, Default)]
pub struct Observable {
    pub constant: f64,
    pub terms: Vec<(f64, PauliString)>,
}

impl Observable {
    pub fn new(constant: f64, terms: Vec<(f64, PauliString)>) -> Self {
        Self { constant, terms }
    }

    pub fn single(op: PauliString) -> Self {
        Self::new(0.0, vec![(1.0, op)])
    }

    pub fn evaluate(&self, state: &Statevector) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(w, op)| w * op.expectation_unchecked(&state.amplitudes))
                .sum::<f64>()
    }

    fn check(&self, num_qubits: usize) -> Result<()> {
        self.terms.iter().try_for_each(|(_, op)| check_fits(op, num_qubits))
    }
}

fn check_param(circuit: &Circuit, param: usize) -> Result<()> {
    if param >= circuit.num_params() {
        return Err(Error::Structure(format!(
            "unknown parameter id {param} ({} parameters)",
            circuit.num_params()
        )));
    }
    Ok(())
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// `∂/∂params[param]` of a vector-valued observable by the ±π/4 shift rule,
/// summed over every rotation slot driven by the parameter with its chain-rule
/// scale. Evaluated at `params`, starting from `|0...0>`.
pub fn shift_gradient_by<F>(circuit: &Circuit, params: &[f64], param: usize, f: &F) -> Vec<f64>
where
    F: Fn(&Statevector) -> Vec<f64> + Sync,
{
    let mut acc: Option<Vec<f64>> = None;
    for slot in circuit.slots_of(param) {
        let scale = circuit.slots[slot].scale;
        let plus = f(&circuit.run_with(params, &[(slot, FRAC_PI_4)]));
        let minus = f(&circuit.run_with(params, &[(slot, -FRAC_PI_4)]));
        let acc = acc.get_or_insert_with(|| vec![0.0; plus.len()]);
        axpy(acc, scale, &plus);
        axpy(acc, -scale, &minus);
    }
    acc.unwrap_or_else(|| vec![0.0; f(&circuit.run_with(params, &[])).len()])
}

/// Gradients with respect to several parameters, evaluated in parallel.
pub fn shift_gradients_by<F>(circuit: &Circuit, params: &[f64], ids: &[usize], f: &F) -> Vec<Vec<f64>>
where
    F: Fn(&Statevector) -> Vec<f64> + Sync,
{
    ids.par_iter()
        .map(|&p| shift_gradient_by(circuit, params, p, f))
        .collect()
}

/// `∂²/∂params[i]∂params[j]` by the shift stencils: `O(+π/2) − 2O + O(−π/2)`
/// for a slot paired with itself, the four-point ±π/4 formula for distinct slots.
pub fn shift_hessian_by<F>(circuit: &Circuit, params: &[f64], i: usize, j: usize, f: &F) -> Vec<f64>
where
    F: Fn(&Statevector) -> Vec<f64> + Sync,
{
    let mut acc: Option<Vec<f64>> = None;
    let mut center: Option<Vec<f64>> = None;
    for si in circuit.slots_of(i) {
        for sj in circuit.slots_of(j) {
            let w = circuit.slots[si].scale * circuit.slots[sj].scale;
            if si == sj {
                let c = center.get_or_insert_with(|| f(&circuit.run_with(params, &[]))).clone();
                let p = f(&circuit.run_with(params, &[(si, FRAC_PI_2)]));
                let m = f(&circuit.run_with(params, &[(si, -FRAC_PI_2)]));
                let acc = acc.get_or_insert_with(|| vec![0.0; c.len()]);
                axpy(acc, w, &p);
                axpy(acc, -2.0 * w, &c);
                axpy(acc, w, &m);
            } else {
                for (a, b, sign) in [
                    (FRAC_PI_4, FRAC_PI_4, 1.0),
                    (FRAC_PI_4, -FRAC_PI_4, -1.0),
                    (-FRAC_PI_4, FRAC_PI_4, -1.0),
                    (-FRAC_PI_4, -FRAC_PI_4, 1.0),
                ] {
                    let v = f(&circuit.run_with(params, &[(si, a), (sj, b)]));
                    let acc = acc.get_or_insert_with(|| vec![0.0; v.len()]);
                    axpy(acc, sign * w, &v);
                }
            }
        }
    }
    acc.unwrap_or_else(|| vec![0.0; f(&circuit.run_with(params, &[])).len()])
}

/// Exact first derivative of `observable` with respect to parameter `param`.
pub fn shift_gradient(circuit: &Circuit, observable: &Observable, param: usize) -> Result<f64> {
    check_param(circuit, param)?;
    observable.check(circuit.num_qubits)?;
    let f = |s: &Statevector| vec![observable.evaluate(s)];
    Ok(shift_gradient_by(circuit, &circuit.params, param, &f)[0])
}

/// Exact second derivative of `observable` with respect to parameters `i`, `j`.
pub fn shift_hessian(circuit: &Circuit, observable: &Observable, i: usize, j: usize) -> Result<f64> {
    check_param(circuit, i)?;
    check_param(circuit, j)?;
    observable.check(circuit.num_qubits)?;
    let f = |s: &Statevector| vec![observable.evaluate(s)];
    Ok(shift_hessian_by(circuit, &circuit.params, i, j, &f)[0])
}
