//! Adiabatic molecular dynamics on one electronic surface: Maxwellian
//! initial velocities, velocity Verlet, and total-energy diagnostics.

use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Geometry;
use crate::pipeline::{system_gradient, Method, SolverConfig, System};

pub const KB_HARTREE_PER_KELVIN: f64 = 3.166811563e-6;
pub const ELECTRON_MASSES_PER_AMU: f64 = 1822.888486;

/// Atomic masses in electron masses.
pub fn atomic_masses(geometry: &Geometry) -> Vec<f64> {
    geometry.masses().iter().map(|m| m * ELECTRON_MASSES_PER_AMU).collect()
}

/// Per-component Gaussian velocities with variance `k_B T / m`.
pub fn maxwell_velocities(geometry: &Geometry, temperature: f64, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::Validation(format!(
            "temperature {temperature} must be non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    Ok(atomic_masses(geometry)
        .into_iter()
        .map(|m| {
            let s = (KB_HARTREE_PER_KELVIN * temperature / m).sqrt();
            Vector3::new(unit.sample(&mut rng), unit.sample(&mut rng), unit.sample(&mut rng)) * s
        })
        .collect())
}

pub fn kinetic_energy(masses: &[f64], velocities: &[Vector3<f64>]) -> f64 {
    masses
        .iter()
        .zip(velocities)
        .map(|(m, v)| 0.5 * m * v.norm_squared())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub forces: Vec<Vector3<f64>>,
}

/// One velocity Verlet step reusing the incoming forces. `force` returns the
/// forces at the new positions together with any payload the caller wants
/// to keep (energies, optimizer state).
pub fn velocity_verlet_step<E, F>(phase: &Phase, masses: &[f64], dt: f64, mut force: F) -> Result<(Phase, E)>
where
    F: FnMut(&[Vector3<f64>]) -> Result<(Vec<Vector3<f64>>, E)>,
{
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("time step {dt} must be positive")));
    }
    let half: Vec<Vector3<f64>> = phase
        .velocities
        .iter()
        .zip(&phase.forces)
        .zip(masses)
        .map(|((v, f), m)| v + f * (0.5 * dt / m))
        .collect();
    let positions: Vec<Vector3<f64>> = phase.positions.iter().zip(&half).map(|(x, v)| x + v * dt).collect();
    let (forces, payload) = force(&positions)?;
    let velocities = half
        .iter()
        .zip(&forces)
        .zip(masses)
        .map(|((v, f), m)| v + f * (0.5 * dt / m))
        .collect();
    Ok((
        Phase {
            positions,
            velocities,
            forces,
        },
        payload,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DynamicsOptions {
    pub state: usize,
    pub steps: usize,
    /// a.u. of time
    pub dt: f64,
    /// K
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self {
            state: 1,
            steps: 300,
            dt: 20.0,
            temperature: 300.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub step: usize,
    pub time: f64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub energies: Vec<f64>,
    pub potential: f64,
    pub kinetic: f64,
    pub total: f64,
    /// SA-VQE iterations spent on this frame (0 for the oracles).
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftStats {
    pub mean_total: f64,
    /// `max |E_tot − mean|`
    pub max_excursion: f64,
    /// `E_tot(last) − E_tot(0)`
    pub final_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<TrajectoryFrame>,
    pub failure: Option<Failure>,
}

impl Trajectory {
    pub fn drift(&self) -> DriftStats {
        let totals: Vec<f64> = self.frames.iter().map(|f| f.total).collect();
        let mean = totals.iter().sum::<f64>() / totals.len().max(1) as f64;
        DriftStats {
            mean_total: mean,
            max_excursion: totals.iter().map(|e| (e - mean).abs()).fold(0.0, f64::max),
            final_drift: totals.last().zip(totals.first()).map_or(0.0, |(l, f)| l - f),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.frames.first() else {
            return Ok(());
        };
        let mut header: Vec<String> = ["step", "t_au", "E_kin", "E_pot", "E_tot"].map(String::from).to_vec();
        header.extend((0..first.energies.len()).map(|i| format!("E_{i}")));
        for a in 0..first.positions.len() {
            header.extend(["x", "y", "z"].iter().map(|c| format!("{c}{a}")));
        }
        w.write_record(&header).map_err(csv_error)?;
        let num = |x: f64| format!("{x:.16e}");
        for f in &self.frames {
            let mut row = vec![
                f.step.to_string(),
                num(f.time),
                num(f.kinetic),
                num(f.potential),
                num(f.total),
            ];
            row.extend(f.energies.iter().map(|&e| num(e)));
            row.extend(f.positions.iter().flat_map(|p| p.iter().map(|&x| num(x))));
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

struct Surface {
    energies: Vec<f64>,
    theta: Option<Vec<f64>>,
    iterations: usize,
}

/// Run NVE dynamics on the surface of `opts.state`. SA-VQE is warm-started
/// from the previous step's parameters. A solver failure mid-run ends the
/// trajectory and is recorded rather than returned as an error.
pub fn run_dynamics(system: &System, method: Method, cfg: &SolverConfig, opts: &DynamicsOptions) -> Result<Trajectory> {
    let masses = atomic_masses(&system.geometry);
    let mut warm: Option<Vec<f64>> = None;
    let evaluate = |positions: &[Vector3<f64>], warm: &mut Option<Vec<f64>>| -> Result<(Vec<Vector3<f64>>, Surface)> {
        let s = system.at_positions(positions)?;
        let g = system_gradient(&s, method.solver(), cfg, opts.state, warm.as_deref())?;
        let grad = g.nuclear(&s, method)?;
        let theta = g.electronic.theta().map(<[f64]>::to_vec);
        *warm = theta.clone();
        Ok((
            grad.iter().map(|x| -x).collect(),
            Surface {
                energies: g.electronic.energies.clone(),
                theta,
                iterations: g.electronic.mcvqe.as_ref().map_or(0, |m| m.solution.iterations),
            },
        ))
    };

    let positions = system.geometry.positions();
    let velocities = maxwell_velocities(&system.geometry, opts.temperature, opts.seed)?;
    let (forces, surface) = evaluate(&positions, &mut warm)?;
    let frame = |step: usize, phase: &Phase, s: &Surface| {
        let kinetic = kinetic_energy(&masses, &phase.velocities);
        let potential = s.energies[opts.state];
        TrajectoryFrame {
            step,
            time: step as f64 * opts.dt,
            positions: phase.positions.clone(),
            velocities: phase.velocities.clone(),
            energies: s.energies.clone(),
            potential,
            kinetic,
            total: kinetic + potential,
            iterations: s.iterations,
        }
    };
    let mut phase = Phase {
        positions,
        velocities,
        forces,
    };
    let mut frames = vec![frame(0, &phase, &surface)];
    let mut failure = None;
    for step in 1..=opts.steps {
        match velocity_verlet_step(&phase, &masses, opts.dt, |x| evaluate(x, &mut warm)) {
            Ok((next, s)) => {
                log::debug!(
                    "step {step}: {} SA-VQE iterations, warm {}",
                    s.iterations,
                    s.theta.is_some()
                );
                phase = next;
                frames.push(frame(step, &phase, &s));
            }
            Err(e) => {
                log::warn!("dynamics stopped at step {step}: {e}");
                failure = Some(Failure {
                    step,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(Trajectory { frames, failure })
}
