//! Acceptance checks, one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

mod common;

use std::time::{Duration, Instant};

use common::{max_dev, random_circuit, random_elements, random_observable, rng};
use mcvqe_core::aiem::{build_cis, build_pauli, cis_config};
use mcvqe_core::cli::{validate_layer, Deviation};
use mcvqe_core::dynamics::{run_dynamics, DynamicsOptions};
use mcvqe_core::fixtures;
use mcvqe_core::mcvqe::{se_residuals, EntanglerKind};
use mcvqe_core::oracle::monomer_basis_hamiltonian;
use mcvqe_core::pipeline::{flatten, solve_energies, system_gradient, Layer, Method, Solver, SolverConfig, System};
use mcvqe_core::response::{density_magnitude, ResponseToggles};
use mcvqe_core::sim::{shift_gradient, shift_hessian, Circuit, Observable};
use rand::Rng;

const YY: Method = Method::McVqe(ResponseToggles::FULL);
const DEFICIENT: [Method; 3] = [
    Method::McVqe(ResponseToggles { vqe: false, crs: false }),
    Method::McVqe(ResponseToggles { vqe: false, crs: true }),
    Method::McVqe(ResponseToggles { vqe: true, crs: false }),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn energy(c: &Circuit, obs: &Observable, params: &[f64]) -> f64 {
    obs.evaluate(&c.run_with(params, &[]))
}

fn shift_rules() -> Outcome {
    let mut rng = rng(11);
    let (mut worst_g, mut worst_h) = (0.0_f64, 0.0_f64);
    for _ in 0..50 {
        let n = rng.gen_range(1..=5);
        let np = rng.gen_range(1..=12);
        let c = random_circuit(&mut rng, n, np);
        let obs = random_observable(&mut rng, n, 6);
        let x = c.params().to_vec();
        let at = |i: usize, di: f64, j: usize, dj: f64| {
            let mut p = x.clone();
            p[i] += di;
            p[j] += dj;
            energy(&c, &obs, &p)
        };
        for i in 0..np {
            let h = 1e-6;
            let fd = (at(i, h, i, 0.0) - at(i, -h, i, 0.0)) / (2.0 * h);
            worst_g = worst_g.max((shift_gradient(&c, &obs, i).unwrap() - fd).abs());
            for j in 0..=i {
                let h = 1e-4;
                let fd = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
                worst_h = worst_h.max((shift_hessian(&c, &obs, i, j).unwrap() - fd).abs());
            }
        }
    }
    check(
        worst_g <= 1e-8 && worst_h <= 1e-6,
        format!("gradient dev {worst_g:.2e} (tol 1e-8), Hessian dev {worst_h:.2e} (tol 1e-6)"),
    )
}

fn hamiltonian_equivalence() -> Outcome {
    let mut rng = rng(12);
    let (mut dense_dev, mut cis_dev) = (0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let n = rng.gen_range(1..=4);
        let (el, pairs) = random_elements(&mut rng, n);
        let pauli = build_pauli(&el, &pairs).unwrap();
        let dense = pauli.dense();
        dense_dev = dense_dev.max((&dense - monomer_basis_hamiltonian(&el, &pairs)).amax());
        let cis = build_cis(&pauli).matrix;
        for i in 0..=n {
            for j in 0..=n {
                cis_dev = cis_dev.max((cis[(i, j)] - dense[(cis_config(i), cis_config(j))]).abs());
            }
        }
    }
    check(
        dense_dev <= 1e-12 && cis_dev <= 1e-12,
        format!("dense dev {dense_dev:.2e}, CIS projection dev {cis_dev:.2e} (tol 1e-12)"),
    )
}

fn row(rows: &[Deviation], m: Method) -> f64 {
    let name = m.to_string();
    rows.iter()
        .find(|r| r.method == name && r.class == "all")
        .map(|r| r.max_abs)
        .expect("row present")
}

fn max_class(rows: &[Deviation], m: Method) -> f64 {
    let name = m.to_string();
    rows.iter()
        .filter(|r| r.method == name && r.class != "all")
        .map(|r| r.max_abs)
        .fold(0.0, f64::max)
}

fn layer_rows(layer: Layer) -> Vec<Deviation> {
    let system = fixtures::dimer();
    validate_layer(&system, &SolverConfig::default(), 1, layer, layer.default_step()).unwrap()
}

fn summary(rows: &[Deviation]) -> String {
    Method::all()
        .into_iter()
        .map(|m| format!("{m} {:.1e}", row(rows, m)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn pauli_table() -> Outcome {
    let rows = layer_rows(Layer::Pauli);
    let pass = row(&rows, YY) <= 1e-7
        && row(&rows, Method::Fci) <= 1e-8
        && row(&rows, Method::Cis) <= 1e-8
        && DEFICIENT.iter().all(|&m| row(&rows, m) >= 1e-3);
    check(pass, summary(&rows))
}

fn property_table() -> Outcome {
    let rows = layer_rows(Layer::Property);
    let pass = row(&rows, YY) <= 1e-7 && DEFICIENT.iter().all(|&m| max_class(&rows, m) >= 1e-4);
    check(pass, summary(&rows))
}

fn nuclear_table() -> Outcome {
    let rows = layer_rows(Layer::Nuclear);
    let yy = row(&rows, YY);
    let pass = yy <= 1e-5
        && row(&rows, Method::Fci) <= 1e-5
        && row(&rows, Method::Cis) <= 1e-5
        && DEFICIENT.iter().all(|&m| row(&rows, m) >= 10.0 * yy);
    check(pass, summary(&rows))
}

fn limits() -> Outcome {
    // FCI limit: one monomer, both states in the CRS, the entangler cannot
    // improve on exact eigenstates and every response term vanishes
    let one = System::parse_synthetic(
        r#"{"atoms": [{"monomer": 0, "xyz": [0, 0, 0], "mass": 12.0},
                      {"monomer": 0, "xyz": [2.3, 0.4, 0.1], "mass": 14.0}],
            "monomers": [{"k_h": 0.06, "k_p": 0.05, "d_h": 2.5, "d_p": 2.65, "delta_e": 0.01,
                          "m_h": 1.1, "m_p": -0.4, "m_t": 0.9}]}"#,
    )
    .unwrap();
    let mut fci_limit = 0.0_f64;
    for state in 0..2 {
        let g = system_gradient(&one, Solver::McVqe, &SolverConfig::default(), state, None).unwrap();
        let d = g.electronic.densities(YY).unwrap().to_vec();
        let u = g
            .electronic
            .densities(Method::McVqe(ResponseToggles::NONE))
            .unwrap()
            .to_vec();
        fci_limit = fci_limit.max(max_dev(&d, &u));
    }

    // CIS limit: identity entangler with every CIS state in the CRS
    let dimer = fixtures::dimer();
    let cfg = SolverConfig {
        ntheta: 3,
        entangler: EntanglerKind::Identity,
        ..Default::default()
    };
    let mut cis_limit = 0.0_f64;
    for state in 0..3 {
        let v = system_gradient(&dimer, Solver::McVqe, &cfg, state, None).unwrap();
        let c = system_gradient(&dimer, Solver::Cis, &cfg, state, None).unwrap();
        cis_limit = cis_limit.max(max_dev(
            &flatten(&v.nuclear(&dimer, YY).unwrap()),
            &flatten(&c.nuclear(&dimer, Method::Cis).unwrap()),
        ));
        cis_limit = cis_limit.max(max_dev(
            &v.electronic.densities(YY).unwrap().to_vec(),
            &c.electronic.densities(Method::Cis).unwrap().to_vec(),
        ));
    }

    let mut se = 0.0_f64;
    for (system, cfg) in [
        (fixtures::dimer(), SolverConfig::default()),
        (
            fixtures::dimer(),
            SolverConfig {
                ntheta: 3,
                entangler: EntanglerKind::So4Chain { layers: 1 },
                ..Default::default()
            },
        ),
    ] {
        let g = system_gradient(&system, Solver::McVqe, &cfg, 0, None).unwrap();
        let s = &g.electronic.mcvqe.as_ref().unwrap().solution;
        se = se.max(
            se_residuals(&s.subspace_h, &s.v, &s.energies)
                .into_iter()
                .fold(0.0, f64::max),
        );
    }
    check(
        fci_limit <= 1e-9 && cis_limit <= 1e-9 && se <= 1e-10,
        format!("FCI relaxed-unrelaxed {fci_limit:.2e}, identity vs CIS {cis_limit:.2e}, SE residual {se:.2e}"),
    )
}

fn excursion(system: &System, method: Method, dt: f64, steps: usize) -> f64 {
    let opts = DynamicsOptions {
        state: 1,
        steps,
        dt,
        temperature: 300.0,
        seed: 2024,
    };
    let t = run_dynamics(system, method, &SolverConfig::default(), &opts).unwrap();
    assert!(t.failure.is_none(), "{method} trajectory failed: {:?}", t.failure);
    t.drift().max_excursion
}

fn dynamics_pair() -> Outcome {
    let system = fixtures::dimer();
    let fci = excursion(&system, Method::Fci, 20.0, 300);
    let yy = excursion(&system, YY, 20.0, 300);
    let nn = excursion(&system, Method::McVqe(ResponseToggles::NONE), 20.0, 300);
    check(
        yy <= 10.0 * fci && nn >= 10.0 * yy,
        format!("max |E_tot - mean|: FCI {fci:.2e}, VQE(Y,Y) {yy:.2e}, VQE(N,N) {nn:.2e}"),
    )
}

fn dt_scaling() -> Outcome {
    let system = fixtures::dimer();
    let coarse = excursion(&system, Method::Fci, 20.0, 300);
    let fine = excursion(&system, Method::Fci, 10.0, 600);
    let ratio = coarse / fine;
    check(
        (3.0..=5.0).contains(&ratio),
        format!("excursion dt=20 {coarse:.3e}, dt=10 {fine:.3e}, ratio {ratio:.3}"),
    )
}

fn hexamer() -> Outcome {
    let system = fixtures::hexamer();
    let state = 1;
    let fci = solve_energies(&system.pauli().unwrap(), Solver::Fci, &SolverConfig::default(), None).unwrap();
    let mut errors = Vec::new();
    let mut small_response = f64::INFINITY;
    for entangler in [EntanglerKind::Truncated, EntanglerKind::So4Chain { layers: 2 }] {
        let cfg = SolverConfig {
            entangler,
            ..Default::default()
        };
        let g = system_gradient(&system, Solver::McVqe, &cfg, state, None).unwrap();
        let grad = g.nuclear(&system, YY).unwrap();
        assert!(flatten(&grad).iter().all(|x| x.is_finite()));
        let m = g.electronic.mcvqe.as_ref().unwrap();
        small_response = small_response
            .min(density_magnitude(&m.densities.vqe))
            .min(density_magnitude(&m.densities.crs()));
        errors.push((g.energy() - fci.energies[state]).abs());
    }
    let improvement = errors[0] / errors[1];
    check(
        improvement >= 2.0 && small_response >= 1e-4,
        format!(
            "|E_1 - FCI|: truncated {:.3e}, so4 {:.3e} ({improvement:.1}x); smallest response magnitude {small_response:.2e}",
            errors[0], errors[1]
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 9] = [
        ("shift rules vs finite differences", shift_rules, 10),
        ("Hamiltonian equivalence", hamiltonian_equivalence, 5),
        ("Pauli densities vs FD", pauli_table, 60),
        ("monomer-property densities vs FD", property_table, 60),
        ("nuclear gradient vs FD", nuclear_table, 120),
        ("variational and limit identities", limits, 600),
        ("dynamics energy conservation", dynamics_pair, 600),
        ("time-step scaling of drift", dt_scaling, 600),
        ("hexamer entangler comparison", hexamer, 900),
    ];
    let mut failed = 0;
    for (k, (name, f, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            check(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} [{name}]: {} - {} ({:.1}s, budget {budget}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
