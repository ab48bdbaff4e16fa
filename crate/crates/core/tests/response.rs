mod common;

use common::{max_dev, rng};
use mcvqe_core::aiem::{build_cis, PauliVector};
use mcvqe_core::fixtures;
use mcvqe_core::mcvqe::{solve_mcvqe, EntanglerKind, McVqeProblem, McVqeSolution, OptimizerOptions};
use mcvqe_core::pipeline::{flatten, system_gradient, Method, Solver, SolverConfig, System};
use mcvqe_core::response::{
    cp_cis_lhs, cp_cis_rhs1, cp_sa_vqe_lhs, cp_sa_vqe_rhs, crs_response_density, density_magnitude,
    monomer_property_densities, nuclear_gradient, solve_cp_cis, solve_cp_sa_vqe, state_densities, vqe_response_density,
    MonomerDensities, ResponseToggles,
};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

fn dimer_solution(kind: EntanglerKind) -> (McVqeProblem, McVqeSolution) {
    let p = McVqeProblem::new(fixtures::dimer().pauli().unwrap(), 2, kind).unwrap();
    let sol = solve_mcvqe(&p, None, &OptimizerOptions::default()).unwrap();
    (p, sol)
}

fn random_direction(r: &mut impl Rng, like: &PauliVector) -> PauliVector {
    let mut v: Vec<f64> = (0..like.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    v[0] = 0.0;
    PauliVector::from_vec(like.num_monomers(), like.num_pairs(), &v)
}

#[test]
fn vqe_rhs_matches_fd_and_is_nonzero() {
    let (p, sol) = dimer_solution(EntanglerKind::Truncated);
    let h = 1e-6;
    for state in 0..2 {
        let g = cp_sa_vqe_rhs(&p, &sol, state);
        let gamma = sol.gamma_column(state);
        for k in 0..g.len() {
            let at = |s: f64| {
                let mut t = sol.theta.clone();
                t[k] += s;
                p.epsilon(&t, &gamma)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-8, "state {state} g{k}: {} vs {fd}", g[k]);
        }
        // the state energy is not stationary, only the average is
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() > 1e-3);
    }
}

#[test]
fn sa_hessian_matches_fd_and_is_positive() {
    for kind in [EntanglerKind::Truncated, EntanglerKind::So4Chain { layers: 1 }] {
        let (p, sol) = dimer_solution(kind);
        let hess = cp_sa_vqe_lhs(&p, &sol.theta).unwrap();
        assert!(hess.asymmetry < 1e-12);
        assert!(hess.min_eigenvalue >= -1e-8);
        let n = sol.theta.len();
        let h = 1e-4;
        let at = |i: usize, di: f64, j: usize, dj: f64| {
            let mut t = sol.theta.clone();
            t[i] += di;
            t[j] += dj;
            p.sa_energy(&t)
        };
        for i in 0..n {
            for j in 0..n {
                let fd = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
                let got = hess.matrix[(i, j)] - if i == j { hess.shift } else { 0.0 };
                assert!((got - fd).abs() < 1e-6, "{kind:?} H[{i},{j}]: {got} vs {fd}");
            }
        }
    }
}

#[test]
fn vqe_solve_matches_inverse() {
    let (p, sol) = dimer_solution(EntanglerKind::So4Chain { layers: 1 });
    let hess = cp_sa_vqe_lhs(&p, &sol.theta).unwrap();
    let g = cp_sa_vqe_rhs(&p, &sol, 1);
    let x = solve_cp_sa_vqe(&hess, &g).unwrap();
    let want = -(hess.matrix.clone().try_inverse().unwrap() * DVector::from_column_slice(&g));
    assert!(max_dev(&x, want.as_slice()) < 1e-10);
}

#[test]
fn vqe_density_matches_directional_fd() {
    let (p, sol) = dimer_solution(EntanglerKind::Truncated);
    let hess = cp_sa_vqe_lhs(&p, &sol.theta).unwrap();
    let theta_tilde = solve_cp_sa_vqe(&hess, &cp_sa_vqe_rhs(&p, &sol, 1)).unwrap();
    let gamma = vqe_response_density(&p, &sol.theta, &theta_tilde);
    assert!(density_magnitude(&gamma) > 1e-3);
    let mut r = rng(41);
    for _ in 0..5 {
        let dir = random_direction(&mut r, &p.pauli.coeffs);
        // state-averaged energy of the perturbation, moved along θ̃
        let avg = |t: &[f64]| {
            (0..2)
                .map(|xi| dir.contract(&p.lambdas(t, &p.cis.column(xi))))
                .sum::<f64>()
                / 2.0
        };
        let h = 1e-6;
        let shifted = |s: f64| -> Vec<f64> { sol.theta.iter().zip(&theta_tilde).map(|(a, b)| a + s * b).collect() };
        let fd = (avg(&shifted(h)) - avg(&shifted(-h))) / (2.0 * h);
        assert!((dir.contract(&gamma) - fd).abs() < 1e-8);
    }
}

#[test]
fn cp_cis_block_identities() {
    let (p, _) = dimer_solution(EntanglerKind::Truncated);
    let blocks = cp_cis_lhs(&p.cis_h.matrix, &p.cis);
    for (xi, a) in blocks.iter().enumerate() {
        let e = p.cis.energies[xi];
        for j in 0..p.cis.all_vectors.ncols() {
            let u = p.cis.all_vectors.column(j);
            let want = if j == xi { -2.0 * e } else { p.cis.all_energies[j] - e };
            assert!((a * u - u * want).amax() < 1e-13);
        }
    }
}

#[test]
fn cp_cis_solution_satisfies_the_blocks() {
    let (p, _) = dimer_solution(EntanglerKind::Truncated);
    let blocks = cp_cis_lhs(&p.cis_h.matrix, &p.cis);
    let mut r = rng(42);
    let g = DMatrix::from_fn(3, 2, |_, _| r.gen_range(-1.0..1.0));
    let x = solve_cp_cis(&p.cis, &g).unwrap();
    for xi in 0..2 {
        let resid = &blocks[xi] * x.column(xi) + g.column(xi);
        assert!(resid.amax() <= 1e-10, "state {xi}: residual {:e}", resid.amax());
    }
    // a right-hand side along the CRS vector itself produces no density
    let along = p.cis.coefficients.clone() * 0.7;
    let x = solve_cp_cis(&p.cis, &along).unwrap();
    assert!(density_magnitude(&crs_response_density(&x, &p.cis, &p.pauli.pairs)) < 1e-14);
}

#[test]
fn crs_density_is_adjoint_of_cis_residual() {
    let (p, sol) = dimer_solution(EntanglerKind::Truncated);
    let xi_tilde = solve_cp_cis(&p.cis, &cp_cis_rhs1(&p, &sol, 1)).unwrap();
    let gamma = crs_response_density(&xi_tilde, &p.cis, &p.pauli.pairs);
    let c = &p.cis.coefficients;
    // Σ_Ξ Ξ̃_Ξ · (H − C_ΞᵀHC_Ξ) C_Ξ with C held fixed
    let lagrangian = |s: f64, dir: &PauliVector| {
        let coeffs = p.pauli.coeffs.add(&dir.scale(s));
        let h = build_cis(&p.pauli.with_coeffs(coeffs)).matrix;
        (0..c.ncols())
            .map(|xi| {
                let cx = c.column(xi);
                let e = cx.dot(&(&h * cx));
                xi_tilde.column(xi).dot(&(&h * cx - cx * e))
            })
            .sum::<f64>()
    };
    let mut r = rng(43);
    for _ in 0..5 {
        let dir = random_direction(&mut r, &p.pauli.coeffs);
        let h = 1e-6;
        let fd = (lagrangian(h, &dir) - lagrangian(-h, &dir)) / (2.0 * h);
        assert!(
            (dir.contract(&gamma) - fd).abs() < 1e-8,
            "{} vs {fd}",
            dir.contract(&gamma)
        );
    }
}

#[test]
fn relaxed_density_is_additive() {
    let (p, sol) = dimer_solution(EntanglerKind::Truncated);
    let hess = cp_sa_vqe_lhs(&p, &sol.theta).unwrap();
    let d = state_densities(&p, &sol, 1, &hess).unwrap();
    let full = d.unrelaxed.add(&d.vqe).add(&d.crs());
    assert!(max_dev(&d.relaxed(ResponseToggles::FULL).to_vec(), &full.to_vec()) < 1e-15);
    assert_eq!(d.relaxed(ResponseToggles::NONE), d.unrelaxed);
    assert_eq!(d.vqe.e, 0.0);
    assert_eq!(d.crs().e, 0.0);
}

fn dimer_densities(method: Method) -> (System, MonomerDensities) {
    let system = fixtures::dimer();
    let g = system_gradient(&system, method.solver(), &SolverConfig::default(), 1, None).unwrap();
    let md = g.monomer_densities(method).unwrap();
    (system, md)
}

#[test]
fn zero_pair_density_gives_no_dipole_or_centroid_density() {
    let (system, mut md) = dimer_densities(Method::McVqe(ResponseToggles::FULL));
    let (props, _) = system.properties().unwrap();
    let dm = mcvqe_core::aiem::MonomerDensityMatrices {
        gamma_h: md.gamma_h.clone(),
        gamma_p: md.gamma_p.clone(),
        gamma_t: md.gamma_t.clone(),
        pair: vec![[[0.0; 3]; 3]; system.pairs.len()],
    };
    md = monomer_property_densities(&dm, &props, &system.pairs).unwrap();
    assert!(md
        .eta_h
        .iter()
        .chain(&md.eta_p)
        .chain(&md.eta_t)
        .chain(&md.xi)
        .all(|v| v.amax() == 0.0));
}

#[test]
fn centroid_densities_sum_to_zero() {
    for method in Method::all() {
        let (_, md) = dimer_densities(method);
        let total: Vector3<f64> = md.xi.iter().sum();
        assert!(total.amax() < 1e-14, "{method}: {total:?}");
    }
}

#[test]
fn zero_density_gives_zero_gradient() {
    let (system, md) = dimer_densities(Method::Fci);
    let n = md.gamma_h.len();
    let zero = MonomerDensities {
        gamma_h: vec![0.0; n],
        gamma_p: vec![0.0; n],
        gamma_t: vec![0.0; n],
        eta_h: vec![Vector3::zeros(); n],
        eta_t: vec![Vector3::zeros(); n],
        eta_p: vec![Vector3::zeros(); n],
        xi: vec![Vector3::zeros(); n],
        pair: md.pair.iter().map(|_| [[0.0; 3]; 3]).collect(),
    };
    let (_, grads) = system.properties().unwrap();
    let g = nuclear_gradient(&zero, &grads, &system.geometry).unwrap();
    assert!(g.iter().all(|v| v.amax() == 0.0));
}

#[test]
fn uncoupled_monomers_at_their_minimum_feel_no_force() {
    let system = System::parse_synthetic(
        r#"{"atoms": [{"monomer": 0, "xyz": [0, 0, 0], "mass": 12.0},
                      {"monomer": 0, "xyz": [2.5, 0, 0], "mass": 14.0},
                      {"monomer": 1, "xyz": [0, 6, 0], "mass": 12.0},
                      {"monomer": 1, "xyz": [0, 6, 2.4], "mass": 14.0}],
            "monomers": [{"k_h": 0.06, "k_p": 0.05, "d_h": 2.5, "d_p": 2.65, "delta_e": 0.01,
                          "m_h": 1.1, "m_p": -0.4, "m_t": 0.9},
                         {"k_h": 0.05, "k_p": 0.04, "d_h": 2.4, "d_p": 2.6, "delta_e": 0.012,
                          "m_h": 1.0, "m_p": -0.3, "m_t": 0.8}],
            "pairs": []}"#,
    )
    .unwrap();
    for method in Method::all() {
        let g = system_gradient(&system, method.solver(), &SolverConfig::default(), 0, None).unwrap();
        let grad = flatten(&g.nuclear(&system, method).unwrap());
        assert!(grad.iter().all(|x| x.abs() <= 1e-10), "{method}: {grad:?}");
    }
}

#[test]
fn nuclear_gradients_are_translation_invariant() {
    let system = fixtures::dimer();
    for solver in [Solver::Fci, Solver::Cis, Solver::McVqe] {
        let g = system_gradient(&system, solver, &SolverConfig::default(), 1, None).unwrap();
        for method in Method::all().into_iter().filter(|m| m.solver() == solver) {
            let total: Vector3<f64> = g.nuclear(&system, method).unwrap().iter().sum();
            assert!(total.amax() <= 1e-9, "{method}: {total:?}");
        }
    }
}

#[test]
fn toggle_variants_are_distinct() {
    let system = fixtures::dimer();
    let g = system_gradient(&system, Solver::McVqe, &SolverConfig::default(), 1, None).unwrap();
    let grads: Vec<Vec<f64>> = ResponseToggles::ALL
        .iter()
        .map(|&t| flatten(&g.nuclear(&system, Method::McVqe(t)).unwrap()))
        .collect();
    for a in 0..4 {
        for b in a + 1..4 {
            let d = max_dev(&grads[a], &grads[b]);
            assert!(
                d > 1e-4,
                "{} vs {}: {d:e}",
                ResponseToggles::ALL[a],
                ResponseToggles::ALL[b]
            );
        }
    }
}
