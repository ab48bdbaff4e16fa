use std::fs;
use std::path::{Path, PathBuf};

use mcvqe_core::cli::main_with_args;
use serde_json::Value;

fn dimer_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/dimer.json")
}

fn run(args: &[&str]) -> i32 {
    main_with_args(std::iter::once("mcvqe").chain(args.iter().copied()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn single_monomer_energies_are_the_monomer_states() {
    let dir = tempfile::tempdir().unwrap();
    let sys = dir.path().join("one.json");
    fs::write(
        &sys,
        r#"{"atoms": [{"monomer": 0, "xyz": [0, 0, 0], "mass": 12.0},
                      {"monomer": 0, "xyz": [2.7, 0, 0], "mass": 14.0}],
            "monomers": [{"k_h": 0.06, "k_p": 0.05, "d_h": 2.5, "d_p": 2.65, "delta_e": 0.01,
                          "m_h": 1.1, "m_p": -0.4, "m_t": 0.9}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&[
            "energy",
            "--synthetic",
            sys.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let report = read_json(&out.join("energy.json"));
    let e: Vec<f64> = serde_json::from_value(report["mcvqe"]["energies"].clone()).unwrap();
    let eps_h = 0.5 * 0.06 * (2.7f64 - 2.5).powi(2);
    let eps_p = 0.01 + 0.5 * 0.05 * (2.7f64 - 2.65).powi(2);
    assert!((e[0] - eps_h).abs() < 1e-14 && (e[1] - eps_p).abs() < 1e-14, "{e:?}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["energy", "--synthetic", "/nonexistent/system.json"]), 2);
    assert_eq!(run(&["energy", "--bogus-flag"]), 2);
    assert_eq!(run(&["energy"]), 2);
    let dimer = dimer_path();
    let d = dimer.to_str().unwrap();
    assert_eq!(run(&["energy", "--synthetic", d, "--set", "entangler=tetrahedral"]), 2);
    // iteration cap without polishing: convergence failure
    assert_eq!(
        run(&[
            "energy",
            "--synthetic",
            d,
            "--set",
            "max_iter=1",
            "--set",
            "polish_steps=0",
            "--set",
            "gtol=1e-14"
        ]),
        3
    );
}

#[test]
fn gradient_csv_rereads_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let dimer = dimer_path();
    assert_eq!(
        run(&[
            "gradient",
            "--synthetic",
            dimer.to_str().unwrap(),
            "--state",
            "1",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let report = read_json(&out.join("gradient.json"));
    let grad: Vec<[f64; 3]> = serde_json::from_value(report["gradient"].clone()).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("gradient_state1.csv")).unwrap();
    let rows: Vec<(usize, usize, f64, f64, f64)> = rdr.deserialize().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), grad.len());
    for (row, g) in rows.iter().zip(&grad) {
        assert_eq!([row.2, row.3, row.4], *g);
    }
}

#[test]
fn dynamics_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let dimer = dimer_path();
    let d = dimer.to_str().unwrap();
    let traj = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec![
            "dynamics",
            "--synthetic",
            d,
            "--method",
            "fci",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        assert_eq!(run(&args), 0);
        fs::read_to_string(out.join("trajectory.csv")).unwrap()
    };
    assert_eq!(traj("zero", &["--steps", "0"]).lines().count(), 2);
    let a = traj("a", &["--steps", "4", "--seed", "9"]);
    let b = traj("b", &["--steps", "4", "--seed", "9"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 6);
    assert_ne!(a, traj("c", &["--steps", "4", "--seed", "10"]));
}
