//! Command-line driver: configuration, the four subcommands, and their
//! JSON/CSV artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::aiem::CHANNEL_NAMES;
use crate::dynamics::{run_dynamics, DynamicsOptions};
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::mcvqe::{EntanglerKind, OptimizerOptions};
use crate::pipeline::{
    fd_layer, flatten, layer_classes, solve_energies, system_gradient, Layer, Method, Solver, SolverConfig, System,
};
use crate::response::{density_magnitude, ResponseToggles};

/// Every knob of a run. Defaults are recorded in each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Tabulated monomer file.
    pub system: Option<PathBuf>,
    /// Synthetic system file.
    pub synthetic: Option<PathBuf>,
    pub ntheta: usize,
    /// `truncated`, `so4` or `identity`.
    pub entangler: String,
    pub layers: usize,
    /// `fci`, `cis` or `vqe`.
    pub method: String,
    /// `yy`, `yn`, `ny` or `nn`.
    pub response: String,
    pub state: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub gtol: f64,
    pub max_iter: usize,
    pub polish_steps: usize,
    pub out: Option<PathBuf>,
    pub dump_densities: bool,
    /// Validation layer, or all layers when absent.
    pub layer: Option<String>,
    /// Finite-difference step; per-layer default when absent.
    pub step: Option<f64>,
    pub steps: usize,
    pub dt: f64,
    pub temperature: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let opt = OptimizerOptions::default();
        let md = DynamicsOptions::default();
        Self {
            system: None,
            synthetic: None,
            ntheta: 2,
            entangler: "truncated".into(),
            layers: 1,
            method: "vqe".into(),
            response: "yy".into(),
            state: md.state,
            seed: md.seed,
            threads: None,
            gtol: opt.gtol,
            max_iter: opt.max_iter,
            polish_steps: opt.polish_steps,
            out: None,
            dump_densities: false,
            layer: None,
            step: None,
            steps: md.steps,
            dt: md.dt,
            temperature: md.temperature,
        }
    }
}

impl RunConfig {
    pub fn load_system(&self) -> Result<System> {
        match (&self.system, &self.synthetic) {
            (Some(p), None) => System::load_tabulated(p),
            (None, Some(p)) => System::load_synthetic(p),
            (Some(_), Some(_)) => Err(Error::Validation(
                "give either --system or --synthetic, not both".into(),
            )),
            (None, None) => Err(Error::Validation("no system given (--system or --synthetic)".into())),
        }
    }

    pub fn entangler_kind(&self) -> Result<EntanglerKind> {
        match self.entangler.as_str() {
            "truncated" => Ok(EntanglerKind::Truncated),
            "identity" => Ok(EntanglerKind::Identity),
            "so4" | "so4-chain" => {
                if self.layers == 0 {
                    return Err(Error::Validation("so4 entangler needs at least one layer".into()));
                }
                Ok(EntanglerKind::So4Chain { layers: self.layers })
            }
            other => Err(Error::parse(
                "entangler",
                format!("expected truncated, so4 or identity; got `{other}`"),
            )),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        Ok(SolverConfig {
            ntheta: self.ntheta,
            entangler: self.entangler_kind()?,
            optimizer: OptimizerOptions {
                gtol: self.gtol,
                max_iter: self.max_iter,
                polish_steps: self.polish_steps,
            },
        })
    }

    pub fn toggles(&self) -> Result<ResponseToggles> {
        self.response.parse()
    }

    pub fn method(&self) -> Result<Method> {
        match self.method.to_ascii_lowercase().as_str() {
            "vqe" | "mcvqe" => Ok(Method::McVqe(self.toggles()?)),
            other => other.parse(),
        }
    }

    pub fn dynamics_options(&self) -> DynamicsOptions {
        DynamicsOptions {
            state: self.state,
            steps: self.steps,
            dt: self.dt,
            temperature: self.temperature,
            seed: self.seed,
        }
    }

    /// Apply `key=value` overrides. Values are read as JSON when they parse,
    /// otherwise as strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::parse("--set", format!("expected key=value, got `{item}`")))?;
            let obj = v.as_object_mut().expect("config is an object");
            if !obj.contains_key(key) {
                return Err(Error::parse("--set", format!("unknown key `{key}`")));
            }
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            obj.insert(key.to_string(), value);
        }
        serde_json::from_value(v).map_err(|e| Error::parse("--set", e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mcvqe",
    version,
    about = "MC-VQE energies, analytic gradients, validation and dynamics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CIS, SA-VQE and subspace energies (plus oracle energies).
    Energy(Common),
    /// Analytic nuclear gradient of one state.
    Gradient(Common),
    /// Analytic vs finite-difference deviations for every method variant.
    Validate(Common),
    /// Velocity Verlet dynamics on one surface.
    Dynamics(Common),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tabulated monomer file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Synthetic system file.
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    #[arg(long)]
    pub ntheta: Option<usize>,
    /// truncated, so4 or identity.
    #[arg(long)]
    pub entangler: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// fci, cis or vqe.
    #[arg(long)]
    pub method: Option<String>,
    /// Response toggles: yy, yn, ny or nn.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub state: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validation layer: pauli, monomer, property or nuclear (default: all).
    #[arg(long)]
    pub layer: Option<String>,
    /// Finite-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Initial temperature in K.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Write Pauli and monomer densities into the gradient report.
    #[arg(long)]
    pub dump_densities: bool,
    /// Configuration override, `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// Defaults, then the config file, then explicit flags, then `--set`.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::parse(p.display().to_string(), e.to_string()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone().into(); })*
            };
        }
        take!(
            ntheta,
            entangler,
            layers,
            method,
            response,
            state,
            seed,
            steps,
            dt,
            temperature
        );
        if self.system.is_some() {
            cfg.system = self.system.clone();
        }
        if self.synthetic.is_some() {
            cfg.synthetic = self.synthetic.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.layer.is_some() {
            cfg.layer = self.layer.clone();
        }
        if self.step.is_some() {
            cfg.step = self.step;
        }
        cfg.dump_densities |= self.dump_densities;
        cfg.with_overrides(&self.set)
    }
}

fn header(command: &str, cfg: &RunConfig) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
    })
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn cmd_energy(cfg: &RunConfig) -> Result<Value> {
    let system = cfg.load_system()?;
    let solver_cfg = cfg.solver_config()?;
    let pauli = system.pauli()?;
    let mut report = header("energy", cfg);
    let cis = solve_energies(&pauli, Solver::Cis, &solver_cfg, None)?;
    report["cis_energies"] = json!(cis.energies);
    if system.num_monomers() <= crate::oracle::MAX_FCI_QUBITS {
        report["fci_energies"] = json!(solve_energies(&pauli, Solver::Fci, &solver_cfg, None)?.energies);
    }
    let problem = crate::mcvqe::McVqeProblem::new(pauli, solver_cfg.ntheta, solver_cfg.entangler)?;
    let sol = crate::mcvqe::solve_mcvqe(&problem, None, &solver_cfg.optimizer)?;
    report["mcvqe"] = json!({
        "iterations": sol.iterations,
        "grad_norm": sol.grad_norm,
        "theta": sol.theta,
        "subspace_hamiltonian": matrix_rows(&sol.subspace_h),
        "energies": sol.energies.as_slice(),
        "eigenvectors": matrix_rows(&sol.v),
    });
    if let Some(dir) = &cfg.out {
        write_json(dir, "energy.json", &report)?;
    }
    Ok(report)
}

/// Per-atom gradient table, `{:.16e}` so values re-read bit-exactly.
pub fn gradient_csv(system: &System, grad: &[nalgebra::Vector3<f64>]) -> String {
    let mut s = String::from("atom,monomer,gx,gy,gz\n");
    for (i, (atom, g)) in system.geometry.atoms().iter().zip(grad).enumerate() {
        s += &format!("{i},{},{:.16e},{:.16e},{:.16e}\n", atom.monomer, g[0], g[1], g[2]);
    }
    s
}

pub fn cmd_gradient(cfg: &RunConfig) -> Result<Value> {
    let system = cfg.load_system()?;
    let method = cfg.method()?;
    let g = system_gradient(&system, method.solver(), &cfg.solver_config()?, cfg.state, None)?;
    let grad = g.nuclear(&system, method)?;
    let mut report = header("gradient", cfg);
    report["method"] = json!(method.to_string());
    report["state"] = json!(cfg.state);
    report["energies"] = json!(g.electronic.energies);
    report["energy"] = json!(g.energy());
    report["gradient"] = json!(grad.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>());
    report["net_force"] = json!(max_abs(&flatten(&[grad.iter().sum()])));
    if let Some(m) = &g.electronic.mcvqe {
        report["mcvqe"] = json!({
            "iterations": m.solution.iterations,
            "theta": m.solution.theta,
            "theta_tilde": m.densities.theta_tilde,
            "se_residuals": m.se_residuals,
            "hessian_shift": m.hessian_shift,
            "max_vqe_response": density_magnitude(&m.densities.vqe),
            "max_crs_response": density_magnitude(&m.densities.crs()),
        });
    }
    if cfg.dump_densities {
        let d = g.electronic.densities(method)?;
        let md = g.monomer_densities(method)?;
        let pairs: Vec<Value> = md
            .pair
            .iter()
            .map(|b| {
                let mut o = BTreeMap::new();
                for x in 0..3 {
                    for y in 0..3 {
                        o.insert(format!("{}{}", CHANNEL_NAMES[x], CHANNEL_NAMES[y]), b[x][y]);
                    }
                }
                json!(o)
            })
            .collect();
        report["densities"] = json!({
            "pauli": {"e": d.e, "x": d.x, "z": d.z, "xx": d.xx, "xz": d.xz, "zx": d.zx, "zz": d.zz},
            "gamma_h": md.gamma_h, "gamma_p": md.gamma_p, "gamma_t": md.gamma_t,
            "pair": pairs,
            "eta_h": md.eta_h.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>(),
            "eta_p": md.eta_p.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>(),
            "eta_t": md.eta_t.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>(),
            "xi": md.xi.iter().map(|v| [v[0], v[1], v[2]]).collect::<Vec<_>>(),
        });
    }
    if let Some(dir) = &cfg.out {
        write_json(dir, "gradient.json", &report)?;
        fs::write(
            dir.join(format!("gradient_state{}.csv", cfg.state)),
            gradient_csv(&system, &grad),
        )?;
    }
    Ok(report)
}

/// One row of a deviation table: method variant, density class, max |analytic − FD|.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub layer: String,
    pub method: String,
    pub class: String,
    pub max_abs: f64,
}

/// Deviations per class (and `all`) for FCI, CIS and the four MC-VQE variants.
pub fn validate_layer(
    system: &System,
    cfg: &SolverConfig,
    state: usize,
    layer: Layer,
    h: f64,
) -> Result<Vec<Deviation>> {
    let classes = layer_classes(system, layer);
    let mut rows = Vec::new();
    for solver in [Solver::Fci, Solver::Cis, Solver::McVqe] {
        let g = system_gradient(system, solver, cfg, state, None)?;
        let fd = fd_layer(system, layer, solver, cfg, state, h, g.electronic.theta())?;
        for method in Method::all().into_iter().filter(|m| m.solver() == solver) {
            let a = g.layer(system, method, layer)?;
            let mut by_class: BTreeMap<&str, f64> = BTreeMap::new();
            for ((x, y), c) in a.iter().zip(&fd).zip(&classes) {
                let e = by_class.entry(c).or_insert(0.0);
                *e = e.max((x - y).abs());
            }
            let all = by_class.values().copied().fold(0.0, f64::max);
            for (c, d) in by_class.into_iter().chain([("all", all)]) {
                rows.push(Deviation {
                    layer: layer.name().into(),
                    method: method.to_string(),
                    class: c.into(),
                    max_abs: d,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_validate(cfg: &RunConfig) -> Result<Value> {
    let system = cfg.load_system()?;
    let solver_cfg = cfg.solver_config()?;
    let layers = match &cfg.layer {
        Some(l) => vec![l.parse::<Layer>()?],
        None => Layer::ALL.to_vec(),
    };
    let mut rows = Vec::new();
    for layer in layers {
        let h = cfg.step.unwrap_or_else(|| layer.default_step());
        if let Layer::Nuclear = layer {
            if !matches!(system.source, crate::pipeline::PropertySource::Synthetic(_)) {
                log::warn!("skipping nuclear layer: tabulated properties cannot be displaced");
                continue;
            }
        }
        rows.extend(validate_layer(&system, &solver_cfg, cfg.state, layer, h)?);
    }
    let mut report = header("validate", cfg);
    report["deviations"] = json!(rows);
    if let Some(dir) = &cfg.out {
        write_json(dir, "validate.json", &report)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            w.serialize(r)
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        fs::write(dir.join("validate.csv"), bytes)?;
    }
    Ok(report)
}

pub fn cmd_dynamics(cfg: &RunConfig) -> Result<Value> {
    let system = cfg.load_system()?;
    let method = cfg.method()?;
    let traj = run_dynamics(&system, method, &cfg.solver_config()?, &cfg.dynamics_options())?;
    let mut report = header("dynamics", cfg);
    report["method"] = json!(method.to_string());
    report["frames"] = json!(traj.frames.len());
    report["drift"] = json!(traj.drift());
    report["failure"] = json!(traj.failure);
    report["iterations"] = json!(traj.frames.iter().map(|f| f.iterations).collect::<Vec<_>>());
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        traj.write_csv(fs::File::create(dir.join("trajectory.csv"))?)?;
        write_json(dir, "dynamics.json", &report)?;
    }
    Ok(report)
}

/// Parse arguments, run, print the report. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, common) = match &cli.command {
        Command::Energy(c) => ("energy", c),
        Command::Gradient(c) => ("gradient", c),
        Command::Validate(c) => ("validate", c),
        Command::Dynamics(c) => ("dynamics", c),
    };
    let result = common.resolve().and_then(|cfg| {
        if let Some(n) = cfg.threads {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("thread pool already initialized: {e}");
            }
        }
        match name {
            "energy" => cmd_energy(&cfg),
            "gradient" => cmd_gradient(&cfg),
            "validate" => cmd_validate(&cfg),
            _ => cmd_dynamics(&cfg),
        }
    });
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_json_then_strings() {
        let cfg = RunConfig::default()
            .with_overrides(&["ntheta=3".into(), "entangler=so4".into(), "gtol=1e-9".into()])
            .unwrap();
        assert_eq!(cfg.ntheta, 3);
        assert_eq!(cfg.entangler_kind().unwrap(), EntanglerKind::So4Chain { layers: 1 });
        assert_eq!(cfg.gtol, 1e-9);
        assert!(RunConfig::default().with_overrides(&["bogus=1".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["ntheta".into()]).is_err());
        assert!(RunConfig::default().with_overrides(&["ntheta=two".into()]).is_err());
    }

    #[test]
    fn flags_override_config() {
        let c = Common {
            ntheta: Some(4),
            response: Some("nn".into()),
            set: vec!["state=0".into()],
            ..Default::default()
        };
        let cfg = c.resolve().unwrap();
        assert_eq!((cfg.ntheta, cfg.state), (4, 0));
        assert_eq!(cfg.method().unwrap(), Method::McVqe(ResponseToggles::NONE));
    }
}
