//! `gasgrid` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gasgrid_core::adjoint::{self, TrajectoryFunctional};
use gasgrid_core::model::{validate_network, Network};
use gasgrid_core::opt::{CompressorCost, OptimalControlProblem};
use gasgrid_core::sim::{Scenario, Simulator};
use gasgrid_core::{BAR, HOUR};

use crate::control_file::load_control;
use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::json::KeyPolicy;
use crate::network_file::{load_network, read_network_file};
use crate::results::write_results;
use crate::scenario_file::load_scenario;

const DEFAULTS: &str = "\
Built-in constants and defaults:
  gas law            p = kappa rho^gamma, kappa = 340^2 Pa m^3/kg, gamma = 1
  viscosity          eta = 1e-5 kg/(m s); Colebrook friction, rough limit below Re = 100
  pipes              diameter 0.6 m, roughness 0.5 mm, cells = round(length / 1 km)
  reference density  0.785 kg/m^3; per unit base 100 MW, 345 kV
  Newton             max-norm residual < 1e-9, at most 50 iterations, 30 step halvings
  optimizer          mu0 = 100, mu factor 0.2, mu_min = 1e-4, tol = 1e-6 (gradient max-norm, bar),
                     30 outer / 200 inner iterations, L-BFGS memory 50,
                     Armijo c1 = 1e-4, fraction to boundary 0.995, feasibility tolerance 1e-3 bar
  controls           0 < u < u_max = 30 bar; u_0 held at the smallest constant lift on a 0.5 bar
                     grid that is feasible over the horizon
  check-gradient     central differences with h = 1e3 Pa, pass if relative error < 1e-5

Scenario values override the built-in defaults; flags override scenario values.
Exit status: 0 success, 1 infeasible or not converged, 2 input error.";

#[derive(Debug, Parser)]
#[command(
    name = "gasgrid",
    version,
    about = "Coupled gas network and power grid simulation with optimal compressor control"
)]
#[command(after_help = DEFAULTS)]
pub struct Cli {
    /// Warn about unknown keys in input files instead of rejecting them.
    #[arg(long, global = true)]
    pub lax: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Network JSON file.
    #[arg(long)]
    pub network: PathBuf,
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a control (u = 0 without a control file) and write the results.
    #[command(after_help = DEFAULTS)]
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Control CSV (`t_hours,u_bar`).
        #[arg(long)]
        control: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize the compressor control and write results and the iteration log.
    #[command(after_help = DEFAULTS)]
    Optimize {
        #[command(flatten)]
        inputs: Inputs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Gradient tolerance of the barrier problems [default: 1e-6].
        #[arg(long)]
        tol: Option<f64>,
        /// Initial barrier parameter [default: 100].
        #[arg(long)]
        mu0: Option<f64>,
        /// Barrier reduction factor [default: 0.2].
        #[arg(long)]
        mu_factor: Option<f64>,
        /// Iteration limit per barrier problem [default: 200].
        #[arg(long)]
        max_iter: Option<usize>,
        /// Upper control bound in bar [default: 30].
        #[arg(long)]
        u_max: Option<f64>,
    },
    /// Compare the adjoint gradient of the compressor cost with finite differences.
    #[command(after_help = DEFAULTS)]
    CheckGradient {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        control: PathBuf,
        /// Number of control components to compare, spread over the horizon.
        #[arg(long, default_value_t = 8)]
        components: usize,
    },
    /// Validate a network file and print the report.
    #[command(after_help = DEFAULTS)]
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
}

fn policy(lax: bool) -> KeyPolicy {
    if lax {
        KeyPolicy::Lax
    } else {
        KeyPolicy::Strict
    }
}

fn load(inputs: &Inputs, policy: KeyPolicy) -> Result<(Network, Scenario)> {
    let network = load_network(&inputs.network, policy)?;
    let scenario = load_scenario(&inputs.scenario, &network, policy)?;
    warn_on_resolution(&network, &scenario);
    Ok((network, scenario))
}

/// The scheme is tuned for steps near 15 min and cells near 1 km; nothing
/// is enforced outside that, but a factor of four either way gets logged.
fn warn_on_resolution(network: &Network, scenario: &Scenario) {
    let far = |v: f64, reference: f64| !(reference / 4.0..=reference * 4.0).contains(&v);
    if far(scenario.dt, 900.0) {
        log::warn!("time step {} s is far from 900 s", scenario.dt);
    }
    for pipe in &network.gas.pipes {
        if far(pipe.dx(), 1000.0) {
            log::warn!(
                "pipe {}: cell length {:.1} m is far from 1000 m (dt/dx = {:.3} s/m)",
                pipe.id,
                pipe.dx(),
                scenario.dt / pipe.dx()
            );
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let policy = policy(cli.lax);
    match &cli.command {
        Command::Validate { network } => validate(network, policy),
        Command::Simulate { inputs, control, out } => {
            let (network, scenario) = load(inputs, policy)?;
            let sim = Simulator::new(network, &scenario)?;
            let control = match control {
                Some(path) => load_control(path, &sim)?,
                None => sim.constant_control(0.0),
            };
            let trajectory = sim.simulate(&control)?;
            let summary = write_results(out, &sim, &trajectory, &scenario.pressure_bounds, None)?;
            println!("simulated {} steps", summary.steps);
            if let Some(m) = summary.min_margin_bar {
                println!("min margin {} bar", fmt9(m));
            }
            Ok(0)
        }
        Command::Optimize { inputs, out, tol, mu0, mu_factor, max_iter, u_max } => {
            let (network, mut scenario) = load(inputs, policy)?;
            let o = &mut scenario.optimizer;
            if let Some(v) = tol {
                o.tol = *v;
            }
            if let Some(v) = mu0 {
                o.mu0 = *v;
            }
            if let Some(v) = mu_factor {
                o.mu_factor = *v;
            }
            if let Some(v) = max_iter {
                o.max_inner = *v;
            }
            if let Some(v) = u_max {
                scenario.u_max = v * BAR;
            }
            let problem = OptimalControlProblem::new(network, &scenario)?;
            let result = problem.optimize()?;
            write_results(out, &problem.simulator, &result.trajectory, &scenario.pressure_bounds, Some(&result))?;
            println!(
                "objective {}, min margin {} bar, {} iterations",
                fmt9(result.objective),
                fmt9(result.min_margin_bar),
                result.log.len()
            );
            let feasible = result.min_margin_bar >= -problem.settings.feasibility_tol_bar;
            if !feasible {
                eprintln!("result violates a pressure bound by {} bar", fmt9(-result.min_margin_bar));
            }
            if !result.converged {
                eprintln!("optimizer stopped at gradient norm {}", fmt9(result.grad_norm));
            }
            Ok(if feasible && result.converged { 0 } else { 1 })
        }
        Command::CheckGradient { inputs, control, components } => {
            let (network, scenario) = load(inputs, policy)?;
            let sim = Simulator::new(network, &scenario)?;
            let control = load_control(control, &sim)?;
            check_gradient(&sim, &control, *components)
        }
    }
}

fn validate(path: &Path, policy: KeyPolicy) -> Result<i32> {
    let network = read_network_file(path, policy)?.to_model();
    let report = validate_network(&network);
    if report.is_valid() {
        println!("{}: valid", path.display());
        Ok(0)
    } else {
        for v in &report.violations {
            println!("{}: {v}", path.display());
        }
        Ok(2)
    }
}

fn check_gradient(sim: &Simulator, control: &gasgrid_core::sim::ControlVector, components: usize) -> Result<i32> {
    let n = control.len();
    if components == 0 || n == 0 {
        return Err(Error::input("--components", "need at least one component"));
    }
    let picked: Vec<usize> = if components >= n {
        (0..n).collect()
    } else {
        let mut v: Vec<usize> = (0..components).map(|i| i * (n - 1) / (components - 1).max(1)).collect();
        v.dedup();
        v
    };
    let trajectory = sim.simulate(control)?;
    let value = CompressorCost.value(sim, &trajectory)?;
    let (_, grad) = adjoint::gradient(sim, &trajectory, &CompressorCost)?;
    let fd = adjoint::finite_difference_gradient(sim, control, &CompressorCost, &picked, 1e3)?;
    let nc = control.compressors();
    println!("objective {}", fmt9(value));
    println!("component,t_hours,adjoint,fd,rel_err");
    let mut ok = true;
    for (&k, f) in picked.iter().zip(&fd) {
        let rel = if f.abs() > 1e-10 { (grad[k] - f).abs() / f.abs() } else { 0.0 };
        ok &= rel < 1e-5;
        let t = sim.time(k / nc) / HOUR;
        println!("{k},{},{},{},{}", fmt9(t), fmt9(grad[k]), fmt9(*f), fmt9(rel));
    }
    Ok(if ok { 0 } else { 1 })
}
