//! `tfch`: kernel tables, eigenvalue studies, convergence runs and coarsening simulations.
//!
//! Exit status: 0 when every internal check passed, 1 when a check failed, 2 on usage or
//! runtime errors.

mod settings;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use settings::Settings;
use tfch_core::adaptive::{AdaptivePolicy, AdaptiveSchedule, Warmup};
use tfch_core::harness::{
    cmd_converge, cmd_eigen, cmd_simulate, converge_csv, ConvergeConfig, EigenConfig, MeshSpec, SimulateConfig,
    SimulateStepping,
};
use tfch_core::kernels::{check_criteria, CriteriaVariant, KernelFamily, KernelTable};
use tfch_core::solver::{ModelParams, Scheme, SolverOptions};

#[derive(Parser, Debug)]
#[command(name = "tfch", version, about = "Variable-step L1-type kernels and time-fractional Cahn-Hilliard runs")]
struct Cli {
    /// `key = value` file supplying defaults for any long option; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump kernel rows as CSV `n,j,a_j`, or the criteria report as JSON.
    Kernels(KernelsArgs),
    /// Minimum eigenvalues of the kernel quadratic forms.
    Eigen(EigenArgs),
    /// Manufactured-solution convergence study.
    Converge(ConvergeArgs),
    /// Coarsening run from seeded random data.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Default)]
struct MeshArgs {
    /// uniform, graded, random, fixed-ratio or composite (graded head, random tail).
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Seed of random meshes.
    #[arg(long = "mesh-seed")]
    mesh_seed: Option<u64>,
    /// Final time.
    #[arg(long = "T")]
    t_final: Option<f64>,
}

#[derive(Args, Debug)]
struct KernelsArgs {
    /// l1, l1h, l1a, auxl1h or auxl1a.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Report the `uniform` or `nonuniform` criteria as JSON instead of dumping rows.
    #[arg(long)]
    criteria: Option<String>,
}

#[derive(Args, Debug)]
struct EigenArgs {
    #[arg(long)]
    family: Option<String>,
    /// Comma-separated fractional orders.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Comma-separated sizes.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[command(flatten)]
    mesh: MeshArgs,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    /// l1, l1h or l1a.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Regularity of the manufactured solution.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Grid points per direction.
    #[arg(long = "M")]
    grid: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    mesh: MeshArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long = "M")]
    grid: Option<usize>,
    /// Side length of the periodic square.
    #[arg(long)]
    length: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed of the initial data.
    #[arg(long)]
    seed: Option<u64>,
    /// Half-width of the uniform initial perturbation.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Number of steps on a prescribed mesh.
    #[arg(long = "N")]
    n: Option<usize>,
    #[command(flatten)]
    mesh: MeshArgs,
    /// Choose steps from the solution rate instead of a prescribed mesh.
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long = "tau-min")]
    tau_min: Option<f64>,
    #[arg(long = "tau-max")]
    tau_max: Option<f64>,
    #[arg(long = "warmup-gamma")]
    warmup_gamma: Option<f64>,
    #[arg(long = "warmup-N0")]
    warmup_n0: Option<usize>,
    #[arg(long = "warmup-T0")]
    warmup_t0: Option<f64>,
    /// Start the controller at t = 0 without a graded warm-up.
    #[arg(long = "no-warmup")]
    no_warmup: bool,
    /// Take L1 steps beyond the solvability restriction instead of stopping.
    #[arg(long = "allow-restriction-violation")]
    allow_restriction_violation: bool,
    /// Comma-separated times at which to write the field.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    /// Directory for snapshot CSV files.
    #[arg(long = "snapshot-dir")]
    snapshot_dir: Option<PathBuf>,
}

fn parse<T>(key: &str, text: &str) -> Result<T>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    text.parse::<T>().map_err(|e| anyhow::anyhow!("--{key}: {e}"))
}

fn mesh_spec(s: &Settings, args: &MeshArgs, default: MeshSpec) -> Result<MeshSpec> {
    let kind = s.optional("mesh", args.mesh.clone())?;
    let gamma = s.optional("gamma", args.gamma)?;
    let ratio = s.optional("ratio", args.ratio)?;
    let seed = s.optional("mesh-seed", args.mesh_seed)?;
    let Some(kind) = kind else {
        return Ok(default);
    };
    Ok(match kind.as_str() {
        "uniform" => MeshSpec::Uniform,
        "graded" => MeshSpec::Graded { gamma: gamma.unwrap_or(2.0) },
        "random" => MeshSpec::Random { seed: seed.unwrap_or(0) },
        "fixed-ratio" => MeshSpec::FixedRatio { ratio: ratio.unwrap_or(1.1) },
        "composite" => MeshSpec::Composite { gamma: gamma.unwrap_or(4.0), seed: seed.unwrap_or(0) },
        other => bail!("--mesh: unknown mesh kind '{other}'"),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Runs one subcommand; `Ok(false)` means an internal check failed.
fn execute(cli: Cli) -> Result<bool> {
    let s = Settings::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::Kernels(a) => {
            let family: KernelFamily = parse("family", &s.value("family", a.family, "l1".to_string())?)?;
            let alpha = s.value("alpha", a.alpha, 0.5)?;
            let n = s.value("N", a.n, 10)?;
            let t_final = s.value("T", a.mesh.t_final, 1.0)?;
            let mesh = mesh_spec(&s, &a.mesh, MeshSpec::Uniform)?;
            let variant = s.optional("criteria", a.criteria)?;
            s.ensure_all_used()?;
            let table = KernelTable::new(family, alpha, mesh.build(t_final, n)?)?;
            match variant.as_deref() {
                None => {
                    emit(out, &table.to_csv(n))?;
                    Ok(true)
                }
                Some(v) => {
                    let variant = match v {
                        "uniform" => CriteriaVariant::Uniform,
                        "nonuniform" => CriteriaVariant::Nonuniform,
                        other => bail!("--criteria: expected uniform or nonuniform, got '{other}'"),
                    };
                    let report = check_criteria(&table, n, variant);
                    emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
                    Ok(report.all_pass())
                }
            }
        }
        Command::Eigen(a) => {
            let family: KernelFamily = parse("family", &s.value("family", a.family, "l1".to_string())?)?;
            let config = EigenConfig {
                family,
                alphas: s.list("alpha", a.alpha, vec![0.1, 0.5, 0.9])?,
                sizes: s.list("N", a.n, vec![100, 200, 400])?,
                t_final: s.value("T", a.mesh.t_final, 1.0)?,
                mesh: mesh_spec(&s, &a.mesh, MeshSpec::Uniform)?,
            };
            s.ensure_all_used()?;
            let table = cmd_eigen(&config)?;
            emit(out, &table.to_csv())?;
            Ok(table.checks_passed)
        }
        Command::Converge(a) => {
            let scheme: Scheme = parse("scheme", &s.value("scheme", a.scheme, "l1".to_string())?)?;
            let alpha = s.value("alpha", a.alpha, 0.4)?;
            let sigma = s.value("sigma", a.sigma, 0.4)?;
            let sizes = s.list("N", a.n, vec![40, 80, 160, 320])?;
            let base = ConvergeConfig::manufactured(scheme, alpha, sigma, MeshSpec::Uniform, sizes);
            let config = ConvergeConfig {
                mesh: mesh_spec(&s, &a.mesh, MeshSpec::Composite { gamma: 4.0, seed: 2024 })?,
                grid_size: s.value("M", a.grid, base.grid_size)?,
                kappa: s.value("kappa", a.kappa, base.kappa)?,
                epsilon: s.value("epsilon", a.epsilon, base.epsilon)?,
                t_final: s.value("T", a.mesh.t_final, base.t_final)?,
                ..base
            };
            s.ensure_all_used()?;
            let rows = cmd_converge(&config)?;
            emit(out, &converge_csv(&config, &rows))?;
            Ok(rows.iter().all(|r| r.error.is_finite()))
        }
        Command::Simulate(a) => simulate(&s, a, out),
    }
}

fn simulate(s: &Settings, a: SimulateArgs, out: Option<&Path>) -> Result<bool> {
    let scheme: Scheme = parse("scheme", &s.value("scheme", a.scheme, "l1h".to_string())?)?;
    let alpha = s.value("alpha", a.alpha, 0.5)?;
    let seed = s.value("seed", a.seed, 2024)?;
    let t_final = s.value("T", a.mesh.t_final, 10.0)?;
    let adaptive = s.switch("adaptive", a.adaptive)?;
    let defaults = AdaptivePolicy::default();
    let warm = Warmup::default();
    let policy = AdaptivePolicy::new(
        s.value("tau-min", a.tau_min, defaults.tau_min)?,
        s.value("tau-max", a.tau_max, defaults.tau_max)?,
        s.value("eta", a.eta, defaults.eta)?,
    )?;
    let warmup = Warmup {
        gamma: s.value("warmup-gamma", a.warmup_gamma, warm.gamma)?,
        n0: s.value("warmup-N0", a.warmup_n0, warm.n0)?,
        t0: s.value("warmup-T0", a.warmup_t0, warm.t0)?,
    };
    let no_warmup = s.switch("no-warmup", a.no_warmup)?;
    let n = s.value("N", a.n, 200)?;
    let spec = mesh_spec(s, &a.mesh, MeshSpec::Uniform)?;
    let stepping = if adaptive {
        SimulateStepping::Adaptive(AdaptiveSchedule { policy, warmup: (!no_warmup).then_some(warmup), t_final })
    } else {
        SimulateStepping::Mesh { spec, n, t_final }
    };
    let mut config = SimulateConfig::coarsening(scheme, alpha, stepping, seed)?;
    config.grid_size = s.value("M", a.grid, config.grid_size)?;
    config.length = s.value("length", a.length, config.length)?;
    config.params = ModelParams::new(
        s.value("kappa", a.kappa, config.params.kappa)?,
        s.value("epsilon", a.epsilon, config.params.epsilon)?,
        alpha,
    )?;
    config.amplitude = s.value("amplitude", a.amplitude, config.amplitude)?;
    config.snapshot_times = s.list("snapshots", a.snapshots, Vec::new())?;
    config.options = SolverOptions {
        allow_restriction_violation: s.switch("allow-restriction-violation", a.allow_restriction_violation)?,
        ..SolverOptions::default()
    };
    let snapshot_dir: PathBuf = s.value("snapshot-dir", a.snapshot_dir, PathBuf::from("."))?;
    s.ensure_all_used()?;

    let output = cmd_simulate(&config)?;
    emit(out, &output.trace_csv())?;
    if !output.snapshots.is_empty() {
        fs::create_dir_all(&snapshot_dir).with_context(|| format!("creating {}", snapshot_dir.display()))?;
        for (t, field) in &output.snapshots {
            let path = snapshot_dir.join(format!("phi_t{t:.6}.csv"));
            fs::write(&path, output.grid.to_csv(field)).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    if !output.checks.all_ok() {
        eprintln!("invariant check failed: {:?}", output.checks);
    }
    Ok(output.checks.all_ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
