use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use devia_core::diff_analysis::{rate_diffusion, solve_fokker_planck, GridField};
use devia_core::diff_sim::{simulate_interacting, DiffusionRun};
use devia_core::harness::{self, lattice_start, ExperimentReport, ExperimentSpec, Kind};
use devia_core::jump_analysis::{rate_i, rate_ibar, solve_p};
use devia_core::jump_sim::{a_m, simulate_jump, simulate_tilted, ControlConfig};
use devia_core::kernels::KernelConfig;
use devia_core::model::config::ModelConfig;
use devia_core::path::PathVec;
use devia_core::schwartz::TestFunction;

/// Time steps used for the limit path `p(t)` behind tilted runs.
const P_STEPS: usize = 4000;

#[derive(Parser)]
#[command(name = "devia", version, about = "Moderate deviations of mean-field particle systems")]
struct Cli {
    /// Worker threads (default: $DEVIA_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and check its criteria.
    Run {
        spec: PathBuf,
        /// JSON report path (overrides `[output] report`).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-m summary CSV path (overrides `[output] csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the property battery.
    LemmaSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Simulate the jump empirical measure, optionally tilted by a control.
    JumpSim {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cell control; the run cost goes to `<out>.json`.
        #[arg(long)]
        control: Option<PathBuf>,
        /// Exponent of the scaling `a(m) = m^(-theta)` for tilted runs.
        #[arg(long, default_value_t = 0.25)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the jump rate function of a path.
    JumpRate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        eta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the interacting diffusions and write a summary CSV.
    DiffSim {
        #[arg(long)]
        kernels: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Writes `<out>_summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the diffusion rate function of a grid field.
    DiffRate {
        #[arg(long)]
        kernels: PathBuf,
        #[arg(long)]
        eta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let workers = cli.workers.or_else(harness::workers_from_env);
    match cli.command {
        Command::Run { spec, report, csv } => {
            let spec = ExperimentSpec::load(&spec).with_context(|| format!("loading {}", spec.display()))?;
            let mut output = spec.output.clone();
            output.report = report.or(output.report);
            output.csv = csv.or(output.csv);
            run_and_report(&spec, workers, &output)
        }
        Command::LemmaSuite { seed, report } => {
            let mut spec = ExperimentSpec::new(Kind::LemmaSuite);
            spec.seed = seed;
            let output = harness::Output { report, csv: None };
            run_and_report(&spec, workers, &output)
        }
        Command::JumpSim {
            model,
            m,
            horizon,
            seed,
            control,
            theta,
            out,
        } => {
            let cfg = ModelConfig::load(&model)?;
            let rates = cfg.build()?;
            let q0 = lattice_start(&cfg.initial()?, m)?;
            let path = match control {
                None => simulate_jump(&*rates, m, &q0, horizon, seed)?,
                Some(c) => {
                    let control = ControlConfig::load(&c)?.build(rates.num_states())?;
                    let p = solve_p(&*rates, &q0, horizon, P_STEPS)?;
                    let run = simulate_tilted(&*rates, m, &q0, horizon, &control, a_m(m, theta), &p, seed)?;
                    let side = serde_json::json!({ "cost": run.cost, "events": run.path.num_events() });
                    std::fs::write(sidecar(&out, "json"), serde_json::to_string_pretty(&side)?)?;
                    run.path
                }
            };
            path.to_path_vec().write_csv(std::fs::File::create(&out)?)?;
            Ok(true)
        }
        Command::JumpRate { model, eta, out } => {
            let cfg = ModelConfig::load(&model)?;
            let rates = cfg.build()?;
            let eta = PathVec::read_csv(std::fs::File::open(&eta).with_context(|| format!("reading {}", eta.display()))?)?;
            let p = solve_p(&*rates, &cfg.initial()?, eta.horizon(), eta.len() - 1)?;
            let i = rate_i(&*rates, &p, &eta)?;
            let ibar = rate_ibar(&*rates, &p, &eta)?;
            let report = serde_json::json!({
                "value": i.value,
                "feasible": i.feasible,
                "diagnostic": i.diagnostic,
                "residual_norms": i.residual_norms,
                "orthogonal_residuals": i.orthogonal_residuals,
                "ibar_value": ibar.value,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("I = {}", i.value_or_infinity());
            Ok(true)
        }
        Command::DiffSim {
            kernels,
            m,
            horizon,
            dt,
            seed,
            out,
        } => {
            let cfg = KernelConfig::load(&kernels)?;
            let run = DiffusionRun::new(m, cfg.x0, horizon, dt, seed);
            let path = in_pool(workers, || simulate_interacting(&cfg.kernels(), &run))??;
            let tests: Vec<TestFunction> = cfg.test_functions.iter().map(|c| TestFunction::from_hermite(c)).collect();
            path.write_summary_csv(suffixed(&out, "_summary.csv"), &tests)?;
            Ok(true)
        }
        Command::DiffRate { kernels, eta, out } => {
            let cfg = KernelConfig::load(&kernels)?;
            let eta = GridField::read_csv(&eta).with_context(|| format!("reading {}", eta.display()))?;
            if eta.xs().len() < 2 || eta.times().len() < 2 {
                bail!("grid field needs at least two cells and two time levels");
            }
            let pair = cfg.kernels();
            let rho = solve_fokker_planck(&pair, cfg.x0, &eta.grid_config())?;
            let report = rate_diffusion(&pair, &rho, &eta)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("I = {}", report.value_or_infinity());
            Ok(true)
        }
    }
}

fn run_and_report(spec: &ExperimentSpec, workers: Option<usize>, output: &harness::Output) -> Result<bool> {
    let out = harness::run(spec, workers)?;
    harness::write_outputs(&out, output)?;
    print_criteria(&out.report);
    Ok(out.report.passed)
}

fn print_criteria(report: &ExperimentReport) {
    for c in &report.criteria {
        println!("{}", c.line());
    }
    println!("overall: {}", if report.passed { "PASS" } else { "FAIL" });
}

fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    Ok(b.build()?.install(f))
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
