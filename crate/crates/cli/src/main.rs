use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use exo_gate::calibrate::ObjectiveMode;
use exo_gate_cli::config::RunConfig;
use exo_gate_cli::output::{sweep_summary, write_sweep_csv, Metadata, SimulationReport, VerifyReport};
use exo_gate_cli::run::{run_sweep, simulate, PointOutcome};
use exo_gate_cli::verify::{run_checks, Perturbation};
use exo_gate_cli::VERSION;

#[derive(Parser, Debug)]
#[command(name = "exo-gate", version = VERSION, about = "Adiabatic two-qubit gate for exchange-only qubits")]
struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed of the noise trials.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise trials per point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Calibration objective.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite.
    Verify {
        /// Shift one reduced matrix element by this amount (fault injection).
        #[arg(long, hide = true)]
        perturb_reduced: Option<f64>,
    },
    /// Calibrate and noise-test a grid of pulse widths.
    Sweep,
    /// One calibrated gate with full diagnostics.
    Simulate {
        /// Pulse width `Omega^A sigma_t`.
        #[arg(long)]
        sigma_t: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    J1,
    Weighted,
}

impl From<ModeArg> for ObjectiveMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::J1 => ObjectiveMode::J1Only,
            ModeArg::Weighted => ObjectiveMode::Weighted,
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.noise.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    if let Some(trials) = cli.trials {
        config.noise.trials = trials;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode.into();
    }
    if let Command::Simulate { sigma_t: Some(s) } = cli.command {
        config.sigma_t = s;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    fs::write(path, text + "\n").map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn out_dir(config: &RunConfig) -> Result<&Path, String> {
    fs::create_dir_all(&config.out_dir).map_err(|e| format!("cannot create {}: {e}", config.out_dir.display()))?;
    Ok(&config.out_dir)
}

fn verify(cli: &Cli, perturb: Option<f64>) -> Result<bool, String> {
    let checks = run_checks(perturb.map(Perturbation::small));
    for c in &checks {
        println!("{c}");
    }
    let passed = checks.iter().all(|c| c.passed());
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if let Some(out) = &cli.out {
        fs::create_dir_all(out).map_err(|e| e.to_string())?;
        write_json(&out.join("verify.json"), &VerifyReport { version: VERSION.into(), passed, checks })?;
    }
    Ok(passed)
}

fn sweep(config: &RunConfig) -> Result<bool, String> {
    let points = run_sweep(config).map_err(|e| e.to_string())?;
    let dir = out_dir(config)?;
    let csv_path = dir.join("sweep.csv");
    let file = fs::File::create(&csv_path).map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    write_sweep_csv(file, config, &points).map_err(|e| e.to_string())?;
    println!("{:>10} {:>11} {:>10} {:>10} {:>10} {:>10}", "sigma_t", "amplitude", "D_J0", "D_J1", "noisy obj", "+-");
    for p in &points {
        match p {
            PointOutcome::Done(p) => println!(
                "{:>10.2} {:>11.5e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.2e}",
                p.sigma_t,
                p.calibration.amplitude,
                p.calibration.figures.j0.d,
                p.calibration.figures.j1.d,
                p.noise.objective.mean,
                p.noise.objective.std
            ),
            PointOutcome::Failed(f) => println!("{:>10.2} failed: {}", f.sigma_t, f.error),
        }
    }
    let all_done = points.iter().all(|p| p.point().is_some());
    write_json(&dir.join("sweep.json"), &sweep_summary(config, points))?;
    println!("wrote {} and sweep.json", csv_path.display());
    Ok(all_done)
}

fn simulate_one(config: &RunConfig) -> Result<bool, String> {
    let simulation = simulate(config).map_err(|e| e.to_string())?;
    for f in &simulation.report.noiseless {
        println!("J={}: D {:.4e}  leakage {:.4e}", f.j.value(), f.d, f.leakage);
    }
    let report = SimulationReport { metadata: Metadata::new(config), sigma_t: config.sigma_t, simulation };
    let path = out_dir(config)?.join("simulate.json");
    write_json(&path, &report)?;
    println!("wrote {}", path.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify { perturb_reduced } => verify(&cli, *perturb_reduced),
        Command::Sweep => load_config(&cli).and_then(|c| sweep(&c)),
        Command::Simulate { .. } => load_config(&cli).and_then(|c| simulate_one(&c)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
