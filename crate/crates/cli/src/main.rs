use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pairjump_cli::{cmd_compare, cmd_histogram, cmd_run, cmd_validate_spec, Overrides};

#[derive(Parser)]
#[command(name = "pairjump", version, about = "Pair-state quantum jump simulations of master equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-traj")]
    n_traj: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, n_traj: self.n_traj, workers: self.workers }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble (or the direct integration) and write the time series.
    Run(Common),
    /// Bin single-trajectory values of one observable at the configured sample time.
    Histogram(Common),
    /// Run and compare against the direct integration or a reference config.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Parse an operator file and check the trace constraint.
    ValidateSpec {
        spec: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(c) => {
            let (out, written) = cmd_run(&c.config, &c.overrides())?;
            for p in &written.paths {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", written.manifest.display());
            let last = out.times.len() - 1;
            for (o, name) in out.observable_names.iter().enumerate() {
                let v = out.values[last][o];
                println!("{name} at t = {}: {} +- {}", out.times[last], v.mean, v.stderr);
            }
            println!(
                "trajectories {} (negative weight {}), jumps {}, restarts {}",
                out.stats.n_traj, out.stats.negative_weight_count, out.stats.total_jumps, out.stats.restarts
            );
        }
        Command::Histogram(c) => {
            let (h, written) = cmd_histogram(&c.config, &c.overrides())?;
            for p in &written.paths {
                println!("wrote {}", p.display());
            }
            println!("wrote {}", written.manifest.display());
            println!(
                "t = {}: {} samples, below 0: {}, above 1: {}, outside range: {}",
                h.sample_time,
                h.samples.len(),
                h.below_zero,
                h.above_one,
                h.outside_range
            );
        }
        Command::Compare { common, reference } => {
            let (r, written) = cmd_compare(&common.config, reference.as_deref(), &common.overrides())?;
            for p in &written.paths {
                println!("wrote {}", p.display());
            }
            match r.mode {
                pairjump_cli::compare::CompareMode::ExactMatch => {
                    println!("exact-match mode: {} points, max |diff| {:e}", r.n_points, r.max_abs_diff)
                }
                pairjump_cli::compare::CompareMode::Statistical => println!(
                    "{} points, max |z| {:.3}, fraction |z| < 3: {:.3}",
                    r.n_points, r.max_abs_z, r.fraction_within_3
                ),
            }
        }
        Command::ValidateSpec { spec, tol } => {
            let check = cmd_validate_spec(&spec, tol)?;
            println!("residual {:e} (tol {:e}): {}", check.residual, check.tol, if check.passed { "ok" } else { "VIOLATED" });
            if !check.passed {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
