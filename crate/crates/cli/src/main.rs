use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use immpc::config::{PlannerKind, SolverKind};
use immpc::harness::{cmd_compare, cmd_run, cmd_windows, exit_code, RunArgs};

#[derive(Parser)]
#[command(name = "immpc", version, about = "Fault-aware contact scheduling for satellite fleets")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute contact and beacon windows and write them as CSV.
    Windows {
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the mission horizon, hours.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Run a Monte Carlo campaign for one planner.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_planner, default_value = "imm")]
        planner: PlannerKind,
    },
    /// Run all planners on paired seeds and print a comparison table.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write per-trial belief trajectories as JSON lines.
    #[arg(long)]
    trace: bool,
    /// Reuse a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverKind>,
    #[arg(long)]
    horizon: Option<f64>,
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    s.parse().map_err(|_| format!("unknown planner '{s}' (expected imm, binary or bipartite)"))
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|_| format!("unknown solver '{s}' (expected exact or greedy)"))
}

impl Common {
    fn into_args(self, planners: Vec<PlannerKind>) -> RunArgs {
        RunArgs {
            config: self.config,
            planners,
            trials: self.trials,
            seed: self.seed,
            out: self.out,
            trace: self.trace,
            force: self.force,
            solver: self.solver,
            horizon_hr: self.horizon,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Windows { config, out, horizon } => cmd_windows(&config, horizon, out.as_deref()).map(|n| {
            log::info!("{n} windows");
        }),
        Cmd::Run { common, planner } => cmd_run(&common.into_args(vec![planner])).map(|c| {
            let s = &c.summary;
            println!(
                "{}: overall {:.1}%  lethal recovered {}/{}",
                s.planner.name(),
                s.overall_pct.mean,
                s.lethal_recovered,
                s.lethal_initial
            );
        }),
        Cmd::Compare { common } => cmd_compare(&common.into_args(Vec::new())).map(|c| print!("{}", c.render())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
