//! Command implementations behind the CLI: window export, single-planner
//! campaigns and paired three-planner comparisons.
//!
//! Output layout of a run directory:
//! `manifest.json` (written first), `metrics.csv` and `summary.json`
//! (deterministic given the manifest), `timing.csv` (wall-clock solve
//! times), `comparison.csv` for comparisons, and `trace/` with one
//! JSON-lines file per planner and trial when tracing is on.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, Mission, PlannerKind, SimConfig, SolverKind};
use crate::error::{Error, Result};
use crate::geometry::{write_windows, write_windows_file};
use crate::sim::{run_campaign, trial_windows, Campaign, CampaignSummary, Estimate, RunOptions};

/// Process exit code for an error: 2 for bad input, 1 for runtime failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::Validation { .. } | Error::Json(_) => 2,
        _ => 1,
    }
}

/// Load a mission file, optionally overriding its horizon.
pub fn load_mission(path: &Path, horizon_hr: Option<f64>) -> Result<Mission> {
    let mut config: SimConfig = read_json(path)?;
    if let Some(h) = horizon_hr {
        config.horizon_hr = h;
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Mission::from_config(config, base)
}

/// Write the deterministic (unjittered) window list for a mission to `out`,
/// or to stdout when `out` is `None`. Returns the number of windows.
pub fn cmd_windows(config: &Path, horizon_hr: Option<f64>, out: Option<&Path>) -> Result<usize> {
    let mission = load_mission(config, horizon_hr)?;
    let windows = trial_windows(&mission, 0)?;
    match out {
        Some(path) => write_windows_file(path, &windows)?,
        None => write_windows(std::io::stdout().lock(), &windows)?,
    }
    Ok(windows.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArgs {
    pub config: PathBuf,
    pub planners: Vec<PlannerKind>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub force: bool,
    pub solver: Option<SolverKind>,
    pub horizon_hr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PathBuf,
    pub planners: Vec<PlannerKind>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub solver: SolverKind,
    pub horizon_hr: f64,
    pub version: String,
    pub git_describe: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Refuse to reuse a non-empty directory unless forced.
fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !out.is_dir() {
            return Err(Error::Config(format!("{} exists and is not a directory", out.display())));
        }
        let occupied = fs::read_dir(out)?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

const METRICS_HEADER: [&str; 14] = [
    "planner",
    "trial",
    "seed",
    "n",
    "acquired",
    "lost",
    "unresolved",
    "lethal_initial",
    "lethal_recovered",
    "overall_pct",
    "lethal_pct",
    "actions",
    "solver_calls",
    "suboptimal_solves",
];

fn write_metrics(path: &Path, campaigns: &[Campaign]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for c in campaigns {
        for t in &c.trials {
            w.write_record([
                t.planner.name().to_string(),
                t.trial.to_string(),
                t.seed.to_string(),
                t.n.to_string(),
                t.acquired.to_string(),
                t.lost.to_string(),
                t.unresolved.to_string(),
                t.lethal_initial.to_string(),
                t.lethal_recovered.to_string(),
                t.overall_pct.to_string(),
                opt(t.lethal_pct),
                t.actions.to_string(),
                t.solver_calls.to_string(),
                t.suboptimal_solves.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, campaigns: &[Campaign]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["planner", "trial", "solver_calls", "solve_mean_s", "solve_max_s"])?;
    for c in campaigns {
        for t in &c.trials {
            w.write_record([
                t.planner.name().to_string(),
                t.trial.to_string(),
                t.solver_calls.to_string(),
                format!("{:.6}", t.solve_mean_s()),
                format!("{:.6}", t.solve_max_s()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_traces(dir: &Path, campaigns: &[Campaign]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for c in campaigns {
        for t in &c.trials {
            let path = dir.join(format!("{}_trial{:04}.jsonl", t.planner.name(), t.trial));
            let mut w = BufWriter::new(File::create(path)?);
            for rec in &t.trace {
                serde_json::to_writer(&mut w, rec)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Paired comparison: one row per metric, one column group per planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub trials: usize,
    pub seed: u64,
    pub summaries: Vec<CampaignSummary>,
    pub solve_seconds: Vec<Estimate>,
}

impl Comparison {
    pub fn summary(&self, planner: PlannerKind) -> Option<&CampaignSummary> {
        self.summaries.iter().find(|s| s.planner == planner)
    }

    fn rows(&self) -> Vec<(&'static str, Vec<Estimate>)> {
        vec![
            ("overall_pct", self.summaries.iter().map(|s| s.overall_pct).collect()),
            ("lethal_pct", self.summaries.iter().map(|s| s.lethal_pct).collect()),
            ("solve_mean_s", self.solve_seconds.clone()),
        ]
    }

    /// CSV table; CI columns are omitted for a single trial.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let with_ci = self.trials > 1;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string()];
        for s in &self.summaries {
            header.push(s.planner.name().to_string());
            if with_ci {
                header.push(format!("{}_ci95", s.planner.name()));
            }
        }
        w.write_record(&header)?;
        for (name, cells) in self.rows() {
            // Solve times are wall-clock; keep them out of the deterministic table.
            if name == "solve_mean_s" {
                continue;
            }
            let mut rec = vec![name.to_string()];
            for e in cells {
                rec.push(fmt_mean(e.mean));
                if with_ci {
                    rec.push(e.ci95.map(|c| format!("{c:.2}")).unwrap_or_default());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable table.
    pub fn render(&self) -> String {
        let mut s = format!("{:<14}", "metric");
        for sum in &self.summaries {
            s.push_str(&format!("{:>18}", sum.planner.name()));
        }
        s.push('\n');
        for (name, cells) in self.rows() {
            s.push_str(&format!("{name:<14}"));
            for e in cells {
                let cell = match e.ci95 {
                    Some(c) if name != "solve_mean_s" => format!("{} ± {c:.1}", fmt_mean(e.mean)),
                    _ if name == "solve_mean_s" => format!("{:.3}", e.mean),
                    _ => fmt_mean(e.mean),
                };
                s.push_str(&format!("{cell:>18}"));
            }
            s.push('\n');
        }
        s
    }
}

fn fmt_mean(x: f64) -> String {
    if x.is_nan() {
        "n/a".into()
    } else {
        format!("{x:.1}")
    }
}

fn execute(command: &str, args: &RunArgs) -> Result<Vec<Campaign>> {
    if args.trials == 0 {
        return Err(Error::Config("--trials must be >= 1".into()));
    }
    let mission = load_mission(&args.config, args.horizon_hr)?;
    prepare_out(&args.out, args.force)?;

    let mut opts = RunOptions::from_mission(&mission);
    if let Some(kind) = args.solver {
        opts.solver.kind = kind;
    }
    opts.trace = args.trace;

    let mut manifest = RunManifest {
        command: command.into(),
        config: args.config.clone(),
        planners: args.planners.clone(),
        trials: args.trials,
        seed: args.seed,
        out: args.out.clone(),
        trace: args.trace,
        solver: opts.solver.kind,
        horizon_hr: mission.config.horizon_hr,
        version: env!("CARGO_PKG_VERSION").into(),
        git_describe: git_describe(),
        started_at: Utc::now(),
        finished_at: None,
    };
    let manifest_path = args.out.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    let mut campaigns = Vec::with_capacity(args.planners.len());
    for &planner in &args.planners {
        log::info!("{}: {} trial(s), seed {}", planner.name(), args.trials, args.seed);
        campaigns.push(run_campaign(&mission, planner, args.trials, args.seed, &opts)?);
    }

    write_metrics(&args.out.join("metrics.csv"), &campaigns)?;
    write_timing(&args.out.join("timing.csv"), &campaigns)?;
    let summaries: Vec<&CampaignSummary> = campaigns.iter().map(|c| &c.summary).collect();
    write_json(&args.out.join("summary.json"), &summaries)?;
    if args.trace {
        write_traces(&args.out.join("trace"), &campaigns)?;
    }

    manifest.finished_at = Some(Utc::now());
    write_json(&manifest_path, &manifest)?;
    log::info!(
        "finished at {}",
        manifest.finished_at.expect("set").to_rfc3339_opts(SecondsFormat::Secs, true)
    );
    Ok(campaigns)
}

/// Campaign for the single planner in `args.planners`.
pub fn cmd_run(args: &RunArgs) -> Result<Campaign> {
    if args.planners.len() != 1 {
        return Err(Error::Config("run takes exactly one planner".into()));
    }
    Ok(execute("run", args)?.remove(0))
}

/// All three planners on paired seeds.
pub fn cmd_compare(args: &RunArgs) -> Result<Comparison> {
    let args = RunArgs { planners: PlannerKind::ALL.to_vec(), ..args.clone() };
    let campaigns = execute("compare", &args)?;
    let cmp = Comparison {
        trials: args.trials,
        seed: args.seed,
        summaries: campaigns.iter().map(|c| c.summary.clone()).collect(),
        solve_seconds: campaigns.iter().map(Campaign::solve_seconds).collect(),
    };
    cmp.write_csv(File::create(args.out.join("comparison.csv"))?)?;
    Ok(cmp)
}
