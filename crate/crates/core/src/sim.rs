//! Closed-loop simulation: ground truth, receding-horizon execution,
//! observation generation and Monte Carlo campaigns.
//!
//! Every planner is scored against the same evaluation belief, an IMM
//! filter fed with the observations the planner's own actions produce. An
//! asset counts as acquired once a contact update lifts its nominal-mode
//! mass above the threshold.
//!
//! All randomness is keyed by the trial seed: the truth by asset, the
//! geometry jitter by asset, and each window's observation and intervention
//! draws by window id. Planners run on one seed therefore face identical
//! truths and identical draws for any window they both execute.

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{binary_mpc_schedule, bipartite_schedule, AlivenessState};
use crate::belief::Belief;
use crate::config::{Mission, PlannerKind};
use crate::error::{Error, Result};
use crate::fault::ModeId;
use crate::geometry::{add_hours, generate_windows, ContactWindow};
use crate::milp::{build_problem, next_action, solve, SolverOptions};
use crate::observation::{ActionKind, Observation};
use crate::scenario::{sample_outcomes, sample_trajectories};
use crate::seeds::{derive_seed, unit_draw};

const TRUTH_STREAM: u64 = 10;
const OBSERVATION_STREAM: u64 = 11;
const INTERVENTION_STREAM: u64 = 12;
const GEOMETRY_STREAM: u64 = 13;
const SCENARIO_STREAM: u64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetTruth {
    pub asset: u32,
    pub initial_mode: ModeId,
    /// Fault onset (separation).
    pub onset: DateTime<Utc>,
    /// Lethal modes only.
    pub t_death: Option<DateTime<Utc>>,
    /// Intervention time needed to recover, minutes.
    pub recovery_min: Option<f64>,
    /// First successful intervention.
    pub intervention_start: Option<DateTime<Utc>>,
    /// Return to nominal, set only when it precedes death.
    pub recovered_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetTruth {
    pub ok: ModeId,
    pub dead: ModeId,
    pub assets: Vec<AssetTruth>,
}

impl FleetTruth {
    /// True mode of `asset` at time `t`.
    pub fn mode_at(&self, asset: u32, t: DateTime<Utc>) -> ModeId {
        let a = &self.assets[asset as usize];
        if a.initial_mode == self.dead {
            return self.dead;
        }
        if a.recovered_at.is_some_and(|r| r <= t) {
            return self.ok;
        }
        if a.t_death.is_some_and(|d| d <= t) {
            return self.dead;
        }
        a.initial_mode
    }

    pub fn is_dead_at(&self, asset: u32, t: DateTime<Utc>) -> bool {
        self.mode_at(asset, t) == self.dead
    }

    /// Record a successful intervention at `t`. The asset stays under
    /// intervention from the first success on and returns to nominal once
    /// its required recovery time has elapsed, unless it dies first.
    pub fn intervene(&mut self, asset: u32, t: DateTime<Utc>) {
        let a = &mut self.assets[asset as usize];
        if a.intervention_start.is_some() {
            return;
        }
        a.intervention_start = Some(t);
        if let Some(r) = a.recovery_min {
            let done = t + Duration::milliseconds((r * 60_000.0).round() as i64);
            if a.t_death.map_or(true, |d| done < d) {
                a.recovered_at = Some(done);
            }
        }
    }
}

/// Sample the initial fleet truth for one trial.
pub fn init_truth(mission: &Mission, seed: u64) -> FleetTruth {
    let modes = mission.system.modes();
    let cfg = &mission.config;
    let onset = add_hours(cfg.epoch, -cfg.t_sep_hr);
    let total: f64 = mission.truth_mix.iter().sum();
    let assets = (0..cfg.fleet.size as u32)
        .map(|asset| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TRUTH_STREAM, asset as u64]));
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut mode = modes.ok();
            for (m, &p) in mission.truth_mix.iter().enumerate() {
                acc += p;
                if p > 0.0 && u < acc {
                    mode = m;
                    break;
                }
            }
            let fm = modes.mode(mode);
            let ttd = fm.ttd_hours.map(|d| d.sample(&mut rng));
            let recovery_min = fm.recovery_minutes.map(|d| d.sample(&mut rng));
            AssetTruth {
                asset,
                initial_mode: mode,
                onset,
                t_death: ttd.map(|h| add_hours(onset, h)),
                recovery_min,
                intervention_start: None,
                recovered_at: None,
            }
        })
        .collect();
    FleetTruth { ok: modes.ok(), dead: modes.dead(), assets }
}

/// Sample the observation of `window` from the true mode at its start.
pub fn observe(mission: &Mission, truth: &FleetTruth, window: &ContactWindow, seed: u64) -> Result<Observation> {
    let sys = &mission.system;
    let mode = truth.mode_at(window.asset, window.start);
    let p_link = sys.link.link_probability(window.e_max_deg);
    let probs = sys.table.likelihood(mode, window.action, p_link)?;
    let u = unit_draw(seed, &[OBSERVATION_STREAM, window.id]);
    let mut acc = 0.0;
    for o in window.action.alphabet() {
        acc += probs[o.index()];
        if u < acc {
            return Ok(*o);
        }
    }
    Ok(*window.action.alphabet().last().expect("nonempty alphabet"))
}

/// Windows for one trial: fixed geometry, or jittered phases when configured.
pub fn trial_windows(mission: &Mission, seed: u64) -> Result<Vec<ContactWindow>> {
    let cfg = &mission.config;
    let jitter: Vec<f64> = if cfg.fleet.phase_jitter_deg > 0.0 {
        (0..cfg.fleet.size as u64)
            .map(|a| (2.0 * unit_draw(seed, &[GEOMETRY_STREAM, a]) - 1.0) * cfg.fleet.phase_jitter_deg)
            .collect()
    } else {
        Vec::new()
    };
    let orbits = cfg.fleet.orbits(cfg.epoch, &jitter);
    let end = add_hours(cfg.epoch, cfg.horizon_hr);
    generate_windows(&orbits, &mission.stations, cfg.epoch, end, cfg.step_s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Acquired,
    Lost,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetOutcome {
    pub asset: u32,
    pub initial_mode: String,
    pub lethal: bool,
    pub acquired_at: Option<DateTime<Utc>>,
    pub recovered_at: Option<DateTime<Utc>>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: DateTime<Utc>,
    pub asset: u32,
    pub window: u64,
    pub action: ActionKind,
    pub observation: Observation,
    pub truth: String,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub planner: PlannerKind,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub acquired: usize,
    pub lost: usize,
    pub unresolved: usize,
    pub lethal_initial: usize,
    pub lethal_recovered: usize,
    pub overall_pct: f64,
    /// Undefined for trials without lethal faults.
    pub lethal_pct: Option<f64>,
    pub actions: usize,
    pub solver_calls: usize,
    pub suboptimal_solves: usize,
    /// Wall-clock planning time per solver call, seconds.
    pub solve_seconds: Vec<f64>,
    pub assets: Vec<AssetOutcome>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceRecord>,
}

impl TrialMetrics {
    pub fn solve_mean_s(&self) -> f64 {
        if self.solve_seconds.is_empty() {
            0.0
        } else {
            self.solve_seconds.iter().sum::<f64>() / self.solve_seconds.len() as f64
        }
    }

    pub fn solve_max_s(&self) -> f64 {
        self.solve_seconds.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub solver: SolverOptions,
    pub trace: bool,
}

impl RunOptions {
    pub fn from_mission(mission: &Mission) -> Self {
        let c = &mission.config;
        RunOptions {
            solver: SolverOptions { kind: c.solver, exact_limit: c.exact_limit, node_limit: c.node_limit },
            trace: false,
        }
    }
}

/// IMM beliefs on the prediction grid anchored at the mission epoch.
struct Tracker {
    epoch: DateTime<Utc>,
    dt: f64,
    steps: usize,
    beliefs: Vec<Belief>,
}

impl Tracker {
    fn time(&self) -> DateTime<Utc> {
        add_hours(self.epoch, self.steps as f64 * self.dt)
    }

    fn advance_to(&mut self, t: DateTime<Utc>, mission: &Mission) {
        while add_hours(self.epoch, (self.steps + 1) as f64 * self.dt) <= t {
            for b in &mut self.beliefs {
                *b = b.predict(&mission.system.transitions);
            }
            self.steps += 1;
        }
    }
}

struct Run<'a> {
    mission: &'a Mission,
    seed: u64,
    truth: FleetTruth,
    tracker: Tracker,
    acquired: Vec<Option<DateTime<Utc>>>,
    priorities: BTreeMap<u32, f64>,
    trace: Option<Vec<TraceRecord>>,
    actions: usize,
    /// Antennas and assets are held until the executed window ends.
    station_busy: BTreeMap<String, DateTime<Utc>>,
    asset_busy: Vec<DateTime<Utc>>,
}

impl Run<'_> {
    /// Execute one window against the truth and fold the outcome into the
    /// evaluation belief.
    fn execute(&mut self, w: &ContactWindow) -> Result<Observation> {
        let m = self.mission;
        let sys = &m.system;
        self.tracker.advance_to(w.start, m);
        let obs = observe(m, &self.truth, w, self.seed)?;
        let mode = self.truth.mode_at(w.asset, w.start);
        let fault = mode != self.truth.ok && mode != self.truth.dead;
        let responsive = sys.modes().mode(mode).responds_to(w.action);
        let succeeded = match w.action {
            ActionKind::Contact => obs == Observation::Contact,
            ActionKind::Beacon => false,
            ActionKind::Recover => {
                responsive
                    && unit_draw(self.seed, &[INTERVENTION_STREAM, w.id])
                        < sys.success.p_succ(mode, ActionKind::Recover, 0.0)
            }
        };
        if fault && responsive && succeeded {
            self.truth.intervene(w.asset, w.start);
        }

        let p_link = sys.link.link_probability(w.e_max_deg);
        let b = &mut self.tracker.beliefs[w.asset as usize];
        *b = match b.update(w.action, obs, p_link, &sys.table) {
            Ok(next) => next,
            Err(Error::ImpossibleEvidence { .. }) => {
                log::warn!("asset {}: {} has zero predicted probability; belief left unchanged", w.asset, obs.name());
                b.clone()
            }
            Err(e) => return Err(e),
        };
        if w.action == ActionKind::Recover {
            *b = b.apply_intervention(sys.modes().ok(), &sys.success.recover_vector());
        }
        if w.action == ActionKind::Contact && b.is_acquired(sys.modes().ok(), m.config.theta) {
            self.acquired[w.asset as usize].get_or_insert(w.end);
        }
        self.actions += 1;
        self.station_busy.insert(w.station.clone(), w.end);
        self.asset_busy[w.asset as usize] = w.end;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord {
                t: w.start,
                asset: w.asset,
                window: w.id,
                action: w.action,
                observation: obs,
                truth: sys.modes().mode(mode).name.clone(),
                mu: b.mu.clone(),
            });
        }
        Ok(obs)
    }

    /// Asset still unacquired, and both it and the station are free at the
    /// window's start.
    fn available(&self, w: &ContactWindow) -> bool {
        self.acquired[w.asset as usize].is_none()
            && self.asset_busy[w.asset as usize] <= w.start
            && self.station_busy.get(&w.station).map_or(true, |&b| b <= w.start)
    }
}

/// Run one trial of `planner` on precomputed trial windows.
pub fn run_trial_with_windows(
    mission: &Mission,
    planner: PlannerKind,
    trial: usize,
    seed: u64,
    windows: &[ContactWindow],
    opts: &RunOptions,
) -> Result<TrialMetrics> {
    let cfg = &mission.config;
    let sys = &mission.system;
    let modes = sys.modes();
    let n = cfg.fleet.size;
    let epoch = cfg.epoch;
    let end = add_hours(epoch, cfg.horizon_hr);

    let beliefs = (0..n as u32)
        .map(|a| Belief::new(a, mission.prior.clone(), cfg.t_sep_hr))
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run {
        mission,
        seed,
        truth: init_truth(mission, seed),
        tracker: Tracker { epoch, dt: cfg.dt_hr, steps: 0, beliefs },
        acquired: vec![None; n],
        priorities: mission.priorities.iter().enumerate().map(|(a, &q)| (a as u32, q)).collect(),
        trace: opts.trace.then(Vec::new),
        actions: 0,
        station_busy: BTreeMap::new(),
        asset_busy: vec![epoch; n],
    };

    let mut solve_seconds = Vec::new();
    let mut suboptimal = 0usize;
    let h_steps = (cfg.planning_horizon_hr / cfg.dt_hr - 1e-9).ceil().max(1.0) as usize;

    match planner {
        PlannerKind::Bipartite => {
            let clock = Instant::now();
            let plan = bipartite_schedule(windows, &run.priorities, &sys.link);
            if !windows.is_empty() {
                solve_seconds.push(clock.elapsed().as_secs_f64());
            }
            let mut chosen: Vec<&ContactWindow> =
                windows.iter().filter(|w| plan.selected.binary_search(&w.id).is_ok()).collect();
            chosen.sort_by_key(|w| (w.start, w.id));
            for w in chosen {
                if w.start < end && run.available(w) {
                    run.execute(w)?;
                }
            }
        }
        PlannerKind::Binary | PlannerKind::Imm => {
            let mut aliveness = AlivenessState::uniform(0..n as u32, 1.0 - mission.prior[modes.dead()]);
            let mut t = epoch;
            let mut solves = 0u64;
            while t < end {
                run.tracker.advance_to(t, mission);
                let horizon_end = add_hours(t, cfg.planning_horizon_hr).min(end);
                let mut cands: Vec<ContactWindow> = windows
                    .iter()
                    .filter(|w| w.start >= t && w.start < horizon_end && run.available(w))
                    .cloned()
                    .collect();

                let chosen = if cands.is_empty() {
                    None
                } else {
                    let clock = Instant::now();
                    let schedule = match planner {
                        PlannerKind::Binary => {
                            binary_mpc_schedule(&aliveness, &cands, &run.priorities, &sys.link, &opts.solver)?
                        }
                        _ => {
                            let recover: Vec<ContactWindow> = cands
                                .iter()
                                .filter(|w| w.action == ActionKind::Contact)
                                .filter(|w| {
                                    run.tracker.beliefs[w.asset as usize].lethal_mass(&sys.transitions)
                                        > cfg.recover_threshold
                                })
                                .map(ContactWindow::as_recover)
                                .collect();
                            cands.extend(recover);
                            let mut assets: Vec<u32> = cands.iter().map(|w| w.asset).collect();
                            assets.sort_unstable();
                            assets.dedup();
                            let beliefs: Vec<Belief> =
                                assets.iter().map(|&a| run.tracker.beliefs[a as usize].clone()).collect();
                            let now = run.tracker.time();
                            let scen_seed = derive_seed(seed, &[SCENARIO_STREAM, solves]);
                            let set = sample_trajectories(
                                &beliefs,
                                &sys.transitions,
                                now,
                                h_steps,
                                cfg.scenarios,
                                scen_seed,
                            )?;
                            let set = sample_outcomes(set, &cands, &sys.link, &sys.success, scen_seed)?;
                            let problem =
                                build_problem(&beliefs, &cands, &set, sys, &run.priorities, cfg.lambda, now)?;
                            solve(&problem, &opts.solver)?
                        }
                    };
                    solve_seconds.push(clock.elapsed().as_secs_f64());
                    solves += 1;
                    if !schedule.optimal {
                        suboptimal += 1;
                    }
                    next_action(&schedule, &cands).cloned()
                };

                match chosen {
                    Some(w) => {
                        let obs = run.execute(&w)?;
                        if planner == PlannerKind::Binary {
                            let p_link = sys.link.link_probability(w.e_max_deg);
                            aliveness.update(w.asset, w.action, obs, p_link, &sys.table, modes)?;
                        }
                        t = w.start;
                    }
                    None => t = add_hours(t, cfg.dt_hr),
                }
            }
        }
    }

    Ok(finish(run, planner, trial, solve_seconds, suboptimal, end))
}

fn finish(
    run: Run<'_>,
    planner: PlannerKind,
    trial: usize,
    solve_seconds: Vec<f64>,
    suboptimal: usize,
    end: DateTime<Utc>,
) -> TrialMetrics {
    let modes = run.mission.system.modes();
    let n = run.truth.assets.len();
    let mut assets = Vec::with_capacity(n);
    let (mut acquired, mut lost, mut unresolved, mut lethal_initial, mut lethal_recovered) = (0, 0, 0, 0, 0);
    for a in &run.truth.assets {
        let mode = modes.mode(a.initial_mode);
        let acq = run.acquired[a.asset as usize];
        let outcome = if acq.is_some() {
            acquired += 1;
            Outcome::Acquired
        } else if run.truth.is_dead_at(a.asset, end) {
            lost += 1;
            Outcome::Lost
        } else {
            unresolved += 1;
            Outcome::Unresolved
        };
        if mode.lethal {
            lethal_initial += 1;
            if acq.is_some() && a.recovered_at.is_some_and(|r| r <= end) {
                lethal_recovered += 1;
            }
        }
        assets.push(AssetOutcome {
            asset: a.asset,
            initial_mode: mode.name.clone(),
            lethal: mode.lethal,
            acquired_at: acq,
            recovered_at: a.recovered_at.filter(|&r| r <= end),
            outcome,
        });
    }
    TrialMetrics {
        planner,
        trial,
        seed: run.seed,
        n,
        acquired,
        lost,
        unresolved,
        lethal_initial,
        lethal_recovered,
        overall_pct: if n == 0 { 0.0 } else { 100.0 * acquired as f64 / n as f64 },
        lethal_pct: (lethal_initial > 0).then(|| 100.0 * lethal_recovered as f64 / lethal_initial as f64),
        actions: run.actions,
        solver_calls: solve_seconds.len(),
        suboptimal_solves: suboptimal,
        solve_seconds,
        assets,
        trace: run.trace.unwrap_or_default(),
    }
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    derive_seed(base_seed, &[trial as u64])
}

pub fn run_trial(mission: &Mission, planner: PlannerKind, trial: usize, base_seed: u64, opts: &RunOptions) -> Result<TrialMetrics> {
    let seed = trial_seed(base_seed, trial);
    let windows = trial_windows(mission, seed)?;
    run_trial_with_windows(mission, planner, trial, seed, &windows, opts)
}

/// Mean and normal-approximation 95% half-width; the half-width is absent
/// for fewer than two samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: Option<f64>,
    pub samples: usize,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Estimate {
        let k = xs.len();
        if k == 0 {
            return Estimate { mean: f64::NAN, ci95: None, samples: 0 };
        }
        let mean = xs.iter().sum::<f64>() / k as f64;
        let ci95 = (k >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            1.96 * (var / k as f64).sqrt()
        });
        Estimate { mean, ci95, samples: k }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub planner: PlannerKind,
    pub trials: usize,
    pub base_seed: u64,
    pub overall_pct: Estimate,
    /// Over trials with at least one lethal fault.
    pub lethal_pct: Estimate,
    /// Pooled over all trials.
    pub lethal_recovered: usize,
    pub lethal_initial: usize,
    pub acquired: usize,
    pub assets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub trials: Vec<TrialMetrics>,
    pub summary: CampaignSummary,
}

impl Campaign {
    pub fn solve_seconds(&self) -> Estimate {
        let xs: Vec<f64> = self.trials.iter().map(TrialMetrics::solve_mean_s).collect();
        Estimate::of(&xs)
    }
}

pub fn summarize(planner: PlannerKind, base_seed: u64, trials: &[TrialMetrics]) -> CampaignSummary {
    let overall: Vec<f64> = trials.iter().map(|t| t.overall_pct).collect();
    let lethal: Vec<f64> = trials.iter().filter_map(|t| t.lethal_pct).collect();
    CampaignSummary {
        planner,
        trials: trials.len(),
        base_seed,
        overall_pct: Estimate::of(&overall),
        lethal_pct: Estimate::of(&lethal),
        lethal_recovered: trials.iter().map(|t| t.lethal_recovered).sum(),
        lethal_initial: trials.iter().map(|t| t.lethal_initial).sum(),
        acquired: trials.iter().map(|t| t.acquired).sum(),
        assets: trials.iter().map(|t| t.n).sum(),
    }
}

/// Run `trials` seeded trials in parallel; results are ordered by trial index.
pub fn run_campaign(
    mission: &Mission,
    planner: PlannerKind,
    trials: usize,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<Campaign> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    let shared = if mission.config.fleet.phase_jitter_deg > 0.0 { None } else { Some(trial_windows(mission, 0)?) };
    let results: Vec<TrialMetrics> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let seed = trial_seed(base_seed, k);
            match &shared {
                Some(w) => run_trial_with_windows(mission, planner, k, seed, w, opts),
                None => run_trial_with_windows(mission, planner, k, seed, &trial_windows(mission, seed)?, opts),
            }
        })
        .collect::<Result<_>>()?;
    let summary = summarize(planner, base_seed, &results);
    Ok(Campaign { trials: results, summary })
}
