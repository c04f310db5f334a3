//! JSON configuration: the fault/observation model, station sets and mission
//! (simulation) settings.
//!
//! A mission file may reference the model and station files by path
//! (resolved against the mission file's directory) or embed them inline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dist::BoundedDistribution;
use crate::error::{Error, Result};
use crate::fault::{FaultMode, ModeSet, TransitionMatrix, TransitionModel};
use crate::geometry::{GroundStation, OrbitSpec};
use crate::observation::{ActionKind, Affine, LikelihoodRow, LikelihoodTable, LinkModel};
use crate::scenario::SuccessModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub name: String,
    #[serde(default)]
    pub lethal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ttd_hr: Option<BoundedDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery_min: Option<BoundedDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub responsive_actions: Vec<ActionKind>,
}

/// Explicit likelihood entry: `[constant, link_coefficient]` per symbol in
/// the order CONTACT, NO_CONTACT, BEACON, NO_BEACON.
pub type AffineRowSpec = [[f64; 2]; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nominal: String,
    pub absorbing: String,
    pub modes: Vec<ModeSpec>,
    /// Row-stochastic base matrix in mode order; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_transitions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub link: LinkModel,
    /// Explicit table keyed by mode name then action; the LEOP table is
    /// derived from `link` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<BTreeMap<String, BTreeMap<ActionKind, AffineRowSpec>>>,
    /// Success probability of a recover command, by mode name.
    #[serde(default)]
    pub recover_success: BTreeMap<String, f64>,
}

/// Everything the filter, sampler and simulator need from the model file.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub transitions: TransitionModel,
    pub link: LinkModel,
    pub table: LikelihoodTable,
    pub success: SuccessModel,
}

impl SystemModel {
    pub fn modes(&self) -> &ModeSet {
        self.transitions.mode_set()
    }
}

impl ModelConfig {
    /// The five-mode LEOP model with default link parameters.
    pub fn leop() -> Self {
        let faulted = |name: &str, lethal: bool, actions: &[ActionKind]| ModeSpec {
            name: name.into(),
            lethal,
            ttd_hr: lethal.then_some(BoundedDistribution::Uniform(6.0, 24.0)),
            recovery_min: Some(BoundedDistribution::Uniform(15.0, 120.0)),
            alpha: lethal.then_some(0.5),
            responsive_actions: actions.to_vec(),
        };
        use ActionKind::*;
        ModelConfig {
            nominal: "OK".into(),
            absorbing: "DEAD".into(),
            modes: vec![
                ModeSpec {
                    name: "OK".into(),
                    lethal: false,
                    ttd_hr: None,
                    recovery_min: None,
                    alpha: None,
                    responsive_actions: vec![Contact, Beacon],
                },
                faulted("GNC", true, &[Contact, Beacon, Recover]),
                faulted("COMMS", false, &[Beacon, Recover]),
                faulted("DEP", true, &[Recover]),
                ModeSpec {
                    name: "DEAD".into(),
                    lethal: false,
                    ttd_hr: None,
                    recovery_min: None,
                    alpha: None,
                    responsive_actions: vec![],
                },
            ],
            base_transitions: None,
            link: LinkModel::default(),
            likelihood: None,
            recover_success: [("GNC", 0.9), ("COMMS", 0.9), ("DEP", 0.5)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    pub fn mode_set(&self) -> Result<ModeSet> {
        let modes: Vec<FaultMode> = self
            .modes
            .iter()
            .enumerate()
            .map(|(id, m)| FaultMode {
                id,
                name: m.name.clone(),
                lethal: m.lethal,
                ttd_hours: m.ttd_hr,
                recovery_minutes: m.recovery_min,
                alpha: m.alpha,
                responsive_actions: m.responsive_actions.clone(),
            })
            .collect();
        let find = |name: &str| {
            modes
                .iter()
                .position(|m| m.name == name)
                .ok_or_else(|| Error::Config(format!("mode `{name}` is not defined")))
        };
        let (ok, dead) = (find(&self.nominal)?, find(&self.absorbing)?);
        let mut names: Vec<&str> = modes.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("mode names must be unique".into()));
        }
        ModeSet::new(modes, ok, dead)
    }

    pub fn build(&self, dt_hours: f64) -> Result<SystemModel> {
        self.link.validate()?;
        let modes = self.mode_set()?;
        let base = match &self.base_transitions {
            Some(rows) => {
                if rows.len() != modes.len() || rows.iter().any(|r| r.len() != modes.len()) {
                    return Err(Error::Config(format!(
                        "base_transitions must be {n}x{n}",
                        n = modes.len()
                    )));
                }
                TransitionMatrix::from_rows(rows)
            }
            None => TransitionMatrix::identity(modes.len()),
        };
        let table = match &self.likelihood {
            None => LikelihoodTable::leop(&modes, &self.link)?,
            Some(spec) => {
                let mut rows: Vec<[Option<LikelihoodRow>; 3]> = vec![[None; 3]; modes.len()];
                for (name, per_action) in spec {
                    let m = modes
                        .index_of(name)
                        .ok_or_else(|| Error::Config(format!("likelihood row for unknown mode `{name}`")))?;
                    for (action, entries) in per_action {
                        rows[m][action.id()] =
                            Some(entries.map(|[c, l]| Affine { constant: c, link: l }));
                    }
                }
                LikelihoodTable::new(rows)?
            }
        };
        let mut recover = vec![0.0; modes.len()];
        for (name, &p) in &self.recover_success {
            let m = modes
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("recover_success for unknown mode `{name}`")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("recover_success[{name}] must lie in [0, 1], got {p}")));
            }
            recover[m] = p;
        }
        let success = SuccessModel::new(&modes, &table, &recover)?;
        let transitions = TransitionModel::new(modes, base, dt_hours)?;
        Ok(SystemModel { transitions, link: self.link, table, success })
    }
}

/// LEOP mode set (OK, GNC, COMMS, DEP, DEAD in that order).
pub fn leop_mode_set() -> ModeSet {
    ModelConfig::leop().mode_set().expect("built-in LEOP model is valid")
}

/// LEOP transition model with an identity base.
pub fn leop_transition_model(dt_hours: f64) -> TransitionModel {
    TransitionModel::persistent(leop_mode_set(), dt_hours).expect("built-in LEOP model is valid")
}

/// Full LEOP system model on the given replanning grid.
pub fn leop_system(dt_hours: f64) -> SystemModel {
    ModelConfig::leop().build(dt_hours).expect("built-in LEOP model is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSet {
    pub stations: Vec<GroundStation>,
}

/// A nested config given either as a path or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Source<T> {
    pub fn resolve(&self, base_dir: &Path) -> Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => read_json(&base_dir.join(p)),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Satellites deployed into one orbital plane, spread along track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub size: usize,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    #[serde(default)]
    pub raan_deg: f64,
    /// Along-track separation between consecutive satellites.
    pub spacing_deg: f64,
    /// Half-width of a uniform per-trial perturbation of each satellite's phase.
    #[serde(default)]
    pub phase_jitter_deg: f64,
}

impl FleetConfig {
    pub fn orbits(&self, epoch: DateTime<Utc>, jitter: &[f64]) -> Vec<(u32, OrbitSpec)> {
        (0..self.size)
            .map(|i| {
                let u = i as f64 * self.spacing_deg + jitter.get(i).copied().unwrap_or(0.0);
                (
                    i as u32,
                    OrbitSpec {
                        altitude_km: self.altitude_km,
                        inclination_deg: self.inclination_deg,
                        raan_deg: self.raan_deg,
                        arg_latitude_deg: u.rem_euclid(360.0),
                        epoch,
                    },
                )
            })
            .collect()
    }
}

/// Initial truth composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Composition {
    pub nominal: f64,
    pub dead: f64,
    pub faulted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    #[default]
    Imm,
    Binary,
    Bipartite,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Bipartite, PlannerKind::Binary, PlannerKind::Imm];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Imm => "imm",
            PlannerKind::Binary => "binary",
            PlannerKind::Bipartite => "bipartite",
        }
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imm" => Ok(PlannerKind::Imm),
            "binary" => Ok(PlannerKind::Binary),
            "bipartite" => Ok(PlannerKind::Bipartite),
            other => Err(Error::Config(format!("unknown planner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Exact,
    Greedy,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "greedy" => Ok(SolverKind::Greedy),
            other => Err(Error::Config(format!("unknown solver `{other}`"))),
        }
    }
}

fn d_dt() -> f64 {
    0.25
}
fn d_h() -> f64 {
    3.0
}
fn d_s() -> usize {
    50
}
fn d_lambda() -> f64 {
    0.1
}
fn d_theta() -> f64 {
    0.99
}
fn d_recover() -> f64 {
    0.05
}
fn d_exact() -> usize {
    64
}
fn d_nodes() -> u64 {
    10_000_000
}
fn d_step() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub name: String,
    pub model: Source<ModelConfig>,
    pub stations: Source<StationSet>,
    pub fleet: FleetConfig,
    /// Start of planning.
    pub epoch: DateTime<Utc>,
    pub horizon_hr: f64,
    /// Replanning and prediction grid.
    #[serde(default = "d_dt")]
    pub dt_hr: f64,
    #[serde(default = "d_h")]
    pub planning_horizon_hr: f64,
    #[serde(default = "d_s")]
    pub scenarios: usize,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_theta")]
    pub theta: f64,
    /// Prior mass on the nominal mode.
    pub prior_ok: f64,
    /// Relative split of the remaining prior mass, by mode name.
    pub prior_split: BTreeMap<String, f64>,
    pub composition: Composition,
    /// Relative frequency of each fault mode among faulted assets.
    pub fault_mix: BTreeMap<String, f64>,
    /// Hours between separation (fault onset) and the planning epoch.
    #[serde(default)]
    pub t_sep_hr: f64,
    /// Per-asset priority weights; all ones when empty.
    #[serde(default)]
    pub priorities: Vec<f64>,
    /// Lethal belief mass above which recover candidates are offered.
    #[serde(default = "d_recover")]
    pub recover_threshold: f64,
    #[serde(default = "d_exact")]
    pub exact_limit: usize,
    #[serde(default = "d_nodes")]
    pub node_limit: u64,
    /// Visibility scan step, seconds.
    #[serde(default = "d_step")]
    pub step_s: f64,
    #[serde(default)]
    pub solver: SolverKind,
}

/// A mission with its nested configs resolved and the model built.
#[derive(Debug, Clone)]
pub struct Mission {
    pub config: SimConfig,
    pub model_config: ModelConfig,
    pub system: SystemModel,
    pub stations: Vec<GroundStation>,
    /// Initial belief shared by every asset.
    pub prior: Vec<f64>,
    /// Categorical distribution of the initial true mode.
    pub truth_mix: Vec<f64>,
    pub priorities: Vec<f64>,
}

impl Mission {
    pub fn load(path: &Path) -> Result<Mission> {
        let config: SimConfig = read_json(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Mission::from_config(config, base)
    }

    /// Resolve nested sources against `base_dir` and validate everything,
    /// reporting every problem found rather than the first.
    pub fn from_config(config: SimConfig, base_dir: &Path) -> Result<Mission> {
        let mut problems = config.validate();
        let model_config = config.model.resolve(base_dir);
        let stations = config.stations.resolve(base_dir);

        let system = match &model_config {
            Ok(m) => m.build(config.dt_hr).map_err(|e| problems.push(e.to_string())).ok(),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        match &stations {
            Ok(s) => {
                for st in &s.stations {
                    if let Err(e) = st.validate() {
                        problems.push(e.to_string());
                    }
                }
                let mut names: Vec<&str> = s.stations.iter().map(|s| s.name.as_str()).collect();
                names.sort_unstable();
                if names.windows(2).any(|w| w[0] == w[1]) {
                    problems.push("station names must be unique".into());
                }
            }
            Err(e) => problems.push(e.to_string()),
        }

        let mut prior = Vec::new();
        let mut truth_mix = Vec::new();
        if let Some(sys) = &system {
            match config.prior(sys.modes()) {
                Ok(p) => prior = p,
                Err(e) => problems.push(e.to_string()),
            }
            match config.truth_mix(sys.modes()) {
                Ok(p) => truth_mix = p,
                Err(e) => problems.push(e.to_string()),
            }
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let priorities = if config.priorities.is_empty() {
            vec![1.0; config.fleet.size]
        } else {
            config.priorities.clone()
        };
        Ok(Mission {
            model_config: model_config?,
            system: system.expect("validated"),
            stations: stations?.stations,
            prior,
            truth_mix,
            priorities,
            config,
        })
    }
}

impl SimConfig {
    /// Scalar-field checks; cross-file checks happen in [`Mission::from_config`].
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                p.push(msg);
            }
        };
        need(self.horizon_hr >= 0.0, format!("horizon_hr must be >= 0, got {}", self.horizon_hr));
        need(self.dt_hr > 0.0, format!("dt_hr must be > 0, got {}", self.dt_hr));
        need(
            self.planning_horizon_hr >= self.dt_hr,
            format!("planning_horizon_hr ({}) must be >= dt_hr ({})", self.planning_horizon_hr, self.dt_hr),
        );
        need(self.scenarios >= 1, "scenarios must be >= 1".into());
        need(self.lambda >= 0.0, format!("lambda must be >= 0, got {}", self.lambda));
        need(self.theta > 0.0 && self.theta < 1.0, format!("theta must lie in (0, 1), got {}", self.theta));
        need(self.prior_ok > 0.0 && self.prior_ok < 1.0, format!("prior_ok must lie in (0, 1), got {}", self.prior_ok));
        let c = self.composition;
        need(
            [c.nominal, c.dead, c.faulted].iter().all(|&f| f >= 0.0)
                && (c.nominal + c.dead + c.faulted - 1.0).abs() < 1e-9,
            "composition fractions must be nonnegative and sum to 1".into(),
        );
        need(self.fleet.size >= 1, "fleet.size must be >= 1".into());
        need(self.fleet.altitude_km > 0.0, "fleet.altitude_km must be > 0".into());
        need(self.step_s > 0.0 && self.step_s <= 30.0, format!("step_s must lie in (0, 30], got {}", self.step_s));
        need(
            self.priorities.is_empty() || self.priorities.len() == self.fleet.size,
            format!("priorities has {} entries for {} assets", self.priorities.len(), self.fleet.size),
        );
        need(self.priorities.iter().all(|&q| q > 0.0), "priorities must be > 0".into());
        need((0.0..=1.0).contains(&self.recover_threshold), "recover_threshold must lie in [0, 1]".into());
        need(self.t_sep_hr >= 0.0, "t_sep_hr must be >= 0".into());
        need(self.fault_mix.values().all(|&w| w >= 0.0), "fault_mix weights must be >= 0".into());
        need(self.prior_split.values().all(|&w| w >= 0.0), "prior_split weights must be >= 0".into());
        p
    }

    /// `prior_ok` on the nominal mode, the rest split per `prior_split`
    /// after rescaling it to sum to one.
    pub fn prior(&self, modes: &ModeSet) -> Result<Vec<f64>> {
        let mut mu = vec![0.0; modes.len()];
        let total: f64 = self.prior_split.values().sum();
        if !(total > 0.0) {
            return Err(Error::Config("prior_split must carry positive mass".into()));
        }
        for (name, &w) in &self.prior_split {
            let m = modes
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("prior_split names unknown mode `{name}`")))?;
            if m == modes.ok() {
                return Err(Error::Config("prior_split must not include the nominal mode".into()));
            }
            mu[m] = (1.0 - self.prior_ok) * w / total;
        }
        mu[modes.ok()] = self.prior_ok;
        Ok(mu)
    }

    /// Initial true-mode distribution from the composition and fault mix.
    pub fn truth_mix(&self, modes: &ModeSet) -> Result<Vec<f64>> {
        let mut mix = vec![0.0; modes.len()];
        mix[modes.ok()] = self.composition.nominal;
        mix[modes.dead()] = self.composition.dead;
        let total: f64 = self.fault_mix.values().sum();
        if self.composition.faulted > 0.0 && !(total > 0.0) {
            return Err(Error::Config("fault_mix must carry positive weight".into()));
        }
        for (name, &w) in &self.fault_mix {
            let m = modes
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("fault_mix names unknown mode `{name}`")))?;
            if m == modes.ok() || m == modes.dead() {
                return Err(Error::Config(format!("fault_mix entry `{name}` is not a fault mode")));
            }
            mix[m] = self.composition.faulted * w / total;
        }
        Ok(mix)
    }
}
